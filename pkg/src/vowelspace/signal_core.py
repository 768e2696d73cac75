"""Audio container, WAV I/O and stimulus conditioning.

Conditioning follows the usual order for vowel nuclei: cut a centred
segment, ramp the edges with raised cosines, then scale to a target RMS.
"""

from __future__ import annotations

import logging
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.io import wavfile

logger = logging.getLogger(__name__)

VOWELS = ("i", "y", "e", "ø", "ε", "a", "o", "u")
F0_TOLERANCE = 0.05


class WavError(Exception):
    """Base class for WAV reading failures."""


class WavMissingError(WavError, FileNotFoundError):
    pass


class WavEncodingError(WavError):
    pass


class WavEmptyError(WavError):
    pass


@dataclass(frozen=True)
class SampleBuffer:
    """Mono audio samples with their sample rate.

    Parameters
    ----------
    samples : array_like
        Real amplitudes, nominal range +-1.0.
    sample_rate : int
        Samples per second.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def with_samples(self, samples) -> "SampleBuffer":
        return SampleBuffer(samples, self.sample_rate)


@dataclass(frozen=True)
class VowelToken:
    """A labelled, conditioned vowel stimulus."""

    vowel: str
    speaker_id: str
    target_f0: float
    measured_f0: float
    buffer: SampleBuffer = field(repr=False)

    def __post_init__(self):
        if self.vowel not in VOWELS:
            raise ValueError(f"unknown vowel {self.vowel!r}; expected one of {VOWELS}")
        check_f0(self.measured_f0, self.target_f0)


class F0ToleranceError(ValueError):
    """Measured f0 deviates from its target by more than the allowed fraction."""


def check_f0(measured_f0, target_f0, tolerance=F0_TOLERANCE):
    deviation = abs(measured_f0 - target_f0) / target_f0
    if not deviation <= tolerance:
        raise F0ToleranceError(
            f"measured f0 {measured_f0:.2f} Hz deviates {100 * deviation:.1f}% "
            f"from target {target_f0:g} Hz (limit {100 * tolerance:g}%)"
        )


def read_wav(path) -> SampleBuffer:
    """Read a 16-bit PCM or 32-bit float WAV file.

    Integer samples are scaled by 1/32768. Only the first channel of a
    multichannel file is kept.

    Raises
    ------
    WavMissingError
        The file does not exist.
    WavEncodingError
        The file is not RIFF/WAV or uses an encoding other than int16/float32.
    WavEmptyError
        The file holds no samples.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise WavMissingError(f"no such WAV file: {path}")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except (ValueError, EOFError) as exc:
        raise WavEncodingError(f"cannot decode {path}: {exc}") from exc

    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise WavEncodingError(f"{path}: unsupported sample encoding {data.dtype}")

    if samples.ndim == 2:
        logger.warning("%s has %d channels; using channel 0", path, samples.shape[1])
        samples = samples[:, 0]
    if samples.size == 0:
        raise WavEmptyError(f"{path} contains no samples")
    return SampleBuffer(samples, rate)


def write_wav(path, buffer: SampleBuffer, encoding="float32"):
    """Write `buffer` as mono WAV. `encoding` is ``"float32"`` or ``"int16"``."""
    if encoding == "float32":
        data = buffer.samples.astype(np.float32)
    elif encoding == "int16":
        data = np.clip(np.round(buffer.samples * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise ValueError(f"unsupported encoding {encoding!r}")
    wavfile.write(os.fspath(path), buffer.sample_rate, data)


def extract_center_segment(buffer: SampleBuffer, duration: float) -> SampleBuffer:
    """Return the `duration`-second slice centred in `buffer`.

    The start index is ``floor((N - n) / 2)`` with ``n = round(duration * rate)``.
    """
    n_total = len(buffer)
    n = int(round(duration * buffer.sample_rate))
    if n <= 0:
        raise ValueError("segment duration must be positive")
    if n > n_total:
        raise ValueError(
            f"buffer is {buffer.duration:.4f} s long, shorter than the requested {duration} s"
        )
    start = (n_total - n) // 2
    return buffer.with_samples(buffer.samples[start:start + n].copy())


def raised_cosine_ramp(n: int) -> np.ndarray:
    # endpoints included: ramp[0] == 0, ramp[-1] == 1, odd n hits 0.5 exactly
    t = np.linspace(0.0, 1.0, n)
    return 0.5 * (1.0 - np.cos(np.pi * t))


def apply_raised_cosine_fades(buffer: SampleBuffer, fade_duration: float = 0.010) -> SampleBuffer:
    """Fade both ends of `buffer` in and out with raised-cosine ramps.

    The first ``round(fade_duration * rate)`` samples are multiplied by
    ``0.5 * (1 - cos(pi * t / T))`` and the last ones by its mirror image.
    """
    n = int(round(fade_duration * buffer.sample_rate))
    if n < 0:
        raise ValueError("fade duration must be non-negative")
    if 2 * n > len(buffer):
        raise ValueError(
            f"fades of {fade_duration} s do not fit in a {buffer.duration:.4f} s buffer"
        )
    out = buffer.samples.copy()
    if n:
        ramp = raised_cosine_ramp(n)
        out[:n] *= ramp
        out[len(out) - n:] *= ramp[::-1]
    return buffer.with_samples(out)


def rms(samples) -> float:
    samples = np.asarray(samples, dtype=np.float64)
    return float(np.sqrt(np.mean(samples * samples)))


def normalize_rms(buffer: SampleBuffer, target_rms: float = 0.1) -> SampleBuffer:
    """Scale `buffer` so its RMS equals `target_rms`."""
    level = rms(buffer.samples)
    if level == 0.0:
        raise ValueError("cannot normalise an all-zero buffer")
    return buffer.with_samples(buffer.samples * (target_rms / level))


def condition(buffer: SampleBuffer, segment_duration=0.250, fade_duration=0.010,
              target_rms=0.1) -> SampleBuffer:
    """Centre segment, fades, RMS normalisation, in that order."""
    segment = extract_center_segment(buffer, segment_duration)
    return normalize_rms(apply_raised_cosine_fades(segment, fade_duration), target_rms)
