"""Cochlea-scaled spectra from an ERB-spaced gammatone filterbank.

Each channel is a 4th-order complex gammatone realised as a cascade of
identical complex one-pole sections (Hohmann 2002), normalised to unity
gain at its centre frequency. The level of a channel is the RMS of the
real filter output over the whole input, in dB re 1.0 full scale, plus the
middle-ear gain interpolated at the channel's centre frequency.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.signal import lfilter

from .signal_core import SampleBuffer

SILENCE_FLOOR_DB = -120.0
DB_REFERENCE = 1.0


def erb_bandwidth(f):
    """Equivalent rectangular bandwidth in Hz, ``24.7 * (4.37 f / 1000 + 1)``."""
    f = _nonnegative(f)
    return 24.7 * (4.37 * f / 1000.0 + 1.0)


def erb_number(f):
    """ERB-number (Cam) of frequency `f`, ``21.4 * log10(4.37 f / 1000 + 1)``."""
    f = _nonnegative(f)
    return 21.4 * np.log10(4.37 * f / 1000.0 + 1.0)


def erb_number_to_hz(e):
    """Inverse of :func:`erb_number`."""
    e = np.asarray(e, dtype=np.float64)
    out = (10.0 ** (e / 21.4) - 1.0) * 1000.0 / 4.37
    return out if out.ndim else float(out)


def _nonnegative(f):
    arr = np.asarray(f, dtype=np.float64)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError("frequency must be non-negative")
    return arr if arr.ndim else float(arr)


@dataclass(frozen=True)
class FilterbankSpec:
    n_channels: int = 200
    f_min: float = 40.0
    f_max: float = 17000.0
    order: int = 4
    bandwidth_factor: float = 1.019

    def __post_init__(self):
        if self.n_channels < 2:
            raise ValueError("n_channels must be at least 2")
        if not 0 < self.f_min < self.f_max:
            raise ValueError(f"need 0 < f_min < f_max, got {self.f_min}, {self.f_max}")
        if self.order < 1:
            raise ValueError("order must be positive")
        if self.bandwidth_factor <= 0:
            raise ValueError("bandwidth_factor must be positive")

    def center_frequencies(self) -> np.ndarray:
        e = np.linspace(erb_number(self.f_min), erb_number(self.f_max), self.n_channels)
        cf = erb_number_to_hz(e)
        # pin the endpoints exactly; the inverse round trip is only good to ~1 ulp
        cf[0], cf[-1] = self.f_min, self.f_max
        return cf


@dataclass(frozen=True)
class GammatoneChannel:
    """One complex gammatone channel: ``gain / (1 - pole z^-1)^order``."""

    center_frequency: float
    bandwidth: float
    pole: complex
    gain: float
    order: int

    def filter(self, samples) -> np.ndarray:
        """Complex (analytic-like) output of the channel."""
        b, a = self.coefficients()
        return lfilter(b, a, np.asarray(samples, dtype=np.complex128))

    def coefficients(self):
        # (1 - p z^-1)^order expanded into direct-form denominator
        a = np.array([1.0 + 0j])
        for _ in range(self.order):
            a = np.convolve(a, [1.0, -self.pole])
        return np.array([self.gain + 0j]), a

    def real_output(self, samples) -> np.ndarray:
        return self.filter(samples).real


class Filterbank:
    """A bank of gammatone channels bound to one sample rate."""

    def __init__(self, spec: FilterbankSpec, sample_rate: int):
        if spec.f_max >= sample_rate / 2:
            raise ValueError(
                f"f_max {spec.f_max} Hz must lie below Nyquist ({sample_rate / 2} Hz)"
            )
        self.spec = spec
        self.sample_rate = int(sample_rate)
        self.center_frequencies = spec.center_frequencies()
        self.channels = [self._design(fc) for fc in self.center_frequencies]

    def _design(self, fc) -> GammatoneChannel:
        bandwidth = self.spec.bandwidth_factor * erb_bandwidth(fc)
        radius = np.exp(-2.0 * np.pi * bandwidth / self.sample_rate)
        pole = radius * np.exp(2j * np.pi * fc / self.sample_rate)
        # |H(e^{j w_c})| = gain / (1 - radius)^order; the factor 2 restores
        # the amplitude of a real input after taking the real part
        gain = 2.0 * (1.0 - radius) ** self.spec.order
        return GammatoneChannel(float(fc), float(bandwidth), complex(pole), float(gain),
                                self.spec.order)

    def __len__(self):
        return len(self.channels)

    def __iter__(self):
        return iter(self.channels)

    def channel_rms(self, samples) -> np.ndarray:
        samples = np.asarray(samples, dtype=np.float64)
        return np.array([np.sqrt(np.mean(ch.real_output(samples) ** 2)) for ch in self.channels])


def make_filterbank(spec: FilterbankSpec, sample_rate: int = 44100) -> Filterbank:
    return Filterbank(spec, sample_rate)


class MiddleEarWeighting:
    """Piecewise-linear gain in dB over log-frequency, flat beyond the ends.

    Parameters
    ----------
    breakpoints : sequence of (frequency_hz, gain_db)
        At least two points with strictly increasing positive frequencies.
    """

    def __init__(self, breakpoints):
        pts = np.asarray(breakpoints, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("need at least two (frequency, gain) breakpoints")
        if np.any(pts[:, 0] <= 0) or np.any(np.diff(pts[:, 0]) <= 0):
            raise ValueError("breakpoint frequencies must be positive and strictly increasing")
        self.frequencies = pts[:, 0].copy()
        self.gains_db = pts[:, 1].copy()

    @property
    def breakpoints(self):
        return list(zip(self.frequencies.tolist(), self.gains_db.tolist()))

    def gain_db(self, f):
        f = np.asarray(f, dtype=np.float64)
        out = np.interp(np.log(np.maximum(f, 1e-12)), np.log(self.frequencies), self.gains_db)
        return out if out.ndim else float(out)

    @classmethod
    def flat(cls):
        return cls([(1.0, 0.0), (2.0, 0.0)])

    @classmethod
    def from_file(cls, path):
        with open(os.fspath(path), encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    @classmethod
    def from_text(cls, text):
        rows = []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise ValueError(f"expected two columns (Hz, dB), got {line!r}")
            rows.append((float(parts[0]), float(parts[1])))
        return cls(rows)

    @classmethod
    def default(cls):
        """Band-pass approximation of middle-ear transmission peaking near 1 kHz."""
        text = resources.files("vowelspace.data").joinpath("middle_ear_default.txt").read_text(
            encoding="utf-8")
        return cls.from_text(text)


@dataclass(frozen=True)
class CochleaScaledSpectrum:
    center_frequencies: np.ndarray
    levels_db: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        cf = np.asarray(self.center_frequencies, dtype=np.float64)
        levels = np.asarray(self.levels_db, dtype=np.float64)
        if cf.shape != levels.shape or cf.ndim != 1:
            raise ValueError("center_frequencies and levels_db must be 1-D and equal length")
        if np.any(np.diff(cf) <= 0):
            raise ValueError("center frequencies must be strictly increasing")
        if not np.all(np.isfinite(levels)):
            raise ValueError("levels must be finite")
        object.__setattr__(self, "center_frequencies", cf)
        object.__setattr__(self, "levels_db", levels)

    def __len__(self):
        return len(self.levels_db)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["center_hz", "level_db"])
        for f, level in zip(self.center_frequencies, self.levels_db):
            writer.writerow([repr(float(f)), repr(float(level))])
        return buf.getvalue()


def excitation_pattern(buffer: SampleBuffer, spec: FilterbankSpec = FilterbankSpec(),
                       weighting: MiddleEarWeighting | None = None,
                       filterbank: Filterbank | None = None) -> CochleaScaledSpectrum:
    """Per-channel RMS level of `buffer` in dB with middle-ear weighting.

    A prebuilt `filterbank` may be passed to avoid redesigning the channels
    for every call; it must match `spec` and the buffer's sample rate.
    """
    if buffer.duration < 0.050:
        raise ValueError("excitation_pattern needs at least 50 ms of signal")
    if filterbank is None:
        filterbank = Filterbank(spec, buffer.sample_rate)
    elif filterbank.sample_rate != buffer.sample_rate or filterbank.spec != spec:
        raise ValueError("filterbank does not match spec / sample rate")
    if weighting is None:
        weighting = MiddleEarWeighting.default()

    level = filterbank.channel_rms(buffer.samples)
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(level / DB_REFERENCE)
    db = db + weighting.gain_db(filterbank.center_frequencies)
    db = np.maximum(db, SILENCE_FLOOR_DB)
    return CochleaScaledSpectrum(filterbank.center_frequencies.copy(), db, normalized=False)


def normalize_spectrum(s: CochleaScaledSpectrum) -> CochleaScaledSpectrum:
    """Subtract the mean level across channels."""
    return CochleaScaledSpectrum(s.center_frequencies, s.levels_db - np.mean(s.levels_db),
                                 normalized=True)
