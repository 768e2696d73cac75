"""Source-filter vowel synthesis and autocorrelation f0 estimation.

The source is a unit impulse train; the vocal tract is a cascade of
two-pole resonators, one per formant, each with unity gain at its
formant frequency. Formants stay fixed across f0 (no resonance tuning).
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .signal_core import VOWELS, SampleBuffer, VowelToken, check_f0


class PeriodicityError(ValueError):
    """No clear periodicity in the analysed signal."""


@dataclass(frozen=True)
class FormantSpec:
    frequency: float
    bandwidth: float

    def __post_init__(self):
        if not self.frequency > 0:
            raise ValueError(f"formant frequency must be positive, got {self.frequency}")
        if not self.bandwidth > 0:
            raise ValueError(f"formant bandwidth must be positive, got {self.bandwidth}")


@dataclass(frozen=True)
class SpeakerProfile:
    """Formant table for one synthetic speaker."""

    speaker_id: str
    formant_table: dict = field(repr=False)

    def __post_init__(self):
        missing = [v for v in VOWELS if v not in self.formant_table]
        if missing:
            raise ValueError(f"profile {self.speaker_id!r} lacks vowels {missing}")
        table = {}
        for vowel, formants in self.formant_table.items():
            if vowel not in VOWELS:
                raise ValueError(f"unknown vowel {vowel!r} in profile {self.speaker_id!r}")
            formants = tuple(f if isinstance(f, FormantSpec) else FormantSpec(*f)
                             for f in formants)
            if len(formants) < 4:
                raise ValueError(f"/{vowel}/ needs at least four formants")
            freqs = [f.frequency for f in formants]
            if any(b <= a for a, b in zip(freqs, freqs[1:])):
                raise ValueError(f"/{vowel}/ formants must increase strictly: {freqs}")
            table[vowel] = formants
        object.__setattr__(self, "formant_table", table)

    def formants(self, vowel):
        try:
            return self.formant_table[vowel]
        except KeyError:
            raise ValueError(f"unknown vowel {vowel!r}") from None

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["vowel", "formant", "frequency_hz", "bandwidth_hz"])
        for vowel in VOWELS:
            for k, f in enumerate(self.formant_table[vowel], start=1):
                writer.writerow([vowel, k, repr(f.frequency), repr(f.bandwidth)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, speaker_id, text):
        """Parse the table written by :meth:`to_csv`.

        Rows are ``vowel, formant, frequency_hz, bandwidth_hz``; lines
        starting with ``#`` are ignored.
        """
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        table = {}
        for row in csv.DictReader(lines):
            table.setdefault(row["vowel"].strip(), []).append(
                (int(row["formant"]), float(row["frequency_hz"]), float(row["bandwidth_hz"])))
        return cls(speaker_id, {v: [(f, b) for _, f, b in sorted(rows)]
                                for v, rows in table.items()})

    @classmethod
    def load(cls, path, speaker_id=None):
        path = os.fspath(path)
        if speaker_id is None:
            speaker_id = os.path.splitext(os.path.basename(path))[0]
        with open(path, encoding="utf-8") as fh:
            return cls.from_csv(speaker_id, fh.read())


# Adult female formant frequencies (Hz) for the eight German vowels.
# F1..F5; configuration data, not measured values for any speaker.
BASE_FORMANTS = {
    "i": (300, 2500, 3300, 4200, 5000),
    "y": (300, 1900, 2600, 3900, 5000),
    "e": (400, 2350, 3000, 4100, 5000),
    "ø": (410, 1650, 2550, 3900, 5000),
    "ε": (600, 2050, 2900, 4100, 5000),
    "a": (900, 1450, 2850, 4050, 5000),
    "o": (430, 850, 2800, 3800, 5000),
    "u": (320, 780, 2650, 3700, 5000),
}
BASE_BANDWIDTHS = (70.0, 100.0, 160.0, 220.0, 300.0)
SPEAKER_SEEDS = {"S1": 11, "S2": 23, "S3": 37}
JITTER = 0.05


def make_profile(speaker_id, seed, jitter=JITTER) -> SpeakerProfile:
    """Base table with a deterministic per-formant jitter of up to +-`jitter`."""
    rng = np.random.default_rng(seed)
    table = {}
    for vowel in VOWELS:
        base = np.asarray(BASE_FORMANTS[vowel], dtype=np.float64)
        freqs = base * (1.0 + rng.uniform(-jitter, jitter, size=base.size))
        freqs = np.maximum.accumulate(freqs)
        freqs += np.arange(freqs.size) * 1e-6  # keep strict ordering after clipping
        table[vowel] = [FormantSpec(round(float(f), 3), b) for f, b in zip(freqs, BASE_BANDWIDTHS)]
    return SpeakerProfile(speaker_id, table)


def default_profiles():
    return [make_profile(sid, seed) for sid, seed in SPEAKER_SEEDS.items()]


def impulse_train(f0, duration, sample_rate=44100) -> SampleBuffer:
    """Band-limited unit impulse train with pulses at ``t = k / f0``.

    The ideal pulse train sampled without aliasing: equal-amplitude
    harmonics of `f0` up to Nyquist, scaled by ``f0 / sample_rate``. When
    the period is a whole number of samples this is exactly a train of
    unit impulses; otherwise pulses fall between samples, and the waveform
    stays strictly periodic instead of jittering by a sample from period
    to period.
    """
    if not 0 < f0 < sample_rate / 2:
        raise ValueError(f"f0 must lie in (0, {sample_rate / 2}) Hz, got {f0}")
    n = int(round(duration * sample_rate))
    if n <= 0:
        raise ValueError("duration must give at least one sample")
    phase = 2.0 * np.pi * f0 * np.arange(n) / sample_rate
    out = np.ones(n)
    for k in range(1, int(sample_rate / 2 // f0) + 1):
        weight = 1.0 if k * f0 < sample_rate / 2 else 0.5  # a harmonic on Nyquist counts once
        out += 2.0 * weight * np.cos(k * phase)
    return SampleBuffer(out * (f0 / sample_rate), sample_rate)


def resonator_coefficients(formant: FormantSpec, sample_rate):
    """Two-pole resonator with unity magnitude response at the formant frequency."""
    if not formant.frequency < sample_rate / 2:
        raise ValueError(f"formant at {formant.frequency} Hz is above Nyquist")
    r = np.exp(-np.pi * formant.bandwidth / sample_rate)
    theta = 2.0 * np.pi * formant.frequency / sample_rate
    a = np.array([1.0, -2.0 * r * np.cos(theta), r * r])
    z = np.exp(-1j * theta)
    g = abs(a[0] + a[1] * z + a[2] * z * z)
    return np.array([g]), a


def resonator_cascade(buffer: SampleBuffer, formants) -> SampleBuffer:
    y = buffer.samples
    for formant in formants:
        if not isinstance(formant, FormantSpec):
            formant = FormantSpec(*formant)
        b, a = resonator_coefficients(formant, buffer.sample_rate)
        y = lfilter(b, a, y)
    return buffer.with_samples(np.array(y, dtype=np.float64, copy=True))


def estimate_f0(buffer: SampleBuffer, search_range=(60.0, 1500.0), threshold=0.5,
                octave_tolerance=0.95, n_multiples=4, lowpass=5000.0) -> float:
    """Fundamental frequency from the autocorrelation peak.

    Local maxima of the normalised autocorrelation ``r(lag) / r(0)`` inside
    the lag range set by `search_range` are candidate periods, each located
    by parabolic interpolation. A candidate is scored by the smallest ``r``
    near its first `n_multiples` multiples: a true period correlates at
    every multiple, a spurious half period drops at odd multiples. The shortest candidate whose
    score reaches `octave_tolerance` times the best score is returned, which
    rejects sub-octave (two-period) picks.

    The power spectrum is tapered to zero above `lowpass` Hz before the
    inverse transform. Period-to-period jitter of a sample or so (as left
    by nearest-sample pulse placement) decorrelates only the upper partials,
    so the band-limited autocorrelation keeps a clean peak at the period.

    Raises
    ------
    PeriodicityError
        If the highest normalised peak is below `threshold`.
    """
    f_lo, f_hi = search_range
    if not 0 < f_lo < f_hi:
        raise ValueError("search_range must satisfy 0 < low < high")
    rate = buffer.sample_rate
    x = buffer.samples - np.mean(buffer.samples)
    n = len(x)
    if n < 3 * rate / f_lo:
        raise ValueError(f"need at least three periods of {f_lo} Hz ({3 * rate / f_lo:.0f} samples)")
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    spec = np.fft.rfft(x, nfft)
    power = (spec * np.conj(spec)).real
    if lowpass is not None:
        freqs = np.fft.rfftfreq(nfft, 1.0 / rate)
        power *= _lowpass_taper(freqs, lowpass)
    r = np.fft.irfft(power, nfft)[:n]
    if r[0] <= 0:
        raise PeriodicityError("signal has no energy")
    r = r / r[0]

    lag_min = max(int(np.floor(rate / f_hi)), 1)
    lag_max = min(int(np.ceil(rate / f_lo)), n - 2)
    seg = r[lag_min - 1:lag_max + 2]
    inner = seg[1:-1]
    is_peak = (inner > seg[:-2]) & (inner >= seg[2:])
    peaks = np.flatnonzero(is_peak) + lag_min
    if peaks.size == 0 or r[peaks].max() < threshold:
        raise PeriodicityError("no periodicity found")

    lags = np.array([_parabolic_peak(r, p) for p in peaks])
    scores = np.array([_multiple_score(r, lag, n_multiples) for lag in lags])
    best = int(np.argmax(scores >= octave_tolerance * scores.max()))
    return rate / lags[best]


def _lowpass_taper(freqs, cutoff):
    # raised-cosine roll-off from 0.75 to 1.25 times the cutoff
    lo, hi = 0.75 * cutoff, 1.25 * cutoff
    t = np.clip((freqs - lo) / (hi - lo), 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * t))


def _multiple_score(r, lag, n_multiples):
    # nearest-sample pulse placement jitters periods by up to one sample,
    # so each multiple takes the best value within +-1 sample
    values = []
    for k in range(1, n_multiples + 1):
        i = int(round(k * lag))
        if i + 1 >= len(r):
            break
        values.append(r[i - 1:i + 2].max())
    return min(values)


def _parabolic_peak(r, i):
    left, mid, right = r[i - 1], r[i], r[i + 1]
    denom = left - 2.0 * mid + right
    return i + (0.5 * (left - right) / denom if denom != 0 else 0.0)


def verification_range(target_f0):
    """Half-octave search window either side of `target_f0`."""
    return target_f0 / np.sqrt(2.0), target_f0 * np.sqrt(2.0)


def verify_f0(buffer: SampleBuffer, target_f0, tolerance=0.05) -> float:
    """Measure f0 with the search window bracketing the target and gate it.

    Bracketing plays the part of a manual octave check: deviations inside
    the window are measured, octave jumps are ruled out.
    """
    measured = estimate_f0(buffer, search_range=verification_range(target_f0))
    check_f0(measured, target_f0, tolerance)
    return measured


def synthesize_vowel(vowel, f0, profile: SpeakerProfile, duration=0.5, sample_rate=44100,
                     peak=0.5, tolerance=0.05) -> VowelToken:
    """Synthesise `vowel` at `f0` for `profile` and verify its f0.

    The waveform is scaled to the given `peak` amplitude. The measured f0
    (see :func:`verify_f0`) must lie within `tolerance` of the target; a larger deviation
    raises :class:`~vowelspace.signal_core.F0ToleranceError`.
    """
    formants = profile.formants(vowel)
    source = impulse_train(f0, duration, sample_rate)
    out = resonator_cascade(source, formants)
    out = out.with_samples(out.samples * (peak / np.max(np.abs(out.samples))))
    measured = verify_f0(out, f0, tolerance)
    return VowelToken(vowel, profile.speaker_id, float(f0), float(measured), out)
