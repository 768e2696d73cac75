import logging
import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vowelspace.signal_core import (F0ToleranceError, SampleBuffer, VowelToken,
                                    WavEmptyError, WavEncodingError, WavMissingError,
                                    apply_raised_cosine_fades, check_f0, condition,
                                    extract_center_segment, normalize_rms, read_wav, rms,
                                    write_wav)

RATE = 44100

finite = st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False)


def _write_pcm16(path, frames, channels=1, rate=RATE):
    # independent encoder via the stdlib wave module
    with wave.open(str(path), "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(2)
        w.setframerate(rate)
        w.writeframes(np.asarray(frames, dtype="<i2").tobytes())


# -- SampleBuffer / VowelToken ---------------------------------------------

def test_duration_is_exact():
    buf = SampleBuffer(np.zeros(11025), RATE)
    assert buf.duration == 0.25


@pytest.mark.parametrize("rate", [0, -1, 44100.5])
def test_bad_sample_rate_rejected(rate):
    with pytest.raises(ValueError):
        SampleBuffer(np.zeros(10), rate)


def test_token_rejects_unknown_vowel():
    buf = SampleBuffer(np.zeros(10), RATE)
    with pytest.raises(ValueError, match="unknown vowel"):
        VowelToken("x", "S1", 220.0, 220.0, buf)


def test_token_enforces_f0_tolerance():
    buf = SampleBuffer(np.zeros(10), RATE)
    VowelToken("a", "S1", 220.0, 220.0 * 1.05, buf)
    with pytest.raises(F0ToleranceError):
        VowelToken("a", "S1", 220.0, 220.0 * 1.051, buf)


def test_check_f0_limits():
    check_f0(209.0, 220.0)
    with pytest.raises(F0ToleranceError):
        check_f0(208.0, 220.0)


# -- WAV I/O ----------------------------------------------------------------

def test_read_silent_file(tmp_path):
    path = tmp_path / "silence.wav"
    _write_pcm16(path, np.zeros(RATE, dtype=np.int16))
    buf = read_wav(path)
    assert buf.sample_rate == RATE
    assert len(buf) == RATE
    assert not buf.samples.any()


def test_pcm16_full_scale_square(tmp_path):
    path = tmp_path / "square.wav"
    frames = np.tile([32767, 32767, -32768, -32768], 100)
    _write_pcm16(path, frames)
    buf = read_wav(path)
    assert buf.samples.max() == 32767 / 32768
    assert buf.samples.min() == -1.0


@pytest.mark.parametrize("encoding", ["float32", "int16"])
def test_round_trip_is_sample_identical(tmp_path, rng, encoding):
    path = tmp_path / "a.wav"
    write_wav(path, SampleBuffer(rng.uniform(-0.9, 0.9, 1000), 22050), encoding)
    first = read_wav(path)
    write_wav(tmp_path / "b.wav", first, encoding)
    second = read_wav(tmp_path / "b.wav")
    assert second.sample_rate == 22050
    np.testing.assert_array_equal(first.samples, second.samples)


def test_missing_file(tmp_path):
    with pytest.raises(WavMissingError):
        read_wav(tmp_path / "nope.wav")


def test_not_a_wav(tmp_path):
    path = tmp_path / "junk.wav"
    path.write_bytes(b"this is not RIFF data at all")
    with pytest.raises(WavEncodingError):
        read_wav(path)


def test_unsupported_encoding(tmp_path):
    from scipy.io import wavfile
    path = tmp_path / "i32.wav"
    wavfile.write(path, RATE, np.zeros(100, dtype=np.int32))
    with pytest.raises(WavEncodingError):
        read_wav(path)


def test_empty_file(tmp_path):
    path = tmp_path / "empty.wav"
    _write_pcm16(path, np.zeros(0, dtype=np.int16))
    with pytest.raises(WavEmptyError):
        read_wav(path)


def test_errors_are_distinct():
    assert len({WavMissingError, WavEncodingError, WavEmptyError}) == 3
    assert not issubclass(WavEmptyError, WavEncodingError)


def test_stereo_takes_first_channel(tmp_path, caplog):
    path = tmp_path / "stereo.wav"
    frames = np.column_stack([np.full(50, 1000), np.full(50, -2000)]).ravel()
    _write_pcm16(path, frames, channels=2)
    with caplog.at_level(logging.WARNING):
        buf = read_wav(path)
    assert np.all(buf.samples == 1000 / 32768)
    assert "channel" in caplog.text


# -- conditioning -----------------------------------------------------------

def test_center_segment_indices():
    buf = SampleBuffer(np.arange(RATE, dtype=float), RATE)
    seg = extract_center_segment(buf, 0.25)
    start = int(np.floor(0.375 * RATE))
    np.testing.assert_array_equal(seg.samples, np.arange(start, start + round(0.25 * RATE)))


def test_center_segment_identity():
    buf = SampleBuffer(np.random.default_rng(1).normal(size=11025), RATE)
    np.testing.assert_array_equal(extract_center_segment(buf, 0.25).samples, buf.samples)


def test_center_segment_too_short():
    with pytest.raises(ValueError):
        extract_center_segment(SampleBuffer(np.zeros(int(0.2 * RATE)), RATE), 0.25)


@given(n=st.integers(10, 3000), dur=st.floats(0.0002, 0.06))
def test_center_segment_idempotent(n, dur):
    buf = SampleBuffer(np.arange(n, dtype=float), RATE)
    if round(dur * RATE) > n or round(dur * RATE) == 0:
        return
    once = extract_center_segment(buf, dur)
    np.testing.assert_array_equal(extract_center_segment(once, dur).samples, once.samples)


def test_fade_midpoint_is_half():
    buf = SampleBuffer(np.ones(RATE // 4), RATE)
    n = round(0.010 * RATE)  # 441, odd, so the ramp has a middle sample
    out = apply_raised_cosine_fades(buf, 0.010).samples
    assert abs(out[n // 2] - 0.5) < 1e-9
    assert abs(out[-1 - n // 2] - 0.5) < 1e-9
    assert out[0] < 1e-12
    assert np.all(out[n:-n] == 1.0)


def test_zero_fade_is_identity(rng):
    buf = SampleBuffer(rng.normal(size=500), RATE)
    np.testing.assert_array_equal(apply_raised_cosine_fades(buf, 0.0).samples, buf.samples)


def test_fade_reduces_energy():
    x = np.ones(RATE // 4)
    out = apply_raised_cosine_fades(SampleBuffer(x, RATE), 0.010).samples
    energy_in = sum(v * v for v in x)
    energy_out = sum(v * v for v in out)
    assert energy_out < energy_in


def test_fade_too_long():
    with pytest.raises(ValueError):
        apply_raised_cosine_fades(SampleBuffer(np.ones(100), 1000), 0.051)


@given(arrays(np.float64, st.integers(20, 400), elements=finite), st.integers(0, 10))
def test_fades_commute_with_reversal(x, n_fade):
    buf = SampleBuffer(x, 1000)
    fwd = apply_raised_cosine_fades(buf, n_fade / 1000).samples[::-1]
    rev = apply_raised_cosine_fades(SampleBuffer(x[::-1], 1000), n_fade / 1000).samples
    np.testing.assert_allclose(fwd, rev, rtol=0, atol=1e-12)


def test_normalize_sine_peak():
    # 441 Hz: period of 100 samples, so crests fall exactly on samples
    t = np.arange(RATE) / RATE
    out = normalize_rms(SampleBuffer(np.sin(2 * np.pi * 441 * t), RATE), 0.1)
    assert abs(np.max(np.abs(out.samples)) - 0.1 * np.sqrt(2)) < 1e-9


def test_normalize_identity_at_target(rng):
    x = rng.normal(size=1000)
    x *= 0.1 / np.sqrt(np.mean(x ** 2))
    np.testing.assert_allclose(normalize_rms(SampleBuffer(x, RATE), 0.1).samples, x,
                               rtol=0, atol=1e-12)


def test_normalize_against_loop_oracle(rng):
    out = normalize_rms(SampleBuffer(rng.normal(size=777), RATE), 0.3).samples
    acc = 0.0
    for v in out:
        acc += v * v
    assert abs((acc / len(out)) ** 0.5 - 0.3) < 1e-9 * 0.3


def test_normalize_zero_input():
    with pytest.raises(ValueError):
        normalize_rms(SampleBuffer(np.zeros(10), RATE))


@settings(max_examples=50)
@given(arrays(np.float64, st.integers(2, 300), elements=finite),
       st.floats(1e-3, 1e3))
def test_normalize_scale_invariant(x, c):
    if rms(x) < 1e-6:
        return
    a = normalize_rms(SampleBuffer(x, RATE)).samples
    b = normalize_rms(SampleBuffer(c * x, RATE)).samples
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-9)


def test_condition_order_and_length(rng):
    buf = SampleBuffer(rng.normal(size=RATE // 2), RATE)
    out = condition(buf)
    assert len(out) == round(0.25 * RATE)
    assert abs(rms(out.samples) - 0.1) < 1e-12
    assert out.samples[0] == 0.0
