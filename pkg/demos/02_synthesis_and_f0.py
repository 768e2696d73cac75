"""
Synthetic vowels and f0 verification
====================================

Three built-in speakers, eight vowels, an impulse-train source and a
cascade of formant resonators. Every token is checked with the
autocorrelation f0 estimator before it is accepted.
"""

import numpy as np

from vowelspace.signal_core import VOWELS, write_wav
from vowelspace.synth import default_profiles, estimate_f0, synthesize_vowel

profiles = default_profiles()
s1 = profiles[0]
print("speaker S1 formants (Hz):")
for v in VOWELS:
    print(f"  /{v}/ ", [round(f.frequency) for f in s1.formants(v)])

# profiles round-trip through a small CSV table
with open("S1_formants.csv", "w", encoding="utf-8") as fh:
    fh.write(s1.to_csv())

# f0 estimation over the sung range
for f0 in (220.0, 523.0, 880.0, 1046.0):
    token = synthesize_vowel("a", f0, s1)
    print(f"/a/ at {f0:6.1f} Hz -> measured {estimate_f0(token.buffer):8.2f} Hz")

# at high f0 the harmonics are few and far apart: the vocal-tract
# envelope is sampled at only a handful of points below 8 kHz
for f0 in (220.0, 880.0):
    x = synthesize_vowel("i", f0, s1).buffer.samples
    spec = np.abs(np.fft.rfft(x * np.hanning(x.size)))
    freqs = np.fft.rfftfreq(x.size, 1 / 44100)
    harmonics = np.arange(f0, 8000, f0)
    levels = 20 * np.log10(spec[np.searchsorted(freqs, harmonics)] / spec.max())
    print(f"f0 = {f0:g} Hz: {harmonics.size} harmonics below 8 kHz, "
          f"levels {np.round(levels[:6], 1)} dB ...")

token = synthesize_vowel("u", 330.0, profiles[2])
write_wav("S3_u_330.wav", token.buffer)
print("wrote S3_u_330.wav")
