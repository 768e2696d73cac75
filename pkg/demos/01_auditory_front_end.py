"""
Cochlea-scaled spectra
======================

The front end turns a waveform into 200 channel levels on the ERB scale.
This script walks through the scale, the filterbank and the middle-ear
weighting, then writes one spectrum as CSV.
"""

import numpy as np

from vowelspace.auditory import (FilterbankSpec, MiddleEarWeighting, erb_bandwidth,
                                 erb_number, excitation_pattern, make_filterbank,
                                 normalize_spectrum)
from vowelspace.signal_core import SampleBuffer

# the ERB scale: bandwidth grows roughly linearly above 500 Hz
for f in (100, 1000, 4000, 10000):
    print(f"{f:>6} Hz  ERB = {erb_bandwidth(f):7.2f} Hz  ERB-number = {erb_number(f):6.3f}")

# 200 channels spaced evenly in ERB-number between 40 Hz and 17 kHz
bank = make_filterbank(FilterbankSpec(), sample_rate=44100)
cf = bank.center_frequencies
print(f"\n{len(bank)} channels, {cf[0]:.0f} .. {cf[-1]:.0f} Hz")
print("channel spacing in ERB-number:", np.diff(erb_number(cf))[:3].round(6))

# a 1 kHz tone excites the channel nearest 1 kHz most strongly
t = np.arange(11025) / 44100
tone = SampleBuffer(0.1 * np.sqrt(2) * np.sin(2 * np.pi * 1000 * t), 44100)
spectrum = excitation_pattern(tone, filterbank=bank)
peak = np.argmax(spectrum.levels_db)
print(f"\n1 kHz tone peaks in channel {peak} ({cf[peak]:.1f} Hz) at {spectrum.levels_db[peak]:.2f} dB")

# the default middle-ear table is a replaceable text file (Hz, dB)
weighting = MiddleEarWeighting.default()
print("\nmiddle-ear gain:", {f: round(weighting.gain_db(f), 2) for f in (100, 1000, 8000)})

# normalisation removes overall level, so only spectral shape is compared
louder = excitation_pattern(tone.with_samples(4 * tone.samples), filterbank=bank)
a, b = normalize_spectrum(spectrum), normalize_spectrum(louder)
print("level difference after normalising a 12 dB louder copy:",
      np.abs(a.levels_db - b.levels_db).max())

with open("tone_1k_spectrum.csv", "w", encoding="utf-8") as fh:
    fh.write(a.to_csv())
print("wrote tone_1k_spectrum.csv")
