"""
Vowel spaces from spectral distances
====================================

Spectra of the eight vowels at one f0 give an 8 x 8 distance matrix;
classical MDS turns it into a 2-D map. Maps at different f0 are rotated
onto the 220 Hz map so they can be compared.
"""

import numpy as np

from vowelspace.auditory import FilterbankSpec, excitation_pattern, make_filterbank, normalize_spectrum
from vowelspace.geometry import (axis_ratio, classical_mds, on_convex_hull, orient,
                                 pairwise_distances, procrustes_align)
from vowelspace.pipeline import average_spectra
from vowelspace.signal_core import VOWELS, condition
from vowelspace.synth import default_profiles, synthesize_vowel

bank = make_filterbank(FilterbankSpec())
profiles = default_profiles()


def vowel_map(f0):
    spectra = []
    for v in VOWELS:
        per_speaker = [normalize_spectrum(excitation_pattern(
            condition(synthesize_vowel(v, f0, p).buffer), filterbank=bank)) for p in profiles]
        spectra.append(average_spectra(per_speaker))
    return classical_mds(pairwise_distances(spectra, VOWELS))


reference = orient(vowel_map(220.0))
print("220 Hz map (dim1 = front/back, dim2 = height):")
for v, (x, y) in zip(reference.labels, reference.coords):
    print(f"  /{v}/ {x:8.2f} {y:8.2f}")
print("point vowels on the hull:", on_convex_hull(reference, ("i", "a", "u")))

high = procrustes_align(reference, vowel_map(1046.0))
print(f"\naxis ratio: {axis_ratio(reference):.3f} at 220 Hz, {axis_ratio(high):.3f} at 1046 Hz")
print("mean displacement after alignment:",
      np.linalg.norm(high.coords - reference.coords, axis=1).mean().round(2))
