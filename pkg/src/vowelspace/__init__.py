"""Auditory-perceptual vowel spaces from cochlea-scaled spectra."""
