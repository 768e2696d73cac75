import numpy as np

from vowelspace.pipeline import PAPER_GRID
from vowelspace.stats import DEFAULT_CLUSTERS, DistanceObservation

PAIRS = [(c.name, p) for c in DEFAULT_CLUSTERS for p in c.pairs()]


def simulate_hinge(seed, beta=(30.0, 0.0, -0.04), offsets=None, sigma=0.5,
                   grid=PAPER_GRID, breakpoint=523.0):
    """Hinge-model observations: 7 pairs per speaker per f0, Gaussian noise."""
    offsets = {"S1": -2.0, "S2": 0.0, "S3": 2.0} if offsets is None else offsets
    rng = np.random.default_rng(seed)
    obs = []
    for f0 in grid:
        mean = beta[0] + beta[1] * f0 + beta[2] * max(0.0, f0 - breakpoint)
        for s, u in offsets.items():
            for cluster, pair in PAIRS:
                d = mean + u + rng.normal(0.0, sigma)
                obs.append(DistanceObservation(float(f0), s, cluster, pair, max(d, 0.0)))
    return obs
