"""Within-cluster distance statistics.

Includes the hinge regression with speaker random intercepts (REML),
paired comparisons against a reference f0 and Benjamini-Hochberg
adjustment.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps
from scipy.optimize import brentq

from .geometry import euclidean_distance
from .signal_core import VOWELS

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class RankDeficientError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class ClusterDef:
    name: str
    members: tuple

    def __post_init__(self):
        members = tuple(self.members)
        if len(set(members)) != len(members) or len(members) < 2:
            raise ValueError(f"cluster {self.name!r} needs at least two distinct members")
        unknown = [m for m in members if m not in VOWELS]
        if unknown:
            raise ValueError(f"cluster {self.name!r} has unknown vowels {unknown}")
        object.__setattr__(self, "members", members)

    def pairs(self):
        return list(itertools.combinations(self.members, 2))


DEFAULT_CLUSTERS = (
    ClusterDef("cluster1", ("i", "e", "y")),
    ClusterDef("cluster2", ("ø", "ε", "a")),
    ClusterDef("cluster3", ("u", "o")),
)


def validate_clusters(clusters):
    seen = set()
    for c in clusters:
        overlap = seen.intersection(c.members)
        if overlap:
            raise ValueError(f"clusters overlap on {sorted(overlap)}")
        seen.update(c.members)


@dataclass(frozen=True)
class DistanceObservation:
    f0: float
    speaker_id: str
    cluster: str
    pair: tuple
    distance: float

    def __post_init__(self):
        if self.distance < 0:
            raise ValueError("distance must be non-negative")

    @property
    def key(self):
        return self.speaker_id, self.cluster, tuple(self.pair)


class MissingCellsError(KeyError):
    def __init__(self, cells):
        self.cells = list(cells)
        listing = ", ".join(f"(/{v}/, {f0:g} Hz, {s})" for v, f0, s in self.cells)
        super().__init__(f"missing spectra for {listing}")

    def __str__(self):
        return self.args[0]


def within_cluster_distances(spectra, clusters=DEFAULT_CLUSTERS):
    """Distances for every within-cluster vowel pair, per speaker and f0.

    Parameters
    ----------
    spectra : mapping
        ``(vowel, f0, speaker_id) -> CochleaScaledSpectrum`` (normalised).
    clusters : sequence of ClusterDef

    Returns
    -------
    list of DistanceObservation
        Ordered by f0, then speaker, then cluster and pair.
    """
    validate_clusters(clusters)
    f0s = sorted({k[1] for k in spectra})
    speakers = sorted({k[2] for k in spectra})
    needed = [(v, f0, s) for f0 in f0s for s in speakers for c in clusters for v in c.members]
    missing = [cell for cell in dict.fromkeys(needed) if cell not in spectra]
    if missing:
        raise MissingCellsError(missing)
    out = []
    for f0 in f0s:
        for s in speakers:
            for c in clusters:
                for a, b in c.pairs():
                    d = euclidean_distance(spectra[(a, f0, s)], spectra[(b, f0, s)])
                    out.append(DistanceObservation(f0, s, c.name, (a, b), d))
    return out


@dataclass(frozen=True)
class PiecewiseFit:
    """Hinge model ``d = b0 + b1 f0 + b2 max(0, f0 - breakpoint) + u_speaker + e``.

    `beta2` is the change of slope at the breakpoint; the slope above it is
    ``beta1 + beta2``.
    """

    beta0: float
    beta1: float
    beta2: float
    breakpoint: float
    se: tuple
    p_beta0: float
    p_beta1: float
    p_beta2: float
    dof: int
    speaker_intercepts: dict = field(default_factory=dict)
    residual_variance: float = 0.0
    intercept_variance: float = 0.0
    variance_ratio: float = 0.0
    n_obs: int = 0

    @property
    def slope_above(self):
        return self.beta1 + self.beta2

    def predict(self, f0, speaker_id=None):
        f0 = np.asarray(f0, dtype=np.float64)
        y = self.beta0 + self.beta1 * f0 + self.beta2 * np.maximum(0.0, f0 - self.breakpoint)
        if speaker_id is not None:
            y = y + self.speaker_intercepts.get(speaker_id, 0.0)
        return y

    def table(self):
        """Rows of (coefficient, estimate, se, p)."""
        return [
            ("beta0", self.beta0, self.se[0], self.p_beta0),
            ("beta1", self.beta1, self.se[1], self.p_beta1),
            ("beta2", self.beta2, self.se[2], self.p_beta2),
        ]


def hinge_design(f0, breakpoint):
    f0 = np.asarray(f0, dtype=np.float64)
    return np.column_stack([np.ones_like(f0), f0, np.maximum(0.0, f0 - breakpoint)])


class _RandomInterceptModel:
    """GLS pieces for ``V = I + gamma Z Z'`` with Z a speaker indicator matrix."""

    def __init__(self, X, y, groups):
        self.X, self.y = X, y
        self.groups = groups
        self.n_groups = groups.max() + 1
        self.counts = np.bincount(groups, minlength=self.n_groups).astype(np.float64)
        self.n, self.p = X.shape

    def _group_sums(self, a):
        out = np.zeros((self.n_groups,) + a.shape[1:])
        np.add.at(out, self.groups, a)
        return out

    def vinv(self, a, gamma):
        # Woodbury: V^-1 a = a - Z diag(gamma / (1 + gamma n_s)) Z' a
        if gamma == 0.0:
            return a
        w = gamma / (1.0 + gamma * self.counts)
        sums = self._group_sums(a)
        shape = (-1,) + (1,) * (a.ndim - 1)
        return a - (w.reshape(shape) * sums)[self.groups]

    def gls(self, gamma):
        X, y = self.X, self.y
        ViX = self.vinv(X, gamma)
        XtViX = X.T @ ViX
        beta = np.linalg.solve(XtViX, ViX.T @ y)
        r = y - X @ beta
        Vir = self.vinv(r, gamma)
        return beta, r, Vir, XtViX

    def neg_reml(self, gamma):
        beta, r, Vir, XtViX = self.gls(gamma)
        rss = float(r @ Vir)
        logdet_v = float(np.sum(np.log1p(gamma * self.counts)))
        _, logdet_x = np.linalg.slogdet(XtViX)
        return (self.n - self.p) * math.log(rss) + logdet_v + logdet_x

    def reml_score(self, gamma):
        """Derivative of :meth:`neg_reml` with respect to `gamma`.

        ``tr(Z'PZ) - (n - p) |Z'V^-1 r|^2 / (r'V^-1 r)``, with P the REML
        projection; it depends on y only through a scale-free ratio.
        """
        _, r, Vir, XtViX = self.gls(gamma)
        Z = np.eye(self.n_groups)[self.groups]
        ViZ = self.vinv(Z, gamma)
        ViX = self.vinv(self.X, gamma)
        XtViZ = ViX.T @ Z
        ZtPZ = Z.T @ ViZ - XtViZ.T @ np.linalg.solve(XtViX, XtViZ)
        zr = self._group_sums(Vir)
        return float(np.trace(ZtPZ) - (self.n - self.p) * (zr @ zr) / (r @ Vir))


def _polish_ratio(model, gamma, max_ratio):
    # the REML objective is flat at its minimum, so golden-section search
    # pins gamma to ~sqrt(eps); the score's root is located to ~eps instead
    if not 0.0 < gamma < max_ratio:
        return gamma
    lo, hi = gamma * (1 - 1e-4), min(gamma * (1 + 1e-4), max_ratio)
    try:
        s_lo, s_hi = model.reml_score(lo), model.reml_score(hi)
    except np.linalg.LinAlgError:
        return gamma
    if not (s_lo < 0 < s_hi):
        return gamma
    return float(brentq(model.reml_score, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps,
                        maxiter=200))


def golden_section(f, lo, hi, rtol=1e-8, atol=1e-12, max_iter=500):
    """Minimise a unimodal `f` on ``[lo, hi]``; endpoints are checked too."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= rtol * 0.5 * (abs(a) + abs(b)) + atol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    else:
        raise ConvergenceError(f"golden-section search did not converge in {max_iter} steps")
    x, fx = (c, fc) if fc <= fd else (d, fd)
    for edge in (lo, hi):
        fe = f(edge)
        if fe < fx:
            x, fx = edge, fe
    return x


def piecewise_fit(obs, breakpoint=523.0, max_ratio=1e3) -> PiecewiseFit:
    """Fit the hinge model with speaker random intercepts by REML.

    The variance ratio ``gamma = var(u) / var(e)`` is found by golden-section
    search on ``[0, max_ratio]``; fixed effects come from GLS at that ratio.
    Wald t-tests use ``n - 3 - (n_speakers - 1)`` degrees of freedom. With a
    single speaker the model reduces to ordinary least squares.
    """
    obs = list(obs)
    f0 = np.array([o.f0 for o in obs], dtype=np.float64)
    y = np.array([o.distance for o in obs], dtype=np.float64)
    below = np.unique(f0[f0 <= breakpoint])
    above = np.unique(f0[f0 > breakpoint])
    # a hinge needs two f0 values on each side; the breakpoint itself counts as "below"
    if len(below) < 2 or len(above) < 1 or len(np.unique(f0[f0 >= breakpoint])) < 2:
        raise RankDeficientError("need at least two distinct f0 values on each side of the breakpoint")
    speakers = sorted({o.speaker_id for o in obs})
    groups = np.array([speakers.index(o.speaker_id) for o in obs])
    X = hinge_design(f0, breakpoint)
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficientError("design matrix is rank deficient")
    n, p = X.shape
    dof = n - p - (len(speakers) - 1)
    if dof < 1:
        raise RankDeficientError("not enough observations for the model")

    model = _RandomInterceptModel(X, y, groups)
    beta_ols, r_ols, _, _ = model.gls(0.0)
    exact = float(r_ols @ r_ols) <= (1e-12 * max(np.max(np.abs(y)), 1.0)) ** 2 * n

    if len(speakers) < 2 or exact:
        gamma = 0.0
    else:
        gamma = golden_section(model.neg_reml, 0.0, float(max_ratio))
        gamma = _polish_ratio(model, gamma, float(max_ratio))

    beta, r, Vir, XtViX = model.gls(gamma)
    sigma2 = float(r @ Vir) / (n - p)
    cov = sigma2 * np.linalg.inv(XtViX)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    if exact:
        pvals = [1.0 if abs(b) <= 1e-9 * max(np.max(np.abs(y)), 1.0) else 0.0 for b in beta]
    else:
        t = beta / se
        pvals = [float(2.0 * sps.t.sf(abs(ti), dof)) for ti in t]
    u = gamma * model._group_sums(Vir)
    return PiecewiseFit(
        beta0=float(beta[0]), beta1=float(beta[1]), beta2=float(beta[2]),
        breakpoint=float(breakpoint), se=tuple(float(s) for s in se),
        p_beta0=pvals[0], p_beta1=pvals[1], p_beta2=pvals[2], dof=int(dof),
        speaker_intercepts={s: float(u[i]) for i, s in enumerate(speakers)},
        residual_variance=sigma2, intercept_variance=gamma * sigma2,
        variance_ratio=float(gamma), n_obs=n,
    )


@dataclass(frozen=True)
class FdrResult:
    raw_p: tuple
    adjusted_p: tuple
    rejected: tuple
    q: float


def bh_fdr(raw_p, q=0.05) -> FdrResult:
    """Benjamini-Hochberg step-up adjustment.

    ``adjusted_(k) = min_{j >= k} m p_(j) / j``, capped at 1; a hypothesis
    is rejected when its adjusted p-value is at most `q`.
    """
    p = np.asarray(raw_p, dtype=np.float64).ravel()
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise ValueError("p-values must lie in [0, 1]")
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    m = p.size
    if m == 0:
        return FdrResult((), (), (), q)
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    adj_sorted = np.minimum(np.minimum.accumulate(scaled[::-1])[::-1], 1.0)
    adjusted = np.empty(m)
    adjusted[order] = adj_sorted
    return FdrResult(tuple(p.tolist()), tuple(adjusted.tolist()),
                     tuple(bool(a <= q) for a in adjusted), q)


class UnpairedError(ValueError):
    pass


def pairwise_f0_tests(obs, reference_f0=220.0, q=0.05, test="t"):
    """Compare every f0 with `reference_f0`, paired by (speaker, cluster, pair).

    Parameters
    ----------
    test : {"t", "wilcoxon"}
        Paired two-sided t-test or Wilcoxon signed-rank test.

    Returns
    -------
    comparisons : list of (f0, raw_p)
        In ascending f0 order, reference excluded.
    fdr : FdrResult
        BH adjustment across the comparisons, same order.
    """
    table = {}
    for o in obs:
        cell = table.setdefault(o.f0, {})
        if o.key in cell:
            raise UnpairedError(f"duplicate observation {o.key} at {o.f0:g} Hz")
        cell[o.key] = o.distance
    if reference_f0 not in table:
        raise UnpairedError(f"no observations at the reference f0 {reference_f0:g} Hz")
    ref = table[reference_f0]
    keys = sorted(ref)
    comparisons = []
    for f0 in sorted(table):
        if f0 == reference_f0:
            continue
        other = table[f0]
        if set(other) != set(ref):
            missing = sorted(set(ref).symmetric_difference(other))
            raise UnpairedError(f"{f0:g} Hz is not paired with the reference: {missing}")
        a = np.array([ref[k] for k in keys])
        b = np.array([other[k] for k in keys])
        comparisons.append((f0, _paired_p(a, b, test)))
    fdr = bh_fdr([p for _, p in comparisons], q)
    return comparisons, fdr


def _paired_p(a, b, test):
    diff = b - a
    if np.all(diff == 0):
        return 1.0
    if test == "t":
        if np.ptp(diff) == 0:
            return 0.0
        return float(sps.ttest_rel(b, a).pvalue)
    if test == "wilcoxon":
        return float(sps.wilcoxon(b, a).pvalue)
    raise ValueError(f"unknown test {test!r}")


@dataclass(frozen=True)
class DistanceSummary:
    f0: float
    median: float
    q1: float
    q3: float
    n: int


def summarize_distances(obs):
    """Median and quartiles of the distances at each f0."""
    by_f0 = {}
    for o in obs:
        by_f0.setdefault(o.f0, []).append(o.distance)
    if not by_f0:
        raise ValueError("no observations")
    out = {}
    for f0 in sorted(by_f0):
        d = np.asarray(by_f0[f0])
        q1, med, q3 = np.percentile(d, [25, 50, 75])
        out[f0] = DistanceSummary(f0, float(med), float(q1), float(q3), int(d.size))
    return out
