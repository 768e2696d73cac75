"""End-to-end corpus synthesis, analysis and reporting.

Results are written as a directory of CSV files plus a plain-text report.
All files of a stage are rendered in memory first and moved into place at
the end, so a failing run leaves no partial output behind.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import geometry, stats
from .auditory import (CochleaScaledSpectrum, FilterbankSpec, MiddleEarWeighting,
                       excitation_pattern, make_filterbank, normalize_spectrum)
from .signal_core import (VOWELS, F0ToleranceError, SampleBuffer, VowelToken, WavError,
                          condition, read_wav, write_wav)
from .synth import PeriodicityError, default_profiles, synthesize_vowel, verify_f0

logger = logging.getLogger(__name__)

PAPER_GRID = (220.0, 330.0, 440.0, 523.0, 587.0, 698.0, 784.0, 880.0, 988.0, 1046.0)
POINT_VOWELS = ("i", "a", "u")


class PipelineError(Exception):
    exit_code = 2


class UsageError(PipelineError):
    exit_code = 1


class DataError(PipelineError):
    exit_code = 2


class NumericalError(PipelineError):
    exit_code = 3


@dataclass
class RunConfig:
    filterbank: FilterbankSpec = field(default_factory=FilterbankSpec)
    middle_ear: str | None = None
    fade_ms: float = 10.0
    segment_ms: float = 250.0
    breakpoint: float = 523.0
    q: float = 0.05
    clusters: tuple = stats.DEFAULT_CLUSTERS
    averaging: str = "spectra"
    out_dir: str = "results"
    grid: tuple = PAPER_GRID
    reference_f0: float = 220.0
    test: str = "t"
    target_rms: float = 0.1
    synth_duration: float = 0.5
    sample_rate: int = 44100
    timestamp: bool = True

    def __post_init__(self):
        self.grid = tuple(float(f) for f in self.grid)
        if not self.segment_ms > 2 * self.fade_ms:
            raise UsageError("segment duration must exceed twice the fade duration")
        if not 0 < self.q < 1:
            raise UsageError("q must lie in (0, 1)")
        if self.averaging not in ("spectra", "distmat"):
            raise UsageError("averaging must be 'spectra' or 'distmat'")
        if self.test not in ("t", "wilcoxon"):
            raise UsageError("test must be 't' or 'wilcoxon'")
        try:
            stats.validate_clusters(self.clusters)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {unknown}")
        if "filterbank" in data and isinstance(data["filterbank"], dict):
            data["filterbank"] = FilterbankSpec(**data["filterbank"])
        if "clusters" in data:
            clusters = data["clusters"]
            if isinstance(clusters, dict):
                clusters = clusters.items()
            data["clusters"] = tuple(
                c if isinstance(c, stats.ClusterDef) else stats.ClusterDef(*c) for c in clusters)
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, UsageError):
                raise
            raise UsageError(f"invalid configuration: {exc}") from exc

    @classmethod
    def from_json(cls, path, **overrides):
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data)

    def weighting(self):
        if self.middle_ear is None:
            return MiddleEarWeighting.default()
        try:
            return MiddleEarWeighting.from_file(self.middle_ear)
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot load middle-ear table {self.middle_ear}: {exc}") from exc


# -- manifest --------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    wav_path: str
    vowel: str
    speaker_id: str
    target_f0: float

    @property
    def cell(self):
        return self.vowel, self.target_f0, self.speaker_id


@dataclass
class CorpusManifest:
    """One row per token; paths are relative to the manifest's directory."""

    entries: list
    sample_rate: int = 44100
    grid: tuple = PAPER_GRID
    root: str = "."

    @property
    def speakers(self):
        return sorted({e.speaker_id for e in self.entries})

    def path(self, entry):
        return os.path.join(self.root, entry.wav_path)

    def validate(self):
        """Check every (vowel, speaker, f0) cell appears exactly once."""
        counts = {}
        for e in self.entries:
            if e.vowel not in VOWELS:
                raise DataError(f"unknown vowel {e.vowel!r} in manifest row {e}")
            counts[e.cell] = counts.get(e.cell, 0) + 1
        duplicates = sorted(c for c, k in counts.items() if k > 1)
        speakers = self.speakers
        missing = [(v, f0, s) for f0 in self.grid for s in speakers for v in VOWELS
                   if (v, f0, s) not in counts]
        extra = sorted(c for c in counts if c[1] not in self.grid)
        problems = []
        if missing:
            problems.append("missing cells: " + "; ".join(_cell_str(c) for c in missing))
        if duplicates:
            problems.append("duplicate cells: " + "; ".join(_cell_str(c) for c in duplicates))
        if extra:
            problems.append("cells off the f0 grid: " + "; ".join(_cell_str(c) for c in extra))
        if not speakers:
            problems.append("manifest is empty")
        if problems:
            raise DataError("incomplete corpus grid - " + " | ".join(problems))

    def to_text(self):
        buf = io.StringIO()
        buf.write(f"# sample_rate={self.sample_rate}\n")
        buf.write("# grid=" + ",".join(_fmt_f0(f) for f in self.grid) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["wav_path", "vowel", "speaker_id", "target_f0"])
        for e in self.entries:
            writer.writerow([e.wav_path, e.vowel, e.speaker_id, _fmt_f0(e.target_f0)])
        return buf.getvalue()

    @classmethod
    def read(cls, path):
        path = os.fspath(path)
        try:
            with open(path, encoding="utf-8") as fh:
                lines = fh.read().splitlines()
        except OSError as exc:
            raise DataError(f"cannot read manifest {path}: {exc}") from exc
        meta = {}
        rows = []
        for line in lines:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
            elif line.strip():
                rows.append(line)
        try:
            entries = [ManifestEntry(r["wav_path"], r["vowel"], r["speaker_id"], float(r["target_f0"]))
                       for r in csv.DictReader(rows)]
        except (KeyError, ValueError, TypeError) as exc:
            raise DataError(f"malformed manifest {path}: {exc}") from exc
        grid = (tuple(float(f) for f in meta["grid"].split(",")) if "grid" in meta
                else tuple(sorted({e.target_f0 for e in entries})))
        return cls(entries, int(meta.get("sample_rate", 44100)), grid,
                   os.path.dirname(os.path.abspath(path)))


def _fmt_f0(f0):
    return f"{f0:g}"


def _cell_str(cell):
    v, f0, s = cell
    return f"(/{v}/, {s}, {_fmt_f0(f0)} Hz)"


# -- output handling -------------------------------------------------------

def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_num(x) for x in row])
    return buf.getvalue()


def _num(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def commit_files(out_dir, files):
    """Write ``{relative_path: text_or_bytes}`` into `out_dir` atomically per file.

    Everything is staged in a temporary directory next to `out_dir` first,
    then moved into place with :func:`os.replace`.
    """
    out_dir = os.path.abspath(out_dir)
    parent = os.path.dirname(out_dir)
    os.makedirs(parent, exist_ok=True)
    staging = tempfile.mkdtemp(prefix=".staging-", dir=parent)
    try:
        for rel, content in files.items():
            dest = os.path.join(staging, rel)
            os.makedirs(os.path.dirname(dest), exist_ok=True)
            mode = "wb" if isinstance(content, bytes) else "w"
            with open(dest, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
                fh.write(content)
        for rel in files:
            dest = os.path.join(out_dir, rel)
            os.makedirs(os.path.dirname(dest), exist_ok=True)
            os.replace(os.path.join(staging, rel), dest)
    finally:
        shutil.rmtree(staging, ignore_errors=True)


# -- synthesis -------------------------------------------------------------

def cmd_synthesize(config: RunConfig, output_dir, profiles=None) -> CorpusManifest:
    """Synthesize the full vowel x speaker x f0 grid as float32 WAV files."""
    profiles = list(profiles) if profiles is not None else default_profiles()
    entries, files, failures = [], {}, []
    for f0 in config.grid:
        for profile in profiles:
            for vowel in VOWELS:
                try:
                    token = synthesize_vowel(vowel, f0, profile, config.synth_duration,
                                             config.sample_rate)
                except (F0ToleranceError, PeriodicityError) as exc:
                    failures.append(f"{_cell_str((vowel, f0, profile.speaker_id))}: {exc}")
                    continue
                rel = os.path.join("wav", f"{profile.speaker_id}_{vowel}_{_fmt_f0(f0)}.wav")
                files[rel] = _wav_bytes(token.buffer)
                entries.append(ManifestEntry(rel, vowel, profile.speaker_id, float(f0)))
    if failures:
        raise DataError("f0 verification failed for " + "; ".join(failures))
    manifest = CorpusManifest(entries, config.sample_rate, config.grid,
                              os.path.abspath(output_dir))
    files["manifest.csv"] = manifest.to_text()
    commit_files(output_dir, files)
    return manifest


def _wav_bytes(buffer: SampleBuffer) -> bytes:
    with tempfile.NamedTemporaryFile(suffix=".wav", delete=False) as tmp:
        name = tmp.name
    try:
        write_wav(name, buffer, "float32")
        with open(name, "rb") as fh:
            return fh.read()
    finally:
        os.remove(name)


# -- ingestion and spectra -------------------------------------------------

def load_tokens(manifest: CorpusManifest, config: RunConfig, entries=None):
    """Read and condition WAV files; verify each token's f0 against its target."""
    tokens, problems = {}, []
    for entry in entries if entries is not None else manifest.entries:
        where = _cell_str(entry.cell)
        try:
            raw = read_wav(manifest.path(entry))
            buf = condition(raw, config.segment_ms / 1000.0, config.fade_ms / 1000.0,
                            config.target_rms)
            measured = verify_f0(buf, entry.target_f0)
            tokens[entry.cell] = VowelToken(entry.vowel, entry.speaker_id, entry.target_f0,
                                            measured, buf)
        except (WavError, ValueError) as exc:
            problems.append(f"{where} {entry.wav_path}: {exc}")
    if problems:
        raise DataError("cannot ingest corpus - " + " | ".join(problems))
    return tokens


def compute_spectra(tokens, config: RunConfig):
    """Normalised cochlea-scaled spectrum for every token, keyed by cell."""
    weighting = config.weighting()
    banks = {}
    out = {}
    for cell, token in tokens.items():
        rate = token.buffer.sample_rate
        if rate not in banks:
            try:
                banks[rate] = make_filterbank(config.filterbank, rate)
            except ValueError as exc:
                raise DataError(f"filterbank unusable at {rate} Hz: {exc}") from exc
        s = excitation_pattern(token.buffer, config.filterbank, weighting, banks[rate])
        out[cell] = normalize_spectrum(s)
    return out


def average_spectra(spectra_list):
    first = spectra_list[0]
    levels = np.mean([s.levels_db for s in spectra_list], axis=0)
    return normalize_spectrum(CochleaScaledSpectrum(first.center_frequencies, levels))


# -- analysis --------------------------------------------------------------

@dataclass
class AnalysisResults:
    config: RunConfig
    spectra: dict
    mean_spectra: dict
    distance_matrices: dict
    embeddings: dict
    eigenvalues: dict
    axis_ratios: dict
    hull: dict
    observations: list
    summaries: dict
    fit: stats.PiecewiseFit
    comparisons: list
    fdr: stats.FdrResult


def per_speaker_embeddings(spectra, f0):
    """Unaligned MDS per speaker at one f0, for diagnostics."""
    out = {}
    for s in sorted({k[2] for k in spectra}):
        D = geometry.pairwise_distances([spectra[(v, f0, s)] for v in VOWELS], VOWELS)
        out[s] = geometry.classical_mds(D)
    return out


def analyze_spectra(spectra, config: RunConfig) -> AnalysisResults:
    speakers = sorted({k[2] for k in spectra})
    grid = sorted({k[1] for k in spectra})
    mean_spectra, matrices, raw_embeddings = {}, {}, {}
    for f0 in grid:
        for v in VOWELS:
            mean_spectra[(v, f0)] = average_spectra([spectra[(v, f0, s)] for s in speakers])
        if config.averaging == "spectra":
            D = geometry.pairwise_distances([mean_spectra[(v, f0)] for v in VOWELS], VOWELS)
        else:
            per = [geometry.pairwise_distances([spectra[(v, f0, s)] for v in VOWELS], VOWELS).d
                   for s in speakers]
            D = geometry.DistanceMatrix(VOWELS, np.mean(per, axis=0))
        matrices[f0] = D
        raw_embeddings[f0] = geometry.classical_mds(D)

    reference_f0 = config.reference_f0 if config.reference_f0 in grid else grid[0]
    reference = geometry.orient(raw_embeddings[reference_f0])
    embeddings = {f0: (reference if f0 == reference_f0
                       else geometry.procrustes_align(reference, e))
                  for f0, e in raw_embeddings.items()}
    axis_ratios = {}
    for f0, e in embeddings.items():
        try:
            axis_ratios[f0] = geometry.axis_ratio(e)
        except ValueError as exc:
            raise NumericalError(f"axis ratio at {_fmt_f0(f0)} Hz: {exc}") from exc
    hull = {f0: geometry.on_convex_hull(e, POINT_VOWELS) for f0, e in embeddings.items()}

    observations = stats.within_cluster_distances(spectra, config.clusters)
    summaries = stats.summarize_distances(observations)
    try:
        fit = stats.piecewise_fit(observations, config.breakpoint)
    except stats.RankDeficientError as exc:
        raise DataError(f"piecewise fit impossible: {exc}") from exc
    except (stats.ConvergenceError, np.linalg.LinAlgError) as exc:
        raise NumericalError(f"piecewise fit failed: {exc}") from exc
    try:
        comparisons, fdr = stats.pairwise_f0_tests(observations, reference_f0, config.q,
                                                   config.test)
    except stats.UnpairedError as exc:
        raise DataError(str(exc)) from exc
    return AnalysisResults(config, spectra, mean_spectra, matrices, embeddings,
                           {f0: e.eigenvalues for f0, e in raw_embeddings.items()},
                           axis_ratios, hull, observations, summaries, fit, comparisons, fdr)


def render_results(res: AnalysisResults):
    """All bundle files as ``{relative_path: text}``."""
    files = {}
    speakers = sorted({k[2] for k in res.spectra})
    for f0 in sorted(res.distance_matrices):
        tag = _fmt_f0(f0)
        rows = []
        for s in speakers:
            for v in VOWELS:
                sp = res.spectra[(v, f0, s)]
                rows += [(v, s, c, l) for c, l in zip(sp.center_frequencies, sp.levels_db)]
        for v in VOWELS:
            sp = res.mean_spectra[(v, f0)]
            rows += [(v, "mean", c, l) for c, l in zip(sp.center_frequencies, sp.levels_db)]
        files[f"spectra/spectra_{tag}.csv"] = _csv_text(
            ["vowel", "speaker", "center_hz", "level_db"], rows)
        D = res.distance_matrices[f0]
        files[f"distances/distmat_{tag}.csv"] = _csv_text(
            ["label", *D.labels], [(lab, *row) for lab, row in zip(D.labels, D.d)])
        e = res.embeddings[f0]
        files[f"mds/mds_{tag}.csv"] = _csv_text(
            ["label", "dim1", "dim2"], [(lab, *xy) for lab, xy in zip(e.labels, e.coords)])
    files["mds/mds_all.csv"] = _csv_text(
        ["f0", "label", "dim1", "dim2"],
        [(_fmt_f0(f0), lab, *xy) for f0, e in sorted(res.embeddings.items())
         for lab, xy in zip(e.labels, e.coords)])
    files["mds/eigenvalues.csv"] = _csv_text(
        ["f0", "eig1", "eig2"], [(_fmt_f0(f0), *ev) for f0, ev in sorted(res.eigenvalues.items())])
    files["axis_ratio.csv"] = _csv_text(
        ["f0", "axis_ratio"], [(_fmt_f0(f0), r) for f0, r in sorted(res.axis_ratios.items())])
    files["hull.csv"] = _csv_text(
        ["f0", "vowel", "on_hull"],
        [(_fmt_f0(f0), v, flag) for f0, h in sorted(res.hull.items()) for v, flag in h.items()])
    files["observations.csv"] = _csv_text(
        ["f0", "speaker", "cluster", "vowel1", "vowel2", "distance"],
        [(_fmt_f0(o.f0), o.speaker_id, o.cluster, o.pair[0], o.pair[1], o.distance)
         for o in res.observations])
    files["distance_summary.csv"] = _csv_text(
        ["f0", "median", "q1", "q3", "n"],
        [(_fmt_f0(s.f0), s.median, s.q1, s.q3, s.n) for s in res.summaries.values()])
    fit = res.fit
    files["fit.csv"] = _csv_text(["coefficient", "estimate", "se", "p"], fit.table())
    files["fit_random_effects.csv"] = _csv_text(
        ["term", "value"],
        [("breakpoint", fit.breakpoint), ("dof", fit.dof), ("n_obs", fit.n_obs),
         ("residual_variance", fit.residual_variance),
         ("intercept_variance", fit.intercept_variance),
         ("variance_ratio", fit.variance_ratio)]
        + [(f"intercept_{s}", u) for s, u in sorted(fit.speaker_intercepts.items())])
    ref = _fmt_f0(res.config.reference_f0)
    files["fdr.csv"] = _csv_text(
        ["comparison", "f0", "raw_p", "adjusted_p", "rejected"],
        [(f"{ref} vs {_fmt_f0(f0)}", _fmt_f0(f0), p, a, r)
         for (f0, p), a, r in zip(res.comparisons, res.fdr.adjusted_p, res.fdr.rejected)])
    return files


def cmd_analyze(manifest, config: RunConfig, out_dir=None) -> AnalysisResults:
    """Ingest a manifest, analyse it and write the results bundle plus report."""
    if not isinstance(manifest, CorpusManifest):
        manifest = CorpusManifest.read(manifest)
    manifest.validate()
    out_dir = out_dir or config.out_dir
    tokens = load_tokens(manifest, config)
    spectra = compute_spectra(tokens, config)
    res = analyze_spectra(spectra, config)
    files = render_results(res)
    files["report.txt"] = build_report(_bundle_from_files(files), config)
    commit_files(out_dir, files)
    return res


def cmd_spectra(manifest, config: RunConfig, vowels=None, speakers=None, f0s=None):
    """Long-format CSV text (vowel, speaker, f0, center_hz, level_db) for a selection."""
    if not isinstance(manifest, CorpusManifest):
        manifest = CorpusManifest.read(manifest)
    f0s = None if f0s is None else {float(f) for f in f0s}
    chosen = [e for e in manifest.entries
              if (vowels is None or e.vowel in vowels)
              and (speakers is None or e.speaker_id in speakers)
              and (f0s is None or e.target_f0 in f0s)]
    if not chosen:
        raise DataError("selection matches no corpus cells")
    spectra = compute_spectra(load_tokens(manifest, config, chosen), config)
    rows = []
    for e in chosen:
        sp = spectra[e.cell]
        rows += [(e.vowel, e.speaker_id, _fmt_f0(e.target_f0), c, l)
                 for c, l in zip(sp.center_frequencies, sp.levels_db)]
    return _csv_text(["vowel", "speaker", "f0", "center_hz", "level_db"], rows)


# -- report ----------------------------------------------------------------

BUNDLE_FILES = {
    "distance_summary.csv": "analyze (distance summaries)",
    "fit.csv": "analyze (piecewise fit)",
    "fdr.csv": "analyze (pairwise f0 tests)",
    "axis_ratio.csv": "analyze (MDS axis ratios)",
    "hull.csv": "analyze (MDS hull check)",
    "observations.csv": "analyze (within-cluster distances)",
}


def _read_rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def _bundle_from_files(files):
    return {name: _read_rows(files[name]) for name in BUNDLE_FILES}


def load_bundle(out_dir):
    bundle, missing = {}, []
    for name, stage in BUNDLE_FILES.items():
        path = os.path.join(out_dir, name)
        if not os.path.isfile(path):
            missing.append(f"{name} from {stage}")
            continue
        with open(path, encoding="utf-8", newline="") as fh:
            bundle[name] = _read_rows(fh.read())
    if missing:
        raise DataError(f"results in {out_dir} are incomplete; missing " + ", ".join(missing))
    return bundle


def acceptance_checks(bundle, q=0.05):
    """Qualitative checks on a results bundle as ``[(name, passed_or_None, detail)]``."""
    med = {float(r["f0"]): float(r["median"]) for r in bundle["distance_summary.csv"]}
    fit = {r["coefficient"]: r for r in bundle["fit.csv"]}
    fdr = {float(r["f0"]): r for r in bundle["fdr.csv"]}
    ratio = {float(r["f0"]): float(r["axis_ratio"]) for r in bundle["axis_ratio.csv"]}
    hull = {}
    for r in bundle["hull.csv"]:
        hull.setdefault(float(r["f0"]), {})[r["vowel"]] = r["on_hull"] == "true"
    checks = []

    def add(name, needed, fn):
        if all(k in src for src, keys in needed for k in keys):
            passed, detail = fn()
            checks.append((name, bool(passed), detail))
        else:
            checks.append((name, None, "not applicable to this grid"))

    add("median(880) < 0.5 * median(220)", [(med, (220.0, 880.0))],
        lambda: (med[880.0] < 0.5 * med[220.0],
                 f"{med[880.0]:.3f} vs {med[220.0]:.3f} (ratio {med[880.0] / med[220.0]:.3f})"))
    b1, b2 = fit["beta1"], fit["beta2"]
    checks.append(("beta2 < 0 significant, beta1 not significant",
                   float(b2["estimate"]) < 0 and float(b2["p"]) < q and float(b1["p"]) > q,
                   f"beta1={float(b1['estimate']):.5g} (p={float(b1['p']):.3g}), "
                   f"beta2={float(b2['estimate']):.5g} (p={float(b2['p']):.3g})"))
    low, high = (330.0, 440.0), (523.0, 587.0, 698.0, 784.0, 880.0, 988.0, 1046.0)

    def fdr_pattern():
        ok = (all(fdr[f]["rejected"] == "false" for f in low)
              and all(fdr[f]["rejected"] == "true" for f in high))
        detail = ", ".join(f"{_fmt_f0(f)}:{float(fdr[f]['adjusted_p']):.3g}"
                           f"{'*' if fdr[f]['rejected'] == 'true' else ''}" for f in sorted(fdr))
        return ok, detail
    add("FDR: 220 vs {330,440} kept, 220 vs {523..1046} rejected", [(fdr, low + high)],
        fdr_pattern)
    add("axis_ratio(1046) < axis_ratio(220)", [(ratio, (220.0, 1046.0))],
        lambda: (ratio[1046.0] < ratio[220.0], f"{ratio[1046.0]:.3f} vs {ratio[220.0]:.3f}"))
    add("/i a u/ on convex hull at 220 Hz", [(hull, (220.0,))],
        lambda: (all(hull[220.0].values()),
                 ", ".join(f"{v}:{'yes' if h else 'no'}" for v, h in hull[220.0].items())))

    def plateau():
        vals = [med[f] for f in (880.0, 988.0, 1046.0)]
        spread = max(vals) / min(vals)
        return spread <= 1.25, f"max/min = {spread:.3f}"
    add("medians at 880/988/1046 within 25%", [(med, (880.0, 988.0, 1046.0))], plateau)
    return checks


def build_report(bundle, config: RunConfig | None = None, q=None) -> str:
    config = config or RunConfig()
    q = config.q if q is None else q
    lines = []
    if config.timestamp:
        lines.append(f"# generated {datetime.now(timezone.utc).isoformat(timespec='seconds')}")
    lines += ["vowel-space analysis report", "=" * 27, ""]

    lines.append("Within-cluster distance by f0 (median [Q1, Q3], n)")
    for r in bundle["distance_summary.csv"]:
        lines.append(f"  {r['f0']:>6} Hz  {float(r['median']):9.3f}  "
                     f"[{float(r['q1']):.3f}, {float(r['q3']):.3f}]  n={r['n']}")
    lines.append("")

    lines.append("Cluster medians at 220 / 523 / 880 Hz")
    per = {}
    for r in bundle["observations.csv"]:
        per.setdefault((r["cluster"], float(r["f0"])), []).append(float(r["distance"]))
    for cluster in sorted({c for c, _ in per}):
        cells = []
        for f0 in (220.0, 523.0, 880.0):
            d = per.get((cluster, f0))
            cells.append(f"{np.median(d):9.3f}" if d else f"{'n/a':>9}")
        lines.append(f"  {cluster:<10}" + " ".join(cells))
    lines.append("")

    lines.append("MDS axis ratio (height extent / frontness extent)")
    for r in bundle["axis_ratio.csv"]:
        lines.append(f"  {r['f0']:>6} Hz  {float(r['axis_ratio']):.4f}")
    lines.append("")

    lines.append("Piecewise mixed-effects fit")
    lines.append(f"  {'term':<8}{'estimate':>14}{'se':>14}{'p':>12}")
    for r in bundle["fit.csv"]:
        lines.append(f"  {r['coefficient']:<8}{float(r['estimate']):>14.6g}"
                     f"{float(r['se']):>14.6g}{float(r['p']):>12.4g}")
    lines.append("")

    lines.append(f"Pairwise f0 comparisons (BH-FDR, q={q:g})")
    lines.append(f"  {'comparison':<14}{'raw p':>12}{'adjusted p':>12}  rejected")
    for r in bundle["fdr.csv"]:
        lines.append(f"  {r['comparison']:<14}{float(r['raw_p']):>12.4g}"
                     f"{float(r['adjusted_p']):>12.4g}  {r['rejected']}")
    lines.append("")

    lines.append("Acceptance checks")
    for name, passed, detail in acceptance_checks(bundle, q):
        tag = "PASS" if passed else ("N/A " if passed is None else "FAIL")
        lines.append(f"  [{tag}] {name}: {detail}")
    return "\n".join(lines) + "\n"


def cmd_report(out_dir, config: RunConfig | None = None) -> str:
    """Rebuild ``report.txt`` from the CSV files already in `out_dir`."""
    bundle = load_bundle(out_dir)
    text = build_report(bundle, config)
    commit_files(out_dir, {"report.txt": text})
    return text


def run_all(config: RunConfig, out_dir=None, profiles=None) -> AnalysisResults:
    out_dir = out_dir or config.out_dir
    corpus_dir = os.path.join(out_dir, "corpus")
    manifest = cmd_synthesize(config, corpus_dir, profiles)
    return cmd_analyze(manifest, config, out_dir)
