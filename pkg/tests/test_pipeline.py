import csv
import filecmp
import json
import os
import shutil

import pytest

from vowelspace import cli, pipeline, stats
from vowelspace.pipeline import (PAPER_GRID, CorpusManifest, DataError, RunConfig,
                                 UsageError, cmd_analyze, cmd_report, cmd_spectra,
                                 cmd_synthesize)
from vowelspace.signal_core import VOWELS

SMALL_GRID = (220.0, 330.0, 523.0, 698.0)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def bundle_files(root):
    out = []
    for dirpath, _, names in os.walk(root):
        out += [os.path.relpath(os.path.join(dirpath, n), root) for n in names]
    return sorted(out)


@pytest.fixture(scope="module")
def small(tmp_path_factory):
    root = tmp_path_factory.mktemp("small")
    config = RunConfig(grid=SMALL_GRID, timestamp=False)
    manifest = cmd_synthesize(config, root / "corpus")
    return {"config": config, "manifest": manifest, "root": root}


# -- config -------------------------------------------------------------------

def test_config_invariants():
    with pytest.raises(UsageError):
        RunConfig(segment_ms=20, fade_ms=10)
    for q in (0.0, 1.0):
        with pytest.raises(UsageError):
            RunConfig(q=q)
    with pytest.raises(UsageError):
        RunConfig(averaging="embeddings")


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"breakpoint": 440, "q": 0.1, "fade_ms": 5,
                                "filterbank": {"n_channels": 64},
                                "clusters": {"front": ["i", "e"], "back": ["u", "o"]}}))
    config = RunConfig.from_json(path, q=0.01, fade_ms=None)
    assert config.breakpoint == 440 and config.q == 0.01 and config.fade_ms == 5
    assert config.filterbank.n_channels == 64
    assert [c.name for c in config.clusters] == ["front", "back"]
    path.write_text(json.dumps({"bogus": 1}))
    with pytest.raises(UsageError, match="bogus"):
        RunConfig.from_json(path)


# -- synthesize ---------------------------------------------------------------

def test_default_manifest_has_240_entries(corpus_run):
    m = corpus_run["manifest"]
    assert len(m.entries) == 240
    assert m.grid == PAPER_GRID and m.sample_rate == 44100
    m.validate()
    reread = CorpusManifest.read(corpus_run["corpus"] / "manifest.csv")
    assert reread.entries == m.entries and reread.grid == m.grid


def test_single_f0_grid(tmp_path):
    m = cmd_synthesize(RunConfig(grid=(220.0,)), tmp_path / "c")
    assert len(m.entries) == 24
    assert len(os.listdir(tmp_path / "c" / "wav")) == 24


def test_synthesis_is_byte_identical(small, tmp_path):
    again = cmd_synthesize(small["config"], tmp_path / "again")
    for entry in again.entries:
        assert filecmp.cmp(small["manifest"].path(entry), again.path(entry), shallow=False)
    assert filecmp.cmp(small["root"] / "corpus" / "manifest.csv",
                       tmp_path / "again" / "manifest.csv", shallow=False)


# -- manifest validation and ingestion errors -------------------------------------

def test_incomplete_grid_lists_every_cell(small, tmp_path):
    m = small["manifest"]
    dropped = [e for e in m.entries if (e.vowel, e.speaker_id) in {("y", "S2"), ("o", "S3")}
               and e.target_f0 == 523.0]
    broken = CorpusManifest([e for e in m.entries if e not in dropped], m.sample_rate, m.grid,
                            m.root)
    with pytest.raises(DataError) as err:
        cmd_analyze(broken, small["config"], tmp_path / "out")
    assert "(/y/, S2, 523 Hz)" in str(err.value) and "(/o/, S3, 523 Hz)" in str(err.value)
    assert not (tmp_path / "out").exists()


def test_duplicate_and_off_grid_cells(small):
    m = small["manifest"]
    with pytest.raises(DataError, match="duplicate"):
        CorpusManifest(m.entries + m.entries[:1], m.sample_rate, m.grid, m.root).validate()
    odd = [pipeline.ManifestEntry("x.wav", "a", "S1", 100.0)]
    with pytest.raises(DataError, match="off the f0 grid"):
        CorpusManifest(m.entries + odd, m.sample_rate, m.grid, m.root).validate()


def test_corrupt_and_missing_wavs(small, tmp_path):
    corpus = tmp_path / "corpus"
    shutil.copytree(small["root"] / "corpus", corpus)
    m = CorpusManifest.read(corpus / "manifest.csv")
    (corpus / "wav" / "S1_a_330.wav").write_bytes(b"garbage")
    os.remove(corpus / "wav" / "S2_u_698.wav")
    with pytest.raises(DataError) as err:
        cmd_analyze(m, small["config"], tmp_path / "out")
    msg = str(err.value)
    assert "(/a/, S1, 330 Hz)" in msg and "(/u/, S2, 698 Hz)" in msg
    assert not (tmp_path / "out").exists()


def test_unreadable_manifest(tmp_path):
    with pytest.raises(DataError):
        CorpusManifest.read(tmp_path / "none.csv")


# -- analyze ------------------------------------------------------------------

def test_bundle_layout(corpus_run):
    out = corpus_run["out"]
    files = bundle_files(out)
    tags = [f"{f:g}" for f in PAPER_GRID]
    assert [f for f in files if f.startswith("mds" + os.sep + "mds_") and "all" not in f] == \
        sorted(os.path.join("mds", f"mds_{t}.csv") for t in tags)
    for t in tags:
        rows = read_csv(out / "mds" / f"mds_{t}.csv")
        assert [r["label"] for r in rows] == list(VOWELS)
        mat = read_csv(out / "distances" / f"distmat_{t}.csv")
        assert len(mat) == 8 and len(mat[0]) == 9
        spectra = read_csv(out / "spectra" / f"spectra_{t}.csv")
        assert len(spectra) == (3 + 1) * 8 * 200
    assert len(read_csv(out / "mds" / "mds_all.csv")) == 80
    assert len(read_csv(out / "observations.csv")) == 210
    assert len(read_csv(out / "fdr.csv")) == 9
    assert [r["coefficient"] for r in read_csv(out / "fit.csv")] == ["beta0", "beta1", "beta2"]
    assert len(read_csv(out / "axis_ratio.csv")) == 10


def test_full_precision_csv(corpus_run):
    res = corpus_run["results"]
    rows = read_csv(corpus_run["out"] / "axis_ratio.csv")
    assert float(rows[0]["axis_ratio"]) == res.axis_ratios[220.0]
    obs = read_csv(corpus_run["out"] / "observations.csv")
    assert float(obs[5]["distance"]) == res.observations[5].distance


def test_reference_frame_orientation(corpus_run):
    e = corpus_run["results"].embeddings[220.0]
    assert e.coord("i")[0] == e.coords[:, 0].min() or e.coord("i")[0] < 0
    assert e.coord("a")[1] > 0


def test_report_lists_axis_ratios(corpus_run):
    text = (corpus_run["out"] / "report.txt").read_text(encoding="utf-8")
    for f0 in PAPER_GRID:
        assert f"{f0:g} Hz  {corpus_run['results'].axis_ratios[f0]:.4f}" in text
    ratios = corpus_run["results"].axis_ratios
    assert ratios[1046.0] < ratios[220.0]


def test_report_has_fit_and_acceptance_block(corpus_run):
    text = (corpus_run["out"] / "report.txt").read_text(encoding="utf-8")
    assert "Piecewise mixed-effects fit" in text
    assert "beta2" in text and "Acceptance checks" in text
    assert not text.startswith("# generated")


def test_median_880_below_523(corpus_run):
    s = corpus_run["results"].summaries
    assert s[880.0].median < s[523.0].median


def test_analysis_is_deterministic(small, tmp_path):
    a = cmd_analyze(small["manifest"], small["config"], tmp_path / "a")
    cmd_analyze(small["manifest"], small["config"], tmp_path / "b")
    files = bundle_files(tmp_path / "a")
    assert files == bundle_files(tmp_path / "b")
    for f in files:
        assert filecmp.cmp(tmp_path / "a" / f, tmp_path / "b" / f, shallow=False), f
    assert len(a.observations) == 4 * 3 * 7


def test_distmat_averaging(small, tmp_path):
    config = RunConfig(grid=SMALL_GRID, averaging="distmat", timestamp=False)
    res = cmd_analyze(small["manifest"], config, tmp_path / "d")
    spec = cmd_analyze(small["manifest"], small["config"], tmp_path / "s")
    assert res.distance_matrices[220.0].d.shape == (8, 8)
    # averaging distances is not the same as averaging spectra
    assert abs(res.distance_matrices[220.0].d[0, 5] - spec.distance_matrices[220.0].d[0, 5]) > 1e-6


def test_per_speaker_embeddings(corpus_run):
    per = pipeline.per_speaker_embeddings(corpus_run["results"].spectra, 220.0)
    assert sorted(per) == ["S1", "S2", "S3"]
    assert all(e.coords.shape == (8, 2) for e in per.values())


# -- spectra export ----------------------------------------------------------------

def test_spectra_selection(corpus_run):
    text = cmd_spectra(corpus_run["manifest"], corpus_run["config"], vowels=["i", "y", "e"],
                       speakers=["S1"], f0s=[220, 523, 880])
    rows = list(csv.DictReader(text.splitlines()))
    assert len(rows) == 9 * 200
    assert {(r["vowel"], r["f0"]) for r in rows} == {(v, f) for v in "iye" for f in ("220", "523", "880")}
    assert list(rows[0]) == ["vowel", "speaker", "f0", "center_hz", "level_db"]


def test_spectra_empty_selection(corpus_run):
    with pytest.raises(DataError, match="no corpus cells"):
        cmd_spectra(corpus_run["manifest"], corpus_run["config"], vowels=["i"], f0s=[100])


def test_spectra_full_corpus(corpus_run):
    text = cmd_spectra(corpus_run["manifest"], corpus_run["config"])
    assert len(text.splitlines()) == 1 + 240 * 200


# -- report ---------------------------------------------------------------

def test_report_rerun_is_byte_identical(corpus_run, tmp_path):
    out = tmp_path / "copy"
    shutil.copytree(corpus_run["out"], out)
    first = cmd_report(out, corpus_run["config"])
    second = cmd_report(out, corpus_run["config"])
    assert first == second == (corpus_run["out"] / "report.txt").read_text(encoding="utf-8")
    assert "Acceptance checks" in first


def test_report_timestamp_optional(corpus_run, tmp_path):
    out = tmp_path / "copy"
    shutil.copytree(corpus_run["out"], out)
    text = cmd_report(out, RunConfig(timestamp=True))
    assert text.startswith("# generated ")
    assert text.split("\n", 1)[1] == cmd_report(out, corpus_run["config"])


def test_report_missing_stage(corpus_run, tmp_path):
    out = tmp_path / "partial"
    shutil.copytree(corpus_run["out"], out)
    os.remove(out / "fit.csv")
    with pytest.raises(DataError, match="fit.csv from analyze"):
        cmd_report(out)


# -- atomic output -------------------------------------------------------------

def test_commit_files_leaves_no_staging(tmp_path):
    pipeline.commit_files(tmp_path / "o", {"a.csv": "x\n", "sub/b.csv": "y\n", "c.bin": b"\x00"})
    assert sorted(os.listdir(tmp_path)) == ["o"]
    assert (tmp_path / "o" / "sub" / "b.csv").read_text() == "y\n"


# -- CLI ------------------------------------------------------------------------

def test_cli_run_all_and_report(tmp_path, capsys):
    out = tmp_path / "cli"
    code = cli.run(["run-all", "--out", str(out), "--grid", "220,330,523,698", "--no-timestamp",
                    "--q", "0.1"])
    assert code == 0
    assert (out / "corpus" / "manifest.csv").exists()
    assert "BH-FDR, q=0.1" in (out / "report.txt").read_text(encoding="utf-8")
    capsys.readouterr()
    assert cli.run(["report", "--out", str(out), "--no-timestamp", "--q", "0.1"]) == 0
    assert capsys.readouterr().out == (out / "report.txt").read_text(encoding="utf-8")


def test_cli_subcommands(small, tmp_path):
    manifest = str(small["root"] / "corpus" / "manifest.csv")
    sel = tmp_path / "sel.csv"
    assert cli.run(["spectra", "--manifest", manifest, "--vowels", "i,u", "--speakers", "S3",
                    "--f0", "523", "--output", str(sel)]) == 0
    assert len(read_csv(sel)) == 400
    assert cli.run(["synthesize", "--out", str(tmp_path / "syn"), "--grid", "220"]) == 0
    assert len(CorpusManifest.read(tmp_path / "syn" / "manifest.csv").entries) == 24


def test_cli_exit_codes(small, tmp_path, monkeypatch):
    assert cli.run(["frobnicate"]) == 1
    assert cli.run(["analyze", "--manifest", "m.csv", "--averaging", "median"]) == 1
    assert cli.run(["analyze", "--manifest", "m.csv", "--segment-ms", "10"]) == 1
    assert cli.run(["analyze", "--manifest", str(tmp_path / "missing.csv"),
                    "--out", str(tmp_path / "o")]) == 2
    assert cli.run(["report", "--out", str(tmp_path / "empty")]) == 2

    def diverge(*args, **kwargs):
        raise stats.ConvergenceError("no convergence")
    monkeypatch.setattr(stats, "piecewise_fit", diverge)
    manifest = str(small["root"] / "corpus" / "manifest.csv")
    assert cli.run(["analyze", "--manifest", manifest, "--out", str(tmp_path / "o")]) == 3
    assert not (tmp_path / "o").exists()


def test_cli_config_precedence(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"q": 0.2, "breakpoint": 600, "out_dir": "x"}))
    args = cli.build_parser().parse_args(["report", "--config", str(path), "--q", "0.01"])
    config = cli.config_from_args(args)
    assert config.q == 0.01 and config.breakpoint == 600 and config.out_dir == "x"
