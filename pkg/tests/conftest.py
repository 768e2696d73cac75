import time

import numpy as np
import pytest

from vowelspace import pipeline
from vowelspace.signal_core import SampleBuffer, read_wav, write_wav


@pytest.fixture(scope="session")
def corpus_run(tmp_path_factory):
    """Default synthetic corpus, synthesized and analysed once per session."""
    root = tmp_path_factory.mktemp("run")
    config = pipeline.RunConfig(timestamp=False)
    t0 = time.perf_counter()
    manifest = pipeline.cmd_synthesize(config, root / "corpus")
    results = pipeline.cmd_analyze(manifest, config, root / "results")
    elapsed = time.perf_counter() - t0
    return {"config": config, "manifest": manifest, "results": results,
            "out": root / "results", "corpus": root / "corpus", "elapsed": elapsed}


@pytest.fixture(scope="session")
def scaled_run(corpus_run, tmp_path_factory):
    """Same corpus with every WAV amplitude multiplied by 0.25, analysed."""
    root = tmp_path_factory.mktemp("scaled")
    src = corpus_run["manifest"]
    for entry in src.entries:
        buf = read_wav(src.path(entry))
        dest = root / "corpus" / entry.wav_path
        dest.parent.mkdir(parents=True, exist_ok=True)
        write_wav(dest, SampleBuffer(buf.samples * 0.25, buf.sample_rate))
    manifest = pipeline.CorpusManifest(list(src.entries), src.sample_rate, src.grid,
                                       str(root / "corpus"))
    results = pipeline.cmd_analyze(manifest, corpus_run["config"], root / "results")
    return {"results": results, "out": root / "results"}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results, key=lambda k: (k.split("-")[0][0], k)):
        terminalreporter.write_line(results[key])
