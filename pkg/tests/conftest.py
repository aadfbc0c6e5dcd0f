import os
from pathlib import Path

import numpy as np
import pytest

from nmr_probe import config as config_mod
from nmr_probe import experiments


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def headline_cfg():
    return config_mod.load()


@pytest.fixture(scope="session")
def headline_run(tmp_path_factory, headline_cfg):
    """Full headline pipeline, run once per session (several minutes).

    Set NMR_PROBE_RUN_DIR to reuse an existing output directory.
    """
    reuse = os.environ.get("NMR_PROBE_RUN_DIR")
    out = Path(reuse) if reuse else tmp_path_factory.mktemp("headline")
    summaries = {}
    for name in ("propagate", "qfi-scan", "train", "test", "robustness", "measure", "fit"):
        path = out / name / "summary.json"
        if reuse and path.exists():
            summaries[name] = experiments.io.read_json(path)
        else:
            summaries[name] = experiments.RUNNERS[name](headline_cfg, out=out)
    return out, summaries


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
