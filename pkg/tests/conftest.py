import json

import numpy as np
import pytest

from foi.config import RunConfig
from foi.detector import DetectorSpec
from foi.synth import SynthConfig

# A physically slide-sized but low-resolution setup (4 um/px) so end-to-end
# runs take well under a second.
SMALL_SYNTH = dict(width=2048, height=1536, microns_per_pixel=4.0, cluster_sigma=200.0)
SMALL_DISC = 6.0


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_synth():
    return SynthConfig(**SMALL_SYNTH, seed=7)


@pytest.fixture
def small_cfg():
    return RunConfig(detector=DetectorSpec(disc_radius_px=SMALL_DISC), synth=SynthConfig(**SMALL_SYNTH, seed=7))


@pytest.fixture
def small_config_file(tmp_path):
    """Write a run-config JSON for the small setup and return its path."""

    def make(**extra):
        doc = {"detector": {"disc_radius_px": SMALL_DISC}, "synth": dict(SMALL_SYNTH, seed=7)}
        for key, value in extra.items():
            doc[key] = value
        path = tmp_path / "config.json"
        path.write_text(json.dumps(doc))
        return path

    return make


# -- acceptance summary ------------------------------------------------------

_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): exit criterion of the build")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = dict(item.user_properties).get("detail", "")
        _ACCEPTANCE.append((marker.args[0], marker.args[1], rep.outcome, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, outcome, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] AC{number:<2} {title}: {detail}")
