from __future__ import annotations

import pytest

from beamrace import config as C
from beamrace.scanout import ScanSpec, hz_to_period_ns, ms_to_ns

FRAME_72 = hz_to_period_ns(72)


@pytest.fixture(scope="session")
def camsicle():
    return C.load_config("camsicle72")


@pytest.fixture(scope="session")
def testbed():
    return C.load_config("testbed")


@pytest.fixture(scope="session")
def preset_pipeline(camsicle):
    """Preset pipeline at the reduced 346x375 raster."""
    return C.pipeline_config(camsicle)


@pytest.fixture(scope="session")
def full_mapping(camsicle):
    return C.mapping(camsicle, downsample=1)


def display_spec(**kw):
    args = dict(role="display", rows=3000, frame_period=FRAME_72, integration=ms_to_ns(1))
    args.update(kw)
    return ScanSpec(**args)


def camera_spec(**kw):
    args = dict(role="camera", rows=3160, frame_period=FRAME_72, integration=ms_to_ns(1))
    args.update(kw)
    return ScanSpec(**args)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
