import copy

import pytest

from episteer.data import synth_generate
from episteer.source_model import SourceConfig, SourceModel, pretrain_source


@pytest.fixture(scope="session")
def season():
    return synth_generate(0)


@pytest.fixture(scope="session")
def _pretrained(season):
    src = SourceModel(SourceConfig(seed=0))
    trace = pretrain_source(src, season.wili)
    return src, trace


@pytest.fixture
def pretrained(_pretrained):
    """A fresh copy of the session's pretrained source model."""
    return copy.deepcopy(_pretrained[0])


@pytest.fixture(scope="session")
def pretrain_trace(_pretrained):
    return _pretrained[1]


# criterion number -> (passed, detail); filled by the acceptance suite
ACCEPTANCE = {}


def record(criterion, passed, detail=""):
    ACCEPTANCE[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
