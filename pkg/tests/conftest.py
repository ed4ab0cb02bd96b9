import re

import numpy as np
import pytest
from hypothesis import settings

from adgsyn.config import ModelConfig

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def tiny_config(**overrides) -> ModelConfig:
    """A narrow model that keeps every layer present but runs in milliseconds."""
    base = dict(atom_dim=78, cell_dim=16, gat_heads=2, gat_head_dim=8, lstm_hidden=8,
                cell_hidden=(32, 16), ctx_dim=8, head_hidden=8)
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def tiny_cfg():
    return tiny_config()


# one summary line per acceptance criterion

_CRITERIA = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = (int(m.group(1)), m.group(2))
    if report.when == "call" or report.outcome != "passed":
        prev = _CRITERIA.get(key, "PASS")
        _CRITERIA[key] = "FAIL" if report.outcome == "failed" or prev == "FAIL" else (
            "SKIP" if report.outcome == "skipped" else prev)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (num, name), status in sorted(_CRITERIA.items()):
        terminalreporter.write_line(f"criterion {num:2d} {name.replace('_', ' ')}: {status}")
