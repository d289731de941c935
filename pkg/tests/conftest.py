import numpy as np
import pytest
import torch

from grnet.backbone import StagePlan

torch.set_num_threads(1)

TINY = StagePlan.tiny()


@pytest.fixture
def tiny_plan():
    return TINY


def central_difference(f, x, idx, h=1e-6):
    """Central finite difference of scalar ``f`` w.r.t. ``x.view(-1)[idx]`` (x modified in place)."""
    flat = x.data.view(-1)
    orig = flat[idx].item()
    flat[idx] = orig + h
    up = float(f())
    flat[idx] = orig - h
    down = float(f())
    flat[idx] = orig
    return (up - down) / (2 * h)


def rel_err(a, b, floor=1e-8):
    return abs(a - b) / max(abs(a), abs(b), floor)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
