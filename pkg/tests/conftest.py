import os

import pytest
import torch
from hypothesis import HealthCheck, settings

from saltlab.denoiser import ModelConfig, TinyUNet, clone_model
from saltlab.schedule import build_schedule

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

TINY = ModelConfig(channels=(8, 16, 16), groups=4, embed_dim=16, time_dim=32, T=50)


def make_tiny(seed=0, dtype=None):
    torch.manual_seed(seed)
    return clone_model(TinyUNet(TINY), dtype)


@pytest.fixture(scope="session")
def tiny_model():
    return make_tiny()


@pytest.fixture(scope="session")
def tiny_model64():
    return make_tiny(dtype=torch.float64)


@pytest.fixture(scope="session")
def tiny_sched():
    return build_schedule(TINY.T)


# one summary line per acceptance criterion
_CRITERIA = {}


@pytest.fixture
def details(request):
    """Free-form measurements shown next to a criterion's verdict."""
    notes = []
    request.node.user_properties.append(("details", notes))
    return notes


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    num, title = mark.args
    notes = next((v for k, v in item.user_properties if k == "details"), [])
    prev = _CRITERIA.get((num, item.name))
    verdict = "PASS" if rep.passed else "FAIL"
    if prev and prev[1] == "FAIL":
        verdict = "FAIL"
    _CRITERIA[(num, item.name)] = (title, verdict, "; ".join(notes))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (num, name), (title, verdict, notes) in sorted(_CRITERIA.items()):
        line = f"criterion {num:>2} {verdict}  {title}"
        terminalreporter.write_line(line + (f"  [{notes}]" if notes else ""))
