import numpy as np
import pytest

from scsa.semantics import LabelMap
from scsa.tensors import FeatureMap

_acceptance_lines = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_labels(rng, h, w, n):
    """Random label map in which every label 0..n-1 occurs."""
    flat = rng.integers(0, n, h * w)
    flat[rng.choice(h * w, n, replace=False)] = np.arange(n)
    return LabelMap(flat.reshape(h, w), n)


def random_features(rng, c, h, w, scale=1.0):
    return FeatureMap(rng.standard_normal((c, h, w)) * scale)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and item.get_closest_marker("acceptance"):
        doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
        if hasattr(item, "callspec"):
            doc += f" [{item.callspec.id}]"
        _acceptance_lines.append(f"{'PASS' if report.passed else 'FAIL'}  {doc}")


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
