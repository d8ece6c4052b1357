from __future__ import annotations

from collections import defaultdict

import numpy as np
import pytest

from mob.data import Dataset, TargetColumn, TargetKind

_CRITERIA = {
    1: "metric oracles",
    2: "boosting vs least squares",
    3: "importance telescoping",
    4: "early stopping",
    5: "out-of-fold purity",
    6: "synthetic dependency exploitation",
    7: "desk-scale reproduction (andro, slump)",
    8: "benchmark determinism",
    9: "report layer",
}
_outcomes: dict[int, list[str]] = defaultdict(list)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _outcomes[marker.args[0]].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        results = _outcomes[n]
        if "failed" in results:
            status = "FAIL"
        elif all(r == "skipped" for r in results):
            status = "SKIP"
        elif "skipped" in results:
            status = "PASS (partly skipped)"
        else:
            status = "PASS"
        terminalreporter.write_line(f"criterion {n} [{_CRITERIA.get(n, '')}]: {status}")


def make_dataset(n=40, d=4, kinds=("regression", "regression"), seed=0, name="synthetic",
                 categorical=False) -> Dataset:
    """Random dataset whose targets depend on the first features."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    levels = [None] * d
    if categorical:
        X[:, -1] = rng.integers(0, 3, n)
        levels[-1] = ("a", "b", "c")
    signal = X[:, 0] + 0.5 * X[:, 1]
    targets = []
    for j, kind in enumerate(kinds):
        kind = TargetKind.parse(kind)
        noisy = signal * (1 + 0.3 * j) + rng.normal(0, 0.5, n)
        values = (noisy > 0).astype(float) if kind is TargetKind.BINARY else noisy
        targets.append(TargetColumn(f"t{j + 1}", kind, values))
    return Dataset(X, [f"x{p}" for p in range(d)], targets, levels, name)


@pytest.fixture
def small_dataset():
    return make_dataset()
