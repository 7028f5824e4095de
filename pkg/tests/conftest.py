from __future__ import annotations

import numpy as np
import pytest

from cennet.causal import global_explain
from cennet.datagen import SyntheticSpec, generate
from cennet.explain import ExplainConfig, build_cache
from cennet.mlp import TrainConfig, train
from cennet.store import split


@pytest.fixture(scope="session")
def category_pipeline():
    """Small trained Category pipeline shared by the explain and harness tests."""
    ds, gt = generate(SyntheticSpec("category", 3000, seed=7))
    ds = split(ds, (0.8, 0.1, 0.1), seed=7)
    model = train(ds, TrainConfig(epochs=15, seed=7))
    report = global_explain(model, ds)
    cache = build_cache(model, report, ds, ExplainConfig(m=3))
    return {"ds": ds, "gt": gt, "model": model, "report": report, "cache": cache}


@pytest.fixture
def rng():
    return np.random.default_rng(0)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for the terminal summary, then assert."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
