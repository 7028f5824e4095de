from __future__ import annotations

import json
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom, ttest_ind

from cennet.datagen.synthetic import GroundTruth
from cennet.errors import DataError
from cennet.harness import (
    BaselineConfig,
    baseline_local_linear,
    combo_from_singles,
    combo_keys,
    competition_ranks,
    mcnemar,
    rank_combo,
    rank_single,
    welch_t,
)
from cennet.harness.experiment import StageError, resolve_config, run_experiment, write_outputs

CANDS = tuple(f"X{i}" for i in range(1, 11))


def test_competition_ranks():
    assert competition_ranks([3.0, 1.0, 3.0, 2.0]).tolist() == [[1, 4, 1, 3]]


def test_rank_single_perfect():
    gt = GroundTruth(important_sets=(("X1",),), candidate_vars=CANDS)
    scores = np.tile(np.arange(10, 0, -1, dtype=float), (20, 1))
    res = rank_single(scores, gt)
    assert res.mean == 1.0 and res.top1_ratio == 1.0 and res.top5_ratio == 1.0


def test_rank_single_random_is_middle():
    rng = np.random.default_rng(5)
    gt = GroundTruth(important_sets=(("X4",),), candidate_vars=CANDS)
    res = rank_single(rng.random((10_000, 10)), gt)
    assert res.mean == pytest.approx(5.5, abs=0.1)
    assert 1 <= res.per_row.min() and res.per_row.max() <= 10


def test_rank_single_missing_importance():
    gt = GroundTruth(important_sets=(("X1",),), candidate_vars=("X1", "X2"))
    with pytest.raises(DataError):
        rank_single({"X1": np.ones(3)}, gt)


def test_rank_single_averages_variables():
    gt = GroundTruth(important_sets=(("X1", "X2"),), candidate_vars=("X1", "X2", "X3"))
    res = rank_single(np.array([[3.0, 1.0, 2.0]]), gt)
    assert res.per_row.tolist() == [2.0]  # ranks 1 and 3
    assert res.top1_ratio == 0.5


def test_rank_combo_counts_and_perfect():
    gt = GroundTruth(important_sets=(("X1", "X2"),), candidate_vars=CANDS)
    keys = combo_keys(CANDS, 2)
    assert len(keys) == comb(10, 2) == 45
    scores = {k: np.full(4, 10.0 if k == ("X1", "X2") else 1.0) for k in keys}
    res = rank_combo(scores, gt, 2)
    assert res.mean == 1.0 and res.top1_ratio == 1.0 and res.n_candidates == 45


def test_rank_combo_random_top5():
    rng = np.random.default_rng(6)
    gt = GroundTruth(important_sets=(("X2", "X5"),), candidate_vars=CANDS)
    res = rank_combo(rng.random((20_000, 45)), gt, 2)
    assert res.top5_ratio == pytest.approx(5 / 45, abs=0.01)


def test_rank_combo_wrong_size():
    gt = GroundTruth(important_sets=(("X1", "X2", "X3"),), candidate_vars=CANDS)
    with pytest.raises(DataError):
        rank_combo(np.zeros((1, 45)), gt, 2)


def test_combo_from_singles():
    summed = combo_from_singles(np.array([[1.0, 2.0, 4.0]]), ["A", "B", "C"], 2)
    assert {k: v.tolist() for k, v in summed.items()} == {("A", "B"): [3.0], ("A", "C"): [5.0], ("B", "C"): [6.0]}


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-3, 1e3))
def test_ranking_is_scale_invariant(seed, factor):
    rng = np.random.default_rng(seed)
    gt = GroundTruth(important_sets=(("X1", "X3"),), candidate_vars=CANDS)
    single = rng.integers(0, 5, size=(30, 10)).astype(float)
    assert np.array_equal(rank_single(single, gt).per_row, rank_single(single * factor, gt).per_row)
    pairs = rng.integers(0, 5, size=(30, 45)).astype(float)
    assert np.array_equal(rank_combo(pairs, gt, 2).per_row, rank_combo(pairs * factor, gt, 2).per_row)


def test_baseline_recovers_linear_model():
    true = np.array([2.0, -1.0, 0.5, 0.0, 3.0])
    row = np.array([0.3, -0.2, 1.0, 0.0, 0.5])
    coef = baseline_local_linear(lambda x: x @ true + 0.7, row, BaselineConfig(ridge=0.0))
    nz = true != 0
    assert np.allclose(coef[nz] / np.abs(true[nz]), 1.0, atol=0.1)
    assert coef[~nz].max() < 0.1 * np.abs(true).max()
    # the default ridge keeps the proportions
    coef = baseline_local_linear(lambda x: x @ true, row)
    ratio = coef[nz] / np.abs(true[nz])
    assert np.allclose(ratio / ratio.mean(), 1.0, atol=0.1)


def test_baseline_constant_model_and_groups():
    coef = baseline_local_linear(lambda x: np.full(len(x), 0.4), np.zeros(4))
    assert np.allclose(coef, 0.0, atol=1e-12)
    grouped = baseline_local_linear(lambda x: 2 * x[:, 0] + x[:, 1] + x[:, 2], np.zeros(3),
                                    BaselineConfig(ridge=0.0), groups={"a": [0], "bc": [1, 2]})
    assert grouped["a"] == pytest.approx(2.0, rel=0.05)
    assert grouped["bc"] == pytest.approx(2.0, rel=0.05)


def test_baseline_determinism():
    f = lambda x: np.tanh(x).sum(axis=1)  # noqa: E731
    row = np.array([0.1, 0.2, -0.3])
    a = baseline_local_linear(f, row, row_id=3)
    b = baseline_local_linear(f, row, row_id=3)
    c = baseline_local_linear(f, row, row_id=4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    with pytest.raises(DataError):
        BaselineConfig(n_perturbations=5)


def test_welch_identical_and_reference():
    a = np.array([1.0, 2.0, 3.0, 4.0])
    assert welch_t(a, a.copy()) == pytest.approx(1.0)
    assert welch_t([2.0, 2.0], [2.0, 2.0]) == 1.0
    rng = np.random.default_rng(0)
    x, y = rng.normal(0, 1, 40), rng.normal(0.5, 2, 25)
    assert welch_t(x, y) == pytest.approx(ttest_ind(x, y, equal_var=False).pvalue)
    with pytest.raises(DataError):
        welch_t([1.0], [1.0, 2.0])


def test_mcnemar_exact_branch():
    oracle = 2 * sum(binom.pmf(k, 20, 0.5) for k in range(15, 21))
    assert mcnemar(15, 5) == pytest.approx(oracle)
    assert mcnemar(15, 5) == pytest.approx(0.0414, abs=5e-5)
    assert mcnemar(0, 0) == 1.0
    assert mcnemar(5, 5) == pytest.approx(1.0)


def test_mcnemar_chi2_branch():
    from scipy.stats import chi2
    stat = (abs(30 - 10) - 1) ** 2 / 40
    assert mcnemar(30, 10) == pytest.approx(chi2.sf(stat, 1))


SMALL = {
    "dataset": {"kind": "category", "n": 1500, "seed": 3},
    "train": {"epochs": 4, "seed": 3},
    "eval": {"combo_size": 3, "test_rows": 40, "baseline": {"n_perturbations": 50}},
}


def test_run_experiment_report_shape(tmp_path):
    result = run_experiment(SMALL)
    doc = result["report"]
    for meth in ("cennet", "baseline"):
        for lvl in ("single", "combo"):
            r = doc["results"][meth][lvl]
            assert 1 <= r["mean"] <= r["n_candidates"]
            assert len(r["per_row"]) == 40
    assert doc["results"]["cennet"]["combo"]["n_candidates"] == 120
    assert doc["dataset"]["important_sets"] == [["X1", "X2", "X3"]]
    assert set(doc["comparison"]["combo"]) >= {"welch_p", "mcnemar_top1_p"}
    assert set(result["timings"]) >= {"generate", "train", "discover", "cache", "explain"}
    paths = write_outputs(result, tmp_path / "a")
    assert all(p.exists() for p in paths)
    write_outputs(run_experiment(SMALL), tmp_path / "b")
    for name in ("report.json", "explanations.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    json.loads((tmp_path / "a" / "report.json").read_text())


def test_stage_errors_are_tagged():
    bad = {"dataset": {"kind": "category", "n": 200, "seed": 1}, "split_ratios": [0.5, 0.5, 0.0]}
    with pytest.raises(StageError) as info:
        run_experiment(bad)
    assert info.value.stage == "generate"


def test_config_validation():
    with pytest.raises(DataError):
        resolve_config({"dataset": {}})
    with pytest.raises(DataError):
        resolve_config({"dataset": {"bn_model": "alarm"}})
    with pytest.raises(DataError):
        resolve_config({"dataset": {"kind": "category"}, "bogus": {}})
    cfg = resolve_config({"dataset": {"bn_model": "insurance", "target": "Airbag"}})
    assert cfg["split_ratios"] == [0.9, 0.05, 0.05]


def test_rank_empty_rows():
    gt = GroundTruth(important_sets=(("X1",),), candidate_vars=CANDS)
    with pytest.raises(DataError):
        rank_single(np.zeros((0, 10)), gt)
