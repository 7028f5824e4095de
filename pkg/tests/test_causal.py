from __future__ import annotations

import itertools
import json

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2_contingency

from cennet.causal import (
    CausalReport,
    conditional_entropy,
    d_separated,
    entropy,
    exact_joint,
    extract_ccv,
    g2_statistic,
    g2_test,
    global_explain,
    marginal,
    min_cond_entropy,
    skeleton_search,
    valid_supersets,
)
from cennet.causal.skeleton import Skeleton
from cennet.datagen import BayesNet, SyntheticSpec, generate, load_builtin, sample_codes
from cennet.errors import DataError
from cennet.mlp import TrainConfig, train
from cennet.store import split
from dags import random_bn


def table_columns(table):
    """Expand a contingency table of counts into two code columns."""
    a, b = [], []
    for (i, j), count in np.ndenumerate(np.asarray(table)):
        a += [i] * int(count)
        b += [j] * int(count)
    return np.array(a), np.array(b)


def test_g2_two_by_two():
    a, b = table_columns([[30, 10], [10, 30]])
    g2, dof = g2_statistic(a, b)
    expected = 2 * (2 * 30 * np.log(30 / 20) + 2 * 10 * np.log(10 / 20))
    assert g2 == pytest.approx(expected)
    assert g2 == pytest.approx(20.93, abs=0.005)
    assert dof == 1
    # scipy's likelihood-ratio statistic as an independent oracle
    stat, p, _, _ = chi2_contingency([[30, 10], [10, 30]], correction=False, lambda_="log-likelihood")
    assert g2 == pytest.approx(stat)
    assert g2_test(a, b).p_value == pytest.approx(p)


def test_g2_stratified_sums_strata():
    rng = np.random.default_rng(0)
    z = rng.integers(0, 3, 900)
    a = (z + rng.integers(0, 2, 900)) % 3
    b = rng.integers(0, 2, 900)
    total, dof = g2_statistic(a, b, [z])
    parts = [g2_statistic(a[z == k], b[z == k]) for k in range(3)]
    assert total == pytest.approx(sum(p[0] for p in parts))
    assert dof == sum(p[1] for p in parts)


def test_zero_dof_gives_p_one():
    a = np.zeros(50, dtype=int)
    b = np.arange(50) % 2
    res = g2_test(a, b)
    assert res.dof == 0 and res.p_value == 1.0
    assert res.independent and not res.informative


def test_copy_is_dependent():
    a = np.arange(300) % 3
    res = g2_test(a, a.copy())
    assert not res.independent and res.p_value < 1e-10


def test_null_calibration_small():
    rng = np.random.default_rng(11)
    rejections = sum(not g2_test(rng.integers(0, 3, 2000), rng.integers(0, 3, 2000)).independent
                     for _ in range(300))
    assert 0 <= rejections / 300 <= 0.04


def test_d_separation_examples():
    chain = {"A": (), "B": ("A",), "C": ("B",)}
    assert d_separated(chain, "A", "C", {"B"})
    assert not d_separated(chain, "A", "C")
    collider = {"A": (), "B": (), "C": ("A", "B")}
    assert d_separated(collider, "A", "B")
    assert not d_separated(collider, "A", "B", {"C"})
    desc = {"A": (), "B": (), "C": ("A", "B"), "D": ("C",)}
    assert not d_separated(desc, "A", "B", {"D"})
    alarm = load_builtin("alarm")
    assert not d_separated(alarm, "LVFAILURE", "HISTORY")


def test_d_separation_errors():
    g = {"A": (), "B": ("A",)}
    with pytest.raises(DataError):
        d_separated(g, "A", "Z")
    with pytest.raises(DataError):
        d_separated(g, "A", "A")
    with pytest.raises(DataError):
        d_separated(g, "A", "B", {"A"})


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 7))
def test_d_separation_matches_networkx(seed, n):
    bn = random_bn(seed, n, max_states=2, edge_prob=0.4)
    g = nx.DiGraph()
    g.add_nodes_from(bn.nodes)
    g.add_edges_from((p, v) for v in bn.nodes for p in bn.parents[v])
    check = getattr(nx, "is_d_separator", None) or nx.d_separated
    rng = np.random.default_rng(seed)
    for a, b in itertools.combinations(bn.nodes, 2):
        rest = [v for v in bn.nodes if v not in (a, b)]
        cond = {v for v in rest if rng.random() < 0.4}
        assert d_separated(bn, a, b, cond) == check(g, {a}, {b}, cond)


def test_entropy_basics():
    assert entropy([0.5, 0.5]) == pytest.approx(np.log(2))
    assert entropy([1.0, 0.0]) == 0.0
    joint = np.array([[0.25, 0.25], [0.25, 0.25]])
    assert conditional_entropy(joint, ["x", "y"], "x", ["y"]) == pytest.approx(np.log(2))
    assert marginal(joint, ["x", "y"], ["y"]).tolist() == [0.5, 0.5]


def test_min_cond_entropy_independent():
    joint = np.outer([0.3, 0.7], [0.6, 0.4])
    s, h = min_cond_entropy(joint, ["x", "y"], "x", [(), ("y",)])
    assert h == pytest.approx(entropy([0.3, 0.7]))
    assert s == frozenset()  # the tie goes to the smaller set


def test_min_cond_entropy_deterministic_parent():
    joint = np.array([[0.5, 0.0], [0.0, 0.5]])
    s, h = min_cond_entropy(joint, ["p", "x"], "x", [(), ("p",)])
    assert s == frozenset({"p"}) and h == pytest.approx(0.0, abs=1e-12)


def test_min_cond_entropy_rejects_unnormalized():
    with pytest.raises(DataError):
        min_cond_entropy(np.array([[0.5, 0.5], [0.5, 0.5]]), ["a", "b"], "a", [()])


@pytest.mark.parametrize("seed", range(10))
def test_parents_minimize_conditional_entropy(seed):
    bn = random_bn(seed, 5)
    joint, names = exact_joint(bn)
    for x in bn.nodes:
        _, h = min_cond_entropy(joint, names, x, valid_supersets(bn, x))
        assert h == pytest.approx(conditional_entropy(joint, names, x, bn.parents[x]), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_conditioning_never_increases_entropy(seed):
    bn = random_bn(seed, 4)
    joint, names = exact_joint(bn)
    x, *rest = names
    for k in range(len(rest) + 1):
        for s in itertools.combinations(rest, k):
            for t in rest:
                assert (conditional_entropy(joint, names, x, set(s) | {t})
                        <= conditional_entropy(joint, names, x, s) + 1e-12)


def _chain_bn(strength=0.85):
    cpt = np.array([[strength, 1 - strength], [1 - strength, strength]])
    return BayesNet("chain", {v: ("0", "1") for v in "ABT"},
                    {"A": (), "B": ("A",), "T": ("B",)},
                    {"A": np.array([0.5, 0.5]), "B": cpt, "T": cpt})


def test_skeleton_chain():
    data = sample_codes(_chain_bn(), 10_000, seed=1)
    skel = skeleton_search(data, "T", ["A", "B"])
    assert skel.adjacent == ("B",)
    assert skel.sepset("T", "A") == ("B",)


def test_skeleton_pseudo_correlation():
    cpt = np.array([[0.85, 0.15], [0.15, 0.85]])
    bn = BayesNet("fork", {v: ("0", "1") for v in "ABT"}, {"A": (), "B": ("A",), "T": ("A",)},
                  {"A": np.array([0.5, 0.5]), "B": cpt, "T": cpt})
    data = sample_codes(bn, 10_000, seed=2)
    skel = skeleton_search(data, "T", ["A", "B"])
    assert skel.adjacent == ("A",)
    assert skel.sepset("T", "B") == ("A",)


def test_skeleton_noise_and_constant_target():
    rng = np.random.default_rng(3)
    data = {"T": rng.integers(0, 2, 5000), "N": rng.integers(0, 3, 5000)}
    skel = skeleton_search(data, "T", ["N"])
    assert skel.adjacent == () and skel.sepset("T", "N") == ()
    data["T"] = np.zeros(5000, dtype=int)
    skel = skeleton_search(data, "T", ["N"])
    assert skel.adjacent == () and skel.sepset("T", "N") == ()


def test_extra_never_conditions():
    # Y is a child of both the neuron and X; conditioning on it would open a path
    rng = np.random.default_rng(4)
    x = rng.integers(0, 2, 10_000)
    n = rng.integers(0, 2, 10_000)
    y = (x ^ n) ^ (rng.random(10_000) < 0.05)
    skel = skeleton_search({"n": n, "X": x, "Y": y}, "n", ["X"], extra=("Y",))
    assert "X" not in skel.adjacent
    for s in skel.sepsets.values():
        assert "Y" not in s


def test_skeleton_validation():
    with pytest.raises(DataError):
        skeleton_search({"T": np.zeros(3)}, "T", ["A"])
    with pytest.raises(DataError):
        skeleton_search({"T": np.zeros(3)}, "T", [], max_cond=-1)
    with pytest.raises(DataError):
        skeleton_search({"T": np.zeros(3)}, "T", [], pool="bogus")


def test_extract_ccv():
    skel = Skeleton(target="n1", nodes=("n1", "X2", "X5", "Y"), adjacent=("X2", "X5", "Y"))
    assert extract_ccv(skel, ["X1", "X2", "X5"]) == ("X2", "X5")
    assert extract_ccv(Skeleton(target="n1", nodes=("n1",), adjacent=())) == ()


def test_skeleton_json_roundtrip():
    data = sample_codes(_chain_bn(), 5000, seed=5)
    skel = skeleton_search(data, "T", ["A", "B"])
    back = Skeleton.from_json(json.loads(json.dumps(skel.to_json())))
    assert back == skel


def test_global_explain_on_category(category_pipeline):
    report = category_pipeline["report"]
    assert len(report.ccv) == 5
    for ccv in report.ccv.values():
        assert set(ccv) <= set(report.features)
    assert {"X1", "X2", "X3"} <= set(report.union())
    doc = json.loads(json.dumps(report.to_json()))
    assert CausalReport.from_json(doc).to_json() == report.to_json()


def test_global_explain_is_deterministic(category_pipeline):
    p = category_pipeline
    again = global_explain(p["model"], p["ds"])
    assert json.dumps(again.to_json()) == json.dumps(p["report"].to_json())


def test_global_explain_name_clash():
    ds, _ = generate(SyntheticSpec("category", 500, seed=1))
    ds = split(ds, seed=1)
    ds.columns["n1"] = ds.columns.pop("X1")
    ds.kinds["n1"] = ds.kinds.pop("X1")
    if "X1" in ds.states:
        ds.states["n1"] = ds.states.pop("X1")
    model = train(ds, TrainConfig(epochs=1))
    with pytest.raises(DataError):
        global_explain(model, ds)


@pytest.mark.slow
def test_category_union_over_seeds():
    hits = 0
    for seed in range(10):
        ds, _ = generate(SyntheticSpec("category", 10_000, seed=seed))
        ds = split(ds, seed=seed)
        model = train(ds, TrainConfig(epochs=20, seed=seed))
        hits += {"X1", "X2", "X3"} <= set(global_explain(model, ds).union())
    assert hits >= 9
