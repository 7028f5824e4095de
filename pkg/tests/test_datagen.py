from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from cennet.causal.oracles import exact_joint, marginal
from cennet.datagen import (
    BUILTIN_MODELS,
    CATEGORY_TABLE,
    BayesNet,
    SyntheticSpec,
    build_candidates,
    emit_bn,
    generate,
    load_builtin,
    parse_bn,
    sample_bn,
    sample_codes,
)
from cennet.datagen.synthetic import additive_score, category_probability, nonadditive_branch
from cennet.errors import BnParseError, DataError
from cennet.store import save_dataset

TWO_NODE = """
# smallest useful network
network tiny;
variable A { states: a0, a1; }
variable B { states: b0, b1; }
probability ( A ) { table: 0.3, 0.7; }
probability ( B | A ) {
  (a0): 0.9, 0.1;
  (a1): 0.2, 0.8;
}
"""


def _chain(n_nodes=3, deterministic=False):
    names = [chr(ord("A") + i) for i in range(n_nodes)]
    states = {v: ("0", "1") for v in names}
    parents = {v: ((names[i - 1],) if i else ()) for i, v in enumerate(names)}
    cpts = {names[0]: np.array([0.5, 0.5])}
    for v in names[1:]:
        cpts[v] = np.array([[1.0, 0.0], [0.0, 1.0]]) if deterministic else np.array([[0.8, 0.2], [0.3, 0.7]])
    return BayesNet("chain", states, parents, cpts)


# synthetic generators


def test_additive_score_at_origin():
    assert additive_score(np.zeros((1, 10)))[0] == pytest.approx(1.0)


def test_additive_ground_truth_and_metadata():
    ds, gt = generate(SyntheticSpec("nonlinear-additive", 200, seed=42))
    assert gt.important_sets == (("X1",), ("X2",), ("X3",), ("X4",))
    assert gt.candidate_vars == tuple(f"X{i}" for i in range(1, 11))
    f = additive_score(np.column_stack([ds.columns[f"X{i}"] for i in range(1, 11)]))
    assert ds.meta["centering"] == pytest.approx(np.median(f))
    assert ds.names[-1] == "Y"


def test_generators_are_deterministic(tmp_path):
    for kind in ("nonlinear-additive", "nonlinear-nonadditive", "category"):
        a, _ = generate(SyntheticSpec(kind, 300, seed=42))
        b, _ = generate(SyntheticSpec(kind, 300, seed=42))
        save_dataset(a, tmp_path / f"{kind}-a")
        save_dataset(b, tmp_path / f"{kind}-b")
        assert (tmp_path / f"{kind}-a" / "data.csv").read_bytes() == (tmp_path / f"{kind}-b" / "data.csv").read_bytes()


def test_nonadditive_branches():
    assert nonadditive_branch(np.array([8.3, 5.0, 1.0, -1.0, -5.0, -9.0])).tolist() == [0, 1, 2, 3, 4, 5]
    ds, gt = generate(SyntheticSpec("nonlinear-nonadditive", 2000, seed=1))
    x1 = ds.columns["X1"]
    assert x1.min() >= -10 and x1.max() <= 10
    i_hi = int(np.flatnonzero(x1 > 7)[0])
    i_lo = int(np.flatnonzero(x1 < -7)[0])
    assert gt.set_for_row(i_hi) == ("X1", "X2")
    assert gt.set_for_row(i_lo) == ("X1", "X7")
    assert len(list(itertools.combinations(gt.candidate_vars, 2))) == 45


def test_category_table_values():
    assert category_probability(1, 0, 1) == pytest.approx(0.85)
    assert category_probability(1, 1, 1) == pytest.approx(0.20)
    assert category_probability(0, 0, 0) == pytest.approx(0.80)
    assert np.mean(list(CATEGORY_TABLE.values())) == pytest.approx(0.5)


def test_category_frequencies_within_three_sigma():
    ds, gt = generate(SyntheticSpec("category", 10000, seed=42))
    assert gt.important_sets == (("X1", "X2", "X3"),)
    x = np.column_stack([ds.columns[f"X{i}"].astype(int) for i in range(1, 4)])
    y = ds.labels()
    for cell, p in CATEGORY_TABLE.items():
        sel = np.all(x == np.array(cell), axis=1)
        n = sel.sum()
        assert abs(y[sel].mean() - p) <= 3 * np.sqrt(p * (1 - p) / n)
    for j in range(4, 11):  # noise columns are fair coins independent of the label rule
        v = ds.columns[f"X{j}"].astype(int)
        assert abs(v.mean() - 0.5) <= 3 * np.sqrt(0.25 / len(v))


@pytest.mark.parametrize("kind", ["nonlinear-additive", "nonlinear-nonadditive"])
def test_continuous_label_frequencies_by_bucket(kind):
    ds, _ = generate(SyntheticSpec(kind, 10000, seed=42))
    x = np.column_stack([ds.columns[f"X{i}"] for i in range(1, 11)])
    if kind == "nonlinear-additive":
        p = expit(additive_score(x) - ds.meta["centering"])
    else:
        from cennet.datagen.synthetic import NONADDITIVE_BRANCHES

        branch = nonadditive_branch(x[:, 0])
        logit = np.empty(len(x))
        with np.errstate(over="ignore"):
            for k, (_, partner, link) in enumerate(NONADDITIVE_BRANCHES):
                logit[branch == k] = link(x[branch == k, partner - 1])
        p = expit(logit)
    y = ds.labels()
    buckets = np.array_split(np.argsort(p, kind="stable"), 10)
    for idx in buckets:
        sd = np.sqrt(np.sum(p[idx] * (1 - p[idx]))) / len(idx)
        assert abs(y[idx].mean() - p[idx].mean()) <= 3 * sd + 1e-12


def test_spec_validation():
    with pytest.raises(DataError):
        SyntheticSpec("category", 0)
    with pytest.raises(DataError):
        SyntheticSpec("bogus", 10)


# parser


def test_parse_two_node():
    bn = parse_bn(TWO_NODE)
    assert bn.nodes == ["A", "B"]
    assert tuple(bn.parents["B"]) == ("A",)
    assert bn.cpts["B"][1].tolist() == [0.2, 0.8]


def test_parse_builtin_sizes():
    sizes = {name: len(load_builtin(name).nodes) for name in BUILTIN_MODELS}
    assert sizes["alarm"] == 37
    assert sizes["insurance"] == 27
    assert sizes["hailfinder"] == 56


def test_emit_parse_roundtrip():
    for name in BUILTIN_MODELS:
        bn = load_builtin(name)
        assert parse_bn(emit_bn(bn)) == bn
        assert emit_bn(parse_bn(emit_bn(bn))) == emit_bn(bn)


@pytest.mark.parametrize(
    "text, needle",
    [
        (TWO_NODE.replace("(a1): 0.2, 0.8;", "(a1): 0.5, 0.6;"), "B"),
        (TWO_NODE.replace("B | A", "B | Z"), "Z"),
        (TWO_NODE.replace("(a1): 0.2, 0.8;", ""), "a1"),
        (TWO_NODE.replace("states: a0, a1;", "states: a0 a1;"), "line 4"),
        (TWO_NODE + "variable A { states: x, y; }\n", "A"),
        (TWO_NODE.replace("table: 0.3, 0.7;", "table: 0.3, 0.2, 0.5;"), "A"),
    ],
)
def test_parse_errors(text, needle):
    with pytest.raises(BnParseError) as info:
        parse_bn(text)
    assert needle in str(info.value)
    assert "line" in str(info.value)


def test_row_sum_error_names_node():
    with pytest.raises(BnParseError, match="B"):
        parse_bn(TWO_NODE.replace("(a1): 0.2, 0.8;", "(a1): 0.5, 0.6;"))


def test_parse_cycle():
    text = """network cyc;
variable A { states: t, f; }
variable B { states: t, f; }
probability ( A | B ) { (t): 0.5, 0.5; (f): 0.5, 0.5; }
probability ( B | A ) { (t): 0.5, 0.5; (f): 0.5, 0.5; }
"""
    with pytest.raises(BnParseError, match="cycle"):
        parse_bn(text)


def test_parse_error_has_line_and_column():
    with pytest.raises(BnParseError) as info:
        parse_bn("network x;\nvariable A { states: t, f }\n")
    assert info.value.line == 2 and info.value.column is not None


# sampling


def test_root_frequency():
    bn = parse_bn(TWO_NODE)
    codes = sample_codes(bn, 100000, seed=42)
    assert abs(np.mean(codes["A"] == 0) - 0.3) <= 0.01


def test_deterministic_chain():
    bn = _chain(4, deterministic=True)
    codes = sample_codes(bn, 1000, seed=1)
    for a, b in zip(bn.nodes[:-1], bn.nodes[1:]):
        assert np.array_equal(codes[a], codes[b])


def test_sampling_deterministic():
    bn = load_builtin("insurance")
    a = sample_bn(bn, 500, 3, target="Airbag")
    b = sample_bn(bn, 500, 3, target="Airbag")
    for c in a.names:
        assert list(a.columns[c]) == list(b.columns[c])


def _random_bn(seed, n_nodes=5, max_states=3):
    rng = np.random.default_rng(seed)
    names = [f"V{i}" for i in range(n_nodes)]
    states = {v: tuple(str(s) for s in range(int(rng.integers(2, max_states + 1)))) for v in names}
    parents, cpts = {}, {}
    for i, v in enumerate(names):
        pool = names[:i]
        k = int(rng.integers(0, min(3, len(pool)) + 1))
        ps = tuple(sorted(rng.choice(pool, size=k, replace=False).tolist(), key=names.index)) if k else ()
        parents[v] = ps
        shape = tuple(len(states[p]) for p in ps) + (len(states[v]),)
        cpts[v] = rng.dirichlet(np.ones(len(states[v])), size=shape[:-1]) if ps else rng.dirichlet(np.ones(len(states[v])))
    return BayesNet(f"r{seed}", states, parents, cpts)


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 10_000))
def test_sampled_marginals_match_exact(seed):
    bn = _random_bn(seed)
    joint, names = exact_joint(bn)
    codes = sample_codes(bn, 100000, seed)
    for trio in itertools.combinations(names, 3):
        exact = marginal(joint, names, list(trio))
        flat = np.ravel_multi_index(tuple(codes[v] for v in trio), exact.shape)
        emp = np.bincount(flat, minlength=exact.size).reshape(exact.shape) / 100000
        assert 0.5 * np.abs(emp - exact).sum() <= 0.01


# candidates


def test_candidates_alarm_history():
    gt = build_candidates(load_builtin("alarm"), "HISTORY")
    assert gt.parents_of_target == ("LVFAILURE",)
    assert gt.important_sets == (("LVFAILURE",),)


def test_candidates_insurance_airbag():
    gt = build_candidates(load_builtin("insurance"), "Airbag")
    assert set(gt.parents_of_target) == {"VehicleYear", "MakeModel"}
    assert set(gt.important_sets[0]) == {"VehicleYear", "MakeModel"}
    assert "Airbag" not in gt.candidate_vars


def test_candidates_chain():
    gt = build_candidates(_chain(3), "C")
    assert set(gt.candidate_vars) == {"A", "B"}
    assert gt.parents_of_target == ("B",)


def test_candidates_explicit_and_errors():
    bn = load_builtin("insurance")
    gt = build_candidates(bn, "Airbag", explicit=["Age"])
    assert set(gt.candidate_vars) == {"Age", "VehicleYear", "MakeModel"}
    with pytest.raises(DataError):
        build_candidates(bn, "Age")  # three states
    with pytest.raises(DataError):
        build_candidates(bn, "Airbag", explicit=["Nope"])


def test_sample_bn_target_checks():
    bn = load_builtin("insurance")
    with pytest.raises(DataError):
        sample_bn(bn, 10, 1, target="Age")
    ds = sample_bn(bn, 10, 1, target="Airbag", columns=["Age"])
    assert ds.names == ["Age", "Airbag"] and ds.positive == "True"
