"""The three synthetic benchmarks: non-linear additive, non-linear non-additive, category."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.special import expit

from ..errors import DataError
from ..store import CATEGORICAL, NUMERIC, TabularDataset

KINDS = ("nonlinear-additive", "nonlinear-nonadditive", "category")

# P(Y=1 | X1, X2, X3)
CATEGORY_TABLE: dict[tuple[int, int, int], float] = {
    (0, 0, 0): 0.80,
    (0, 1, 0): 0.70,
    (0, 1, 1): 0.20,
    (0, 0, 1): 0.25,
    (1, 0, 0): 0.20,
    (1, 1, 0): 0.80,
    (1, 0, 1): 0.85,
    (1, 1, 1): 0.20,
}

# (lower threshold on X1, partner variable index, link) checked top-down
NONADDITIVE_BRANCHES = (
    (7.0, 2, np.sin),
    (4.0, 3, np.cos),
    (0.0, 4, np.tan),
    (-4.0, 5, lambda v: np.exp(2.0 * v)),
    (-7.0, 6, np.tanh),
    (-np.inf, 7, np.sin),
)


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str
    n_samples: int
    seed: int = 42
    n_features: int = 10

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown synthetic kind {self.kind!r}; expected one of {KINDS}")
        if int(self.n_samples) < 1:
            raise DataError("n_samples must be >= 1")
        min_features = {"nonlinear-additive": 4, "nonlinear-nonadditive": 7, "category": 3}[self.kind]
        if self.n_features < min_features:
            raise DataError(f"{self.kind} needs at least {min_features} features")


@dataclass(frozen=True)
class GroundTruth:
    """Variables known to drive the target.

    ``row_set`` gates the truth per row (index into ``important_sets``); when it
    is ``None`` every important set applies to every row.
    """

    important_sets: tuple[tuple[str, ...], ...]
    candidate_vars: tuple[str, ...]
    parents_of_target: tuple[str, ...] = ()
    row_set: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.important_sets:
            raise DataError("ground truth needs at least one important set")
        cands = set(self.candidate_vars)
        for s in self.important_sets:
            if not set(s) <= cands:
                raise DataError(f"important set {s} not within candidate variables")

    def set_for_row(self, i: int) -> tuple[str, ...]:
        if self.row_set is not None:
            return self.important_sets[int(self.row_set[i])]
        merged = {v for s in self.important_sets for v in s}
        return tuple(v for v in self.candidate_vars if v in merged)

    def restrict(self, rows: np.ndarray) -> "GroundTruth":
        if self.row_set is None:
            return self
        return GroundTruth(self.important_sets, self.candidate_vars, self.parents_of_target,
                           self.row_set[rows])

    def to_json(self) -> dict:
        return {
            "important_sets": [list(s) for s in self.important_sets],
            "candidate_vars": list(self.candidate_vars),
            "parents_of_target": list(self.parents_of_target),
            "row_set": None if self.row_set is None else self.row_set.tolist(),
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "GroundTruth":
        row_set = doc.get("row_set")
        return cls(
            important_sets=tuple(tuple(s) for s in doc["important_sets"]),
            candidate_vars=tuple(doc["candidate_vars"]),
            parents_of_target=tuple(doc.get("parents_of_target", ())),
            row_set=None if row_set is None else np.asarray(row_set, dtype=np.int64),
        )


def additive_score(x: np.ndarray) -> np.ndarray:
    """sin(0.2 x1) + 0.1|x2| + x3 + exp(-x4) over the first four columns."""
    return np.sin(0.2 * x[:, 0]) + 0.1 * np.abs(x[:, 1]) + x[:, 2] + np.exp(-x[:, 3])


def nonadditive_branch(x1: np.ndarray) -> np.ndarray:
    """Index of the active branch in NONADDITIVE_BRANCHES for each X1 value."""
    out = np.full(len(x1), len(NONADDITIVE_BRANCHES) - 1, dtype=np.int64)
    for k in reversed(range(len(NONADDITIVE_BRANCHES) - 1)):
        out[x1 > NONADDITIVE_BRANCHES[k][0]] = k
    return out


def category_probability(x1, x2, x3) -> np.ndarray:
    keys = np.asarray(x1) * 4 + np.asarray(x2) * 2 + np.asarray(x3)
    lookup = np.array([CATEGORY_TABLE[(k >> 2 & 1, k >> 1 & 1, k & 1)] for k in range(8)])
    return lookup[keys]


def _names(n: int) -> list[str]:
    return [f"X{i}" for i in range(1, n + 1)]


def _assemble(features: dict[str, np.ndarray], kind: str, y: np.ndarray, info: dict,
              truth: GroundTruth) -> tuple[TabularDataset, GroundTruth]:
    columns = dict(features)
    columns["Y"] = np.where(y, "1", "0").astype(object)
    kinds = {name: kind for name in features}
    kinds["Y"] = CATEGORICAL
    states = {"Y": ("0", "1")}
    if kind == CATEGORICAL:
        states.update({name: ("0", "1") for name in features})
    info = dict(info, ground_truth=truth.to_json())
    ds = TabularDataset(columns=columns, kinds=kinds, target="Y", positive="1",
                        states=states, meta=info)
    return ds, truth


def gen_nonlinear_additive(spec: SyntheticSpec) -> tuple[TabularDataset, GroundTruth]:
    if spec.kind != "nonlinear-additive":
        raise DataError(f"expected kind nonlinear-additive, got {spec.kind}")
    rng = np.random.default_rng(spec.seed)
    x = rng.standard_normal((spec.n_samples, spec.n_features))
    f = additive_score(x)
    centre = float(np.median(f))
    y = rng.random(spec.n_samples) < expit(f - centre)
    names = _names(spec.n_features)
    truth = GroundTruth(important_sets=tuple((n,) for n in names[:4]), candidate_vars=tuple(names))
    info = {"generator": spec.kind, "seed": spec.seed, "n_samples": spec.n_samples, "centering": centre}
    return _assemble(dict(zip(names, x.T.copy())), NUMERIC, y, info, truth)


def gen_nonlinear_nonadditive(spec: SyntheticSpec) -> tuple[TabularDataset, GroundTruth]:
    if spec.kind != "nonlinear-nonadditive":
        raise DataError(f"expected kind nonlinear-nonadditive, got {spec.kind}")
    rng = np.random.default_rng(spec.seed)
    n = spec.n_samples
    x = np.empty((n, spec.n_features))
    x[:, 0] = rng.uniform(-10.0, 10.0, n)
    x[:, 1:] = rng.standard_normal((n, spec.n_features - 1))
    branch = nonadditive_branch(x[:, 0])
    logit = np.empty(n)
    with np.errstate(over="ignore"):
        for k, (_, partner, link) in enumerate(NONADDITIVE_BRANCHES):
            sel = branch == k
            logit[sel] = link(x[sel, partner - 1])
    y = rng.random(n) < expit(logit)
    names = _names(spec.n_features)
    pairs = tuple(("X1", f"X{partner}") for _, partner, _ in NONADDITIVE_BRANCHES)
    truth = GroundTruth(important_sets=pairs, candidate_vars=tuple(names), row_set=branch)
    info = {"generator": spec.kind, "seed": spec.seed, "n_samples": n, "centering": 0.0}
    return _assemble(dict(zip(names, x.T.copy())), NUMERIC, y, info, truth)


def gen_category(spec: SyntheticSpec) -> tuple[TabularDataset, GroundTruth]:
    if spec.kind != "category":
        raise DataError(f"expected kind category, got {spec.kind}")
    rng = np.random.default_rng(spec.seed)
    x = rng.integers(0, 2, size=(spec.n_samples, spec.n_features))
    y = rng.random(spec.n_samples) < category_probability(x[:, 0], x[:, 1], x[:, 2])
    names = _names(spec.n_features)
    truth = GroundTruth(important_sets=(tuple(names[:3]),), candidate_vars=tuple(names))
    info = {"generator": spec.kind, "seed": spec.seed, "n_samples": spec.n_samples}
    features = {name: x[:, j].astype(str).astype(object) for j, name in enumerate(names)}
    return _assemble(features, CATEGORICAL, y, info, truth)


def generate(spec: SyntheticSpec) -> tuple[TabularDataset, GroundTruth]:
    return {
        "nonlinear-additive": gen_nonlinear_additive,
        "nonlinear-nonadditive": gen_nonlinear_nonadditive,
        "category": gen_category,
    }[spec.kind](spec)
