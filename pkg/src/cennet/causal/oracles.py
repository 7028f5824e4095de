"""Exact reference computations: d-separation and entropies of explicit joints."""

from __future__ import annotations

import itertools
import string
from collections import deque
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..errors import DataError


def _parent_map(graph) -> Mapping[str, Sequence[str]]:
    return graph.parents if hasattr(graph, "parents") and hasattr(graph, "cpts") else graph


def d_separated(graph, a: str, b: str, cond: Iterable[str] = ()) -> bool:
    """True when every path between ``a`` and ``b`` is blocked by ``cond``.

    ``graph`` is a BayesNet or a mapping node -> parents. Uses the
    reachability ("Bayes ball") traversal over (node, direction) states.
    """
    parents = _parent_map(graph)
    cond = set(cond)
    for v in (a, b, *cond):
        if v not in parents:
            raise DataError(f"unknown node {v!r}")
    if a == b:
        raise DataError("d-separation needs two distinct nodes")
    if a in cond or b in cond:
        raise DataError("conditioning set must exclude the queried nodes")
    children: dict[str, list[str]] = {v: [] for v in parents}
    for v, ps in parents.items():
        for p in ps:
            children[p].append(v)

    # ancestors of the conditioning set (inclusive): colliders there are open
    open_colliders = set(cond)
    stack = list(cond)
    while stack:
        for p in parents[stack.pop()]:
            if p not in open_colliders:
                open_colliders.add(p)
                stack.append(p)

    seen = set()
    queue = deque([(a, "up")])
    while queue:
        node, direction = queue.popleft()
        if (node, direction) in seen:
            continue
        seen.add((node, direction))
        if node == b:
            return False
        if direction == "up" and node not in cond:
            queue.extend((p, "up") for p in parents[node])
            queue.extend((c, "down") for c in children[node])
        elif direction == "down":
            if node not in cond:
                queue.extend((c, "down") for c in children[node])
            if node in open_colliders:
                queue.extend((p, "up") for p in parents[node])
    return True


def entropy(p) -> float:
    """Shannon entropy in nats of a probability array (any shape)."""
    p = np.asarray(p, dtype=np.float64).ravel()
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def _check_joint(joint: np.ndarray, names: Sequence[str]) -> None:
    if joint.ndim != len(names):
        raise DataError("joint must have one axis per variable name")
    if (joint < 0).any() or abs(joint.sum() - 1.0) > 1e-9:
        raise DataError("joint distribution is not normalized")


def marginal(joint: np.ndarray, names: Sequence[str], keep: Sequence[str]) -> np.ndarray:
    """Marginal over ``keep`` with axes in the order given."""
    names = list(names)
    drop = tuple(i for i, v in enumerate(names) if v not in keep)
    m = joint.sum(axis=drop)
    remaining = [v for v in names if v in keep]
    return np.transpose(m, [remaining.index(v) for v in keep])


def conditional_entropy(joint: np.ndarray, names: Sequence[str], x: str, given: Iterable[str]) -> float:
    """H(x | given) = H(x, given) - H(given), in nats."""
    given = [v for v in names if v in set(given)]
    return entropy(marginal(joint, names, [x] + given)) - entropy(marginal(joint, names, given))


def min_cond_entropy(joint: np.ndarray, names: Sequence[str], x: str,
                     allowed: Iterable[Iterable[str]], tol: float = 1e-12) -> tuple[frozenset, float]:
    """Exhaustive minimum of H(x|S) over the allowed conditioning sets.

    Ties (within ``tol`` nats) go to the smaller set, then to the
    lexicographically first.
    """
    joint = np.asarray(joint, dtype=np.float64)
    _check_joint(joint, names)
    scored = [(conditional_entropy(joint, names, x, s), frozenset(s)) for s in allowed]
    if not scored:
        raise DataError("no allowed conditioning sets")
    low = min(h for h, _ in scored)
    h, s = min(((h, s) for h, s in scored if h <= low + tol), key=lambda hs: (len(hs[1]), sorted(hs[1])))
    return s, h


def exact_joint(bn) -> tuple[np.ndarray, list[str]]:
    """Full joint of a small BayesNet as a dense array (axes in node order)."""
    names = bn.nodes
    if len(names) > 26:
        raise DataError("exact joint limited to 26 variables")
    letters = dict(zip(names, string.ascii_letters))
    operands, specs = [], []
    for v in names:
        operands.append(bn.cpts[v])
        specs.append("".join(letters[p] for p in bn.parents[v]) + letters[v])
    out = "".join(letters[v] for v in names)
    return np.einsum(",".join(specs) + "->" + out, *operands), names


def valid_supersets(bn, x: str) -> list[frozenset]:
    """Sets S with PA(x) ⊆ S ⊆ V\\{x} and x not an ancestor of any member of S."""
    pa = set(bn.parents[x])
    free = [v for v in bn.nodes if v != x and v not in pa and v not in bn.descendants(x)]
    return [frozenset(pa | set(extra)) for k in range(len(free) + 1)
            for extra in itertools.combinations(free, k)]
