"""Target-restricted PC-stable adjacency search."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from ..errors import DataError
from .citest import g2_test

POOLS = ("candidates", "adjacent")


@dataclass
class Skeleton:
    """Edges incident to ``target`` and the separating sets of removed edges."""

    target: str
    nodes: tuple[str, ...]
    adjacent: tuple[str, ...]
    sepsets: dict[frozenset, tuple[str, ...]] = field(default_factory=dict)
    n_tests: int = 0

    @property
    def adjacency(self) -> dict[str, set[str]]:
        adj = {v: set() for v in self.nodes}
        for v in self.adjacent:
            adj[self.target].add(v)
            adj[v].add(self.target)
        return adj

    def sepset(self, a: str, b: str) -> tuple[str, ...] | None:
        return self.sepsets.get(frozenset((a, b)))

    def to_json(self) -> dict:
        return {
            "target": self.target,
            "nodes": list(self.nodes),
            "adjacent": list(self.adjacent),
            "sepsets": {v: list(self.sepsets[frozenset((self.target, v))])
                        for v in self.nodes if frozenset((self.target, v)) in self.sepsets},
            "n_tests": self.n_tests,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "Skeleton":
        t = doc["target"]
        return cls(
            target=t,
            nodes=tuple(doc["nodes"]),
            adjacent=tuple(doc["adjacent"]),
            sepsets={frozenset((t, v)): tuple(s) for v, s in doc["sepsets"].items()},
            n_tests=int(doc.get("n_tests", 0)),
        )


def skeleton_search(data: Mapping[str, np.ndarray], target: str, candidates: Sequence[str],
                    alpha: float = 0.01, max_cond: int = 3, extra: Sequence[str] = (),
                    pool: str = "candidates") -> Skeleton:
    """Decide which variables stay adjacent to ``target``.

    The edge target–X is removed as soon as some conditioning set S with
    ``|S| <= max_cond`` makes them independent. S is drawn from the candidates
    other than X (``pool="candidates"``) or, as in classic PC, from the
    target's adjacency at the start of the level (``pool="adjacent"``).
    ``extra`` variables get their edge to the target tested but never enter a
    conditioning set. Removals are applied at the end of each level.
    Conditional tests with zero degrees of freedom never remove an edge.
    """
    if max_cond < 0:
        raise DataError("max_cond must be >= 0")
    if pool not in POOLS:
        raise DataError(f"pool must be one of {POOLS}")
    candidates = list(candidates)
    extra = [e for e in extra if e not in candidates]
    nodes = (target, *candidates, *extra)
    missing = [v for v in nodes if v not in data]
    if missing:
        raise DataError(f"no data for {missing}")
    skel = Skeleton(target=target, nodes=nodes, adjacent=())
    y = np.asarray(data[target])
    if y.size == 0:
        raise DataError("cannot search on empty data")
    if np.all(y == y[0]):
        for v in candidates + extra:
            skel.sepsets[frozenset((target, v))] = ()
        return skel

    adjacent = candidates + extra
    level = 0
    while level <= max_cond:
        snapshot = list(adjacent)
        removed = {}
        for x in snapshot:
            if level == 0:
                sets = [()]
            else:
                source = candidates if pool == "candidates" else [v for v in snapshot if v in candidates]
                sets = combinations([v for v in source if v != x], level)
            for s in sets:
                res = g2_test(data[x], y, [data[v] for v in s], alpha)
                skel.n_tests += 1
                if res.independent and (level == 0 or res.informative):
                    removed[x] = tuple(s)
                    break
        for x, s in removed.items():
            adjacent.remove(x)
            skel.sepsets[frozenset((target, x))] = s
        level += 1
        if pool == "adjacent" and len([v for v in adjacent if v in candidates]) - 1 < level:
            break
    skel.adjacent = tuple(adjacent)
    return skel


def extract_ccv(skel: Skeleton, inputs: Sequence[str] | None = None) -> tuple[str, ...]:
    """Input variables adjacent to the skeleton's target."""
    allowed = None if inputs is None else set(inputs)
    return tuple(v for v in skel.adjacent if allowed is None or v in allowed)
