"""Discrete Bayesian networks: structure queries, ancestral sampling, candidate sets."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Sequence

import numpy as np

from ..errors import DataError
from ..store import CATEGORICAL, TabularDataset

BUILTIN_MODELS = ("alarm", "insurance", "hailfinder")


@dataclass
class BayesNet:
    name: str
    states: dict[str, tuple[str, ...]]
    parents: dict[str, tuple[str, ...]]
    cpts: dict[str, np.ndarray]  # shape (*parent cardinalities, own cardinality)

    @property
    def nodes(self) -> list[str]:
        return list(self.states)

    def cardinality(self, node: str) -> int:
        return len(self.states[node])

    def children(self, node: str) -> list[str]:
        return [n for n in self.nodes if node in self.parents[n]]

    def find_cycle(self) -> list[str]:
        """A directed cycle as a node list, or [] when the graph is acyclic."""
        colour = dict.fromkeys(self.nodes, 0)
        stack: list[str] = []

        def visit(u: str) -> list[str]:
            colour[u] = 1
            stack.append(u)
            for v in self.children(u):
                if colour[v] == 1:
                    return stack[stack.index(v):]
                if colour[v] == 0:
                    found = visit(v)
                    if found:
                        return found
            stack.pop()
            colour[u] = 2
            return []

        for node in self.nodes:
            if colour[node] == 0:
                found = visit(node)
                if found:
                    return list(found)
        return []

    def topological_order(self) -> list[str]:
        # Kahn's algorithm, ties broken by declaration order.
        indeg = {n: len(self.parents[n]) for n in self.nodes}
        order: list[str] = []
        ready = [n for n in self.nodes if indeg[n] == 0]
        rank = {n: i for i, n in enumerate(self.nodes)}
        while ready:
            ready.sort(key=rank.__getitem__)
            u = ready.pop(0)
            order.append(u)
            for v in self.children(u):
                indeg[v] -= 1
                if indeg[v] == 0:
                    ready.append(v)
        if len(order) != len(self.nodes):
            raise DataError("network contains a cycle")
        return order

    def ancestors(self, node: str, generations: int | None = None) -> set[str]:
        found: set[str] = set()
        frontier = {node}
        depth = 0
        while frontier and (generations is None or depth < generations):
            frontier = {p for u in frontier for p in self.parents[u]} - found
            found |= frontier
            depth += 1
        found.discard(node)
        return found

    def descendants(self, node: str) -> set[str]:
        found: set[str] = set()
        frontier = [node]
        while frontier:
            u = frontier.pop()
            for c in self.children(u):
                if c not in found:
                    found.add(c)
                    frontier.append(c)
        return found

    def validate(self) -> None:
        if self.find_cycle():
            raise DataError("network contains a cycle")
        for node in self.nodes:
            for q in self.parents[node]:
                if q not in self.states:
                    raise DataError(f"undeclared parent {q!r} of {node!r}")
            shape = tuple(self.cardinality(q) for q in self.parents[node]) + (self.cardinality(node),)
            table = self.cpts[node]
            if table.shape != shape:
                raise DataError(f"CPT of {node!r} has shape {table.shape}, expected {shape}")
            if (table < 0).any() or (table > 1).any() or not np.allclose(table.sum(-1), 1.0, atol=1e-9, rtol=0):
                raise DataError(f"CPT rows of {node!r} are not probability vectors")

    def __eq__(self, other) -> bool:
        if not isinstance(other, BayesNet):
            return NotImplemented
        return (self.name == other.name and self.states == other.states
                and self.parents == other.parents
                and all(np.array_equal(self.cpts[n], other.cpts[n]) for n in self.nodes))


def load_builtin(name: str) -> BayesNet:
    from .parser import parse_bn

    if name not in BUILTIN_MODELS:
        raise DataError(f"unknown built-in model {name!r}; available: {BUILTIN_MODELS}")
    text = resources.files("cennet.data").joinpath(f"{name}.net").read_text()
    return parse_bn(text)


def sample_codes(bn: BayesNet, n: int, seed: int) -> dict[str, np.ndarray]:
    """Ancestral sampling; returns state indices per node."""
    if int(n) < 1:
        raise DataError("n must be >= 1")
    rng = np.random.default_rng(seed)
    codes: dict[str, np.ndarray] = {}
    for node in bn.topological_order():
        pa = bn.parents[node]
        k = bn.cardinality(node)
        table = bn.cpts[node].reshape(-1, k)
        if pa:
            flat = np.ravel_multi_index(tuple(codes[q] for q in pa),
                                        tuple(bn.cardinality(q) for q in pa))
        else:
            flat = np.zeros(n, dtype=np.int64)
        cum = np.cumsum(table, axis=1)[flat]
        u = rng.random(n)
        codes[node] = np.minimum((u[:, None] >= cum).sum(axis=1), k - 1).astype(np.int64)
    return {node: codes[node] for node in bn.nodes}


def sample_bn(bn: BayesNet, n: int, seed: int, target: str | None = None,
              columns: Sequence[str] | None = None, positive: str | None = None) -> TabularDataset:
    """Sample ``n`` rows as a categorical dataset.

    ``target`` defaults to the last binary node in topological order; the
    positive label defaults to the target's first declared state.
    """
    if target is None:
        binary = [v for v in bn.topological_order() if bn.cardinality(v) == 2]
        if not binary:
            raise DataError("network has no binary node to use as target")
        target = binary[-1]
    if target not in bn.states:
        raise DataError(f"unknown target {target!r}")
    if bn.cardinality(target) != 2:
        raise DataError(f"target {target!r} is not binary")
    codes = sample_codes(bn, n, seed)
    names = [c for c in (columns if columns is not None else bn.nodes) if c != target] + [target]
    for c in names:
        if c not in bn.states:
            raise DataError(f"unknown variable {c!r}")
    data = {c: np.array(bn.states[c], dtype=object)[codes[c]] for c in names}
    return TabularDataset(
        columns=data,
        kinds=dict.fromkeys(names, CATEGORICAL),
        target=target,
        positive=positive or bn.states[target][0],
        states={c: bn.states[c] for c in names},
        meta={"generator": "bayesnet", "model": bn.name, "seed": int(seed), "n_samples": int(n)},
    )


def build_candidates(bn: BayesNet, target: str, generations: int = 3,
                     explicit: Iterable[str] | None = None):
    """Candidate explanatory variables and ground truth for a binary target.

    Candidates are the ancestors up to ``generations`` back, the target's
    children, the other parents of those children, and the other children of the
    target's parents (pseudo-correlated siblings). ``explicit`` overrides the
    construction.
    """
    from .synthetic import GroundTruth

    if target not in bn.states:
        raise DataError(f"unknown target {target!r}")
    if bn.cardinality(target) != 2:
        raise DataError(f"target {target!r} is not binary")
    parents = bn.parents[target]
    if explicit is not None:
        chosen = set(explicit)
        unknown = chosen - set(bn.states)
        if unknown:
            raise DataError(f"unknown candidate variables {sorted(unknown)}")
        chosen |= set(parents)
    else:
        chosen = bn.ancestors(target, generations)
        for child in bn.children(target):
            chosen.add(child)
            chosen.update(bn.parents[child])
        for parent in parents:
            chosen.update(bn.children(parent))
    chosen.discard(target)
    candidates = tuple(n for n in bn.nodes if n in chosen)
    important = (tuple(n for n in candidates if n in parents),) if parents else ()
    if not important:
        raise DataError(f"target {target!r} has no parents; nothing to rank")
    return GroundTruth(important_sets=important, candidate_vars=candidates,
                       parents_of_target=tuple(parents))
