"""Column-typed tabular datasets, row splitting and equal-frequency discretization.

A dataset lives on disk as a directory holding ``data.csv`` (header row of
variable names, target last) and ``meta.json`` (column kinds, state orders,
split indices and whatever provenance the producer attached).
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, DegenerateTargetError

logger = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"
SPLIT_TAGS = ("train", "val", "test")


@dataclass(frozen=True)
class TabularDataset:
    columns: dict[str, np.ndarray]
    kinds: dict[str, str]
    target: str
    positive: str
    states: dict[str, tuple[str, ...]] = field(default_factory=dict)
    split_tags: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise DataError(f"columns have unequal lengths: {sorted(lengths)}")
        if self.target not in self.columns:
            raise DataError(f"target column {self.target!r} missing")
        if set(self.kinds) != set(self.columns):
            raise DataError("kinds must cover exactly the dataset columns")
        if self.kinds[self.target] != CATEGORICAL:
            raise DataError("target column must be categorical")
        for name, kind in self.kinds.items():
            if kind == CATEGORICAL and name not in self.states:
                levels = sorted({str(v) for v in self.columns[name]})
                self.states[name] = tuple(levels)
        target_states = self.states[self.target]
        if len(target_states) != 2 or self.positive not in target_states:
            raise DataError(
                f"target {self.target!r} must be binary with positive label among {target_states}"
            )
        if self.split_tags is not None and len(self.split_tags) != self.n_rows:
            raise DataError("split tags must cover every row")
        for col in self.columns.values():
            col.setflags(write=False)

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values())))

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    @property
    def features(self) -> list[str]:
        return [c for c in self.columns if c != self.target]

    def labels(self) -> np.ndarray:
        """Target as 0/1 integers, 1 for the positive label."""
        return (self.columns[self.target].astype(str) == self.positive).astype(np.int64)

    def rows(self, tag: str) -> np.ndarray:
        if tag == "all":
            return np.arange(self.n_rows)
        if self.split_tags is None:
            raise DataError("dataset has no split; call split() first")
        if tag not in SPLIT_TAGS:
            raise DataError(f"unknown split tag {tag!r}")
        return np.flatnonzero(self.split_tags == tag)

    def with_split(self, tags: np.ndarray, info: dict | None = None) -> "TabularDataset":
        meta = dict(self.meta)
        if info is not None:
            meta["split"] = info
        return replace(self, split_tags=np.asarray(tags), meta=meta)


def split(ds: TabularDataset, ratios: Sequence[float] = (0.8, 0.1, 0.1), seed: int = 42) -> TabularDataset:
    """Tag rows train/val/test by a seeded shuffle."""
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"split ratios must be three non-negative values summing to 1, got {ratios}")
    n = ds.n_rows
    if n < 3:
        raise DataError("need at least 3 rows to split")
    n_train = int(math.floor(ratios[0] * n + 0.5))
    n_val = min(int(math.floor(ratios[1] * n + 0.5)), n - n_train)
    perm = np.random.default_rng(seed).permutation(n)
    tags = np.empty(n, dtype="<U5")
    tags[perm[:n_train]] = "train"
    tags[perm[n_train : n_train + n_val]] = "val"
    tags[perm[n_train + n_val :]] = "test"
    info = {"ratios": [float(r) for r in ratios], "seed": int(seed)}
    return ds.with_split(tags, info)


# --------------------------------------------------------------------------- I/O


def _format_value(value, kind: str) -> str:
    if kind == NUMERIC:
        return repr(float(value))
    return str(value)


def save_dataset(ds: TabularDataset, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = ds.features + [ds.target]
    with open(out / "data.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        cols = [ds.columns[c] for c in names]
        kinds = [ds.kinds[c] for c in names]
        for i in range(ds.n_rows):
            writer.writerow([_format_value(col[i], k) for col, k in zip(cols, kinds)])
    meta = {
        "target": ds.target,
        "positive": ds.positive,
        "columns": [
            {"name": c, "kind": ds.kinds[c], **({"states": list(ds.states[c])} if ds.kinds[c] == CATEGORICAL else {})}
            for c in names
        ],
        "split": None,
        "info": ds.meta,
    }
    if ds.split_tags is not None:
        meta["split"] = {tag: ds.rows(tag).tolist() for tag in SPLIT_TAGS}
    with open(out / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=1)
        fh.write("\n")
    return out


def load_dataset(data_dir: str | Path) -> TabularDataset:
    src = Path(data_dir)
    try:
        with open(src / "meta.json") as fh:
            meta = json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"no meta.json in {src}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed meta.json in {src}: {exc}") from exc
    specs = meta["columns"]
    try:
        with open(src / "data.csv", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            raw = list(reader)
    except FileNotFoundError as exc:
        raise DataError(f"no data.csv in {src}") from exc
    if header != [s["name"] for s in specs]:
        raise DataError("data.csv header does not match meta.json columns")
    columns: dict[str, np.ndarray] = {}
    kinds: dict[str, str] = {}
    states: dict[str, tuple[str, ...]] = {}
    for j, spec in enumerate(specs):
        values = [r[j] for r in raw]
        name = spec["name"]
        kinds[name] = spec["kind"]
        if spec["kind"] == NUMERIC:
            try:
                columns[name] = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError as exc:
                raise DataError(f"column {name!r}: {exc}") from exc
        else:
            columns[name] = np.array(values, dtype=object)
            states[name] = tuple(spec["states"])
    tags = None
    if meta.get("split"):
        tags = np.empty(len(raw), dtype="<U5")
        tags[:] = ""
        for tag in SPLIT_TAGS:
            tags[np.asarray(meta["split"][tag], dtype=np.int64)] = tag
        if (tags == "").any():
            raise DataError("split indices do not cover all rows")
    return TabularDataset(
        columns=columns,
        kinds=kinds,
        target=meta["target"],
        positive=meta["positive"],
        states=states,
        split_tags=tags,
        meta=meta.get("info", {}),
    )


# ------------------------------------------------------------------ discretizer


@dataclass(frozen=True)
class ColumnBins:
    """Binning of one column: numeric edges or an ordered state dictionary."""

    kind: str
    edges: tuple[float, ...] = ()
    states: tuple[str, ...] = ()
    fallback: int = 0
    degenerate: bool = False

    @property
    def n_bins(self) -> int:
        if self.kind == NUMERIC:
            return len(self.edges) + 1
        return len(self.states)

    def apply(self, values) -> np.ndarray:
        if self.kind == NUMERIC:
            return np.searchsorted(np.asarray(self.edges, dtype=np.float64),
                                   np.asarray(values, dtype=np.float64), side="right").astype(np.int64)
        index = {s: i for i, s in enumerate(self.states)}
        return np.array([index.get(str(v), self.fallback) for v in values], dtype=np.int64)

    def to_json(self) -> dict:
        out = {"kind": self.kind, "degenerate": self.degenerate}
        if self.kind == NUMERIC:
            out["edges"] = list(self.edges)
        else:
            out["states"] = list(self.states)
            out["fallback"] = self.fallback
        return out

    @classmethod
    def from_json(cls, doc: Mapping) -> "ColumnBins":
        return cls(
            kind=doc["kind"],
            edges=tuple(float(e) for e in doc.get("edges", ())),
            states=tuple(doc.get("states", ())),
            fallback=int(doc.get("fallback", 0)),
            degenerate=bool(doc.get("degenerate", False)),
        )


def _quantile_boundaries(counts: np.ndarray, q: int) -> list[int]:
    # Boundaries are run indices j (bin starts at run j); chosen nearest to the
    # ideal cumulative mass k*T/q.
    if q <= 1 or len(counts) <= 1:
        return []
    if len(counts) <= q:
        return list(range(1, len(counts)))
    before = np.cumsum(counts)[:-1]  # mass strictly before run j+1
    total = counts.sum()
    chosen: list[int] = []
    for k in range(1, q):
        j = int(np.argmin(np.abs(before - k * total / q))) + 1
        if (not chosen or j > chosen[-1]) and j < len(counts):
            chosen.append(j)
    return chosen


def _allocate(masses: Sequence[int], bins: int) -> list[int]:
    """Largest-remainder allocation of ``bins`` over segments by mass."""
    total = float(sum(masses))
    if bins <= 0 or total == 0:
        return [0] * len(masses)
    quotas = [bins * m / total for m in masses]
    alloc = [int(math.floor(x)) for x in quotas]
    order = sorted(range(len(masses)), key=lambda i: (-(quotas[i] - alloc[i]), i))
    for i in order[: bins - sum(alloc)]:
        alloc[i] += 1
    return alloc


def _numeric_bins(values: np.ndarray, n_bins: int) -> ColumnBins:
    uniq, counts = np.unique(np.asarray(values, dtype=np.float64), return_counts=True)
    if len(uniq) <= 1:
        return ColumnBins(kind=NUMERIC, degenerate=True)
    n = counts.sum()
    heavy = counts * n_bins >= n
    if not heavy.any():
        boundaries = _quantile_boundaries(counts, n_bins)
    else:
        # Each heavy value gets its own bin; the light runs between heavy values
        # share the remaining bins by mass.
        segments: list[tuple[int, int, bool]] = []  # [start, stop) over runs, heavy flag
        start = 0
        for j in range(len(uniq)):
            if heavy[j]:
                if start < j:
                    segments.append((start, j, False))
                segments.append((j, j + 1, True))
                start = j + 1
        if start < len(uniq):
            segments.append((start, len(uniq), False))
        light = [s for s in segments if not s[2]]
        alloc = dict(zip(light, _allocate([int(counts[a:b].sum()) for a, b, _ in light],
                                          n_bins - int(heavy.sum()))))
        groups: list[list[int]] = []
        carry = None  # start of a zero-bin light segment waiting for the next group
        for seg in segments:
            a, b, is_heavy = seg
            q = 1 if is_heavy else alloc[seg]
            if q == 0:
                if groups:
                    groups[-1][1] = b
                else:
                    carry = a
                continue
            cuts = [a] + [a + j for j in _quantile_boundaries(counts[a:b], q)] + [b]
            for lo, hi in zip(cuts[:-1], cuts[1:]):
                groups.append([lo, hi])
            if carry is not None:
                groups[-len(cuts) + 1][0] = carry
                carry = None
        boundaries = [g[0] for g in groups[1:]]
    edges = tuple(float((uniq[j - 1] + uniq[j]) / 2.0) for j in boundaries)
    return ColumnBins(kind=NUMERIC, edges=edges)


def fit_column(values, n_bins: int = 3, kind: str = NUMERIC,
               states: Sequence[str] | None = None) -> ColumnBins:
    """Fit the binning for a single column of training values."""
    if n_bins < 1:
        raise DataError("n_bins must be >= 1")
    if kind == NUMERIC:
        bins = _numeric_bins(np.asarray(values), n_bins)
    else:
        labels = [str(v) for v in values]
        if states is None:
            states = sorted(set(labels))
        uniq, counts = np.unique(np.array(labels, dtype=object), return_counts=True)
        index = {s: i for i, s in enumerate(states)}
        mode = index.get(uniq[int(np.argmax(counts))], 0) if len(uniq) else 0
        bins = ColumnBins(kind=CATEGORICAL, states=tuple(states), fallback=mode,
                          degenerate=len(uniq) <= 1)
    if bins.degenerate:
        logger.warning("column is constant on the fit data; using a single bin")
    return bins


@dataclass(frozen=True)
class Discretizer:
    bins: dict[str, ColumnBins]
    n_bins: int = 3

    @property
    def cardinalities(self) -> dict[str, int]:
        return {name: b.n_bins for name, b in self.bins.items()}

    @property
    def degenerate(self) -> list[str]:
        return [name for name, b in self.bins.items() if b.degenerate]

    def apply(self, name: str, values) -> np.ndarray:
        return self.bins[name].apply(values)

    def transform(self, ds: TabularDataset, rows: np.ndarray | None = None,
                  columns: Iterable[str] | None = None) -> dict[str, np.ndarray]:
        names = list(columns) if columns is not None else list(self.bins)
        out = {}
        for name in names:
            col = ds.columns[name]
            out[name] = self.bins[name].apply(col if rows is None else col[rows])
        return out

    def to_json(self) -> dict:
        return {"n_bins": self.n_bins, "columns": {k: v.to_json() for k, v in self.bins.items()}}

    @classmethod
    def from_json(cls, doc: Mapping) -> "Discretizer":
        return cls(bins={k: ColumnBins.from_json(v) for k, v in doc["columns"].items()},
                   n_bins=int(doc["n_bins"]))


def fit_discretizer(ds: TabularDataset, n_bins: int = 3,
                    columns: Iterable[str] | None = None) -> Discretizer:
    """Fit per-column bins on the training rows (all rows if the dataset is unsplit)."""
    rows = ds.rows("train") if ds.split_tags is not None else np.arange(ds.n_rows)
    if len(rows) == 0:
        raise DataError("no training rows to fit the discretizer on")
    names = list(columns) if columns is not None else ds.names
    bins = {}
    for name in names:
        kind = ds.kinds[name]
        bins[name] = fit_column(ds.columns[name][rows], n_bins, kind, ds.states.get(name))
    return Discretizer(bins=bins, n_bins=n_bins)


def check_binary_target(labels: np.ndarray) -> None:
    if labels.min() == labels.max():
        raise DegenerateTargetError("target has a single class")
