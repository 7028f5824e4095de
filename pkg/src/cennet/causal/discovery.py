"""Global explanation: per-neuron skeleton search and CCV extraction."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..errors import DataError
from ..mlp import MlpModel
from ..store import ColumnBins, Discretizer, TabularDataset, fit_column, fit_discretizer
from .skeleton import Skeleton, extract_ccv, skeleton_search

logger = logging.getLogger(__name__)


def neuron_names(p: int) -> list[str]:
    return [f"n{i}" for i in range(1, p + 1)]


@dataclass
class CausalReport:
    features: tuple[str, ...]
    ccv: dict[str, tuple[str, ...]]
    skeletons: dict[str, Skeleton]
    alpha: float
    max_cond: int
    discretizer: Discretizer
    neuron_bins: dict[str, ColumnBins]
    pool: str = "candidates"
    warnings: list[str] = field(default_factory=list)

    @property
    def neurons(self) -> list[str]:
        return list(self.ccv)

    def union(self) -> tuple[str, ...]:
        """All input variables that are a CCV of some neuron, in feature order."""
        merged = {v for s in self.ccv.values() for v in s}
        return tuple(v for v in self.features if v in merged)

    def to_json(self) -> dict:
        return {
            "features": list(self.features),
            "alpha": self.alpha,
            "max_cond": self.max_cond,
            "pool": self.pool,
            "ccv": {k: list(v) for k, v in self.ccv.items()},
            "skeletons": {k: s.to_json() for k, s in self.skeletons.items()},
            "discretizer": self.discretizer.to_json(),
            "neuron_bins": {k: b.to_json() for k, b in self.neuron_bins.items()},
            "warnings": self.warnings,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "CausalReport":
        return cls(
            features=tuple(doc["features"]),
            ccv={k: tuple(v) for k, v in doc["ccv"].items()},
            skeletons={k: Skeleton.from_json(s) for k, s in doc["skeletons"].items()},
            alpha=float(doc["alpha"]),
            max_cond=int(doc["max_cond"]),
            discretizer=Discretizer.from_json(doc["discretizer"]),
            neuron_bins={k: ColumnBins.from_json(b) for k, b in doc["neuron_bins"].items()},
            pool=doc.get("pool", "candidates"),
            warnings=list(doc.get("warnings", [])),
        )


def _search(args):
    return skeleton_search(*args[:-1], **args[-1])


def discretize_inputs(report_or_disc, ds: TabularDataset, rows: np.ndarray,
                      features: Sequence[str]) -> dict[str, np.ndarray]:
    disc = report_or_disc.discretizer if isinstance(report_or_disc, CausalReport) else report_or_disc
    return disc.transform(ds, rows, features)


def discretize_neurons(report: CausalReport, activations: np.ndarray) -> dict[str, np.ndarray]:
    return {name: report.neuron_bins[name].apply(activations[:, i]) for i, name in enumerate(report.neurons)}


def global_explain(model: MlpModel, ds: TabularDataset, alpha: float = 0.01, max_cond: int = 3,
                   n_bins: int = 3, pool: str = "candidates", jobs: int = 1) -> CausalReport:
    """Run one causal search per last-hidden-layer neuron and collect its CCVs.

    Inputs and neuron activations are discretized with equal-frequency bins
    fit on the training rows, which are also the rows searched.
    """
    features = list(model.encoder.features)
    rows = ds.rows("train")
    disc = fit_discretizer(ds, n_bins, features)
    data = disc.transform(ds, rows, features)
    acts = model.nnlu(model.encode(ds, rows))
    names = neuron_names(acts.shape[1])
    clash = set(names) & set(features)
    if clash:
        raise DataError(f"input variables clash with neuron names: {sorted(clash)}")
    neuron_bins = {}
    warnings = [f"input {c} is constant on the training rows" for c in disc.degenerate]
    for i, name in enumerate(names):
        neuron_bins[name] = fit_column(acts[:, i], n_bins)
        if neuron_bins[name].degenerate:
            warnings.append(f"neuron {name} is constant on the training rows")
    data[ds.target] = ds.labels()[rows]
    jobs_args = []
    for i, name in enumerate(names):
        local = dict(data)
        local[name] = neuron_bins[name].apply(acts[:, i])
        jobs_args.append((local, name, features, {"alpha": alpha, "max_cond": max_cond,
                                                  "extra": (ds.target,), "pool": pool}))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            skeletons = list(ex.map(_search, jobs_args))
    else:
        skeletons = [_search(a) for a in jobs_args]
    ccv = {}
    for name, skel in zip(names, skeletons):
        ccv[name] = extract_ccv(skel, features)
        logger.info("CCV(%s) = %s (%d tests)", name, ", ".join(ccv[name]) or "-", skel.n_tests)
    return CausalReport(
        features=tuple(features),
        ccv=ccv,
        skeletons=dict(zip(names, skeletons)),
        alpha=alpha,
        max_cond=max_cond,
        discretizer=disc,
        neuron_bins=neuron_bins,
        pool=pool,
        warnings=warnings,
    )
