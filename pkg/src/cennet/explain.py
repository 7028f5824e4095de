"""Local explanations from entropy-based explanation powers.

For a neuron with discretized value ``z`` and a configuration ``x_e`` of
its CCVs, ``EEP(z, x_e) = ln P(z | x_e) - ln P(z)``. An explanation's
positive/negative powers sum ``w_i * activation_i * EEP`` over neurons whose
output weight is non-negative/negative and whose EEP is positive, each plus
the output bias; the total power is their sum.

A configuration may mention variables outside a neuron's CCV set. That
neuron is scored on the intersection with its CCVs and contributes nothing
when the intersection is empty.

Lists are ordered by an importance derived from the three powers (see
``ORDERS``). The default, ``"evidence"``, is PEP - NEP with the bias removed
from both: the summed size of every neuron's power, so that neurons pulling
in opposite directions do not cancel.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .causal.discovery import CausalReport, discretize_neurons
from .causal.oracles import entropy
from .errors import DataError, UndefinedProbabilityError
from .mlp import MlpModel, NnluView, nnlu_view
from .store import NUMERIC, ColumnBins, TabularDataset

logger = logging.getLogger(__name__)

ORDERS = ("evidence", "magnitude", "prediction", "tep")


@dataclass(frozen=True)
class ExplainConfig:
    m: int = 2
    smoothing: float = 1.0
    emi_topk: int | None = None
    order: str = "evidence"

    def __post_init__(self):
        if self.order not in ORDERS:
            raise DataError(f"order must be one of {ORDERS}")
        if self.m < 1:
            raise DataError("m must be >= 1")
        if self.smoothing < 0:
            raise DataError("smoothing must be >= 0")
        if self.emi_topk is not None and self.emi_topk < 1:
            raise DataError("emi_topk must be >= 1")


@dataclass(frozen=True)
class EepTable:
    """P(z | x_e) for one neuron and one CCV subset, with configuration counts."""

    variables: tuple[str, ...]
    conditional: np.ndarray  # (*cards, n_z)
    config_counts: np.ndarray  # (*cards,)

    @property
    def config_prob(self) -> np.ndarray:
        total = self.config_counts.sum()
        return self.config_counts / total if total > 0 else self.config_counts

    @classmethod
    def from_counts(cls, variables: Sequence[str], counts: np.ndarray, smoothing: float) -> "EepTable":
        """``counts`` has shape (*cards, n_z)."""
        counts = np.asarray(counts, dtype=np.float64)
        n_z = counts.shape[-1]
        totals = counts.sum(axis=-1)
        denom = totals[..., None] + smoothing * n_z
        with np.errstate(invalid="ignore", divide="ignore"):
            cond = np.where(denom > 0, (counts + smoothing) / np.where(denom > 0, denom, 1.0), np.nan)
        return cls(tuple(variables), cond, totals)

    @classmethod
    def from_joint(cls, variables: Sequence[str], joint: np.ndarray) -> "EepTable":
        """Exact table from a joint P(x_e, z) with shape (*cards, n_z)."""
        joint = np.asarray(joint, dtype=np.float64)
        px = joint.sum(axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            cond = np.where(px[..., None] > 0, joint / np.where(px > 0, px, 1.0)[..., None], np.nan)
        return cls(tuple(variables), cond, px)


@dataclass
class EepCache:
    ccv: dict[str, tuple[str, ...]]
    marginals: dict[str, np.ndarray]
    tables: dict[tuple[str, tuple[str, ...]], EepTable]
    neuron_bins: dict[str, ColumnBins] = field(default_factory=dict)
    m: int = 2
    smoothing: float = 1.0

    @property
    def neurons(self) -> list[str]:
        return list(self.ccv)

    def table(self, neuron: str, variables: Sequence[str]) -> EepTable:
        key = (neuron, tuple(v for v in self.ccv[neuron] if v in set(variables)))
        try:
            return self.tables[key]
        except KeyError:
            raise DataError(f"no cached table for neuron {neuron} over {key[1]}") from None


def eep(z: int, x_e: Mapping[str, int], cache: EepCache, neuron: str) -> float:
    """ln P(z | x_e) / P(z) from the cache (variables outside the neuron's CCVs ignored)."""
    tab = cache.table(neuron, list(x_e))
    idx = tuple(int(x_e[v]) for v in tab.variables)
    if tab.config_counts[idx] <= 0 and cache.smoothing == 0:
        raise UndefinedProbabilityError(f"configuration {dict(zip(tab.variables, idx))} never observed")
    p_cond = tab.conditional[idx + (int(z),)]
    p_marg = cache.marginals[neuron][int(z)]
    if not np.isfinite(p_cond) or p_marg <= 0:
        raise UndefinedProbabilityError(f"P({neuron}={z}) undefined for the requested configuration")
    with np.errstate(divide="ignore"):
        return float(np.log(p_cond) - np.log(p_marg))


def emi(neuron: str, variables: Sequence[str], cache: EepCache) -> float:
    """H(z) - H(z | X_e) under the cached joint P(x_e) P(z | x_e), in nats."""
    tab = cache.table(neuron, variables)
    px = tab.config_prob
    if cache.smoothing == 0 and np.isnan(tab.conditional[px > 0]).any():
        raise UndefinedProbabilityError("conditional undefined for an observed configuration")
    joint = np.nan_to_num(tab.conditional) * px[..., None]
    n_z = joint.shape[-1]
    h_z = entropy(joint.reshape(-1, n_z).sum(axis=0))
    h_joint = entropy(joint)
    h_x = entropy(px)
    return h_z - (h_joint - h_x)


def expected_eep(neuron: str, variables: Sequence[str], cache: EepCache) -> float:
    """E over P(x_e, z) of EEP(z, x_e) using the cache's marginal P(z)."""
    tab = cache.table(neuron, variables)
    joint = np.nan_to_num(tab.conditional) * tab.config_prob[..., None]
    marg = cache.marginals[neuron]
    mask = joint > 0
    ratio = np.log(np.where(mask, np.nan_to_num(tab.conditional), 1.0)) - np.log(marg)
    return float(np.sum(joint[mask] * ratio[mask]))


def _subsets(items: Sequence[str], m: int) -> list[tuple[str, ...]]:
    return [s for k in range(1, m + 1) for s in itertools.combinations(items, k)]


def build_cache(model: MlpModel, report: CausalReport, ds: TabularDataset,
                cfg: ExplainConfig | None = None) -> EepCache:
    """Count tables on the training rows for every CCV subset up to size m."""
    cfg = cfg or ExplainConfig()
    rows = ds.rows("train")
    acts = model.nnlu(model.encode(ds, rows))
    z = discretize_neurons(report, acts)
    inputs = report.discretizer.transform(ds, rows, report.union())
    cards = report.discretizer.cardinalities
    marginals, tables = {}, {}
    for neuron in report.neurons:
        n_z = report.neuron_bins[neuron].n_bins
        counts = np.bincount(z[neuron], minlength=n_z).astype(np.float64)
        marginals[neuron] = (counts + cfg.smoothing) / (counts.sum() + cfg.smoothing * n_z)
        for subset in _subsets(report.ccv[neuron], cfg.m):
            shape = tuple(cards[v] for v in subset) + (n_z,)
            flat = np.ravel_multi_index(tuple(inputs[v] for v in subset) + (z[neuron],), shape)
            table_counts = np.bincount(flat, minlength=int(np.prod(shape))).reshape(shape)
            tables[(neuron, subset)] = EepTable.from_counts(subset, table_counts, cfg.smoothing)
    return EepCache(ccv=dict(report.ccv), marginals=marginals, tables=tables,
                    neuron_bins=dict(report.neuron_bins), m=cfg.m, smoothing=cfg.smoothing)


@dataclass(frozen=True)
class Explanation:
    config: tuple[tuple[str, int], ...]
    pep: float
    nep: float
    tep: float
    contributions: tuple[dict, ...] = ()

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(v for v, _ in self.config)


def tep_score(view: NnluView, x_e: Mapping[str, int], cache: EepCache,
              signs: tuple[Sequence[int], Sequence[int]] | None = None) -> Explanation:
    """Positive, negative and total explanation power of one configuration."""
    if signs is None:
        signs = ([i for i, w in enumerate(view.weights) if w >= 0],
                 [i for i, w in enumerate(view.weights) if w < 0])
    positive = set(signs[0])
    pep = nep = 0.0
    contributions = []
    for i, neuron in enumerate(cache.neurons):
        act = float(view.activations[i])
        if act < 0:
            raise DataError("neuron activations must be non-negative")
        shared = [v for v in x_e if v in set(cache.ccv[neuron])]
        value = 0.0
        power = None
        if shared:
            z = int(cache.neuron_bins[neuron].apply([act])[0])
            value = eep(z, {v: x_e[v] for v in shared}, cache, neuron)
            if value > 0:
                power = float(view.weights[i]) * act * value
                if i in positive:
                    pep += power
                else:
                    nep += power
        contributions.append({"neuron": neuron, "weight": float(view.weights[i]), "activation": act,
                              "eep": value if shared else None, "power": power or 0.0})
    pep += view.bias
    nep += view.bias
    config = tuple((v, int(x_e[v])) for v in x_e)
    return Explanation(config=config, pep=pep, nep=nep, tep=pep + nep, contributions=tuple(contributions))


def importance(pep, nep, tep, bias: float, logit, order: str = "evidence"):
    """Ranking value of explanations from their powers (arrays broadcast).

    ``"tep"`` is TEP itself, ``"prediction"`` is TEP signed by the predicted
    class (``-TEP`` when the logit is negative), ``"magnitude"`` is
    |TEP - 2b| and ``"evidence"`` is PEP - NEP.
    """
    if order == "tep":
        return tep
    if order == "magnitude":
        return np.abs(np.asarray(tep) - 2.0 * bias)
    if order == "evidence":
        return np.asarray(pep) - np.asarray(nep)
    if order == "prediction":
        logit = np.asarray(logit)
        if logit.ndim:
            logit = logit[:, None]
        return np.where(logit >= 0, tep, -np.asarray(tep))
    raise DataError(f"order must be one of {ORDERS}")


def score_subsets(cache: EepCache, weights: np.ndarray, bias: float, activations: np.ndarray,
                  input_codes: Mapping[str, np.ndarray], subsets: Sequence[Sequence[str]]) -> dict[str, np.ndarray]:
    """Vectorised PEP/NEP/TEP for many rows and variable subsets.

    Returns arrays of shape (rows, subsets). Each row is scored on its own
    values of the subset's variables.
    """
    t = activations.shape[0]
    pep = np.full((t, len(subsets)), float(bias))
    nep = np.full((t, len(subsets)), float(bias))
    z = {n: cache.neuron_bins[n].apply(activations[:, i]) for i, n in enumerate(cache.neurons)}
    log_marg = {n: np.log(cache.marginals[n]) for n in cache.neurons}
    for j, subset in enumerate(subsets):
        for i, neuron in enumerate(cache.neurons):
            ccv = set(cache.ccv[neuron])
            shared = [v for v in subset if v in ccv]
            if not shared:
                continue
            tab = cache.table(neuron, shared)
            idx = tuple(input_codes[v] for v in tab.variables) + (z[neuron],)
            if cache.smoothing == 0 and (tab.config_counts[idx[:-1]] <= 0).any():
                raise UndefinedProbabilityError(f"unseen configuration of {tab.variables}")
            with np.errstate(divide="ignore"):
                value = np.log(tab.conditional[idx]) - log_marg[neuron][z[neuron]]
            power = np.where(value > 0, weights[i] * activations[:, i] * value, 0.0)
            if weights[i] >= 0:
                pep[:, j] += power
            else:
                nep[:, j] += power
    return {"pep": pep, "nep": nep, "tep": pep + nep}


@dataclass
class ExplanationList:
    row: int
    logit: float
    records: list[Explanation]
    diagnostic: str = ""

    def to_json(self, labeller=None) -> dict:
        out = []
        for e in self.records:
            rec = {
                "config": [{"variable": v, "bin": c, **({"label": labeller(v, c)} if labeller else {})}
                           for v, c in e.config],
                "pep": e.pep,
                "nep": e.nep,
                "tep": e.tep,
                "neurons": list(e.contributions),
            }
            out.append(rec)
        doc = {"row": self.row, "logit": self.logit, "explanations": out}
        if self.diagnostic:
            doc["diagnostic"] = self.diagnostic
        return doc


def candidate_subsets(report: CausalReport, cache: EepCache, cfg: ExplainConfig) -> list[tuple[str, ...]]:
    """Variable subsets of the CCV union up to size m, optionally EMI-screened."""
    union = report.union()
    subsets = _subsets(union, cfg.m)
    if cfg.emi_topk is None:
        return subsets
    keep: set[tuple[str, ...]] = set()
    for neuron in report.neurons:
        own = _subsets(report.ccv[neuron], cfg.m)
        ranked = sorted(own, key=lambda s: (-emi(neuron, s, cache), len(s), s))
        keep.update(ranked[: cfg.emi_topk])
    return [s for s in subsets if s in keep]


def _sort_key(features: Sequence[str], bias: float = 0.0, logit: float = 0.0, order: str = "tep"):
    position = {v: i for i, v in enumerate(features)}

    def key(e: Explanation):
        value = float(importance(e.pep, e.nep, e.tep, bias, logit, order))
        return (-value, len(e.config), tuple(position[v] for v, _ in e.config))

    return key


def local_explain(model: MlpModel, report: CausalReport, cache: EepCache, ds: TabularDataset,
                  row: int, cfg: ExplainConfig | None = None,
                  subsets: Sequence[tuple[str, ...]] | None = None) -> ExplanationList:
    """Rank every CCV configuration taken by ``row`` (size <= m), best first."""
    cfg = cfg or ExplainConfig()
    if cfg.m > cache.m:
        raise DataError(f"cache was built for m={cache.m}, requested m={cfg.m}")
    x = model.encode(ds, np.array([row]))[0]
    view = nnlu_view(model, x)
    union = report.union()
    if not union:
        return ExplanationList(row=row, logit=view.logit, records=[],
                               diagnostic="no neuron has a characteristic correlated variable")
    if subsets is None:
        subsets = candidate_subsets(report, cache, cfg)
    codes = report.discretizer.transform(ds, np.array([row]), union)
    signs = ([i for i, w in enumerate(view.weights) if w >= 0], [i for i, w in enumerate(view.weights) if w < 0])
    records = []
    for subset in subsets:
        x_e = {v: int(codes[v][0]) for v in subset}
        records.append(tep_score(view, x_e, cache, signs))
    records.sort(key=_sort_key(report.features, view.bias, view.logit, cfg.order))
    return ExplanationList(row=row, logit=view.logit, records=records)


def explain_rows(model: MlpModel, report: CausalReport, cache: EepCache, ds: TabularDataset,
                 rows: Iterable[int], cfg: ExplainConfig | None = None, jobs: int = 1) -> list[ExplanationList]:
    """Explain several rows over a shared cache; output order follows ``rows``."""
    cfg = cfg or ExplainConfig()
    subsets = candidate_subsets(report, cache, cfg) if report.union() else []

    def one(r):
        return local_explain(model, report, cache, ds, int(r), cfg, subsets)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(one, rows))
    return [one(r) for r in rows]


def bin_labeller(report: CausalReport):
    """Human-readable label for (variable, bin index)."""

    def label(var: str, code: int) -> str:
        bins = report.discretizer.bins[var]
        if bins.kind != NUMERIC:
            return bins.states[code]
        edges = (-np.inf, *bins.edges, np.inf)
        return f"[{edges[code]:.4g}, {edges[code + 1]:.4g})"

    return label
