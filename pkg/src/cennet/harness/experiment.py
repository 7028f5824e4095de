"""End-to-end experiment runner: data, training, discovery, explanation, ranking."""

from __future__ import annotations

import copy
import json
import logging
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from ..causal.discovery import CausalReport, global_explain
from ..datagen import SyntheticSpec, build_candidates, generate, load_builtin, parse_bn, sample_bn
from ..datagen.synthetic import KINDS, GroundTruth
from ..errors import CennetError, DataError
from ..explain import (ORDERS, ExplainConfig, bin_labeller, build_cache, explain_rows, importance,
                       score_subsets)
from ..mlp import MlpModel, TrainConfig, pr_auc, train
from ..store import TabularDataset, split
from .baseline import BaselineConfig, baseline_local_linear
from .ranking import RankResult, combo_from_singles, combo_keys, rank_combo, rank_single
from .stats import mcnemar, welch_t

logger = logging.getLogger(__name__)

DEFAULTS: dict[str, Any] = {
    "dataset": {"n": 10000, "seed": 42},
    "split_ratios": None,
    "train": {"epochs": 100, "lr": 1e-3, "batch": 64, "seed": 42, "init": "glorot"},
    "causal": {"alpha": 0.01, "max_cond": 3, "n_bins": 3, "pool": "candidates"},
    "explain": {"m": 2, "smoothing": 1.0, "emi_topk": None, "order": "evidence"},
    "eval": {"combo_size": None, "baseline": {}, "test_rows": None, "top_n": 10},
}


class StageError(CennetError):
    """A pipeline stage failed; wraps the original error."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def resolve_config(config: Mapping) -> dict:
    """Fill defaults and check the keys that every stage relies on."""
    cfg = copy.deepcopy(DEFAULTS)
    unknown = set(config) - set(DEFAULTS)
    if unknown:
        raise DataError(f"unknown config sections {sorted(unknown)}")
    for key, value in config.items():
        if isinstance(cfg[key], dict):
            if not isinstance(value, Mapping):
                raise DataError(f"config section {key!r} must be an object")
            cfg[key].update(value)
        else:
            cfg[key] = value
    ds = cfg["dataset"]
    sources = [k for k in ("kind", "bn_file", "bn_model") if ds.get(k)]
    if len(sources) != 1:
        raise DataError("dataset needs exactly one of kind, bn_file, bn_model")
    if ds.get("kind") and ds["kind"] not in KINDS:
        raise DataError(f"unknown dataset kind {ds['kind']!r}")
    if not ds.get("kind") and not ds.get("target"):
        raise DataError("Bayesian-network datasets need a target")
    if cfg["split_ratios"] is None:
        cfg["split_ratios"] = [0.8, 0.1, 0.1] if ds.get("kind") else [0.9, 0.05, 0.05]
    if cfg["explain"]["order"] not in ORDERS:
        raise DataError(f"explain.order must be one of {ORDERS}")
    if cfg["eval"]["baseline"] is True:
        cfg["eval"]["baseline"] = {}
    return cfg


def load_config(path: str | Path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise DataError("config must be a JSON object")
    ds = doc.get("dataset", {})
    if isinstance(ds, dict) and ds.get("bn_file"):
        ds["bn_file"] = str((path.parent / ds["bn_file"]).resolve())
    return doc


def build_dataset(cfg: Mapping) -> tuple[TabularDataset, GroundTruth]:
    d = cfg["dataset"]
    if d.get("kind"):
        ds, gt = generate(SyntheticSpec(d["kind"], int(d["n"]), int(d["seed"])))
    else:
        if d.get("bn_model"):
            bn = load_builtin(d["bn_model"])
        else:
            try:
                text = Path(d["bn_file"]).read_text()
            except OSError as exc:
                raise DataError(f"cannot read {d['bn_file']}: {exc}") from exc
            bn = parse_bn(text)
        gt = build_candidates(bn, d["target"], explicit=d.get("candidates"))
        ds = sample_bn(bn, int(d["n"]), int(d["seed"]), target=d["target"],
                       columns=gt.candidate_vars, positive=d.get("positive"))
    ds = split(ds, cfg["split_ratios"], int(d["seed"]))
    empty = [name for name in ("train", "val", "test") if len(ds.rows(name)) == 0]
    if empty:
        raise DataError(f"split leaves no rows in {', '.join(empty)}")
    return ds, gt


def cennet_scores(model: MlpModel, report: CausalReport, cache, ds: TabularDataset, rows: np.ndarray,
                  subsets, order: str = "evidence") -> np.ndarray:
    """Importance of each row's own configuration over each subset, shape (rows, subsets)."""
    x = model.encode(ds, rows)
    acts = model.nnlu(x)
    logits = model.logits(x)
    variables = sorted({v for s in subsets for v in s})
    codes = report.discretizer.transform(ds, rows, [v for v in report.features if v in set(variables)])
    powers = score_subsets(cache, model.output_weights, model.output_bias, acts, codes, subsets)
    return importance(powers["pep"], powers["nep"], powers["tep"], model.output_bias, logits, order)


def baseline_scores(model: MlpModel, ds: TabularDataset, rows: np.ndarray, candidates,
                    cfg: BaselineConfig) -> np.ndarray:
    x = model.encode(ds, rows)
    groups = model.encoder.groups()
    out = np.empty((len(rows), len(candidates)))
    for i, (r, xi) in enumerate(zip(rows, x)):
        imp = baseline_local_linear(model.predict_proba, xi, cfg, groups, row_id=int(r))
        out[i] = [imp[v] for v in candidates]
    return out


@contextmanager
def _stage(name: str, timings: dict):
    start = time.perf_counter()
    logger.info("stage %s", name)
    try:
        yield
    except StageError:
        raise
    except CennetError as exc:
        raise StageError(name, exc) from exc
    finally:
        timings[name] = time.perf_counter() - start


def _compare(a: RankResult, b: RankResult) -> dict:
    hits_a = a.per_row == 1
    hits_b = b.per_row == 1
    return {
        "welch_p": welch_t(a.per_row, b.per_row),
        "mcnemar_top1_p": mcnemar(int(np.sum(hits_a & ~hits_b)), int(np.sum(~hits_a & hits_b))),
        "cennet_better": bool(a.mean < b.mean),
    }


def run_experiment(config: Mapping, jobs: int = 1) -> dict:
    """Execute the full protocol and return report, timings and explanations."""
    cfg = resolve_config(config)
    timings: dict[str, float] = {}
    with _stage("generate", timings):
        ds, gt = build_dataset(cfg)
    features = list(gt.candidate_vars)
    with _stage("train", timings):
        t = cfg["train"]
        model = train(ds, TrainConfig(epochs=int(t["epochs"]), batch_size=int(t["batch"]), lr=float(t["lr"]),
                                      seed=int(t["seed"]), init=t["init"]), features)
    c = cfg["causal"]
    with _stage("discover", timings):
        report = global_explain(model, ds, alpha=float(c["alpha"]), max_cond=int(c["max_cond"]),
                                n_bins=int(c["n_bins"]), pool=c["pool"], jobs=jobs)
    e, ev = cfg["explain"], cfg["eval"]
    combo = ev["combo_size"]
    with _stage("cache", timings):
        m = max(int(e["m"]), int(combo or 1))
        cache = build_cache(model, report, ds, ExplainConfig(m=m, smoothing=float(e["smoothing"])))
    test_rows = ds.rows("test")
    if ev["test_rows"] is not None:
        test_rows = test_rows[: int(ev["test_rows"])]
    gt_test = gt.restrict(test_rows)
    xcfg = ExplainConfig(m=int(e["m"]), smoothing=float(e["smoothing"]), emi_topk=e["emi_topk"], order=e["order"])
    with _stage("explain", timings):
        lists = explain_rows(model, report, cache, ds, test_rows, xcfg, jobs=jobs)
    results: dict[str, dict] = {"cennet": {}}
    with _stage("rank_cennet", timings):
        singles = [(v,) for v in features]
        single = cennet_scores(model, report, cache, ds, test_rows, singles, e["order"])
        results["cennet"]["single"] = rank_single(single, gt_test)
        if combo:
            keys = combo_keys(features, int(combo))
            scores = cennet_scores(model, report, cache, ds, test_rows, keys, e["order"])
            results["cennet"]["combo"] = rank_combo(scores, gt_test, int(combo))
    if ev["baseline"] is not False and ev["baseline"] is not None:
        bcfg = BaselineConfig(**ev["baseline"])
        with _stage("rank_baseline", timings):
            imp = baseline_scores(model, ds, test_rows, features, bcfg)
            results["baseline"] = {"single": rank_single(imp, gt_test)}
            if combo:
                summed = combo_from_singles(imp, features, int(combo))
                results["baseline"]["combo"] = rank_combo(summed, gt_test, int(combo))

    x_test = model.encode(ds, ds.rows("test"))
    labels = ds.labels()
    val_curve = model.val_pr_auc
    doc = {
        "config": cfg,
        "dataset": {
            "n_rows": ds.n_rows,
            "target": ds.target,
            "positive": ds.positive,
            "candidates": features,
            "important_sets": [list(s) for s in gt.important_sets],
            "n_test_ranked": int(len(test_rows)),
        },
        "model": {
            "best_epoch": model.best_epoch,
            "val_pr_auc": float(max(val_curve)) if val_curve else None,
            "test_pr_auc": pr_auc(model.predict_proba(x_test), labels[ds.rows("test")]),
        },
        "ccv": {k: list(v) for k, v in report.ccv.items()},
        "warnings": list(report.warnings),
        "results": {meth: {lvl: r.to_json() for lvl, r in res.items()} for meth, res in results.items()},
    }
    if "baseline" in results:
        doc["comparison"] = {lvl: _compare(results["cennet"][lvl], results["baseline"][lvl])
                             for lvl in results["cennet"]}
    label = bin_labeller(report)
    top_n = int(ev["top_n"])
    explanations = []
    for lst in lists:
        item = lst.to_json(label)
        item["explanations"] = item["explanations"][:top_n]
        explanations.append(item)
    return {"report": doc, "timings": timings, "explanations": explanations}


def format_table(doc: Mapping, timings: Mapping | None = None) -> str:
    lines = [f"target {doc['dataset']['target']}  important {doc['dataset']['important_sets']}",
             f"val PR-AUC {doc['model']['val_pr_auc']:.4f}  test PR-AUC {doc['model']['test_pr_auc']:.4f}",
             "",
             f"{'method':<10}{'level':<8}{'mean rank':>12}{'std':>8}{'top1':>8}{'top5':>8}{'of':>6}"]
    for meth, res in doc["results"].items():
        for lvl, r in res.items():
            lines.append(f"{meth:<10}{lvl:<8}{r['mean']:>12.3f}{r['std']:>8.3f}{r['top1_ratio']:>8.3f}"
                         f"{r['top5_ratio']:>8.3f}{r['n_candidates']:>6d}")
    for lvl, cmp in doc.get("comparison", {}).items():
        lines.append(f"{lvl}: Welch p = {cmp['welch_p']:.3g}, McNemar(top-1) p = {cmp['mcnemar_top1_p']:.3g}")
    if timings:
        lines.append("")
        lines.extend(f"{k:<16}{v:>10.2f} s" for k, v in timings.items())
    return "\n".join(lines) + "\n"


def _dump(obj, path: Path) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")
    tmp.replace(path)


def write_outputs(result: Mapping, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "report.json", out / "timings.json", out / "explanations.json", out / "report.txt"]
    _dump(result["report"], paths[0])
    _dump(result["timings"], paths[1])
    _dump(result["explanations"], paths[2])
    paths[3].write_text(format_table(result["report"], result["timings"]))
    return paths
