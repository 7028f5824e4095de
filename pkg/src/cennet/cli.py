"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or parse error, 3 numeric failure.
Logs go to standard error; the level comes from ``CENNET_LOG`` (default INFO).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy

from . import __version__
from .causal.discovery import CausalReport, global_explain
from .datagen import BUILTIN_MODELS, KINDS, SyntheticSpec, build_candidates, generate, load_builtin, parse_bn, sample_bn
from .datagen.synthetic import GroundTruth
from .errors import CennetError, DataError, NumericError
from .explain import ORDERS, ExplainConfig, bin_labeller, build_cache, explain_rows
from .harness.experiment import StageError, load_config, run_experiment, write_outputs
from .mlp import INITS, MlpModel, TrainConfig, train
from .store import load_dataset, save_dataset, split

logger = logging.getLogger("cennet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seeds: dict = field(default_factory=dict)
    artifacts: list[str] = field(default_factory=list)
    versions: dict = field(default_factory=dict)
    started: str = ""
    finished: str = ""
    exit_code: int | None = None
    error: str | None = None

    def write(self, path: Path) -> None:
        doc = {k: getattr(self, k) for k in self.__dataclass_fields__}
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(doc, indent=2, default=str) + "\n")
        tmp.replace(path)


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def _versions() -> dict:
    return {"cennet": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _dump_json(obj, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2) + "\n")
    tmp.replace(path)
    return path


def _read_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def _ratios(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}") from None
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated ratios")
    return vals


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return v


# ---------------------------------------------------------------- subcommands


def cmd_generate(args) -> list[Path]:
    ds, gt = generate(SyntheticSpec(args.kind, args.n, args.seed))
    ds = split(ds, args.split, args.seed)
    return [save_dataset(ds, args.out)]


def _load_bn(ref: str):
    path = Path(ref)
    if path.exists():
        try:
            return parse_bn(path.read_text())
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc}") from exc
    if ref in BUILTIN_MODELS:
        return load_builtin(ref)
    raise DataError(f"{ref!r} is neither a readable file nor a built-in model {BUILTIN_MODELS}")


def cmd_sample_bn(args) -> list[Path]:
    bn = _load_bn(args.model)
    gt = build_candidates(bn, args.target, explicit=args.candidates)
    ds = sample_bn(bn, args.n, args.seed, target=args.target, columns=gt.candidate_vars)
    ds = replace(ds, meta=dict(ds.meta, ground_truth=gt.to_json()))
    ds = split(ds, args.split, args.seed)
    return [save_dataset(ds, args.out)]


def _features(ds, features: Sequence[str] | None) -> list[str]:
    if features:
        return list(features)
    gt = ds.meta.get("ground_truth")
    if gt:
        return list(GroundTruth.from_json(gt).candidate_vars)
    return ds.features


def cmd_train(args) -> list[Path]:
    ds = load_dataset(args.data)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch, lr=args.lr, seed=args.seed, init=args.init)
    model = train(ds, cfg, _features(ds, args.features))
    return [_dump_json(model.to_json(), Path(args.out))]


def cmd_discover(args) -> list[Path]:
    model = MlpModel.from_json(_read_json(args.model))
    ds = load_dataset(args.data)
    report = global_explain(model, ds, alpha=args.alpha, max_cond=args.max_cond, pool=args.pool, jobs=args.jobs)
    return [_dump_json(report.to_json(), Path(args.out))]


def _select_rows(ds, spec: str) -> np.ndarray:
    if spec in ("train", "val", "test", "all"):
        return ds.rows(spec)
    try:
        rows = np.array([int(v) for v in spec.split(",")], dtype=np.int64)
    except ValueError:
        raise DataError(f"--rows must be a split name or comma-separated indices, got {spec!r}") from None
    if rows.size and (rows.min() < 0 or rows.max() >= ds.n_rows):
        raise DataError(f"row index out of range [0, {ds.n_rows})")
    return rows


def cmd_explain(args) -> list[Path]:
    model = MlpModel.from_json(_read_json(args.model))
    report = CausalReport.from_json(_read_json(args.report))
    ds = load_dataset(args.data)
    cfg = ExplainConfig(m=args.m, smoothing=args.smoothing, emi_topk=args.emi_topk, order=args.order)
    cache = build_cache(model, report, ds, cfg)
    lists = explain_rows(model, report, cache, ds, _select_rows(ds, args.rows), cfg, jobs=args.jobs)
    label = bin_labeller(report)
    docs = []
    for lst in lists:
        doc = lst.to_json(label)
        if args.top is not None:
            doc["explanations"] = doc["explanations"][: args.top]
        docs.append(doc)
    out = {"order": cfg.order, "m": cfg.m, "smoothing": cfg.smoothing, "rows": docs}
    return [_dump_json(out, Path(args.out))]


def cmd_evaluate(args) -> list[Path]:
    config = load_config(args.config)
    result = run_experiment(config, jobs=args.jobs)
    return write_outputs(result, args.out)


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cennet", description="Causal explanations of a small neural classifier's last hidden layer.")
    p.add_argument("--version", action="version", version=f"cennet {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic benchmark dataset")
    g.add_argument("--kind", required=True, choices=KINDS)
    g.add_argument("--n", type=_positive_int, default=10000)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--split", type=_ratios, default=[0.8, 0.1, 0.1], help="train,val,test ratios")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate, out_kind="dir")

    s = sub.add_parser("sample-bn", help="sample a dataset from a Bayesian-network model file")
    s.add_argument("--model", required=True, help=f"model file, or one of {', '.join(BUILTIN_MODELS)}")
    s.add_argument("--target", required=True)
    s.add_argument("--n", type=_positive_int, default=10000)
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--split", type=_ratios, default=[0.9, 0.05, 0.05])
    s.add_argument("--candidates", nargs="+", default=None, help="explicit candidate variables")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample_bn, out_kind="dir")

    t = sub.add_parser("train", help="train the classifier")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, default=42)
    t.add_argument("--epochs", type=_positive_int, default=100)
    t.add_argument("--batch", type=_positive_int, default=64)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--init", choices=INITS, default="glorot")
    t.add_argument("--features", nargs="+", default=None)
    t.set_defaults(func=cmd_train, out_kind="file")

    d = sub.add_parser("discover", help="find each neuron's characteristic correlated variables")
    d.add_argument("--model", required=True)
    d.add_argument("--data", required=True)
    d.add_argument("--alpha", type=float, default=0.01)
    d.add_argument("--max-cond", type=int, default=3)
    d.add_argument("--pool", choices=("candidates", "adjacent"), default="candidates")
    d.add_argument("--jobs", type=_positive_int, default=1)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_discover, out_kind="file")

    e = sub.add_parser("explain", help="ranked local explanations for rows")
    e.add_argument("--model", required=True)
    e.add_argument("--report", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--rows", default="test", help="train, val, test, all or comma-separated indices")
    e.add_argument("--m", type=_positive_int, default=2)
    e.add_argument("--smoothing", type=float, default=1.0)
    e.add_argument("--emi-topk", type=_positive_int, default=None)
    e.add_argument("--order", choices=ORDERS, default="evidence")
    e.add_argument("--top", type=_positive_int, default=None, help="keep only the best N per row")
    e.add_argument("--jobs", type=_positive_int, default=1)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_explain, out_kind="file")

    v = sub.add_parser("evaluate", help="run a full experiment from a JSON config")
    v.add_argument("--config", required=True)
    v.add_argument("--jobs", type=_positive_int, default=1)
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_evaluate, out_kind="dir")
    return p


def _setup_logging() -> None:
    level = os.environ.get("CENNET_LOG", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)


def _manifest_path(args) -> Path | None:
    out = Path(args.out)
    if args.out_kind == "dir":
        out.mkdir(parents=True, exist_ok=True)
        return out / "manifest.json"
    if out.parent.exists():
        return out.with_name(out.name + ".manifest.json")
    return None


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    snapshot = {k: v for k, v in vars(args).items() if k not in ("func", "out_kind")}
    manifest = RunManifest(subcommand=args.command, config=snapshot,
                           seeds={k: v for k, v in snapshot.items() if "seed" in k},
                           versions=_versions(), started=_now())
    code = EXIT_OK
    try:
        manifest.artifacts = [str(p) for p in args.func(args)]
    except StageError as exc:
        logger.error("%s", exc)
        code = EXIT_NUMERIC if isinstance(exc.cause, NumericError) else EXIT_DATA
        manifest.error = str(exc)
    except NumericError as exc:
        logger.error("numeric failure: %s", exc)
        code, manifest.error = EXIT_NUMERIC, str(exc)
    except CennetError as exc:
        logger.error("%s", exc)
        code, manifest.error = EXIT_DATA, str(exc)
    manifest.exit_code = code
    manifest.finished = _now()
    try:
        path = _manifest_path(args)
        if path is not None:
            manifest.write(path)
    except OSError as exc:
        logger.warning("could not write run manifest: %s", exc)
    return code


if __name__ == "__main__":
    sys.exit(main())
