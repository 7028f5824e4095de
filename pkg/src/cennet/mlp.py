"""Feed-forward binary classifier trained with Adam.

Architecture ``d_in -> 16 -> p -> 1`` with ReLU hidden layers and a logistic
output. The last hidden layer (width ``p``) is the layer whose neurons are
analysed causally; :func:`nnlu_view` exposes its activations together with
the output weights and bias so that ``logit = activations @ w + b``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import DataError, DegenerateTargetError, TrainingDivergedError
from .store import NUMERIC, TabularDataset, check_binary_target

logger = logging.getLogger(__name__)

INITS = ("glorot", "he", "uniform")


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 42
    hidden: tuple[int, ...] = (16, 5)
    init: str = "glorot"  # "glorot" (uniform), "he" (normal) or "uniform" (+-1/sqrt(fan_in))
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.epochs < 1:
            raise DataError("epochs must be >= 1")
        if self.batch_size < 1 or self.lr <= 0:
            raise DataError("batch_size must be >= 1 and lr > 0")
        if len(self.hidden) < 1:
            raise DataError("need at least one hidden layer")
        if self.init not in INITS:
            raise DataError(f"init must be one of {INITS}")


@dataclass
class FeatureEncoder:
    """Standardizes numeric columns and one-hot encodes categorical ones (train statistics)."""

    features: list[str]
    kinds: dict[str, str]
    means: dict[str, float] = field(default_factory=dict)
    scales: dict[str, float] = field(default_factory=dict)
    levels: dict[str, list[str]] = field(default_factory=dict)

    @classmethod
    def fit(cls, ds: TabularDataset, rows: np.ndarray, features: Sequence[str] | None = None) -> "FeatureEncoder":
        names = list(features) if features is not None else ds.features
        enc = cls(features=names, kinds={c: ds.kinds[c] for c in names})
        for c in names:
            col = ds.columns[c][rows]
            if ds.kinds[c] == NUMERIC:
                mean = float(np.mean(col))
                std = float(np.std(col))
                enc.means[c] = mean
                enc.scales[c] = std if std > 0 else 1.0
            else:
                present = {str(v) for v in col}
                enc.levels[c] = [s for s in ds.states[c] if s in present]
        return enc

    @property
    def width(self) -> int:
        return sum(1 if self.kinds[c] == NUMERIC else len(self.levels[c]) for c in self.features)

    def groups(self) -> dict[str, list[int]]:
        """Encoded column indices belonging to each input variable."""
        out, j = {}, 0
        for c in self.features:
            k = 1 if self.kinds[c] == NUMERIC else len(self.levels[c])
            out[c] = list(range(j, j + k))
            j += k
        return out

    def encode(self, ds: TabularDataset, rows: np.ndarray | None = None) -> np.ndarray:
        n = ds.n_rows if rows is None else len(rows)
        out = np.zeros((n, self.width))
        for c, idx in self.groups().items():
            col = ds.columns[c] if rows is None else ds.columns[c][rows]
            if self.kinds[c] == NUMERIC:
                out[:, idx[0]] = (np.asarray(col, dtype=np.float64) - self.means[c]) / self.scales[c]
            else:
                lookup = {s: k for k, s in enumerate(self.levels[c])}
                # unseen categories stay all-zero
                for r, v in enumerate(col):
                    k = lookup.get(str(v))
                    if k is not None:
                        out[r, idx[k]] = 1.0
        return out

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "FeatureEncoder":
        return cls(**doc)


@dataclass
class MlpModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    encoder: FeatureEncoder
    config: TrainConfig
    best_epoch: int = 0
    val_pr_auc: list[float] = field(default_factory=list)

    @property
    def nnlu_width(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def output_weights(self) -> np.ndarray:
        return self.weights[-1][:, 0]

    @property
    def output_bias(self) -> float:
        return float(self.biases[-1][0])

    def hidden(self, x: np.ndarray) -> list[np.ndarray]:
        """ReLU activations of every hidden layer."""
        acts = []
        h = x
        for W, c in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ W + c, 0.0)
            acts.append(h)
        return acts

    def nnlu(self, x: np.ndarray) -> np.ndarray:
        return self.hidden(x)[-1]

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self.nnlu(x) @ self.output_weights + self.output_bias

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return expit(self.logits(x))

    def encode(self, ds: TabularDataset, rows: np.ndarray | None = None) -> np.ndarray:
        return self.encoder.encode(ds, rows)

    def to_json(self) -> dict:
        return {
            "architecture": [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights],
            "activation": "relu",
            "output": "logistic",
            "weights": [W.tolist() for W in self.weights],
            "biases": [c.tolist() for c in self.biases],
            "config": asdict(self.config),
            "encoder": self.encoder.to_json(),
            "best_epoch": self.best_epoch,
            "val_pr_auc": self.val_pr_auc,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "MlpModel":
        cfg = dict(doc["config"])
        cfg["hidden"] = tuple(cfg["hidden"])
        return cls(
            weights=[np.asarray(W, dtype=np.float64) for W in doc["weights"]],
            biases=[np.asarray(c, dtype=np.float64) for c in doc["biases"]],
            encoder=FeatureEncoder.from_json(doc["encoder"]),
            config=TrainConfig(**cfg),
            best_epoch=int(doc.get("best_epoch", 0)),
            val_pr_auc=list(doc.get("val_pr_auc", [])),
        )


@dataclass(frozen=True)
class NnluView:
    activations: np.ndarray
    weights: np.ndarray
    bias: float
    logit: float


def nnlu_view(model: MlpModel, row: np.ndarray) -> NnluView:
    """Last-hidden-layer decomposition of one encoded input row."""
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1 or row.shape[0] != model.weights[0].shape[0]:
        raise DataError(f"row has shape {row.shape}, model expects ({model.weights[0].shape[0]},)")
    acts = model.nnlu(row[None, :])[0]
    w = model.output_weights.copy()
    b = model.output_bias
    return NnluView(activations=acts, weights=w, bias=b, logit=float(acts @ w + b))


def split_signs(model_or_weights) -> tuple[list[int], list[int]]:
    """Neuron indices with non-negative and with negative output weights."""
    w = model_or_weights.output_weights if isinstance(model_or_weights, MlpModel) else np.asarray(model_or_weights)
    pos = [i for i, v in enumerate(w) if v >= 0]
    neg = [i for i, v in enumerate(w) if v < 0]
    return pos, neg


def pr_auc(scores, labels) -> float:
    """Step-wise area under the precision-recall curve.

    Thresholds sit at every distinct score; each step adds the recall gain
    times the precision at that threshold.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(np.int64)
    if s.shape != y.shape or s.ndim != 1:
        raise DataError("scores and labels must be 1-d arrays of equal length")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise DegenerateTargetError("PR-AUC needs both positive and negative labels")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    tp = np.cumsum(y)
    fp = np.cumsum(1 - y)
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp, fp = tp[last], fp[last]
    precision = tp / (tp + fp)
    recall = tp / n_pos
    gain = np.diff(np.r_[0.0, recall])
    return float(np.sum(gain * precision))


def _init_params(sizes: list[int], rng: np.random.Generator,
                 init: str = "glorot") -> tuple[list[np.ndarray], list[np.ndarray]]:
    weights, biases = [], []
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = k == len(sizes) - 2
        if init == "he":
            std = np.sqrt(1.0 / fan_in) if last else np.sqrt(2.0 / fan_in)
            weights.append(rng.normal(0.0, std, size=(fan_in, fan_out)))
        elif init == "glorot":
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        else:
            lim = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def loss_and_grads(weights: list[np.ndarray], biases: list[np.ndarray], x: np.ndarray,
                   y: np.ndarray) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Mean binary cross-entropy on logits and its gradients by backpropagation."""
    hs = [x]
    pre = []
    h = x
    for W, c in zip(weights[:-1], biases[:-1]):
        a = h @ W + c
        pre.append(a)
        h = np.maximum(a, 0.0)
        hs.append(h)
    z = (h @ weights[-1] + biases[-1])[:, 0]
    n = len(y)
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    dz = ((expit(z) - y) / n)[:, None]
    gW = [None] * len(weights)
    gb = [None] * len(biases)
    gW[-1] = hs[-1].T @ dz
    gb[-1] = dz.sum(axis=0)
    delta = dz @ weights[-1].T
    for k in range(len(weights) - 2, -1, -1):
        delta = delta * (pre[k] > 0)
        gW[k] = hs[k].T @ delta
        gb[k] = delta.sum(axis=0)
        if k > 0:
            delta = delta @ weights[k].T
    return loss, gW, gb


def train(ds: TabularDataset, cfg: TrainConfig | None = None,
          features: Sequence[str] | None = None) -> MlpModel:
    """Train on the train split; keep the epoch with the best validation PR-AUC."""
    cfg = cfg or TrainConfig()
    train_rows, val_rows = ds.rows("train"), ds.rows("val")
    if len(train_rows) == 0 or len(val_rows) == 0:
        raise DataError("training needs non-empty train and val splits")
    labels = ds.labels()
    y_tr, y_val = labels[train_rows].astype(np.float64), labels[val_rows]
    check_binary_target(labels[train_rows])
    check_binary_target(y_val)

    encoder = FeatureEncoder.fit(ds, train_rows, features)
    x_tr = encoder.encode(ds, train_rows)
    x_val = encoder.encode(ds, val_rows)

    rng = np.random.default_rng(cfg.seed)
    weights, biases = _init_params([x_tr.shape[1], *cfg.hidden, 1], rng, cfg.init)
    params = weights + biases
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    step = 0
    model = MlpModel(weights, biases, encoder, cfg)
    best = (-np.inf, None, 0)
    history = []
    n = len(train_rows)
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            # overflow is caught by the finiteness check below
            with np.errstate(over="ignore", invalid="ignore"):
                loss, gW, gb = loss_and_grads(weights, biases, x_tr[idx], y_tr[idx])
            if not np.isfinite(loss) or not all(np.isfinite(g).all() for g in gW + gb):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
            step += 1
            for k, (p, g) in enumerate(zip(params, gW + gb)):
                m[k] = cfg.beta1 * m[k] + (1 - cfg.beta1) * g
                v[k] = cfg.beta2 * v[k] + (1 - cfg.beta2) * g * g
                m_hat = m[k] / (1 - cfg.beta1 ** step)
                v_hat = v[k] / (1 - cfg.beta2 ** step)
                p -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
        score = pr_auc(model.predict_proba(x_val), y_val)
        history.append(score)
        if score > best[0]:
            best = (score, ([W.copy() for W in weights], [c.copy() for c in biases]), epoch)
        logger.debug("epoch %d val PR-AUC %.4f", epoch, score)
    (best_w, best_b), best_epoch = best[1], best[2]
    logger.info("best epoch %d, val PR-AUC %.4f", best_epoch, best[0])
    return MlpModel(best_w, best_b, encoder, cfg, best_epoch=best_epoch, val_pr_auc=history)
