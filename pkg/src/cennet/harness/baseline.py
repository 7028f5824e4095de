"""Local linear surrogate used as the comparison explainer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from ..errors import DataError


@dataclass(frozen=True)
class BaselineConfig:
    n_perturbations: int = 500
    kernel_width: float | None = None  # default 0.75 * sqrt(d)
    ridge: float = 1.0
    seed: int = 42
    scale: float = 1.0

    def __post_init__(self):
        if self.n_perturbations < 10:
            raise DataError("n_perturbations must be >= 10")
        if self.ridge < 0 or self.scale <= 0:
            raise DataError("ridge must be >= 0 and scale > 0")


def _weighted_ridge(a: np.ndarray, y: np.ndarray, w: np.ndarray, ridge: float) -> np.ndarray:
    # intercept handled by weighted centering, so it is not penalized
    sw = w.sum()
    a_mean = (w[:, None] * a).sum(axis=0) / sw
    y_mean = (w * y).sum() / sw
    ac = a - a_mean
    yc = y - y_mean
    gram = ac.T @ (w[:, None] * ac)
    rhs = ac.T @ (w * yc)
    lam = ridge
    for _ in range(12):
        mat = gram + lam * np.eye(gram.shape[0])
        if np.linalg.cond(mat) < 1e12:
            return np.linalg.solve(mat, rhs)
        lam = max(lam * 10.0, 1e-6)
    return np.linalg.lstsq(gram + lam * np.eye(gram.shape[0]), rhs, rcond=None)[0]


def baseline_local_linear(predict: Callable[[np.ndarray], np.ndarray], row: np.ndarray,
                          cfg: BaselineConfig | None = None,
                          groups: Mapping[str, Sequence[int]] | None = None,
                          row_id: int = 0) -> dict[str, float] | np.ndarray:
    """Absolute coefficients of a kernel-weighted ridge fit around ``row``.

    Gaussian perturbations of the (encoded) row are scored by ``predict``.
    With ``groups`` the absolute coefficients of each variable's encoded
    columns are summed and a mapping is returned.
    """
    cfg = cfg or BaselineConfig()
    row = np.asarray(row, dtype=np.float64)
    d = row.shape[0]
    rng = np.random.default_rng([cfg.seed, row_id])
    noise = rng.normal(0.0, cfg.scale, size=(cfg.n_perturbations, d))
    samples = row + noise
    target = np.asarray(predict(samples), dtype=np.float64)
    width = cfg.kernel_width or 0.75 * np.sqrt(d)
    dist2 = (noise**2).sum(axis=1)
    weights = np.exp(-dist2 / width**2)
    if weights.sum() <= 0:
        weights = np.ones_like(weights)
    coef = np.abs(_weighted_ridge(noise, target, weights, cfg.ridge))
    if groups is None:
        return coef
    return {name: float(coef[list(cols)].sum()) for name, cols in groups.items()}
