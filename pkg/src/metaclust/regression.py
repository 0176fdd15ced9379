"""Supervised machinery for the meta layer.

Least-squares linear regression (with a ridge fallback for rank-deficient
designs) and the five-number meta-feature vector used by the algorithm
selector: dimensionality, example count, covariance eigenvalue extrema, and
the silhouette of the candidate clustering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from metaclust.data_model import Dataset, Partition
from metaclust.metrics import silhouette_score

__all__ = [
    "LinearModel",
    "PhiFeatures",
    "fit_least_squares",
    "predict",
    "phi_features",
    "symmetric_eigen_extrema",
]

RIDGE_JITTER = 1e-8


@dataclass(frozen=True)
class LinearModel:
    """Fitted regression weights plus intercept."""

    weights: np.ndarray
    intercept: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or not np.all(np.isfinite(w)) or not np.isfinite(self.intercept):
            raise ValueError("model coefficients must be a finite vector and scalar")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def to_json(self) -> str:
        return json.dumps({"weights": list(self.weights), "intercept": self.intercept})

    @staticmethod
    def from_json(text: str) -> "LinearModel":
        obj = json.loads(text)
        return LinearModel(weights=np.asarray(obj["weights"], dtype=float), intercept=float(obj["intercept"]))


@dataclass(frozen=True)
class PhiFeatures:
    """Meta-features of (dataset, candidate clustering)."""

    d: int
    m: int
    sigma_min: float
    sigma_max: float
    sil: float

    def __post_init__(self):
        if self.sigma_min < -1e-9:
            raise ValueError(f"covariance must be PSD up to tolerance, got sigma_min={self.sigma_min}")
        if self.sigma_min > self.sigma_max:
            raise ValueError("sigma_min exceeds sigma_max")

    def as_vector(self) -> np.ndarray:
        return np.array([self.d, self.m, self.sigma_min, self.sigma_max, self.sil], dtype=float)


def fit_least_squares(features: Sequence, targets: Sequence[float]) -> LinearModel:
    """Minimize sum((w.x + c - y)^2) via the normal equations.

    Rank-deficient designs are solved with a ridge jitter on the normal
    equations instead of failing; the fit is deterministic.
    """
    x = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.asarray(targets, dtype=float)
    if x.shape[0] == 0:
        raise ValueError("need at least 1 sample")
    if x.shape[0] != y.shape[0]:
        raise ValueError("features/targets length mismatch")
    design = np.hstack([x, np.ones((x.shape[0], 1))])
    gram = design.T @ design
    rhs = design.T @ y
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        gram = gram + RIDGE_JITTER * np.eye(gram.shape[0])
    coef = np.linalg.solve(gram, rhs)
    return LinearModel(weights=coef[:-1], intercept=float(coef[-1]))


def predict(model: LinearModel, x: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != model.weights.shape:
        raise ValueError(f"dimension mismatch: model has {model.weights.shape[0]} weights, input has shape {x.shape}")
    return float(model.weights @ x + model.intercept)


def symmetric_eigen_extrema(s: np.ndarray, tol: float = 1e-12) -> tuple:
    """Smallest and largest eigenvalue of a symmetric matrix via cyclic Jacobi.

    Rotations sweep until the off-diagonal Frobenius mass falls below
    tol * ||S||_F (or the matrix is numerically diagonal).
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError("matrix must be square")
    if np.abs(s - s.T).max(initial=0.0) > 1e-9:
        raise ValueError("matrix is not symmetric within 1e-9")
    a = (s + s.T) / 2.0
    d = a.shape[0]
    if d == 1:
        return float(a[0, 0]), float(a[0, 0])

    norm = np.sqrt((a**2).sum())
    threshold = tol * norm
    for _ in range(100):
        off = np.sqrt(max((a**2).sum() - (np.diag(a) ** 2).sum(), 0.0))
        if off <= threshold or off == 0.0:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                # Classic Jacobi rotation zeroing a[p, q].  The quotient may
                # overflow to inf for denormal apq; the 1e150 branch below
                # turns that into a (correct) zero-angle rotation.
                with np.errstate(over="ignore"):
                    tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau == 0:
                    t = 1.0
                elif abs(tau) > 1e150:  # avoid overflow in tau*tau; limit is 1/(2 tau)
                    t = 1.0 / (2.0 * tau)
                else:
                    t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                sn = t * c
                aip = a[:, p].copy()
                aiq = a[:, q].copy()
                a[:, p] = c * aip - sn * aiq
                a[:, q] = sn * aip + c * aiq
                a[p, :] = a[:, p]
                a[q, :] = a[:, q]
                a[p, p] = c * c * aip[p] - 2.0 * sn * c * apq + sn * sn * aiq[q]
                a[q, q] = sn * sn * aip[p] + 2.0 * sn * c * apq + c * c * aiq[q]
                a[p, q] = a[q, p] = 0.0
    eig = np.diag(a)
    return float(eig.min()), float(eig.max())


def phi_features(dataset: Dataset, c: Partition) -> PhiFeatures:
    """Build the 5-feature vector for (dataset, candidate clustering)."""
    pts = dataset.points
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / pts.shape[0]
    lo, hi = symmetric_eigen_extrema(cov)
    sil = silhouette_score(pts, c)
    return PhiFeatures(d=dataset.d, m=dataset.n, sigma_min=lo, sigma_max=hi, sil=sil)
