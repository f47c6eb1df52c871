"""Landmark-aware training objective and a finite-difference gradient checker.

total = alpha * heatmap_loss + landmark_loss, where the heatmap loss is a
KL divergence whose pixels are weighted by ``(beta * y + 1) ** y`` so the
landmark foreground counts more than the background.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

N_LANDMARK_COORDS = 136


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 5.0
    beta: float = 15.0
    floor: float = 1e-12

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.floor <= 0:
            raise ValueError("floor must be positive")


def gaussian_heatmaps(centres, height: int, width: int, sigma: float = 2.0) -> np.ndarray:
    """One isotropic Gaussian per (x, y) centre, each normalised to sum 1."""
    centres = np.asarray(centres, dtype=np.float64).reshape(-1, 2)
    ys, xs = np.mgrid[0:height, 0:width]
    d2 = (xs[None] - centres[:, 0, None, None]) ** 2 + (ys[None] - centres[:, 1, None, None]) ** 2
    maps = np.exp(-d2 / (2 * sigma ** 2))
    return maps / maps.sum(axis=(1, 2), keepdims=True)


def check_heatmaps(maps, tol: float = 1e-6) -> np.ndarray:
    """Validate a (channels, H, W) stack of probability maps."""
    maps = np.asarray(maps, dtype=np.float64)
    if maps.ndim != 3:
        raise ValueError(f"heatmaps must be (channels, H, W), got {maps.shape}")
    if not np.all(np.isfinite(maps)):
        raise ValueError("heatmaps contain non-finite values")
    if np.any(maps < 0):
        raise ValueError("heatmaps contain negative values")
    sums = maps.sum(axis=(1, 2))
    if np.any(np.abs(sums - 1) > tol):
        raise ValueError(f"heatmap channels must sum to 1, got {sums.min()}..{sums.max()}")
    return maps


def foreground_weights(y, beta: float) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    return (beta * y + 1.0) ** y


def heatmap_loss(pred, gt, cfg: LossConfig = LossConfig()) -> tuple[float, np.ndarray]:
    """Weighted KL divergence averaged over channels, and its gradient w.r.t. ``pred``.

    ``pred`` is clamped below at ``cfg.floor`` before the log (zero gradient
    where the clamp is active); pixels with ``gt == 0`` contribute nothing.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    if pred.ndim < 2:
        raise ValueError("heatmaps need a leading channel axis")
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(gt))):
        raise ValueError("non-finite heatmap values")
    n_maps = pred.shape[0]
    w = foreground_weights(gt, cfg.beta)
    clamped = np.maximum(pred, cfg.floor)
    active = gt > 0
    terms = np.zeros_like(gt)
    terms[active] = w[active] * gt[active] * np.log(gt[active] / clamped[active])
    loss = float(terms.sum() / n_maps)
    grad = np.where(active & (pred >= cfg.floor), -w * gt / (n_maps * clamped), 0.0)
    return loss, grad


def landmark_loss(pred, gt) -> tuple[float, np.ndarray]:
    """Mean absolute coordinate error and its subgradient (zero at ties)."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    gt = np.asarray(gt, dtype=np.float64).ravel()
    if pred.shape != gt.shape:
        raise ValueError(f"length mismatch: {pred.size} vs {gt.size}")
    n = pred.size
    diff = pred - gt
    return float(np.abs(diff).sum() / n), np.sign(diff) / n


def total_loss(heatmap_part: float, landmark_part: float, cfg: LossConfig = LossConfig()) -> float:
    return cfg.alpha * heatmap_part + landmark_part


@dataclass
class GradCheckReport:
    max_rel_err: float
    mean_rel_err: float
    n_coords: int
    n_excluded: int
    rel_errors: np.ndarray

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_err <= tolerance


def finite_diff_check(loss_fn: Callable[[np.ndarray], tuple[float, np.ndarray]], point,
                      h: float = 1e-6, kinks=None, atol: float = 1e-300) -> GradCheckReport:
    """Compare ``loss_fn``'s analytic gradient with central differences.

    ``loss_fn(x)`` returns ``(value, gradient)``. ``kinks`` optionally gives,
    per coordinate, the location of a non-smooth point; coordinates within
    ``10 * h`` of it are skipped.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x0 = np.array(point, dtype=np.float64)
    _, analytic = loss_fn(x0.copy())
    analytic = np.asarray(analytic, dtype=np.float64).reshape(x0.shape)
    flat = x0.ravel()
    keep = np.ones(flat.size, dtype=bool)
    if kinks is not None:
        keep = np.abs(flat - np.asarray(kinks, dtype=np.float64).ravel()) >= 10 * h
    errs = []
    for idx in np.flatnonzero(keep):
        xp = flat.copy()
        xm = flat.copy()
        xp[idx] += h
        xm[idx] -= h
        fd = (loss_fn(xp.reshape(x0.shape))[0] - loss_fn(xm.reshape(x0.shape))[0]) / (2 * h)
        an = analytic.ravel()[idx]
        scale = max(abs(fd), abs(an), atol)
        errs.append(abs(fd - an) / scale if fd != an else 0.0)
    errs = np.array(errs)
    return GradCheckReport(
        max_rel_err=float(errs.max()) if errs.size else 0.0,
        mean_rel_err=float(errs.mean()) if errs.size else 0.0,
        n_coords=int(errs.size),
        n_excluded=int((~keep).sum()),
        rel_errors=errs,
    )
