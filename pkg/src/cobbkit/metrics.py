"""Landmark and Cobb angle evaluation metrics.

Landmark metrics work in millimetres using the ground truth's pixel spacing.
Angle metrics take one 3-angle vector per image.
"""

from __future__ import annotations

import warnings
from typing import Mapping, Sequence

import numpy as np

from .landmarks import SpineLandmarks

SDR_THRESHOLDS_MM = (1, 2, 3, 4)


class PairingError(ValueError):
    pass


class SkippedImageWarning(UserWarning):
    pass


def pair_by_id(pred: Sequence | Mapping, gt: Sequence | Mapping) -> list[tuple[str, object, object]]:
    """Match predictions to ground truth by image id; ids must agree exactly."""
    def index(items):
        if isinstance(items, Mapping):
            return dict(items)
        out = {}
        for item in items:
            if item.image_id in out:
                raise PairingError(f"duplicate image id {item.image_id!r}")
            out[item.image_id] = item
        return out

    p, g = index(pred), index(gt)
    if p.keys() != g.keys():
        diff = sorted(set(p) ^ set(g))
        raise PairingError(f"image ids differ: {diff}")
    return [(k, p[k], g[k]) for k in sorted(g)]


def _landmark_errors_mm(pairs) -> np.ndarray:
    if not pairs:
        raise PairingError("no image pairs to evaluate")
    out = []
    for pred, gt in pairs:
        if not isinstance(pred, SpineLandmarks) or not isinstance(gt, SpineLandmarks):
            raise TypeError("landmark metrics need SpineLandmarks pairs")
        out.append(np.linalg.norm(pred.points - gt.points, axis=1) * gt.pixel_spacing_mm)
    return np.concatenate(out)


def landmark_mse(pairs: Sequence[tuple[SpineLandmarks, SpineLandmarks]]) -> float:
    """Mean squared landmark distance in mm^2 over all landmarks of all images."""
    err = _landmark_errors_mm(pairs)
    return float(np.mean(err ** 2))


def sdr(pairs: Sequence[tuple[SpineLandmarks, SpineLandmarks]], delta_mm: float) -> float:
    """Percentage of landmarks within ``delta_mm`` of the truth (boundary inclusive)."""
    if delta_mm <= 0:
        raise ValueError("delta_mm must be positive")
    err = _landmark_errors_mm(pairs)
    return float(100.0 * np.count_nonzero(err <= delta_mm) / err.size)


def _angle_arrays(pairs):
    if not len(pairs):
        raise PairingError("no image pairs to evaluate")
    pred = np.array([p for p, _ in pairs], dtype=np.float64)
    gt = np.array([g for _, g in pairs], dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 2:
        raise PairingError(f"angle lists do not pair up: {pred.shape} vs {gt.shape}")
    return pred, gt


def smape_zero_denominators(pairs) -> list[int]:
    """Indices of image pairs whose angles are all zero on both sides."""
    pred, gt = _angle_arrays(pairs)
    return [int(i) for i in np.flatnonzero((pred + gt).sum(axis=1) == 0)]


def smape(pairs) -> float:
    """Per-image sum|a - g| / sum(a + g), averaged over images, in percent.

    Images with a zero denominator are skipped with a warning; if every image
    is skipped the result is NaN.
    """
    pred, gt = _angle_arrays(pairs)
    den = (pred + gt).sum(axis=1)
    num = np.abs(pred - gt).sum(axis=1)
    ok = den > 0
    for i in np.flatnonzero(~ok):
        warnings.warn(f"SMAPE: image pair {i} has all-zero angles, skipped", SkippedImageWarning,
                      stacklevel=2)
    if not ok.any():
        return float("nan")
    return float(100.0 * np.mean(num[ok] / den[ok]))


def circular_distance_deg(a, g) -> np.ndarray:
    d = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(g, dtype=np.float64)) % 360.0
    return np.minimum(d, 360.0 - d)


def angle_errors(pairs) -> dict[str, float]:
    """CMAE over all angles; ED/MD/CD as per-image L2/L1/Linf norms averaged over images."""
    pred, gt = _angle_arrays(pairs)
    diff = pred - gt
    return {
        "cmae_deg": float(np.mean(circular_distance_deg(pred, gt))),
        "ed_deg": float(np.mean(np.sqrt((diff ** 2).sum(axis=1)))),
        "md_deg": float(np.mean(np.abs(diff).sum(axis=1))),
        "cd_deg": float(np.mean(np.abs(diff).max(axis=1))),
    }
