"""Endplate and vertebral tilts from corner landmarks.

Tilts are radians in (-pi/2, pi/2]. Positive means the right end of the
endplate sits lower on screen (dy > 0 going left to right, y pointing down).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .landmarks import N_VERTEBRAE, SpineLandmarks

HALF_PI = math.pi / 2


class DegenerateEndplateError(ValueError):
    pass


@dataclass(frozen=True)
class TiltProfile:
    endplate_tilts: tuple[float, ...]  # 34 values: v0 upper, v0 lower, v1 upper, ...
    vertebral_tilts: tuple[float, ...]  # 17 values

    @classmethod
    def from_landmarks(cls, sl: SpineLandmarks) -> "TiltProfile":
        ep = endplate_tilts(sl)
        return cls(tuple(ep), tuple(vertebral_tilts(ep)))

    @property
    def vertebral_tilts_deg(self) -> list[float]:
        return [math.degrees(t) for t in self.vertebral_tilts]


def normalize_tilt(angle: float) -> float:
    """Fold a direction angle onto the half-open line-orientation range (-pi/2, pi/2]."""
    if angle > HALF_PI:
        angle -= math.pi
    elif angle <= -HALF_PI:
        angle += math.pi
    return angle


def line_tilt(left: Sequence[float], right: Sequence[float]) -> float:
    dx = float(right[0]) - float(left[0])
    dy = float(right[1]) - float(left[1])
    if dx == 0.0 and dy == 0.0:
        raise DegenerateEndplateError(f"coincident endplate landmarks at {tuple(left)}")
    return normalize_tilt(math.atan2(dy, dx))


def endplate_tilts(sl: SpineLandmarks) -> list[float]:
    """34 endplate tilts: upper edge TL->TR then lower edge BL->BR, per vertebra."""
    c = sl.corners
    tilts = []
    for v in range(N_VERTEBRAE):
        tl, tr, bl, br = c[v]
        try:
            tilts.append(line_tilt(tl, tr))
            tilts.append(line_tilt(bl, br))
        except DegenerateEndplateError as exc:
            raise DegenerateEndplateError(f"image {sl.image_id!r}, vertebra {v + 1}: {exc}") from None
    return tilts


def vertebral_tilts(endplate: Sequence[float]) -> list[float]:
    """Mean of each vertebra's upper and lower endplate tilt."""
    ep = np.asarray(endplate, dtype=np.float64)
    if ep.shape != (2 * N_VERTEBRAE,):
        raise ValueError(f"expected {2 * N_VERTEBRAE} endplate tilts, got {ep.shape}")
    return [(float(ep[2 * v]) + float(ep[2 * v + 1])) / 2 for v in range(N_VERTEBRAE)]
