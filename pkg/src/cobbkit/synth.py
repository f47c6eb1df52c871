"""Synthetic spines with known tilts, and a brute-force Cobb angle oracle.

``oracle_cobb`` re-derives the segment-aware angles by exhaustive scanning and
deliberately shares no code with :mod:`cobbkit.cacm`; tests compare the two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .landmarks import N_VERTEBRAE, SpineLandmarks
from .report import CobbReport, SegmentWindow
from .tilt import TiltProfile

# Two-curve profile used throughout the tests and docs (degrees).
S_CURVE_DEG = (10, 8, 5, 2, 0, -3, -7, -10, -8, -4, 0, 3, 6, 9, 7, 4, 1)

RANDOM_TILT_RANGE_DEG = 25.0


class SpineGeometryError(ValueError):
    pass


@dataclass(frozen=True)
class SpineSpec:
    tilt_profile_deg: tuple[float, ...]
    vertebra_width_px: float = 40.0
    vertebra_height_px: float = 28.0
    gap_px: float = 24.0
    jitter_px: float = 0.0
    seed: int = 0
    origin: tuple[float, float] = (256.0, 64.0)

    def __post_init__(self):
        object.__setattr__(self, "tilt_profile_deg", tuple(float(t) for t in self.tilt_profile_deg))
        if len(self.tilt_profile_deg) != N_VERTEBRAE:
            raise ValueError(f"need {N_VERTEBRAE} tilts, got {len(self.tilt_profile_deg)}")
        if min(self.vertebra_width_px, self.vertebra_height_px, self.gap_px) <= 0:
            raise ValueError("width, height and gap must be positive")
        if self.jitter_px < 0:
            raise ValueError("jitter must be non-negative")


def random_profile(rng: np.random.Generator, spread_deg: float = RANDOM_TILT_RANGE_DEG) -> list[float]:
    """17 independent tilts, uniform in +-spread (degrees)."""
    return [float(v) for v in rng.uniform(-spread_deg, spread_deg, N_VERTEBRAE)]


def _corner_offsets(width: float, height: float, tilt: float) -> np.ndarray:
    c, s = math.cos(tilt), math.sin(tilt)
    rot = np.array([[c, -s], [s, c]])
    local = np.array([[-width / 2, -height / 2], [width / 2, -height / 2],
                      [-width / 2, height / 2], [width / 2, height / 2]])
    return local @ rot.T


def _check_clearance(upper: np.ndarray, lower: np.ndarray, upper_tilt: float,
                     lower_tilt: float, v: int) -> None:
    # lower edge of the upper body vs upper edge of the lower body, each tested
    # along the other body's own axis
    n_low = np.array([-math.sin(lower_tilt), math.cos(lower_tilt)])
    n_up = np.array([-math.sin(upper_tilt), math.cos(upper_tilt)])
    depth_a = max((p - lower[0]) @ n_low for p in upper[2:])
    depth_b = max((upper[2] - p) @ n_up for p in lower[:2])
    if depth_a >= 0 or depth_b >= 0:
        raise SpineGeometryError(
            f"vertebrae {v + 1} and {v + 2} overlap; increase gap_px or smooth the tilt profile"
        )


def generate_spine(spec: SpineSpec, image_id: str = "synthetic") -> tuple[SpineLandmarks, TiltProfile]:
    """Rectangular vertebrae rotated by their tilt, stacked along the spine axis.

    Consecutive centroids are joined by two half steps, each perpendicular to
    the tilt of the vertebra it leaves or enters, so both endplates of a body
    carry exactly its tilt.
    """
    tilts = [math.radians(t) for t in spec.tilt_profile_deg]
    w, h = spec.vertebra_width_px, spec.vertebra_height_px
    half_step = (h + spec.gap_px) / 2
    centre = np.array(spec.origin, dtype=np.float64)
    bodies = []
    for v, tilt in enumerate(tilts):
        if v:
            prev = tilts[v - 1]
            centre = centre + half_step * np.array([-math.sin(prev), math.cos(prev)])
            centre = centre + half_step * np.array([-math.sin(tilt), math.cos(tilt)])
        bodies.append(centre + _corner_offsets(w, h, tilt))
        if v:
            _check_clearance(bodies[v - 1], bodies[v], tilts[v - 1], tilt, v - 1)
    points = np.concatenate(bodies)
    if spec.jitter_px > 0:
        rng = np.random.default_rng(spec.seed)
        points = points + rng.uniform(-spec.jitter_px, spec.jitter_px, points.shape)
    truth = TiltProfile(tuple(t for t in tilts for _ in range(2)), tuple(tilts))
    return SpineLandmarks(image_id, points), truth


# ---------------------------------------------------------------------------
# brute-force oracle


def _is_inflection(t, k, eps):
    if k == 0 or k == len(t) - 1:
        return False
    if abs(t[k]) <= eps and t[k - 1] * t[k + 1] < 0:
        return True
    # sign change below: this vertebra is the one nearer zero (ties go up)
    if t[k] * t[k + 1] < 0 and abs(t[k]) <= abs(t[k + 1]):
        return True
    # sign change above: nearer zero strictly, else the upper one took it
    if t[k - 1] * t[k] < 0 and abs(t[k]) < abs(t[k - 1]):
        return True
    return False


def _scan_extremes(t, first, last):
    hi = lo = t[first]
    for i in range(first, last + 1):
        if t[i] > hi:
            hi = t[i]
        if t[i] < lo:
            lo = t[i]
    return hi, lo


def oracle_cobb(tilt_profile, epsilon: float = 1e-6, image_id: str = "",
                degrees: bool = False) -> CobbReport:
    """Exhaustive re-evaluation of the segment-aware angles.

    ``tilt_profile`` is radians unless ``degrees`` is true.
    """
    t = [math.radians(x) if degrees else float(x) for x in tilt_profile]
    n = len(t)
    to_deg = 180.0 / math.pi
    found = [k for k in range(n) if _is_inflection(t, k, epsilon)]
    m = len(found)
    if m == 0:
        hi, lo = _scan_extremes(t, 0, n - 1)
        return CobbReport(image_id, "CACM", ((hi - lo) * to_deg, 0.0, 0.0), (), (),
                          frozenset({"single_curve"}), tuple(t))

    windows = []
    inner = []
    for i in range(m):
        first = found[i - 1] if i > 0 else 0
        last = found[i + 1] if i < m - 1 else n - 1
        hi, lo = _scan_extremes(t, first, last)
        angle = (hi + abs(lo)) * to_deg
        inner.append(angle)
        windows.append(SegmentWindow("interior", first, last, angle))
    outer = []
    flags = set()
    for first, last in ((0, found[0]), (found[-1], n - 1)):
        hi, lo = _scan_extremes(t, first, last)
        if hi - abs(lo) < 0:
            flags.add("clamped_negative_end_angle")
        outer.append((hi - lo) * to_deg)
        windows.append(SegmentWindow("end", first, last, outer[-1]))

    table = {
        1: lambda: (inner[0], outer[0], outer[1]),
        2: lambda: (inner[0], inner[1], max(outer)),
        3: lambda: (inner[0], inner[1], inner[2]),
    }
    if m in table:
        angles = table[m]()
    else:
        flags.add("many_inflections")
        remaining = list(inner)
        picked = []
        for _ in range(3):
            best = 0
            for j in range(1, len(remaining)):
                if remaining[j] > remaining[best]:
                    best = j
            picked.append(remaining.pop(best))
        angles = tuple(picked)
    return CobbReport(image_id, "CACM", tuple(angles), tuple(found), tuple(windows),
                      frozenset(flags), tuple(t))
