"""Segment-aware Cobb angle calculation and the max-pair baseline it replaces.

The segment-aware method first locates inflection vertebrae (where the
vertebral tilt changes sign), splits the spine into bending segments around
them and measures one angle per segment. The baseline takes the largest
pairwise tilt difference anywhere on the spine, which merges neighbouring
curves into one angle or misses curves entirely.

All indices are 0-based here; reports convert to 1-based on output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .landmarks import N_VERTEBRAE, SpineLandmarks
from .report import (
    END,
    FLAG_CLAMPED_END,
    FLAG_MANY_INFLECTIONS,
    FLAG_SINGLE_CURVE,
    INTERIOR,
    CobbReport,
    SegmentWindow,
)
from .tilt import TiltProfile

DEFAULT_EPSILON = 1e-6  # rad
LAST = N_VERTEBRAE - 1

CACM = "CACM"
CAM = "CAM"

# Fault-injection switches used by the self-check harness to prove it can fail.
FAULTS: set[str] = set()


class NoInflectionError(ValueError):
    """Raised by segment_windows when there is no inflection vertebra."""


@dataclass(frozen=True)
class InflectionSet:
    indices: tuple[int, ...]

    @property
    def count(self) -> int:
        return len(self.indices)

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)


def _check_tilts(tilts: Sequence[float]) -> list[float]:
    t = [float(x) for x in tilts]
    if len(t) != N_VERTEBRAE:
        raise ValueError(f"expected {N_VERTEBRAE} vertebral tilts, got {len(t)}")
    if not all(math.isfinite(x) for x in t):
        raise ValueError("tilts must be finite")
    return t


def find_inflections(tilts: Sequence[float], epsilon: float = DEFAULT_EPSILON) -> InflectionSet:
    """Vertebrae where the bending direction changes.

    A vertebra qualifies when its tilt is within ``epsilon`` of zero with
    neighbours of opposite sign, or when the tilt changes sign between it and
    the next vertebra; in the latter case the one of the pair closer to zero is
    taken (ties go to the upper one). The first and last vertebrae never
    qualify because they lack a neighbour on one side.
    """
    t = _check_tilts(tilts)
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    found = set()
    for k in range(1, LAST):
        if abs(t[k]) <= epsilon and t[k - 1] * t[k + 1] < 0:
            found.add(k)
    for k in range(LAST):
        if t[k] * t[k + 1] < 0:
            pick = k if abs(t[k]) <= abs(t[k + 1]) else k + 1
            if 0 < pick < LAST:
                found.add(pick)
    return InflectionSet(tuple(sorted(found)))


def segment_windows(infl: InflectionSet | Sequence[int]) -> tuple[list[SegmentWindow], list[SegmentWindow]]:
    """Interior windows (one per inflection) and the two end windows.

    Each inflection's window runs from the previous inflection to the next
    one, with the first and last vertebrae standing in at the spine ends.
    """
    idx = list(infl)
    if not idx:
        raise NoInflectionError("no inflection vertebra; the spine has a single curve")
    bounds = [0] + idx + [LAST]
    interior = [SegmentWindow(INTERIOR, bounds[i], bounds[i + 2]) for i in range(len(idx))]
    ends = [SegmentWindow(END, 0, idx[0]), SegmentWindow(END, idx[-1], LAST)]
    return interior, ends


def interior_angle(window: SegmentWindow, tilts: Sequence[float]) -> float:
    """max tilt + |min tilt| over the window, in degrees."""
    span = tilts[window.first: window.last + 1]
    hi, lo = max(span), min(span)
    if "interior-sign" in FAULTS:
        return math.degrees(hi - abs(lo))
    return math.degrees(hi + abs(lo))


def end_angle(window: SegmentWindow, tilts: Sequence[float]) -> tuple[float, bool]:
    """Tilt range over an end window in degrees, and whether the clamp applied.

    The literal ``max - |min|`` form goes negative when every tilt in the
    window is negative; the range equals it whenever the minimum is >= 0.
    """
    span = tilts[window.first: window.last + 1]
    hi, lo = max(span), min(span)
    return math.degrees(hi - lo), (hi - abs(lo)) < 0


def select_cobb(interior: Sequence[float], ends: Sequence[float], m: int,
                tilts: Sequence[float] | None = None) -> tuple[list[float], set[str]]:
    """Pick the three reported angles by number of inflections ``m``."""
    flags: set[str] = set()
    if m == 0:
        if tilts is None:
            raise ValueError("tilts are needed when there is no inflection")
        flags.add(FLAG_SINGLE_CURVE)
        return [math.degrees(max(tilts) - min(tilts)), 0.0, 0.0], flags
    if len(interior) != m or len(ends) != 2:
        raise ValueError(f"expected {m} interior and 2 end angles, got {len(interior)} and {len(ends)}")
    if m == 1:
        return [interior[0], ends[0], ends[1]], flags
    if m == 2:
        return [interior[0], interior[1], max(ends)], flags
    if m == 3:
        return list(interior), flags
    flags.add(FLAG_MANY_INFLECTIONS)
    # stable sort keeps the upper window first among equal angles
    return sorted(interior, key=lambda a: -a)[:3], flags


def cobb_from_tilts(tilts: Sequence[float], epsilon: float = DEFAULT_EPSILON,
                    image_id: str = "") -> CobbReport:
    t = _check_tilts(tilts)
    infl = find_inflections(t, epsilon)
    if not infl.count:
        angles, flags = select_cobb([], [], 0, t)
        return CobbReport(image_id, CACM, tuple(angles), (), (), frozenset(flags), tuple(t))

    interior, ends = segment_windows(infl)
    interior = [SegmentWindow(w.kind, w.first, w.last, interior_angle(w, t)) for w in interior]
    end_values, clamped = [], False
    measured_ends = []
    for w in ends:
        value, was_clamped = end_angle(w, t)
        clamped |= was_clamped
        end_values.append(value)
        measured_ends.append(SegmentWindow(w.kind, w.first, w.last, value))
    angles, flags = select_cobb([w.angle_deg for w in interior], end_values, infl.count)
    if clamped:
        flags.add(FLAG_CLAMPED_END)
    return CobbReport(image_id, CACM, tuple(angles), infl.indices,
                      tuple(interior + measured_ends), frozenset(flags), tuple(t))


def cacm_pipeline(sl: SpineLandmarks, epsilon: float = DEFAULT_EPSILON) -> CobbReport:
    profile = TiltProfile.from_landmarks(sl)
    return cobb_from_tilts(profile.vertebral_tilts, epsilon, sl.image_id)


def _max_pair(t: Sequence[float], lo: int, hi: int) -> tuple[float, int, int]:
    """Largest |t[p] - t[q]| for lo <= p < q <= hi; ties keep the smallest p, then q."""
    best, bp, bq = -1.0, lo, lo
    for p in range(lo, hi + 1):
        for q in range(p + 1, hi + 1):
            d = abs(t[p] - t[q])
            if d > best:
                best, bp, bq = d, p, q
    return best, bp, bq


def cam_from_tilts(tilts: Sequence[float], image_id: str = "") -> CobbReport:
    """Baseline: the largest pairwise tilt difference is the main curve (MT);
    the proximal (PT) and lumbar (TL) curves are the largest differences above
    and below it. A side window with fewer than two vertebrae reports 0."""
    t = _check_tilts(tilts)
    mt, p, q = _max_pair(t, 0, LAST)
    windows = [SegmentWindow(INTERIOR, p, q, math.degrees(mt))]
    pt = tl = 0.0
    if p >= 1:
        pt = math.degrees(_max_pair(t, 0, p)[0])
        windows.insert(0, SegmentWindow(END, 0, p, pt))
    if q <= LAST - 1:
        tl = math.degrees(_max_pair(t, q, LAST)[0])
        windows.append(SegmentWindow(END, q, LAST, tl))
    return CobbReport(image_id, CAM, (math.degrees(mt), pt, tl), (), tuple(windows),
                      frozenset(), tuple(t))


def cam_baseline(sl: SpineLandmarks) -> CobbReport:
    profile = TiltProfile.from_landmarks(sl)
    return cam_from_tilts(profile.vertebral_tilts, sl.image_id)
