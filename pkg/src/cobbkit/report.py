"""Result records shared by the angle methods and their serializers."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

INTERIOR = "interior"
END = "end"

FLAG_SINGLE_CURVE = "single_curve"
FLAG_CLAMPED_END = "clamped_negative_end_angle"
FLAG_MANY_INFLECTIONS = "many_inflections"


@dataclass(frozen=True)
class SegmentWindow:
    """Inclusive, 0-based vertebra range with the angle measured over it."""

    kind: str
    first: int
    last: int
    angle_deg: float = 0.0

    def __post_init__(self):
        if self.kind not in (INTERIOR, END):
            raise ValueError(f"unknown window kind {self.kind!r}")
        if not (0 <= self.first < self.last <= 16):
            raise ValueError(f"invalid window [{self.first}, {self.last}]")

    def to_dict(self) -> dict:
        # 1-based for clinical readers
        return {"kind": self.kind, "first": self.first + 1, "last": self.last + 1,
                "angle_deg": self.angle_deg}


@dataclass(frozen=True)
class CobbReport:
    image_id: str
    method: str
    angles_deg: tuple[float, float, float]
    inflections: tuple[int, ...] = ()
    windows: tuple[SegmentWindow, ...] = ()
    flags: frozenset[str] = frozenset()
    tilts: tuple[float, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if len(self.angles_deg) != 3:
            raise ValueError(f"a report carries exactly 3 angles, got {len(self.angles_deg)}")
        for a in self.angles_deg:
            if not 0.0 <= a <= 180.0:
                raise ValueError(f"angle {a} outside [0, 180] degrees")

    @property
    def n_inflections(self) -> int:
        return len(self.inflections)

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "method": self.method,
            "angles_deg": [float(a) for a in self.angles_deg],
            "inflections": [i + 1 for i in self.inflections],
            "windows": [w.to_dict() for w in self.windows],
            "flags": sorted(self.flags),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "CobbReport":
        return cls(
            image_id=str(d["image_id"]),
            method=str(d["method"]),
            angles_deg=tuple(float(a) for a in d["angles_deg"]),
            inflections=tuple(int(i) - 1 for i in d.get("inflections", [])),
            windows=tuple(
                SegmentWindow(w["kind"], int(w["first"]) - 1, int(w["last"]) - 1, float(w["angle_deg"]))
                for w in d.get("windows", [])
            ),
            flags=frozenset(d.get("flags", [])),
        )
