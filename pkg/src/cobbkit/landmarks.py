"""Spinal landmark data model and CSV/JSON landmark files.

A spine is 17 vertebrae (thoracic T1 to lumbar L5, cranial to caudal), each
labelled with four corner landmarks in the order TL, TR, BL, BR. Coordinates
are pixels in image convention (x to the right, y downward).

The corner order is an assumption carried over from the AASCE labelling; it is
not re-sorted on ingest, and :func:`validate` reports suspicious geometry
instead of silently fixing it.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, NamedTuple, Sequence

import numpy as np

N_VERTEBRAE = 17
CORNERS = ("TL", "TR", "BL", "BR")
N_LANDMARKS = N_VERTEBRAE * len(CORNERS)  # 68
CSV_HEADER = ("image_id", "vertebra", "corner", "x", "y")

TILT_WARNING_DEG = 60.0


class LandmarkError(ValueError):
    """Base class for landmark file problems."""


class LandmarkParseError(LandmarkError):
    """A row or field could not be read."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class LandmarkStructureError(LandmarkError):
    """An image does not carry exactly 68 landmarks in canonical order."""

    def __init__(self, message: str, image_id: str | None = None):
        self.image_id = image_id
        super().__init__(message)


class LandmarkValueError(LandmarkError):
    """A coordinate is NaN or infinite."""


class Point(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class Vertebra:
    index: int
    top_left: Point
    top_right: Point
    bottom_left: Point
    bottom_right: Point

    @property
    def corners(self) -> tuple[Point, Point, Point, Point]:
        return (self.top_left, self.top_right, self.bottom_left, self.bottom_right)


@dataclass(frozen=True, eq=False)
class SpineLandmarks:
    """68 landmarks of one image, stored as a read-only (68, 2) float array."""

    image_id: str
    points: np.ndarray
    pixel_spacing_mm: float = 1.0
    _vertebrae: tuple = field(default=(), init=False, repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.shape == (N_VERTEBRAE, 4, 2):
            pts = pts.reshape(N_LANDMARKS, 2)
        if pts.shape != (N_LANDMARKS, 2):
            raise LandmarkStructureError(
                f"image {self.image_id!r}: expected {N_LANDMARKS} landmarks, got shape {pts.shape}",
                self.image_id,
            )
        if not np.all(np.isfinite(pts)):
            bad = int(np.argwhere(~np.isfinite(pts))[0][0])
            raise LandmarkValueError(
                f"image {self.image_id!r}: non-finite coordinate at landmark {bad}"
            )
        spacing = float(self.pixel_spacing_mm)
        if not (math.isfinite(spacing) and spacing > 0):
            raise LandmarkValueError(
                f"image {self.image_id!r}: pixel_spacing_mm must be positive, got {spacing}"
            )
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "pixel_spacing_mm", spacing)

    @property
    def vertebrae(self) -> tuple[Vertebra, ...]:
        if not self._vertebrae:
            verts = tuple(
                Vertebra(v, *(Point(float(x), float(y)) for x, y in self.points[4 * v: 4 * v + 4]))
                for v in range(N_VERTEBRAE)
            )
            object.__setattr__(self, "_vertebrae", verts)
        return self._vertebrae

    @property
    def corners(self) -> np.ndarray:
        """View of the landmarks as (17, 4, 2)."""
        return self.points.reshape(N_VERTEBRAE, 4, 2)

    def transformed(self, matrix=None, offset=(0.0, 0.0)) -> "SpineLandmarks":
        """Apply ``p -> matrix @ p + offset`` to every landmark."""
        pts = self.points
        if matrix is not None:
            pts = pts @ np.asarray(matrix, dtype=np.float64).T
        return SpineLandmarks(self.image_id, pts + np.asarray(offset), self.pixel_spacing_mm)

    def __eq__(self, other):
        if not isinstance(other, SpineLandmarks):
            return NotImplemented
        return (
            self.image_id == other.image_id
            and self.pixel_spacing_mm == other.pixel_spacing_mm
            and np.array_equal(self.points, other.points)
        )

    def __hash__(self):
        return hash((self.image_id, self.pixel_spacing_mm, self.points.tobytes()))


def _as_text(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source).decode("utf-8")
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def _parse_float(text: str, line: int, what: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise LandmarkParseError(f"{what} is not a number: {text!r}", line) from None
    if not math.isfinite(value):
        raise LandmarkValueError(f"line {line}: {what} is not finite: {text!r}")
    return value


def _iter_csv_images(text: str, default_id: str) -> Iterator[tuple[str, list[tuple[float, float]], list]]:
    """Yield ``(image_id, coords, problems)`` per image group, in file order.

    ``problems`` collects parse/value errors for that image so lenient readers
    can skip one image without losing the rest.
    """
    rows = list(csv.reader(io.StringIO(text, newline="")))
    numbered = [(i + 1, r) for i, r in enumerate(rows) if r and any(c.strip() for c in r)]
    if not numbered:
        return
    first_line, first = numbered[0]
    if tuple(c.strip() for c in first) == CSV_HEADER:
        yield from _iter_canonical_rows(numbered[1:])
        return
    # headerless "x,y" pairs for a single image
    coords, problems = [], []
    for line, row in numbered:
        if len(row) != 2:
            problems.append(LandmarkParseError(f"expected 2 fields, got {len(row)}", line))
            continue
        try:
            coords.append((_parse_float(row[0], line, "x"), _parse_float(row[1], line, "y")))
        except LandmarkError as exc:
            problems.append(exc)
    yield default_id, coords, problems


def _iter_canonical_rows(numbered):
    seen: set[str] = set()
    current, coords, problems = None, [], []
    for line, row in numbered:
        if len(row) != len(CSV_HEADER):
            exc = LandmarkParseError(f"expected {len(CSV_HEADER)} fields, got {len(row)}", line)
            if current is None:
                raise exc
            problems.append(exc)
            continue
        image_id = row[0]
        if image_id != current:
            if current is not None:
                yield current, coords, problems
            if image_id in seen:
                raise LandmarkStructureError(
                    f"line {line}: rows of image {image_id!r} are not contiguous", image_id
                )
            seen.add(image_id)
            current, coords, problems = image_id, [], []
        position = len(coords) + len(problems)
        try:
            vertebra = int(row[1])
        except ValueError:
            problems.append(LandmarkParseError(f"vertebra is not an integer: {row[1]!r}", line))
            continue
        expected_v, expected_c = divmod(position, 4)
        if vertebra != expected_v or row[2] != CORNERS[expected_c]:
            problems.append(LandmarkStructureError(
                f"line {line}: image {image_id!r} expected vertebra {expected_v} corner "
                f"{CORNERS[expected_c]}, got {vertebra} {row[2]}",
                image_id,
            ))
            continue
        try:
            coords.append((_parse_float(row[3], line, "x"), _parse_float(row[4], line, "y")))
        except LandmarkError as exc:
            problems.append(exc)
    if current is not None:
        yield current, coords, problems


def _build(image_id: str, coords, spacing: float) -> SpineLandmarks:
    if len(coords) != N_LANDMARKS:
        raise LandmarkStructureError(
            f"image {image_id!r}: expected {N_LANDMARKS} landmarks, got {len(coords)}", image_id
        )
    return SpineLandmarks(image_id, np.array(coords, dtype=np.float64), spacing)


def _iter_json_images(text: str):
    if not text.strip():
        return
    try:
        records = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LandmarkParseError(exc.msg, exc.lineno) from None
    if not isinstance(records, list):
        raise LandmarkParseError("top-level value must be an array", 1)
    for n, rec in enumerate(records):
        try:
            image_id = str(rec["image_id"])
            spacing = float(rec.get("pixel_spacing_mm", 1.0))
            raw = rec["landmarks"]
        except (KeyError, TypeError, ValueError) as exc:
            yield f"#{n}", None, [LandmarkParseError(f"record {n}: missing or bad field {exc}")]
            continue
        problems = []
        coords = []
        for i, pair in enumerate(raw):
            if not (isinstance(pair, list) and len(pair) == 2):
                problems.append(LandmarkParseError(f"image {image_id!r}: landmark {i} is not an [x, y] pair"))
                continue
            x, y = (float(v) for v in pair)
            if not (math.isfinite(x) and math.isfinite(y)):
                problems.append(LandmarkValueError(f"image {image_id!r}: landmark {i} is not finite"))
                continue
            coords.append((x, y))
        yield image_id, (coords, spacing), problems


def read_landmarks(source, format: str = "csv", *, pixel_spacing_mm: float = 1.0,
                   default_id: str = "image") -> tuple[list[SpineLandmarks], list[LandmarkError]]:
    """Lenient reader: returns every image that parsed plus the per-image errors."""
    text = _as_text(source)
    good: list[SpineLandmarks] = []
    errors: list[LandmarkError] = []
    if format == "csv":
        for image_id, coords, problems in _iter_csv_images(text, default_id):
            if problems:
                errors.append(problems[0])
                continue
            try:
                good.append(_build(image_id, coords, pixel_spacing_mm))
            except LandmarkError as exc:
                errors.append(exc)
    elif format == "json":
        for image_id, payload, problems in _iter_json_images(text):
            if problems:
                errors.append(problems[0])
                continue
            coords, spacing = payload
            try:
                good.append(_build(image_id, coords, spacing))
            except LandmarkError as exc:
                errors.append(exc)
    else:
        raise ValueError(f"unknown landmark format {format!r}")
    return good, errors


def parse_landmarks(source, format: str = "csv", *, pixel_spacing_mm: float = 1.0,
                    default_id: str = "image") -> list[SpineLandmarks]:
    """Parse a CSV or JSON landmark file; raises on the first bad image.

    ``source`` may be bytes, str or a file object. CSV files carry no spacing,
    so ``pixel_spacing_mm`` applies to all of their images.
    """
    good, errors = read_landmarks(source, format, pixel_spacing_mm=pixel_spacing_mm,
                                  default_id=default_id)
    if errors:
        raise errors[0]
    return good


def _fmt(value: float) -> str:
    return repr(float(value))


def serialize_landmarks(spines: Iterable[SpineLandmarks], format: str = "csv") -> bytes:
    """Canonical UTF-8 bytes; floats use the shortest round-tripping repr."""
    spines = list(spines)
    if format == "csv":
        lines = [",".join(CSV_HEADER)]
        for sl in spines:
            for k, (x, y) in enumerate(sl.points):
                v, c = divmod(k, 4)
                lines.append(f"{sl.image_id},{v},{CORNERS[c]},{_fmt(x)},{_fmt(y)}")
        return ("\n".join(lines) + "\n").encode("utf-8")
    if format == "json":
        if not spines:
            return b"[]\n"
        body = ",\n".join(
            json.dumps({
                "image_id": sl.image_id,
                "pixel_spacing_mm": sl.pixel_spacing_mm,
                "landmarks": [[float(x), float(y)] for x, y in sl.points],
            })
            for sl in spines
        )
        return ("[\n" + body + "\n]\n").encode("utf-8")
    raise ValueError(f"unknown landmark format {format!r}")


def guess_format(path: str) -> str:
    return "json" if str(path).lower().endswith(".json") else "csv"


def load_landmarks(path, format: str | None = None) -> list[SpineLandmarks]:
    with open(path, "rb") as fh:
        return parse_landmarks(fh.read(), format or guess_format(path))


def save_landmarks(path, spines: Sequence[SpineLandmarks], format: str | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_landmarks(spines, format or guess_format(path)))


def _edge_tilt_deg(left, right) -> float | None:
    dx, dy = right[0] - left[0], right[1] - left[1]
    if dx == 0 and dy == 0:
        return None
    angle = math.degrees(math.atan2(dy, dx))
    if angle > 90.0:
        angle -= 180.0
    elif angle <= -90.0:
        angle += 180.0
    return angle


def validate(sl: SpineLandmarks) -> list[str]:
    """Plausibility warnings for one spine. Never raises."""
    warnings: list[str] = []
    c = sl.corners
    for v in range(N_VERTEBRAE):
        tl, tr, bl, br = c[v]
        label = f"vertebra {v + 1}"
        if not (tl[0] < tr[0] and bl[0] < br[0]):
            warnings.append(f"{label}: left/right corner order violated")
        for name, (a, b) in (("upper", (tl, tr)), ("lower", (bl, br))):
            tilt = _edge_tilt_deg(a, b)
            if tilt is None:
                warnings.append(f"{label}: degenerate {name} endplate (coincident landmarks)")
            elif abs(tilt) > TILT_WARNING_DEG:
                warnings.append(f"{label}: implausible {name} endplate tilt {tilt:.1f} deg")
        top_y = (tl[1] + tr[1]) / 2
        bottom_y = (bl[1] + br[1]) / 2
        if bottom_y <= top_y:
            warnings.append(f"{label}: order inversion, bottom edge not below top edge")
        if v + 1 < N_VERTEBRAE:
            next_top = (c[v + 1][0][1] + c[v + 1][1][1]) / 2
            if next_top < bottom_y:
                warnings.append(f"{label}: overlaps vertebra {v + 2} (vertical order inversion)")
    return warnings
