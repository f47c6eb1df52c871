import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cobbkit.landmarks import (
    CSV_HEADER,
    LandmarkParseError,
    LandmarkStructureError,
    LandmarkValueError,
    SpineLandmarks,
    parse_landmarks,
    read_landmarks,
    serialize_landmarks,
    validate,
)

from conftest import stacked_spine

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)
points = arrays(np.float64, (68, 2), elements=finite)
ids = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789_-.", min_size=1, max_size=12)


def test_bare_xy_csv_gives_one_spine():
    sl = stacked_spine()
    text = "\n".join(f"{x},{y}" for x, y in sl.points)
    (parsed,) = parse_landmarks(text, "csv")
    assert len(parsed.vertebrae) == 17
    assert np.array_equal(parsed.points, sl.points)
    assert parsed.vertebrae[3].top_right == (140.0, 170.0)


def test_empty_input_is_empty_list():
    assert parse_landmarks(b"", "csv") == []
    assert parse_landmarks(b"", "json") == []
    assert parse_landmarks(b"[]", "json") == []


def test_67_rows_is_structure_error_naming_image():
    rows = serialize_landmarks([stacked_spine("img7")]).decode().splitlines()
    with pytest.raises(LandmarkStructureError, match="img7") as err:
        parse_landmarks("\n".join(rows[:-1]) + "\n")
    assert err.value.image_id == "img7"


def test_malformed_field_reports_line_number():
    rows = serialize_landmarks([stacked_spine()]).decode().splitlines()
    rows[5] = rows[5].rsplit(",", 1)[0] + ",abc"
    with pytest.raises(LandmarkParseError, match="line 6"):
        parse_landmarks("\n".join(rows))


def test_non_finite_coordinate_is_value_error():
    rows = serialize_landmarks([stacked_spine()]).decode().splitlines()
    rows[2] = rows[2].rsplit(",", 1)[0] + ",nan"
    with pytest.raises(LandmarkValueError):
        parse_landmarks("\n".join(rows))
    with pytest.raises(LandmarkValueError):
        SpineLandmarks("x", np.full((68, 2), np.inf))


def test_corner_out_of_order_is_structure_error():
    rows = serialize_landmarks([stacked_spine()]).decode().splitlines()
    rows[1], rows[2] = rows[2], rows[1]
    with pytest.raises(LandmarkStructureError):
        parse_landmarks("\n".join(rows))


def test_csv_layout_matches_format():
    text = serialize_landmarks([stacked_spine("a")]).decode()
    lines = text.split("\n")
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[1] == "a,0,TL,100.0,50.0"
    assert lines[4] == "a,0,BR,140.0,80.0"
    assert lines[68].startswith("a,16,BR,")
    assert text.endswith("\n") and "\r" not in text


def test_json_layout_matches_format():
    sl = SpineLandmarks("b", stacked_spine().points, pixel_spacing_mm=0.25)
    data = json.loads(serialize_landmarks([sl], "json"))
    assert list(data[0]) == ["image_id", "pixel_spacing_mm", "landmarks"]
    assert data[0]["pixel_spacing_mm"] == 0.25
    assert len(data[0]["landmarks"]) == 68


def test_lenient_reader_keeps_good_images():
    good = serialize_landmarks([stacked_spine("ok1"), stacked_spine("bad"), stacked_spine("ok2")])
    lines = good.decode().splitlines()
    del lines[70]  # a row of "bad"
    spines, errors = read_landmarks("\n".join(lines))
    assert [s.image_id for s in spines] == ["ok1", "ok2"]
    assert len(errors) == 1


def test_file_objects_accepted():
    data = serialize_landmarks([stacked_spine()])
    assert parse_landmarks(io.BytesIO(data))[0] == stacked_spine()


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(ids, points), max_size=3, unique_by=lambda t: t[0]),
       st.sampled_from(["csv", "json"]))
def test_round_trip_is_exact(items, fmt):
    spines = [SpineLandmarks(i, p) for i, p in items]
    data = serialize_landmarks(spines, fmt)
    back = parse_landmarks(data, fmt)
    assert back == spines
    assert serialize_landmarks(back, fmt) == data


@settings(max_examples=30, deadline=None)
@given(points, st.floats(min_value=0.01, max_value=5.0))
def test_json_keeps_spacing(p, spacing):
    sl = SpineLandmarks("s", p, spacing)
    assert parse_landmarks(serialize_landmarks([sl], "json"), "json") == [sl]


def test_horizontal_stack_has_no_warnings():
    assert validate(stacked_spine()) == []


def test_inverted_vertebra_warns():
    pts = stacked_spine().points.copy().reshape(17, 4, 2)
    pts[6, [0, 1, 2, 3]] = pts[6, [2, 3, 0, 1]]  # bottom edge above top edge
    warnings = validate(SpineLandmarks("inv", pts))
    assert any("vertebra 7" in w and "order inversion" in w for w in warnings)


def test_steep_endplate_warns():
    pts = stacked_spine().points.copy().reshape(17, 4, 2)
    tl = pts[2, 0]
    a = math.radians(75)
    pts[2, 1] = tl + 40 * np.array([math.cos(a), math.sin(a)])
    warnings = validate(SpineLandmarks("steep", pts))
    assert any("vertebra 3" in w and "tilt" in w for w in warnings)


def test_overlap_and_corner_order_warn():
    pts = stacked_spine().points.copy().reshape(17, 4, 2)
    pts[5, :, 1] -= 25  # pushes vertebra 6 up into vertebra 5
    pts[9, [0, 1]] = pts[9, [1, 0]]
    warnings = validate(SpineLandmarks("o", pts))
    assert any("overlaps vertebra 6" in w for w in warnings)
    assert any("vertebra 10" in w and "left/right" in w for w in warnings)


def test_validate_never_raises_on_coincident_corners():
    pts = stacked_spine().points.copy().reshape(17, 4, 2)
    pts[0, 1] = pts[0, 0]
    assert any("degenerate" in w for w in validate(SpineLandmarks("d", pts)))
