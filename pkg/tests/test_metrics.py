import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cobbkit.landmarks import SpineLandmarks
from cobbkit.metrics import (
    PairingError,
    SkippedImageWarning,
    angle_errors,
    circular_distance_deg,
    landmark_mse,
    pair_by_id,
    sdr,
    smape,
    smape_zero_denominators,
)


def spine(points, image_id="a", spacing=1.0):
    return SpineLandmarks(image_id, np.asarray(points, dtype=float), spacing)


@pytest.fixture
def base():
    rng = np.random.default_rng(0)
    return rng.uniform(0, 500, (68, 2))


def test_identity(base):
    pairs = [(spine(base), spine(base))]
    assert landmark_mse(pairs) == 0.0
    assert all(sdr(pairs, d) == 100.0 for d in (1, 2, 3, 4))


def test_constant_offset(base):
    base = np.round(base)  # integer coordinates keep the 5 mm boundary exact
    pairs = [(spine(base + [3.0, 4.0]), spine(base))]
    assert landmark_mse(pairs) == pytest.approx(25.0)
    assert sdr(pairs, 4) == 0.0 and sdr(pairs, 5) == 100.0


def test_spacing_scales_errors(base):
    moved = base.copy()
    moved[0] += [1.0, 0.0]
    pairs = [(spine(moved, spacing=0.5), spine(base, spacing=0.5))]
    assert landmark_mse(pairs) == pytest.approx(0.25 / 68)


def test_sdr_boundary_is_inclusive(base):
    pairs = [(spine(base + [2.0, 0.0]), spine(base))]
    assert sdr(pairs, 2) == 100.0
    half = base.copy()
    half[:34] += [0.0, 3.0]
    assert sdr([(spine(half), spine(base))], 2) == 50.0
    with pytest.raises(ValueError):
        sdr(pairs, 0)


def test_smape_example():
    assert smape([([30, 20, 10], [20, 20, 10])]) == pytest.approx(100 * 10 / 110)
    assert smape([([30, 20, 10], [20, 20, 10])]) == pytest.approx(9.0909, abs=1e-4)


def test_smape_skips_zero_images():
    pairs = [([0, 0, 0], [0, 0, 0]), ([10, 0, 0], [10, 0, 0])]
    assert smape_zero_denominators(pairs) == [0]
    with pytest.warns(SkippedImageWarning):
        assert smape(pairs) == 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert math.isnan(smape(pairs[:1]))


def test_angle_errors_example():
    e = angle_errors([([3.0, 4.0, 0.0], [0.0, 0.0, 0.0])])
    assert e["ed_deg"] == pytest.approx(5.0)
    assert e["md_deg"] == pytest.approx(7.0)
    assert e["cd_deg"] == pytest.approx(4.0)
    assert e["cmae_deg"] == pytest.approx(7 / 3)


def test_circular_wrap():
    assert circular_distance_deg(10, 350) == pytest.approx(20.0)
    assert circular_distance_deg(0, 180) == 180.0


angles = st.lists(st.floats(0, 90), min_size=3, max_size=3)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(angles, angles), min_size=1, max_size=6))
def test_norm_ordering(pairs):
    e = angle_errors(pairs)
    assert e["cd_deg"] <= e["ed_deg"] + 1e-9
    assert e["ed_deg"] <= e["md_deg"] + 1e-9
    assert e["md_deg"] <= 3 * e["cd_deg"] + 1e-9
    # below 180 degrees the circular error equals the plain absolute error
    mae = np.mean(np.abs(np.array([p for p, _ in pairs]) - np.array([g for _, g in pairs])))
    assert e["cmae_deg"] == pytest.approx(mae, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_sdr_monotone_and_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    gts = [spine(rng.uniform(0, 100, (68, 2)), f"i{k}") for k in range(3)]
    preds = [spine(g.points + rng.normal(0, 2, (68, 2)), g.image_id) for g in gts]
    pairs = [(p, g) for _, p, g in pair_by_id(preds, gts)]
    values = [sdr(pairs, d) for d in (1, 2, 3, 4)]
    assert values == sorted(values)
    shuffled = [(p, g) for _, p, g in pair_by_id(preds[::-1], gts)]
    assert landmark_mse(shuffled) == landmark_mse(pairs)


def test_pairing_errors(base):
    a, b = spine(base, "a"), spine(base, "b")
    with pytest.raises(PairingError, match="'b'"):
        pair_by_id([a], [a, b])
    with pytest.raises(PairingError, match="duplicate"):
        pair_by_id([a, a], [a])
    with pytest.raises(PairingError):
        landmark_mse([])
    assert pair_by_id({"x": 1}, {"x": 2}) == [("x", 1, 2)]
