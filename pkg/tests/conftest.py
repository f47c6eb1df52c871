import math

import numpy as np
import pytest

from cobbkit.landmarks import SpineLandmarks
from cobbkit.synth import S_CURVE_DEG, SpineSpec, generate_spine


def radians(seq):
    return [math.radians(x) for x in seq]


def stacked_spine(image_id="straight", width=40.0, height=30.0, gap=10.0, x0=100.0, y0=50.0):
    """Axis-aligned rectangles stacked straight down."""
    pts = []
    for v in range(17):
        top = y0 + v * (height + gap)
        pts += [(x0, top), (x0 + width, top), (x0, top + height), (x0 + width, top + height)]
    return SpineLandmarks(image_id, np.array(pts))


@pytest.fixture
def s_curve_tilts():
    return radians(S_CURVE_DEG)


@pytest.fixture
def s_curve_spine():
    sl, _ = generate_spine(SpineSpec(S_CURVE_DEG), "s_curve")
    return sl


@pytest.fixture
def straight_spine():
    return stacked_spine()
