"""Landmark-based Cobb angle toolkit."""

from .cacm import cacm_pipeline, cam_baseline, cobb_from_tilts, cam_from_tilts, find_inflections
from .landmarks import SpineLandmarks, parse_landmarks, serialize_landmarks, validate
from .report import CobbReport, SegmentWindow
from .synth import SpineSpec, generate_spine, oracle_cobb
from .tilt import TiltProfile, endplate_tilts, vertebral_tilts

__version__ = "0.1.0"

__all__ = [
    "CobbReport",
    "SegmentWindow",
    "SpineLandmarks",
    "SpineSpec",
    "TiltProfile",
    "cacm_pipeline",
    "cam_baseline",
    "cam_from_tilts",
    "cobb_from_tilts",
    "endplate_tilts",
    "find_inflections",
    "generate_spine",
    "oracle_cobb",
    "parse_landmarks",
    "serialize_landmarks",
    "validate",
    "vertebral_tilts",
]
