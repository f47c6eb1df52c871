"""Seeded invariant suites run by the ``selfcheck``, ``frem-check`` and
``loss-check`` commands. Each suite returns a JSON-ready dict with a
``passed`` flag."""

from __future__ import annotations

import math
import time

import numpy as np

from . import frem
from .cacm import DEFAULT_EPSILON, cobb_from_tilts
from .lof import (
    LossConfig,
    finite_diff_check,
    gaussian_heatmaps,
    heatmap_loss,
    landmark_loss,
    total_loss,
)
from .synth import S_CURVE_DEG, oracle_cobb, random_profile

ROW_SUM_TOL = 1e-9
GRAD_TOL = 1e-5
DIRECTIONAL_TOL = 1e-4


# ---------------------------------------------------------------------------
# oracle equivalence


def reports_match(a, b, tol_deg: float = 1e-9) -> bool:
    return (
        a.inflections == b.inflections
        and a.flags == b.flags
        and all(abs(x - y) <= tol_deg for x, y in zip(a.angles_deg, b.angles_deg))
    )


def fixture_profiles() -> list[list[float]]:
    """Hand-built tilt profiles (radians) that hit the edge cases."""
    deg = [
        list(S_CURVE_DEG),
        [0.0] * 17,
        [5.0] * 17,
        [1.0 if i % 2 == 0 else -1.0 for i in range(17)],
        [16.0 - i for i in range(17)],
        [0, -2, -5, -9, -12, -9, -5, 0, 5, 9, 12, 9, 5, 0, -4, -8, -11],
        [-1, 3, -3, 0, 0, 2, -2, 4, -4, 1, -1, 0, 0, 6, -6, 5, -5],
    ]
    return [[math.radians(x) for x in p] for p in deg]


def oracle_equivalence(seed: int = 0, n_profiles: int = 10_000,
                       epsilon: float = DEFAULT_EPSILON) -> dict:
    """Compare the segment-aware pipeline to the brute-force oracle.

    Half of the random profiles are rounded to whole degrees so exact zeros
    and equal-magnitude neighbours (the tie-breaking paths) occur often.
    """
    rng = np.random.default_rng(seed)
    profiles = fixture_profiles()
    for i in range(n_profiles):
        deg = random_profile(rng)
        if i % 2:
            deg = [float(round(x)) for x in deg]
        profiles.append([math.radians(x) for x in deg])
    start = time.perf_counter()
    mismatches = []
    for n, t in enumerate(profiles):
        expected = oracle_cobb(t, epsilon)
        try:
            got = cobb_from_tilts(t, epsilon)
            ok = reports_match(got, expected)
        except ValueError:
            ok = False
        if not ok:
            mismatches.append(n)
    return {
        "passed": not mismatches,
        "n_profiles": len(profiles),
        "n_mismatches": len(mismatches),
        "first_mismatch": mismatches[0] if mismatches else None,
        "seconds": round(time.perf_counter() - start, 3),
    }


# ---------------------------------------------------------------------------
# FREM invariants


def random_instance(rng: np.random.Generator, channels: int, size: int):
    n = size * size
    fi = rng.normal(size=(channels, n))
    fo = rng.normal(size=(channels, n))
    params = frem.FremParams(
        input_proj=rng.normal(scale=0.5, size=(channels, channels)),
        output_proj=rng.normal(scale=0.5, size=(channels, channels)),
        map_gains=rng.uniform(0.2, 1.5, 3),
        lam=float(rng.uniform(-1, 1)),
        g1_proj=rng.normal(scale=0.5, size=(channels, channels)),
        g2_proj=rng.normal(scale=0.5, size=(channels, channels)),
        gamma=float(rng.uniform(-1, 1)),
        head_weight=rng.normal(size=(n, 2)),
        head_bias=rng.normal(size=2),
    )
    return fi, fo, params


def _row_sums_ok(m) -> bool:
    return bool(np.all(m >= 0) and np.all(np.abs(m.sum(axis=1) - 1) <= ROW_SUM_TOL))


def _check_instance(fi, fo, params, size, rng) -> dict[str, bool]:
    c = fi.shape[0]
    fi_hat = frem.contract(params.input_proj, fi)
    fo_hat = frem.contract(params.output_proj, fo)
    maps = [frem.attention_map(fi_hat, fi_hat), frem.attention_map(fo_hat, fo_hat),
            frem.attention_map(fi_hat, fo_hat)]
    fg = frem.geometric_features(fo_hat, frem.fuse_attention(*maps, params.map_gains), params.lam)
    v = frem.channel_attention(fg, params.g1_proj, params.g2_proj)
    res = {"attention_rows": all(_row_sums_ok(m) for m in maps) and _row_sums_ok(v)}

    res["residual_identity"] = bool(
        np.array_equal(frem.geometric_features(fo_hat, maps[0], 0.0), fo_hat)
        and np.array_equal(frem.semantic_features(fg, v, 0.0), fg)
    )

    selector = True
    for k in range(3):
        gains = np.zeros(3)
        gains[k] = 1.0
        selector &= np.array_equal(frem.fuse_attention(*maps, gains), maps[k])
    selector &= not np.any(frem.fuse_attention(*maps, np.zeros(3)))
    res["fuse_selector"] = bool(selector)

    out = frem.frem_forward(fi, fo, params, size, size)
    perm = rng.permutation(c)
    out_p = frem.frem_forward(fi[perm], fo[perm], params.permuted(perm), size, size)
    res["permutation_equivariance"] = bool(
        np.array_equal(out_p.landmarks, out.landmarks[perm])
        and np.array_equal(out_p.heatmaps, out.heatmaps[perm])
    )
    again = frem.frem_forward(fi, fo, params, size, size)
    res["determinism"] = bool(np.array_equal(again.landmarks, out.landmarks)
                              and np.array_equal(again.heatmaps, out.heatmaps))
    res["heatmaps_normalised"] = bool(np.all(np.abs(out.heatmaps.sum(axis=(1, 2)) - 1) <= ROW_SUM_TOL))
    return res


def directional_derivatives(fi, fo, params, size, rng, cfg: LossConfig) -> dict[str, float]:
    """Derivative of the training loss in lam and gamma at two step sizes;
    returns the relative disagreement per parameter.

    At each step h the central difference over p +- h is combined with the
    secant over the third points p +- 2h, (4 D(h) - D(2h)) / 3, which removes
    the h^2 truncation term so the two estimates agree far below tolerance.
    """
    c = fi.shape[0]
    gt_landmarks = rng.uniform(50, 100, (c, 2))  # far from the head output: no kinks
    gt_maps = gaussian_heatmaps(rng.uniform(0, size - 1, (c, 2)), size, size)

    def loss_at(**changes):
        p = frem.FremParams(**{**params.__dict__, **changes})
        out = frem.frem_forward(fi, fo, p, size, size)
        lh, _ = heatmap_loss(out.heatmaps, gt_maps, cfg)
        ll, _ = landmark_loss(out.landmarks, gt_landmarks)
        return total_loss(lh, ll, cfg)

    errors = {}
    for name in ("lam", "gamma"):
        base = getattr(params, name)
        d = []
        for h in (1e-3, 1e-4):
            d1 = (loss_at(**{name: base + h}) - loss_at(**{name: base - h})) / (2 * h)
            d2 = (loss_at(**{name: base + 2 * h}) - loss_at(**{name: base - 2 * h})) / (4 * h)
            d.append((4 * d1 - d2) / 3)
        errors[name] = abs(d[0] - d[1]) / max(abs(d[1]), 1e-8)
    return errors


def frem_check(seed: int = 0, n_instances: int = 100, n_directional: int = 4,
               cfg: LossConfig = LossConfig()) -> dict:
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    failures: dict[str, int] = {}
    props: set[str] = set()
    for i in range(n_instances):
        c = int(rng.choice([2, 4, 68]))
        size = int(rng.choice([4, 8]))
        fi, fo, params = random_instance(rng, c, size)
        for name, ok in _check_instance(fi, fo, params, size, rng).items():
            props.add(name)
            if not ok:
                failures[name] = failures.get(name, 0) + 1
    worst = 0.0
    for i in range(n_directional):
        fi, fo, params = random_instance(rng, 4, 4)
        worst = max(worst, *directional_derivatives(fi, fo, params, 4, rng, cfg).values())
    props.add("directional_derivative")
    if worst > DIRECTIONAL_TOL:
        failures["directional_derivative"] = 1
    return {
        "passed": not failures,
        "seed": seed,
        "n_instances": n_instances,
        "properties": sorted(props),
        "failures": failures,
        "directional_max_rel_err": worst,
        "seconds": round(time.perf_counter() - start, 3),
    }


# ---------------------------------------------------------------------------
# loss gradients


def random_distributions(rng: np.random.Generator, shape) -> np.ndarray:
    x = rng.uniform(0.2, 1.0, shape)
    return x / x.sum(axis=tuple(range(1, len(shape))), keepdims=True)


def loss_check(seed: int = 0, cfg: LossConfig = LossConfig(), channels: int = 4,
               size: int = 8) -> dict:
    """Finite-difference check of the heatmap and landmark loss gradients."""
    rng = np.random.default_rng(seed)
    gt = random_distributions(rng, (channels, size, size))
    pred = random_distributions(rng, (channels, size, size))
    hm = finite_diff_check(lambda p: heatmap_loss(p, gt, cfg), pred, h=1e-6)

    gt_l = rng.uniform(0, 10, 136)
    pred_l = rng.uniform(0, 10, 136)
    lm = finite_diff_check(lambda p: landmark_loss(p, gt_l), pred_l, h=1e-3, kinks=gt_l)

    errs = np.concatenate([hm.rel_errors, lm.rel_errors])
    return {
        "max_rel_err": float(errs.max()),
        "mean_rel_err": float(errs.mean()),
        "n_coords": int(errs.size),
        "seed": seed,
    }


def run_selfcheck(seed: int = 0, n_profiles: int = 10_000, n_instances: int = 100,
                  cfg: LossConfig = LossConfig(), epsilon: float = DEFAULT_EPSILON) -> dict:
    suites = {
        "oracle-equivalence": oracle_equivalence(seed, n_profiles, epsilon),
        "frem-check": frem_check(seed, n_instances, cfg=cfg),
    }
    lc = loss_check(seed, cfg)
    lc["passed"] = lc["max_rel_err"] <= GRAD_TOL
    suites["loss-check"] = lc
    failed = [name for name, r in suites.items() if not r["passed"]]
    return {"passed": not failed, "seed": seed, "failed": failed, "suites": suites}
