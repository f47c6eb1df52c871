"""Command-line interface.

Exit codes: 0 success, 1 I/O or usage error, 2 some images failed (the rest
are still written), 3 a self-check suite failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import cacm
from .cacm import DEFAULT_EPSILON, cacm_pipeline, cam_baseline
from .landmarks import LandmarkError, SpineLandmarks, guess_format, read_landmarks, save_landmarks
from .lof import LossConfig
from .metrics import (
    SDR_THRESHOLDS_MM,
    PairingError,
    angle_errors,
    landmark_mse,
    pair_by_id,
    sdr,
    smape,
    smape_zero_denominators,
)
from .report import CobbReport
from .synth import S_CURVE_DEG, SpineGeometryError, SpineSpec, generate_spine, oracle_cobb, random_profile

log = logging.getLogger("cobbkit")

EXIT_OK, EXIT_IO, EXIT_PARTIAL, EXIT_SELFCHECK = 0, 1, 2, 3
METHODS = {"cacm": (cacm.CACM,), "cam": (cacm.CAM,), "both": (cacm.CACM, cacm.CAM)}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_IO, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    subcommand: str
    input: Path | None = None
    gt: Path | None = None
    output: Path | None = None
    method: str = "cacm"
    epsilon_rad: float = DEFAULT_EPSILON
    alpha: float = 5.0
    beta: float = 15.0
    seed: int = 0
    plot: Path | None = None
    workers: int = 1
    sorted: bool = False
    format: str | None = None

    def __post_init__(self):
        if self.epsilon_rad < 0:
            raise UsageError("--epsilon must be non-negative")
        if self.workers < 1:
            raise UsageError("--workers must be at least 1")
        paths = [p.resolve() for p in (self.input, self.gt, self.output) if p is not None]
        if len(paths) != len(set(paths)):
            raise UsageError("input, ground-truth and output paths must be distinct")

    @property
    def loss_config(self) -> LossConfig:
        return LossConfig(alpha=self.alpha, beta=self.beta)


def _config(args) -> RunConfig:
    def path(name):
        value = getattr(args, name, None)
        return Path(value) if value else None

    return RunConfig(
        subcommand=args.command,
        input=path("input"),
        gt=path("gt"),
        output=path("output"),
        method=getattr(args, "method", "cacm"),
        epsilon_rad=args.epsilon,
        alpha=args.alpha,
        beta=args.beta,
        seed=args.seed,
        plot=path("plot"),
        workers=getattr(args, "workers", 1),
        sorted=getattr(args, "sorted", False),
        format=getattr(args, "format", None),
    )


def _open_out(cfg: RunConfig):
    if cfg.output is None:
        return sys.stdout, False
    return open(cfg.output, "w", encoding="utf-8"), True


def _safe_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", text) or "image"


# ---------------------------------------------------------------------------
# angles


def _measure(sl: SpineLandmarks, methods, epsilon: float) -> list[CobbReport]:
    out = []
    for m in methods:
        out.append(cacm_pipeline(sl, epsilon) if m == cacm.CACM else cam_baseline(sl))
    return out


def cmd_angles(cfg: RunConfig) -> int:
    try:
        raw = cfg.input.read_bytes()
    except OSError as exc:
        print(f"cannot read {cfg.input}: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        spines, errors = read_landmarks(raw, cfg.format or guess_format(cfg.input))
    except LandmarkError as exc:
        print(f"{cfg.input}: {exc}", file=sys.stderr)
        return EXIT_IO
    for exc in errors:
        print(f"{cfg.input}: {exc}", file=sys.stderr)

    methods = METHODS[cfg.method]
    order = {m: i for i, m in enumerate(methods)}

    def work(sl):
        try:
            return sl, _measure(sl, methods, cfg.epsilon_rad), None
        except ValueError as exc:
            return sl, [], exc

    if cfg.workers == 1:
        results = map(work, spines)
        pool = None
    else:
        pool = ThreadPoolExecutor(max_workers=cfg.workers)
        futures = [pool.submit(work, sl) for sl in spines]
        results = (f.result() for f in as_completed(futures))

    if cfg.plot is not None:
        cfg.plot.mkdir(parents=True, exist_ok=True)
        from .plotting import save_svg

    failed = len(errors)
    collected = []
    out, close = _open_out(cfg)
    try:
        for sl, reports, exc in results:
            if exc is not None:
                failed += 1
                print(f"image {sl.image_id!r}: {exc}", file=sys.stderr)
                continue
            for r in reports:
                if cfg.plot is not None:
                    save_svg(cfg.plot / f"{_safe_name(r.image_id)}_{r.method.lower()}.svg", r, sl)
                if cfg.sorted:
                    collected.append(r)
                else:
                    out.write(r.to_json() + "\n")
        if cfg.sorted:
            collected.sort(key=lambda r: (r.image_id, order[r.method]))
            for r in collected:
                out.write(r.to_json() + "\n")
    finally:
        if pool is not None:
            pool.shutdown()
        if close:
            out.close()
    log.info("%d images measured, %d failed", len(spines) + len(errors) - failed, failed)
    return EXIT_PARTIAL if failed else EXIT_OK


# ---------------------------------------------------------------------------
# eval


def _load_source(path: Path, fmt: str | None, method: str):
    """Returns ("landmarks", {id: SpineLandmarks}) or ("angles", {id: [3 angles]})."""
    text = path.read_text(encoding="utf-8")
    name = path.name.lower()
    if name.endswith(".jsonl"):
        angles = {}
        for line in text.splitlines():
            if line.strip():
                rec = json.loads(line)
                if rec.get("method", "").lower() == method:
                    angles[str(rec["image_id"])] = [float(a) for a in rec["angles_deg"]]
        return "angles", angles
    if (fmt or guess_format(path)) == "json":
        data = json.loads(text) if text.strip() else []
        if data and isinstance(data, list) and "landmarks" not in data[0]:
            key = "oracle" if "oracle" in data[0] else None
            angles = {}
            for rec in data:
                src = rec[key] if key else rec
                angles[str(rec["image_id"])] = [float(a) for a in src["angles_deg"]]
            return "angles", angles
    spines, errors = read_landmarks(text.encode("utf-8"), fmt or guess_format(path))
    if errors:
        raise errors[0]
    return "landmarks", {s.image_id: s for s in spines}


def _angles_of(kind, items, method, epsilon):
    if kind == "angles":
        return items
    fn = cam_baseline if method == "cam" else (lambda s: cacm_pipeline(s, epsilon))
    return {k: list(fn(s).angles_deg) for k, s in items.items()}


def evaluate(pred_kind, pred, gt_kind, gt, method: str = "cacm", epsilon: float = DEFAULT_EPSILON) -> dict:
    ids = pair_by_id(pred, gt)
    result = {"mse": None, "sdr": None}
    if pred_kind == gt_kind == "landmarks":
        pairs = [(p, g) for _, p, g in ids]
        result["mse"] = landmark_mse(pairs)
        result["sdr"] = {str(d): sdr(pairs, d) for d in SDR_THRESHOLDS_MM}
    pa = _angles_of(pred_kind, pred, method, epsilon)
    ga = _angles_of(gt_kind, gt, method, epsilon)
    angle_pairs = [(pa[k], ga[k]) for k, _, _ in ids]
    skipped = smape_zero_denominators(angle_pairs)
    if len(skipped) < len(angle_pairs):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result["smape"] = smape(angle_pairs)
    else:
        result["smape"] = None
    errs = angle_errors(angle_pairs)
    result.update(cmae=errs["cmae_deg"], ed=errs["ed_deg"], md=errs["md_deg"], cd=errs["cd_deg"],
                  n_images=len(ids), skipped=len(skipped))
    return result


def cmd_eval(cfg: RunConfig) -> int:
    method = "cam" if cfg.method == "cam" else "cacm"
    try:
        pred_kind, pred = _load_source(cfg.input, cfg.format, method)
        gt_kind, gt = _load_source(cfg.gt, cfg.format, method)
    except (OSError, ValueError, KeyError) as exc:
        print(f"cannot load evaluation inputs: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        result = evaluate(pred_kind, pred, gt_kind, gt, method, cfg.epsilon_rad)
    except PairingError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"evaluation failed: {exc}", file=sys.stderr)
        return EXIT_IO
    out, close = _open_out(cfg)
    try:
        out.write(json.dumps(result) + "\n")
    finally:
        if close:
            out.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth


def cmd_synth(cfg: RunConfig, count: int, profile: str, jitter: float) -> int:
    if cfg.output is None:
        print("synth needs --output", file=sys.stderr)
        return EXIT_IO
    children = np.random.SeedSequence(cfg.seed).spawn(count)
    spines, truth = [], []
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        if profile == "random":
            tilts = random_profile(rng)
        elif profile == "s-curve":
            tilts = list(S_CURVE_DEG)
        else:
            tilts = [0.0] * 17
        image_id = f"synth_{i:04d}"
        spec = SpineSpec(tilts, jitter_px=jitter, seed=int(child.generate_state(1)[0]))
        try:
            sl, tp = generate_spine(spec, image_id)
        except SpineGeometryError as exc:
            print(f"{image_id}: {exc}", file=sys.stderr)
            return EXIT_PARTIAL
        spines.append(sl)
        truth.append({
            "image_id": image_id,
            "tilt_profile_deg": list(spec.tilt_profile_deg),
            "vertebral_tilts_rad": list(tp.vertebral_tilts),
            "oracle": oracle_cobb(tp.vertebral_tilts, cfg.epsilon_rad, image_id).to_dict(),
        })
    try:
        save_landmarks(cfg.output, spines, cfg.format or guess_format(cfg.output))
        sidecar = Path(str(cfg.output) + ".truth.json")
        sidecar.write_text(json.dumps(truth, indent=1) + "\n", encoding="utf-8")
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


# ---------------------------------------------------------------------------
# checks


def _emit(obj: dict) -> None:
    sys.stdout.write(json.dumps(obj) + "\n")


def cmd_selfcheck(cfg: RunConfig, n_profiles: int, n_instances: int) -> int:
    from .selfcheck import run_selfcheck

    summary = run_selfcheck(cfg.seed, n_profiles, n_instances, cfg.loss_config, cfg.epsilon_rad)
    _emit(summary)
    if not summary["passed"]:
        print("failed suites: " + ", ".join(summary["failed"]), file=sys.stderr)
        return EXIT_SELFCHECK
    return EXIT_OK


def cmd_frem_check(cfg: RunConfig, n_instances: int) -> int:
    from .selfcheck import frem_check

    res = frem_check(cfg.seed, n_instances, cfg=cfg.loss_config)
    _emit(res)
    return EXIT_OK if res["passed"] else EXIT_SELFCHECK


def cmd_loss_check(cfg: RunConfig) -> int:
    from .selfcheck import GRAD_TOL, loss_check

    res = loss_check(cfg.seed, cfg.loss_config)
    _emit(res)
    return EXIT_OK if res["max_rel_err"] <= GRAD_TOL else EXIT_SELFCHECK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON,
                        help="inflection tolerance in radians (default %(default)g)")
    common.add_argument("--alpha", type=float, default=5.0, help="heatmap loss trade-off")
    common.add_argument("--beta", type=float, default=15.0, help="foreground weight")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("csv", "json"), default=None,
                        help="landmark file format (default: from the file extension)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="cobbkit", description="Landmark-based Cobb angle toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("angles", parents=[common], help="Cobb angles per image as JSON lines")
    a.add_argument("--input", required=True)
    a.add_argument("--output", "-o")
    a.add_argument("--method", choices=tuple(METHODS), default="cacm")
    a.add_argument("--plot", metavar="DIR", help="write one SVG figure per image and method")
    a.add_argument("--workers", type=int, default=1)
    a.add_argument("--sorted", action="store_true", help="sort output by image id")

    e = sub.add_parser("eval", parents=[common], help="landmark and angle metrics")
    e.add_argument("--input", required=True, help="predictions: landmarks, angles JSONL or synth sidecar")
    e.add_argument("--gt", required=True, help="ground truth, same kinds as --input")
    e.add_argument("--output", "-o")
    e.add_argument("--method", choices=("cacm", "cam"), default="cacm",
                   help="angle method used for landmark inputs and JSONL filtering")

    s = sub.add_parser("synth", parents=[common], help="write synthetic spines plus a truth sidecar")
    s.add_argument("--output", "-o", required=True)
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--profile", choices=("random", "s-curve", "straight"), default="random")
    s.add_argument("--jitter", type=float, default=0.0, help="uniform landmark jitter in px")

    c = sub.add_parser("selfcheck", parents=[common], help="run every invariant suite")
    c.add_argument("--profiles", type=int, default=10_000, help="random profiles for oracle equivalence")
    c.add_argument("--instances", type=int, default=100, help="random FREM instances")
    c.add_argument("--inject-fault", choices=("interior-sign",), help=argparse.SUPPRESS)

    f = sub.add_parser("frem-check", parents=[common], help="attention block invariants")
    f.add_argument("--instances", type=int, default=100)

    sub.add_parser("loss-check", parents=[common], help="loss gradient finite-difference check")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
    except UsageError as exc:
        print(f"cobbkit: error: {exc}", file=sys.stderr)
        return EXIT_IO

    if args.command == "angles":
        return cmd_angles(cfg)
    if args.command == "eval":
        return cmd_eval(cfg)
    if args.command == "synth":
        return cmd_synth(cfg, args.count, args.profile, args.jitter)
    if args.command == "selfcheck":
        if args.inject_fault:
            cacm.FAULTS.add(args.inject_fault)
        try:
            return cmd_selfcheck(cfg, args.profiles, args.instances)
        finally:
            cacm.FAULTS.discard(args.inject_fault)
    if args.command == "frem-check":
        return cmd_frem_check(cfg, args.instances)
    if args.command == "loss-check":
        return cmd_loss_check(cfg)
    parser.error(f"unknown command {args.command}")
    return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
