"""Command-line interface.

Exit codes: 0 success, 1 invalid flags, 2 unreadable input file, 3 solver
divergence. Diagnostics go to stderr; stdout carries only the path of the
written report.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import DEFAULT_BINS, read_palette, write_palette
from .core import Image, ValidationError
from .io import (
    ImageReadError,
    RunReport,
    image_suffix,
    read_image,
    read_labels,
    write_image,
    write_labels_csv,
    write_labels_pgm,
)
from .operators import cost_field, energy
from .pipeline import (
    DEFAULT_MIN_PEAK_FRACTION,
    DEFAULT_PRESMOOTH,
    PHANTOM_KINDS,
    NoiseSpec,
    add_gaussian_noise,
    make_phantom,
    segment,
    segmentation_accuracy,
)
from .solver import DEFAULT_STEP, DivergenceError, SolverConfig, StepSizeError

log = logging.getLogger("kphaseseg")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DIVERGED = 0, 1, 2, 3
OUT_ENV = "KPHASESEG_OUT"
PHANTOM_INPUT = "phantom"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_input_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", help=f"PNG or PPM image, or '{PHANTOM_INPUT}' to generate a test image")
    p.add_argument("--kind", choices=PHANTOM_KINDS, default="three-phase", help="phantom kind")
    p.add_argument("--size", type=int, default=128, help="phantom side length in pixels")
    p.add_argument(
        "--truth",
        nargs="?",
        const=True,
        default=None,
        help="ground-truth label map (CSV or PGM); bare flag uses the phantom's own labels",
    )


def _add_model_args(p: argparse.ArgumentParser) -> None:
    d = SolverConfig()
    p.add_argument("--lambda", dest="lam", type=float, default=d.lam, help="TV weight (default %(default)s)")
    p.add_argument("--mu", type=float, default=d.mu, help="squared-gradient weight (default %(default)s)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--k", type=int, default=None, help="number of colors (default: detected)")
    g.add_argument("--palette", default=None, help="palette file; bypasses clustering")
    p.add_argument("--bins", type=int, default=DEFAULT_BINS, help="histogram bins per channel (default %(default)s)")
    p.add_argument("--presmooth", type=float, default=DEFAULT_PRESMOOTH,
                   help="blur (pixels) before peak counting (default %(default)s)")
    p.add_argument("--min-peak-fraction", type=float, default=DEFAULT_MIN_PEAK_FRACTION,
                   help="smallest basin share counted as a peak (default %(default)s)")
    p.add_argument("--sigma", type=float, default=DEFAULT_STEP, help="dual step (default 1/3)")
    p.add_argument("--tau", type=float, default=DEFAULT_STEP, help="primal step (default 1/3)")
    p.add_argument("--max-iter", type=int, default=d.max_iter, help="(default %(default)s)")
    p.add_argument("--tol", type=float, default=d.tol, help="relative-change tolerance (default %(default)s)")
    p.add_argument("--noise-var", type=float, default=0.0, help="variance of added Gaussian noise")
    p.add_argument("--noise-mean", type=float, default=0.0, help="mean of added Gaussian noise")
    p.add_argument("--seed", type=int, default=0, help="seed for noise and K-means (default %(default)s)")
    p.add_argument("--out", "-o", default=None, help=f"output directory (default ${OUT_ENV} or ./out)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kphaseseg", description="Multiphase color image segmentation.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("segment", help="segment one image")
    _add_input_args(p)
    _add_model_args(p)
    p.add_argument("--pgm", action="store_true", help="also write labels.pgm")
    p.add_argument("--energy-every", type=int, default=0, help="record energy every N iterations")
    p.add_argument("--timing", action="store_true", help="record wall-clock time in the report")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("phantom", help="write a synthetic test image, its labels and palette")
    p.add_argument("--kind", choices=PHANTOM_KINDS, default="three-phase")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--noise-var", type=float, default=0.0)
    p.add_argument("--noise-mean", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("png", "ppm"), default="png")
    p.add_argument("--out", "-o", default=None)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("sweep", help="segment over a grid of lambda values and noise seeds")
    _add_input_args(p)
    _add_model_args(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--lambdas", type=_float_list, help="comma-separated lambda values")
    g.add_argument("--lambda-range", nargs=3, metavar=("START", "STOP", "N"),
                   help="N log-spaced lambda values from START to STOP")
    p.add_argument("--seeds", type=int, default=1, help="noise/K-means seeds per lambda (seed, seed+1, ...)")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_sweep)
    return parser


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _solver_config(args, lam: float | None = None) -> SolverConfig:
    try:
        return SolverConfig(
            lam=args.lam if lam is None else lam,
            mu=args.mu,
            sigma=args.sigma,
            tau=args.tau,
            max_iter=args.max_iter,
            tol=args.tol,
            record_energy_every=getattr(args, "energy_every", 0),
        )
    except ValueError as e:
        raise UsageError(str(e)) from e


def _load_input(args):
    """Return (image, format, truth-or-None, input metadata) before noise."""
    truth = None
    if args.input == PHANTOM_INPUT:
        try:
            f, labels, _ = make_phantom(args.kind, args.size)
        except ValueError as e:
            raise UsageError(str(e)) from e
        fmt = "PNG"
        meta = {"source": "phantom", "kind": args.kind, "size": args.size}
        if args.truth is True:
            truth = labels
    else:
        f, fmt = read_image(args.input)
        meta = {"source": "file", "path": str(args.input), "format": fmt}
        if args.truth is True:
            raise UsageError("--truth needs a label-map path for file inputs")
    if isinstance(args.truth, str):
        truth = read_labels(args.truth)
        if truth.shape != f.shape:
            raise UsageError(f"truth shape {truth.shape} does not match image {f.shape}")
    meta.update(height=f.height, width=f.width)
    return f, fmt, truth, meta


def _palette_arg(args):
    if args.palette is None:
        return None
    try:
        return read_palette(args.palette)
    except OSError as e:
        raise ImageReadError(f"cannot read palette {args.palette}: {e}") from e


def _noisy(f: Image, args, seed: int) -> tuple[Image, dict | None]:
    if args.noise_var == 0 and args.noise_mean == 0:
        return f, None
    try:
        spec = NoiseSpec(mean=args.noise_mean, variance=args.noise_var, seed=seed)
    except ValueError as e:
        raise UsageError(str(e)) from e
    return add_gaussian_noise(f, spec), {"mean": spec.mean, "variance": spec.variance, "seed": spec.seed}


def run_one(f: Image, args, config: SolverConfig, palette, truth, seed: int):
    """Segment ``f`` once; returns (segmentation, report) without touching disk."""
    t0 = time.perf_counter()
    seg = segment(
        f,
        k=args.k,
        palette=palette,
        solver=config,
        bins=args.bins,
        seed=seed,
        presmooth=args.presmooth,
        min_peak_fraction=args.min_peak_fraction,
    )
    wall_ms = (time.perf_counter() - t0) * 1e3
    e = energy(seg.relaxed_z, cost_field(f, seg.palette), config.lam, config.mu)
    report = RunReport(
        input={},
        k=seg.k,
        palette=seg.palette.colors.tolist(),
        solver=config.as_dict(),
        solve=seg.report.as_dict(),
        energy=e.as_dict(),
        sa=segmentation_accuracy(seg, truth).as_dict() if truth is not None else None,
        wall_ms=wall_ms,
    )
    return seg, report


def cmd_segment(args) -> int:
    f, fmt, truth, meta = _load_input(args)
    palette = _palette_arg(args)
    config = _solver_config(args)
    f, noise = _noisy(f, args, args.seed)
    meta["noise"] = noise
    out = _out_dir(args)

    seg, report = run_one(f, args, config, palette, truth, args.seed)
    report.input = meta
    if not args.timing:
        report.wall_ms = None

    write_image(out / f"segmented{image_suffix(fmt)}", seg.image(), fmt)
    write_labels_csv(out / "labels.csv", seg.labels)
    if args.pgm:
        write_labels_pgm(out / "labels.pgm", seg.labels)
    write_palette(out / "palette.txt", seg.palette)
    path = report.write(out / "report.json")
    log.info("K=%d, %d iterations, converged=%s", seg.k, seg.report.iterations_run, seg.report.converged)
    if report.sa is not None:
        log.info("SA = %.4f", report.sa["value"])
    print(path)
    return EXIT_OK


def cmd_phantom(args) -> int:
    try:
        f, labels, palette = make_phantom(args.kind, args.size)
    except ValueError as e:
        raise UsageError(str(e)) from e
    f, _ = _noisy(f, args, args.seed)
    out = _out_dir(args)
    fmt = args.format.upper()
    write_image(out / f"phantom{image_suffix(fmt)}", f, fmt)
    write_labels_csv(out / "truth.csv", labels)
    write_palette(out / "palette.txt", palette)
    print(out)
    return EXIT_OK


def _lambdas(args) -> list[float]:
    if args.lambdas is not None:
        lams = args.lambdas
    else:
        try:
            start, stop, n = float(args.lambda_range[0]), float(args.lambda_range[1]), int(args.lambda_range[2])
        except ValueError:
            raise UsageError("--lambda-range expects START STOP N") from None
        if start <= 0 or stop <= 0 or n < 1:
            raise UsageError("--lambda-range needs positive bounds and N >= 1")
        lams = np.geomspace(start, stop, n).tolist()
    if not lams:
        raise UsageError("empty sweep")
    return lams


def _sweep_cell(job):
    args, f, truth, palette, lam, seed = job
    config = _solver_config(args, lam)
    g, _ = _noisy(f, args, seed)
    try:
        seg, report = run_one(g, args, config, palette, truth, seed)
    except DivergenceError as e:
        return {"lambda": lam, "seed": seed, "error": str(e)}
    return {
        "lambda": lam,
        "seed": seed,
        "k": seg.k,
        "sa": report.sa["value"] if report.sa else None,
        "energy": report.energy["total"],
        "iterations": seg.report.iterations_run,
        "converged": seg.report.converged,
        "time_ms": round(report.wall_ms, 3),
    }


def cmd_sweep(args) -> int:
    lams = _lambdas(args)
    if args.seeds < 1 or args.jobs < 1:
        raise UsageError("--seeds and --jobs must be positive")
    for lam in lams:
        _solver_config(args, lam)
    f, _, truth, meta = _load_input(args)
    palette = _palette_arg(args)
    out = _out_dir(args)

    jobs = [(args, f, truth, palette, lam, args.seed + s) for lam in lams for s in range(args.seeds)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            rows = list(ex.map(_sweep_cell, jobs))
    else:
        rows = [_sweep_cell(j) for j in jobs]

    summary = []
    for lam in lams:
        cells = [r for r in rows if r["lambda"] == lam and "error" not in r]
        sas = [r["sa"] for r in cells if r["sa"] is not None]
        summary.append({
            "lambda": lam,
            "runs": len(cells),
            "mean_sa": float(np.mean(sas)) if sas else None,
            "mean_energy": float(np.mean([r["energy"] for r in cells])) if cells else None,
            "mean_time_ms": float(np.mean([r["time_ms"] for r in cells])) if cells else None,
        })

    fields = ["lambda", "seed", "k", "sa", "energy", "iterations", "converged", "time_ms", "error"]
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, restval="")
        w.writeheader()
        w.writerows(rows)
        for s in summary:
            w.writerow({"lambda": s["lambda"], "seed": "mean", "sa": s["mean_sa"],
                        "energy": s["mean_energy"], "time_ms": s["mean_time_ms"]})
    doc = {"input": meta, "noise": {"mean": args.noise_mean, "variance": args.noise_var},
           "rows": rows, "summary": summary}
    path = out / "sweep.json"
    path.write_text(json.dumps(doc, indent=2) + "\n")
    for s in summary:
        log.info("lambda=%g mean SA=%s", s["lambda"], s["mean_sa"])
    print(path)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (UsageError, StepSizeError, ValidationError) as e:
        print(f"kphaseseg: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ImageReadError as e:
        print(f"kphaseseg: error: {e}", file=sys.stderr)
        return EXIT_IO
    except DivergenceError as e:
        print(f"kphaseseg: solver diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
