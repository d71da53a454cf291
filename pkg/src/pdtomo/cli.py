"""Command line entry point: ``pdtomo {phantom,project,reconstruct,sweep,benchmark}``.

Experiment commands accept ``--config FILE`` (flat ``key = value`` lines)
and one ``--<key>`` flag per config key, e.g. ``--pls.kappa 0.05``; flags
win over the file. Exit status is 0 on success and 1 on failure, in which
case a ``FAILED`` file is left in the output directory.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import harness, io
from .core import ProjectionGeometry, Sinogram
from .phantoms import MODELS, PhantomSpec, add_noise_snr, make_phantom
from .projector import assemble

_SKIP = {"output.dir", "allow_inverse_crime"}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key = value configuration file")
    p.add_argument("--out", type=Path, help="output directory (config key output.dir)")
    p.add_argument("--allow-inverse-crime", action="store_true",
                   help="permit identical data and inversion kernels")
    g = p.add_argument_group("configuration keys")
    for key in harness.config_keys():
        if key not in _SKIP:
            g.add_argument(f"--{key}", dest=f"cfg:{key}", metavar="V")


def _config(args, base: harness.ExperimentConfig) -> harness.ExperimentConfig:
    values = {}
    if args.config is not None:
        values.update(harness.parse_config_text(args.config.read_text()))
    for name, value in vars(args).items():
        if name.startswith("cfg:") and value is not None:
            values[name[4:]] = value
    if args.out is not None:
        values["output.dir"] = str(args.out)
    if args.allow_inverse_crime:
        values["allow_inverse_crime"] = True
    return harness.config_from_dict(values, base)


def _print_report(res: harness.ExperimentResult) -> None:
    r = res.report
    parts = [f"lambda={r.lam:.6g}", f"DR={r.dr:.6g}"]
    if r.mr is not None:
        parts.append(f"MR={r.mr:.6g}")
    if r.sr is not None:
        parts.append(f"SR={r.sr}")
    if res.baseline_sr is not None:
        parts.append(f"baseline_SR={res.baseline_sr}")
    parts.append(f"runtime={r.runtime:.1f}s")
    print(" ".join(parts))


def cmd_phantom(args) -> int:
    spec = PhantomSpec(args.model, args.size, args.background_max, seed=args.seed)
    u, mask, u0 = make_phantom(spec)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    shape = u.grid.shape
    io.write_image_csv(out / "u_true.csv", u)
    io.write_image_csv(out / "u0_true.csv", u0)
    io.write_matrix_csv(out / "mask_true.csv", mask.reshape(shape).astype(float))
    io.write_pgm(out / "u_true.pgm", u.values, shape)
    io.write_pgm(out / "u0_true.pgm", u0.values, shape)
    io.write_pgm(out / "mask_true.pgm", mask.astype(float), shape)
    print(f"wrote {args.model} phantom ({args.size}x{args.size}, {int(mask.sum())} anomaly pixels) to {out}")
    return 0


def cmd_project(args) -> int:
    image = io.read_image_csv(args.image)
    arc = harness._number(args.arc)
    detectors = args.detectors or image.grid.nx
    geo = ProjectionGeometry.uniform(args.angles, detectors, arc, args.detector_extent, args.kernel)
    W = assemble(geo, image.grid)
    sino = Sinogram(geo, W.matvec(image.values))
    if args.snr_db is not None:
        sino = add_noise_snr(sino, args.snr_db, args.noise_seed)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    io.write_sinogram_csv(args.out, sino, image.grid)
    if args.dump_operator is not None:
        io.write_triplets_csv(args.dump_operator, W)
    print(f"wrote {geo.n_rows} rays ({geo.kernel.value} kernel) to {args.out}")
    return 0


def cmd_reconstruct(args) -> int:
    cfg = _config(args, harness.ExperimentConfig())
    if args.sinogram is not None:
        res = harness.reconstruct_data(io.read_sinogram_csv(args.sinogram), cfg)
    else:
        res = harness.run_experiment(cfg)
    _print_report(res)
    return 0


def _lambda_grid(text: str):
    if ":" in text:
        lo, hi, n = text.split(":")
        return tuple(float(v) for v in np.logspace(math.log10(float(lo)), math.log10(float(hi)), int(n)))
    return tuple(float(v) for v in text.split(","))


def cmd_sweep(args) -> int:
    base = harness.PRESETS[args.protocol](args.model, args.size)
    cfg = _config(args, base)
    sweep = harness.lambda_sweep(cfg, _lambda_grid(args.lambdas))
    print(f"noise_norm={sweep.noise_norm:.6g}")
    for res in sweep.results:
        _print_report(res)
    hits = harness.plateau_runs(sweep.sr)
    print("plateau windows start at:", ", ".join(f"{sweep.lambdas[i]:.3g}" for i in hits) or "none")
    return 0


def cmd_benchmark(args) -> int:
    if args.protocol == "binary":
        base = harness.binary_config(args.size)
    else:
        base = harness.PRESETS[args.protocol](args.model, args.size)
    cfg = _config(args, base)
    res = harness.run_experiment(cfg)
    _print_report(res)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pdtomo", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="write a procedural phantom as CSV and graymaps")
    p.add_argument("--model", choices=MODELS, default="A")
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--background-max", type=float)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("project", help="project an image CSV to a sinogram CSV")
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--angles", type=int, default=180)
    p.add_argument("--arc", default="pi", help="angular range, e.g. pi or 2*pi/3")
    p.add_argument("--detectors", type=int, help="default: one per pixel column")
    p.add_argument("--detector-extent", type=float)
    p.add_argument("--kernel", choices=("line", "joseph"), default="line")
    p.add_argument("--snr-db", type=float)
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--dump-operator", type=Path, help="also write W as (row, col, weight) triplets")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("reconstruct", help="run one experiment, or invert a sinogram file")
    p.add_argument("--sinogram", type=Path, help="measured data; only DR is reported")
    _add_config_flags(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("sweep", help="residual curves over a lambda grid")
    p.add_argument("--protocol", choices=sorted(harness.PRESETS), default="limited")
    p.add_argument("--model", choices=MODELS, default="A")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--lambdas", default="1e4:1e9:12", help="lo:hi:n (log-spaced) or a comma list")
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("benchmark", help="run a preset protocol")
    p.add_argument("--protocol", choices=sorted(harness.PRESETS) + ["binary"], default="full")
    p.add_argument("--model", choices=MODELS, default="A")
    p.add_argument("--size", type=int, default=128)
    _add_config_flags(p)
    p.set_defaults(func=cmd_benchmark)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        print(f"pdtomo {args.command}: error: {exc}", file=sys.stderr)
        out = getattr(args, "out", None)
        if out is not None and args.command in ("reconstruct", "sweep", "benchmark"):
            # errors raised before the run started (bad config) still leave a marker
            out.mkdir(parents=True, exist_ok=True)
            marker = out / "FAILED"
            if not marker.exists():
                marker.write_text(f"{type(exc).__name__}: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
