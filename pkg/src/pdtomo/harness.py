"""Experiment orchestration: configuration, residual metrics, runs and sweeps.

Regularization strength ``lam`` is given in pixel units: the value that
would be used if pixels had unit size and ray weights were measured in
pixels. With the unit-square domain used here the Tikhonov term scales like
``dx**-4`` and the data term like ``dx**2``, so the solver receives
``lam * dx**6``. This keeps the dimensionless numbers comparable with
toolboxes that work on the pixel lattice.
"""

from __future__ import annotations

import ast
import json
import logging
import math
import operator
import platform
import time
import traceback
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import scipy
import scipy.sparse as sp

from . import __version__, io
from .core import Image, Kernel, ProjectionGeometry, Sinogram
from .heaviside import HeavisideConfig
from .objective import build_regularizer
from .phantoms import PhantomSpec, add_noise_snr, make_phantom
from .projector import SparseOperator, assemble
from .rbf import LevelSetModel, RbfConfig
from .solvers import HISTORY_FIELDS, ReconstructionState, SolveConfig, joint_reconstruct, lsqr

log = logging.getLogger(__name__)

SWEEP_GRID = tuple(float(v) for v in np.logspace(4, 9, 12))
BENCHMARK_LAMBDA = 4.4e5
LIMITED_LAMBDA = SWEEP_GRID[4]


@dataclass(frozen=True)
class GeometryConfig:
    angles: int = 180
    arc: float = math.pi
    detectors: int | None = None  # defaults to the phantom size
    detector_extent: float | None = None
    data_kernel: str = "line"
    inversion_kernel: str = "joseph"

    def __post_init__(self):
        if self.angles < 1:
            raise ValueError("geometry.angles must be >= 1")
        if not self.arc > 0:
            raise ValueError("geometry.arc must be positive")
        if self.detectors is not None and self.detectors < 1:
            raise ValueError("geometry.detectors must be >= 1")
        Kernel.parse(self.data_kernel)
        Kernel.parse(self.inversion_kernel)

    def build(self, size: int, kernel: str) -> ProjectionGeometry:
        n_det = size if self.detectors is None else self.detectors
        return ProjectionGeometry.uniform(self.angles, n_det, self.arc, self.detector_extent, kernel)


@dataclass(frozen=True)
class PlsConfig:
    kappa: float = 0.04
    mu: float = 1.0 / 3.0
    eps_min: float | None = None
    eta: float = 2.0
    spacing_factor: float = 5.0
    margin: int = 2
    radius_fraction: float = 0.2
    amplitude: float = 1.0
    u1: float = 1.0
    fix_background: bool = False

    @property
    def heaviside(self) -> HeavisideConfig:
        return HeavisideConfig(self.kappa, self.mu, self.eps_min)

    @property
    def rbf(self) -> RbfConfig:
        return RbfConfig(self.spacing_factor, self.margin, self.eta)


@dataclass(frozen=True)
class ExperimentConfig:
    phantom: PhantomSpec = PhantomSpec(size=128)
    geometry: GeometryConfig = GeometryConfig()
    snr_db: float = math.inf
    noise_seed: int = 0
    lam: float = BENCHMARK_LAMBDA
    pls: PlsConfig = PlsConfig()
    solver: SolveConfig = SolveConfig()
    output_dir: str | None = None
    allow_inverse_crime: bool = False

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lambda must be nonnegative")
        same = Kernel.parse(self.geometry.data_kernel) is Kernel.parse(self.geometry.inversion_kernel)
        if same and not self.allow_inverse_crime:
            raise ValueError(
                "data and inversion kernels coincide (inverse crime); "
                "set allow_inverse_crime to run anyway"
            )


# ---------------------------------------------------------------- presets

def benchmark_config(model_id="A", size=128, **overrides) -> ExperimentConfig:
    """Full view: 180 angles over pi, one detector per pixel column, noiseless."""
    cfg = ExperimentConfig(
        phantom=PhantomSpec(model_id, size),
        geometry=GeometryConfig(180, math.pi),
        lam=BENCHMARK_LAMBDA,
        pls=PlsConfig(mu=0.1),
    )
    return replace(cfg, **overrides)


def limited_config(model_id="A", size=128, **overrides) -> ExperimentConfig:
    """Five angles over [0, 2pi/3] at 10 dB SNR."""
    cfg = ExperimentConfig(
        phantom=PhantomSpec(model_id, size),
        geometry=GeometryConfig(5, 2 * math.pi / 3),
        snr_db=10.0,
        lam=LIMITED_LAMBDA,
        pls=PlsConfig(mu=0.1),
    )
    return replace(cfg, **overrides)


def binary_config(size=128, **overrides) -> ExperimentConfig:
    """Binary shape on a known zero background, full view, noiseless."""
    cfg = ExperimentConfig(
        phantom=PhantomSpec("BinaryDemo", size),
        geometry=GeometryConfig(180, math.pi),
        lam=0.0,
        pls=PlsConfig(mu=0.1, fix_background=True),
    )
    return replace(cfg, **overrides)


PRESETS = {"full": benchmark_config, "limited": limited_config}


# ---------------------------------------------------------------- flat config files

_SECTIONS = {"phantom": PhantomSpec, "geometry": GeometryConfig, "pls": PlsConfig, "solver": SolveConfig}
_TOP = {"noise.snr_db": "snr_db", "noise.seed": "noise_seed", "lambda": "lam",
        "output.dir": "output_dir", "allow_inverse_crime": "allow_inverse_crime"}
_OPTIONAL = {"phantom.background_max": float, "geometry.detectors": int,
             "geometry.detector_extent": float, "pls.eps_min": float, "output.dir": str}

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}


def _number(text: str) -> float:
    """Parse a float, also accepting simple expressions in ``pi`` such as ``2*pi/3``."""
    try:
        return float(text)
    except ValueError:
        pass

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return -ev(node.operand)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        raise ValueError(f"cannot parse number {text!r}")

    return ev(ast.parse(text.strip(), mode="eval"))


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"cannot parse boolean {text!r}")


def _converter(key: str, default):
    if key in _OPTIONAL:
        conv = _OPTIONAL[key]
        if conv is int:
            conv = lambda s: int(_number(s))  # noqa: E731
        elif conv is float:
            conv = _number
        return lambda s: None if s.strip().lower() in ("none", "auto", "") else conv(s)
    if isinstance(default, bool):
        return _bool
    if isinstance(default, int):
        return lambda s: int(_number(s))
    if isinstance(default, float):
        return _number
    return str


def _section_keys(name, cls):
    for f in fields(cls):
        yield f"{name}.{'model' if f.name == 'model_id' else f.name}", f.name


def config_keys():
    """Every flat key accepted by :func:`config_from_dict`, in file order."""
    keys = []
    for name, cls in _SECTIONS.items():
        keys.extend(k for k, _ in _section_keys(name, cls))
    keys.extend(_TOP)
    return keys


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = {}
    for name, cls in _SECTIONS.items():
        sub = getattr(cfg, name)
        for key, attr in _section_keys(name, cls):
            out[key] = getattr(sub, attr)
    for key, attr in _TOP.items():
        out[key] = getattr(cfg, attr)
    return out


def config_from_dict(values: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Apply string (or already typed) ``values`` keyed by dotted names onto ``base``."""
    base = ExperimentConfig() if base is None else base
    current = config_to_dict(base)
    unknown = set(values) - set(current)
    if unknown:
        raise KeyError(f"unknown config keys: {sorted(unknown)}")
    for key, raw in values.items():
        current[key] = _converter(key, current[key])(raw) if isinstance(raw, str) else raw
    parts = {}
    for name, cls in _SECTIONS.items():
        kw = {attr: current[key] for key, attr in _section_keys(name, cls)}
        parts[name] = cls(**kw)
    top = {attr: current[key] for key, attr in _TOP.items()}
    return ExperimentConfig(**parts, **top)


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected key = value")
        values[key.strip()] = value.strip()
    return values


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    return config_from_dict(parse_config_text(Path(path).read_text()), base)


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for key, value in config_to_dict(cfg).items():
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {'none' if value is None else value}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- metrics

@dataclass
class ResidualReport:
    dr: float
    mr: float | None = None
    sr: int | None = None
    lam: float = float("nan")
    runtime: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.dr) or self.dr < 0:
            raise ValueError("DR must be finite and nonnegative")
        if self.mr is not None and not (math.isfinite(self.mr) and self.mr >= 0):
            raise ValueError("MR must be finite and nonnegative")
        if self.sr is not None:
            self.sr = int(self.sr)
            if self.sr < 0:
                raise ValueError("SR counts pixels and cannot be negative")


def residuals(u_rec, mask_rec, u_true, mask_true, W_data, p, *, lam=float("nan"),
              runtime=0.0, need_truth=False) -> ResidualReport:
    """Data, model and shape residuals.

    DR is ``||W u_rec - p||``, MR is ``||u_rec - u_true||`` and SR the number
    of pixels on which the masks disagree. Without ground truth only DR is
    available; pass ``need_truth=True`` to make that an error.
    """
    u_rec = np.asarray(getattr(u_rec, "values", u_rec), dtype=float)
    p = np.asarray(getattr(p, "values", p), dtype=float)
    Wm = getattr(W_data, "matrix", W_data)
    if Wm.shape != (p.size, u_rec.size):
        raise ValueError(f"operator {Wm.shape} does not match image {u_rec.size} / data {p.size}")
    dr = float(np.linalg.norm(Wm @ u_rec - p))
    mr = sr = None
    if u_true is not None:
        u_true = np.asarray(getattr(u_true, "values", u_true), dtype=float)
        if u_true.shape != u_rec.shape:
            raise ValueError("reconstruction and truth differ in size")
        mr = float(np.linalg.norm(u_rec - u_true))
    if mask_true is not None:
        if mask_rec is None:
            raise ValueError("a shape residual needs the reconstructed mask")
        a, b = np.asarray(mask_rec, dtype=bool), np.asarray(mask_true, dtype=bool)
        if a.shape != b.shape:
            raise ValueError("masks differ in size")
        sr = int(np.count_nonzero(a != b))
    if need_truth and (mr is None or sr is None):
        raise ValueError("model and shape residuals requested without ground truth")
    return ResidualReport(dr, mr, sr, float(lam), float(runtime))


def tikhonov_baseline(p, W, L, lam_phys, threshold):
    """Smooth Tikhonov reconstruction (no shape term) and its thresholded mask."""
    Wm = getattr(W, "matrix", W)
    p = np.asarray(getattr(p, "values", p), dtype=float)
    K = sp.vstack([Wm, math.sqrt(lam_phys) * L.matrix]).tocsr()
    rhs = np.concatenate([p, np.zeros(L.matrix.shape[0])])
    u = lsqr(K, rhs, 200, 1e-6).x
    return u, u > threshold


# ---------------------------------------------------------------- runs

@dataclass
class Problem:
    """Everything shared by runs that differ only in ``lam``."""

    cfg: ExperimentConfig
    u_true: Image
    mask_true: np.ndarray
    u0_true: Image
    W_data: SparseOperator
    W_inv: SparseOperator
    p: Sinogram  # carries the data-generation geometry
    noise_norm: float
    model: LevelSetModel
    L: object


def prepare(cfg: ExperimentConfig) -> Problem:
    u, mask, u0 = make_phantom(cfg.phantom)
    grid = u.grid
    W_data = assemble(cfg.geometry.build(grid.nx, cfg.geometry.data_kernel), grid)
    W_inv = assemble(cfg.geometry.build(grid.nx, cfg.geometry.inversion_kernel), grid)
    clean = Sinogram(W_data.geometry, W_data.matvec(u.values))
    p = add_noise_snr(clean, cfg.snr_db, cfg.noise_seed)
    model = LevelSetModel.build(grid, cfg.pls.rbf, cfg.pls.radius_fraction, cfg.pls.amplitude)
    L = build_regularizer(grid)
    return Problem(cfg, u, mask, u0, W_data, W_inv, p, float(np.linalg.norm(p.values - clean.values)),
                   model, L)


def physical_lambda(lam_pixel: float, dx: float) -> float:
    return lam_pixel * dx**6


@dataclass
class ExperimentResult:
    report: ResidualReport
    state: ReconstructionState
    mask: np.ndarray
    baseline_sr: int | None
    noise_norm: float
    output_dir: Path | None = None

    def metrics_row(self) -> dict:
        r = self.report
        return {"lambda": r.lam, "DR": r.dr, "MR": r.mr, "SR": r.sr,
                "baseline_SR": self.baseline_sr, "noise_norm": self.noise_norm}


METRIC_FIELDS = ("lambda", "DR", "MR", "SR", "baseline_SR", "noise_norm")


def solve(problem: Problem, lam: float | None = None) -> ExperimentResult:
    cfg = problem.cfg
    lam = cfg.lam if lam is None else lam
    grid = problem.u_true.grid
    lam_phys = physical_lambda(lam, grid.dx)
    pls = cfg.pls
    t0 = time.perf_counter()
    state = joint_reconstruct(
        problem.p.values, problem.W_inv, problem.model.A, pls.u1, problem.model.alpha,
        L=problem.L, lam=lam_phys, hcfg=pls.heaviside, cfg=cfg.solver,
        fix_background=pls.fix_background,
    )
    runtime = time.perf_counter() - t0
    mask = state.mask(problem.model.A)
    report = residuals(state.u, mask, problem.u_true, problem.mask_true, problem.W_data,
                       problem.p, lam=lam, runtime=runtime)
    threshold = 0.5 * (pls.u1 + cfg.phantom.bmax)
    _, base_mask = tikhonov_baseline(problem.p, problem.W_inv, problem.L, lam_phys, threshold)
    baseline_sr = int(np.count_nonzero(base_mask != problem.mask_true))
    log.info("lambda=%.4g DR=%.4g SR=%d baseline SR=%d (%.1f s)", lam, report.dr, report.sr,
             baseline_sr, runtime)
    return ExperimentResult(report, state, mask, baseline_sr, problem.noise_norm)


def manifest(cfg: ExperimentConfig, extra=None) -> dict:
    out = {
        "config": {k: (None if v is None else v if not isinstance(v, float) or math.isfinite(v) else repr(v))
                   for k, v in config_to_dict(cfg).items()},
        "config_text": dump_config(cfg),
        "seeds": {"phantom": cfg.phantom.seed, "noise": cfg.noise_seed},
        "versions": {"pdtomo": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
    }
    if extra:
        out.update(extra)
    return out


def write_bundle(result: ExperimentResult, problem: Problem, out: Path, truth: bool = True) -> None:
    out.mkdir(parents=True, exist_ok=True)
    grid = problem.u_true.grid
    st = result.state
    io.write_image_csv(out / "u_rec.csv", Image(grid, st.u))
    io.write_image_csv(out / "u0_rec.csv", Image(grid, st.u0))
    io.write_matrix_csv(out / "mask_rec.csv", result.mask.reshape(grid.shape).astype(float))
    io.write_nodes_csv(out / "alpha.csv", problem.model.nodes, st.alpha)
    io.write_records_csv(out / "convergence.csv", st.history_rows(), HISTORY_FIELDS)
    io.write_records_csv(out / "metrics.csv", [result.metrics_row()], METRIC_FIELDS)
    io.write_sinogram_csv(out / "sinogram.csv", problem.p, grid)
    io.write_pgm(out / "u_rec.pgm", st.u, grid.shape)
    io.write_pgm(out / "mask_rec.pgm", result.mask.astype(float), grid.shape)
    if truth:
        io.write_pgm(out / "u_true.pgm", problem.u_true.values, grid.shape)


def _fail(out: Path | None, exc: BaseException) -> None:
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / "FAILED").write_text("".join(traceback.format_exception(type(exc), exc, exc.__traceback__)))


def run_experiment(cfg: ExperimentConfig, output_dir=None) -> ExperimentResult:
    """Phantom, Line-kernel data, noise, Joseph-kernel reconstruction, outputs.

    When an output directory is given (argument or ``cfg.output_dir``) the
    bundle and a ``manifest.json`` are written there; on any error a
    ``FAILED`` file with the traceback is left next to the partial outputs
    and the exception propagates.
    """
    out = output_dir if output_dir is not None else cfg.output_dir
    out = None if out is None else Path(out)
    try:
        problem = prepare(cfg)
        result = solve(problem)
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            (out / "manifest.json").write_text(json.dumps(manifest(cfg), indent=2, sort_keys=True))
            write_bundle(result, problem, out)
            result.output_dir = out
        return result
    except Exception as exc:
        _fail(out, exc)
        raise


@dataclass
class SweepResult:
    lambdas: tuple
    results: list = field(default_factory=list)
    noise_norm: float = 0.0

    def rows(self):
        return [r.metrics_row() for r in self.results]

    @property
    def sr(self):
        return [r.report.sr for r in self.results]


def lambda_sweep(cfg: ExperimentConfig, lambdas=SWEEP_GRID, output_dir=None) -> SweepResult:
    """Run one phantom/noise realization across ``lambdas`` and collect residuals.

    With an output directory the combined ``sweep.csv`` (one row per
    lambda, plus the noise floor) is written together with a bundle per
    entry in ``lam_XX`` subdirectories.
    """
    lambdas = tuple(float(v) for v in lambdas)
    if not lambdas:
        raise ValueError("lambda grid is empty")
    if any(not v > 0 for v in lambdas) or any(b < a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("lambda grid must be positive and ascending")
    out = output_dir if output_dir is not None else cfg.output_dir
    out = None if out is None else Path(out)
    try:
        problem = prepare(cfg)
        sweep = SweepResult(lambdas, noise_norm=problem.noise_norm)
        for i, lam in enumerate(lambdas):
            res = solve(problem, lam)
            sweep.results.append(res)
            if out is not None:
                write_bundle(res, problem, out / f"lam_{i:02d}")
        if out is not None:
            (out / "manifest.json").write_text(json.dumps(
                manifest(cfg, {"lambdas": list(lambdas)}), indent=2, sort_keys=True))
            io.write_records_csv(out / "sweep.csv", sweep.rows(), METRIC_FIELDS)
        return sweep
    except Exception as exc:
        _fail(out, exc)
        raise


def plateau_runs(values, tol=0.2, min_len=3):
    """Start indices of windows of ``min_len`` consecutive entries within ``tol`` of their median."""
    values = np.asarray(values, dtype=float)
    hits = []
    for i in range(len(values) - min_len + 1):
        w = values[i:i + min_len]
        med = np.median(w)
        if med > 0 and np.all(np.abs(w - med) <= tol * med):
            hits.append(i)
    return hits


def reconstruct_data(sino: Sinogram, cfg: ExperimentConfig, output_dir=None) -> ExperimentResult:
    """Reconstruct measured data on a ``phantom.size`` grid; only DR is available.

    The inversion operator reuses the sinogram's sampling with
    ``geometry.inversion_kernel``. Data recorded with that same kernel is
    refused unless ``allow_inverse_crime`` is set.
    """
    out = output_dir if output_dir is not None else cfg.output_dir
    out = None if out is None else Path(out)
    try:
        inv_kernel = Kernel.parse(cfg.geometry.inversion_kernel)
        if sino.geometry.kernel is inv_kernel and not cfg.allow_inverse_crime:
            raise ValueError("data was generated with the inversion kernel (inverse crime)")
        grid = PhantomSpec("A", cfg.phantom.size).grid
        W_inv = assemble(sino.geometry.with_kernel(inv_kernel), grid)
        W_data = SparseOperator(W_inv.matrix, sino.geometry, grid)
        model = LevelSetModel.build(grid, cfg.pls.rbf, cfg.pls.radius_fraction, cfg.pls.amplitude)
        L = build_regularizer(grid)
        lam_phys = physical_lambda(cfg.lam, grid.dx)
        t0 = time.perf_counter()
        state = joint_reconstruct(sino.values, W_inv, model.A, cfg.pls.u1, model.alpha, L=L,
                                  lam=lam_phys, hcfg=cfg.pls.heaviside, cfg=cfg.solver,
                                  fix_background=cfg.pls.fix_background)
        mask = state.mask(model.A)
        report = residuals(state.u, mask, None, None, W_inv, sino, lam=cfg.lam,
                           runtime=time.perf_counter() - t0)
        result = ExperimentResult(report, state, mask, None, float("nan"))
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            (out / "manifest.json").write_text(json.dumps(manifest(cfg), indent=2, sort_keys=True))
            zero = Image.zeros(grid)
            write_bundle(result, Problem(cfg, zero, np.zeros(grid.size, bool), zero, W_data, W_inv,
                                         sino, float("nan"), model, L), out, truth=False)
            result.output_dir = out
        return result
    except Exception as exc:
        _fail(out, exc)
        raise
