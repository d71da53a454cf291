"""LSQR, a Gauss-Newton trust-region step, and the alternating background/shape loop."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
import logging
import math

import numpy as np
import scipy.sparse as sp

from .heaviside import HeavisideConfig, compute_epsilon, guard_band, heaviside
from .objective import (
    RegularizerL,
    ShapeObjective,
    background_system,
    compose_image,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolveConfig:
    outer_iters: int = 50
    lsqr_iters: int = 200
    lsqr_tol: float = 1e-6
    tr_cg_iters: int = 10
    tr_radius0: float = 1.0
    tr_radius_max: float = 100.0
    convergence_tol: float = 1e-10
    tr_steps_per_outer: int = 1

    def __post_init__(self):
        for name in ("outer_iters", "lsqr_iters", "tr_cg_iters", "tr_steps_per_outer"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("lsqr_tol", "tr_radius0", "tr_radius_max", "convergence_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


# ---------------------------------------------------------------- LSQR

def _as_operator(op):
    if hasattr(op, "matvec") and hasattr(op, "rmatvec"):
        return op.matvec, op.rmatvec, op.shape
    if sp.issparse(op) or isinstance(op, np.ndarray):
        M = op
        return (lambda x: M @ x), (lambda y: M.T @ y), M.shape
    raise TypeError(f"cannot use {type(op).__name__} as a linear operator")


@dataclass
class LsqrResult:
    x: np.ndarray
    iterations: int
    rnorm: float
    arnorm: float
    stop: str


def lsqr(op, b, iters: int = 200, tol: float = 1e-6, x0=None) -> LsqrResult:
    """Golub-Kahan bidiagonalization least squares (Paige & Saunders).

    Stops after ``iters`` iterations, when ``||A^T r|| <= tol * ||A|| ||r||``
    (least-squares optimality, ``||A||`` estimated on the fly) or when
    ``||r|| <= tol * ||b||`` (consistent system). ``x0`` warm-starts by
    solving for the correction.
    """
    matvec, rmatvec, shape = _as_operator(op)
    b = np.asarray(b, dtype=float)
    if b.shape != (shape[0],):
        raise ValueError(f"rhs has shape {b.shape}, operator has {shape[0]} rows")
    x = np.zeros(shape[1]) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    u = b - matvec(x) if x0 is not None else b.copy()

    beta = np.linalg.norm(u)
    if beta == 0.0:
        return LsqrResult(x, 0, 0.0, 0.0, "zero residual")
    u /= beta
    v = rmatvec(u)
    alpha = np.linalg.norm(v)
    if alpha == 0.0:
        return LsqrResult(x, 0, beta, 0.0, "rhs orthogonal to range")
    v /= alpha
    w = v.copy()
    phibar, rhobar = beta, alpha
    anorm2 = 0.0
    rnorm, arnorm = beta, alpha * beta
    stop = "iteration limit"
    k = 0
    for k in range(1, iters + 1):
        u = matvec(v) - alpha * u
        beta = np.linalg.norm(u)
        if beta > 0:
            u /= beta
        anorm2 += alpha**2 + beta**2
        v = rmatvec(u) - beta * v
        alpha = np.linalg.norm(v)
        if alpha > 0:
            v /= alpha

        rho = math.hypot(rhobar, beta)
        c, s = rhobar / rho, beta / rho
        theta = s * alpha
        rhobar = -c * alpha
        phi = c * phibar
        phibar = s * phibar

        x += (phi / rho) * w
        w = v - (theta / rho) * w
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"lsqr produced a non-finite iterate at iteration {k}")

        rnorm = phibar
        arnorm = phibar * alpha * abs(c)
        anorm = math.sqrt(anorm2)
        if rnorm <= tol * bnorm:
            stop = "residual small"
            break
        if arnorm <= tol * anorm * rnorm or alpha == 0.0:
            stop = "least-squares optimal"
            break
    return LsqrResult(x, k, float(rnorm), float(arnorm), stop)


# ---------------------------------------------------------------- trust region

def _boundary_tau(s, d, radius):
    a = d @ d
    b = 2.0 * (s @ d)
    c = s @ s - radius**2
    return (-b + math.sqrt(max(b * b - 4.0 * a * c, 0.0))) / (2.0 * a)


def steihaug_cg(g, hessp, radius, maxiter=10, rtol=1e-8):
    """Approximately minimize ``g.s + 0.5 s.H s`` subject to ``||s|| <= radius``.

    Returns ``(s, hit_boundary)``.
    """
    s = np.zeros_like(g)
    r = g.copy()
    d = -r
    rr = r @ r
    gnorm = math.sqrt(rr)
    for _ in range(maxiter):
        Hd = hessp(d)
        curv = d @ Hd
        if curv <= 0.0:
            return s + _boundary_tau(s, d, radius) * d, True
        step = rr / curv
        s_next = s + step * d
        if np.linalg.norm(s_next) >= radius:
            return s + _boundary_tau(s, d, radius) * d, True
        s = s_next
        r = r + step * Hd
        rr_next = r @ r
        if math.sqrt(rr_next) <= rtol * gnorm:
            break
        d = -r + (rr_next / rr) * d
        rr = rr_next
    return s, False


@dataclass
class TrustStep:
    alpha: np.ndarray
    radius: float
    accepted: bool
    f_old: float
    f_new: float
    rho: float
    step_norm: float


def trust_region_step(fun, hessp, alpha, radius, *, cg_iters=10, radius_max=100.0,
                      f_and_g=None) -> TrustStep:
    """One Gauss-Newton trust-region iteration.

    ``fun(alpha) -> (f, g)`` and ``hessp(alpha, v) -> H v``. The step is
    accepted when the actual-to-predicted reduction ratio exceeds 0.1.
    """
    alpha = np.asarray(alpha, dtype=float)
    f, g = fun(alpha) if f_and_g is None else f_and_g
    if not np.any(g):
        return TrustStep(alpha, radius, True, f, f, 1.0, 0.0)
    s, at_boundary = steihaug_cg(g, lambda v: hessp(alpha, v), radius, cg_iters)
    predicted = -(g @ s + 0.5 * (s @ hessp(alpha, s)))
    if not predicted > 0.0:
        return TrustStep(alpha, 0.25 * radius, False, f, f, -np.inf, float(np.linalg.norm(s)))
    trial = alpha + s
    f_new = fun(trial)[0]
    rho = (f - f_new) / predicted if np.isfinite(f_new) else -np.inf
    snorm = float(np.linalg.norm(s))
    if rho < 0.1:
        return TrustStep(alpha, 0.25 * radius, False, f, f, rho, snorm)
    if rho > 0.75 and at_boundary:
        radius = min(2.0 * radius, radius_max)
    return TrustStep(trial, radius, True, f, f_new, rho, snorm)


# ---------------------------------------------------------------- joint loop

@dataclass
class IterationRecord:
    iteration: int
    f: float
    grad_norm: float
    dr: float
    eps: float
    radius: float
    accepted: bool
    f_before: float = float("nan")


HISTORY_FIELDS = ("iteration", "f", "grad_norm", "dr", "eps", "radius", "accepted")


@dataclass
class ReconstructionState:
    alpha: np.ndarray
    u0: np.ndarray
    eps: float
    u1: float
    mu: float
    history: list = field(default_factory=list)
    u: np.ndarray | None = None
    converged: bool = False

    def mask(self, A) -> np.ndarray:
        return heaviside(A @ self.alpha, self.eps, self.mu) > 0.5

    def history_rows(self):
        return [{k: asdict(r)[k] for k in HISTORY_FIELDS} for r in self.history]


def joint_reconstruct(p, W, A, u1, alpha0, *, L: RegularizerL | None = None, lam: float = 0.0,
                      hcfg: HeavisideConfig = HeavisideConfig(), cfg: SolveConfig = SolveConfig(),
                      u0=None, fix_background: bool = False, eps_dx: float = 1.0,
                      callback=None) -> ReconstructionState:
    """Alternate background LSQR solves and trust-region shape updates.

    Per outer iteration: refresh the Heaviside width from the current level
    set, solve the Tikhonov-regularized background problem, then take
    ``cfg.tr_steps_per_outer`` trust-region steps on ``alpha`` with the
    background and width frozen. If the width rule leaves no pixel in the
    band while the level set changes sign, it is widened just enough to
    cover the boundary (see :func:`~pdtomo.heaviside.guard_band`). ``eps_dx`` is the pixel pitch used in the
    width rule, in the units the level-set range is compared against (one
    pixel by default).

    With ``fix_background`` the background stays at ``u0`` (zero if not
    given) and only the shape is updated.
    """
    Wm = getattr(W, "matrix", W)
    Am = getattr(A, "matrix", A)
    p = np.asarray(getattr(p, "values", p), dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("data must be finite")
    n = Am.shape[0]
    alpha = np.array(alpha0, dtype=float)
    u0 = np.zeros(n) if u0 is None else np.array(getattr(u0, "values", u0), dtype=float)
    if not fix_background and L is None:
        raise ValueError("background reconstruction needs a regularizer")
    Lm = None if L is None else L.matrix
    reg_term = (lambda x: 0.5 * lam * float(np.sum((Lm @ x) ** 2))) if L is not None else (lambda x: 0.0)

    state = ReconstructionState(alpha, u0, float("nan"), float(u1), hcfg.mu)
    radius = cfg.tr_radius0
    rising = 0
    for k in range(cfg.outer_iters):
        phi = Am @ alpha
        eps = guard_band(phi, compute_epsilon(phi, eps_dx, hcfg.kappa, hcfg.floor))
        if not fix_background:
            system = background_system(alpha, u1, Wm, Am, p, L, lam, eps, hcfg.mu)
            u0 = lsqr(system, system.rhs, cfg.lsqr_iters, cfg.lsqr_tol, x0=u0).x
        obj = ShapeObjective(Wm, Am, p, u0, u1, eps, hcfg.mu)
        reg = reg_term(u0)
        f, g = obj.value_and_gradient(alpha)
        if not np.isfinite(f):
            raise FloatingPointError(f"objective became non-finite at outer iteration {k}")
        gnorm = float(np.linalg.norm(g))
        if gnorm < cfg.convergence_tol:
            state.history.append(IterationRecord(k, f + reg, gnorm, math.sqrt(2 * f), eps,
                                                 radius, True, f + reg))
            state.converged = True
            break

        f_before = f
        accepted = False
        for _ in range(cfg.tr_steps_per_outer):
            step = trust_region_step(obj.value_and_gradient, obj.hessian_apply, alpha, radius,
                                     cg_iters=cfg.tr_cg_iters, radius_max=cfg.tr_radius_max,
                                     f_and_g=(f, g))
            radius = step.radius
            if step.accepted:
                accepted = True
                alpha = step.alpha
                f, g = obj.value_and_gradient(alpha)
        rec = IterationRecord(k, f + reg, float(np.linalg.norm(g)), math.sqrt(2 * f), eps,
                              radius, accepted, f_before + reg)
        state.history.append(rec)
        if callback is not None:
            callback(rec)
        log.debug("outer %d f=%.6e |g|=%.3e eps=%.3e radius=%.3e %s", k, rec.f,
                  rec.grad_norm, eps, radius, "accepted" if accepted else "rejected")

        # accepted steps decrease f at fixed (u0, eps); a rise means a broken model
        if accepted:
            rising = rising + 1 if rec.f > rec.f_before else 0
            if rising >= 5:
                raise RuntimeError(f"objective increased over 5 consecutive accepted steps (k={k})")

    state.alpha, state.u0 = alpha, u0
    phi = Am @ alpha
    state.eps = guard_band(phi, compute_epsilon(phi, eps_dx, hcfg.kappa, hcfg.floor))
    state.u = compose_image(alpha, u0, u1, Am, state.eps, hcfg.mu)
    return state
