"""Time and covariance smoothing objective and its ADMM solver.

Problem::

    min_X  sum_d ||T_d X r_d - y_d||^2 + lambda1 ||D X||_F^2
           + lambda2 sum_n ||Sigma[n] - Sigma[n-1]||_F^2

The quartic covariance term is split with ``Z = H X`` (``H`` the analytic
filter). Both subproblems are quadratic: the X-step is solved by matrix-free
CG, the Z-step by a tridiagonal (Thomas) solve.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .forward import apply_adjoint, apply_forward
from .numerics import (
    AnalyticFilter,
    CGResult,
    conjugate_gradient,
    covariance_difference_system,
    difference_apply,
    difference_gram,
    thomas_solve,
)
from .signal import check_signal, covariance_from_analytic

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["iter", "objective", "f", "g1", "g2", "primal_err", "dual_err",
                 "cg_iters", "elapsed_s"]


@dataclass
class SolverConfig:
    lambda1: float = 0.0
    lambda2: float = 0.0
    rho: float = 1.0
    max_outer_iters: int = 100
    primal_tol: float = 1e-3
    dual_tol: float = 1e-3
    cg_tol: float = 1e-8
    cg_max_iters: int = 500
    seed: int | None = 0

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("regularization weights must be nonnegative")
        if self.max_outer_iters < 1 or self.cg_max_iters < 1:
            raise ValueError("iteration limits must be at least 1")

    @property
    def label(self) -> str:
        """Ablation name: MLE, TS, COS or TACOS."""
        return {(False, False): "MLE", (True, False): "TS",
                (False, True): "COS", (True, True): "TACOS"}[
            (self.lambda1 > 0, self.lambda2 > 0)]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown solver config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


class Problem:
    """Observations and channels with the precomputed pieces the solver reuses.

    Parameters
    ----------
    y : ndarray, shape (N, D)
        Channel observations.
    channels : list of ChannelModel
    """

    def __init__(self, y, channels):
        y = np.asarray(y)
        if y.ndim == 1:
            y = y[:, None]
        if y.shape[1] != len(channels):
            raise ValueError(f"{y.shape[1]} observation columns for {len(channels)} channels")
        for c in channels:
            if c.n_samples != y.shape[0]:
                raise ValueError("channel length does not match observations")
        if y.shape[0] < 2 or not np.all(np.isfinite(y)):
            raise ValueError("observations must be finite with at least 2 samples")
        self.y = y
        self.channels = list(channels)
        self.n = y.shape[0]
        self.h = AnalyticFilter(self.n)
        # per-frequency 2x2 Gram of the channel term, sum_d w_d[k] r_d r_d^T,
        # kept on the non-negative half spectrum (it is symmetric in k)
        half = self.n // 2 + 1
        w = [c.gram_weights()[:half] for c in self.channels]
        self.gram00 = sum(wd * c.r[0] ** 2 for wd, c in zip(w, self.channels))
        self.gram01 = sum(wd * c.r[0] * c.r[1] for wd, c in zip(w, self.channels))
        self.gram11 = sum(wd * c.r[1] ** 2 for wd, c in zip(w, self.channels))
        self.data_rhs = apply_adjoint(self.channels, self.y)

    def channel_gram_half(self, xh):
        """Channel Gram applied to a half spectrum ``xh`` of shape ``(N//2+1, 2)``."""
        out = np.empty_like(xh)
        out[:, 0] = self.gram00 * xh[:, 0] + self.gram01 * xh[:, 1]
        out[:, 1] = self.gram01 * xh[:, 0] + self.gram11 * xh[:, 1]
        return out

    def channel_gram_apply(self, x):
        xh = np.fft.rfft(x, axis=0)
        return np.fft.irfft(self.channel_gram_half(xh), n=self.n, axis=0)


# ---------------------------------------------------------------- objective

class Objective(NamedTuple):
    f: float
    g1: float
    g2: float
    total: float


def data_fidelity(x, problem: Problem) -> float:
    res = apply_forward(problem.channels, x) - problem.y
    return float(np.sum(np.abs(res) ** 2))


def time_smoothness(x) -> float:
    return float(np.sum(difference_apply(x) ** 2))


def _covariance_penalty_from_analytic(a) -> float:
    sigma = covariance_from_analytic(a)
    return float(np.sum(np.abs(np.diff(sigma, axis=0)) ** 2))


def objective(x, problem: Problem, config: SolverConfig) -> Objective:
    """Data fidelity, both penalties and the weighted total at ``x``."""
    x = check_signal(x)
    f = data_fidelity(x, problem)
    g1 = time_smoothness(x)
    g2 = _covariance_penalty_from_analytic(problem.h.apply(x))
    return Objective(f, g1, g2, f + config.lambda1 * g1 + config.lambda2 * g2)


def objective_gradients(x, problem: Problem):
    """Unweighted gradients ``(grad f, grad g1, grad g2)`` with respect to real ``x``."""
    x = check_signal(x)
    grad_f = 2.0 * apply_adjoint(problem.channels, apply_forward(problem.channels, x) - problem.y)
    grad_g1 = 2.0 * difference_gram(x)
    a = problem.h.apply(x)
    steps = np.diff(covariance_from_analytic(a), axis=0)
    w = np.zeros((x.shape[0], 2, 2), dtype=complex)
    w[1:] += steps
    w[:-1] -= steps
    ga = 4.0 * np.einsum("ni,nij->nj", a, w)
    grad_g2 = np.real(problem.h.adjoint(ga))
    return grad_f, grad_g1, grad_g2


def split_covariance_penalty(x, z, h: AnalyticFilter | None = None) -> float:
    """``sum_n ||X^T H^H J_n Z||_F^2`` via the tridiagonal quadratic form in ``z``."""
    x = np.asarray(x, dtype=float)
    h = h or AnalyticFilter(x.shape[0])
    m = covariance_difference_system(h.apply(x))
    return float(np.real(np.vdot(z, m.matvec(z))))


def augmented_lagrangian(x, z, u, problem: Problem, config: SolverConfig) -> float:
    x = np.asarray(x, dtype=float)
    hx = problem.h.apply(x)
    value = data_fidelity(x, problem) + config.lambda1 * time_smoothness(x)
    if config.lambda2:
        value += config.lambda2 * split_covariance_penalty(x, z, problem.h)
    value += 0.5 * config.rho * (np.sum(np.abs(hx - z + u) ** 2) - np.sum(np.abs(u) ** 2))
    return float(value)


def lagrangian_gradient_x(x, z, u, problem: Problem, config: SolverConfig):
    grad_f, grad_g1, _ = objective_gradients(x, problem)
    hx = problem.h.apply(x)
    inner = config.rho * (hx - z + u)
    if config.lambda2:
        p = covariance_difference_system(z, scale=2.0 * config.lambda2)
        inner = inner + p.matvec(hx)
    return grad_f + config.lambda1 * grad_g1 + np.real(problem.h.adjoint(inner))


def lagrangian_gradient_z(x, z, u, problem: Problem, config: SolverConfig):
    """Complex gradient ``G`` such that ``dL = Re <G, dZ>``."""
    hx = problem.h.apply(np.asarray(x, dtype=float))
    grad = config.rho * (z - hx - u)
    if config.lambda2:
        grad = grad + covariance_difference_system(hx, scale=2.0 * config.lambda2).matvec(z)
    return grad


# ---------------------------------------------------------------- ADMM steps

@dataclass
class AdmmState:
    x: np.ndarray
    z: np.ndarray
    u: np.ndarray
    iteration: int = 0
    primal_err: float = float("nan")
    dual_err: float = float("nan")
    trace: list = field(default_factory=list)

    @classmethod
    def initial(cls, x0, h: AnalyticFilter):
        x0 = np.array(x0, dtype=float)
        return cls(x=x0, z=h.apply(x0), u=np.zeros(x0.shape, dtype=complex))


def x_system(state: AdmmState, problem: Problem, config: SolverConfig):
    """Matrix-free ``(matvec, rhs)`` of the X-subproblem normal equations.

    Stationarity of the augmented Lagrangian in ``X`` reads ``M X = b`` with::

        M = sum_d r_d r_d^T (x) Re{T_d^H T_d}
            + I_2 (x) (lambda1 D^T D + Re{H^H (lambda2 P(Z) + rho/2 I) H})
        b = sum_d Re{T_d^H y_d} r_d^T + rho/2 Re{H^H (Z - U)}

    where ``P(Z) = sum_n J_n Z Z^H J_n`` is tridiagonal.
    """
    n = problem.n
    h = problem.h
    half = n // 2 + 1
    g = h.frequency_gains[:half]
    curvature = covariance_difference_system(
        state.z, scale=config.lambda2, shift=0.5 * config.rho)
    lower, diag, upper = curvature.lower, curvature.diag, curvature.upper
    k00, k01, k11 = problem.gram00, problem.gram01, problem.gram11
    lam1 = config.lambda1
    # work on (2, N) rows so every FFT runs over contiguous memory
    spectrum = np.zeros((2, n), dtype=complex)

    def matvec(vec):
        x = vec.reshape((2, n))
        xh = np.fft.rfft(x, axis=-1)
        spectrum[:, :half] = g * xh
        hx = np.fft.ifft(spectrum, axis=-1)
        b = diag * hx
        b[:, :-1] += upper * hx[:, 1:]
        b[:, 1:] += lower * hx[:, :-1]
        # Re{H b} only needs the half spectrum of b: gains 2 on the interior
        # bins cancel the factor 1/2 of the real-part projection
        out_h = np.fft.fft(b, axis=-1)[:, :half]
        out_h[0] += k00 * xh[0] + k01 * xh[1]
        out_h[1] += k01 * xh[0] + k11 * xh[1]
        out = np.fft.irfft(out_h, n=n, axis=-1)
        if lam1:
            d = np.diff(x, axis=-1)
            out[:, :-1] -= lam1 * d
            out[:, 1:] += lam1 * d
        return out.reshape(-1)

    rhs = problem.data_rhs + 0.5 * config.rho * np.real(h.adjoint(state.z - state.u))
    return matvec, rhs.reshape(-1, order="F")


def x_step(state: AdmmState, problem: Problem, config: SolverConfig) -> CGResult:
    """Minimize the augmented Lagrangian over real ``X``, warm-started at ``state.x``.

    Returns the CG result; its ``x`` field is the new signal, shape ``(N, 2)``.
    """
    matvec, rhs = x_system(state, problem, config)
    res = conjugate_gradient(matvec, rhs, state.x.reshape(-1, order="F"),
                             tol=config.cg_tol, max_iter=config.cg_max_iters)
    x = res.x.reshape((problem.n, 2), order="F")
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("non-finite X iterate")
    return res._replace(x=x)


def z_system(x, u, problem: Problem, config: SolverConfig):
    """Tridiagonal ``M_z = 2 lambda2 sum_n J_n HX (HX)^H J_n + rho I`` and ``b_z = rho (HX + U)``."""
    hx = problem.h.apply(x)
    m = covariance_difference_system(hx, scale=2.0 * config.lambda2, shift=config.rho)
    return m, config.rho * (hx + u)


def z_step(state: AdmmState, problem: Problem, config: SolverConfig) -> np.ndarray:
    if config.lambda2 == 0:
        return problem.h.apply(state.x) + state.u
    m, b = z_system(state.x, state.u, problem, config)
    return thomas_solve(m, b)


def u_step(state: AdmmState, problem: Problem, config: SolverConfig) -> np.ndarray:
    return state.u + config.rho * (problem.h.apply(state.x) - state.z)


def _relative(num, den):
    return float(num / den) if den > 0 else float(num)


class SolveResult(NamedTuple):
    signal: np.ndarray
    state: AdmmState
    diagnostics: dict


def solve(y, channels, config: SolverConfig | None = None, x0=None) -> SolveResult:
    """Run ADMM until both relative residuals meet their tolerances.

    Parameters
    ----------
    y : ndarray, shape (N, D)
    channels : list of ChannelModel
    config : SolverConfig, optional
    x0 : ndarray, optional
        Initial signal. Drawn standard normal from ``config.seed`` if omitted.

    Returns
    -------
    SolveResult
        ``signal`` (N, 2), final ``state`` and a ``diagnostics`` dict with
        ``converged``, ``iterations``, ``total_cg_iters`` and the per-iteration
        ``trace`` (list of dicts keyed by ``TRACE_COLUMNS``).
    """
    config = config or SolverConfig()
    problem = y if isinstance(y, Problem) else Problem(y, channels)
    if x0 is None:
        x0 = np.random.default_rng(config.seed).standard_normal((problem.n, 2))
    state = AdmmState.initial(check_signal(x0, "x0"), problem.h)

    t0 = time.perf_counter()
    converged = False
    total_cg = 0
    cg_failures = 0
    for it in range(1, config.max_outer_iters + 1):
        z_prev = state.z
        cg = x_step(state, problem, config)
        state.x = cg.x
        total_cg += cg.iterations
        cg_failures += not cg.converged
        state.z = z_step(state, problem, config)
        state.u = u_step(state, problem, config)
        state.iteration = it
        if not (np.all(np.isfinite(state.z)) and np.all(np.isfinite(state.u))):
            raise FloatingPointError(f"non-finite ADMM iterate at iteration {it}")

        hx = problem.h.apply(state.x)
        state.primal_err = _relative(np.linalg.norm(state.z - hx), np.linalg.norm(hx))
        state.dual_err = _relative(np.linalg.norm(state.z - z_prev), np.linalg.norm(z_prev))
        obj = objective(state.x, problem, config)
        state.trace.append({
            "iter": it, "objective": obj.total, "f": obj.f, "g1": obj.g1, "g2": obj.g2,
            "primal_err": state.primal_err, "dual_err": state.dual_err,
            "cg_iters": cg.iterations, "elapsed_s": time.perf_counter() - t0,
        })
        if state.primal_err <= config.primal_tol and state.dual_err <= config.dual_tol:
            converged = True
            break

    if not converged:
        logger.warning("ADMM stopped after %d iterations without meeting tolerances "
                       "(primal %.2e, dual %.2e)", state.iteration, state.primal_err,
                       state.dual_err)
    diagnostics = {
        "converged": converged,
        "iterations": state.iteration,
        "total_cg_iters": total_cg,
        "cg_failures": cg_failures,
        "initial_objective": objective(x0, problem, config).total,
        "trace": state.trace,
        "elapsed_s": time.perf_counter() - t0,
    }
    return SolveResult(state.x.copy(), state, diagnostics)


def write_trace_csv(path, trace):
    import csv

    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in trace:
            w.writerow({k: (format(v, ".17g") if isinstance(v, float) else v)
                        for k, v in row.items()})
