"""Outer proximal quasi-Newton loop.

Each iteration solves the quadratic-metric surrogate through its dual
(warm-started from the previous iteration's optimal duals), backtracks a step
length against the sufficient-descent test

    f(x + t*d) <= f(x) + alpha * t * gamma,    gamma = grad'd + Psi(x+d) - Psi(x),

harvests the curvature pair when s'y > 0, and rescales the LBFGS seed matrix.
Data passes are counted as one per gradient evaluation and one per line-search
probe; inner dual iterations touch only the surrogate and cost no passes.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .lbfgs import LbfgsMetric
from .problems import CompositeProblem
from .scd import DualState, continuation_solve

__all__ = [
    "SolverConfig",
    "TraceRow",
    "SolveTrace",
    "Solution",
    "LineSearchFailure",
    "SolverError",
    "gamma",
    "line_search",
    "solve",
    "unit_step_tail",
]


class SolverError(RuntimeError):
    """Non-recoverable solver state, e.g. a non-finite objective."""


class LineSearchFailure(RuntimeError):
    """Backtracking underflowed; carries the state that produced it."""

    def __init__(self, step, gamma_k, objective, probes):
        self.step = step
        self.gamma_k = gamma_k
        self.objective = objective
        self.probes = probes
        super().__init__(
            f"line search underflowed at t={step:.3e} (gamma={gamma_k:.3e}, "
            f"f={objective:.6e}, probes={probes}); the search direction is "
            "corrupted or the inner tolerance is too loose"
        )


@dataclass
class SolverConfig:
    alpha: float = 1e-4                 # sufficient-descent constant, in (0, 1/2)
    backtrack_factor: float = 0.5
    outer_tolerance: float = 1e-8       # relative objective change
    max_outer: int = 500
    lbfgs_memory: int = 10
    inner_tolerance: float = None       # default max(1e-10, 0.1 * outer_tolerance)
    continuation_restarts: int = 3
    max_inner: int = 2000
    sigma0: float = 1.0
    sigma_floor: float = 1e-8
    warm_start: bool = True
    metric_mode: str = "lbfgs"          # "lbfgs" | "fixed" (scd-direct)
    stall_iterations: int = 3
    record_iterates: bool = False
    # anneal beta toward 1 after this many consecutive unit steps, so the
    # aggressive seed decay tapers off once the metric stops being rejected;
    # 0 disables and leaves beta driven by failures alone
    beta_success_anneal: int = 1

    def __post_init__(self):
        if not (0.0 < self.alpha < 0.5):
            raise ValueError(f"alpha must lie strictly in (0, 1/2), got {self.alpha}")
        if not (0.0 < self.backtrack_factor < 1.0):
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")
        if self.metric_mode not in ("lbfgs", "fixed"):
            raise ValueError(f"unknown metric_mode {self.metric_mode!r}")
        if self.continuation_restarts < 1:
            raise ValueError("continuation_restarts must be >= 1")

    def resolved_inner_tolerance(self) -> float:
        if self.inner_tolerance is not None:
            return self.inner_tolerance
        return max(1e-10, 0.1 * self.outer_tolerance)


@dataclass
class TraceRow:
    iteration: int
    objective: float
    step: float
    gamma: float
    inner_iterations: int
    epochs: int               # cumulative data passes
    seconds: float            # cumulative wall time
    sigma: float
    beta: float
    work: float               # cumulative-free: flops attributed to this iteration
    gap_estimate: float
    dir_h_dir: float          # d' H d for the accepted direction
    dual_shift: float         # ||z_warm - z_final||_2 across the inner solve
    curvature_accepted: bool
    inner_converged: bool


@dataclass
class SolveTrace:
    rows: list = field(default_factory=list)
    status: str = "running"
    initial_objective: float = float("nan")
    iterates: list = field(default_factory=list)

    def objectives(self):
        return np.array([r.objective for r in self.rows])

    def steps(self):
        return np.array([r.step for r in self.rows])

    @property
    def iterations(self) -> int:
        return len(self.rows)

    @property
    def epochs(self) -> int:
        return self.rows[-1].epochs if self.rows else 0


@dataclass
class Solution:
    x: np.ndarray
    objective: float
    trace: SolveTrace
    duals: DualState = None


def gamma(problem: CompositeProblem, x_k, delta, grad_k) -> float:
    """Composite directional decrease grad'd + Psi(x+d) - Psi(x); <= 0 for a
    direction from an (approximately) solved surrogate."""
    return float(grad_k @ delta) + problem.penalty(x_k + delta) - problem.penalty(x_k)


def line_search(problem, x_k, delta, gamma_k, config, f_value=None):
    """Largest t in {1, c, c^2, ...} meeting the sufficient-descent test.

    Returns (t, f(x + t*delta), probes). Every probe is one data pass.
    """
    if gamma_k > 0:
        raise ValueError(f"gamma must be <= 0 for a descent direction, got {gamma_k}")
    if f_value is None:
        f_value = problem.objective(x_k)
    t = 1.0
    probes = 0
    while True:
        f_t = problem.objective(x_k + t * delta)
        probes += 1
        if f_t <= f_value + config.alpha * t * gamma_k:
            return t, f_t, probes
        t *= config.backtrack_factor
        if t < 1e-12:
            raise LineSearchFailure(t, gamma_k, f_value, probes)


def unit_step_tail(trace: SolveTrace) -> bool:
    """True iff every iteration in the trace's last quartile took t = 1."""
    rows = trace.rows
    if not rows:
        return False
    tail = max(1, len(rows) // 4)
    return all(r.step == 1.0 for r in rows[-tail:])


def _make_metric(problem, config):
    if config.metric_mode == "fixed":
        sigma = problem.loss.lipschitz_bound()
        return LbfgsMetric(problem.dim, capacity=0, sigma=max(sigma, config.sigma_floor),
                           sigma_floor=config.sigma_floor)
    return LbfgsMetric(problem.dim, capacity=config.lbfgs_memory,
                       sigma=config.sigma0, sigma_floor=config.sigma_floor)


def solve(problem: CompositeProblem, config: SolverConfig = None, x0=None) -> Solution:
    cfg = config if config is not None else SolverConfig()
    p = problem.dim
    x = np.zeros(p) if x0 is None else np.array(x0, dtype=np.float64)
    if x.shape != (p,):
        raise ValueError(f"x0 must have length {p}")

    metric = _make_metric(problem, cfg)
    eps_inner = cfg.resolved_inner_tolerance()
    t0 = time.perf_counter()

    epochs = 1
    g_val, grad = problem.loss.value_grad(x)
    f_val = g_val + problem.penalty(x)
    if not np.isfinite(f_val):
        raise SolverError(f"objective is not finite at the starting point: {f_val}")

    trace = SolveTrace(initial_objective=f_val)
    if cfg.record_iterates:
        trace.iterates.append(x.copy())
    duals = None
    stall = 0
    unit_run = 0
    status = "max_outer"

    for k in range(cfg.max_outer):
        warm = duals if cfg.warm_start else None
        inner = continuation_solve(
            metric, x, grad, problem.terms, warm_duals=warm,
            tolerance=eps_inner, max_inner=cfg.max_inner,
            restarts=cfg.continuation_restarts,
        )
        delta = inner.direction
        gam = gamma(problem, x, delta, grad)

        # no certifiable decrease: gamma is zero to within the inner gap, so
        # the direction is dual-solver noise and the iterate is stationary
        scale = max(1.0, abs(f_val))
        if gam >= -1e-14 * scale or (
            inner.converged and -gam <= 2.0 * inner.gap_estimate
        ):
            status = "converged"
            break

        try:
            t, f_new, probes = line_search(problem, x, delta, gam, cfg, f_value=f_val)
        except LineSearchFailure:
            # dominant cause is an under-solved surrogate: tighten once, retry
            inner = continuation_solve(
                metric, x, grad, problem.terms, warm_duals=inner.duals,
                tolerance=eps_inner * 0.01, max_inner=cfg.max_inner,
                restarts=cfg.continuation_restarts,
            )
            delta = inner.direction
            gam = gamma(problem, x, delta, grad)
            if gam >= -1e-14 * scale:
                status = "converged"
                break
            t, f_new, probes = line_search(problem, x, delta, gam, cfg, f_value=f_val)
        epochs += probes

        if not np.isfinite(f_new):
            raise SolverError(f"objective became non-finite at iteration {k + 1}")

        dir_h_dir = float(delta @ metric.apply(delta))
        dual_shift = _dual_shift(warm, inner.duals)

        x_new = x + t * delta
        g_new, grad_new = problem.loss.value_grad(x_new)
        epochs += 1
        s = x_new - x
        y_vec = grad_new - grad
        accepted = False
        if cfg.metric_mode == "lbfgs" and float(s @ y_vec) > 0.0:
            accepted = metric.push_pair(s, y_vec)
            if accepted:
                metric.adapt_h0(t, s, y_vec)
        if cfg.metric_mode == "lbfgs":
            if t == 1.0:
                unit_run += 1
                if cfg.beta_success_anneal and unit_run >= cfg.beta_success_anneal:
                    metric.beta = 2.0 / (1.0 + 1.0 / metric.beta)
                    unit_run = 0
            else:
                unit_run = 0

        work = inner.work + (probes + 1) * problem.loss.pass_cost
        trace.rows.append(TraceRow(
            iteration=k + 1, objective=f_new, step=t, gamma=gam,
            inner_iterations=inner.inner_iterations, epochs=epochs,
            seconds=time.perf_counter() - t0, sigma=metric.sigma,
            beta=metric.beta, work=work, gap_estimate=inner.gap_estimate,
            dir_h_dir=dir_h_dir, dual_shift=dual_shift,
            curvature_accepted=accepted, inner_converged=inner.converged,
        ))
        if cfg.record_iterates:
            trace.iterates.append(x_new.copy())

        rel = abs(f_val - f_new) / max(1.0, abs(f_val))
        x, grad, f_val = x_new, grad_new, f_new
        duals = inner.duals

        if rel <= cfg.outer_tolerance:
            stall += 1
            if stall >= cfg.stall_iterations:
                status = "converged"
                break
        else:
            stall = 0

    trace.status = status
    return Solution(x=x, objective=f_val, trace=trace, duals=duals)


def _dual_shift(warm, final: DualState) -> float:
    if final is None:
        return 0.0
    if warm is None:
        ref = [np.zeros_like(b.z) for b in final.blocks]
    else:
        ref = list(warm.aux_v)
    total = 0.0
    for a, b in zip(ref, final.aux_v):
        diff = b - a
        total += float(diff @ diff)
    return float(np.sqrt(total))
