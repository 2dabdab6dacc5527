"""Per-term dual updates: projections onto dual-norm balls.

With the penalty weight folded into each term, a term's dual variable lives in
the dual-norm ball of radius equal to that weight: the l1 penalty pairs with a
box (sup-norm ball), the group l2 penalty with a Euclidean ball, and the
sup-norm penalty with an l1 ball. Each dual step is a single projected
gradient step on that ball and has a closed form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problems import NormKind, RegularizerTerm, norm_value

__all__ = [
    "DualBlock",
    "project_box",
    "project_l2_ball",
    "project_l1_ball",
    "dual_step",
    "dual_feasible",
    "dual_to_psi_certificate",
    "projection_cost",
]


def project_box(v, radius):
    return np.clip(v, -radius, radius)


def project_l2_ball(v, radius):
    nv = float(np.sqrt(v @ v))
    if nv <= radius:
        return v.copy()
    if radius == 0.0:
        return np.zeros_like(v)
    out = (radius / nv) * v
    # ulp-level overshoot would break strict feasibility and firmness
    nv = float(np.sqrt(out @ out))
    while nv > radius:
        out *= radius / nv
        nv = float(np.sqrt(out @ out))
    return out


def project_l1_ball(v, radius):
    """Euclidean projection onto {z : ||z||_1 <= radius}, sort-based O(q log q).

    When v is outside the ball the result is soft-threshold(v, tau) with the
    unique tau > 0 that puts the output exactly on the boundary.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    if radius == 0.0:
        return np.zeros_like(v)
    u = np.sort(a)[::-1]
    css = np.cumsum(u) - radius
    j = np.arange(1, u.size + 1)
    rho = np.nonzero(u - css / j > 0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    out = np.sign(v) * np.maximum(a - tau, 0.0)
    # ulp-level overshoot would break strict feasibility and firmness
    total = np.abs(out).sum()
    while total > radius:
        out *= radius / total
        total = np.abs(out).sum()
    return out


_PROJECTORS = {
    NormKind.L1: project_box,
    NormKind.L2: project_l2_ball,
    NormKind.LINF: project_l1_ball,
}

_DUAL_NORM = {
    NormKind.L1: lambda z: float(np.abs(z).max()) if z.size else 0.0,
    NormKind.L2: lambda z: float(np.linalg.norm(z)),
    NormKind.LINF: lambda z: float(np.abs(z).sum()),
}


@dataclass(frozen=True, eq=False)
class DualBlock:
    """Dual variable of one penalty term, plus the ball that constrains it."""

    z: np.ndarray
    weight: float
    kind: NormKind

    def feasible(self, tolerance=0.0) -> bool:
        return _DUAL_NORM[self.kind](self.z) <= self.weight + tolerance


def dual_step(block: DualBlock, gradient_block, step) -> DualBlock:
    """Projected gradient step on the block's dual ball.

    Moves z against gradient_block by `step`, then projects back onto the
    feasible ball; with step 0 this is plain (firm) projection.
    """
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    candidate = block.z - step * np.asarray(gradient_block, dtype=np.float64)
    projected = _PROJECTORS[block.kind](candidate, block.weight)
    return DualBlock(projected, block.weight, block.kind)


def dual_feasible(block: DualBlock, tolerance=0.0) -> bool:
    return block.feasible(tolerance)


def dual_to_psi_certificate(term: RegularizerTerm, z, x) -> float:
    """Fenchel gap of one term: psi(Wx + b) - z'(Wx + b), >= 0 for feasible z.

    Zero exactly when z supports the penalty at Wx + b, which is the per-term
    optimality certificate the inner solver sums for its stopping test.
    """
    z = np.asarray(z, dtype=np.float64)
    if _DUAL_NORM[term.kind](z) > term.weight + 1e-9 * (1.0 + term.weight):
        raise ValueError("dual point lies outside the term's feasible ball")
    u = term.image(x)
    return term.weight * norm_value(term.kind, u) - float(z @ u)


def projection_cost(kind: NormKind, q: int) -> int:
    """Flop estimate of one dual step on a block of size q (bench counters)."""
    if kind is NormKind.LINF:
        return q * max(1, int(np.ceil(np.log2(max(q, 2)))))
    return q
