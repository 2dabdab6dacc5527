"""Fast self-checks of the library's core invariants, one line per property.

These are smaller, quicker versions of the test suite's property checks,
runnable in the field via `sepqn check` to validate an installation.
"""
from __future__ import annotations

import numpy as np

from .baselines import BaselineConfig, fista_solve
from .data import synth_dataset
from .lbfgs import LbfgsMetric
from .operators import ExplicitSparse, FirstDifference, GroupSelector, Identity, RowStack
from .problems import LogisticLoss, NormKind, make_builtin
from .projections import DualBlock, dual_feasible, dual_step
from .scd import solve_surrogate
from .solver import SolverConfig, solve

__all__ = ["run_all", "CHECKS"]


def _operators_pool(rng, p=23):
    mat = rng.standard_normal((9, p))
    return [
        Identity(p),
        FirstDifference(p),
        GroupSelector(sorted(rng.choice(p, size=6, replace=False)), p),
        ExplicitSparse(mat * (rng.random((9, p)) < 0.4)),
        RowStack([Identity(p), FirstDifference(p)]),
    ]


def check_adjoint_identity():
    rng = np.random.default_rng(0)
    for op in _operators_pool(rng):
        for _ in range(20):
            u = rng.standard_normal(op.input_dim)
            v = rng.standard_normal(op.output_dim)
            lhs = float(op.apply(u) @ v)
            rhs = float(u @ op.apply_transpose(v))
            scale = max(abs(lhs), abs(rhs), 1.0)
            assert abs(lhs - rhs) <= 1e-12 * scale, f"{op!r}: {lhs} vs {rhs}"


def check_sparse_matvec_oracle():
    rng = np.random.default_rng(1)
    dense = rng.standard_normal((20, 30)) * (rng.random((20, 30)) < 0.3)
    op = ExplicitSparse(dense)
    for _ in range(20):
        x = rng.standard_normal(30)
        got = op.apply(x)
        want = dense @ x
        assert np.allclose(got, want, rtol=1e-13, atol=1e-14)


def check_gradient_finite_difference():
    rng = np.random.default_rng(2)
    handle, _ = synth_dataset(seed=5, n=40, p=12)
    loss = LogisticLoss(handle.matrix, handle.labels)
    x = rng.standard_normal(12) * 0.5
    _, g = loss.value_grad(x)
    h = 1e-6
    for j in range(12):
        e = np.zeros(12)
        e[j] = h
        fd = (loss.value(x + e) - loss.value(x - e)) / (2 * h)
        assert abs(fd - g[j]) <= 1e-6 * max(1.0, abs(g[j]))


def check_dual_projections():
    rng = np.random.default_rng(3)
    for kind in NormKind:
        for _ in range(10):
            z = rng.standard_normal(7) * 0.1
            block = DualBlock(np.zeros(7), 0.5, kind)
            stepped = dual_step(block, rng.standard_normal(7), 0.9)
            assert dual_feasible(stepped, 1e-12)
            again = dual_step(stepped, np.zeros(7), 0.0)
            assert np.allclose(again.z, stepped.z, atol=1e-15)


def check_lbfgs_roundtrip():
    rng = np.random.default_rng(4)
    metric = LbfgsMetric(10, capacity=10, sigma=2.0)
    for _ in range(6):
        s = rng.standard_normal(10)
        y = s + 0.3 * rng.standard_normal(10)
        metric.push_pair(s, y)
    for _ in range(20):
        v = rng.standard_normal(10)
        w = metric.apply(metric.inv_apply(v))
        assert np.linalg.norm(w - v) <= 1e-9 * np.linalg.norm(v)


def check_seed_ordering():
    rng = np.random.default_rng(5)
    p = 8
    for _ in range(20):
        a = LbfgsMetric(p, capacity=p, sigma=2.0)
        b = LbfgsMetric(p, capacity=p, sigma=1.0)
        for _ in range(p):
            s = rng.standard_normal(p)
            y = s + 0.4 * rng.standard_normal(p)
            if float(s @ y) > 0:
                a.push_pair(s, y)
                b.push_pair(s, y)
        diff = a.materialize_dense() - b.materialize_dense()
        w = np.linalg.eigvalsh(diff)
        assert w.min() > -1e-10, f"ordering violated: {w.min()}"


def check_theta_recursion_bound():
    theta = 1.0
    for j in range(500):
        assert theta <= 2.0 / (j + 2) + 1e-15
        theta = 2.0 / (1.0 + np.sqrt(1.0 + 4.0 / (theta * theta)))


def check_surrogate_prox_oracle():
    rng = np.random.default_rng(6)
    for _ in range(5):
        p = 12
        lam = 0.3
        sigma = 1.0 + rng.random()
        metric = LbfgsMetric(p, capacity=0, sigma=sigma)
        x = rng.standard_normal(p)
        g = rng.standard_normal(p)
        prob = make_builtin("l1-logistic", np.eye(2), np.array([1.0, -1.0]), lam=lam)
        terms = (prob.terms[0].__class__(NormKind.L1, lam, Identity(p)),)
        res = solve_surrogate(metric, x, g, terms, tolerance=1e-12, max_inner=5000)
        cand = x - g / sigma
        want = np.sign(cand) * np.maximum(np.abs(cand) - lam / sigma, 0.0) - x
        assert np.linalg.norm(res.direction - want) <= 1e-8


def check_solver_monotone_trace():
    handle, _ = synth_dataset(seed=9, n=120, p=30)
    prob = make_builtin("l1-logistic", handle.matrix, handle.labels, lam=2.0 / handle.n)
    sol = solve(prob, SolverConfig(max_outer=60))
    objs = sol.trace.objectives()
    assert np.all(np.diff(objs) <= 1e-15)
    fsol = fista_solve(prob, BaselineConfig(tolerance=1e-12, max_iterations=20000))
    rel = abs(sol.objective - fsol.objective) / max(abs(fsol.objective), 1e-30)
    assert rel <= 1e-6, f"solver/fista disagree: {rel}"


CHECKS = [
    ("adjoint-identity", check_adjoint_identity),
    ("sparse-matvec-oracle", check_sparse_matvec_oracle),
    ("gradient-finite-difference", check_gradient_finite_difference),
    ("dual-projections-feasible-firm", check_dual_projections),
    ("lbfgs-apply-roundtrip", check_lbfgs_roundtrip),
    ("seed-scale-ordering", check_seed_ordering),
    ("theta-recursion-bound", check_theta_recursion_bound),
    ("surrogate-prox-oracle", check_surrogate_prox_oracle),
    ("solver-monotone-and-consensus", check_solver_monotone_trace),
]


def run_all(verbose=True):
    """Run every check; returns the list of (name, exception) failures."""
    failures = []
    for name, fn in CHECKS:
        try:
            fn()
        except Exception as exc:
            failures.append((name, exc))
            if verbose:
                print(f"FAIL {name}: {exc}")
        else:
            if verbose:
                print(f"PASS {name}")
    return failures
