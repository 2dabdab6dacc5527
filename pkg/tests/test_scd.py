import numpy as np
import pytest

from sepqn.lbfgs import LbfgsMetric
from sepqn.operators import FirstDifference, Identity
from sepqn.problems import NormKind, RegularizerTerm
from sepqn.scd import (
    DualState,
    continuation_solve,
    dual_objective,
    initial_step_delta,
    recover_primal,
    solve_surrogate,
)


def l1_terms(p, lam):
    return (RegularizerTerm(NormKind.L1, lam, Identity(p)),)


def soft_threshold(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def metric_with_pairs(rng, p, sigma, count):
    m = LbfgsMetric(p, capacity=max(count, 1), sigma=sigma)
    made = 0
    while made < count:
        s = rng.standard_normal(p)
        y = s + 0.4 * rng.standard_normal(p)
        if m.push_pair(s, y):
            made += 1
    return m


def test_recover_primal_stationary_without_forces():
    p = 4
    metric = LbfgsMetric(p, sigma=2.0)
    x = np.arange(1.0, 5.0)
    out = recover_primal(metric, x, np.zeros(p), l1_terms(p, 0.5),
                         [np.zeros(p)])
    assert np.allclose(out, x)


def test_recover_primal_identity_metric_substitution(rng):
    p = 5
    metric = LbfgsMetric(p, sigma=1.0)
    grad = rng.standard_normal(p)
    z = rng.standard_normal(p) * 0.1
    out = recover_primal(metric, np.zeros(p), grad, l1_terms(p, 1.0), [z])
    assert np.allclose(out, z - grad)


def test_recover_primal_minimizes_reduced_lagrangian(rng):
    p = 7
    metric = metric_with_pairs(rng, p, 1.4, 3)
    x = rng.standard_normal(p)
    grad = rng.standard_normal(p)
    terms = (RegularizerTerm(NormKind.L1, 0.3, Identity(p)),
             RegularizerTerm(NormKind.L1, 0.2, FirstDifference(p)))
    zs = [rng.uniform(-0.3, 0.3, t.op.output_dim) for t in terms]
    xhat = recover_primal(metric, x, grad, terms, zs)
    pull = grad - sum(t.op.apply_transpose(z) for t, z in zip(terms, zs))
    resid = metric.apply(xhat - x) + pull
    assert np.linalg.norm(resid) <= 1e-9


def test_dual_objective_at_zero_duals(rng):
    p = 6
    metric = metric_with_pairs(rng, p, 2.0, 2)
    x = rng.standard_normal(p)
    grad = rng.standard_normal(p)
    g_val = 1.23
    got = dual_objective(metric, x, grad, l1_terms(p, 0.4), [np.zeros(p)],
                         g_value=g_val)
    want = -(g_val - 0.5 * float(grad @ metric.inv_apply(grad)))
    assert got == pytest.approx(want, rel=1e-12)


def test_dual_objective_gradient_matches_finite_differences(rng):
    p = 5
    metric = metric_with_pairs(rng, p, 1.2, 2)
    x = rng.standard_normal(p)
    grad = rng.standard_normal(p)
    terms = (RegularizerTerm(NormKind.L1, 0.5, Identity(p)),
             RegularizerTerm(NormKind.L2, 0.3, FirstDifference(p),
                             offset=rng.standard_normal(p - 1) * 0.1))
    sizes = [t.op.output_dim for t in terms]
    z0 = [rng.uniform(-0.2, 0.2, q) for q in sizes]

    def value(flat):
        zs = np.split(flat, np.cumsum(sizes)[:-1])
        return dual_objective(metric, x, grad, terms, list(zs))

    flat0 = np.concatenate(z0)
    # analytic gradient: stacked images of the recovered primal
    xhat = recover_primal(metric, x, grad, terms, z0)
    analytic = np.concatenate([t.op.apply(xhat) + t.offset for t in terms])
    h = 1e-6
    for j in range(flat0.size):
        e = np.zeros_like(flat0)
        e[j] = h
        fd = (value(flat0 + e) - value(flat0 - e)) / (2 * h)
        assert abs(fd - analytic[j]) <= 1e-6 * max(1.0, abs(analytic[j]))


def test_dual_objective_midpoint_convex(rng):
    p = 5
    metric = metric_with_pairs(rng, p, 1.0, 2)
    x = rng.standard_normal(p)
    grad = rng.standard_normal(p)
    terms = l1_terms(p, 0.5)
    for _ in range(50):
        za = [rng.uniform(-0.5, 0.5, p)]
        zb = [rng.uniform(-0.5, 0.5, p)]
        mid = [0.5 * (za[0] + zb[0])]
        f_mid = dual_objective(metric, x, grad, terms, mid)
        f_avg = 0.5 * (dual_objective(metric, x, grad, terms, za)
                       + dual_objective(metric, x, grad, terms, zb))
        assert f_mid <= f_avg + 1e-10


def test_initial_step_delta_identity_cases(rng):
    p = 4
    terms = l1_terms(p, 1.0)
    assert initial_step_delta(LbfgsMetric(p, sigma=1.0), terms) == pytest.approx(
        1.0, rel=1e-9
    )
    assert initial_step_delta(LbfgsMetric(p, sigma=4.0), terms) == pytest.approx(
        4.0, rel=1e-9
    )


def test_surrogate_matches_soft_threshold_oracle(rng):
    for trial in range(10):
        p = int(rng.integers(3, 30))
        lam = 0.1 + rng.random()
        sigma = 0.5 + 2 * rng.random()
        metric = LbfgsMetric(p, capacity=0, sigma=sigma)
        x = rng.standard_normal(p)
        grad = rng.standard_normal(p)
        res = solve_surrogate(metric, x, grad, l1_terms(p, lam),
                              tolerance=1e-10, max_inner=8000)
        want = soft_threshold(x - grad / sigma, lam / sigma) - x
        assert res.converged
        assert np.linalg.norm(res.direction - want) <= 1e-8


def test_surrogate_zero_weight_gives_quasi_newton_step(rng):
    p = 6
    metric = metric_with_pairs(rng, p, 1.5, 3)
    x = rng.standard_normal(p)
    grad = rng.standard_normal(p)
    terms = (RegularizerTerm(NormKind.L1, 0.0, Identity(p)),)
    res = solve_surrogate(metric, x, grad, terms, tolerance=1e-12, max_inner=50)
    assert np.allclose(res.direction, -metric.inv_apply(grad), atol=1e-10)


def test_surrogate_no_terms_is_newton_step(rng):
    p = 5
    metric = metric_with_pairs(rng, p, 2.0, 2)
    x = rng.standard_normal(p)
    grad = rng.standard_normal(p)
    res = solve_surrogate(metric, x, grad, (), tolerance=1e-12)
    assert res.converged and res.gap_estimate == 0.0
    assert np.allclose(res.direction, -metric.inv_apply(grad), atol=1e-12)


def test_surrogate_fused_toy_matches_dual_grid_oracle(rng):
    # single difference penalty over p = 3: the dual box is 2-dimensional,
    # so brute-force grid search over it is an independent oracle
    p = 3
    sigma = 1.3
    lam = 0.4
    metric = LbfgsMetric(p, capacity=0, sigma=sigma)
    x = np.array([0.6, -0.2, 0.9])
    grad = np.array([0.3, -0.8, 0.5])
    term = RegularizerTerm(NormKind.L1, lam, FirstDifference(p))

    w_t = term.op.to_sparse().toarray().T  # p x 2

    def grid_search(center, half_width):
        ga = np.clip(center[0] + np.linspace(-half_width, half_width, 241),
                     -lam, lam)
        gb = np.clip(center[1] + np.linspace(-half_width, half_width, 241),
                     -lam, lam)
        za, zb = np.meshgrid(ga, gb, indexing="ij")
        flat = np.stack([za.ravel(), zb.ravel()])      # 2 x G
        xhat = x[:, None] - (grad[:, None] - w_t @ flat) / sigma
        d = xhat - x[:, None]
        model = (grad @ d) + 0.5 * sigma * np.sum(d * d, axis=0)
        prim = model + lam * np.abs(np.diff(xhat, axis=0)).sum(axis=0)
        best = int(np.argmin(prim))
        return flat[:, best]

    z_best = np.zeros(2)
    width = lam
    for _ in range(4):  # refine the exhaustive search to ~1e-7 spacing
        z_best = grid_search(z_best, width)
        width /= 60.0
    oracle_dir = -(grad - w_t @ z_best) / sigma

    res = solve_surrogate(metric, x, grad, (term,), tolerance=1e-12,
                          max_inner=20000)
    assert np.linalg.norm(res.direction - oracle_dir) <= 1e-4


def test_theta_sequence_bound():
    theta = 1.0
    for j in range(2000):
        assert theta <= 2.0 / (j + 2) + 1e-15
        theta = 2.0 / (1.0 + np.sqrt(1.0 + 4.0 / (theta * theta)))


def test_duals_feasible_throughout(rng):
    p = 8
    metric = metric_with_pairs(rng, p, 1.0, 3)
    x = rng.standard_normal(p)
    grad = rng.standard_normal(p)
    terms = (RegularizerTerm(NormKind.L1, 0.2, Identity(p)),
             RegularizerTerm(NormKind.L2, 0.3, FirstDifference(p)),
             RegularizerTerm(NormKind.LINF, 0.25, Identity(p)))
    for cap in (1, 3, 10, 50):
        res = solve_surrogate(metric, x, grad, terms, tolerance=0.0,
                              max_inner=cap)
        for block in res.duals.blocks:
            assert block.feasible(1e-12)
        for t, v in zip(terms, res.duals.aux_v):
            from sepqn.projections import DualBlock, dual_feasible
            assert dual_feasible(DualBlock(v, t.weight, t.kind), 1e-12)


def test_descent_bound_against_metric_curvature(rng):
    # gamma <= -d'Hd + gap for directions from an approximately solved model
    p = 10
    metric = metric_with_pairs(rng, p, 1.0, 4)
    x = rng.standard_normal(p)
    grad = rng.standard_normal(p)
    lam = 0.2
    terms = l1_terms(p, lam)
    res = solve_surrogate(metric, x, grad, terms, tolerance=1e-9,
                          max_inner=8000)
    d = res.direction
    psi_new = terms[0].value(x + d)
    psi_old = terms[0].value(x)
    gam = float(grad @ d) + psi_new - psi_old
    dhd = float(d @ metric.apply(d))
    assert gam <= -dhd + res.gap_estimate + 1e-12


def test_gap_estimate_nonnegative(rng):
    p = 5
    metric = metric_with_pairs(rng, p, 1.0, 2)
    for _ in range(10):
        x = rng.standard_normal(p)
        grad = rng.standard_normal(p)
        res = solve_surrogate(metric, x, grad, l1_terms(p, 0.3),
                              tolerance=0.0, max_inner=7)
        assert res.gap_estimate >= -1e-10


def test_continuation_single_restart_identical(rng):
    p = 6
    metric = metric_with_pairs(rng, p, 1.1, 2)
    x = rng.standard_normal(p)
    grad = rng.standard_normal(p)
    terms = l1_terms(p, 0.4)
    a = solve_surrogate(metric, x, grad, terms, tolerance=1e-8, max_inner=500)
    b = continuation_solve(metric, x, grad, terms, tolerance=1e-8,
                           max_inner=500, restarts=1)
    assert np.array_equal(a.direction, b.direction)
    assert a.inner_iterations == b.inner_iterations
    assert a.gap_estimate == b.gap_estimate


def test_continuation_beats_single_round_at_equal_budget(rng):
    # restarted rounds with a tightening ladder reach a smaller gap than one
    # accelerated sweep of the same total length
    p = 40
    lam = 0.05
    rng_local = np.random.default_rng(7)
    metric = LbfgsMetric(p, capacity=0, sigma=0.7)
    x = rng_local.standard_normal(p)
    grad = rng_local.standard_normal(p)
    terms = l1_terms(p, lam)
    cont = continuation_solve(metric, x, grad, terms, tolerance=1e-10,
                              max_inner=120, restarts=3)
    single = solve_surrogate(metric, x, grad, terms, tolerance=1e-10,
                             max_inner=max(cont.inner_iterations, 1))
    assert cont.gap_estimate <= 1e-10
    assert single.gap_estimate >= cont.gap_estimate


def test_continuation_rounds_start_from_previous_gap():
    rng_local = np.random.default_rng(7)
    p = 40
    metric = LbfgsMetric(p, capacity=0, sigma=0.7)
    x = rng_local.standard_normal(p)
    grad = rng_local.standard_normal(p)
    terms = (RegularizerTerm(NormKind.L1, 0.3, FirstDifference(p)),)
    res = continuation_solve(metric, x, grad, terms, tolerance=1e-12,
                             max_inner=120, restarts=3)
    rounds = res.rounds
    assert len(rounds) >= 2
    for (e0, g0, _), (e1, g1, _) in zip(rounds, rounds[1:]):
        # warm start: next round opens at the previous round's final gap
        assert e1 <= g0 * (1 + 1e-9) + 1e-15


def test_warm_start_reduces_total_inner_iterations():
    import sepqn
    handle, _ = sepqn.synth_dataset(seed=11, n=300, p=60)
    prob = sepqn.make_builtin("l1-logistic", handle.matrix, handle.labels,
                              lam=2.0 / handle.n)
    base = dict(max_outer=60)
    warm = sepqn.solve(prob, sepqn.SolverConfig(warm_start=True, **base))
    cold = sepqn.solve(prob, sepqn.SolverConfig(warm_start=False, **base))
    warm_total = sum(r.inner_iterations for r in warm.trace.rows)
    cold_total = sum(r.inner_iterations for r in cold.trace.rows)
    assert warm_total <= cold_total


def test_step_delta_backtracks_into_curvature_window():
    # quadratic dual with exactly known curvature: H = sigma I and one
    # identity-map term make the dual Lipschitz constant L = 1/sigma, and the
    # quadratic-bound test accepts exactly the deltas <= 1/L
    rng = np.random.default_rng(3)
    p = 25
    sigma = 0.37
    lips = 1.0 / sigma
    metric = LbfgsMetric(p, capacity=0, sigma=sigma)
    x = rng.standard_normal(p)
    grad = rng.standard_normal(p)
    terms = l1_terms(p, 0.15)
    res = solve_surrogate(metric, x, grad, terms, tolerance=1e-11,
                          max_inner=4000, step_delta=64.0 / lips)
    assert res.backtracks > 0
    assert 1.0 / (2.0 * lips) <= res.step_delta <= 1.1 / lips * (1 + 1e-9)


def test_non_converged_result_flagged(rng):
    p = 40
    metric = LbfgsMetric(p, capacity=0, sigma=1.0)
    x = rng.standard_normal(p)
    grad = rng.standard_normal(p)
    terms = (RegularizerTerm(NormKind.L1, 0.3, FirstDifference(p)),)
    res = solve_surrogate(metric, x, grad, terms, tolerance=1e-14, max_inner=3)
    assert not res.converged
    assert res.inner_iterations == 3
