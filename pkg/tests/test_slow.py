import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from conftest import kkt_ok, random_instance, soft_threshold_oracle
from exactbpdn import (DesignMatrix, DomainError, InfeasibleError, InvalidArgumentError,
                       NonConvergenceError, SolverOptions, kkt_check, regularization_path, solve_bpdn)
from exactbpdn.slow import (StepKind, descent_to_time, eval_trajectory, evolve_f, make_dual_point,
                            max_descent_time, slow_step)
from exactbpdn.verify import dual_objective, feasible_rescale

I2 = DesignMatrix(np.eye(2))


# ---------------------------------------------------------------- dual points

def test_make_dual_point_example():
    A = DesignMatrix([[1, 0, 0.5], [0, 1, 0.5]])
    pt = make_dual_point(A, [-1.0, 0.0])
    np.testing.assert_allclose(pt.correlation, [1, 0, 0.5])
    assert pt.equicorrelation.tolist() == [0]
    np.testing.assert_array_equal(pt.signs, [1, 1, 1])


def test_zero_dual_point_has_empty_equicorrelation():
    pt = make_dual_point(I2, [0.0, 0.0])
    assert pt.equicorrelation.size == 0


def test_infeasible_dual_point_reports_violation():
    with pytest.raises(DomainError) as info:
        make_dual_point(I2, [-1.5, 0.0])
    assert info.value.violation == pytest.approx(0.5)


@given(st.integers(0, 2**32 - 1))
def test_normalised_data_is_dual_feasible(seed):
    A, b = random_instance(seed)
    Atb = A.rmatvec(b)
    pt = make_dual_point(A, -b / np.max(np.abs(Atb)))
    assert set(np.flatnonzero(np.abs(Atb) == np.max(np.abs(Atb)))) <= set(pt.equicorrelation)


# ---------------------------------------------------------------- descent time

def test_max_descent_time_example():
    pt = make_dual_point(I2, [-1.0, -1.0 / 3.0])
    assert max_descent_time(pt, np.array([0.0, -2.0 / 3.0]), I2) == pytest.approx(1.0)


@given(st.integers(0, 2**32 - 1), st.sampled_from([1e-14, 1e-8, 1e6]))
def test_max_descent_time_scales_inversely(seed, alpha):
    rng, A, b, t, pt = _sample_point(seed)
    d = rng.standard_normal(A.m)
    base = max_descent_time(pt, d, A)
    scaled = max_descent_time(pt, alpha * d, A)
    if math.isinf(base):
        assert math.isinf(scaled)
    else:
        assert scaled * alpha == pytest.approx(base, rel=1e-12)


def test_max_descent_time_zero_direction():
    pt = make_dual_point(I2, [-1.0, -1.0 / 3.0])
    assert math.isinf(max_descent_time(pt, np.zeros(2), I2))


def test_equicorrelated_slope_contributes_two_over_slope():
    # p sits on the face of column 0; moving along d = (-1, 0) raises c_0 past 1
    # only after crossing to the opposite face, at distance 2
    pt = make_dual_point(I2, [-1.0, 0.0])
    delta = max_descent_time(pt, np.array([1.0, 0.0]), I2)
    assert delta == pytest.approx(2.0)
    # feasibility scan confirms the value
    grid = np.linspace(0, 3, 3001)
    feasible = [g for g in grid if np.max(np.abs(I2.rmatvec(pt.p + g * np.array([1.0, 0.0])))) <= 1 + 1e-12]
    assert max(feasible) == pytest.approx(2.0, abs=1e-3)


def test_evolve_f_values():
    assert evolve_f(0.0, 3.0) == 0.0
    assert evolve_f(2.5, 0.0) == 2.5
    assert evolve_f(math.log(2.0), 1.0) == pytest.approx(0.5)
    assert evolve_f(math.inf, 2.0) == pytest.approx(0.5)
    with pytest.raises(InvalidArgumentError):
        evolve_f(-1.0, 1.0)


@given(st.floats(0, 50), st.floats(0, 5))
def test_descent_to_time_inverts_evolve_f(tau, t):
    delta = evolve_f(tau, t)
    if t * delta < 1 - 1e-9:
        assert descent_to_time(delta, t) == pytest.approx(tau, rel=1e-6, abs=1e-9)


# ---------------------------------------------------------------- identities

def _sample_point(seed):
    """Random instance, hyperparameter and dual point away from the optimum."""
    rng = np.random.default_rng(seed)
    A, b = random_instance(seed, m_range=(2, 10), extra=(0, 15))
    t0 = float(np.max(np.abs(A.rmatvec(b))))
    t = 0.0 if rng.random() < 0.3 else float(t0 * rng.uniform(0.01, 1.0))
    if rng.random() < 0.5:
        p = feasible_rescale(A, rng.standard_normal(A.m)) * rng.uniform(0.2, 1.0)
        pt = make_dual_point(A, p)
    else:
        pt = make_dual_point(A, -b / t0)
        # walk a random number of exact steps along the trajectory
        for _ in range(int(rng.integers(0, 4))):
            step = slow_step(A, pt, t, b)
            if step.step_kind is not StepKind.INTERIOR:
                break
            pt = make_dual_point(A, pt.p + step.delta_star * step.d)
    return rng, A, b, t, pt


def check_evolution_rule(seed):
    rng, A, b, t, pt = _sample_point(seed)
    step = slow_step(A, pt, t, b)
    if not step.d.any() or math.isinf(step.delta_star):
        return True
    delta = step.delta_star * rng.uniform(0.01, 0.99)
    d_new = slow_step(A, make_dual_point(A, pt.p + delta * step.d), t, b).d
    scale = max(np.max(np.abs(step.d)), np.max(np.abs(b + t * pt.p)))
    return np.max(np.abs(d_new - (1.0 - t * delta) * step.d)) <= 1e-9 * scale


def check_descent_and_energy(seed):
    rng, A, b, t, pt = _sample_point(seed)
    step = slow_step(A, pt, t, b)
    d = step.d
    dd = float(d @ d)
    g = b + t * pt.p
    energy = abs(dd + float(g @ d)) <= 1e-9 * max(dd, np.linalg.norm(g) ** 2, 1e-300)
    if math.isinf(step.delta_star):
        return energy
    delta = step.delta_star * rng.uniform(0.0, 1.0)
    lhs = dual_objective(b, t, pt.p + delta * d) - dual_objective(b, t, pt.p)
    rhs = delta * (t * delta / 2.0 - 1.0) * dd
    scale = max(abs(rhs), abs(dual_objective(b, t, pt.p)), 1e-300)
    return energy and abs(lhs - rhs) <= 1e-9 * scale


@settings(max_examples=150)
@given(st.integers(0, 2**32 - 1))
def test_evolution_rule(seed):
    assert check_evolution_rule(seed)


@settings(max_examples=150)
@given(st.integers(0, 2**32 - 1))
def test_descent_and_energy_identities(seed):
    assert check_descent_and_energy(seed)


@settings(max_examples=60)
@given(st.integers(0, 2**32 - 1))
def test_objective_decreases_along_trajectory(seed):
    A, b = random_instance(seed)
    t = float(np.max(np.abs(A.rmatvec(b)))) * 0.05
    _, traj, _ = solve_bpdn(A, b, t)
    vals = [dual_objective(b, t, pt.p) for pt in traj.points]
    assert all(v1 <= v0 + 1e-12 * (1 + abs(v0)) for v0, v1 in zip(vals, vals[1:]))


# ---------------------------------------------------------------- solve_bpdn

def test_identity_example_traces_one_step():
    pair, traj, rep = solve_bpdn(I2, [3.0, 1.0], 1.0)
    np.testing.assert_allclose(pair.x, [2, 0])
    np.testing.assert_allclose(pair.p, [-1, -1])
    assert rep.iterations == 1
    assert traj.deltas[0] == pytest.approx(1.0)
    np.testing.assert_allclose(eval_trajectory(traj, 0.0), [-1, -1 / 3])
    np.testing.assert_allclose(eval_trajectory(traj, 1e6), [-1, -1])
    assert rep.kkt is not None and kkt_ok(rep.kkt, [3.0, 1.0])


def test_start_at_optimum_converges_immediately():
    pair, _, rep = solve_bpdn(I2, [3.0, 0.0], 1.0, p0=[-1.0, 0.0])
    np.testing.assert_allclose(pair.x, [2, 0])
    np.testing.assert_allclose(pair.p, [-1, 0])
    assert rep.iterations == 1


@given(st.integers(0, 2**32 - 1), st.floats(1.0, 10.0))
def test_large_t_gives_zero(seed, factor):
    A, b = random_instance(seed)
    t = factor * float(np.max(np.abs(A.rmatvec(b))))
    pair, _, _ = solve_bpdn(A, b, t)
    assert not pair.x.any()
    np.testing.assert_allclose(pair.p, -b / t)


def test_trajectory_is_continuous_at_nodes():
    A, b = random_instance(11, m_range=(6, 6), extra=(10, 10))
    _, traj, _ = solve_bpdn(A, b, 0.0)
    for k in range(1, len(traj.taus) - 1):
        left = traj.points[k - 1].p + evolve_f(traj.taus[k] - traj.taus[k - 1], 0.0) * traj.directions[k - 1]
        np.testing.assert_allclose(left, traj.points[k].p, atol=1e-10)
        np.testing.assert_allclose(eval_trajectory(traj, traj.taus[k]), traj.points[k].p)


@pytest.mark.parametrize("t", [0.0, 0.3, 1.0, 2.5])
def test_orthonormal_soft_thresholding(t):
    rng = np.random.default_rng(5)
    Q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    b = rng.standard_normal(6) * 2
    pair, _, _ = solve_bpdn(Q, b, t)
    np.testing.assert_allclose(pair.x, soft_threshold_oracle(Q.T @ b, t), atol=1e-12)


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1))
def test_bp_matches_linear_program(seed):
    A, b = random_instance(seed, m_range=(5, 20), extra=(5, 40))
    M = A.toarray()
    n = A.n
    # min 1'(u + v) subject to A (u - v) = b, u, v >= 0
    lp = linprog(np.ones(2 * n), A_eq=np.hstack([M, -M]), b_eq=b, bounds=(0, None), method="highs")
    assert lp.status == 0
    x = solve_bpdn(A, b, 0.0)[0].x
    assert np.abs(x).sum() == pytest.approx(lp.fun, rel=1e-7)
    assert np.max(np.abs(M @ x - b)) <= 1e-9 * (1 + np.max(np.abs(b)))


def test_infeasible_bp_is_detected():
    A = DesignMatrix([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0]])
    with pytest.raises(InfeasibleError):
        solve_bpdn(A, [1.0, 0.0], 0.0)


def test_bad_arguments():
    with pytest.raises(InvalidArgumentError):
        solve_bpdn(I2, [0.0, 0.0], 1.0)
    with pytest.raises(InvalidArgumentError):
        solve_bpdn(I2, [1.0, 0.0], -1.0)
    with pytest.raises(InvalidArgumentError):
        solve_bpdn(I2, [1.0, 0.0, 3.0], 1.0)
    with pytest.raises(DomainError):
        solve_bpdn(I2, [1.0, 0.0], 1.0, p0=[3.0, 0.0])


def test_iteration_cap():
    A, b = random_instance(3, m_range=(8, 8), extra=(20, 20))
    with pytest.raises(NonConvergenceError) as info:
        solve_bpdn(A, b, 0.0, opts=SolverOptions(max_outer=1))
    assert info.value.report.iterations == 1


@settings(max_examples=80)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.0, 0.01, 0.1, 0.5]))
def test_solutions_pass_kkt(seed, frac):
    A, b = random_instance(seed, m_range=(2, 15), extra=(0, 30))
    t = frac * float(np.max(np.abs(A.rmatvec(b))))
    pair, _, rep = solve_bpdn(A, b, t)
    assert kkt_ok(kkt_check(A, b, t, pair.x, pair.p), b)


# ---------------------------------------------------------------- regularization_path

def test_regularization_path_examples():
    b = np.array([3.0, 1.0])
    out = regularization_path(I2, b, [3.0])
    np.testing.assert_array_equal(out[0].x, [0, 0])
    np.testing.assert_allclose(out[0].p, -b / 3)
    out = regularization_path(I2, b, [3.0, 1.0, 0.0])
    np.testing.assert_allclose([pr.x for pr in out], [[0, 0], [2, 0], [3, 1]], atol=1e-14)
    assert len(out.reports) == 3


def test_regularization_path_rejects_unsorted():
    with pytest.raises(InvalidArgumentError):
        regularization_path(I2, [3.0, 1.0], [1.0, 2.0])


def test_regularization_path_reports_failing_index():
    A = DesignMatrix([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0]])
    with pytest.raises(InfeasibleError) as info:
        regularization_path(A, [1.0, 0.0], [1.0, 0.0])
    assert info.value.index == 1


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_warm_path_matches_cold_solves(seed):
    A, b = random_instance(seed, m_range=(3, 10), extra=(0, 20))
    t0 = float(np.max(np.abs(A.rmatvec(b))))
    ts = [t0 * f for f in (0.9, 0.3, 0.05)] + [0.0]
    warm = regularization_path(A, b, ts)
    for t, pr in zip(ts, warm):
        cold, _, _ = solve_bpdn(A, b, t)
        if t > 0:
            np.testing.assert_allclose(pr.p, cold.p, atol=1e-8 * (1 + np.max(np.abs(cold.p))))
        else:
            # basis pursuit duals need not be unique; the optimal value is
            assert np.abs(pr.x).sum() == pytest.approx(np.abs(cold.x).sum(), rel=1e-9)
