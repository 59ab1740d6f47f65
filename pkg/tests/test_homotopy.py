import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import kkt_ok, random_instance, soft_threshold_oracle
from exactbpdn import (DesignMatrix, generate_instance, InvalidArgumentError, NonConvergenceError, PathBreakpoint,
                       SolutionPath, SolverOptions, kkt_check, path_query, solution_path, solve_bpdn)
from exactbpdn.homotopy import HomotopyState, breakpoints, homotopy_subproblem
from exactbpdn.slow import make_dual_point

I2 = DesignMatrix(np.eye(2))


def _initial_state(A, b):
    t0 = float(np.max(np.abs(A.rmatvec(b))))
    return HomotopyState(t0, np.zeros(A.n), make_dual_point(A, -np.asarray(b) / t0))


def test_subproblem_at_start():
    state = _initial_state(I2, [3.0, 1.0])
    v, xi = homotopy_subproblem(I2, state)
    np.testing.assert_allclose(v, [3, 0])
    np.testing.assert_allclose(xi, [0, -1], atol=1e-15)


def test_first_breakpoint_is_next_correlation():
    state = _initial_state(I2, [3.0, 1.0])
    state.v_hat, state.xi = homotopy_subproblem(I2, state)
    T_minus, T_plus = breakpoints(I2, state)
    assert T_plus == pytest.approx(1.0)
    assert T_minus == -math.inf
    assert state.C == pytest.approx(2.0 / 3.0)


def test_zero_residual_ends_path():
    state = _initial_state(I2, [3.0, 0.0])
    state.v_hat, state.xi = homotopy_subproblem(I2, state)
    np.testing.assert_allclose(state.v_hat, [3, 0])
    np.testing.assert_allclose(state.xi, [0, 0], atol=1e-15)
    _, T_plus = breakpoints(I2, state)
    assert T_plus == 0.0


def test_identity_paths():
    path = solution_path(I2, [3.0, 1.0])
    np.testing.assert_allclose(path.ts, [3, 1, 0])
    np.testing.assert_allclose([bp.x for bp in path.breakpoints], [[0, 0], [2, 0], [3, 1]], atol=1e-14)
    path = solution_path(I2, [3.0, 0.0])
    np.testing.assert_allclose(path.ts, [3, 0])
    np.testing.assert_allclose(path.breakpoints[-1].x, [3, 0])


def test_path_query_examples():
    b = np.array([3.0, 1.0])
    path = solution_path(I2, b)
    np.testing.assert_allclose(path_query(path, 2.0).x, [1, 0])
    bp = path_query(path, 1.0)
    np.testing.assert_array_equal(bp.x, path.breakpoints[1].x)
    np.testing.assert_array_equal(path_query(path, 0.0).x, path.breakpoints[-1].x)
    above = path_query(path, 6.0)
    assert not above.x.any()
    np.testing.assert_allclose(above.p, -b / 6.0)
    with pytest.raises(InvalidArgumentError):
        path_query(path, -1.0)


def test_departures_are_handled():
    # columns chosen so that the first active coordinate later leaves the support
    A = DesignMatrix(np.array([[1.0, 0.0, 0.8], [0.0, 1.0, 0.6]]))
    b = np.array([1.0, 0.9])
    path = solution_path(A, b)
    for bp in path.breakpoints:
        assert kkt_ok(kkt_check(A, b, bp.t, bp.x, bp.p), b)
    assert path.ts[-1] == 0.0


@settings(max_examples=60)
@given(st.integers(0, 2**32 - 1))
def test_path_is_optimal_everywhere(seed):
    A, b = random_instance(seed, m_range=(2, 10), extra=(0, 20))
    path = solution_path(A, b)
    assert path.ts[-1] == 0.0
    for bp in path.breakpoints:
        assert kkt_ok(kkt_check(A, b, bp.t, bp.x, bp.p), b)
    rng = np.random.default_rng(seed)
    for t in rng.uniform(0, path.ts[0], 5):
        pr = path_query(path, t)
        assert kkt_ok(kkt_check(A, b, t, pr.x, pr.p), b, tol=1e-8)


@pytest.mark.parametrize("m,n,seed", [(50, 500, 2033), (100, 400, 7007), (100, 400, 7043)])
def test_high_dynamic_range_paths(m, n, seed):
    # the tail of these paths sits at round-off level relative to ||b||
    inst = generate_instance(m, n, m // 4, seed, "hdr")
    path = solution_path(inst.A, inst.b)
    assert path.ts[-1] == 0.0
    for bp in path.breakpoints:
        assert kkt_ok(kkt_check(inst.A, inst.b, bp.t, bp.x, bp.p), inst.b)


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_breakpoints_match_direct_solves(seed):
    A, b = random_instance(seed, m_range=(3, 10), extra=(0, 20))
    path = solution_path(A, b)
    for bp in path.breakpoints[:-1]:
        direct, _, _ = solve_bpdn(A, b, bp.t)
        np.testing.assert_allclose(bp.p, direct.p, atol=1e-8)


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1))
def test_primal_path_is_continuous(seed):
    A, b = random_instance(seed, m_range=(2, 8), extra=(0, 10))
    path = solution_path(A, b)
    for a, c in zip(path.breakpoints, path.breakpoints[1:]):
        mid = 0.5 * (a.t + c.t)
        lo = path_query(path, mid * (1 - 1e-9))
        hi = path_query(path, mid * (1 + 1e-9))
        assert np.max(np.abs(lo.x - hi.x)) <= 1e-6 * (1 + np.max(np.abs(c.x)))


@pytest.mark.parametrize("seed", range(5))
def test_orthonormal_breakpoints_are_sorted_correlations(seed):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((8, 8)))
    b = rng.standard_normal(8)
    path = solution_path(Q, b)
    z = Q.T @ b
    expected = np.concatenate([np.unique(np.abs(z))[::-1], [0.0]])
    np.testing.assert_allclose(path.ts, expected, atol=1e-12)
    for bp in path.breakpoints:
        np.testing.assert_allclose(bp.x, soft_threshold_oracle(z, bp.t), atol=1e-12)


def test_breakpoint_cap():
    A, b = random_instance(2, m_range=(8, 8), extra=(8, 8))
    with pytest.raises(NonConvergenceError) as info:
        solution_path(A, b, max_breakpoints=1)
    assert len(info.value.best) == 2


def test_solution_path_validation_and_equality():
    bp = [PathBreakpoint(2.0, np.zeros(2), np.zeros(2)), PathBreakpoint(1.0, np.ones(2), np.zeros(2))]
    with pytest.raises(InvalidArgumentError):
        SolutionPath([], np.ones(2))
    with pytest.raises(InvalidArgumentError):
        SolutionPath(bp[::-1], np.ones(2))
    assert SolutionPath(bp, np.ones(2)) == SolutionPath(list(bp), np.ones(2))
    assert SolutionPath(bp, np.ones(2)) != SolutionPath(bp[:1], np.ones(2))


def test_options_pass_through():
    A, b = random_instance(9)
    p1 = solution_path(A, b, SolverOptions(tol_eq=1e-9))
    p2 = solution_path(A, b)
    np.testing.assert_allclose(p1.ts, p2.ts, rtol=1e-9)
