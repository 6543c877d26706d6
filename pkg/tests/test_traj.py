from __future__ import annotations

import numpy as np
import pytest

from conftest import central_diff, random_trajectory, rel_err
from se3race.errors import OutOfDomain, SingularMapping, StaleFactors
from se3race.traj import (
    BoundaryState,
    PiecewisePoly,
    basis,
    factorize,
    mapping_matrix_dense,
    propagate_gradients,
    rhs_vector,
    solve_coefficients,
)


def random_problem(rng, M):
    q = rng.normal(size=(M - 1, 3)) + np.arange(1, M)[:, None]
    T = rng.uniform(0.2, 2.0, M)
    start = BoundaryState(rng.normal(size=3), rng.normal(size=3), rng.normal(size=3))
    final = BoundaryState(rng.normal(size=3) + M, rng.normal(size=3), rng.normal(size=3))
    return q, T, start, final


def joint_residuals(traj: PiecewisePoly) -> float:
    worst = 0.0
    for j in range(traj.num_pieces - 1):
        for k in range(5):
            left = traj.piece_eval(j, traj.durations[j], k)
            right = traj.piece_eval(j + 1, 0.0, k)
            worst = max(worst, float(np.max(np.abs(left - right))))
    return worst


def test_monomial_example():
    C = np.zeros((1, 6, 3))
    C[0, 5, 0] = 1.0
    p = PiecewisePoly(C, [1.0])
    assert np.array_equal(p.eval(1.0, 0), [1, 0, 0])
    assert np.array_equal(p.eval(1.0, 3), [60, 0, 0])
    with pytest.raises(OutOfDomain):
        p.eval(1.5)


def test_single_piece_matches_min_jerk_closed_form():
    a, b = np.array([0.0, 1.0, 2.0]), np.array([4.0, -1.0, 2.5])
    traj = solve_coefficients(np.zeros((0, 3)), [2.0], BoundaryState.rest(a), BoundaryState.rest(b))
    t = np.linspace(0, 2, 41)
    s = t / 2.0
    expect = a + (b - a) * (10 * s ** 3 - 15 * s ** 4 + 6 * s ** 5)[:, None]
    assert np.max(np.abs(traj.eval_many(t) - expect)) <= 1e-12
    # dense 6x6 oracle per axis
    A = mapping_matrix_dense([2.0])
    assert A.shape == (6, 6)
    rhs = rhs_vector(np.zeros((0, 3)), BoundaryState.rest(a), BoundaryState.rest(b))
    assert np.max(np.abs(np.linalg.solve(A, rhs) - traj.coeffs.reshape(6, 3))) <= 1e-12


@pytest.mark.parametrize("M", [2, 3, 7, 25, 100])
def test_banded_matches_dense(M):
    rng = np.random.default_rng(M)
    q, T, start, final = random_problem(rng, M)
    C = solve_coefficients(q, T, start, final).coeffs.reshape(-1, 3)
    dense = np.linalg.solve(mapping_matrix_dense(T), rhs_vector(q, start, final))
    assert rel_err(C, dense) <= 1e-9


def test_bandwidth():
    A = mapping_matrix_dense(np.linspace(0.5, 1.5, 9))
    r, c = np.nonzero(A)
    assert np.max(r - c) <= 4 and np.max(c - r) <= 2


@pytest.mark.parametrize("seed", range(6))
def test_continuity_interpolation_and_boundary(seed):
    rng = np.random.default_rng(seed)
    M = int(rng.integers(1, 10))
    q, T, start, final = random_problem(rng, M)
    traj = solve_coefficients(q, T, start, final)
    assert joint_residuals(traj) <= 1e-8
    for j in range(M - 1):
        assert np.max(np.abs(traj.piece_eval(j, T[j]) - q[j])) <= 1e-9
    for k, v in enumerate((start.position, start.velocity, start.acceleration)):
        assert np.max(np.abs(traj.eval(0.0, k) - v)) <= 1e-9
    for k, v in enumerate((final.position, final.velocity, final.acceleration)):
        assert np.max(np.abs(traj.eval(traj.total_time, k) - v)) <= 1e-9
    assert np.array_equal(traj.eval(0.0), start.position)
    # the global evaluator and the piece-local one agree at every joint
    br = traj.breaks
    for j in range(1, M):
        assert np.max(np.abs(traj.eval(br[j]) - traj.piece_eval(j - 1, T[j - 1]))) <= 1e-8


def test_straight_line_stays_in_expanded_box():
    a, b = np.zeros(3), np.array([6.0, 3.0, 0.0])
    M = 6
    q = a + (b - a) * (np.arange(1, M) / M)[:, None]
    traj = solve_coefficients(q, np.ones(M), BoundaryState.rest(a), BoundaryState.rest(b))
    P = traj.eval_many(np.linspace(0, traj.total_time, 2001))
    # points stay on the line
    d = (b - a) / np.linalg.norm(b - a)
    off = (P - a) - np.outer((P - a) @ d, d)
    assert np.max(np.abs(off)) <= 1e-9
    assert joint_residuals(traj) <= 1e-8


def test_singular_durations():
    with pytest.raises(SingularMapping):
        factorize([1.0, 0.0])
    with pytest.raises(SingularMapping):
        factorize([1.0, -2.0])


def _objective(q, T, start, final, W, V):
    traj = solve_coefficients(q, T, start, final)
    return float(np.sum(W * traj.coeffs)) + float(np.sum(V * traj.coeffs ** 2)) + float(np.sum(T ** 2))


@pytest.mark.parametrize("seed", range(5))
def test_propagate_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    M = 4 if seed == 0 else int(rng.integers(1, 9))
    q, T, start, final = random_problem(rng, M)
    W = rng.normal(size=(M, 6, 3))
    V = 0.1 * rng.random((M, 6, 3))
    traj = solve_coefficients(q, T, start, final)
    gq, gT = propagate_gradients(traj, W + 2 * V * traj.coeffs, 2 * T)
    if M > 1:
        fq = central_diff(lambda x: _objective(x, T, start, final, W, V), q)
        assert rel_err(gq, fq) <= 1e-5
    fT = central_diff(lambda x: _objective(q, x, start, final, W, V), T)
    assert rel_err(gT, fT) <= 1e-5


def test_propagate_zero_adjoint():
    rng = np.random.default_rng(3)
    traj = random_trajectory(rng, 5)
    v = rng.normal(size=5)
    gq, gT = propagate_gradients(traj, np.zeros((5, 6, 3)), v)
    assert np.array_equal(gq, np.zeros((4, 3)))
    assert np.array_equal(gT, v)


def test_propagate_stale_factors():
    rng = np.random.default_rng(4)
    traj = random_trajectory(rng, 3)
    with pytest.raises(StaleFactors):
        propagate_gradients(PiecewisePoly(traj.coeffs, traj.durations), np.zeros((3, 6, 3)), np.zeros(3))


def test_piece_local_cost_influence_decays():
    # a cost on piece k alone reaches every waypoint through the C4 joints,
    # but its weight falls off geometrically with distance to piece k
    M, k = 21, 10
    rng = np.random.default_rng(5)
    q, _, start, final = random_problem(rng, M)
    traj = solve_coefficients(q, np.ones(M), start, final)
    dC = np.zeros((M, 6, 3))
    dC[k] = rng.normal(size=(6, 3))
    gq, _ = propagate_gradients(traj, dC, np.zeros(M))
    mag = np.linalg.norm(gq, axis=1)
    near = max(mag[k - 1], mag[k])
    for dist in range(2, 9):
        left, right = mag[k - 1 - dist], mag[k + dist]
        assert max(left, right) <= near * 0.75 ** (dist - 1)


def test_json_round_trip():
    rng = np.random.default_rng(6)
    traj = random_trajectory(rng, 4)
    back = PiecewisePoly.from_json(traj.to_json())
    assert np.array_equal(back.coeffs, traj.coeffs) and np.array_equal(back.durations, traj.durations)


def test_basis_derivatives():
    t = 0.7
    for k in range(7):
        b = basis(t, k)
        for n in range(6):
            expect = 0.0 if n < k else np.prod(np.arange(n - k + 1, n + 1)) * t ** (n - k)
            assert b[n] == pytest.approx(expect, rel=1e-14, abs=1e-300)
