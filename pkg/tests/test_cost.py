from __future__ import annotations

import numpy as np
import pytest

from conftest import HULL_46, active_fixture, central_diff, random_trajectory, rel_err
from se3race.cost import (
    COMPONENTS,
    PenaltyConfig,
    cubic_penalty,
    piece_cost,
    smoothness,
    total_cost,
)
from se3race.errors import PieceCountMismatch
from se3race.geom import ConvexPolytope
from se3race.traj import PiecewisePoly

BIG = ConvexPolytope.box([-100, -100, -100], [100, 100, 100])


def poly_from(coeffs: dict[int, list[float]], T: float) -> PiecewisePoly:
    C = np.zeros((1, 6, 3))
    for n, v in coeffs.items():
        C[0, n] = v
    return PiecewisePoly(C, [T])


def cost_of(C, T, corridor, cfg):
    return total_cost(PiecewisePoly(C, T), corridor, HULL_46, cfg).total


def test_cubic_penalty_examples():
    assert cubic_penalty(-1.0) == (0.0, 0.0)
    assert cubic_penalty(0.0) == (0.0, 0.0)
    assert cubic_penalty(2.0) == (8.0, 12.0)


def test_smoothness_zero_jerk():
    traj = poly_from({0: [1, 2, 3], 1: [0.5, -1, 0.2]}, 3.0)
    S, gC, gT = smoothness(traj)
    assert S == 0.0 and np.all(gC == 0.0) and np.all(gT == 0.0)


@pytest.mark.parametrize("delta", [0.5, 1.0, 2.7])
def test_smoothness_cubic_example(delta):
    S, _, gT = smoothness(poly_from({3: [1, 0, 0]}, delta))
    assert S == pytest.approx(36 * delta, rel=1e-14)
    assert gT[0] == pytest.approx(36.0, rel=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_smoothness_gradients_finite_differences(seed):
    traj = random_trajectory(np.random.default_rng(seed), 4)
    S, gC, gT = smoothness(traj)
    fC = central_diff(lambda C: smoothness(PiecewisePoly(C, traj.durations))[0], traj.coeffs, 1e-5)
    fT = central_diff(lambda T: smoothness(PiecewisePoly(traj.coeffs, T))[0], traj.durations, 1e-6)
    assert rel_err(gC, fC) <= 1e-7
    assert rel_err(gT, fT) <= 1e-7


def test_smoothness_matches_quadrature():
    traj = random_trajectory(np.random.default_rng(9), 3)
    t = np.linspace(0, traj.total_time, 200_001)
    j = traj.eval_many(t, 3)
    f = np.einsum("ld,ld->l", j, j)
    quad = float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(t)))
    assert smoothness(traj)[0] == pytest.approx(quad, rel=1e-6)


def test_velocity_penalty_example():
    traj = poly_from({1: [2, 0, 0]}, 1.0)
    cfg = PenaltyConfig(rho=0, w_v=1, w_a=0, w_c=0, v_max=1, a_max=1, samples=16)
    r = piece_cost(0, traj.coeffs[0], 1.0, BIG, HULL_46.vertices, cfg)
    assert r.parts[COMPONENTS.index("velocity")] == pytest.approx(27.0, rel=1e-14)
    assert total_cost(traj, [BIG], HULL_46, cfg).components["velocity"] == pytest.approx(27.0, rel=1e-14)


def test_inactive_sample_is_exactly_zero():
    traj = poly_from({0: [0, 0, 1], 1: [0.5, 0, 0]}, 1.0)
    cfg = PenaltyConfig(rho=0.0, v_max=1.0, a_max=5.0)
    r = total_cost(traj, [BIG], HULL_46, cfg)
    assert r.components["velocity"] == r.components["acceleration"] == r.components["collision"] == 0.0
    assert np.all(r.grad_c == 0.0) and np.all(r.grad_t == 0.0)


def test_resting_in_free_box_costs_time_only():
    traj = poly_from({0: [1, 2, 3]}, 2.5)
    cfg = PenaltyConfig(rho=42.0)
    r = total_cost(traj, [BIG], HULL_46, cfg)
    assert r.total == 42.0 * 2.5
    assert r.penalty == 0.0


@pytest.mark.parametrize("seed", range(3))
def test_rho_only_reduction(seed):
    traj, corridor, _ = active_fixture(seed)
    cfg = PenaltyConfig(rho=13.0, w_v=0, w_a=0, w_c=0, samples=8)
    r = total_cost(traj, corridor, HULL_46, cfg)
    S, gC, gT = smoothness(traj)
    assert r.total == pytest.approx(S + 13.0 * traj.total_time, rel=1e-12)
    assert np.allclose(r.grad_t, gT + 13.0, rtol=1e-12, atol=0)
    assert np.allclose(r.grad_c, gC, rtol=1e-12, atol=0)


def test_piece_count_mismatch():
    traj, corridor, cfg = active_fixture(0, M=3)
    with pytest.raises(PieceCountMismatch):
        total_cost(traj, corridor[:2], HULL_46, cfg)


@pytest.mark.parametrize("seed", range(12))
def test_total_cost_gradients_finite_differences(seed):
    traj, corridor, cfg = active_fixture(seed)
    r = total_cost(traj, corridor, HULL_46, cfg)
    assert r.components["velocity"] > 0 and r.components["acceleration"] > 0 and r.components["collision"] > 0
    fC = central_diff(lambda C: cost_of(C, traj.durations, corridor, cfg), traj.coeffs, 1e-6)
    fT = central_diff(lambda T: cost_of(traj.coeffs, T, corridor, cfg), traj.durations, 1e-6)
    assert rel_err(r.grad_c, fC) <= 1e-4
    assert rel_err(r.grad_t, fT) <= 1e-4


@pytest.mark.parametrize("seed", range(4))
def test_collision_piece_gradient_finite_differences(seed):
    traj, corridor, cfg = active_fixture(100 + seed)
    cfg = PenaltyConfig(rho=0, w_v=0, w_a=0, w_c=50.0, v_max=cfg.v_max, a_max=cfg.a_max, samples=cfg.samples)
    j = int(np.argmax([piece_cost(j, traj.coeffs[j], traj.durations[j], corridor[j], HULL_46.vertices,
                                  cfg).parts[4] for j in range(traj.num_pieces)]))
    C, T = traj.coeffs[j], float(traj.durations[j])

    def col(Cj, Tj):
        return piece_cost(j, Cj, Tj, corridor[j], HULL_46.vertices, cfg).parts[4]

    r = piece_cost(j, C, T, corridor[j], HULL_46.vertices, cfg)
    assert r.parts[4] > 0
    # remove the smoothness share so only the sampled collision term is compared
    from se3race.cost import smoothness_piece

    _, sC, sT = smoothness_piece(C, T)
    fC = central_diff(lambda x: col(x, T), C)
    fT = (col(C, T + 1e-6) - col(C, T - 1e-6)) / 2e-6
    assert rel_err(r.grad_c - sC, fC) <= 1e-4
    assert abs((r.grad_t - sT) - fT) / max(abs(fT), 1e-8) <= 1e-4


def test_components_sum_to_total():
    for seed in range(5):
        traj, corridor, cfg = active_fixture(seed)
        r = total_cost(traj, corridor, HULL_46, cfg)
        assert abs(sum(r.components.values()) - r.total) <= 1e-10 * abs(r.total)
        assert all(v >= 0 for v in r.components.values())


def test_collision_monotone_in_weight():
    traj, corridor, cfg = active_fixture(2)
    prev = -1.0
    for w in (0.0, 1.0, 10.0, 100.0):
        c = total_cost(traj, corridor, HULL_46, PenaltyConfig(w_c=w, samples=cfg.samples)).components["collision"]
        assert c >= prev
        prev = c


def test_zero_set_matches_constraint_check():
    traj = poly_from({0: [0, 0, 1], 1: [0.4, 0, 0]}, 2.0)
    tight = ConvexPolytope.box([-0.5, -0.5, 0.5], [1.5, 0.5, 1.5])
    cfg = PenaltyConfig(v_max=1.0, a_max=1.0, samples=8)
    assert total_cost(traj, [tight], HULL_46, cfg).penalty == 0.0
    # a face that cuts the hull at one sampled instant makes the penalty positive
    cut = ConvexPolytope.box([-0.5, -0.5, 0.5], [0.3, 0.5, 1.5])
    assert total_cost(traj, [cut], HULL_46, cfg).components["collision"] > 0.0


def test_collision_sampling_converges():
    traj, corridor, _ = active_fixture(7, M=3)
    E = {L: total_cost(traj, corridor, HULL_46, PenaltyConfig(w_v=0, w_a=0, samples=L)).components["collision"]
         for L in (8, 16, 32, 64, 128)}
    diffs = [abs(E[L] - E[2 * L]) / max(E[2 * L], 1.0) for L in (8, 16, 32, 64)]
    assert all(b < a for a, b in zip(diffs[:-1], diffs[1:]))


def test_margin_shifts_planes_inward():
    traj = poly_from({0: [0, 0, 1]}, 1.0)
    box = ConvexPolytope.box([-0.3, -0.3, 0.7], [0.3, 0.3, 1.3])
    cfg0 = PenaltyConfig(rho=0, samples=4)
    assert total_cost(traj, [box], HULL_46, cfg0).components["collision"] == 0.0
    cfg1 = PenaltyConfig(rho=0, samples=4, margin=0.1)
    # the hull's +-0.23 m arms now poke 0.03 m beyond the shifted side planes
    c = total_cost(traj, [box], HULL_46, cfg1).components["collision"]
    expect = 1e5 * 1.0 * 4 * 4 * 0.03 ** 3  # weight * T * vertices per x/y face * faces * K
    assert abs(c - expect) / expect <= 1e-9
