import json
import math
import random

import numpy as np
import pytest

from groupoid_mechanics.groupoids import PairGroupoid, rodrigues, source, target
from groupoid_mechanics.hp_principle import (
    CotangentPathDiscretization,
    HPConfiguration,
    InvalidConfiguration,
    NotVectorSpaceInstance,
    ResidualTooLarge,
    build_variation_basis,
    construct_hp_solution,
    hamiltonian_htilde,
    hp_action,
    hp_differential,
    hp_interior_points,
    leok_ohsawa_action,
    leok_ohsawa_solve,
    verify_theorem,
)
from groupoid_mechanics.lagrangians import (
    DiscreteLagrangian,
    harmonic_lagrangian,
    midpoint_discretize,
    pendulum_lagrangian,
    rigid_body_lagrangian,
)
from groupoid_mechanics.groupoids import check_admissible
from groupoid_mechanics.legendre_flow import (
    CotangentElement,
    action_sum,
    d_lagrangian,
    del_boundary_solve,
    legendre_minus,
    legendre_plus,
    simulate,
)
from groupoid_mechanics.numerics import derivative


H = 0.1
HARMONIC_MID = midpoint_discretize(harmonic_lagrangian(), H)
PENDULUM_MID = midpoint_discretize(pendulum_lagrangian(), H)
PAIR = HARMONIC_MID.instance


def harmonic_trajectory(steps):
    return simulate(HARMONIC_MID, PAIR.element([1.0], [1.0]), steps)


def constant_lagrangian(instance, c):
    return DiscreteLagrangian(instance, 1.0, lambda coords: c, name="const")


# ---------------------------------------------------------------------------
# path/configuration validation
# ---------------------------------------------------------------------------

def test_path_requires_zero_section_start():
    svals = [0.0, 0.5, 1.0]
    g_nodes = [(1.0, 1.0)] * 3
    with pytest.raises(InvalidConfiguration):
        CotangentPathDiscretization(PAIR, svals, g_nodes,
                                    [(0.1, 0.0), (0.0, 0.0), (0.0, 0.0)])


def test_path_requires_two_segments():
    with pytest.raises(InvalidConfiguration):
        CotangentPathDiscretization(PAIR, [0.0, 1.0], [(1.0, 1.0)] * 2,
                                    [(0.0, 0.0)] * 2)


def test_configuration_requires_admissible_initials():
    svals = [0.0, 0.5, 1.0]
    p1 = CotangentPathDiscretization(PAIR, svals, [(0.0, 1.0)] * 3, [(0.0, 0.0)] * 3)
    p2 = CotangentPathDiscretization(PAIR, svals, [(5.0, 2.0)] * 3, [(0.0, 0.0)] * 3)
    with pytest.raises(InvalidConfiguration):
        HPConfiguration([p1, p2], PAIR.element([0.0], [2.0]))


# ---------------------------------------------------------------------------
# the action
# ---------------------------------------------------------------------------

def test_hp_action_constant_lagrangian_on_vertical_paths():
    Lh = constant_lagrangian(PAIR, 0.75)
    traj = harmonic_trajectory(3)
    cfg = construct_hp_solution(HARMONIC_MID, traj, nodes=4)
    cfg_const = HPConfiguration(cfg.paths, cfg.composite, cfg.rule)
    assert hp_action(cfg_const, Lh) == pytest.approx(3 * 0.75, abs=1e-13)


def test_hp_action_solution_family_matches_action_sum():
    traj = harmonic_trajectory(4)
    cfg = construct_hp_solution(HARMONIC_MID, traj, nodes=5)
    composite = cfg.composite
    seq = check_admissible(traj.elements, composite)
    assert hp_action(cfg, HARMONIC_MID) == pytest.approx(
        action_sum(HARMONIC_MID, seq), abs=1e-12)


def test_hp_action_quadrature_refinement():
    # curved projection path sampled at M nodes, linear covector: the nodal
    # interpolation error of the sampled path decays like M^-2 against a
    # dense-node reference
    def build(M):
        svals = [j / M for j in range(M + 1)]
        g_nodes = [(0.2 + 0.5 * math.sin(s), 1.0 - 0.3 * s * s) for s in svals]
        mu_nodes = [(0.4 * s, -0.2 * s) for s in svals]
        path = CotangentPathDiscretization(PAIR, svals, g_nodes, mu_nodes)
        return HPConfiguration([path], PAIR.element([0.2], [1.0]))

    ref = hp_action(build(10_000), PENDULUM_MID)
    errs = [abs(hp_action(build(M), PENDULUM_MID) - ref) for M in (10, 20, 40)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.3)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.3)


# ---------------------------------------------------------------------------
# constructed solutions and the theorem
# ---------------------------------------------------------------------------

def test_construct_solution_endpoint_covectors():
    traj = harmonic_trajectory(3)
    cfg = construct_hp_solution(HARMONIC_MID, traj, nodes=4)
    for path, g in zip(cfg.paths, traj.elements):
        assert path.endpoint_covector().comps == d_lagrangian(HARMONIC_MID, g).comps
        assert path.initial_element().coords == g.coords


def test_construct_solution_rejects_bad_trajectory():
    bad = [PAIR.element([1.0], [1.0]), PAIR.element([1.0], [0.5])]
    with pytest.raises(ResidualTooLarge):
        construct_hp_solution(HARMONIC_MID, bad)


def test_verify_theorem_passes_on_solutions():
    for Lh, q0, q1 in ((HARMONIC_MID, 1.0, 1.0), (PENDULUM_MID, 0.3, 0.33)):
        traj = simulate(Lh, PAIR.element([q0], [q1]), 3)
        cfg = construct_hp_solution(Lh, traj, nodes=5)
        report = verify_theorem(cfg, Lh, tol=1e-9)
        assert report.all_pass
        assert report.legendre_residual == 0.0


def test_verify_theorem_detects_scaled_endpoint_covector():
    traj = harmonic_trajectory(3)
    cfg = construct_hp_solution(HARMONIC_MID, traj, nodes=4)
    p = cfg.paths[1]
    scaled = [tuple(m) for m in p.mu_nodes]
    scaled[-1] = tuple(1.01 * c for c in scaled[-1])
    cfg.paths[1] = CotangentPathDiscretization(p.instance, p.s, p.g_nodes, scaled)
    report = verify_theorem(cfg, HARMONIC_MID, tol=1e-9)
    assert not report.pass_legendre
    dl = d_lagrangian(HARMONIC_MID, traj.elements[1]).comps_array()
    assert report.legendre_residual == pytest.approx(0.01 * np.max(np.abs(dl)), rel=1e-9)
    assert report.pass_admissible


def test_verify_theorem_single_path_vacuous_composability():
    traj = harmonic_trajectory(1)
    cfg = construct_hp_solution(HARMONIC_MID, traj, nodes=3)
    report = verify_theorem(cfg, HARMONIC_MID, tol=1e-9)
    assert report.all_pass
    assert report.composability_gap == 0.0


def test_theorem_report_json_schema():
    traj = harmonic_trajectory(2)
    cfg = construct_hp_solution(HARMONIC_MID, traj, nodes=3)
    data = json.loads(verify_theorem(cfg, HARMONIC_MID, tol=1e-9).to_json())
    assert set(data) == {"admissible_gap", "legendre_residual",
                         "composability_gap", "pass"}
    assert set(data["pass"]) == {"admissible", "legendre", "composable"}


# ---------------------------------------------------------------------------
# stationarity along the variation basis
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("nodes", [2, 5, 20])
def test_hp_differential_vanishes_at_solutions(nodes):
    traj = harmonic_trajectory(3)
    cfg = construct_hp_solution(HARMONIC_MID, traj, nodes=nodes)
    basis = build_variation_basis(cfg)
    derivs = hp_differential(cfg, HARMONIC_MID, basis)
    assert np.max(np.abs(derivs)) < 1e-8


def test_hp_differential_zero_lagrangian_zero_paths():
    Lh = constant_lagrangian(PAIR, 0.0)
    svals = [0.0, 0.5, 1.0]
    paths = [CotangentPathDiscretization(PAIR, svals, [(0.0, 0.0)] * 3,
                                         [(0.0, 0.0)] * 3)]
    cfg = HPConfiguration(paths, PAIR.element([0.0], [0.0]))
    derivs = hp_differential(cfg, Lh, build_variation_basis(cfg))
    assert np.max(np.abs(derivs)) == 0.0


def test_hp_differential_detects_interior_mu_perturbation():
    traj = harmonic_trajectory(2)
    cfg = construct_hp_solution(HARMONIC_MID, traj, nodes=5)
    p = cfg.paths[0]
    mu = [tuple(m) for m in p.mu_nodes]
    mu[2] = (mu[2][0] + 1e-2, mu[2][1])
    cfg.paths[0] = CotangentPathDiscretization(p.instance, p.s, p.g_nodes, mu)
    derivs = hp_differential(cfg, HARMONIC_MID, build_variation_basis(cfg))
    assert np.max(np.abs(derivs)) > 1e-6


def test_variation_basis_satisfies_linearized_constraints():
    traj = harmonic_trajectory(3)
    cfg = construct_hp_solution(HARMONIC_MID, traj, nodes=4)
    basis = build_variation_basis(cfg)
    inst = cfg.instance
    d = inst.d
    for entries in basis.directions:
        for (n, j, dg, dmu) in entries:
            if j == 0:
                assert dmu is None

        def chain_defect(t):
            # composability of initial projections under the perturbation
            g0 = []
            for pn, path in enumerate(cfg.paths):
                coords = list(path.g_nodes[0])
                for (en, ej, dg, dmu) in entries:
                    if en == pn and ej == 0 and dg is not None:
                        coords = [x + t * v for x, v in zip(coords, dg)]
                g0.append(coords)
            worst = 0.0
            for a, b in zip(g0, g0[1:]):
                for c in range(d):
                    worst = worst + (a[d + c] - b[c]) ** 2
            return worst

        assert abs(derivative(chain_defect, 0.0)) < 1e-12


def test_hp_differential_group_instance_solution():
    Lh = rigid_body_lagrangian(np.diag([1.0, 2.0, 3.0]), 0.05)
    f1 = Lh.instance.element(np.array(rodrigues((0.03, -0.02, 0.04))))
    traj = simulate(Lh, f1, 3)
    cfg = construct_hp_solution(Lh, traj, nodes=4)
    report = verify_theorem(cfg, Lh, tol=1e-9)
    assert report.all_pass
    derivs = hp_differential(cfg, Lh, build_variation_basis(cfg))
    assert np.max(np.abs(derivs)) < 1e-8


# ---------------------------------------------------------------------------
# singular Hamiltonian
# ---------------------------------------------------------------------------

def test_htilde_fiber_constant():
    g = PAIR.element([1.0], [1.0])
    mu1 = CotangentElement(g, (0.3, -0.4))
    mu2 = CotangentElement(g, (0.0, 0.0))
    assert hamiltonian_htilde(HARMONIC_MID, mu1) == hamiltonian_htilde(HARMONIC_MID, mu2)
    assert hamiltonian_htilde(HARMONIC_MID, mu1) == pytest.approx(0.05)


def test_htilde_zero_lagrangian():
    Lh = constant_lagrangian(PAIR, 0.0)
    mu = CotangentElement(PAIR.element([2.0], [3.0]), (1.0, 1.0))
    assert hamiltonian_htilde(Lh, mu) == 0.0


# ---------------------------------------------------------------------------
# multiplier formulation
# ---------------------------------------------------------------------------

def test_leok_ohsawa_closed_form_interior_point():
    h = H
    q2_exact = ((2.0 - h * h / 2.0) - (1.0 + h * h / 4.0)) / (1.0 + h * h / 4.0)
    sol = leok_ohsawa_solve(HARMONIC_MID, ([1.0], [q2_exact]), 2)
    interior = sol.interior_points()
    assert len(interior) == 1
    assert interior[0][0] == pytest.approx(1.0, abs=1e-9)


def test_leok_ohsawa_stationarity_at_solution():
    sol = leok_ohsawa_solve(PENDULUM_MID, ([0.3], [0.36]), 3)
    base = leok_ohsawa_action(sol.points, sol.multipliers, PENDULUM_MID, sol.boundary)
    eta = 1e-6
    worst = 0.0
    for pi, (q0, q1) in enumerate(sol.points):
        for arr in (q0, q1):
            arr[0] += eta
            plus = leok_ohsawa_action(sol.points, sol.multipliers, PENDULUM_MID,
                                      sol.boundary)
            arr[0] -= 2 * eta
            minus = leok_ohsawa_action(sol.points, sol.multipliers, PENDULUM_MID,
                                       sol.boundary)
            arr[0] += eta
            worst = max(worst, abs(plus - minus) / (2 * eta))
    for p in sol.multipliers:
        p[0] += eta
        plus = leok_ohsawa_action(sol.points, sol.multipliers, PENDULUM_MID,
                                  sol.boundary)
        p[0] -= 2 * eta
        minus = leok_ohsawa_action(sol.points, sol.multipliers, PENDULUM_MID,
                                   sol.boundary)
        p[0] += eta
        worst = max(worst, abs(plus - minus) / (2 * eta))
    assert worst < 1e-6
    assert abs(base) < 10.0


def test_leok_ohsawa_single_step_reduces_to_legendre():
    boundary = ([0.4], [0.47])
    sol = leok_ohsawa_solve(PENDULUM_MID, boundary, 1)
    g = PAIR.element(boundary[0], boundary[1])
    assert sol.multipliers[0][0] == pytest.approx(
        legendre_minus(PENDULUM_MID, g).mu[0], abs=1e-10)
    assert sol.multipliers[1][0] == pytest.approx(
        legendre_plus(PENDULUM_MID, g).mu[0], abs=1e-10)
    assert sol.points[0][0][0] == pytest.approx(0.4, abs=1e-12)
    assert sol.points[0][1][0] == pytest.approx(0.47, abs=1e-12)


def test_leok_ohsawa_multiplier_matches_del_momenta():
    traj = simulate(PENDULUM_MID, PAIR.element([0.2], [0.24]), 3)
    q_start = source(traj.elements[0]).q
    q_end = target(traj.elements[-1]).q
    sol = leok_ohsawa_solve(PENDULUM_MID, (q_start, q_end), 3)
    for n, g in enumerate(traj.elements):
        assert sol.multipliers[n + 1][0] == pytest.approx(
            legendre_plus(PENDULUM_MID, g).mu[0], abs=1e-9)


def test_leok_ohsawa_rejects_group_instance():
    Lh = rigid_body_lagrangian(np.eye(3), 0.1)
    with pytest.raises(NotVectorSpaceInstance):
        leok_ohsawa_solve(Lh, ([0.0], [1.0]), 2)


# ---------------------------------------------------------------------------
# three-formulation agreement
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("N", [2, 3, 5])
def test_formulations_agree_on_interior_points(N):
    for Lh, q0, q1 in ((HARMONIC_MID, 1.0, 1.0), (PENDULUM_MID, 0.3, 0.33)):
        traj = simulate(Lh, PAIR.element([q0], [q1]), N)
        q_start = source(traj.elements[0]).q
        q_end = target(traj.elements[-1]).q

        bvp = del_boundary_solve(Lh, q_start, q_end, N)
        cfg = construct_hp_solution(Lh, traj, nodes=5)
        assert verify_theorem(cfg, Lh, tol=1e-9).all_pass
        hp_pts = hp_interior_points(cfg)
        lo = leok_ohsawa_solve(Lh, (q_start, q_end), N)
        lo_pts = lo.interior_points()

        for a, b, c in zip(bvp, hp_pts, lo_pts):
            assert np.max(np.abs(a - b)) < 1e-8
            assert np.max(np.abs(a - c)) < 1e-8
            assert np.max(np.abs(b - c)) < 1e-8
