import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sedlab.cloud import ParticleCloud
from sedlab.errors import CapabilityError, DomainError, IterationDivergenceError
from sedlab.generators import generate_cloud, lattice_points
from sedlab.kernels import stokeslet_eval
from sedlab.reflections import (
    BodyKinematics,
    apply_interaction_map,
    dense_mobility_solve,
    eta_norm,
    first_order_velocities,
    first_order_velocities_oseen,
    neumann_velocity_solve,
    pairwise_lipschitz_report,
    solve_velocities,
)

G = np.array([0.0, 0.0, -1.0])


def pair(d, axis, r0=0.02):
    x = np.zeros((2, 3))
    x[1, axis] = d
    return ParticleCloud(x, r0)


# ---------------------------------------------------------------- interaction map

def test_interaction_map_single_particle_is_zero():
    c = ParticleCloud(np.zeros((1, 3)), 0.1)
    V, Gr = apply_interaction_map(c, np.ones((1, 3)), np.zeros((1, 3, 3)))
    assert np.all(V == 0) and np.all(Gr == 0)


def test_interaction_map_two_spheres_single_term():
    c = ParticleCloud(np.array([[0.0, 0, 0], [0.3, 0.1, -0.2]]), 0.05)
    V = np.array([[1.0, 0, 0], [0, 0, 0]])
    Vp, Gp = apply_interaction_map(c, V, np.zeros((2, 3, 3)))
    ref = stokeslet_eval(c.positions[0], c.R, V[0], c.positions[1])
    assert np.allclose(Vp[1], -ref.velocity, rtol=1e-14, atol=1e-17)
    assert np.allclose(Gp[1], -ref.velocity_gradient, rtol=1e-14, atol=1e-17)
    assert np.all(Vp[0] == 0)


def test_interaction_map_opposes_source_motion():
    c = pair(0.2, 2)
    Vp, _ = apply_interaction_map(c, np.tile(G, (2, 1)), np.zeros((2, 3, 3)))
    assert Vp[0, 2] > 0 and Vp[1, 2] > 0


def test_interaction_map_rejects_overlap():
    with pytest.raises(DomainError):
        apply_interaction_map(pair(0.01, 0, r0=0.02), np.zeros((2, 3)), np.zeros((2, 3, 3)))


# ---------------------------------------------------------------- first-order law

def test_first_order_single_particle():
    kin = first_order_velocities(ParticleCloud(np.zeros((1, 3)), 0.1), G)
    assert np.array_equal(kin.V, G[None]) and np.all(kin.Omega == 0)


@pytest.mark.parametrize("axis,factor", [(2, 1.5), (0, 0.75)])
def test_first_order_pair_closed_forms(axis, factor):
    d = 0.3
    c = pair(d, axis)
    V = first_order_velocities(c, G).V
    assert np.allclose(V, G * (1 + factor * c.R / d), rtol=1e-14, atol=0)


def test_first_order_matches_explicit_oseen_sum():
    c = generate_cloud("uniform", 40, 1, r0=0.05)
    assert np.allclose(first_order_velocities(c, G).V, first_order_velocities_oseen(c, G), rtol=1e-13, atol=1e-15)


# ---------------------------------------------------------------- reflection series

def test_neumann_single_particle_is_stokes_law():
    kin, state = neumann_velocity_solve(ParticleCloud(np.ones((1, 3)), 0.2), G)
    assert np.array_equal(kin.V, G[None]) and np.all(kin.Omega == 0) and state.stage == 0


def test_neumann_wide_pair_matches_first_order():
    R = 0.01 / 2
    c = pair(1e3 * R, 0, r0=0.01)
    kin, _ = neumann_velocity_solve(c, G)
    fo = first_order_velocities(c, G).V
    assert np.allclose(kin.V, fo, rtol=1e-4, atol=0)


def test_neumann_lattice_contracts():
    c = ParticleCloud(lattice_points(5, 0.2), 0.05)
    _, state = neumann_velocity_solve(c, G, p_max=15, tol=0.0)
    assert state.K_hat < 0.5
    eta = np.array(state.eta)
    assert np.all(eta <= state.K_hat ** np.arange(eta.size) * eta[0] * (1 + 1e-12))


def test_neumann_divergence_detected():
    n = 5
    R = 1.0 / n**3
    c = ParticleCloud(lattice_points(n, 2.01 * R), 1.0)
    with pytest.raises(IterationDivergenceError) as err:
        neumann_velocity_solve(c, G, p_max=40)
    assert err.value.state is not None and err.value.state.stage >= 3
    kin, state = neumann_velocity_solve(c, G, p_max=40, strict=False)
    assert np.all(np.isfinite(kin.V))


def test_neumann_rejects_bad_pmax():
    with pytest.raises(DomainError):
        neumann_velocity_solve(pair(0.3, 0), G, p_max=0)


def test_partial_sums_and_eta():
    c = generate_cloud("uniform", 30, 2, r0=0.05)
    kin, state = neumann_velocity_solve(c, G)
    V, Gr = state.partial_sum()
    assert np.array_equal(V, kin.V)
    assert state.eta[0] == pytest.approx(eta_norm(G[None].repeat(30, 0), np.zeros((30, 3, 3)), c.R))
    assert state.ratios.size == state.stage


# ---------------------------------------------------------------- dense oracle

def test_dense_single_particle():
    kin = dense_mobility_solve(ParticleCloud(np.zeros((1, 3)), 0.3), G)
    assert np.allclose(kin.V, G[None], atol=1e-15)


def test_dense_matches_neumann_geometrically():
    c = generate_cloud("uniform", 50, 3, r0=0.05)
    dk, Gd = dense_mobility_solve(c, G, return_gradient=True)
    kin, state = neumann_velocity_solve(c, G, p_max=20, tol=0.0)
    errs = [eta_norm(*(np.subtract(a, b) for a, b in zip(state.partial_sum(p), (dk.V, Gd))), c.R)
            for p in range(state.stage + 1)]
    floor = 1e-11 * state.eta[0]
    for p in range(len(errs) - 1):
        if errs[p + 1] > floor:
            assert errs[p + 1] <= state.K_hat * errs[p]
    assert np.allclose(kin.V, dk.V, atol=1e-13)
    assert np.allclose(kin.Omega, dk.Omega, atol=1e-12)


def test_dense_permutation_invariance():
    c = generate_cloud("uniform", 30, 4, r0=0.05)
    perm = np.random.default_rng(0).permutation(30)
    a = dense_mobility_solve(c, G).V
    b = dense_mobility_solve(ParticleCloud(c.positions[perm], c.r0), G).V
    assert np.allclose(a[perm], b, atol=1e-14)


def test_dense_cap():
    with pytest.raises(CapabilityError):
        dense_mobility_solve(generate_cloud("uniform", 20, 0), G, cap=10)


@given(st.integers(0, 2**31), st.integers(2, 40))
@settings(max_examples=20, deadline=None)
def test_linearity_in_gravity(seed, n):
    c = generate_cloud("uniform", n, seed, r0=0.05)
    k1, _ = neumann_velocity_solve(c, G)
    k2, _ = neumann_velocity_solve(c, 2 * G)
    assert np.allclose(k2.V, 2 * k1.V, rtol=1e-14, atol=0)
    assert np.allclose(k2.Omega, 2 * k1.Omega, rtol=1e-13, atol=1e-300)
    f1 = first_order_velocities(c, G).V
    assert np.array_equal(first_order_velocities(c, 2 * G).V, 2 * f1)


@given(st.integers(0, 2**31))
@settings(max_examples=15, deadline=None)
def test_reflections_near_first_order_and_bounded(seed):
    c = generate_cloud("uniform", 64, seed, r0=0.05)
    kin, _ = neumann_velocity_solve(c, G)
    fo = first_order_velocities(c, G).V
    assert np.abs(kin.V - fo).max() <= 0.05 * np.abs(fo).max()
    assert kin.size_bound(c.R) <= 2.0


def test_solve_dispatch():
    c = generate_cloud("uniform", 10, 5)
    for m in ("first-order", "reflections", "dense"):
        assert isinstance(solve_velocities(c, G, m), BodyKinematics)
    with pytest.raises(DomainError):
        solve_velocities(c, G, "magic")


# ---------------------------------------------------------------- Lipschitz report

def test_lipschitz_report_examples():
    c = pair(0.5, 1)
    assert pairwise_lipschitz_report(c, np.ones((2, 3)))[0] == 0.0
    V = np.array([[0.0, 0, 0], [0.3, 0.4, 0]])
    ratio, p = pairwise_lipschitz_report(c, V)
    assert ratio == pytest.approx(0.5 / 0.5) and p == (0, 1)


def test_lipschitz_report_matches_bruteforce():
    c = generate_cloud("uniform", 300, 6)
    V = np.random.default_rng(1).standard_normal((300, 3))
    x = c.positions
    d = np.linalg.norm(x[:, None] - x[None], axis=2)
    np.fill_diagonal(d, np.inf)
    ref = (np.linalg.norm(V[:, None] - V[None], axis=2) / d).max()
    assert pairwise_lipschitz_report(c, V)[0] == pytest.approx(ref, rel=1e-14)


def test_lipschitz_of_first_order_bounded_across_N():
    ratios = [pairwise_lipschitz_report(c, first_order_velocities(c, G))[0]
              for c in (generate_cloud("uniform", n, 7, r0=0.05) for n in (64, 128, 256))]
    assert max(ratios) <= 4 * min(ratios)
