import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sedlab.errors import DomainError, SingularityError
from sedlab.kernels import (
    BumpFieldSpec,
    TruncationProfile,
    bump_field_eval,
    combined_eval,
    cutoff_chi,
    oseen,
    oseen_eval,
    rotlet_eval,
    smoothstep,
    sphere_quadrature,
    stokeslet_eval,
    strainlet_eval,
    traction_integrals,
    truncated_oseen_eval,
)

E1, E2, E3 = np.eye(3)
vec = arrays(float, 3, elements=st.floats(-3, 3, allow_nan=False))


def rand_strain(rng):
    A = rng.standard_normal((3, 3))
    S = 0.5 * (A + A.T)
    return S - np.trace(S) / 3 * np.eye(3)


def rand_tracefree(rng):
    A = rng.standard_normal((3, 3))
    return A - np.trace(A) / 3 * np.eye(3)


def surface(rng, n, a, R):
    v = rng.standard_normal((n, 3))
    return a + R * v / np.linalg.norm(v, axis=1, keepdims=True)


def exterior(rng, n, a, R, lo=1.1, hi=8.0):
    v = rng.standard_normal((n, 3))
    return a + (R * rng.uniform(lo, hi, n))[:, None] * v / np.linalg.norm(v, axis=1, keepdims=True)


# ---------------------------------------------------------------- Oseen tensor

def test_oseen_on_axis():
    phi, _, lap = oseen_eval(E1)
    assert np.allclose(phi, np.diag([1 / (4 * math.pi), 1 / (8 * math.pi), 1 / (8 * math.pi)]), atol=1e-16)
    assert np.allclose(np.diag(phi), [0.0795775, 0.0397887, 0.0397887], atol=1e-7)
    assert np.allclose(lap, np.diag([-1 / (2 * math.pi), 1 / (4 * math.pi), 1 / (4 * math.pi)]), atol=1e-16)


@given(vec)
def test_oseen_even_and_symmetric(x):
    assume(np.linalg.norm(x) > 1e-3)
    phi = oseen(x)
    assert np.array_equal(phi, oseen(-x)) and np.allclose(phi, phi.T, rtol=0, atol=0)


@given(vec)
@settings(max_examples=50)
def test_oseen_gradient_and_laplacian_by_differences(x):
    assume(np.linalg.norm(x) > 0.3)
    h = 1e-5
    phi, grad, lap = oseen_eval(x)
    fd_lap = np.zeros((3, 3))
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (oseen(x + e) - oseen(x - e)) / (2 * h)
        assert np.allclose(grad[:, :, k], fd, atol=1e-7)
        fd_lap += (oseen(x + e) - 2 * phi + oseen(x - e)) / h**2
    assert np.allclose(lap, fd_lap, atol=1e-3 * np.abs(lap).max())


def test_oseen_singular_at_origin():
    with pytest.raises(SingularityError):
        oseen_eval(np.zeros(3))


def test_oseen_lipschitz_constant_two():
    rng = np.random.default_rng(0)
    x = rng.uniform(-2, 2, size=(100_000, 3))
    y = rng.uniform(-2, 2, size=(100_000, 3))
    rx, ry = np.linalg.norm(x, axis=1), np.linalg.norm(y, axis=1)
    ok = (rx > 0.05) & (ry > 0.05)
    x, y, rx, ry = x[ok], y[ok], rx[ok], ry[ok]
    diff = np.linalg.norm(oseen(x) - oseen(y), ord=2, axis=(1, 2))
    bound = 2 * np.linalg.norm(x - y, axis=1) / np.minimum(rx, ry) ** 2
    assert np.all(diff <= bound)


# ---------------------------------------------------------------- boundary data

def test_stokeslet_example_values():
    R = 0.3
    assert np.allclose(stokeslet_eval(np.zeros(3), R, E1, 2 * R * E1).velocity, 0.6875 * E1, atol=1e-15)
    assert np.allclose(stokeslet_eval(np.zeros(3), R, E1, 2 * R * E2).velocity, 0.40625 * E1, atol=1e-15)


def test_rotlet_example_value():
    R = 0.3
    assert np.allclose(rotlet_eval(np.zeros(3), R, E3, 2 * R * E1).velocity, R / 4 * E2, atol=1e-15)


@pytest.mark.parametrize("seed", range(3))
def test_boundary_conditions_exact(seed):
    rng = np.random.default_rng(seed)
    a, R = rng.standard_normal(3), rng.uniform(0.1, 2)
    x = surface(rng, 100, a, R)
    V, w, E, D = rng.standard_normal(3), rng.standard_normal(3), rand_strain(rng), rand_tracefree(rng)
    assert np.abs(stokeslet_eval(a, R, V, x).velocity - V).max() <= 1e-12
    assert np.abs(rotlet_eval(a, R, w, x).velocity - np.cross(w, x - a)).max() <= 1e-12
    assert np.abs(strainlet_eval(a, R, E, x).velocity - (x - a) @ E.T).max() <= 1e-12
    assert np.abs(combined_eval(a, R, D, x).velocity - (x - a) @ D.T).max() <= 1e-12


def test_interior_extension_is_rigid():
    R, V, w = 1.0, np.array([1.0, 2, 3]), np.array([0.0, 0, 1])
    x = np.array([0.2, 0.1, -0.3])
    s = stokeslet_eval(np.zeros(3), R, V, x)
    assert s.inside_flag and np.array_equal(s.velocity, V)
    r = rotlet_eval(np.zeros(3), R, w, x)
    assert np.allclose(r.velocity, np.cross(w, x))


def test_rotlet_orthogonal_to_radius():
    rng = np.random.default_rng(1)
    x = exterior(rng, 200, np.zeros(3), 0.5)
    u = rotlet_eval(np.zeros(3), 0.5, rng.standard_normal(3), x).velocity
    assert np.abs(np.einsum("ij,ij->i", u, x)).max() < 1e-14


def test_combined_reduces_to_parts():
    rng = np.random.default_rng(2)
    x = exterior(rng, 50, np.zeros(3), 0.4)
    w = rng.standard_normal(3)
    W = np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])
    assert np.allclose(combined_eval(np.zeros(3), 0.4, W, x).velocity, rotlet_eval(np.zeros(3), 0.4, w, x).velocity)
    E = rand_strain(rng)
    assert np.allclose(combined_eval(np.zeros(3), 0.4, E, x).velocity, strainlet_eval(np.zeros(3), 0.4, E, x).velocity)


def test_strainlet_rejects_bad_strain():
    with pytest.raises(DomainError):
        strainlet_eval(np.zeros(3), 1.0, np.eye(3), E1 * 2)
    with pytest.raises(DomainError):
        strainlet_eval(np.zeros(3), 1.0, np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0.0]]), E1 * 2)


# ---------------------------------------------------------------- field equations

KINDS = ["stokeslet", "rotlet", "strainlet"]


def evaluator(kind, rng):
    if kind == "stokeslet":
        return stokeslet_eval, rng.standard_normal(3)
    if kind == "rotlet":
        return rotlet_eval, rng.standard_normal(3)
    return strainlet_eval, rand_strain(rng)


@pytest.mark.parametrize("kind", KINDS)
def test_divergence_and_momentum_by_differences(kind):
    rng = np.random.default_rng(4)
    a, R = np.zeros(3), 0.5
    ev, prm = evaluator(kind, rng)
    x = exterior(rng, 300, a, R, 1.2, 6.0)
    s = ev(a, R, prm, x)
    h = 1e-4 * np.linalg.norm(x - a, axis=1)[:, None]
    div = np.zeros(len(x))
    lap = np.zeros_like(x)
    gp = np.zeros_like(x)
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1.0
        sp, sm = ev(a, R, prm, x + h * e), ev(a, R, prm, x - h * e)
        div += (sp.velocity[:, k] - sm.velocity[:, k]) / (2 * h[:, 0])
        lap += (sp.velocity - 2 * s.velocity + sm.velocity) / h**2
        gp[:, k] = (sp.pressure - sm.pressure) / (2 * h[:, 0])
    scale = np.abs(s.velocity_gradient).max(axis=(1, 2))
    assert np.all(np.abs(div) <= 1e-6 * scale)
    res = np.linalg.norm(-lap + gp, axis=1)
    # Second derivatives scale like |∇u|/r; the rotlet has Δu = ∇p = 0 exactly.
    second = scale / np.linalg.norm(x - a, axis=1)
    assert np.all(res <= 1e-4 * second)
    assert np.abs(np.trace(s.velocity_gradient, axis1=1, axis2=2)).max() < 1e-13


@pytest.mark.parametrize("kind", KINDS)
def test_decay_rates(kind):
    rng = np.random.default_rng(5)
    ev, prm = evaluator(kind, rng)
    R = 0.1
    size = np.abs(prm).max()
    u_pow = 1 if kind == "stokeslet" else 2
    for ratio in 4.0 * 2.0 ** np.arange(7):
        x = surface(rng, 50, np.zeros(3), ratio * R)
        s = ev(np.zeros(3), R, prm, x)
        r = ratio * R
        u = np.linalg.norm(s.velocity, axis=1).max()
        g = np.abs(s.velocity_gradient).max()
        Rk = R if kind == "stokeslet" else R**3
        assert u <= 10 * Rk * size / r**u_pow
        assert g <= 10 * Rk * size / r ** (u_pow + 1)


def test_stokeslet_minus_oseen_residual():
    rng = np.random.default_rng(6)
    R = 0.1
    V = rng.standard_normal(3)
    x = exterior(rng, 500, np.zeros(3), R, 1.0, 50.0)
    r = np.linalg.norm(x, axis=1)
    diff = stokeslet_eval(np.zeros(3), R, V, x).velocity - 6 * math.pi * R * np.einsum("nij,j->ni", oseen(x), V)
    assert np.all(np.linalg.norm(diff, axis=1) <= R**3 * np.linalg.norm(V) / r**3)


# ---------------------------------------------------------------- tractions

def test_quadrature_integrates_sphere_area_and_moments():
    n, w = sphere_quadrature(8, 16)
    assert w.sum() == pytest.approx(4 * math.pi, rel=1e-14)
    assert np.allclose(np.einsum("q,qi,qj->ij", w, n, n), 4 * math.pi / 3 * np.eye(3), atol=1e-14)
    with pytest.raises(DomainError):
        sphere_quadrature(2, 4)


def test_traction_oracles():
    rng = np.random.default_rng(7)
    a, R = rng.standard_normal(3), 0.37
    V, w, E = rng.standard_normal(3), rng.standard_normal(3), rand_strain(rng)
    ts = traction_integrals("stokeslet", V, a, R, (64, 128))
    assert np.allclose(ts.force, -6 * math.pi * R * V, rtol=1e-8, atol=1e-12)
    assert np.abs(ts.torque).max() < 1e-12 and np.abs(ts.stresslet).max() < 1e-12
    tr = traction_integrals("rotlet", w, a, R, (64, 128))
    assert np.allclose(tr.torque, -8 * math.pi * R**3 * w, rtol=1e-8, atol=1e-14)
    assert np.abs(tr.force).max() < 1e-12 and np.abs(tr.stresslet).max() < 1e-12
    te = traction_integrals("strainlet", E, a, R, (64, 128))
    assert np.allclose(te.stresslet, -20 / 3 * math.pi * R**3 * E, rtol=1e-8, atol=1e-14)
    assert np.abs(te.force).max() < 1e-12 and np.abs(te.torque).max() < 1e-12


def test_combined_traction_superposes():
    rng = np.random.default_rng(8)
    D = rand_tracefree(rng)
    tc = traction_integrals("combined", D, np.zeros(3), 1.0)
    Sym = 0.5 * (D + D.T)
    w = np.array([D[2, 1] - D[1, 2], D[0, 2] - D[2, 0], D[1, 0] - D[0, 1]]) / 2
    assert np.allclose(tc.stresslet, -20 / 3 * math.pi * Sym)
    assert np.allclose(tc.torque, -8 * math.pi * w)


def test_traction_error_nonincreasing_with_order():
    rng = np.random.default_rng(9)
    E = rand_strain(rng)
    target = -20 / 3 * math.pi * E
    errs = [np.abs(traction_integrals("strainlet", E, np.zeros(3), 1.0, o).stresslet - target).max()
            for o in [(4, 8), (8, 16), (16, 32), (32, 64), (64, 128)]]
    for a, b in zip(errs, errs[1:]):
        assert b <= max(a, 1e-13)


def test_unknown_traction_kind():
    with pytest.raises(DomainError):
        traction_integrals("doublet", E1, np.zeros(3), 1.0)


# ---------------------------------------------------------------- truncation

def test_truncated_oseen_plateaus_and_ramp():
    prof = TruncationProfile(0.25, 0.5)
    assert np.array_equal(truncated_oseen_eval(0.125 * E1, prof), np.zeros((3, 3)))
    assert np.array_equal(truncated_oseen_eval(1.0 * E2, prof), oseen(1.0 * E2))
    mid = 0.375 * E3
    assert np.allclose(truncated_oseen_eval(mid, prof), 0.5 * oseen(mid))
    assert smoothstep(0.25) == pytest.approx(3 / 16 - 2 / 64)
    assert TruncationProfile.from_dmin(1.0) == prof


def test_truncation_profile_validation():
    with pytest.raises(DomainError):
        TruncationProfile(0.5, 0.25)


# ---------------------------------------------------------------- bump field

def bump_spec(seed, n=8, R=0.03):
    rng = np.random.default_rng(seed)
    c = rng.uniform(size=(n, 3))
    while np.min(np.linalg.norm(c[:, None] - c[None], axis=2) + 10 * np.eye(n)) < 4 * R:
        c = rng.uniform(size=(n, 3))
    return BumpFieldSpec(c, R, rng.standard_normal((n, 3)))


def test_bump_field_interpolates_and_vanishes():
    spec = bump_spec(0)
    assert np.array_equal(bump_field_eval(spec, spec.centers), spec.coeffs)
    rng = np.random.default_rng(1)
    x = rng.uniform(size=(5000, 3))
    far = np.min(np.linalg.norm(x[:, None] - spec.centers[None], axis=2), axis=1) > 2 * spec.R
    assert np.all(bump_field_eval(spec, x[far]) == 0.0)


def test_bump_field_divergence_free():
    spec = bump_spec(2)
    rng = np.random.default_rng(3)
    idx = rng.integers(0, 8, 10_000)
    x = spec.centers[idx] + rng.uniform(-2.2, 2.2, size=(10_000, 3)) * spec.R
    h = 1e-6 * spec.R
    div = np.zeros(len(x))
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        div += (bump_field_eval(spec, x + e)[:, k] - bump_field_eval(spec, x - e)[:, k]) / (2 * h)
    assert np.abs(div).max() <= 1e-6 * np.abs(spec.coeffs).max() / spec.R


def test_bump_field_rejects_overlapping_supports():
    with pytest.raises(DomainError):
        BumpFieldSpec(np.array([[0.0, 0, 0], [0.1, 0, 0]]), 0.05, np.ones((2, 3)))


def test_cutoff_plateaus():
    assert cutoff_chi(0.5) == 1.0 and cutoff_chi(1.0) == 1.0 and cutoff_chi(2.0) == 0.0 and cutoff_chi(1.5) == 0.5
