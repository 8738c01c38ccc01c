import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sedlab.errors import CapabilityError, DomainError
from sedlab.meanfield import BlobDensity
from sedlab.ot import (
    QUARTIC_CHI,
    DiscreteMeasure,
    box_smoothing_witness,
    discretize_density,
    mollified_density_eval,
    mollify_empirical,
    w1_bruteforce,
    w1_exact,
    winf_bruteforce,
    winf_exact,
)

E1 = np.array([1.0, 0, 0])


def uniform(rng, n):
    return DiscreteMeasure.uniform(rng.standard_normal((n, 3)))


def perm_oracle(mu, nu, agg):
    C = np.linalg.norm(mu.atoms[:, None] - nu.atoms[None], axis=2)
    n = mu.size
    return min(agg(C[np.arange(n), list(p)]) for p in itertools.permutations(range(n)))


seeds = st.integers(0, 2**32 - 1)


# ---------------------------------------------------------------- measures

def test_measure_validation():
    with pytest.raises(DomainError):
        DiscreteMeasure(np.zeros((2, 3)), np.array([0.7, 0.7]))
    with pytest.raises(DomainError):
        DiscreteMeasure(np.zeros((2, 3)), np.array([1.5, -0.5]))
    m = DiscreteMeasure.normalized(np.zeros((2, 3)), np.array([1.0, 3.0]))
    assert np.allclose(m.weights, [0.25, 0.75]) and not m.is_uniform()


# ---------------------------------------------------------------- W1

def test_w1_diracs():
    a, b = np.array([[0.0, 1, 2]]), np.array([[3.0, -1, 2]])
    d, plan = w1_exact(DiscreteMeasure.uniform(a), DiscreteMeasure.uniform(b))
    assert d == pytest.approx(math.sqrt(13)) and plan.mass.tolist() == [1.0]


def test_w1_split_mass():
    mu = DiscreteMeasure.uniform(np.array([[0.0, 0, 0], [2, 0, 0]]))
    nu = DiscreteMeasure.uniform(E1[None])
    d, plan = w1_exact(mu, nu)
    assert d == pytest.approx(1.0) and plan.row_residual < 1e-15 and plan.col_residual < 1e-15


def test_w1_six_atoms_against_permutations():
    rng = np.random.default_rng(0)
    mu, nu = uniform(rng, 6), uniform(rng, 6)
    assert w1_exact(mu, nu)[0] == pytest.approx(perm_oracle(mu, nu, np.mean), abs=1e-12)


@given(seeds, st.integers(1, 7))
@settings(max_examples=60, deadline=None)
def test_w1_equals_bruteforce(seed, n):
    rng = np.random.default_rng(seed)
    mu, nu = uniform(rng, n), uniform(rng, n)
    assert abs(w1_exact(mu, nu)[0] - w1_bruteforce(mu, nu)) <= 1e-9


@given(seeds)
@settings(max_examples=40, deadline=None)
def test_w1_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    n = [int(k) for k in rng.integers(1, 8, 3)]
    a, b, c = (DiscreteMeasure.normalized(rng.standard_normal((k, 3)), rng.uniform(0.1, 1, k)) for k in n)
    ab, ba = w1_exact(a, b)[0], w1_exact(b, a)[0]
    assert w1_exact(a, a)[0] <= 1e-12
    assert abs(ab - ba) <= 1e-9
    assert ab <= w1_exact(a, c)[0] + w1_exact(c, b)[0] + 1e-9


def test_w1_cap():
    mu = DiscreteMeasure.uniform(np.random.default_rng(0).standard_normal((10, 3)))
    with pytest.raises(CapabilityError):
        w1_exact(mu, mu, cap=5)


def test_bruteforce_examples_and_limits():
    one_a = DiscreteMeasure.uniform(np.zeros((1, 3)))
    one_b = DiscreteMeasure.uniform(E1[None] * 2)
    assert w1_bruteforce(one_a, one_b) == 2.0
    mu = DiscreteMeasure.uniform(np.array([[0.0, 0, 0], [1, 0, 0]]))
    nu = DiscreteMeasure.uniform(np.array([[1.0, 0, 0], [0, 0, 0]]))
    assert w1_bruteforce(mu, nu) == 0.0
    with pytest.raises(DomainError):
        w1_bruteforce(uniform(np.random.default_rng(0), 9), uniform(np.random.default_rng(1), 9))


def test_bruteforce_cross_validates_exact_n6():
    rng = np.random.default_rng(3)
    mu, nu = uniform(rng, 6), uniform(rng, 6)
    assert w1_bruteforce(mu, nu) == pytest.approx(w1_exact(mu, nu)[0], abs=1e-12)


# ---------------------------------------------------------------- W-infinity

def test_winf_examples():
    rng = np.random.default_rng(1)
    mu = uniform(rng, 5)
    assert winf_exact(mu, mu)[0] == 0.0
    a = DiscreteMeasure.uniform(np.zeros((1, 3)))
    b = DiscreteMeasure.uniform(E1[None])
    assert winf_exact(a, b)[0] == 1.0


def test_winf_four_atoms_against_permutations():
    rng = np.random.default_rng(2)
    mu, nu = uniform(rng, 4), uniform(rng, 4)
    d, assignment = winf_exact(mu, nu)
    assert d == perm_oracle(mu, nu, np.max)
    assert sorted(assignment.tolist()) == [0, 1, 2, 3]
    assert np.linalg.norm(mu.atoms - nu.atoms[assignment], axis=1).max() == d


@given(seeds, st.integers(1, 6))
@settings(max_examples=60, deadline=None)
def test_winf_equals_bruteforce_and_dominates_w1(seed, n):
    rng = np.random.default_rng(seed)
    mu, nu = uniform(rng, n), uniform(rng, n)
    d = winf_exact(mu, nu)[0]
    assert d == winf_bruteforce(mu, nu)
    assert d >= w1_exact(mu, nu)[0] - 1e-12


def test_winf_restrictions():
    rng = np.random.default_rng(0)
    with pytest.raises(CapabilityError):
        winf_exact(uniform(rng, 3), uniform(rng, 4))
    with pytest.raises(CapabilityError):
        winf_exact(DiscreteMeasure.normalized(np.eye(3), np.array([1.0, 2, 3])), uniform(rng, 3))


# ---------------------------------------------------------------- mollification

def test_quartic_chi_unit_mass():
    assert QUARTIC_CHI.mass() == pytest.approx(1.0, abs=1e-12)


def test_mollify_single_atom():
    mu = DiscreteMeasure.uniform(np.array([[0.5, 0.5, 0.5]]))
    m = mollify_empirical(mu, 0.2)
    assert m.mass == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.norm(m.density.centers - 0.5, axis=1).max() < 0.2
    assert m.winf_witness <= 0.2
    assert m.sup_estimate == pytest.approx(QUARTIC_CHI.sup_norm / 0.2**3)


@given(seeds, st.floats(0.05, 0.5))
@settings(max_examples=20, deadline=None)
def test_mollify_mass_and_witness(seed, lam):
    rng = np.random.default_rng(seed)
    mu = DiscreteMeasure.uniform(rng.uniform(size=(20, 3)))
    m = mollify_empirical(mu, lam)
    assert abs(m.mass - 1.0) <= 1e-8 and m.winf_witness <= lam


def test_mollify_sup_bound_on_admissible_cloud():
    from sedlab.cloud import ParticleCloud, choose_lambda, diagnostics

    cloud = ParticleCloud(np.random.default_rng(4).uniform(size=(200, 3)), 0.05)
    lam = choose_lambda(cloud)[0]
    Mhat = diagnostics(cloud, lam).ratio_Mbar
    m = mollify_empirical(DiscreteMeasure.uniform(cloud.positions), lam, Mhat=Mhat)
    assert m.sup_estimate <= m.sup_bound * (1 + 1e-12)
    grid = np.random.default_rng(5).uniform(size=(5000, 3))
    assert mollified_density_eval(DiscreteMeasure.uniform(cloud.positions), lam, grid).max() <= m.sup_bound


def test_box_smoothing_witness_below_lambda():
    x = np.random.default_rng(6).uniform(size=(15, 3))
    lam = 0.3
    meas, cost, shift = box_smoothing_witness(x, lam)
    assert cost <= shift <= lam
    assert w1_exact(DiscreteMeasure.uniform(x), meas)[0] <= cost + 1e-12


# ---------------------------------------------------------------- discretization

def blobs(seed, k):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.1, 1, k)
    return BlobDensity(rng.standard_normal((k, 3)), w / w.sum(), 0.1)


def test_discretize_identity_when_n_covers_all():
    d = blobs(0, 12)
    meas, gap = discretize_density(d, 12)
    assert np.array_equal(meas.atoms, d.centers) and np.allclose(meas.weights, d.weights) and gap <= 1e-12


def test_discretize_sampling_deterministic():
    d = blobs(1, 50)
    a, _ = discretize_density(d, 20, "seeded_sampling", seed=3)
    b, _ = discretize_density(d, 20, "seeded_sampling", seed=3)
    assert np.array_equal(a.atoms, b.atoms)


def test_discretize_gap_decreases_with_n():
    d = blobs(2, 400)
    gaps = [discretize_density(d, n)[1] for n in (25, 50, 100, 200, 400)]
    assert all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))


def test_discretize_bad_mode():
    with pytest.raises(DomainError):
        discretize_density(blobs(0, 3), 2, "magic")
