"""Exact Wasserstein distances between discrete measures and related tools.

W1 is computed with an exact network-simplex solver on the Euclidean cost
matrix. W∞ between uniform equal-size measures is a bottleneck assignment
problem: binary search over the sorted distances, testing each threshold
with a bipartite perfect matching. Small brute-force oracles enumerate
permutations directly.
"""
from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching
from scipy.spatial.distance import cdist

# POT probes optional deep-learning backends on import; none are needed here.
for _backend in ("TENSORFLOW", "PYTORCH", "JAX", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_backend}", "1")
import ot as _pot  # noqa: E402

from .errors import CapabilityError, DomainError  # noqa: E402

W1_CAP = 4096
WINF_CAP = 2048
BRUTE_CAP = 8
NORM_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteMeasure:
    """Atoms (n, 3) with positive weights summing to one."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        if a.shape[0] != w.size or a.shape[1] != 3:
            raise DomainError("atoms must have shape (n, 3) matching the weights")
        if not np.all(np.isfinite(a)):
            raise DomainError("atoms must be finite")
        if np.any(w <= 0):
            raise DomainError("weights must be positive")
        if abs(w.sum() - 1.0) > NORM_TOL:
            raise DomainError(f"weights must sum to 1 (got {w.sum()!r})")
        object.__setattr__(self, "atoms", a)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, atoms) -> "DiscreteMeasure":
        a = np.atleast_2d(np.asarray(atoms, dtype=float))
        return cls(a, np.full(a.shape[0], 1.0 / a.shape[0]))

    @classmethod
    def normalized(cls, atoms, weights) -> "DiscreteMeasure":
        w = np.asarray(weights, dtype=float)
        return cls(atoms, w / w.sum())

    @property
    def size(self) -> int:
        return self.weights.size

    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0])) or bool(
            np.abs(self.weights * self.size - 1.0).max() <= 1e-12
        )


@dataclass(frozen=True)
class TransportPlan:
    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray
    cost: float
    row_residual: float
    col_residual: float


def _w1_setup(mu, nu, cap):
    if not isinstance(mu, DiscreteMeasure) or not isinstance(nu, DiscreteMeasure):
        raise DomainError("inputs must be DiscreteMeasure instances")
    if mu.size > cap or nu.size > cap:
        raise CapabilityError(f"supports limited to {cap} atoms")
    return cdist(mu.atoms, nu.atoms)


def w1_exact(mu: DiscreteMeasure, nu: DiscreteMeasure, cap: int = W1_CAP):
    """Exact W1 with Euclidean ground cost; returns ``(distance, TransportPlan)``."""
    C = _w1_setup(mu, nu, cap)
    P = _pot.emd(mu.weights, nu.weights, C, numItermax=max(100_000, 50 * C.size))
    rows, cols = np.nonzero(P > 0)
    mass = P[rows, cols]
    cost = float(np.dot(mass, C[rows, cols]))
    plan = TransportPlan(
        rows=rows,
        cols=cols,
        mass=mass,
        cost=cost,
        row_residual=float(np.abs(P.sum(axis=1) - mu.weights).max()),
        col_residual=float(np.abs(P.sum(axis=0) - nu.weights).max()),
    )
    return cost, plan


def _check_uniform_pair(mu, nu, cap, exc):
    if mu.size != nu.size:
        raise exc("measures must have the same number of atoms")
    if not (mu.is_uniform() and nu.is_uniform()):
        raise exc("measures must have uniform weights")
    if mu.size > cap:
        raise exc(f"at most {cap} atoms supported")


def w1_bruteforce(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Minimum over assignments of the mean matched distance (uniform, n ≤ 8)."""
    _check_uniform_pair(mu, nu, BRUTE_CAP, DomainError)
    C = cdist(mu.atoms, nu.atoms)
    n = mu.size
    idx = np.arange(n)
    best = min(C[idx, list(p)].sum() for p in itertools.permutations(range(n)))
    return float(best / n)


def winf_bruteforce(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Minimum over assignments of the largest matched distance (uniform, n ≤ 8)."""
    _check_uniform_pair(mu, nu, BRUTE_CAP, DomainError)
    C = cdist(mu.atoms, nu.atoms)
    idx = np.arange(mu.size)
    return float(min(C[idx, list(p)].max() for p in itertools.permutations(range(mu.size))))


def _perfect_matching(C, thr):
    adj = csr_matrix(C <= thr)
    match = maximum_bipartite_matching(adj, perm_type="column")
    return match if np.all(match >= 0) else None


def winf_exact(mu: DiscreteMeasure, nu: DiscreteMeasure, cap: int = WINF_CAP):
    """Bottleneck distance between uniform equal-size measures.

    Returns ``(distance, assignment)`` where ``assignment[i]`` is the atom
    of ``nu`` matched to atom ``i`` of ``mu``.
    """
    if not isinstance(mu, DiscreteMeasure) or not isinstance(nu, DiscreteMeasure):
        raise DomainError("inputs must be DiscreteMeasure instances")
    _check_uniform_pair(mu, nu, cap, CapabilityError)
    C = cdist(mu.atoms, nu.atoms)
    levels = np.unique(C)
    lo, hi = 0, levels.size - 1
    best = _perfect_matching(C, levels[hi])
    while lo < hi:
        mid = (lo + hi) // 2
        m = _perfect_matching(C, levels[mid])
        if m is None:
            lo = mid + 1
        else:
            hi, best = mid, m
    return float(levels[lo]), best


# ------------------------------------------------------------ mollification

@dataclass(frozen=True)
class ChiSpec:
    """Radial bump χ on B(0, 1) given as a function of |z|, with its sup norm."""

    profile: object
    sup_norm: float
    name: str = "custom"

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        r = np.sqrt(np.einsum("...k,...k->...", z, z))
        return np.where(r < 1.0, self.profile(np.minimum(r, 1.0)), 0.0)

    def mass(self) -> float:
        s, w = np.polynomial.legendre.leggauss(64)
        r = 0.5 * (s + 1.0)
        return float(np.sum(0.5 * w * 4.0 * math.pi * r**2 * self.profile(r)))


QUARTIC_CHI = ChiSpec(
    profile=lambda r: 105.0 / (32.0 * math.pi) * (1.0 - r**2) ** 2,
    sup_norm=105.0 / (32.0 * math.pi),
    name="quartic",
)


def _ball_nodes(q: int):
    h = 2.0 / q
    g = -1.0 + h * (np.arange(q) + 0.5)
    z = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    return z[np.einsum("ij,ij->i", z, z) < 1.0], h


@dataclass(frozen=True)
class Mollified:
    density: object
    sup_estimate: float
    mass: float
    winf_witness: float
    sup_bound: float | None


def mollified_density_eval(mu: DiscreteMeasure, lam: float, x, chi: ChiSpec = QUARTIC_CHI):
    """Exact value of Σ_i w_i λ^{-3} χ((x − a_i)/λ) at points ``x``."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.zeros(pts.shape[0])
    block = 1024
    for s in range(0, pts.shape[0], block):
        z = (pts[s : s + block, None, :] - mu.atoms[None, :, :]) / lam
        out[s : s + block] = chi(z) @ mu.weights
    return out / lam**3


def mollify_empirical(mu: DiscreteMeasure, lam: float, chi: ChiSpec = QUARTIC_CHI,
                      nodes_per_axis: int = 8, delta: float | None = None, Mhat: float | None = None):
    """Blob discretization of μ ∗ χ_λ that keeps each atom's mass in B(atom, λ).

    Each atom is replaced by midpoint-rule nodes of the unit ball scaled by
    λ, with node weights proportional to χ and normalized per atom, so total
    mass is exactly preserved and the atom-to-own-nodes coupling witnesses
    W∞ ≤ λ. ``Mhat`` (the concentration ratio M/(Nλ³)) enables the bound
    ‖χ‖∞·M̂ on the sup estimate, evaluated at the atoms.
    """
    from .meanfield import BlobDensity

    if not lam > 0:
        raise DomainError("lambda must be positive")
    if abs(chi.mass() - 1.0) > 1e-8:
        raise DomainError("chi must have unit mass")
    z, h = _ball_nodes(nodes_per_axis)
    wz = chi(z)
    keep = wz > 0
    z, wz = z[keep], wz[keep] / wz[keep].sum()
    centers = (mu.atoms[:, None, :] + lam * z[None, :, :]).reshape(-1, 3)
    weights = (mu.weights[:, None] * wz[None, :]).ravel()
    d = BlobDensity(centers, weights, delta if delta is not None else lam * h, ("mollified", lam))
    sup = float(mollified_density_eval(mu, lam, mu.atoms, chi).max())
    witness = float(lam * np.sqrt(np.einsum("ij,ij->i", z, z)).max())
    bound = chi.sup_norm * Mhat if Mhat is not None else None
    return Mollified(d, sup, float(weights.sum()), witness, bound)


def discretize_density(density, n: int, mode: str = "quadrature", seed: int | None = None):
    """Turn a blob density into an n-atom DiscreteMeasure.

    ``quadrature`` keeps the n heaviest blobs (stable order) and renormalizes;
    ``seeded_sampling`` draws n atoms proportionally to the weights.
    Returns ``(measure, gap)`` where ``gap`` is the exact W1 to the full
    blob measure when both fit the solver cap, otherwise NaN.
    """
    if n < 1:
        raise DomainError("n must be at least 1")
    w = np.asarray(density.weights, dtype=float)
    y = np.asarray(density.centers, dtype=float)
    if mode == "quadrature":
        order = np.argsort(-w, kind="stable")[: min(n, w.size)]
        order = np.sort(order)
        meas = DiscreteMeasure.normalized(y[order], w[order])
    elif mode == "seeded_sampling":
        rng = np.random.default_rng(seed)
        idx = rng.choice(w.size, size=n, replace=True, p=w / w.sum())
        meas = DiscreteMeasure.uniform(y[idx])
    else:
        raise DomainError(f"unknown mode {mode!r}")
    gap = math.nan
    if w.size <= W1_CAP and meas.size <= W1_CAP:
        full = DiscreteMeasure.normalized(y[w > 0], w[w > 0])
        gap = w1_exact(full, meas)[0]
    return meas, gap


def box_smoothing_witness(positions, lam: float, q: int = 4):
    """In-box coupling between ρ^N and a midpoint discretization of its box smoothing.

    Each atom's mass is spread uniformly over q³ cell centres of the cube of
    half-width λ/3 around it. Returns ``(measure, cost, max_shift)`` where
    ``cost`` is the transport cost of the atom-to-own-cube coupling (an upper
    bound for W1) and ``max_shift`` its largest displacement; both are ≤ λ.
    """
    if not lam > 0:
        raise DomainError("lambda must be positive")
    x = np.atleast_2d(np.asarray(positions, dtype=float))
    a = lam / 3.0
    g = -a + (2.0 * a / q) * (np.arange(q) + 0.5)
    c = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    atoms = (x[:, None, :] + c[None, :, :]).reshape(-1, 3)
    meas = DiscreteMeasure.uniform(atoms)
    r = np.linalg.norm(c, axis=1)
    return meas, float(r.mean()), float(r.max())
