"""Seeded initial configurations."""
from __future__ import annotations

import numpy as np

from .cloud import ParticleCloud, min_distance
from .errors import DensityInfeasibleError, DomainError

MAX_ATTEMPTS = 1000


def lattice_points(n_side: int, spacing: float = 1.0) -> np.ndarray:
    g = spacing * np.arange(n_side)
    return np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)


def _accept(x, r0, min_sep_factor):
    n = x.shape[0]
    if n < 2:
        return True
    return min_distance(x).distance > min_sep_factor * 2.0 * r0 / n


def generate_cloud(kind: str, N: int, seed: int, r0: float = 0.05, jitter: float = 0.0,
                   box: float = 1.0, rho0=None, min_sep_factor: float = 1.0) -> ParticleCloud:
    """Build a non-overlapping cloud from a seed.

    ``kind`` is ``uniform`` (N points uniform in [0, box]³), ``lattice``
    (cubic lattice with N = n³ points filling [0, box)³, spacing box/n,
    each point displaced uniformly by up to ``jitter``·spacing per axis) or
    ``rho0`` (N samples of a ``Rho0Spec``). Draws are repeated until the
    minimal distance exceeds ``min_sep_factor``·2R, giving up after 1000
    attempts.
    """
    if N < 1:
        raise DomainError("N must be positive")
    rng = np.random.default_rng(seed)
    if kind == "lattice":
        n = round(N ** (1.0 / 3.0))
        if n**3 != N:
            raise DomainError("lattice generator needs N to be a perfect cube")
        h = box / n
        base = lattice_points(n, h)
    for _ in range(MAX_ATTEMPTS):
        if kind == "uniform":
            x = rng.uniform(0.0, box, size=(N, 3))
        elif kind == "lattice":
            x = base + (rng.uniform(-jitter, jitter, size=base.shape) * h if jitter > 0 else 0.0)
        elif kind == "rho0":
            if rho0 is None:
                raise DomainError("rho0 generator needs a density spec")
            x = sample_rho0(rho0, N, rng)
        else:
            raise DomainError(f"unknown generator {kind!r}")
        if _accept(x, r0, min_sep_factor):
            return ParticleCloud(x, r0)
    raise DensityInfeasibleError(f"no admissible {kind} cloud with N={N} after {MAX_ATTEMPTS} attempts")


def sample_rho0(spec, N: int, rng) -> np.ndarray:
    """Draw N i.i.d. points from a radial ``Rho0Spec``."""
    c = np.asarray(spec.center)
    if spec.family == "gaussian":
        return c + spec.scale * rng.standard_normal((N, 3))
    out = np.empty((0, 3))
    a = spec.scale
    while out.shape[0] < N:
        z = rng.uniform(-a, a, size=(4 * N, 3))
        if spec.family == "uniform":
            acc = np.einsum("ij,ij->i", z, z) < a * a
        else:
            acc = rng.uniform(size=4 * N) * spec.max_value < spec(z + c)
        out = np.vstack([out, z[acc]])
    return c + out[:N]
