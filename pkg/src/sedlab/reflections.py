"""Method of reflections for the mobility of N force-free sedimenting spheres.

Every sphere carries the gravity force, so at leading order it translates
with the Stokes settling velocity κg and sheds a stokeslet. Each sphere
then sees the flow generated by all the others. It is advected by that
incident flow (translation and rotation) and, to stay rigid, cancels the
local incident strain by emitting a strainlet. Those strainlets are felt
by the other spheres, and so on.

Writing X = (V_i, G_i) for the per-particle velocity and velocity
gradient of the incident field, the interaction map is

    T(V, G)_i = −Σ_{j≠i} (U_{x_j}[V_j] + A_{x_j}[G_j])(x_i),

with the gradient row defined from the same sum. The stages are

    X^(0) = (κg, 0),  X^(1) = −T(κg, 0),  X^(p+1) = T(0, sym G^(p)),

so that V_i = Σ_p V_i^(p), Ω_i = axial(ssym G_i) and the strainlet
strength of sphere i is −sym G_i. The dense oracle solves the same fixed
point directly.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .cloud import ParticleCloud, min_distance
from .errors import CapabilityError, DomainError, IterationDivergenceError, NumericalError
from .kernels import axial, oseen, skew, stokeslet_fields, strainlet_fields, rotlet_fields, sym

DENSE_CAP = 512
DIVERGENCE_WINDOW = 3


@dataclass(frozen=True)
class BodyKinematics:
    """Per-particle linear velocity V (N, 3) and angular velocity Ω (N, 3)."""

    V: np.ndarray
    Omega: np.ndarray
    strain: np.ndarray | None = None

    def size_bound(self, R: float) -> float:
        """max_i (|V_i| + R|Ω_i|)."""
        return float((np.linalg.norm(self.V, axis=1) + R * np.linalg.norm(self.Omega, axis=1)).max())


@dataclass
class ReflectionState:
    """Iterates of the reflection series and their contraction diagnostics."""

    V_stages: list = field(default_factory=list)
    G_stages: list = field(default_factory=list)
    eta: list = field(default_factory=list)
    R: float = 0.0

    @property
    def stage(self) -> int:
        return len(self.eta) - 1

    @property
    def ratios(self) -> np.ndarray:
        e = np.asarray(self.eta)
        if e.size < 2:
            return np.zeros(0)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(e[:-1] > 0, e[1:] / e[:-1], 0.0)

    @property
    def K_hat(self) -> float:
        r = self.ratios
        return float(r.max()) if r.size else 0.0

    def partial_sum(self, p: int | None = None):
        """Accumulated (V, G) through stage ``p`` (all stages by default)."""
        k = len(self.V_stages) if p is None else p + 1
        return sum(self.V_stages[:k]), sum(self.G_stages[:k])


def eta_norm(V, G, R) -> float:
    """max_i |V_i| + R·max_i |G_i| (Euclidean and Frobenius norms)."""
    return float(np.linalg.norm(V, axis=1).max() + R * np.linalg.norm(G, axis=(1, 2)).max())


def _gravity(g) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if g.shape != (3,):
        raise DomainError("gravity must be a 3-vector")
    return g


def _check_cloud(cloud: ParticleCloud):
    if cloud.N >= 2 and min_distance(cloud).distance <= 2.0 * cloud.R:
        raise DomainError("overlapping spheres: some centre distance is <= 2R")


def _pairs(x):
    """Offsets d[i, j] = x_i − x_j with a safe radius on the diagonal, plus the off-diagonal mask."""
    n = x.shape[0]
    d = x[:, None, :] - x[None, :, :]
    r = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
    mask = ~np.eye(n, dtype=bool)
    idx = np.arange(n)
    d[idx, idx] = (1.0, 0.0, 0.0)
    r[idx, idx] = 1.0
    return d, r, mask


def _sum_sources(u, G, mask):
    m = mask.astype(float)
    return np.einsum("ij,ijk->ik", m, u), np.einsum("ij,ijkl->ikl", m, G)


def apply_interaction_map(cloud: ParticleCloud, V, G, check: bool = True):
    """Return (V', G') with V'_i = −Σ_{j≠i}(U_{x_j}[V_j] + A_{x_j}[G_j])(x_i) and G' its gradient."""
    if check:
        _check_cloud(cloud)
    n, R = cloud.N, cloud.R
    V = np.broadcast_to(np.asarray(V, dtype=float), (n, 3))
    G = np.broadcast_to(np.asarray(G, dtype=float), (n, 3, 3))
    if np.abs(np.trace(G, axis1=1, axis2=2)).max() > 1e-10 * max(1.0, np.abs(G).max()):
        raise DomainError("gradient iterates must be trace-free")
    if n == 1:
        return np.zeros((1, 3)), np.zeros((1, 3, 3))
    d, r, mask = _pairs(cloud.positions)
    u_tot = np.zeros((n, 3))
    G_tot = np.zeros((n, 3, 3))
    if np.any(V):
        u, g, _ = stokeslet_fields(d, r, R, V[None, :, :])
        a, b = _sum_sources(u, g, mask)
        u_tot += a
        G_tot += b
    if np.any(G):
        E = sym(G)
        u, g, _ = strainlet_fields(d, r, R, E[None, :, :, :])
        a, b = _sum_sources(u, g, mask)
        u_tot += a
        G_tot += b
        w = axial(G)
        if np.any(w):
            u, g, _ = rotlet_fields(d, r, R, w[None, :, :])
            a, b = _sum_sources(u, g, mask)
            u_tot += a
            G_tot += b
    return -u_tot, -G_tot


def neumann_velocity_solve(cloud: ParticleCloud, gravity, p_max: int = 30, tol: float = 1e-13,
                           strict: bool = True):
    """Sum the reflection series until the stage size drops below ``tol``·η^(0).

    Returns ``(BodyKinematics, ReflectionState)``. Raises
    ``IterationDivergenceError`` (carrying the partial state) when the stage
    ratio stays ≥ 1 for three consecutive stages.
    """
    if p_max < 1:
        raise DomainError("p_max must be at least 1")
    _check_cloud(cloud)
    g = _gravity(gravity)
    n, R = cloud.N, cloud.R
    state = ReflectionState(R=R)
    V0 = np.tile(g, (n, 1))
    G0 = np.zeros((n, 3, 3))
    state.V_stages.append(V0)
    state.G_stages.append(G0)
    state.eta.append(eta_norm(V0, G0, R))
    eta0 = state.eta[0]
    if n > 1 and eta0 > 0:
        V, G = apply_interaction_map(cloud, V0, G0, check=False)
        V, G = -V, -G
        run = 0
        for p in range(1, p_max + 1):
            state.V_stages.append(V)
            state.G_stages.append(G)
            state.eta.append(eta_norm(V, G, R))
            ratio = state.eta[-1] / state.eta[-2] if state.eta[-2] > 0 else 0.0
            run = run + 1 if ratio >= 1.0 else 0
            if run >= DIVERGENCE_WINDOW:
                if strict:
                    raise IterationDivergenceError(
                        f"reflection series diverging at stage {p} (ratio {ratio:.3g})", state=state
                    )
                break
            if state.eta[-1] <= tol * eta0 or p == p_max:
                break
            V, G = apply_interaction_map(cloud, np.zeros((n, 3)), sym(G), check=False)
    Vs, Gs = state.partial_sum()
    kin = BodyKinematics(Vs, axial(Gs), -sym(Gs))
    return kin, state


# ------------------------------------------------------------ dense oracle

def _tracefree_basis():
    """Orthonormal basis of trace-free 3×3 matrices: five symmetric, then three skew."""
    s2, s6 = math.sqrt(2.0), math.sqrt(6.0)
    B = np.zeros((8, 3, 3))
    B[0] = np.diag([1.0, -1.0, 0.0]) / s2
    B[1] = np.diag([1.0, 1.0, -2.0]) / s6
    for k, (a, b) in enumerate([(0, 1), (0, 2), (1, 2)]):
        B[2 + k, a, b] = B[2 + k, b, a] = 1.0 / s2
        B[5 + k, a, b] = 1.0 / s2
        B[5 + k, b, a] = -1.0 / s2
    return B


TRACEFREE_BASIS = _tracefree_basis()


def dense_mobility_solve(cloud: ParticleCloud, gravity, cap: int = DENSE_CAP, return_gradient: bool = False):
    """Solve the reflection fixed point directly with a dense factorization.

    Unknowns per particle are V_i (3), Ω_i (3) and the five coordinates of
    the strainlet strength E_i. The equations are

        V_i = κg + Σ_{j≠i}(U_{x_j}[κg] + A_{x_j}[E_j])(x_i),
        W(Ω_i) − E_i = Σ_{j≠i} ∇(U_{x_j}[κg] + A_{x_j}[E_j])(x_i),

    i.e. each sphere moves with the incident flow and cancels its strain.
    """
    _check_cloud(cloud)
    g = _gravity(gravity)
    n, R = cloud.N, cloud.R
    if n > cap:
        raise CapabilityError(f"dense solve limited to N <= {cap}, got {n}")
    if n == 1:
        kin = BodyKinematics(g[None, :].copy(), np.zeros((1, 3)), np.zeros((1, 3, 3)))
        return (kin, np.zeros((1, 3, 3))) if return_gradient else kin
    B = TRACEFREE_BASIS
    d, r, mask = _pairs(cloud.positions)
    m = mask.astype(float)

    # Right-hand side from the gravity stokeslets.
    u, G, _ = stokeslet_fields(d, r, R, g)
    rhs = np.zeros((n, 11))
    rhs[:, :3] = g + np.einsum("ij,ijk->ik", m, u)
    rhs[:, 3:] = np.einsum("ij,ijkl,bkl->ib", m, G, B)

    # Matrix blocks: rows (i, 11), columns (j, 11).
    Amat = np.zeros((n, 11, n, 11))
    idx = np.arange(n)
    Amat[idx, :3, idx, :3] = np.eye(3)
    # W(Ω) coordinates on the skew basis, minus E coordinates on the symmetric one.
    Wc = np.einsum("ckl,bkl->bc", skew(np.eye(3)), B)
    Amat[idx, 3:, idx, 3:6] = Wc
    Amat[idx, 3:, idx, 6:] = -np.eye(8)[:, :5]
    for b in range(5):
        u, G, _ = strainlet_fields(d, r, R, B[b])
        Amat[:, :3, :, 6 + b] -= np.einsum("ij,ijk->ikj", m, u)
        Amat[:, 3:, :, 6 + b] -= np.einsum("ij,ijkl,ckl->icj", m, G, B)
    A2 = Amat.reshape(11 * n, 11 * n)
    try:
        sol = np.linalg.solve(A2, rhs.ravel())
    except np.linalg.LinAlgError as exc:
        raise NumericalError("dense mobility system is singular", condition=math.inf) from exc
    if not np.all(np.isfinite(sol)):
        raise NumericalError("dense mobility solve produced non-finite values",
                             condition=float(np.linalg.cond(A2)))
    sol = sol.reshape(n, 11)
    V = sol[:, :3]
    Om = sol[:, 3:6]
    E = np.einsum("ib,bkl->ikl", sol[:, 6:], B[:5])
    kin = BodyKinematics(V, Om, E)
    if return_gradient:
        return kin, skew(Om) - E
    return kin


# ------------------------------------------------------ first-order law

def first_order_velocities(cloud: ParticleCloud, gravity) -> BodyKinematics:
    """V_i = κg + 6πR Σ_{j≠i} Φ(x_i − x_j)κg and Ω_i = 0."""
    _check_cloud(cloud)
    g = _gravity(gravity)
    n, R = cloud.N, cloud.R
    V = np.tile(g, (n, 1))
    if n > 1:
        x = cloud.positions
        block = 256
        for s in range(0, n, block):
            d = x[s : s + block, None, :] - x[None, :, :]
            rr = np.sqrt(np.einsum("ijk,ijk->ij", d, d))
            rows = np.arange(s, min(n, s + block))
            rr[rows - s, rows] = np.inf
            dg = d @ g
            # Φ(d)g = (g/r + d(d·g)/r³)/8π, with the diagonal terms vanishing.
            contrib = g[None, None, :] / rr[..., None] + d * (dg / rr**3)[..., None]
            V[s : s + block] += 6.0 * math.pi * R / (8.0 * math.pi) * contrib.sum(axis=1)
    return BodyKinematics(V, np.zeros((n, 3)))


def first_order_velocities_oseen(cloud: ParticleCloud, gravity) -> np.ndarray:
    """Same law evaluated with explicit Oseen tensors; used as a cross-check."""
    g = _gravity(gravity)
    x = cloud.positions
    n = x.shape[0]
    V = np.tile(g, (n, 1))
    for i in range(n):
        for j in range(n):
            if i != j:
                V[i] += 6.0 * math.pi * cloud.R * oseen(x[i] - x[j]) @ g
    return V


def pairwise_lipschitz_report(cloud: ParticleCloud, V):
    """Return ``(max_{i≠j}|V_i − V_j|/d_ij, (i, j))``."""
    x = cloud.positions
    n = x.shape[0]
    if n < 2:
        raise DomainError("need at least two particles")
    V = V.V if isinstance(V, BodyKinematics) else np.asarray(V, dtype=float)
    best, pair = -1.0, (0, 1)
    block = 256
    for s in range(0, n, block):
        dx = x[s : s + block, None, :] - x[None, :, :]
        dv = V[s : s + block, None, :] - V[None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", dx, dx))
        rows = np.arange(s, min(n, s + block))
        dist[rows - s, rows] = np.inf
        ratio = np.linalg.norm(dv, axis=2) / dist
        k = int(np.argmax(ratio))
        i, j = divmod(k, n)
        if ratio[i, j] > best:
            best = float(ratio[i, j])
            pair = (min(s + i, j), max(s + i, j))
    return best, pair


def solve_velocities(cloud: ParticleCloud, gravity, method: str = "reflections", **kw) -> BodyKinematics:
    """Dispatch to one of ``first-order``, ``reflections`` or ``dense``."""
    if method == "first-order":
        return first_order_velocities(cloud, gravity)
    if method == "reflections":
        return neumann_velocity_solve(cloud, gravity, **kw)[0]
    if method == "dense":
        return dense_mobility_solve(cloud, gravity, **kw)
    raise DomainError(f"unknown solver {method!r}")


def smallness_warning(cloud: ParticleCloud, Mbar: float, threshold: float = 0.1):
    """Warn when M̄^{1/3} r0 is not small; returns the product."""
    prod = Mbar ** (1.0 / 3.0) * cloud.r0
    if prod > threshold:
        warnings.warn(f"smallness product {prod:.3g} exceeds {threshold}", stacklevel=2)
    return prod
