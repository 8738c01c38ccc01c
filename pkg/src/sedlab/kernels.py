"""Closed-form Stokes flows around a single sphere.

Three elementary solutions are provided, each with velocity, velocity
gradient and pressure, for a sphere of radius R centred at ``a``:

* stokeslet: the sphere translates with velocity V;
* rotlet: the sphere rotates with angular velocity ω;
* strainlet: the sphere surface moves with the linear field E·(x − a),
  E symmetric and trace-free.

Inside the sphere the fields are extended by the rigid (or linear) motion.
Gradients follow the convention ``grad[..., i, j] = ∂u_i/∂x_j``.

Strainlet derivation. Write d = x − a, r = |d|, q = d·E·d and try
u = α(r)E·d + β(r) q d. Incompressibility together with the Stokes
equations and decay at infinity leave the family
α = c₁/r⁵, β = c₂/r⁵ − (5/2)c₁/r⁷ with pressure p = 2c₂ q/r⁵. The surface
condition u = E·d at r = R forces α(R) = 1 and β(R) = 0, so
c₁ = R⁵ and c₂ = (5/2)R³. This is the time-reversed Batchelor disturbance
flow of a rigid sphere in a pure strain; its stresslet is −(20/3)πR³E.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SingularityError

_EYE = np.eye(3)
_INV8PI = 1.0 / (8.0 * math.pi)
MIN_QUADRATURE = (4, 8)
DEFAULT_QUADRATURE = (32, 64)
_TRACE_TOL = 1e-12


@dataclass(frozen=True)
class KernelSample:
    velocity: np.ndarray
    velocity_gradient: np.ndarray
    pressure: np.ndarray | float
    inside_flag: np.ndarray | bool


@dataclass(frozen=True)
class TractionSummary:
    """Force, torque, stresslet and the raw first moment ∫(x − a)⊗σn."""

    force: np.ndarray
    torque: np.ndarray
    stresslet: np.ndarray
    first_moment: np.ndarray


# ---------------------------------------------------------------- helpers

def skew(w) -> np.ndarray:
    """Matrix W(ω) with W(ω)v = ω × v; works on stacks of vectors."""
    w = np.asarray(w, dtype=float)
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out


def axial(W) -> np.ndarray:
    """Axial vector ω of the skew part of W, so that ssym(W)v = ω × v."""
    W = np.asarray(W, dtype=float)
    A = 0.5 * (W - np.swapaxes(W, -1, -2))
    return np.stack([A[..., 2, 1], A[..., 0, 2], A[..., 1, 0]], axis=-1)


def sym(D):
    D = np.asarray(D, dtype=float)
    return 0.5 * (D + np.swapaxes(D, -1, -2))


def ssym(D):
    D = np.asarray(D, dtype=float)
    return 0.5 * (D - np.swapaxes(D, -1, -2))


def _check_trace_free(D, what):
    D = np.asarray(D, dtype=float)
    scale = max(1.0, float(np.abs(D).max(initial=0.0)))
    if np.abs(np.trace(D, axis1=-2, axis2=-1)).max(initial=0.0) > _TRACE_TOL * scale:
        raise DomainError(f"{what} must be trace-free")
    return D


def _check_strain(E):
    E = _check_trace_free(E, "E")
    scale = max(1.0, float(np.abs(E).max(initial=0.0)))
    if np.abs(E - np.swapaxes(E, -1, -2)).max(initial=0.0) > _TRACE_TOL * scale:
        raise DomainError("E must be symmetric")
    return E


def _offsets(a, x):
    d = np.asarray(x, dtype=float) - np.asarray(a, dtype=float)
    r = np.sqrt(np.einsum("...k,...k->...", d, d))
    if np.any(r == 0.0):
        raise SingularityError("evaluation point coincides with the sphere centre")
    return d, r


def _pack(u, G, p, inside, single):
    if single:
        return KernelSample(u[0], G[0], float(p[0]), bool(inside[0]))
    return KernelSample(u, G, p, inside)


def _prepare(a, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    d, r = _offsets(a, np.atleast_2d(x))
    return d, r, single


# ------------------------------------------------------------ Oseen tensor

def oseen(x) -> np.ndarray:
    """Oseen tensor Φ(x) = (1/8π)(I/|x| + x⊗x/|x|³), broadcast over leading axes."""
    x = np.asarray(x, dtype=float)
    r = np.sqrt(np.einsum("...k,...k->...", x, x))
    if np.any(r == 0.0):
        raise SingularityError("Oseen tensor is singular at the origin")
    r = r[..., None, None]
    return _INV8PI * (_EYE / r + x[..., :, None] * x[..., None, :] / r**3)


def oseen_eval(x):
    """Return (Φ, ∇Φ, ΔΦ) at a single nonzero point; ∇Φ[i, j, k] = ∂_k Φ_ij."""
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    if r == 0.0:
        raise SingularityError("Oseen tensor is singular at the origin")
    xx = np.outer(x, x)
    phi = _INV8PI * (_EYE / r + xx / r**3)
    grad = _INV8PI * (
        -np.einsum("ij,k->ijk", _EYE, x) / r**3
        + (np.einsum("ik,j->ijk", _EYE, x) + np.einsum("jk,i->ijk", _EYE, x)) / r**3
        - 3.0 * np.einsum("i,j,k->ijk", x, x, x) / r**5
    )
    lap = _INV8PI * (2.0 * _EYE / r**3 - 6.0 * xx / r**5)
    return phi, grad, lap


# --------------------------------------------------------- exterior fields

def stokeslet_fields(d, r, R, V):
    """Exterior stokeslet fields for offsets ``d`` (..., 3) with radii ``r``."""
    V = np.broadcast_to(np.asarray(V, dtype=float), d.shape)
    A = 0.75 * R / r + 0.25 * R**3 / r**3
    B = 0.75 * R / r**3 - 0.75 * R**3 / r**5
    dA = -0.75 * R / r**2 - 0.75 * R**3 / r**4
    dB = -2.25 * R / r**4 + 3.75 * R**3 / r**6
    dV = np.einsum("...k,...k->...", d, V)
    u = A[..., None] * V + (B * dV)[..., None] * d
    dhat = d / r[..., None]
    G = (
        dA[..., None, None] * V[..., :, None] * dhat[..., None, :]
        + (dB * dV)[..., None, None] * d[..., :, None] * dhat[..., None, :]
        + B[..., None, None] * (dV[..., None, None] * _EYE + d[..., :, None] * V[..., None, :])
    )
    p = 1.5 * R * dV / r**3
    return u, G, p


def rotlet_fields(d, r, R, omega):
    w = np.broadcast_to(np.asarray(omega, dtype=float), d.shape)
    wxd = np.cross(w, d)
    u = R**3 * wxd / r[..., None] ** 3
    G = R**3 * (
        skew(w) / r[..., None, None] ** 3
        - 3.0 * wxd[..., :, None] * d[..., None, :] / r[..., None, None] ** 5
    )
    return u, G, np.zeros(r.shape)


def strainlet_fields(d, r, R, E):
    E = np.broadcast_to(np.asarray(E, dtype=float), d.shape + (3,))
    Ed = np.einsum("...ij,...j->...i", E, d)
    q = np.einsum("...i,...i->...", d, Ed)
    alpha = R**5 / r**5
    beta = 2.5 * (R**3 / r**5 - R**5 / r**7)
    dalpha = -5.0 * R**5 / r**6
    dbeta = 2.5 * (-5.0 * R**3 / r**6 + 7.0 * R**5 / r**8)
    u = alpha[..., None] * Ed + (beta * q)[..., None] * d
    dhat = d / r[..., None]
    G = (
        dalpha[..., None, None] * Ed[..., :, None] * dhat[..., None, :]
        + alpha[..., None, None] * E
        + (dbeta * q)[..., None, None] * d[..., :, None] * dhat[..., None, :]
        + beta[..., None, None] * (q[..., None, None] * _EYE + 2.0 * d[..., :, None] * Ed[..., None, :])
    )
    p = 5.0 * R**3 * q / r**5
    return u, G, p


# --------------------------------------------------------- public kernels

def stokeslet_eval(a, R, V, x) -> KernelSample:
    """Flow of a sphere translating with velocity V (rigid inside)."""
    d, r, single = _prepare(a, x)
    V = np.asarray(V, dtype=float)
    u, G, p = stokeslet_fields(d, r, R, V)
    inside = r < R
    if inside.any():
        u[inside] = V
        G[inside] = 0.0
        p[inside] = 0.0
    return _pack(u, G, p, inside, single)


def rotlet_eval(a, R, omega, x) -> KernelSample:
    """Flow of a sphere rotating with angular velocity ω (rigid rotation inside)."""
    d, r, single = _prepare(a, x)
    omega = np.asarray(omega, dtype=float)
    u, G, p = rotlet_fields(d, r, R, omega)
    inside = r < R
    if inside.any():
        u[inside] = np.cross(omega, d[inside])
        G[inside] = skew(omega)
    return _pack(u, G, p, inside, single)


def strainlet_eval(a, R, E, x) -> KernelSample:
    """Flow of a sphere whose surface follows the strain E·(x − a)."""
    E = _check_strain(E)
    d, r, single = _prepare(a, x)
    u, G, p = strainlet_fields(d, r, R, E)
    inside = r < R
    if inside.any():
        u[inside] = d[inside] @ E.T
        G[inside] = E
        p[inside] = 0.0
    return _pack(u, G, p, inside, single)


def combined_eval(a, R, D, x) -> KernelSample:
    """Rotlet of the skew part plus strainlet of the symmetric part of a trace-free D."""
    D = _check_trace_free(D, "D")
    rot = rotlet_eval(a, R, axial(D), x)
    st = strainlet_eval(a, R, sym(D), x)
    return KernelSample(
        rot.velocity + st.velocity,
        rot.velocity_gradient + st.velocity_gradient,
        rot.pressure + st.pressure,
        st.inside_flag,
    )


# -------------------------------------------------------------- tractions

def sphere_quadrature(n_theta: int, n_phi: int):
    """Unit normals and weights of a Gauss–Legendre × trapezoid rule on S²."""
    if n_theta < MIN_QUADRATURE[0] or n_phi < MIN_QUADRATURE[1]:
        raise DomainError(f"quadrature order must be at least {MIN_QUADRATURE}")
    mu, wmu = np.polynomial.legendre.leggauss(n_theta)
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    st = np.sqrt(1.0 - mu**2)
    n = np.stack(
        [np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)), np.outer(mu, np.ones(n_phi))],
        axis=-1,
    ).reshape(-1, 3)
    w = np.outer(wmu, np.full(n_phi, 2.0 * math.pi / n_phi)).ravel()
    return n, w


_FIELDS = {
    "stokeslet": stokeslet_fields,
    "rotlet": rotlet_fields,
    "strainlet": strainlet_fields,
}


def traction_integrals(kind: str, param, a, R, order=DEFAULT_QUADRATURE) -> TractionSummary:
    """Integrate the fluid traction σn over the sphere surface.

    ``kind`` is one of ``stokeslet`` (param V), ``rotlet`` (param ω),
    ``strainlet`` (param E) or ``combined`` (param trace-free D), with
    σ = ∇u + ∇uᵀ − pI and n the outward normal. Returned quantities:

    * force ∫σn and torque ∫(x − a)×σn;
    * first moment M = ∫(x − a)⊗σn;
    * stresslet S = sym M − (tr M/3)I − ∫(u⊗n + n⊗u), the usual
      definition for a surface moving with velocity u. The velocity term
      vanishes for rigid motions, so S = sym M for stokeslets and rotlets,
      while a straining surface picks up the correction (8π/3)R³E.
    """
    n, w = sphere_quadrature(*order)
    d = R * n
    r = np.full(n.shape[0], float(R))
    if kind == "combined":
        D = _check_trace_free(param, "D")
        u1, G1, p1 = rotlet_fields(d, r, R, axial(D))
        u2, G2, p2 = strainlet_fields(d, r, R, sym(D))
        u, G, p = u1 + u2, G1 + G2, p1 + p2
    elif kind in _FIELDS:
        if kind == "strainlet":
            param = _check_strain(param)
        u, G, p = _FIELDS[kind](d, r, R, param)
    else:
        raise DomainError(f"unknown solution kind {kind!r}")
    sigma = G + np.swapaxes(G, -1, -2) - p[:, None, None] * _EYE
    t = np.einsum("qij,qj->qi", sigma, n)
    wa = w * R**2
    F = wa @ t
    T = wa @ np.cross(d, t)
    M = np.einsum("q,qi,qj->ij", wa, d, t)
    un = np.einsum("q,qi,qj->ij", wa, u, n)
    S = sym(M) - np.trace(M) / 3.0 * _EYE - (un + un.T)
    return TractionSummary(F, T, S, M)


# ------------------------------------------------ truncation and bump field

def smoothstep(t):
    """C¹ cubic ramp 3t² − 2t³ clipped to [0, 1]."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


@dataclass(frozen=True)
class TruncationProfile:
    r_inner: float
    r_outer: float

    @classmethod
    def from_dmin(cls, d0: float) -> "TruncationProfile":
        if not d0 > 0:
            raise DomainError("d_min must be positive")
        return cls(d0 / 4.0, d0 / 2.0)

    def __post_init__(self):
        if not 0 < self.r_inner < self.r_outer:
            raise DomainError("need 0 < r_inner < r_outer")

    def ramp(self, rad):
        return smoothstep((np.asarray(rad, dtype=float) - self.r_inner) / (self.r_outer - self.r_inner))


def truncated_oseen_eval(x, profile: TruncationProfile) -> np.ndarray:
    """ψ(x)Φ(x): zero near the origin, equal to Φ beyond ``r_outer``."""
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    if r <= profile.r_inner:
        return np.zeros((3, 3))
    phi = oseen(x)
    if r >= profile.r_outer:
        return phi
    return float(profile.ramp(r)) * phi


def cutoff_chi(s):
    """Radial cutoff: 1 on [0, 1], C¹ cubic descent on [1, 2], 0 beyond."""
    return 1.0 - smoothstep(np.asarray(s, dtype=float) - 1.0)


def cutoff_chi_prime(s):
    t = np.clip(np.asarray(s, dtype=float) - 1.0, 0.0, 1.0)
    return -6.0 * t * (1.0 - t)


@dataclass(frozen=True)
class BumpFieldSpec:
    """Centres, common radius and coefficient vectors of the bump field."""

    centers: np.ndarray
    R: float
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        e = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if c.shape != e.shape or c.shape[1] != 3:
            raise DomainError("centers and coeffs must both have shape (N, 3)")
        if not self.R > 0:
            raise DomainError("R must be positive")
        if c.shape[0] > 1:
            from .cloud import min_distance

            if min_distance(c).distance < 4.0 * self.R:
                raise DomainError("bump supports B(x_i, 2R) overlap")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "coeffs", e)


def bump_field_eval(spec: BumpFieldSpec, x) -> np.ndarray:
    """Divergence-free field equal to E_i near each x_i and zero away from the spheres.

    Each term is curl(χ(y/R) E_i × y/2) with y = x − x_i, which expands to
    χ(s)E_i + (s χ'(s)/2)(E_i − ŷ(ŷ·E_i)) with s = |y|/R.
    """
    x = np.asarray(x, dtype=float)
    pts = np.atleast_2d(x)
    out = np.zeros_like(pts)
    for c, E in zip(spec.centers, spec.coeffs):
        y = pts - c
        r = np.sqrt(np.einsum("ij,ij->i", y, y))
        near = r < 2.0 * spec.R
        if not near.any():
            continue
        yn, rn = y[near], r[near]
        s = rn / spec.R
        val = cutoff_chi(s)[:, None] * E
        mid = rn > spec.R
        if mid.any():
            yh = yn[mid] / rn[mid, None]
            fac = 0.5 * s[mid] * cutoff_chi_prime(s[mid])
            val[mid] += fac[:, None] * (E - yh * (yh @ E)[:, None])
        out[near] += val
    return out[0] if x.ndim == 1 else out
