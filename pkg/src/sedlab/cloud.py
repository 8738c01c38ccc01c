"""Particle clouds and the geometric diagnostics of the dilute regime.

A cloud holds N identical spheres of radius R = r0/N. The diagnostics
measure how spread out the centers are: minimal distance, ℓ∞-box
concentration counts and the discrete Riemann sums that control the
interaction series.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import CapabilityError, DomainError

EXACT_SCAN_MAX = 2048
EXACT_M_CAP = 512
DEFAULT_JO_CONSTANT = 16.0
# Relative slack used when testing closed ℓ∞ boxes, so that points sitting
# exactly on a face are not lost to rounding.
_BOX_RTOL = 1e-12


@dataclass(frozen=True)
class ParticleCloud:
    """N spheres of radius r0/N centred at ``positions`` (shape (N, 3))."""

    positions: np.ndarray
    r0: float
    time: float = 0.0

    def __post_init__(self):
        x = np.array(self.positions, dtype=float)
        if x.ndim != 2 or x.shape[1] != 3 or x.shape[0] < 1:
            raise DomainError("positions must have shape (N, 3) with N >= 1")
        if not np.all(np.isfinite(x)):
            raise DomainError("positions must be finite")
        if not self.r0 > 0:
            raise DomainError("r0 must be positive")
        x.setflags(write=False)
        object.__setattr__(self, "positions", x)
        if x.shape[0] >= 2 and min_distance(self).distance == 0.0:
            raise DomainError("positions must be pairwise distinct")

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    @property
    def R(self) -> float:
        return self.r0 / self.N

    def overlaps(self) -> bool:
        """True when some pair of spheres overlaps (distance <= 2R)."""
        if self.N < 2:
            return False
        return min_distance(self).distance <= 2.0 * self.R

    def with_positions(self, positions, time=None) -> "ParticleCloud":
        return ParticleCloud(positions, self.r0, self.time if time is None else time)


@dataclass(frozen=True)
class MinDistance:
    distance: float
    pair: tuple


@dataclass(frozen=True)
class CloudDiagnostics:
    d_min: float
    lam: float
    L_concentration: int
    M_lower: int
    M_upper: int
    M_exact: int | None
    ratio_Mbar: float
    ratio_E: float
    compatibility_ok: bool


@dataclass(frozen=True)
class AdmissibilityReport:
    Mbar_budget: float
    E_budget: float
    holds_bound_concentration: bool
    holds_hyp1: bool
    holds_compatibility: bool
    smallness_product: float
    implied_dmin_lower: float
    diagnostics: CloudDiagnostics = field(repr=False)

    @property
    def admissible(self) -> bool:
        return self.holds_bound_concentration and self.holds_hyp1 and self.holds_compatibility


def _as_points(cloud) -> np.ndarray:
    if isinstance(cloud, ParticleCloud):
        return cloud.positions
    return np.asarray(cloud, dtype=float)


def pairwise_distances(x: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - x[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def min_distance(cloud) -> MinDistance:
    """Exact minimum Euclidean distance between distinct centres.

    An O(N²) scan is used up to ``EXACT_SCAN_MAX`` points; beyond that a
    k-d tree nearest-neighbour query gives the same exact value.
    """
    x = _as_points(cloud)
    n = x.shape[0]
    if n < 2:
        raise DomainError("min_distance needs at least two particles")
    if n <= EXACT_SCAN_MAX:
        return _min_distance_scan(x)
    return _min_distance_tree(x)


def _min_distance_scan(x):
    n = x.shape[0]
    best, pair = math.inf, (0, 1)
    block = 256
    for start in range(0, n, block):
        stop = min(n, start + block)
        diff = x[start:stop, None, :] - x[None, :, :]
        d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        rows = np.arange(start, stop)
        d[rows - start, rows] = np.inf
        k = int(np.argmin(d))
        i, j = divmod(k, n)
        if d[i, j] < best:
            best = float(d[i, j])
            a, b = start + i, j
            pair = (min(a, b), max(a, b))
    return MinDistance(best, pair)


def _min_distance_tree(x):
    tree = cKDTree(x)
    d, idx = tree.query(x, k=2)
    i = int(np.argmin(d[:, 1]))
    j = int(idx[i, 1])
    return MinDistance(float(d[i, 1]), (min(i, j), max(i, j)))


def _linf_neighbour_counts(x, lam):
    n = x.shape[0]
    thr = lam * (1.0 + _BOX_RTOL)
    counts = np.empty(n, dtype=np.int64)
    block = 256
    for start in range(0, n, block):
        stop = min(n, start + block)
        diff = np.abs(x[start:stop, None, :] - x[None, :, :]).max(axis=2)
        counts[start:stop] = (diff <= thr).sum(axis=1)
    return counts


def concentration_L(cloud, beta_lambda: float) -> int:
    """Largest number of centres (self included) in a closed ℓ∞ ball of radius λ around a centre."""
    if not beta_lambda > 0:
        raise DomainError("lambda must be positive")
    x = _as_points(cloud)
    return int(_linf_neighbour_counts(x, beta_lambda).max())


def _window_max(sorted_vals, width):
    """Max number of sorted values lying in a closed window [v, v + width]."""
    hi = np.searchsorted(sorted_vals, sorted_vals + width, side="right")
    return int((hi - np.arange(sorted_vals.size)).max())


def concentration_M_exact(x: np.ndarray, lam: float) -> int:
    """Exact sup over box positions of the count in a closed ℓ∞ box of half-width λ.

    Any optimal box can be slid so that, on each axis, its lower face
    touches a particle coordinate. We enumerate those lower faces on the
    first two axes and solve the last axis with a sorted sliding window.
    """
    width = 2.0 * lam * (1.0 + _BOX_RTOL)
    best = 1
    xs = np.unique(x[:, 0])
    for a in xs:
        slab = x[(x[:, 0] >= a) & (x[:, 0] <= a + width)]
        if slab.shape[0] <= best:
            continue
        for b in np.unique(slab[:, 1]):
            col = slab[(slab[:, 1] >= b) & (slab[:, 1] <= b + width), 2]
            if col.size <= best:
                continue
            best = max(best, _window_max(np.sort(col), width))
    return best


def concentration_M(cloud, lam: float, exact: bool = False, cap: int = EXACT_M_CAP):
    """Return ``(lower, upper, exact)`` bounds on the box concentration M.

    ``lower`` is L, ``upper`` is 8L, ``exact`` is None unless requested.
    """
    if not lam > 0:
        raise DomainError("lambda must be positive")
    x = _as_points(cloud)
    lower = concentration_L(x, lam)
    upper = 8 * lower
    m = None
    if exact:
        if x.shape[0] > cap:
            raise CapabilityError(f"exact M limited to N <= {cap}, got {x.shape[0]}")
        m = concentration_M_exact(x, lam)
    return lower, upper, m


def scaled_concentration_check(cloud, lam: float, alpha: float, beta: float) -> dict:
    """Compare L at radius αβλ with the bound 8⌈α⌉³ L at radius βλ."""
    if not alpha > 1 or not beta > 0:
        raise DomainError("need alpha > 1 and beta > 0")
    L_ab = concentration_L(cloud, alpha * beta * lam)
    L_b = concentration_L(cloud, beta * lam)
    bound = 8 * math.ceil(alpha) ** 3 * L_b
    return {"L_alpha_beta": L_ab, "L_beta": L_b, "bound": bound, "holds": L_ab <= bound}


def diagnostics(cloud: ParticleCloud, lam: float, exact: bool = False) -> CloudDiagnostics:
    if not lam > 0:
        raise DomainError("lambda must be positive")
    n = cloud.N
    dmin = min_distance(cloud).distance
    lower, upper, m = concentration_M(cloud, lam, exact=exact)
    return CloudDiagnostics(
        d_min=dmin,
        lam=lam,
        L_concentration=lower,
        M_lower=lower,
        M_upper=upper,
        M_exact=m,
        ratio_Mbar=upper / (n * lam**3),
        ratio_E=lam**3 / dmin**2,
        compatibility_ok=lam >= dmin / 2,
    )


def admissibility(cloud: ParticleCloud, lam: float, Mbar: float, E: float) -> AdmissibilityReport:
    """Check the three regime inequalities, using the conservative M = 8L."""
    if not (lam > 0 and Mbar > 0 and E > 0):
        raise DomainError("lambda, Mbar and E must be positive")
    diag = diagnostics(cloud, lam)
    return AdmissibilityReport(
        Mbar_budget=Mbar,
        E_budget=E,
        holds_bound_concentration=diag.ratio_Mbar <= Mbar,
        holds_hyp1=diag.ratio_E <= E,
        holds_compatibility=diag.compatibility_ok,
        smallness_product=Mbar ** (1.0 / 3.0) * cloud.r0,
        implied_dmin_lower=(E * Mbar) ** -0.5 * cloud.N ** -0.5,
        diagnostics=diag,
    )


def choose_lambda(cloud: ParticleCloud, policy: str = "half_dmin_floor", value: float | None = None):
    """Pick the box half-width λ for a concrete cloud.

    Policies: ``fixed`` (uses ``value``), ``cube_root`` (N^{-1/3}) and
    ``half_dmin_floor`` (max(d_min/2, N^{-1/3})). Returns ``(lam, ok)``
    where ``ok`` says whether λ ≥ d_min/2; a warning is emitted otherwise.
    """
    n = cloud.N
    if n < 2:
        raise DomainError("choose_lambda needs at least two particles")
    dmin = min_distance(cloud).distance
    if policy == "fixed":
        if value is None or not value > 0:
            raise DomainError("fixed lambda must be positive")
        lam = float(value)
    elif policy == "cube_root":
        lam = n ** (-1.0 / 3.0)
    elif policy == "half_dmin_floor":
        lam = max(dmin / 2.0, n ** (-1.0 / 3.0))
    else:
        raise DomainError(f"unknown lambda policy {policy!r}")
    ok = lam >= dmin / 2.0
    if not ok:
        warnings.warn(f"lambda={lam:g} is below d_min/2={dmin / 2:g}", stacklevel=2)
    return lam, ok


def smoothed_density_eval(cloud, lam: float, x) -> np.ndarray:
    """Box-smoothed empirical density (1/N)Σ 1{|x−x_i|∞ ≤ λ/3}/(2λ/3)³.

    ``x`` may be a single point or an array of points of shape (..., 3).
    """
    if not lam > 0:
        raise DomainError("lambda must be positive")
    pts = _as_points(cloud)
    q = np.asarray(x, dtype=float)
    flat = q.reshape(-1, 3)
    h = lam / 3.0
    vol = (2.0 * h) ** 3
    out = np.empty(flat.shape[0])
    block = 4096
    for s in range(0, flat.shape[0], block):
        d = np.abs(flat[s : s + block, None, :] - pts[None, :, :]).max(axis=2)
        out[s : s + block] = (d <= h).sum(axis=1)
    out /= pts.shape[0] * vol
    return out.reshape(q.shape[:-1]) if q.ndim > 1 else out[0]


def riemann_sums(cloud, k: float) -> np.ndarray:
    """Per-particle sums (1/N)Σ_{j≠i} |x_i − x_j|^{-k}."""
    x = _as_points(cloud)
    n = x.shape[0]
    out = np.empty(n)
    block = 256
    for s in range(0, n, block):
        diff = x[s : s + block, None, :] - x[None, :, :]
        d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        rows = np.arange(s, min(n, s + block))
        d[rows - s, rows] = np.inf
        out[s : s + block] = (d ** (-float(k))).sum(axis=1) if k != 0 else (np.isfinite(d)).sum(axis=1)
    return out / n


def riemann_sum_check(cloud, k: float, lam: float, Mbar: float, C: float = DEFAULT_JO_CONSTANT) -> dict:
    """Compare max_i (1/N)Σ_{j≠i} d_ij^{-k} with the discrete Riemann-sum bound.

    For 0 ≤ k ≤ 2 the bound is C·M̄λ³/d_min^k + M̄^{k/3}; for k = 3 it is
    C·M̄(λ³/d_min³ + |log(M̄^{1/3}λ)| + 1). The result also carries the
    smallest constant that would make the check pass.
    """
    if not ((0 <= k <= 2) or k == 3):
        raise DomainError("k must lie in [0, 2] or equal 3")
    if not (lam > 0 and Mbar > 0 and C > 0):
        raise DomainError("lambda, Mbar and C must be positive")
    x = _as_points(cloud)
    dmin = min_distance(x).distance
    lhs = float(riemann_sums(x, k).max())
    if k == 3:
        base = Mbar * (lam**3 / dmin**3 + abs(math.log(Mbar ** (1.0 / 3.0) * lam)) + 1.0)
        rhs = C * base
        c_min = lhs / base
    else:
        base = Mbar * lam**3 / dmin**k
        tail = Mbar ** (k / 3.0)
        rhs = C * base + tail
        c_min = max(0.0, (lhs - tail) / base)
    return {"k": k, "lhs": lhs, "rhs": rhs, "holds": lhs <= rhs, "C": C, "C_min": c_min}
