"""Time integration of the particle positions and runtime certificates.

Positions follow ẋ_i = V_i, where V_i solves the mobility problem for the
current configuration. The certificate tracks how far the cloud drifts
from its initial separation and concentration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cloud import ParticleCloud, concentration_M, min_distance, pairwise_distances
from .errors import DomainError, IterationDivergenceError, OverlapError
from .reflections import BodyKinematics, pairwise_lipschitz_report, solve_velocities

SCHEMES = ("euler", "rk2", "rk4")
SOLVERS = ("first-order", "reflections", "dense")
DMIN_THRESHOLD = 0.5
M_THRESHOLD = 8.0**4


@dataclass(frozen=True)
class Snapshot:
    time: float
    cloud: ParticleCloud
    kinematics: BodyKinematics
    d_min: float
    L: int
    M: int


@dataclass
class Trajectory:
    snapshots: list = field(default_factory=list)
    scheme: str = "rk4"
    dt: float = 0.0
    solver: str = "first-order"
    lam: float = 0.0
    status: str = "ok"
    error: str | None = None

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])


@dataclass(frozen=True)
class Theorem1Certificate:
    dmin_ratio_series: np.ndarray
    M_ratio_series: np.ndarray
    min_dmin_ratio: float
    max_M_ratio: float
    dmin_pass: bool
    M_pass: bool
    C_hat: float
    horizon: float
    pairwise_gronwall_ok: bool

    @property
    def passed(self) -> bool:
        return self.dmin_pass and self.M_pass


def _velocity(cloud, gravity, solver, solver_opts):
    return solve_velocities(cloud, gravity, solver, **(solver_opts or {})).V


def _check_overlap(cloud: ParticleCloud):
    if cloud.N < 2:
        return
    md = min_distance(cloud)
    if md.distance <= 2.0 * cloud.R:
        raise OverlapError(f"spheres {md.pair} overlap (distance {md.distance:.3g})",
                           pair=md.pair, distance=md.distance)


def step(cloud: ParticleCloud, gravity, solver: str = "first-order", dt: float = 1e-2,
         scheme: str = "rk4", solver_opts=None, V0=None) -> ParticleCloud:
    """Advance positions by one explicit step of size ``dt``.

    ``V0`` may carry the already computed velocities at the start of the step.
    """
    if not dt > 0:
        raise DomainError("dt must be positive")
    if solver not in SOLVERS:
        raise DomainError(f"unknown solver {solver!r}")
    if scheme not in SCHEMES:
        raise DomainError(f"unknown scheme {scheme!r}")
    x = cloud.positions

    def vel(c):
        # Intermediate stages can overlap before the step completes.
        _check_overlap(c)
        return _velocity(c, gravity, solver, solver_opts)

    k1 = vel(cloud) if V0 is None else V0
    if scheme == "euler":
        xn = x + dt * k1
    elif scheme == "rk2":
        k2 = vel(cloud.with_positions(x + 0.5 * dt * k1))
        xn = x + dt * k2
    else:
        k2 = vel(cloud.with_positions(x + 0.5 * dt * k1))
        k3 = vel(cloud.with_positions(x + 0.5 * dt * k2))
        k4 = vel(cloud.with_positions(x + dt * k3))
        xn = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    out = cloud.with_positions(xn, time=cloud.time + dt)
    _check_overlap(out)
    return out


def _snapshot(cloud, kin, lam, exact_M):
    if cloud.N >= 2:
        dmin = min_distance(cloud).distance
        L, upper, m = concentration_M(cloud, lam, exact=exact_M)
        M = m if exact_M else upper
    else:
        dmin, L, M = math.inf, 1, 8 if not exact_M else 1
    return Snapshot(cloud.time, cloud, kin, dmin, L, M)


def simulate(cloud: ParticleCloud, gravity, T: float, dt: float, solver: str = "first-order",
             scheme: str = "rk4", stride: int = 1, lam: float | None = None, exact_M: bool = False,
             solver_opts=None) -> Trajectory:
    """Integrate on [0, T] with fixed step ``dt``, recording every ``stride`` steps.

    Overlaps and solver divergence stop the run; the partial trajectory is
    returned with ``status`` set and the error message stored.
    """
    if not (T >= 0 and dt > 0 and stride >= 1):
        raise DomainError("need T >= 0, dt > 0 and stride >= 1")
    _check_overlap(cloud)
    if lam is None:
        lam = cloud.N ** (-1.0 / 3.0) if cloud.N < 2 else max(
            min_distance(cloud).distance / 2.0, cloud.N ** (-1.0 / 3.0))
    traj = Trajectory(scheme=scheme, dt=dt, solver=solver, lam=lam)
    nsteps = int(round(T / dt))
    kin = solve_velocities(cloud, gravity, solver, **(solver_opts or {}))
    traj.snapshots.append(_snapshot(cloud, kin, lam, exact_M))
    t0 = cloud.time
    for k in range(1, nsteps + 1):
        try:
            nxt = step(cloud, gravity, solver, dt, scheme, solver_opts, V0=kin.V)
            nxt = nxt.with_positions(nxt.positions, time=t0 + k * dt)
            kin = solve_velocities(nxt, gravity, solver, **(solver_opts or {}))
        except OverlapError as exc:
            traj.status, traj.error = "overlap", str(exc)
            return traj
        except (IterationDivergenceError, DomainError) as exc:
            traj.status, traj.error = "solver-failure", str(exc)
            return traj
        cloud = nxt
        if k % stride == 0 or k == nsteps:
            traj.snapshots.append(_snapshot(cloud, kin, lam, exact_M))
    return traj


def theorem1_certificate(traj: Trajectory) -> Theorem1Certificate:
    """Ratio series d_min(t)/d_min(0), M(t)/M(0), the fitted Ĉ and the per-pair bound."""
    snaps = traj.snapshots
    if not snaps:
        raise DomainError("empty trajectory")
    first = snaps[0]
    n = first.cloud.N
    if n < 2:
        ones = np.ones(len(snaps))
        return Theorem1Certificate(ones, ones, 1.0, 1.0, True, True, 0.0, math.inf, True)
    dr = np.array([s.d_min / first.d_min for s in snaps])
    mr = np.array([s.M / first.M for s in snaps])
    C_hat = max(pairwise_lipschitz_report(s.cloud, s.kinematics.V)[0] for s in snaps)
    horizon = math.log(2.0) / C_hat if C_hat > 0 else math.inf
    d0 = pairwise_distances(first.cloud.positions)
    ok = True
    for s in snaps[1:]:
        t = s.time - first.time
        dt_ = pairwise_distances(s.cloud.positions)
        # Small relative slack for rounding in the recomputed distances.
        if np.any(dt_ < d0 * math.exp(-C_hat * t) * (1.0 - 1e-12)):
            ok = False
            break
    return Theorem1Certificate(
        dmin_ratio_series=dr,
        M_ratio_series=mr,
        min_dmin_ratio=float(dr.min()),
        max_M_ratio=float(mr.max()),
        dmin_pass=bool(dr.min() >= DMIN_THRESHOLD),
        M_pass=bool(mr.max() <= M_THRESHOLD),
        C_hat=float(C_hat),
        horizon=horizon,
        pairwise_gronwall_ok=ok,
    )
