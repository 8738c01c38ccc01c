"""Fast property checks across all modules, summarised as JSON.

Every check returns ``(max_error, tolerance)``; a check passes when the error
is finite and within tolerance, and an exception inside a check is recorded
as a failure instead of propagating. ``overrides`` replaces kernel
evaluators by name so that the checks themselves can be tested against
deliberately corrupted kernels.
"""
from __future__ import annotations

import math

import numpy as np

from . import kernels

KERNEL_NAMES = ("stokeslet_eval", "rotlet_eval", "strainlet_eval")


def _random_strain(rng):
    A = rng.standard_normal((3, 3))
    E = 0.5 * (A + A.T)
    return E - np.trace(E) / 3.0 * np.eye(3)


def _sphere_points(rng, n, R, a):
    v = rng.standard_normal((n, 3))
    return a + R * v / np.linalg.norm(v, axis=1, keepdims=True)


def _exterior_points(rng, n, R, a):
    v = rng.standard_normal((n, 3))
    rad = R * rng.uniform(1.2, 6.0, size=n)
    return a + rad[:, None] * v / np.linalg.norm(v, axis=1, keepdims=True)


def _cases(rng, K):
    """(name, evaluator, parameter, boundary velocity at surface offset d)."""
    V = rng.standard_normal(3)
    w = rng.standard_normal(3)
    E = _random_strain(rng)
    return [
        ("stokeslet", K["stokeslet_eval"], V, lambda d: np.broadcast_to(V, d.shape)),
        ("rotlet", K["rotlet_eval"], w, lambda d: np.cross(w, d)),
        ("strainlet", K["strainlet_eval"], E, lambda d: d @ E.T),
    ]


def kernel_checks(K, rng) -> dict:
    R, a = 0.7, np.array([0.3, -0.2, 0.5])
    out = {}
    xs = _sphere_points(rng, 100, R, a)
    xe = _exterior_points(rng, 200, R, a)
    h = 1e-5
    for name, ev, prm, wall in _cases(rng, K):
        s = ev(a, R, prm, xs)
        scale = max(1.0, float(np.abs(wall(xs - a)).max()))
        out[f"{name}_boundary"] = (float(np.abs(s.velocity - wall(xs - a)).max()) / scale, 1e-12)
        se = ev(a, R, prm, xe)
        out[f"{name}_divergence"] = (float(np.abs(np.trace(se.velocity_gradient, axis1=1, axis2=2)).max()), 1e-10)
        lap = np.zeros_like(se.velocity)
        gradp = np.zeros_like(se.velocity)
        gerr = 0.0
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            sp, sm = ev(a, R, prm, xe + e), ev(a, R, prm, xe - e)
            lap += (sp.velocity_gradient[:, :, j] - sm.velocity_gradient[:, :, j]) / (2 * h)
            gradp[:, j] = (sp.pressure - sm.pressure) / (2 * h)
            fd = (sp.velocity - sm.velocity) / (2 * h)
            gerr = max(gerr, float(np.abs(fd - se.velocity_gradient[:, :, j]).max()))
        gscale = float(np.abs(se.velocity_gradient).max())
        out[f"{name}_gradient_fd"] = (gerr / gscale, 1e-6)
        res = -lap + gradp
        out[f"{name}_momentum"] = (float(np.abs(res).max()) / max(float(np.abs(gradp).max()), gscale / R), 1e-4)
    V = rng.standard_normal(3)
    w = rng.standard_normal(3)
    E = _random_strain(rng)
    order = (24, 48)
    F = kernels.traction_integrals("stokeslet", V, a, R, order).force
    T = kernels.traction_integrals("rotlet", w, a, R, order).torque
    S = kernels.traction_integrals("strainlet", E, a, R, order).stresslet
    out["stokeslet_force"] = (float(np.abs(F + 6 * math.pi * R * V).max() / np.abs(6 * math.pi * R * V).max()), 1e-8)
    out["rotlet_torque"] = (float(np.abs(T + 8 * math.pi * R**3 * w).max() / np.abs(8 * math.pi * R**3 * w).max()), 1e-8)
    ref = -20.0 / 3.0 * math.pi * R**3 * E
    out["strainlet_stresslet"] = (float(np.abs(S - ref).max() / np.abs(ref).max()), 1e-8)
    return out


def field_checks(rng) -> dict:
    from .cloud import min_distance

    R = 0.05
    c = rng.uniform(0, 1, size=(6, 3))
    while min_distance(c).distance < 4 * R:
        c = rng.uniform(0, 1, size=(6, 3))
    coeffs = rng.standard_normal((6, 3))
    spec = kernels.BumpFieldSpec(c, R, coeffs)
    interp = float(np.abs(kernels.bump_field_eval(spec, c) - coeffs).max())
    far = c[0] + np.array([2.05 * R, 0.0, 0.0])
    away = np.all(np.linalg.norm(far - c, axis=1) > 2 * R)
    support = float(np.abs(kernels.bump_field_eval(spec, far)).max()) if away else 0.0
    h = 1e-6
    pts = c[0] + 1.5 * R * rng.uniform(-1, 1, size=(50, 3))
    div = np.zeros(50)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        div += (kernels.bump_field_eval(spec, pts + e)[:, j] - kernels.bump_field_eval(spec, pts - e)[:, j]) / (2 * h)
    return {"bump_interpolation": (interp, 1e-14), "bump_support": (support, 0.0),
            "bump_divergence": (float(np.abs(div).max()), 1e-6 * float(np.abs(coeffs).max()) / R)}


def cloud_checks(rng) -> dict:
    from .cloud import concentration_L, concentration_M_exact, min_distance, pairwise_distances

    x = rng.uniform(0, 1, size=(60, 3))
    d = pairwise_distances(x)
    np.fill_diagonal(d, np.inf)
    md = abs(min_distance(x).distance - d.min())
    lam = 0.15
    L = concentration_L(x, lam)
    M = concentration_M_exact(x, lam)
    ok = 0.0 if L <= M <= 8 * L else 1.0
    return {"min_distance_bruteforce": (md, 1e-15), "L_le_M_le_8L": (ok, 0.0)}


def reflection_checks(rng) -> dict:
    from .cloud import ParticleCloud
    from .reflections import dense_mobility_solve, first_order_velocities, first_order_velocities_oseen, neumann_velocity_solve

    cloud = ParticleCloud(rng.uniform(0, 1, size=(20, 3)), 0.05)
    g = np.array([0.0, 0.0, -1.0])
    kin, _ = neumann_velocity_solve(cloud, g)
    dense = dense_mobility_solve(cloud, g)
    fo = first_order_velocities(cloud, g).V
    return {"reflections_vs_dense": (float(np.abs(kin.V - dense.V).max()), 1e-10),
            "first_order_vs_oseen": (float(np.abs(fo - first_order_velocities_oseen(cloud, g)).max()), 1e-12)}


def ot_checks(rng) -> dict:
    from .ot import DiscreteMeasure, w1_bruteforce, w1_exact, winf_bruteforce, winf_exact

    e1 = e2 = 0.0
    for _ in range(10):
        n = int(rng.integers(2, 6))
        mu = DiscreteMeasure.uniform(rng.standard_normal((n, 3)))
        nu = DiscreteMeasure.uniform(rng.standard_normal((n, 3)))
        e1 = max(e1, abs(w1_exact(mu, nu)[0] - w1_bruteforce(mu, nu)))
        e2 = max(e2, abs(winf_exact(mu, nu)[0] - winf_bruteforce(mu, nu)))
    return {"w1_bruteforce": (e1, 1e-9), "winf_bruteforce": (e2, 1e-12)}


def meanfield_checks(rng) -> dict:
    from .meanfield import Rho0Spec, advance, init_blobs

    d0 = init_blobs(Rho0Spec("bump", (0.0, 0.0, 0.0), 1.0), 12)
    d1 = advance(d0, np.array([0.0, 0.0, -1.0]), 0.1, 1.0)
    z = advance(d0, np.array([0.0, 0.0, -1.0]), 0.1, 0.0)
    drift = z.centers - (d0.centers + 0.1 * np.array([0.0, 0.0, -1.0]))
    return {"blob_mass": (abs(d1.mass - d0.mass), 1e-14),
            "zero_coupling_transport": (float(np.abs(drift).max()), 1e-14)}


def _summarise(groups: dict) -> dict:
    checks = {}
    for group, fn in groups.items():
        try:
            res = fn()
        except Exception as exc:  # a broken module is a failed check, not a crash
            checks[group] = {"error": f"{type(exc).__name__}: {exc}", "passed": False}
            continue
        for k, (err, tol) in res.items():
            checks[f"{group}.{k}"] = {"max_error": float(err), "tolerance": float(tol),
                                      "passed": bool(np.isfinite(err) and err <= tol)}
    return {"passed": all(c["passed"] for c in checks.values()), "checks": checks}


def kernels_selftest(seed: int = 0, overrides: dict | None = None) -> dict:
    """Kernel and bump-field property suite."""
    K = {name: getattr(kernels, name) for name in KERNEL_NAMES}
    K.update(overrides or {})
    rng = np.random.default_rng(seed)
    return _summarise({"kernels": lambda: kernel_checks(K, rng), "field": lambda: field_checks(rng)})


def selftest(seed: int = 0, overrides: dict | None = None) -> dict:
    """Every module's property suite; ``passed`` is False if any check fails."""
    K = {name: getattr(kernels, name) for name in KERNEL_NAMES}
    K.update(overrides or {})
    rng = np.random.default_rng(seed)
    return _summarise({
        "kernels": lambda: kernel_checks(K, rng),
        "field": lambda: field_checks(rng),
        "cloud": lambda: cloud_checks(rng),
        "reflections": lambda: reflection_checks(rng),
        "ot": lambda: ot_checks(rng),
        "meanfield": lambda: meanfield_checks(rng),
    })


def flipped_stokeslet(a, R, V, x):
    """Stokeslet with the sign of its decaying R³ term flipped; a fault for testing the checks."""
    d, r, single = kernels._prepare(a, x)
    V = np.asarray(V, dtype=float)
    u, G, p = kernels.stokeslet_fields(d, r, R, V)
    vd = d @ V
    # Remove twice the R³/4r³ (V − 3 d(V·d)/r²) part, which flips its sign.
    corr = R**3 / (4 * r**3)
    u = u - 2 * corr[:, None] * (V - 3 * d * (vd / r**2)[:, None])
    return kernels._pack(u, G, p, r < R, single)
