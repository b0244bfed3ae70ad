"""Exact and fine-grid reference solutions for error measurement.

Closed forms exist for linear advection (translation), symmetric linear
systems (characteristic decomposition), and pre-shock Burgers (method of
characteristics, solved per point by safeguarded Newton).  Where no
closed form exists the solver itself provides a reference on a mesh
refined by a factor of at least 8, flagged as numerical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConstructionError, HorizonError
from . import solver as _solver
from .mesh import Mesh, build_uniform_1d, build_uniform_quad_2d


@dataclass
class ReferenceSolution:
    kind: str
    eval: Callable              # (x, t) -> (..., m)
    valid_until: float
    lipschitz_bound: float
    params: dict = field(default_factory=dict)


def _wrap(y, lengths):
    return np.mod(y, np.asarray(lengths))


def _sampled_lipschitz(evalfn, domain, t_max, m, n_pts=200, seed=0):
    """Over-estimate of |grad u| + |du/dt| by sampled finite differences."""
    rng = np.random.default_rng(seed)
    d = len(domain)
    x = rng.uniform(0.0, np.asarray(domain), size=(n_pts, d))
    t_hi = 0.999 * (t_max if math.isfinite(t_max) else 1.0)
    ts = rng.uniform(0.0, max(t_hi - 1e-4, 1e-4), size=n_pts)
    hstep = 1e-5
    worst = 0.0
    for i in range(n_pts):
        xi, ti = x[i:i + 1], float(ts[i])
        ga = 0.0
        for a in range(d):
            e = np.zeros(d)
            e[a] = hstep
            diff = (evalfn(xi + e, ti) - evalfn(xi - e, ti)) / (2 * hstep)
            ga += float(np.abs(diff).max())
        tstep = 1e-5
        tlo, thi = max(0.0, ti - tstep), ti + tstep
        dtv = (evalfn(xi, thi) - evalfn(xi, tlo)) / (thi - tlo)
        worst = max(worst, ga + float(np.abs(dtv).max()))
    return 1.2 * worst


def exact_advection(speed_vector, u0, domain) -> ReferenceSolution:
    """u(x, t) = u0(x - c t) with periodic wrap."""
    c = np.atleast_1d(np.asarray(speed_vector, dtype=float))
    lengths = tuple(float(L) for L in domain)

    def evalfn(x, t):
        x = np.asarray(x, dtype=float)
        return u0(_wrap(x - c * t, lengths))

    lb = _sampled_lipschitz(evalfn, lengths, 1.0, m=1)
    return ReferenceSolution(kind="exact-advection", eval=evalfn,
                             valid_until=math.inf, lipschitz_bound=lb,
                             params={"speed": tuple(c)})


def exact_friedrichs(A, u0, domain) -> ReferenceSolution:
    """1D symmetric system: decouple along eigenvectors and transport.

    A = R diag(lam) R^T; each characteristic component of u0 translates
    with its own speed.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConstructionError("A must be square")
    if np.abs(A - A.T).max() > 1e-12:
        raise ConstructionError("A must be symmetric")
    lam, R = np.linalg.eigh(A)
    lengths = tuple(float(L) for L in domain)
    m = A.shape[0]

    def evalfn(x, t):
        x = np.asarray(x, dtype=float)
        comps = []
        for i in range(m):
            shifted = _wrap(x - lam[i] * t, lengths)
            w = u0(shifted) @ R  # characteristic components at shifted points
            comps.append(w[..., i])
        w_all = np.stack(comps, axis=-1)
        return w_all @ R.T

    lb = _sampled_lipschitz(evalfn, lengths, 1.0, m=m)
    return ReferenceSolution(kind="exact-friedrichs", eval=evalfn,
                             valid_until=math.inf, lipschitz_bound=lb,
                             params={"eigenvalues": lam.tolist()})


def exact_burgers(u0, u0_derivative, domain) -> ReferenceSolution:
    """Pre-shock Burgers by characteristics: solve y + u0(y) t = x.

    The horizon is 90% of the shock-formation time 1/max(0, -min u0');
    before it the characteristic map is strictly monotone and safeguarded
    Newton converges to residual 1e-13.
    """
    lengths = tuple(float(L) for L in domain)
    L = lengths[0]
    ygrid = np.linspace(0.0, L, 20001)
    slopes = np.asarray(u0_derivative(ygrid), dtype=float)
    min_slope = float(np.min(slopes))
    umax = float(np.max(np.abs(_scalar_eval(u0, ygrid))))
    if min_slope >= 0.0:
        horizon = math.inf
    else:
        horizon = 0.9 / (-min_slope)

    def evalfn(x, t):
        x = np.asarray(x, dtype=float)
        if t > horizon * (1 + 1e-12):
            raise HorizonError(f"t={t} exceeds the characteristics horizon {horizon}")
        xs = x[..., 0]
        y = xs - _scalar_eval(u0, xs) * t
        lo = xs - (umax + 1.0) * t - 1e-9
        hi = xs + (umax + 1.0) * t + 1e-9
        for _ in range(100):
            res = y + _scalar_eval(u0, y) * t - xs
            if float(np.abs(res).max()) <= 1e-13:
                break
            dg = 1.0 + np.asarray(u0_derivative(y), dtype=float) * t
            newton = y - res / dg
            # keep iterates inside the monotone bracket, bisect otherwise
            bad = (newton <= lo) | (newton >= hi) | ~np.isfinite(newton)
            lo = np.where(res < 0, y, lo)
            hi = np.where(res > 0, y, hi)
            y = np.where(bad, 0.5 * (lo + hi), newton)
        else:
            raise ConstructionError("characteristic solve did not converge")
        return _scalar_eval(u0, y)[..., None]

    lb = _sampled_lipschitz(evalfn, lengths,
                            horizon if math.isfinite(horizon) else 1.0, m=1)
    return ReferenceSolution(kind="exact-burgers-characteristics", eval=evalfn,
                             valid_until=horizon, lipschitz_bound=lb,
                             params={"shock_horizon": horizon})


def _scalar_eval(u0, x):
    """Evaluate a (...,1)-valued initial datum on bare coordinates."""
    vals = np.asarray(u0(np.asarray(x, dtype=float)[..., None]))
    return vals[..., 0]


def fine_grid_reference(mesh: Mesh, sys, scheme, u0, config,
                        refinement_factor: int = 8,
                        enforce_min_factor: bool = True) -> ReferenceSolution:
    """Run the same scheme on a refined uniform mesh and interpolate.

    Evaluation is piecewise-constant in space and in time (left limits),
    matching the shape of the approximation itself.  The reference is
    flagged as numerical; it shares the flux, so its error is correlated
    with the runs it judges.
    """
    if enforce_min_factor and refinement_factor < 8:
        raise ConstructionError("fine-grid reference needs refinement_factor >= 8")
    cfg = _solver.RunConfig(final_time=config.final_time,
                            cfl_mode=config.cfl_mode, zeta=config.zeta,
                            record_every=1,
                            check_admissibility=config.check_admissibility,
                            quadrature=config.quadrature)
    if mesh.dim == 1:
        n_fine = mesh.n_cells * refinement_factor
        fine = build_uniform_1d(n_fine, mesh.domain[0])
    else:
        nx = int(round(math.sqrt(mesh.n_cells)))
        fine = build_uniform_quad_2d(nx * refinement_factor,
                                     nx * refinement_factor,
                                     mesh.domain[0], mesh.domain[1])
    traj = _solver.run(fine, sys, scheme, u0, cfg)
    values = np.stack([f.values for _, f in traj.snapshots])  # (N+1, cells, m)
    dt = traj.dt
    T = config.final_time
    lengths = np.asarray(fine.domain)

    def evalfn(x, t):
        if t > T * (1 + 1e-12):
            raise HorizonError(f"fine-grid reference only covers [0, {T}]")
        k = min(traj.n_steps, int(np.floor(t / dt + 1e-12)))
        x = np.asarray(x, dtype=float)
        xi = np.mod(x, lengths)
        if fine.dim == 1:
            h = fine.domain[0] / fine.n_cells
            idx = np.minimum((xi[..., 0] / h).astype(int), fine.n_cells - 1)
        else:
            nside = int(round(math.sqrt(fine.n_cells)))
            hx = fine.domain[0] / nside
            hy = fine.domain[1] / nside
            ix = np.minimum((xi[..., 0] / hx).astype(int), nside - 1)
            iy = np.minimum((xi[..., 1] / hy).astype(int), nside - 1)
            idx = ix * nside + iy
        return values[k][idx]

    lb = _sampled_lipschitz(evalfn, fine.domain, T, m=sys.m)
    return ReferenceSolution(kind="fine-grid", eval=evalfn, valid_until=T,
                             lipschitz_bound=lb,
                             params={"numerical": True,
                                     "refinement_factor": refinement_factor,
                                     "fine_cells": fine.n_cells,
                                     "fine_dt": dt})
