"""Stability and error functionals for finite-volume runs.

The ledger accumulates, step by step, the interface weak-BV sums, the
entropy-flux and time variation sums, the worst discrete entropy residual,
the per-interface dissipation-gap slack, and the computable masses of the
time-variation error measures.  The initial-projection masses and the
relative-entropy error series are filled in from the trajectory.

All reductions fold over interfaces and cells in id order, so repeated
runs produce identical floating-point results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError
from .mesh import Mesh
from .numflux import FluxScheme, InterfaceFluxRecords
from .solver import cell_means
from .systems import StateField, SystemModel, relative_entropy

_GAUSS4_NODES = np.array([
    -0.8611363115940526, -0.3399810435848563,
    0.3399810435848563, 0.8611363115940526])
_GAUSS4_WEIGHTS = np.array([
    0.3478548451374538, 0.6521451548625461,
    0.6521451548625461, 0.3478548451374538])


@dataclass
class DiagnosticsLedger:
    """Running sums of the scheme's stability functionals."""

    wbv_sq: float = 0.0            # sum_n dt sum_e |sigma| |G - f(u_K).n|^2
    wbv_l1: float = 0.0            # sum_n dt sum_e |sigma| |G - f(u_K).n|
    entropy_flux_bv: float = 0.0   # sum_n dt sum_e |sigma| |xi_KL - xi(u_K).n|
    time_bv_u: float = 0.0         # sum_n sum_K |K| |u^{n+1} - u^n|
    time_bv_eta: float = 0.0       # sum_n sum_K |K| |eta^{n+1} - eta^n|
    entropy_residual_max: float = 0.0         # positive part, raw scale
    entropy_residual_max_scaled: float = 0.0  # residual * dt / |K|
    interface_measure_total: float = 0.0      # sum_n dt sum_e |sigma|
    min_gap_slack: float = math.inf           # min of gap - beta0/(2 lam*) defect^2
    gap_all_pass: bool = True
    mu0_mass: float = 0.0
    mu_t_mass: float = 0.0
    mu_bar0_mass: float = 0.0
    mu_bar_t_mass: float = 0.0
    rel_entropy_series: list = field(default_factory=list)  # [(t, value)]
    n_steps_accumulated: int = 0

    def to_dict(self):
        return {
            "wbv_sq": self.wbv_sq,
            "wbv_l1": self.wbv_l1,
            "entropy_flux_bv": self.entropy_flux_bv,
            "time_bv_u": self.time_bv_u,
            "time_bv_eta": self.time_bv_eta,
            "entropy_residual_max": self.entropy_residual_max,
            "entropy_residual_max_scaled": self.entropy_residual_max_scaled,
            "interface_measure_total": self.interface_measure_total,
            "min_gap_slack": self.min_gap_slack,
            "gap_all_pass": self.gap_all_pass,
            "mu0_mass": self.mu0_mass,
            "mu_t_mass": self.mu_t_mass,
            "mu_bar0_mass": self.mu_bar0_mass,
            "mu_bar_t_mass": self.mu_bar_t_mass,
            "rel_entropy_series": [[t, v] for t, v in self.rel_entropy_series],
            "n_steps_accumulated": self.n_steps_accumulated,
        }


@dataclass
class MeasureMasses:
    mu0: float
    mu_t: float
    mu_bar0: float
    mu_bar_t: float


@dataclass
class ConvergenceRow:
    h: float
    dt: float
    error_l2_spacetime: float
    wbv_l1: float
    wbv_sq: float
    mu0_mass: float
    mu_t_mass: float


@dataclass
class ConvergenceTable:
    rows: list
    fitted_rate: Optional[float] = None

    def __post_init__(self):
        hs = [r.h for r in self.rows]
        if any(h2 >= h1 for h1, h2 in zip(hs, hs[1:])):
            raise ConfigError("convergence rows must be sorted by decreasing h")


def make_ledger_hook(ledger: DiagnosticsLedger, mesh: Mesh, sys: SystemModel,
                     scheme: FluxScheme):
    """Solver hook folding each step into the ledger."""

    def hook(n, field_n, field_np1, records, dt):
        accumulate_step(ledger, mesh, sys, scheme, field_n, field_np1,
                        records, dt)

    return hook


def accumulate_step(ledger: DiagnosticsLedger, mesh: Mesh, sys: SystemModel,
                    scheme: FluxScheme, field_n: StateField,
                    field_np1: StateField, records: InterfaceFluxRecords,
                    dt: float) -> DiagnosticsLedger:
    """Add one step's interface and cell contributions to every ledger sum."""
    if field_n.values.shape[0] != mesh.n_cells or \
            field_np1.values.shape[0] != mesh.n_cells:
        raise ConfigError("state fields do not match the mesh")
    if records.g_value.shape[0] != mesh.n_interfaces:
        raise ConfigError("flux records do not match the mesh")

    areas = mesh.iface_areas
    vols = mesh.cell_volumes
    d = records.defect
    ledger.wbv_sq += dt * float((areas * d * d).sum())
    ledger.wbv_l1 += dt * float((areas * d).sum())
    ledger.interface_measure_total += dt * float(areas.sum())

    xi_left = sys.directional_entropy_flux(field_n.values[mesh.iface_left],
                                           mesh.iface_normals)
    ledger.entropy_flux_bv += dt * float(
        (areas * np.abs(records.xi_value - xi_left)).sum())

    du = field_np1.values - field_n.values
    du_norm = np.sqrt((du ** 2).sum(axis=-1))
    deta = np.abs(sys.entropy(field_np1.values) - sys.entropy(field_n.values))
    ledger.time_bv_u += float((vols * du_norm).sum())
    ledger.time_bv_eta += float((vols * deta).sum())
    ledger.mu_t_mass += dt * float((vols * deta).sum())
    ledger.mu_bar_t_mass += dt * float((vols * du_norm).sum())

    # discrete entropy residual: (|K|/dt)(eta^{n+1} - eta^n) + sum |sigma| xi_KL
    xi_div = np.zeros(mesh.n_cells)
    np.add.at(xi_div, mesh.iface_left, areas * records.xi_value)
    np.add.at(xi_div, mesh.iface_right, -areas * records.xi_value)
    resid = (vols / dt) * (sys.entropy(field_np1.values)
                           - sys.entropy(field_n.values)) + xi_div
    pos = float(resid.max())
    if pos > ledger.entropy_residual_max:
        ledger.entropy_residual_max = max(0.0, pos)
    scaled = float((resid * (dt / vols)).max())
    if scaled > ledger.entropy_residual_max_scaled:
        ledger.entropy_residual_max_scaled = max(0.0, scaled)

    # per-interface dissipation-gap inequality
    bound = (sys.beta0 / (2.0 * scheme.lambda_star)) * d * d
    slack = records.dissipation_gap - bound
    ledger.min_gap_slack = min(ledger.min_gap_slack, float(slack.min()))
    tol = 1e-10 * np.maximum(1.0, np.abs(records.dissipation_gap))
    ledger.gap_all_pass = bool(ledger.gap_all_pass
                               and np.all(slack >= -tol))

    ledger.n_steps_accumulated += 1
    return ledger


# ---------------------------------------------------------------------------
# measure masses
# ---------------------------------------------------------------------------

def _gauss4_cell_quadrature(mesh: Mesh):
    """Fixed Gauss-Legendre 4-point (per axis) rule for the mass integrals.

    Deliberately independent of the projection quadrature: with a midpoint
    mass rule and midpoint projection the integrand |eta(u0) - eta(u_K^0)|
    would vanish identically at the nodes.
    """
    if mesh.dim == 1:
        half = 0.5 * mesh.cell_volumes[:, None]
        pts = mesh.cell_centroids + half * _GAUSS4_NODES[None, :]
        return pts[..., None], half * _GAUSS4_WEIGHTS[None, :]
    if mesh.cell_vertices is None:
        raise ConfigError("2D measure masses need cell vertices")
    verts = np.stack([np.asarray(v) for v in mesh.cell_vertices])
    s, t = np.meshgrid(_GAUSS4_NODES, _GAUSS4_NODES, indexing="ij")
    ws, wt = np.meshgrid(_GAUSS4_WEIGHTS, _GAUSS4_WEIGHTS, indexing="ij")
    s, t, w = s.ravel(), t.ravel(), (ws * wt).ravel()
    shp = np.stack([(1 - s) * (1 - t), (1 + s) * (1 - t),
                    (1 + s) * (1 + t), (1 - s) * (1 + t)], axis=0) / 4.0
    d_s = np.stack([-(1 - t), (1 - t), (1 + t), -(1 + t)], axis=0) / 4.0
    d_t = np.stack([-(1 - s), -(1 + s), (1 + s), (1 - s)], axis=0) / 4.0
    pts = np.einsum("qp,nqi->npi", shp, verts)
    xs = np.einsum("qp,nqi->npi", d_s, verts)
    xt = np.einsum("qp,nqi->npi", d_t, verts)
    jac = np.abs(xs[..., 0] * xt[..., 1] - xs[..., 1] * xt[..., 0])
    return pts, jac * w[None, :]


def projection_masses(mesh: Mesh, sys: SystemModel, u0, field0: StateField,
                      cell_mask=None):
    """mu0 = integral |eta(u0) - eta(u^h(.,0))| and mu_bar0 with |u0 - u^h|."""
    pts, wts = _gauss4_cell_quadrature(mesh)
    vals = np.asarray(u0(pts), dtype=float)
    if vals.ndim == 2:
        vals = vals[..., None]
    eta_exact = sys.entropy(vals)
    eta_cell = sys.entropy(field0.values)[:, None]
    diff = vals - field0.values[:, None, :]
    per_cell_eta = (wts * np.abs(eta_exact - eta_cell)).sum(axis=1)
    per_cell_u = (wts * np.sqrt((diff ** 2).sum(axis=-1))).sum(axis=1)
    if cell_mask is not None:
        per_cell_eta = per_cell_eta[cell_mask]
        per_cell_u = per_cell_u[cell_mask]
    return float(per_cell_eta.sum()), float(per_cell_u.sum())


def measure_masses(mesh: Mesh, sys: SystemModel, u0, trajectory, r: float,
                   T: float) -> MeasureMasses:
    """Total masses of the four error measures on B(0, r) x [0, T].

    Needs the trajectory recorded at every step (record_every = 1) so the
    time sums are exact.  Cells belong to the ball when their centroid
    does (periodic minimum-image distance).
    """
    snaps = trajectory.snapshots
    if len(snaps) != trajectory.n_steps + 1:
        raise ConfigError("measure masses need snapshots at every step")
    dist = mesh.periodic_distance_to_origin(mesh.cell_centroids)
    mask = dist <= r
    if not np.any(mask):
        raise ConfigError("no cell centroid lies in the requested ball")
    mu0, mu_bar0 = projection_masses(mesh, sys, u0, snaps[0][1], cell_mask=mask)
    vols = mesh.cell_volumes[mask]
    dt = trajectory.dt
    mu_t = 0.0
    mu_bar_t = 0.0
    for (_, fa), (_, fb) in zip(snaps[:-1], snaps[1:]):
        deta = np.abs(sys.entropy(fb.values) - sys.entropy(fa.values))[mask]
        du = fb.values[mask] - fa.values[mask]
        mu_t += dt * float((vols * deta).sum())
        mu_bar_t += dt * float((vols * np.sqrt((du ** 2).sum(axis=-1))).sum())
    return MeasureMasses(mu0=mu0, mu_t=mu_t, mu_bar0=mu_bar0, mu_bar_t=mu_bar_t)


# ---------------------------------------------------------------------------
# errors against a reference
# ---------------------------------------------------------------------------

def reference_cell_means(mesh: Mesh, reference, t: float,
                         quadrature: str = "midpoint"):
    """Cell averages of the reference at time t, same rule as the projection."""
    return cell_means(mesh, lambda x: reference.eval(x, t), quadrature)


def cone_l2_error(mesh: Mesh, sys: SystemModel, trajectory, reference,
                  r: float, T: float, lf: float,
                  quadrature: str = "midpoint") -> float:
    """Space-time squared L2 error over the shrinking cone.

    sum_n dt sum_{K: centroid in B(0, r + lf (T - t^n))} |K| |u_K^n - ubar_K(t^n)|^2
    with left-endpoint time quadrature on [0, T); on periodic problems
    with r large the ball covers the whole box.
    """
    snaps = trajectory.snapshots
    if len(snaps) != trajectory.n_steps + 1:
        raise ConfigError("cone error needs snapshots at every step")
    dist = mesh.periodic_distance_to_origin(mesh.cell_centroids)
    dt = trajectory.dt
    total = 0.0
    for t, fld in snaps[:-1]:
        if t > reference.valid_until * (1 + 1e-12):
            raise ConfigError(f"reference not valid at t={t}")
        radius = r + lf * (T - t)
        mask = dist <= radius
        ubar = reference_cell_means(mesh, reference, t, quadrature)
        diff = fld.values[mask] - ubar[mask]
        total += dt * float((mesh.cell_volumes[mask]
                             * (diff ** 2).sum(axis=-1)).sum())
    return total


def relative_entropy_norm(mesh: Mesh, sys: SystemModel, field: StateField,
                          reference_means) -> float:
    """sum_K |K| H(u_K, ubar_K); brackets the squared L2 cell error."""
    ubar = np.asarray(reference_means, dtype=float)
    H = relative_entropy(sys, field.values, ubar)
    return float((mesh.cell_volumes * H).sum())


def squared_l2_cell_error(mesh: Mesh, field: StateField, reference_means) -> float:
    diff = field.values - np.asarray(reference_means, dtype=float)
    return float((mesh.cell_volumes * (diff ** 2).sum(axis=-1)).sum())


# ---------------------------------------------------------------------------
# refinement studies
# ---------------------------------------------------------------------------

def fit_rate(table: ConvergenceTable) -> float:
    """Least-squares slope of log(error) against log(h)."""
    hs = np.array([row.h for row in table.rows])
    errs = np.array([row.error_l2_spacetime for row in table.rows])
    if len(hs) < 3 or len(set(hs.tolist())) < 3:
        raise ConfigError("rate fit needs at least 3 distinct mesh levels")
    if np.any(errs <= 0.0):
        raise ConfigError("rate fit needs positive errors")
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    table.fitted_rate = float(slope)
    return float(slope)


@dataclass
class WbvScalingReport:
    sup_wbv_l1_sqrt_h: float
    sup_wbv_sq: float
    wbv_sq_max_over_min: float
    wbv_l1h_last_over_first: float
    passed_l1: bool
    passed_sq: bool


def wbv_scaling_report(table: ConvergenceTable) -> WbvScalingReport:
    """Boundedness check of the weak-BV sums across refinement levels.

    Both quantities must show no growth trend: the last level at most
    1.5x the first, or outright decreasing.
    """
    if len(table.rows) < 3:
        raise ConfigError("scaling report needs at least 3 levels")
    l1h = [row.wbv_l1 * math.sqrt(row.h) for row in table.rows]
    sq = [row.wbv_sq for row in table.rows]

    def no_growth(seq):
        decreasing = all(b <= a * (1 + 1e-12) for a, b in zip(seq, seq[1:]))
        return decreasing or seq[-1] <= 1.5 * seq[0]

    return WbvScalingReport(
        sup_wbv_l1_sqrt_h=max(l1h),
        sup_wbv_sq=max(sq),
        wbv_sq_max_over_min=max(sq) / min(sq) if min(sq) > 0 else math.inf,
        wbv_l1h_last_over_first=l1h[-1] / l1h[0] if l1h[0] > 0 else math.inf,
        passed_l1=no_growth(l1h),
        passed_sq=no_growth(sq))


@dataclass
class MeasureScalingReport:
    mu0_over_h_ratio: float       # max/min of mu0/h across levels
    mu_bar0_over_h_ratio: float
    mu_t_scaled_last_over_first: float    # (mu_t/sqrt(h)) last / first
    mu_bar_t_scaled_last_over_first: float
    passed: bool


def measure_scaling_report(hs, masses: Sequence[MeasureMasses]) -> MeasureScalingReport:
    """mu0, mu_bar0 must scale like h; mu_T, mu_bar_T like sqrt(h)."""
    if len(hs) < 3:
        raise ConfigError("scaling report needs at least 3 levels")
    hs = list(hs)
    mu0h = [m.mu0 / h for m, h in zip(masses, hs)]
    mub0h = [m.mu_bar0 / h for m, h in zip(masses, hs)]
    mut = [m.mu_t / math.sqrt(h) for m, h in zip(masses, hs)]
    mubt = [m.mu_bar_t / math.sqrt(h) for m, h in zip(masses, hs)]

    def ratio(seq):
        return max(seq) / min(seq) if min(seq) > 0 else math.inf

    def no_growth(seq):
        decreasing = all(b <= a * (1 + 1e-12) for a, b in zip(seq, seq[1:]))
        return decreasing or (seq[0] > 0 and seq[-1] <= 1.5 * seq[0])

    rep = MeasureScalingReport(
        mu0_over_h_ratio=ratio(mu0h),
        mu_bar0_over_h_ratio=ratio(mub0h),
        mu_t_scaled_last_over_first=(mut[-1] / mut[0]) if mut[0] > 0 else math.inf,
        mu_bar_t_scaled_last_over_first=(mubt[-1] / mubt[0]) if mubt[0] > 0 else math.inf,
        passed=(ratio(mu0h) < 2.0 and ratio(mub0h) < 2.0
                and no_growth(mut) and no_growth(mubt)))
    return rep
