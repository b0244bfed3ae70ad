"""Configuration-driven entry point.

`hypflux run <config>` executes one simulation with full diagnostics and
writes snapshots, a ledger dump, and a run report.  `hypflux study <spec>`
runs a mesh-refinement study, assembles the convergence table, fits the
error rate, and checks the weak-BV and measure-mass scalings.  `hypflux
validate <config>` parses and validates without running.

Config files are flat INI text: sections in brackets, `key = value`
lines, arrays as comma-separated values.  Initial data come from a small
named catalog (constant, sine, gaussian-bump, shallow-water-smooth-wave).

Exit codes: 0 success, 2 parse error, 3 validation error, 4 runtime
error, 5 invariant failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import configparser
import json
import math
import os
import sys as _sys
from dataclasses import dataclass

import numpy as np

from . import diagnostics as diag
from . import numflux, reference, solver
from .errors import (AdmissibilityError, ConfigError, ConstructionError,
                     HorizonError, HypfluxError, MeshError)
from .mesh import (build_perturbed_quad_2d, build_uniform_1d,
                   build_uniform_quad_2d)
from .systems import (make_advection, make_burgers, make_friedrichs,
                      make_shallow_water_1d)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4
EXIT_INVARIANT = 5

PROBLEMS = ("advection1d", "advection2d", "friedrichs1d", "burgers1d",
            "shallow_water1d")
FLUXES = ("rusanov", "godunov")


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def parse_config_text(text: str) -> dict:
    """INI text -> nested dict of raw strings."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigParseError(str(exc)) from exc
    return {section: dict(cp.items(section)) for section in cp.sections()}


def serialize_config(cfg: dict) -> str:
    lines = []
    for section, items in cfg.items():
        lines.append(f"[{section}]")
        for key, value in items.items():
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigParseError(f"cannot read {path}: {exc}") from exc
    return parse_config_text(text)


class ConfigParseError(HypfluxError):
    """Malformed config text (distinct exit code from validation)."""


def _get(cfg, section, key, default=None, required=False):
    try:
        return cfg[section][key]
    except KeyError:
        if required:
            raise ConfigParseError(f"missing key [{section}] {key}")
        return default


def _get_float(cfg, section, key, default=None, required=False):
    raw = _get(cfg, section, key, None, required)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigParseError(f"[{section}] {key}: not a number: {raw!r}") from exc


def _get_int(cfg, section, key, default=None, required=False):
    raw = _get(cfg, section, key, None, required)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigParseError(f"[{section}] {key}: not an integer: {raw!r}") from exc


def _get_bool(cfg, section, key, default):
    raw = _get(cfg, section, key)
    if raw is None:
        return default
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigParseError(f"[{section}] {key}: not a boolean: {raw!r}")


def _floats(raw):
    return [float(tok) for tok in raw.replace(";", ",").split(",") if tok.strip()]


def _matrix(raw):
    rows = [r for r in raw.split(";") if r.strip()]
    return np.array([[float(tok) for tok in r.split(",")] for r in rows])


# ---------------------------------------------------------------------------
# initial-data catalog
# ---------------------------------------------------------------------------

def make_initial(cfg: dict, problem: str, domain):
    """Build (u0, du0_dx) from the [initial] section.

    u0 maps points of shape (..., d) to states (..., m); the derivative is
    provided for 1D scalar data (the characteristics solver needs it) and
    is None otherwise.
    """
    kind = _get(cfg, "initial", "kind", required=True).strip().lower()
    d = 2 if problem == "advection2d" else 1
    lengths = np.asarray(domain, dtype=float)

    if kind == "constant":
        vals = np.array(_floats(_get(cfg, "initial", "value", required=True)))

        def u0(x):
            x = np.asarray(x, dtype=float)
            return np.broadcast_to(vals, x.shape[:-1] + vals.shape).copy()

        return u0, (lambda y: np.zeros_like(np.asarray(y, dtype=float)))

    if kind == "sine":
        means = np.array(_floats(_get(cfg, "initial", "means",
                                      _get(cfg, "initial", "mean", "0.0"))))
        amps = np.array(_floats(_get(cfg, "initial", "amplitudes",
                                     _get(cfg, "initial", "amplitude", "1.0"))))
        freq = _get_float(cfg, "initial", "frequency", 1.0)
        if means.shape != amps.shape:
            raise ConfigError("means and amplitudes must have equal length")
        k = 2.0 * math.pi * freq

        def u0(x):
            x = np.asarray(x, dtype=float)
            phase = np.sin(k * x[..., 0] / lengths[0])
            for a in range(1, d):
                phase = phase * np.sin(k * x[..., a] / lengths[a])
            return means + amps * phase[..., None]

        if means.size == 1 and d == 1:
            def du0(y):
                y = np.asarray(y, dtype=float)
                return amps[0] * (k / lengths[0]) * np.cos(k * y / lengths[0])
            return u0, du0
        return u0, None

    if kind == "gaussian-bump":
        mean = _get_float(cfg, "initial", "mean", 0.0)
        amp = _get_float(cfg, "initial", "amplitude", 1.0)
        center = _get_float(cfg, "initial", "center", 0.5)
        width = _get_float(cfg, "initial", "width", 0.1)

        def u0(x):
            x = np.asarray(x, dtype=float)
            r2 = np.zeros(x.shape[:-1])
            for a in range(d):
                delta = np.abs(np.mod(x[..., a], lengths[a]) - center * lengths[a])
                delta = np.minimum(delta, lengths[a] - delta)
                r2 = r2 + (delta / (width * lengths[a])) ** 2
            return (mean + amp * np.exp(-r2))[..., None]

        def du0(y):
            y = np.asarray(y, dtype=float)
            delta = np.mod(y, lengths[0]) - center * lengths[0]
            delta = np.where(delta > 0.5 * lengths[0], delta - lengths[0], delta)
            delta = np.where(delta < -0.5 * lengths[0], delta + lengths[0], delta)
            w = width * lengths[0]
            return amp * np.exp(-(delta / w) ** 2) * (-2.0 * delta / w ** 2)

        return u0, (du0 if d == 1 else None)

    if kind == "shallow-water-smooth-wave":
        h_mean = _get_float(cfg, "initial", "h_mean", 1.2)
        h_amp = _get_float(cfg, "initial", "h_amp", 0.2)
        q_mean = _get_float(cfg, "initial", "q_mean", 0.3)
        q_amp = _get_float(cfg, "initial", "q_amp", 0.1)
        k = 2.0 * math.pi

        def u0(x):
            x = np.asarray(x, dtype=float)
            s = np.sin(k * x[..., 0] / lengths[0])
            return np.stack([h_mean + h_amp * s, q_mean + q_amp * s], axis=-1)

        return u0, None

    raise ConfigError(f"unknown initial-data kind {kind!r}")


def _scalar_range(u0, domain, d):
    """Sampled range of a scalar datum, padded by 5% of its width."""
    if d == 1:
        xs = np.linspace(0.0, domain[0], 4097)[:, None]
    else:
        g = np.linspace(0.0, 1.0, 129)
        X, Y = np.meshgrid(g * domain[0], g * domain[1], indexing="ij")
        xs = np.stack([X.ravel(), Y.ravel()], axis=-1)
    vals = np.asarray(u0(xs))[..., 0]
    lo, hi = float(vals.min()), float(vals.max())
    width = hi - lo
    # constant data would give an empty box; use an absolute floor then
    pad = 0.05 * width if width > 0 else 1e-2 * (1.0 + max(abs(lo), abs(hi)))
    return lo - pad, hi + pad


# ---------------------------------------------------------------------------
# problem assembly
# ---------------------------------------------------------------------------

@dataclass
class ProblemSetup:
    mesh: object
    system: object
    scheme: object
    u0: object
    u0_derivative: object
    run_config: solver.RunConfig
    ref: object           # ReferenceSolution or None
    r: float
    seed: int
    problem: str
    flux_name: str
    n_label: int


def build_problem(cfg: dict, n_override=None) -> ProblemSetup:
    problem = _get(cfg, "run", "problem", required=True).strip().lower()
    if problem not in PROBLEMS:
        raise ConfigError(f"unknown problem {problem!r}; choose from {PROBLEMS}")
    seed = _get_int(cfg, "run", "seed", 0)
    length = _get_float(cfg, "run", "length", 1.0)

    if problem == "advection2d":
        nx = n_override or _get_int(cfg, "run", "nx", required=True)
        ny = n_override or _get_int(cfg, "run", "ny", nx)
        jitter = _get_float(cfg, "run", "jitter", 0.0)
        ly = _get_float(cfg, "run", "length_y", length)
        if jitter > 0:
            mesh = build_perturbed_quad_2d(nx, ny, length, ly, jitter, seed)
        else:
            mesh = build_uniform_quad_2d(nx, ny, length, ly)
        n_label = nx
    else:
        n_cells = n_override or _get_int(cfg, "run", "n_cells", required=True)
        mesh = build_uniform_1d(n_cells, length)
        n_label = n_cells

    u0, du0 = make_initial(cfg, problem, mesh.domain)

    if problem in ("advection1d", "advection2d"):
        d = mesh.dim
        speed = _floats(_get(cfg, "system", "speed", "1.0"))
        if len(speed) == 1 and d == 2:
            speed = [speed[0], speed[0]]
        lo, hi = _scalar_range(u0, mesh.domain, d)
        system = make_advection(d, speed, u_range=(lo, hi))
        ref = reference.exact_advection(speed, u0, mesh.domain)
    elif problem == "burgers1d":
        lo, hi = _scalar_range(u0, mesh.domain, 1)
        system = make_burgers(1, u_range=(lo, hi))
        if du0 is None:
            raise ConfigError("burgers1d needs differentiable catalog data")
        ref = reference.exact_burgers(u0, du0, mesh.domain)
    elif problem == "friedrichs1d":
        A = _matrix(_get(cfg, "system", "matrix", "0,1;1,0"))
        xs = np.linspace(0.0, mesh.domain[0], 4097)[:, None]
        # Omega is a characteristic-coordinate box: size it from the data
        _, R = np.linalg.eigh(A)
        w0 = np.asarray(u0(xs)) @ R
        radius = 1.05 * float(np.abs(w0).max())
        system = make_friedrichs([A], radius=radius)
        ref = reference.exact_friedrichs(A, u0, mesh.domain)
    else:  # shallow_water1d
        system = make_shallow_water_1d(
            g=_get_float(cfg, "system", "g", 9.81),
            h_min=_get_float(cfg, "system", "h_min", 0.5),
            h_max=_get_float(cfg, "system", "h_max", 2.0),
            q_max=_get_float(cfg, "system", "q_max", 1.5))
        ref = None

    flux_name = _get(cfg, "flux", "name", "rusanov").strip().lower()
    if flux_name not in FLUXES:
        raise ConfigError(f"unknown flux {flux_name!r}; choose from {FLUXES}")
    if flux_name == "rusanov":
        c_raw = _get(cfg, "flux", "c", "auto").strip().lower()
        c = "auto" if c_raw == "auto" else float(c_raw)
        scheme = numflux.make_rusanov(system, c=c, seed=seed)
    else:
        scheme = numflux.make_godunov_scalar(system, seed=seed)

    run_config = solver.RunConfig(
        final_time=_get_float(cfg, "run", "t", required=True),
        cfl_mode=_get(cfg, "run", "cfl_mode", "strengthened").strip().lower(),
        zeta=_get_float(cfg, "run", "zeta", 0.1),
        record_every=_get_int(cfg, "run", "record_every", 1),
        check_admissibility=_get_bool(cfg, "run", "check_admissibility", True),
        quadrature=_get(cfg, "run", "quadrature", "midpoint").strip().lower())

    ref_mode = _get(cfg, "output", "reference",
                    "none" if problem == "shallow_water1d" else "exact")
    ref_mode = ref_mode.strip().lower()
    if ref_mode == "none":
        ref = None
    elif ref_mode.startswith("fine"):
        factor = int(ref_mode.split(":", 1)[1]) if ":" in ref_mode else 8
        ref = reference.fine_grid_reference(mesh, system, scheme, u0,
                                            run_config, factor)
    elif ref_mode != "exact":
        raise ConfigError(f"unknown reference mode {ref_mode!r}")
    if ref is not None and run_config.final_time > ref.valid_until * (1 + 1e-12):
        raise ConfigError(
            f"final time {run_config.final_time} exceeds the reference "
            f"horizon {ref.valid_until}")

    r = _get_float(cfg, "run", "r", 10.0)
    return ProblemSetup(mesh=mesh, system=system, scheme=scheme, u0=u0,
                        u0_derivative=du0, run_config=run_config, ref=ref,
                        r=r, seed=seed, problem=problem, flux_name=flux_name,
                        n_label=n_label)


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

def _fmt(x):
    return repr(float(x))


def execute_run(cfg: dict, n_override=None, output_dir=None,
                write_snapshots="all"):
    """Build, run, diagnose, and write artifacts.  Returns the report dict."""
    setup = build_problem(cfg, n_override=n_override)
    mesh, system, scheme = setup.mesh, setup.system, setup.scheme
    ledger = diag.DiagnosticsLedger()
    hook = diag.make_ledger_hook(ledger, mesh, system, scheme)
    traj = solver.run(mesh, system, scheme, setup.u0, setup.run_config, [hook])

    full = setup.run_config.record_every == 1
    if full:
        masses = diag.measure_masses(mesh, system, setup.u0, traj,
                                     r=setup.r, T=setup.run_config.final_time)
        ledger.mu0_mass, ledger.mu_t_mass = masses.mu0, masses.mu_t
        ledger.mu_bar0_mass, ledger.mu_bar_t_mass = masses.mu_bar0, masses.mu_bar_t
    else:
        mu0, mu_bar0 = diag.projection_masses(mesh, system, setup.u0,
                                              traj.snapshots[0][1])
        ledger.mu0_mass, ledger.mu_bar0_mass = mu0, mu_bar0

    errors = {"cone_l2": None, "l2_spacetime": None, "rel_entropy_final": None}
    mbeta_ok = None
    if setup.ref is not None and full:
        cone = diag.cone_l2_error(mesh, system, traj, setup.ref, r=setup.r,
                                  T=setup.run_config.final_time, lf=system.lf,
                                  quadrature=setup.run_config.quadrature)
        errors["cone_l2"] = cone
        errors["l2_spacetime"] = math.sqrt(cone)
        mbeta_ok = True
        for t, fld in traj.snapshots:
            ubar = diag.reference_cell_means(mesh, setup.ref, t,
                                             setup.run_config.quadrature)
            hnorm = diag.relative_entropy_norm(mesh, system, fld, ubar)
            esq = diag.squared_l2_cell_error(mesh, fld, ubar)
            ledger.rel_entropy_series.append((t, hnorm))
            lo = 0.5 * system.beta0 * esq
            hi = 0.5 * system.beta1 * esq
            tol = 1e-10 * max(1.0, esq) + 1e-10 * abs(hnorm)
            if not (lo - tol <= hnorm <= hi + tol):
                mbeta_ok = False
        errors["rel_entropy_final"] = ledger.rel_entropy_series[-1][1]

    u0f = traj.snapshots[0][1]
    uNf = traj.final_field
    mass0 = (mesh.cell_volumes[:, None] * u0f.values).sum(axis=0)
    massN = (mesh.cell_volumes[:, None] * uNf.values).sum(axis=0)
    scale = max(1.0, float(np.abs(mass0).max()))
    conservation_ok = bool(np.abs(massN - mass0).max() <= 1e-12 * scale)

    cs_rhs = math.sqrt(max(ledger.wbv_sq, 0.0)
                       * max(ledger.interface_measure_total, 0.0))
    cauchy_ok = ledger.wbv_l1 <= cs_rhs * (1.0 + 1e-12) + 1e-14

    flags = {
        "entropy_residual": ledger.entropy_residual_max_scaled <= 1e-10,
        "dissipation_gap": bool(ledger.gap_all_pass),
        "conservation": conservation_ok,
        "admissibility": True,  # run() raised otherwise
        "cauchy_schwarz": bool(cauchy_ok),
    }
    if mbeta_ok is not None:
        flags["mbeta_bracket"] = bool(mbeta_ok)

    report = {
        "metadata": {
            "problem": setup.problem,
            "flux": setup.flux_name,
            "n": setup.n_label,
            "h": mesh.h,
            "a": mesh.a,
            "dt": traj.dt,
            "n_steps": traj.n_steps,
            "lambda_star": scheme.lambda_star,
            "c": scheme.params.get("c"),
            "beta0": system.beta0,
            "beta1": system.beta1,
            "lf": system.lf,
            "zeta": setup.run_config.zeta,
            "cfl_mode": setup.run_config.cfl_mode,
            "quadrature": setup.run_config.quadrature,
            "record_every": setup.run_config.record_every,
            "seed": setup.seed,
            "r": setup.r,
            "T": setup.run_config.final_time,
            "mesh_id": mesh.mesh_id,
        },
        "ledger": ledger.to_dict(),
        "errors": errors,
        "flags": flags,
        "passed": all(flags.values()),
    }

    if output_dir is not None:
        os.makedirs(output_dir, exist_ok=True)
        _write_snapshots(output_dir, mesh, system, traj, write_snapshots)
        run_meta = {
            "dt": report["metadata"]["dt"],
            "n_steps": report["metadata"]["n_steps"],
            "lambda_star": report["metadata"]["lambda_star"],
            "a": report["metadata"]["a"],
            "h": report["metadata"]["h"],
            "zeta": report["metadata"]["zeta"],
            "scheme": report["metadata"]["flux"],
            "system": report["metadata"]["problem"],
            "quadrature": report["metadata"]["quadrature"],
        }
        with open(os.path.join(output_dir, "run_metadata.json"), "w") as fh:
            json.dump(run_meta, fh, indent=2, sort_keys=True)
        with open(os.path.join(output_dir, "ledger.json"), "w") as fh:
            json.dump(ledger.to_dict(), fh, indent=2, sort_keys=True)
        with open(os.path.join(output_dir, "report.json"), "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
    return report


def _write_snapshots(output_dir, mesh, system, traj, mode):
    if mode == "none":
        return
    snaps = traj.snapshots
    if mode == "ends":
        snaps = [snaps[0], snaps[-1]]
    coords = ["x", "y"][: mesh.dim]
    header = ",".join(["cell_id"] + coords
                      + [f"u_{k}" for k in range(system.m)])
    for idx, (t, fld) in enumerate(snaps):
        path = os.path.join(output_dir, f"snapshot_{idx:06d}.csv")
        with open(path, "w") as fh:
            fh.write(f"# t = {_fmt(t)}\n")
            fh.write(header + "\n")
            for k in range(mesh.n_cells):
                row = ([str(k)] + [_fmt(c) for c in mesh.cell_centroids[k]]
                       + [_fmt(v) for v in fld.values[k]])
                fh.write(",".join(row) + "\n")


def run_single(config_path, output_dir=None) -> int:
    """Exit-code wrapper around execute_run for one config file."""
    try:
        cfg = load_config(config_path)
    except ConfigParseError as exc:
        print(f"parse error: {exc}", file=_sys.stderr)
        return EXIT_PARSE
    out = output_dir or _get(cfg, "output", "dir", "hypflux_out")
    snap_mode = _get(cfg, "output", "snapshots", "all").strip().lower()
    if snap_mode not in ("all", "ends", "none"):
        print(f"validation error: unknown snapshots mode {snap_mode!r}",
              file=_sys.stderr)
        return EXIT_VALIDATION
    try:
        report = execute_run(cfg, output_dir=out, write_snapshots=snap_mode)
    except ConfigParseError as exc:
        print(f"parse error: {exc}", file=_sys.stderr)
        return EXIT_PARSE
    except (ConfigError, ConstructionError, MeshError) as exc:
        print(f"validation error: {exc}", file=_sys.stderr)
        return EXIT_VALIDATION
    except (AdmissibilityError, HorizonError, HypfluxError) as exc:
        print(f"runtime error: {exc}", file=_sys.stderr)
        return EXIT_RUNTIME
    if not report["passed"]:
        failed = [k for k, v in report["flags"].items() if not v]
        print(f"invariant failure: {failed}", file=_sys.stderr)
        return EXIT_INVARIANT
    print(f"run ok: report in {out}/report.json")
    return EXIT_OK


def validate_only(config_path) -> int:
    """Parse and validate a run config or study spec without running."""
    try:
        cfg = load_config(config_path)
    except ConfigParseError as exc:
        print(f"parse error: {exc}", file=_sys.stderr)
        return EXIT_PARSE
    try:
        if "study" in cfg:
            levels = _parse_levels(cfg)
            build_problem(_study_to_run_config(cfg), n_override=levels[0])
        else:
            build_problem(cfg)
    except ConfigParseError as exc:
        print(f"parse error: {exc}", file=_sys.stderr)
        return EXIT_PARSE
    except (ConfigError, ConstructionError, MeshError) as exc:
        print(f"validation error: {exc}", file=_sys.stderr)
        return EXIT_VALIDATION
    print("config ok")
    return EXIT_OK


# ---------------------------------------------------------------------------
# studies
# ---------------------------------------------------------------------------

def _parse_levels(cfg: dict):
    raw = _get(cfg, "study", "levels", required=True)
    try:
        levels = [int(tok) for tok in raw.split(",")]
    except ValueError as exc:
        raise ConfigParseError(f"[study] levels: not integers: {raw!r}") from exc
    if len(levels) < 3:
        raise ConfigError("a study needs at least 3 mesh levels")
    return levels


def _study_to_run_config(cfg: dict) -> dict:
    run = dict(cfg.get("study", {}))
    run.pop("levels", None)
    run.pop("flux", None)
    out = {sec: dict(items) for sec, items in cfg.items() if sec != "study"}
    out["run"] = {**run, **out.get("run", {})}
    out.setdefault("flux", {})
    if "flux" in cfg.get("study", {}):
        out["flux"].setdefault("name", cfg["study"]["flux"])
    # studies need every-step snapshots for the exact error sums
    out["run"]["record_every"] = "1"
    return out


def _level_worker(args):
    cfg, level, outdir = args
    report = execute_run(cfg, n_override=level, output_dir=outdir,
                         write_snapshots="ends")
    return level, report


def run_study(spec_path, output_dir=None, jobs: int = 1) -> int:
    try:
        cfg = load_config(spec_path)
    except ConfigParseError as exc:
        print(f"parse error: {exc}", file=_sys.stderr)
        return EXIT_PARSE

    try:
        levels = _parse_levels(cfg)
        run_cfg = _study_to_run_config(cfg)
        out = output_dir or _get(cfg, "output", "dir", "hypflux_study")
        build_problem(run_cfg, n_override=levels[0])  # validate eagerly
    except ConfigParseError as exc:
        print(f"parse error: {exc}", file=_sys.stderr)
        return EXIT_PARSE
    except (ConfigError, ConstructionError, MeshError) as exc:
        print(f"validation error: {exc}", file=_sys.stderr)
        return EXIT_VALIDATION

    tasks = [(run_cfg, lvl, os.path.join(out, f"level_{lvl}")) for lvl in levels]
    try:
        if jobs > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as ex:
                results = dict(ex.map(_level_worker, tasks))
        else:
            results = dict(map(_level_worker, tasks))
    except (ConfigError, ConstructionError, MeshError) as exc:
        print(f"validation error: {exc}", file=_sys.stderr)
        return EXIT_VALIDATION
    except (AdmissibilityError, HorizonError, HypfluxError) as exc:
        print(f"runtime error: {exc}", file=_sys.stderr)
        return EXIT_RUNTIME

    reports = [results[lvl] for lvl in levels]
    if not all(rep["passed"] for rep in reports):
        print("invariant failure in a study level", file=_sys.stderr)
        return EXIT_INVARIANT

    rows = [diag.ConvergenceRow(
        h=rep["metadata"]["h"], dt=rep["metadata"]["dt"],
        error_l2_spacetime=rep["errors"]["l2_spacetime"],
        wbv_l1=rep["ledger"]["wbv_l1"], wbv_sq=rep["ledger"]["wbv_sq"],
        mu0_mass=rep["ledger"]["mu0_mass"], mu_t_mass=rep["ledger"]["mu_t_mass"])
        for rep in reports]
    table = diag.ConvergenceTable(rows=rows)
    have_errors = all(r.error_l2_spacetime is not None for r in rows)
    rate = diag.fit_rate(table) if have_errors else None
    wbv_rep = diag.wbv_scaling_report(table)
    masses = [diag.MeasureMasses(mu0=rep["ledger"]["mu0_mass"],
                                 mu_t=rep["ledger"]["mu_t_mass"],
                                 mu_bar0=rep["ledger"]["mu_bar0_mass"],
                                 mu_bar_t=rep["ledger"]["mu_bar_t_mass"])
              for rep in reports]
    mass_rep = diag.measure_scaling_report([r.h for r in rows], masses)

    os.makedirs(out, exist_ok=True)
    csv_path = os.path.join(out, "convergence.csv")
    with open(csv_path, "w") as fh:
        fh.write("h,dt,err_l2,wbv_l1,wbv_sq,mu0,mu_t\n")
        for r in rows:
            err = "" if r.error_l2_spacetime is None else _fmt(r.error_l2_spacetime)
            fh.write(",".join([_fmt(r.h), _fmt(r.dt), err, _fmt(r.wbv_l1),
                               _fmt(r.wbv_sq), _fmt(r.mu0_mass),
                               _fmt(r.mu_t_mass)]) + "\n")
        fh.write(f"# fitted_rate = {'' if rate is None else _fmt(rate)}\n")

    passed = ((rate is None or rate >= 0.25)
              and wbv_rep.passed_l1 and wbv_rep.passed_sq and mass_rep.passed)
    study_report = {
        "levels": levels,
        "fitted_rate": rate,
        "wbv_scaling": {
            "sup_wbv_l1_sqrt_h": wbv_rep.sup_wbv_l1_sqrt_h,
            "sup_wbv_sq": wbv_rep.sup_wbv_sq,
            "wbv_sq_max_over_min": wbv_rep.wbv_sq_max_over_min,
            "wbv_l1h_last_over_first": wbv_rep.wbv_l1h_last_over_first,
            "passed_l1": wbv_rep.passed_l1,
            "passed_sq": wbv_rep.passed_sq,
        },
        "measure_scaling": {
            "mu0_over_h_ratio": mass_rep.mu0_over_h_ratio,
            "mu_bar0_over_h_ratio": mass_rep.mu_bar0_over_h_ratio,
            "mu_t_scaled_last_over_first": mass_rep.mu_t_scaled_last_over_first,
            "mu_bar_t_scaled_last_over_first": mass_rep.mu_bar_t_scaled_last_over_first,
            "passed": mass_rep.passed,
        },
        "level_reports": reports,
        "passed": bool(passed),
    }
    with open(os.path.join(out, "study_report.json"), "w") as fh:
        json.dump(study_report, fh, indent=2, sort_keys=True)

    if not passed:
        print("study gates failed", file=_sys.stderr)
        return EXIT_INVARIANT
    print(f"study ok: rate = {rate}, outputs in {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hypflux",
        description="Explicit entropy-stable finite-volume solver and "
                    "verification harness for conservation laws.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a single simulation")
    p_run.add_argument("config")
    p_run.add_argument("--output-dir", default=None)
    p_run.add_argument("--jobs", type=int, default=1,
                       help="accepted for interface uniformity; a single "
                            "run is one job")

    p_study = sub.add_parser("study", help="run a mesh-refinement study")
    p_study.add_argument("spec")
    p_study.add_argument("--output-dir", default=None)
    p_study.add_argument("--jobs", type=int, default=1)

    p_val = sub.add_parser("validate", help="parse and validate a config")
    p_val.add_argument("config")

    args = parser.parse_args(argv)
    if args.command == "run":
        return run_single(args.config, output_dir=args.output_dir)
    if args.command == "study":
        return run_study(args.spec, output_dir=args.output_dir, jobs=args.jobs)
    return validate_only(args.config)
