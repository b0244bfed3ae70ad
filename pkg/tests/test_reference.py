import math

import numpy as np
import pytest

import hypflux as hf
from hypflux.errors import ConstructionError, HorizonError


def sine1(x):
    x = np.asarray(x, dtype=float)
    return np.sin(2 * np.pi * x[..., 0])[..., None]


def burgers_wave(x):
    x = np.asarray(x, dtype=float)
    return (0.5 + 0.25 * np.sin(2 * np.pi * x[..., 0]))[..., None]


def burgers_wave_prime(y):
    return 0.25 * 2 * np.pi * np.cos(2 * np.pi * np.asarray(y, dtype=float))


def vec2(x):
    x = np.asarray(x, dtype=float)
    s = np.sin(2 * np.pi * x[..., 0])
    c = np.cos(2 * np.pi * x[..., 0])
    return np.stack([0.4 * s, 0.3 * c], axis=-1)


def test_advection_initial_time():
    ref = hf.exact_advection([1.0], sine1, (1.0,))
    x = np.linspace(0, 1, 33, endpoint=False)[:, None]
    assert np.allclose(ref.eval(x, 0.0), sine1(x), atol=0)
    assert ref.valid_until == math.inf


def test_advection_hand_value():
    ref = hf.exact_advection([1.0], sine1, (1.0,))
    v = ref.eval(np.array([[0.25]]), 0.25)
    assert v[0, 0] == pytest.approx(0.0, abs=1e-15)


def test_advection_conserves_integral():
    ref = hf.exact_advection([0.37], sine1, (1.0,))
    x = (np.arange(4096) + 0.5)[:, None] / 4096.0
    m0 = ref.eval(x, 0.0).mean()
    m1 = ref.eval(x, 0.53).mean()
    assert m1 == pytest.approx(m0, abs=1e-12)


def test_friedrichs_zero_matrix_is_identity():
    ref = hf.exact_friedrichs(np.zeros((2, 2)), vec2, (1.0,))
    x = np.linspace(0, 1, 17)[:, None]
    assert np.allclose(ref.eval(x, 0.7), vec2(x), atol=1e-14)


def test_friedrichs_diagonal_transports_components():
    A = np.diag([1.0, -1.0])
    ref = hf.exact_friedrichs(A, vec2, (1.0,))
    x = np.linspace(0, 1, 33)[:, None]
    t = 0.3
    got = ref.eval(x, t)
    want0 = vec2(np.mod(x - t, 1.0))[..., 0]
    want1 = vec2(np.mod(x + t, 1.0))[..., 1]
    assert np.allclose(got[..., 0], want0, atol=1e-13)
    assert np.allclose(got[..., 1], want1, atol=1e-13)


def test_friedrichs_scalar_reduces_to_advection():
    c = 0.8
    ref_f = hf.exact_friedrichs(np.array([[c]]), sine1, (1.0,))
    ref_a = hf.exact_advection([c], sine1, (1.0,))
    x = np.linspace(0, 1, 41)[:, None]
    assert np.allclose(ref_f.eval(x, 0.45), ref_a.eval(x, 0.45), atol=1e-13)


def test_friedrichs_rejects_nonsymmetric():
    with pytest.raises(ConstructionError):
        hf.exact_friedrichs(np.array([[0.0, 1.0], [0.0, 0.0]]), vec2, (1.0,))


def test_friedrichs_conserves_integral():
    ref = hf.exact_friedrichs(np.array([[0.0, 1.0], [1.0, 0.0]]), vec2, (1.0,))
    x = (np.arange(4096) + 0.5)[:, None] / 4096.0
    m0 = ref.eval(x, 0.0).mean(axis=0)
    m1 = ref.eval(x, 0.41).mean(axis=0)
    assert np.abs(m1 - m0).max() <= 1e-12


def test_burgers_horizon_value():
    ref = hf.exact_burgers(burgers_wave, burgers_wave_prime, (1.0,))
    assert ref.valid_until == pytest.approx(0.9 / (0.5 * math.pi), rel=1e-6)


def test_burgers_initial_time():
    ref = hf.exact_burgers(burgers_wave, burgers_wave_prime, (1.0,))
    x = np.linspace(0, 1, 29)[:, None]
    assert np.allclose(ref.eval(x, 0.0), burgers_wave(x), atol=1e-13)


def test_burgers_constant_datum():
    ref = hf.exact_burgers(
        lambda x: np.full(np.asarray(x).shape[:-1] + (1,), 0.4),
        lambda y: np.zeros_like(np.asarray(y, dtype=float)), (1.0,))
    assert ref.valid_until == math.inf
    assert np.allclose(ref.eval(np.array([[0.3]]), 5.0), 0.4, atol=1e-14)


def test_burgers_implicit_equation_residual():
    # u(x,t) must satisfy u = u0(x - u t)
    ref = hf.exact_burgers(burgers_wave, burgers_wave_prime, (1.0,))
    rng = np.random.default_rng(4)
    x = rng.uniform(0, 1, (500, 1))
    for t in (0.05, 0.2, 0.5):
        u = ref.eval(x, t)
        back = burgers_wave(np.mod(x - u * t, 1.0))
        assert np.abs(u - back).max() <= 1e-12


def test_burgers_rejects_past_horizon():
    ref = hf.exact_burgers(burgers_wave, burgers_wave_prime, (1.0,))
    with pytest.raises(HorizonError):
        ref.eval(np.array([[0.1]]), 0.6)


def _pde_residual(ref, flux_of, x, t, step=1e-5):
    ut = (ref.eval(x, t + step) - ref.eval(x, t - step)) / (2 * step)
    e = np.zeros(x.shape[-1])
    e[0] = step
    fx = (flux_of(ref.eval(x + e, t)) - flux_of(ref.eval(x - e, t))) / (2 * step)
    return np.abs(ut + fx).max()


def test_exact_references_satisfy_pde():
    rng = np.random.default_rng(12)
    x = rng.uniform(0, 1, (200, 1))

    ref_a = hf.exact_advection([0.7], sine1, (1.0,))
    assert _pde_residual(ref_a, lambda u: 0.7 * u, x, 0.33) <= 1e-4

    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    ref_f = hf.exact_friedrichs(A, vec2, (1.0,))
    assert _pde_residual(ref_f, lambda u: u @ A.T, x, 0.21) <= 1e-4

    ref_b = hf.exact_burgers(burgers_wave, burgers_wave_prime, (1.0,))
    assert _pde_residual(ref_b, lambda u: 0.5 * u * u, x, 0.2) <= 1e-4


def test_lipschitz_bound_dominates_samples():
    refs = [hf.exact_advection([1.0], sine1, (1.0,)),
            hf.exact_burgers(burgers_wave, burgers_wave_prime, (1.0,))]
    rng = np.random.default_rng(3)
    for ref in refs:
        x = rng.uniform(0, 1, (100, 1))
        t = 0.15
        step = 1e-5
        gx = np.abs(ref.eval(x + step, t) - ref.eval(x - step, t)).max() / (2 * step)
        gt = np.abs(ref.eval(x, t + step) - ref.eval(x, t - step)).max() / (2 * step)
        assert gx + gt <= ref.lipschitz_bound


def test_fine_grid_guard_and_degenerate_factor(burgers_sys, burgers_rusanov):
    mesh = hf.build_uniform_1d(16, 1.0)
    cfg = hf.RunConfig(final_time=0.05)
    with pytest.raises(ConstructionError):
        hf.fine_grid_reference(mesh, burgers_sys, burgers_rusanov,
                               burgers_wave, cfg, refinement_factor=4)
    # factor 1 with the guard off reproduces the run itself
    ref = hf.fine_grid_reference(mesh, burgers_sys, burgers_rusanov,
                                 burgers_wave, cfg, refinement_factor=1,
                                 enforce_min_factor=False)
    traj = hf.run(mesh, burgers_sys, burgers_rusanov, burgers_wave, cfg)
    for t, fld in traj.snapshots:
        got = ref.eval(mesh.cell_centroids, min(t, cfg.final_time))
        assert np.array_equal(got, fld.values)


def test_shallow_water_self_convergence(shallow_water_sys,
                                        shallow_water_rusanov):
    # no closed form: a factor-8 fine-grid run serves as the reference and
    # the error against it must shrink under refinement
    sysm, sch = shallow_water_sys, shallow_water_rusanov

    def wave(x):
        x = np.asarray(x, dtype=float)
        s = np.sin(2 * np.pi * x[..., 0])
        return np.stack([1.2 + 0.1 * s, 0.3 + 0.05 * s], axis=-1)

    T = 0.02
    cfg = hf.RunConfig(final_time=T)
    fine = hf.fine_grid_reference(hf.build_uniform_1d(64, 1.0), sysm, sch,
                                  wave, cfg, refinement_factor=8)
    errs = []
    for n in (16, 32, 64):
        mesh = hf.build_uniform_1d(n, 1.0)
        traj = hf.run(mesh, sysm, sch, wave, cfg)
        errs.append(hf.cone_l2_error(mesh, sysm, traj, fine, r=10.0, T=T,
                                     lf=sysm.lf))
    assert errs[0] > errs[1] > errs[2]


def test_fine_grid_cross_validates_against_exact(burgers_sys, burgers_rusanov):
    mesh = hf.build_uniform_1d(16, 1.0)
    cfg = hf.RunConfig(final_time=0.05)
    fine = hf.fine_grid_reference(mesh, burgers_sys, burgers_rusanov,
                                  burgers_wave, cfg, refinement_factor=8)
    assert fine.params["numerical"] is True
    exact = hf.exact_burgers(burgers_wave, burgers_wave_prime, (1.0,))
    xs = (np.arange(2048) + 0.5)[:, None] / 2048.0
    t = 0.05
    err_fine = np.abs(fine.eval(xs, t) - exact.eval(xs, t)).mean()
    # the coarse run's own error at the same time, for scale
    traj = hf.run(mesh, burgers_sys, burgers_rusanov, burgers_wave, cfg)
    coarse_cells = np.minimum((xs[:, 0] * 16).astype(int), 15)
    err_coarse = np.abs(traj.final_field.values[coarse_cells]
                        - exact.eval(xs, t)).mean()
    assert err_fine <= 0.5 * err_coarse
