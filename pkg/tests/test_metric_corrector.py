import math

import numpy as np
import pytest

from hjfront.fields import INF, AdvectionSpec, Grid2D, Mode, ScalarField, SimParams, TrigSeries
from hjfront.hj_solver import SolverConfig, solve_ivp
from hjfront.metric_corrector import (check_bounds, extract_corrector, extract_td_corrector,
                                      fit_bound_constants, metric_grid, shear_oracle, solve_rho,
                                      td_corrector_at)
from hjfront.noise import NoisePath, NoiseSpec, integrate_W_eps, sample_noise

SHEAR = AdvectionSpec.shear(1.0)


def _shear_run(eps, seed, hy=0.02):
    grid = metric_grid(eps, SHEAR, hy=hy)
    noise = sample_noise(NoiseSpec(seed=seed), (-1.0, grid.y_range[1] + 1.0), h_w=hy)
    rho = solve_rho(SimParams(eps, enforce_smallness=False), SHEAR, noise, grid)
    return rho, noise


def test_rho_without_advection_is_y():
    grid = metric_grid(0.1, None, hy=0.05)
    tol = 1e-6
    rho = solve_rho(SimParams(0.1), None, None, grid, tol=tol)
    assert np.abs(rho.values - grid.y[None, :]).max() <= 2 * tol


def test_rho_matches_shear_oracle():
    rho, noise = _shear_run(0.1, 3)
    y = rho.grid.y
    m = y <= 20
    err = np.abs(rho.values[0] - shear_oracle(noise, 0.1, 1.0, y))[m].max()
    assert err <= 5 * rho.grid.hy
    assert rho.meta["residual_history"][-1] <= 1e-6


def test_printed_bound_holds():
    rho, noise = _shear_run(0.1, 4)
    rep = check_bounds(rho, noise, "bounds_rho1")
    assert rep.passed and rep.fitted_constants == (0.5,)


def test_negative_half_by_reflection():
    eps = 0.1
    grid = metric_grid(eps, SHEAR, hy=0.02, negative=True)
    noise = sample_noise(NoiseSpec(seed=6), (grid.y_range[0] - 1, grid.y_range[1] + 1), h_w=0.02)
    rho = solve_rho(SimParams(eps, enforce_smallness=False), SHEAR, noise, grid)
    y = grid.y
    neg = (y < 0) & (y >= -20)
    assert np.abs(rho.values[0] - shear_oracle(noise, eps, 1.0, y))[neg].max() <= 5 * grid.hy
    with pytest.raises(Exception):
        solve_rho(SimParams(eps, beta=1.0, enforce_smallness=False), SHEAR, noise, grid)


def test_shear_oracle_closed_forms():
    y = np.linspace(0, 20, 41)
    assert np.allclose(shear_oracle(None, 0.1, 1.0, y), y, atol=1e-13)
    g = np.linspace(-1, 21, 2201)
    c = 0.7
    const = NoisePath.synthetic(g, c)
    assert np.allclose(shear_oracle(const, 0.1, 2.0, y), y / (1 + 0.1 * 2.0 * c), atol=1e-12)
    noise = sample_noise(NoiseSpec(seed=2), (-1.0, 22.0))
    h = 1e-5
    d = (shear_oracle(noise, 0.1, 1.0, np.array([h]))[0]
         - shear_oracle(noise, 0.1, 1.0, np.array([-h]))[0]) / (2 * h)
    assert d == pytest.approx(1 / (1 + 0.1 * noise.w(0.0)), rel=1e-8)


def test_corrector_of_identity_is_zero():
    grid = metric_grid(0.1, None, hy=0.05)
    rho = ScalarField.from_function(grid, lambda X, Y: Y)
    c = extract_corrector(rho, 0.1)
    assert np.all(c.chi == 0)


def test_shift_cancels_synthetic_rho():
    eps = 0.1
    s = eps ** (2 / 3)
    grid = metric_grid(eps, SHEAR, hy=0.02)
    noise = sample_noise(NoiseSpec(seed=8), (-1.0, grid.y_range[1] + 1.0), h_w=0.02)
    W = integrate_W_eps(noise, eps, s * grid.y)
    rho = ScalarField(grid, (grid.y - s * W)[None, :])
    c = extract_corrector(rho, eps, noise, SHEAR)
    assert np.abs(c.chi_bar).max() <= 1e-8


def test_chi_bar_shrinks_and_fit_certifies():
    seeds = range(4)
    sups, runs = {}, {}
    for eps in (0.2, 0.1, 0.05):
        sups[eps], runs[eps] = [], []
        for sd in seeds:
            rho, noise = _shear_run(eps, 100 + sd)
            c = extract_corrector(rho, eps, noise, SHEAR)
            sups[eps].append(c.sup_abs(1.0))
            runs[eps].append((c, noise, eps, SHEAR))
    med = [np.median(sups[e]) for e in (0.2, 0.1, 0.05)]
    assert med[0] >= med[1] >= med[2]
    mu = fit_bound_constants(runs[0.2], "chi_bound")
    for eps in (0.1, 0.05):
        for r in runs[eps]:
            assert check_bounds(r[0], r[1], "chi_bound", eps, SHEAR, constants=mu).passed


def test_bounds_without_advection():
    grid = metric_grid(0.1, None, hy=0.05)
    rho = solve_rho(SimParams(0.1), None, None, grid)
    for which in ("bounds_rho1", "weak_bounds_rho", "bounds_rho"):
        rep = check_bounds(rho, None, which, 0.1, None)
        assert rep.passed and rep.max_violation <= 1e-6


def test_td_corrector_exact_solution_and_wedge():
    grid = Grid2D((0, 1), (-1, 3), 1, 201)
    traj = [ScalarField.from_function(grid, lambda X, Y, t=t: Y - t, time_stamp=t)
            for t in (0.0, 0.5, 1.0)]
    c = extract_td_corrector(traj, 0.1)
    assert np.nanmax(np.abs(c.chi)) == 0.0
    k = 2
    with pytest.raises(ValueError):
        td_corrector_at(c, 0, c.tau_grid[k] / 2, k)
    assert np.all(np.isnan(c.chi[0, c.xi_grid < c.tau_grid[k] - 1e-12, k]))


def test_td_corrector_close_to_autonomous():
    adv = AdvectionSpec(TrigSeries(), TrigSeries(1.0, (Mode(0.5, omega=1.0, phase=-math.pi / 2),)))
    times = tuple(np.linspace(0.1, 1.0, 10))
    grid = Grid2D((0, 2 * math.pi), (-1, 2.5), 1, 351)
    noise = sample_noise(NoiseSpec(seed=5), (-2, 3.5), h_w=0.01)
    f0 = ScalarField.from_function(grid, lambda X, Y: Y)
    consts = {}
    for eps in (0.2, 0.1):
        s = eps ** (2 / 3)
        xi = s * grid.y[(grid.y >= 0) & (grid.y <= 2)]
        cs = []
        for a in (2.0, INF):
            p = SimParams(eps, alpha=a, enforce_smallness=False)
            tr = solve_ivp(f0, p, adv, noise, SolverConfig(output_times=times, stop_time=1.0))
            cs.append(extract_td_corrector(tr, eps, p, noise, adv, xi_grid=xi))
        d = np.nanmax(np.abs(cs[0].chi - cs[1].chi), axis=(0, 1))
        consts[eps] = (d / (eps ** (2 - 1) * cs[0].tau_grid ** 2)).max()
    assert consts[0.1] <= consts[0.2]
