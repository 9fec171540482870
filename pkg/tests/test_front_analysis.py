import math

import numpy as np
import pytest
from scipy import optimize

from hjfront.fields import AdvectionSpec, Grid2D, ScalarField, SimParams
from hjfront.front_analysis import (FrontCurve, compare_fronts, extract_front, ptw_front_predict,
                                    sublevel_inclusion, write_fronts_csv)
from hjfront.hj_solver import SolverConfig, solve_ivp
from hjfront.metric_corrector import CorrectorField, extract_corrector, metric_grid, solve_rho
from hjfront.noise import NoiseSpec, integrate_W_eps, sample_noise

SHEAR = AdvectionSpec.shear(1.0)


def _curve(y, t=0.0):
    y = np.asarray(y, dtype=float)
    n = y.size
    return FrontCurve(np.arange(n, dtype=float), y, t, np.zeros(n, bool), np.zeros(n, bool))


def test_front_of_linear_field():
    g = Grid2D((0, 1), (-1, 2), 4, 301)
    f = ScalarField.from_function(g, lambda X, Y: Y - 0.537, time_stamp=0.537)
    fr = extract_front(f)
    assert np.abs(fr.y_front - 0.537).max() <= g.hy * 1e-12
    out = extract_front(ScalarField.from_function(g, lambda X, Y: Y - 5.0))
    assert out.flagged.all()


def test_fronts_csv(tmp_path):
    write_fronts_csv(tmp_path / "f.csv", [_curve([0.1, 0.2], 1.0)])
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "t,x,y_front,flagged" and len(lines) == 3


def test_compare_fronts():
    a = _curve([0.1, 0.4, 0.3])
    assert compare_fronts(a, a) == 0.0
    assert compare_fronts(a, _curve(a.y_front + 0.25)) == pytest.approx(0.25)


def test_predict_with_zero_corrector():
    xi = np.linspace(0, 2, 201)
    c = CorrectorField(np.zeros(1), xi, np.zeros((1, 201)), np.zeros((1, 201)), 0.1)
    assert ptw_front_predict(c, 0.1, 1.0).y_front[0] == pytest.approx(1.0, abs=1e-12)


def test_predict_with_minus_W_matches_root_finding():
    eps = 0.1
    s = eps ** (2 / 3)
    noise = sample_noise(NoiseSpec(seed=3), (-1.0, 30.0))
    xi = np.linspace(0.0, 2.0, 4001)
    W = integrate_W_eps(noise, eps, xi)
    chi = -W[None, :]
    c = CorrectorField(np.zeros(1), xi, chi, np.zeros_like(chi), eps)
    t = 1.3
    got = ptw_front_predict(c, eps, t).y_front[0]
    F = lambda y: y - s * np.interp(s * y, xi, W) - t  # noqa: E731
    ref = optimize.brentq(F, t - 1, t + 1, xtol=1e-14)
    assert got == pytest.approx(ref, abs=1e-10)


def test_predicted_front_matches_solve():
    eps = 0.1
    grid = metric_grid(eps, SHEAR, hy=0.01)
    noise = sample_noise(NoiseSpec(seed=12), (-1.0, grid.y_range[1] + 1.0), h_w=0.01)
    p = SimParams(eps, enforce_smallness=False)
    rho = solve_rho(p, SHEAR, noise, grid)
    corr = extract_corrector(rho, eps, noise, SHEAR)
    g = Grid2D((0, 2 * math.pi), (-1.0, 2.5), 1, 351)
    f0 = ScalarField.from_function(g, lambda X, Y: Y)
    for fld in solve_ivp(f0, p, SHEAR, noise, SolverConfig(output_times=(1.0,), stop_time=1.0)):
        pred = ptw_front_predict(corr, eps, fld.time_stamp)
        assert compare_fronts(pred, extract_front(fld)) <= 3 * (eps ** (4 / 3) + g.hy)


def test_inclusion_trivial():
    g = Grid2D((0, 1), (-1, 1), 2, 51)
    f = ScalarField.from_function(g, lambda X, Y: Y)
    ok, margin = sublevel_inclusion(f, f)
    assert ok and margin <= 0


def test_level_set_invariance_one_seed():
    eps = 0.1
    g = Grid2D((0, 2 * math.pi), (-1.5, 2.5), 1, 401)
    noise = sample_noise(NoiseSpec(seed=8), (-2.5, 3.5), h_w=0.01)
    p = SimParams(eps, enforce_smallness=False)
    times = (0.2, 0.6, 1.0)
    runs = []
    for prof in (lambda y: y, lambda y: 2 * np.tanh(y) + y / 2):
        f0 = ScalarField.from_function(g, lambda X, Y, prof=prof: prof(Y))
        runs.append(solve_ivp(f0, p, SHEAR, noise, SolverConfig(output_times=times, stop_time=1.0)))
    for a, b in zip(*runs):
        assert compare_fronts(extract_front(a), extract_front(b)) <= 3 * g.hy
