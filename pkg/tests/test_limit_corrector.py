import math

import numpy as np
import pytest

from hjfront.fields import Mode, TrigSeries
from hjfront.limit_corrector import (LimitConfig, hopf_lax_oracle, solve_limit,
                                     viscous_consistency_check)
from hjfront.noise import BrownianPath, sample_brownian

COS = TrigSeries(0.0, (Mode(1.0, kx=1.0),))


def _drv(seed=0, n=201, xi_max=1.0):
    return sample_brownian(seed, np.linspace(0.0, xi_max, n))


def test_zero_driver_zero_corrector():
    xi = np.linspace(0, 1, 11)
    zero = BrownianPath(xi, np.zeros(11), "synthetic")
    for viscous in (False, True):
        c = solve_limit(LimitConfig(zero, COS, nx=32, viscous=viscous))
        assert np.all(c.chi == 0) and c.provenance == "limit"


@pytest.mark.parametrize("viscous", [False, True])
def test_constant_u_par_gives_minus_W(viscous):
    drv = _drv()
    c = solve_limit(LimitConfig(drv, TrigSeries(1.0), nx=32, viscous=viscous))
    assert np.all(c.chi_bar == 0)
    assert np.allclose(c.chi, -drv(c.xi_grid)[None, :], rtol=0, atol=1e-15)


def test_hopf_lax_agreement():
    xi = np.linspace(0.0, 0.5, 11)
    W = BrownianPath(xi, sample_brownian(1, xi).W_values, "synthetic")
    c = solve_limit(LimitConfig(W, COS, nx=64, xi_max=0.5, interpolation="step"))
    orc = hopf_lax_oracle(COS, W, c.x_grid, c.xi_grid, 1024)
    assert np.abs(c.chi_bar - orc).max() <= 3 * 2 * math.pi / 64


def test_hopf_lax_trivial_cases():
    x = np.linspace(0, 2 * math.pi, 16, endpoint=False)
    xi = np.linspace(0.0, 0.5, 11)
    zero = BrownianPath(xi, np.zeros(11), "synthetic")
    assert np.all(hopf_lax_oracle(COS, zero, x, xi, 128) == 0)
    W = sample_brownian(2, xi)
    assert np.abs(hopf_lax_oracle(TrigSeries(1.0), W, x, xi, 128)).max() == 0
    with pytest.raises(ValueError):
        hopf_lax_oracle(COS, W, x, xi, 128, viscous=True)


def test_viscous_gradient_bound_fixed_driver():
    rep = viscous_consistency_check(LimitConfig(_drv(0), COS, nx=64))
    assert rep["pass"] and not rep["x_constant"]


def test_viscous_first_order_refinement():
    drv = _drv(0)
    cs = {nx: solve_limit(LimitConfig(drv, COS, nx=nx, viscous=True)) for nx in (32, 64, 128)}
    for a, b in ((32, 64), (64, 128)):
        hx = 2 * math.pi / a
        assert np.abs(cs[a].chi - cs[b].chi[::2]).max() <= 0.1 * hx


def test_driver_must_cover_range():
    with pytest.raises(Exception):
        LimitConfig(_drv(0, 11, 0.5), COS, xi_max=1.0)
