import math

import numpy as np
import pytest

from hjfront.fields import (AdvectionSpec, ConfigError, Grid2D, Mode, NotFrontLikeError,
                            ScalarField, SimParams, SmallnessError, TrigSeries,
                            front_like_envelopes, full_advection)
from hjfront.noise import NoisePath, NoiseSpec, sample_noise


def test_params_validation():
    SimParams(0.0)
    with pytest.raises(ConfigError):
        SimParams(-0.1)
    with pytest.raises(ConfigError):
        SimParams(0.1, alpha=0.5)
    with pytest.raises(ConfigError):
        SimParams(0.1, beta=0.5)
    with pytest.raises(ConfigError):
        SimParams(0.1, r=3.0)
    p = SimParams(0.1, beta=1.0)
    assert p.viscosity == pytest.approx(0.05)
    assert SimParams(0.1).viscosity == 0.0
    assert SimParams(0.1, alpha=2.0).time_arg(1.0) == pytest.approx(0.01)


def test_smallness_enforced():
    adv = AdvectionSpec.shear(1.0)
    M = NoiseSpec().certified_bound()
    with pytest.raises(SmallnessError, match="1/100"):
        SimParams(0.1).check_smallness(adv, M)
    assert SimParams(0.1, enforce_smallness=False).check_smallness(adv, M) > 0.01
    assert SimParams(0.001).check_smallness(adv, M) <= 0.01


def test_full_advection_cases():
    y = np.linspace(0, 5, 51)
    zero = NoisePath.synthetic(np.linspace(-1, 6, 701), 0.0)
    ux, uy = full_advection(AdvectionSpec.shear(1.0), zero, 0.0 * y, y, 0.0)
    assert np.all(ux == 0) and np.all(uy == 0)
    noise = sample_noise(NoiseSpec(seed=1), (-1.0, 6.0))
    _, uy = full_advection(AdvectionSpec.shear(1.0), noise, 0.0 * y, y, 0.0)
    assert np.array_equal(uy, noise.w(y))
    x = np.linspace(0, 2 * math.pi, 51)
    adv = AdvectionSpec(TrigSeries(), TrigSeries(0.0, (Mode(1.0, kx=1.0),)))
    _, uy = full_advection(adv, noise, x, y, 0.0)
    assert np.max(np.abs(uy - np.cos(x) * noise.w(y))) <= 1e-12


def test_sampled_advection_within_declared_bounds():
    noise = sample_noise(NoiseSpec(seed=2), (-1.0, 6.0))
    adv = AdvectionSpec(TrigSeries(0.0, (Mode(0.3, kx=2.0, y_center=2.0),)),
                        TrigSeries(1.0, (Mode(0.5, kx=1.0),)))
    x = np.linspace(0, 2 * math.pi, 101)
    X, Y = np.meshgrid(x, np.linspace(0, 5, 201), indexing="ij")
    ux, uy = full_advection(adv, noise, X, Y, 0.0)
    C1 = adv.certified_C1(noise.bound_M)
    assert np.abs(ux).max() <= C1 and np.abs(uy).max() <= C1
    gy = np.gradient(uy, Y[0], axis=1)
    gx = np.gradient(uy, x, axis=0)
    assert np.abs(gy).max() <= C1 * 1.01 and np.abs(gx).max() <= C1 * 1.01


def test_u_par_must_not_depend_on_y():
    with pytest.raises(ConfigError):
        AdvectionSpec(TrigSeries(), TrigSeries(0.0, (Mode(1.0, y_center=0.0),)))


def test_front_like_envelopes():
    front_like_envelopes(lambda y: y)
    front_like_envelopes(lambda y: y / 2)
    front_like_envelopes(lambda y: 2 * np.tanh(y) + y / 2)
    with pytest.raises(NotFrontLikeError):
        front_like_envelopes(np.sin, y_range=(-5, 5))


def test_scalar_field_io(tmp_path):
    g = Grid2D((0, 1), (-1, 1), 4, 11)
    f = ScalarField.from_function(g, lambda X, Y: X + Y, time_stamp=0.25)
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0
    f.save_binary(tmp_path / "f.bin")
    h = ScalarField.load_binary(tmp_path / "f.bin")
    assert np.array_equal(h.values, f.values) and h.time_stamp == 0.25 and h.grid == g
    f.to_csv(tmp_path / "f.csv")
    rows = (tmp_path / "f.csv").read_text().splitlines()
    assert rows[0] == "x,y,value" and len(rows) == 45


def test_grid_noise_resolution():
    with pytest.raises(ConfigError):
        Grid2D((0, 1), (0, 10), 1, 11).check_noise_resolution()
