import math

import numpy as np
import pytest
from scipy import integrate

from hjfront.noise import (BrownianPath, Mollifier, NoisePath, NoiseSpec, dependency_range_check,
                           estimate_normalization, integrate_W_eps, lag_correlations,
                           make_driver_path, noise_from_steps, sample_brownian, sample_noise,
                           walk_steps)


def test_mollifier_shape():
    m = Mollifier()
    s = np.linspace(-0.5, 1.5, 4001)
    p = m.pdf(s)
    assert np.all(p >= 0)
    assert np.all(p[(s < 0) | (s > 1)] == 0)
    assert integrate.quad(m.pdf, 0, 1)[0] == pytest.approx(1.0, abs=1e-10)
    # C^1: derivative matches finite differences and vanishes at the support edges
    h = 1e-6
    mid = np.linspace(0.01, 0.99, 50)
    fd = (m.pdf(mid + h) - m.pdf(mid - h)) / (2 * h)
    assert np.allclose(fd, m.deriv(mid), atol=1e-5)
    assert abs(m.deriv(np.array([0.0, 1.0]))).max() < 1e-8


def test_bound_at_least_one():
    assert NoiseSpec().certified_bound() >= 1.0
    with pytest.raises(ValueError):
        NoiseSpec(bound_M=0.5)


def test_zero_walk_gives_zero_noise():
    spec = NoiseSpec()
    path = noise_from_steps(spec, np.zeros(20), 0, (1.0, 15.0))
    assert np.all(path.w_values == 0) and np.all(path.w_deriv_values == 0)


def test_single_step_matches_quadrature():
    spec = NoiseSpec()
    m = spec.mollifier
    steps = np.zeros(12)
    k0 = -2
    steps[1 - k0] = 1.0  # S_1 = 1
    path = noise_from_steps(spec, steps, k0, (-1.0, 8.0))
    y = np.linspace(-0.5, 7.5, 37)
    # w = sum_k S_k (1_[k, k+1) * rho)(y); single step: int_{y-1}^{y} 1_[1,2)(z) ... by quadrature
    def oracle(yy):
        n = math.floor(yy)
        s = yy - n
        left = 1.0 if n == 1 else 0.0
        right = 1.0 if n + 1 == 1 else 0.0
        cdf = integrate.quad(m.pdf, 0, s, epsabs=1e-13)[0] if s > 0 else 0.0
        return left * (1 - cdf) + right * cdf
    ref = np.array([oracle(v) for v in y])
    got = path.w(y)
    assert np.max(np.abs(got - ref)) <= 1e-6 * max(1.0, np.abs(ref).max())


def test_rademacher_bounds_and_determinism():
    spec = NoiseSpec(seed=5)
    a = sample_noise(spec, (-10.0, 300.0))
    b = sample_noise(spec, (-10.0, 300.0))
    M = spec.certified_bound()
    assert np.abs(a.w_values).max() <= M and np.abs(a.w_deriv_values).max() <= M
    assert np.array_equal(a.w_values, b.w_values)
    assert np.array_equal(a.w_deriv_values, b.w_deriv_values)


def test_windows_agree():
    spec = NoiseSpec(seed=3)
    a = sample_noise(spec, (0.0, 600.0))
    b = sample_noise(spec, (250.0, 400.0))
    y = np.linspace(260, 390, 777)
    assert np.array_equal(a.w(y), b.w(y))


def test_walk_steps_are_rademacher():
    s = walk_steps(NoiseSpec(seed=1), -300, 300)
    assert set(np.unique(s)) <= {-1.0, 1.0}


def test_w_outside_range_raises():
    path = sample_noise(NoiseSpec(), (0.0, 5.0))
    with pytest.raises(ValueError):
        path.w(np.array([10.0]))


def test_W_eps_zero_and_constant():
    y = np.linspace(-2, 10, 1201)
    zero = NoisePath.synthetic(y, 0.0)
    assert np.all(integrate_W_eps(zero, 0.1, np.linspace(0, 0.5, 9)) == 0)
    one = NoisePath.synthetic(y, 1.0)
    eps = 0.1
    xi = np.linspace(0, eps ** (2 / 3) * 9.5, 11)
    assert np.allclose(integrate_W_eps(one, eps, xi), eps ** (-1 / 3) * xi, atol=1e-10, rtol=0)


@pytest.mark.xfail(reason="the lag-0.05 quadratic variation of W^eps at eps = 0.05 sits near 0.3, "
                          "since the noise is smooth below the unit correlation length", strict=True)
def test_W_eps_quadratic_variation():
    eps, lag = 0.05, 0.05
    qv = []
    for s in range(100):
        path = sample_noise(NoiseSpec(seed=s), (-1.0, eps ** (-2 / 3) + 2))
        xi = np.arange(0.0, 1.0 + 1e-12, lag)
        W = integrate_W_eps(path, eps, xi)
        qv.append(np.sum(np.diff(W) ** 2))
    assert abs(np.mean(qv) - 1.0) <= 0.15


def test_normalization_oracles():
    spec = NoiseSpec()
    sig, se = estimate_normalization(spec, 2000)
    # analytic value for the default bump with Rademacher steps is 1
    assert abs(sig - 1.0) <= 0.05
    assert abs(sig - 1.0) <= 3 * se + 1e-12
    sig2, se2 = estimate_normalization(NoiseSpec(scale_sigma=2.0), 2000)
    assert abs(sig2 - sig / 2) <= 3 * max(se2, se / 2)


def test_lag_correlations():
    spec = NoiseSpec()
    c = lag_correlations(spec, 2000, [0.0, 0.5, 2.0])
    assert c[0] == pytest.approx(1.0)
    assert abs(c[1]) > 0.1
    assert abs(c[2]) <= 4 / math.sqrt(2000)
    assert dependency_range_check(spec, 2000) <= 4 / math.sqrt(2000) * 1.5
    with pytest.raises(ValueError):
        dependency_range_check(spec, 100)


def test_driver_path_coupled():
    eps = 0.1
    zero = NoisePath.synthetic(np.linspace(-1, 30, 3101), 0.0)
    d = make_driver_path(zero, eps, (0.0, 1.0))
    assert d.provenance == "coupled_from_noise" and d.W_values[0] == 0
    assert np.all(d.W_values == 0)
    path = sample_noise(NoiseSpec(seed=2), (-1.0, 30.0))
    d = make_driver_path(path, eps, (0.0, 1.0))
    assert d.W_values[0] == 0.0
    with pytest.raises(ValueError):
        make_driver_path(path, eps, (0.0, 10.0))


def test_sample_brownian():
    a = sample_brownian(4, np.linspace(0, 1, 11))
    b = sample_brownian(4, np.linspace(0, 1, 11))
    assert np.array_equal(a.W_values, b.W_values)
    single = sample_brownian(0, np.array([0.0]))
    assert np.all(single.W_values == 0)
    xi = np.array([0.0, 0.5, 1.0])
    W = np.array([sample_brownian(s, xi).W_values for s in range(1000)])
    assert abs(W[:, 2].var() - 1.0) <= 0.15
    inc1, inc2 = W[:, 1], W[:, 2] - W[:, 1]
    assert abs(np.corrcoef(inc1, inc2)[0, 1]) <= 4 / math.sqrt(1000)


def test_brownian_path_interp_and_range():
    p = BrownianPath(np.array([0.0, 1.0]), np.array([0.0, 2.0]), "synthetic")
    assert p(0.5) == pytest.approx(1.0)
    assert p.step_value(0.5) == 0.0
    with pytest.raises(ValueError):
        p(2.0)


def _exact_var_W_eps(spec, eps):
    # W^eps(1) = eps^(1/3) sum_k X_k c_k with c_k the integral of the unit-step path
    L = eps ** (-2 / 3)
    k0, k1 = -2, int(math.ceil(L)) + 2
    c = []
    for k in range(k0, k1 + 1):
        steps = np.zeros(k1 - k0 + 1)
        steps[k - k0] = 1.0
        c.append(noise_from_steps(spec, steps, k0, (-1.0, L + 1.0), h_w=0.002).integral(L))
    return eps ** (2 / 3) * float(np.sum(np.square(c)))


def test_brownian_scaling_of_W_eps():
    spec = NoiseSpec(seed=0)
    exact = [_exact_var_W_eps(spec, eps) for eps in (0.2, 0.1, 0.05)]
    errs = [abs(v - 1.0) for v in exact]
    assert errs[0] > errs[1] > errs[2]
    eps = 0.05
    L = eps ** (-2 / 3)
    vals = [integrate_W_eps(sample_noise(NoiseSpec(seed=0, stream=s), (-1.0, L + 2.0)),
                            eps, np.array([1.0]))[0] for s in range(500)]
    assert abs(np.var(vals) - 1.0) <= 0.15
    assert abs(np.var(vals) - exact[2]) <= 4 * math.sqrt(2 / 500) * exact[2]
