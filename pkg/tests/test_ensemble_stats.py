import math

import numpy as np
import pytest

from hjfront.ensemble_stats import (EnsembleConfig, brownian_front_test,
                                    corrector_convergence_test, null_pass_rates, run_ensemble,
                                    scaling_fit, two_sample_ks, variance_ratio_trend)
from hjfront.fields import AdvectionSpec, SimParams

P01 = (SimParams(0.1, enforce_smallness=False),)


def test_replay_is_bit_identical():
    cfg = EnsembleConfig(2, master_seed=5, params=P01)
    a, b = run_ensemble(cfg), run_ensemble(cfg)
    assert [r["value"] for r in a.records] == [r["value"] for r in b.records]


def test_threads_do_not_change_results():
    a = run_ensemble(EnsembleConfig(6, params=P01))
    b = run_ensemble(EnsembleConfig(6, params=P01, threads=2))
    assert [r["value"] for r in a.records] == [r["value"] for r in b.records]


def test_zero_advection_has_zero_variance():
    tab = run_ensemble(EnsembleConfig(4, params=P01, advection=AdvectionSpec.zero()))
    for probe in ("D(t=0.5)", "D(t=1)"):
        assert np.ptp(tab.values(probe)) == 0.0


def test_row_count(tmp_path):
    tab = run_ensemble(EnsembleConfig(100, params=P01))
    assert len(tab.records) == 100 * 2 and tab.valid
    tab.to_csv(tmp_path / "s.csv")
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 201


def test_brownian_test_accepts_null():
    rng = np.random.default_rng(1)
    eps, t, n = 0.1, 1.0, 400
    half = eps * math.sqrt(t / 2) * rng.standard_normal(n)
    full = half + eps * math.sqrt(t / 2) * rng.standard_normal(n)
    rep = brownian_front_test(np.column_stack([half, full]), eps, (t / 2, t))
    assert rep.passed, rep.checks
    with pytest.raises(ValueError):
        brownian_front_test(np.zeros((10, 2)), eps, (0.5, 1.0))


def test_null_pass_rates():
    rates = null_pass_rates(100)
    assert min(rates.values()) >= 0.95


@pytest.fixture(scope="module")
def long_time_fronts():
    samples, times = {}, {}
    for eps in (0.2, 0.1, 0.05):
        T = eps ** (-2 / 3)
        tab = run_ensemble(EnsembleConfig(
            100, master_seed=1, params=(SimParams(eps, enforce_smallness=False),),
            probe_times=(T / 2, T)))
        samples[eps], times[eps] = tab.values(f"D(t={T:g})"), T
    return samples, times


def test_variance_ratio_improves(long_time_fronts):
    _, point = variance_ratio_trend(*long_time_fronts, n_boot=10)
    assert abs(point[0.05] - 1) < abs(point[0.2] - 1)


@pytest.mark.xfail(reason="with 100 samples per eps the bootstrap spread of the variance ratio "
                          "(about 0.14) exceeds the gaps between eps values", strict=False)
def test_variance_ratio_bootstrap_monotone(long_time_fronts):
    frac, _ = variance_ratio_trend(*long_time_fronts)
    assert frac >= 0.8


def test_corrector_gap_vanishes_at_origin():
    cfg = EnsembleConfig(3, pipeline="corrector", params=(SimParams(0.2, enforce_smallness=False),),
                         probe_xi=(0.0, 1.0))
    tab = run_ensemble(cfg)
    assert np.abs(tab.values("gap(xi=0)")).max() <= 1e-12
    assert np.all(tab.values("sup_gap") > 0)


def test_corrector_convergence_on_synthetic_data():
    rng = np.random.default_rng(0)
    lim = rng.standard_normal(200)
    se = {e: {"gap": e * np.abs(rng.standard_normal(200)),
              "chi": rng.standard_normal(200) + 3 * e} for e in (0.2, 0.1, 0.05)}
    rep = corrector_convergence_test(se, lim)
    assert rep.passed


def test_scaling_fit():
    eps = np.array([0.2, 0.1, 0.05, 0.025])
    slope, ci = scaling_fit(eps, eps)
    assert slope == pytest.approx(1.0, abs=0.01)
    rng = np.random.default_rng(3)
    slope, ci = scaling_fit(eps ** (4 / 3) * (1 + 0.1 * rng.standard_normal(4)), eps)
    assert 1.2 <= slope <= 1.5 and ci[0] <= slope <= ci[1]
    with pytest.raises(ValueError):
        scaling_fit([1, 2, 3], [0.2, 0.15, 0.1])


def test_two_sample_ks_identical():
    x = np.arange(50.0)
    assert two_sample_ks(x, x) == (0.0, 1.0)
