"""
Acceptance suite: each check runs one experiment at its stated tolerance.

Every function returns a :class:`CriterionResult`; :func:`run_all` runs the
selection in order and is what ``hjfront verify`` and the acceptance tests
call.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .ensemble_stats import (EnsembleConfig, brownian_front_test, corrector_convergence_test,
                             null_pass_rates, run_ensemble, scaling_fit, two_sample_ks)
from .fields import AdvectionSpec, Grid2D, Mode, ScalarField, SimParams, TrigSeries
from .front_analysis import compare_fronts, extract_front, sublevel_inclusion
from .hj_solver import SolverConfig, solve_ivp
from .limit_corrector import LimitConfig, hopf_lax_oracle, solve_limit, viscous_consistency_check
from .metric_corrector import (check_bounds, extract_corrector, fit_bound_constants, metric_grid,
                               shear_oracle, solve_rho)
from .noise import BrownianPath, NoiseSpec, sample_brownian, sample_noise

EPS_SWEEP = (0.2, 0.1, 0.05)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    measured: str
    threshold: str
    seconds: float = 0.0
    details: dict = field(default_factory=dict)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.number:2d} {self.name}: {self.measured} "
                f"(required {self.threshold}; {self.seconds:.1f} s)")


def _shear_noise(seed, stream, y_range, hy, spec=None):
    spec = spec or NoiseSpec(seed=seed)
    return sample_noise(spec.with_stream(stream), (y_range[0] - 1.0, y_range[1] + 1.0),
                        h_w=min(0.02, hy))


def _front_run(params, advection, noise, grid, profile, times, scheme=None):
    f0 = ScalarField.from_function(grid, lambda X, Y: profile(Y))
    out = solve_ivp(f0, params, advection, noise,
                    SolverConfig(output_times=times, stop_time=max(times), scheme=scheme))
    return out


def _grid_1d(y_range, hy):
    return Grid2D((0.0, 2 * math.pi), y_range, 1, int(round((y_range[1] - y_range[0]) / hy)) + 1)


# ---------------------------------------------------------------------------


def criterion_1():
    """Exact solution y - t at eps = 0 on a 256 x 1024 grid."""
    errs, secs, ok = {}, {}, True
    for r in (1.0, 2.0):
        grid = Grid2D((0.0, 2 * math.pi), (-1.0, 3.0), 256, 1024)
        t0 = time.perf_counter()
        out = _front_run(SimParams(0.0, r=r), None, None, grid, lambda y: y, (1.0,))[-1]
        secs[r] = time.perf_counter() - t0
        X, Y = grid.mesh()
        errs[r] = float(np.abs(out.values - (Y - 1.0)).max())
        ok &= errs[r] <= 2 * grid.hy and secs[r] < 30.0
    hy = 4.0 / 1023
    return CriterionResult(
        1, "exact solution y - t", ok,
        f"sup err r=1 {errs[1.0]:.2e}, r=2 {errs[2.0]:.2e}; runtime {secs[1.0]:.1f}/{secs[2.0]:.1f} s",
        f"<= 2hy = {2 * hy:.2e}, < 30 s each", details={"errors": errs, "runtime": secs})


def criterion_2():
    """Front speed mu*kappa = 1.25 for v0 = y/2."""
    mu = 2.0
    kappa = 1.0 / (2 * mu**2) + 0.5
    target = mu * kappa
    grid = _grid_1d((-2.0, 3.0), 0.005)
    u_par = 0.04
    adv = AdvectionSpec.shear(u_par)
    speeds, ok = {}, True
    for eps in (0.0, 0.05):
        noise = _shear_noise(2, 0, grid.y_range, grid.hy) if eps > 0 else None
        params = SimParams(eps, r=2.0)
        if noise is not None:
            params.check_smallness(adv, noise.bound_M)
        out = _front_run(params, adv if eps > 0 else None, noise, grid, lambda y: y / mu,
                         (0.5, 1.0))
        y = [extract_front(o).y_front[0] for o in out]
        speeds[eps] = (y[1] - y[0]) / 0.5
        u_inf = u_par * (float(np.abs(noise.w_values).max()) if noise is not None else 0.0)
        ok &= abs(speeds[eps] - target) <= 0.02 * target + eps * u_inf
    return CriterionResult(
        2, "counterexample front speed", ok,
        ", ".join(f"eps={e:g}: {s:.4f}" for e, s in speeds.items()),
        f"{target:.4f} +- 2% + eps*||u||", details={"speeds": speeds})


def criterion_3():
    """Metric problem against the shear quadrature."""
    adv = AdvectionSpec.shear(1.0)
    res, ok = {}, True
    for eps in EPS_SWEEP:
        grid = metric_grid(eps, adv, hy=0.02)
        noise = _shear_noise(11, 0, grid.y_range, grid.hy)
        t0 = time.perf_counter()
        rho = solve_rho(SimParams(eps, enforce_smallness=False), adv, noise, grid)
        secs = time.perf_counter() - t0
        m = grid.y <= 20.0
        err = float(np.abs(rho.values[0] - shear_oracle(noise, eps, 1.0, grid.y))[m].max())
        res[eps] = (err / grid.hy, secs)
        ok &= err <= 5 * grid.hy and secs < 10.0
    return CriterionResult(
        3, "metric problem vs quadrature oracle", ok,
        ", ".join(f"eps={e:g}: {v[0]:.2f} hy in {v[1]:.1f} s" for e, v in res.items()),
        "<= 5 hy, < 10 s per eps", details={"err_over_hy": {e: v[0] for e, v in res.items()}})


def criterion_4(n_seeds=8):
    """Printed and fitted a priori bounds with fit-then-verify."""
    adv = AdvectionSpec.shear(1.0)
    runs, cors = {}, {}
    for eps in EPS_SWEEP:
        runs[eps], cors[eps] = [], []
        for s in range(n_seeds):
            grid = metric_grid(eps, adv, hy=0.02)
            noise = _shear_noise(100, s, grid.y_range, grid.hy)
            rho = solve_rho(SimParams(eps, enforce_smallness=False), adv, noise, grid)
            runs[eps].append((rho, noise, eps, adv))
            cors[eps].append((extract_corrector(rho, eps, noise, adv), noise, eps, adv))
    out, ok = {}, True
    printed = all(check_bounds(r[0], r[1], "bounds_rho1").passed
                  for e in EPS_SWEEP for r in runs[e])
    printed_weak = all(check_bounds(r[0], r[1], "weak_bounds_rho", e, adv).passed
                       for e in EPS_SWEEP for r in runs[e])
    out["bounds_rho1"] = printed
    out["weak_bounds_rho (constant 3)"] = printed_weak
    ok &= printed and printed_weak
    fitted = {}
    for which in ("weak_bounds_rho", "lipschitz", "bounds_rho", "chi_bound"):
        pool = cors if which == "chi_bound" else runs
        c = fit_bound_constants(pool[EPS_SWEEP[0]], which)
        fitted[which] = c
        good = all(check_bounds(r[0], r[1], which, e, adv, constants=c).passed
                   for e in EPS_SWEEP[1:] for r in pool[e])
        out[which] = good
        ok &= good
    meas = "; ".join(f"{k}: {'ok' if v else 'violated'}" for k, v in out.items())
    return CriterionResult(4, "a priori bounds", ok, meas,
                           "printed bounds nodewise; constants fitted at eps=0.2 hold at 0.1, 0.05",
                           details={"fitted": fitted, "checks": out})


def criterion_5(n=200, threads=1):
    """Corrector convergence under the W^eps coupling, u_par = 1."""
    se = {}
    for eps in EPS_SWEEP:
        cfg = EnsembleConfig(n, master_seed=3, params=(SimParams(eps, enforce_smallness=False),),
                             pipeline="corrector", probe_xi=(0.0, 1.0), threads=threads)
        tab = run_ensemble(cfg)
        se[eps] = {"gap": tab.values("sup_gap"), "chi": tab.values("chi(xi=1)"),
                   "gap0": tab.values("gap(xi=0)")}
    lim = run_ensemble(EnsembleConfig(n, master_seed=99, pipeline="limit", probe_xi=(0.0, 1.0),
                                      threads=threads))
    rep = corrector_convergence_test(se, lim.values("chi(xi=1)"))
    med, ksd = rep.extra["median_gap"], rep.extra["ks_distance"]
    return CriterionResult(
        5, "corrector convergence (coupled)", rep.passed,
        "median sup gap " + " > ".join(f"{med[e]:.4f}" for e in EPS_SWEEP)
        + "; KS distance " + ", ".join(f"{ksd[e]:.3f}" for e in EPS_SWEEP),
        "median strictly decreasing, KS distance non-increasing",
        details={"report": rep.to_dict(),
                 "max_gap_at_xi0": max(float(np.max(se[e]["gap0"])) for e in EPS_SWEEP)})


def _front_ensemble(eps, n, r=1.0, times=(0.5, 1.0), seed=7, hy=0.01, threads=1):
    cfg = EnsembleConfig(n, master_seed=seed, noise=NoiseSpec(seed=seed),
                         params=(SimParams(eps, r=r, enforce_smallness=False),),
                         pipeline="front", probe_times=times, hy=hy, threads=threads)
    tab = run_ensemble(cfg)
    probes = [f"D(t={t:g})" for t in times]
    mat, ids = tab.matrix(probes)
    return mat, ids, tab


def criterion_6(n=200, threads=1):
    """Brownian front fluctuations at eps = 0.1, t = 1."""
    eps, t = 0.1, 1.0
    mat, _, tab = _front_ensemble(eps, n, times=(t / 2, t), threads=threads)
    rep = brownian_front_test(mat, eps, (t / 2, t))
    listed = ("variance", "gaussian", "decorrelation")
    ok = all(rep.checks[k] for k in listed) and tab.valid
    # same statistics where the front has crossed many noise cells
    T = eps ** (-2.0 / 3.0)
    mat2, _, _ = _front_ensemble(eps, n, times=(T / 2, T), threads=threads)
    rep2 = brownian_front_test(mat2, eps, (T / 2, T))
    return CriterionResult(
        6, "Brownian front fluctuations", ok,
        f"Var ratio {rep.variance_ratio:.3f}, KS p {rep.ks_p:.2e}, "
        f"|corr| {abs(rep.extra['increment_corr']):.3f}"
        f" [at t = eps^-2/3: ratio {rep2.variance_ratio:.3f}, KS p {rep2.ks_p:.2e}, "
        f"|corr| {abs(rep2.extra['increment_corr']):.3f}]",
        f"ratio in [0.7, 1.3], p >= 0.01, |corr| <= {4 / math.sqrt(n):.3f}",
        details={"t=1": rep.to_dict(), "t=eps^-2/3": rep2.to_dict()})


def criterion_7(n=200, n_sweep=20, threads=1):
    """G-equation and eikonal fronts coincide to higher order."""
    eps = 0.1
    times = (0.25, 0.5, 0.75, 1.0)
    hy = 0.01
    m1, _, _ = _front_ensemble(eps, n, r=1.0, times=times, hy=hy, threads=threads)
    m2, _, _ = _front_ensemble(eps, n, r=2.0, times=times, hy=hy, threads=threads)
    gap = float(np.abs(m1 - m2).max())
    tol = 3 * eps ** (4.0 / 3.0) + 2 * hy
    ks_d, p = two_sample_ks(m1[:, -1], m2[:, -1])
    # the displacement law at t = 1 sits on a few atoms; a small systematic
    # shift between the models then gives a large KS distance
    atoms = int(np.unique(np.round(m1[:, -1], 3)).size)
    shift = float(np.mean(m2[:, -1] - m1[:, -1]))
    gaps = []
    for e in EPS_SWEEP:
        a, _, _ = _front_ensemble(e, n_sweep, r=1.0, times=times, hy=hy, threads=threads)
        b, _, _ = _front_ensemble(e, n_sweep, r=2.0, times=times, hy=hy, threads=threads)
        gaps.append(float(np.abs(a - b).max(axis=1).mean()))
    expo, ci = scaling_fit(gaps, EPS_SWEEP)
    ok = gap <= tol and p >= 0.01 and expo > 2.0 / 3.0
    return CriterionResult(
        7, "G-equation vs eikonal fronts", ok,
        f"max gap {gap:.4f}, KS p {p:.2e} (distance {ks_d:.2f}, {atoms} distinct values, "
        f"mean shift {shift:.4f}), gap exponent {expo:.2f} [{ci[0]:.2f}, {ci[1]:.2f}]",
        f"gap <= {tol:.4f}, p >= 0.01, exponent > 2/3",
        details={"gap": gap, "ks_p": p, "ks_distance": ks_d, "atoms": atoms, "mean_shift": shift,
                 "sweep_gaps": gaps, "exponent": expo, "ci": ci})


def criterion_8(n_seeds=5):
    """Fronts do not depend on the front-like initial profile (r = 1)."""
    eps = 0.1
    times = (0.2, 0.4, 0.6, 0.8, 1.0)
    grid = _grid_1d((-1.5, 2.5), 0.01)
    adv = AdvectionSpec.shear(1.0)
    worst = 0.0
    for s in range(n_seeds):
        noise = _shear_noise(8, s, grid.y_range, grid.hy)
        p = SimParams(eps, enforce_smallness=False)
        a = _front_run(p, adv, noise, grid, lambda y: y, times)
        b = _front_run(p, adv, noise, grid, lambda y: 2 * np.tanh(y) + y / 2, times)
        worst = max(worst, max(compare_fronts(extract_front(fa), extract_front(fb))
                               for fa, fb in zip(a, b)))
    ok = worst <= 3 * grid.hy
    return CriterionResult(8, "level-set invariance", ok, f"max distance {worst:.2e}",
                           f"<= 3hy = {3 * grid.hy:.3f}")


def criterion_9():
    """Sub-level sandwich for the eikonal model and its failure for v0 = y/2."""
    eps = 0.1
    adv = AdvectionSpec.shear(1.0)
    grid = metric_grid(eps, adv, hy=0.02, negative=True)
    noise = _shear_noise(9, 0, grid.y_range, grid.hy)
    rho1 = solve_rho(SimParams(eps, r=1.0, enforce_smallness=False), adv, noise, grid)
    rho2 = solve_rho(SimParams(eps, r=2.0, enforce_smallness=False), adv, noise, grid)
    p2 = SimParams(eps, r=2.0, enforce_smallness=False)
    times = (0.5, 1.0)
    v = solve_ivp(rho2, p2, adv, noise, SolverConfig(output_times=times, stop_time=1.0))
    margins, ok = {}, True
    tol = 2 * grid.hy
    for vt in v:
        t = vt.time_stamp
        g_ptw = rho1.with_values(rho1.values - t, time_stamp=t)
        v_ptw = rho2.with_values(rho2.values - t, time_stamp=t)
        h1, m1 = sublevel_inclusion(g_ptw, vt, tol)
        h2, m2 = sublevel_inclusion(vt, v_ptw, tol)
        margins[t] = (m1, m2)
        ok &= h1 and h2
    # counterexample: v0 = y / 2 violates v0 >= v_ptw(., 0)
    w = solve_ivp(rho2.with_values(0.5 * grid.mesh()[1]), p2, adv, noise,
                  SolverConfig(output_times=times, stop_time=1.0))
    fails = {}
    for wt in w:
        t = wt.time_stamp
        g_ptw = rho1.with_values(rho1.values - t, time_stamp=t)
        v_ptw = rho2.with_values(rho2.values - t, time_stamp=t)
        inner = sublevel_inclusion(g_ptw, wt, tol)
        outer = sublevel_inclusion(wt, v_ptw, tol)
        fails[t] = (inner, outer)
        ok &= not (inner[0] and outer[0])
    meas = ("sandwich margins " + ", ".join(f"t={t:g}: {a:.1e}/{b:.1e}" for t, (a, b) in margins.items())
            + "; v0=y/2: " + ", ".join(
                f"t={t:g}: inner {'holds' if i[0] else 'fails'}, outer {'holds' if o[0] else 'fails'}"
                f" (margin {o[1]:.3f})" for t, (i, o) in fails.items()))
    return CriterionResult(9, "sub-level sandwich", ok, meas,
                           f"both inclusions within 2hy = {tol:.2f}; sandwich broken for v0 = y/2",
                           details={"margins": margins})


def criterion_10():
    """f - f_aut scales like eps^(1 + alpha)."""
    adv = AdvectionSpec(TrigSeries(), TrigSeries(1.0, (Mode(0.5, omega=1.0, phase=-math.pi / 2),)))
    grid = _grid_1d((-1.0, 2.5), 0.01)
    res, ok = {}, True
    for alpha in (1.0, 2.0):
        d = []
        for eps in EPS_SWEEP:
            noise = _shear_noise(10, 0, grid.y_range, grid.hy)
            a = _front_run(SimParams(eps, alpha=alpha, enforce_smallness=False), adv, noise, grid,
                           lambda y: y, (1.0,))[-1]
            b = _front_run(SimParams(eps, enforce_smallness=False), adv, noise, grid,
                           lambda y: y, (1.0,))[-1]
            d.append(float(np.abs(a.values - b.values).max()))
        expo, ci = scaling_fit(d, EPS_SWEEP)
        res[alpha] = (expo, d)
        ok &= expo >= (1 + alpha) - 0.2
    return CriterionResult(
        10, "time-dependent perturbation bound", ok,
        ", ".join(f"alpha={a:g}: exponent {v[0]:.2f}" for a, v in res.items()),
        "exponent >= 1 + alpha - 0.2", details={"results": res})


def criterion_11(n_drivers=3):
    """Limit solver against Hopf-Lax; viscous = inviscid for constant u_par."""
    prof = TrigSeries(0.0, (Mode(1.0, kx=1.0),))
    nx = 64
    hx = 2 * math.pi / nx
    worst = 0.0
    for s in range(n_drivers):
        xi = np.linspace(0.0, 0.5, 11)
        W = BrownianPath(xi, sample_brownian(s, xi).W_values, "synthetic")
        cf = solve_limit(LimitConfig(W, prof, nx=nx, xi_max=0.5, interpolation="step"))
        orc = hopf_lax_oracle(prof, W, cf.x_grid, cf.xi_grid, 1024)
        worst = max(worst, float(np.abs(cf.chi_bar - orc).max()))
    drv = sample_brownian(0, np.linspace(0.0, 1.0, 201))
    const = [viscous_consistency_check(LimitConfig(drv, TrigSeries(c), nx=nx))["max_abs_difference"]
             for c in (1.0, 0.7)]
    ok = worst <= 3 * hx and max(const) == 0.0
    return CriterionResult(
        11, "limit solver vs Hopf-Lax", ok,
        f"sup err {worst:.2e}; viscous-inviscid difference for constant u_par {max(const):.1e}",
        f"<= 3hx = {3 * hx:.3f}; exactly 0")


def criterion_12(elapsed=None, budget=7200.0):
    """Statistical checks pass their own null models."""
    rates = null_pass_rates(100)
    ok = min(rates.values()) >= 0.95
    meas = ", ".join(f"{k} {v:.2f}" for k, v in rates.items())
    if elapsed is not None:
        ok &= elapsed < budget
        meas += f"; suite runtime {elapsed / 60:.1f} min"
    return CriterionResult(12, "harness null-model soundness", ok, meas,
                           "pass rate >= 0.95 each; suite < 2 h", details={"rates": rates})


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 13)}
NAMES = {
    1: "exact solution y - t", 2: "counterexample front speed",
    3: "metric problem vs quadrature oracle", 4: "a priori bounds",
    5: "corrector convergence (coupled)", 6: "Brownian front fluctuations",
    7: "G-equation vs eikonal fronts", 8: "level-set invariance", 9: "sub-level sandwich",
    10: "time-dependent perturbation bound", 11: "limit solver vs Hopf-Lax",
    12: "harness null-model soundness",
}


def run_all(selection=None, threads=1, log=print):
    selection = list(selection or range(1, 13))
    results = []
    started = time.perf_counter()
    for i in selection:
        t0 = time.perf_counter()
        kwargs = {}
        if i in (5, 6, 7):
            kwargs["threads"] = threads
        if i == 12:
            kwargs["elapsed"] = time.perf_counter() - started
        try:
            res = CRITERIA[i](**kwargs)
        except Exception as exc:
            res = CriterionResult(i, NAMES[i], False,
                                  f"error: {type(exc).__name__}: {exc}", "-")
        res.seconds = time.perf_counter() - t0
        if log:
            log(res.line())
        results.append(res)
    return results
