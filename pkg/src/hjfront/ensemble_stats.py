"""
Monte Carlo ensembles and the statistical checks run on them.

Every sample draws its noise from its own stream ``(master_seed, sample_id)``,
so a sample's values do not depend on which worker ran it or in what order.
Results are merged by sample index.
"""

from __future__ import annotations

import csv
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats

from .fields import AdvectionSpec, Grid2D, ScalarField, SimParams
from .front_analysis import extract_front
from .hj_solver import SolverConfig, solve_ivp
from .limit_corrector import LimitConfig, solve_limit
from .metric_corrector import extract_corrector, metric_grid, solve_rho
from .noise import NoiseSpec, make_driver_path, sample_brownian, sample_noise

PIPELINES = ("front", "corrector", "limit")


class EnsembleError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnsembleConfig:
    """Ensemble description.

    Parameters
    ----------
    n_samples : int
    master_seed : int
    params : tuple of SimParams
        One ensemble member is run per sample and per entry.
    pipeline : {"front", "corrector", "limit"}
    probe_times : tuple of float
        Times at which front displacements are recorded ("front").
    probe_xi : tuple of float
        Slow-scale points for corrector probes ("corrector", "limit").
    probe_x_index : int
        x-column used for the probes.
    """

    n_samples: int
    master_seed: int = 0
    params: tuple = (SimParams(0.1, enforce_smallness=False),)
    pipeline: str = "front"
    advection: AdvectionSpec = field(default_factory=lambda: AdvectionSpec.shear(1.0))
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    probe_times: tuple = (0.5, 1.0)
    probe_xi: tuple = (0.0, 0.5, 1.0)
    probe_x_index: int = 0
    hy: float = 0.01
    nx: int = 1
    y_margin: tuple = (1.0, 1.5)
    initial: str = "linear"
    metric_hy: float = 0.02
    limit_nx: int = 16
    limit_dxi: float = 0.005
    threads: int = 1
    stream_offset: int = 0

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        object.__setattr__(self, "probe_times", tuple(float(t) for t in self.probe_times))
        object.__setattr__(self, "probe_xi", tuple(float(x) for x in self.probe_xi))
        if self.n_samples < 2:
            raise ValueError("n_samples must be at least 2")
        if self.pipeline not in PIPELINES:
            raise ValueError(f"pipeline must be one of {PIPELINES}")
        if not self.params:
            raise ValueError("at least one parameter set is required")

    def stream_of(self, sample_id):
        return self.stream_offset + sample_id


# ---------------------------------------------------------------------------
# pipelines (module level so they pickle for worker processes)


INITIAL_PROFILES = {
    "linear": lambda y: y,
    "tanh": lambda y: 2.0 * np.tanh(y) + 0.5 * y,
    "half": lambda y: 0.5 * y,
}


def front_sample(cfg: EnsembleConfig, params: SimParams, sample_id: int):
    """Displacements ``y_front(x, t) - t`` at the probe times."""
    T = max(cfg.probe_times)
    lo, hi = -cfg.y_margin[0], T + cfg.y_margin[1]
    ny = int(round((hi - lo) / cfg.hy)) + 1
    grid = Grid2D((0.0, 2 * math.pi), (lo, hi), cfg.nx, ny)
    spec = cfg.noise.with_stream(cfg.stream_of(sample_id))
    noise = sample_noise(spec, (lo - 1.0, hi + 1.0), h_w=min(0.02, grid.hy))
    if noise is not None:
        params.check_smallness(cfg.advection, noise.bound_M)
    f0 = ScalarField.from_function(grid, lambda X, Y: INITIAL_PROFILES[cfg.initial](Y))
    out = solve_ivp(f0, params, cfg.advection, noise,
                    SolverConfig(output_times=cfg.probe_times, stop_time=T))
    rows = {}
    for fld in out:
        fr = extract_front(fld)
        if fr.flagged[cfg.probe_x_index]:
            raise EnsembleError(f"front left the domain at t = {fld.time_stamp:g}")
        rows[f"D(t={fld.time_stamp:g})"] = float(fr.y_front[cfg.probe_x_index] - fld.time_stamp)
    return rows


def corrector_sample(cfg: EnsembleConfig, params: SimParams, sample_id: int):
    """``chi^eps``, ``W^eps`` and the coupled limit gap at the probe points."""
    eps = params.eps
    grid = metric_grid(eps, cfg.advection, hy=cfg.metric_hy, nx=cfg.nx)
    spec = cfg.noise.with_stream(cfg.stream_of(sample_id))
    noise = sample_noise(spec, (-1.0, grid.y_range[1] + 1.0), h_w=min(0.02, grid.hy))
    rho = solve_rho(params, cfg.advection, noise, grid)
    xi_max = max(cfg.probe_xi)
    corr = extract_corrector(rho, eps, noise, cfg.advection)
    ix = cfg.probe_x_index
    rows = {}
    for xi in cfg.probe_xi:
        rows[f"chi(xi={xi:g})"] = float(corr.at(ix, xi))
        rows[f"chi_bar(xi={xi:g})"] = float(corr.at(ix, xi, shifted=True))
        rows[f"W(xi={xi:g})"] = float(np.interp(xi, corr.xi_grid, corr.meta["W"]))
    rows["sup_chi_bar"] = corr.sup_abs(xi_max)
    # pathwise coupling: drive the limit equation with this sample's W^eps
    drv = make_driver_path(noise, eps, (0.0, xi_max),
                           n_nodes=int(round(xi_max / cfg.limit_dxi)) + 1)
    lim = solve_limit(LimitConfig(drv, cfg.advection.u_par, nx=max(cfg.limit_nx, 3),
                                  xi_max=xi_max))
    xs = grid.x
    lim_ix = int(np.argmin(np.abs(lim.x_grid - xs[ix])))
    m = corr.xi_grid <= xi_max + 1e-12
    chi_lim = np.interp(corr.xi_grid[m], lim.xi_grid, lim.chi[lim_ix])
    rows["sup_gap"] = float(np.abs(corr.chi[ix, m] - chi_lim).max())
    for xi in cfg.probe_xi:
        rows[f"gap(xi={xi:g})"] = float(abs(corr.at(ix, xi)
                                            - np.interp(xi, lim.xi_grid, lim.chi[lim_ix])))
    return rows


def limit_sample(cfg: EnsembleConfig, params: SimParams, sample_id: int):
    """Limit corrector driven by an independently sampled Brownian path."""
    xi_max = max(cfg.probe_xi)
    grid = np.linspace(0.0, xi_max, int(round(xi_max / cfg.limit_dxi)) + 1)
    drv = sample_brownian(cfg.master_seed, grid, stream=cfg.stream_of(sample_id))
    lim = solve_limit(LimitConfig(drv, cfg.advection.u_par, nx=max(cfg.limit_nx, 3),
                                  xi_max=xi_max))
    ix = min(cfg.probe_x_index, lim.x_grid.size - 1)
    return {f"chi(xi={xi:g})": float(np.interp(xi, lim.xi_grid, lim.chi[ix]))
            for xi in cfg.probe_xi}


_PIPELINE_FUNCS = {"front": front_sample, "corrector": corrector_sample, "limit": limit_sample}


def _job(args):
    cfg, k, sample_id = args
    params = cfg.params[k]
    started = time.perf_counter()
    try:
        rows = _PIPELINE_FUNCS[cfg.pipeline](cfg, params, sample_id)
        err = None
    except Exception as exc:  # recorded per sample, the ensemble goes on
        rows = None
        err = f"{type(exc).__name__}: {exc}"
        if not isinstance(exc, (EnsembleError, ValueError, RuntimeError, FloatingPointError)):
            err += "\n" + traceback.format_exc(limit=3)
    return k, sample_id, rows, err, time.perf_counter() - started


@dataclass
class SampleTable:
    """Long-format results: one record per (sample, parameter set, probe)."""

    records: list
    failures: list
    n_samples: int
    n_params: int
    master_seed: int

    @property
    def exclusion_rate(self):
        return len(self.failures) / max(1, self.n_samples * self.n_params)

    @property
    def valid(self):
        return self.exclusion_rate <= 0.05

    def values(self, probe, param_index=0):
        """Probe values ordered by sample id (failed samples omitted)."""
        out = [(r["sample_id"], r["value"]) for r in self.records
               if r["probe"] == probe and r["param_index"] == param_index]
        return np.array([v for _, v in sorted(out)])

    def matrix(self, probes, param_index=0):
        """Samples x probes array over samples that produced every probe."""
        by = {}
        for r in self.records:
            if r["param_index"] == param_index and r["probe"] in probes:
                by.setdefault(r["sample_id"], {})[r["probe"]] = r["value"]
        ids = sorted(i for i, d in by.items() if len(d) == len(probes))
        return np.array([[by[i][p] for p in probes] for i in ids]), ids

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["sample_id", "seed", "stream", "param_index", "eps", "r",
                          "probe", "value"])
            for r in self.records:
                out.writerow([r["sample_id"], r["seed"], r["stream"], r["param_index"],
                              repr(r["eps"]), repr(r["r"]), r["probe"], repr(r["value"])])


def run_ensemble(config: EnsembleConfig) -> SampleTable:
    """Run every (parameter set, sample) job and merge by index.

    Raises :class:`EnsembleError` if every sample fails.
    """
    jobs = [(config, k, i) for k in range(len(config.params)) for i in range(config.n_samples)]
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as ex:
            results = list(ex.map(_job, jobs, chunksize=max(1, len(jobs) // (4 * config.threads))))
    else:
        results = [_job(j) for j in jobs]
    results.sort(key=lambda r: (r[0], r[1]))
    records, failures = [], []
    for k, i, rows, err, secs in results:
        p = config.params[k]
        if err is not None:
            failures.append({"sample_id": i, "param_index": k, "error": err})
            continue
        for probe in sorted(rows):
            records.append({"sample_id": i, "seed": config.master_seed
                            if config.pipeline == "limit" else config.noise.seed,
                            "stream": config.stream_of(i), "param_index": k,
                            "eps": p.eps, "r": p.r, "probe": probe, "value": rows[probe],
                            "runtime": secs})
    if not records:
        raise EnsembleError("all samples failed: " + (failures[0]["error"] if failures else ""))
    return SampleTable(records, failures, config.n_samples, len(config.params),
                       config.master_seed)


# ---------------------------------------------------------------------------
# statistics


@dataclass
class StatsReport:
    n: int
    probes: dict = field(default_factory=dict)
    ks_stat: float | None = None
    ks_p: float | None = None
    variance_ratio: float | None = None
    exponent: float | None = None
    exponent_ci: tuple | None = None
    checks: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(self.checks.values())

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


def describe(x):
    x = np.asarray(x, dtype=float)
    return {"mean": float(x.mean()), "variance": float(x.var(ddof=1)),
            "skewness": float(stats.skew(x)) if x.size > 2 and x.std() > 0 else 0.0}


def brownian_front_test(samples, eps, times, min_samples=50):
    """Check front displacements against ``eps`` times a Brownian motion.

    ``samples`` has shape ``(n, 2)`` holding ``D(t/2)`` and ``D(t)`` with
    ``times = (t/2, t)``.  Four checks on ``D(t)``:

    * ``mean``: ``|mean| <= 3`` standard errors;
    * ``variance``: ``Var D / (eps^2 t)`` in ``[0.7, 1.3]``;
    * ``gaussian``: KS p-value of ``D / sqrt(eps^2 t)`` against N(0, 1) >= 0.01;
    * ``decorrelation``: ``|corr(D(t/2), D(t) - D(t/2))| <= 4 / sqrt(n)``.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != 2:
        raise ValueError("samples must have shape (n, 2)")
    n = samples.shape[0]
    if n < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {n}")
    t_half, t = times
    if abs(t_half - 0.5 * t) > 1e-12 * max(1.0, t):
        raise ValueError("times must be (t/2, t)")
    d_half, d = samples[:, 0], samples[:, 1]
    scale = eps * math.sqrt(t)
    se = d.std(ddof=1) / math.sqrt(n)
    ratio = float(d.var(ddof=1) / scale**2)
    ks = stats.kstest(d / scale, "norm")
    inc = d - d_half
    corr = float(np.corrcoef(d_half, inc)[0, 1]) if d_half.std() > 0 and inc.std() > 0 else 0.0
    rep = StatsReport(n=n, probes={f"D(t={t_half:g})": describe(d_half), f"D(t={t:g})": describe(d)},
                      ks_stat=float(ks.statistic), ks_p=float(ks.pvalue), variance_ratio=ratio)
    rep.checks = {
        "mean": bool(abs(d.mean()) <= 3 * se),
        "variance": bool(0.7 <= ratio <= 1.3),
        "gaussian": bool(ks.pvalue >= 0.01),
        "decorrelation": bool(abs(corr) <= 4 / math.sqrt(n)),
    }
    rep.extra = {"increment_corr": corr, "corr_limit": 4 / math.sqrt(n), "eps": eps, "t": t}
    return rep


def variance_ratio_trend(samples_by_eps, t_by_eps, n_boot=1000, seed=0):
    """Bootstrap frequency with which ``|Var D / (eps^2 t) - 1|`` shrinks monotonically
    as eps decreases."""
    eps_list = sorted(samples_by_eps, reverse=True)
    rng = np.random.default_rng(seed)
    ok = 0
    for _ in range(n_boot):
        errs = []
        for e in eps_list:
            d = np.asarray(samples_by_eps[e])
            b = d[rng.integers(0, d.size, d.size)]
            errs.append(abs(b.var(ddof=1) / (e**2 * t_by_eps[e]) - 1.0))
        ok += all(a > b for a, b in zip(errs, errs[1:]))
    point = {e: float(np.var(samples_by_eps[e], ddof=1) / (e**2 * t_by_eps[e])) for e in eps_list}
    return ok / n_boot, point


def corrector_convergence_test(samples_eps, samples_limit, xi_probe=1.0):
    """Pathwise and law-wise convergence of ``chi^eps`` along an eps sweep.

    Parameters
    ----------
    samples_eps : dict
        ``eps -> {"gap": sup-gaps per sample, "chi": chi^eps(x, xi_probe) per sample}``
        where the gaps come from limit solves driven by each sample's own
        ``W^eps`` path.
    samples_limit : array_like
        ``chi(x, xi_probe)`` from limit solves driven by independent
        Brownian paths.
    """
    eps_list = sorted(samples_eps, reverse=True)
    lim = np.asarray(samples_limit, dtype=float)
    rep = StatsReport(n=int(min(len(samples_eps[e]["gap"]) for e in eps_list)))
    med, p90, ksd, ksp = {}, {}, {}, {}
    for e in eps_list:
        g = np.asarray(samples_eps[e]["gap"], dtype=float)
        if g.size == 0:
            raise ValueError("unpaired or empty gap samples")
        med[e] = float(np.median(g))
        p90[e] = float(np.percentile(g, 90))
        k = stats.ks_2samp(np.asarray(samples_eps[e]["chi"], dtype=float), lim)
        ksd[e], ksp[e] = float(k.statistic), float(k.pvalue)
        rep.probes[f"chi^eps(eps={e:g}, xi={xi_probe:g})"] = describe(samples_eps[e]["chi"])
    rep.probes[f"chi(xi={xi_probe:g})"] = describe(lim)
    rep.checks = {
        "median_gap_decreasing": all(med[a] > med[b] for a, b in zip(eps_list, eps_list[1:])),
        "ks_distance_nonincreasing": all(ksd[a] >= ksd[b] for a, b in zip(eps_list, eps_list[1:])),
    }
    rep.ks_stat, rep.ks_p = ksd[eps_list[-1]], ksp[eps_list[-1]]
    rep.extra = {"median_gap": med, "p90_gap": p90, "ks_distance": ksd, "ks_p": ksp}
    return rep


def scaling_fit(errors, eps_list, n_boot=2000, seed=0, level=0.95):
    """Slope of ``log(error)`` against ``log(eps)`` with a residual-bootstrap CI.

    Returns ``(exponent, (lo, hi))``.
    """
    errors = np.asarray(errors, dtype=float)
    eps_arr = np.asarray(eps_list, dtype=float)
    if errors.shape != eps_arr.shape:
        raise ValueError("errors and eps_list differ in length")
    if eps_arr.size < 3:
        raise ValueError("need at least 3 eps values")
    if eps_arr.max() / eps_arr.min() < 4 - 1e-12:
        raise ValueError("eps values must span a factor of at least 4")
    if np.any(errors <= 0):
        raise ValueError("errors must be positive")
    lx, ly = np.log(eps_arr), np.log(errors)
    slope, icpt = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + icpt)
    rng = np.random.default_rng(seed)
    boots = np.empty(n_boot)
    for b in range(n_boot):
        yb = slope * lx + icpt + rng.choice(resid, resid.size, replace=True)
        boots[b] = np.polyfit(lx, yb, 1)[0]
    a = (1 - level) / 2
    return float(slope), (float(np.quantile(boots, a)), float(np.quantile(boots, 1 - a)))


def two_sample_ks(a, b):
    k = stats.ks_2samp(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    return float(k.statistic), float(k.pvalue)


def null_pass_rates(n_runs=100, n=200, eps=0.1, t=1.0, seed=0):
    """Pass rate of each statistical check on data drawn from its own null model."""
    rng = np.random.default_rng(seed)
    counts = {"brownian_front": 0, "ks_two_sample": 0, "corrector_ks": 0}
    for _ in range(n_runs):
        half = eps * math.sqrt(t / 2) * rng.standard_normal(n)
        full = half + eps * math.sqrt(t / 2) * rng.standard_normal(n)
        counts["brownian_front"] += brownian_front_test(np.column_stack([half, full]),
                                                        eps, (t / 2, t)).passed
        counts["ks_two_sample"] += two_sample_ks(rng.standard_normal(n),
                                                 rng.standard_normal(n))[1] >= 0.01
        counts["corrector_ks"] += stats.kstest(rng.standard_normal(n), "norm").pvalue >= 0.01
    return {k: v / n_runs for k, v in counts.items()}
