"""
Command line entry point: ``hjfront <subcommand> --config FILE``.

Subcommands: ``noise``, ``solve``, ``metric``, ``limit``, ``ensemble`` and
``verify``.  Each writes CSV/JSON outputs (plus PNG figures unless
``output.plots`` is false) and a ``manifest.json`` listing every output
with its SHA-256 digest.

Exit status: 0 on success, 1 on a runtime failure or a failed
verification, 2 on configuration, schema or smallness errors.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import (build_advection, build_grid, build_noise_spec, build_params, load_config,
                     noise_range)
from .fields import ConfigError, ScalarField, SmallnessError
from .hj_solver import SolverConfig, solve_ivp

OUT_DIR_ENV = "HJFRONT_OUT_DIR"
PROFILES = {
    "linear": lambda y: y,
    "tanh": lambda y: 2.0 * np.tanh(y) + 0.5 * y,
    "half": lambda y: 0.5 * y,
}


class Run:
    """Output directory plus the inventory that goes into the manifest."""

    def __init__(self, out_dir, cfg, subcommand, config_path):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg
        self.subcommand = subcommand
        self.config_path = config_path
        self.files = []
        self.extra = {}
        self.started = _dt.datetime.now(_dt.timezone.utc)

    def path(self, name):
        self.files.append(name)
        return self.dir / name

    def write_json(self, name, obj):
        with open(self.path(name), "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")

    @property
    def plots(self):
        return bool(self.cfg["output"]["plots"])

    def finish(self, status):
        import matplotlib
        import scipy

        inventory = {}
        for name in sorted(set(self.files)):
            p = self.dir / name
            if p.exists():
                inventory[name] = hashlib.sha256(p.read_bytes()).hexdigest()
        manifest = {
            "subcommand": self.subcommand,
            "config_path": str(self.config_path) if self.config_path else None,
            "config": self.cfg,
            "master_seed": self.cfg["noise"]["seed"] if self.subcommand != "ensemble"
            else self.cfg["ensemble"]["master_seed"],
            "versions": {"hjfront": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "matplotlib": matplotlib.__version__,
                         "python": platform.python_version()},
            "started": self.started.isoformat(),
            "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "status": status,
            "outputs": inventory,
        }
        manifest.update(self.extra)
        with open(self.dir / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, float) and math.isinf(o):
        return "inf"
    if isinstance(o, (set, tuple)):
        return list(o)
    return str(o)


def _eps_for(cfg):
    return build_params(cfg).eps


def _noise_for(cfg, y_needed, seed_override, hy=None):
    from .noise import noise_grid_spacing, sample_noise

    spec = build_noise_spec(cfg, seed_override)
    h_w = noise_grid_spacing(hy) if hy is not None else None
    return sample_noise(spec, noise_range(cfg, y_needed), h_w=h_w)


# ---------------------------------------------------------------------------
# subcommands


def cmd_noise(run, cfg, args):
    from .noise import estimate_normalization, integrate_W_eps

    grid = build_grid(cfg)
    noise = _noise_for(cfg, grid.y_range, args.seed_override)
    noise.to_csv(run.path("noise.csv"))
    spec = noise.spec
    sigma_hat, se = estimate_normalization(spec, cfg["noise"]["n_normalization"])
    eps = _eps_for(cfg)
    report = {"noise_spec": spec.to_dict(), "bound_M": noise.bound_M,
              "normalization": {"sigma_hat": sigma_hat, "std_error": se,
                                "n_samples": cfg["noise"]["n_normalization"],
                                "configured_sigma": spec.scale_sigma}}
    W = None
    if eps > 0:
        xi_hi = max(0.0, noise.y_range[1]) * eps ** (2.0 / 3.0)
        xi = np.linspace(0.0, xi_hi, 401)
        W = (xi, integrate_W_eps(noise, eps, xi), eps)
        with open(run.path("W_eps.csv"), "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["xi", "W_eps"])
            out.writerows(zip(xi.tolist(), W[1].tolist()))
    run.write_json("normalization.json", report)
    if run.plots:
        from .plotting import plot_noise
        plot_noise(run.path("noise.png"), noise, W)
    print(f"sigma_hat = {sigma_hat:.4f} +- {se:.4f} (configured sigma {spec.scale_sigma:g})")
    return 0


def cmd_solve(run, cfg, args):
    from .front_analysis import extract_front, write_fronts_csv

    params = build_params(cfg)
    adv = build_advection(cfg)
    grid = build_grid(cfg)
    noise = None
    if params.eps > 0 and not adv.is_zero:
        noise = _noise_for(cfg, grid.y_range, args.seed_override, grid.hy)
        params.check_smallness(adv, noise.bound_M)
    prof = PROFILES[cfg["initial"]["profile"]]
    f0 = ScalarField.from_function(grid, lambda X, Y: prof(Y))
    times = sorted(float(t) for t in cfg["output"]["times"])
    sc = SolverConfig(scheme=cfg["solver"]["scheme"], cfl=cfg["solver"]["cfl"],
                      laplacian=cfg["solver"]["laplacian"], output_times=tuple(times),
                      stop_time=times[-1])
    out = solve_ivp(f0, params, adv, noise, sc)
    fronts = []
    for fld in out:
        tag = f"{fld.time_stamp:g}"
        fld.to_csv(run.path(f"field_t{tag}.csv"))
        # wall time stays out of the header so identical runs give identical bytes
        header = {k: v for k, v in fld.meta.items() if k != "wall_seconds"}
        fld.save_binary(run.path(f"field_t{tag}.bin"), manifest=header)
        fronts.append(extract_front(fld))
    write_fronts_csv(run.path("fronts.csv"), fronts)
    if noise is not None:
        noise.to_csv(run.path("noise.csv"))
    run.extra["solver"] = out[-1].meta
    if run.plots:
        from .plotting import plot_fronts
        plot_fronts(run.path("fronts.png"), fronts)
    for fr in fronts:
        print(f"t = {fr.time_stamp:g}: mean front position {np.nanmean(fr.y_front):.6f}")
    return 0


def cmd_metric(run, cfg, args):
    from .metric_corrector import check_bounds, default_xi_grid, extract_corrector, metric_grid, solve_rho

    params = build_params(cfg)
    adv = build_advection(cfg)
    m = cfg["metric"]
    grid = metric_grid(params.eps, adv, hy=m["hy"], nx=m.get("nx"))
    noise = _noise_for(cfg, grid.y_range, args.seed_override, grid.hy)
    rho = solve_rho(params, adv, noise, grid, tol=m["tol"])
    rho.to_csv(run.path("rho.csv"))
    corr = extract_corrector(rho, params.eps, noise, adv,
                             default_xi_grid(grid, params.eps, m["xi_max"]))
    corr.to_csv(run.path("corrector.csv"))
    reports = [check_bounds(rho, noise, which, params.eps, adv).to_dict()
               for which in ("bounds_rho1", "weak_bounds_rho", "lipschitz")]
    run.write_json("bounds.json", {"reports": reports,
                                   "residual_history": rho.meta.get("residual_history")})
    if run.plots:
        from .plotting import plot_corrector
        plot_corrector(run.path("corrector.png"), corr)
    for r in reports:
        print(f"{r['bound_name']}: max violation {r['max_violation']:.3e} "
              f"({'ok' if r['pass'] else 'violated'})")
    return 0


def cmd_limit(run, cfg, args):
    from .limit_corrector import LimitConfig, solve_limit
    from .noise import make_driver_path, sample_brownian

    params = build_params(cfg)
    adv = build_advection(cfg)
    lim = cfg["limit"]
    xi_max = lim["xi_max"]
    n_nodes = int(round(xi_max / lim["dxi"])) + 1
    drivers = []
    if lim["driver"] == "coupled":
        if params.eps <= 0:
            raise ConfigError("limit.driver 'coupled' needs eps > 0")
        y_hi = xi_max * params.eps ** (-2.0 / 3.0)
        noise = _noise_for(cfg, (0.0, y_hi), args.seed_override)
        drivers.append(make_driver_path(noise, params.eps, (0.0, xi_max), n_nodes))
    else:
        seed = cfg["noise"]["seed"] if args.seed_override is None else args.seed_override
        xi = np.linspace(0.0, xi_max, n_nodes)
        drivers = [sample_brownian(seed, xi, stream=k) for k in range(lim["n_drivers"])]
    provenance = []
    for k, drv in enumerate(drivers):
        corr = solve_limit(LimitConfig(drv, adv.u_par, viscous=lim["viscous"], nx=lim["nx"],
                                       xi_max=xi_max))
        corr.to_csv(run.path(f"limit_driver{k}.csv"))
        provenance.append({"driver": k, "provenance": drv.provenance,
                           "n_nodes": int(drv.xi_grid.size)})
        if run.plots:
            from .plotting import plot_corrector
            plot_corrector(run.path(f"limit_driver{k}.png"), corr,
                           label=f"driver {k} ({drv.provenance})")
    run.extra["drivers"] = provenance
    print(f"solved {len(drivers)} limit problem(s)")
    return 0


def cmd_ensemble(run, cfg, args):
    from .ensemble_stats import EnsembleConfig, brownian_front_test, describe, run_ensemble

    e = cfg["ensemble"]
    params = tuple(build_params(cfg, eps) for eps in e["eps_list"])
    spec = build_noise_spec(cfg, args.seed_override)
    master = e["master_seed"] if args.seed_override is None else args.seed_override
    ec = EnsembleConfig(e["n_samples"], master_seed=master, params=params,
                        pipeline=e["pipeline"], advection=build_advection(cfg), noise=spec,
                        probe_times=tuple(e["probe_times"]), probe_xi=tuple(e["probe_xi"]),
                        hy=e["hy"], initial=cfg["initial"]["profile"],
                        metric_hy=cfg["metric"]["hy"], limit_nx=cfg["limit"]["nx"],
                        limit_dxi=cfg["limit"]["dxi"], threads=cfg["threads"])
    bound = spec.bound_M or spec.certified_bound()
    if bound is not None:
        for p in params:
            p.check_smallness(ec.advection, bound)
    table = run_ensemble(ec)
    table.to_csv(run.path("samples.csv"))
    probes = sorted({r["probe"] for r in table.records})
    report = {"n_samples": ec.n_samples, "exclusion_rate": table.exclusion_rate,
              "valid": table.valid, "failures": table.failures, "by_eps": {}}
    for k, p in enumerate(params):
        entry = {q: describe(table.values(q, k)) for q in probes if table.values(q, k).size > 1}
        times = ec.probe_times
        if ec.pipeline == "front" and len(times) == 2 and abs(times[0] - times[1] / 2) < 1e-12:
            mat, _ = table.matrix([f"D(t={t:g})" for t in times], k)
            if mat.shape[0] >= 50:
                entry["brownian_front_test"] = brownian_front_test(mat, p.eps, times).to_dict()
        report["by_eps"][repr(p.eps)] = entry
    run.write_json("report.json", report)
    if run.plots:
        from .plotting import plot_histogram
        for k, p in enumerate(params):
            q = probes[-1]
            vals = table.values(q, k)
            ref = p.eps * math.sqrt(max(ec.probe_times)) if ec.pipeline == "front" else None
            plot_histogram(run.path(f"hist_eps{p.eps:g}.png"), vals,
                           title=f"{q}, eps = {p.eps:g}", reference_sd=ref)
    print(f"{len(table.records)} records, exclusion rate {table.exclusion_rate:.3f}")
    return 0 if table.valid else 1


def cmd_verify(run, cfg, args):
    from .acceptance import CRITERIA, NAMES, run_all

    selection = cfg["verify"]["criteria"]
    bad = [c for c in selection if c not in CRITERIA]
    if bad:
        raise ConfigError(f"verify.criteria: unknown criteria {bad}")
    results = run_all(selection, threads=cfg["threads"])
    rows = {r.number: r for r in results}
    print()
    print(f"{'#':>3}  {'status':<8} name")
    for i in sorted(CRITERIA):
        r = rows.get(i)
        status = "skipped" if r is None else ("PASS" if r.passed else "FAIL")
        print(f"{i:>3}  {status:<8} {NAMES[i]}")
    with open(run.path("verify.csv"), "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["criterion", "name", "passed", "measured", "threshold", "seconds"])
        for r in results:
            out.writerow([r.number, r.name, r.passed, r.measured, r.threshold,
                          f"{r.seconds:.2f}"])
    run.write_json("verify.json", [{"criterion": r.number, "name": r.name, "passed": r.passed,
                                    "measured": r.measured, "threshold": r.threshold,
                                    "seconds": r.seconds, "details": r.details}
                                   for r in results])
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {"noise": cmd_noise, "solve": cmd_solve, "metric": cmd_metric,
            "limit": cmd_limit, "ensemble": cmd_ensemble, "verify": cmd_verify}


def build_parser():
    p = argparse.ArgumentParser(prog="hjfront", description=__doc__.strip().splitlines()[0])
    p.add_argument("--version", action="version", version=f"hjfront {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="YAML or JSON configuration (default: shipped config)")
        s.add_argument("--out-dir", help=f"output directory (default: ${OUT_DIR_ENV} or ./out)")
        s.add_argument("--threads", type=int, help="worker processes for ensembles")
        s.add_argument("--seed-override", type=int, help="replace the configured seed")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.threads is not None:
        overrides["threads"] = args.threads
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"hjfront: {exc}", file=sys.stderr)
        return 2
    out_dir = args.out_dir or os.environ.get(OUT_DIR_ENV) or "out"
    run = Run(Path(out_dir) / args.subcommand, cfg, args.subcommand, args.config)
    t0 = time.perf_counter()
    try:
        status = COMMANDS[args.subcommand](run, cfg, args)
    except (ConfigError, SmallnessError) as exc:
        print(f"hjfront: {exc}", file=sys.stderr)
        run.finish("config_error")
        return 2
    except Exception as exc:  # runtime failure: report, keep the manifest
        print(f"hjfront: {args.subcommand} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        run.finish("failed")
        return 1
    run.finish("ok" if status == 0 else "failed")
    print(f"outputs in {run.dir} ({time.perf_counter() - t0:.1f} s)")
    return status


if __name__ == "__main__":
    sys.exit(main())
