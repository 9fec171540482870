"""
The metric planar problem and the correctors built from it.

``rho`` solves ``-r (eps^beta / 2) Lap rho + r eps u.grad rho + |grad rho|^r = 1``
with ``rho = 0`` on ``y = 0``.  It is obtained by marching
``f_t + H(grad f) = (eps^beta / 2) Lap f`` from ``f(., 0) = y`` with the
bottom row pinned to ``-t`` until ``f + t`` is stationary; then
``rho = f + t``.

Correctors live on the slow scale ``xi = eps^(2/3) y``:
``chi(x, xi) = (rho(x, y) - y) / eps^(2/3)`` and the shifted corrector
``chi_bar = chi + u_par(x, 0) W^eps(xi)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import linprog

from .fields import ConfigError, Grid2D, ScalarField, SimParams
from .hj_solver import SolverConfig, _Operator, _rk2
from .noise import integrate_W_eps


class NonConvergenceError(RuntimeError):
    def __init__(self, msg, history):
        super().__init__(msg)
        self.history = history


def default_ymax(eps):
    return max(20.0, 2.0 / eps ** (2.0 / 3.0)) if eps > 0 else 20.0


def metric_grid(eps, advection, hy=0.02, nx=None, negative=False, Lx=2 * math.pi):
    ymax = default_ymax(eps)
    if nx is None:
        x_dep = advection is not None and (
            advection.u_perp.depends_on_x or advection.u_par.depends_on_x
            or (advection.u_perp.modes and advection.u_perp.depends_on_y))
        nx = 32 if x_dep else 1
    ny = int(round(ymax / hy)) + 1
    lo = -ymax if negative else 0.0
    if negative:
        ny = 2 * ny - 1
    return Grid2D((0.0, Lx), (lo, ymax), nx, ny)


def _march(grid, params, config, tol, max_time, u_arrays=None, advection=None, noise=None):
    op = _Operator(grid, params, advection, noise, config)
    if u_arrays is not None:
        op._zero_u = False
        op._frozen = u_arrays
    X, Y = grid.mesh()
    f = np.array(Y, dtype=float)
    bottom = f[:, 0].copy()
    pin = lambda t: bottom - t  # noqa: E731
    t = 0.0
    history = []
    while True:
        dt, _ = op.max_dt(f, t)
        g = _rk2(op, f, t, dt, pin)
        res = float(np.abs(g - f + dt).max()) / dt
        history.append(res)
        f, t = g, t + dt
        if res <= tol:
            break
        if t > max_time:
            raise NonConvergenceError(
                f"metric problem did not converge by t = {t:.3g} (residual {res:.3g})", history)
    return f + t, t, history


def solve_rho(params: SimParams, advection, noise, grid: Grid2D | None = None,
              tol: float = 1e-6, config: SolverConfig | None = None,
              max_time: float | None = None):
    """Solve the metric problem by time marching.

    The advection is frozen at ``t = 0``.  If the grid extends below
    ``y = 0`` the negative half is computed as a reflected problem
    ``rho(x, y) = -rho_hat(x, -y)``, which is only valid without viscosity.

    Returns a :class:`ScalarField` whose ``meta`` holds the residual
    history, the marching time and the step count.
    """
    params = replace(params.frozen(), enforce_smallness=params.enforce_smallness)
    if advection is not None and noise is not None:
        params.check_smallness(advection, noise.bound_M)
    config = config or SolverConfig()
    if grid is None:
        grid = metric_grid(params.eps, advection)
    if noise is not None and advection is not None and not advection.is_zero:
        grid.check_noise_resolution()
    y = grid.y
    i0 = int(np.argmin(np.abs(y)))
    if abs(y[i0]) > 1e-9 * grid.hy:
        raise ConfigError("the metric grid must have a node at y = 0")
    if max_time is None:
        max_time = 20.0 * (grid.y_range[1] - min(grid.y_range[0], 0.0)) + 50.0
    up = Grid2D(grid.x_range, (0.0, grid.y_range[1]), grid.nx, grid.ny - i0)
    rho_up, t_up, hist = _march(up, params, config, tol, max_time,
                                advection=advection, noise=noise)
    meta = {"residual_history": hist, "march_time": t_up, "steps": len(hist),
            "eps": params.eps, "r": params.r, "tol": tol}
    if i0 == 0:
        return ScalarField(grid, rho_up, 0.0, meta)
    if not math.isinf(params.beta):
        raise ConfigError("the reflected negative-y metric problem needs beta = inf")
    down = Grid2D(grid.x_range, (0.0, -grid.y_range[0]), grid.nx, i0 + 1)
    Xd, Yd = down.mesh()
    if advection is None or advection.is_zero or params.eps == 0:
        u_arr = None
    else:
        w = noise.w(-down.y) if noise is not None else np.zeros(down.ny)
        ux = -advection.u_perp(Xd, -Yd, 0.0)
        uy = advection.u_par(Xd, 0.0, 0.0) * w[None, :]
        u_arr = (np.asarray(ux, dtype=float), np.asarray(uy, dtype=float))
    rho_dn, t_dn, hist_dn = _march(down, params, config, tol, max_time, u_arrays=u_arr,
                                   advection=advection if u_arr is not None else None)
    vals = np.concatenate([-rho_dn[:, :0:-1], rho_up], axis=1)
    meta.update(residual_history_negative=hist_dn, march_time_negative=t_dn)
    return ScalarField(grid, vals, 0.0, meta)


def shear_oracle(noise, eps, u_par_const, y, panels_per_unit=8, order=16):
    """``int_0^y dz / (1 + eps u_par w(z))`` by composite Gauss-Legendre.

    This is the increasing solution of ``eps u_par w rho' + |rho'| = 1``,
    ``rho(0) = 0``.  ``noise=None`` means ``w = 0``.
    """
    y = np.asarray(y, dtype=float)
    if noise is None:
        return y.copy()
    c = eps * u_par_const
    nodes, weights = np.polynomial.legendre.leggauss(order)

    def integrand(z):
        den = 1.0 + c * noise.w(z)
        if np.any(den <= 0):
            raise ValueError("1 + eps u_par w <= 0: the advection is too strong")
        return 1.0 / den

    h = 1.0 / panels_per_unit
    ymax = float(np.abs(y).max()) if y.size else 0.0
    out = np.zeros_like(y)
    for sign in (1.0, -1.0):
        mask = (y * sign) > 0
        if not np.any(mask):
            continue
        n = int(math.ceil(ymax / h)) + 1
        edges = sign * h * np.arange(n + 1)
        lo_, hi_ = noise.y_range
        edges = edges[(edges >= lo_ - 1e-12) & (edges <= hi_ + 1e-12)]
        a, b = edges[:-1], edges[1:]
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        pts = mid[:, None] + half[:, None] * nodes[None, :]
        cum = np.concatenate([[0.0], np.cumsum((integrand(pts) * weights).sum(1) * half)])
        ys = y[mask]
        k = np.clip(np.floor(np.abs(ys) / h).astype(int), 0, len(edges) - 1)
        base = cum[k]
        start = edges[k]
        mid2, half2 = 0.5 * (start + ys), 0.5 * (ys - start)
        pts2 = mid2[:, None] + half2[:, None] * nodes[None, :]
        out[mask] = base + (integrand(pts2) * weights).sum(1) * half2
    return out


# ---------------------------------------------------------------------------
# correctors


@dataclass(frozen=True, eq=False)
class CorrectorField:
    """Corrector on ``(x, xi)`` or ``(x, xi, tau)``.

    ``chi`` and ``chi_bar`` have shape ``(nx, nxi)`` or ``(nx, nxi, ntau)``;
    time-dependent fields hold NaN where ``xi < tau``.
    """

    x_grid: np.ndarray
    xi_grid: np.ndarray
    chi: np.ndarray
    chi_bar: np.ndarray
    eps: float
    provenance: str = "autonomous"
    tau_grid: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance not in ("autonomous", "time_dependent", "limit"):
            raise ValueError(f"unknown provenance {self.provenance!r}")

    @property
    def shift(self):
        return self.chi_bar - self.chi

    def _check_xi(self, xi):
        lo, hi = self.xi_grid[0], self.xi_grid[-1]
        if np.any(xi < lo - 1e-12) or np.any(xi > hi + 1e-12):
            raise ValueError(f"xi outside the corrector range [{lo:g}, {hi:g}]")

    def at(self, ix, xi, itau=None, shifted=False):
        """Interpolate along xi for column ``ix`` (linear between nodes)."""
        xi = np.asarray(xi, dtype=float)
        self._check_xi(xi)
        data = self.chi_bar if shifted else self.chi
        col = data[ix] if itau is None else data[ix, :, itau]
        return np.interp(xi, self.xi_grid, col)

    def sup_abs(self, xi_max=1.0, shifted=True):
        m = self.xi_grid <= xi_max + 1e-12
        data = self.chi_bar if shifted else self.chi
        return float(np.nanmax(np.abs(data[:, m])))

    def to_csv(self, path):
        import csv
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            if self.tau_grid is None:
                out.writerow(["x", "xi", "chi", "chi_bar"])
                for i, x in enumerate(self.x_grid):
                    for j, xi in enumerate(self.xi_grid):
                        out.writerow([repr(float(x)), repr(float(xi)),
                                      repr(float(self.chi[i, j])), repr(float(self.chi_bar[i, j]))])
            else:
                out.writerow(["x", "xi", "tau", "chi", "chi_bar"])
                for i, x in enumerate(self.x_grid):
                    for j, xi in enumerate(self.xi_grid):
                        for k, tau in enumerate(self.tau_grid):
                            if np.isnan(self.chi[i, j, k]):
                                continue
                            out.writerow([repr(float(x)), repr(float(xi)), repr(float(tau)),
                                          repr(float(self.chi[i, j, k])),
                                          repr(float(self.chi_bar[i, j, k]))])


def _W_on(noise, eps, xi):
    if noise is None:
        return np.zeros_like(np.asarray(xi, dtype=float))
    return integrate_W_eps(noise, eps, xi)


def default_xi_grid(rho_grid, eps, xi_max=None):
    """xi nodes at the images of the y-nodes, up to ``xi_max``."""
    s = eps ** (2.0 / 3.0)
    y = rho_grid.y
    xi = s * y[y >= -1e-12]
    if xi_max is not None:
        xi = xi[xi <= xi_max + 1e-12]
    return xi


def extract_corrector(rho: ScalarField, eps, noise=None, advection=None, xi_grid=None):
    """``chi(x, xi) = (rho(x, xi / eps^(2/3)) - xi / eps^(2/3)) / eps^(2/3)``.

    ``rho`` is interpolated in ``y`` with a cubic spline; ``chi_bar`` adds
    ``u_par(x, 0) W^eps(xi)`` computed from the same noise path.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    s = eps ** (2.0 / 3.0)
    grid = rho.grid
    if xi_grid is None:
        xi_grid = default_xi_grid(grid, eps)
    xi_grid = np.asarray(xi_grid, dtype=float)
    y = xi_grid / s
    lo, hi = grid.y_range
    if np.any(y < lo - 1e-9) or np.any(y > hi + 1e-9):
        raise ValueError(
            f"xi range [{xi_grid.min():g}, {xi_grid.max():g}] not covered by rho "
            f"(y in [{lo:g}, {hi:g}], eps = {eps:g})")
    # difference against y before interpolating keeps the cancellation exact
    dev = rho.values - grid.y[None, :]
    spline = CubicSpline(grid.y, dev, axis=1)
    chi = spline(y) / s
    W = _W_on(noise, eps, xi_grid)
    if advection is None:
        upar = np.zeros(grid.nx)
    else:
        upar = np.broadcast_to(advection.u_par(grid.x, 0.0, 0.0), (grid.nx,))
    chi_bar = chi + upar[:, None] * W[None, :]
    return CorrectorField(grid.x.copy(), xi_grid, chi, chi_bar, float(eps), "autonomous",
                          meta={"W": W})


def extract_td_corrector(trajectory, eps, params=None, noise=None, advection=None,
                         xi_grid=None):
    """Time-dependent corrector ``chi(x, xi, tau)`` on the wedge ``xi >= tau``.

    ``trajectory`` is a list of fields at times ``t_k``; ``tau_k = eps^(2/3) t_k``.
    The shift uses ``u_par(x, eps^alpha t)``.
    """
    s = eps ** (2.0 / 3.0)
    grid = trajectory[0].grid
    times = np.array([f.time_stamp for f in trajectory])
    tau = s * times
    if xi_grid is None:
        xi_grid = default_xi_grid(grid, eps)
    xi_grid = np.asarray(xi_grid, dtype=float)
    y = xi_grid / s
    lo, hi = grid.y_range
    if np.any(y < lo - 1e-9) or np.any(y > hi + 1e-9):
        raise ValueError("xi range not covered by the trajectory")
    W = _W_on(noise, eps, xi_grid)
    chi = np.full((grid.nx, xi_grid.size, tau.size), np.nan)
    chi_bar = np.full_like(chi, np.nan)
    for k, f in enumerate(trajectory):
        dev = f.values - (grid.y[None, :] - f.time_stamp)
        vals = CubicSpline(grid.y, dev, axis=1)(y) / s
        wedge = xi_grid >= tau[k] - 1e-12
        chi[:, wedge, k] = vals[:, wedge]
        if advection is None:
            upar = np.zeros(grid.nx)
        else:
            ta = params.time_arg(f.time_stamp) if params is not None else 0.0
            upar = np.broadcast_to(advection.u_par(grid.x, 0.0, ta), (grid.nx,))
        chi_bar[:, wedge, k] = vals[:, wedge] + upar[:, None] * W[None, wedge]
    full = np.stack([CubicSpline(grid.y, f.values - (grid.y[None, :] - f.time_stamp),
                                 axis=1)(y) / s for f in trajectory], axis=-1)
    return CorrectorField(grid.x.copy(), xi_grid, chi, chi_bar, float(eps), "time_dependent",
                          tau_grid=tau, meta={"W": W, "chi_full": full})


def td_corrector_at(corr: CorrectorField, ix, xi, k):
    """Value at ``(x_ix, xi, tau_k)``; refuses points outside the wedge."""
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < corr.tau_grid[k] - 1e-12):
        raise ValueError("requested point lies outside the wedge xi >= tau")
    return corr.at(ix, xi, itau=k)


# ---------------------------------------------------------------------------
# a priori bounds

BOUNDS = ("bounds_rho1", "weak_bounds_rho", "lipschitz", "bounds_rho", "chi_bound")


@dataclass
class BoundReport:
    bound_name: str
    max_violation: float
    fitted_constants: tuple
    passed: bool
    eps: float | None = None
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        return {"bound_name": self.bound_name, "max_violation": self.max_violation,
                "fitted_constants": list(self.fitted_constants), "pass": self.passed,
                "eps": self.eps, **self.detail}


def _upar0(advection, grid):
    if advection is None:
        return np.zeros(grid.nx)
    return np.broadcast_to(np.asarray(advection.u_par(grid.x, 0.0, 0.0), dtype=float),
                           (grid.nx,))


def _cum_W2(noise, eps, xi):
    """``int_0^xi |W^eps|^2`` (signed for xi < 0) by the trapezoid rule on a fine grid."""
    xi = np.asarray(xi, dtype=float)
    if noise is None:
        return np.zeros_like(xi)
    out = np.zeros_like(xi)
    for sign in (1.0, -1.0):
        m = xi * sign > 0
        if not np.any(m):
            continue
        top = float(np.abs(xi[m]).max())
        step = 0.25 * eps ** (2.0 / 3.0) * noise.h_w
        n = int(math.ceil(top / step)) + 1
        g = sign * np.linspace(0.0, top, n)
        W2 = integrate_W_eps(noise, eps, g) ** 2
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (W2[1:] + W2[:-1]) * np.abs(np.diff(g)))])
        out[m] = sign * np.interp(np.abs(xi[m]), np.abs(g), cum)
    return out


def bound_columns(rho: ScalarField, noise, eps, advection):
    """Nodewise left side and basis terms of the sharp bound on ``rho``.

    Returns ``(lhs, terms)`` with ``terms`` of shape ``(3, n)`` holding
    ``eps^(4/3)|y|``, ``eps^2 y^2 / 2`` and ``eps^(2/3) |int_0^(eps^(2/3) y) |W^eps|^2|``.
    """
    grid = rho.grid
    s = eps ** (2.0 / 3.0)
    y = grid.y
    W = _W_on(noise, eps, s * y)
    lhs = np.abs(rho.values - (y[None, :] - s * _upar0(advection, grid)[:, None] * W[None, :]))
    t1 = eps ** (4.0 / 3.0) * np.abs(y)
    t2 = 0.5 * eps**2 * y**2
    t3 = s * np.abs(_cum_W2(noise, eps, s * y))
    terms = np.stack([np.broadcast_to(t, lhs.shape) for t in (t1, t2, t3)])
    return lhs.ravel(), terms.reshape(3, -1)


def chi_bound_columns(corr: CorrectorField, noise):
    xi = corr.xi_grid
    lhs = np.abs(corr.chi_bar)
    t1 = np.abs(xi)
    t2 = 0.5 * xi**2
    t3 = np.abs(_cum_W2(noise, corr.eps, xi))
    terms = np.stack([np.broadcast_to(t, lhs.shape) for t in (t1, t2, t3)])
    return lhs.ravel(), terms.reshape(3, -1)


def fit_nonnegative_envelope(lhs_list, terms_list):
    """Smallest nonnegative ``mu`` with ``terms.T @ mu >= lhs`` on every node.

    Solved as a linear program minimizing ``sum_i mu_i max(terms_i)`` so each
    constant is weighted by the size of its basis term.
    """
    lhs = np.concatenate(lhs_list)
    A = np.concatenate(terms_list, axis=1)
    keep = lhs > 0
    if not np.any(keep):
        return np.zeros(A.shape[0])
    scale = A.max(axis=1)
    scale[scale == 0] = 1.0
    res = linprog(c=scale, A_ub=-A[:, keep].T, b_ub=-lhs[keep],
                  bounds=[(0, None)] * A.shape[0], method="highs")
    if not res.success:
        raise RuntimeError(f"bound fit failed: {res.message}")
    return res.x


def lipschitz_constant(rho: ScalarField):
    op = _Operator(rho.grid, SimParams(0.0), None, None, SolverConfig())
    pw, pe, qs, qn = op.differences(np.array(rho.values))
    px = np.maximum(np.abs(pw), np.abs(pe))
    qy = np.maximum(np.abs(qs), np.abs(qn))
    return float(np.sqrt(px * px + qy * qy).max())


def fit_bound_constants(runs, which):
    """Fit the constants of a bound over calibration runs.

    ``runs`` is a list of ``(target, noise, eps, advection)`` where target is
    a metric solution (or a corrector for ``"chi_bound"``).
    """
    if which == "lipschitz":
        return (max(lipschitz_constant(r[0]) for r in runs),)
    if which == "weak_bounds_rho":
        c = 0.0
        for rho, noise, eps, adv in runs:
            y = rho.grid.y
            unorm = _sup_u(adv, noise, rho.grid)
            den = eps * unorm * np.abs(y)[None, :]
            m = den > 0
            if np.any(m):
                c = max(c, float((np.abs(rho.values - y[None, :])[m] / den[m]).max()))
        return (c,)
    if which in ("bounds_rho", "chi_bound"):
        cols = [bound_columns(r[0], r[1], r[2], r[3]) if which == "bounds_rho"
                else chi_bound_columns(r[0], r[1]) for r in runs]
        mu = fit_nonnegative_envelope([c[0] for c in cols], [c[1] for c in cols])
        return tuple(float(m) for m in mu)
    raise ValueError(f"no constants to fit for {which!r}")


def _sup_u(advection, noise, grid):
    if advection is None or advection.is_zero:
        return 0.0
    X, Y = grid.mesh()
    ux = np.abs(advection.u_perp(X, Y, 0.0)).max()
    w = 0.0 if noise is None else float(np.abs(noise.w_values).max())
    up = float(np.abs(advection.u_par(grid.x, 0.0, 0.0)).max())
    return max(float(ux), up * w)


def check_bounds(target, noise, which, eps=None, advection=None, constants=None,
                 slack=0.0):
    """Evaluate one a priori bound nodewise.

    ``bounds_rho1`` (constant 1/2) and ``weak_bounds_rho`` (constant 3)
    are checked exactly as stated; for ``lipschitz``, ``bounds_rho`` and
    ``chi_bound`` the constants are fitted on ``target`` when not given.
    ``max_violation`` is the largest ``lhs - rhs - slack`` (nonpositive
    means the bound holds).
    """
    if which not in BOUNDS:
        raise ValueError(f"which must be one of {BOUNDS}")
    if eps is None:
        eps = target.eps if isinstance(target, CorrectorField) else target.meta.get("eps")
    detail = {}
    if which == "bounds_rho1":
        y = target.grid.y
        viol = float((np.abs(target.values - y[None, :]) - 0.5 * np.abs(y)[None, :]).max())
        consts = (0.5,)
    elif which == "weak_bounds_rho":
        y = target.grid.y
        unorm = _sup_u(advection, noise, target.grid)
        c = 3.0 if constants is None else constants[0]
        rhs = c * eps * unorm * np.abs(y)[None, :]
        viol = float((np.abs(target.values - y[None, :]) - rhs).max())
        consts = (c,)
        detail["sup_u"] = unorm
    elif which == "lipschitz":
        lip = lipschitz_constant(target)
        consts = (lip,) if constants is None else tuple(constants)
        viol = lip - consts[0]
        detail["lipschitz"] = lip
    else:
        if which == "bounds_rho":
            lhs, terms = bound_columns(target, noise, eps, advection)
        else:
            lhs, terms = chi_bound_columns(target, noise)
        if constants is None:
            constants = fit_nonnegative_envelope([lhs], [terms])
        mu = np.asarray(constants, dtype=float)
        rhs = terms.T @ mu
        viol = float((lhs - rhs).max()) if lhs.size else 0.0
        consts = tuple(float(m) for m in mu)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
        detail["max_ratio"] = float(ratio.max()) if ratio.size else 0.0
    viol -= slack
    # rounding in rho - y is a few ulps of the largest |y|
    roundoff = 64 * np.finfo(float).eps * max(1.0, float(np.abs(_y_extent(target))))
    return BoundReport(which, viol, consts, viol <= roundoff, eps, detail)


def _y_extent(target):
    if isinstance(target, CorrectorField):
        return np.abs(target.chi_bar).max() if target.chi_bar.size else 1.0
    return np.abs(target.grid.y).max()
