"""
Monotone finite-difference solver for

.. math::

    f_t + \\epsilon u \\cdot \\nabla f + \\frac{1}{r}|\\nabla f|^r + \\frac{r-1}{r}
        = \\frac{\\epsilon^\\beta}{2} \\Delta f,

with ``r = 1`` the G-equation and ``r = 2`` the viscous eikonal model.
Space is discretized with a monotone numerical Hamiltonian (Godunov for
``r = 1``, global Lax-Friedrichs for any ``r``) plus a centered Laplacian,
time with the two-stage TVD Runge-Kutta method.  ``x`` is periodic; in ``y``
ghost values are extrapolated linearly from the two nearest nodes.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .fields import ConfigError, ScalarField, SimParams, eps_pow, front_like_envelopes

SCHEMES = ("godunov_r1", "lax_friedrichs")


class CFLError(RuntimeError):
    """Requested time step exceeds the stability limit."""


class TransformOverflowError(OverflowError):
    """Exponential transform overflowed on the probe window."""


@dataclass(frozen=True)
class SolverConfig:
    """Numerical settings.

    ``scheme=None`` picks Godunov for ``r = 1`` and Lax-Friedrichs otherwise.
    ``theta`` fixes the Lax-Friedrichs dissipation (``None`` recomputes it
    every evaluation from the current gradients).  ``laplacian`` is
    ``"full"`` or ``"x"``.
    """

    scheme: str | None = None
    cfl: float = 0.45
    stop_time: float = 1.0
    output_times: tuple = ()
    residual_tol: float = 1e-6
    laplacian: str = "full"
    theta: tuple | None = None
    dirichlet_bottom: bool = False
    max_steps: int = 2_000_000

    def __post_init__(self):
        object.__setattr__(self, "output_times", tuple(float(t) for t in self.output_times))
        if self.scheme is not None and self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if not 0.0 < self.cfl < 1.0:
            raise ConfigError("cfl must lie in (0, 1)")
        if self.laplacian not in ("full", "x"):
            raise ConfigError("laplacian must be 'full' or 'x'")
        if self.residual_tol <= 0:
            raise ConfigError("residual_tol must be positive")

    def resolve_scheme(self, r):
        s = self.scheme or ("godunov_r1" if r == 1.0 else "lax_friedrichs")
        if s == "godunov_r1" and r != 1.0:
            raise ConfigError("godunov_r1 applies to r = 1 only")
        return s


# ---------------------------------------------------------------------------
# numerical Hamiltonians


def _exact_H(p, q, ux, uy, eps, r, still=False):
    g2 = p * p + q * q
    if r == 2.0:
        H = 0.5 * g2 + 0.5
    elif r == 1.0:
        H = np.sqrt(g2)
    else:
        H = g2 ** (0.5 * r) / r + (r - 1.0) / r
    if not still:
        H = H + eps * (ux * p + uy * q)
    return H


def numerical_hamiltonian(p_west, p_east, q_south, q_north, u_vec, params,
                          scheme=None, theta=None):
    """Monotone approximation of ``H(p) = eps u.p + |p|^r / r + (r-1)/r``.

    Parameters
    ----------
    p_west, p_east, q_south, q_north : array_like
        Backward and forward differences in ``x`` and ``y``.
    u_vec : tuple
        ``(u_x, u_y)`` at the nodes.
    params : SimParams
    scheme : {"godunov_r1", "lax_friedrichs"}, optional
    theta : tuple, optional
        Lax-Friedrichs dissipation ``(theta_x, theta_y)``; computed from
        the inputs when omitted.
    """
    ux, uy = (np.asarray(u, dtype=float) for u in u_vec)
    eps, r = float(params.eps), float(params.r)
    scheme = scheme or ("godunov_r1" if r == 1.0 else "lax_friedrichs")
    pw, pe, qs, qn = (np.asarray(a, dtype=float) for a in (p_west, p_east, q_south, q_north))
    still = eps == 0.0 or (ux.ndim == 0 and uy.ndim == 0 and ux == 0 and uy == 0)
    if scheme == "godunov_r1":
        qy = np.maximum(np.maximum(qs, 0.0), -np.minimum(qn, 0.0))
        qy *= qy
        if not (pw is pe and not pw.any()):
            px = np.maximum(np.maximum(pw, 0.0), -np.minimum(pe, 0.0))
            qy += px * px
        H = np.sqrt(qy, out=qy)
        if not still:
            H += eps * (np.maximum(ux, 0) * pw + np.minimum(ux, 0) * pe
                        + np.maximum(uy, 0) * qs + np.minimum(uy, 0) * qn)
        return H
    if theta is None:
        theta = lax_friedrichs_theta(pw, pe, qs, qn, ux, uy, eps, r)
    tx, ty = theta
    pbar, qbar = 0.5 * (pw + pe), 0.5 * (qs + qn)
    return (_exact_H(pbar, qbar, ux, uy, eps, r, still)
            - 0.5 * tx * (pe - pw) - 0.5 * ty * (qn - qs))


def lax_friedrichs_theta(pw, pe, qs, qn, ux, uy, eps, r):
    pmax = max(float(np.abs(pw).max()), float(np.abs(pe).max()))
    qmax = max(float(np.abs(qs).max()), float(np.abs(qn).max()))
    g = math.hypot(pmax, qmax) ** (r - 1.0)
    return (eps * float(np.abs(ux).max()) + g, eps * float(np.abs(uy).max()) + g)


# ---------------------------------------------------------------------------
# spatial operator


class _Operator:
    """Right-hand side ``-H(grad f) + nu * Lap f`` on a fixed grid."""

    def __init__(self, grid, params, advection, noise, config):
        self.grid, self.params, self.config = grid, params, config
        self.advection = advection
        self.scheme = config.resolve_scheme(params.r)
        self.nu = params.viscosity
        X, Y = grid.mesh()
        self.X, self.Y = X, Y
        if advection is None or advection.is_zero or params.eps == 0.0:
            self._w = None
            self._zero_u = True
        else:
            self._zero_u = False
            if noise is None:
                self._w = np.zeros_like(Y)
            else:
                lo, hi = noise.y_range
                y0, y1 = grid.y_range
                if y0 < lo - 1e-9 or y1 > hi + 1e-9:
                    raise ConfigError(
                        f"noise range [{lo:g}, {hi:g}] does not cover the y-domain "
                        f"[{y0:g}, {y1:g}]")
                self._w = np.broadcast_to(noise.w(grid.y)[None, :], grid.shape)
        self._frozen = None
        if not self._zero_u and (params.autonomous or not advection.time_dependent):
            self._frozen = self._eval_u(0.0)
        self.inv_hx = 1.0 / grid.hx
        self.inv_hy = 1.0 / grid.hy

    def _eval_u(self, tau):
        adv = self.advection
        ux = adv.u_perp(self.X, self.Y, tau)
        uy = adv.u_par(self.X, 0.0, tau) * self._w
        return np.asarray(ux, dtype=float), np.asarray(uy, dtype=float)

    def velocity(self, t):
        if self._zero_u:
            return np.float64(0.0), np.float64(0.0)
        if self._frozen is not None:
            return self._frozen
        return self._eval_u(self.params.time_arg(t))

    def differences(self, f):
        """One-sided differences as views into edge-difference arrays."""
        nx, ny = f.shape
        if nx > 1:
            ex = np.empty((nx + 1, ny))
            np.subtract(f[1:], f[:-1], out=ex[1:nx])
            np.subtract(f[0], f[-1], out=ex[0])
            ex[nx] = ex[0]
            ex *= self.inv_hx
            pw, pe = ex[:-1], ex[1:]
        else:
            pw = pe = np.zeros_like(f)
        ey = np.empty((nx, ny + 1))
        np.subtract(f[:, 1:], f[:, :-1], out=ey[:, 1:ny])
        ey[:, 0] = ey[:, 1]
        ey[:, ny] = ey[:, ny - 1]
        ey *= self.inv_hy
        return pw, pe, ey[:, :-1], ey[:, 1:]

    def theta(self, diffs, u):
        if self.scheme != "lax_friedrichs":
            return None
        if self.config.theta is not None:
            return tuple(float(v) for v in self.config.theta)
        return lax_friedrichs_theta(*diffs, u[0], u[1], self.params.eps, self.params.r)

    def rhs(self, f, t):
        u = self.velocity(t)
        d = self.differences(f)
        th = self.theta(d, u)
        H = numerical_hamiltonian(*d, u, self.params, scheme=self.scheme, theta=th)
        out = -H
        if self.nu > 0:
            pw, pe, qs, qn = d
            lap = (qn - qs) * self.inv_hy
            if self.config.laplacian == "x":
                lap = 0.0 * lap
            if self.grid.nx > 1:
                lap = lap + (pe - pw) * self.inv_hx
            out = out + self.nu * lap
        return out

    def max_dt(self, f, t):
        """Largest stable forward-Euler step at the current state."""
        u = self.velocity(t)
        eps, r = self.params.eps, self.params.r
        if self.scheme == "lax_friedrichs":
            sx, sy = self.theta(self.differences(f), u)
        else:
            sx = eps * float(np.abs(u[0]).max()) + 1.0
            sy = eps * float(np.abs(u[1]).max()) + 1.0
        rate = sy * self.inv_hy
        if self.grid.nx > 1:
            rate += sx * self.inv_hx
        if self.nu > 0:
            rate += 2.0 * self.nu * self.inv_hy**2
            if self.grid.nx > 1:
                rate += 2.0 * self.nu * self.inv_hx**2
        return self.config.cfl / rate, 1.0 / rate


def _rk2(op, f, t, dt, pin=None):
    f1 = f + dt * op.rhs(f, t)
    if pin is not None:
        f1[:, 0] = pin(t + dt)
    f2 = 0.5 * f + 0.5 * (f1 + dt * op.rhs(f1, t + dt))
    if pin is not None:
        f2[:, 0] = pin(t + dt)
    return f2


def step(field_, dt, params, advection, noise, config=SolverConfig()):
    """Advance ``field_`` by one TVD-RK2 step of size ``dt``.

    Raises :class:`CFLError` when ``dt`` exceeds the stability limit
    ``1 / (sx/hx + sy/hy + eps^beta (1/hx^2 + 1/hy^2))``.
    """
    op = _Operator(field_.grid, params, advection, noise, config)
    f = np.array(field_.values)
    _, limit = op.max_dt(f, field_.time_stamp)
    if dt > limit * (1 + 1e-12):
        raise CFLError(f"dt = {dt:.3g} exceeds the stability limit {limit:.3g}")
    out = _rk2(op, f, field_.time_stamp, dt)
    return field_.with_values(out, time_stamp=field_.time_stamp + dt)


def solve_ivp(initial: ScalarField, params: SimParams, advection, noise,
              config: SolverConfig, check_front_like=True):
    """Integrate from ``initial.time_stamp`` to each output time.

    Returns one :class:`ScalarField` per entry of ``config.output_times``
    (or only the final state if none are given); each carries a run
    manifest in ``meta``.
    """
    grid = initial.grid
    if noise is not None and advection is not None and not advection.is_zero:
        grid.check_noise_resolution()
    if check_front_like:
        front_like_envelopes(lambda y: np.interp(y, grid.y, initial.values[0]),
                             y_range=_front_window(grid))
    t0 = float(initial.time_stamp)
    times = sorted(config.output_times) or [config.stop_time]
    if times[0] < t0 - 1e-12:
        raise ConfigError("output times precede the initial time")
    if times[-1] > config.stop_time + 1e-9:
        raise ConfigError("output times exceed stop_time")
    op = _Operator(grid, params, advection, noise, config)
    bottom = np.array(initial.values[:, 0])
    pin = (lambda t: bottom - (t - t0)) if config.dirichlet_bottom else None
    f = np.array(initial.values)
    t = t0
    out = []
    n_steps = 0
    started = time.perf_counter()
    manifest = {
        "params": params.to_dict(),
        "grid": grid.to_dict(),
        "advection": None if advection is None else advection.to_dict(),
        "noise": None if noise is None or noise.spec is None else noise.spec.to_dict(),
        "scheme": op.scheme,
        "cfl": config.cfl,
        "laplacian": config.laplacian,
    }
    for target in times:
        while t < target - 1e-13 * max(1.0, abs(target)):
            dt, _ = op.max_dt(f, t)
            dt = min(dt, target - t)
            f = _rk2(op, f, t, dt, pin)
            t = target if target - t - dt < 1e-13 * max(1.0, abs(target)) else t + dt
            n_steps += 1
            if n_steps > config.max_steps:
                raise RuntimeError("maximum number of steps exceeded")
            if not np.all(np.isfinite(f)):
                raise FloatingPointError(f"solution blew up at t = {t:g}")
        meta = dict(manifest, steps=n_steps,
                    wall_seconds=round(time.perf_counter() - started, 3))
        out.append(ScalarField(grid, f, target, meta))
    return out


def _front_window(grid):
    lo, hi = grid.y_range
    if lo < 0 < hi:
        return lo, hi
    raise ConfigError("the initial front must lie inside the y-domain; "
                      "pass check_front_like=False for shifted data")


# ---------------------------------------------------------------------------
# diagnostics


def eval_N_eps(p, s, eps, r):
    """Nonlinear error function of the rescaled corrector equation.

    ``N = (1 + r e s + (r e / 2)|p|^2 - (1 + 2 e s + e |p|^2 + e^2 s^2)^(r/2)) / (r e)``
    with ``e = eps^(4/3)``.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    p2 = float(p @ p)
    s = float(s)
    e = float(eps) ** (4.0 / 3.0)
    rad = 1.0 + 2.0 * e * s + e * p2 + e * e * s * s
    if rad <= 0:
        raise ValueError(f"nonpositive radicand {rad:g}")
    if e == 0:
        return 0.0
    if r == 2:
        return -0.5 * e * s * s
    return (1.0 + r * e * s + 0.5 * r * e * p2 - rad ** (r / 2.0)) / (r * e)


def check_T_transform(v_traj, params, advection=None, noise=None, probe=None,
                      form="literal", max_exponent=700.0):
    """Residual of the linear equation solved by the exponential transform.

    ``v_traj`` holds three fields at times ``t - dt, t, t + dt`` on one grid.
    The transform ``T(x, y, t) = exp(-v(eps^b x, eps^b y, eps^a t) / eps^b)``
    (``form="literal"``) or ``T(x, y, s) = exp(-v(eps^b x, eps^b y, eps^b s) / eps^b)``
    with advection ``eps u`` (``form="exact"``) is differenced on the
    v-grid nodes, which are the probe nodes in stretched coordinates, and
    ``sup |T_t + u.grad T - Lap T / 2 - T / 2|`` over the interior probe is
    returned.

    ``probe`` selects a window ``(ix_slice, iy_slice)`` of interior nodes.
    """
    if math.isinf(params.beta):
        raise ConfigError("the exponential transform needs a finite beta")
    if len(v_traj) != 3:
        raise ValueError("need the field at three equally spaced times")
    t_vals = [f.time_stamp for f in v_traj]
    dt = t_vals[1] - t_vals[0]
    if dt <= 0 or abs((t_vals[2] - t_vals[1]) - dt) > 1e-9 * max(1.0, dt):
        raise ValueError("times must be increasing and equally spaced")
    grid = v_traj[1].grid
    eb = eps_pow(params.eps, params.beta)
    if form == "literal":
        ea = eps_pow(params.eps, params.alpha)
        tfac = ea if ea > 0 else 1.0
        adv_fac = 1.0
    elif form == "exact":
        tfac, adv_fac = eb, params.eps
    else:
        raise ValueError("form must be 'literal' or 'exact'")
    if probe is None:
        ix = slice(1, grid.nx - 1) if grid.nx > 2 else slice(0, grid.nx)
        probe = (ix, slice(1, grid.ny - 1))
    ix, iy = probe
    expo = [-f.values / eb for f in v_traj]
    if max(float(e[ix, iy].max()) for e in expo) > max_exponent:
        raise TransformOverflowError(
            "exp(-v / eps^beta) overflows on the probe window; restrict it to where v is not deep below 0")
    with np.errstate(over="raise"):
        T = [np.exp(np.clip(e, None, max_exponent + 50)) for e in expo]
    # stretched spacings
    hX, hY, hT = grid.hx / eb, grid.hy / eb, dt / tfac
    Tm = T[1]
    Tt = (T[2] - T[0]) / (2 * hT)
    Ty = np.zeros_like(Tm)
    Ty[:, 1:-1] = (Tm[:, 2:] - Tm[:, :-2]) / (2 * hY)
    lap = np.zeros_like(Tm)
    lap[:, 1:-1] = (Tm[:, 2:] - 2 * Tm[:, 1:-1] + Tm[:, :-2]) / hY**2
    Tx = np.zeros_like(Tm)
    if grid.nx > 1:
        Tx = (np.roll(Tm, -1, 0) - np.roll(Tm, 1, 0)) / (2 * hX)
        lap = lap + (np.roll(Tm, -1, 0) - 2 * Tm + np.roll(Tm, 1, 0)) / hX**2
    res = Tt - 0.5 * lap - 0.5 * Tm
    if advection is not None and not advection.is_zero:
        op = _Operator(grid, replace(params, enforce_smallness=False), advection, noise,
                       SolverConfig())
        ux, uy = op.velocity(v_traj[1].time_stamp)
        res = res + adv_fac * (ux * Tx + uy * Ty)
    return float(np.abs(res[ix, iy]).max())
