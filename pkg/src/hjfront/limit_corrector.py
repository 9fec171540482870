"""
Pathwise solver for the white-noise-forced limit corrector equation.

With ``g(x) = u_par(x, 0)`` and a driver path ``W``, the shifted corrector
``chi_bar = chi + g W`` solves the classical equation (``xi`` plays the role
of time)

.. math::

    \\bar\\chi_\\xi + \\tfrac12 |\\bar\\chi_x - W(\\xi) g'(x)|^2
        - \\nu (\\bar\\chi_{xx} - W(\\xi) g''(x)) = 0, \\qquad \\bar\\chi(\\cdot, 0) = 0,

with ``nu = 0`` (inviscid) or ``nu = 1/2`` (viscous).  ``x`` is periodic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fields import ConfigError, TrigSeries
from .hj_solver import CFLError
from .metric_corrector import CorrectorField
from .noise import BrownianPath


def profile_derivatives(profile, x):
    """``(g, g', g'')`` of an x-only catalog expression."""
    if isinstance(profile, (int, float)):
        profile = TrigSeries.const(profile)
    if not isinstance(profile, TrigSeries):
        raise TypeError("u_par profile must be a TrigSeries or a constant")
    if profile.depends_on_y:
        raise ConfigError("u_par profile must not depend on y")
    x = np.asarray(x, dtype=float)
    g = np.full(x.shape, profile.constant)
    g1 = np.zeros(x.shape)
    g2 = np.zeros(x.shape)
    for m in profile.modes:
        ph = m.kx * x + m.phase
        g += m.amp * np.cos(ph)
        g1 -= m.amp * m.kx * np.sin(ph)
        g2 -= m.amp * m.kx**2 * np.cos(ph)
    return g, g1, g2


@dataclass(frozen=True, eq=False)
class LimitConfig:
    """Settings for :func:`solve_limit`.

    ``interpolation`` selects how ``W`` is read between driver nodes:
    ``"linear"`` or ``"step"`` (constant ``W(xi_{k-1})`` on
    ``[xi_{k-1}, xi_k)``).  ``nu`` defaults to 1/2 when ``viscous``.
    """

    driver: BrownianPath
    u_par_profile: TrigSeries = field(default_factory=lambda: TrigSeries(1.0))
    viscous: bool = False
    nx: int = 64
    Lx: float = 2 * math.pi
    xi_max: float = 1.0
    xi_out: np.ndarray | None = None
    interpolation: str = "linear"
    cfl: float = 0.45
    nu: float | None = None

    def __post_init__(self):
        if self.interpolation not in ("linear", "step"):
            raise ConfigError("interpolation must be 'linear' or 'step'")
        if self.driver.W_values[0] != 0.0:
            raise ConfigError("driver must start at 0")
        if self.xi_max > self.driver.xi_grid[-1] + 1e-12:
            raise ConfigError(
                f"driver covers xi <= {self.driver.xi_grid[-1]:g}, need {self.xi_max:g}")
        if self.nx < 3:
            raise ConfigError("nx must be at least 3")
        if isinstance(self.u_par_profile, TrigSeries):
            self.u_par_profile.check_period(self.Lx)

    @property
    def diffusion(self):
        if not self.viscous:
            return 0.0
        return 0.5 if self.nu is None else float(self.nu)

    @property
    def x_grid(self):
        return self.Lx / self.nx * np.arange(self.nx)

    def output_grid(self):
        if self.xi_out is not None:
            xo = np.asarray(self.xi_out, dtype=float)
        else:
            d = self.driver.xi_grid
            xo = d[d <= self.xi_max + 1e-12]
        if xo[0] != 0.0:
            xo = np.concatenate([[0.0], xo])
        return xo


def _rhs(c, W, g1, g2, hx, nu, theta=None):
    cw = np.roll(c, 1)
    ce = np.roll(c, -1)
    pw = (c - cw) / hx
    pe = (ce - c) / hx
    a = W * g1
    pbar = 0.5 * (pw + pe)
    if theta is None:
        theta = max(float(np.abs(pw).max()), float(np.abs(pe).max())) + float(np.abs(a).max())
    H = 0.5 * (pbar - a) ** 2 - 0.5 * theta * (pe - pw)
    out = -H
    if nu > 0:
        out = out + nu * ((pe - pw) / hx - W * g2)
    return out, theta


def solve_limit(config: LimitConfig) -> CorrectorField:
    """March ``chi_bar`` in ``xi`` with a Lax-Friedrichs flux and TVD-RK2.

    Returns a :class:`CorrectorField` with provenance ``"limit"`` holding
    ``chi = chi_bar - g W`` on the output xi-grid.
    """
    x = config.x_grid
    hx = config.Lx / config.nx
    g, g1, g2 = profile_derivatives(config.u_par_profile, x)
    nu = config.diffusion
    drv = config.driver
    xo = config.output_grid()
    nodes = np.union1d(drv.xi_grid[drv.xi_grid <= config.xi_max + 1e-12], xo)

    def W_at(xi, k):
        if config.interpolation == "linear":
            return float(drv(xi))
        return float(drv.step_value(nodes[k]))

    c = np.zeros(config.nx)
    out = np.zeros((config.nx, xo.size))
    Wout = np.zeros(xo.size)
    j = 1
    for k in range(nodes.size - 1):
        a, b = nodes[k], nodes[k + 1]
        xi = a
        while xi < b - 1e-14:
            W0 = W_at(xi, k)
            _, th = _rhs(c, W0, g1, g2, hx, nu)
            th = max(th, float(np.abs(g1).max()) * max(abs(W0), abs(W_at(b, k))))
            rate = th / hx + 2.0 * nu / hx**2
            dt = min(config.cfl / rate if rate > 0 else b - xi, b - xi)
            k1, _ = _rhs(c, W0, g1, g2, hx, nu, th)
            c1 = c + dt * k1
            k2, _ = _rhs(c1, W_at(xi + dt, k), g1, g2, hx, nu, th)
            c = 0.5 * c + 0.5 * (c1 + dt * k2)
            xi = b if b - xi - dt < 1e-14 else xi + dt
            if not np.all(np.isfinite(c)):
                raise CFLError(f"limit solve became unstable at xi = {xi:g}")
        while j < xo.size and abs(xo[j] - b) < 1e-12:
            out[:, j] = c
            Wout[j] = float(drv.step_value(b) if config.interpolation == "step" else drv(b))
            j += 1
    chi = out - g[:, None] * Wout[None, :]
    return CorrectorField(x, xo, chi, out, 0.0, "limit",
                          meta={"W": Wout, "viscous": config.viscous, "nu": nu,
                                "driver_provenance": drv.provenance})


def hopf_lax_oracle(u_par_profile, W_path: BrownianPath, x, xi, lattice_resolution=512,
                    Lx=2 * math.pi, viscous=False):
    """Inviscid limit corrector by exact dynamic programming.

    ``W_path`` is read as piecewise constant, ``W(xi_{k-1})`` on
    ``[xi_{k-1}, xi_k)``.  On each such interval ``chi_bar - W g`` solves
    ``psi_xi + psi_x^2 / 2 = 0`` and therefore obeys the Hopf-Lax formula

    ``chi_bar(x, xi_k) = min_z [chi_bar(z, xi_{k-1}) - W g(z) + (x - z)^2 / (2 dxi)] + W g(x)``.

    The minimization runs over a periodic lattice of ``lattice_resolution``
    points, with images at ``z +- Lx``.  Returns ``chi_bar`` at the
    requested ``x`` (linear periodic interpolation from the lattice) and
    ``xi`` values, shape ``(len(x), len(xi))``.
    """
    if viscous:
        raise ValueError("the Hopf-Lax oracle covers the inviscid equation only")
    z = Lx / lattice_resolution * np.arange(lattice_resolution)
    g, _, _ = profile_derivatives(u_par_profile, z)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    nodes = np.union1d(W_path.xi_grid[W_path.xi_grid <= xi.max() + 1e-12], xi)
    nodes = nodes[nodes >= 0]
    d = z[:, None] - z[None, :]
    dist2 = np.minimum.reduce([(d + m * Lx) ** 2 for m in (-1, 0, 1)])
    c = np.zeros(lattice_resolution)
    snaps = {0.0: c.copy()}
    for k in range(nodes.size - 1):
        dxi = nodes[k + 1] - nodes[k]
        W = float(W_path.step_value(nodes[k]))
        base = c - W * g
        c = (base[None, :] + dist2 / (2 * dxi)).min(axis=1) + W * g
        snaps[float(nodes[k + 1])] = c.copy()
    x = np.atleast_1d(np.asarray(x, dtype=float))
    zz = np.concatenate([z, [Lx]])
    out = np.empty((x.size, xi.size))
    for j, s in enumerate(xi):
        key = min(snaps, key=lambda t: abs(t - s))
        cc = snaps[key]
        out[:, j] = np.interp(np.mod(x, Lx), zz, np.concatenate([cc, cc[:1]]))
    return out


def viscous_consistency_check(config: LimitConfig, tol=1e-3):
    """Compare matched viscous and inviscid limit solves.

    For x-constant ``u_par`` the two must coincide; otherwise the viscous
    solution must not be rougher: ``max |d_x chi_visc| <= max |d_x chi| + tol``.
    """
    from dataclasses import replace

    vis = solve_limit(replace(config, viscous=True))
    inv = solve_limit(replace(config, viscous=False))
    hx = config.Lx / config.nx
    grad = lambda c: np.abs(np.roll(c, -1, axis=0) - c).max() / hx  # noqa: E731
    gv, gi = float(grad(vis.chi)), float(grad(inv.chi))
    diff = float(np.abs(vis.chi - inv.chi).max())
    x_const = not config.u_par_profile.depends_on_x
    if x_const:
        ok = diff == 0.0
    else:
        ok = gv <= gi + tol
    return {"x_constant": x_const, "max_abs_difference": diff, "grad_viscous": gv,
            "grad_inviscid": gi, "tol": tol, "pass": bool(ok)}
