"""
Grids, scalar fields, model parameters and the advection catalog.

The advection field is ``u(x, y, t) = (u_perp(x, y, t), u_par(x, t) * w(y))``
where ``x`` is the transverse (periodic) coordinate and ``y`` the direction
of propagation.  Both components are drawn from a small catalog of smooth
expressions so that derivatives and norm bounds are exact.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

INF = math.inf
SMALLNESS_LIMIT = 0.01


class ConfigError(ValueError):
    """Invalid parameters or configuration."""


class SmallnessError(ConfigError):
    """The advection violates ``eps * ||u||_C1 <= 1/100``."""


class NotFrontLikeError(ValueError):
    """The initial profile cannot be sandwiched between increasing envelopes."""


def eps_pow(eps, a):
    """``eps**a`` with ``a = inf`` read as 0."""
    if math.isinf(a):
        return 0.0
    return float(eps) ** a


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class SimParams:
    """Model parameters.

    ``alpha = inf`` freezes the advection at ``t = 0``; ``beta = inf``
    switches the viscous term off.  ``eps = 0`` is accepted for the
    unperturbed reference problem.
    """

    eps: float
    alpha: float = INF
    beta: float = INF
    r: float = 1.0
    enforce_smallness: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("eps", "alpha", "beta", "r"):
            v = getattr(self, name)
            if v is None or math.isnan(v):
                raise ConfigError(f"{name} must be a number")
        if not (0.0 <= self.eps < INF):
            raise ConfigError(f"eps must be a finite nonnegative number, got {self.eps}")
        if self.alpha < 1.0:
            raise ConfigError(f"alpha must be >= 1, got {self.alpha}")
        if self.beta < 2.0 / 3.0 - 1e-12:
            raise ConfigError(f"beta must be >= 2/3, got {self.beta}")
        if not 1.0 <= self.r <= 2.0:
            raise ConfigError(f"r must lie in [1, 2], got {self.r}")

    @property
    def viscosity(self):
        """Coefficient ``eps^beta / 2`` of the Laplacian."""
        if self.eps == 0.0:
            return 0.0
        return 0.5 * eps_pow(self.eps, self.beta)

    def time_arg(self, t):
        """Time argument ``eps^alpha t`` of the advection."""
        if self.eps == 0.0:
            return 0.0 * t
        return eps_pow(self.eps, self.alpha) * t

    @property
    def autonomous(self):
        return math.isinf(self.alpha)

    def frozen(self):
        return replace(self, alpha=INF)

    def check_smallness(self, advection, bound_M):
        """Raise :class:`SmallnessError` if ``eps * ||u||_C1 > 1/100``.

        Returns the product.  When ``enforce_smallness`` is off the value is
        returned without raising.
        """
        val = self.eps * advection.certified_C1(bound_M)
        if self.enforce_smallness and val > SMALLNESS_LIMIT * (1 + 1e-12):
            raise SmallnessError(
                f"eps * ||u||_C1 = {val:.4g} exceeds 1/100 "
                f"(eps = {self.eps:g}, ||u||_C1 = {advection.certified_C1(bound_M):.4g})")
        return val

    def to_dict(self):
        def enc(v):
            return "inf" if math.isinf(v) else v
        return {"eps": self.eps, "alpha": enc(self.alpha), "beta": enc(self.beta),
                "r": self.r, "enforce_smallness": self.enforce_smallness}


# ---------------------------------------------------------------------------
# advection catalog


def _bump(z):
    """``exp(1 - 1/(1 - z^2))`` on ``|z| < 1``, peak value 1 at 0."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    m = np.abs(z) < 1.0
    out[m] = np.exp(1.0 - 1.0 / (1.0 - z[m] ** 2))
    return out


def _bump_d1(z):
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    m = np.abs(z) < 1.0
    zm = z[m]
    q = 1.0 - zm**2
    out[m] = np.exp(1.0 - 1.0 / q) * (-2.0 * zm / q**2)
    return out


def _bump_d2(z):
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    m = np.abs(z) < 1.0
    zm = z[m]
    q = 1.0 - zm**2
    g = -2.0 * zm / q**2
    # g' = -2/q^2 - 8 z^2 / q^3
    dg = -2.0 / q**2 - 8.0 * zm**2 / q**3
    out[m] = np.exp(1.0 - 1.0 / q) * (g * g + dg)
    return out


@lru_cache(maxsize=None)
def _bump_sup():
    z = np.linspace(-1, 1, 200001)
    return 1.0, float(np.abs(_bump_d1(z)).max()), float(np.abs(_bump_d2(z)).max())


@dataclass(frozen=True)
class Mode:
    """``amp * cos(kx x + omega t + phase) * B((y - y_center) / y_half_width)``.

    With ``y_center = None`` the mode does not depend on ``y``.
    """

    amp: float
    kx: float = 0.0
    omega: float = 0.0
    phase: float = 0.0
    y_center: float | None = None
    y_half_width: float = 1.0

    def __post_init__(self):
        vals = [self.amp, self.kx, self.omega, self.phase, self.y_half_width]
        if self.y_center is not None:
            vals.append(self.y_center)
        if not all(math.isfinite(v) for v in vals):
            raise ConfigError("advection mode parameters must be finite")
        if self.y_half_width <= 0:
            raise ConfigError("y_half_width must be positive")

    def _yfac(self, y):
        if self.y_center is None:
            one = np.ones_like(np.asarray(y, dtype=float))
            return one, 0.0 * one, 0.0 * one
        z = (np.asarray(y, dtype=float) - self.y_center) / self.y_half_width
        h = self.y_half_width
        return _bump(z), _bump_d1(z) / h, _bump_d2(z) / h**2

    def eval(self, x, y, t, deriv=False):
        ph = self.kx * x + self.omega * t + self.phase
        c, s = np.cos(ph), np.sin(ph)
        b, db, _ = self._yfac(y)
        val = self.amp * c * b
        if not deriv:
            return val
        return (val, -self.amp * self.kx * s * b, self.amp * c * db,
                -self.amp * self.omega * s * b)

    def sup_bounds(self):
        """Bounds on (value, first derivatives, second derivatives)."""
        a = abs(self.amp)
        if self.y_center is None:
            b0, b1, b2 = 1.0, 0.0, 0.0
        else:
            s0, s1, s2 = _bump_sup()
            h = self.y_half_width
            b0, b1, b2 = s0, s1 / h, s2 / h**2
        k, w = abs(self.kx), abs(self.omega)
        d1 = a * max(k * b0, b1, w * b0)
        d2 = a * max(k * k * b0, w * w * b0, k * w * b0, k * b1, w * b1, b2)
        return a * b0, d1, d2


@dataclass(frozen=True)
class TrigSeries:
    """Constant plus a finite sum of :class:`Mode` terms."""

    constant: float = 0.0
    modes: tuple = ()

    def __post_init__(self):
        if not math.isfinite(self.constant):
            raise ConfigError("constant must be finite")
        object.__setattr__(self, "modes", tuple(self.modes))

    @classmethod
    def const(cls, c):
        return cls(float(c))

    @classmethod
    def from_dict(cls, d):
        if isinstance(d, (int, float)):
            return cls(float(d))
        modes = tuple(Mode(**m) for m in d.get("modes", ()))
        return cls(float(d.get("constant", 0.0)), modes)

    def to_dict(self):
        return {"constant": self.constant,
                "modes": [dict(m.__dict__) for m in self.modes]}

    @property
    def depends_on_y(self):
        return any(m.y_center is not None for m in self.modes)

    @property
    def depends_on_x(self):
        return any(m.kx != 0 for m in self.modes)

    @property
    def depends_on_t(self):
        return any(m.omega != 0 for m in self.modes)

    def __call__(self, x, y=0.0, t=0.0):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        out = np.full(x.shape, self.constant)
        for m in self.modes:
            out = out + m.eval(x, y, t)
        return out

    def grad(self, x, y=0.0, t=0.0):
        """(f, f_x, f_y, f_t)."""
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        f = np.full(x.shape, self.constant)
        fx, fy, ft = np.zeros(x.shape), np.zeros(x.shape), np.zeros(x.shape)
        for m in self.modes:
            v, vx, vy, vt = m.eval(x, y, t, deriv=True)
            f, fx, fy, ft = f + v, fx + vx, fy + vy, ft + vt
        return f, fx, fy, ft

    def sup_bounds(self):
        s0, s1, s2 = abs(self.constant), 0.0, 0.0
        for m in self.modes:
            b = m.sup_bounds()
            s0, s1, s2 = s0 + b[0], s1 + b[1], s2 + b[2]
        return s0, s1, s2

    def check_period(self, Lx):
        for m in self.modes:
            n = m.kx * Lx / (2 * math.pi)
            if abs(n - round(n)) > 1e-9:
                raise ConfigError(
                    f"advection mode kx={m.kx} is not periodic on an x-period of {Lx}")


@dataclass(frozen=True)
class AdvectionSpec:
    """``u_perp(x, y, t)`` and ``u_par(x, t)`` from the expression catalog.

    ``norm_C1``/``norm_C2`` are the declared bounds for the full field
    ``(u_perp, u_par * w)``; left as ``None`` they are certified from the
    catalog given the noise bound ``M``.
    """

    u_perp: TrigSeries = field(default_factory=TrigSeries)
    u_par: TrigSeries = field(default_factory=lambda: TrigSeries(1.0))
    norm_C1: float | None = None
    norm_C2: float | None = None

    def __post_init__(self):
        if self.u_par.depends_on_y:
            raise ConfigError("u_par must not depend on y")

    @classmethod
    def shear(cls, u_par=1.0):
        return cls(TrigSeries(), TrigSeries.const(u_par))

    @classmethod
    def zero(cls):
        return cls(TrigSeries(), TrigSeries())

    @classmethod
    def from_dict(cls, d):
        return cls(TrigSeries.from_dict(d.get("u_perp", 0.0)),
                   TrigSeries.from_dict(d.get("u_par", 1.0)),
                   d.get("norm_C1"), d.get("norm_C2"))

    def to_dict(self):
        return {"u_perp": self.u_perp.to_dict(), "u_par": self.u_par.to_dict(),
                "norm_C1": self.norm_C1, "norm_C2": self.norm_C2}

    @property
    def is_zero(self):
        return (self.u_perp.constant == 0 and not self.u_perp.modes
                and self.u_par.constant == 0 and not self.u_par.modes)

    @property
    def time_dependent(self):
        return self.u_perp.depends_on_t or self.u_par.depends_on_t

    def certified_C1(self, bound_M=1.0):
        p0, p1, _ = self.u_perp.sup_bounds()
        q0, q1, _ = self.u_par.sup_bounds()
        cert = max(p0, p1, q0 * bound_M, q1 * bound_M)
        if self.norm_C1 is not None:
            if self.norm_C1 < cert * (1 - 1e-12):
                raise ConfigError(
                    f"declared norm_C1 = {self.norm_C1:g} is below the certified bound {cert:g}")
            return float(self.norm_C1)
        return cert

    def certified_C2(self, bound_M=1.0):
        p0, p1, p2 = self.u_perp.sup_bounds()
        q0, q1, q2 = self.u_par.sup_bounds()
        cert = max(p0, p1, p2, q0 * bound_M, q1 * bound_M, q2 * bound_M)
        if self.norm_C2 is not None:
            return max(float(self.norm_C2), cert)
        return cert

    def check_period(self, Lx):
        self.u_perp.check_period(Lx)
        self.u_par.check_period(Lx)


def full_advection(spec: AdvectionSpec, noise, x, y, t):
    """``(u_perp(x, y, t), u_par(x, t) * w(y))``.

    ``t`` is the time argument of ``u`` itself (already rescaled by the
    caller).  ``noise=None`` stands for ``w == 0``.
    """
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    w = np.zeros(y.shape) if noise is None else noise.w(y)
    return spec.u_perp(x, y, t), spec.u_par(x, 0.0, t) * w


# ---------------------------------------------------------------------------
# grids and fields


@dataclass(frozen=True)
class Grid2D:
    """Uniform grid: ``x`` periodic on ``[x0, x0 + Lx)`` with ``nx`` nodes,
    ``y`` on ``[y0, y1]`` including both endpoints.

    ``nx = 1`` is the x-independent (pure shear) mode.  Arrays are indexed
    ``[ix, iy]``.
    """

    x_range: tuple = (0.0, 2 * math.pi)
    y_range: tuple = (-1.0, 3.0)
    nx: int = 1
    ny: int = 401

    def __post_init__(self):
        object.__setattr__(self, "x_range", tuple(float(v) for v in self.x_range))
        object.__setattr__(self, "y_range", tuple(float(v) for v in self.y_range))
        if self.nx < 1 or self.ny < 3:
            raise ConfigError("need nx >= 1 and ny >= 3")
        if not self.x_range[1] > self.x_range[0] or not self.y_range[1] > self.y_range[0]:
            raise ConfigError("grid ranges must be nonempty intervals")

    @property
    def Lx(self):
        return self.x_range[1] - self.x_range[0]

    @property
    def hx(self):
        return self.Lx / self.nx

    @property
    def hy(self):
        return (self.y_range[1] - self.y_range[0]) / (self.ny - 1)

    @property
    def x(self):
        return self.x_range[0] + self.hx * np.arange(self.nx)

    @property
    def y(self):
        return np.linspace(self.y_range[0], self.y_range[1], self.ny)

    @property
    def shape(self):
        return self.nx, self.ny

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")

    def check_noise_resolution(self):
        if self.hy > 0.1 + 1e-12:
            raise ConfigError(f"hy = {self.hy:g} > 0.1 does not resolve the noise")

    def to_dict(self):
        return {"x_range": list(self.x_range), "y_range": list(self.y_range),
                "nx": self.nx, "ny": self.ny}


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid2D
    values: np.ndarray
    time_stamp: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            v = np.broadcast_to(v, self.grid.shape).copy()
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid, fn, time_stamp=0.0, **meta):
        X, Y = grid.mesh()
        return cls(grid, fn(X, Y), time_stamp, dict(meta))

    def with_values(self, values, time_stamp=None, **meta):
        m = dict(self.meta)
        m.update(meta)
        return ScalarField(self.grid, values,
                           self.time_stamp if time_stamp is None else time_stamp, m)

    def column(self, ix=0):
        return self.values[ix]

    def to_csv(self, path):
        X, Y = self.grid.mesh()
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["x", "y", "value"])
            for a, b, c in zip(X.ravel(), Y.ravel(), self.values.ravel()):
                out.writerow([repr(float(a)), repr(float(b)), repr(float(c))])

    def save_binary(self, path, manifest=None):
        """Little-endian float64 payload after a length-prefixed JSON header."""
        header = {"grid": self.grid.to_dict(), "time_stamp": self.time_stamp,
                  "dtype": "<f8", "order": "C", "manifest": manifest or self.meta}
        raw = json.dumps(header, sort_keys=True, default=_json_default).encode()
        with open(path, "wb") as fh:
            fh.write(b"HJFIELD1")
            fh.write(struct.pack("<Q", len(raw)))
            fh.write(raw)
            fh.write(self.values.astype("<f8").tobytes(order="C"))

    @classmethod
    def load_binary(cls, path):
        with open(path, "rb") as fh:
            if fh.read(8) != b"HJFIELD1":
                raise ValueError(f"{path} is not a field dump")
            (n,) = struct.unpack("<Q", fh.read(8))
            header = json.loads(fh.read(n))
            data = np.frombuffer(fh.read(), dtype="<f8")
        g = header["grid"]
        grid = Grid2D(tuple(g["x_range"]), tuple(g["y_range"]), g["nx"], g["ny"])
        return cls(grid, data.reshape(grid.shape), header["time_stamp"], header["manifest"])


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "to_dict"):
        return o.to_dict()
    return str(o)


# ---------------------------------------------------------------------------
# front-like data


@dataclass(frozen=True)
class Envelope:
    """Piecewise-linear profile with slope ``neg`` for ``y < 0`` and ``pos`` for ``y > 0``."""

    neg: float
    pos: float

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(y < 0, self.neg * y, self.pos * y)


def front_like_envelopes(profile, y_range=(-5.0, 5.0), n=4001, widen=2.0):
    """Strictly increasing envelopes ``lower <= profile <= upper`` vanishing at 0.

    ``profile`` is sampled on ``y_range``.  The slopes are the extreme values
    of ``profile(y) / y`` on each side of 0, widened by ``widen``.  Raises
    :class:`NotFrontLikeError` if the profile has the wrong sign somewhere
    (a sign change away from 0) or is not bounded away from 0 (a flat span
    at the origin).
    """
    lo, hi = float(y_range[0]), float(y_range[1])
    if not lo < 0 < hi:
        raise ValueError("y_range must contain 0 in its interior")
    y = np.linspace(lo, hi, n)
    g = np.asarray(profile(y), dtype=float)
    if not np.all(np.isfinite(g)):
        raise NotFrontLikeError("profile is not finite on the sampled range")
    g0 = float(np.asarray(profile(np.array([0.0])), dtype=float)[0])
    if abs(g0) > 1e-12:
        raise NotFrontLikeError(f"profile does not vanish at 0 (value {g0:g})")
    slopes = {}
    for side, mask in (("neg", y < 0), ("pos", y > 0)):
        ratio = g[mask] / y[mask]
        bad = np.flatnonzero(ratio <= 0)
        if bad.size:
            yb = float(y[mask][bad[0]])
            raise NotFrontLikeError(f"profile has the wrong sign at y = {yb:.4g}")
        # flat near the origin: slope ratio collapses toward 0
        small = float(ratio.min())
        if small < 1e-8:
            raise NotFrontLikeError("profile is flat at the origin")
        slopes[side] = (small / widen, float(ratio.max()) * widen)
    lower = Envelope(slopes["neg"][1], slopes["pos"][0])
    upper = Envelope(slopes["neg"][0], slopes["pos"][1])
    return lower, upper
