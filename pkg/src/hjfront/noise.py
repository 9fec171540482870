"""
Mild white noise built from a mollified random walk.

The walk ``S`` is indexed by the integers with ``S_0 = 0`` and unit-variance
steps ``X_k = S_k - S_{k-1}``.  Its piecewise-linear interpolation is
convolved with the derivative of a bump ``phi`` supported in ``[0, 1]``:

.. math::

    w(y) = \\sigma \\int \\tilde S_z \\phi'(y - z) dz.

Integrating by parts, for ``y = n + s`` with ``s`` in ``[0, 1)`` this reduces
to ``sigma * (X_n (1 - Phi(s)) + X_{n+1} Phi(s))`` where ``Phi`` is the
cumulative integral of ``phi``; the derivative is
``sigma * (X_{n+1} - X_n) phi(s)``.  Both are evaluated exactly at any point.

The rescaled integral

.. math::

    W^\\epsilon(y) = \\epsilon^{-1/3} \\int_0^y w(\\epsilon^{-2/3} z) dz

converges in law to a standard Brownian motion when
``2 int_0^inf E[w(0) w(xi)] dxi = 1``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicHermiteSpline

STEP_LAWS = ("rademacher", "unit_gaussian")

# walk steps are drawn in fixed blocks so a given index always gets the same
# value, whatever window is requested
_BLOCK = 256
_DEFAULT_HW = 0.02


def _zigzag(k):
    return 2 * k if k >= 0 else -2 * k - 1


def stream_rng(seed, *keys):
    """Counter-style generator keyed by ``(seed, *keys)``.

    Streams with different keys are statistically independent and each is
    reproducible on its own, so ensemble members do not depend on the order
    in which they are drawn.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1),
                                spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Mollifier:
    """Normalized bump ``c * exp(-1 / (1 - z^2)^power)``, ``z = (s - center) / half_width``.

    The center is fixed at ``1/2`` so the support ``[1/2 - hw, 1/2 + hw]`` lies
    inside ``[0, 1]`` whenever ``0 < half_width <= 1/2``.
    """

    half_width: float = 0.5
    power: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.half_width) and math.isfinite(self.power)):
            raise ValueError("mollifier parameters must be finite")
        if not 0.0 < self.half_width <= 0.5:
            raise ValueError(f"half_width must lie in (0, 1/2], got {self.half_width}")
        if self.power <= 0:
            raise ValueError(f"power must be positive, got {self.power}")

    @property
    def support(self):
        return 0.5 - self.half_width, 0.5 + self.half_width

    def _raw(self, s):
        s = np.asarray(s, dtype=float)
        z = (s - 0.5) / self.half_width
        out = np.zeros_like(s)
        inside = np.abs(z) < 1.0
        zi = z[inside]
        out[inside] = np.exp(-1.0 / (1.0 - zi * zi) ** self.power)
        return out

    def _raw_deriv(self, s):
        s = np.asarray(s, dtype=float)
        z = (s - 0.5) / self.half_width
        out = np.zeros_like(s)
        inside = np.abs(z) < 1.0
        zi = z[inside]
        q = 1.0 - zi * zi
        g = np.exp(-1.0 / q**self.power)
        # d/dz exp(-q^-p) = exp(-q^-p) * p q^(-p-1) * (-2z)
        out[inside] = g * self.power * q ** (-self.power - 1.0) * (-2.0 * zi) / self.half_width
        return out

    @cached_property
    def _table(self):
        # Cumulative integral on a fine partition of the support, each panel
        # integrated with 8-point Gauss-Legendre.
        a, b = self.support
        edges = np.linspace(a, b, 4097)
        nodes, weights = np.polynomial.legendre.leggauss(8)
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * (edges[1:] - edges[:-1])
        pts = mid[:, None] + half[:, None] * nodes[None, :]
        panel = (self._raw(pts) * weights[None, :]).sum(axis=1) * half
        cum = np.concatenate([[0.0], np.cumsum(panel)])
        total = cum[-1]
        spline = CubicHermiteSpline(edges, cum / total, self._raw(edges) / total)
        return total, spline

    @property
    def norm_const(self):
        return 1.0 / self._table[0]

    def pdf(self, s):
        """phi(s), unit integral."""
        return self._raw(s) * self.norm_const

    def deriv(self, s):
        """phi'(s)."""
        return self._raw_deriv(s) * self.norm_const

    def cdf(self, s):
        """Phi(s) = int_0^s phi."""
        s = np.asarray(s, dtype=float)
        a, b = self.support
        out = np.where(s >= b, 1.0, 0.0)
        inside = (s > a) & (s < b)
        if np.any(inside):
            out = out.astype(float)
            out[inside] = self._table[1](s[inside])
        return out

    @cached_property
    def max_pdf(self):
        s = np.linspace(*self.support, 20001)
        return float(self.pdf(s).max())


@dataclass(frozen=True)
class NoiseSpec:
    seed: int = 0
    step_law: str = "rademacher"
    mollifier: Mollifier = field(default_factory=Mollifier)
    scale_sigma: float = 1.0
    bound_M: float | None = None
    stream: int = 0

    def __post_init__(self):
        if self.step_law not in STEP_LAWS:
            raise ValueError(f"step_law must be one of {STEP_LAWS}, got {self.step_law!r}")
        if not (self.scale_sigma > 0 and math.isfinite(self.scale_sigma)):
            raise ValueError("scale_sigma must be a positive finite number")
        if self.bound_M is not None and self.bound_M < 1.0:
            raise ValueError("bound_M must be at least 1")

    def with_stream(self, stream):
        return replace(self, stream=int(stream))

    def certified_bound(self):
        """Exact C^1 bound for Rademacher steps, ``None`` for Gaussian ones.

        With ``|X_k| = 1`` the value is a convex combination of two steps and
        the derivative is ``(X_{n+1} - X_n) phi(s)``, so
        ``|w| <= sigma`` and ``|w'| <= 2 sigma max(phi)``.
        """
        if self.step_law != "rademacher":
            return None
        return max(1.0, self.scale_sigma, 2.0 * self.scale_sigma * self.mollifier.max_pdf)

    def to_dict(self):
        return {
            "seed": self.seed,
            "step_law": self.step_law,
            "mollifier": {"half_width": self.mollifier.half_width,
                          "power": self.mollifier.power},
            "scale_sigma": self.scale_sigma,
            "bound_M": self.bound_M,
            "stream": self.stream,
        }


def walk_steps(spec: NoiseSpec, k_lo: int, k_hi: int) -> np.ndarray:
    """Steps ``X_k`` for ``k_lo <= k <= k_hi`` (before the sigma scaling)."""
    b_lo, b_hi = k_lo // _BLOCK, k_hi // _BLOCK
    chunks = []
    for b in range(b_lo, b_hi + 1):
        rng = stream_rng(spec.seed, spec.stream, _zigzag(b))
        if spec.step_law == "rademacher":
            chunks.append(2.0 * rng.integers(0, 2, size=_BLOCK) - 1.0)
        else:
            chunks.append(rng.standard_normal(_BLOCK))
    steps = np.concatenate(chunks)
    off = k_lo - b_lo * _BLOCK
    return steps[off:off + (k_hi - k_lo + 1)]


@dataclass(frozen=True, eq=False)
class NoisePath:
    """One realization of ``w`` tabulated on a uniform grid.

    Paths built from a walk keep the step window so that ``w`` and ``w'``
    can be evaluated exactly anywhere inside the covered range; synthetic
    paths fall back on linear interpolation of the tabulated values.
    """

    y_grid: np.ndarray
    w_values: np.ndarray
    w_deriv_values: np.ndarray
    spec: NoiseSpec | None = None
    seed_used: int | None = None
    bound_M: float = 1.0
    _k0: int = 0
    _steps: np.ndarray | None = None

    @classmethod
    def synthetic(cls, y_grid, w_values, w_deriv_values=None, bound_M=None):
        y_grid = np.asarray(y_grid, dtype=float)
        w_values = np.broadcast_to(np.asarray(w_values, dtype=float), y_grid.shape).copy()
        if w_deriv_values is None:
            w_deriv_values = np.gradient(w_values, y_grid)
        w_deriv_values = np.broadcast_to(np.asarray(w_deriv_values, dtype=float),
                                         y_grid.shape).copy()
        if bound_M is None:
            bound_M = max(1.0, float(np.abs(w_values).max()), float(np.abs(w_deriv_values).max()))
        return cls(y_grid, w_values, w_deriv_values, None, None, float(bound_M))

    @property
    def h_w(self):
        return float(self.y_grid[1] - self.y_grid[0])

    @property
    def y_range(self):
        return float(self.y_grid[0]), float(self.y_grid[-1])

    def _check_range(self, y):
        lo, hi = self.y_range
        tol = 1e-9 * max(1.0, abs(lo), abs(hi))
        if np.any(y < lo - tol) or np.any(y > hi + tol):
            raise ValueError(
                f"y outside noise range [{lo:g}, {hi:g}]: "
                f"requested [{float(np.min(y)):g}, {float(np.max(y)):g}]")

    def _split(self, y):
        n = np.floor(y).astype(np.int64)
        s = y - n
        i = n - self._k0
        return i, s

    def w(self, y):
        y = np.asarray(y, dtype=float)
        self._check_range(y)
        if self._steps is None:
            return np.interp(y, self.y_grid, self.w_values)
        i, s = self._split(y)
        m = self.spec.mollifier
        sigma = self.spec.scale_sigma
        big = m.cdf(s)
        return sigma * (self._steps[i] * (1.0 - big) + self._steps[i + 1] * big)

    def w_prime(self, y):
        y = np.asarray(y, dtype=float)
        self._check_range(y)
        if self._steps is None:
            return np.interp(y, self.y_grid, self.w_deriv_values)
        i, s = self._split(y)
        m = self.spec.mollifier
        return self.spec.scale_sigma * (self._steps[i + 1] - self._steps[i]) * m.pdf(s)

    @cached_property
    def _cumulative(self):
        h = np.diff(self.y_grid)
        cells = 0.5 * h * (self.w_values[1:] + self.w_values[:-1])
        return np.concatenate([[0.0], np.cumsum(cells)])

    def integral_from_grid_start(self, y):
        """Trapezoidal ``int_{y_min}^y w`` with a linear partial last cell."""
        y = np.asarray(y, dtype=float)
        self._check_range(y)
        g = self.y_grid
        j = np.clip(np.searchsorted(g, y, side="right") - 1, 0, len(g) - 2)
        d = y - g[j]
        slope = (self.w_values[j + 1] - self.w_values[j]) / (g[j + 1] - g[j])
        wy = self.w_values[j] + slope * d
        return self._cumulative[j] + 0.5 * d * (self.w_values[j] + wy)

    def integral(self, y):
        """``int_0^y w`` (signed for ``y < 0``)."""
        return self.integral_from_grid_start(y) - self.integral_from_grid_start(0.0)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["y", "w", "w_prime"])
            for row in zip(self.y_grid, self.w_values, self.w_deriv_values):
                out.writerow([repr(float(v)) for v in row])


def noise_from_steps(spec, steps, k0, y_range, h_w=_DEFAULT_HW):
    """Build a path from explicit walk steps ``X_{k0}, X_{k0+1}, ...``.

    Used by :func:`sample_noise`; also handy for hand-made walks.
    """
    y_min, y_max = _check_interval(y_range)
    n = max(1, int(math.ceil((y_max - y_min) / h_w - 1e-9)))
    y_grid = y_min + h_w * np.arange(n + 1)
    y_grid[-1] = max(y_grid[-1], y_max)
    steps = np.asarray(steps, dtype=float)
    need_lo = int(math.floor(y_grid[0]))
    need_hi = int(math.floor(y_grid[-1])) + 1
    if need_lo < k0 or need_hi > k0 + len(steps) - 1:
        raise ValueError("walk window does not cover the requested range")
    M = spec.certified_bound()
    path = NoisePath(y_grid, np.empty(0), np.empty(0), spec, spec.seed, 1.0, k0, steps)
    w = path.w(y_grid)
    dw = path.w_prime(y_grid)
    observed = max(1.0, float(np.abs(w).max()), float(np.abs(dw).max()))
    if M is None:
        M = observed if spec.bound_M is None else spec.bound_M
    if spec.bound_M is not None:
        M = spec.bound_M
    if observed > M * (1 + 1e-12):
        raise ValueError(f"sampled path exceeds the declared C^1 bound {M:g} (observed {observed:g})")
    return NoisePath(y_grid, w, dw, spec, spec.seed, float(M), k0, steps)


def _check_interval(y_range):
    y_min, y_max = (float(v) for v in y_range)
    if not (math.isfinite(y_min) and math.isfinite(y_max)):
        raise ValueError("noise range must be finite")
    if not y_max > y_min:
        raise ValueError(f"empty or reversed noise range ({y_min}, {y_max})")
    return y_min, y_max


def sample_noise(spec: NoiseSpec, y_range, h_w: float | None = None) -> NoisePath:
    """Sample ``w`` on ``[y_min, y_max]`` with grid spacing ``h_w``.

    ``h_w`` defaults to 0.02; callers tied to a solver grid pass
    ``min(0.02, hy)``.  The walk window spans ``[y_min - 1, y_max + 1]``.
    """
    y_min, y_max = _check_interval(y_range)
    h_w = _DEFAULT_HW if h_w is None else float(h_w)
    if not h_w > 0:
        raise ValueError("h_w must be positive")
    k_lo = int(math.floor(y_min)) - 1
    k_hi = int(math.floor(y_max)) + 2
    steps = walk_steps(spec, k_lo, k_hi)
    return noise_from_steps(spec, steps, k_lo, (y_min, y_max), h_w)


def noise_grid_spacing(hy):
    return min(_DEFAULT_HW, float(hy))


def integrate_W_eps(path: NoisePath, eps: float, y):
    """``W^eps(y) = eps^(1/3) int_0^(eps^(-2/3) y) w``; vectorized in ``y``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    y = np.asarray(y, dtype=float)
    return eps ** (1.0 / 3.0) * path.integral(y * eps ** (-2.0 / 3.0))


def _lag_products(spec, n_samples, lags, stream_base):
    """w(0) and w(lags) for ``n_samples`` independent streams."""
    lags = np.asarray(lags, dtype=float)
    hi = max(1.0, float(lags.max()))
    w0 = np.empty(n_samples)
    wl = np.empty((n_samples, lags.size))
    for i in range(n_samples):
        path = sample_noise(spec.with_stream(stream_base + i), (0.0, hi))
        w0[i] = path.w(0.0)
        wl[i] = path.w(lags)
    return w0, wl


def estimate_normalization(spec: NoiseSpec, n_samples: int, n_lags: int = 201):
    """Monte Carlo estimate of ``A = 2 int_0^1 E[w(0) w(xi)] dxi``.

    Returns ``(sigma_hat, std_error)`` with ``sigma_hat = A^(-1/2)``, the factor
    that turns the given noise into normalized noise.  The lag integral is cut
    at 1, beyond which ``w(0)`` is independent of the path.
    """
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    xi = np.linspace(0.0, 1.0, n_lags)
    w0, wl = _lag_products(spec, n_samples, xi, stream_base=spec.stream * 1_000_003 + 1)
    per_sample = 2.0 * np.trapezoid(w0[:, None] * wl, xi, axis=1)
    A = float(per_sample.mean())
    se_A = float(per_sample.std(ddof=1) / math.sqrt(n_samples))
    if A <= 0:
        raise ValueError(f"degenerate normalization estimate A = {A:g}; use more samples")
    sigma_hat = A ** -0.5
    return sigma_hat, 0.5 * A ** -1.5 * se_A


def lag_correlations(spec: NoiseSpec, n_samples: int, lags):
    """Empirical correlation of ``(w(0), w(lag))`` across independent paths."""
    w0, wl = _lag_products(spec, n_samples, lags, stream_base=spec.stream * 1_000_003 + 7)
    out = []
    for j in range(wl.shape[1]):
        out.append(float(np.corrcoef(w0, wl[:, j])[0, 1]))
    return np.array(out)


def dependency_range_check(spec: NoiseSpec, n_samples: int) -> float:
    if n_samples < 200:
        raise ValueError("n_samples must be at least 200")
    return float(np.abs(lag_correlations(spec, n_samples, [1.1, 1.5, 2.0])).max())


@dataclass(frozen=True, eq=False)
class BrownianPath:
    xi_grid: np.ndarray
    W_values: np.ndarray
    provenance: str = "sampled"

    def __post_init__(self):
        if self.provenance not in ("sampled", "coupled_from_noise", "synthetic"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.W_values[0] != 0.0:
            raise ValueError("Brownian path must start at 0")

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        lo, hi = self.xi_grid[0], self.xi_grid[-1]
        if np.any(xi < lo - 1e-12) or np.any(xi > hi + 1e-12):
            raise ValueError(f"xi outside driver range [{lo:g}, {hi:g}]")
        return np.interp(xi, self.xi_grid, self.W_values)

    def step_value(self, xi):
        """Right-continuous piecewise-constant reading of the nodes."""
        xi = np.asarray(xi, dtype=float)
        j = np.clip(np.searchsorted(self.xi_grid, xi + 1e-12, side="right") - 1,
                    0, len(self.xi_grid) - 1)
        return self.W_values[j]

    def negated(self):
        return BrownianPath(self.xi_grid, -self.W_values, self.provenance)


def make_driver_path(path: NoisePath, eps: float, xi_range, n_nodes: int | None = None):
    """Tabulate ``xi -> W^eps(xi)`` for driving the limit solver.

    By default the xi spacing maps onto the noise grid (``eps^(2/3) h_w``).
    """
    xi_lo, xi_hi = _check_interval(xi_range)
    if xi_lo != 0.0:
        raise ValueError("driver paths start at xi = 0")
    scale = eps ** (-2.0 / 3.0)
    lo, hi = path.y_range
    if xi_hi * scale > hi + 1e-9 or lo > 1e-12:
        raise ValueError(
            f"noise range [{lo:g}, {hi:g}] does not cover xi in [0, {xi_hi:g}] at eps={eps:g}")
    if n_nodes is None:
        n_nodes = int(math.ceil(xi_hi / (path.h_w / scale))) + 1
    xi = np.linspace(0.0, xi_hi, n_nodes)
    W = integrate_W_eps(path, eps, xi)
    W[0] = 0.0
    return BrownianPath(xi, W, "coupled_from_noise")


def sample_brownian(seed, xi_grid, stream: int = 0) -> BrownianPath:
    xi_grid = np.asarray(xi_grid, dtype=float)
    if xi_grid.ndim != 1 or xi_grid.size == 0 or xi_grid[0] != 0.0:
        raise ValueError("xi_grid must be a 1-D grid starting at 0")
    dxi = np.diff(xi_grid)
    if np.any(dxi <= 0):
        raise ValueError("xi_grid must be increasing")
    rng = stream_rng(seed, 0x42524F57, stream)
    inc = rng.standard_normal(dxi.size) * np.sqrt(dxi)
    return BrownianPath(xi_grid, np.concatenate([[0.0], np.cumsum(inc)]), "sampled")
