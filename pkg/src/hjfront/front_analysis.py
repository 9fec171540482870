"""
Zero level sets of solutions, front comparisons and sub-level inclusions.

Fronts are stored as graphs ``y = y_front(x)``; a column with several sign
changes keeps the crossing closest to its neighbour and is marked
multivalued, a column without a sign change is flagged.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .fields import ScalarField


@dataclass(frozen=True, eq=False)
class FrontCurve:
    x_nodes: np.ndarray
    y_front: np.ndarray
    time_stamp: float
    flagged: np.ndarray
    multivalued: np.ndarray

    @property
    def valid(self):
        return ~self.flagged

    def to_rows(self):
        for x, y, f in zip(self.x_nodes, self.y_front, self.flagged):
            yield [repr(float(self.time_stamp)), repr(float(x)), repr(float(y)), int(bool(f))]


def write_fronts_csv(path, curves):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t", "x", "y_front", "flagged"])
        for c in curves:
            out.writerows(c.to_rows())


def _crossings(y, col):
    """Zero crossings of one column, linearly interpolated."""
    s = np.sign(col)
    roots = list(y[col == 0.0])
    idx = np.flatnonzero(s[:-1] * s[1:] < 0)
    a, b = col[idx], col[idx + 1]
    roots.extend(y[idx] - a * (y[idx + 1] - y[idx]) / (b - a))
    return np.sort(np.array(roots))


def extract_front(field: ScalarField) -> FrontCurve:
    """Per x-column, the zero crossing nearest the previous column's front."""
    grid = field.grid
    y = grid.y
    nx = grid.nx
    yf = np.full(nx, np.nan)
    flagged = np.zeros(nx, dtype=bool)
    multi = np.zeros(nx, dtype=bool)
    prev = None
    for i in range(nx):
        r = _crossings(y, field.values[i])
        if r.size == 0:
            flagged[i] = True
            continue
        multi[i] = r.size > 1
        if prev is None:
            yf[i] = r[0]
        else:
            yf[i] = r[np.argmin(np.abs(r - prev))]
        prev = yf[i]
    return FrontCurve(grid.x.copy(), yf, field.time_stamp, flagged, multi)


def compare_fronts(a: FrontCurve, b: FrontCurve) -> float:
    """``max_x |y_a - y_b|`` over columns valid in both curves."""
    if a.x_nodes.shape != b.x_nodes.shape or not np.allclose(a.x_nodes, b.x_nodes):
        raise ValueError("fronts live on different x-grids")
    ok = a.valid & b.valid
    if not np.any(ok):
        raise ValueError("no column is valid in both fronts")
    return float(np.abs(a.y_front[ok] - b.y_front[ok]).max())


def ptw_front_predict(corrector, eps, t, itau=None, tol=1e-13, max_iter=200):
    """Solve ``y + eps^(2/3) chi(x, eps^(2/3) y) = t`` per x by bisection on ``[t-1, t+1]``.

    ``chi`` is read by linear interpolation along xi.  For a time-dependent
    corrector pass ``itau``; the unmasked values are used so the bracket may
    leave the wedge.
    """
    s = eps ** (2.0 / 3.0)
    data = corrector.chi
    if corrector.provenance == "time_dependent":
        if itau is None:
            itau = int(np.argmin(np.abs(corrector.tau_grid - s * t)))
        data = corrector.meta["chi_full"][:, :, itau]
    xi = corrector.xi_grid
    lo = np.full(data.shape[0], t - 1.0)
    hi = np.full(data.shape[0], t + 1.0)
    if s * lo.min() < xi[0] - 1e-12 or s * hi.max() > xi[-1] + 1e-12:
        raise ValueError(f"corrector does not cover xi in [{s * (t - 1):g}, {s * (t + 1):g}]")

    def F(yv):
        vals = np.array([np.interp(s * yv[i], xi, data[i]) for i in range(data.shape[0])])
        return yv + s * vals - t

    flo, fhi = F(lo), F(hi)
    if np.any(flo > 0) or np.any(fhi < 0):
        raise ValueError("no root in the bracket [t - 1, t + 1]; the corrector is too large")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = F(mid)
        left = fm <= 0
        lo = np.where(left, mid, lo)
        hi = np.where(left, hi, mid)
        if float((hi - lo).max()) < tol:
            break
    yf = 0.5 * (lo + hi)
    n = data.shape[0]
    return FrontCurve(np.asarray(corrector.x_grid, dtype=float).copy(), yf, float(t),
                      np.zeros(n, dtype=bool), np.zeros(n, dtype=bool))


def sublevel_inclusion(f_inner: ScalarField, f_outer: ScalarField, tol=None):
    """Check ``{f_inner <= 0} subset {f_outer <= tol}``.

    Returns ``(holds, margin)`` with ``margin`` the largest value of
    ``f_outer`` on ``{f_inner <= 0}``.  ``tol`` defaults to ``2 hy``.
    """
    if f_inner.grid != f_outer.grid:
        raise ValueError("fields are on different grids")
    if tol is None:
        tol = 2.0 * f_inner.grid.hy
    inside = f_inner.values <= 0
    if not np.any(inside):
        return True, -np.inf
    margin = float(f_outer.values[inside].max())
    return margin <= tol, margin


def inclusion_report(path, entries):
    with open(path, "w") as fh:
        json.dump(entries, fh, indent=2, sort_keys=True)
