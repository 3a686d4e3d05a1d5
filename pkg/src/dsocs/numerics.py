"""Small dense numerics: linear solves, finite-difference Jacobians, Newton
iteration, scalar root enumeration and log-log slope fitting.

Everything here works on 1-D float arrays of modest length (the step systems
of the integrators have 1 to 6 unknowns), so clarity wins over vectorization.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import (
    ConvergenceError,
    DimensionError,
    InsufficientDataError,
    NonPositiveValueError,
    SingularMatrixError,
)

PIVOT_RTOL = 1e-14
ROOT_WIDTH = 1e-13
ROOT_MERGE = 1e-10
LINE_SEARCH_HALVINGS = 20


@dataclass(frozen=True)
class SolveConfig:
    """Newton settings. ``tolerance`` bounds the residual infinity-norm."""

    tolerance: float = 1e-12
    max_iterations: int = 50
    fd_epsilon: float = 1e-7

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not self.fd_epsilon > 0:
            raise ValueError("fd_epsilon must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class NewtonInfo:
    iterations: int
    residual_norm: float


def _as_vector(x):
    if type(x) is np.ndarray and x.ndim == 1 and x.dtype == np.float64:
        return x
    return np.atleast_1d(np.asarray(x, dtype=float))


def linear_solve(A, b):
    """Solve ``A x = b`` by LU with partial pivoting.

    Raises :class:`SingularMatrixError` when a pivot falls below
    ``1e-14`` times the largest row norm of ``A``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = _as_vector(b)
    n = A.shape[0]
    if A.shape != (n, n) or b.shape != (n,):
        raise DimensionError(f"cannot solve {A.shape} system with rhs {b.shape}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise ValueError("non-finite entries in linear system")
    scale = np.max(np.sum(np.abs(A), axis=1)) if n else 0.0
    if scale == 0.0:
        raise SingularMatrixError("zero matrix")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    if np.min(np.abs(np.diag(lu))) < PIVOT_RTOL * scale:
        raise SingularMatrixError(
            f"pivot {np.min(np.abs(np.diag(lu))):.3e} below {PIVOT_RTOL:g} * {scale:.3e}"
        )
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


def fd_jacobian(f, x, eps=1e-7):
    """Central-difference Jacobian of ``f`` at ``x``; shape (len f(x), len x)."""
    x = _as_vector(x)
    if not eps > 0:
        raise ValueError("eps must be positive")
    columns = []
    for j in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[j] += eps
        xm[j] -= eps
        columns.append((_as_vector(f(xp)) - _as_vector(f(xm))) / (2.0 * eps))
    if not columns:
        return np.zeros((_as_vector(f(x)).size, 0))
    return np.column_stack(columns)


def newton_solve(residual, guess, cfg: SolveConfig | None = None, full_output=False):
    """Damped Newton iteration for ``residual(x) = 0``.

    The Jacobian is recomputed by central differences at every iterate.  A
    step is halved (up to 20 times) until the residual infinity-norm drops.
    With ``full_output`` a :class:`NewtonInfo` is returned alongside ``x``.
    """
    cfg = cfg or SolveConfig()
    x = _as_vector(guess).copy()
    r = _as_vector(residual(x))
    if r.size != x.size:
        raise DimensionError(f"residual has {r.size} components for {x.size} unknowns")
    norm = np.max(np.abs(r)) if r.size else 0.0
    iterations = 0
    while norm > cfg.tolerance:
        if iterations >= cfg.max_iterations:
            raise ConvergenceError(
                f"no convergence after {iterations} iterations (residual {norm:.3e})",
                x=x, residual_norm=norm, iterations=iterations,
            )
        iterations += 1
        jac = fd_jacobian(residual, x, cfg.fd_epsilon)
        dx = linear_solve(jac, -r)
        t = 1.0
        for _ in range(LINE_SEARCH_HALVINGS + 1):
            x_new = x + t * dx
            r_new = _as_vector(residual(x_new))
            norm_new = np.max(np.abs(r_new))
            if norm_new < norm:
                break
            t *= 0.5
        else:
            raise ConvergenceError(
                f"line search stalled at residual {norm:.3e}",
                x=x, residual_norm=norm, iterations=iterations,
            )
        x, r, norm = x_new, r_new, norm_new
    if full_output:
        return x, NewtonInfo(iterations, float(norm))
    return x


def _bisect(f, a, b, fa, vectorized):
    """Refine sign-change brackets ``[a, b]`` until narrower than ROOT_WIDTH."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    fa = np.array(fa, dtype=float)
    if vectorized:
        return _multisect(f, a, b, fa)
    for _ in range(200):
        active = (b - a) > ROOT_WIDTH
        if not np.any(active):
            break
        mid = 0.5 * (a + b)
        fm = np.array([f(m) for m in mid], dtype=float)
        left = np.sign(fm) == np.sign(fa)
        # a bracket stays where the sign change is; exact zeros collapse it
        hit = fm == 0.0
        a = np.where(active & left & ~hit, mid, a)
        fa = np.where(active & left & ~hit, fm, fa)
        b = np.where(active & ~left & ~hit, mid, b)
        a = np.where(active & hit, mid, a)
        b = np.where(active & hit, mid, b)
    return 0.5 * (a + b)


_SECTIONS = 32


def _multisect(f, a, b, fa):
    """Bracket refinement that samples every bracket at 33 points per call."""
    frac = np.linspace(0.0, 1.0, _SECTIONS + 1)
    sa = np.sign(fa)
    for _ in range(40):
        if np.all(b - a <= ROOT_WIDTH):
            break
        x = a[:, None] + (b - a)[:, None] * frac
        fx = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
        fx[:, 0] = fa
        flip = np.sign(fx) != sa[:, None]
        # first sample past the sign change; exact zeros count as a change
        j = np.where(flip.any(axis=1), np.argmax(flip, axis=1), _SECTIONS)
        j = np.maximum(j, 1)
        rows = np.arange(len(a))
        a, b, fa = x[rows, j - 1], x[rows, j], fx[rows, j - 1]
        a = np.where(fx[rows, j] == 0.0, b, a)
    return 0.5 * (a + b)


def _eval(f, x, vectorized):
    if vectorized:
        return float(np.asarray(f(np.array([x])), dtype=float)[0])
    return float(f(x))


def _refine_extremum(f, a, m, b, sign, vectorized):
    """Locate the point of least ``sign * f`` on ``[a, b]`` near grid point ``m``."""
    if not vectorized:
        res = scipy.optimize.minimize_scalar(
            lambda x: sign * float(f(x)), bracket=(a, m, b), method="golden", tol=1e-15
        )
        x = float(np.clip(res.x, a, b))
        return x, float(f(x))
    frac = np.linspace(0.0, 1.0, _SECTIONS + 1)
    best_x, best_f = m, _eval(f, m, True)
    for _ in range(12):
        x = a + (b - a) * frac
        fx = np.asarray(f(x), dtype=float)
        i = int(np.argmin(sign * fx))
        if sign * fx[i] < sign * best_f:
            best_x, best_f = float(x[i]), float(fx[i])
        if np.sign(best_f) == -sign:
            break
        step = (b - a) / _SECTIONS
        a, b = max(a, x[i] - step), min(b, x[i] + step)
        if b - a <= ROOT_WIDTH:
            break
    return best_x, best_f


def _hidden_pairs(f, grid, values, vectorized):
    """Sign-change pairs hiding between neighbouring grid points.

    At every interior grid extremum whose neighbours share its sign, the
    extremum is refined; if it crosses zero the triple (left, crossing
    point, right) is returned.
    """
    out = []
    v = values
    inner = np.arange(1, len(grid) - 1)
    same = (np.sign(v[inner - 1]) == np.sign(v[inner])) & (np.sign(v[inner + 1]) == np.sign(v[inner]))
    toward_zero = (np.abs(v[inner]) <= np.abs(v[inner - 1])) & (np.abs(v[inner]) <= np.abs(v[inner + 1]))
    for i in inner[same & toward_zero & np.isfinite(v[inner])]:
        sign = np.sign(v[i])
        x, fx = _refine_extremum(f, grid[i - 1], grid[i], grid[i + 1], sign, vectorized)
        if np.sign(fx) == -sign or fx == 0.0:
            out.append((grid[i - 1], x, grid[i + 1]))
    return out


def enumerate_scalar_roots(f, lo, hi, grid_points, vectorized=False, split_pairs=True):
    """All sign-change roots of a scalar function on ``[lo, hi]``.

    ``f`` is sampled on a uniform grid; each bracket where the sign flips is
    bisected to width 1e-13.  With ``split_pairs`` (the default) grid
    extrema that approach zero are refined too, which recovers pairs of
    roots closer together than the grid spacing.  Roots closer than 1e-10
    are merged.  Tangential roots (no sign change) are not detected.  Set
    ``vectorized`` when ``f`` accepts and returns arrays.
    """
    if not lo < hi:
        raise ValueError("need lo < hi")
    if grid_points < 2:
        raise ValueError("need at least 2 grid points")
    grid = np.linspace(lo, hi, int(grid_points))
    if vectorized:
        values = np.asarray(f(grid), dtype=float)
    else:
        values = np.array([f(x) for x in grid], dtype=float)
    finite = np.isfinite(values)
    roots = list(grid[(values == 0.0) & finite])
    s = np.sign(values)
    lo_b, hi_b, f_lo = [], [], []
    idx = np.nonzero((s[:-1] * s[1:] < 0) & finite[:-1] & finite[1:])[0]
    lo_b.extend(grid[idx])
    hi_b.extend(grid[idx + 1])
    f_lo.extend(values[idx])
    if split_pairs:
        for a, x, b in _hidden_pairs(f, grid, values, vectorized):
            fa = _eval(f, a, vectorized)
            lo_b += [a, x]
            hi_b += [x, b]
            f_lo += [fa, -fa]
    if lo_b:
        roots.extend(_bisect(f, lo_b, hi_b, f_lo, vectorized))
    roots.sort()
    merged = []
    for r in roots:
        if merged and r - merged[-1] < ROOT_MERGE:
            continue
        merged.append(float(r))
    return merged


def loglog_slope(pairs):
    """Least-squares slope of log(error) against log(h)."""
    pairs = list(pairs)
    if len(pairs) < 2:
        raise InsufficientDataError("need at least two (h, error) pairs")
    h, err = np.array(pairs, dtype=float).T
    if np.any(h <= 0) or np.any(err <= 0):
        raise NonPositiveValueError("step sizes and errors must be positive")
    if np.ptp(h) == 0:
        raise InsufficientDataError("need at least two distinct step sizes")
    slope, _ = np.polyfit(np.log(h), np.log(err), 1)
    return float(slope)
