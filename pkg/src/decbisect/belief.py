"""Piecewise-constant posterior densities on the unit interval.

A :class:`Belief` stores breakpoints ``0 = b_0 < b_1 < ... < b_K = 1`` and one
density value per half-open segment ``[b_k, b_{k+1})``.  The family is closed
under the bisection Bayes update (the likelihood is a two-level step function)
and under convex mixing, so every operation here is exact up to floating point
rounding: there is no binning.

The hot loops live in small numba kernels; the public functions validate
their arguments and wrap the kernels.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ContractViolation, DomainError, ParameterError

__all__ = [
    "Belief",
    "SharedGridBeliefs",
    "uniform_prior",
    "cdf",
    "quantile",
    "median",
    "mean",
    "density_at",
    "bayes_bisection_update",
    "mix",
    "summarize",
]

NORMALIZATION_TOL = 1e-9
MEDIAN_TOL = 1e-9


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _compress(bp, vals):
    # drop interior breakpoints whose neighbouring values are exactly equal
    n = vals.shape[0]
    keep = 1
    for k in range(1, n):
        if vals[k] != vals[k - 1]:
            keep += 1
    if keep == n:
        return bp, vals
    nbp = np.empty(keep + 1)
    nv = np.empty(keep)
    nbp[0] = bp[0]
    nv[0] = vals[0]
    c = 0
    for k in range(1, n):
        if vals[k] != vals[k - 1]:
            c += 1
            nbp[c] = bp[k]
            nv[c] = vals[k]
    nbp[keep] = bp[n]
    return nbp, nv


@njit(cache=True)
def _mass(bp, vals):
    acc = 0.0
    for k in range(vals.shape[0]):
        acc += vals[k] * (bp[k + 1] - bp[k])
    return acc


@njit(cache=True)
def _segment_of(bp, x):
    # right-continuous lookup; x == 1 belongs to the last segment
    s = np.searchsorted(bp, x, side="right") - 1
    n = bp.shape[0] - 1
    if s >= n:
        s = n - 1
    if s < 0:
        s = 0
    return s


@njit(cache=True)
def _cdf(bp, vals, x):
    n = vals.shape[0]
    if x >= bp[n]:
        return 1.0
    s = _segment_of(bp, x)
    acc = 0.0
    for k in range(s):
        acc += vals[k] * (bp[k + 1] - bp[k])
    acc += vals[s] * (x - bp[s])
    if acc > 1.0:
        acc = 1.0
    return acc


@njit(cache=True)
def _quantile(bp, vals, u):
    if u <= 0.0:
        return bp[0]
    n = vals.shape[0]
    acc = 0.0
    last = 0
    for k in range(n):
        v = vals[k]
        if v <= 0.0:
            continue
        m = v * (bp[k + 1] - bp[k])
        last = k
        if acc + m >= u:
            x = bp[k] + (u - acc) / v
            if x > bp[k + 1]:
                x = bp[k + 1]
            elif x < bp[k]:
                x = bp[k]
            return x
        acc += m
    # u marginally above the accumulated total
    return bp[last + 1]


@njit(cache=True)
def _bisect(bp, vals, x_hat, lo, hi):
    """Multiply by ``lo`` on [0, x_hat] and ``hi`` on (x_hat, 1].

    Returns the new breakpoints, normalized values and the pre-normalization
    mass.
    """
    n = vals.shape[0]
    s = _segment_of(bp, x_hat)
    split = bp[s] < x_hat and x_hat < bp[s + 1]
    m = n + 1 if split else n
    nbp = np.empty(m + 1)
    nv = np.empty(m)
    c = 0
    for k in range(n):
        nbp[c] = bp[k]
        nv[c] = vals[k]
        c += 1
        if split and k == s:
            nbp[c] = x_hat
            nv[c] = vals[k]
            c += 1
    nbp[m] = bp[n]
    total = 0.0
    for k in range(m):
        if nbp[k + 1] <= x_hat:
            nv[k] *= lo
        else:
            nv[k] *= hi
        total += nv[k] * (nbp[k + 1] - nbp[k])
    for k in range(m):
        nv[k] /= total
    nbp, nv = _compress(nbp, nv)
    return nbp, nv, total


@njit(cache=True)
def _mix(a, bp1, v1, bp2, v2):
    n1 = v1.shape[0]
    n2 = v2.shape[0]
    nbp = np.empty(n1 + n2 + 1)
    nv = np.empty(n1 + n2)
    nbp[0] = 0.0
    b = 1.0 - a
    i = 0
    j = 0
    k = 0
    while i < n1 and j < n2:
        nv[k] = a * v1[i] + b * v2[j]
        r1 = bp1[i + 1]
        r2 = bp2[j + 1]
        if r1 < r2:
            nbp[k + 1] = r1
            i += 1
        elif r2 < r1:
            nbp[k + 1] = r2
            j += 1
        else:
            nbp[k + 1] = r1
            i += 1
            j += 1
        k += 1
    nbp = nbp[: k + 1]
    nv = nv[:k]
    total = _mass(nbp, nv)
    for q in range(k):
        nv[q] /= total
    return _compress(nbp, nv)


@njit(cache=True)
def _summary(bp, vals, grid, x_star):
    n = vals.shape[0]
    prefix = np.empty(n + 1)
    prefix[0] = 0.0
    mean = 0.0
    for k in range(n):
        m = vals[k] * (bp[k + 1] - bp[k])
        prefix[k + 1] = prefix[k] + m
        mean += m * (0.5 * (bp[k] + bp[k + 1]))
    cdfs = np.empty(grid.shape[0])
    for g in range(grid.shape[0]):
        x = grid[g]
        if x >= bp[n]:
            cdfs[g] = 1.0
        else:
            s = _segment_of(bp, x)
            c = prefix[s] + vals[s] * (x - bp[s])
            cdfs[g] = c if c < 1.0 else 1.0
    d = vals[_segment_of(bp, x_star)]
    logp = np.log(d) if d > 0.0 else -np.inf
    return _quantile(bp, vals, 0.5), min(max(mean, 0.0), 1.0), logp, cdfs


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False, slots=True)
class Belief:
    """Immutable piecewise-constant density on [0, 1].

    ``values[k]`` is the density on ``[breakpoints[k], breakpoints[k+1])``.
    Construction validates the invariants and merges equal neighbours.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.array(self.breakpoints, dtype=np.float64)
        vals = np.array(self.values, dtype=np.float64)
        if bp.ndim != 1 or vals.ndim != 1 or bp.size != vals.size + 1 or vals.size < 1:
            raise ParameterError("need K+1 breakpoints for K >= 1 segment values")
        if bp[0] != 0.0 or bp[-1] != 1.0:
            raise ParameterError("breakpoints must start at 0 and end at 1")
        if not np.all(np.diff(bp) > 0):
            raise ParameterError("breakpoints must be strictly increasing")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ParameterError("density values must be finite and nonnegative")
        total = _mass(bp, vals)
        if total <= 0:
            raise ParameterError("density has zero mass")
        bp, vals = _compress(bp, vals / total)
        _freeze(self, bp, vals)

    @classmethod
    def _trusted(cls, bp, vals):
        obj = object.__new__(cls)
        _freeze(obj, bp, vals)
        return obj

    @property
    def n_segments(self):
        return self.values.shape[0]

    @property
    def masses(self):
        return self.values * np.diff(self.breakpoints)

    def total_mass(self):
        return float(_mass(self.breakpoints, self.values))

    def __eq__(self, other):
        if not isinstance(other, Belief):
            return NotImplemented
        return np.array_equal(self.breakpoints, other.breakpoints) and np.array_equal(
            self.values, other.values
        )

    def __repr__(self):
        return f"Belief(n_segments={self.n_segments})"


def _freeze(obj, bp, vals):
    bp = np.ascontiguousarray(bp, dtype=np.float64)
    vals = np.ascontiguousarray(vals, dtype=np.float64)
    bp.flags.writeable = False
    vals.flags.writeable = False
    object.__setattr__(obj, "breakpoints", bp)
    object.__setattr__(obj, "values", vals)


_UNIFORM_BP = np.array([0.0, 1.0])
_UNIFORM_V = np.array([1.0])


def uniform_prior() -> Belief:
    return Belief._trusted(_UNIFORM_BP.copy(), _UNIFORM_V.copy())


def _check_unit(x, name):
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"{name}={x!r} is outside [0, 1]")


def cdf(b: Belief, x: float) -> float:
    """Mass of ``[0, x]``."""
    _check_unit(x, "x")
    return float(_cdf(b.breakpoints, b.values, float(x)))


def quantile(b: Belief, u: float) -> float:
    """Leftmost ``x`` with ``cdf(b, x) >= u``."""
    _check_unit(u, "u")
    return float(_quantile(b.breakpoints, b.values, float(u)))


def median(b: Belief) -> float:
    return float(_quantile(b.breakpoints, b.values, 0.5))


def mean(b: Belief) -> float:
    bp = b.breakpoints
    m = b.values * (bp[1:] - bp[:-1])
    return float(min(max(np.dot(m, 0.5 * (bp[1:] + bp[:-1])), 0.0), 1.0))


def density_at(b: Belief, x: float) -> float:
    _check_unit(x, "x")
    return float(b.values[_segment_of(b.breakpoints, float(x))])


def _median_ok(b, x_hat):
    if abs(_cdf(b.breakpoints, b.values, x_hat) - 0.5) <= MEDIAN_TOL:
        return True
    # once the posterior is narrower than float resolution the computed median
    # is the best representable split; accept it bit-exactly
    return x_hat == _quantile(b.breakpoints, b.values, 0.5)


def bayes_bisection_update(
    b: Belief, y: int, eps: float, x_hat: float, *, return_mass: bool = False
):
    """Posterior after response ``y`` to the query "is the target <= x_hat?".

    The density is multiplied by ``2 f1(y)`` on ``[0, x_hat]`` and ``2 f0(y)``
    on ``(x_hat, 1]`` and renormalized.  At the exact median the product
    already integrates to one.  With ``return_mass`` the pre-normalization
    mass is returned alongside the new belief.
    """
    if not 0.0 < eps <= 0.5:
        raise ParameterError(f"eps={eps!r} must lie in (0, 0.5]")
    if y not in (0, 1):
        raise ParameterError(f"response y={y!r} must be 0 or 1")
    _check_unit(x_hat, "x_hat")
    x_hat = float(x_hat)
    if not _median_ok(b, x_hat):
        raise ContractViolation(
            f"x_hat={x_hat!r} is not the median: cdf={cdf(b, x_hat)!r}"
        )
    if eps == 0.5:
        return (b, 1.0) if return_mass else b
    f1 = 1.0 - eps if y == 1 else eps
    bp, vals, total = _bisect(b.breakpoints, b.values, x_hat, 2.0 * f1, 2.0 * (1.0 - f1))
    out = Belief._trusted(bp, vals)
    return (out, float(total)) if return_mass else out


def mix(alpha: float, b_updated: Belief, b_other: Belief) -> Belief:
    """Pointwise ``alpha * b_updated + (1 - alpha) * b_other``."""
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha={alpha!r} must lie in [0, 1]")
    if alpha == 1.0 or b_updated is b_other:
        return b_updated
    if alpha == 0.0:
        return b_other
    bp, vals = _mix(
        float(alpha), b_updated.breakpoints, b_updated.values, b_other.breakpoints, b_other.values
    )
    return Belief._trusted(bp, vals)


def summarize(b: Belief, grid: np.ndarray, x_star: float):
    """``(median, mean, log density at x_star, cdf on grid)`` in one pass."""
    return _summary(b.breakpoints, b.values, np.asarray(grid, dtype=np.float64), float(x_star))


# ---------------------------------------------------------------------------
# many beliefs on one grid
# ---------------------------------------------------------------------------


class SharedGridBeliefs:
    """A stack of beliefs sharing one breakpoint grid.

    Used by the synchronous runner, where every agent is rewritten at every
    iteration and a common grid turns neighbourhood averaging into one matrix
    product.  Redundant breakpoints are allowed here; :meth:`to_beliefs`
    merges them away.
    """

    def __init__(self, beliefs):
        grid = np.unique(np.concatenate([b.breakpoints for b in beliefs]))
        self.grid = grid
        self.values = np.vstack([_values_on(b, grid) for b in beliefs])

    @property
    def widths(self):
        return np.diff(self.grid)

    def masses(self):
        return self.values * self.widths

    def medians(self):
        masses = self.masses()
        cum = np.cumsum(masses, axis=1)
        rows = np.arange(self.values.shape[0])
        s = np.argmax(cum >= 0.5, axis=1)
        # rows whose total rounds below 0.5 never happen for normalized rows
        before = np.where(s > 0, cum[rows, np.maximum(s - 1, 0)], 0.0)
        v = self.values[rows, s]
        x = self.grid[s] + (0.5 - before) / v
        return np.clip(x, self.grid[s], self.grid[s + 1])

    def bisect(self, x_hat, f1):
        """Bayes-update row ``r`` at ``x_hat[r]`` with ``2 f1[r]`` on the left side."""
        new = np.setdiff1d(x_hat, self.grid)
        if new.size:
            grid = np.union1d(self.grid, new)
            idx = np.searchsorted(self.grid, grid[:-1], side="right") - 1
            self.values = self.values[:, idx]
            self.grid = grid
        left = self.grid[1:][None, :] <= x_hat[:, None]
        factor = np.where(left, 2.0 * f1[:, None], 2.0 * (1.0 - f1)[:, None])
        self.values = self.values * factor
        self.normalize()

    def average(self, weights):
        self.values = weights @ self.values
        self.normalize()

    def normalize(self):
        self.values /= self.masses().sum(axis=1, keepdims=True)

    def to_beliefs(self):
        out = []
        for row in self.values:
            bp, vals = _compress(self.grid, row.copy())
            out.append(Belief._trusted(bp, vals))
        return out


def _values_on(b, grid):
    idx = np.searchsorted(b.breakpoints, grid[:-1], side="right") - 1
    return b.values[idx]
