"""Numerical checks of the convergence theory on simulated trajectories.

All quantities concern a half-line ``B = [0, b]``, so the posterior mass of
``B`` held by agent ``i`` is its CDF value ``F_i(b)``.  Most functions come in
two flavours: one taking beliefs, and an ``*_from_masses`` / array version
used by :func:`diagnostic_series`, which works from per-step records so that
a trajectory can be checked (or deliberately corrupted) after the fact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .belief import cdf, density_at, median
from .errors import InvariantViolation, ParameterError
from .network import CollaborationModel, coefficient_of_ergodicity, interaction_matrix

__all__ = [
    "MARTINGALE_TOL",
    "LAMBDA_TOL",
    "LEMMA5_TOL",
    "SATURATION_TOL",
    "StepRecord",
    "StepRecorder",
    "DiagnosticSeries",
    "dynamic_range",
    "bisection_masses",
    "lambda_t",
    "lambda_from_masses",
    "martingale_residual",
    "martingale_residual_from_masses",
    "transition_residual",
    "innovation",
    "lemma5_gap",
    "lemma5_window",
    "log_belief_at_truth",
    "smooth_extrema_bounds",
    "rmse_metrics",
    "diagnostic_series",
    "check_invariants",
]

MARTINGALE_TOL = 1e-10
LAMBDA_TOL = 1e-9
LEMMA5_TOL = 1e-9
# once a posterior is narrower than float spacing the median is no longer an
# exact half-mass point and the bisection identities stop holding to 1e-10
SATURATION_TOL = 1e-12


def _masses(beliefs, b):
    return np.array([cdf(p, b) for p in beliefs])


def dynamic_range(beliefs, b: float) -> float:
    """Spread ``max_i F_i(b) - min_i F_i(b)`` across agents."""
    if len(beliefs) == 0:
        raise ParameterError("need at least one belief")
    F = _masses(beliefs, b)
    return float(F.max() - F.min())


def _mu(F):
    return np.minimum(F, 1.0 - F)


def _check_dims(model, v, F):
    if v.shape != (model.M,) or F.shape[0] != model.M:
        raise ParameterError(f"expected length-{model.M} vectors")


def lambda_from_masses(F, model: CollaborationModel, v) -> float:
    """Tilted one-step growth factor of ``exp(v . F)`` at masses ``F``.

    Sums ``q_i P_ij exp(v A_ij F - v F) cosh((v_i + v_j) alpha_i (1 - 2 eps_i) mu_i)``
    over ordered pairs.  The exponent difference is formed directly to avoid
    cancellation.
    """
    F = np.asarray(F, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_dims(model, v, F)
    a = model.alpha[:, None]
    # v A_ij F - v F = (F_j - F_i) ((1 - a_i) v_i - a_i v_j)
    shift = (F[None, :] - F[:, None]) * ((1.0 - a) * v[:, None] - a * v[None, :])
    arg = (v[:, None] + v[None, :]) * (model.alpha * (1.0 - 2.0 * model.eps) * _mu(F))[:, None]
    w = model.q[:, None] * model.P
    return float(np.sum(w * np.exp(shift) * np.cosh(arg)))


def lambda_t(beliefs, model: CollaborationModel, v, b: float) -> float:
    if len(beliefs) != model.M:
        raise ParameterError("one belief per agent required")
    return lambda_from_masses(_masses(beliefs, b), model, v)


def bisection_masses(F, m, below, eps):
    """Mass of ``[0, b]`` after a bisection update, for both responses.

    ``m`` is the mass left of the query point and ``below`` says whether
    ``b`` lies at or left of it.  Returns an array ``[..., 2]`` indexed by the
    response.  The exact normalizer is used, so a query point that is not a
    true median shows up as a broken martingale rather than being hidden.
    """
    F, m, eps = np.broadcast_arrays(*(np.asarray(x, dtype=np.float64) for x in (F, m, eps)))
    out = np.empty(F.shape + (2,))
    for y in (0, 1):
        f1 = 1.0 - eps if y == 1 else eps
        f0 = 1.0 - f1
        z = f1 * m + f0 * (1.0 - m)
        out[..., y] = np.where(below, f1 * F, f1 * m + f0 * (F - m)) / z
    return out


def martingale_residual_from_masses(F, m, below, model: CollaborationModel, v) -> float:
    """``|E[v . F_{t+1} | state] - v . F_t|`` by enumerating every ``(i, j, y)``.

    Each of the ``2 M^2`` outcomes has probability ``q_i P_ij / 2`` (a median
    query is answered 1 or 0 with probability one half).  Outcome ``(i, j, y)``
    replaces the masses of ``i`` and ``j`` by
    ``alpha_i F_i'(y) + (1 - alpha_i) F_j``.
    """
    F = np.asarray(F, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_dims(model, v, F)
    post = bisection_masses(F, m, below, model.eps)  # (M, 2)
    a = model.alpha[:, None, None]
    new = a * post[:, None, :] + (1.0 - a) * F[None, :, None]  # (i, j, y)
    change = (v[:, None, None] + v[None, :, None]) * new - (v * F)[:, None, None] - (v * F)[None, :, None]
    w = (0.5 * model.q[:, None] * model.P)[:, :, None]
    return float(abs(np.sum(w * change)))


def martingale_residual(beliefs, model: CollaborationModel, v, b: float) -> float:
    if len(beliefs) != model.M:
        raise ParameterError("one belief per agent required")
    x_hat = np.array([median(p) for p in beliefs])
    m = np.array([cdf(p, x) for p, x in zip(beliefs, x_hat)])
    F = _masses(beliefs, b)
    return martingale_residual_from_masses(F, m, b <= x_hat, model, v)


def innovation(F_i: float, eps_i: float, alpha_i: float, y: int) -> float:
    """Mass injected into rows ``i`` and ``j`` by response ``y``: ``+-alpha (1-2 eps) mu``."""
    sign = 1.0 if y == 1 else -1.0
    return sign * alpha_i * (1.0 - 2.0 * eps_i) * min(F_i, 1.0 - F_i)


def transition_residual(F_before, F_after, m_i, below_i, event, model: CollaborationModel):
    """Largest gap between recorded masses after a step and the one-step prediction.

    The prediction is ``A_ij F_before`` plus the innovation of the realized
    response on rows ``i`` and ``j``.
    """
    i, j, y = event.i, event.j, event.y
    F_before = np.asarray(F_before, dtype=np.float64)
    post = bisection_masses(F_before[i], m_i, below_i, model.eps[i])[..., y]
    pred = F_before.copy()
    a = model.alpha[i]
    pred[i] = a * post + (1.0 - a) * F_before[j]
    pred[j] = pred[i]
    return float(np.max(np.abs(pred - np.asarray(F_after))))


def lemma5_gap(P_start, P_end, matrices, innovations) -> float:
    """Slack of the dynamic-range bound over one window of ``R`` steps.

    Returns ``tau1(A_{R-1} ... A_0) V(P_start) + sum_k range(d_k) - V(P_end)``,
    which is nonnegative for any genuine trajectory.
    """
    R = len(matrices)
    if R < 1 or len(innovations) != R:
        raise ParameterError("window needs R >= 1 matrices and R innovation vectors")
    P_start = np.asarray(P_start, dtype=np.float64)
    P_end = np.asarray(P_end, dtype=np.float64)
    phi = np.eye(P_start.size)
    for A in matrices:
        phi = A @ phi
    bound = coefficient_of_ergodicity(phi) * np.ptp(P_start)
    bound += sum(float(np.ptp(d)) for d in innovations)
    return float(bound - np.ptp(P_end))


def log_belief_at_truth(beliefs, weights, x_star: float) -> float:
    """``sum_i w_i log p_i(x_star)``; ``-inf`` if some density vanished there."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(beliefs),) or np.any(w <= 0):
        raise ParameterError("weights must be positive, one per belief")
    d = np.array([density_at(p, x_star) for p in beliefs])
    if np.any(d <= 0):
        return -math.inf
    return float(np.dot(w, np.log(d)))


def smooth_extrema_bounds(a, gamma: float):
    """Log-sum-exp approximations ``(smooth_max, smooth_min)`` at scale ``gamma``."""
    if not gamma > 0:
        raise ParameterError("gamma must be positive")
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        raise ParameterError("empty vector")
    if a.size == 1:
        return float(a[0]), float(a[0])
    return float(logsumexp(gamma * a) / gamma), float(-logsumexp(-gamma * a) / gamma)


def rmse_metrics(traces, eff_iter: int, x_stars=None):
    """Average and worst-case RMSE of the median estimates over trials.

    ``RMSE_avg = sqrt(mean_trials mean_agents err^2)`` and
    ``RMSE_max = sqrt(mean_trials max_agents err^2)``.
    """
    traces = list(traces)
    if not traces:
        raise ParameterError("no traces given")
    if x_stars is None:
        x_stars = [t.x_star for t in traces]
    sq = np.array([(t.median[eff_iter] - xs) ** 2 for t, xs in zip(traces, x_stars)])
    return float(np.sqrt(sq.mean())), float(np.sqrt(sq.max(axis=1).mean()))


# ---------------------------------------------------------------------------
# trajectory-level series
# ---------------------------------------------------------------------------


@dataclass
class StepRecord:
    """Per-step observables needed to audit a trajectory.

    ``F`` holds each agent's CDF on the grid, ``x_hat`` its current median and
    ``m`` its CDF at that median.  ``event`` is the step that produced this
    state (``None`` for the initial state).
    """

    t: int
    F: np.ndarray
    x_hat: np.ndarray
    m: np.ndarray
    logp: np.ndarray
    event: object = None


class StepRecorder:
    """Observer for :func:`decbisect.engine.run_async` collecting :class:`StepRecord`."""

    def __init__(self, b_grid, x_star):
        self.b_grid = np.asarray(b_grid, dtype=np.float64)
        self.x_star = float(x_star)
        self.records = []

    def __call__(self, state, event):
        bs = state.beliefs
        x_hat = np.array([median(p) for p in bs])
        self.records.append(
            StepRecord(
                t=state.t,
                F=np.array([[cdf(p, b) for b in self.b_grid] for p in bs]),
                x_hat=x_hat,
                m=np.array([cdf(p, x) for p, x in zip(bs, x_hat)]),
                logp=np.array(
                    [
                        math.log(d) if d > 0 else -math.inf
                        for d in (density_at(p, self.x_star) for p in bs)
                    ]
                ),
                event=event,
            )
        )


def lemma5_window(records, start: int, R: int, k: int, model: CollaborationModel) -> float:
    """Spread-bound slack for the window of steps ``start .. start+R`` at grid column ``k``."""
    if start < 0 or start + R >= len(records) or R < 1:
        raise ParameterError("window runs past the recorded steps")
    M = model.M
    mats, ds = [], []
    for s in range(start, start + R):
        ev = records[s + 1].event
        F = records[s].F[:, k]
        mats.append(interaction_matrix(ev.i, ev.j, float(model.alpha[ev.i]), M))
        d = np.zeros(M)
        d[[ev.i, ev.j]] = innovation(F[ev.i], float(model.eps[ev.i]), float(model.alpha[ev.i]), ev.y)
        ds.append(d)
    return lemma5_gap(records[start].F[:, k], records[start + R].F[:, k], mats, ds)


@dataclass
class DiagnosticSeries:
    """Diagnostics per effective iteration (rows) and grid point (columns)."""

    b_grid: np.ndarray
    V: np.ndarray
    mu: np.ndarray  # (iter, agent, b)
    lam: np.ndarray
    mart: np.ndarray
    gap: np.ndarray  # NaN at eff_iter 0
    logp_weighted: np.ndarray
    logp_flagged: np.ndarray  # True where a density underflowed to zero
    saturated: np.ndarray = None  # True where some median missed 1/2 by > SATURATION_TOL

    @property
    def n_iters(self):
        return self.V.shape[0] - 1

    def rows(self, trial=0):
        """Rows of the diagnostic CSV in order."""
        drift = np.diff(self.logp_weighted, prepend=self.logp_weighted[0])
        for k in range(self.V.shape[0]):
            for c, b in enumerate(self.b_grid):
                yield (trial, k, b, self.V[k, c], self.lam[k, c], self.mart[k, c], self.gap[k, c], drift[k])


def diagnostic_series(records, model: CollaborationModel, v, b_grid) -> DiagnosticSeries:
    """Evaluate every diagnostic at each effective iteration of an async run.

    ``records`` must hold one :class:`StepRecord` per step starting with the
    initial state, i.e. ``eff_iters * M + 1`` entries.  The martingale column
    combines the exact conditional-expectation residual at the recorded state
    with the worst one-step transition residual since the previous row.
    """
    M = model.M
    b_grid = np.asarray(b_grid, dtype=np.float64)
    if (len(records) - 1) % M:
        raise ParameterError("records must cover whole effective iterations")
    if records[0].F.shape != (M, b_grid.size):
        raise ParameterError("records were taken on a different grid")
    n = (len(records) - 1) // M
    K = b_grid.size
    V = np.empty((n + 1, K))
    mu = np.empty((n + 1, M, K))
    lam = np.empty((n + 1, K))
    mart = np.zeros((n + 1, K))
    gap = np.full((n + 1, K), np.nan)
    logp = np.empty(n + 1)
    flagged = np.zeros(n + 1, dtype=bool)
    saturated = np.zeros(n + 1, dtype=bool)
    saturated[0] = np.abs(records[0].m - 0.5).max() > SATURATION_TOL

    for s in range(1, len(records)):
        prev, cur = records[s - 1], records[s]
        k = -(-s // M)  # row that closes this step's effective iteration
        if np.abs(cur.m - 0.5).max() > SATURATION_TOL or np.abs(prev.m - 0.5).max() > SATURATION_TOL:
            saturated[k] = True
        ev = cur.event
        for c, b in enumerate(b_grid):
            r = transition_residual(prev.F[:, c], cur.F[:, c], prev.m[ev.i], b <= prev.x_hat[ev.i], ev, model)
            if not r <= mart[k, c]:
                mart[k, c] = r

    for k in range(n + 1):
        rec = records[k * M]
        V[k] = np.ptp(rec.F, axis=0)
        mu[k] = _mu(rec.F)
        for c, b in enumerate(b_grid):
            lam[k, c] = lambda_from_masses(rec.F[:, c], model, v)
            res = martingale_residual_from_masses(rec.F[:, c], rec.m, b <= rec.x_hat, model, v)
            if not res <= mart[k, c]:
                mart[k, c] = res
            if k:
                gap[k, c] = lemma5_window(records, (k - 1) * M, M, c, model)
        if np.all(np.isfinite(rec.logp)):
            logp[k] = float(np.dot(v, rec.logp))
        else:
            logp[k] = np.nan
            flagged[k] = True
    return DiagnosticSeries(b_grid, V, mu, lam, mart, gap, logp, flagged, saturated)


def check_invariants(series: DiagnosticSeries):
    """Raise :class:`InvariantViolation` at the first failing row.

    Rows flagged in ``series.saturated`` are exempt from the martingale and
    window-bound checks, whose identities need an exact half-mass median; the
    lambda bound is checked everywhere.
    """
    sat = series.saturated if series.saturated is not None else np.zeros(series.V.shape[0], bool)
    for k in range(series.V.shape[0]):
        for c, b in enumerate(series.b_grid):
            if not sat[k] and not series.mart[k, c] < MARTINGALE_TOL:
                raise InvariantViolation("martingale", k, float(b), float(series.mart[k, c]))
            if not series.lam[k, c] >= 1.0 - LAMBDA_TOL:
                raise InvariantViolation("lambda", k, float(b), float(series.lam[k, c]))
            if k and not sat[k] and not series.gap[k, c] >= -LEMMA5_TOL:
                raise InvariantViolation("lemma5", k, float(b), float(series.gap[k, c]))
