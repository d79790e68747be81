"""Runners for the asynchronous algorithm and its three comparators.

Every runner spends exactly ``M`` channel queries per effective iteration and
records one snapshot per effective iteration (plus the initial state), so
traces from different algorithms line up index by index.

Random draws are consumed in a fixed order, which is part of the determinism
contract:

* async: per step, one draw for the querying agent, one for the collaborator,
  one for the channel;
* sync / no-sharing / centralized: per effective iteration, one channel draw
  per agent in index order.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .belief import (
    Belief,
    SharedGridBeliefs,
    bayes_bisection_update,
    median,
    mix,
    summarize,
    uniform_prior,
)
from .channel import respond
from .errors import ParameterError
from .network import CollaborationModel, closed_neighborhood_weights

__all__ = [
    "ALGORITHMS",
    "InteractionEvent",
    "Scenario",
    "SimulationState",
    "Trace",
    "async_step",
    "default_b_grid",
    "run",
    "run_async",
    "run_centralized",
    "run_no_sharing",
    "run_synchronous",
]


def default_b_grid(x_star: float) -> np.ndarray:
    """Deciles, then the points 0.05 below and above the target (clamped).

    Column order is fixed so that grid columns line up across trials.
    """
    pts = [k / 10 for k in range(1, 10)]
    pts += [min(max(x_star - 0.05, 0.0), 1.0), min(max(x_star + 0.05, 0.0), 1.0)]
    return np.array(pts)


class InteractionEvent(NamedTuple):
    """One query.  ``j`` is -1 for runners without pairwise averaging."""

    t: int
    i: int
    j: int
    x_hat: float
    z: int
    y: int


@dataclass(frozen=True)
class SimulationState:
    beliefs: tuple
    t: int
    x_star: float


@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything a single run needs besides its random stream."""

    model: CollaborationModel
    eff_iters: int
    x_star: float
    b_grid: np.ndarray | None = None
    priors: tuple | None = None
    W: np.ndarray | None = None  # synchronous averaging weights

    def __post_init__(self):
        if self.eff_iters < 0:
            raise ParameterError("eff_iters must be >= 0")
        if not 0.0 <= self.x_star <= 1.0:
            raise ParameterError("x_star must lie in [0, 1]")
        grid = default_b_grid(self.x_star) if self.b_grid is None else np.asarray(self.b_grid, float)
        object.__setattr__(self, "b_grid", grid)
        if self.priors is not None:
            if len(self.priors) != self.model.M:
                raise ParameterError("need one prior per agent")
            object.__setattr__(self, "priors", tuple(self.priors))
        W = closed_neighborhood_weights(self.model.P) if self.W is None else np.asarray(self.W, float)
        object.__setattr__(self, "W", W)

    def initial_beliefs(self):
        if self.priors is None:
            u = uniform_prior()
            return tuple(u for _ in range(self.model.M))
        return self.priors


@dataclass
class Trace:
    """Snapshots of one run, indexed ``[snapshot, agent]``.

    ``cdf`` has a trailing axis over ``b_grid``.  Snapshot ``k`` is taken after
    ``k`` effective iterations.
    """

    algo: str
    x_star: float
    b_grid: np.ndarray
    median: np.ndarray
    mean: np.ndarray
    logp: np.ndarray
    cdf: np.ndarray
    events: list = field(default_factory=list)
    seed: object = None
    fingerprint: str = ""

    @property
    def eff_iters(self):
        return self.median.shape[0] - 1

    def digest(self):
        h = hashlib.sha256()
        for a in (self.median, self.mean, self.logp, self.cdf):
            h.update(np.ascontiguousarray(a).tobytes())
        h.update(repr(self.events).encode())
        return h.hexdigest()


class _Recorder:
    def __init__(self, scenario):
        S = scenario.eff_iters + 1
        M = scenario.model.M
        K = scenario.b_grid.size
        self.grid = scenario.b_grid
        self.x_star = scenario.x_star
        self.median = np.empty((S, M))
        self.mean = np.empty((S, M))
        self.logp = np.empty((S, M))
        self.cdf = np.empty((S, M, K))
        self.k = 0

    def record(self, beliefs):
        k = self.k
        cache = {}
        for a, b in enumerate(beliefs):
            key = id(b)
            if key not in cache:
                cache[key] = summarize(b, self.grid, self.x_star)
            med, mu, lp, c = cache[key]
            self.median[k, a] = med
            self.mean[k, a] = mu
            self.logp[k, a] = lp
            self.cdf[k, a] = c
        self.k += 1

    def trace(self, algo, scenario, events, seed, fingerprint):
        return Trace(
            algo=algo,
            x_star=scenario.x_star,
            b_grid=scenario.b_grid,
            median=self.median,
            mean=self.mean,
            logp=self.logp,
            cdf=self.cdf,
            events=events,
            seed=seed,
            fingerprint=fingerprint,
        )


def _pick(cum, u):
    k = int(np.searchsorted(cum, u, side="right"))
    return min(k, cum.shape[0] - 1)


def async_step(state: SimulationState, model: CollaborationModel, rng: np.random.Generator):
    """One step of the asynchronous algorithm.

    Agent ``i ~ q`` bisects its belief at the median, gets a noisy answer,
    Bayes-updates, mixes the result with the belief of ``j ~ P[i]`` and both
    ``i`` and ``j`` adopt the mixture.
    """
    if model.M < 2:
        raise ParameterError("asynchronous updating needs at least two agents")
    i = _pick(model.cum_q, rng.random())
    j = _pick(model.cum_P[i], rng.random())
    bi = state.beliefs[i]
    x_hat = median(bi)
    z = 1 if state.x_star <= x_hat else 0
    eps = float(model.eps[i])
    y = respond(z, eps, rng)
    new = mix(float(model.alpha[i]), bayes_bisection_update(bi, y, eps, x_hat), state.beliefs[j])
    beliefs = list(state.beliefs)
    beliefs[i] = new
    beliefs[j] = new
    event = InteractionEvent(state.t, i, j, x_hat, z, y)
    return SimulationState(tuple(beliefs), state.t + 1, state.x_star), event


Observer = Callable[[SimulationState, "InteractionEvent | None"], None]


def run_async(
    scenario: Scenario,
    rng: np.random.Generator,
    observer: Observer | None = None,
    *,
    record_events: bool = True,
    seed=None,
    fingerprint: str = "",
) -> Trace:
    """Asynchronous pairwise algorithm for ``eff_iters * M`` steps.

    ``observer(state, event)`` is called on the initial state (with
    ``event=None``) and after every step.
    """
    model = scenario.model
    M = model.M
    state = SimulationState(scenario.initial_beliefs(), 0, scenario.x_star)
    rec = _Recorder(scenario)
    rec.record(state.beliefs)
    events = []
    if observer is not None:
        observer(state, None)
    for _ in range(scenario.eff_iters):
        for _ in range(M):
            state, ev = async_step(state, model, rng)
            if record_events:
                events.append(ev)
            if observer is not None:
                observer(state, ev)
        rec.record(state.beliefs)
    return rec.trace("async", scenario, events, seed, fingerprint)


def run_no_sharing(
    scenario: Scenario, rng: np.random.Generator, *, record_events=True, seed=None, fingerprint=""
) -> Trace:
    """Each agent runs probabilistic bisection on its own; no averaging."""
    model = scenario.model
    beliefs = list(scenario.initial_beliefs())
    rec = _Recorder(scenario)
    rec.record(beliefs)
    events = []
    t = 0
    for _ in range(scenario.eff_iters):
        for i in range(model.M):
            b = beliefs[i]
            x_hat = median(b)
            z = 1 if scenario.x_star <= x_hat else 0
            eps = float(model.eps[i])
            y = respond(z, eps, rng)
            beliefs[i] = bayes_bisection_update(b, y, eps, x_hat)
            if record_events:
                events.append(InteractionEvent(t, i, -1, x_hat, z, y))
            t += 1
        rec.record(beliefs)
    return rec.trace("none", scenario, events, seed, fingerprint)


def run_centralized(
    scenario: Scenario, rng: np.random.Generator, *, record_events=True, seed=None, fingerprint=""
) -> Trace:
    """One shared posterior bisected by every agent in turn.

    The shared prior is the first agent's prior.
    """
    model = scenario.model
    b = scenario.initial_beliefs()[0]
    rec = _Recorder(scenario)
    rec.record([b] * model.M)
    events = []
    t = 0
    for _ in range(scenario.eff_iters):
        for i in range(model.M):
            x_hat = median(b)
            z = 1 if scenario.x_star <= x_hat else 0
            eps = float(model.eps[i])
            y = respond(z, eps, rng)
            b = bayes_bisection_update(b, y, eps, x_hat)
            if record_events:
                events.append(InteractionEvent(t, i, -1, x_hat, z, y))
            t += 1
        rec.record([b] * model.M)
    return rec.trace("central", scenario, events, seed, fingerprint)


def run_synchronous(
    scenario: Scenario, rng: np.random.Generator, *, record_events=True, seed=None, fingerprint=""
) -> Trace:
    """Fixed-topology two-stage algorithm.

    Every agent bisects its own belief and Bayes-updates, then all beliefs are
    replaced by ``W @ beliefs`` with ``W = scenario.W``.
    """
    model = scenario.model
    M = model.M
    bank = SharedGridBeliefs(scenario.initial_beliefs())
    rec = _Recorder(scenario)
    rec.record(bank.to_beliefs())
    events = []
    W = scenario.W
    eps = model.eps
    t = 0
    for _ in range(scenario.eff_iters):
        x_hat = bank.medians()
        z = (scenario.x_star <= x_hat).astype(int)
        y = np.empty(M, dtype=int)
        for i in range(M):
            y[i] = respond(int(z[i]), float(eps[i]), rng)
            if record_events:
                events.append(InteractionEvent(t, i, -1, float(x_hat[i]), int(z[i]), int(y[i])))
            t += 1
        f1 = np.where(y == 1, 1.0 - eps, eps)
        bank.bisect(x_hat, f1)
        bank.average(W)
        rec.record(bank.to_beliefs())
    return rec.trace("sync", scenario, events, seed, fingerprint)


ALGORITHMS = {
    "async": run_async,
    "sync": run_synchronous,
    "none": run_no_sharing,
    "central": run_centralized,
}


def run(algo: str, scenario: Scenario, rng: np.random.Generator, **kwargs) -> Trace:
    try:
        runner = ALGORITHMS[algo]
    except KeyError:
        raise ParameterError(f"unknown algorithm {algo!r}; choose from {sorted(ALGORITHMS)}") from None
    return runner(scenario, rng, **kwargs)
