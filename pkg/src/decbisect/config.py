"""Experiment configuration: a flat YAML mapping.

Grammar (one key per line, values are scalars or lists; only ``graph`` nests
one level)::

    M: 20                      # required
    eps: 0.45                  # required; scalar or list of M values in (0, 0.5]
    eff_iters: 200             # required; effective iterations (M queries each)
    seed: 1                    # required; master seed
    alpha: 0.5                 # scalar or list, each in (0, 1]
    q: uniform                 # or a list of M probabilities
    graph:                     # one of
      type: geometric          #   geometric (radius), complete, explicit (P)
      radius: 0.35
    algos: [async, sync, none, central]
    trials: 200                # Monte-Carlo trials per graph
    graphs: 10                 # random graph realizations
    x_star: uniform            # or a fixed position in [0, 1]
    b_grid: null               # list of positions; null = deciles + x_star -/+ 0.05
    out_dir: results
    write_traces: true
    write_events: false
    diagnose_trials: 1         # async trials per graph audited by `run`
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .engine import ALGORITHMS
from .errors import DecBisectError
from .network import STOCHASTIC_TOL

__all__ = [
    "ConfigError",
    "UnknownKeyError",
    "MissingFieldError",
    "EpsRangeError",
    "NonStochasticError",
    "InvalidValueError",
    "GraphSpec",
    "ExperimentConfig",
    "parse_config",
    "load_config",
]


class ConfigError(DecBisectError, ValueError):
    """Base class for configuration problems; ``field`` names the culprit."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class UnknownKeyError(ConfigError):
    pass


class MissingFieldError(ConfigError):
    pass


class EpsRangeError(ConfigError):
    pass


class NonStochasticError(ConfigError):
    pass


class InvalidValueError(ConfigError):
    pass


REQUIRED = ("M", "eps", "eff_iters", "seed")
GRAPH_TYPES = ("geometric", "complete", "explicit")


@dataclass(frozen=True)
class GraphSpec:
    type: str = "geometric"
    radius: float = 0.35
    P: tuple | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    M: int
    eps: tuple
    eff_iters: int
    seed: int
    alpha: tuple = ()
    q: tuple | None = None
    graph: GraphSpec = field(default_factory=GraphSpec)
    algos: tuple = ("async", "sync", "none", "central")
    trials: int = 200
    graphs: int = 10
    x_star: float | str = "uniform"
    b_grid: tuple | None = None
    out_dir: str = "results"
    write_traces: bool = True
    write_events: bool = False
    diagnose_trials: int = 1

    @property
    def reliable(self):
        """Agents whose channel carries information (``eps < 1/2``)."""
        return tuple(i for i, e in enumerate(self.eps) if e < 0.5)

    def to_dict(self):
        d = {
            "M": self.M,
            "eps": list(self.eps),
            "eff_iters": self.eff_iters,
            "seed": self.seed,
            "alpha": list(self.alpha),
            "q": "uniform" if self.q is None else list(self.q),
            "graph": {"type": self.graph.type},
            "algos": list(self.algos),
            "trials": self.trials,
            "graphs": self.graphs,
            "x_star": self.x_star,
            "b_grid": None if self.b_grid is None else list(self.b_grid),
            "out_dir": self.out_dir,
            "write_traces": self.write_traces,
            "write_events": self.write_events,
            "diagnose_trials": self.diagnose_trials,
        }
        if self.graph.type == "geometric":
            d["graph"]["radius"] = self.graph.radius
        elif self.graph.type == "explicit":
            d["graph"]["P"] = [list(r) for r in self.graph.P]
        return d

    def fingerprint(self):
        import hashlib
        import json

        payload = {k: v for k, v in self.to_dict().items() if k != "out_dir"}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def _int(raw, name, lo):
    if isinstance(raw, bool) or not isinstance(raw, int) or raw < lo:
        raise InvalidValueError(name, f"expected an integer >= {lo}, got {raw!r}")
    return raw


def _per_agent(raw, name, M):
    vals = raw if isinstance(raw, list) else [raw]
    try:
        vals = [float(v) for v in vals]
    except (TypeError, ValueError):
        raise InvalidValueError(name, f"expected numbers, got {raw!r}") from None
    if len(vals) == 1:
        vals = vals * M
    if len(vals) != M:
        raise InvalidValueError(name, f"expected 1 or {M} values, got {len(vals)}")
    return tuple(vals)


def _graph(raw, M):
    if raw is None:
        return GraphSpec()
    if not isinstance(raw, dict):
        raise InvalidValueError("graph", "expected a mapping")
    unknown = set(raw) - {"type", "radius", "P"}
    if unknown:
        raise UnknownKeyError("graph." + sorted(unknown)[0], "unknown key")
    kind = raw.get("type", "geometric")
    if kind not in GRAPH_TYPES:
        raise InvalidValueError("graph.type", f"must be one of {GRAPH_TYPES}")
    if kind == "geometric":
        r = raw.get("radius", 0.35)
        if not isinstance(r, (int, float)) or r <= 0:
            raise InvalidValueError("graph.radius", "must be a positive number")
        return GraphSpec("geometric", float(r))
    if kind == "complete":
        return GraphSpec("complete")
    if "P" not in raw:
        raise MissingFieldError("graph.P", "explicit graphs need a P matrix")
    P = np.asarray(raw["P"], dtype=np.float64)
    if P.shape != (M, M):
        raise NonStochasticError("graph.P", f"expected an {M}x{M} matrix")
    if np.any(P < 0) or np.any(np.diag(P) != 0):
        raise NonStochasticError("graph.P", "entries must be nonnegative with zero diagonal")
    if M > 1 and np.any(np.abs(P.sum(axis=1) - 1.0) > STOCHASTIC_TOL * M):
        raise NonStochasticError("graph.P", "rows must sum to 1")
    return GraphSpec("explicit", P=tuple(tuple(float(x) for x in row) for row in P))


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a configuration document, filling in defaults."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise InvalidValueError("<document>", f"not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise InvalidValueError("<document>", "expected a key/value mapping")
    known = set(ExperimentConfig.__dataclass_fields__)
    for key in raw:
        if key not in known:
            raise UnknownKeyError(str(key), "unknown key")
    for key in REQUIRED:
        if key not in raw:
            raise MissingFieldError(key, "required field is missing")

    M = _int(raw["M"], "M", 1)
    eps = _per_agent(raw["eps"], "eps", M)
    for i, e in enumerate(eps):
        if not 0.0 < e <= 0.5:
            raise EpsRangeError(
                "eps",
                f"agent {i} has eps={e}; binary symmetric channel crossover "
                "probabilities must lie in (0, 0.5]",
            )
    if not any(e < 0.5 for e in eps):
        raise EpsRangeError("eps", "at least one agent needs eps < 0.5 to carry information")
    alpha = _per_agent(raw.get("alpha", 0.5), "alpha", M)
    if any(not 0.0 < a <= 1.0 for a in alpha):
        raise InvalidValueError("alpha", "mixing weights must lie in (0, 1]")

    q = raw.get("q", "uniform")
    if q == "uniform":
        q = None
    else:
        q = _per_agent(q, "q", M)
        if any(x < 0 for x in q) or abs(sum(q) - 1.0) > 1e-9:
            raise NonStochasticError("q", "selection probabilities must be >= 0 and sum to 1")

    graph = _graph(raw.get("graph"), M)
    if M == 1 and graph.type == "geometric":
        graph = GraphSpec("complete")

    algos = raw.get("algos", list(ExperimentConfig.algos))
    if isinstance(algos, str):
        algos = [algos]
    if not algos or any(a not in ALGORITHMS for a in algos):
        raise InvalidValueError("algos", f"choose from {sorted(ALGORITHMS)}")
    if M == 1 and "async" in algos:
        raise InvalidValueError("algos", "async needs at least two agents")

    x_star = raw.get("x_star", "uniform")
    if x_star != "uniform":
        if not isinstance(x_star, (int, float)) or not 0.0 <= x_star <= 1.0:
            raise InvalidValueError("x_star", "must be 'uniform' or a number in [0, 1]")
        x_star = float(x_star)

    b_grid = raw.get("b_grid")
    if b_grid is not None:
        if not isinstance(b_grid, list) or not b_grid:
            raise InvalidValueError("b_grid", "expected a nonempty list")
        b_grid = tuple(float(b) for b in b_grid)
        if any(not 0.0 <= b <= 1.0 for b in b_grid):
            raise InvalidValueError("b_grid", "positions must lie in [0, 1]")

    for flag in ("write_traces", "write_events"):
        if not isinstance(raw.get(flag, True), bool):
            raise InvalidValueError(flag, "expected true or false")

    return ExperimentConfig(
        M=M,
        eps=eps,
        eff_iters=_int(raw["eff_iters"], "eff_iters", 1),
        seed=_int(raw["seed"], "seed", 0),
        alpha=alpha,
        q=q,
        graph=graph,
        algos=tuple(algos),
        trials=_int(raw.get("trials", 200), "trials", 1),
        graphs=_int(raw.get("graphs", 10), "graphs", 1),
        x_star=x_star,
        b_grid=b_grid,
        out_dir=str(raw.get("out_dir", "results")),
        write_traces=raw.get("write_traces", True),
        write_events=raw.get("write_events", False),
        diagnose_trials=_int(raw.get("diagnose_trials", 1), "diagnose_trials", 0),
    )


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())
