"""Monte-Carlo orchestration over graphs, trials and algorithms, with CSV output.

Files written to ``out_dir``:

``traces.csv``
    ``trial, graph, algo, eff_iter, agent, median_est, mean_est, logp_at_xstar,
    cdf_b1..cdf_bK`` (when ``write_traces``).
``events_<algo>_g<graph>.csv``
    ``trial, t, i, j, x_hat, z, y`` (when ``write_events``).
``diagnostics_g<graph>.csv``
    ``trial, eff_iter, b, V_t, lambda_t, mart_residual, lemma5_gap, logp_drift``
    for the first ``diagnose_trials`` async trials of each graph.
``aggregate.csv``
    ``algo, eff_iter, rmse_avg, rmse_max`` for effective iterations 1..N.
``resolved_config.yaml``
    The configuration after defaults were applied.

Every (graph, trial, algo) triple gets its own random stream derived from the
master seed, so output is a pure function of the configuration.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import yaml

from .config import ExperimentConfig, InvalidValueError
from .diagnostics import StepRecorder, check_invariants, diagnostic_series
from .engine import Scenario, Trace, run
from .errors import DecBisectError, InvariantViolation
from .network import (
    CollaborationModel,
    expected_matrix,
    geometric_random_graph,
    left_perron_vector,
)

__all__ = [
    "ALGO_CODES",
    "RunError",
    "OutputError",
    "ExperimentResult",
    "DiagnoseReport",
    "build_model",
    "draw_x_star",
    "run_stream",
    "run_experiment",
    "diagnose_command",
]

ALGO_CODES = {"async": 0, "sync": 1, "none": 2, "central": 3}
_GRAPH, _TARGET, _RUN = 0, 1, 2

DIAG_HEADER = ["trial", "eff_iter", "b", "V_t", "lambda_t", "mart_residual", "lemma5_gap", "logp_drift"]
EVENT_HEADER = ["trial", "t", "i", "j", "x_hat", "z", "y"]


class RunError(DecBisectError):
    """A run failed; the message carries its (graph, trial, algo) coordinates."""

    def __init__(self, g, trial, algo, cause):
        self.graph, self.trial, self.algo = g, trial, algo
        super().__init__(f"graph {g}, trial {trial}, algo {algo}: {cause}")


class OutputError(DecBisectError, OSError):
    pass


def run_stream(seed, g, trial, algo):
    return np.random.default_rng([seed, _RUN, g, trial, ALGO_CODES[algo]])


def build_model(config: ExperimentConfig, g: int) -> CollaborationModel:
    """Collaboration model for graph realization ``g``."""
    M = config.M
    kind = config.graph.type
    if kind == "geometric":
        rng = np.random.default_rng([config.seed, _GRAPH, g])
        graph = geometric_random_graph(M, config.graph.radius, rng)
        return graph.collaboration_model(config.eps, config.alpha, config.q)
    if kind == "complete":
        P = np.zeros((M, M)) if M == 1 else (1.0 - np.eye(M)) / (M - 1)
    else:
        P = np.array(config.graph.P)
    return CollaborationModel(P=P, eps=config.eps, alpha=config.alpha, q=config.q)


def draw_x_star(config: ExperimentConfig, g: int, trial: int) -> float:
    """Target for ``(g, trial)``; shared by every algorithm in that trial."""
    if config.x_star != "uniform":
        return float(config.x_star)
    return float(np.random.default_rng([config.seed, _TARGET, g, trial]).random())


def _fmt(x):
    return repr(float(x))


def _open(path):
    try:
        return open(path, "w", newline="")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def _trace_rows(trace: Trace, g, trial):
    S, M, _ = trace.cdf.shape
    for k in range(S):
        for a in range(M):
            yield [trial, g, trace.algo, k, a, _fmt(trace.median[k, a]), _fmt(trace.mean[k, a]),
                   _fmt(trace.logp[k, a]), *map(_fmt, trace.cdf[k, a])]


@dataclass
class ExperimentResult:
    out_dir: str
    files: list
    eff_iter: np.ndarray
    rmse_avg: dict = field(default_factory=dict)  # algo -> [eff_iters + 1]
    rmse_max: dict = field(default_factory=dict)
    rmse_avg_per_graph: dict = field(default_factory=dict)  # algo -> [graphs, eff_iters + 1]
    rmse_max_per_graph: dict = field(default_factory=dict)


def _scenario(config, model, x_star):
    return Scenario(model, config.eff_iters, x_star, b_grid=config.b_grid)


def run_experiment(
    config: ExperimentConfig,
    *,
    out_dir: str | None = None,
    on_trace: Callable[[int, int, Trace], None] | None = None,
) -> ExperimentResult:
    """Run every (graph, trial, algo) combination and write the CSV files.

    ``on_trace(graph, trial, trace)`` is called for every finished run, which
    lets callers compute extra statistics without holding all traces.
    """
    out_dir = config.out_dir if out_dir is None else out_dir
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {out_dir}: {exc}") from exc

    S = config.eff_iters + 1
    sq_avg = {a: np.zeros((config.graphs, S)) for a in config.algos}
    sq_max = {a: np.zeros((config.graphs, S)) for a in config.algos}
    files = []

    def path(name):
        p = os.path.join(out_dir, name)
        files.append(p)
        return p

    with _open(path("resolved_config.yaml")) as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=True)

    trace_fh = _open(path("traces.csv")) if config.write_traces else None
    trace_w = None
    try:
        for g in range(config.graphs):
            model = build_model(config, g)
            v = left_perron_vector(expected_matrix(model)) if config.diagnose_trials and "async" in config.algos else None
            event_ws, event_fhs = {}, []
            if config.write_events:
                for a in config.algos:
                    fh = _open(path(f"events_{a}_g{g}.csv"))
                    event_fhs.append(fh)
                    event_ws[a] = csv.writer(fh, lineterminator="\n")
                    event_ws[a].writerow(EVENT_HEADER)
            diag_w = diag_fh = None
            if v is not None:
                diag_fh = _open(path(f"diagnostics_g{g}.csv"))
                diag_w = csv.writer(diag_fh, lineterminator="\n")
                diag_w.writerow(DIAG_HEADER)
            try:
                for trial in range(config.trials):
                    x_star = draw_x_star(config, g, trial)
                    scenario = _scenario(config, model, x_star)
                    for algo in config.algos:
                        rng = run_stream(config.seed, g, trial, algo)
                        audit = algo == "async" and diag_w is not None and trial < config.diagnose_trials
                        kw = {"record_events": config.write_events, "seed": (config.seed, g, trial, algo),
                              "fingerprint": config.fingerprint()}
                        recorder = StepRecorder(scenario.b_grid, x_star) if audit else None
                        if recorder is not None:
                            kw["observer"] = recorder
                        try:
                            trace = run(algo, scenario, rng, **kw)
                        except DecBisectError as exc:
                            raise RunError(g, trial, algo, exc) from exc
                        err2 = (trace.median - x_star) ** 2
                        sq_avg[algo][g] += err2.mean(axis=1)
                        sq_max[algo][g] += err2.max(axis=1)
                        if trace_fh is not None:
                            if trace_w is None:
                                trace_w = csv.writer(trace_fh, lineterminator="\n")
                                K = trace.cdf.shape[2]
                                trace_w.writerow(
                                    ["trial", "graph", "algo", "eff_iter", "agent", "median_est", "mean_est",
                                     "logp_at_xstar"] + [f"cdf_b{k + 1}" for k in range(K)]
                                )
                            trace_w.writerows(_trace_rows(trace, g, trial))
                        if config.write_events:
                            event_ws[algo].writerows(
                                [trial, e.t, e.i, e.j, _fmt(e.x_hat), e.z, e.y] for e in trace.events
                            )
                        if recorder is not None:
                            series = diagnostic_series(recorder.records, model, v, scenario.b_grid)
                            diag_w.writerows(_diag_row(r) for r in series.rows(trial))
                        if on_trace is not None:
                            on_trace(g, trial, trace)
            finally:
                for fh in event_fhs:
                    fh.close()
                if diag_fh is not None:
                    diag_fh.close()
    finally:
        if trace_fh is not None:
            trace_fh.close()

    result = ExperimentResult(out_dir=out_dir, files=files, eff_iter=np.arange(S))
    for a in config.algos:
        per_avg = np.sqrt(sq_avg[a] / config.trials)
        per_max = np.sqrt(sq_max[a] / config.trials)
        result.rmse_avg_per_graph[a] = per_avg
        result.rmse_max_per_graph[a] = per_max
        result.rmse_avg[a] = per_avg.mean(axis=0)
        result.rmse_max[a] = per_max.mean(axis=0)

    with _open(path("aggregate.csv")) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algo", "eff_iter", "rmse_avg", "rmse_max"])
        for a in config.algos:
            for k in range(1, S):
                w.writerow([a, k, _fmt(result.rmse_avg[a][k]), _fmt(result.rmse_max[a][k])])
    return result


def _diag_row(row):
    trial, k, b, *vals = row
    return [trial, k, _fmt(b), *map(_fmt, vals)]


@dataclass
class DiagnoseReport:
    files: list
    series: dict  # (graph, trial) -> DiagnosticSeries
    violation: InvariantViolation | None = None


def diagnose_command(config: ExperimentConfig, *, out_dir: str | None = None) -> DiagnoseReport:
    """Audit every async trial of the configuration.

    Writes ``diagnostics_g<graph>.csv`` for each graph.  The first hard
    invariant violation (if any) is stored in the report; the CSV files are
    complete either way.  Uses the same random streams as
    :func:`run_experiment`, so it replays the async runs of ``run``.
    """
    if "async" not in config.algos:
        raise InvalidValueError("algos", "diagnose needs the async algorithm")
    out_dir = config.out_dir if out_dir is None else out_dir
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {out_dir}: {exc}") from exc
    report = DiagnoseReport(files=[], series={})
    for g in range(config.graphs):
        model = build_model(config, g)
        v = left_perron_vector(expected_matrix(model))
        p = os.path.join(out_dir, f"diagnostics_g{g}.csv")
        report.files.append(p)
        with _open(p) as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(DIAG_HEADER)
            for trial in range(config.trials):
                x_star = draw_x_star(config, g, trial)
                scenario = _scenario(config, model, x_star)
                recorder = StepRecorder(scenario.b_grid, x_star)
                try:
                    run("async", scenario, run_stream(config.seed, g, trial, "async"),
                        observer=recorder, record_events=False)
                except DecBisectError as exc:
                    raise RunError(g, trial, "async", exc) from exc
                series = diagnostic_series(recorder.records, model, v, scenario.b_grid)
                report.series[(g, trial)] = series
                w.writerows(_diag_row(r) for r in series.rows(trial))
                if report.violation is None:
                    try:
                        check_invariants(series)
                    except InvariantViolation as exc:
                        exc.graph, exc.trial = g, trial
                        report.violation = exc
    return report
