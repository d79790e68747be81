"""Collaboration topology, interaction matrices and spectral utilities."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import pdist, squareform

from .channel import check_eps
from .errors import ContractViolation, GenerationError, NumericalError, ParameterError, PreconditionError

__all__ = [
    "CollaborationModel",
    "GeometricGraph",
    "interaction_matrix",
    "expected_matrix",
    "coefficient_of_ergodicity",
    "is_irreducible",
    "left_perron_vector",
    "geometric_random_graph",
    "uniform_neighbor_matrix",
    "closed_neighborhood_weights",
    "window_union_strongly_connected",
    "check_stochastic",
]

STOCHASTIC_TOL = 1e-12


def _broadcast(x, M, name):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(M, float(arr))
    if arr.shape != (M,):
        raise ParameterError(f"{name} must be a scalar or have length {M}")
    return arr


@dataclass(frozen=True, eq=False)
class CollaborationModel:
    """Who queries, with whom they average, and how noisy they are.

    Agents are 0-indexed.  ``q[i]`` is the probability that agent ``i`` wakes
    up, ``P[i, j]`` the probability that it then averages with ``j``,
    ``alpha[i]`` the weight it keeps on its own updated belief and ``eps[i]``
    its channel crossover probability.  ``eps`` and ``alpha`` accept scalars.
    ``require_informative=False`` admits an all-uninformative network, which is
    useful as a null scenario but violates the convergence assumptions.
    """

    P: np.ndarray
    eps: np.ndarray
    alpha: np.ndarray = 0.5
    q: np.ndarray | None = None
    require_informative: bool = True
    M: int = field(init=False)

    def __post_init__(self):
        P = np.array(self.P, dtype=np.float64)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
            raise ParameterError("P must be a square matrix")
        M = P.shape[0]
        q = np.full(M, 1.0 / M) if self.q is None else _broadcast(self.q, M, "q")
        eps = _broadcast(self.eps, M, "eps")
        alpha = _broadcast(self.alpha, M, "alpha")
        if np.any(q < 0) or abs(q.sum() - 1.0) > STOCHASTIC_TOL * M:
            raise ParameterError("q must be a probability vector")
        if np.any(P < 0) or np.any(np.diag(P) != 0):
            raise ParameterError("P must be nonnegative with zero diagonal")
        if M > 1 and np.any(np.abs(P.sum(axis=1) - 1.0) > STOCHASTIC_TOL * M):
            raise ParameterError("every row of P must sum to 1")
        for e in eps:
            check_eps(e)
        if self.require_informative and not np.any(eps < 0.5):
            raise ParameterError("at least one agent needs eps < 0.5")
        if np.any(alpha <= 0) or np.any(alpha > 1):
            raise ParameterError("alpha entries must lie in (0, 1]")
        for name, val in (("P", P), ("q", q), ("eps", eps), ("alpha", alpha)):
            val.flags.writeable = False
            object.__setattr__(self, name, val)
        object.__setattr__(self, "M", M)

    @cached_property
    def cum_q(self):
        c = np.cumsum(self.q)
        return c / c[-1]

    @cached_property
    def cum_P(self):
        c = np.cumsum(self.P, axis=1)
        last = c[:, -1:]
        return np.divide(c, last, out=np.zeros_like(c), where=last > 0)

    @property
    def reliable(self):
        """Indices of agents with ``eps < 1/2``."""
        return np.flatnonzero(self.eps < 0.5)


def check_stochastic(A, tol=STOCHASTIC_TOL):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ContractViolation("expected a square matrix")
    if np.any(A < 0) or np.any(np.abs(A.sum(axis=1) - 1.0) > tol * max(1, A.shape[0])):
        raise ContractViolation("matrix is not row-stochastic")
    return A


def interaction_matrix(i: int, j: int, alpha_i: float, M: int) -> np.ndarray:
    """Averaging matrix of one step in which ``i`` updates and then mixes with ``j``.

    Rows ``i`` and ``j`` both become ``alpha_i e_i + (1 - alpha_i) e_j``; every
    other row is the identity.
    """
    if i == j:
        raise ParameterError("an agent cannot collaborate with itself")
    if not (0 <= i < M and 0 <= j < M):
        raise ParameterError(f"agents ({i}, {j}) out of range for M={M}")
    if not 0.0 < alpha_i <= 1.0:
        raise ParameterError("alpha_i must lie in (0, 1]")
    A = np.eye(M)
    row = np.zeros(M)
    row[i] = alpha_i
    row[j] += 1.0 - alpha_i
    A[i] = row
    A[j] = row
    return A


def expected_matrix(model: CollaborationModel) -> np.ndarray:
    """``sum_ij q_i P_ij A_{i->j}``."""
    M = model.M
    A = np.eye(M)
    W = model.q[:, None] * model.P
    for i, j in zip(*np.nonzero(W)):
        w = W[i, j]
        a = model.alpha[i]
        for r in (i, j):
            A[r, r] -= w
            A[r, i] += w * a
            A[r, j] += w * (1.0 - a)
    return A


def coefficient_of_ergodicity(A) -> float:
    """Half the largest L1 distance between two rows."""
    A = check_stochastic(A)
    if A.shape[0] == 1:
        return 0.0
    return 0.5 * float(pdist(A, "cityblock").max())


def _strongly_connected(adj):
    n = adj.shape[0]
    if n <= 1:
        return True
    k, _ = connected_components(csr_matrix(adj), directed=True, connection="strong")
    return k == 1


def is_irreducible(A) -> bool:
    A = check_stochastic(A)
    return _strongly_connected(A > 0)


def left_perron_vector(A, tol=1e-12, max_sweeps=100_000) -> np.ndarray:
    """Positive ``v`` with ``v A = v`` and ``sum(v) = 1``.

    Fixed-point iteration of the lazy chain ``(A + I) / 2``, which shares the
    eigenvector but is aperiodic, so the iteration also settles for periodic
    ``A`` (e.g. a cyclic permutation).
    """
    A = check_stochastic(A)
    if not is_irreducible(A):
        raise PreconditionError("left Perron vector needs an irreducible matrix")
    M = A.shape[0]
    v = np.full(M, 1.0 / M)
    lazy = 0.5 * (A + np.eye(M))
    for _ in range(max_sweeps):
        if np.abs(v @ A - v).sum() < tol:
            return v
        v = v @ lazy
        v /= v.sum()
    raise NumericalError(f"Perron iteration did not converge in {max_sweeps} sweeps")


def uniform_neighbor_matrix(adjacency) -> np.ndarray:
    """Row ``i`` uniform over the neighbours of ``i``."""
    adj = np.asarray(adjacency, dtype=bool)
    deg = adj.sum(axis=1)
    if adj.shape[0] > 1 and np.any(deg == 0):
        raise ParameterError("isolated node: no collaborator available")
    P = np.zeros(adj.shape)
    np.divide(adj, deg[:, None], out=P, where=deg[:, None] > 0)
    return P


def closed_neighborhood_weights(P) -> np.ndarray:
    """Uniform weights over ``{i} U {j : P[i, j] > 0}``."""
    adj = np.asarray(P) > 0
    adj = adj | np.eye(adj.shape[0], dtype=bool)
    return adj / adj.sum(axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class GeometricGraph:
    points: np.ndarray
    radius: float
    adjacency: np.ndarray

    @property
    def M(self):
        return self.points.shape[0]

    def edges(self):
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return list(zip(i.tolist(), j.tolist()))

    def collaboration_model(self, eps, alpha=0.5, q=None) -> CollaborationModel:
        return CollaborationModel(P=uniform_neighbor_matrix(self.adjacency), eps=eps, alpha=alpha, q=q)

    def export_lines(self):
        """Coordinate lines ``i x y`` followed by edge lines ``i j``."""
        lines = [f"{i} {x:.17g} {y:.17g}" for i, (x, y) in enumerate(self.points)]
        lines += [f"{i} {j}" for i, j in self.edges()]
        return lines


def geometric_random_graph(
    M: int, radius: float, rng: np.random.Generator, max_attempts: int = 10_000
) -> GeometricGraph:
    """Connected random geometric graph on the unit square.

    Points are redrawn until the graph is connected.
    """
    if M < 2:
        raise ParameterError("a geometric graph needs M >= 2")
    if not radius > 0:
        raise ParameterError("radius must be positive")
    for _ in range(max_attempts):
        pts = rng.random((M, 2))
        adj = squareform(pdist(pts)) <= radius
        np.fill_diagonal(adj, False)
        if _strongly_connected(adj):
            return GeometricGraph(points=pts, radius=float(radius), adjacency=adj)
    raise GenerationError(
        f"no connected graph with M={M}, radius={radius} after {max_attempts} attempts"
    )


def window_union_strongly_connected(schedule, R: int, M: int | None = None) -> bool:
    """Whether every window of ``R`` consecutive edge sets has a strongly connected union.

    ``schedule`` is a sequence of iterables of directed pairs ``(u, v)``.  The
    node set is ``range(M)`` if given, otherwise every node named anywhere in
    the schedule.
    """
    schedule = [list(es) for es in schedule]
    if not schedule:
        raise ParameterError("schedule is empty")
    if R < 1 or R > len(schedule):
        raise ParameterError(f"window R={R} must lie in [1, {len(schedule)}]")
    if M is None:
        nodes = sorted({v for es in schedule for e in es for v in e})
    else:
        nodes = list(range(M))
    index = {v: k for k, v in enumerate(nodes)}
    n = len(nodes)
    mats = []
    for es in schedule:
        a = np.zeros((n, n), dtype=np.int64)
        for u, v in es:
            a[index[u], index[v]] = 1
        mats.append(a)
    window = sum(mats[:R])
    for t in range(len(schedule) - R + 1):
        if t:
            window = window - mats[t - 1] + mats[t + R - 1]
        if not _strongly_connected(window > 0):
            return False
    return True
