"""Independent reference implementations used as test oracles."""
import numpy as np

from decbisect.belief import Belief


class GridOracle:
    """Density discretized on ``n`` equal bins, mass per bin assumed uniform.

    Bayes updates at a query point inside a bin split that bin's mass
    proportionally to the covered fraction, which is exact for a bin whose
    density is still flat.
    """

    def __init__(self, mass):
        self.mass = np.asarray(mass, dtype=np.float64)
        self.n = self.mass.size
        self.edges = np.linspace(0.0, 1.0, self.n + 1)

    @classmethod
    def from_belief(cls, b, n=10_000):
        edges = np.linspace(0.0, 1.0, n + 1)
        return cls(np.diff(exact_cdf(b, edges)))

    def cdf_at_edges(self):
        return np.concatenate([[0.0], np.cumsum(self.mass)])

    def update(self, x_hat, y, eps):
        f1 = 1.0 - eps if y == 1 else eps
        lo, hi = 2.0 * f1, 2.0 * (1.0 - f1)
        k = min(int(x_hat * self.n), self.n - 1)
        frac = x_hat * self.n - k
        m = self.mass.copy()
        m[:k] *= lo
        m[k] *= frac * lo + (1.0 - frac) * hi
        m[k + 1 :] *= hi
        return GridOracle(m / m.sum())

    def mix(self, alpha, other):
        return GridOracle(alpha * self.mass + (1.0 - alpha) * other.mass)


def exact_cdf(b, xs):
    """CDF of a piecewise-constant density by linear interpolation of cumulative masses."""
    cum = np.concatenate([[0.0], np.cumsum(b.values * np.diff(b.breakpoints))])
    return np.interp(xs, b.breakpoints, cum / cum[-1])


def random_belief(rng, max_segments=8, n_bins=None):
    """Random piecewise-constant belief; breakpoints snap to ``n_bins`` edges if given."""
    n = int(rng.integers(1, max_segments + 1))
    cuts = rng.random(n - 1) if n_bins is None else rng.integers(1, n_bins, size=n - 1) / n_bins
    bp = np.unique(np.concatenate([[0.0, 1.0], cuts]))
    vals = rng.random(bp.size - 1) + 0.05
    return Belief(bp, vals)
