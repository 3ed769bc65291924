"""PROSAC sampling schedule and minimal-sample degeneracy rejection."""

import numpy as np

from ..exceptions import TooFewPoints, ValidationError

SAMPLE_SIZE = 3  # P3P minimal sample


class ProsacSampler:
    """Progressive sample consensus over confidence-ranked correspondences.

    Samples are drawn from a growing prefix of the ranking: early iterations
    use only the most confident correspondences, and the pool grows with the
    standard PROSAC growth function so that by the iteration budget the
    sampling has blended into plain uniform RANSAC over all n points.
    Indices returned are positions in the *ranked* order.
    """

    def __init__(self, n, budget=400):
        if n < SAMPLE_SIZE:
            raise TooFewPoints("PROSAC needs at least %d points" % SAMPLE_SIZE)
        if budget < 1:
            raise ValidationError("budget must be >= 1")
        self.n = int(n)
        self.budget = int(budget)
        m = SAMPLE_SIZE
        # T_n = budget * C(n, m) / C(N, m), by the recurrence
        # T_{n+1} = T_n * (n+1) / (n+1-m); T'_m = 1,
        # T'_{n+1} = T'_n + ceil(T_{n+1} - T_n)
        sizes = np.arange(m, self.n + 1)
        T = np.empty(sizes.shape[0], dtype=np.float64)
        T[0] = self.budget
        for i in range(m, self.n):
            T[i - m + 1] = T[i - m] * (i + 1) / (i + 1 - m)
        T *= self.budget / T[-1]
        Tp = np.empty_like(T)
        Tp[0] = 1.0
        for i in range(1, T.shape[0]):
            Tp[i] = Tp[i - 1] + np.ceil(T[i] - T[i - 1])
        self._pool_threshold = Tp  # T'_{m+i} at index i

    def pool_size(self, iteration):
        """Prefix length used at a 0-based iteration."""
        t = iteration + 1.0
        if t > self._pool_threshold[-1]:
            return self.n
        i = int(np.searchsorted(self._pool_threshold, t, side="left"))
        return SAMPLE_SIZE + i

    def sample(self, iteration, rng):
        """Three distinct ranked indices for this iteration."""
        t = iteration + 1.0
        if t > self._pool_threshold[-1]:
            # schedule exhausted: plain uniform sample over everything
            return np.sort(rng.choice(self.n, SAMPLE_SIZE, replace=False))
        g = self.pool_size(iteration)
        if g == SAMPLE_SIZE:
            return np.arange(SAMPLE_SIZE)
        # the g-th ranked point plus a uniform pair from the g-1 above it
        rest = rng.choice(g - 1, SAMPLE_SIZE - 1, replace=False)
        return np.sort(np.append(rest, g - 1))


def prosac_sample(confidences, iteration, rng, budget=400):
    """One PROSAC draw over correspondences ranked by descending confidence.

    Ranking is by confidence only (scale-invariant); ties keep input order.
    Returns indices into the original correspondence order.

    :param rng: numpy Generator, or an int seed.
    """
    conf = np.asarray(confidences, dtype=np.float64).reshape(-1)
    if conf.shape[0] < SAMPLE_SIZE:
        raise TooFewPoints("PROSAC needs at least %d correspondences" % SAMPLE_SIZE)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    order = np.argsort(-conf, kind="stable")
    ranked = ProsacSampler(conf.shape[0], budget).sample(iteration, rng)
    return order[ranked]


def is_degenerate_sample(pixels, points, min_area=100.0):
    """Reject a minimal sample with a tiny image triangle or collinear 3D points.

    :param pixels: (3, 2) pixel coordinates.
    :param points: (3, 3) model points.
    :param min_area: smallest acceptable 2D triangle area (px^2).
    :returns: True when the sample must be rejected.
    """
    pixels = np.asarray(pixels, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    d1 = pixels[1] - pixels[0]
    d2 = pixels[2] - pixels[0]
    area = 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])
    if area < min_area:
        return True
    e1 = points[1] - points[0]
    e2 = points[2] - points[0]
    cross = np.linalg.norm(np.cross(e1, e2))
    scale = np.linalg.norm(e1) * np.linalg.norm(e2)
    return bool(cross < 1e-9 * max(scale, 1e-300))
