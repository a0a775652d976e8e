"""Independent oracles used by the test suite.

These deliberately avoid the production code paths: BFS flood fill instead
of union-find labeling, the momentum-space integral instead of the Bessel
representation, direct neighbor scans instead of vectorized set ops.
"""

from __future__ import annotations

from collections import deque

import numpy as np
from scipy import integrate


def bfs_components(mask: np.ndarray) -> np.ndarray:
    """Flood-fill labeling, first-occurrence numbering, int32."""
    labels = np.zeros(mask.shape, dtype=np.int32)
    next_label = 0
    offsets = []
    d = mask.ndim
    for axis in range(d):
        for sign in (-1, 1):
            off = [0] * d
            off[axis] = sign
            offsets.append(tuple(off))
    it = np.ndindex(*mask.shape)
    for idx in it:
        if mask[idx] and labels[idx] == 0:
            next_label += 1
            labels[idx] = next_label
            queue = deque([idx])
            while queue:
                cur = queue.popleft()
                for off in offsets:
                    nxt = tuple(c + o for c, o in zip(cur, off))
                    if all(0 <= n < s for n, s in zip(nxt, mask.shape)):
                        if mask[nxt] and labels[nxt] == 0:
                            labels[nxt] = next_label
                            queue.append(nxt)
    return labels


def bfs_cluster_of(mask: np.ndarray, start) -> set:
    """Vertices (as index tuples) of the component containing start."""
    if not mask[tuple(start)]:
        return set()
    d = mask.ndim
    seen = {tuple(start)}
    queue = deque([tuple(start)])
    while queue:
        cur = queue.popleft()
        for axis in range(d):
            for sign in (-1, 1):
                nxt = list(cur)
                nxt[axis] += sign
                nxt = tuple(nxt)
                if all(0 <= n < s for n, s in zip(nxt, mask.shape)):
                    if mask[nxt] and nxt not in seen:
                        seen.add(nxt)
                        queue.append(nxt)
    return seen


def neighbor_scan_boundaries(points: set, d: int):
    """Inner/outer boundary and closure by exhaustive neighbor scan."""
    inner, outer = set(), set()
    for p in points:
        for axis in range(d):
            for sign in (-1, 1):
                q = list(p)
                q[axis] += sign
                q = tuple(q)
                if q not in points:
                    inner.add(p)
                    outer.add(q)
    return inner, outer, points | outer


def momentum_green(d: int, x, epsabs: float = 1e-8) -> float:
    """Momentum-space lattice Green integral (independent of the Bessel
    route): int cos(k.x) / (2 sum (1-cos k_j)) dk/(2pi)^d.

    The integrable singularity at k=0 makes full adaptive cubature slow, so
    this is reserved for spot checks at small d and |x|.
    """
    x = np.asarray(x, dtype=float)

    def integrand(*k):
        kv = np.asarray(k)
        denom = 2.0 * np.sum(1.0 - np.cos(kv))
        if denom < 1e-14:
            return 0.0
        return float(np.cos(np.dot(kv, x)) / denom)

    bounds = [(0.0, np.pi)] * d  # cosine symmetry: restrict to the positive cell
    val, err = integrate.nquad(
        integrand,
        bounds,
        opts={"epsabs": epsabs, "epsrel": 1e-8, "limit": 200},
    )
    # each axis restriction halves the domain; integrand even in every k_j
    return val * (2**d) / (2 * np.pi) ** d


def walk_green_mc(d: int, x, walks: int, max_steps: int, seed: int) -> tuple[float, float]:
    """Monte Carlo visits estimator of the Green function: average number of
    visits to x of an SRW from 0, divided by 2d.  Vectorized over walks;
    max_steps only truncates a transient tail (negligible for d >= 3)."""
    rng = np.random.default_rng(seed)
    target = np.asarray(x, dtype=np.int64)
    pos = np.zeros((walks, d), dtype=np.int64)
    hits = ((pos == target).all(axis=1)).astype(np.float64)
    rows = np.arange(walks)
    for _ in range(max_steps):
        steps = rng.integers(0, 2 * d, size=walks)
        axis = steps >> 1
        sign = np.where(steps & 1, 1, -1)
        pos[rows, axis] += sign
        hits += (pos == target).all(axis=1)
    mean = hits.mean() / (2 * d)
    stderr = hits.std(ddof=1) / np.sqrt(walks) / (2 * d)
    return float(mean), float(stderr)


def quotient_boxes(points: np.ndarray, L: int) -> set:
    """Per-vertex quotient map onto the scale-L box lattice."""
    return {tuple((np.asarray(p) // L) * L) for p in points}
