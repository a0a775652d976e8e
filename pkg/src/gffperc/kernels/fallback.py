"""Pure numpy/scipy kernel implementations, used when the compiled
extension is unavailable.

``label_components`` must produce labels identical to the compiled backend
(components numbered by first raster occurrence); ``escape_count`` matches
it in distribution but consumes a different stream, so capacity estimates
agree statistically, not bitwise, across backends.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..rng import stream


def _canonical_relabel(labels: np.ndarray) -> np.ndarray:
    flat = labels.ravel()
    nz = np.flatnonzero(flat)
    if len(nz) == 0:
        return labels
    first = np.unique(flat[nz], return_index=True)[1]
    order = np.argsort(np.argsort(nz[first]))  # rank by first occurrence
    lut = np.zeros(flat.max() + 1, dtype=np.int32)
    lut[np.unique(flat[nz])] = order.astype(np.int32) + 1
    return lut[flat].reshape(labels.shape)


def label_components(mask: np.ndarray) -> np.ndarray:
    """Nearest-neighbor component labels (0 = background), int32."""
    if mask.ndim not in (2, 3):
        raise ValueError("only 2d and 3d masks are supported")
    structure = ndimage.generate_binary_structure(mask.ndim, 1)
    labels, _ = ndimage.label(mask, structure=structure)
    labels = labels.astype(np.int32, copy=False)
    # ndimage numbers by raster order already; canonicalize defensively so
    # both backends are bit-identical.
    return _canonical_relabel(labels)


def escape_count(member, mask_lo, mask_shape, start, radius2, center, nwalks, seed):
    """Vectorized batch random walks; same contract as the compiled kernel."""
    d = len(start)
    rng = stream(int(seed), 0)
    member = member.reshape(tuple(mask_shape))
    lo = np.asarray(mask_lo, dtype=np.int64)
    ctr = np.asarray(center, dtype=np.int64)
    escapes = 0
    remaining = int(nwalks)
    batch = min(remaining, 16384)
    while remaining > 0:
        m = min(batch, remaining)
        remaining -= m
        pos = np.tile(np.asarray(start, dtype=np.int64), (m, 1))
        active = np.ones(m, dtype=bool)
        while active.any():
            idx = np.flatnonzero(active)
            steps = rng.integers(0, 2 * d, size=len(idx))
            axis = steps >> 1
            sign = np.where(steps & 1, 1, -1).astype(np.int64)
            pos[idx, axis] += sign
            p = pos[idx]
            dist2 = ((p - ctr) ** 2).sum(axis=1).astype(np.float64)
            escaped = dist2 > radius2
            escapes += int(escaped.sum())
            rel = p - lo
            in_mask = np.all((rel >= 0) & (rel < mask_shape), axis=1)
            returned = np.zeros(len(idx), dtype=bool)
            if in_mask.any():
                sub = rel[in_mask]
                returned[in_mask] = member[tuple(sub.T)].astype(bool)
            active[idx[escaped | (returned & ~escaped)]] = False
    return escapes
