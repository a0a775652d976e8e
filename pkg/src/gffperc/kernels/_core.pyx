# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: nearest-neighbor component labeling and the
random-walk escape counter behind the Monte Carlo capacity estimator.

Semantics must stay in lockstep with kernels/fallback.py; the test suite
cross-checks both backends against each other and against a BFS oracle.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int32_t i32
ctypedef cnp.int64_t i64
ctypedef cnp.uint8_t u8
ctypedef cnp.uint64_t u64


cdef inline i32 _find(i32* parent, i32 a) noexcept nogil:
    cdef i32 root = a
    cdef i32 cur, nxt
    while parent[root] != root:
        root = parent[root]
    # path compression
    cur = a
    while parent[cur] != root:
        nxt = parent[cur]
        parent[cur] = root
        cur = nxt
    return root


cdef inline void _union(i32* parent, i32 a, i32 b) noexcept nogil:
    cdef i32 ra = _find(parent, a)
    cdef i32 rb = _find(parent, b)
    if ra < rb:
        parent[rb] = ra
    elif rb < ra:
        parent[ra] = rb


def label_components(mask_in):
    """Label nearest-neighbor components of a boolean 2d/3d mask.

    Returns int32 labels (0 = background) numbered by first raster
    occurrence, matching the fallback backend bit for bit.
    """
    shape = tuple(mask_in.shape)
    cdef int ndim = len(shape)
    cdef cnp.ndarray[u8, ndim=1] flat = np.ascontiguousarray(
        mask_in, dtype=np.uint8).reshape(-1)
    cdef Py_ssize_t n = flat.shape[0]
    cdef cnp.ndarray[i32, ndim=1] parent_arr = np.arange(n, dtype=np.int32)
    cdef i32* parent = <i32*> parent_arr.data
    cdef u8* m = <u8*> flat.data

    cdef Py_ssize_t nx, ny, nz, x, y, z, idx
    if ndim == 2:
        nx, ny = shape[0], shape[1]
        with nogil:
            for x in range(nx):
                for y in range(ny):
                    idx = x * ny + y
                    if not m[idx]:
                        continue
                    if y > 0 and m[idx - 1]:
                        _union(parent, <i32>idx, <i32>(idx - 1))
                    if x > 0 and m[idx - ny]:
                        _union(parent, <i32>idx, <i32>(idx - ny))
    elif ndim == 3:
        nx, ny, nz = shape[0], shape[1], shape[2]
        with nogil:
            for x in range(nx):
                for y in range(ny):
                    for z in range(nz):
                        idx = (x * ny + y) * nz + z
                        if not m[idx]:
                            continue
                        if z > 0 and m[idx - 1]:
                            _union(parent, <i32>idx, <i32>(idx - 1))
                        if y > 0 and m[idx - nz]:
                            _union(parent, <i32>idx, <i32>(idx - nz))
                        if x > 0 and m[idx - ny * nz]:
                            _union(parent, <i32>idx, <i32>(idx - ny * nz))
    else:
        raise ValueError("only 2d and 3d masks are supported")

    # relabel roots by first occurrence
    cdef cnp.ndarray[i32, ndim=1] labels = np.zeros(n, dtype=np.int32)
    cdef i32* lab = <i32*> labels.data
    cdef i32 next_label = 0
    cdef i32 root
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            if m[i]:
                root = _find(parent, <i32>i)
                if lab[root] == 0:
                    next_label += 1
                    lab[root] = next_label
                if i != <Py_ssize_t>root:
                    lab[i] = lab[root]
    return labels.reshape(shape)


cdef inline u64 _splitmix64(u64 z) nogil:
    z = (z + <u64>0x9E3779B97F4A7C15)
    z = (z ^ (z >> 30)) * <u64>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <u64>0x94D049BB133111EB
    return z ^ (z >> 31)


def escape_count(
    cnp.ndarray[u8, ndim=1] member,      # flattened membership mask
    cnp.ndarray[i64, ndim=1] mask_lo,    # lower corner of the mask block
    cnp.ndarray[i64, ndim=1] mask_shape,
    cnp.ndarray[i64, ndim=1] start,      # start vertex (inside the set)
    double radius2,                      # squared Euclidean escape radius
    cnp.ndarray[i64, ndim=1] center,     # radius measured from here
    i64 nwalks,
    u64 seed,
):
    """Count walks from ``start`` that exit the Euclidean ball of squared
    radius ``radius2`` around ``center`` before revisiting the member set.

    One xorshift-style stream per walk keyed by (seed, walk index): results
    are independent of batching and worker layout.
    """
    cdef int d = start.shape[0]
    cdef i64 escapes = 0
    cdef i64 w
    cdef i64 pos[8]
    cdef i64 lo[8]
    cdef i64 shp[8]
    cdef i64 ctr[8]
    cdef int j, axis, sign
    cdef u64 state, r
    cdef double dist2
    cdef i64 idx, off
    cdef bint inside, out_of_mask
    cdef u8* mem = <u8*> member.data
    for j in range(d):
        lo[j] = mask_lo[j]
        shp[j] = mask_shape[j]
        ctr[j] = center[j]
    cdef i64 twod = 2 * d

    with nogil:
        for w in range(nwalks):
            state = _splitmix64(seed ^ (<u64>w * <u64>0xD1342543DE82EF95))
            for j in range(d):
                pos[j] = start[j]
            while True:
                state = _splitmix64(state)
                r = state % <u64>twod
                axis = <int>(r >> 1)
                sign = 1 if (r & 1) else -1
                pos[axis] += sign
                dist2 = 0.0
                for j in range(d):
                    dist2 += (<double>(pos[j] - ctr[j])) ** 2
                if dist2 > radius2:
                    escapes += 1
                    break
                out_of_mask = False
                idx = 0
                for j in range(d):
                    off = pos[j] - lo[j]
                    if off < 0 or off >= shp[j]:
                        out_of_mask = True
                        break
                    idx = idx * shp[j] + off
                if not out_of_mask and mem[idx]:
                    break  # returned to the set
    return escapes
