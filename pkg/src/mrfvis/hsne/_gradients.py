"""Numba kernels for the embedding optimizer's inner loops.

Hot kernels take coordinates as separate contiguous float32 arrays per
axis (structure-of-arrays) so the pair loops vectorize; the few lost
mantissa bits are irrelevant against the optimizer's stochastic init and
are removed from the KL checkpoints, which run in float64. All kernels
write per-point outputs only, so results do not depend on the parallel
schedule. The repulsive n-body term runs either exactly (branch-free
over all pairs, self term removed afterwards) or through a Barnes-Hut
tree above the exact-size limit.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

TREE_CAP_FACTOR = 8
MAX_TREE_DEPTH = 60


@njit(parallel=True, fastmath=True, cache=True)
def attractive_2d(y0, y1, indptr, indices, data, att0, att1):
    n = y0.size
    for i in prange(n):
        a0 = np.float32(0.0)
        a1 = np.float32(0.0)
        one = np.float32(1.0)
        yi0 = y0[i]
        yi1 = y1[i]
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            d0 = yi0 - y0[j]
            d1 = yi1 - y1[j]
            w = data[p] / (one + d0 * d0 + d1 * d1)
            a0 += w * d0
            a1 += w * d1
        att0[i] = a0
        att1[i] = a1


@njit(parallel=True, fastmath=True, cache=True)
def attractive_3d(y0, y1, y2, indptr, indices, data, att0, att1, att2):
    n = y0.size
    for i in prange(n):
        a0 = np.float32(0.0)
        a1 = np.float32(0.0)
        a2 = np.float32(0.0)
        one = np.float32(1.0)
        yi0 = y0[i]
        yi1 = y1[i]
        yi2 = y2[i]
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            d0 = yi0 - y0[j]
            d1 = yi1 - y1[j]
            d2 = yi2 - y2[j]
            w = data[p] / (one + d0 * d0 + d1 * d1 + d2 * d2)
            a0 += w * d0
            a1 += w * d1
            a2 += w * d2
        att0[i] = a0
        att1[i] = a1
        att2[i] = a2


@njit(parallel=True, fastmath=True, cache=True)
def repulsive_exact_2d(y0, y1, rep0, rep1, zpart):
    """Includes j == i (zero force, unit weight); Z partial removes it."""
    n = y0.size
    one = np.float32(1.0)
    for i in prange(n):
        zi = np.float32(0.0)
        a0 = np.float32(0.0)
        a1 = np.float32(0.0)
        yi0 = y0[i]
        yi1 = y1[i]
        for j in range(n):
            d0 = yi0 - y0[j]
            d1 = yi1 - y1[j]
            w = one / (one + d0 * d0 + d1 * d1)
            zi += w
            w2 = w * w
            a0 += w2 * d0
            a1 += w2 * d1
        zpart[i] = zi - one
        rep0[i] = a0
        rep1[i] = a1


@njit(parallel=True, fastmath=True, cache=True)
def repulsive_exact_3d(y0, y1, y2, rep0, rep1, rep2, zpart):
    n = y0.size
    one = np.float32(1.0)
    for i in prange(n):
        zi = np.float32(0.0)
        a0 = np.float32(0.0)
        a1 = np.float32(0.0)
        a2 = np.float32(0.0)
        yi0 = y0[i]
        yi1 = y1[i]
        yi2 = y2[i]
        for j in range(n):
            d0 = yi0 - y0[j]
            d1 = yi1 - y1[j]
            d2 = yi2 - y2[j]
            w = one / (one + d0 * d0 + d1 * d1 + d2 * d2)
            zi += w
            w2 = w * w
            a0 += w2 * d0
            a1 += w2 * d1
            a2 += w2 * d2
        zpart[i] = zi - one
        rep0[i] = a0
        rep1[i] = a1
        rep2[i] = a2


@njit(cache=True)
def _build_tree(y, center0, halfw0, children, com, count, point_of, cell_center, cell_halfw):
    n, dim = y.shape
    n_child = 1 << dim
    n_cells = 1
    for d in range(dim):
        cell_center[0, d] = center0[d]
    cell_halfw[0] = halfw0
    for idx in range(n):
        c = 0
        depth = 0
        while True:
            if count[c] == 0:  # empty leaf
                count[c] = 1
                point_of[c] = idx
                for d in range(dim):
                    com[c, d] = y[idx, d]
                break
            if point_of[c] >= 0:  # occupied leaf
                old = point_of[c]
                same = True
                for d in range(dim):
                    if y[old, d] != y[idx, d]:
                        same = False
                        break
                if same or depth >= MAX_TREE_DEPTH:
                    count[c] += 1  # merge coincident / depth-capped points
                    for d in range(dim):
                        com[c, d] += y[idx, d]
                    break
                # split: allocate children, push the old point one level down
                if n_cells + n_child > children.shape[0]:
                    return -1
                for b in range(n_child):
                    child = n_cells + b
                    children[c, b] = child
                    cell_halfw[child] = 0.5 * cell_halfw[c]
                    for d in range(dim):
                        off = 0.5 * cell_halfw[c] if (b >> d) & 1 else -0.5 * cell_halfw[c]
                        cell_center[child, d] = cell_center[c, d] + off
                n_cells += n_child
                point_of[c] = -1
                b_old = 0
                for d in range(dim):
                    if y[old, d] > cell_center[c, d]:
                        b_old |= 1 << d
                child = children[c, b_old]
                count[child] = count[c]
                point_of[child] = old
                for d in range(dim):
                    com[child, d] = com[c, d]
                count[c] += 1
                for d in range(dim):
                    com[c, d] += y[idx, d]
                b_new = 0
                for d in range(dim):
                    if y[idx, d] > cell_center[c, d]:
                        b_new |= 1 << d
                c = children[c, b_new]
                depth += 1
                continue
            # internal node
            count[c] += 1
            for d in range(dim):
                com[c, d] += y[idx, d]
            b_new = 0
            for d in range(dim):
                if y[idx, d] > cell_center[c, d]:
                    b_new |= 1 << d
            c = children[c, b_new]
            depth += 1
    return n_cells


@njit(parallel=True, cache=True)
def _bh_forces(y, children, com, count, point_of, cell_halfw, theta, rep, zpart):
    n, dim = y.shape
    n_child = 1 << dim
    theta2 = theta * theta
    for i in prange(n):
        stack = np.empty(4 * MAX_TREE_DEPTH * n_child, dtype=np.int64)
        sp = 0
        stack[sp] = 0
        sp += 1
        f0 = 0.0
        f1 = 0.0
        f2 = 0.0
        zi = 0.0
        while sp > 0:
            sp -= 1
            c = stack[sp]
            cnt = count[c]
            if cnt == 0:
                continue
            inv = 1.0 / cnt
            d0 = y[i, 0] - com[c, 0] * inv
            d1 = y[i, 1] - com[c, 1] * inv
            d2_ = (y[i, 2] - com[c, 2] * inv) if dim == 3 else 0.0
            dist2 = d0 * d0 + d1 * d1 + d2_ * d2_
            width = 2.0 * cell_halfw[c]
            if point_of[c] >= 0 or width * width < theta2 * dist2:
                w = 1.0 / (1.0 + dist2)
                zi += cnt * w
                w2 = w * w * cnt
                f0 += w2 * d0
                f1 += w2 * d1
                f2 += w2 * d2_
            else:
                for b in range(n_child):
                    stack[sp] = children[c, b]
                    sp += 1
        zpart[i] = zi - 1.0  # remove self term
        rep[i, 0] = f0
        rep[i, 1] = f1
        if dim == 3:
            rep[i, 2] = f2


def repulsive_bh(y: np.ndarray, theta: float, rep: np.ndarray, zpart: np.ndarray) -> None:
    """Barnes-Hut approximation of the repulsive term; fills rep and zpart."""
    n, dim = y.shape
    lo = y.min(axis=0)
    hi = y.max(axis=0)
    center0 = 0.5 * (lo + hi)
    halfw0 = max(float((hi - lo).max()) * 0.5 * 1.0001, 1e-12)
    cap = TREE_CAP_FACTOR * n + 4096
    n_child = 1 << dim
    children = np.full((cap, n_child), -1, dtype=np.int64)
    com = np.zeros((cap, dim), dtype=np.float64)
    count = np.zeros(cap, dtype=np.int64)
    point_of = np.full(cap, -1, dtype=np.int64)
    cell_center = np.zeros((cap, dim), dtype=np.float64)
    cell_halfw = np.zeros(cap, dtype=np.float64)
    n_cells = _build_tree(y, center0, halfw0, children, com, count, point_of,
                          cell_center, cell_halfw)
    if n_cells < 0:
        raise MemoryError("Barnes-Hut tree capacity exceeded")
    _bh_forces(y, children, com, count, point_of, cell_halfw, theta, rep, zpart)


@njit(parallel=True, cache=True)
def z_exact(y):
    """Exact normalization sum_{i != j} 1/(1+|y_i-y_j|^2), float64."""
    n, dim = y.shape
    part = np.zeros(n)
    for i in prange(n):
        zi = 0.0
        for j in range(n):
            d2 = 0.0
            for d in range(dim):
                diff = y[i, d] - y[j, d]
                d2 += diff * diff
            zi += 1.0 / (1.0 + d2)
        part[i] = zi - 1.0
    total = 0.0
    for i in range(n):
        total += part[i]
    return total


@njit(cache=True)
def kl_terms(y, indptr, indices, data, log_z):
    """sum_ij P_ij (log P_ij - log w_ij + log Z) over the sparse support, float64."""
    n, dim = y.shape
    total = 0.0
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            pij = data[p]
            if pij <= 0.0:
                continue
            d2 = 0.0
            for d in range(dim):
                diff = y[i, d] - y[j, d]
                d2 += diff * diff
            total += pij * (np.log(pij) + np.log1p(d2) + log_z)
    return total
