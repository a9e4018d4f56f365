"""Multi-level point hierarchies built from affinity random walks.

Landmarks for the next level are nodes whose visit count under short
random walks on the row-normalized affinity chain exceeds 1.5x the mean.
Influence weights tie every point to the landmarks that absorb its
walks; they are row-stochastic and drive both the next level's affinity
matrix (co-influence) and drill-down initialization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numba import njit

from ..errors import ConfigError, DomainError
from .graph import AffinityMatrix

N_WALKS = 100
WALK_LENGTH = 50
LANDMARK_THRESHOLD = 1.5
# On near-regular graphs (e.g. heavily duplicated rows) occupancy is
# uniform and the threshold selects nobody; fall back to the top decile.
LANDMARK_MIN_FRACTION = 0.1
INFLUENCE_WALKS = 100
INFLUENCE_MAX_STEPS = 1000

_U64 = np.uint64
_GOLDEN = _U64(0x9E3779B97F4A7C15)


@njit(cache=True)
def _mix64(z):
    z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
    return z ^ (z >> _U64(31))


@njit(cache=True)
def _next_uniform(state):
    state = state + _GOLDEN
    z = _mix64(state)
    return state, (z >> _U64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def _step(node, indptr, indices, cum, u):
    lo = indptr[node]
    hi = indptr[node + 1]
    if hi == lo:
        return node  # isolated node: walk stays put
    target = u * cum[hi - 1]
    a, b = lo, hi  # first index with cum > target
    while a < b:
        mid = (a + b) // 2
        if cum[mid] > target:
            b = mid
        else:
            a = mid + 1
    if a >= hi:
        a = hi - 1
    return indices[a]


@njit(cache=True)
def _visit_counts(indptr, indices, cum, n_walks, walk_len, seed):
    n = indptr.size - 1
    counts = np.zeros(n, dtype=np.int64)
    for start in range(n):
        state = _mix64(_U64(seed) ^ (_U64(start) * _GOLDEN))
        for _ in range(n_walks):
            node = start
            for _ in range(walk_len):
                state, u = _next_uniform(state)
                node = _step(node, indptr, indices, cum, u)
                counts[node] += 1
    return counts


@njit(parallel=True, cache=True)
def _absorb_walks(indptr, indices, cum, is_landmark, n_walks, max_steps, seed):
    n = indptr.size - 1
    hits = np.full((n, n_walks), -1, dtype=np.int64)
    for start in prange(n):
        if is_landmark[start]:
            hits[start, :] = start
            continue
        state = _mix64(_U64(seed) ^ (_U64(start) * _GOLDEN) ^ _U64(0x5851F42D4C957F2D))
        for w in range(n_walks):
            node = start
            for _ in range(max_steps):
                state, u = _next_uniform(state)
                node = _step(node, indptr, indices, cum, u)
                if is_landmark[node]:
                    hits[start, w] = node
                    break
    return hits


@dataclass
class HsneLevel:
    """One hierarchy level: its points, their affinities, parent links."""

    point_ids: np.ndarray  # global ids of this level's points
    affinity: AffinityMatrix
    parent_weights: sp.csr_matrix | None  # (n_here x n_parent) row-stochastic; None on top


@dataclass
class Hierarchy:
    levels: list[HsneLevel]  # levels[0] = all data, last = top landmarks
    seed: int

    @property
    def n_levels(self) -> int:
        return len(self.levels)


def _row_cumsum(p: sp.csr_matrix) -> np.ndarray:
    cum = p.data.astype(np.float64).copy()
    for i in range(p.shape[0]):
        lo, hi = p.indptr[i], p.indptr[i + 1]
        if hi > lo:
            cum[lo:hi] = np.cumsum(cum[lo:hi])
    return cum


def _walk_chain(a: AffinityMatrix) -> tuple[sp.csr_matrix, np.ndarray]:
    chain = a.transition_matrix()
    return chain, _row_cumsum(chain)


def _bfs_nearest_landmark(i: int, p: sp.csr_matrix, is_landmark: np.ndarray) -> int:
    seen = {i}
    frontier = [i]
    while frontier:
        nxt = []
        for node in frontier:
            for j in p.indices[p.indptr[node] : p.indptr[node + 1]]:
                if j in seen:
                    continue
                if is_landmark[j]:
                    return int(j)
                seen.add(int(j))
                nxt.append(int(j))
        frontier = sorted(nxt)
    raise ConfigError(f"point {i} cannot reach any landmark")


def select_landmarks(a: AffinityMatrix, seed: int) -> np.ndarray:
    """Random-walk occupancy landmark selection; each graph component keeps one."""
    n = a.n
    chain, cum = _walk_chain(a)
    counts = _visit_counts(chain.indptr, chain.indices, cum, N_WALKS, WALK_LENGTH, seed)
    mask = counts > LANDMARK_THRESHOLD * counts.mean()
    floor = min(n, max(4, int(np.ceil(LANDMARK_MIN_FRACTION * n))))
    if mask.sum() < floor:
        top = np.lexsort((np.arange(n), -counts))[:floor]  # ties -> lower index
        mask[:] = False
        mask[top] = True
    n_comp, comp = sp.csgraph.connected_components(a.p, directed=False)
    for c in range(n_comp):
        members = np.flatnonzero(comp == c)
        if not mask[members].any():
            mask[members[np.argmax(counts[members])]] = True
    return np.flatnonzero(mask)


def influence_weights(a: AffinityMatrix, landmarks: np.ndarray, seed: int) -> sp.csr_matrix:
    """Row-stochastic (n x n_landmarks) absorption fractions of each point's walks."""
    n = a.n
    is_landmark = np.zeros(n, dtype=np.bool_)
    is_landmark[landmarks] = True
    lm_index = np.full(n, -1, dtype=np.int64)
    lm_index[landmarks] = np.arange(landmarks.size)
    chain, cum = _walk_chain(a)
    hits = _absorb_walks(chain.indptr, chain.indices, cum, is_landmark, INFLUENCE_WALKS,
                         INFLUENCE_MAX_STEPS, seed)
    rows = []
    cols = []
    vals = []
    for i in range(n):
        absorbed = hits[i][hits[i] >= 0]
        if absorbed.size == 0:
            target = _bfs_nearest_landmark(i, a.p, is_landmark)
            rows.append(i)
            cols.append(lm_index[target])
            vals.append(1.0)
            continue
        uniq, cnt = np.unique(absorbed, return_counts=True)
        for node, c in zip(uniq, cnt):
            rows.append(i)
            cols.append(lm_index[node])
            vals.append(c / absorbed.size)
    w = sp.csr_matrix((vals, (rows, cols)), shape=(n, landmarks.size))
    w.sort_indices()
    return w


def _co_influence_affinity(w: sp.csr_matrix) -> AffinityMatrix:
    a = (w.T @ w).tocsr()
    a.setdiag(0.0)
    a.eliminate_zeros()
    total = a.sum()
    if total <= 0:
        raise ConfigError("landmark affinities are empty; graph too fragmented")
    a = a / total
    a.sort_indices()
    return AffinityMatrix(p=a.tocsr(), perplexity=None)


def build_hierarchy(
    a: AffinityMatrix,
    n_levels: int,
    seed: int,
    point_ids: np.ndarray | None = None,
) -> Hierarchy:
    """Stack ``n_levels`` levels of landmarks on top of the data level."""
    if n_levels not in (1, 2, 3):
        raise DomainError(f"n_levels must be 1, 2 or 3, got {n_levels}")
    n = a.n
    ids = np.arange(n, dtype=np.int64) if point_ids is None else np.asarray(point_ids, np.int64)
    if ids.size != n:
        raise DomainError("point_ids length must match the affinity matrix")
    levels = [HsneLevel(point_ids=ids, affinity=a, parent_weights=None)]
    for lev in range(1, n_levels):
        current = levels[-1]
        landmarks = select_landmarks(current.affinity, seed + lev)
        if landmarks.size < 4:
            raise ConfigError(
                f"level {lev}: only {landmarks.size} landmarks selected; "
                "hierarchy degenerates below a usable embedding size"
            )
        weights = influence_weights(current.affinity, landmarks, seed + lev)
        current.parent_weights = weights
        levels.append(
            HsneLevel(
                point_ids=current.point_ids[landmarks],
                affinity=_co_influence_affinity(weights),
                parent_weights=None,
            )
        )
    return Hierarchy(levels=levels, seed=seed)
