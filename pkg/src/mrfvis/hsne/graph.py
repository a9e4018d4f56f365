"""Exact k-nearest-neighbor graphs and perplexity-calibrated affinities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numba import njit, prange

from ..errors import DomainError, NumericalError

_BISECTION_STEPS = 200
_ENTROPY_TOL = 1e-5


@dataclass
class NeighborGraph:
    """Per-row k nearest neighbors, distances ascending, ties broken by lower index."""

    k: int
    indices: np.ndarray  # (n, k) int64
    distances: np.ndarray  # (n, k) float64, Euclidean

    @property
    def n(self) -> int:
        return self.indices.shape[0]


@dataclass
class AffinityMatrix:
    """Sparse symmetric joint probabilities; sums to 1.

    ``perplexity`` is the calibration target for graphs built by
    `affinities`; it is None for matrices derived from walk statistics.
    ``conditional`` keeps the row-stochastic calibrated kernel before
    symmetrization; random walks use it because the symmetrized chain
    has a near-uniform stationary distribution and carries no landmark
    signal. Levels without one walk on the row-normalized joint matrix.
    """

    p: sp.csr_matrix
    perplexity: float | None = None
    conditional: sp.csr_matrix | None = None

    @property
    def n(self) -> int:
        return self.p.shape[0]

    def transition_matrix(self) -> sp.csr_matrix:
        """Row-stochastic chain for random walks."""
        if self.conditional is not None:
            return self.conditional
        q = self.p.tocsr(copy=True)
        sums = np.asarray(q.sum(axis=1)).ravel()
        sums[sums == 0.0] = 1.0
        q.data /= np.repeat(sums, np.diff(q.indptr))
        return q


def knn(data: np.ndarray, k: int, block_rows: int = 512) -> NeighborGraph:
    """Exact Euclidean kNN by blocked full distance computation.

    Ties are resolved towards the lower point index, so duplicated points
    are claimed in index order; self-matches are excluded.
    """
    data = np.ascontiguousarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] < 1:
        raise DomainError("data must be a 2-D matrix with at least one column")
    n = data.shape[0]
    if not (0 < k < n):
        raise DomainError(f"need 0 < k < n, got k={k}, n={n}")
    sq = np.einsum("ij,ij->i", data, data)
    indices = np.empty((n, k), dtype=np.int64)
    distances = np.empty((n, k), dtype=np.float64)
    for start in range(0, n, block_rows):
        stop = min(start + block_rows, n)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * (data[start:stop] @ data.T)
        np.maximum(d2, 0.0, out=d2)
        d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        idx, dd = _topk_rows(d2, k)
        indices[start:stop] = idx
        distances[start:stop] = np.sqrt(dd)
    return NeighborGraph(k=k, indices=indices, distances=distances)


def _topk_rows(d2: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    n_cols = d2.shape[1]
    pad = min(16, n_cols - k)
    if n_cols <= 4096 or pad <= 0:
        order = np.argsort(d2, axis=1, kind="stable")[:, :k]
        return order, np.take_along_axis(d2, order, axis=1)
    part = np.argpartition(d2, k + pad - 1, axis=1)[:, : k + pad]
    part_d = np.take_along_axis(d2, part, axis=1)
    idx = np.empty((d2.shape[0], k), dtype=np.int64)
    dd = np.empty((d2.shape[0], k), dtype=np.float64)
    for r in range(d2.shape[0]):
        order = np.lexsort((part[r], part_d[r]))
        # a tie that may extend past the partition buffer needs the full row
        if part_d[r, order[k - 1]] == part_d[r, order[-1]]:
            order_full = np.argsort(d2[r], kind="stable")[:k]
            idx[r] = order_full
            dd[r] = d2[r, order_full]
        else:
            idx[r] = part[r, order[:k]]
            dd[r] = part_d[r, order[:k]]
    return idx, dd


@njit(parallel=True, cache=True)
def _calibrate_rows(d2, target_entropy, tol, max_steps):
    n, k = d2.shape
    probs = np.empty((n, k), dtype=np.float64)
    bad = np.zeros(n, dtype=np.bool_)
    for i in prange(n):
        beta_min = -np.inf
        beta_max = np.inf
        beta = 1.0
        base = d2[i] - d2[i].min()  # shift-invariant softmax, avoids underflow
        ok = False
        for _ in range(max_steps):
            w = np.exp(-beta * base)
            wsum = w.sum()
            p = w / wsum
            # Shannon entropy in nats
            h = 0.0
            for j in range(k):
                if p[j] > 0.0:
                    h -= p[j] * np.log(p[j])
            diff = h - target_entropy
            if abs(diff) < tol:
                ok = True
                probs[i] = p
                break
            if diff > 0.0:
                beta_min = beta
                beta = beta * 2.0 if beta_max == np.inf else 0.5 * (beta + beta_max)
            else:
                beta_max = beta
                beta = beta * 0.5 if beta_min == -np.inf else 0.5 * (beta + beta_min)
        if not ok:
            # accept if the search saturated but the entropy error is small
            w = np.exp(-beta * base)
            p = w / w.sum()
            h = 0.0
            for j in range(k):
                if p[j] > 0.0:
                    h -= p[j] * np.log(p[j])
            if abs(h - target_entropy) <= np.log(1.01):
                probs[i] = p
            else:
                bad[i] = True
    failed = -1
    for i in range(n):
        if bad[i]:
            failed = i
            break
    return probs, failed


def affinities(g: NeighborGraph, perplexity: float) -> AffinityMatrix:
    """Row-wise Gaussian calibration to the target perplexity, then symmetrize.

    Bandwidths are bisected until the row entropy equals log(perplexity)
    within 1e-5 nats; the joint matrix is (p_cond + p_cond^T) / (2n).
    """
    if not (0 < perplexity <= g.k):
        raise DomainError(f"need 0 < perplexity <= k, got {perplexity} vs k={g.k}")
    d2 = g.distances**2
    probs, failed = _calibrate_rows(d2, np.log(perplexity), _ENTROPY_TOL, _BISECTION_STEPS)
    if failed >= 0:
        raise NumericalError(
            f"perplexity calibration did not converge for row {failed} "
            f"after {_BISECTION_STEPS} bisection steps"
        )
    n = g.n
    rows = np.repeat(np.arange(n, dtype=np.int64), g.k)
    cond = sp.csr_matrix((probs.ravel(), (rows, g.indices.ravel())), shape=(n, n))
    cond.sort_indices()
    joint = (cond + cond.T) / (2.0 * n)
    joint.sort_indices()
    return AffinityMatrix(p=joint, perplexity=float(perplexity), conditional=cond)


def row_perplexities(g: NeighborGraph, perplexity: float) -> np.ndarray:
    """Recompute each row's calibrated perplexity (diagnostic helper)."""
    d2 = g.distances**2
    probs, failed = _calibrate_rows(d2, np.log(perplexity), _ENTROPY_TOL, _BISECTION_STEPS)
    if failed >= 0:
        raise NumericalError(f"calibration failed for row {failed}")
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = np.where(probs > 0, np.log(probs), 0.0)
    return np.exp(-(probs * logp).sum(axis=1))
