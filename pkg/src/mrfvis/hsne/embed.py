"""Gradient-descent embedding of hierarchy levels and the full pipeline.

The optimizer is plain momentum descent with per-coordinate gain
adaptation on the Kullback-Leibler divergence between the sparse input
affinities and a Student-t low-dimensional kernel. The top hierarchy
level starts from seeded random placement with early exaggeration; each
lower level starts from the influence-weighted average of its parents
and runs without exaggeration. The bottom (data) level is the result.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.sparse as sp

from ..errors import ConfigError, DomainError, NumericalError
from . import _gradients as kern
from .graph import AffinityMatrix, affinities, knn
from .hierarchy import Hierarchy, build_hierarchy

INIT_HALF_RANGE = 1e-2


@dataclass
class EmbedOptions:
    """Optimizer settings; defaults follow common t-SNE practice."""

    iterations: int = 2000
    seed: int = 0
    learning_rate: float = 200.0
    exaggeration_iters: int = 200
    exaggeration_factor: float = 1.5
    momentum_early: float = 0.5
    momentum_late: float = 0.8
    momentum_switch: int = 250
    checkpoint_every: int = 100
    theta: float = 0.5
    exact_limit: int = 20000
    min_gain: float = 0.01


@dataclass
class Embedding:
    """Low-dimensional points plus optimization telemetry."""

    points: np.ndarray  # (n, dim) float64
    point_ids: np.ndarray  # (n,) int64
    kl_trace: list  # [(iteration, kl), ...] for the bottom level
    config: dict

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n(self) -> int:
        return self.points.shape[0]


def _init_points(point_ids: np.ndarray, dim: int, seed: int) -> np.ndarray:
    """Seeded uniform placement in [-1e-2, 1e-2]^dim, keyed per point id.

    Keying the stream by (seed, id) makes initialization equivariant
    under input permutations carrying their ids along.
    """
    pts = np.empty((point_ids.size, dim), dtype=np.float64)
    for row, gid in enumerate(point_ids):
        key = (int(seed) << 64) | int(gid)
        gen = np.random.Generator(np.random.Philox(key=key))
        pts[row] = gen.uniform(-INIT_HALF_RANGE, INIT_HALF_RANGE, size=dim)
    return pts


class _GradientEngine:
    """Reusable buffers and dispatch for one optimization run."""

    def __init__(self, n: int, dim: int, p: sp.csr_matrix, opts: EmbedOptions):
        self.n = n
        self.dim = dim
        self.p = p
        self.opts = opts
        self.exact = n <= opts.exact_limit
        self.y32 = [np.empty(n, dtype=np.float32) for _ in range(dim)]
        self.att32 = [np.empty(n, dtype=np.float32) for _ in range(dim)]
        self.rep32 = [np.empty(n, dtype=np.float32) for _ in range(dim)]
        self.z32 = np.empty(n, dtype=np.float32)
        self.rep64 = np.empty((n, dim), dtype=np.float64)
        self.z64 = np.empty(n, dtype=np.float64)
        self.grad = np.empty((n, dim), dtype=np.float64)

    def gradient(self, y: np.ndarray, data32: np.ndarray) -> np.ndarray:
        """4 * (attraction - repulsion / Z) of KL(P || Q) at y."""
        for d in range(self.dim):
            self.y32[d][:] = y[:, d]
        if self.dim == 2:
            kern.attractive_2d(*self.y32, self.p.indptr, self.p.indices, data32, *self.att32)
        else:
            kern.attractive_3d(*self.y32, self.p.indptr, self.p.indices, data32, *self.att32)
        if self.exact:
            if self.dim == 2:
                kern.repulsive_exact_2d(*self.y32, *self.rep32, self.z32)
            else:
                kern.repulsive_exact_3d(*self.y32, *self.rep32, self.z32)
            z = float(self.z32.sum(dtype=np.float64))
            for d in range(self.dim):
                self.grad[:, d] = 4.0 * (
                    self.att32[d].astype(np.float64) - self.rep32[d].astype(np.float64) / z
                )
        else:
            kern.repulsive_bh(y, self.opts.theta, self.rep64, self.z64)
            z = float(self.z64.sum())
            for d in range(self.dim):
                self.grad[:, d] = 4.0 * (self.att32[d].astype(np.float64) - self.rep64[:, d] / z)
        return self.grad

    def normalization(self, y: np.ndarray) -> float:
        """Student-t normalization constant at y, float64."""
        if self.exact:
            return float(kern.z_exact(y))
        kern.repulsive_bh(y, self.opts.theta, self.rep64, self.z64)
        return float(self.z64.sum())


def _optimize(
    y0: np.ndarray,
    p: sp.csr_matrix,
    opts: EmbedOptions,
    exaggerate: bool,
) -> tuple[np.ndarray, list]:
    n, dim = y0.shape
    y = y0.copy()
    inc = np.zeros_like(y)
    gains = np.ones_like(y)
    engine = _GradientEngine(n, dim, p, opts)
    data_plain32 = p.data.astype(np.float32)
    data_exag32 = (p.data * opts.exaggeration_factor).astype(np.float32)
    trace: list = []
    for it in range(1, opts.iterations + 1):
        use_exag = exaggerate and it <= opts.exaggeration_iters
        grad = engine.gradient(y, data_exag32 if use_exag else data_plain32)
        flipped = (grad > 0.0) != (inc > 0.0)
        gains = np.where(flipped, gains + 0.2, gains * 0.8)
        np.maximum(gains, opts.min_gain, out=gains)
        momentum = opts.momentum_early if it <= opts.momentum_switch else opts.momentum_late
        inc = momentum * inc - opts.learning_rate * (gains * grad)
        y += inc
        y -= y.mean(axis=0)
        if it % opts.checkpoint_every == 0 or it == opts.iterations:
            if not np.all(np.isfinite(y)):
                raise NumericalError(
                    f"embedding diverged at iteration {it} "
                    f"(learning_rate={opts.learning_rate})"
                )
            kl = float(kern.kl_terms(y, p.indptr, p.indices, p.data, np.log(engine.normalization(y))))
            if not trace or trace[-1][0] != it:
                trace.append((it, kl))
    return y, trace


def embed(h: Hierarchy, dim: int, opts: EmbedOptions) -> Embedding:
    """Optimize the hierarchy top-down and return the data-level embedding."""
    if dim not in (2, 3):
        raise DomainError(f"dim must be 2 or 3, got {dim}")
    if opts.iterations < 250:
        raise DomainError(f"iterations must be >= 250, got {opts.iterations}")
    top = h.levels[-1]
    if top.point_ids.size < dim + 2:
        raise ConfigError(
            f"top level has {top.point_ids.size} landmarks; need at least {dim + 2}"
        )
    y = _init_points(top.point_ids, dim, opts.seed)
    y, trace = _optimize(y, top.affinity.p, opts, exaggerate=True)
    for lev in range(h.n_levels - 2, -1, -1):
        level = h.levels[lev]
        y = np.asarray(level.parent_weights @ y)
        y, trace = _optimize(y, level.affinity.p, opts, exaggerate=False)
    config = asdict(opts)
    config.update(
        dim=dim,
        n_levels=h.n_levels,
        level_sizes=[int(l.point_ids.size) for l in h.levels],
        exaggeration_applied_on_top_only=True,
    )
    return Embedding(points=y, point_ids=h.levels[0].point_ids.copy(), kl_trace=trace, config=config)


def kl_divergence(a: AffinityMatrix, e: Embedding) -> float:
    """KL(P || Q) over P's sparse support with the Student-t kernel Q.

    Q is normalized over all point pairs; P over its support. The value
    is >= 0 and reaches 0 exactly when Q reproduces P on the support and
    carries no mass elsewhere.
    """
    p = a.p
    if p.shape[0] != e.n:
        raise DomainError(f"affinity size {p.shape[0]} != embedding size {e.n}")
    y = np.ascontiguousarray(e.points, dtype=np.float64)
    if e.n <= 20000:
        z = float(kern.z_exact(y))
    else:
        rep = np.empty_like(y)
        zpart = np.empty(e.n, dtype=np.float64)
        kern.repulsive_bh(y, 0.5, rep, zpart)
        z = float(zpart.sum())
    return max(float(kern.kl_terms(y, p.indptr, p.indices, p.data, np.log(z))), 0.0)


def embed_data(
    data: np.ndarray,
    dim: int,
    neighborhood: int,
    opts: EmbedOptions,
    n_levels: int = 2,
    point_ids: np.ndarray | None = None,
) -> Embedding:
    """Full pipeline: kNN, affinities (perplexity = neighborhood/3), hierarchy, embed.

    Rows are processed in stable-id order internally, so permuting the
    input rows together with their ids permutes the output identically.
    """
    data = np.ascontiguousarray(data, dtype=np.float64)
    n = data.shape[0]
    ids = np.arange(n, dtype=np.int64) if point_ids is None else np.asarray(point_ids, np.int64)
    if ids.size != n or np.unique(ids).size != n:
        raise DomainError("point_ids must be unique and match the data length")
    order = np.argsort(ids, kind="stable")
    canon = data[order]
    g = knn(canon, neighborhood)
    aff = affinities(g, neighborhood / 3.0)
    h = build_hierarchy(aff, n_levels, opts.seed, point_ids=ids[order])
    emb = embed(h, dim, opts)
    points = np.empty_like(emb.points)
    points[order] = emb.points
    emb.config["neighborhood"] = int(neighborhood)
    return Embedding(points=points, point_ids=ids.copy(), kl_trace=emb.kl_trace, config=emb.config)


def save_embedding(e: Embedding, params: np.ndarray, path) -> None:
    """CSV with one row per point (id,t1,t2,b1,x,y[,z]) plus a JSON sidecar."""
    import json
    from pathlib import Path

    path = Path(path)
    cols = ["x", "y", "z"][: e.dim]
    with open(path, "w") as fh:
        fh.write("id,t1,t2,b1," + ",".join(cols) + "\n")
        for gid, (t1, t2, b1), pt in zip(e.point_ids, params, e.points):
            coords = ",".join(repr(float(v)) for v in pt)
            fh.write(f"{int(gid)},{t1!r},{t2!r},{b1!r},{coords}\n")
    sidecar = {
        "config": e.config,
        "kl_trace": [[int(i), float(v)] for i, v in e.kl_trace],
    }
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n"
    )


def load_embedding(path) -> tuple[Embedding, np.ndarray]:
    """Inverse of `save_embedding`; returns the embedding and (t1,t2,b1) rows."""
    import json
    from pathlib import Path

    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        dim = len(header) - 4
        ids, params, pts = [], [], []
        for line in fh:
            parts = line.strip().split(",")
            ids.append(int(parts[0]))
            params.append([float(v) for v in parts[1:4]])
            pts.append([float(v) for v in parts[4:]])
    sidecar_path = path.with_suffix(path.suffix + ".json")
    config, trace = {}, []
    if sidecar_path.exists():
        sidecar = json.loads(sidecar_path.read_text())
        config = sidecar.get("config", {})
        trace = [(int(i), float(v)) for i, v in sidecar.get("kl_trace", [])]
    emb = Embedding(
        points=np.array(pts, dtype=np.float64).reshape(len(ids), dim),
        point_ids=np.array(ids, dtype=np.int64),
        kl_trace=trace,
        config=config,
    )
    return emb, np.array(params, dtype=np.float64)
