"""Similarity-transform alignment of embeddings with known correspondences.

Because both point sets follow the same atom ordering, the usual
iterative closest-point matching step collapses to a single closed-form
least-squares fit of scale, rotation and translation (cross-covariance
SVD with reflection correction).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateGeometryError, DomainError

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class SimilarityTransform:
    """p -> scale * rotation @ p + translation, with det(rotation) = +1."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.ascontiguousarray(self.rotation, dtype=np.float64)
        t = np.ascontiguousarray(self.translation, dtype=np.float64)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        if self.scale <= 0:
            raise DomainError(f"scale must be positive, got {self.scale}")
        dim = r.shape[0]
        if r.shape != (dim, dim) or t.shape != (dim,):
            raise DomainError("rotation/translation shapes are inconsistent")
        if abs(np.linalg.det(r) - 1.0) > 1e-6 or np.abs(r.T @ r - np.eye(dim)).max() > 1e-6:
            raise DomainError("rotation must be proper orthonormal")

    @property
    def dim(self) -> int:
        return self.rotation.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "SimilarityTransform":
        return cls(scale=1.0, rotation=np.eye(dim), translation=np.zeros(dim))


def fit_similarity(src: np.ndarray, dst: np.ndarray) -> SimilarityTransform:
    """Least-squares similarity fit of corresponding point rows.

    Minimizes sum_i |s R src_i + t - dst_i|^2. The rotation is forced
    proper (det = +1) by flipping the sign of the smallest singular
    direction when the raw SVD solution would reflect.
    """
    src = np.ascontiguousarray(src, dtype=np.float64)
    dst = np.ascontiguousarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2:
        raise DomainError(f"point sets must share shape, got {src.shape} vs {dst.shape}")
    n, dim = src.shape
    if n < dim + 1:
        raise DomainError(f"need at least dim+1={dim + 1} points, got {n}")
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    xs = src - mu_s
    xd = dst - mu_d
    var_s = float(np.einsum("ij,ij->", xs, xs)) / n
    cov = (xd.T @ xs) / n
    u, d, vt = np.linalg.svd(cov)
    # similarity fits tolerate rank dim-1 (reflection correction resolves the
    # last axis) but not less: coincident 2-D or collinear 3-D clouds fail
    if var_s == 0.0 or d[0] == 0.0 or d[dim - 2] <= 1e-12 * d[0]:
        raise DegenerateGeometryError(
            "point configuration is rank-deficient; a similarity transform is not determined"
        )
    s = np.ones(dim)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[-1] = -1.0
    rotation = u @ np.diag(s) @ vt
    scale = float((d * s).sum() / var_s)
    if scale <= 0:
        raise DegenerateGeometryError("fitted scale is non-positive")
    translation = mu_d - scale * rotation @ mu_s
    return SimilarityTransform(scale=scale, rotation=rotation, translation=translation)


def apply(t: SimilarityTransform, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64)
    if pts.shape[-1] != t.dim:
        raise DomainError(f"points have dim {pts.shape[-1]}, transform is {t.dim}-D")
    return t.scale * pts @ t.rotation.T + t.translation


def compose(t2: SimilarityTransform, t1: SimilarityTransform) -> SimilarityTransform:
    """Transform equal to applying t1 first, then t2."""
    if t1.dim != t2.dim:
        raise DomainError("cannot compose transforms of different dimensions")
    return SimilarityTransform(
        scale=t2.scale * t1.scale,
        rotation=t2.rotation @ t1.rotation,
        translation=t2.scale * t2.rotation @ t1.translation + t2.translation,
    )


def rms_residual(src: np.ndarray, dst: np.ndarray, t: SimilarityTransform) -> float:
    """Root-mean-square length of apply(t, src) - dst."""
    diff = apply(t, src) - np.asarray(dst, dtype=np.float64)
    return float(np.sqrt(np.mean(np.einsum("ij,ij->i", diff, diff))))


def to_json(t: SimilarityTransform) -> str:
    payload = {
        "scale": t.scale,
        "rotation": t.rotation.tolist(),  # row-major
        "translation": t.translation.tolist(),
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def from_json(text: str) -> SimilarityTransform:
    payload = json.loads(text)
    return SimilarityTransform(
        scale=float(payload["scale"]),
        rotation=np.array(payload["rotation"], dtype=np.float64),
        translation=np.array(payload["translation"], dtype=np.float64),
    )


def save_transform(t: SimilarityTransform, path: str | Path) -> None:
    Path(path).write_text(to_json(t) + "\n")


def load_transform(path: str | Path) -> SimilarityTransform:
    return from_json(Path(path).read_text())
