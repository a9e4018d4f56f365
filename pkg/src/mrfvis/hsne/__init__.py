"""Hierarchical stochastic neighbor embedding of dictionary rows."""

from .embed import (
    EmbedOptions,
    Embedding,
    embed,
    embed_data,
    kl_divergence,
    load_embedding,
    save_embedding,
)
from .graph import AffinityMatrix, NeighborGraph, affinities, knn, row_perplexities
from .hierarchy import Hierarchy, HsneLevel, build_hierarchy, influence_weights, select_landmarks

__all__ = [
    "AffinityMatrix",
    "EmbedOptions",
    "Embedding",
    "Hierarchy",
    "HsneLevel",
    "NeighborGraph",
    "affinities",
    "build_hierarchy",
    "embed",
    "embed_data",
    "influence_weights",
    "kl_divergence",
    "knn",
    "load_embedding",
    "row_perplexities",
    "save_embedding",
    "select_landmarks",
]
