"""Frame-vs-speaker similarity metrics.

``dot`` is unbounded, ``sigma_dot`` applies tanh to both vectors first (so
the score lies in [-D, D]) and ``cosine`` l2-normalizes them (score in
[-1, 1]). A zero vector has no direction; its cosine similarity is defined
as 0 and flagged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

METRICS = ("dot", "sigma_dot", "cosine")


def _pair(h, e) -> tuple[np.ndarray, np.ndarray]:
    h = np.asarray(h, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    if h.shape != e.shape or h.ndim != 1:
        raise ValueError(f"similarity needs two vectors of equal length, got {h.shape} and {e.shape}")
    return h, e


def dot_sim(h, e) -> float:
    h, e = _pair(h, e)
    return float(h @ e)


def sigma_dot_sim(h, e) -> float:
    h, e = _pair(h, e)
    return float(np.tanh(h) @ np.tanh(e))


def cosine_sim(h, e, return_flag: bool = False):
    """Cosine similarity. With ``return_flag`` also report whether a zero vector was hit."""
    h, e = _pair(h, e)
    nh, ne = np.linalg.norm(h), np.linalg.norm(e)
    degenerate = bool(nh == 0.0 or ne == 0.0)
    value = 0.0 if degenerate else float(np.clip((h / nh) @ (e / ne), -1.0, 1.0))
    return (value, degenerate) if return_flag else value


SCALAR_METRICS = {"dot": dot_sim, "sigma_dot": sigma_dot_sim, "cosine": cosine_sim}


@dataclass(frozen=True)
class SimilarityMatrix:
    values: np.ndarray
    metric: str
    # cosine only: True where either vector of the pair was all-zero
    degenerate: np.ndarray | None = None


def _check_matrices(h: np.ndarray, e: np.ndarray, metric: str) -> None:
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {METRICS}")
    if h.ndim != 2 or e.ndim != 2 or h.shape[1] != e.shape[1]:
        raise ValueError(f"similarity_matrix: H {h.shape} and E {e.shape} must share the last dimension")


def similarity_matrix(H, E, metric: str = "sigma_dot") -> SimilarityMatrix:
    """Pairwise ``metric(H[t], E[n])`` for every frame t and speaker n."""
    h = np.asarray(H, dtype=np.float64)
    e = np.asarray(E, dtype=np.float64)
    _check_matrices(h, e, metric)
    if metric == "dot":
        return SimilarityMatrix(h @ e.T, metric)
    if metric == "sigma_dot":
        return SimilarityMatrix(np.tanh(h) @ np.tanh(e).T, metric)
    nh = np.linalg.norm(h, axis=1)
    ne = np.linalg.norm(e, axis=1)
    hn = np.divide(h, nh[:, None], out=np.zeros_like(h), where=nh[:, None] > 0)
    en = np.divide(e, ne[:, None], out=np.zeros_like(e), where=ne[:, None] > 0)
    degenerate = (nh[:, None] == 0) | (ne[None, :] == 0)
    return SimilarityMatrix(np.clip(hn @ en.T, -1.0, 1.0), metric, degenerate)


def similarity_graph(H: ad.Tensor, E: ad.Tensor, metric: str) -> ad.Tensor:
    """Differentiable version of :func:`similarity_matrix` (T x D, N x D -> T x N)."""
    _check_matrices(H.data, E.data, metric)
    if metric == "dot":
        return H @ E.T
    if metric == "sigma_dot":
        return ad.tanh(H) @ ad.tanh(E).T
    return ad.l2_normalize(H) @ ad.l2_normalize(E).T
