"""Context stacking and frame subsampling."""

from __future__ import annotations

import numpy as np


def stack_frames(features, context: int = 3) -> np.ndarray:
    """Concatenate each frame with ``context`` frames on either side (edges replicated)."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"expected a non-empty T x F matrix, got {x.shape}")
    padded = np.pad(x, ((context, context), (0, 0)), mode="edge")
    t = x.shape[0]
    return np.concatenate([padded[i:i + t] for i in range(2 * context + 1)], axis=1)


def frontend(features, context: int = 3, stride: int = 6) -> np.ndarray:
    """Stack +-``context`` frames at every raw frame, then keep every ``stride``-th window.

    Output is ``ceil(T / stride)`` x ``(2 * context + 1) * F``.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    return stack_frames(features, context)[::stride]


def subsample_labels(labels, stride: int = 6) -> np.ndarray:
    """Most frequent label row within each stride window; ties go to the row seen first.

    Taking whole rows (rather than per-speaker votes) keeps every output frame
    equal to some input frame, so overlap caps survive downsampling.
    """
    y = np.asarray(labels)
    if stride == 1:
        return y.copy()
    out = np.empty((int(np.ceil(len(y) / stride)), y.shape[1]), dtype=y.dtype)
    for i, start in enumerate(range(0, len(y), stride)):
        window = y[start:start + stride]
        rows, first, counts = np.unique(window, axis=0, return_index=True, return_counts=True)
        best = max(range(len(rows)), key=lambda j: (counts[j], -first[j]))
        out[i] = rows[best]
    return out
