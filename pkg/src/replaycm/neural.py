"""Verified neural building blocks: Max-Feature-Map activation and 2x2
stride-2 max pooling on channels-first (C, H, W) arrays.
"""

from __future__ import annotations

import numpy as np


def _check_tensor(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"expected a (channels, height, width) array, got shape {x.shape}")
    return x


def mfm(x: np.ndarray) -> np.ndarray:
    """Element-wise max across paired channel halves: out[c] = max(x[c], x[c+k])."""
    x = _check_tensor(x)
    channels = x.shape[0]
    if channels % 2:
        raise ValueError(f"channel count must be even, got {channels}")
    k = channels // 2
    return np.maximum(x[:k], x[k:])


def mfm_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Route the upstream gradient to the winning half; ties go to the first half."""
    x = _check_tensor(x)
    upstream = np.asarray(upstream, dtype=np.float64)
    channels = x.shape[0]
    if channels % 2:
        raise ValueError(f"channel count must be even, got {channels}")
    k = channels // 2
    if upstream.shape != (k,) + x.shape[1:]:
        raise ValueError(
            f"upstream shape {upstream.shape} does not match the mfm output "
            f"shape {(k,) + x.shape[1:]}"
        )
    first_wins = x[:k] >= x[k:]
    grad = np.zeros_like(x)
    grad[:k] = np.where(first_wins, upstream, 0.0)
    grad[k:] = np.where(first_wins, 0.0, upstream)
    return grad


def max_pool_2x2(x: np.ndarray) -> np.ndarray:
    """Non-overlapping 2x2 max per channel; odd trailing row/column dropped."""
    x = _check_tensor(x)
    _, h, w = x.shape
    if h < 2 or w < 2:
        raise ValueError(f"spatial dims must be >= 2, got {h} x {w}")
    h2, w2 = h // 2, w // 2
    cropped = x[:, : 2 * h2, : 2 * w2]
    blocks = cropped.reshape(x.shape[0], h2, 2, w2, 2)
    return blocks.max(axis=(2, 4))
