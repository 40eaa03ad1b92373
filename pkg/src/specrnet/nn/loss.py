"""Binary cross-entropy on probabilities."""

from __future__ import annotations

import numpy as np

CLAMP = 1e-7


def bce_loss(p: np.ndarray, y: np.ndarray):
    """Mean BCE and its gradient with respect to `p`.

    `p` is clamped to [1e-7, 1 - 1e-7] before the logs; the gradient is the
    analytic form evaluated at the clamped value, which keeps it bounded when
    predictions saturate.
    """
    p = np.asarray(p)
    y = np.asarray(y, dtype=p.dtype)
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch: p {p.shape} vs y {y.shape}")
    pc = np.clip(p, CLAMP, 1.0 - CLAMP)
    n = p.size
    loss = float(-(y * np.log(pc) + (1.0 - y) * np.log1p(-pc)).mean())
    grad = ((pc - y) / (pc * (1.0 - pc)) / n).astype(p.dtype, copy=False)
    return loss, grad
