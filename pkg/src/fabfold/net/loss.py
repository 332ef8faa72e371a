"""Binary cross entropy in logit space (sigmoid fused for stability)."""
from __future__ import annotations

import numpy as np

from .model import sigmoid


def bce_loss(logits: np.ndarray, target: np.ndarray, reduction: str = "mean"):
    """Mean BCE over all elements; returns (loss, grad_wrt_logits).

    loss_i = max(z,0) - z*t + log(1 + exp(-|z|)); grad_i = (sigmoid(z) - t)/N.
    """
    if logits.shape != target.shape:
        raise ValueError(f"shape mismatch: logits {logits.shape} vs target {target.shape}")
    if target.min() < 0.0 or target.max() > 1.0:
        raise ValueError("target values must lie in [0, 1]")
    if reduction != "mean":
        raise ValueError(f"unsupported reduction {reduction!r}")
    z = logits
    per_elem = np.maximum(z, 0) - z * target + np.log1p(np.exp(-np.abs(z)))
    n = z.size
    loss = float(per_elem.sum() / n)
    grad = ((sigmoid(z) - target) / n).astype(logits.dtype)
    return loss, grad
