"""Central finite-difference checks of autodiff gradients."""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import BranchLog, Tensor, backward, branch_scope

MIN_SCALE = 1e-4


def relative_error(analytic: np.ndarray, numeric: np.ndarray, min_scale: float = MIN_SCALE) -> float:
    """Normwise relative error ||a - n||_inf / max(||a||_inf, ||n||_inf, min_scale).

    Below ``min_scale`` the comparison is effectively absolute, so gradients
    that are zero by construction are not judged against rounding noise.
    """
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), min_scale)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def numeric_grad(fn: Callable[[], Tensor], tensor: Tensor, h: float = 1e-4,
                 indices: Optional[Sequence[int]] = None, branches: Optional[BranchLog] = None) -> np.ndarray:
    """d fn() / d tensor by central differences at the flat ``indices`` (default all).

    With ``branches`` every evaluation replays the recorded piecewise choices.
    """
    def evaluate() -> float:
        with branch_scope(branches, replay=True):
            return float(fn().data)

    flat = tensor.data.reshape(-1)
    indices = range(flat.size) if indices is None else indices
    out = np.zeros(len(indices))
    for j, i in enumerate(indices):
        orig = flat[i]
        flat[i] = orig + h
        plus = evaluate()
        flat[i] = orig - h
        minus = evaluate()
        flat[i] = orig
        out[j] = (plus - minus) / (2 * h)
    return out


def check_gradients(fn: Callable[[], Tensor], tensors: Sequence[Tensor], h: float = 1e-4,
                    max_coords: Optional[int] = None, seed: int = 0, freeze_branches: bool = False,
                    min_scale: float = MIN_SCALE) -> float:
    """Largest relative error between autodiff and finite differences.

    ``fn`` must rebuild its graph from the current contents of ``tensors``
    and return a scalar.  With ``max_coords`` only that many randomly chosen
    coordinates per tensor are probed.  ``freeze_branches`` holds ReLU masks
    and max-pool winners at their values for the unperturbed inputs, so a
    probe never straddles a kink.
    """
    rng = np.random.default_rng(seed)
    log = BranchLog() if freeze_branches else None
    for t in tensors:
        t.grad = None
        t.requires_grad = True
    with branch_scope(log):
        loss = fn()
    backward(loss)
    worst = 0.0
    for t in tensors:
        analytic = (t.grad if t.grad is not None else np.zeros_like(t.data)).reshape(-1)
        if max_coords is not None and t.size > max_coords:
            idx = np.sort(rng.choice(t.size, size=max_coords, replace=False))
        else:
            idx = np.arange(t.size)
        numeric = numeric_grad(fn, t, h, idx, log)
        worst = max(worst, relative_error(analytic[idx], numeric, min_scale))
    return worst
