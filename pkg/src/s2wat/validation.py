"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

from __future__ import annotations

import numpy as np

from .errors import ContractError, InputTooSmallError, NumericError

MIN_IMAGE_EXTENT = 16


def check_image(img, name: str = "image", min_extent: int = MIN_IMAGE_EXTENT, dtype=np.float32) -> np.ndarray:
    """Return ``img`` as a finite ``[3, H, W]`` array of ``dtype``."""
    arr = np.asarray(getattr(img, "data", img))
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ContractError(f"{name} must have shape [3, H, W], got {arr.shape}")
    if not np.issubdtype(arr.dtype, np.number):
        raise ContractError(f"{name} must be numeric, got dtype {arr.dtype}")
    arr = arr.astype(dtype, copy=False)
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains NaN or Inf")
    if min(arr.shape[1:]) < min_extent:
        raise InputTooSmallError(f"{name} is {arr.shape[1]}x{arr.shape[2]}, minimum is {min_extent}x{min_extent}")
    return arr


def check_images(images, name: str = "images", **kwargs) -> list:
    """Validate a single image or a sequence of images; always returns a list."""
    if isinstance(images, np.ndarray) and images.ndim == 3:
        images = [images]
    if isinstance(images, np.ndarray) and images.ndim == 4:
        images = list(images)
    images = list(images)
    if not images:
        raise ContractError(f"{name} is empty")
    return [check_image(img, f"{name}[{i}]", **kwargs) for i, img in enumerate(images)]


def check_same_extents(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ContractError(f"extent mismatch: {a.shape} vs {b.shape}")
