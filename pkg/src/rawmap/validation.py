"""Input checks shared by the estimators."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array


def check_rgbs(rgbs, n: int | None = None) -> np.ndarray:
    """``(n, 3)`` array of nonnegative, not-all-zero RGB triplets."""
    if hasattr(rgbs, "rgb"):
        rgbs = [rgbs.rgb]
    elif isinstance(rgbs, (list, tuple)):
        rgbs = [getattr(r, "rgb", r) for r in rgbs]
    arr = check_array(np.atleast_2d(np.asarray(rgbs, dtype=np.float64)))
    if arr.shape[1] != 3:
        raise ValueError(f"expected RGB triplets, got shape {arr.shape}")
    if np.any(arr < 0) or np.any(arr.max(axis=1) <= 0):
        raise ValueError("illuminant RGBs must be nonnegative and nonzero")
    if n is not None and len(arr) != n:
        raise ValueError(f"expected {n} illuminants, got {len(arr)}")
    return arr


def check_images(images) -> np.ndarray:
    """Stack of pixel-aligned images as ``(K, N, 3)``."""
    arr = np.asarray([getattr(im, "data", im) for im in images], dtype=np.float64)
    if arr.ndim == 4:
        arr = arr.reshape(arr.shape[0], -1, arr.shape[-1])
    if arr.ndim != 3 or arr.shape[-1] != 3:
        raise ValueError(f"expected (K, H, W, 3) or (K, N, 3) images, got {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError("image samples must be finite and nonnegative")
    return arr


def check_chart_samples(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 3 or a.shape != b.shape or a.shape[-1] != 3:
        raise ValueError("chart samples must be matching (K, P, 3) arrays")
    if a.shape[1] < 3:
        raise ValueError("need at least 3 chart samples per illuminant")
    return a, b
