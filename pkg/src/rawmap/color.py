"""Core color types and operations in camera RAW space.

Images are stored channel-last as ``(height, width, 3)`` float arrays for
computation; the planar on-disk layout is handled by :mod:`rawmap.io`.
Transforms act on column vectors, so a pixel ``p`` maps to ``T @ p``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

COS_EPS = 1e-7
G_EPS = 1e-9
SATURATION_LOW = 0.01
SATURATION_HIGH = 0.99
NEUTRAL_THRESHOLD_DEG = 3.5


class ColorError(ValueError):
    """Base class for invalid color inputs."""


class DomainError(ColorError):
    pass


class DegenerateIlluminantError(ColorError):
    pass


class ShapeError(ColorError):
    pass


class SingularSystemError(ColorError):
    pass


@dataclass
class RawImage:
    """Normalized RAW image, white level mapped to 1.0.

    ``data`` has shape ``(height, width, channels)``; ``channels`` is 1 for a
    mosaiced frame and 3 once demosaiced.
    """

    data: np.ndarray
    camera_id: str = ""
    illuminant_id: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ShapeError(f"expected (H, W, 1|3) image, got {data.shape}")
        if not np.all(np.isfinite(data)) or np.any(data < 0):
            raise ColorError("image samples must be finite and nonnegative")
        self.data = data

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def pixels(self) -> np.ndarray:
        """Flattened ``(N, channels)`` view in row-major pixel order."""
        return self.data.reshape(-1, self.channels)


@dataclass(frozen=True)
class Illuminant:
    rgb: tuple
    id: str = ""

    def __post_init__(self):
        rgb = tuple(float(v) for v in self.rgb)
        if len(rgb) != 3:
            raise ColorError("illuminant needs exactly 3 channels")
        if not all(np.isfinite(rgb)) or min(rgb) < 0 or max(rgb) <= 0:
            raise DegenerateIlluminantError(f"invalid illuminant rgb {rgb}")
        object.__setattr__(self, "rgb", rgb)

    def as_array(self) -> np.ndarray:
        return np.array(self.rgb)


@dataclass(frozen=True)
class Chromaticity:
    rg: float
    bg: float

    def as_array(self) -> np.ndarray:
        return np.array([self.rg, self.bg])


def _as_rgb(v) -> np.ndarray:
    if isinstance(v, Illuminant):
        return v.as_array()
    return np.asarray(v, dtype=np.float64)


def cosine_to_degrees(cos: np.ndarray) -> np.ndarray:
    # Only rounding error is clipped here; COS_EPS bounds the region where
    # gradients are taken (see tinynet.mlp), not the reported value.
    return np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))


def angular_error(a, b) -> float | np.ndarray:
    """Angle in degrees between RGB rays.

    Accepts single vectors or broadcastable ``(..., 3)`` arrays. Raises
    :class:`DomainError` if any vector has zero norm.
    """
    a = _as_rgb(a)
    b = _as_rgb(b)
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    if np.any(na <= 0) or np.any(nb <= 0):
        raise DomainError("angular error undefined for zero-norm vectors")
    cos = np.sum(a * b, axis=-1) / (na * nb)
    err = cosine_to_degrees(cos)
    return float(err) if np.ndim(err) == 0 else err


def angular_error_map(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Per-pixel angular error; NaN where either pixel has zero norm."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    na = np.linalg.norm(pred, axis=-1)
    nb = np.linalg.norm(target, axis=-1)
    ok = (na > 0) & (nb > 0)
    cos = np.zeros(na.shape)
    np.divide(np.sum(pred * target, axis=-1), na * nb, out=cos, where=ok)
    return np.where(ok, cosine_to_degrees(cos), np.nan)


def to_chromaticity(illum) -> Chromaticity:
    r, g, b = _as_rgb(illum)
    if g <= G_EPS:
        raise DegenerateIlluminantError(f"green channel {g} too small")
    return Chromaticity(float(r / g), float(b / g))


def chromaticities(rgbs) -> np.ndarray:
    """Vectorized ``(n, 3) -> (n, 2)`` [R/G, B/G] conversion."""
    rgbs = np.atleast_2d(np.asarray(rgbs, dtype=np.float64))
    g = rgbs[:, 1]
    if np.any(g <= G_EPS):
        raise DegenerateIlluminantError("green channel too small")
    return np.stack([rgbs[:, 0] / g, rgbs[:, 2] / g], axis=1)


def check_transform(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3):
        raise ShapeError(f"transform must be 3x3, got {m.shape}")
    if not np.all(np.isfinite(m)) or np.linalg.norm(m) <= 0:
        raise ColorError("transform must be finite with nonzero norm")
    return m


def normalize_transform(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    return m / np.linalg.norm(m)


def apply_transform(t, img: RawImage) -> RawImage:
    t = check_transform(t)
    if img.channels != 3:
        raise ShapeError("apply_transform needs a demosaiced 3-channel image")
    out = np.maximum(img.data @ t.T, 0.0)
    return replace(img, data=out, meta=dict(img.meta))


def transform_pixels(t, pixels: np.ndarray) -> np.ndarray:
    """Apply ``t`` to an ``(..., 3)`` array with the same negative clamp."""
    return np.maximum(np.asarray(pixels) @ np.asarray(t).T, 0.0)


def diagonal_transform(src, dst) -> np.ndarray:
    s = _as_rgb(src)
    d = _as_rgb(dst)
    if np.any(s <= 0):
        raise ZeroDivisionError("source illuminant has a zero channel")
    return np.diag(d / s)


def fit_transform_lsq(src_pixels, dst_pixels, normalize: bool = True) -> np.ndarray:
    """Least-squares 3x3 ``T`` minimizing ``sum ||T s_i - d_i||^2``."""
    s = np.asarray(src_pixels, dtype=np.float64).reshape(-1, 3)
    d = np.asarray(dst_pixels, dtype=np.float64).reshape(-1, 3)
    if s.shape != d.shape:
        raise ShapeError("source and target sample counts differ")
    if len(s) < 3:
        raise SingularSystemError("need at least 3 samples")
    gram = s.T @ s
    if np.linalg.matrix_rank(gram) < 3:
        raise SingularSystemError("source samples are rank deficient")
    # T^T = (S^T S)^{-1} S^T D
    t = np.linalg.solve(gram, s.T @ d).T
    return normalize_transform(t) if normalize else t


def saturation_mask(target: RawImage) -> np.ndarray:
    """Boolean ``(H, W)`` mask; True where the pixel is usable."""
    if target.channels != 3:
        raise ShapeError("saturation mask needs a 3-channel image")
    d = target.data
    return ~np.any((d < SATURATION_LOW) | (d > SATURATION_HIGH), axis=-1)


def neutral_mask(target: RawImage, target_illum) -> np.ndarray:
    """Boolean ``(H, W)`` mask; True where the pixel is NOT neutral.

    Zero-norm pixels count as neutral.
    """
    if target.channels != 3:
        raise ShapeError("neutral mask needs a 3-channel image")
    err = angular_error_map(target.data, _as_rgb(target_illum))
    return np.nan_to_num(err, nan=0.0) >= NEUTRAL_THRESHOLD_DEG
