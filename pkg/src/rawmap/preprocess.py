"""RAW preprocessing: level correction, RGGB bilinear demosaic, box downsampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve

from .color import RawImage, ShapeError

_KERNEL_RB = np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]], dtype=np.float64)
_KERNEL_G = np.array([[0, 1, 0], [1, 4, 1], [0, 1, 0]], dtype=np.float64)


class LevelError(ValueError):
    pass


@dataclass
class MosaicImage:
    data: np.ndarray  # (H, W) DN samples
    black_level: float
    white_level: float
    cfa: str = "RGGB"
    camera_id: str = ""
    illuminant_id: str = ""

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ShapeError("mosaic must be a 2-D array")
        if self.black_level >= self.white_level:
            raise LevelError("white level must exceed black level")
        if self.cfa != "RGGB":
            raise ShapeError(f"unsupported CFA {self.cfa!r}")


def cfa_masks(height: int, width: int) -> np.ndarray:
    """Boolean ``(3, H, W)`` sample-location masks for RGGB."""
    yy, xx = np.mgrid[:height, :width]
    r = (yy % 2 == 0) & (xx % 2 == 0)
    b = (yy % 2 == 1) & (xx % 2 == 1)
    return np.stack([r, ~(r | b), b])


def level_correct(m: MosaicImage) -> MosaicImage:
    if m.white_level <= m.black_level:
        raise LevelError("white level must exceed black level")
    scaled = (m.data - m.black_level) / (m.white_level - m.black_level)
    return MosaicImage(np.clip(scaled, 0.0, 1.0), 0.0, 1.0, m.cfa,
                       m.camera_id, m.illuminant_id)


def demosaic_bilinear(m: MosaicImage) -> RawImage:
    h, w = m.data.shape
    if h % 2 or w % 2:
        raise ShapeError("RGGB mosaic needs even dimensions")
    masks = cfa_masks(h, w).astype(np.float64)
    out = np.empty((h, w, 3))
    for c, kernel in enumerate((_KERNEL_RB, _KERNEL_G, _KERNEL_RB)):
        num = convolve(m.data * masks[c], kernel, mode="constant")
        den = convolve(masks[c], kernel, mode="constant")
        out[:, :, c] = num / den
    return RawImage(np.maximum(out, 0.0), camera_id=m.camera_id,
                    illuminant_id=m.illuminant_id)


def downsample_bilinear(img: RawImage, factor: int) -> RawImage:
    """Integer decimation; aligned bilinear reduces to a block mean."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    h, w, c = img.data.shape
    if h % factor or w % factor:
        raise ShapeError(f"{w}x{h} image not divisible by {factor}")
    if factor == 1:
        return RawImage(img.data.copy(), img.camera_id, img.illuminant_id, dict(img.meta))
    blocks = img.data.reshape(h // factor, factor, w // factor, factor, c)
    return RawImage(blocks.mean(axis=(1, 3)), img.camera_id, img.illuminant_id,
                    dict(img.meta))


def mosaic(img: RawImage, black_level: float, white_level: float,
           quantize: bool = False) -> MosaicImage:
    """Sample a 3-channel normalized image through an RGGB CFA into DN."""
    if img.channels != 3:
        raise ShapeError("need a 3-channel image to mosaic")
    h, w = img.height, img.width
    if h % 2 or w % 2:
        raise ShapeError("RGGB mosaic needs even dimensions")
    masks = cfa_masks(h, w)
    plane = np.sum(np.moveaxis(img.data, 2, 0) * masks, axis=0)
    dn = black_level + np.clip(plane, 0.0, 1.0) * (white_level - black_level)
    if quantize:
        dn = np.round(dn)
    return MosaicImage(dn, black_level, white_level, "RGGB", img.camera_id,
                       img.illuminant_id)


def preprocess(m: MosaicImage, downscale: int = 1) -> RawImage:
    """Full chain: level correction, demosaic, then downsampling."""
    return downsample_bilinear(demosaic_bilinear(level_correct(m)), downscale)
