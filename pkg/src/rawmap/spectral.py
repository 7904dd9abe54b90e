"""Spectral image formation: SPDs, reflectances, sensitivities, rendering.

Everything is sampled on a fixed 380-700 nm grid with 5 nm spacing and
integrated with the rectangular rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .color import Illuminant, RawImage

WAVELENGTHS = np.arange(380, 701, 5, dtype=np.float64)
N_BANDS = len(WAVELENGTHS)
STEP_NM = 5.0
KINDS = ("spd", "sensitivity", "reflectance")

_H = 6.62607015e-34
_C = 2.99792458e8
_KB = 1.380649e-23


class SpectralError(ValueError):
    pass


@dataclass
class SpectralCurve:
    values: np.ndarray
    kind: str
    id: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (N_BANDS,):
            raise SpectralError(f"curve needs {N_BANDS} samples, got {v.shape}")
        if self.kind not in KINDS:
            raise SpectralError(f"unknown curve kind {self.kind!r}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise SpectralError("curve samples must be finite and nonnegative")
        if self.kind == "reflectance" and np.any(v > 1):
            raise SpectralError("reflectance samples must be <= 1")
        self.values = v

    def power(self) -> float:
        return float(self.values.sum() * STEP_NM)


@dataclass
class CameraModel:
    id: str
    sensitivities: np.ndarray  # (3, N_BANDS), rows R, G, B
    black_level: int = 512
    white_level: int = 16383
    downscale_factor: int = 1

    def __post_init__(self):
        s = np.asarray(self.sensitivities, dtype=np.float64)
        if s.shape != (3, N_BANDS):
            raise SpectralError("sensitivities must be (3, n_bands)")
        if np.any(s < 0) or np.any(s.sum(axis=1) <= 0):
            raise SpectralError("each sensitivity needs positive area")
        if self.black_level >= self.white_level:
            raise SpectralError("black level must be below white level")
        if self.downscale_factor < 1:
            raise SpectralError("downscale factor must be positive")
        self.sensitivities = s

    def curves(self) -> list[SpectralCurve]:
        return [SpectralCurve(s, "sensitivity", f"{self.id}_{c}")
                for s, c in zip(self.sensitivities, "RGB")]


@dataclass
class SpectralScene:
    """Reflectance scene stored as a palette plus per-pixel indices.

    ``shading`` is an optional per-pixel geometric factor in (0, 1] that
    scales radiance without changing its spectrum.
    """

    palette: np.ndarray  # (P, N_BANDS)
    index: np.ndarray  # (H, W) ints into palette
    palette_ids: list = field(default_factory=list)
    shading: np.ndarray | None = None
    id: str = ""

    def __post_init__(self):
        self.palette = np.atleast_2d(np.asarray(self.palette, dtype=np.float64))
        self.index = np.asarray(self.index, dtype=np.int64)
        if self.palette.shape[1] != N_BANDS:
            raise SpectralError("palette curves have the wrong length")
        if np.any(self.palette < 0) or np.any(self.palette > 1):
            raise SpectralError("reflectances must lie in [0, 1]")
        if self.index.ndim != 2:
            raise SpectralError("index map must be 2-D")
        if self.index.size and (self.index.min() < 0 or self.index.max() >= len(self.palette)):
            raise SpectralError("pixel index outside palette")
        if not self.palette_ids:
            self.palette_ids = [f"{self.id}_r{i}" for i in range(len(self.palette))]
        if self.shading is not None:
            self.shading = np.asarray(self.shading, dtype=np.float64)
            if self.shading.shape != self.index.shape:
                raise SpectralError("shading must match the index map")

    @property
    def height(self) -> int:
        return self.index.shape[0]

    @property
    def width(self) -> int:
        return self.index.shape[1]


def _values(curve, kind=None) -> np.ndarray:
    if isinstance(curve, SpectralCurve):
        if kind is not None and curve.kind != kind:
            raise SpectralError(f"expected a {kind} curve, got {curve.kind}")
        return curve.values
    return np.asarray(curve, dtype=np.float64)


def palette_response(palette: np.ndarray, spd, cam: CameraModel) -> np.ndarray:
    """Unclipped unit-exposure RGB of each palette reflectance, ``(P, 3)``."""
    p = _values(spd, "spd")
    return (np.atleast_2d(palette) * p) @ cam.sensitivities.T * STEP_NM


def render_linear(scene: SpectralScene, spd, cam: CameraModel, exposure: float = 1.0) -> np.ndarray:
    """Pre-clip ``(H, W, 3)`` sensor response."""
    rgb = palette_response(scene.palette, spd, cam)[scene.index] * exposure
    if scene.shading is not None:
        rgb = rgb * scene.shading[:, :, None]
    return rgb


def auto_exposure(linear: np.ndarray, target: float = 0.9, percentile: float = 99.0) -> float:
    """Gain putting the given percentile of unit-exposure green at ``target``."""
    g = np.percentile(linear[..., 1], percentile)
    if g <= 0:
        raise SpectralError("scene is black under this illuminant")
    return float(target / g)


def render(scene: SpectralScene, spd, cam: CameraModel, exposure: float | None = None,
           clip: bool = True) -> RawImage:
    """Render ``scene`` under ``spd``; ``exposure=None`` picks it automatically."""
    if isinstance(spd, SpectralCurve) and spd.kind != "spd":
        raise SpectralError(f"illumination must be an spd curve, got {spd.kind}")
    lin = render_linear(scene, spd, cam)
    if exposure is None:
        exposure = auto_exposure(lin)
    elif exposure <= 0:
        raise SpectralError("exposure must be positive")
    out = lin * exposure
    if clip:
        out = np.clip(out, 0.0, 1.0)
    spd_id = spd.id if isinstance(spd, SpectralCurve) else ""
    return RawImage(out, camera_id=cam.id, illuminant_id=spd_id,
                    meta={"exposure": float(exposure), "scene_id": scene.id})


def illuminant_rgb(spd, cam: CameraModel) -> Illuminant:
    p = _values(spd, "spd")
    if p.sum() <= 0:
        raise SpectralError("SPD has zero power")
    rgb = cam.sensitivities @ p * STEP_NM
    if rgb.max() <= 0:
        raise SpectralError("camera does not respond to this SPD")
    spd_id = spd.id if isinstance(spd, SpectralCurve) else ""
    return Illuminant(tuple(rgb / rgb.max()), spd_id)


def blackbody_spd(temperature_k: float, id: str | None = None) -> SpectralCurve:
    if not 1500 <= temperature_k <= 20000:
        raise SpectralError("temperature must lie in [1500, 20000] K")
    lam = WAVELENGTHS * 1e-9
    radiance = lam ** -5 / np.expm1(_H * _C / (lam * _KB * temperature_k))
    return SpectralCurve(radiance / radiance.max(), "spd",
                         id if id is not None else f"bb{temperature_k:.0f}")


def led_spd(peaks, id: str = "led") -> SpectralCurve:
    """Sum of Gaussian emission peaks ``(center_nm, width_nm, amplitude)``."""
    peaks = list(peaks)
    if not peaks:
        raise SpectralError("need at least one LED peak")
    total = np.zeros(N_BANDS)
    for center, width, amp in peaks:
        if not 380 <= center <= 700 or width <= 0 or amp <= 0:
            raise SpectralError(f"invalid LED peak {(center, width, amp)}")
        total += amp * np.exp(-0.5 * ((WAVELENGTHS - center) / width) ** 2)
    return SpectralCurve(total / total.max(), "spd", id)


def normalize_power(spd: SpectralCurve, target: float) -> SpectralCurve:
    power = spd.power()
    if power <= 0:
        raise SpectralError("SPD has zero power")
    if target <= 0:
        raise SpectralError("target power must be positive")
    return SpectralCurve(spd.values * (target / power), spd.kind, spd.id)


def gaussian_curve(center: float, sigma: float) -> np.ndarray:
    return np.exp(-0.5 * ((WAVELENGTHS - center) / sigma) ** 2)


def delta_curve(wavelength: float, value: float = 1.0) -> np.ndarray:
    out = np.zeros(N_BANDS)
    idx = int(np.argmin(np.abs(WAVELENGTHS - wavelength)))
    out[idx] = value
    return out


# --- camera families ------------------------------------------------------

def gaussian_camera(id: str, centers, sigmas, secondary=None, **kwargs) -> CameraModel:
    """Camera whose channels are Gaussians; ``secondary`` adds small lobes
    as ``{channel: (center, sigma, amplitude)}``."""
    if np.isscalar(sigmas):
        sigmas = [sigmas] * 3
    sens = np.stack([gaussian_curve(c, s) for c, s in zip(centers, sigmas)])
    for ch, (c, s, a) in (secondary or {}).items():
        sens[ch] += a * gaussian_curve(c, s)
    return CameraModel(id, sens, **kwargs)


def delta_camera(id: str = "delta", wavelengths=(610, 540, 450), **kwargs) -> CameraModel:
    return CameraModel(id, np.stack([delta_curve(w) for w in wavelengths]), **kwargs)


def broadband_camera_a(**kwargs) -> CameraModel:
    return gaussian_camera("camA", (600, 535, 460), (40, 40, 38),
                           secondary={0: (440, 25, 0.08)}, **kwargs)


def broadband_camera_b(**kwargs) -> CameraModel:
    return gaussian_camera("camB", (615, 545, 450), (36, 42, 32),
                           secondary={0: (460, 30, 0.05), 2: (590, 30, 0.04)},
                           **kwargs)


def narrowband_camera(**kwargs) -> CameraModel:
    return gaussian_camera("camN", (610, 540, 455), 15, **kwargs)


STOCK_CAMERAS = {
    "camA": broadband_camera_a,
    "camB": broadband_camera_b,
    "camN": narrowband_camera,
    "delta": delta_camera,
}


def stock_camera(name: str) -> CameraModel:
    try:
        return STOCK_CAMERAS[name]()
    except KeyError:
        raise SpectralError(f"unknown camera {name!r}; choose from {sorted(STOCK_CAMERAS)}") from None


# --- random generators ----------------------------------------------------

def random_reflectance(rng: np.random.Generator) -> np.ndarray:
    """Base level plus 1-3 smooth Gaussian bumps, clamped to [0, 1]."""
    r = np.full(N_BANDS, rng.uniform(0.02, 0.25))
    for _ in range(rng.integers(1, 4)):
        center = rng.uniform(380, 700)
        width = rng.uniform(20, 90)
        r += rng.uniform(0.15, 0.8) * gaussian_curve(center, width)
    return np.clip(r, 0.0, 1.0)


def flat_reflectance(level: float) -> np.ndarray:
    return np.full(N_BANDS, float(level))


LIGHT_FAMILIES = ("mixed", "blackbody", "led")


def random_spd(rng: np.random.Generator, id: str, family: str = "mixed") -> SpectralCurve:
    """Blackbody (log-uniform 2500-10000 K) or a 2-4 peak LED mixture.

    ``family="mixed"`` picks either with probability 1/2.
    """
    if family not in LIGHT_FAMILIES:
        raise SpectralError(f"unknown light family {family!r}")
    if family == "blackbody" or (family == "mixed" and rng.random() < 0.5):
        t = float(np.exp(rng.uniform(np.log(2500), np.log(10000))))
        spd = blackbody_spd(t, id=id)
    else:
        n = int(rng.integers(2, 5))
        peaks = [(rng.uniform(400, 680), rng.uniform(30, 80), rng.uniform(0.2, 1.0))
                 for _ in range(n)]
        # white-ish base keeps every channel lit
        peaks.append((rng.uniform(500, 600), 120.0, rng.uniform(0.1, 0.4)))
        spd = led_spd(peaks, id=id)
    return spd


def random_shading(rng: np.random.Generator, height: int, width: int, lo: float = 0.35) -> np.ndarray:
    """Smooth separable shading field in [lo, 1]."""
    y = np.linspace(0, 1, height)[:, None]
    x = np.linspace(0, 1, width)[None, :]
    a, b, c, d = rng.uniform(0, 2 * np.pi, 4)
    f = 0.5 + 0.25 * np.sin(2 * np.pi * x + a) * np.cos(np.pi * y + b) \
        + 0.25 * np.sin(np.pi * x * 1.5 + c + np.pi * y * 2 + d)
    return lo + (1 - lo) * (f - f.min()) / max(f.max() - f.min(), 1e-12)


def patch_scene(palette: np.ndarray, rows: int, cols: int, patch: int,
                rng: np.random.Generator | None = None, id: str = "",
                palette_ids=None, shading: bool = True) -> SpectralScene:
    """Grid of ``rows x cols`` square patches, one palette entry each."""
    palette = np.atleast_2d(palette)
    if len(palette) < rows * cols:
        raise SpectralError("palette smaller than the patch grid")
    grid = np.arange(rows * cols).reshape(rows, cols)
    index = np.kron(grid, np.ones((patch, patch), dtype=np.int64))
    shade = None
    if shading and rng is not None:
        shade = random_shading(rng, rows * patch, cols * patch)
    return SpectralScene(palette, index, palette_ids=list(palette_ids or []),
                         shading=shade, id=id)
