"""KNN interpolation over precomputed least-squares transform banks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .color import chromaticities, fit_transform_lsq, normalize_transform, to_chromaticity
from .tinynet.train import valid_pixels

VARIANTS = ("1NN-1NN", "1NN-KNN", "KNN-1NN", "KNN-D65-KNN")
EXACT_MATCH = 1e-12


class BankError(ValueError):
    pass


def _query_chroma(q) -> np.ndarray:
    if hasattr(q, "rg"):
        return q.as_array()
    q = np.asarray(getattr(q, "rgb", q), dtype=np.float64)
    if q.shape == (2,):
        return q
    return to_chromaticity(q).as_array()


def inverse_distance_weights(dists) -> np.ndarray:
    """Normalized 1/d weights; an exact hit takes all the weight."""
    d = np.asarray(dists, dtype=np.float64)
    hit = d < EXACT_MATCH
    if hit.any():
        w = np.zeros_like(d)
        w[np.argmax(hit)] = 1.0
        return w
    w = 1.0 / d
    return w / w.sum()


def knn_indices(chroma: np.ndarray, query, k: int):
    """Indices and inverse-distance weights of the ``k`` nearest chromaticities."""
    if len(chroma) == 0:
        raise BankError("empty bank")
    if not 1 <= k <= len(chroma):
        raise BankError(f"k={k} outside [1, {len(chroma)}]")
    d = np.linalg.norm(chroma - _query_chroma(query), axis=1)
    idx = np.argsort(d, kind="stable")[:k]
    return idx, inverse_distance_weights(d[idx])


@dataclass
class TransformBank:
    """Transforms between every ordered pair of training illuminants.

    ``transforms[u, v]`` maps an image under light ``u`` to light ``v``.
    """

    ids: list
    rgbs: np.ndarray
    transforms: np.ndarray  # (K, K, 3, 3)

    def __post_init__(self):
        self.rgbs = np.asarray(self.rgbs, dtype=np.float64)
        self.transforms = np.asarray(self.transforms, dtype=np.float64)
        k = len(self.ids)
        if self.rgbs.shape != (k, 3) or self.transforms.shape != (k, k, 3, 3):
            raise BankError("bank arrays do not match the illuminant list")
        self.chroma = chromaticities(self.rgbs) if k else np.zeros((0, 2))

    def index(self, illum_id: str) -> int:
        try:
            return self.ids.index(illum_id)
        except ValueError:
            raise BankError(f"{illum_id!r} not in bank") from None

    def transform(self, u: str, v: str) -> np.ndarray:
        return self.transforms[self.index(u), self.index(v)]

    def to_dict(self) -> dict:
        return {"kind": "illum",
                "illuminants": [{"id": i, "rgb": list(map(float, r))}
                                for i, r in zip(self.ids, self.rgbs)],
                "transforms": [{"src": self.ids[u], "dst": self.ids[v],
                                "m": self.transforms[u, v].ravel().tolist()}
                               for u in range(len(self.ids)) for v in range(len(self.ids))]}

    @classmethod
    def from_dict(cls, d: dict) -> "TransformBank":
        ids = [e["id"] for e in d["illuminants"]]
        rgbs = [e["rgb"] for e in d["illuminants"]]
        pos = {i: n for n, i in enumerate(ids)}
        t = np.full((len(ids), len(ids), 3, 3), np.nan)
        for e in d["transforms"]:
            t[pos[e["src"]], pos[e["dst"]]] = np.reshape(e["m"], (3, 3))
        if np.isnan(t).any():
            raise BankError("bank is missing ordered pairs")
        return cls(ids, rgbs, t)


def build_bank(images, rgbs, ids) -> TransformBank:
    """Least-squares fit for every ordered pair of pixel-aligned images,
    using pixels unsaturated in both."""
    images = np.asarray(images, dtype=np.float64).reshape(len(ids), -1, 3)
    valid = valid_pixels(images)
    k = len(ids)
    t = np.empty((k, k, 3, 3))
    for u in range(k):
        for v in range(k):
            both = valid[u] & valid[v]
            t[u, v] = fit_transform_lsq(images[u, both], images[v, both])
    return TransformBank(list(ids), rgbs, t)


def knn_lookup(bank, query, k: int) -> list:
    idx, w = knn_indices(bank.chroma, query, k)
    return [(bank.ids[i], float(wi)) for i, wi in zip(idx, w)]


def _blend(mats: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return np.tensordot(weights, mats, axes=1)


def knn_transform(bank: TransformBank, src, dst, variant: str = "KNN-1NN", k: int = 2,
                  anchor: str = "D65") -> np.ndarray:
    """Interpolated ``src -> dst`` transform, unit Frobenius norm."""
    if variant not in VARIANTS:
        raise BankError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    su, wu = knn_indices(bank.chroma, src, 1 if variant.startswith("1NN") else k)
    sv, wv = knn_indices(bank.chroma, dst, 1 if variant.endswith("1NN") else k)
    t = bank.transforms
    if variant == "KNN-D65-KNN":
        a = bank.index(anchor)
        to_anchor = _blend(t[su, a], wu)
        from_anchor = _blend(t[a, sv], wv)
        return normalize_transform(from_anchor @ to_anchor)
    if variant == "1NN-1NN":
        return t[su[0], sv[0]].copy()
    if variant == "1NN-KNN":
        return normalize_transform(_blend(t[su[0], sv], wv))
    return normalize_transform(_blend(t[su, sv[0]], wu))


@dataclass
class SensorBank:
    """Per-illuminant sensor A -> B transforms keyed by the light as seen by A."""

    ids: list
    rgbs: np.ndarray
    transforms: np.ndarray  # (K, 3, 3)

    def __post_init__(self):
        self.rgbs = np.asarray(self.rgbs, dtype=np.float64)
        self.transforms = np.asarray(self.transforms, dtype=np.float64)
        if self.transforms.shape != (len(self.ids), 3, 3):
            raise BankError("bank arrays do not match the illuminant list")
        self.chroma = chromaticities(self.rgbs)

    def to_dict(self) -> dict:
        return {"kind": "sensor",
                "illuminants": [{"id": i, "rgb": list(map(float, r))}
                                for i, r in zip(self.ids, self.rgbs)],
                "transforms": [{"illum": i, "m": m.ravel().tolist()}
                               for i, m in zip(self.ids, self.transforms)]}

    @classmethod
    def from_dict(cls, d: dict) -> "SensorBank":
        ms = {e["illum"]: e["m"] for e in d["transforms"]}
        ids = [e["id"] for e in d["illuminants"]]
        return cls(ids, [e["rgb"] for e in d["illuminants"]],
                   np.array([np.reshape(ms[i], (3, 3)) for i in ids]))


def build_sensor_bank(samples_a, samples_b, rgbs_a, ids) -> SensorBank:
    sa = np.asarray(samples_a, dtype=np.float64)
    sb = np.asarray(samples_b, dtype=np.float64)
    t = np.stack([fit_transform_lsq(a, b) for a, b in zip(sa, sb)])
    return SensorBank(list(ids), rgbs_a, t)


def sensor_knn_transform(bank: SensorBank, illum, k: int = 2) -> np.ndarray:
    idx, w = knn_indices(bank.chroma, illum, k)
    if k == 1:
        return bank.transforms[idx[0]].copy()
    return normalize_transform(_blend(bank.transforms[idx], w))


def bank_from_dict(d: dict):
    return SensorBank.from_dict(d) if d.get("kind") == "sensor" else TransformBank.from_dict(d)
