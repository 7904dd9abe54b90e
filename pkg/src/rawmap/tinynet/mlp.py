"""Tiny MLP that predicts a unit-norm 3x3 transform, with analytic gradients.

Layers are stored PyTorch-style: ``W`` has shape ``(out, in)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..color import COS_EPS

RAD2DEG = 180.0 / np.pi
NORM_FLOOR = 1e-12
MODES = {"illum": 6, "sensor": 3}


class DegenerateOutputError(ArithmeticError):
    pass


class NumericError(ArithmeticError):
    pass


@dataclass
class MlpModel:
    mode: str
    input_dim: int
    hidden_dims: tuple
    weights: list
    biases: list
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def params(self) -> list:
        """Interleaved ``[W0, b0, W1, b1, ...]``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.n_params:
            raise ValueError("flat parameter vector has the wrong size")
        i = 0
        for w, b in zip(self.weights, self.biases):
            for p in (w, b):
                p[...] = flat[i:i + p.size].reshape(p.shape)
                i += p.size

    def copy(self) -> "MlpModel":
        return MlpModel(self.mode, self.input_dim, tuple(self.hidden_dims),
                        [w.copy() for w in self.weights],
                        [b.copy() for b in self.biases], self.seed, dict(self.meta))


def param_count(input_dim: int, hidden_dims=(32, 32), output_dim: int = 9) -> int:
    dims = [input_dim, *hidden_dims, output_dim]
    return sum((a + 1) * b for a, b in zip(dims[:-1], dims[1:]))


def init_model(mode: str = "illum", hidden_dims=(32, 32), seed: int = 0) -> MlpModel:
    """Hidden layers uniform in +-sqrt(1/fan_in); the output layer starts at
    zero weights with an identity bias, so the first prediction is I/sqrt(3)."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {sorted(MODES)}")
    input_dim = MODES[mode]
    rng = np.random.default_rng(seed)
    dims = [input_dim, *hidden_dims]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(1.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, fan_out))
    weights.append(np.zeros((9, dims[-1])))
    biases.append(np.eye(3).ravel())
    return MlpModel(mode, input_dim, tuple(hidden_dims), weights, biases, seed)


def encode_illum_input(src_rgb, dst_rgb) -> np.ndarray:
    """Concatenate source and target illuminants, each max-normalized."""
    s = np.atleast_2d(np.asarray(src_rgb, dtype=np.float64))
    d = np.atleast_2d(np.asarray(dst_rgb, dtype=np.float64))
    s = s / s.max(axis=1, keepdims=True)
    d = d / d.max(axis=1, keepdims=True)
    return np.concatenate([s, d], axis=1)


def encode_sensor_input(rgb) -> np.ndarray:
    x = np.atleast_2d(np.asarray(rgb, dtype=np.float64))
    return x / x.max(axis=1, keepdims=True)


def _forward_cache(model: MlpModel, x: np.ndarray):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.input_dim:
        raise ValueError(f"input has {x.shape[1]} features, model expects {model.input_dim}")
    acts, pre = [x], []
    a = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        z = a @ w.T + b
        pre.append(z)
        a = np.maximum(z, 0.0)
        acts.append(a)
    raw = (a @ model.weights[-1].T + model.biases[-1]).reshape(-1, 3, 3)
    norm = np.sqrt(np.sum(raw ** 2, axis=(1, 2)))
    if np.any(norm <= 0):
        raise DegenerateOutputError("network produced an all-zero matrix")
    return acts, pre, raw, norm


def forward_batch(model: MlpModel, x) -> np.ndarray:
    """``(B, input_dim) -> (B, 3, 3)`` unit Frobenius-norm transforms."""
    _, _, raw, norm = _forward_cache(model, x)
    return raw / norm[:, None, None]


def forward(model: MlpModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("forward takes a single input vector")
    return forward_batch(model, x[None])[0]


def _angles(pred_t: np.ndarray, src: np.ndarray, dst: np.ndarray):
    p = src @ np.swapaxes(pred_t, 1, 2)
    pn = np.maximum(np.sqrt(np.einsum("bni,bni->bn", p, p)), NORM_FLOOR)
    dn = np.maximum(np.sqrt(np.einsum("bni,bni->bn", dst, dst)), NORM_FLOOR)
    cos = np.einsum("bni,bni->bn", p, dst) / (pn * dn)
    return p, pn, dn, cos, np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))


def loss_angular(pred, src, dst) -> float:
    """Mean angle between ``pred @ src_i`` and ``dst_i`` in degrees."""
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    if len(src) == 0 or src.shape != dst.shape:
        raise ValueError("need a nonempty set of corresponding samples")
    *_, ang = _angles(np.asarray(pred, dtype=np.float64)[None], src[None], dst[None])
    return float(ang.mean())


def loss_and_grad(model: MlpModel, x, src, dst):
    """Mean batch angular loss and its gradient w.r.t. every parameter.

    ``x`` is ``(B, input_dim)``; ``src`` and ``dst`` are ``(B, n, 3)``.
    Returns ``(loss, grads)`` with ``grads`` ordered like ``model.params()``.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    acts, pre, raw, norm = _forward_cache(model, x)
    bsz, n = src.shape[:2]
    if src.shape != (bsz, n, 3) or dst.shape != src.shape or raw.shape[0] != bsz:
        raise ValueError("batch shapes do not line up")
    t = raw / norm[:, None, None]
    p, pn, dn, cos, ang = _angles(t, src, dst)
    loss = float(ang.mean())
    if not np.isfinite(loss):
        raise NumericError("non-finite loss")

    inside = (cos > -1.0 + COS_EPS) & (cos < 1.0 - COS_EPS)
    safe = np.where(inside, cos, 0.0)
    g_cos = np.where(inside, -RAD2DEG / np.sqrt(1.0 - safe ** 2), 0.0) / (bsz * n)
    g_p = (g_cos / (pn * dn))[..., None] * dst - (g_cos * cos / pn ** 2)[..., None] * p
    g_t = np.swapaxes(g_p, 1, 2) @ src
    g_raw = (g_t - t * np.sum(g_t * t, axis=(1, 2))[:, None, None]) / norm[:, None, None]

    grads = [None] * (2 * len(model.weights))
    g = g_raw.reshape(bsz, 9)
    for layer in range(len(model.weights) - 1, -1, -1):
        grads[2 * layer] = g.T @ acts[layer]
        grads[2 * layer + 1] = g.sum(axis=0)
        if layer:
            g = (g @ model.weights[layer]) * (pre[layer - 1] > 0)
    if not all(np.all(np.isfinite(gr)) for gr in grads):
        raise NumericError("non-finite gradient")
    return loss, grads


def backward(model: MlpModel, x, src, dst) -> np.ndarray:
    """Flattened gradient of the mean batch loss, same order as ``get_flat``."""
    _, grads = loss_and_grad(model, x, src, dst)
    return np.concatenate([g.ravel() for g in grads])
