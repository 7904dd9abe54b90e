"""Training loops for the illumination- and sensor-mapping MLPs."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..color import chromaticities, saturation_mask, RawImage
from .mlp import (MlpModel, encode_illum_input, encode_sensor_input, forward_batch,
                  init_model, loss_and_grad, _angles)
from .optim import AdamState, adam_step, step_lr

log = logging.getLogger(__name__)

HARD_PAIR_FRACTION = 0.282


class SelectionError(ValueError):
    pass


@dataclass
class TrainConfig:
    lr0: float = 0.01
    decay: float = 0.5
    period: int = 50
    epochs: int = 400
    batch_size: int = 8
    pixels_per_pair: int | None = 1000
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    hard_pair_fraction: float = HARD_PAIR_FRACTION
    self_pairs: bool = True
    hidden_dims: tuple = (32, 32)
    val_every: int = 1
    select_best: bool = True

    @classmethod
    def for_mode(cls, mode: str, **overrides) -> "TrainConfig":
        base = {"lr0": 0.001} if mode == "sensor" else {}
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "betas" in d:
            d["betas"] = tuple(d["betas"])
        if "hidden_dims" in d:
            d["hidden_dims"] = tuple(d["hidden_dims"])
        return cls(**d)


@dataclass
class TrainLog:
    lr: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_mae: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_mae: float = float("nan")


def select_hard_pairs(illums, fraction: float = HARD_PAIR_FRACTION) -> list:
    """Ordered index pairs whose [R/G, B/G] distance is in the top ``fraction``.

    ``(u, v)`` and ``(v, u)`` are always kept or dropped together.
    """
    rgbs = np.array([getattr(l, "rgb", l) for l in illums], dtype=np.float64)
    if len(rgbs) < 2:
        raise SelectionError("need at least two illuminants")
    if not 0 < fraction <= 1:
        raise SelectionError("fraction must lie in (0, 1]")
    chroma = chromaticities(rgbs)
    iu, ju = np.triu_indices(len(rgbs), k=1)
    dist = np.linalg.norm(chroma[iu] - chroma[ju], axis=1)
    threshold = np.quantile(dist, 1.0 - fraction)
    keep = (dist >= threshold) & (dist > 0)
    if not keep.any():
        raise SelectionError("no illuminant pairs pass the distance threshold")
    pairs = []
    for i, j in zip(iu[keep], ju[keep]):
        pairs += [(int(i), int(j)), (int(j), int(i))]
    return sorted(pairs)


def _flatten_images(images) -> np.ndarray:
    arrs = [im.data if isinstance(im, RawImage) else np.asarray(im, dtype=np.float64)
            for im in images]
    return np.stack([a.reshape(-1, 3) for a in arrs])


def valid_pixels(images: np.ndarray) -> np.ndarray:
    """``(K, N)`` saturation-mask validity for flattened ``(K, N, 3)`` images."""
    return np.stack([saturation_mask(RawImage(im[:, None, :])).ravel() for im in images])


def masked_pair_mae(pred_t: np.ndarray, src: np.ndarray, dst: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Per-pair mean angle over valid pixels; ``pred_t`` is ``(B, 3, 3)``."""
    *_, ang = _angles(pred_t, src, dst)
    ang = np.where(valid, ang, 0.0)
    counts = valid.sum(axis=1)
    return ang.sum(axis=1) / np.maximum(counts, 1)


def _run(model: MlpModel, config: TrainConfig, n_items: int, make_batch, val_fn,
         rng: np.random.Generator):
    """Shared Adam loop. ``make_batch(ids, rng) -> (x, src, dst)``."""
    flat = model.get_flat()
    state = AdamState.zeros(flat.size)
    history = TrainLog()
    best = flat.copy()
    for epoch in range(config.epochs):
        lr = step_lr(epoch, config.lr0, config.decay, config.period)
        history.lr.append(lr)
        order = rng.permutation(n_items)
        losses = []
        for start in range(0, n_items, config.batch_size):
            ids = np.sort(order[start:start + config.batch_size])
            x, src, dst = make_batch(ids, rng)
            model.set_flat(flat)
            loss, grads = loss_and_grad(model, x, src, dst)
            grad = np.concatenate([g.ravel() for g in grads])
            flat, state = adam_step(flat, grad, state, lr, config.betas, config.eps)
            losses.append(loss)
        model.set_flat(flat)
        history.train_loss.append(float(np.mean(losses)))
        if val_fn is not None and (epoch % config.val_every == 0 or epoch == config.epochs - 1):
            v = float(val_fn(model))
            history.val_mae.append(v)
            if not v >= history.best_val_mae:  # also true while best is NaN
                history.best_val_mae, history.best_epoch = v, epoch
                best = flat.copy()
        else:
            history.val_mae.append(float("nan"))
    if val_fn is not None and config.select_best:
        model.set_flat(best)
    else:
        history.best_epoch = config.epochs - 1
    return model, history


def _illum_val_fn(images, valid, rgbs, pairs):
    if not pairs:
        return None
    u = np.array([p[0] for p in pairs])
    v = np.array([p[1] for p in pairs])
    x = encode_illum_input(rgbs[u], rgbs[v])
    src, dst = images[u], images[v]
    mask = valid[u] & valid[v]

    def val_fn(model):
        return masked_pair_mae(forward_batch(model, x), src, dst, mask).mean()
    return val_fn


def _sensor_val_fn(va, vb, vr):
    va, vb = np.asarray(va, dtype=np.float64), np.asarray(vb, dtype=np.float64)
    vx = encode_sensor_input(vr)
    vmask = np.ones(va.shape[:2], dtype=bool)

    def val_fn(model):
        return masked_pair_mae(forward_batch(model, vx), va, vb, vmask).mean()
    return val_fn


def train_illum_mlp(images, illum_rgbs, config: TrainConfig | None = None, seed: int = 0,
                    val_images=None, val_rgbs=None, pairs=None, val_pairs=None):
    """Train the illumination-mapping MLP on one scene seen under many lights.

    ``images`` are pixel-aligned captures of the training scene, one per row
    of ``illum_rgbs``. Returns ``(model, TrainLog)``.
    """
    config = config or TrainConfig()
    images = _flatten_images(images)
    rgbs = np.asarray(illum_rgbs, dtype=np.float64)
    if len(images) != len(rgbs):
        raise ValueError("one illuminant per training image required")
    valid = valid_pixels(images)
    if pairs is None:
        pairs = select_hard_pairs(rgbs, config.hard_pair_fraction)
        if config.self_pairs:
            # (u, u) anchors the identity, which hard pairs never show
            pairs = sorted(pairs + [(i, i) for i in range(len(rgbs))])
    pairs = np.asarray(pairs, dtype=np.int64)
    counts = np.array([np.count_nonzero(valid[u] & valid[v]) for u, v in pairs])
    if counts.min() == 0:
        raise ValueError("a training pair has no unsaturated pixels")
    x_all = encode_illum_input(rgbs[pairs[:, 0]], rgbs[pairs[:, 1]])
    k = config.pixels_per_pair or int(counts.min())
    flat_pixels = images.reshape(-1, 3)

    def make_batch(ids, rng):
        u, v = pairs[ids, 0], pairs[ids, 1]
        ok = valid[u] & valid[v]
        # uniform subset without replacement: k smallest random keys among valid pixels
        keys = rng.random(ok.shape, dtype=np.float32)
        keys[~ok] = 2.0
        n_pix = ok.shape[1]
        if k < n_pix:
            pick = np.argpartition(keys, k - 1, axis=1)[:, :k]
        else:
            pick = np.zeros((len(ids), k), dtype=np.int64)
            pick[:, :n_pix] = np.argsort(keys, axis=1)
        # pairs with fewer usable pixels than k are sampled with replacement
        short = counts[ids] < k
        for row in np.flatnonzero(short):
            cand = np.flatnonzero(ok[row])
            pick[row] = cand[rng.integers(0, len(cand), k)]
        return (x_all[ids], np.take(flat_pixels, u[:, None] * n_pix + pick, axis=0),
                np.take(flat_pixels, v[:, None] * n_pix + pick, axis=0))

    val_fn = None
    if val_images is not None:
        vimg = _flatten_images(val_images)
        vrgb = np.asarray(val_rgbs, dtype=np.float64)
        if val_pairs is None:
            val_pairs = select_hard_pairs(vrgb, config.hard_pair_fraction)
        val_fn = _illum_val_fn(vimg, valid_pixels(vimg), vrgb, val_pairs)

    model = init_model("illum", config.hidden_dims, seed)
    rng = np.random.default_rng([seed, 1])
    model, history = _run(model, config, len(pairs), make_batch, val_fn, rng)
    model.meta.update(train_config=config.to_dict(), val_mae=history.best_val_mae,
                      n_pairs=int(len(pairs)))
    return model, history


def train_sensor_mlp(samples_a, samples_b, illum_rgbs_a, config: TrainConfig | None = None,
                     seed: int = 0, val=None):
    """Train the sensor-mapping MLP from chart samples.

    ``samples_a``/``samples_b`` are ``(K, P, 3)`` chart responses of sensors A
    and B under the same K lights; ``illum_rgbs_a`` are those lights as seen
    by sensor A. ``val`` is an optional ``(samples_a, samples_b, rgbs_a)``.
    """
    config = config or TrainConfig.for_mode("sensor")
    sa = np.asarray(samples_a, dtype=np.float64)
    sb = np.asarray(samples_b, dtype=np.float64)
    if sa.ndim != 3 or sa.shape != sb.shape or sa.shape[2] != 3:
        raise ValueError("chart samples must be matching (K, P, 3) arrays")
    if sa.shape[1] < 3:
        raise ValueError("need at least 3 chart samples per illuminant")
    x_all = encode_sensor_input(illum_rgbs_a)
    if len(x_all) != len(sa):
        raise ValueError("one illuminant per chart capture required")
    k = config.pixels_per_pair

    def make_batch(ids, rng):
        n_avail = sa.shape[1]
        if k is None or k >= n_avail:
            return x_all[ids], sa[ids], sb[ids]
        picks = np.stack([rng.choice(n_avail, size=k, replace=False) for _ in ids])
        rows = np.asarray(ids)[:, None]
        return x_all[ids], sa[rows, picks], sb[rows, picks]

    val_fn = None if val is None else _sensor_val_fn(*val)

    model = init_model("sensor", config.hidden_dims, seed)
    rng = np.random.default_rng([seed, 1])
    model, history = _run(model, config, len(sa), make_batch, val_fn, rng)
    model.meta.update(train_config=config.to_dict(), val_mae=history.best_val_mae)
    return model, history


def finetune_oracle(model: MlpModel, x, src_pixels, dst_pixels, epochs: int = 200,
                    lr: float = 0.001, pixels: int | None = 1000, seed: int = 0,
                    betas=(0.9, 0.999), eps: float = 1e-8, keep_best: bool = True) -> np.ndarray:
    """Fine-tune a copy of ``model`` on a single pair and return its transform.

    ``src_pixels``/``dst_pixels`` are the pair's usable corresponding pixels.
    Each epoch draws a fresh subset of ``pixels`` samples. With ``keep_best``
    the iterate with the lowest sampled loss is returned; the angular loss is
    cone-shaped at an exact fit, so fixed-rate Adam otherwise ends wherever
    its oscillation happens to stop.
    """
    src = np.asarray(src_pixels, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(dst_pixels, dtype=np.float64).reshape(-1, 3)
    if len(src) == 0 or src.shape != dst.shape:
        raise ValueError("oracle needs a nonempty set of corresponding pixels")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    tuned = model.copy()
    flat = tuned.get_flat()
    state = AdamState.zeros(flat.size)
    rng = np.random.default_rng([seed, 2])
    full = pixels is None or pixels >= len(src)
    best, best_loss = flat, np.inf
    for _ in range(epochs + 1):
        s, d = (src, dst) if full else _subset(rng, src, dst, pixels)
        tuned.set_flat(flat)
        loss, grads = loss_and_grad(tuned, x, s[None], d[None])
        if keep_best and loss < best_loss:
            best, best_loss = flat, loss
        if _ == epochs:
            break
        grad = np.concatenate([g.ravel() for g in grads])
        flat, state = adam_step(flat, grad, state, lr, betas, eps)
    tuned.set_flat(best if keep_best else flat)
    return forward_batch(tuned, x)[0]


def _subset(rng, src, dst, k):
    pick = rng.choice(len(src), size=k, replace=False)
    return src[pick], dst[pick]
