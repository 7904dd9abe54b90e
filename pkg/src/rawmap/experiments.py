"""End-to-end experiments on a :class:`~rawmap.benchmark.Benchmark`.

Method factories return ``method(ctx) -> 3x3`` callables accepted by
:func:`rawmap.evalkit.evaluate_method`.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .color import diagonal_transform, normalize_transform, saturation_mask
from .evalkit import aggregate, evaluate_method
from .knn import VARIANTS, build_bank, build_sensor_bank, knn_transform, sensor_knn_transform
from .tinynet.mlp import encode_illum_input, encode_sensor_input, forward, forward_batch
from .tinynet.train import TrainConfig, finetune_oracle, train_illum_mlp, train_sensor_mlp

log = logging.getLogger(__name__)

KNN_LABELS = {"1NN-1NN": "KNN 1NN-1NN", "1NN-KNN": "KNN 1NN-2NN",
              "KNN-1NN": "KNN 2NN-1NN", "KNN-D65-KNN": "KNN 2NN-D65-2NN"}


def diagonal_method():
    def method(ctx):
        return normalize_transform(diagonal_transform(ctx.src_illum, ctx.dst_illum))
    return method


def knn_method(banks: dict, variant: str, k: int = 2):
    def method(ctx):
        return knn_transform(banks[ctx.camera], ctx.src_illum, ctx.dst_illum, variant, k)
    return method


def mlp_method(models: dict):
    def method(ctx):
        x = encode_illum_input(ctx.src_illum.rgb, ctx.dst_illum.rgb)[0]
        return forward(models[ctx.camera], x)
    return method


def pair_pixels(src_img, dst_img):
    """Corresponding pixels usable for fitting: target unsaturated, both nonzero."""
    s = src_img.pixels()
    d = dst_img.pixels()
    ok = saturation_mask(dst_img).ravel()
    ok &= (np.linalg.norm(s, axis=1) > 0) & (np.linalg.norm(d, axis=1) > 0)
    return s[ok], d[ok]


def oracle_method(models: dict, epochs: int = 200, lr: float = 0.001, seed: int = 0,
                  pixels: int | None = 1000):
    def method(ctx):
        s, d = pair_pixels(ctx.src_img, ctx.dst_img)
        x = encode_illum_input(ctx.src_illum.rgb, ctx.dst_illum.rgb)
        return finetune_oracle(models[ctx.camera], x, s, d, epochs=epochs, lr=lr,
                               pixels=pixels, seed=seed)
    return method


def train_scene_data(bench, camera: str, which: str):
    ids = bench.split.ids(which)
    return ids, bench.stack(camera, "train", ids), bench.rgbs(camera, ids)


def fit_illum_model(bench, camera: str, config: TrainConfig | None = None, seed: int = 0):
    _, images, rgbs = train_scene_data(bench, camera, "train")
    val_ids, vimages, vrgbs = train_scene_data(bench, camera, "val")
    pos = {i: n for n, i in enumerate(val_ids)}
    val_pairs = [(pos[u], pos[v]) for u, v in bench.pairs[camera]["val"]] or None
    if val_pairs is None and len(val_ids) < 2:
        vimages = vrgbs = None
    return train_illum_mlp(images, rgbs, config, seed, vimages, vrgbs, val_pairs=val_pairs)


def fit_bank(bench, camera: str):
    ids, images, rgbs = train_scene_data(bench, camera, "train")
    return build_bank(images, rgbs, ids)


@dataclass
class IllumExperiment:
    rows: list = field(default_factory=list)
    aggregates: list = field(default_factory=list)
    models: dict = field(default_factory=dict)
    logs: dict = field(default_factory=dict)
    banks: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def mae(self, method: str, camera: str, metric: str = "mae_no_neutral") -> float:
        for a in self.aggregates:
            if a["method"] == method and a["camera"] == camera:
                return a[metric]
        raise KeyError((method, camera))


def run_illum_experiment(bench, config: TrainConfig | None = None, seed: int = 0,
                         variants=VARIANTS, oracle: bool = True, oracle_epochs: int = 200,
                         max_pairs=None, models=None) -> IllumExperiment:
    """Train (unless ``models`` given), fit banks, and evaluate every method."""
    exp = IllumExperiment()
    cams = sorted(bench.cameras)
    t0 = time.perf_counter()
    for cam in cams:
        exp.banks[cam] = fit_bank(bench, cam)
        if models and cam in models:
            exp.models[cam] = models[cam]
        else:
            exp.models[cam], exp.logs[cam] = fit_illum_model(bench, cam, config, seed)
    exp.timings["fit"] = time.perf_counter() - t0
    methods = [("Diagonal", diagonal_method())]
    methods += [(KNN_LABELS[v], knn_method(exp.banks, v)) for v in variants]
    methods.append(("MLP", mlp_method(exp.models)))
    if oracle:
        methods.append(("MLP Oracle", oracle_method(exp.models, epochs=oracle_epochs, seed=seed)))
    for name, method in methods:
        t0 = time.perf_counter()
        rows, _ = evaluate_method(name, method, bench, max_pairs=max_pairs)
        exp.rows += rows
        exp.timings[name] = time.perf_counter() - t0
    exp.aggregates = aggregate(exp.rows)
    return exp


# --- sensor mapping -------------------------------------------------------

def chart_samples(bench, camera: str, chart: str, illums) -> np.ndarray:
    return bench.stack(camera, chart, illums)


def sensor_mae(transforms: np.ndarray, sa: np.ndarray, sb: np.ndarray) -> np.ndarray:
    """Per-capture mean angle between ``T @ a`` and ``b``; ``(K,)``."""
    from .tinynet.train import masked_pair_mae
    return masked_pair_mae(transforms, sa, sb, np.ones(sa.shape[:2], dtype=bool))


@dataclass
class SensorExperiment:
    mae: dict = field(default_factory=dict)  # method -> mean test MAE
    per_capture: dict = field(default_factory=dict)
    model: object = None
    log: object = None
    bank: object = None
    timings: dict = field(default_factory=dict)


def run_sensor_experiment(bench, cam_a: str, cam_b: str, config: TrainConfig | None = None,
                          seed: int = 0, oracle_epochs: int = 200, k: int = 2) -> SensorExperiment:
    """Train on the training chart; test on every test chart under test lights."""
    exp = SensorExperiment()
    config = config or TrainConfig.for_mode("sensor")
    train_ids, val_ids, test_ids = (bench.split.ids(w) for w in ("train", "val", "test"))
    t0 = time.perf_counter()
    sa = chart_samples(bench, cam_a, "chart_train", train_ids)
    sb = chart_samples(bench, cam_b, "chart_train", train_ids)
    rgbs = bench.rgbs(cam_a, train_ids)
    val = (chart_samples(bench, cam_a, "chart_train", val_ids),
           chart_samples(bench, cam_b, "chart_train", val_ids), bench.rgbs(cam_a, val_ids))
    exp.model, exp.log = train_sensor_mlp(sa, sb, rgbs, config, seed, val)
    exp.bank = build_sensor_bank(sa, sb, rgbs, train_ids)
    exp.timings["fit"] = time.perf_counter() - t0

    test_rgbs = bench.rgbs(cam_a, test_ids)
    x = encode_sensor_input(test_rgbs)
    per = {"MLP": [], f"KNN {k}NN": [], "MLP Oracle": []}
    t0 = time.perf_counter()
    for chart in bench.scene_ids("chart_test"):
        ta = chart_samples(bench, cam_a, chart, test_ids)
        tb = chart_samples(bench, cam_b, chart, test_ids)
        mlp_t = forward_batch(exp.model, x)
        knn_t = np.stack([sensor_knn_transform(exp.bank, r, k) for r in test_rgbs])
        orc_t = np.stack([finetune_oracle(exp.model, x[i], ta[i], tb[i], epochs=oracle_epochs,
                                          lr=0.001, pixels=None, seed=seed)
                          for i in range(len(test_ids))])
        per["MLP"].append(sensor_mae(mlp_t, ta, tb))
        per[f"KNN {k}NN"].append(sensor_mae(knn_t, ta, tb))
        per["MLP Oracle"].append(sensor_mae(orc_t, ta, tb))
    exp.timings["eval"] = time.perf_counter() - t0
    exp.per_capture = {m: np.concatenate(v) for m, v in per.items()}
    exp.mae = {m: float(v.mean()) for m, v in exp.per_capture.items()}
    return exp
