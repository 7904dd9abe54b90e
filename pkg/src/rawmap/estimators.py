"""scikit-learn style mappers that predict 3x3 RAW transforms.

Every mapper exposes ``fit`` and ``predict``; ``predict`` returns an
``(n, 3, 3)`` stack of unit-norm transforms and ``transform_image`` applies
one of them to a :class:`~rawmap.color.RawImage`. Hyperparameters live in
``__init__`` so ``get_params``/``set_params``/``clone`` work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .color import apply_transform, diagonal_transform, normalize_transform
from .knn import VARIANTS, build_bank, build_sensor_bank, knn_transform, sensor_knn_transform
from .tinynet.mlp import encode_illum_input, encode_sensor_input, forward_batch
from .tinynet.train import HARD_PAIR_FRACTION, TrainConfig, train_illum_mlp, train_sensor_mlp
from .validation import check_chart_samples, check_images, check_rgbs


class _TransformMixin:
    def transform_image(self, img, *illums):
        rgbs = [np.asarray(getattr(i, "rgb", i), dtype=np.float64)[None] for i in illums]
        return apply_transform(self.predict(*rgbs)[0], img)


class DiagonalMapper(_TransformMixin, BaseEstimator):
    """Per-channel von Kries gains; needs no training data."""

    def fit(self, X=None, y=None):
        self.fitted_ = True
        return self

    def predict(self, src_rgbs, dst_rgbs):
        src = check_rgbs(src_rgbs)
        dst = check_rgbs(dst_rgbs, n=len(src))
        return np.stack([normalize_transform(diagonal_transform(s, d)) for s, d in zip(src, dst)])


class _MlpConfigMixin:
    def _config(self, mode):
        return TrainConfig.for_mode(
            mode, lr0=self.lr0, decay=self.decay, period=self.period, epochs=self.epochs,
            batch_size=self.batch_size, pixels_per_pair=self.pixels_per_pair,
            hard_pair_fraction=getattr(self, "hard_pair_fraction", HARD_PAIR_FRACTION),
            hidden_dims=tuple(self.hidden_dims), select_best=self.select_best)


class IlluminationMapper(_TransformMixin, _MlpConfigMixin, BaseEstimator):
    """Tiny MLP mapping a (source, target) illuminant pair to a 3x3 transform.

    ``fit(X, y)`` takes pixel-aligned images of one scene, ``X`` of shape
    ``(K, H, W, 3)`` or ``(K, N, 3)``, and the K illuminant RGBs ``y``.
    """

    def __init__(self, hidden_dims=(32, 32), lr0=0.01, decay=0.5, period=50, epochs=400,
                 batch_size=8, pixels_per_pair=1000, hard_pair_fraction=HARD_PAIR_FRACTION,
                 select_best=True, seed=0):
        self.hidden_dims = hidden_dims
        self.lr0 = lr0
        self.decay = decay
        self.period = period
        self.epochs = epochs
        self.batch_size = batch_size
        self.pixels_per_pair = pixels_per_pair
        self.hard_pair_fraction = hard_pair_fraction
        self.select_best = select_best
        self.seed = seed

    def fit(self, X, y, X_val=None, y_val=None, pairs=None, val_pairs=None):
        images = check_images(X)
        rgbs = check_rgbs(y, n=len(images))
        val_images = check_images(X_val) if X_val is not None else None
        val_rgbs = check_rgbs(y_val, n=len(val_images)) if X_val is not None else None
        self.model_, self.log_ = train_illum_mlp(
            images, rgbs, self._config("illum"), self.seed, val_images, val_rgbs,
            pairs=pairs, val_pairs=val_pairs)
        return self

    def predict(self, src_rgbs, dst_rgbs):
        check_is_fitted(self, "model_")
        src = check_rgbs(src_rgbs)
        dst = check_rgbs(dst_rgbs, n=len(src))
        return forward_batch(self.model_, encode_illum_input(src, dst))


class SensorMapper(_TransformMixin, _MlpConfigMixin, BaseEstimator):
    """Tiny MLP mapping an illuminant (seen by sensor A) to an A -> B transform.

    ``fit(X, y, illums)``: ``X`` and ``y`` are ``(K, P, 3)`` chart samples
    of sensors A and B under K lights whose sensor-A RGBs are ``illums``.
    """

    def __init__(self, hidden_dims=(32, 32), lr0=0.001, decay=0.5, period=50, epochs=400,
                 batch_size=8, pixels_per_pair=1000, select_best=True, seed=0):
        self.hidden_dims = hidden_dims
        self.lr0 = lr0
        self.decay = decay
        self.period = period
        self.epochs = epochs
        self.batch_size = batch_size
        self.pixels_per_pair = pixels_per_pair
        self.select_best = select_best
        self.seed = seed

    def fit(self, X, y, illums, val=None):
        sa, sb = check_chart_samples(X, y)
        rgbs = check_rgbs(illums, n=len(sa))
        self.model_, self.log_ = train_sensor_mlp(sa, sb, rgbs, self._config("sensor"),
                                                  self.seed, val)
        return self

    def predict(self, illums):
        check_is_fitted(self, "model_")
        return forward_batch(self.model_, encode_sensor_input(check_rgbs(illums)))


class KNNMapper(_TransformMixin, BaseEstimator):
    """Inverse-distance KNN over a bank of least-squares pair transforms."""

    def __init__(self, variant="KNN-1NN", k=2, anchor="D65"):
        self.variant = variant
        self.k = k
        self.anchor = anchor

    def fit(self, X, y, ids):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        images = check_images(X)
        self.bank_ = build_bank(images, check_rgbs(y, n=len(images)), list(ids))
        return self

    def predict(self, src_rgbs, dst_rgbs):
        check_is_fitted(self, "bank_")
        src = check_rgbs(src_rgbs)
        dst = check_rgbs(dst_rgbs, n=len(src))
        return np.stack([knn_transform(self.bank_, s, d, self.variant, self.k, self.anchor)
                         for s, d in zip(src, dst)])


class SensorKNNMapper(_TransformMixin, BaseEstimator):
    def __init__(self, k=2):
        self.k = k

    def fit(self, X, y, illums, ids=None):
        sa, sb = check_chart_samples(X, y)
        rgbs = check_rgbs(illums, n=len(sa))
        ids = list(ids) if ids is not None else [str(i) for i in range(len(sa))]
        self.bank_ = build_sensor_bank(sa, sb, rgbs, ids)
        return self

    def predict(self, illums):
        check_is_fitted(self, "bank_")
        return np.stack([sensor_knn_transform(self.bank_, r, self.k) for r in check_rgbs(illums)])
