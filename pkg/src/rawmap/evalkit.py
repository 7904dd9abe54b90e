"""Masked angular-error evaluation of illumination-mapping methods."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .color import (RawImage, ShapeError, angular_error_map, apply_transform, neutral_mask,
                    saturation_mask)

log = logging.getLogger(__name__)

REPORT_FIELDS = ["method", "camera", "scene", "src_illum", "dst_illum", "mae_all",
                 "mae_no_neutral", "n_pixels_all", "n_pixels_no_neutral"]
AGGREGATE_FIELDS = ["method", "camera", "mae_all", "mae_no_neutral", "n_pairs", "n_skipped"]


class EmptyMaskError(ValueError):
    pass


@dataclass(frozen=True)
class PairResult:
    mae_all: float
    mae_no_neutral: float
    n_all: int
    n_no_neutral: int


def metric_masks(pred: RawImage, target: RawImage, target_illum):
    """``(with_neutral, without_neutral)`` boolean pixel masks."""
    if pred.data.shape != target.data.shape or target.channels != 3:
        raise ShapeError("prediction and target must be matching 3-channel images")
    nonzero = (np.linalg.norm(pred.data, axis=-1) > 0) & (np.linalg.norm(target.data, axis=-1) > 0)
    m_all = saturation_mask(target) & nonzero
    return m_all, m_all & neutral_mask(target, target_illum)


def evaluate_pair(pred: RawImage, target: RawImage, target_illum) -> PairResult:
    m_all, m_nn = metric_masks(pred, target, target_illum)
    if not m_all.any():
        raise EmptyMaskError("no unsaturated pixels in target")
    err = angular_error_map(pred.data, target.data)
    mae_nn = float(err[m_nn].mean()) if m_nn.any() else float("nan")
    return PairResult(float(err[m_all].mean()), mae_nn, int(m_all.sum()), int(m_nn.sum()))


def error_map(pred: RawImage, target: RawImage) -> RawImage:
    """Per-pixel angular error as a single-channel image (0 where undefined)."""
    err = np.nan_to_num(angular_error_map(pred.data, target.data), nan=0.0)
    return RawImage(err[:, :, None], target.camera_id, target.illuminant_id,
                    {"kind": "angular_error_deg"})


@dataclass
class PairContext:
    """Everything a mapping method may look at for one test pair."""

    camera: str
    scene: str
    src_id: str
    dst_id: str
    src_illum: object
    dst_illum: object
    src_img: RawImage
    dst_img: RawImage


def iter_pairs(bench, cameras=None, scenes=None, split: str = "test", max_pairs=None):
    """Yield :class:`PairContext` in (camera, scene, src, dst) order."""
    for cam in sorted(cameras or bench.cameras):
        pairs = sorted(bench.pairs[cam][split])
        if max_pairs is not None:
            pairs = pairs[:max_pairs]
        for scene in sorted(scenes or bench.scene_ids(split)):
            for u, v in pairs:
                yield PairContext(cam, scene, u, v, bench.illuminant(cam, u),
                                  bench.illuminant(cam, v), bench.image(cam, scene, u),
                                  bench.image(cam, scene, v))


def evaluate_method(name: str, method, bench, cameras=None, scenes=None, max_pairs=None):
    """Run ``method(ctx) -> 3x3`` over every test pair.

    Returns ``(rows, aggregates)`` where aggregates are unweighted per-camera
    means over pairs whose masks were nonempty.
    """
    rows, skipped = [], {}
    for ctx in iter_pairs(bench, cameras, scenes, max_pairs=max_pairs):
        t = method(ctx)
        pred = apply_transform(t, ctx.src_img)
        try:
            r = evaluate_pair(pred, ctx.dst_img, ctx.dst_illum)
        except EmptyMaskError:
            log.warning("%s: empty mask for %s/%s %s->%s, skipped", name, ctx.camera,
                        ctx.scene, ctx.src_id, ctx.dst_id)
            skipped[ctx.camera] = skipped.get(ctx.camera, 0) + 1
            continue
        rows.append({"method": name, "camera": ctx.camera, "scene": ctx.scene,
                     "src_illum": ctx.src_id, "dst_illum": ctx.dst_id,
                     "mae_all": r.mae_all, "mae_no_neutral": r.mae_no_neutral,
                     "n_pixels_all": r.n_all, "n_pixels_no_neutral": r.n_no_neutral})
    return rows, aggregate(rows, skipped)


def aggregate(rows, skipped=None) -> list:
    skipped = skipped or {}
    out = []
    keys = sorted({(r["method"], r["camera"]) for r in rows})
    for method, cam in keys:
        sel = [r for r in rows if r["method"] == method and r["camera"] == cam]
        nn = [r["mae_no_neutral"] for r in sel if not np.isnan(r["mae_no_neutral"])]
        out.append({"method": method, "camera": cam,
                    "mae_all": float(np.mean([r["mae_all"] for r in sel])),
                    "mae_no_neutral": float(np.mean(nn)) if nn else float("nan"),
                    "n_pairs": len(sel), "n_skipped": skipped.get(cam, 0)})
    return out


def _fmt(v):
    return f"{v:.6f}" if isinstance(v, float) else str(v)


def rows_to_csv(rows, fields) -> str:
    buf = io.StringIO()
    wr = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    wr.writeheader()
    for r in rows:
        wr.writerow({k: _fmt(r[k]) for k in fields})
    return buf.getvalue()


def render_table(aggregates) -> str:
    """Text table with one row per method and w/ / w/o neutral columns per camera."""
    cams = sorted({a["camera"] for a in aggregates})
    methods = list(dict.fromkeys(a["method"] for a in aggregates))
    lookup = {(a["method"], a["camera"]): a for a in aggregates}
    width = max([len(m) for m in methods] + [6])
    head1 = " " * width + " | " + " | ".join(f"{c:^17}" for c in cams)
    head2 = f"{'Method':<{width}} | " + " | ".join(f"{'w/ ntrl':>8} {'w/o ntrl':>8}" for _ in cams)
    lines = [head1, head2, "-" * len(head2)]
    for m in methods:
        cells = []
        for c in cams:
            a = lookup.get((m, c))
            cells.append(f"{a['mae_all']:8.2f} {a['mae_no_neutral']:8.2f}" if a else f"{'-':>8} {'-':>8}")
        lines.append(f"{m:<{width}} | " + " | ".join(cells))
    return "\n".join(lines) + "\n"


def write_report(out_dir, rows, aggregates) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(rows_to_csv(rows, REPORT_FIELDS), encoding="utf-8")
    (out / "aggregate.csv").write_text(rows_to_csv(aggregates, AGGREGATE_FIELDS), encoding="utf-8")
    (out / "table.txt").write_text(render_table(aggregates), encoding="utf-8")
