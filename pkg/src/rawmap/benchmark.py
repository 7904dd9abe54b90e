"""Synthetic lightbox benchmark: illuminant splits, scenes, charts and renders."""

from __future__ import annotations

import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as rio
from .color import Illuminant, RawImage
from .spectral import (CameraModel, blackbody_spd,
                       flat_reflectance, illuminant_rgb, normalize_power, palette_response,
                       patch_scene, random_reflectance, random_spd, render, render_linear,
                       stock_camera)
from .tinynet.train import HARD_PAIR_FRACTION, select_hard_pairs

log = logging.getLogger(__name__)

SPD_POWER = 800.0
CHART_ROWS, CHART_COLS = 4, 6


class DatasetError(ValueError):
    pass


@dataclass
class DatasetSplit:
    train_illums: list
    val_illums: list
    test_illums: list

    def __post_init__(self):
        sets = [set(self.train_illums), set(self.val_illums), set(self.test_illums)]
        if sum(map(len, sets)) != len(set().union(*sets)):
            raise DatasetError("illuminant splits overlap")

    def as_dict(self) -> dict:
        return {"train": list(self.train_illums), "val": list(self.val_illums),
                "test": list(self.test_illums)}

    def ids(self, which: str) -> list:
        return self.as_dict()[which]


@dataclass
class Benchmark:
    config: dict
    cameras: dict
    spds: dict
    split: DatasetSplit
    scenes: dict  # id -> {"role", "width", "height", "palette_ids"}
    illuminants: dict  # camera -> {illum_id: Illuminant}
    images: dict = field(default_factory=dict)  # (camera, scene, illum) -> RawImage
    pairs: dict = field(default_factory=dict)  # camera -> {"val"|"test": [(u, v)]}

    def scene_ids(self, role: str) -> list:
        return sorted(s for s, info in self.scenes.items() if info["role"] == role)

    def image(self, camera: str, scene: str, illum: str) -> RawImage:
        try:
            return self.images[(camera, scene, illum)]
        except KeyError:
            raise DatasetError(f"no image for {camera}/{scene}/{illum}") from None

    def stack(self, camera: str, scene: str, illums) -> np.ndarray:
        """``(K, N, 3)`` flattened images of ``scene`` under ``illums``."""
        return np.stack([self.image(camera, scene, i).pixels() for i in illums])

    def rgbs(self, camera: str, illums) -> np.ndarray:
        table = self.illuminants[camera]
        return np.array([table[i].rgb for i in illums])

    def illuminant(self, camera: str, illum: str) -> Illuminant:
        return self.illuminants[camera][illum]

    # --- persistence ------------------------------------------------------

    def write(self, out, force: bool = False) -> Path:
        out = Path(out)
        if out.exists():
            if not force:
                raise FileExistsError(f"{out} exists; pass force to overwrite")
            shutil.rmtree(out)
        (out / "spds").mkdir(parents=True)
        (out / "illuminants").mkdir()
        manifest = {"version": 1, "config": self.config, "split": self.split.as_dict(),
                    "scenes": self.scenes, "spds": {}, "cameras": {},
                    "illuminant_tables": {}, "images": {}, "pairs": {}}
        for sid in sorted(self.spds):
            rel = f"spds/{sid}.csv"
            rio.write_spectral_csv(out / rel, self.spds[sid])
            manifest["spds"][sid] = rel
        for cid in sorted(self.cameras):
            cam = self.cameras[cid]
            cdir = out / "cameras" / cid
            cdir.mkdir(parents=True)
            sens = {}
            for ch, curve in zip("RGB", cam.curves()):
                rel = f"cameras/{cid}/sensitivity_{ch}.csv"
                rio.write_spectral_csv(out / rel, curve)
                sens[ch] = rel
            manifest["cameras"][cid] = {"black_level": cam.black_level,
                                        "white_level": cam.white_level,
                                        "downscale_factor": cam.downscale_factor,
                                        "sensitivities": sens}
            rel = f"illuminants/{cid}.csv"
            table = self.illuminants[cid]
            rio.write_illuminant_csv(out / rel, [table[k] for k in sorted(table)])
            manifest["illuminant_tables"][cid] = rel
            manifest["pairs"][cid] = {k: [list(p) for p in v]
                                      for k, v in sorted(self.pairs.get(cid, {}).items())}
        for (cid, scene, illum) in sorted(self.images):
            rel = f"images/{cid}/{scene}/{illum}.rawf"
            (out / rel).parent.mkdir(parents=True, exist_ok=True)
            rio.write_rawf(out / rel, self.images[(cid, scene, illum)])
            manifest["images"].setdefault(cid, {}).setdefault(scene, {})[illum] = rel
        rio.write_json(out / "manifest.json", manifest)
        return out

    @classmethod
    def load(cls, root) -> "Benchmark":
        root = Path(root)
        path = root / "manifest.json"
        if not path.exists():
            raise DatasetError(f"{root} has no manifest.json")
        man = rio.read_json(path)
        spds = {sid: rio.read_spectral_csv(root / rel, "spd", sid)
                for sid, rel in man["spds"].items()}
        cameras, illuminants, images, pairs = {}, {}, {}, {}
        for cid, info in man["cameras"].items():
            sens = np.stack([rio.read_spectral_csv(root / info["sensitivities"][ch],
                                                   "sensitivity").values for ch in "RGB"])
            cameras[cid] = CameraModel(cid, sens, info["black_level"], info["white_level"],
                                       info["downscale_factor"])
            illuminants[cid] = rio.read_illuminant_csv(root / man["illuminant_tables"][cid])
            pairs[cid] = {k: [tuple(p) for p in v] for k, v in man["pairs"].get(cid, {}).items()}
        for cid, scenes in man["images"].items():
            for scene, files in scenes.items():
                for illum, rel in files.items():
                    f = root / rel
                    if not f.exists():
                        raise DatasetError(f"missing image {rel}")
                    images[(cid, scene, illum)] = rio.read_rawf(f)
        split = DatasetSplit(man["split"]["train"], man["split"]["val"], man["split"]["test"])
        return cls(man["config"], cameras, spds, split, man["scenes"], illuminants, images, pairs)


def _palette(rng: np.random.Generator, n: int, neutral_fraction: float):
    n_flat = int(round(n * neutral_fraction))
    curves = [flat_reflectance(rng.uniform(0.1, 0.9)) for _ in range(n_flat)]
    curves += [random_reflectance(rng) for _ in range(n - n_flat)]
    order = rng.permutation(n)
    return np.stack([curves[i] for i in order])


def _chart_image(palette: np.ndarray, spd, cam: CameraModel, scene_id: str) -> RawImage:
    """Chart captured with exposure set so its brightest channel reads 0.9."""
    rgb = palette_response(palette, spd, cam)
    exposure = 0.9 / rgb.max()
    data = (rgb * exposure).reshape(CHART_ROWS, CHART_COLS, 3)
    return RawImage(data, cam.id, getattr(spd, "id", ""),
                    {"exposure": float(exposure), "scene_id": scene_id})


def generate_benchmark(seed: int = 0, n_train: int = 60, n_val: int = 10, n_test: int = 20,
                       cameras=("camA", "camB"), n_test_scenes: int = 4,
                       grid: int = 16, patch: int = 4, neutral_fraction: float = 0.1,
                       hard_pair_fraction: float = HARD_PAIR_FRACTION,
                       n_test_charts: int = 2, light_family: str = "mixed",
                       exposure_mode: str = "auto") -> Benchmark:
    """Build the full synthetic benchmark in memory, deterministically.

    ``cameras`` may mix stock camera names and :class:`CameraModel` objects.
    One of the ``n_train`` training lights is always a 6500 K blackbody
    with id ``"D65"``. ``exposure_mode="auto"`` meters each image on its
    green channel and clips at white; ``"peak"`` scales each image so its
    brightest sample reads 0.95, so nothing clips.
    """
    if exposure_mode not in ("auto", "peak"):
        raise DatasetError(f"unknown exposure mode {exposure_mode!r}")
    if min(n_train, n_val, n_test) < 1:
        raise DatasetError("split sizes must be >= 1")
    cams = [stock_camera(c) if isinstance(c, str) else c for c in cameras]
    if not cams:
        raise DatasetError("need at least one camera")
    ss = np.random.SeedSequence(seed)
    spd_rng, train_rng, test_rng, chart_rng, shade_rng = (
        np.random.default_rng(s) for s in ss.spawn(5))

    n_total = n_train + n_val + n_test
    ids = [f"L{i:04d}" for i in range(n_total - 1)]
    spds = {"D65": normalize_power(blackbody_spd(6500, id="D65"), SPD_POWER)}
    for sid in ids:
        spds[sid] = normalize_power(random_spd(spd_rng, sid, light_family), SPD_POWER)
    perm = [ids[i] for i in spd_rng.permutation(len(ids))]
    split = DatasetSplit(sorted(["D65", *perm[:n_train - 1]]),
                         sorted(perm[n_train - 1:n_train - 1 + n_val]),
                         sorted(perm[n_train - 1 + n_val:]))

    scenes: dict = {}
    scene_objs: dict = {}

    def add_scene(sid, role, palette, rng):
        obj = patch_scene(palette, grid, grid, patch, rng, id=sid)
        scene_objs[sid] = obj
        scenes[sid] = {"role": role, "width": obj.width, "height": obj.height,
                       "palette_ids": obj.palette_ids}

    add_scene("train", "train", _palette(train_rng, grid * grid, neutral_fraction), shade_rng)
    for t in range(n_test_scenes):
        add_scene(f"test{t}", "test", _palette(test_rng, grid * grid, neutral_fraction), shade_rng)
    charts = {"chart_train": "chart_train"}
    charts.update({f"chart_test{t}": "chart_test" for t in range(n_test_charts)})
    chart_palettes = {}
    for cid_, role in charts.items():
        pal = np.stack([random_reflectance(chart_rng) for _ in range(CHART_ROWS * CHART_COLS)])
        chart_palettes[cid_] = pal
        scenes[cid_] = {"role": role, "width": CHART_COLS, "height": CHART_ROWS,
                        "palette_ids": [f"{cid_}_r{i}" for i in range(len(pal))]}

    illuminants, images, pairs = {}, {}, {}
    for cam in cams:
        illuminants[cam.id] = {sid: Illuminant(illuminant_rgb(spd, cam).rgb, sid)
                               for sid, spd in spds.items()}
        lit = {"train": split.train_illums + split.val_illums, "test": split.test_illums}
        for sid, obj in scene_objs.items():
            for il in lit[scenes[sid]["role"]]:
                exposure = None
                if exposure_mode == "peak":
                    exposure = 0.95 / render_linear(obj, spds[il], cam).max()
                images[(cam.id, sid, il)] = rio.to_float32(render(obj, spds[il], cam, exposure))
        for cid_, pal in chart_palettes.items():
            for il in spds:
                images[(cam.id, cid_, il)] = rio.to_float32(_chart_image(pal, spds[il], cam, cid_))
        table = illuminants[cam.id]
        pairs[cam.id] = {}
        for which in ("val", "test"):
            ill = split.ids(which)
            if len(ill) < 2:
                pairs[cam.id][which] = []
                continue
            idx = select_hard_pairs([table[i] for i in ill], hard_pair_fraction)
            pairs[cam.id][which] = [(ill[u], ill[v]) for u, v in idx]

    config = {"seed": seed, "n_train": n_train, "n_val": n_val, "n_test": n_test,
              "n_test_scenes": n_test_scenes, "grid": grid, "patch": patch,
              "neutral_fraction": neutral_fraction, "hard_pair_fraction": hard_pair_fraction,
              "n_test_charts": n_test_charts, "spd_power": SPD_POWER,
              "light_family": light_family, "exposure_mode": exposure_mode}
    return Benchmark(config, {c.id: c for c in cams}, spds, split, scenes, illuminants,
                     images, pairs)


def make_benchmark(out, seed: int = 0, n_train: int = 60, n_val: int = 10, n_test: int = 20,
                   cameras=("camA", "camB"), force: bool = False, **kwargs) -> Benchmark:
    bench = generate_benchmark(seed, n_train, n_val, n_test, cameras, **kwargs)
    bench.write(out, force=force)
    log.info("wrote benchmark with %d SPDs to %s", len(bench.spds), out)
    return bench
