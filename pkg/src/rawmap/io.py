"""On-disk formats: RAWF images, spectral/illuminant CSVs, stable JSON."""

from __future__ import annotations

import csv
import io
import json
import struct
from pathlib import Path

import numpy as np

from .color import Illuminant, RawImage
from .spectral import WAVELENGTHS, SpectralCurve

MAGIC = b"RAWF"
VERSION = 1


class FormatError(ValueError):
    pass


def dumps(obj) -> str:
    """JSON with sorted keys and a trailing newline; floats keep full precision."""
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def encode_rawf(img: RawImage) -> bytes:
    h, w, c = img.data.shape
    meta = dict(img.meta)
    meta.update(camera_id=img.camera_id, illuminant_id=img.illuminant_id)
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    planar = np.ascontiguousarray(np.moveaxis(img.data, 2, 0), dtype="<f4")
    return b"".join([MAGIC, struct.pack("<4I", VERSION, w, h, c), planar.tobytes(),
                     struct.pack("<I", len(blob)), blob])


def decode_rawf(buf: bytes) -> RawImage:
    if buf[:4] != MAGIC:
        raise FormatError("not a RAWF file")
    version, w, h, c = struct.unpack_from("<4I", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported RAWF version {version}")
    off = 20
    n = w * h * c * 4
    if len(buf) < off + n + 4:
        raise FormatError("truncated RAWF payload")
    planar = np.frombuffer(buf, dtype="<f4", count=w * h * c, offset=off).reshape(c, h, w)
    (blen,) = struct.unpack_from("<I", buf, off + n)
    meta = json.loads(buf[off + n + 4: off + n + 4 + blen].decode("utf-8")) if blen else {}
    camera_id = meta.pop("camera_id", "")
    illuminant_id = meta.pop("illuminant_id", "")
    data = np.moveaxis(planar, 0, 2).astype(np.float64)
    return RawImage(data, camera_id, illuminant_id, meta)


def write_rawf(path, img: RawImage) -> None:
    Path(path).write_bytes(encode_rawf(img))


def read_rawf(path) -> RawImage:
    return decode_rawf(Path(path).read_bytes())


def to_float32(img: RawImage) -> RawImage:
    """Round samples to what a RAWF round trip would store."""
    img.data = img.data.astype(np.float32).astype(np.float64)
    return img


def write_spectral_csv(path, curve: SpectralCurve) -> None:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["wavelength_nm", "value"])
    for lam, v in zip(WAVELENGTHS, curve.values):
        wr.writerow([int(lam), repr(float(v))])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_spectral_csv(path, kind: str = "spd", id: str | None = None) -> SpectralCurve:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    lams = [float(r["wavelength_nm"]) for r in rows]
    if len(lams) != len(WAVELENGTHS) or not np.allclose(lams, WAVELENGTHS):
        raise FormatError(f"{path}: wavelengths must run 380..700 nm in 5 nm steps")
    return SpectralCurve([float(r["value"]) for r in rows], kind,
                         id if id is not None else Path(path).stem)


def write_illuminant_csv(path, illums) -> None:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["illuminant_id", "R", "G", "B"])
    for il in illums:
        wr.writerow([il.id, *(repr(float(v)) for v in il.rgb)])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_illuminant_csv(path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        return {r["illuminant_id"]: Illuminant((float(r["R"]), float(r["G"]), float(r["B"])),
                                               r["illuminant_id"])
                for r in csv.DictReader(fh)}
