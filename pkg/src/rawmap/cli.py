"""``rawmap`` command line: data generation, training, baselines, evaluation."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import io as rio
from .benchmark import Benchmark, DatasetError, make_benchmark
from .color import (ColorError, apply_transform, check_transform, diagonal_transform,
                    normalize_transform)
from .evalkit import aggregate, evaluate_method, evaluate_pair, render_table, write_report
from .experiments import (KNN_LABELS, chart_samples, diagonal_method, fit_bank, fit_illum_model,
                          knn_method, mlp_method, oracle_method, pair_pixels)
from .knn import VARIANTS, bank_from_dict, build_sensor_bank, knn_transform, sensor_knn_transform
from .preprocess import MosaicImage, preprocess
from .tinynet import (TrainConfig, encode_illum_input, encode_sensor_input, finetune_oracle,
                      forward, load_model, save_model, train_sensor_mlp)

log = logging.getLogger("rawmap")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _rgb(text: str) -> np.ndarray:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected R,G,B got {text!r}") from None
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected R,G,B got {text!r}")
    return np.array(vals)


def _write_run(path: Path, args) -> None:
    def plain(v):
        if isinstance(v, Path):
            return str(v)
        if isinstance(v, np.ndarray):
            return v.tolist()
        return v

    record = {k: plain(v) for k, v in vars(args).items() if k != "func"}
    rio.write_json(path, record)


def _run_json_for(out: Path) -> Path:
    return out / "run.json" if out.is_dir() else out.with_name(out.name + ".run.json")


def _load_config(args, mode: str) -> TrainConfig:
    overrides = {}
    if getattr(args, "config", None):
        overrides.update(rio.read_json(args.config))
    for key in ("epochs", "lr0", "pixels_per_pair", "hard_pair_fraction"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if "betas" in overrides:
        overrides["betas"] = tuple(overrides["betas"])
    if "hidden_dims" in overrides:
        overrides["hidden_dims"] = tuple(overrides["hidden_dims"])
    return TrainConfig.for_mode(mode, **overrides)


def _print_matrix(m) -> None:
    for row in np.asarray(m):
        print(" ".join(f"{v: .8f}" for v in row))


def _parse_models(specs) -> dict:
    models = {}
    for spec in specs or []:
        if "=" not in spec:
            raise UsageError(f"--model expects CAMERA=PATH, got {spec!r}")
        cam, path = spec.split("=", 1)
        models[cam] = load_model(path)
    return models


# --- subcommands ----------------------------------------------------------

def _gen_kwargs(args) -> dict:
    return dict(seed=args.seed, n_train=args.n_train, n_val=args.n_val, n_test=args.n_test,
                cameras=[c for c in args.cameras.split(",") if c], force=args.force,
                n_test_scenes=args.n_test_scenes, grid=args.grid,
                light_family=args.light_family, exposure_mode=args.exposure_mode)


def cmd_gen_data(args) -> int:
    make_benchmark(args.out, **_gen_kwargs(args))
    _write_run(Path(args.out) / "run.json", args)
    print(f"wrote benchmark to {args.out}")
    return EXIT_OK


def _print_curves(history) -> None:
    print("epoch,lr,train_loss,val_mae")
    for e, (lr, tl, vm) in enumerate(zip(history.lr, history.train_loss, history.val_mae)):
        print(f"{e},{lr:.6g},{tl:.6f},{vm:.6f}")
    print(f"best_epoch={history.best_epoch} best_val_mae={history.best_val_mae:.6f}")


def cmd_train(args) -> int:
    bench = Benchmark.load(args.data)
    if args.camera not in bench.cameras:
        raise DatasetError(f"camera {args.camera!r} not in dataset")
    config = _load_config(args, args.mode)
    if args.mode == "illum":
        model, history = fit_illum_model(bench, args.camera, config, args.seed)
    else:
        if not args.camera_b or args.camera_b not in bench.cameras:
            raise UsageError("sensor training needs --camera-b naming a dataset camera")
        split = bench.split
        sa = chart_samples(bench, args.camera, "chart_train", split.train_illums)
        sb = chart_samples(bench, args.camera_b, "chart_train", split.train_illums)
        val = (chart_samples(bench, args.camera, "chart_train", split.val_illums),
               chart_samples(bench, args.camera_b, "chart_train", split.val_illums),
               bench.rgbs(args.camera, split.val_illums))
        model, history = train_sensor_mlp(sa, sb, bench.rgbs(args.camera, split.train_illums),
                                          config, args.seed, val)
    out = Path(args.out_model)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(out, model)
    _write_run(_run_json_for(out), args)
    if not args.quiet:
        _print_curves(history)
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_model(args.model)
    if model.mode == "illum":
        if args.src_illum is None or args.dst_illum is None:
            raise UsageError("illumination models need --src-illum and --dst-illum")
        x = encode_illum_input(args.src_illum, args.dst_illum)[0]
    else:
        if args.illum is None:
            raise UsageError("sensor models need --illum")
        x = encode_sensor_input(args.illum)[0]
    _print_matrix(forward(model, x))
    return EXIT_OK


def _matrix_arg(text: str) -> np.ndarray:
    p = Path(text)
    if p.exists():
        data = rio.read_json(p)
        data = data.get("matrix", data) if isinstance(data, dict) else data
        return check_transform(np.reshape(data, (3, 3)))
    return check_transform(np.reshape([float(v) for v in text.split(",")], (3, 3)))


def cmd_apply(args) -> int:
    img = rio.read_rawf(args.inp)
    if args.matrix:
        t = _matrix_arg(args.matrix)
    elif args.model:
        model = load_model(args.model)
        if model.mode == "illum":
            if args.src_illum is None or args.dst_illum is None:
                raise UsageError("illumination models need --src-illum and --dst-illum")
            t = forward(model, encode_illum_input(args.src_illum, args.dst_illum)[0])
        else:
            if args.illum is None:
                raise UsageError("sensor models need --illum")
            t = forward(model, encode_sensor_input(args.illum)[0])
    else:
        raise UsageError("apply needs --model or --matrix")
    out = apply_transform(t, img)
    rio.write_rawf(args.out, out)
    _write_run(_run_json_for(Path(args.out)), args)
    return EXIT_OK


def cmd_baseline(args) -> int:
    if args.kind == "diag":
        if args.src_illum is None or args.dst_illum is None:
            raise UsageError("diag needs --src-illum and --dst-illum")
        _print_matrix(normalize_transform(diagonal_transform(args.src_illum, args.dst_illum)))
        return EXIT_OK
    if not args.bank:
        raise UsageError("knn needs --bank")
    bank = bank_from_dict(rio.read_json(args.bank))
    if hasattr(bank, "transform"):
        if args.src_illum is None or args.dst_illum is None:
            raise UsageError("knn needs --src-illum and --dst-illum")
        _print_matrix(knn_transform(bank, args.src_illum, args.dst_illum, args.variant, args.k))
    else:
        if args.illum is None:
            raise UsageError("sensor banks need --illum")
        _print_matrix(sensor_knn_transform(bank, args.illum, args.k))
    return EXIT_OK


def cmd_fit_bank(args) -> int:
    bench = Benchmark.load(args.data)
    if args.camera not in bench.cameras:
        raise DatasetError(f"camera {args.camera!r} not in dataset")
    if args.camera_b:
        ids = bench.split.train_illums
        bank = build_sensor_bank(chart_samples(bench, args.camera, "chart_train", ids),
                                 chart_samples(bench, args.camera_b, "chart_train", ids),
                                 bench.rgbs(args.camera, ids), ids)
    else:
        bank = fit_bank(bench, args.camera)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    rio.write_json(out, bank.to_dict())
    _write_run(_run_json_for(out), args)
    return EXIT_OK


def cmd_oracle(args) -> int:
    model = load_model(args.model)
    bench = Benchmark.load(args.data)
    try:
        src_id, dst_id = args.pair.split(",")
    except ValueError:
        raise UsageError("--pair expects SRC_ID,DST_ID") from None
    src_img = bench.image(args.camera, args.scene, src_id)
    dst_img = bench.image(args.camera, args.scene, dst_id)
    src_il, dst_il = bench.illuminant(args.camera, src_id), bench.illuminant(args.camera, dst_id)
    x = encode_illum_input(src_il.rgb, dst_il.rgb)
    before = forward(model, x[0])
    s, d = pair_pixels(src_img, dst_img)
    t = finetune_oracle(model, x, s, d, epochs=args.epochs, lr=args.lr, seed=args.seed)
    r0 = evaluate_pair(apply_transform(before, src_img), dst_img, dst_il)
    r1 = evaluate_pair(apply_transform(t, src_img), dst_img, dst_il)
    _print_matrix(t)
    print(f"mae_before={r0.mae_all:.6f} mae_after={r1.mae_all:.6f}")
    return EXIT_OK


def _method_for(spec: str, models: dict, banks: dict, seed: int, oracle_epochs: int):
    if spec in ("diag", "diagonal"):
        return "Diagonal", diagonal_method()
    if spec.startswith("knn"):
        variant = spec.split(":", 1)[1] if ":" in spec else "KNN-1NN"
        if variant not in VARIANTS:
            raise UsageError(f"unknown KNN variant {variant!r}")
        return KNN_LABELS[variant], knn_method(banks, variant)
    if spec == "mlp":
        return "MLP", mlp_method(models)
    if spec == "oracle":
        return "MLP Oracle", oracle_method(models, epochs=oracle_epochs, seed=seed)
    raise UsageError(f"unknown method {spec!r}")


def _evaluate(bench, specs, models, banks, args):
    rows = []
    for spec in specs:
        if spec in ("mlp", "oracle") and set(models) != set(bench.cameras):
            raise UsageError(f"method {spec!r} needs --model CAMERA=PATH for every camera")
        stochastic = spec == "oracle"
        for r in range(args.repeats if stochastic else 1):
            name, method = _method_for(spec, models, banks, args.seed + r, args.oracle_epochs)
            got, _ = evaluate_method(name, method, bench, max_pairs=args.max_pairs)
            rows += got
    return rows, aggregate(rows)


def cmd_eval(args) -> int:
    bench = Benchmark.load(args.manifest)
    models = _parse_models(args.model)
    banks = {}
    for spec in args.bank or []:
        cam, path = spec.split("=", 1)
        banks[cam] = bank_from_dict(rio.read_json(path))
    if any(m.startswith("knn") for m in args.method):
        for cam in bench.cameras:
            banks.setdefault(cam, fit_bank(bench, cam))
    rows, aggs = _evaluate(bench, args.method, models, banks, args)
    write_report(args.out_report, rows, aggs)
    _write_run(Path(args.out_report) / "run.json", args)
    print(render_table(aggs), end="")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    raw = rio.read_rawf(args.inp)
    if raw.channels != 1:
        raise DatasetError("preprocess expects a single-channel mosaic RAWF")
    meta = dict(raw.meta)
    sidecar = Path(str(args.inp) + ".json")
    if sidecar.exists():
        meta.update(rio.read_json(sidecar))
    black = args.black if args.black is not None else meta.get("black_level")
    white = args.white if args.white is not None else meta.get("white_level")
    if black is None or white is None:
        raise UsageError("black/white levels missing: pass --black/--white or a sidecar")
    m = MosaicImage(raw.data[:, :, 0], black, white, meta.get("cfa", "RGGB"),
                    raw.camera_id, raw.illuminant_id)
    out = preprocess(m, args.downscale)
    rio.write_rawf(args.out, out)
    _write_run(_run_json_for(Path(args.out)), args)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    """gen-data -> train illum per camera -> eval every method."""
    out = Path(args.out)
    make_benchmark(out / "data", **_gen_kwargs(args))
    bench = Benchmark.load(out / "data")
    config = _load_config(args, "illum")
    models, banks = {}, {}
    (out / "models").mkdir(exist_ok=True)
    for cam in sorted(bench.cameras):
        models[cam], _ = fit_illum_model(bench, cam, config, args.seed)
        save_model(out / "models" / f"{cam}.json", models[cam])
        banks[cam] = fit_bank(bench, cam)
    specs = ["diag"] + [f"knn:{v}" for v in VARIANTS] + ["mlp"]
    if not args.no_oracle:
        specs.append("oracle")
    rows, aggs = _evaluate(bench, specs, models, banks, args)
    write_report(out / "report", rows, aggs)
    _write_run(out / "run.json", args)
    print(render_table(aggs), end="")
    return EXIT_OK


# --- parser ---------------------------------------------------------------

def _add_illum_args(p):
    p.add_argument("--src-illum", type=_rgb, help="source illuminant R,G,B")
    p.add_argument("--dst-illum", type=_rgb, help="target illuminant R,G,B")
    p.add_argument("--illum", type=_rgb, help="illuminant R,G,B as seen by sensor A")


def _add_train_overrides(p):
    p.add_argument("--config", type=Path, help="JSON file of training-config overrides")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr0", type=float)
    p.add_argument("--pixels-per-pair", dest="pixels_per_pair", type=int)
    p.add_argument("--hard-pair-fraction", dest="hard_pair_fraction", type=float)


def _add_gen_args(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cameras", default="camA,camB")
    p.add_argument("--n-train", dest="n_train", type=int, default=60)
    p.add_argument("--n-val", dest="n_val", type=int, default=10)
    p.add_argument("--n-test", dest="n_test", type=int, default=20)
    p.add_argument("--n-test-scenes", dest="n_test_scenes", type=int, default=4)
    p.add_argument("--grid", type=int, default=16, help="scene patches per side")
    p.add_argument("--light-family", dest="light_family", default="mixed",
                   choices=["mixed", "blackbody", "led"])
    p.add_argument("--exposure-mode", dest="exposure_mode", default="auto",
                   choices=["auto", "peak"])
    p.add_argument("--force", action="store_true")


def _add_eval_args(p):
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--max-pairs", dest="max_pairs", type=int)
    p.add_argument("--oracle-epochs", dest="oracle_epochs", type=int, default=200)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rawmap", description=__doc__)
    parser.add_argument("--threads", type=int, default=1, help="cap on BLAS worker threads")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic benchmark")
    _add_gen_args(p)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train an illumination or sensor MLP")
    p.add_argument("mode", choices=["illum", "sensor"])
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--camera-b", dest="camera_b")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-model", dest="out_model", type=Path, required=True)
    p.add_argument("--quiet", action="store_true")
    _add_train_overrides(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="print the 3x3 matrix a model predicts")
    p.add_argument("--model", type=Path, required=True)
    _add_illum_args(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("apply", help="apply a model or matrix to a RAWF image")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--model", type=Path)
    g.add_argument("--matrix", help="9 comma-separated values or a JSON file")
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_illum_args(p)
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("baseline", help="diagonal or KNN baseline transform")
    p.add_argument("kind", choices=["diag", "knn"])
    p.add_argument("--variant", choices=VARIANTS, default="KNN-1NN")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--bank", type=Path)
    _add_illum_args(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("fit-bank", help="least-squares transform bank for KNN")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--camera-b", dest="camera_b", help="build a sensor A->B bank instead")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_fit_bank)

    p = sub.add_parser("oracle", help="fine-tune a model on one test pair")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--scene", default="test0")
    p.add_argument("--pair", required=True, help="SRC_ID,DST_ID")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("eval", help="evaluate methods on the benchmark test pairs")
    p.add_argument("--method", action="append", required=True,
                   help="diag | knn:VARIANT | mlp | oracle (repeatable)")
    p.add_argument("--manifest", type=Path, required=True, help="benchmark directory")
    p.add_argument("--model", action="append", help="CAMERA=PATH (repeatable)")
    p.add_argument("--bank", action="append", help="CAMERA=PATH (repeatable)")
    p.add_argument("--out-report", dest="out_report", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_eval_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("preprocess", help="level-correct, demosaic and downsample a mosaic")
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument("--black", type=float)
    p.add_argument("--white", type=float)
    p.add_argument("--downscale", type=int, default=1)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("pipeline", help="gen-data, train and eval in one go")
    _add_gen_args(p)
    _add_train_overrides(p)
    _add_eval_args(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--no-oracle", dest="no_oracle", action="store_true")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"rawmap: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, ColorError) as exc:
        print(f"rawmap: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"rawmap: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
