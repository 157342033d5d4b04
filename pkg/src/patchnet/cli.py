"""Command-line entry points: synth, train, predict, eval and gradcheck.

Exit codes: 0 on success, 1 for invalid configuration or input, 2 for
failures while running. Every error goes to stderr prefixed with ``ERROR:``.
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import os
import sys

import numpy as np

from . import data, pnm
from .errors import ConfigError, DataError, FormatError, PatchNetError
from .evaluation import UNLABELED, BinaryEval, confusion_matrix, max_f, orr_arr, write_pr_curve
from .inference import label_image, overlay
from .layers import spec_from_dict
from .network import NetworkSpec, build, load, propagate_shapes, road_spec, urban_spec, with_dropout
from .postproc import SegmentationParams
from .synth import class_names, generate_synthetic_scene
from .tensor import default_threads, load_tensor, save_tensor, set_num_threads
from .trainer import TrainConfig, config_hash, evaluate_pool, train

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

# key -> (accepted types, default); REQUIRED marks mandatory keys
REQUIRED = object()
RUN_CONFIG_KEYS = {
    "task": (str, REQUIRED),
    "manifest": (str, REQUIRED),
    "output_dir": (str, REQUIRED),
    "seed": (int, 0),
    "preset": (str, None),
    "spatial_prior": (bool, True),
    "layers": (list, None),
    "input_shape": (list, [3, 28, 28]),
    "batch_size": (int, 48),
    "learning_rate": ((int, float), 0.01),
    "momentum": ((int, float), 0.9),
    "epochs": (int, 5),
    "iterations_per_epoch": (int, 10000),
    "weighting": (str, "none"),
    "dropout": (bool, False),
    "dropout_rate": ((int, float), 0.5),
    "init": (str, "normalized"),
    "samples_per_image": (int, 1000),
    "val_manifest": (str, None),
    "val_fraction": ((int, float), 0.2),
    "val_samples_per_image": (int, 1000),
}
TASKS = ("road", "urban")


class CliError(Exception):
    def __init__(self, message, code=EXIT_CONFIG):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    """Argument errors are configuration errors: report them with the common prefix."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(f"{self.prog}: {message}")


# -- run configuration --------------------------------------------------------

def load_run_config(path) -> dict:
    """Read and validate a flat JSON run config; relative paths resolve against its directory."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    cfg = validate_run_config(raw)
    base = os.path.dirname(os.path.abspath(path))
    for key in ("manifest", "val_manifest", "output_dir"):
        if cfg[key] is not None:
            cfg[key] = os.path.join(base, cfg[key])
    return cfg


def validate_run_config(raw) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("run config must be a JSON object")
    unknown = sorted(set(raw) - set(RUN_CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    cfg = {}
    for key, (types, default) in RUN_CONFIG_KEYS.items():
        if key not in raw or raw[key] is None:
            if default is REQUIRED:
                raise ConfigError(f"missing required config key {key!r}")
            cfg[key] = default
            continue
        value = raw[key]
        # bool is an int subclass; only accept it where a bool is expected
        if (isinstance(value, bool) and types is not bool) or not isinstance(value, types):
            raise ConfigError(f"config key {key!r} has the wrong type: {value!r}")
        cfg[key] = value
    if cfg["task"] not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}, got {cfg['task']!r}")
    if cfg["preset"] is not None and cfg["layers"] is not None:
        raise ConfigError("give either 'preset' or 'layers', not both")
    if cfg["preset"] is not None and cfg["preset"] not in TASKS:
        raise ConfigError(f"preset must be one of {TASKS}, got {cfg['preset']!r}")
    if not 0 < cfg["dropout_rate"] < 1:
        raise ConfigError("dropout_rate must be in (0, 1)")
    if not 0 <= cfg["val_fraction"] < 1:
        raise ConfigError("val_fraction must be in [0, 1)")
    if cfg["samples_per_image"] < 1 or cfg["val_samples_per_image"] < 1:
        raise ConfigError("samples_per_image and val_samples_per_image must be >= 1")
    try:
        _train_config(cfg)
        propagate_shapes(_network_spec(cfg))
    except (ValueError, TypeError, PatchNetError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def _train_config(cfg) -> TrainConfig:
    return TrainConfig(
        batch_size=cfg["batch_size"],
        learning_rate=float(cfg["learning_rate"]),
        momentum=float(cfg["momentum"]),
        epochs=cfg["epochs"],
        iterations_per_epoch=cfg["iterations_per_epoch"],
        weighting=cfg["weighting"],
        dropout=cfg["dropout"],
        seed=cfg["seed"],
        init=cfg["init"],
    )


def _network_spec(cfg) -> NetworkSpec:
    if cfg["layers"] is not None:
        layers = [spec_from_dict(d) for d in cfg["layers"]]
        aux = [i for i, s in enumerate(layers) if getattr(s, "aux_inputs", 0)]
        spec = NetworkSpec(tuple(cfg["input_shape"]), layers, aux[0] if aux else None)
    else:
        preset = cfg["preset"] or cfg["task"]
        spec = road_spec(cfg["spatial_prior"]) if preset == "road" else urban_spec(cfg["spatial_prior"])
    if cfg["dropout"]:
        spec = with_dropout(spec, cfg["dropout_rate"])
    return spec


def _embedded_config(raw_cfg: dict) -> dict:
    """The config as recorded in artifacts: everything except where outputs go."""
    return {k: v for k, v in raw_cfg.items() if k != "output_dir"}


# -- commands -----------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.count < 1:
        raise CliError("--count must be >= 1")
    os.makedirs(args.out, exist_ok=True)
    seeds = np.random.SeedSequence(args.seed).generate_state(args.count)
    entries = []
    for i, s in enumerate(seeds):
        image = generate_synthetic_scene(args.kind, int(s))
        stem = f"{args.kind}_{i:04d}"
        entry = data.save_labeled_image(image, args.out, stem)
        entry.update(kind=args.kind, seed=int(s))
        entries.append(entry)
    path = os.path.join(args.out, "manifest.json")
    with open(path, "w") as fh:
        json.dump(entries, fh, indent=1, sort_keys=True)
    print(path)
    return EXIT_OK


def _load_images(manifest):
    try:
        return [data.load_labeled_image(e) for e in data.load_manifest(manifest)]
    except OSError as exc:
        raise DataError(f"cannot read dataset: {exc}") from exc


def cmd_train(args) -> int:
    try:
        cfg = load_run_config(args.config)
        with open(args.config) as fh:
            raw = json.load(fh)
        train_images = _load_images(cfg["manifest"])
        if cfg["val_manifest"]:
            val_images = _load_images(cfg["val_manifest"])
        else:
            n_val = int(round(cfg["val_fraction"] * len(train_images)))
            if n_val and n_val < len(train_images):
                train_images, val_images = train_images[:-n_val], train_images[-n_val:]
            else:
                val_images = []
        if not train_images:
            raise DataError("no training images")
    except (PatchNetError, KeyError) as exc:
        raise CliError(str(exc)) from exc

    tc = _train_config(cfg)
    spec = _network_spec(cfg)
    embedded = _embedded_config(raw)
    names = list(class_names(cfg["task"]))
    metadata = {"task": cfg["task"], "class_names": names, "config": embedded, "config_hash": config_hash(embedded)}
    rng = np.random.default_rng(cfg["seed"])
    model = build(spec, tc.init, rng, metadata=metadata)
    pool = data.build_training_pool(train_images, cfg["samples_per_image"], tc.weighting, rng)
    validate = None
    if val_images:
        val_pool = data.build_training_pool(val_images, cfg["val_samples_per_image"], "none", rng)
        validate = lambda m: evaluate_pool(m, val_pool)  # noqa: E731

    def log(record):
        print(json.dumps(record, sort_keys=True), flush=True)

    report = train(model, pool, tc, validate=validate, log=log)

    out = cfg["output_dir"]
    os.makedirs(out, exist_ok=True)
    model.save(os.path.join(out, "model.ptnm"))
    report.to_jsonl(os.path.join(out, "report.jsonl"), header={"config": embedded, "config_hash": metadata["config_hash"]})
    columns = ["epoch", "train_loss", "val_loss", "val_accuracy", "val_metric"]
    with open(os.path.join(out, "loss_curve.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in report.records:
            w.writerow(["" if r.get(c) is None else r[c] for c in columns])
    return EXIT_OK


def _image_paths(path):
    if os.path.isdir(path):
        paths = sorted(glob.glob(os.path.join(path, "*.ppm")))
        paths = [p for p in paths if not p.endswith("_overlay.ppm")]
        if not paths:
            raise CliError(f"no .ppm images in {path}")
        return paths
    if not os.path.exists(path):
        raise CliError(f"image not found: {path}")
    return [path]


def cmd_predict(args) -> int:
    try:
        model = load(args.model)
    except OSError as exc:
        raise CliError(f"cannot read model {args.model}: {exc.strerror}") from exc
    except FormatError as exc:
        raise CliError(str(exc)) from exc
    paths = _image_paths(args.image)
    postproc = None
    if args.postproc:
        try:
            postproc = SegmentationParams(k=args.k, sigma=args.sigma)
        except (ValueError, PatchNetError) as exc:
            raise CliError(str(exc)) from exc
    binary = model.output_width == 1
    provenance = {
        "model_config_hash": model.metadata.get("config_hash"),
        "postproc": args.postproc,
        "k": args.k,
        "sigma": args.sigma,
    }
    comment = "patchnet " + json.dumps(provenance, sort_keys=True)
    outputs = []
    for path in paths:
        try:
            pixels = data.load_image(path)
        except (OSError, FormatError) as exc:
            raise CliError(f"cannot read image {path}: {exc}") from exc
        stem = os.path.splitext(os.path.basename(path))[0]
        prob, labels = label_image(model, pixels, postproc=postproc, threads=args.threads)
        files = {"labels": f"{stem}_pred.pgm", "prob": f"{stem}_prob.ptnt", "overlay": f"{stem}_overlay.ppm"}
        pnm.write_pgm(files["labels"], labels, comment=comment)
        save_tensor(files["prob"], prob)
        pnm.write_ppm(files["overlay"], overlay(pixels, labels, binary), comment=comment)
        outputs.append({"image": os.path.abspath(path), **files})
        print(files["labels"])
    with open("predict.json", "w") as fh:
        json.dump({**provenance, "model": os.path.abspath(args.model), "outputs": outputs}, fh, indent=1, sort_keys=True)
    return EXIT_OK


def _prediction_for(pred_dir, stem, binary):
    """Score or label map predicted for ``stem``; falls back to a plain label map."""
    prob = os.path.join(pred_dir, f"{stem}_prob.ptnt")
    if binary and os.path.exists(prob):
        return load_tensor(prob)[1], True
    for name in (f"{stem}_pred.pgm", f"{stem}_labels.pgm"):
        path = os.path.join(pred_dir, name)
        if os.path.exists(path):
            return data.load_labelmap(path), False
    return None, False


def cmd_eval(args) -> int:
    truths = sorted(glob.glob(os.path.join(args.truth, "*_labels.pgm")))
    if not truths:
        raise CliError(f"no *_labels.pgm ground truth in {args.truth}")
    binary = args.task == "road"
    K = len(class_names(args.task))
    scores, flags, weights = [], [], []
    cm = np.zeros((K, K), dtype=np.int64)
    per_image, missing = {}, []
    for tpath in truths:
        stem = os.path.basename(tpath)[: -len("_labels.pgm")]
        pred, is_score = _prediction_for(args.pred, stem, binary)
        if pred is None:
            missing.append(stem)
            continue
        truth = data.load_labelmap(tpath)
        if pred.shape != truth.shape:
            raise CliError(f"{stem}: prediction {pred.shape} does not match ground truth {truth.shape}")
        keep = truth != UNLABELED
        labels = (pred >= 0.5).astype(np.int64) if is_score else pred.astype(np.int64)
        img_cm = confusion_matrix(truth, labels, K)
        cm += img_cm
        per_image[stem] = dict(zip(("orr", "arr"), orr_arr(img_cm)))
        if binary:
            w = np.ones(truth.shape)
            if args.weights:
                wpath = os.path.join(args.weights, f"{stem}_weights.ptnt")
                if not os.path.exists(wpath):
                    raise CliError(f"missing weight map {wpath}")
                w = load_tensor(wpath).astype(np.float64)
            scores.append(np.asarray(pred, dtype=np.float64)[keep])
            flags.append(truth[keep] == 1)
            weights.append(w[keep])
    if not per_image:
        raise CliError(f"no predictions in {args.pred} match the ground truth in {args.truth}")
    if missing:
        print(f"WARNING: no prediction for {len(missing)} ground-truth images; they are not scored", file=sys.stderr)
    orr, arr = orr_arr(cm)
    metrics = {"task": args.task, "images": len(per_image), "missing": missing, "orr": orr, "arr": arr,
               "confusion": cm.tolist(), "per_image": per_image,
               "weighted": bool(args.weights)}
    if binary:
        ev = BinaryEval(np.concatenate(scores), np.concatenate(flags), np.concatenate(weights))
        f, t, p, r = max_f(ev)
        metrics.update(maxF=f, threshold=t, precision=p, recall=r)
        write_pr_curve("pr_curve.csv", ev)
    with open("metrics.json", "w") as fh:
        json.dump(metrics, fh, indent=1, sort_keys=True)
    summary = {k: metrics[k] for k in ("orr", "arr", "maxF") if k in metrics}
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_suite

    try:
        results = run_suite(args.preset)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    failed = 0
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        failed += not res.passed
        print(f"{status} {res.name} rel_error={res.rel_error:.3e}")
    print(f"{len(results) - failed}/{len(results)} checks passed")
    if failed:
        raise CliError(f"{failed} gradient checks failed", EXIT_RUNTIME)
    return EXIT_OK


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS: a subcommand must not overwrite a value given before it
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker threads (default: $PATCHNET_THREADS or the number of logical cores)")
    parser = _Parser(prog="patchnet", description="Convolutional patch networks for pixel-wise labeling.",
                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--kind", choices=TASKS, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train a model from a run config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="label images (a file or a directory of .ppm)")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--postproc", action="store_true")
    p.add_argument("--k", type=float, default=550.0)
    p.add_argument("--sigma", type=float, default=0.5)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", parents=[common], help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--task", choices=TASKS, required=True)
    p.add_argument("--weights", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", parents=[common], help="run the finite-difference suites")
    p.add_argument("--preset", default="tiny")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "threads", None) is None:
            args.threads = default_threads()
        if args.threads < 1:
            raise CliError("--threads must be >= 1")
        set_num_threads(args.threads)
        return args.func(args)
    except CliError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, DataError) as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - the exit code contract covers everything else
        print(f"ERROR: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
