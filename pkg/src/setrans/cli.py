"""Command-line entry point.

Subcommands cover the whole pipeline: synthesize a dataset, extract
features, train, evaluate, demo the augmentations, and inspect a trained
model's attention and channel gates.  Figures are emitted as data (CSV
grids and 8-bit PGM images) rather than rendered plots, and every
artifact writer stages to a temp file first, so an aborted run leaves
nothing half-written.  All randomness flows from --seed, which defaults
to one fixed constant so the quickstart reproduces byte for byte.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import data_io
from .augment import FMixConfig, sample_fmix_mask, spec_augment
from .errors import FormatError, InputError, SetransError
from .features import ASD_WINDOW, TASK_CONFIGS, context_windows, log_mel
from .model import SETrans, config_for_task
from .objectives import roc_curve
from .tensor import Tensor, no_grad
from .training import TrainConfig, build_task_data, evaluate, train

DEFAULT_SEED = 7


# ---------------------------------------------------------------------------
# small helpers
# ---------------------------------------------------------------------------

def _dtype_of(mode: str):
    return np.float32 if mode == "f32" else np.float64


def _out_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def save_grid_csv(path: str, values: np.ndarray):
    """A bare comma-separated grid of numbers, one matrix row per line."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise InputError(f"CSV grid needs 2-D values, got shape {values.shape}")
    lines = [",".join(f"{v:.17g}" for v in row) for row in values]
    data_io.atomic_write(path, ("\n".join(lines) + "\n").encode())


def _split_clips(clips, split: str):
    if split == "all":
        return clips
    chosen = [c for c in clips if c.split == split]
    if not chosen:
        raise InputError(f"manifest has no clips in the {split!r} split")
    return chosen


def _infer_n_classes(clips, task: str) -> int:
    if task == "ust":
        return len(clips[0].labels)
    return int(max(c.labels for c in clips)) + 1


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def run_synth(args) -> int:
    out = _out_dir(args.out)
    if args.task == "asc":
        clips = data_io.synth_asc(seed=args.seed)
    elif args.task == "ust":
        clips = data_io.synth_ust(seed=args.seed)
    else:
        clips = data_io.synth_asd(seed=args.seed)
    manifest = data_io.write_dataset(clips, out)
    print(f"wrote {len(clips)} clips to {manifest}")
    counts: dict[tuple, int] = {}
    for c in clips:
        key = (str(c.labels), c.split)
        counts[key] = counts.get(key, 0) + 1
    for (label, split), n in sorted(counts.items()):
        print(f"  labels={label} split={split}: {n}")
    return 0


def run_extract(args) -> int:
    clips = _split_clips(data_io.load_manifest(args.manifest), args.split)
    base = os.path.dirname(os.path.abspath(args.manifest))
    fc = TASK_CONFIGS[args.task]
    out = _out_dir(args.out)
    records = []
    for clip in clips:
        spec = log_mel(data_io.audio_of(clip, fc.sample_rate, base), fc)
        stem = os.path.splitext(os.path.basename(clip.path))[0]
        name = f"{stem}.txt"
        data_io.save_matrix(os.path.join(out, name), spec.values)
        rec = clip.to_record()
        rec["feature"] = name
        records.append(rec)
    data_io.atomic_write(os.path.join(out, "features.jsonl"),
                         ("\n".join(json.dumps(r) for r in records) + "\n").encode())
    print(f"extracted {len(records)} feature matrices "
          f"({fc.target_frames}x{fc.n_mels}) to {out}")
    return 0


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except ValueError as exc:
            raise FormatError(f"{path}: invalid JSON ({exc})")
    if not isinstance(cfg, dict):
        raise InputError(f"{path}: config must be a JSON object")
    return cfg


def _model_from_flags(args, task: str, n_classes: int, file_cfg: dict) -> SETrans:
    overrides = dict(file_cfg.get("model", {}))
    if "channels" in overrides:
        overrides["channels"] = tuple(overrides["channels"])
    if args.heads is not None:
        overrides["n_heads"] = args.heads
    if args.layers is not None:
        overrides["n_layers"] = args.layers
    if args.ffn is not None:
        overrides["d_ff"] = args.ffn
    return SETrans(config_for_task(task, n_classes, **overrides),
                   seed=args.seed, dtype=_dtype_of(args.mode))


def run_train(args) -> int:
    file_cfg = _load_config_file(args.config)
    clips = data_io.load_manifest(args.manifest)
    base = os.path.dirname(os.path.abspath(args.manifest))
    n_classes = _infer_n_classes(clips, args.task)
    data = build_task_data(_split_clips(clips, "train"), args.task,
                           n_classes=n_classes, base_dir=base)
    model = _model_from_flags(args, args.task, n_classes, file_cfg)
    train_kw = dict(file_cfg.get("train", {}))
    for key, value in (("learning_rate", args.lr), ("batch_size", args.batch_size),
                       ("epochs", args.epochs), ("augment", args.augment),
                       ("checkpoint_every", args.checkpoint_every)):
        if value is not None:
            train_kw[key] = value
    config = TrainConfig(task=args.task, seed=args.seed, **train_kw)
    out = _out_dir(args.out)
    result = train(data, config, model=model,
                   checkpoint_path=os.path.join(out, "model.ckpt"))
    data_io.save_csv(os.path.join(out, "log.csv"), ["epoch", "loss", "metric"],
                     [(r.epoch, r.loss, r.metric) for r in result.log])
    last = result.log[-1]
    print(f"trained {args.task} for {config.epochs} epochs on {data.n_clips} clips")
    print(f"final: loss {last.loss:.6f}, metric {last.metric:.6f}")
    print(f"artifacts: {out}/model.ckpt, {out}/log.csv")
    return 0


def run_eval(args) -> int:
    model, meta = data_io.load_checkpoint(args.checkpoint, dtype=_dtype_of(args.mode))
    if meta.get("task") != args.task:
        raise InputError(f"checkpoint was trained for task {meta.get('task')!r}, "
                         f"not {args.task!r}")
    clips = data_io.load_manifest(args.manifest)
    base = os.path.dirname(os.path.abspath(args.manifest))
    data = build_task_data(_split_clips(clips, args.split), args.task,
                           n_classes=model.config.n_classes, base_dir=base)
    report = evaluate(model, data, batch_size=args.batch_size)
    out = _out_dir(args.out)
    data_io.save_csv(os.path.join(out, "report.csv"), ["metric", "value"],
                     sorted((k, float(v)) for k, v in report.metrics.items()))
    if args.task == "asc":
        confusion = report.curves["confusion"]
        data_io.save_csv(os.path.join(out, "confusion.csv"),
                         ["true\\pred"] + [f"class{j}" for j in range(confusion.shape[1])],
                         [[f"class{i}"] + row.tolist()
                          for i, row in enumerate(confusion)])
    elif args.task == "ust":
        rows = []
        for c in range(data.n_classes):
            curve = report.curves.get(f"pr_class{c}")
            if curve is None:
                continue
            rows += [(c, float(r), float(p)) for r, p in curve]
        data_io.save_csv(os.path.join(out, "prcurves.csv"),
                         ["class", "recall", "precision"], rows)
    else:
        scores = report.curves["anomaly_scores"]
        sections = data.labels.argmax(axis=1)
        rows = []
        for s in sorted(set(sections.tolist())):
            for d in ("source", "target"):
                here = (sections == s) & (np.asarray(data.domains) == d)
                pos = scores[here & np.asarray(data.anomalies, dtype=bool)]
                neg = scores[here & ~np.asarray(data.anomalies, dtype=bool)]
                if pos.size == 0 or neg.size == 0:
                    continue
                rows += [(s, d, float(f), float(t))
                         for f, t in roc_curve(pos, neg)]
        data_io.save_csv(os.path.join(out, "roc.csv"),
                         ["section", "domain", "fpr", "tpr"], rows)
    for line in report.lines():
        print(line)
    print(f"artifacts in {out}")
    return 0


def run_augment_demo(args) -> int:
    x = data_io.load_matrix(args.feature_file)
    rng = np.random.default_rng(args.seed)
    second = x[::-1].copy()  # time-reversed partner, so mixing is visible
    if args.method == "fmix":
        mask, lam = sample_fmix_mask(x.shape, FMixConfig(), rng)
        mixed = mask * x + (1.0 - mask) * second
    elif args.method == "mixup":
        lam = float(rng.beta(1.0, 1.0))
        mixed = lam * x + (1.0 - lam) * second
        mask = np.full(x.shape, lam)
    else:
        mixed = spec_augment(x, rng)
        mask = np.where((mixed == 0.0) & (x != 0.0), 0.0, 1.0)
        lam = float(mask.mean())
    out = _out_dir(args.out)
    print(f"method = {args.method}, lambda = {lam:.17g}")
    for name, grid in (("original", x), ("mask", mask), ("mixed", mixed)):
        data_io.save_pgm(os.path.join(out, f"{name}.pgm"), grid)
        save_grid_csv(os.path.join(out, f"{name}.csv"), grid)
    print(f"artifacts in {out}")
    return 0


def run_inspect(args) -> int:
    model, meta = data_io.load_checkpoint(args.checkpoint)
    x = data_io.load_matrix(args.feature_file)
    t, f = model.config.input_shape
    if x.shape != (t, f):
        if meta.get("task") == "asd" and x.shape[1] == f and x.shape[0] >= ASD_WINDOW:
            x = context_windows(x)[0]
        else:
            raise InputError(f"feature matrix is {x.shape}, model wants {(t, f)}")
    with no_grad():
        logits = model(x[None], training=False).data[0]
    out = _out_dir(args.out)
    attention = model.attention_maps()[0].mean(axis=1)[0]
    save_grid_csv(os.path.join(out, "attention.csv"), attention)
    gates = model.se_gates()
    w1 = gates["block1.stage2"][0]
    w2 = gates["block2.stage2"][0]
    rows = [("block1", i, float(v)) for i, v in enumerate(w1)]
    rows += [("block2", i, float(v)) for i, v in enumerate(w2)]
    data_io.save_csv(os.path.join(out, "se_weights.csv"),
                     ["block", "channel", "weight"], rows)
    top = int(np.argmax(w2))
    b, t4, f4 = 1, 4 * (t // 4), 4 * (f // 4)
    with no_grad():
        h = Tensor(x[None, :t4, :f4].reshape(b, 1, t4, f4).astype(model.dtype))
        feature_map = model.block2(model.block1(h, False), False).data[0, top]
    save_grid_csv(os.path.join(out, "top_feature_map.csv"), feature_map)
    print(f"prediction = class {int(np.argmax(logits))}")
    print(f"top block2 channel = {top} (gate {w2[top]:.6f})")
    print(f"artifacts in {out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(p, manifest=False, checkpoint=False, feature=False):
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", required=True, help="output directory")
    if manifest:
        p.add_argument("--manifest", required=True, help="JSON-lines dataset manifest")
    if checkpoint:
        p.add_argument("--checkpoint", required=True, help="SETC checkpoint path")
    if feature:
        p.add_argument("--feature-file", required=True,
                       help="matrix dump of one feature spectrogram")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="setrans",
        description="Cross-task environmental sound recognition toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--task", required=True, choices=("asc", "ust", "asd"))
    _add_common(p)
    p.set_defaults(fn=run_synth)

    p = sub.add_parser("extract", help="extract log-mel features to matrix dumps")
    p.add_argument("--task", required=True, choices=("asc", "ust", "asd"))
    p.add_argument("--split", default="all", choices=("train", "test", "all"))
    _add_common(p, manifest=True)
    p.set_defaults(fn=run_extract)

    p = sub.add_parser("train", help="train a model from a manifest")
    p.add_argument("--task", required=True, choices=("asc", "ust", "asd"))
    p.add_argument("--config", default=None,
                   help="JSON file with 'model' and 'train' overrides; "
                        "explicit flags win")
    p.add_argument("--augment", default=None,
                   choices=("none", "specaugment", "mixup", "fmix"))
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--heads", type=int, default=None)
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--ffn", type=int, default=None)
    p.add_argument("--checkpoint-every", type=int, default=None)
    p.add_argument("--mode", default="f64", choices=("f32", "f64"))
    _add_common(p, manifest=True)
    p.set_defaults(fn=run_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest split")
    p.add_argument("--task", required=True, choices=("asc", "ust", "asd"))
    p.add_argument("--split", default="test", choices=("train", "test", "all"))
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--mode", default="f64", choices=("f32", "f64"))
    _add_common(p, manifest=True, checkpoint=True)
    p.set_defaults(fn=run_eval)

    p = sub.add_parser("augment-demo", help="render augmentation examples")
    p.add_argument("--method", required=True,
                   choices=("fmix", "mixup", "specaugment"))
    _add_common(p, feature=True)
    p.set_defaults(fn=run_augment_demo)

    p = sub.add_parser("inspect", help="export attention and channel-gate maps")
    _add_common(p, checkpoint=True, feature=True)
    p.set_defaults(fn=run_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (SetransError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
