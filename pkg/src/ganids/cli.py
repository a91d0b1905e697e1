"""Command-line pipeline: preprocess -> gan-train -> augment -> train -> evaluate -> explain.

Every stage writes into its own sub-folder of the work directory together with
a ``run_meta.json`` that records the config hash and the hashes of the files it
read and wrote (and a ``timings.json`` with the wall-clock duration).  A stage refuses to run on upstream artifacts produced under a
different configuration (or whose own inputs have since changed) unless
``--force`` is given.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .data import (Preprocessor, codec_for, drop_missing, load_csv, load_dataset_csv, load_sidecar,
                   save_dataset_csv, save_sidecar, stratified_split_indices)
from .errors import CheckpointError, ConfigError, DataError, GanidsError, StageError, TrainingError
from .gan import GanTrainConfig, augment_dataset, class_deficits, load_gan, save_gan, train_gan
from .lime import LimeConfig, explain_instance
from .metrics import confusion_matrix, dump_json, emit_report, one_vs_rest_curves, precision_recall_f1
from .model import ModelConfig, TrainConfig, build_model, load_checkpoint, save_checkpoint, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAINING = 0, 1, 2, 3

UPSTREAM = {
    "preprocess": (),
    "gan-train": ("preprocess",),
    "augment": ("preprocess", "gan-train"),
    "train": ("preprocess", "augment"),
    "evaluate": ("preprocess", "train"),
    "explain": ("preprocess", "train"),
}
FOLDER = {"preprocess": "preprocess", "gan-train": "gan", "augment": "augment",
          "train": "train", "evaluate": "evaluate", "explain": "explain"}


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Stage:
    """Book-keeping for one stage run: folders, staleness checks, run_meta.json."""

    def __init__(self, name, cfg, force=False, out=print):
        self.name = name
        self.cfg = cfg
        self.force = force
        self.out = out
        self.work = Path(cfg.work_dir)
        self.dir = self.work / FOLDER[name]
        self.inputs = {}
        self.outputs = []
        self.seed = cfgmod.stage_seed(cfg.seed, name)
        self._t0 = time.perf_counter()

    def folder(self, stage):
        return self.work / FOLDER[stage]

    def _meta(self, stage):
        p = self.folder(stage) / "run_meta.json"
        return json.loads(p.read_text(encoding="utf-8")) if p.exists() else None

    def check(self):
        own = self._meta(self.name)
        if own is not None and own["config_hash"] != self.cfg.config_hash() and not self.force:
            raise StageError(
                f"{self.dir} holds artifacts from a different configuration; use --force to overwrite"
            )
        for up in UPSTREAM[self.name]:
            meta = self._meta(up)
            if meta is None:
                raise StageError(f"missing artifacts from '{up}' in {self.folder(up)}: run {up} first")
            if meta["config_hash"] != self.cfg.config_hash() and not self.force:
                raise StageError(f"'{up}' artifacts were produced with a different configuration; "
                                 f"rerun {up} or pass --force")
            for rel, digest in meta["inputs"].items():
                p = self.work / rel
                if rel.startswith("input:"):
                    continue
                if not p.exists() or sha256_file(p) != digest:
                    if not self.force:
                        raise StageError(f"'{up}' is stale: its input {rel} changed; rerun {up}")
        self.dir.mkdir(parents=True, exist_ok=True)

    def read(self, path):
        p = Path(path)
        key = str(p.relative_to(self.work)) if p.is_relative_to(self.work) else "input:" + p.name
        self.inputs[key] = sha256_file(p)
        return p

    def wrote(self, path):
        self.outputs.append(Path(path))
        return path

    def finish(self, extra=None):
        meta = {
            "stage": self.name,
            "config_hash": self.cfg.config_hash(),
            "config": self.cfg.hashed_dict(),
            "seed": self.cfg.seed,
            "stage_seed": self.seed,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": {str(p.relative_to(self.work)): sha256_file(p) for p in sorted(self.outputs)},
        }
        if extra:
            meta.update(extra)
        dump_json(self.dir / "run_meta.json", meta)
        # wall-clock time lives in its own file so run_meta.json stays reproducible
        dump_json(self.dir / "timings.json", {"seconds": round(time.perf_counter() - self._t0, 3)})
        return meta


# ---------------------------------------------------------------- stages

def _load_split(stage, split):
    pre_dir = stage.folder("preprocess")
    pre = load_sidecar(stage.read(pre_dir / "dataset.json"))
    return pre, load_dataset_csv(stage.read(pre_dir / f"{split}.csv"), pre.codec)


def cmd_preprocess(cfg, force=False, out=print):
    st = Stage("preprocess", cfg, force, out)
    if not cfg.input:
        raise ConfigError("no input CSV given (--input or config key 'input')")
    src = Path(cfg.input)
    if not src.exists():
        raise DataError(f"input file {src} does not exist")
    st.check()
    raw = load_csv(st.read(src), label_column=cfg.label_column)
    n_read = raw.n_rows
    raw = drop_missing(raw)
    codec = codec_for(cfg.task)
    y = codec.encode(raw.cells[raw.label_column])
    tr_idx, va_idx = stratified_split_indices(y, cfg.val_fraction, st.seed)
    raw_tr, raw_va = raw.take(tr_idx), raw.take(va_idx)
    pre = Preprocessor.fit(raw_tr, cfg.task, cfg.pearson_threshold, cfg.pearson_signed, cfg.max_categories)
    train_ds, val_ds = pre.transform(raw_tr), pre.transform(raw_va)
    save_dataset_csv(train_ds, st.wrote(st.dir / "train.csv"))
    save_dataset_csv(val_ds, st.wrote(st.dir / "val.csv"))
    counts = np.bincount(y, minlength=codec.n_classes)
    save_sidecar(pre, st.wrote(st.dir / "dataset.json"), {
        "rows_read": n_read,
        "dropped_rows": raw.dropped,
        "class_counts": {n: int(c) for n, c in zip(codec.class_names, counts)},
        "train_rows": len(train_ds),
        "val_rows": len(val_ds),
    })
    st.finish()
    out(f"rows read: {n_read}, dropped (missing values): {raw.dropped}, kept: {raw.n_rows}")
    out("class counts: " + ", ".join(f"{n}={int(c)}" for n, c in zip(codec.class_names, counts)))
    out(f"train/val rows: {len(train_ds)}/{len(val_ds)}")
    out(f"selected {len(pre.selected)} features: {', '.join(pre.selected)}")
    return train_ds, val_ds


def _gan_cfg(cfg, seed, target):
    return GanTrainConfig(steps=cfg.gan_steps, batch_size=cfg.gan_batch_size, seed=seed, target_class=target,
                          lr=cfg.gan_lr, beta1=cfg.gan_beta1, output_activation=cfg.gan_output_activation)


def cmd_gan_train(cfg, force=False, out=print):
    st = Stage("gan-train", cfg, force, out)
    st.check()
    _, train_ds = _load_split(st, "train")
    for old in st.dir.glob("gan_class*.ckpt"):
        old.unlink()
    deficits = class_deficits(train_ds.y, train_ds.codec.n_classes)
    trained = []
    for cls in range(train_ds.codec.n_classes):
        if deficits[cls] == 0:
            continue
        gcfg = _gan_cfg(cfg, st.seed + cls, cls)
        gen, disc, hist = train_gan(train_ds, gcfg)
        save_gan(st.wrote(st.dir / f"gan_class{cls}.ckpt"), gen, disc, gcfg, hist)
        trained.append(cls)
        tail = hist["g_loss"][-1] if hist["g_loss"] else float("nan")
        out(f"class {train_ds.codec.class_names[cls]}: deficit {int(deficits[cls])}, "
            f"{gcfg.steps} steps, final generator loss {tail:.4f}")
    if not trained:
        out("training split already balanced; no generator needed")
    st.finish({"generators": trained})
    return trained


def cmd_augment(cfg, force=False, out=print):
    st = Stage("augment", cfg, force, out)
    st.check()
    _, train_ds = _load_split(st, "train")
    gens = {}
    for p in sorted(st.folder("gan-train").glob("gan_class*.ckpt")):
        gen, _, gcfg, _ = load_gan(st.read(p))
        gens[gcfg.target_class] = gen
    aug = augment_dataset(train_ds, gens, st.seed, cfg.augment_strategy)
    save_dataset_csv(aug, st.wrote(st.dir / "train_augmented.csv"))
    counts = aug.class_counts()
    st.finish({"class_counts": [int(c) for c in counts], "synthetic_rows": int(aug.provenance.sum())})
    out(f"augmented training set: {len(aug)} rows ({int(aug.provenance.sum())} synthetic); class counts "
        + ", ".join(f"{n}={int(c)}" for n, c in zip(aug.codec.class_names, counts)))
    return aug


def cmd_train(cfg, force=False, out=print):
    st = Stage("train", cfg, force, out)
    st.check()
    pre, val_ds = _load_split(st, "val")
    train_ds = load_dataset_csv(st.read(st.folder("augment") / "train_augmented.csv"), pre.codec)
    mcfg = ModelConfig(mode=cfg.task, n_features=train_ds.n_features, n_classes=pre.codec.n_classes,
                       extra_branches=tuple(cfg.extra_branches))
    model = build_model(mcfg, st.seed)
    tcfg = TrainConfig(batch_size=cfg.batch_size, epochs=cfg.epochs, val_fraction=cfg.val_fraction, seed=st.seed,
                       lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, epsilon=cfg.epsilon)
    history = train(model, train_ds, tcfg, val_ds)
    save_checkpoint(model, st.wrote(st.dir / "model.ckpt"))
    st.finish({"n_parameters": model.n_parameters()})
    if history:
        h = history[-1]
        out(f"trained {len(history)} epochs: train acc {h['train_accuracy']:.4f}, "
            f"val acc {h['val_accuracy']:.4f}, detection rate {h['detection_rate']:.4f}")
    else:
        out("0 epochs requested; saved the untrained model")
    return model


def _load_model(st):
    try:
        return load_checkpoint(st.read(st.folder("train") / "model.ckpt"))
    except FileNotFoundError as exc:
        raise StageError("no trained model found: run train first") from exc


def cmd_evaluate(cfg, force=False, out=print):
    st = Stage("evaluate", cfg, force, out)
    if not (st.folder("train") / "model.ckpt").exists():
        raise StageError("no trained model checkpoint found: run train first")
    st.check()
    pre, val_ds = _load_split(st, "val")
    model = _load_model(st)
    names = list(pre.codec.class_names)
    pred = model.predict(val_ds.X)
    cm = confusion_matrix(val_ds.y, pred, pre.codec.n_classes, names)
    table = precision_recall_f1(cm)
    curves = one_vs_rest_curves(val_ds.y, model.class_scores(val_ds.X), names)
    for p in emit_report(st.dir, model.history, table, cm, curves):
        st.wrote(p)
    st.finish({"accuracy": table.accuracy})
    out(f"validation accuracy {table.accuracy:.4f}; weighted F1 {table.weighted['f1']:.4f}")
    for n in names:
        auc = curves.auc[n]
        out(f"  {n}: AUC {'n/a' if auc is None else f'{auc:.4f}'}")
    return table


def cmd_explain(cfg, force=False, out=print, instance=0, class_idx=None):
    st = Stage("explain", cfg, force, out)
    if not (st.folder("train") / "model.ckpt").exists():
        raise StageError("no trained model checkpoint found: run train first")
    st.check()
    pre, val_ds = _load_split(st, "val")
    if not 0 <= instance < len(val_ds):
        raise DataError(f"instance index {instance} out of range: validation split has {len(val_ds)} rows")
    model = _load_model(st)
    x = val_ds.X[instance]
    if class_idx is None:
        class_idx = int(model.predict(x[None, :])[0])
    d = val_ds.n_features
    lcfg = LimeConfig(n_samples=cfg.lime_samples, top_k=min(cfg.lime_top_k, d), seed=st.seed,
                      kernel_width=cfg.lime_kernel_width or None,
                      perturbation_scale=cfg.lime_perturbation_scale)
    exp = explain_instance(model, x, class_idx, lcfg, val_ds.feature_names, instance, list(pre.codec.class_names))
    base = st.dir / f"explanation_{instance}"
    Path(f"{base}.json").write_text(exp.dumps(), encoding="utf-8")
    Path(f"{base}.txt").write_text(exp.render(), encoding="utf-8")
    st.wrote(f"{base}.json")
    st.wrote(f"{base}.txt")
    st.finish({"instance": instance, "class": class_idx})
    out(exp.render().rstrip("\n"))
    return exp


def cmd_run_all(cfg, force=False, out=print):
    cmd_preprocess(cfg, force, out)
    cmd_gan_train(cfg, force, out)
    cmd_augment(cfg, force, out)
    cmd_train(cfg, force, out)
    cmd_evaluate(cfg, force, out)
    cmd_explain(cfg, force, out)


# ---------------------------------------------------------------- argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _global_flags():
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    p.add_argument("--config", metavar="PATH", help="TOML run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--task", choices=("multiclass", "binary"))
    p.add_argument("--work-dir", metavar="PATH")
    p.add_argument("--input", metavar="CSV", help="flow-feature CSV (preprocess, run-all)")
    p.add_argument("--force", action="store_true", help="overwrite or reuse stale artifacts")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--gan-steps", type=int)
    return p


def build_parser():
    common = _global_flags()
    parser = _Parser(prog="ganids", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("preprocess", "gan-train", "augment", "train", "evaluate", "run-all"):
        sub.add_parser(name, parents=[common])
    ex = sub.add_parser("explain", parents=[common])
    ex.add_argument("--instance", type=int, default=0, help="row index in the validation split")
    ex.add_argument("--class", dest="class_idx", type=int, help="class to explain (default: predicted)")
    return parser


def main(argv=None, out=print):
    if argv is not None:
        argv = [str(a) for a in argv]  # allow Path objects from Python callers
    args = build_parser().parse_args(argv)
    overrides = {k: getattr(args, k, None) for k in
                 ("seed", "task", "work_dir", "input", "epochs", "batch_size", "gan_steps")}
    try:
        cfg = cfgmod.resolve(getattr(args, "config", None), overrides)
        force = getattr(args, "force", False)
        cmd = args.command
        if cmd == "preprocess":
            cmd_preprocess(cfg, force, out)
        elif cmd == "gan-train":
            cmd_gan_train(cfg, force, out)
        elif cmd == "augment":
            cmd_augment(cfg, force, out)
        elif cmd == "train":
            cmd_train(cfg, force, out)
        elif cmd == "evaluate":
            cmd_evaluate(cfg, force, out)
        elif cmd == "explain":
            cmd_explain(cfg, force, out, args.instance, args.class_idx)
        else:
            cmd_run_all(cfg, force, out)
    except (ConfigError, StageError) as exc:
        print(f"ganids: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError) as exc:
        print(f"ganids: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"ganids: training error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except GanidsError as exc:
        print(f"ganids: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"ganids: I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
