"""Command-line front end: prepare, train, eval, noise-sweep, inspect."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
from pathlib import Path

import click
import numpy as np
import yaml

from . import __version__
from .data import (
    CLASS_NAMES,
    PRESETS,
    concat_raw,
    file_digest,
    load_cifar10,
    load_idx,
    load_prepared,
    prepare,
    preset,
    save_prepared,
)
from .errors import TrainingError
from .schema import METRICS_FORMAT
from .statevector import NoiseModel
from .training import (
    METHODS,
    TrainConfig,
    evaluate_model,
    load_checkpoint,
    method_of,
    save_checkpoint,
    train_method,
)

log = logging.getLogger("qensemble")

DATA_DIR_ENV = "QENSEMBLE_DATA_DIR"
DEFAULT_SWEEP_MAX = (1e-3, 1e-2)
DEFAULT_SWEEP_STEPS = 5
LOG_FORMAT = "qensemble-trainlog/1"
SWEEP_FORMAT = "qensemble-sweep/1"

_IDX_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def data_dir() -> Path:
    """Dataset cache root: ``$QENSEMBLE_DATA_DIR`` or ``~/.cache/qensemble``."""
    env = os.environ.get(DATA_DIR_ENV)
    return Path(env) if env else Path.home() / ".cache" / "qensemble"


def _find(folder: Path, stem: str) -> Path | None:
    for name in (stem, stem + ".gz"):
        if (folder / name).exists():
            return folder / name
    return None


def load_raw(dataset: str, folder: Path):
    """Load every split found in ``folder``; our own 80/20 split is applied later."""
    if not folder.is_dir():
        raise click.ClickException(f"dataset directory {folder} does not exist (set {DATA_DIR_ENV} or --source)")
    if dataset == "cifar10":
        batches = sorted(folder.glob("data_batch_*.bin")) + sorted(folder.glob("test_batch.bin"))
        if not batches:
            raise click.ClickException(f"no CIFAR-10 batch files in {folder}")
        return load_cifar10(batches), [str(p) for p in batches]
    parts, used = [], []
    for split in ("train", "test"):
        img, lab = (_find(folder, s) for s in _IDX_FILES[split])
        if img and lab:
            parts.append(load_idx(img, lab))
            used += [str(img), str(lab)]
    if not parts:
        raise click.ClickException(f"no IDX image/label pair in {folder}")
    return concat_raw(parts), used


# -- configuration ------------------------------------------------------------

TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)}
CONFIG_KEYS = TRAIN_KEYS | {"method", "out"}


def read_config(path) -> dict:
    """Read a YAML or JSON config file, rejecting unknown keys."""
    if path is None:
        return {}
    text = Path(path).read_text()
    doc = yaml.safe_load(text) if text.strip() else {}
    if not isinstance(doc, dict):
        raise click.BadParameter("config must be a mapping", param_hint="--config")
    unknown = sorted(set(doc) - CONFIG_KEYS)
    if unknown:
        raise click.BadParameter(f"unknown config keys {unknown}; allowed: {sorted(CONFIG_KEYS)}",
                                 param_hint="--config")
    return doc


def merge_config(file_values: dict, flags: dict) -> dict:
    """Flags that were given win over file values."""
    merged = dict(file_values)
    merged.update({k: v for k, v in flags.items() if v is not None})
    return merged


def parse_levels(text: str) -> list[tuple[float, float]]:
    """``"0,1e-4:1e-3"`` -> [(0, 0), (1e-4, 1e-3)]; a bare number sets p1 = p2."""
    levels = []
    for item in filter(None, (t.strip() for t in text.split(","))):
        p1, _, p2 = item.partition(":")
        try:
            pair = (float(p1), float(p2) if p2 else float(p1))
        except ValueError:
            raise click.BadParameter(f"cannot parse noise level {item!r}", param_hint="--levels") from None
        levels.append(pair)
    if not levels:
        raise click.BadParameter("empty noise level list", param_hint="--levels")
    return levels


def interpolate_levels(steps: int, p1_max: float, p2_max: float) -> list[tuple[float, float]]:
    if steps < 1:
        raise click.BadParameter("need at least one level", param_hint="--steps")
    if steps == 1:
        return [(0.0, 0.0)]
    return [(float(t * p1_max), float(t * p2_max)) for t in np.linspace(0.0, 1.0, steps)]


def _run(fn):
    """Turn package errors into a clean message and exit status 1."""
    try:
        return fn()
    except (ValueError, OSError, TrainingError) as exc:
        raise click.ClickException(str(exc)) from exc


def _load_data(path):
    ds, _, info = _run(lambda: load_prepared(path))
    return ds, info


def _noise(p1, p2):
    if p1 is None and p2 is None:
        return None
    return _run(lambda: NoiseModel(p1 or 0.0, p2 or 0.0))


# -- commands -----------------------------------------------------------------


@click.group()
@click.version_option(__version__, prog_name="qensemble")
@click.option("-v", "--verbose", count=True, help="-v for progress, -vv for debug output.")
def main(verbose):
    """Ensembles of 5-qubit variational classifiers with OneVsAll error correction."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")


@main.command("prepare")
@click.argument("task", type=click.Choice(PRESETS))
@click.option("--source", type=click.Path(path_type=Path), default=None,
              help=f"Raw dataset directory (default ${DATA_DIR_ENV}/<dataset>).")
@click.option("--out", "-o", type=click.Path(path_type=Path), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--subset", type=int, default=None, help="Keep this many task images (seeded draw).")
@click.option("--pca-on", type=click.Choice(["train", "all"]), default="train", show_default=True)
def cmd_prepare(task, source, out, seed, subset, pca_on):
    """Filter TASK classes, fit PCA to 32 features, split 80/20 and save."""
    dataset, cmap = preset(task)
    folder = source or data_dir() / dataset
    raw, used = _run(lambda: load_raw(dataset, folder))
    ds, pca = _run(lambda: prepare(raw, cmap, seed=seed, subset=subset, pca_on=pca_on))
    info = {
        "task": task,
        "dataset": dataset,
        "seed": seed,
        "subset": subset,
        "pca_on": pca_on,
        "class_names": [CLASS_NAMES[dataset][c] for c in cmap.classes],
        "sources": [Path(p).name for p in used],
    }
    out.parent.mkdir(parents=True, exist_ok=True)
    _run(lambda: save_prepared(out, ds, pca, info))
    click.echo(f"{task}: {len(ds.train_idx)} train / {len(ds.test_idx)} test samples, "
               f"classes {list(cmap.classes)} -> {out}")


@main.command("train")
@click.option("--data", "data_path", type=click.Path(exists=True, path_type=Path), required=True,
              help="File written by `qensemble prepare`.")
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path), default=None,
              help="YAML/JSON file with method, out and training fields.")
@click.option("--method", type=click.Choice(METHODS), default=None, help="Default: corrected.")
@click.option("--out", "-o", type=click.Path(path_type=Path), default=None, help="Output directory.")
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--learning-rate", type=float, default=None)
@click.option("--num-blocks", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=None, help="Worker processes (default: CPU count).")
def cmd_train(data_path, config_path, method, out, epochs, batch_size, learning_rate, num_blocks, seed, workers):
    """Train one method and write checkpoint.json plus train_log.csv."""
    flags = dict(method=method, out=out, epochs=epochs, batch_size=batch_size,
                 learning_rate=learning_rate, num_blocks=num_blocks, seed=seed, workers=workers)
    conf = merge_config(read_config(config_path), flags)
    method = conf.pop("method", "corrected")
    if method not in METHODS:
        raise click.BadParameter(f"unknown method {method!r}", param_hint="method")
    out_dir = Path(conf.pop("out", None) or "runs")
    conf.setdefault("workers", os.cpu_count() or 1)
    cfg = _run(lambda: TrainConfig(**conf))
    ds, info = _load_data(data_path)
    model, histories = _run(lambda: train_method(method, ds, cfg))

    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "train_log.csv", "w", newline="") as fh:
        fh.write(f"# {LOG_FORMAT}\n")
        writer = csv.writer(fh)
        writer.writerow(["model", "epoch", "loss", "batch_accuracy"])
        for name, rows in histories.items():
            for epoch, value, acc in rows:
                writer.writerow([name, epoch, repr(float(value)), repr(float(acc))])
    extra = {"task": info.get("task"), "data_digest": file_digest(data_path), "version": __version__}
    save_checkpoint(out_dir / "checkpoint.json", model, cfg, classes=ds.class_map.classes, extra=extra)
    click.echo(f"trained {method}: {len(model.models)} models -> {out_dir / 'checkpoint.json'}")


def _load_pair(ckpt_path, data_path):
    model, doc = _run(lambda: load_checkpoint(ckpt_path))
    ds, _ = _load_data(data_path)
    digest = doc.get("data_digest")
    if digest and digest != file_digest(data_path):
        log.warning("%s was trained on different data (digest mismatch)", ckpt_path)
    if list(ds.class_map.classes) != doc.get("classes"):
        raise click.ClickException(
            f"class list mismatch: checkpoint {doc.get('classes')} vs data {list(ds.class_map.classes)}")
    return model, ds


def _evaluate(model, ds, ckpt_path, split, noise, gamma, shots, seed):
    if gamma is not None and method_of(model) != "corrected":
        raise click.BadParameter("--gamma only applies to corrected checkpoints", param_hint="--gamma")
    metrics = _run(lambda: evaluate_model(model, ds, split, noise=noise, gamma=gamma, shots=shots, seed=seed))
    doc_out = {"format": METRICS_FORMAT, **metrics.to_dict()}
    used_gamma = gamma if gamma is not None else getattr(model, "gamma", None)
    doc_out.update(gamma=used_gamma, shots=shots, seed=seed, checkpoint=str(ckpt_path))
    return metrics, doc_out


@main.command("eval")
@click.argument("checkpoint", type=click.Path(exists=True, path_type=Path))
@click.option("--data", "data_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--split", type=click.Choice(["train", "test", "all"]), default="test", show_default=True)
@click.option("--p1", type=float, default=None, help="Single-qubit depolarizing probability.")
@click.option("--p2", type=float, default=None, help="Two-qubit depolarizing probability.")
@click.option("--gamma", type=float, default=None, help="Override the calibrated threshold.")
@click.option("--shots", type=int, default=None, help="Sample expectations from this many shots.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "-o", type=click.Path(path_type=Path), default=None, help="Metrics JSON path.")
def cmd_eval(checkpoint, data_path, split, p1, p2, gamma, shots, seed, out):
    """Evaluate CHECKPOINT and write metrics JSON."""
    model, ds = _load_pair(checkpoint, data_path)
    metrics, doc = _evaluate(model, ds, checkpoint, split, _noise(p1, p2), gamma, shots, seed)
    out = out or checkpoint.with_name(f"metrics_{split}.json")
    out.write_text(json.dumps(doc, indent=1) + "\n")
    click.echo(metrics.summary())


@main.command("noise-sweep")
@click.argument("checkpoint", type=click.Path(exists=True, path_type=Path))
@click.option("--data", "data_path", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--levels", default=None, help='Explicit levels, e.g. "0,1e-4:1e-3" (p1:p2).')
@click.option("--steps", type=int, default=DEFAULT_SWEEP_STEPS, show_default=True,
              help="Interpolated levels from 0 to the maximum when --levels is absent.")
@click.option("--max-p1", type=float, default=DEFAULT_SWEEP_MAX[0], show_default=True)
@click.option("--max-p2", type=float, default=DEFAULT_SWEEP_MAX[1], show_default=True)
@click.option("--split", type=click.Choice(["train", "test", "all"]), default="test", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "-o", type=click.Path(path_type=Path), default=None, help="CSV path.")
def cmd_noise_sweep(checkpoint, data_path, levels, steps, max_p1, max_p2, split, seed, out):
    """Accuracy of CHECKPOINT at each depolarizing noise level, as CSV."""
    pairs = parse_levels(levels) if levels is not None else interpolate_levels(steps, max_p1, max_p2)
    model, ds = _load_pair(checkpoint, data_path)
    rows = []
    for p1, p2 in sorted(set(pairs)):
        metrics, _ = _evaluate(model, ds, checkpoint, split, _noise(p1, p2), None, None, seed)
        rows.append((p1, p2, metrics.accuracy, metrics.trigger_rate))
        log.info("p1=%g p2=%g accuracy %.4f", p1, p2, metrics.accuracy)
    out = out or checkpoint.with_name("noise_sweep.csv")
    with open(out, "w", newline="") as fh:
        fh.write(f"# {SWEEP_FORMAT}\n")
        writer = csv.writer(fh)
        writer.writerow(["p1", "p2", "accuracy", "trigger_rate"])
        writer.writerows(rows)
    for p1, p2, acc, _ in rows:
        click.echo(f"p1={p1:g} p2={p2:g} accuracy={acc:.4f}")


@main.command("inspect")
@click.argument("checkpoint", type=click.Path(exists=True, path_type=Path))
def cmd_inspect(checkpoint):
    """Print a summary of CHECKPOINT."""
    model, doc = _run(lambda: load_checkpoint(checkpoint))
    click.echo(f"format   {doc['format']}")
    click.echo(f"method   {doc['method']} ({len(model.models)} models)")
    click.echo(f"task     {doc.get('task')} classes {doc.get('classes')}")
    if "gamma" in doc:
        click.echo(f"gamma    {doc['gamma']:.6g}")
    cfg = doc.get("config", {})
    click.echo("config   " + " ".join(f"{k}={v}" for k, v in sorted(cfg.items())))
    for m in model.models:
        click.echo(f"  {m.name:<10} params={m.params.size:<4} weight={m.accuracy_weight:.4f} "
                   f"best_loss={m.best_loss:.4f}")


if __name__ == "__main__":
    main()
