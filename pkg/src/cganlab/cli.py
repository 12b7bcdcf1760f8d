"""Command-line entry point.

Subcommands: pretrain-q, train, eval, sample, rerun. Every run writes a
manifest.json holding the fully resolved configuration, dataset checksums,
seed and artifact paths, so the run can be reproduced (see `rerun`).

Conventions: progress goes to stderr; the only stdout output is one final
JSON line per command. Exit codes: 0 success, 2 configuration or usage
error, 3 data or parse error, 1 internal failure.

Option values are resolved in layers: built-in defaults, then an optional
config file (lines of `key = value`, `#` comments), then explicit flags.
"""

from __future__ import annotations

import functools
import json
import sys
import tempfile
import time
from pathlib import Path

import click
import numpy as np

from . import data as datamod
from . import __version__
from .checkpoint import load_model, save_model, write_container
from .errors import CganlabError, ConfigError, DataError
from .models import NetworkSpec, Variant, classifier_accuracy, pretrain_approximator
from .parzen import (ParzenConfig, conditional_eval, default_sigma_grid, format_table,
                     generate_samples, report_csv)
from .rng import RngStream
from .training import TrainConfig, train

# ----------------------------------------------------------------------
# datasets


DATA_SEEDS = {"mixture-3x2": 2024, "tiny-mnist-3": 11, "tiny-digits-3": 11,
              "mnist": 11, "cifar10": 11}

DATASET_NAMES = tuple(DATA_SEEDS)

# desk-scale defaults per dataset; flags and config files override
TRAIN_DEFAULTS = {
    "mixture-3x2": {"steps": 5000, "batch_size": 256, "lr": 1.5e-3, "noise_dim": 8,
                    "g_hidden": "64,64", "d_hidden": "64,64", "q_hidden": "32",
                    "q_steps": 1500, "irgan_lam": 2.0, "samples_per_condition": 2000},
    "tiny-mnist-3": {"steps": 3000, "batch_size": 64, "lr": 5e-4, "noise_dim": 16,
                     "g_hidden": "128,128", "d_hidden": "128", "q_hidden": "64",
                     "q_steps": 2000, "irgan_lam": 2.0, "samples_per_condition": 2000},
    "tiny-digits-3": {"steps": 3000, "batch_size": 64, "lr": 5e-4, "noise_dim": 16,
                      "g_hidden": "128,128", "d_hidden": "128", "q_hidden": "64",
                      "q_steps": 2000, "irgan_lam": 2.0, "samples_per_condition": 2000},
    "mnist": {"steps": 30000, "batch_size": 64, "lr": 2e-4, "noise_dim": 64,
              "g_hidden": "512,512", "d_hidden": "512,512", "q_hidden": "256",
              "q_steps": 10000, "samples_per_condition": 10000},
    "cifar10": {"steps": 50000, "batch_size": 64, "lr": 2e-4, "noise_dim": 64,
                "g_hidden": "1024,1024", "d_hidden": "1024,1024", "q_hidden": "512",
                "q_steps": 20000, "samples_per_condition": 10000},
}

BASE_DEFAULTS = {
    "seed": 0, "lam": None, "d_steps": 1, "loss_mode": "non_saturating",
    "checkpoint_every": 0, "sigma_mode": "per_condition", "condition_shift": 0,
}


def load_dataset(name, data_dir=None):
    """Resolve a dataset name to splits plus display metadata."""
    if name not in DATA_SEEDS:
        raise ConfigError(f"unknown dataset {name!r}; expected one of {DATASET_NAMES}")
    seed = DATA_SEEDS[name]
    oracle = None
    if name == "mixture-3x2":
        train_ds, valid_ds, test_ds, oracle = datamod.mixture_3x2(seed)
        label_names = ["0", "1", "2"]
    elif name == "tiny-digits-3":
        if data_dir:
            train_ds, valid_ds, test_ds = datamod.tiny_digits3(Path(data_dir), seed)
        else:
            with tempfile.TemporaryDirectory() as tmp:
                train_ds, valid_ds, test_ds = datamod.tiny_digits3(Path(tmp), seed)
        label_names = ["0", "1", "2"]
    elif name == "tiny-mnist-3":
        if not data_dir:
            raise DataError("tiny-mnist-3 needs --data-dir pointing at the IDX files")
        train_ds, valid_ds, test_ds = datamod.tiny_mnist3(Path(data_dir), seed)
        label_names = ["0", "1", "2"]
    elif name == "mnist":
        if not data_dir:
            raise DataError("mnist needs --data-dir pointing at the IDX files")
        full = datamod.load_idx(Path(data_dir) / "train-images-idx3-ubyte",
                                Path(data_dir) / "train-labels-idx1-ubyte")
        train_ds, valid_ds, test_ds = datamod.split(full, (0.8, 0.1, 0.1), seed)
        label_names = [str(i) for i in range(10)]
    else:  # cifar10
        if not data_dir:
            raise DataError("cifar10 needs --data-dir pointing at the .bin batches")
        paths = sorted(Path(data_dir).glob("data_batch_*.bin"))
        if not paths:
            raise DataError(f"no data_batch_*.bin files under {data_dir}")
        full = datamod.load_cifar10_binary(paths)
        train_ds, valid_ds, test_ds = datamod.split(full, (0.8, 0.1, 0.1), seed)
        label_names = list(datamod.CIFAR10_LABELS)
    return {"name": name, "train": train_ds, "valid": valid_ds, "test": test_ds,
            "oracle": oracle, "label_names": label_names,
            "checksum": train_ds.meta.get("checksum", "")}


# ----------------------------------------------------------------------
# config plumbing


def parse_widths(text) -> list:
    try:
        return [int(w) for w in str(text).split(",") if str(w).strip()]
    except ValueError:
        raise ConfigError(f"bad width list {text!r}; expected e.g. '128,128'") from None


def parse_sigma_grid(text):
    if text is None:
        return default_sigma_grid()
    text = str(text)
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"bad sigma grid {text!r}; expected 'lo:hi:count' or 'a,b,c'")
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        return default_sigma_grid(n, lo, hi)
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ConfigError(f"bad sigma grid {text!r}") from None


def load_config_file(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    out = {}
    for ln, line in enumerate(p.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{p}:{ln}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip().replace("-", "_"), value.strip()
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def resolve(defaults: dict, config_file, flags: dict) -> dict:
    """defaults < config file < explicit flags."""
    res = dict(defaults)
    if config_file:
        file_values = load_config_file(config_file)
        unknown = set(file_values) - set(res)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        res.update(file_values)
    for key, value in flags.items():
        if value is not None:
            res[key] = value
    return res


def write_manifest(out_dir: Path, command: str, resolved: dict, dataset_info,
                   artifacts: dict, wall_ms: float):
    manifest = {
        "tool": "cganlab",
        "tool_version": __version__,
        "command": command,
        "resolved": {k: v for k, v in sorted(resolved.items())},
        "dataset": {"name": dataset_info["name"], "checksum": dataset_info["checksum"]}
        if dataset_info else None,
        "artifacts": {k: str(v) for k, v in sorted(artifacts.items())},
        "wall_ms": round(wall_ms, 3),
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _emit(summary: dict):
    click.echo(json.dumps(summary, sort_keys=True))


def _progress(msg: str):
    click.echo(msg, err=True)


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def friendly_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as e:
            click.echo(f"config error: {e}", err=True)
            sys.exit(2)
        except DataError as e:
            click.echo(f"data error: {e}", err=True)
            sys.exit(3)
        except CganlabError as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(1)
    return wrapper


# ----------------------------------------------------------------------
# images


def write_image_grid(path, images: np.ndarray):
    """Dump samples as one binary PGM (gray) or PPM (3-channel) grid.

    Images with a channel count other than 1 or 3 are tiled channel-by-
    channel side by side in a PGM.
    """
    images = np.asarray(images)
    n, h, w, d = images.shape
    raw = datamod.pixels_to_bytes(images)
    cols = int(np.ceil(np.sqrt(n)))
    rows = int(np.ceil(n / cols))
    if d == 3:
        grid = np.zeros((rows * h, cols * w, 3), dtype=np.uint8)
        for i in range(n):
            r, c = divmod(i, cols)
            grid[r * h:(r + 1) * h, c * w:(c + 1) * w] = raw[i]
        header = f"P6\n{grid.shape[1]} {grid.shape[0]}\n255\n".encode()
    else:
        flatw = w * d
        tiles = raw.transpose(0, 1, 3, 2).reshape(n, h, flatw) if d > 1 \
            else raw.reshape(n, h, w)
        grid = np.zeros((rows * h, cols * flatw), dtype=np.uint8)
        for i in range(n):
            r, c = divmod(i, cols)
            grid[r * h:(r + 1) * h, c * flatw:(c + 1) * flatw] = tiles[i]
        header = f"P5\n{grid.shape[1]} {grid.shape[0]}\n255\n".encode()
    with open(path, "wb") as f:
        f.write(header)
        f.write(grid.tobytes())


# ----------------------------------------------------------------------
# command implementations (shared with `rerun`)


def do_pretrain_q(res: dict, out_dir: Path) -> dict:
    t0 = time.perf_counter()
    info = load_dataset(res["dataset"], res.get("data_dir"))
    spec = NetworkSpec(parse_widths(res["q_hidden"]), head="softmax")
    stream = RngStream(int(res["seed"]), ("pretrain-q",))
    params, history = pretrain_approximator(
        info["train"], info["valid"], spec, int(res["q_steps"]), stream,
        batch_size=int(res["batch_size"]),
        hyper={"lr": float(res["lr"]), "beta1": 0.9, "beta2": 0.999, "epsilon": 1e-8})
    test_acc = classifier_accuracy(params, info["test"].images, info["test"].labels)
    ckpt = out_dir / "q.ckpt"
    save_model(ckpt, params, extra={"name": f"q-{res['dataset']}",
                                    "dataset": info["name"], "seed": int(res["seed"])})
    summary = {"command": "pretrain-q", "checkpoint": str(ckpt),
               "val_accuracy": history["best_val_acc"], "test_accuracy": test_acc,
               "steps": int(res["q_steps"])}
    (out_dir / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    write_manifest(out_dir, "pretrain-q", res, info,
                   {"checkpoint": ckpt, "summary": out_dir / "summary.json"},
                   (time.perf_counter() - t0) * 1e3)
    return summary


def do_train(res: dict, out_dir: Path) -> dict:
    t0 = time.perf_counter()
    variant = Variant(res["variant"])
    info = load_dataset(res["dataset"], res.get("data_dir"))
    lam = res.get("lam")
    if lam is None:
        lam = float(res.get("irgan_lam", 1.0)) if variant is Variant.IRGAN else 0.0
    cfg = TrainConfig(
        variant=variant, total_steps=int(res["steps"]), batch_size=int(res["batch_size"]),
        d_steps_per_g_step=int(res["d_steps"]), lam=float(lam), lr=float(res["lr"]),
        seed=int(res["seed"]), generator_loss_mode=res["loss_mode"],
        noise_dim=int(res["noise_dim"]), g_hidden=parse_widths(res["g_hidden"]),
        d_hidden=parse_widths(res["d_hidden"]),
        checkpoint_every=int(res["checkpoint_every"]))
    cfg.validate()
    q_params = None
    if variant is Variant.IRGAN:
        if not res.get("q_checkpoint"):
            raise ConfigError("--q-checkpoint is required for the irgan variant")
        q_params, _ = load_model(res["q_checkpoint"])
        if q_params.meta.get("cond_dim") != info["train"].cond_dim:
            raise ConfigError(
                f"approximator expects {q_params.meta.get('cond_dim')} conditions, "
                f"dataset has {info['train'].cond_dim}")
    g = d = None
    start_step = 0
    if res.get("resume"):
        rdir = Path(res["resume"])
        g, gmeta = load_model(rdir / "g.ckpt")
        d, _ = load_model(rdir / "d.ckpt")
        start_step = int(gmeta.get("train_step", 0))
        _progress(f"resuming from {rdir} at step {start_step}")
    every = max(1, int(res["steps"]) // 20) if int(res["steps"]) else 1

    def progress(rec):
        if rec["step"] % every == 0 or rec["step"] + 1 == int(res["steps"]):
            extra = "" if rec["r_g"] is None else f" r_g={rec['r_g']:.4f}"
            _progress(f"step {rec['step'] + 1}/{res['steps']} "
                      f"d_loss={rec['d_loss']:.4f} g_loss={rec['g_loss']:.4f}{extra}")

    def checkpoint_cb(step, g_now, d_now):
        save_model(out_dir / f"g_step{step}.ckpt", g_now,
                   extra=_ckpt_extra(res, info, step, variant))
        save_model(out_dir / f"d_step{step}.ckpt", d_now,
                   extra=_ckpt_extra(res, info, step, variant))

    g, d, log_ = train(cfg, info["train"], q_params=q_params, g=g, d=d,
                       start_step=start_step, progress=progress,
                       checkpoint_cb=checkpoint_cb)
    extra = _ckpt_extra(res, info, cfg.total_steps, variant)
    g_path, d_path, log_path = out_dir / "g.ckpt", out_dir / "d.ckpt", out_dir / "log.csv"
    save_model(g_path, g, extra=extra)
    save_model(d_path, d, extra=extra)
    log_.write(log_path)
    artifacts = {"g_checkpoint": g_path, "d_checkpoint": d_path, "log": log_path}
    write_manifest(out_dir, "train", res, info, artifacts, (time.perf_counter() - t0) * 1e3)
    summary = {"command": "train", "variant": variant.value, "steps": cfg.total_steps,
               "g_checkpoint": str(g_path), "d_checkpoint": str(d_path), "log": str(log_path)}
    if log_.rows:
        summary["final_d_loss"] = log_.rows[-1]["d_loss"]
        summary["final_g_loss"] = log_.rows[-1]["g_loss"]
    return summary


def _ckpt_extra(res, info, step, variant):
    return {"name": variant.value, "dataset": info["name"], "train_step": int(step),
            "seed": int(res["seed"])}


def do_eval(res: dict, out_dir: Path) -> dict:
    t0 = time.perf_counter()
    info = load_dataset(res["dataset"], res.get("data_dir"))
    cfg = ParzenConfig(sigma_grid=parse_sigma_grid(res.get("sigma_grid")),
                       samples_per_condition=int(res["samples_per_condition"]),
                       sigma_mode=res["sigma_mode"])
    cfg.validate()
    shift = int(res.get("condition_shift") or 0)
    paths = res["g_checkpoint"]
    if isinstance(paths, str):
        paths = [paths]
    model_rows = {}
    for path in paths:
        params, meta = load_model(path)
        if params.meta.get("role") != "generator":
            raise ConfigError(f"{path} is a {params.meta.get('role')} checkpoint, not a generator")
        m = params.meta["cond_dim"]
        if m != info["test"].cond_dim:
            raise ConfigError(f"checkpoint {path} expects {m} conditions, "
                              f"dataset has {info['test'].cond_dim}")
        if tuple(params.meta["image_shape"]) != info["test"].image_shape:
            raise ConfigError(
                f"checkpoint {path} produces images of shape {tuple(params.meta['image_shape'])}, "
                f"dataset has {info['test'].image_shape}")
        cmap = {c: (c + shift) % m for c in range(m)} if shift else None
        name = meta.get("name") or Path(path).stem
        while name in model_rows:
            name += "+"
        rows = conditional_eval(params, info["valid"], info["test"], cfg,
                                int(res["seed"]), condition_map=cmap)
        model_rows[name] = rows
        for r in rows:
            if r.note:
                _progress(f"warning: {r.note}")
    artifacts = {}
    if len(model_rows) == 1:
        only = next(iter(model_rows.values()))
        (out_dir / "report.csv").write_text(report_csv(only))
        artifacts["report"] = out_dir / "report.csv"
    else:
        for name, rows in model_rows.items():
            p = out_dir / f"report_{name}.csv"
            p.write_text(report_csv(rows))
            artifacts[f"report_{name}"] = p
    table = format_table(model_rows, info["label_names"])
    (out_dir / "table.txt").write_text(table)
    artifacts["table"] = out_dir / "table.txt"
    write_manifest(out_dir, "eval", res, info, artifacts, (time.perf_counter() - t0) * 1e3)
    _progress(table.rstrip("\n"))
    summary = {"command": "eval", "models": sorted(model_rows),
               "table": str(out_dir / "table.txt"),
               "mean_ll": {name: {str(r.condition): r.mean_ll for r in rows}
                           for name, rows in model_rows.items()}}
    return summary


def do_sample(res: dict, out_dir: Path) -> dict:
    t0 = time.perf_counter()
    params, meta = load_model(res["g_checkpoint"])
    if params.meta.get("role") != "generator":
        raise ConfigError(f"{res['g_checkpoint']} is not a generator checkpoint")
    condition, count = int(res["condition"]), int(res["count"])
    m = params.meta["cond_dim"]
    if not 0 <= condition < m:
        raise ConfigError(f"condition index {condition} out of range 0..{m - 1}")
    if count < 1:
        raise ConfigError(f"count must be positive, got {count}")
    stream = RngStream(int(res["seed"]), ("sample",))
    flat = generate_samples(params, condition, count, stream)
    h, w, d = params.meta["image_shape"]
    images = flat.reshape(count, h, w, d)
    container = out_dir / "samples.bin"
    write_container(container, {"kind": "samples", "condition": condition,
                                "count": count, "seed": int(res["seed"]),
                                "image_shape": [h, w, d]}, {"samples": images})
    grid = out_dir / ("grid.ppm" if d == 3 else "grid.pgm")
    write_image_grid(grid, images)
    write_manifest(out_dir, "sample", res, None,
                   {"samples": container, "grid": grid}, (time.perf_counter() - t0) * 1e3)
    return {"command": "sample", "condition": condition, "count": count,
            "samples": str(container), "grid": str(grid)}


# ----------------------------------------------------------------------
# click wiring


@click.group()
@click.version_option(__version__)
def main():
    """Train, evaluate and sample label-conditioned GANs."""


def _dataset_options(fn):
    fn = click.option("--dataset", type=click.Choice(DATASET_NAMES), required=True)(fn)
    fn = click.option("--data-dir", type=click.Path(), default=None,
                      help="Directory with source dataset files (file-based datasets).")(fn)
    return fn


@main.command("pretrain-q")
@_dataset_options
@click.option("--steps", "q_steps", type=int, default=None, help="Training budget.")
@click.option("--seed", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--hidden", "q_hidden", type=str, default=None, help="Hidden widths, e.g. '64'.")
@click.option("--config", "config_file", type=click.Path(), default=None)
@click.option("--out", required=True, type=click.Path())
@friendly_errors
def cmd_pretrain_q(dataset, data_dir, q_steps, seed, batch_size, lr, q_hidden,
                   config_file, out):
    """Pretrain the condition approximator Q(c|x) and freeze it."""
    defaults = dict(BASE_DEFAULTS)
    defaults.update(TRAIN_DEFAULTS[dataset])
    res = resolve(defaults, config_file,
                  {"dataset": dataset, "data_dir": data_dir, "q_steps": q_steps,
                   "seed": seed, "batch_size": batch_size, "lr": lr, "q_hidden": q_hidden})
    summary = do_pretrain_q(res, _out_dir(out))
    _emit(summary)


@main.command("train")
@click.option("--variant", type=click.Choice([v.value for v in Variant]), required=True)
@_dataset_options
@click.option("--steps", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--lambda", "lam", type=float, default=None,
              help="Weight of the information term (irgan only).")
@click.option("--q-checkpoint", type=click.Path(), default=None)
@click.option("--noise-dim", type=int, default=None)
@click.option("--g-hidden", type=str, default=None)
@click.option("--d-hidden", type=str, default=None)
@click.option("--d-steps", type=int, default=None)
@click.option("--loss-mode", type=click.Choice(["non_saturating", "minimax"]), default=None)
@click.option("--checkpoint-every", type=int, default=None)
@click.option("--resume", type=click.Path(), default=None,
              help="Directory with g.ckpt/d.ckpt to continue from.")
@click.option("--config", "config_file", type=click.Path(), default=None)
@click.option("--out", required=True, type=click.Path())
@friendly_errors
def cmd_train(variant, dataset, data_dir, steps, seed, batch_size, lr, lam,
              q_checkpoint, noise_dim, g_hidden, d_hidden, d_steps, loss_mode,
              checkpoint_every, resume, config_file, out):
    """Train one conditioned-GAN variant."""
    defaults = dict(BASE_DEFAULTS)
    defaults.update(TRAIN_DEFAULTS[dataset])
    defaults.update({"variant": variant, "q_checkpoint": None, "resume": None})
    res = resolve(defaults, config_file, {
        "variant": variant, "dataset": dataset, "data_dir": data_dir, "steps": steps,
        "seed": seed, "batch_size": batch_size, "lr": lr, "lam": lam,
        "q_checkpoint": q_checkpoint, "noise_dim": noise_dim, "g_hidden": g_hidden,
        "d_hidden": d_hidden, "d_steps": d_steps, "loss_mode": loss_mode,
        "checkpoint_every": checkpoint_every, "resume": resume})
    summary = do_train(res, _out_dir(out))
    _emit(summary)


@main.command("eval")
@click.option("--g-checkpoint", multiple=True, required=True, type=click.Path())
@_dataset_options
@click.option("--seed", type=int, default=None)
@click.option("--sigma-grid", type=str, default=None,
              help="'lo:hi:count' (log-spaced) or explicit 'a,b,c'.")
@click.option("--samples-per-condition", type=int, default=None)
@click.option("--sigma-mode", type=click.Choice(["per_condition", "global"]), default=None)
@click.option("--condition-shift", type=int, default=None,
              help="Cyclically shift generator conditions (control experiments).")
@click.option("--config", "config_file", type=click.Path(), default=None)
@click.option("--out", required=True, type=click.Path())
@friendly_errors
def cmd_eval(g_checkpoint, dataset, data_dir, seed, sigma_grid, samples_per_condition,
             sigma_mode, condition_shift, config_file, out):
    """Parzen-window evaluation of generator checkpoints, per condition."""
    defaults = dict(BASE_DEFAULTS)
    defaults.update(TRAIN_DEFAULTS[dataset])
    defaults.update({"sigma_grid": None, "g_checkpoint": None})
    res = resolve(defaults, config_file, {
        "dataset": dataset, "data_dir": data_dir, "seed": seed,
        "g_checkpoint": list(g_checkpoint), "sigma_grid": sigma_grid,
        "samples_per_condition": samples_per_condition, "sigma_mode": sigma_mode,
        "condition_shift": condition_shift})
    summary = do_eval(res, _out_dir(out))
    _emit(summary)


@main.command("sample")
@click.option("--g-checkpoint", required=True, type=click.Path())
@click.option("--condition", type=int, required=True)
@click.option("--count", type=int, default=16)
@click.option("--seed", type=int, default=0)
@click.option("--out", required=True, type=click.Path())
@friendly_errors
def cmd_sample(g_checkpoint, condition, count, seed, out):
    """Generate samples for one condition; writes a container plus an image grid."""
    res = {"g_checkpoint": g_checkpoint, "condition": condition, "count": count,
           "seed": seed}
    summary = do_sample(res, _out_dir(out))
    _emit(summary)


@main.command("rerun")
@click.argument("manifest", type=click.Path())
@click.option("--out", required=True, type=click.Path())
@friendly_errors
def cmd_rerun(manifest, out):
    """Repeat a recorded run from its manifest into a new output directory."""
    p = Path(manifest)
    if not p.is_file():
        raise DataError(f"manifest not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"manifest is not valid JSON: {e}") from None
    command = doc.get("command")
    impl = {"pretrain-q": do_pretrain_q, "train": do_train, "eval": do_eval,
            "sample": do_sample}.get(command)
    if impl is None:
        raise ConfigError(f"manifest records unknown command {command!r}")
    summary = impl(doc["resolved"], _out_dir(out))
    _emit(summary)


if __name__ == "__main__":
    main()
