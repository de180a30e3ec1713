"""Run configurations, the train/evaluate pipeline and its CSV outputs.

A run directory holds ``config.yaml``, ``operator.eqop``, ``model.eqck``,
``epochs.csv`` (one row per training epoch) and ``metrics.csv`` (one row per
evaluated split).
"""

from __future__ import annotations

import copy
import csv
import glob
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import losses
from . import reconstructors as rec
from .data import blob_images, find_mnist, load_mnist
from .group import parse_group_spec
from .metrics import psnr, ssim
from .operators import (
    SplitRule, bernoulli_mask, compression_rows, load_operator, make_gaussian_cs, make_inpainting,
    make_subsampled_dft, save_operator, simulate,
)
from .optim import Dataset, train
from .qanalysis import test_time_average

SCHEMA_VERSION = 1
PROBLEMS = ("compressive-sensing", "inpainting", "dft-subsample")
DATASETS = ("mnist", "synthetic-prior")
EPOCH_FIELDS = ["run_id", "epoch", "loss", "lr", "val_psnr", "seconds"]
METRIC_FIELDS = ["run_id", "epoch", "split", "psnr_mean", "psnr_std", "ssim_mean", "ssim_std", "equiv_db", "loss"]

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "name": "run",
    "problem": "inpainting",
    "dataset": {"name": "synthetic-prior", "train": 256, "test": 64, "side": 16, "blobs": 3, "path": "data/mnist"},
    "operator": {"compression": 50, "keep_prob": 0.3},
    "noise_sigma": 0.0,
    "loss": {"kind": "es", "keep_prob": 0.6, "lambda": 1.0, "alpha": 0.5, "probes": 1, "mc_samples": 1},
    "model": {"arch": "conv-mlp", "hidden": [16, 16], "kernel": 5, "mode": "adjoint", "coverage": False,
              "rescale": False, "residual": True, "activation": "relu", "equivariant": True},
    "group": None,
    "train": {"epochs": 10, "batch_size": 32, "lr": 1e-3, "milestones": [], "factor": 10.0},
    "eval": {"tta": 0, "equiv_samples": 64},
    "seeds": {"data": 0, "operator": 0, "init": 0, "train": 0, "eval": 0},
    "output": "runs/run",
}


class ConfigError(ValueError):
    pass


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class RunConfig:
    raw: dict
    source: Path | None = None

    @classmethod
    def from_dict(cls, data: dict, source=None) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        if "schema_version" not in data:
            raise ConfigError("config lacks schema_version")
        if data["schema_version"] != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {data['schema_version']!r}")
        cfg = cls(_merge(DEFAULTS, data), source)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(data, path)

    def __getitem__(self, key):
        return self.raw[key]

    def dump(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.raw, sort_keys=True))

    @property
    def side(self) -> int:
        return 28 if self["dataset"]["name"] == "mnist" else int(self["dataset"]["side"])

    @property
    def group_spec(self) -> str:
        s = self.side
        return self["group"] or f"shift:{s}x{s}"

    def validate(self) -> None:
        r = self.raw
        if r["problem"] not in PROBLEMS:
            raise ConfigError(f"problem must be one of {PROBLEMS}")
        if r["dataset"]["name"] not in DATASETS:
            raise ConfigError(f"dataset must be one of {DATASETS}")
        if r["dataset"]["name"] == "mnist":
            try:
                find_mnist(self.resolve(r["dataset"]["path"]))
            except FileNotFoundError as exc:
                raise ConfigError(str(exc)) from None
        if r["loss"]["kind"] not in losses.KINDS:
            raise ConfigError(f"loss kind must be one of {losses.KINDS}")
        if r["model"]["arch"] not in ("conv-mlp", "linear"):
            raise ConfigError("model arch must be conv-mlp or linear")
        for key in ("data", "operator", "init", "train", "eval"):
            if not isinstance(r["seeds"].get(key), int):
                raise ConfigError(f"seed {key!r} must be an explicit integer")
        if r["train"]["epochs"] < 0:
            raise ConfigError("epochs must be non-negative")
        if r["noise_sigma"] < 0:
            raise ConfigError("noise_sigma must be non-negative")
        try:
            self.loss_spec()
            parse_group_spec(self.group_spec)
        except (ValueError, losses.LossConfigError) as exc:
            raise ConfigError(str(exc)) from None

    def resolve(self, p) -> Path:
        p = Path(p)
        if p.is_absolute() or self.source is None:
            return p
        # relative to the working directory first, then to the config file
        return p if p.exists() else self.source.parent / p

    def loss_spec(self) -> losses.LossSpec:
        lc = self["loss"]
        group = parse_group_spec(self.group_spec)
        transforms = [parse_group_spec(s) for s in lc.get("transforms", [])] or group
        kind = lc["kind"]
        return losses.LossSpec(
            kind=kind, lam=float(lc["lambda"]), alpha=float(lc["alpha"]), sigma=float(self["noise_sigma"]),
            rule=SplitRule.bernoulli(float(lc["keep_prob"])) if kind in ("split", "es", "es-reduced", "ges") else None,
            action=transforms if kind == "ei" else group,
            mc_samples=int(lc["mc_samples"]), probes=int(lc["probes"]),
        )


# --- pipeline ----------------------------------------------------------------------


def load_images(cfg: RunConfig):
    d = cfg["dataset"]
    ntr, nte = int(d["train"]), int(d["test"])
    if d["name"] == "mnist":
        x, _ = load_mnist(*find_mnist(cfg.resolve(d["path"])))
        if ntr + nte > len(x):
            raise ConfigError(f"asked for {ntr + nte} images, only {len(x)} available")
        order = np.random.default_rng(cfg["seeds"]["data"]).permutation(len(x))
        return x[order[:ntr]], x[order[len(x) - nte:]]
    x = blob_images(ntr + nte, int(d["side"]), int(d["blobs"]), seed=cfg["seeds"]["data"])
    return x[:ntr], x[ntr:]


def build_operator(cfg: RunConfig):
    o = cfg["operator"]
    n = cfg.side**2
    seed = cfg["seeds"]["operator"]
    if cfg["problem"] == "compressive-sensing":
        return make_gaussian_cs(compression_rows(n, float(o["compression"])), n, seed)
    if cfg["problem"] == "inpainting":
        return make_inpainting(n, bernoulli_mask(n, float(o["keep_prob"]), seed))
    s = cfg.side
    mask = np.random.default_rng(seed).random((s, s)) < float(o["keep_prob"])
    mask[0, 0] = True
    return make_subsampled_dft(s, mask)


def build_model(cfg: RunConfig):
    mc = cfg["model"]
    s = cfg.side
    if mc["arch"] == "linear":
        return rec.make_parametric("linear", {"n": s * s})
    dims = {k: mc[k] for k in ("hidden", "kernel", "mode", "coverage", "rescale", "residual", "activation")}
    dims["shape"] = (s, s)
    dims["hidden"] = tuple(dims["hidden"])
    action = parse_group_spec(cfg.group_spec)
    return rec.make_parametric("conv-mlp", dims, bool(mc["equivariant"]), action, cfg["seeds"]["init"])


def reconstruct(cfg: RunConfig, f, y, A):
    """Plain evaluation, or a test-time average over splits for split-trained models."""
    J = int(cfg["eval"]["tta"])
    kind = cfg["loss"]["kind"]
    if J > 0 and kind in ("split", "es", "es-reduced", "ges"):
        spec = cfg.loss_spec()
        return test_time_average(lambda yy, AA: f(yy, AA), y, A, spec.action, spec.rule, J, cfg["seeds"]["eval"])
    return f(y, A)


def evaluate(cfg: RunConfig, f, x, y, A, split: str, epoch: int, loss_value=float("nan")) -> dict:
    xhat = reconstruct(cfg, f, y, A)
    p = psnr(xhat, x)
    side = cfg.side
    s = ssim(xhat, x, shape=(side, side)) if side >= 11 else np.full(len(x), np.nan)
    action = parse_group_spec(cfg.group_spec)
    k = min(len(y), int(cfg["eval"]["equiv_samples"]))
    eq = rec.equiv_metric(f, y[:k], A, action, seed=cfg["seeds"]["eval"])
    return {
        "run_id": cfg["name"], "epoch": epoch, "split": split,
        "psnr_mean": float(np.mean(p)), "psnr_std": float(np.std(p)),
        "ssim_mean": float(np.nanmean(s)) if np.isfinite(s).any() else float("nan"),
        "ssim_std": float(np.nanstd(s)) if np.isfinite(s).any() else float("nan"),
        "equiv_db": float(eq), "loss": float(loss_value),
    }


def write_csv(path, fields, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items() if k in fields})


def run(cfg: RunConfig | dict | str | Path, output=None, log=None) -> list[dict]:
    """Train, evaluate on the held-out split and write the run directory."""
    if not isinstance(cfg, RunConfig):
        cfg = RunConfig.from_dict(cfg) if isinstance(cfg, dict) else RunConfig.load(cfg)
    out = Path(output or cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    xtr, xte = load_images(cfg)
    op = build_operator(cfg)
    sigma = float(cfg["noise_sigma"])
    rng = np.random.SeedSequence(cfg["seeds"]["data"]).spawn(2)
    ytr = simulate(xtr, op, sigma, np.random.default_rng(rng[0])).y
    yte = simulate(xte, op, sigma, np.random.default_rng(rng[1])).y
    A = op.matrix
    f = build_model(cfg)
    tc = cfg["train"]
    start = time.perf_counter()
    epochs = []

    def record(row):
        row = dict(row, run_id=cfg["name"], seconds=round(time.perf_counter() - start, 3))
        epochs.append(row)
        if log is not None:
            log(row)

    val = Dataset(yte, A, xte)
    f, history = train(
        f, Dataset(ytr, A, xtr), cfg.loss_spec(), int(tc["epochs"]), seed=cfg["seeds"]["train"],
        batch_size=int(tc["batch_size"]), lr=float(tc["lr"]), milestones=tuple(tc["milestones"]),
        factor=float(tc["factor"]), val=val, log=record,
    )
    last_loss = history.epochs[-1]["loss"] if history.epochs else float("nan")
    rows = [evaluate(cfg, f, xte, yte, A, "test", int(tc["epochs"]), last_loss)]
    cfg.dump(out / "config.yaml")
    save_operator(out / "operator.eqop", op)
    rec.save_checkpoint(out / "model.eqck", f)
    # wall-clock seconds are not reproducible; keep them out of the CSV
    write_csv(out / "epochs.csv", [c for c in EPOCH_FIELDS if c != "seconds"], epochs)
    write_csv(out / "metrics.csv", METRIC_FIELDS, rows)
    return rows


def eval_checkpoint(path, config=None) -> list[dict]:
    """Re-evaluate a saved model on its run's held-out split."""
    path = Path(path)
    cfg = RunConfig.load(config or path.parent / "config.yaml")
    f = rec.load_checkpoint(path)
    _, xte = load_images(cfg)
    op_path = path.parent / "operator.eqop"
    op = load_operator(op_path) if op_path.exists() else build_operator(cfg)
    rng = np.random.SeedSequence(cfg["seeds"]["data"]).spawn(2)
    yte = simulate(xte, op, float(cfg["noise_sigma"]), np.random.default_rng(rng[1])).y
    return [evaluate(cfg, f, xte, yte, op.matrix, "test", int(cfg["train"]["epochs"]))]


def _run_one(path):
    return str(path), run(path)


def sweep(pattern: str, workers: int = 1) -> dict[str, list[dict]]:
    paths = sorted(glob.glob(pattern))
    if not paths:
        raise ConfigError(f"no config matches {pattern!r}")
    configs = [RunConfig.load(p) for p in paths]  # validate everything before running anything
    del configs
    if workers <= 1:
        return dict(_run_one(p) for p in paths)
    with ProcessPoolExecutor(workers) as pool:
        return dict(pool.map(_run_one, paths))
