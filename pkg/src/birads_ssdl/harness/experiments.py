"""Experiment workflows: single-dataset comparison, cross-dataset training,
pre-training transfer, boundary perturbation and the sigma sweep.

Every workflow is driven by an :class:`ExperimentSpec` and a
:class:`Dataset`, writes CSV reports under ``spec.out_dir`` and returns an
:class:`ExperimentResult` holding the rows plus in-memory artefacts.
Repeat ``r`` uses seed ``spec.seed + r`` for its split, initialisation and
training.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from ..evaluation import (METRIC_COLUMNS, MetricsReport, aggregate_runs, evaluate,
                          stratified_split)
from ..imaging import center_crop_pad, dice, load_image, load_mask, make_bfm, morph
from ..network import ArchitectureConfig, SsdlModel, build_model, save_checkpoint
from ..report import emit_report
from ..training import VARIANTS, TrainConfig, fine_tune, fit
from .manifest import SampleRecord, load_manifest, resolve

WORKFLOWS = ("single", "cross", "pretrain", "boundary", "sigma-sweep")
DEFAULT_SIGMA_GRID = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 40.0)
UNLABELED = -1


class ExperimentError(ValueError):
    pass


class SpecError(ExperimentError):
    """An invalid experiment specification (as opposed to unusable data)."""


# ----------------------------------------------------------------- datasets
@dataclass
class Dataset:
    ids: list[str]
    images: np.ndarray      # (N, S, S) float64 in [0, 1]
    masks: np.ndarray       # (N, S, S) bool
    labels: np.ndarray      # (N,) 0 benign, 1 malignant, -1 unlabeled
    tags: np.ndarray        # (N,) dataset tag strings

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def labeled(self) -> np.ndarray:
        return np.flatnonzero(self.labels != UNLABELED)

    def indices_for_tag(self, tag: str, labeled_only: bool = True) -> np.ndarray:
        sel = self.tags == tag
        if labeled_only:
            sel &= self.labels != UNLABELED
        return np.flatnonzero(sel)

    def unlabeled_for_tag(self, tag: str | None = None) -> np.ndarray:
        sel = self.labels == UNLABELED
        if tag is not None:
            sel &= self.tags == tag
        return np.flatnonzero(sel)

    @classmethod
    def from_arrays(cls, images, masks, labels, tag: str = "A", prefix: str | None = None):
        n = len(images)
        prefix = tag if prefix is None else prefix
        return cls(ids=[f"{prefix}{i:04d}" for i in range(n)],
                   images=np.asarray(images, dtype=np.float64),
                   masks=np.asarray(masks, dtype=bool),
                   labels=np.asarray(labels, dtype=np.int64),
                   tags=np.array([tag] * n, dtype=object))

    @classmethod
    def concat(cls, *parts: "Dataset") -> "Dataset":
        return cls(ids=[i for p in parts for i in p.ids],
                   images=np.concatenate([p.images for p in parts]),
                   masks=np.concatenate([p.masks for p in parts]),
                   labels=np.concatenate([p.labels for p in parts]),
                   tags=np.concatenate([p.tags for p in parts]))


def load_dataset(manifest_path, input_side: int, records: list[SampleRecord] | None = None) -> Dataset:
    """Read the rasters behind a manifest, centre-cropping to ``input_side`` when needed."""
    records = records if records is not None else load_manifest(manifest_path)
    images, masks, labels, tags, ids = [], [], [], [], []
    for rec in records:
        img = load_image(resolve(rec.image_path, manifest_path))
        mask = load_mask(resolve(rec.mask_path, manifest_path))
        if img.shape != (input_side, input_side):
            img, mask = center_crop_pad(img, mask, input_side)
        images.append(img)
        masks.append(mask)
        labels.append(rec.label_index if rec.is_labeled else UNLABELED)
        tags.append(rec.dataset_tag)
        ids.append(rec.id)
    if not records:
        raise ExperimentError(f"{manifest_path}: manifest has no records")
    return Dataset(ids=ids, images=np.stack(images), masks=np.stack(masks),
                   labels=np.asarray(labels, dtype=np.int64), tags=np.array(tags, dtype=object))


# --------------------------------------------------------------- BFM cache
def array_digest(arr: np.ndarray) -> str:
    arr = np.ascontiguousarray(arr)
    h = hashlib.sha256()
    h.update(str(arr.dtype).encode())
    h.update(str(arr.shape).encode())
    h.update(arr.tobytes())
    return h.hexdigest()


class BfmCache:
    """Content-addressed feature maps keyed by (image digest, mask digest, sigma)."""

    def __init__(self, directory=None):
        self.directory = directory
        self._mem: dict[str, np.ndarray] = {}
        self.hits = 0
        self.misses = 0
        if directory:
            os.makedirs(directory, exist_ok=True)

    @staticmethod
    def key(image, mask, sigma: float) -> str:
        return f"{array_digest(image)[:32]}-{array_digest(np.asarray(mask, bool))[:32]}-{float(sigma)!r}"

    def get(self, image: np.ndarray, mask: np.ndarray, sigma: float) -> np.ndarray:
        k = self.key(image, mask, sigma)
        if k in self._mem:
            self.hits += 1
            return self._mem[k]
        path = os.path.join(self.directory, k + ".npy") if self.directory else None
        if path and os.path.exists(path):
            self.hits += 1
            bfm = np.load(path)
        else:
            self.misses += 1
            bfm = make_bfm(image, mask, sigma).astype(np.float32)
            if path:
                np.save(path, bfm)
        self._mem[k] = bfm
        return bfm


def prepare_inputs(ds: Dataset, indices, variant: str, sigma_px: float,
                   cache: BfmCache | None = None, masks: np.ndarray | None = None) -> np.ndarray:
    """Network inputs ``(n, 1, S, S)``: feature maps for ``birads-*``, raw images for ``ori-*``."""
    indices = np.asarray(indices, dtype=np.int64)
    if variant.startswith("ori"):
        return ds.images[indices].astype(np.float32)[:, None]
    cache = cache if cache is not None else BfmCache()
    use_masks = ds.masks[indices] if masks is None else masks
    out = [cache.get(ds.images[i], m, sigma_px) for i, m in zip(indices, use_masks)]
    if not out:
        return np.zeros((0, 1) + ds.images.shape[1:], dtype=np.float32)
    return np.stack(out)[:, None]


# ------------------------------------------------------------------- specs
@dataclass
class ExperimentSpec:
    workflow: str = "single"
    variants: tuple[str, ...] = VARIANTS
    train: TrainConfig = field(default_factory=TrainConfig)
    arch: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    sigma: float = 20.0
    # sigma values are quoted at this image side and scaled to arch.input_side
    sigma_reference_side: int = 512
    sigma_grid: tuple[float, ...] = DEFAULT_SIGMA_GRID
    radii: tuple[int, ...] = (0, 1, 2, 4, 8)
    ops: tuple[str, ...] = ("dilate", "erode")
    repeats: int = 5
    train_fraction: float = 0.8
    tags: tuple[str, ...] = ()
    transfer_variant: str = "birads-ssdl"
    out_dir: str = "results"
    seed: int = 0

    def validate(self) -> None:
        if self.workflow not in WORKFLOWS:
            raise SpecError(f"workflow must be one of {WORKFLOWS}, got {self.workflow!r}")
        if self.repeats < 1:
            raise SpecError("repeats must be >= 1")
        for v in self.variants:
            if v not in VARIANTS:
                raise SpecError(f"unknown variant {v!r}")
        if not self.sigma > 0 or any(not s > 0 for s in self.sigma_grid):
            raise SpecError("sigma values must be positive")
        if any(r < 0 for r in self.radii):
            raise SpecError("radii must be non-negative")
        self.train.validate()

    def sigma_pixels(self, sigma: float | None = None) -> float:
        s = self.sigma if sigma is None else sigma
        if not s > 0:
            raise SpecError(f"sigma must be positive, got {s}")
        return s * self.arch.input_side / self.sigma_reference_side

    def train_config(self, variant: str, repeat: int) -> TrainConfig:
        return replace(self.train, variant=variant, seed=self.seed + repeat)


@dataclass
class ExperimentResult:
    rows: list[dict] = field(default_factory=list)
    paths: dict[str, str] = field(default_factory=dict)
    reports: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)


def metric_columns(with_std: bool = True) -> list[str]:
    cols = list(METRIC_COLUMNS)
    if with_std:
        cols += [f"{c}_std" for c in METRIC_COLUMNS]
    return cols


def _metric_row(report: MetricsReport) -> dict:
    return report.as_row(percent=True)


def _aggregate_row(reports) -> dict:
    agg = aggregate_runs(reports)
    row = {c: agg[c][0] for c in METRIC_COLUMNS}
    row.update({f"{c}_std": agg[c][1] for c in METRIC_COLUMNS})
    return row


# ----------------------------------------------------------------- helpers
def _split(ds: Dataset, tag: str | None, fraction: float, seed: int):
    idx = ds.labeled if tag is None else ds.indices_for_tag(tag)
    labels = ds.labels[idx]
    counts = {c: int(np.sum(labels == c)) for c in (0, 1)}
    for c, n in counts.items():
        if n == 0 or n - math.floor(fraction * n) == 0 or math.floor(fraction * n) == 0:
            raise ExperimentError(
                f"tag {tag!r}: class {c} has {n} samples, too few for a non-empty train/test split")
    tr, te = stratified_split(labels, fraction, seed)
    return idx[tr], idx[te]


def _single_tag(ds: Dataset, spec: ExperimentSpec) -> str:
    tags = list(spec.tags) or sorted(set(ds.tags[ds.labeled]))
    if len(tags) != 1:
        raise ExperimentError(f"single-dataset workflow needs exactly one tag, found {tags}")
    return tags[0]


def _two_tags(ds: Dataset, spec: ExperimentSpec) -> tuple[str, str]:
    present = sorted(set(ds.tags[ds.labeled]))
    tags = list(spec.tags) or present
    if len(tags) != 2:
        raise ExperimentError(f"workflow needs exactly two dataset tags, found {tags}")
    for t in tags:
        if t not in present:
            raise ExperimentError(f"dataset tag {t!r} is missing from the data")
    return tags[0], tags[1]


def _train_and_eval(ds, spec, variant, repeat, train_idx, test_idx, cache,
                    unlabeled_idx=None) -> tuple[SsdlModel, MetricsReport, object]:
    sigma_px = spec.sigma_pixels()
    x_tr = prepare_inputs(ds, train_idx, variant, sigma_px, cache)
    x_te = prepare_inputs(ds, test_idx, variant, sigma_px, cache)
    x_un = None
    if unlabeled_idx is not None and len(unlabeled_idx):
        x_un = prepare_inputs(ds, unlabeled_idx, variant, sigma_px, cache)
    model = build_model(spec.arch, seed=spec.seed + repeat)
    log = fit(model, x_tr, ds.labels[train_idx], spec.train_config(variant, repeat), x_un)
    report = evaluate(ds.labels[test_idx], model.predict_proba(x_te))
    return model, report, log


def _out(spec: ExperimentSpec, name: str) -> str:
    os.makedirs(spec.out_dir, exist_ok=True)
    return os.path.join(spec.out_dir, name)


# --------------------------------------------------------------- workflows
def run_experiment_single(spec: ExperimentSpec, ds: Dataset, cache: BfmCache | None = None,
                          keep_models: bool = False) -> ExperimentResult:
    """Train and test every variant on repeated stratified splits of one dataset."""
    spec.validate()
    cache = cache or BfmCache()
    tag = _single_tag(ds, spec)
    result = ExperimentResult()
    per_variant: dict[str, list[MetricsReport]] = {v: [] for v in spec.variants}
    unl = ds.unlabeled_for_tag(tag)
    for r in range(spec.repeats):
        tr, te = _split(ds, tag, spec.train_fraction, spec.seed + r)
        for v in spec.variants:
            model, rep, log = _train_and_eval(ds, spec, v, r, tr, te, cache, unl)
            per_variant[v].append(rep)
            row = {"row": "run", "variant": v, "repeat": r, "n_train": len(tr), "n_test": len(te),
                   "epochs": len(log.records)}
            row.update(_metric_row(rep))
            result.rows.append(row)
            if keep_models:
                result.extras.setdefault("models", {})[(v, r)] = model
                result.extras.setdefault("splits", {})[r] = (tr, te)
    for v in spec.variants:
        row = {"row": "aggregate", "variant": v, "repeat": None, "n_train": None, "n_test": None,
               "epochs": None}
        row.update(_aggregate_row(per_variant[v]))
        result.rows.append(row)
    columns = ["row", "variant", "repeat", "n_train", "n_test", "epochs"] + metric_columns()
    result.paths["single"] = _out(spec, "single.csv")
    emit_report(result.rows, result.paths["single"], columns)
    result.reports = per_variant
    return result


def run_experiment_cross(spec: ExperimentSpec, ds: Dataset, cache: BfmCache | None = None) -> ExperimentResult:
    """Train on the union of both tags' training splits, test on each tag separately."""
    spec.validate()
    cache = cache or BfmCache()
    tags = _two_tags(ds, spec)
    result = ExperimentResult()
    reports = {(t, v): [] for t in tags for v in spec.variants}
    rows = {t: [] for t in tags}
    partitions = {}
    unl = np.concatenate([ds.unlabeled_for_tag(t) for t in tags])
    for r in range(spec.repeats):
        splits = {t: _split(ds, t, spec.train_fraction, spec.seed + r) for t in tags}
        partitions[r] = splits
        train_idx = np.concatenate([splits[t][0] for t in tags])
        for v in spec.variants:
            sigma_px = spec.sigma_pixels()
            x_tr = prepare_inputs(ds, train_idx, v, sigma_px, cache)
            x_un = prepare_inputs(ds, unl, v, sigma_px, cache) if len(unl) else None
            model = build_model(spec.arch, seed=spec.seed + r)
            fit(model, x_tr, ds.labels[train_idx], spec.train_config(v, r), x_un)
            for t in tags:
                te = splits[t][1]
                rep = evaluate(ds.labels[te], model.predict_proba(prepare_inputs(ds, te, v, sigma_px, cache)))
                reports[(t, v)].append(rep)
                row = {"row": "run", "test_tag": t, "variant": v, "repeat": r,
                       "n_train": len(train_idx), "n_test": len(te)}
                row.update(_metric_row(rep))
                rows[t].append(row)
    columns = ["row", "test_tag", "variant", "repeat", "n_train", "n_test"] + metric_columns()
    for t in tags:
        for v in spec.variants:
            row = {"row": "aggregate", "test_tag": t, "variant": v}
            row.update(_aggregate_row(reports[(t, v)]))
            rows[t].append(row)
        path = _out(spec, f"cross_{t}.csv")
        emit_report(rows[t], path, columns)
        result.paths[f"cross_{t}"] = path
        result.rows.extend(rows[t])
    result.reports = reports
    result.extras["partitions"] = partitions
    return result


CURVE_KINDS = ("loss_r", "loss_c")


def run_pretrain_transfer(spec: ExperimentSpec, ds: Dataset, cache: BfmCache | None = None) -> ExperimentResult:
    """Pre-train on the first tag, fine-tune on the second, compare with a cold start.

    Emits a paired cold/warm metrics table and per-epoch loss curves for both runs.
    """
    spec.validate()
    cache = cache or BfmCache()
    src, dst = _two_tags(ds, spec)
    variant = spec.transfer_variant
    sigma_px = spec.sigma_pixels()
    result = ExperimentResult()
    reports = {"cold": [], "warm": []}
    curves = {(k, w): [] for k in CURVE_KINDS for w in ("warm", "cold")}
    logs = {"cold": [], "warm": []}
    ckpt_dir = _out(spec, "checkpoints")
    os.makedirs(ckpt_dir, exist_ok=True)
    for r in range(spec.repeats):
        src_tr, _ = _split(ds, src, spec.train_fraction, spec.seed + r)
        dst_tr, dst_te = _split(ds, dst, spec.train_fraction, spec.seed + r)
        cfg = spec.train_config(variant, r)
        x_src = prepare_inputs(ds, src_tr, variant, sigma_px, cache)
        x_dst = prepare_inputs(ds, dst_tr, variant, sigma_px, cache)
        x_te = prepare_inputs(ds, dst_te, variant, sigma_px, cache)

        pre = build_model(spec.arch, seed=spec.seed + r)
        fit(pre, x_src, ds.labels[src_tr], cfg)
        pre_path = os.path.join(ckpt_dir, f"pretrain_r{r}.bsdl")
        save_checkpoint(pre, pre_path)
        warm, warm_log = fine_tune(pre_path, x_dst, ds.labels[dst_tr], cfg, expected=spec.arch)
        cold = build_model(spec.arch, seed=spec.seed + r)
        cold_log = fit(cold, x_dst, ds.labels[dst_tr], cfg)
        save_checkpoint(warm, os.path.join(ckpt_dir, f"warm_r{r}.bsdl"))
        save_checkpoint(cold, os.path.join(ckpt_dir, f"cold_r{r}.bsdl"))

        for which, model, log in (("cold", cold, cold_log), ("warm", warm, warm_log)):
            rep = evaluate(ds.labels[dst_te], model.predict_proba(x_te))
            reports[which].append(rep)
            logs[which].append(log)
            row = {"row": "run", "model": which, "repeat": r, "train_tag": dst,
                   "pretrain_tag": src if which == "warm" else None, "epochs": len(log.records)}
            row.update(_metric_row(rep))
            result.rows.append(row)
            for kind in CURVE_KINDS:
                for rec in log.records:
                    curves[(kind, which)].append({"repeat": r, "epoch": rec.epoch,
                                                  "value": getattr(rec, kind)})
    for which in ("cold", "warm"):
        row = {"row": "aggregate", "model": which, "train_tag": dst,
               "pretrain_tag": src if which == "warm" else None}
        row.update(_aggregate_row(reports[which]))
        result.rows.append(row)
    columns = ["row", "model", "repeat", "train_tag", "pretrain_tag", "epochs"] + metric_columns()
    result.paths["transfer"] = _out(spec, "transfer.csv")
    emit_report(result.rows, result.paths["transfer"], columns)
    for (kind, which), rows in curves.items():
        path = _out(spec, f"curve_{kind}_{which}.csv")
        emit_report(rows, path, ["repeat", "epoch", "value"])
        result.paths[f"curve_{kind}_{which}"] = path
    result.reports = reports
    result.extras["logs"] = logs
    result.extras["checkpoint_dir"] = ckpt_dir
    return result


def dice_bin(value: float, width: int = 5) -> str:
    pct = value * 100.0
    lo = min(int(math.floor(pct / width)) * width, 100 - width)
    return f"{lo}-{lo + width}"


def run_boundary_perturbation(spec: ExperimentSpec, ds: Dataset, trained=None,
                              cache: BfmCache | None = None) -> ExperimentResult:
    """Re-evaluate frozen models on feature maps built from dilated or eroded masks.

    ``trained`` maps repeat index to ``(model, test_indices)``; when omitted a
    ``spec.transfer_variant`` model is trained per repeat. Erosions that empty a
    mask skip that sample and are counted in ``n_skipped``.
    """
    spec.validate()
    cache = cache or BfmCache()
    sigma_px = spec.sigma_pixels()
    variant = spec.transfer_variant
    if not variant.startswith("birads"):
        raise ExperimentError("boundary perturbation needs a birads-* variant")
    if trained is None:
        tag = _single_tag(ds, spec)
        trained = {}
        for r in range(spec.repeats):
            tr, te = _split(ds, tag, spec.train_fraction, spec.seed + r)
            model, _, _ = _train_and_eval(ds, spec, variant, r, tr, te, cache)
            trained[r] = (model, te)
    result = ExperimentResult()
    grouped: dict[tuple[str, int], dict] = {}
    radii = sorted(set(spec.radii))
    for r in sorted(trained):
        model, test_idx = trained[r]
        test_idx = np.asarray(test_idx)
        for op in spec.ops:
            for radius in radii:
                keep, fakes, dices = [], [], []
                for i in test_idx:
                    res = morph(ds.masks[i], radius, op)
                    if res.emptied:
                        continue
                    keep.append(i)
                    fakes.append(res.mask)
                    dices.append(dice(ds.masks[i], res.mask))
                n_skip = len(test_idx) - len(keep)
                row = {"row": "run", "repeat": r, "op": op, "radius": radius, "n_eval": len(keep),
                       "n_skipped": n_skip}
                g = grouped.setdefault((op, radius), {"dice": [], "reports": [], "skipped": 0})
                g["skipped"] += n_skip
                if keep:
                    x = prepare_inputs(ds, keep, variant, sigma_px, cache, masks=np.stack(fakes))
                    rep = evaluate(ds.labels[keep], model.predict_proba(x))
                    mean_dice = float(np.mean(dices))
                    row.update({"mean_dice": mean_dice, "dice_bin": dice_bin(mean_dice)})
                    row.update(_metric_row(rep))
                    g["dice"].append(mean_dice)
                    g["reports"].append(rep)
                result.rows.append(row)
    for (op, radius), g in grouped.items():
        row = {"row": "aggregate", "op": op, "radius": radius, "n_skipped": g["skipped"]}
        if g["reports"]:
            md = float(np.mean(g["dice"]))
            row.update({"mean_dice": md, "dice_bin": dice_bin(md)})
            row.update(_aggregate_row(g["reports"]))
        result.rows.append(row)
    columns = (["row", "repeat", "op", "radius", "mean_dice", "dice_bin", "n_eval", "n_skipped"]
               + metric_columns())
    result.paths["boundary"] = _out(spec, "boundary.csv")
    emit_report(result.rows, result.paths["boundary"], columns)
    result.reports = {k: g["reports"] for k, g in grouped.items()}
    result.extras["trained"] = trained
    return result


def run_sigma_sweep(spec: ExperimentSpec, ds: Dataset, cache: BfmCache | None = None) -> ExperimentResult:
    """Accuracy of the ``birads-*`` variants across a grid of Gaussian widths."""
    spec.validate()
    cache = cache or BfmCache()
    tag = _single_tag(ds, spec)
    variants = [v for v in spec.variants if v.startswith("birads")] or ["birads-scae", "birads-ssdl"]
    result = ExperimentResult()
    digests = {}
    for sigma in spec.sigma_grid:
        sigma_px = spec.sigma_pixels(sigma)
        all_idx = np.arange(len(ds))
        stack = prepare_inputs(ds, all_idx, "birads-ssdl", sigma_px, cache)
        digest = array_digest(stack)
        digests[sigma] = digest
        sub = replace(spec, sigma=sigma)
        for v in variants:
            accs = []
            for r in range(spec.repeats):
                tr, te = _split(ds, tag, spec.train_fraction, spec.seed + r)
                _, rep, _ = _train_and_eval(ds, sub, v, r, tr, te, cache,
                                            ds.unlabeled_for_tag(tag))
                accs.append(rep.acc * 100.0)
            result.rows.append({
                "sigma": sigma, "sigma_px": sigma_px, "variant": v,
                "acc_mean": float(np.mean(accs)),
                "acc_std": float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0,
                "repeats": len(accs), "input_digest": digest[:16],
            })
    result.paths["sigma_sweep"] = _out(spec, "sigma_sweep.csv")
    emit_report(result.rows, result.paths["sigma_sweep"],
                ["sigma", "sigma_px", "variant", "acc_mean", "acc_std", "repeats", "input_digest"])
    result.extras["digests"] = digests
    return result


def run_workflow(spec: ExperimentSpec, ds: Dataset, cache: BfmCache | None = None) -> ExperimentResult:
    runners = {
        "single": run_experiment_single,
        "cross": run_experiment_cross,
        "pretrain": run_pretrain_transfer,
        "boundary": run_boundary_perturbation,
        "sigma-sweep": run_sigma_sweep,
    }
    spec.validate()
    return runners[spec.workflow](spec, ds, cache=cache)
