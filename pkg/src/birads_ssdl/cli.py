"""Command line entry point: ``birads-ssdl <subcommand> [flags]``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 runtime failure.

Sigma values are quoted at a 512-pixel reference side and scaled to
``--input-size``; pass ``--sigma-reference`` equal to the input size to give
sigma directly in pixels.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from .evaluation import evaluate, stratified_split
from .harness.experiments import (DEFAULT_SIGMA_GRID, WORKFLOWS, BfmCache, Dataset,
                                  ExperimentError, ExperimentSpec, SpecError, load_dataset,
                                  prepare_inputs, run_boundary_perturbation, run_sigma_sweep,
                                  run_workflow)
from .harness.manifest import ManifestError, load_manifest
from .harness.synth import SynthConfig, synth_generate
from .imaging import EmptyMaskError, PGMError, save_image
from .network import (ArchitectureConfig, CheckpointError, ConfigError, build_model,
                      load_checkpoint, save_checkpoint)
from .report import emit_report
from .training import SCHEDULES, VARIANTS, TrainConfig, TrainingError, fit

log = logging.getLogger("birads_ssdl")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sigma", type=float, default=20.0, help="Gaussian width at reference scale")
    p.add_argument("--sigma-reference", type=int, default=512,
                   help="image side at which --sigma is quoted")
    p.add_argument("--lambda", dest="lam", type=float, default=0.5,
                   help="classification weight; 1 - lambda weights reconstruction")
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--gamma", type=float, default=1e-4, help="L2 weight penalty")
    p.add_argument("--epochs", type=int, default=100, help="maximum epochs")
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variant", choices=VARIANTS, default="birads-ssdl")
    p.add_argument("--input-size", type=int, default=64)
    p.add_argument("--schedule", choices=SCHEDULES, default="alternating")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--out", default="results")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="birads-ssdl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic lesion dataset")
    _shared(p)
    p.add_argument("--n-benign", type=int, default=100)
    p.add_argument("--n-malignant", type=int, default=60)
    p.add_argument("--tag", default="A")
    p.add_argument("--speckle", type=float, default=0.25)

    p = sub.add_parser("bfm", help="write feature maps for every manifest sample")
    _shared(p)
    p.add_argument("--manifest", required=True)

    p = sub.add_parser("train", help="train one model and save a checkpoint")
    _shared(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--train-fraction", type=float, default=0.8)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    _shared(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--train-fraction", type=float, default=0.8)

    p = sub.add_parser("perturb", help="boundary perturbation study")
    _shared(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", help="frozen model; trained per repeat when omitted")
    p.add_argument("--radii", type=int, nargs="+", default=[0, 1, 2, 4, 8])
    p.add_argument("--train-fraction", type=float, default=0.8)

    p = sub.add_parser("sweep-sigma", help="accuracy across Gaussian widths")
    _shared(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--sigma-grid", type=float, nargs="+", default=list(DEFAULT_SIGMA_GRID))
    p.add_argument("--train-fraction", type=float, default=0.8)

    p = sub.add_parser("report", help="run an experiment workflow and emit its CSV tables")
    _shared(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--workflow", choices=WORKFLOWS, default="single")
    p.add_argument("--variants", nargs="+", choices=VARIANTS, default=list(VARIANTS))
    p.add_argument("--tags", nargs="*", default=[])
    p.add_argument("--train-fraction", type=float, default=0.8)
    return parser


# ---------------------------------------------------------------- helpers
def _arch(args) -> ArchitectureConfig:
    return ArchitectureConfig(input_side=args.input_size)


def _train_cfg(args, variant=None) -> TrainConfig:
    cfg = TrainConfig(lam=args.lam, gamma=args.gamma, lr=args.lr, batch_size=args.batch,
                      max_epochs=args.epochs, seed=args.seed, schedule=args.schedule,
                      variant=variant or args.variant)
    cfg.validate()
    return cfg


def _spec(args, workflow: str, **extra) -> ExperimentSpec:
    if args.repeats < 1:
        raise UsageError("--repeats must be >= 1")
    spec = ExperimentSpec(workflow=workflow, train=_train_cfg(args), arch=_arch(args),
                          sigma=args.sigma, sigma_reference_side=args.sigma_reference,
                          repeats=args.repeats, out_dir=args.out, seed=args.seed,
                          transfer_variant=args.variant,
                          train_fraction=getattr(args, "train_fraction", 0.8), **extra)
    spec.validate()
    return spec


def _dataset(args) -> Dataset:
    return load_dataset(args.manifest, args.input_size)


def _train_test(args, ds: Dataset):
    """Explicit manifest split when present, else a seeded stratified split."""
    records = load_manifest(args.manifest, check_files=False)
    splits = np.array([r.split for r in records])
    labeled = ds.labeled
    if np.any(splits[labeled] != "none"):
        tr = labeled[splits[labeled] == "train"]
        te = labeled[splits[labeled] == "test"]
    else:
        tr_l, te_l = stratified_split(ds.labels[labeled], args.train_fraction, args.seed)
        tr, te = labeled[tr_l], labeled[te_l]
    if len(tr) == 0 or len(te) == 0:
        raise ExperimentError("train and test splits must both be non-empty")
    return tr, te


def _sigma_px(args) -> float:
    if not args.sigma > 0:
        raise UsageError(f"--sigma must be positive, got {args.sigma}")
    return args.sigma * args.input_size / args.sigma_reference


# ------------------------------------------------------------- subcommands
def cmd_synth(args) -> int:
    cfg = SynthConfig(n_benign=args.n_benign, n_malignant=args.n_malignant, side=args.input_size,
                      seed=args.seed, speckle_strength=args.speckle, dataset_tag=args.tag)
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    path = synth_generate(cfg, args.out)
    print(path)
    return EXIT_OK


def cmd_bfm(args) -> int:
    ds = _dataset(args)
    os.makedirs(args.out, exist_ok=True)
    sigma_px = _sigma_px(args)
    maps = prepare_inputs(ds, np.arange(len(ds)), "birads-ssdl", sigma_px, BfmCache())
    for sid, m in zip(ds.ids, maps):
        save_image(os.path.join(args.out, f"{sid}.pgm"), m[0])
    print(f"wrote {len(ds)} feature maps to {args.out} (sigma {sigma_px:.4g} px)")
    return EXIT_OK


def cmd_train(args) -> int:
    ds = _dataset(args)
    cfg = _train_cfg(args)
    tr, _ = _train_test(args, ds)
    sigma_px = _sigma_px(args)
    cache = BfmCache()
    x = prepare_inputs(ds, tr, cfg.variant, sigma_px, cache)
    unl = ds.unlabeled_for_tag()
    x_un = prepare_inputs(ds, unl, cfg.variant, sigma_px, cache) if len(unl) else None
    model = build_model(_arch(args), seed=args.seed)
    train_log = fit(model, x, ds.labels[tr], cfg, x_un)
    os.makedirs(args.out, exist_ok=True)
    ckpt = os.path.join(args.out, "model.bsdl")
    save_checkpoint(model, ckpt)
    train_log.to_csv(os.path.join(args.out, "train_log.csv"))
    print(ckpt)
    return EXIT_OK


def cmd_eval(args) -> int:
    ds = _dataset(args)
    model = load_checkpoint(args.checkpoint, expected=_arch(args))
    _, te = _train_test(args, ds)
    x = prepare_inputs(ds, te, args.variant, _sigma_px(args))
    report = evaluate(ds.labels[te], model.predict_proba(x))
    row = {"variant": args.variant, "n_test": len(te)}
    row.update(report.as_row(percent=True))
    path = os.path.join(args.out, "eval.csv")
    emit_report([row], path)
    print(", ".join(f"{k}={v:.2f}" for k, v in report.as_row().items()))
    return EXIT_OK


def cmd_perturb(args) -> int:
    ds = _dataset(args)
    spec = _spec(args, "boundary", radii=tuple(args.radii))
    trained = None
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint, expected=spec.arch)
        _, te = _train_test(args, ds)
        trained = {0: (model, te)}
    result = run_boundary_perturbation(spec, ds, trained=trained)
    print(result.paths["boundary"])
    return EXIT_OK


def cmd_sweep_sigma(args) -> int:
    ds = _dataset(args)
    spec = _spec(args, "sigma-sweep", sigma_grid=tuple(args.sigma_grid))
    result = run_sigma_sweep(spec, ds)
    print(result.paths["sigma_sweep"])
    return EXIT_OK


def cmd_report(args) -> int:
    ds = _dataset(args)
    spec = _spec(args, args.workflow, variants=tuple(args.variants), tags=tuple(args.tags))
    result = run_workflow(spec, ds)
    for path in result.paths.values():
        print(path)
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "bfm": cmd_bfm,
    "train": cmd_train,
    "eval": cmd_eval,
    "perturb": cmd_perturb,
    "sweep-sigma": cmd_sweep_sigma,
    "report": cmd_report,
}

DATA_ERRORS = (ManifestError, PGMError, EmptyMaskError, CheckpointError, ExperimentError,
               FileNotFoundError)
CONFIG_ERRORS = (UsageError, ConfigError, TrainingError, SpecError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CONFIG_ERRORS as exc:
        print(f"birads-ssdl: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"birads-ssdl: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - top-level guard maps to the runtime exit code
        log.debug("runtime failure", exc_info=True)
        print(f"birads-ssdl: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
