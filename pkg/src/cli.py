"""
Command-line harness.

    python -m src.cli synth --seed 7 --out d.csv --map-out d.map.csv
    python -m src.cli train --data d.csv --modality-map d.map.csv --out model.json
    python -m src.cli evaluate --checkpoint model.json --data d.csv --out preds.csv
    python -m src.cli trials --synthetic --trials 10 --out table.csv
    python -m src.cli ablate --synthetic --grid all --out table.csv
    python -m src.cli snapshots --data d.csv --groups random:3 --out snaps.csv

Exit codes: 0 success, 1 configuration/usage/data error, 2 runtime failure.
"""
import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from src.agents.orchestrator import CellSpec, ExperimentOrchestrator, build_grid, write_reports
from src.agents.trainer import ConsensusTrainer
from src.engine.consensus import ConsensusModel, predict, predict_proba
from src.services.checkpoint_service import Checkpoint, load_checkpoint, save_checkpoint
from src.services.config_factory import ConfigFactory
from src.services.dataset_service import knn_impute, load_csv, prepare_splits, write_csv
from src.services.partition_service import build_partition, describe, load_modality_map
from src.services.snapshot_service import export_snapshots
from src.services.synthetic_service import generate_synthetic
from src.utils.constants import MODALITY_MAP_COLUMNS
from src.utils.errors import ConfigError
from src.utils.metrics import metrics

logger = logging.getLogger("cli")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ─────────────────────────────────────────────────────────────────────────────
# PARSER
# ─────────────────────────────────────────────────────────────────────────────

def _add_data_flags(p: argparse.ArgumentParser, allow_synthetic: bool) -> None:
    p.add_argument("--data", help="CSV with header id,label,<features...>")
    p.add_argument("--modality-map", help="CSV feature_name,group_name (natural partition)")
    p.add_argument("--groups", default="natural", help="natural | random:K")
    if allow_synthetic:
        p.add_argument("--synthetic", nargs="?", const="", default=None, metavar="SPEC_JSON",
                       help="use a synthetic dataset (optionally from a JSON spec) instead of --data")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--noise", dest="noise", action="store_true", default=None)
    p.add_argument("--no-noise", dest="noise", action="store_false")
    p.add_argument("--coop", dest="coop", action="store_true", default=None)
    p.add_argument("--no-coop", dest="coop", action="store_false")
    p.add_argument("--steps", type=int, help="N, max outer steps")
    p.add_argument("--k-disc", type=int, help="K, discriminator steps per batch")
    p.add_argument("--batch", type=int, help="minibatch size")
    p.add_argument("--lr", type=float, help="learning rate for all three optimizers")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cn", description="Consensus Networks: train, evaluate and ablate")
    parser.add_argument("--config", help="JSON config replacing src/config/cn_config.json")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("train", help="fit one model, write checkpoint + history")
    _add_data_flags(p, allow_synthetic=False)
    _add_train_flags(p)
    p.add_argument("--out", required=True, help="checkpoint path (history goes next to it)")

    p = sub.add_parser("evaluate", help="score a CSV with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="predictions CSV")

    for name, helptext in (("trials", "repeated trials of one configuration"),
                           ("ablate", "ablation grid")):
        p = sub.add_parser(name, help=helptext)
        _add_data_flags(p, allow_synthetic=True)
        _add_train_flags(p)
        p.add_argument("--trials", type=int)
        p.add_argument("--jobs", type=int)
        p.add_argument("--out", required=True, help="table CSV (cell_id,metric,mean,std,n)")
        p.add_argument("--trials-out", help="per-trial CSV (default: <out>.trials.csv)")
        if name == "ablate":
            p.add_argument("--grid", default="all",
                           help="noise | cooperative | modalities | division | benchmark | all")
        else:
            p.add_argument("--family", choices=["cn", "mlp"], default="cn")

    p = sub.add_parser("synth", help="write a synthetic dataset CSV")
    p.add_argument("--synthetic", metavar="SPEC_JSON", help="JSON spec overriding the config defaults")
    p.add_argument("--n-samples", type=int)
    p.add_argument("--modalities", type=int)
    p.add_argument("--strength", type=float)
    p.add_argument("--noise-scale", type=float)
    p.add_argument("--distractors", type=int)
    p.add_argument("--nuisance-rank", type=int)
    p.add_argument("--missing-rate", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--map-out", help="also write the natural modality map")

    p = sub.add_parser("snapshots", help="train and export PCA snapshots of the representations")
    _add_data_flags(p, allow_synthetic=False)
    _add_train_flags(p)
    p.add_argument("--snapshot-steps", help="comma-separated outer steps (default from config)")
    p.add_argument("--out", required=True, help="snapshot CSV")
    return parser


# ─────────────────────────────────────────────────────────────────────────────
# HELPERS
# ─────────────────────────────────────────────────────────────────────────────

def _train_config(args):
    overrides = dict(n_steps=args.steps, k_disc=args.k_disc, batch_size=args.batch,
                     noise_enabled=args.noise, cooperative=args.coop, seed=args.seed)
    if args.lr is not None:
        overrides.update(lr_ephysician=args.lr, lr_discriminator=args.lr, lr_classifier=args.lr)
    return ConfigFactory.get_train_config(**overrides)


def _require_data(args) -> None:
    if not args.data:
        raise UsageError(f"{args.command}: --data is required")


def _load_dataset(args):
    """(dataset, group_map) from --data/--modality-map or --synthetic."""
    if getattr(args, "synthetic", None) is not None and not args.data:
        spec = ConfigFactory.get_synthetic_spec(**ConfigFactory.load_overrides(args.synthetic))
        return generate_synthetic(spec, args.seed), spec.group_map()
    _require_data(args)
    dataset = load_csv(args.data)
    group_map = load_modality_map(args.modality_map) if args.modality_map else None
    return dataset, group_map


def _synthetic_spec(args):
    overrides = ConfigFactory.load_overrides(args.synthetic)
    flags = dict(n_samples=args.n_samples, strength=args.strength, noise_scale=args.noise_scale,
                 distractor_dims=args.distractors, nuisance_rank=args.nuisance_rank,
                 missing_rate=args.missing_rate)
    if args.modalities is not None:
        dims = overrides.get("modality_dims") or ConfigFactory.get_synthetic_spec().modality_dims
        flags.update(n_modalities=args.modalities, modality_dims=[dims[0]] * args.modalities)
    overrides.update({k: v for k, v in flags.items() if v is not None})
    return ConfigFactory.get_synthetic_spec(**overrides)


def _fit_one(args, on_snapshots: Optional[str] = None):
    dataset, group_map = _load_dataset(args)
    config = _train_config(args)
    data = prepare_splits(dataset, ConfigFactory.get_data_config(), args.seed)
    partition = build_partition(dataset.feature_names, args.groups, group_map, args.seed)
    logger.info(f"🚀 Training CN on {data.train.n_samples} samples, modalities {describe(partition)}")

    rng = np.random.default_rng(config.seed)
    model = ConsensusModel(partition, dataset.n_classes, ConfigFactory.get_model_config(),
                           config.noise_enabled, rng)
    trainer = ConsensusTrainer(model, config, rng)
    if on_snapshots:
        if args.snapshot_steps:
            try:
                steps = [int(s) for s in args.snapshot_steps.split(",") if s.strip()]
            except ValueError as e:
                raise ConfigError(f"--snapshot-steps must be comma-separated integers: {e}") from e
        else:
            # config defaults beyond a short run are dropped rather than rejected
            steps = [s for s in ConfigFactory.get_snapshot_steps() if s <= config.n_steps]
        history = export_snapshots(trainer, data.train, data.val, steps, on_snapshots)
    else:
        history = trainer.fit(data.train, data.val)
    scores = metrics(data.test.y, predict(model, data.test.X), dataset.n_classes)
    logger.info(f"📊 Test accuracy={scores.accuracy:.4f} micro_f1={scores.micro_f1:.4f} "
                f"macro_f1={scores.macro_f1:.4f} after {len(history)} steps ({history.stop_reason})")
    return dataset, data, model, history, scores


# ─────────────────────────────────────────────────────────────────────────────
# COMMANDS
# ─────────────────────────────────────────────────────────────────────────────

def cmd_train(args) -> int:
    _require_data(args)
    dataset, data, model, history, scores = _fit_one(args)
    checkpoint = Checkpoint(model=model, feature_names=dataset.feature_names, class_names=dataset.class_names,
                            scaler=data.scaler,
                            metadata={"test_scores": scores.as_dict(), "steps_run": len(history),
                                      "stop_reason": history.stop_reason, "seed": args.seed})
    save_checkpoint(checkpoint, args.out)
    history_path = str(Path(args.out).with_suffix(".history.csv"))
    history.write_csv(history_path)
    logger.info(f"✅ History written to {history_path}")
    return 0


def cmd_evaluate(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    dataset = load_csv(args.data, class_names=checkpoint.class_names)
    missing = [f for f in checkpoint.feature_names if f not in dataset.feature_names]
    if missing:
        raise ConfigError(f"{args.data} lacks checkpoint features {missing[:10]}")
    order = [dataset.feature_names.index(f) for f in checkpoint.feature_names]
    dataset = knn_impute(dataset.select_columns(order), ConfigFactory.get_data_config().knn_k)

    X = checkpoint.preprocess(dataset.X)
    y_pred = predict(checkpoint.model, X)
    scores = metrics(dataset.y, y_pred, len(checkpoint.class_names))
    print(json.dumps(scores.as_dict(), sort_keys=True))
    if args.out:
        proba = predict_proba(checkpoint.model, X)
        frame = pd.DataFrame({"id": dataset.ids,
                              "label": [checkpoint.class_names[i] for i in dataset.y],
                              "prediction": [checkpoint.class_names[i] for i in y_pred]})
        for c, name in enumerate(checkpoint.class_names):
            frame[f"p_{name}"] = proba[:, c]
        frame.to_csv(args.out, index=False, lineterminator="\n")
        logger.info(f"✅ Predictions written to {args.out}")
    return 0


def _orchestrator(args) -> ExperimentOrchestrator:
    dataset, group_map = _load_dataset(args)
    return ExperimentOrchestrator(
        dataset, group_map,
        model_config=ConfigFactory.get_model_config(),
        train_config=_train_config(args),
        data_config=ConfigFactory.get_data_config(),
        eval_config=ConfigFactory.get_evaluation_config(n_trials=args.trials, jobs=args.jobs),
        master_seed=args.seed,
    )


def _trials_out(args) -> str:
    return args.trials_out or str(Path(args.out).with_suffix(".trials.csv"))


def cmd_trials(args) -> int:
    orch = _orchestrator(args)
    groups = args.groups.strip().lower()
    cell = CellSpec(cell_id=f"{args.family}_{groups.replace(':', '_')}", family=args.family, groups=groups)
    summary = orch.run_trials(cell)
    write_reports([summary], args.out, _trials_out(args))
    return 0


def cmd_ablate(args) -> int:
    if args.groups.strip().lower() != "natural":
        raise ConfigError(f"ablate builds each cell's partition from the grid; --groups {args.groups} is not supported")
    orch = _orchestrator(args)
    grid = build_grid(args.grid, orch.natural.names)
    summaries = orch.run_ablation(grid)
    write_reports(summaries, args.out, _trials_out(args))
    return 0


def cmd_synth(args) -> int:
    spec = _synthetic_spec(args)
    dataset = generate_synthetic(spec, args.seed)
    write_csv(dataset, args.out)
    if args.map_out:
        pd.DataFrame(list(spec.group_map().items()), columns=MODALITY_MAP_COLUMNS).to_csv(
            args.map_out, index=False, lineterminator="\n")
    return 0


def cmd_snapshots(args) -> int:
    _require_data(args)
    _fit_one(args, on_snapshots=args.out)
    return 0


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "trials": cmd_trials,
    "ablate": cmd_ablate,
    "synth": cmd_synth,
    "snapshots": cmd_snapshots,
}


def cli_main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return int(e.code or 0)

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s - %(levelname)s - %(message)s")
    if args.config:
        os.environ["CN_CONFIG_PATH"] = args.config
        ConfigFactory.reset()
    if not args.command:
        parser.print_usage(sys.stderr)
        return 1

    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(e, file=sys.stderr)
        return 1
    except (ConfigError, ValueError) as e:
        logger.error(f"❌ {args.command}: {e}")
        return 1
    except Exception as e:
        logger.exception(f"❌ {args.command} failed: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(cli_main())
