#!/usr/bin/env python3
"""
odgae: context-augmented graph autoencoder for anomaly detection in
origin-destination travel-time graphs.

Subcommands:
- ingest: trip records -> dataset container
- train: dataset -> checkpoint + training report
- score: dataset + checkpoint -> score series
- inject: clean dataset -> labeled dataset with spatial or temporal anomalies
- eval: labeled dataset + checkpoint -> AUC table
- report: experiment manifest -> full grid AUC table
- synth: synthetic two-regime city records
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Union

from anomaly_eval import (HA_METHOD, AnomalyType, ExperimentResult, InjectionConfig, LabeledDataset,
                          TrainedModel, evaluate_methods, fit_hour_of_week_stats, inject,
                          results_frame, run_experiment, run_sensitivity, score_dataset,
                          synth_clean_testset)
from dataset_io import (atomic_write_text, file_digest, read_dataset, read_dataset_meta,
                        score_series_frame, write_dataset, write_frame)
from encoder import VARIANTS, variant_name
from errors import ConfigError, DataError, OdgaeError
from logging_config import setup_logging
from od_graph import (UBER_SCHEMA, RecordSchema, build_dataset, load_zone_features,
                      parse_od_records, parse_timestamp, split_records_by_time)
from synth_city import DEFAULT_START, generate_city, write_city
from training import PROFILES, TrainConfig, Trainer, load_checkpoint, save_checkpoint, write_train_report

__version__ = "0.1.0"

logger = logging.getLogger("odgae")

# Default configuration
DEFAULT_CONFIG: Dict[str, Any] = {
    # Logging
    "log_level": "INFO",
    "log_dir": "logs",

    # Runtime
    "threads": 1,
    "seed": 0,
    "profile": "",  # uber, nyc, chicago, desk

    # Ingestion
    "zones": 50,
    "min_counterparts": None,
    "schema": "default",  # default | uber
    "delimiter": ",",
    "lenient": False,

    # Training (None = take the profile / built-in default)
    "variant": None,
    "epochs": None,
    "batch_size": None,
    "validation_fraction": None,
    "learning_rate": None,
    "lr_decay_factor": None,
    "lr_decay_every_epochs": None,
    "p_e_drop": None,
    "p_drop": None,
    "layer_dims": None,
    "d_hour": None,
    "d_week": None,
    "d_g": None,
    "d_e": None,
    "early_stop_patience": None,

    # Injection
    "anomaly_type": "spatial",
    "alpha": 0.5,
    "beta": 0.1,
    "gamma": 0.1,
    "injection_seed": None,  # None = use seed
}

TRAIN_KEYS = ("variant", "epochs", "batch_size", "validation_fraction", "learning_rate",
              "lr_decay_factor", "lr_decay_every_epochs", "p_e_drop", "p_drop", "layer_dims",
              "d_hour", "d_week", "d_g", "d_e", "early_stop_patience", "seed")
_VARIANT_FIELDS = ("use_context", "graph_layers", "context_in_decoder")


# -- configuration ----------------------------------------------------------

def parse_value(text: str) -> Any:
    """Typed value from key=value text: none, bool, int, float, comma list or string."""
    text = text.strip()
    lowered = text.lower()
    if lowered in ("", "none", "null"):
        return None
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    if "," in text:
        return [parse_value(part) for part in text.split(",") if part.strip()]
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_key_values(text: str, source: str = "<config>") -> Dict[str, Any]:
    """Parse flat key=value lines; '#' starts a comment line."""
    result: Dict[str, Any] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{source}:{number}: expected key=value, got '{line}'")
        result[key.strip()] = parse_value(value)
    return result


def dumps_key_values(mapping: Mapping[str, Any]) -> str:
    return "".join(f"{key}={format_value(mapping[key])}\n" for key in sorted(mapping))


def load_config(config_path: Optional[Union[str, Path]] = "config.json") -> Dict[str, Any]:
    """Load configuration (JSON, or key=value for other extensions) over the defaults."""
    config = dict(DEFAULT_CONFIG)
    if not config_path:
        return config
    config_path = str(config_path)
    if not os.path.exists(config_path):
        logger.info("Config file %s not found; using defaults", config_path)
        return config
    try:
        with open(config_path, "r", encoding="utf-8") as f:
            text = f.read()
        if config_path.endswith(".json"):
            loaded = json.loads(text)
            if not isinstance(loaded, dict):
                raise ConfigError(f"{config_path}: top level must be an object")
        else:
            loaded = parse_key_values(text, config_path)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Error loading config {config_path}: {e}")
    config.update(loaded)
    return config


def save_config(config: Dict[str, Any], config_path: Union[str, Path] = "config.json") -> None:
    """Save configuration as JSON or key=value, by extension."""
    config_path = str(config_path)
    if config_path.endswith(".json"):
        text = json.dumps(config, indent=4, sort_keys=True) + "\n"
    else:
        text = dumps_key_values(config)
    atomic_write_text(config_path, text)


def resolve_train_config(config: Mapping[str, Any]) -> TrainConfig:
    """Defaults, then the profile, then explicit file/flag values."""
    mapping: Dict[str, Any] = TrainConfig().to_mapping()
    profile = config.get("profile")
    if profile:
        if str(profile).lower() not in PROFILES:
            raise ConfigError(f"unknown profile '{profile}' (known: {', '.join(PROFILES)})")
        mapping.update(PROFILES[str(profile).lower()])
    for key in TRAIN_KEYS + _VARIANT_FIELDS:
        if config.get(key) is not None:
            mapping[key] = config[key]
    if config.get("variant") is not None:
        for key in _VARIANT_FIELDS:
            if config.get(key) is None:
                mapping.pop(key, None)
    return TrainConfig.from_mapping(mapping)


def resolve_injection_config(config: Mapping[str, Any]) -> InjectionConfig:
    seed = config.get("injection_seed")
    return InjectionConfig.from_mapping({
        "anomaly_type": config.get("anomaly_type"),
        "alpha": config.get("alpha"),
        "beta": config.get("beta"),
        "gamma": config.get("gamma"),
        "injection_seed": config.get("seed", 0) if seed is None else seed,
    })


def record_schema(config: Mapping[str, Any]) -> RecordSchema:
    base = UBER_SCHEMA if str(config.get("schema", "default")).lower() == "uber" else RecordSchema()
    overrides = {k: config.get(f"{k}_column") for k in ("origin", "destination", "travel_time",
                                                         "timestamp", "date", "hour")}
    overrides = {k: v for k, v in overrides.items() if v}
    if not overrides:
        return base
    merged = {**{k: getattr(base, k) for k in base.__dataclass_fields__}, **overrides}
    if overrides.get("timestamp"):
        merged["date"] = merged["hour"] = None
    elif overrides.get("date") or overrides.get("hour"):
        merged["timestamp"] = None
    return RecordSchema.from_mapping(merged)


# -- run manifests ------------------------------------------------------------

@dataclass
class RunManifest:
    """Everything needed to replay one command, written beside its primary output."""
    command: str
    config: Dict[str, Any]
    seed: int
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: List[str] = field(default_factory=list)
    tool_version: str = __version__

    def add_input(self, name: str, path: Optional[str]) -> None:
        if path:
            self.inputs[name] = str(path)

    def to_mapping(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"command": self.command, "seed": self.seed,
                               "tool_version": self.tool_version}
        for key, value in self.config.items():
            out[f"config.{key}"] = value
        for name, path in self.inputs.items():
            out[f"input.{name}.path"] = path
            out[f"input.{name}.sha256"] = file_digest(path)
        for i, path in enumerate(self.outputs):
            out[f"output.{i}"] = path
        return out

    def write(self, primary_output: str) -> str:
        path = f"{primary_output}.manifest"
        atomic_write_text(path, dumps_key_values(self.to_mapping()))
        return path


def _run_config(config: Mapping[str, Any], keys: Sequence[str]) -> Dict[str, Any]:
    return {k: config.get(k) for k in keys}


# -- argument parsing -----------------------------------------------------------

class _ArgumentParser(argparse.ArgumentParser):
    """Reports usage errors as ConfigError instead of exiting."""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _add_training_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("Training")
    group.add_argument("--variant", choices=sorted(VARIANTS), help="Model variant")
    group.add_argument("--epochs", type=int, help="Maximum number of epochs")
    group.add_argument("--batch-size", dest="batch_size", type=int, help="Snapshots per minibatch")
    group.add_argument("--validation-fraction", dest="validation_fraction", type=float,
                       help="Share of snapshots (chronological tail) used for validation")
    group.add_argument("--lr", dest="learning_rate", type=float, help="Initial learning rate")
    group.add_argument("--lr-decay-factor", dest="lr_decay_factor", type=float)
    group.add_argument("--lr-decay-every", dest="lr_decay_every_epochs", type=int)
    group.add_argument("--p-e-drop", dest="p_e_drop", type=float, help="Edge dropout probability")
    group.add_argument("--p-drop", dest="p_drop", type=float, help="Feature dropout probability")
    group.add_argument("--layer-dims", dest="layer_dims", help="GraphSAGE widths, e.g. 300,150")
    group.add_argument("--d-hour", dest="d_hour", type=int)
    group.add_argument("--d-week", dest="d_week", type=int)
    group.add_argument("--d-g", dest="d_g", type=int, help="Graph embedding width")
    group.add_argument("--d-e", dest="d_e", type=int, help="Edge decoder hidden width")
    group.add_argument("--patience", dest="early_stop_patience", type=int,
                       help="Epochs without validation improvement before stopping")


def _add_injection_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("Injection")
    group.add_argument("--type", dest="anomaly_type", choices=[t.value for t in AnomalyType])
    group.add_argument("--alpha", type=float, help="Share of OD pairs perturbed (spatial)")
    group.add_argument("--beta", type=float, help="Max relative perturbation (spatial)")
    group.add_argument("--gamma", type=float, help="Share of polluted slices")
    group.add_argument("--injection-seed", dest="injection_seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="odgae", description="OD travel-time graph anomaly detection")
    parser.add_argument("--config", default="config.json", help="Path to configuration file")
    parser.add_argument("--profile", choices=sorted(PROFILES), help="Hyperparameter profile")
    parser.add_argument("--seed", type=int, help="Random seed")
    parser.add_argument("--threads", type=int, help="Worker thread cap")
    parser.add_argument("--log-level", dest="log_level",
                        choices=["TRACE", "DEBUG", "INFO", "WARNING", "ERROR"],
                        help="Set the logging level")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_ArgumentParser)
    sub.required = True

    p = sub.add_parser("ingest", help="Build a dataset container from trip records")
    p.add_argument("--records", required=True, help="Delimited OD travel-time records")
    p.add_argument("--zone-features", dest="zone_features", help="Zone bounding boxes CSV")
    p.add_argument("--out", required=True, help="Dataset container to write")
    p.add_argument("--zones", type=int, help="Number of best-connected zones to keep")
    p.add_argument("--min-counterparts", dest="min_counterparts", type=int)
    p.add_argument("--schema", choices=["default", "uber"])
    p.add_argument("--delimiter")
    p.add_argument("--lenient", action="store_true", default=None, help="Skip invalid rows")
    for name in ("origin", "destination", "travel-time", "timestamp", "date", "hour"):
        p.add_argument(f"--{name}-column", dest=f"{name.replace('-', '_')}_column")
    p.add_argument("--until", help="Only keep records before this hour (YYYY-MM-DDTHH)")

    p = sub.add_parser("train", help="Train a model on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint-out", dest="checkpoint_out", required=True)
    p.add_argument("--report", help="Training report CSV (default: <checkpoint>.report.csv)")
    p.add_argument("--resume", help="Checkpoint to continue from")
    _add_training_flags(p)

    p = sub.add_parser("score", help="Write per-snapshot anomaly scores")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("inject", help="Inject anomalies into a clean dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--test-records", dest="test_records",
                   help="Raw test records to resample a clean test period from first")
    p.add_argument("--since", help="Only resample test records from this hour on (YYYY-MM-DDTHH)")
    p.add_argument("--out", required=True)
    _add_injection_flags(p)

    p = sub.add_parser("eval", help="AUC of a checkpoint (and baselines) on a labeled dataset")
    p.add_argument("--labeled", required=True)
    p.add_argument("--checkpoint", action="append", default=[], help="May be given several times")
    p.add_argument("--baselines", default="", help="Comma list of baselines (ha)")
    p.add_argument("--train", dest="train_dataset", help="Training dataset for HA statistics")
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="Run a full experiment grid")
    p.add_argument("--manifest", required=True, help="Experiment manifest (key=value)")
    p.add_argument("--out", required=True)
    _add_training_flags(p)

    p = sub.add_parser("synth", help="Generate a synthetic city")
    p.add_argument("--out-records", dest="out_records", required=True)
    p.add_argument("--out-zones", dest="out_zones", required=True)
    p.add_argument("--zones", dest="n_zones", type=int, default=20)
    p.add_argument("--weeks", type=int, default=8)
    p.add_argument("--start", default=DEFAULT_START.strftime("%Y-%m-%dT%H"))
    p.add_argument("--missing-rate", dest="missing_rate", type=float, default=0.3)
    p.add_argument("--noise", type=float, default=0.05)
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Parse command line arguments"""
    return build_parser().parse_args(argv)


_FLAG_KEYS = ("profile", "seed", "threads", "log_level", "zones", "min_counterparts", "schema",
              "delimiter", "lenient", "anomaly_type", "alpha", "beta", "gamma", "injection_seed",
              "origin_column", "destination_column", "travel_time_column", "timestamp_column",
              "date_column", "hour_column") + TRAIN_KEYS


def apply_flags(config: Dict[str, Any], args: argparse.Namespace) -> Dict[str, Any]:
    """Command-line flags take precedence over the config file."""
    merged = dict(config)
    for key in _FLAG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


# -- commands -------------------------------------------------------------------

def _read_records(path: str, config: Mapping[str, Any]):
    schema = record_schema(config)
    with open(path, "r", encoding="utf-8", newline="") as f:
        return parse_od_records(f, schema, delimiter=str(config.get("delimiter") or ","),
                                lenient=bool(config.get("lenient")), source=path)


def _read_zone_features(path: Optional[str], config: Mapping[str, Any]):
    if not path:
        return None
    with open(path, "r", encoding="utf-8", newline="") as f:
        return load_zone_features(f, delimiter=str(config.get("delimiter") or ","), source=path)


def _open_error(e: OSError) -> DataError:
    return DataError(f"cannot read {e.filename}: {e.strerror}")


def cmd_ingest(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    try:
        records = _read_records(args.records, config)
        features = _read_zone_features(args.zone_features, config)
    except OSError as e:
        raise _open_error(e)
    if args.until:
        records, _ = split_records_by_time(records, parse_timestamp(args.until))
    dataset = build_dataset(records, int(config["zones"]), features, config.get("min_counterparts"))
    write_dataset(args.out, dataset)

    manifest = RunManifest("ingest", _run_config(config, ("zones", "min_counterparts", "schema",
                                                          "delimiter", "lenient")),
                           int(config.get("seed") or 0), outputs=[args.out])
    manifest.config["until"] = args.until
    manifest.add_input("records", args.records)
    manifest.add_input("zone_features", args.zone_features)
    manifest.write(args.out)

    summary = dataset.summary()
    print(f"zones: {summary['zones']}")
    print(f"snapshots: {summary['snapshots']}")
    print(f"avg edges per graph: {summary['avg_edges_per_graph']:.1f}")
    print(f"missing rate: {summary['missing_rate']:.3f}")
    return 0


def cmd_train(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    train_cfg = resolve_train_config(config)
    dataset, _ = read_dataset(args.dataset)
    resume = load_checkpoint(args.resume, expected=train_cfg) if args.resume else None
    trainer = Trainer(dataset, train_cfg, int(config.get("threads") or 1), resume)
    _, report = trainer.run()

    save_checkpoint(trainer.params, trainer.adam, train_cfg, args.checkpoint_out, trainer.progress)
    report_path = args.report or f"{args.checkpoint_out}.report.csv"
    write_train_report(report, report_path)

    manifest = RunManifest("train", train_cfg.to_mapping(), train_cfg.seed,
                           outputs=[args.checkpoint_out, report_path])
    manifest.config["threads"] = config.get("threads")
    manifest.add_input("dataset", args.dataset)
    manifest.add_input("resume", args.resume)
    manifest.write(args.checkpoint_out)
    print(f"epochs: {report.epochs_completed} ({report.stopping_reason}), best epoch: {report.best_epoch}")
    return 0


def cmd_score(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    dataset, labels = read_dataset(args.dataset)
    checkpoint = load_checkpoint(args.checkpoint)
    scores = score_dataset(dataset, checkpoint.best_params(), checkpoint.config.variant,
                           int(config.get("threads") or 1))
    write_frame(args.out, score_series_frame(dataset, scores, labels))

    manifest = RunManifest("score", {"variant": variant_name(checkpoint.config.variant)},
                           checkpoint.config.seed, outputs=[args.out])
    manifest.add_input("dataset", args.dataset)
    manifest.add_input("checkpoint", args.checkpoint)
    manifest.write(args.out)
    return 0


def cmd_inject(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    cfg = resolve_injection_config(config)
    dataset, _ = read_dataset(args.dataset)
    if args.test_records:
        if dataset.scaler is None:
            raise DataError(f"{args.dataset} has no weight scaler to resample with")
        try:
            raw = _read_records(args.test_records, config)
        except OSError as e:
            raise _open_error(e)
        if args.since:
            _, raw = split_records_by_time(raw, parse_timestamp(args.since))
        dataset = synth_clean_testset(raw, dataset.zones, dataset.scaler, cfg.seed)
    labeled = inject(dataset, cfg)
    write_dataset(args.out, labeled.dataset, labeled.labels, meta=cfg.to_mapping())

    manifest = RunManifest("inject", cfg.to_mapping(), cfg.seed, outputs=[args.out])
    manifest.config["since"] = args.since
    manifest.add_input("dataset", args.dataset)
    manifest.add_input("test_records", args.test_records)
    manifest.write(args.out)
    print(f"labeled {labeled.positives} of {len(labeled.labels)} slices as {cfg.kind.value} anomalies")
    return 0


def cmd_eval(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    dataset, labels = read_dataset(args.labeled)
    if labels is None:
        raise DataError(f"{args.labeled} is not a labeled dataset")
    meta = read_dataset_meta(args.labeled)
    injection = InjectionConfig.from_mapping(meta) if meta else None
    labeled = LabeledDataset(dataset, tuple(labels), injection)

    baselines = [b.strip().lower() for b in str(args.baselines).split(",") if b.strip()]
    unknown = [b for b in baselines if b != HA_METHOD]
    if unknown:
        raise ConfigError(f"unknown baseline(s): {', '.join(unknown)}")
    if not args.checkpoint and not baselines:
        raise ConfigError("nothing to evaluate: give --checkpoint and/or --baselines")

    models: Dict[str, TrainedModel] = {}
    for path in args.checkpoint:
        checkpoint = load_checkpoint(path)
        name = variant_name(checkpoint.config.variant) or Path(path).stem
        if name in models:
            name = f"{name}:{Path(path).stem}"
        models[name] = TrainedModel(checkpoint.best_params(), checkpoint.config.variant)
    ha_stats = None
    if HA_METHOD in baselines:
        if not args.train_dataset:
            raise ConfigError("the ha baseline needs --train")
        train_set, _ = read_dataset(args.train_dataset)
        ha_stats = fit_hour_of_week_stats(train_set)

    aucs = evaluate_methods(labeled, models, ha_stats, int(config.get("threads") or 1))
    kind = injection.kind.value if injection else "unknown"
    alpha = injection.alpha if injection else float("nan")
    beta = injection.beta if injection else float("nan")
    gamma = injection.gamma if injection else float("nan")
    seed = injection.seed if injection else int(config.get("seed") or 0)
    rows = [ExperimentResult(kind, alpha, beta, gamma, name, auc, 0.0, 1, seed, (auc,))
            for name, auc in aucs.items()]
    write_frame(args.out, results_frame(rows))

    manifest = RunManifest("eval", {"baselines": baselines, "methods": list(aucs)}, seed, outputs=[args.out])
    manifest.add_input("labeled", args.labeled)
    for i, path in enumerate(args.checkpoint):
        manifest.add_input(f"checkpoint{i}", path)
    manifest.add_input("train", args.train_dataset)
    manifest.write(args.out)
    for name, auc in aucs.items():
        print(f"{name}: AUC {auc:.3f}")
    return 0


def _as_list(value: Any) -> List[Any]:
    if value is None:
        return []
    return list(value) if isinstance(value, (list, tuple)) else [value]


def _sensitivity_settings(experiment: Mapping[str, Any]) -> List[Dict[str, Any]]:
    """One setting per value of each ``sensitivity.<key>`` entry (one factor at a time)."""
    settings: List[Dict[str, Any]] = []
    for key in sorted(k for k in experiment if k.startswith("sensitivity.")):
        name = key.split(".", 1)[1]
        for value in _as_list(experiment[key]):
            if name == "layer_dims":
                value = [int(v) for v in str(value).split("x")]
            settings.append({name: value})
    return settings


def cmd_report(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    try:
        with open(args.manifest, "r", encoding="utf-8") as f:
            experiment = parse_key_values(f.read(), args.manifest)
    except OSError as e:
        raise _open_error(e)
    base_dir = Path(args.manifest).resolve().parent

    def resolve_path(key: str) -> Optional[str]:
        value = experiment.get(key)
        if not value:
            return None
        path = Path(str(value))
        return str(path if path.is_absolute() else base_dir / path)

    train_path = resolve_path("train_records")
    if not train_path:
        raise ConfigError(f"{args.manifest}: train_records is required")
    test_path = resolve_path("test_records")
    zones_path = resolve_path("zone_features")
    merged = dict(config)
    for key, value in experiment.items():
        if key in DEFAULT_CONFIG and key not in ("log_level", "log_dir"):
            merged[key] = value
    merged = apply_flags(merged, args)

    try:
        train_records = _read_records(train_path, merged)
        test_records = _read_records(test_path, merged) if test_path else None
        features = _read_zone_features(zones_path, merged)
    except OSError as e:
        raise _open_error(e)
    if experiment.get("split_at"):
        cutoff = parse_timestamp(str(experiment["split_at"]))
        head, tail = split_records_by_time(train_records, cutoff)
        train_records = head
        test_records = test_records if test_records is not None else tail
    if not test_records:
        raise ConfigError(f"{args.manifest}: give test_records or split_at")

    train_set = build_dataset(train_records, int(merged["zones"]), features, merged.get("min_counterparts"))
    train_cfg = resolve_train_config(merged)
    seed = int(merged.get("seed") or 0)
    repeats = int(experiment.get("repeats", 5))
    threads = int(merged.get("threads") or 1)
    grid = [InjectionConfig(kind, gamma, alpha, beta, seed)
            for kind in _as_list(experiment.get("types", "spatial"))
            for gamma in _as_list(experiment.get("gammas", 0.1))
            for alpha in _as_list(experiment.get("alphas", 0.5))
            for beta in _as_list(experiment.get("betas", 0.1))]
    methods = [str(m) for m in _as_list(experiment.get("methods", ["con-gae", HA_METHOD]))]

    results = run_experiment(train_set, test_records, grid, repeats, train_cfg, methods, threads=threads)
    settings = _sensitivity_settings(experiment)
    if settings:
        results.extend(run_sensitivity(train_set, test_records, settings, train_cfg, repeats, seed,
                                       threads=threads))
    write_frame(args.out, results_frame(results))

    manifest = RunManifest("report", {**train_cfg.to_mapping(), **experiment}, seed, outputs=[args.out])
    manifest.add_input("experiment", args.manifest)
    manifest.add_input("train_records", train_path)
    manifest.add_input("test_records", test_path)
    manifest.add_input("zone_features", zones_path)
    manifest.write(args.out)
    print(results_frame(results).to_string(index=False))
    return 0


def cmd_synth(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    try:
        start = parse_timestamp(args.start)
    except ValueError as e:
        raise ConfigError(f"bad --start: {e}")
    seed = int(config.get("seed") or 0)
    records, zones = generate_city(args.n_zones, args.weeks, start, seed, args.missing_rate, args.noise)
    write_city(records, zones, args.out_records, args.out_zones)

    settings = {"zones": args.n_zones, "weeks": args.weeks, "start": args.start,
                "missing_rate": args.missing_rate, "noise": args.noise}
    RunManifest("synth", settings, seed, outputs=[args.out_records, args.out_zones]).write(args.out_records)
    print(f"records: {len(records)}, zones: {len(zones)}")
    return 0


COMMANDS: Dict[str, Callable[[argparse.Namespace, Dict[str, Any]], int]] = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "score": cmd_score,
    "inject": cmd_inject,
    "eval": cmd_eval,
    "report": cmd_report,
    "synth": cmd_synth,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point for the application"""
    try:
        args = parse_args(argv)
        config = apply_flags(load_config(args.config), args)
        setup_logging(config)
        return COMMANDS[args.command](args, config)
    except OdgaeError as e:
        logger.error("%s", e)
        return e.exit_code
    except Exception as e:
        logger.error("Application error: %s", e, exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
