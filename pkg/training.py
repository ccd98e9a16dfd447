"""
Training for the graph autoencoder.

The loss of one snapshot is the mean squared error between observed edge
weights and their reconstruction. Edge dropout hides a random share of
edges from the encoder while every original edge stays a target.
Minibatches of snapshots take one Adam step each; the learning rate decays
stepwise by epoch and the best-validation parameters are kept.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

import checkpoint_io
from dataset_io import atomic_write_text, write_frame
from decoder import DecoderParams, decode_backward, decode_forward, init_decoder_params
from encoder import (GraphLayerKind, ModelDims, ModelVariant, encode_backward, encode_forward,
                     init_encoder_params, variant_by_name)
from errors import ConfigError, ContainerError, DataError, DomainError, EmptyTargetError
from logging_config import TRACE_LEVEL_NUM
from nn_core import AdamState, Grads, ModelParams, Param, RngStream, adam_step
from od_graph import Dataset, ODSnapshot

logger = logging.getLogger("odgae.training")

# Spawn keys for the derived random streams
INIT_KEY = 1
SHUFFLE_KEY = 2
DROPOUT_KEY = 3


def _parse_dims(value: Any) -> Tuple[int, ...]:
    if isinstance(value, str):
        value = [v for v in value.replace(" ", "").split(",") if v]
    if isinstance(value, (int, float)):
        value = [value]
    return tuple(int(v) for v in value)


def _parse_bool(value: Any) -> bool:
    if isinstance(value, str):
        lowered = value.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: '{value}'")
    return bool(value)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run."""
    epochs: int = 150
    batch_size: int = 10
    validation_fraction: float = 0.10
    learning_rate: float = 5e-5
    lr_decay_factor: float = 0.5
    lr_decay_every_epochs: int = 50
    p_e_drop: float = 0.2
    p_drop: float = 0.2
    layer_dims: Tuple[int, ...] = (300, 150)
    d_hour: int = 100
    d_week: int = 100
    d_g: int = 150
    d_e: Optional[int] = None
    variant: ModelVariant = ModelVariant()
    seed: int = 0
    early_stop_patience: int = 10

    def __post_init__(self):
        object.__setattr__(self, "layer_dims", _parse_dims(self.layer_dims))
        problems = []
        if self.epochs < 0:
            problems.append("epochs must be >= 0")
        if self.batch_size < 1:
            problems.append("batch_size must be >= 1")
        if not 0.0 < self.validation_fraction < 1.0:
            problems.append("validation_fraction must lie in (0, 1)")
        if not self.learning_rate > 0.0:
            problems.append("learning_rate must be > 0")
        if not 0.0 < self.lr_decay_factor <= 1.0:
            problems.append("lr_decay_factor must lie in (0, 1]")
        if self.lr_decay_every_epochs < 1:
            problems.append("lr_decay_every_epochs must be >= 1")
        for name in ("p_e_drop", "p_drop"):
            if not 0.0 <= getattr(self, name) < 1.0:
                problems.append(f"{name} must lie in [0, 1)")
        dims = list(self.layer_dims) + [self.d_hour, self.d_week, self.d_g, self.d_e or 1]
        if not self.layer_dims or min(dims) < 1:
            problems.append("all dims must be >= 1")
        if self.early_stop_patience < 1:
            problems.append("early_stop_patience must be >= 1")
        if problems:
            raise ConfigError("invalid training config: " + "; ".join(problems))

    @property
    def edge_hidden_dim(self) -> int:
        return self.d_e if self.d_e is not None else self.layer_dims[-1]

    def model_dims(self, n_nodes: int) -> ModelDims:
        return ModelDims(n_nodes, self.layer_dims, self.d_hour, self.d_week, self.d_g, self.edge_hidden_dim)

    def to_mapping(self) -> Dict[str, Any]:
        """Flat key -> scalar/list snapshot (manifests, checkpoints)."""
        out: Dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "variant":
                out["use_context"] = value.use_context
                out["graph_layers"] = value.use_graph_layers.value
                out["context_in_decoder"] = value.context_in_decoder
            elif f.name == "layer_dims":
                out[f.name] = list(value)
            else:
                out[f.name] = value
        return out

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any]) -> "TrainConfig":
        """Build a config from flat keys; unknown keys are ignored."""
        kwargs: Dict[str, Any] = {}
        casts: Dict[str, Callable[[Any], Any]] = {
            "epochs": int, "batch_size": int, "validation_fraction": float, "learning_rate": float,
            "lr_decay_factor": float, "lr_decay_every_epochs": int, "p_e_drop": float, "p_drop": float,
            "layer_dims": _parse_dims, "d_hour": int, "d_week": int, "d_g": int,
            "d_e": lambda v: None if v in (None, "", "none", "None") else int(v),
            "seed": int, "early_stop_patience": int,
        }
        try:
            for key, cast in casts.items():
                if key in mapping and mapping[key] is not None:
                    kwargs[key] = cast(mapping[key])
            variant = variant_by_name(str(mapping["variant"])) if mapping.get("variant") else ModelVariant()
            variant_fields: Dict[str, Any] = {}
            if mapping.get("use_context") is not None:
                variant_fields["use_context"] = _parse_bool(mapping["use_context"])
            if mapping.get("graph_layers") is not None:
                variant_fields["use_graph_layers"] = GraphLayerKind(str(mapping["graph_layers"]))
            if mapping.get("context_in_decoder") is not None:
                variant_fields["context_in_decoder"] = _parse_bool(mapping["context_in_decoder"])
            kwargs["variant"] = replace(variant, **variant_fields) if variant_fields else variant
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid training config value: {e}")
        return cls(**kwargs)


# Hyperparameter profiles per dataset
PROFILES: Dict[str, Dict[str, Any]] = {
    "uber": dict(layer_dims=(300, 150), d_hour=100, d_week=100, d_g=150, p_e_drop=0.2, p_drop=0.2,
                 learning_rate=5e-5, lr_decay_every_epochs=50),
    "nyc": dict(layer_dims=(150, 50), d_hour=100, d_week=100, d_g=50, p_e_drop=0.2, p_drop=0.2,
                learning_rate=1e-3, lr_decay_every_epochs=20),
    "chicago": dict(layer_dims=(300, 25), d_hour=200, d_week=200, d_g=25, p_e_drop=0.1, p_drop=0.1,
                    learning_rate=1e-3, lr_decay_every_epochs=20),
    "desk": dict(layer_dims=(32, 16), d_hour=16, d_week=16, d_g=32, d_e=16, p_e_drop=0.1, p_drop=0.1,
                 learning_rate=5e-3, lr_decay_every_epochs=20, epochs=60),
}


def profile_config(name: str, **overrides: Any) -> TrainConfig:
    try:
        base = dict(PROFILES[name.lower()])
    except KeyError:
        raise ConfigError(f"unknown profile '{name}' (known: {', '.join(PROFILES)})")
    base.update(overrides)
    return TrainConfig.from_mapping(base)


@dataclass
class TrainReport:
    """Per-epoch losses and learning rates of a run."""
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    learning_rate: List[float] = field(default_factory=list)
    best_epoch: Optional[int] = None
    stopping_reason: str = "not_started"

    @property
    def epochs_completed(self) -> int:
        return len(self.train_loss)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "epoch": list(range(self.epochs_completed)),
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "lr": self.learning_rate,
        })


def write_train_report(report: TrainReport, path: Union[str, Path]) -> None:
    write_frame(path, report.to_frame())


@dataclass
class TrainingProgress:
    """Loop state needed to resume training exactly."""
    report: TrainReport = field(default_factory=TrainReport)
    best_val_loss: Optional[float] = None
    epochs_without_improvement: int = 0
    best_values: Optional[Dict[str, np.ndarray]] = None
    finished: bool = False


# -- model construction ----------------------------------------------------

def build_model_params(dims: ModelDims, rng: RngStream) -> ModelParams:
    return ModelParams(init_encoder_params(dims, rng) + init_decoder_params(dims, rng))


def initial_params(config: TrainConfig, n_nodes: int) -> ModelParams:
    return build_model_params(config.model_dims(n_nodes), RngStream(config.seed).derive(INIT_KEY))


def lr_at_epoch(config: TrainConfig, epoch: int) -> float:
    return config.learning_rate * config.lr_decay_factor ** (epoch // config.lr_decay_every_epochs)


def split_train_validation(snapshots: Sequence[ODSnapshot],
                           fraction: float) -> Tuple[List[ODSnapshot], List[ODSnapshot]]:
    """Chronological split: the last ``fraction`` of snapshots (at least one) validate."""
    total = len(snapshots)
    n_val = max(1, int(math.floor(fraction * total + 0.5)))
    n_train = total - n_val
    if n_train < 1 or n_val < 1:
        raise ConfigError(f"cannot split {total} snapshot(s) into nonempty train and validation sets")
    return list(snapshots[:n_train]), list(snapshots[n_train:])


# -- loss -------------------------------------------------------------------

def edge_dropout(snapshot: ODSnapshot, p_e_drop: float,
                 rng: Optional[RngStream]) -> Tuple[ODSnapshot, ODSnapshot]:
    """(encoder input with edges dropped, full original snapshot as targets)."""
    if not 0.0 <= p_e_drop < 1.0:
        raise DomainError(f"edge dropout probability must lie in [0, 1), got {p_e_drop}")
    if p_e_drop == 0.0 or snapshot.edge_count == 0:
        return snapshot, snapshot
    if rng is None:
        raise ValueError("edge dropout needs an RngStream")
    keep = rng.random(snapshot.edge_count) >= p_e_drop
    return snapshot.subset(keep), snapshot


def _loss_and_grads(snapshot_input: ODSnapshot, target: ODSnapshot, params: ModelParams,
                    variant: ModelVariant, features: Optional[np.ndarray], training: bool,
                    rng: Optional[RngStream], p_drop: float,
                    need_grads: bool) -> Tuple[float, Optional[Grads]]:
    if target.edge_count == 0:
        raise EmptyTargetError(f"snapshot at {target.timestamp} has no edges to reconstruct")
    h_G, enc_cache = encode_forward(snapshot_input, params, variant, training, rng, features, p_drop)
    pred, dec_cache = decode_forward(h_G, enc_cache.h_hour, enc_cache.h_week,
                                     target.origins, target.dests, params, variant)
    residual = pred - target.weights
    loss = float(np.mean(residual * residual))
    if not need_grads:
        return loss, None
    grad_pred = 2.0 * residual / residual.size
    grads, g_hG, g_hour, g_week = decode_backward(dec_cache, grad_pred, params)
    grads.update(encode_backward(enc_cache, g_hG, params, g_hour, g_week))
    return loss, grads


def graph_loss(snapshot_input: ODSnapshot, target_edges: ODSnapshot, params: ModelParams,
               variant: ModelVariant = ModelVariant(), mode: str = "eval",
               rng: Optional[RngStream] = None, features: Optional[np.ndarray] = None,
               p_drop: float = 0.0) -> float:
    """Mean squared reconstruction error over the target edges."""
    loss, _ = _loss_and_grads(snapshot_input, target_edges, params, variant, features,
                              mode == "train", rng, p_drop, need_grads=False)
    return loss


def snapshot_gradients(snapshot: ODSnapshot, params: ModelParams, variant: ModelVariant,
                       rng: Optional[RngStream], features: Optional[np.ndarray] = None,
                       p_e_drop: float = 0.0, p_drop: float = 0.0,
                       training: bool = True) -> Tuple[float, Grads]:
    """Loss and gradient buffers for one snapshot; parameters are only read."""
    snapshot_input, target = edge_dropout(snapshot, p_e_drop if training else 0.0, rng)
    loss, grads = _loss_and_grads(snapshot_input, target, params, variant, features,
                                  training, rng, p_drop, need_grads=True)
    return loss, grads  # type: ignore[return-value]


def loss_gradients(snapshot: ODSnapshot, params: ModelParams, variant: ModelVariant = ModelVariant(),
                   rng: Optional[RngStream] = None, features: Optional[np.ndarray] = None,
                   p_e_drop: float = 0.0, p_drop: float = 0.0, training: bool = True) -> float:
    """Accumulate the snapshot's loss gradients into the grad slots; returns the loss."""
    loss, grads = snapshot_gradients(snapshot, params, variant, rng, features, p_e_drop, p_drop, training)
    params.accumulate(grads)
    return loss


def evaluate_loss(snapshots: Sequence[ODSnapshot], params: ModelParams, variant: ModelVariant,
                  features: Optional[np.ndarray] = None,
                  executor: Optional[ThreadPoolExecutor] = None) -> float:
    """Mean eval-mode loss over snapshots that have edges."""
    usable = [s for s in snapshots if s.edge_count > 0]
    if not usable:
        raise DataError("no snapshot with edges to evaluate")

    def one(s: ODSnapshot) -> float:
        return graph_loss(s, s, params, variant, "eval", None, features)

    losses = list(executor.map(one, usable)) if executor else [one(s) for s in usable]
    return float(np.mean(losses))


# -- training loop ----------------------------------------------------------

@dataclass
class Checkpoint:
    params: ModelParams
    adam: AdamState
    config: TrainConfig
    n_nodes: int
    progress: TrainingProgress

    def best_params(self) -> ModelParams:
        """Copy of the parameters with the best validation loss seen so far."""
        best = self.params.copy()
        if self.progress.best_values is not None:
            best.load_values(self.progress.best_values)
        return best


_SHAPE_FIELDS = ("layer_dims", "d_hour", "d_week", "d_g", "d_e", "use_context", "graph_layers",
                 "context_in_decoder")


class Trainer:
    """Runs (or resumes) training of one model on one dataset."""

    def __init__(self, dataset: Dataset, config: TrainConfig, threads: int = 1,
                 resume: Optional[Checkpoint] = None):
        self.config = config
        self.threads = max(1, int(threads))
        self.features = dataset.node_features()
        usable = [s for s in dataset.snapshots if s.edge_count > 0]
        if len(usable) < len(dataset.snapshots):
            logger.warning("Ignoring %d snapshot(s) without edges", len(dataset.snapshots) - len(usable))
        if len(usable) < 2:
            raise ConfigError("training needs at least 2 snapshots with edges")
        self.train_snapshots, self.val_snapshots = split_train_validation(
            usable, config.validation_fraction)
        self.n_nodes = dataset.node_count
        self.rng = RngStream(config.seed)

        if resume is None:
            self.params = initial_params(config, self.n_nodes)
            self.adam = AdamState.for_params(self.params, config.learning_rate)
            self.progress = TrainingProgress()
        else:
            self._check_resume(resume)
            self.params = resume.params
            self.adam = resume.adam
            self.progress = resume.progress
        logger.info("Training on %d snapshots, validating on %d (%d parameters)",
                    len(self.train_snapshots), len(self.val_snapshots), self.params.count())

    def _check_resume(self, resume: Checkpoint) -> None:
        if resume.n_nodes != self.n_nodes:
            raise ConfigError(f"checkpoint was trained on {resume.n_nodes} zones, dataset has {self.n_nodes}")
        stored, wanted = resume.config.to_mapping(), self.config.to_mapping()
        for key in _SHAPE_FIELDS:
            if stored[key] != wanted[key]:
                raise ConfigError(f"cannot resume: checkpoint {key}={stored[key]} differs from {wanted[key]}")
        if resume.config.seed != self.config.seed:
            logger.warning("Resuming with seed %d (checkpoint used %d)", self.config.seed, resume.config.seed)

    @property
    def variant(self) -> ModelVariant:
        return self.config.variant

    def _snapshot_step(self, epoch: int, batch: int, k: int,
                       snapshot: ODSnapshot) -> Tuple[float, Grads]:
        rng = self.rng.derive(DROPOUT_KEY, epoch, batch, k)
        return snapshot_gradients(snapshot, self.params, self.variant, rng, self.features,
                                  self.config.p_e_drop, self.config.p_drop, training=True)

    def _run_epoch(self, epoch: int, executor: Optional[ThreadPoolExecutor]) -> float:
        cfg = self.config
        self.adam.lr = lr_at_epoch(cfg, epoch)
        order = self.rng.derive(SHUFFLE_KEY, epoch).permutation(len(self.train_snapshots))
        losses: List[float] = []
        for batch, start in enumerate(range(0, len(order), cfg.batch_size)):
            members = [self.train_snapshots[i] for i in order[start:start + cfg.batch_size]]
            jobs = [(epoch, batch, k, s) for k, s in enumerate(members)]
            if executor is not None:
                results = list(executor.map(lambda job: self._snapshot_step(*job), jobs))
            else:
                results = [self._snapshot_step(*job) for job in jobs]
            self.params.zero_grad()
            scale = 1.0 / len(results)
            for loss, grads in results:
                self.params.accumulate(grads, scale)
                losses.append(loss)
            adam_step(self.params, self.adam)
            logger.log(TRACE_LEVEL_NUM, "epoch %d batch %d loss %.6f", epoch, batch,
                       float(np.mean([r[0] for r in results])))
        return float(np.mean(losses))

    def run(self, on_epoch: Optional[Callable[[int, TrainReport], None]] = None) -> Tuple[ModelParams, TrainReport]:
        """Train until ``config.epochs`` or early stopping; returns best-validation params."""
        cfg = self.config
        progress = self.progress
        report = progress.report
        if cfg.epochs == 0 and report.epochs_completed == 0:
            report.stopping_reason = "no_epochs"
            logger.info("Zero epochs requested; returning initial parameters")
            return self.params.copy(), report

        executor = ThreadPoolExecutor(max_workers=self.threads) if self.threads > 1 else None
        try:
            epoch = report.epochs_completed
            while not progress.finished and epoch < cfg.epochs:
                train_loss = self._run_epoch(epoch, executor)
                val_loss = evaluate_loss(self.val_snapshots, self.params, self.variant,
                                         self.features, executor)
                report.train_loss.append(train_loss)
                report.val_loss.append(val_loss)
                report.learning_rate.append(self.adam.lr)
                if progress.best_val_loss is None or val_loss < progress.best_val_loss:
                    progress.best_val_loss = val_loss
                    progress.epochs_without_improvement = 0
                    progress.best_values = {k: v.copy() for k, v in self.params.values().items()}
                    report.best_epoch = epoch
                else:
                    progress.epochs_without_improvement += 1
                logger.info("Epoch %d/%d: train %.6f, val %.6f, lr %.2e", epoch + 1, cfg.epochs,
                            train_loss, val_loss, self.adam.lr)
                if on_epoch is not None:
                    on_epoch(epoch, report)
                epoch += 1
                if progress.epochs_without_improvement >= cfg.early_stop_patience:
                    progress.finished = True
                    report.stopping_reason = "early_stop"
                    logger.info("Early stopping after %d epochs without improvement",
                                progress.epochs_without_improvement)
            if not progress.finished:
                report.stopping_reason = "max_epochs"
        finally:
            if executor is not None:
                executor.shutdown(wait=True)
        return self.checkpoint().best_params(), report

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(self.params, self.adam, self.config, self.n_nodes, self.progress)


def train(dataset: Dataset, config: TrainConfig, threads: int = 1,
          resume: Optional[Checkpoint] = None) -> Tuple[ModelParams, TrainReport]:
    return Trainer(dataset, config, threads, resume).run()


# -- checkpoints ------------------------------------------------------------

def _encode_progress(progress: TrainingProgress) -> Dict[str, Any]:
    report = progress.report
    return {
        "train_loss": [float(v) for v in report.train_loss],
        "val_loss": [float(v) for v in report.val_loss],
        "learning_rate": [float(v) for v in report.learning_rate],
        "best_epoch": report.best_epoch,
        "stopping_reason": report.stopping_reason,
        "best_val_loss": progress.best_val_loss,
        "epochs_without_improvement": progress.epochs_without_improvement,
        "finished": progress.finished,
        "best_params": None if progress.best_values is None
        else checkpoint_io.encode_arrays(progress.best_values),
    }


def _decode_progress(body: Mapping[str, Any]) -> TrainingProgress:
    report = TrainReport([float(v) for v in body["train_loss"]], [float(v) for v in body["val_loss"]],
                         [float(v) for v in body["learning_rate"]], body["best_epoch"],
                         body["stopping_reason"])
    best = body.get("best_params")
    return TrainingProgress(report, body["best_val_loss"], int(body["epochs_without_improvement"]),
                            None if best is None else checkpoint_io.decode_arrays(best),
                            bool(body["finished"]))


def save_checkpoint(params: ModelParams, adam_state: AdamState, config: TrainConfig,
                    path: Union[str, Path], progress: Optional[TrainingProgress] = None) -> None:
    """Write parameters, optimizer state, config and loop state to ``path``."""
    progress = progress or TrainingProgress()
    body = {
        "config": config.to_mapping(),
        "seed": config.seed,
        "n_nodes": DecoderParams.of(params).n_nodes,
        "params": checkpoint_io.encode_arrays(params.values()),
        "adam": {
            "lr": adam_state.lr, "beta1": adam_state.beta1, "beta2": adam_state.beta2,
            "eps": adam_state.eps, "step": adam_state.step,
            "m": checkpoint_io.encode_arrays(adam_state.m),
            "v": checkpoint_io.encode_arrays(adam_state.v),
        },
        "progress": _encode_progress(progress),
    }
    atomic_write_text(path, checkpoint_io.dumps_checkpoint(body))
    logger.info("Saved checkpoint after %d epoch(s) to %s", progress.report.epochs_completed, path)


def _check_shapes(arrays: Mapping[str, np.ndarray], template: ModelParams, what: str) -> None:
    for p in template:
        if p.name not in arrays:
            raise ContainerError(f"{what} missing from checkpoint", parameter=p.name)
        if arrays[p.name].shape != p.shape:
            raise ContainerError(f"{what} shape {arrays[p.name].shape} does not match expected {p.shape}",
                                 parameter=p.name)
    extra = sorted(set(arrays) - set(template.names()))
    if extra:
        raise ContainerError(f"unexpected {what} in checkpoint", parameter=extra[0])


def load_checkpoint(path: Union[str, Path], expected: Optional[TrainConfig] = None) -> Checkpoint:
    """Read a checkpoint, verifying its digest and parameter shapes.

    Args:
        path: Checkpoint file.
        expected: When given, stored parameters must have the shapes this config implies.

    Raises:
        ContainerError: Corrupt file, version mismatch, or a parameter whose shape
            disagrees with the config (the error names the parameter).
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ContainerError(f"cannot read checkpoint {path}: {e}")
    body = checkpoint_io.loads_checkpoint(text, source=str(path))
    try:
        config = TrainConfig.from_mapping(body["config"])
        n_nodes = int(body["n_nodes"])
        values = checkpoint_io.decode_arrays(body["params"])
        adam_body = body["adam"]
        progress = _decode_progress(body["progress"])
    except (KeyError, TypeError, ValueError, ConfigError) as e:
        raise ContainerError(f"{path}: malformed checkpoint body ({e})")

    template = build_model_params((expected or config).model_dims(n_nodes), RngStream(0))
    _check_shapes(values, template, "parameter")
    params = ModelParams(Param(p.name, values[p.name]) for p in template)

    m = checkpoint_io.decode_arrays(adam_body["m"])
    v = checkpoint_io.decode_arrays(adam_body["v"])
    _check_shapes(m, template, "Adam first moment")
    _check_shapes(v, template, "Adam second moment")
    adam = AdamState(lr=float(adam_body["lr"]), beta1=float(adam_body["beta1"]),
                     beta2=float(adam_body["beta2"]), eps=float(adam_body["eps"]),
                     step=int(adam_body["step"]),
                     m={p.name: m[p.name] for p in template}, v={p.name: v[p.name] for p in template})
    if progress.best_values is not None:
        _check_shapes(progress.best_values, template, "best parameter")
    logger.info("Loaded checkpoint from %s (%d epoch(s) completed)", path, progress.report.epochs_completed)
    return Checkpoint(params, adam, expected or config, n_nodes, progress)
