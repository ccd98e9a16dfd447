"""
Anomaly scoring and evaluation.

A trained autoencoder scores each snapshot by its eval-mode reconstruction
loss. Labeled test sets are built by resampling a clean test period from
per-(OD pair, hour, weekday) Gaussians and injecting spatial (travel-time
perturbation) or temporal (12 hour context shift) anomalies into a random
share of the slices. Detection quality is the ROC AUC of the scores.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from enum import Enum
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from encoder import ModelVariant, variant_by_name, variant_name
from errors import ConfigError, DataError, EmptyTargetError, UndefinedMetricError
from nn_core import ModelParams, RngStream
from od_graph import (HOURS_PER_DAY, Dataset, ODRecord, ODSnapshot, TimeContext, WeightScaler,
                      ZoneFeatures, build_snapshots, scale_weights, time_context)
from training import TrainConfig, graph_loss, train

logger = logging.getLogger("odgae.anomaly_eval")

TEMPORAL_SHIFT_HOURS = 12
MIN_TRAVEL_TIME = 1.0
HA_METHOD = "ha"
RESULT_COLUMNS = ["anomaly_type", "alpha", "beta", "gamma", "method", "auc_mean", "auc_std",
                  "repeats", "seed"]

# Spawn keys for injection and resampling streams
_SLICE_KEY = 1
_EDGE_KEY = 2
_RESAMPLE_KEY = 3


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


class AnomalyType(str, Enum):
    SPATIAL = "spatial"
    TEMPORAL = "temporal"


@dataclass(frozen=True)
class InjectionConfig:
    """Anomaly injection settings.

    gamma is the share of polluted slices; alpha (share of OD pairs per slice)
    and beta (max relative perturbation) apply to spatial anomalies only.
    """
    kind: AnomalyType = AnomalyType.SPATIAL
    gamma: float = 0.10
    alpha: float = 0.50
    beta: float = 0.10
    seed: int = 0

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", AnomalyType(self.kind))
        except ValueError:
            raise ConfigError(f"unknown anomaly type '{self.kind}' (expected spatial or temporal)")
        for name in ("gamma", "alpha"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        # beta = 1 could drive a travel time to zero
        if not 0.0 <= self.beta < 1.0:
            raise ConfigError(f"beta must lie in [0, 1), got {self.beta}")

    def with_seed(self, seed: int) -> "InjectionConfig":
        return replace(self, seed=int(seed))

    def to_mapping(self) -> Dict[str, Any]:
        return {"anomaly_type": self.kind.value, "gamma": self.gamma, "alpha": self.alpha,
                "beta": self.beta, "injection_seed": self.seed}

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any]) -> "InjectionConfig":
        try:
            return cls(
                kind=str(mapping.get("anomaly_type", mapping.get("kind", AnomalyType.SPATIAL.value))),
                gamma=float(mapping.get("gamma", 0.10)),
                alpha=float(mapping.get("alpha", 0.50)),
                beta=float(mapping.get("beta", 0.10)),
                seed=int(mapping.get("injection_seed", mapping.get("seed", 0))),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid injection config value: {e}")


@dataclass(frozen=True)
class LabeledDataset:
    dataset: Dataset
    labels: Tuple[int, ...]
    injection: Optional[InjectionConfig] = None

    def __post_init__(self):
        labels = tuple(int(v) for v in self.labels)
        if len(labels) != len(self.dataset.snapshots):
            raise DataError(f"{len(labels)} labels for {len(self.dataset.snapshots)} snapshots")
        if any(v not in (0, 1) for v in labels):
            raise DataError("labels must be 0 or 1")
        object.__setattr__(self, "labels", labels)

    @property
    def positives(self) -> int:
        return sum(self.labels)


# -- historical statistics --------------------------------------------------

_Cell = Tuple[int, int, int, int]


@dataclass
class HourOfWeekStats:
    """Travel-time mean, population variance and sample count per (o, d, hour, dow)."""
    frame: pd.DataFrame
    _cells: Dict[_Cell, Tuple[float, float, int]] = field(init=False, repr=False)

    def __post_init__(self):
        self._cells = {
            (int(o), int(d), int(h), int(w)): (float(m), float(v), int(c))
            for o, d, h, w, m, v, c in self.frame[["o", "d", "hour", "dow", "mean", "var", "count"]]
            .itertuples(index=False, name=None)
        }

    def __len__(self) -> int:
        return len(self._cells)

    def lookup(self, origin: int, dest: int, context: TimeContext) -> Optional[Tuple[float, float, int]]:
        return self._cells.get((origin, dest, context.hour, context.dow))

    def means_for(self, snapshot: ODSnapshot, context: Optional[TimeContext] = None) -> np.ndarray:
        """Historical mean per edge of ``snapshot`` (NaN where no cell exists)."""
        ctx = context or snapshot.context
        out = np.full(snapshot.edge_count, np.nan)
        for i, (o, d) in enumerate(zip(snapshot.origins, snapshot.dests)):
            cell = self._cells.get((int(o), int(d), ctx.hour, ctx.dow))
            if cell is not None:
                out[i] = cell[0]
        return out


def fit_hour_of_week_stats(dataset: Dataset) -> HourOfWeekStats:
    """Fit per-cell Gaussians from the snapshots' travel times."""
    rows: List[pd.DataFrame] = []
    for s in dataset.snapshots:
        if s.edge_count == 0:
            continue
        if np.any(np.isnan(s.travel_times)):
            raise DataError(f"snapshot at {s.timestamp} has no travel times to fit statistics on")
        rows.append(pd.DataFrame({
            "o": s.origins, "d": s.dests, "hour": s.context.hour, "dow": s.context.dow,
            "tau": s.travel_times,
        }))
    if not rows:
        raise DataError("no observed edges to fit hour-of-week statistics")
    frame = pd.concat(rows, ignore_index=True)
    grouped = frame.groupby(["o", "d", "hour", "dow"], sort=True)["tau"]
    stats = pd.DataFrame({
        "mean": grouped.mean(),
        "var": grouped.var(ddof=0),
        "count": grouped.count(),
    }).reset_index()
    logger.info("Fitted hour-of-week statistics for %d cells", len(stats))
    return HourOfWeekStats(stats)


# -- scoring ----------------------------------------------------------------

def anomaly_score(snapshot: ODSnapshot, params: ModelParams, variant: ModelVariant = ModelVariant(),
                  features: Optional[np.ndarray] = None) -> float:
    """Eval-mode reconstruction loss over the snapshot's full edge set."""
    return graph_loss(snapshot, snapshot, params, variant, "eval", None, features)


def score_dataset(dataset: Dataset, params: ModelParams, variant: ModelVariant = ModelVariant(),
                  threads: int = 1) -> np.ndarray:
    """Anomaly score per snapshot; NaN for snapshots without edges."""
    features = dataset.node_features()

    def one(snapshot: ODSnapshot) -> float:
        try:
            return anomaly_score(snapshot, params, variant, features)
        except EmptyTargetError:
            logger.warning("Skipping snapshot at %s: no edges to score", snapshot.timestamp)
            return float("nan")

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scores = list(pool.map(one, dataset.snapshots))
    else:
        scores = [one(s) for s in dataset.snapshots]
    return np.array(scores, dtype=np.float64)


def ha_score(test: Union[LabeledDataset, Dataset], stats: HourOfWeekStats) -> np.ndarray:
    """Mean squared deviation (seconds^2) from the historical hour-of-week means."""
    dataset = test.dataset if isinstance(test, LabeledDataset) else test
    scores = np.zeros(len(dataset.snapshots), dtype=np.float64)
    for i, s in enumerate(dataset.snapshots):
        means = stats.means_for(s)
        matched = ~np.isnan(means) & ~np.isnan(s.travel_times)
        if not matched.any():
            logger.warning("Snapshot at %s has no edge with a historical cell; HA score 0", s.timestamp)
            continue
        diff = s.travel_times[matched] - means[matched]
        scores[i] = float(np.mean(diff * diff))
    return scores


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Area under the ROC curve via the rank-sum statistic; ties count one half.

    Raises:
        UndefinedMetricError: Labels hold a single class.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError(f"scores and labels must be 1-D of equal length, got {s.shape} and {y.shape}")
    if np.any(np.isnan(s)):
        raise ValueError("scores contain NaN")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = int((y == 0).sum())
    if n_pos + n_neg != len(y):
        raise ValueError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC is undefined when only one class is present")
    ranks = rankdata(s, method="average")
    u = float(ranks[pos].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def auc_of_scores(scores: np.ndarray, labels: Sequence[int]) -> float:
    """AUC over the snapshots that received a score."""
    keep = ~np.isnan(scores)
    if not keep.all():
        logger.warning("Excluding %d unscored snapshot(s) from AUC", int((~keep).sum()))
    return roc_auc(scores[keep], np.asarray(labels)[keep])


# -- clean test sets and injection -------------------------------------------

def synth_clean_testset(raw_test_records: Sequence[ODRecord],
                        zones: Sequence[Union[ZoneFeatures, str]], scaler: WeightScaler,
                        seed: int = 0) -> Dataset:
    """Complete clean test period resampled from per-cell Gaussians.

    Every hour between the first and last raw observation gets one snapshot
    holding each OD pair that has a historical cell at that hour and weekday,
    with travel time drawn from Normal(mean, variance) and floored at 1 s.
    Pairs never observed at that hour and weekday stay absent.
    """
    raw = build_snapshots(raw_test_records, zones, scaler)
    if not raw.snapshots:
        raise DataError("raw test records contain no edges inside the zone set")
    stats = fit_hour_of_week_stats(raw)
    start, end = raw.snapshots[0].timestamp, raw.snapshots[-1].timestamp
    span_hours = int((end - start).total_seconds() // 3600) + 1
    if span_hours < HOURS_PER_DAY * 7:
        logger.warning("Raw test period covers %d hours, less than one full week", span_hours)

    by_slot = {(h, w): g for (h, w), g in stats.frame.groupby(["hour", "dow"], sort=True)}
    rng = RngStream(seed).derive(_RESAMPLE_KEY)
    n = raw.node_count
    snapshots: List[ODSnapshot] = []
    for step in range(span_hours):
        stamp = start + timedelta(hours=step)
        ctx = time_context(stamp)
        cells = by_slot.get((ctx.hour, ctx.dow))
        if cells is None or cells.empty:
            continue
        mean = cells["mean"].to_numpy(dtype=np.float64)
        std = np.sqrt(cells["var"].to_numpy(dtype=np.float64))
        taus = np.maximum(rng.normal(mean, std), MIN_TRAVEL_TIME)
        snapshots.append(ODSnapshot(n, cells["o"].to_numpy(dtype=np.int64),
                                    cells["d"].to_numpy(dtype=np.int64),
                                    scale_weights(scaler, taus), ctx, stamp, taus))
    clean = Dataset(raw.zones, tuple(snapshots), scaler)
    logger.info("Resampled clean test set: %d snapshots, %.1f edges per graph",
                len(snapshots), clean.edge_count_stats()["mean"])
    return clean


def _choose_slices(clean: Dataset, cfg: InjectionConfig) -> np.ndarray:
    total = len(clean.snapshots)
    count = round_half_up(cfg.gamma * total)
    if count == 0 or count == total:
        raise ConfigError(
            f"gamma={cfg.gamma} selects {count} of {total} slices; both classes are needed"
        )
    chosen = RngStream(cfg.seed).derive(_SLICE_KEY).choice(total, count, replace=False)
    return np.sort(chosen)


def _labels_for(total: int, chosen: np.ndarray) -> Tuple[int, ...]:
    labels = np.zeros(total, dtype=np.int64)
    labels[chosen] = 1
    return tuple(int(v) for v in labels)


def inject_spatial(clean: Dataset, cfg: InjectionConfig) -> LabeledDataset:
    """Scale the travel times of a share of edges on chosen slices by (1 + U(-beta, beta))."""
    scaler = clean.scaler
    if scaler is None:
        raise DataError("spatial injection needs a dataset with a fitted weight scaler")
    chosen = _choose_slices(clean, cfg)
    snapshots = list(clean.snapshots)
    edge_rng = RngStream(cfg.seed).derive(_EDGE_KEY)
    for t in chosen:
        s = snapshots[t]
        k = round_half_up(cfg.alpha * s.edge_count)
        if k == 0:
            continue
        idx = np.sort(edge_rng.choice(s.edge_count, k, replace=False))
        u = edge_rng.uniform(-cfg.beta, cfg.beta, k)
        taus = s.travel_times.copy()
        if np.any(np.isnan(taus[idx])):
            raise DataError(f"snapshot at {s.timestamp} lacks travel times for spatial injection")
        taus[idx] = taus[idx] * (1.0 + u)
        weights = s.weights.copy()
        weights[idx] = scale_weights(scaler, taus[idx])
        snapshots[t] = replace(s, weights=weights, travel_times=taus)
    logger.info("Injected spatial anomalies into %d of %d slices (alpha=%.2f, beta=%.2f)",
                len(chosen), len(snapshots), cfg.alpha, cfg.beta)
    return LabeledDataset(clean.with_snapshots(snapshots), _labels_for(len(snapshots), chosen), cfg)


def inject_temporal(clean: Dataset, cfg: InjectionConfig) -> LabeledDataset:
    """Shift the hour of chosen slices by 12; edges and weekday stay as they are."""
    chosen = _choose_slices(clean, cfg)
    snapshots = list(clean.snapshots)
    for t in chosen:
        s = snapshots[t]
        snapshots[t] = s.with_context(s.context.shifted(TEMPORAL_SHIFT_HOURS))
    logger.info("Injected temporal anomalies into %d of %d slices", len(chosen), len(snapshots))
    return LabeledDataset(clean.with_snapshots(snapshots), _labels_for(len(snapshots), chosen), cfg)


def inject(clean: Dataset, cfg: InjectionConfig) -> LabeledDataset:
    if cfg.kind is AnomalyType.SPATIAL:
        return inject_spatial(clean, cfg)
    return inject_temporal(clean, cfg)


# -- experiments ------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentResult:
    """AUC summary of one method on one grid cell.

    ``auc_std`` is the population standard deviation (ddof=0) of ``aucs``, so a
    single repeat reports 0.0 rather than NaN.
    """
    anomaly_type: str
    alpha: float
    beta: float
    gamma: float
    method: str
    auc_mean: float
    auc_std: float
    repeats: int
    seed: int
    aucs: Tuple[float, ...] = ()

    def to_row(self) -> Dict[str, Any]:
        return {c: getattr(self, c) for c in RESULT_COLUMNS}


def results_frame(rows: Iterable[ExperimentResult]) -> pd.DataFrame:
    return pd.DataFrame([r.to_row() for r in rows], columns=RESULT_COLUMNS)


@dataclass
class TrainedModel:
    params: ModelParams
    variant: ModelVariant


def evaluate_methods(labeled: LabeledDataset, models: Mapping[str, TrainedModel],
                     ha_stats: Optional[HourOfWeekStats] = None,
                     threads: int = 1) -> Dict[str, float]:
    """AUC per method on one labeled test set, in ``models`` order then HA."""
    aucs: Dict[str, float] = {}
    for name, model in models.items():
        scores = score_dataset(labeled.dataset, model.params, model.variant, threads)
        aucs[name] = auc_of_scores(scores, labeled.labels)
    if ha_stats is not None:
        aucs[HA_METHOD] = auc_of_scores(ha_score(labeled, ha_stats), labeled.labels)
    return aucs


def train_methods(train_set: Dataset, methods: Sequence[str], model_cfg: TrainConfig,
                  pretrained: Optional[Mapping[str, TrainedModel]] = None,
                  threads: int = 1) -> Dict[str, TrainedModel]:
    """One model per variant name (HA needs none); pretrained entries are reused."""
    models: Dict[str, TrainedModel] = {}
    for name in methods:
        if name == HA_METHOD:
            continue
        if pretrained and name in pretrained:
            models[name] = pretrained[name]
            continue
        variant = variant_by_name(name)
        logger.info("Training %s", name)
        params, _ = train(train_set, replace(model_cfg, variant=variant), threads)
        models[name] = TrainedModel(params, variant)
    return models


def run_experiment(train_set: Dataset, raw_test_records: Sequence[ODRecord],
                   grid: Sequence[InjectionConfig], repeats: int = 5,
                   model_cfg: Optional[TrainConfig] = None,
                   methods: Sequence[str] = ("con-gae", HA_METHOD),
                   pretrained: Optional[Mapping[str, TrainedModel]] = None,
                   threads: int = 1) -> List[ExperimentResult]:
    """Mean and std of AUC over ``repeats`` regenerated test sets per grid cell and method.

    Repeat r of a cell resamples the clean test set and injects anomalies
    with seed ``cell.seed + r``.
    """
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    if not grid:
        raise ConfigError("experiment grid is empty")
    if train_set.scaler is None:
        raise DataError("training dataset has no weight scaler")
    model_cfg = model_cfg or TrainConfig()
    models = train_methods(train_set, methods, model_cfg, pretrained, threads)
    ha_stats = fit_hour_of_week_stats(train_set) if HA_METHOD in methods else None

    clean_sets: Dict[int, Dataset] = {}
    results: List[ExperimentResult] = []
    for cell in grid:
        per_method: Dict[str, List[float]] = {}
        for r in range(repeats):
            seed = cell.seed + r
            if seed not in clean_sets:
                clean_sets[seed] = synth_clean_testset(raw_test_records, train_set.zones,
                                                       train_set.scaler, seed)
            labeled = inject(clean_sets[seed], cell.with_seed(seed))
            for name, auc in evaluate_methods(labeled, models, ha_stats, threads).items():
                per_method.setdefault(name, []).append(auc)
        for name in [m for m in methods if m in per_method]:
            values = np.array(per_method[name], dtype=np.float64)
            results.append(ExperimentResult(cell.kind.value, cell.alpha, cell.beta, cell.gamma, name,
                                            float(values.mean()), float(values.std()), repeats,
                                            cell.seed, tuple(float(v) for v in values)))
            logger.info("%s gamma=%.2f alpha=%.2f beta=%.2f %s: AUC %.3f +/- %.3f", cell.kind.value,
                        cell.gamma, cell.alpha, cell.beta, name, values.mean(), values.std())
    return results


def _setting_label(base: str, setting: Mapping[str, Any]) -> str:
    parts = []
    for key in sorted(setting):
        value = setting[key]
        if isinstance(value, (list, tuple)):
            value = "x".join(str(v) for v in value)
        parts.append(f"{key}={value}")
    return f"{base}[{';'.join(parts)}]"


def run_sensitivity(train_set: Dataset, raw_test_records: Sequence[ODRecord],
                    settings: Sequence[Mapping[str, Any]], model_cfg: Optional[TrainConfig] = None,
                    repeats: int = 5, seed: int = 0,
                    kinds: Sequence[AnomalyType] = (AnomalyType.SPATIAL,),
                    threads: int = 1) -> List[ExperimentResult]:
    """AUC for each embedding-size override at alpha=50%, beta=10%, gamma=10%.

    Each setting maps TrainConfig keys (layer_dims, d_hour, d_week, d_g, ...)
    to override values; the method column names the setting.
    """
    model_cfg = model_cfg or TrainConfig()
    grid = [InjectionConfig(kind, gamma=0.10, alpha=0.50, beta=0.10, seed=seed) for kind in kinds]
    base = variant_name(model_cfg.variant) or "con-gae"
    results: List[ExperimentResult] = []
    for setting in settings:
        cfg = TrainConfig.from_mapping({**model_cfg.to_mapping(), **setting})
        params, _ = train(train_set, cfg, threads)
        label = _setting_label(base, setting)
        rows = run_experiment(train_set, raw_test_records, grid, repeats, cfg, (label,),
                              {label: TrainedModel(params, cfg.variant)}, threads)
        results.extend(rows)
    return results
