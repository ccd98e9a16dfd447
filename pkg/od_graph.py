"""
Time-stamped origin-destination travel-time graphs.

Raw trip records are parsed from delimited text, the best-connected zones
are selected, travel times are mapped to edge weights in [0, 1] (scaled
inverse travel time, larger = faster) and grouped into one directed
weighted graph per hour.
"""
import csv
import logging
import math
from dataclasses import dataclass, field, replace
from datetime import date, datetime
from typing import (Any, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, TextIO,
                    Tuple, Union)

import numpy as np
import pandas as pd

from errors import (ConfigError, DataError, DegenerateScalerError, DomainError, RecordError,
                    SchemaError, ZoneSelectionError)

logger = logging.getLogger("odgae.od_graph")

HOURS_PER_DAY = 24
DAYS_PER_WEEK = 7
FEATURE_DIM = 4
ZONE_FEATURE_COLUMNS = ("zone_id", "min_lat", "min_lon", "max_lat", "max_lon")


# -- domain types -----------------------------------------------------------

@dataclass(frozen=True)
class ODRecord:
    """One observed mean travel time between two zones for one hour."""
    origin_zone: str
    dest_zone: str
    timestamp: datetime
    travel_time: float

    def __post_init__(self):
        if not self.origin_zone or not self.dest_zone:
            raise DomainError("zone identifiers must be nonempty")
        if not (self.travel_time > 0 and math.isfinite(self.travel_time)):
            raise DomainError(f"travel time must be positive and finite, got {self.travel_time}")


@dataclass(frozen=True)
class ZoneFeatures:
    """Zone bounding box (degrees) and its [0, 1]-scaled counterpart."""
    zone_id: str
    bbox: Optional[Tuple[float, float, float, float]] = None
    scaled_bbox: Tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.bbox is not None:
            min_lat, min_lon, max_lat, max_lon = self.bbox
            if min_lat > max_lat or min_lon > max_lon:
                raise DomainError(f"zone {self.zone_id}: bounding box min exceeds max")
        if len(self.scaled_bbox) != FEATURE_DIM:
            raise DomainError(f"zone {self.zone_id}: scaled bbox needs {FEATURE_DIM} values")


@dataclass(frozen=True)
class TimeContext:
    """Hour of day (0-23) and day of week (0 = Monday)."""
    hour: int
    dow: int

    def __post_init__(self):
        if not 0 <= self.hour < HOURS_PER_DAY:
            raise DomainError(f"hour out of range: {self.hour}")
        if not 0 <= self.dow < DAYS_PER_WEEK:
            raise DomainError(f"day of week out of range: {self.dow}")

    def shifted(self, hours: int) -> "TimeContext":
        """Same weekday, hour moved by ``hours`` modulo 24."""
        return TimeContext((self.hour + hours) % HOURS_PER_DAY, self.dow)


@dataclass(frozen=True)
class WeightScaler:
    """Affine map of inverse travel time onto [0, 1]."""
    inv_min: float
    inv_max: float

    def __post_init__(self):
        if not (0.0 < self.inv_min < self.inv_max):
            raise DegenerateScalerError(
                f"scaler needs 0 < inv_min < inv_max, got {self.inv_min}, {self.inv_max}"
            )

    @property
    def span(self) -> float:
        return self.inv_max - self.inv_min


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ODSnapshot:
    """One hourly directed weighted graph G(t).

    Edges are stored column-wise and kept sorted by (dest, origin), the
    summation order used by neighbour aggregation. ``travel_times`` holds
    the seconds each weight was scaled from.
    """
    node_count: int
    origins: np.ndarray
    dests: np.ndarray
    weights: np.ndarray
    context: TimeContext
    timestamp: datetime
    travel_times: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        n = int(self.node_count)
        if n < 1:
            raise DomainError("a snapshot needs at least one node")
        origins = np.array(self.origins, dtype=np.int64).reshape(-1)
        dests = np.array(self.dests, dtype=np.int64).reshape(-1)
        weights = np.array(self.weights, dtype=np.float64).reshape(-1)
        taus = (np.full(weights.shape, np.nan) if self.travel_times is None
                else np.array(self.travel_times, dtype=np.float64).reshape(-1))
        if not (len(origins) == len(dests) == len(weights) == len(taus)):
            raise DomainError("edge arrays must have equal length")
        if len(origins):
            if origins.min() < 0 or dests.min() < 0 or origins.max() >= n or dests.max() >= n:
                raise DomainError(f"edge endpoint outside [0, {n})")
            if np.any(origins == dests):
                raise DomainError("self-loops are not allowed in a snapshot")
            if not np.all((weights >= 0.0) & (weights <= 1.0)):
                raise DomainError("edge weights must lie in [0, 1]")
            order = np.lexsort((origins, dests))
            origins, dests, weights, taus = origins[order], dests[order], weights[order], taus[order]
            keys = dests * n + origins
            if np.any(keys[1:] == keys[:-1]):
                raise DomainError("duplicate (origin, dest) edge in snapshot")
        object.__setattr__(self, "node_count", n)
        object.__setattr__(self, "origins", _readonly(origins))
        object.__setattr__(self, "dests", _readonly(dests))
        object.__setattr__(self, "weights", _readonly(weights))
        object.__setattr__(self, "travel_times", _readonly(taus))

    @classmethod
    def from_edges(cls, node_count: int, edges: Iterable[Tuple[int, int, float]],
                   context: TimeContext, timestamp: datetime,
                   travel_times: Optional[Sequence[float]] = None) -> "ODSnapshot":
        edge_list = list(edges)
        origins = [e[0] for e in edge_list]
        dests = [e[1] for e in edge_list]
        weights = [e[2] for e in edge_list]
        return cls(node_count, np.array(origins, dtype=np.int64), np.array(dests, dtype=np.int64),
                   np.array(weights, dtype=np.float64), context, timestamp,
                   None if travel_times is None else np.array(travel_times, dtype=np.float64))

    @property
    def edge_count(self) -> int:
        return int(len(self.weights))

    @property
    def edges(self) -> List[Tuple[int, int, float]]:
        return [(int(o), int(d), float(w)) for o, d, w in zip(self.origins, self.dests, self.weights)]

    def with_context(self, context: TimeContext) -> "ODSnapshot":
        return replace(self, context=context)

    def subset(self, keep: np.ndarray) -> "ODSnapshot":
        """Snapshot restricted to the edges where ``keep`` is true."""
        keep = np.asarray(keep, dtype=bool)
        return replace(self, origins=self.origins[keep], dests=self.dests[keep],
                       weights=self.weights[keep], travel_times=self.travel_times[keep])


@dataclass(frozen=True)
class Dataset:
    """Canonical zone order plus a strictly time-ordered sequence of snapshots."""
    zones: Tuple[ZoneFeatures, ...]
    snapshots: Tuple[ODSnapshot, ...]
    scaler: Optional[WeightScaler] = None

    def __post_init__(self):
        zones = tuple(self.zones)
        snapshots = tuple(self.snapshots)
        ids = [z.zone_id for z in zones]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate zone identifiers in dataset")
        for s in snapshots:
            if s.node_count != len(zones):
                raise DataError(
                    f"snapshot at {s.timestamp} has {s.node_count} nodes, dataset has {len(zones)} zones"
                )
        for a, b in zip(snapshots, snapshots[1:]):
            if not a.timestamp < b.timestamp:
                raise DataError(f"snapshot timestamps not strictly increasing at {b.timestamp}")
        object.__setattr__(self, "zones", zones)
        object.__setattr__(self, "snapshots", snapshots)

    @property
    def node_count(self) -> int:
        return len(self.zones)

    def zone_ids(self) -> List[str]:
        return [z.zone_id for z in self.zones]

    def node_features(self) -> np.ndarray:
        """N x 4 matrix of scaled bounding boxes in canonical order."""
        return np.array([z.scaled_bbox for z in self.zones], dtype=np.float64).reshape(-1, FEATURE_DIM)

    def with_snapshots(self, snapshots: Sequence[ODSnapshot]) -> "Dataset":
        return Dataset(self.zones, tuple(snapshots), self.scaler)

    def edge_count_stats(self) -> Dict[str, float]:
        counts = np.array([s.edge_count for s in self.snapshots], dtype=np.float64)
        if counts.size == 0:
            return {"min": 0.0, "mean": 0.0, "max": 0.0}
        return {"min": float(counts.min()), "mean": float(counts.mean()), "max": float(counts.max())}

    def missing_rate(self) -> float:
        """Share of possible directed pairs without an observation, over all snapshots."""
        n = self.node_count
        possible = n * (n - 1) * len(self.snapshots)
        if possible == 0:
            return 0.0
        observed = sum(s.edge_count for s in self.snapshots)
        return 1.0 - observed / possible

    def summary(self) -> Dict[str, Any]:
        stats = self.edge_count_stats()
        return {
            "zones": self.node_count,
            "snapshots": len(self.snapshots),
            "avg_edges_per_graph": stats["mean"],
            "min_edges_per_graph": stats["min"],
            "max_edges_per_graph": stats["max"],
            "missing_rate": self.missing_rate(),
        }


# -- ingestion --------------------------------------------------------------

@dataclass(frozen=True)
class RecordSchema:
    """Maps logical record fields to column names.

    Either ``timestamp`` or both ``date`` and ``hour`` must be set.
    """
    origin: str = "origin"
    destination: str = "destination"
    travel_time: str = "travel_time"
    timestamp: Optional[str] = "timestamp"
    date: Optional[str] = None
    hour: Optional[str] = None

    def __post_init__(self):
        if not self.timestamp and not (self.date and self.hour):
            raise ConfigError("record schema needs a timestamp column or date + hour columns")

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Optional[str]]) -> "RecordSchema":
        """Build from a loose mapping; unset keys keep their defaults.

        Naming a date or hour column without a timestamp column selects the
        date + hour form.
        """
        known = {k: v for k, v in mapping.items() if k in cls.__dataclass_fields__ and v is not None}
        if (known.get("date") or known.get("hour")) and "timestamp" not in known:
            known["timestamp"] = None
        return cls(**known)

    def columns(self) -> List[str]:
        cols = [self.origin, self.destination, self.travel_time]
        if self.timestamp:
            cols.append(self.timestamp)
        else:
            cols.extend([self.date, self.hour])  # type: ignore[list-item]
        return cols


UBER_SCHEMA = RecordSchema(origin="sourceid", destination="dstid", travel_time="mean_travel_time",
                           timestamp=None, date="date", hour="hod")


def parse_timestamp(text: str) -> datetime:
    """Parse ``YYYY-MM-DDTHH`` (optionally with minutes) and floor it to the hour."""
    text = text.strip()
    if "T" in text:
        day, _, clock = text.partition("T")
        if len(clock) == 2:
            text = f"{day}T{clock}:00"
    elif " " in text:
        day, _, clock = text.partition(" ")
        if len(clock) == 2:
            text = f"{day} {clock}:00"
    stamp = datetime.fromisoformat(text)
    if stamp.tzinfo is not None:
        stamp = stamp.replace(tzinfo=None)
    return stamp.replace(minute=0, second=0, microsecond=0)


def _row_timestamp(row: Dict[str, str], schema: RecordSchema) -> datetime:
    if schema.timestamp:
        return parse_timestamp(row[schema.timestamp])
    day = date.fromisoformat(row[schema.date].strip())  # type: ignore[index]
    hour = int(float(row[schema.hour]))  # type: ignore[index]
    if not 0 <= hour < HOURS_PER_DAY:
        raise ValueError(f"hour out of range: {hour}")
    return datetime(day.year, day.month, day.day, hour)


def _decoded_rows(reader: csv.DictReader, source: str) -> Iterator[Dict[str, str]]:
    """Rows of ``reader``; a stream that cannot be decoded ends in a RecordError."""
    while True:
        try:
            row = next(reader)
        except StopIteration:
            return
        except UnicodeDecodeError as e:
            raise RecordError(reader.line_num + 1, f"undecodable text ({e.encoding}: {e.reason})", source) from e
        yield row


def parse_od_records(record_stream: TextIO, schema: RecordSchema = RecordSchema(),
                     delimiter: str = ",", lenient: bool = False,
                     errors: Optional[List[RecordError]] = None,
                     source: str = "<stream>") -> List[ODRecord]:
    """Parse delimited OD travel-time rows.

    Args:
        record_stream: Text stream with a header row.
        schema: Column mapping for the logical fields.
        delimiter: Field delimiter.
        lenient: Collect bad rows into ``errors`` instead of raising.
        errors: Receives RecordErrors in lenient mode.
        source: Name used in error messages.

    Returns:
        Records in stream order.

    Raises:
        SchemaError: A mapped column is missing.
        RecordError: A row is invalid and ``lenient`` is false.
            Undecodable input raises even when ``lenient`` is set.
    """
    reader = csv.DictReader(record_stream, delimiter=delimiter)
    try:
        header = reader.fieldnames or []
    except UnicodeDecodeError as e:
        raise RecordError(1, f"undecodable header ({e.encoding}: {e.reason})", source) from e
    for column in schema.columns():
        if column not in header:
            raise SchemaError(column, source)

    records: List[ODRecord] = []
    bad = 0
    for row in _decoded_rows(reader, source):
        line = reader.line_num
        try:
            origin = (row[schema.origin] or "").strip()
            dest = (row[schema.destination] or "").strip()
            raw_tau = (row[schema.travel_time] or "").strip()
            try:
                tau = float(raw_tau)
            except ValueError:
                raise RecordError(line, f"travel time '{raw_tau}' is not numeric", source)
            if not (math.isfinite(tau) and tau > 0):
                raise RecordError(line, f"travel time must be positive, got '{raw_tau}'", source)
            if not origin or not dest:
                raise RecordError(line, "empty zone identifier", source)
            try:
                stamp = _row_timestamp(row, schema)
            except (ValueError, TypeError, AttributeError) as e:
                raise RecordError(line, f"bad timestamp: {e}", source)
            records.append(ODRecord(origin, dest, stamp, tau))
        except RecordError as e:
            if not lenient:
                raise
            bad += 1
            if errors is not None:
                errors.append(e)
            logger.debug("Skipping row: %s", e)
    if bad:
        logger.warning("%s: skipped %d invalid row(s)", source, bad)
    logger.info("Parsed %d OD records from %s", len(records), source)
    return records


def load_zone_features(stream: TextIO, delimiter: str = ",",
                       source: str = "<stream>") -> Dict[str, ZoneFeatures]:
    """Read zone bounding boxes keyed by zone id (unscaled)."""
    reader = csv.DictReader(stream, delimiter=delimiter)
    header = reader.fieldnames or []
    for column in ZONE_FEATURE_COLUMNS:
        if column not in header:
            raise SchemaError(column, source)
    zones: Dict[str, ZoneFeatures] = {}
    for row in reader:
        line = reader.line_num
        zone_id = (row["zone_id"] or "").strip()
        try:
            bbox = tuple(float(row[c]) for c in ZONE_FEATURE_COLUMNS[1:])
            zones[zone_id] = ZoneFeatures(zone_id, bbox)  # type: ignore[arg-type]
        except (ValueError, TypeError, DomainError) as e:
            raise RecordError(line, f"bad zone row: {e}", source)
    return zones


def scale_zone_features(features: Mapping[str, ZoneFeatures],
                        selected: Sequence[str]) -> List[ZoneFeatures]:
    """Min-max scale bounding boxes over the selected zones, in ``selected`` order."""
    boxes = [features[z].bbox for z in selected if z in features and features[z].bbox is not None]
    missing = [z for z in selected if z not in features or features[z].bbox is None]
    if missing:
        logger.warning("%d selected zone(s) have no bounding box; using zero features: %s",
                       len(missing), ", ".join(missing[:10]))
    if boxes:
        arr = np.array(boxes, dtype=np.float64)
        lo = arr.min(axis=0)
        span = arr.max(axis=0) - lo
    scaled: List[ZoneFeatures] = []
    for z in selected:
        feat = features.get(z)
        if feat is None or feat.bbox is None:
            scaled.append(ZoneFeatures(z))
            continue
        box = np.array(feat.bbox, dtype=np.float64)
        values = np.where(span > 0, (box - lo) / np.where(span > 0, span, 1.0), 0.0)
        scaled.append(ZoneFeatures(z, feat.bbox, tuple(float(v) for v in values)))  # type: ignore[arg-type]
    return scaled


# -- zone selection ---------------------------------------------------------

def select_top_zones(records: Sequence[ODRecord], k: int,
                     min_counterparts: Optional[int] = None) -> List[str]:
    """The k best-connected zones, returned in lexicographic (canonical) order.

    Connectivity is the number of distinct counterpart zones (reached as
    origin or reaching as destination), ties broken by record count
    descending and then by zone id.
    """
    if k < 1:
        raise ConfigError(f"zone count must be at least 1, got {k}")
    counterparts: Dict[str, set] = {}
    record_counts: Dict[str, int] = {}
    for r in records:
        for zone in (r.origin_zone, r.dest_zone):
            record_counts[zone] = record_counts.get(zone, 0) + 1
            counterparts.setdefault(zone, set())
        if r.origin_zone != r.dest_zone:
            counterparts[r.origin_zone].add(r.dest_zone)
            counterparts[r.dest_zone].add(r.origin_zone)

    candidates = list(counterparts)
    if min_counterparts is not None:
        candidates = [z for z in candidates if len(counterparts[z]) >= min_counterparts]
    if len(candidates) < k:
        raise ZoneSelectionError(k, len(candidates))

    ranked = sorted(candidates, key=lambda z: (-len(counterparts[z]), -record_counts[z], z))
    chosen = sorted(ranked[:k])
    logger.info("Selected %d of %d zones", k, len(counterparts))
    return chosen


# -- weights ----------------------------------------------------------------

def fit_weight_scaler(train_records: Sequence[Union[ODRecord, float]]) -> WeightScaler:
    """Fit 1st/99th percentile anchors of inverse travel time."""
    taus = np.array([r.travel_time if isinstance(r, ODRecord) else float(r) for r in train_records],
                    dtype=np.float64)
    if taus.size < 2 or np.unique(taus).size < 2:
        raise DegenerateScalerError("scaler needs at least two distinct travel times")
    inv = 1.0 / taus
    inv_min, inv_max = np.percentile(inv, [1.0, 99.0])
    if not inv_min < inv_max:
        raise DegenerateScalerError(
            "1st and 99th percentiles of inverse travel time coincide; travel times are too concentrated"
        )
    scaler = WeightScaler(float(inv_min), float(inv_max))
    logger.info("Fitted weight scaler: %.1fs (w=0) .. %.1fs (w=1)", 1.0 / scaler.inv_min, 1.0 / scaler.inv_max)
    return scaler


def scale_weights(scaler: WeightScaler, travel_times: np.ndarray) -> np.ndarray:
    taus = np.asarray(travel_times, dtype=np.float64)
    if not np.all(np.isfinite(taus) & (taus > 0)):
        raise DomainError("travel times must be positive and finite")
    return np.clip((1.0 / taus - scaler.inv_min) / scaler.span, 0.0, 1.0)


def scale_weight(scaler: WeightScaler, travel_time: float) -> float:
    """Map seconds to a weight in [0, 1], decreasing in travel time."""
    if not (math.isfinite(travel_time) and travel_time > 0):
        raise DomainError(f"travel time must be positive, got {travel_time}")
    w = (1.0 / travel_time - scaler.inv_min) / scaler.span
    return min(1.0, max(0.0, w))


def unscale_weight(scaler: WeightScaler, weight: float) -> float:
    """Inverse of the unclamped affine map."""
    if not 0.0 <= weight <= 1.0:
        raise DomainError(f"weight must lie in [0, 1], got {weight}")
    return 1.0 / (scaler.inv_min + weight * scaler.span)


# -- snapshots --------------------------------------------------------------

def time_context(timestamp: datetime) -> TimeContext:
    return TimeContext(timestamp.hour, timestamp.weekday())


def records_frame(records: Sequence[ODRecord]) -> pd.DataFrame:
    return pd.DataFrame({
        "timestamp": [r.timestamp for r in records],
        "origin": [r.origin_zone for r in records],
        "dest": [r.dest_zone for r in records],
        "travel_time": np.array([r.travel_time for r in records], dtype=np.float64),
    })


def _as_zone_features(zones: Sequence[Union[ZoneFeatures, str]]) -> Tuple[ZoneFeatures, ...]:
    return tuple(z if isinstance(z, ZoneFeatures) else ZoneFeatures(str(z)) for z in zones)


def average_hourly(records: Sequence[ODRecord], zone_ids: Sequence[str]) -> pd.DataFrame:
    """Mean travel time per (timestamp, origin index, dest index) inside the zone set.

    Records are sorted on every column before grouping so the result does
    not depend on input order.
    """
    index = {z: i for i, z in enumerate(zone_ids)}
    frame = records_frame(records)
    if frame.empty:
        return pd.DataFrame(columns=["timestamp", "o", "d", "travel_time"])
    frame = frame[frame["origin"].isin(index) & frame["dest"].isin(index)
                  & (frame["origin"] != frame["dest"])]
    if frame.empty:
        return pd.DataFrame(columns=["timestamp", "o", "d", "travel_time"])
    frame = frame.assign(o=frame["origin"].map(index).astype(np.int64),
                         d=frame["dest"].map(index).astype(np.int64))
    frame = frame.sort_values(["timestamp", "o", "d", "travel_time"], kind="mergesort")
    grouped = frame.groupby(["timestamp", "o", "d"], sort=True)["travel_time"].mean()
    return grouped.reset_index()


def build_snapshots(records: Sequence[ODRecord], zones: Sequence[Union[ZoneFeatures, str]],
                    scaler: WeightScaler) -> Dataset:
    """Group records into one snapshot per hour that has data inside the zone set."""
    zone_feats = _as_zone_features(zones)
    if not zone_feats:
        raise ConfigError("zone list is empty")
    n = len(zone_feats)
    hourly = average_hourly(records, [z.zone_id for z in zone_feats])
    snapshots: List[ODSnapshot] = []
    for stamp, group in hourly.groupby("timestamp", sort=True):
        stamp = pd.Timestamp(stamp).to_pydatetime()
        taus = group["travel_time"].to_numpy(dtype=np.float64)
        snapshots.append(ODSnapshot(
            n,
            group["o"].to_numpy(dtype=np.int64),
            group["d"].to_numpy(dtype=np.int64),
            scale_weights(scaler, taus),
            time_context(stamp),
            stamp,
            taus,
        ))
    dataset = Dataset(zone_feats, tuple(snapshots), scaler)
    logger.info("Built %d snapshots over %d zones (avg %.1f edges per graph)",
                len(snapshots), n, dataset.edge_count_stats()["mean"])
    return dataset


def split_records_by_time(records: Sequence[ODRecord],
                          cutoff: datetime) -> Tuple[List[ODRecord], List[ODRecord]]:
    """(records before ``cutoff``, records at or after it)."""
    before = [r for r in records if r.timestamp < cutoff]
    after = [r for r in records if r.timestamp >= cutoff]
    return before, after


def build_dataset(records: Sequence[ODRecord], k: int,
                  zone_features: Optional[Mapping[str, ZoneFeatures]] = None,
                  min_counterparts: Optional[int] = None) -> Dataset:
    """Zone selection, feature scaling, scaler fit and hourly grouping in one pass."""
    selected = select_top_zones(records, k, min_counterparts)
    if zone_features is not None:
        zones = scale_zone_features(zone_features, selected)
    else:
        zones = [ZoneFeatures(z) for z in selected]
    inside = set(selected)
    scaler = fit_weight_scaler([r for r in records if r.origin_zone in inside
                                and r.dest_zone in inside and r.origin_zone != r.dest_zone])
    return build_snapshots(records, zones, scaler)
