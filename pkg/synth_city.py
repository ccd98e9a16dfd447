"""
Synthetic city with two traffic regimes.

Zones sit on a square grid around a downtown core. Free-flow travel time
grows with grid distance; on weekdays the morning rush slows trips into the
core and the evening rush slows trips out of it. Every observation gets
multiplicative Gaussian noise and is dropped independently with the
configured missing rate.
"""
import csv
import io
import logging
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from dataset_io import atomic_write_text
from errors import ConfigError
from nn_core import RngStream
from od_graph import DAYS_PER_WEEK, HOURS_PER_DAY, ODRecord, ZoneFeatures

logger = logging.getLogger("odgae.synth_city")

MORNING_RUSH = (7, 8, 9)
EVENING_RUSH = (16, 17, 18)
DEFAULT_START = datetime(2019, 1, 7)  # a Monday

# Grid geometry (degrees) anchored near Nashville
_ORIGIN_LAT = 36.10
_ORIGIN_LON = -86.85
_CELL_DEG = 0.02


@dataclass(frozen=True)
class CityProfile:
    """Travel-time model constants (seconds)."""
    base_seconds: float = 240.0
    seconds_per_cell: float = 150.0
    rush_slowdown: float = 0.6
    offpeak_night_speedup: float = 0.15
    min_travel_time: float = 30.0


def _grid(n_zones: int) -> Tuple[np.ndarray, np.ndarray, int]:
    side = int(math.ceil(math.sqrt(n_zones)))
    idx = np.arange(n_zones)
    return idx // side, idx % side, side


def zone_ids(n_zones: int) -> List[str]:
    width = max(2, len(str(n_zones - 1)))
    return [f"z{i:0{width}d}" for i in range(n_zones)]


def city_zones(n_zones: int) -> List[ZoneFeatures]:
    rows, cols, _ = _grid(n_zones)
    zones = []
    for zid, r, c in zip(zone_ids(n_zones), rows, cols):
        min_lat = _ORIGIN_LAT + r * _CELL_DEG
        min_lon = _ORIGIN_LON + c * _CELL_DEG
        zones.append(ZoneFeatures(zid, (min_lat, min_lon, min_lat + _CELL_DEG, min_lon + _CELL_DEG)))
    return zones


def mean_travel_times(n_zones: int, profile: CityProfile = CityProfile()) -> np.ndarray:
    """Noise-free travel time per (dow, hour, origin, dest); the diagonal is NaN."""
    rows, cols, side = _grid(n_zones)
    dist = np.abs(rows[:, None] - rows[None, :]) + np.abs(cols[:, None] - cols[None, :])
    free_flow = profile.base_seconds + profile.seconds_per_cell * dist.astype(np.float64)

    center = (side - 1) / 2.0
    radius = np.abs(rows - center) + np.abs(cols - center)
    core = 1.0 - radius / max(radius.max(), 1.0)  # 1 downtown, 0 at the edge
    inbound = np.clip(core[None, :] - core[:, None], 0.0, None) + 0.5 * core[None, :]
    outbound = np.clip(core[:, None] - core[None, :], 0.0, None) + 0.5 * core[:, None]

    out = np.empty((DAYS_PER_WEEK, HOURS_PER_DAY, n_zones, n_zones), dtype=np.float64)
    for dow in range(DAYS_PER_WEEK):
        weekday = dow < 5
        for hour in range(HOURS_PER_DAY):
            factor = np.ones((n_zones, n_zones))
            if weekday and hour in MORNING_RUSH:
                factor = factor + profile.rush_slowdown * inbound
            elif weekday and hour in EVENING_RUSH:
                factor = factor + profile.rush_slowdown * outbound
            elif hour < 6 or hour >= 22:
                factor = factor * (1.0 - profile.offpeak_night_speedup)
            out[dow, hour] = np.maximum(free_flow * factor, profile.min_travel_time)
    idx = np.arange(n_zones)
    out[:, :, idx, idx] = np.nan
    return out


def generate_city(n_zones: int = 20, weeks: int = 8, start: datetime = DEFAULT_START,
                  seed: int = 0, missing_rate: float = 0.3, noise: float = 0.05,
                  profile: CityProfile = CityProfile()) -> Tuple[List[ODRecord], List[ZoneFeatures]]:
    """Hourly OD travel-time records and zone bounding boxes.

    Args:
        n_zones: Number of zones (at least 2).
        weeks: Length of the period in weeks.
        start: First hour; floored to the hour.
        seed: Seed of the noise and missingness draws.
        missing_rate: Probability that an (OD pair, hour) observation is absent.
        noise: Relative standard deviation of the per-observation Gaussian noise.
    """
    if n_zones < 2:
        raise ConfigError("a city needs at least 2 zones")
    if weeks < 1:
        raise ConfigError("weeks must be >= 1")
    if not 0.0 <= missing_rate < 1.0:
        raise ConfigError(f"missing_rate must lie in [0, 1), got {missing_rate}")
    if noise < 0.0:
        raise ConfigError(f"noise must be >= 0, got {noise}")

    start = start.replace(minute=0, second=0, microsecond=0)
    ids = zone_ids(n_zones)
    means = mean_travel_times(n_zones, profile)
    origins, dests = np.nonzero(~np.eye(n_zones, dtype=bool))
    rng = RngStream(seed)
    records: List[ODRecord] = []
    for step in range(weeks * DAYS_PER_WEEK * HOURS_PER_DAY):
        stamp = start + timedelta(hours=step)
        draw = rng.derive(step)
        mu = means[stamp.weekday(), stamp.hour, origins, dests]
        taus = mu * (1.0 + noise * draw.normal(0.0, 1.0, len(mu)))
        taus = np.maximum(taus, profile.min_travel_time)
        present = draw.random(len(mu)) >= missing_rate
        records.extend(ODRecord(ids[o], ids[d], stamp, float(t))
                       for o, d, t in zip(origins[present], dests[present], taus[present]))
    logger.info("Generated %d records for %d zones over %d weeks", len(records), n_zones, weeks)
    return records, city_zones(n_zones)


def records_csv_text(records: Sequence[ODRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["origin", "destination", "timestamp", "travel_time"])
    for r in records:
        writer.writerow([r.origin_zone, r.dest_zone, r.timestamp.strftime("%Y-%m-%dT%H"), repr(r.travel_time)])
    return buf.getvalue()


def zones_csv_text(zones: Sequence[ZoneFeatures]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["zone_id", "min_lat", "min_lon", "max_lat", "max_lon"])
    for z in zones:
        writer.writerow([z.zone_id] + [repr(float(v)) for v in (z.bbox or (0.0, 0.0, 0.0, 0.0))])
    return buf.getvalue()


def write_city(records: Sequence[ODRecord], zones: Sequence[ZoneFeatures],
               records_path: Union[str, Path], zones_path: Union[str, Path]) -> None:
    atomic_write_text(records_path, records_csv_text(records))
    atomic_write_text(zones_path, zones_csv_text(zones))
    logger.info("Wrote %d records to %s and %d zones to %s", len(records), records_path,
                len(zones), zones_path)
