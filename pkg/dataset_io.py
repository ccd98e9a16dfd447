"""
Dataset storage for odgae.

The canonical container is UTF-8 JSON-lines: a header line, the weight
scaler, one line per zone and one line per snapshot. JSON float repr is
the shortest exact float64 representation and keys are sorted, so
write -> read -> write reproduces the same bytes.
"""
import hashlib
import json
import logging
import os
import tempfile
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from errors import ContainerError, DataError, DomainError
from od_graph import Dataset, ODSnapshot, TimeContext, WeightScaler, ZoneFeatures

logger = logging.getLogger("odgae.dataset_io")

DATASET_FORMAT = "odgae-dataset"
DATASET_VERSION = 1

PathLike = Union[str, Path]


def _dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def atomic_write_text(path: PathLike, text: str) -> None:
    """Write ``text`` to a temp file beside ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=str(path.parent))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    logger.debug("Wrote %s", path)


def file_digest(path: PathLike) -> str:
    """SHA-256 hex digest of a file's bytes."""
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# -- encoding ---------------------------------------------------------------

def _zone_record(zone: ZoneFeatures) -> Dict[str, Any]:
    return {
        "zone_id": zone.zone_id,
        "bbox": None if zone.bbox is None else [float(v) for v in zone.bbox],
        "scaled_bbox": [float(v) for v in zone.scaled_bbox],
    }


def _snapshot_record(snapshot: ODSnapshot, label: Optional[int]) -> Dict[str, Any]:
    edges = []
    for o, d, w, tau in zip(snapshot.origins, snapshot.dests, snapshot.weights, snapshot.travel_times):
        edges.append([int(o), int(d), float(w), None if np.isnan(tau) else float(tau)])
    record: Dict[str, Any] = {
        "timestamp": snapshot.timestamp.isoformat(),
        "hour": snapshot.context.hour,
        "dow": snapshot.context.dow,
        "edges": edges,
    }
    if label is not None:
        record["label"] = int(label)
    return record


def dumps_dataset(dataset: Dataset, labels: Optional[Sequence[int]] = None,
                  meta: Optional[Dict[str, Any]] = None) -> str:
    """Serialize a dataset (and optional per-snapshot labels) to container text.

    ``meta`` is a flat mapping stored in the header, e.g. the injection
    settings of a labeled set.
    """
    if labels is not None and len(labels) != len(dataset.snapshots):
        raise DataError("label count does not match snapshot count")
    header = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "kind": "labeled" if labels is not None else "dataset",
        "zones": dataset.node_count,
        "snapshots": len(dataset.snapshots),
    }
    if meta:
        header["meta"] = dict(meta)
    scaler = None if dataset.scaler is None else {
        "inv_min": float(dataset.scaler.inv_min), "inv_max": float(dataset.scaler.inv_max)}
    lines = [_dumps(header), _dumps({"scaler": scaler})]
    lines.extend(_dumps(_zone_record(z)) for z in dataset.zones)
    for i, snap in enumerate(dataset.snapshots):
        lines.append(_dumps(_snapshot_record(snap, None if labels is None else labels[i])))
    return "\n".join(lines) + "\n"


def loads_dataset(text: str, source: str = "<container>") -> Tuple[Dataset, Optional[List[int]]]:
    """Parse container text back into a dataset and its labels (None when unlabeled)."""
    lines = text.splitlines()
    try:
        header = json.loads(lines[0])
    except (IndexError, json.JSONDecodeError) as e:
        raise ContainerError(f"{source}: unreadable header ({e})")
    if header.get("format") != DATASET_FORMAT:
        raise ContainerError(f"{source}: not a dataset container")
    if header.get("version") != DATASET_VERSION:
        raise ContainerError(f"{source}: unsupported container version {header.get('version')}")
    n_zones = int(header["zones"])
    n_snaps = int(header["snapshots"])
    labeled = header.get("kind") == "labeled"
    if len(lines) != 2 + n_zones + n_snaps:
        raise ContainerError(f"{source}: expected {2 + n_zones + n_snaps} lines, found {len(lines)}")

    try:
        raw_scaler = json.loads(lines[1])["scaler"]
        scaler = None if raw_scaler is None else WeightScaler(raw_scaler["inv_min"], raw_scaler["inv_max"])
        zones = []
        for line in lines[2:2 + n_zones]:
            z = json.loads(line)
            bbox = None if z["bbox"] is None else tuple(z["bbox"])
            zones.append(ZoneFeatures(z["zone_id"], bbox, tuple(z["scaled_bbox"])))
        snapshots = []
        labels: List[int] = []
        for line in lines[2 + n_zones:]:
            s = json.loads(line)
            edges = s["edges"]
            taus = [np.nan if e[3] is None else e[3] for e in edges]
            snapshots.append(ODSnapshot(
                n_zones,
                np.array([e[0] for e in edges], dtype=np.int64),
                np.array([e[1] for e in edges], dtype=np.int64),
                np.array([e[2] for e in edges], dtype=np.float64),
                TimeContext(s["hour"], s["dow"]),
                datetime.fromisoformat(s["timestamp"]),
                np.array(taus, dtype=np.float64),
            ))
            if labeled:
                labels.append(int(s["label"]))
        dataset = Dataset(tuple(zones), tuple(snapshots), scaler)
    except (KeyError, TypeError, ValueError, json.JSONDecodeError, DomainError) as e:
        raise ContainerError(f"{source}: corrupt container ({e})")
    return dataset, (labels if labeled else None)


def write_dataset(path: PathLike, dataset: Dataset, labels: Optional[Sequence[int]] = None,
                  meta: Optional[Dict[str, Any]] = None) -> None:
    atomic_write_text(path, dumps_dataset(dataset, labels, meta))
    logger.info("Saved %s with %d snapshots to %s",
                "labeled dataset" if labels is not None else "dataset", len(dataset.snapshots), path)


def read_dataset(path: PathLike) -> Tuple[Dataset, Optional[List[int]]]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            text = f.read()
    except OSError as e:
        raise DataError(f"cannot read dataset container {path}: {e}")
    return loads_dataset(text, source=str(path))


def read_dataset_meta(path: PathLike) -> Dict[str, Any]:
    """Header metadata of a container (empty when none was stored)."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            header = json.loads(f.readline())
    except (OSError, json.JSONDecodeError) as e:
        raise ContainerError(f"{path}: unreadable header ({e})")
    if not isinstance(header, dict) or header.get("format") != DATASET_FORMAT:
        raise ContainerError(f"{path}: not a dataset container")
    return dict(header.get("meta") or {})


# -- tables -----------------------------------------------------------------

def frame_to_csv_text(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, lineterminator="\n")


def write_frame(path: PathLike, frame: pd.DataFrame) -> None:
    """Write a DataFrame as UTF-8 CSV with a header row, atomically."""
    atomic_write_text(path, frame_to_csv_text(frame))
    logger.info("Wrote %d row(s) to %s", len(frame), path)


def score_series_frame(dataset: Dataset, scores: Sequence[float],
                       labels: Optional[Sequence[int]] = None) -> pd.DataFrame:
    """(timestamp, score[, label]) rows in snapshot order."""
    data: Dict[str, Any] = {
        "timestamp": [s.timestamp.isoformat() for s in dataset.snapshots],
        "score": [float(v) for v in scores],
    }
    if labels is not None:
        data["label"] = [int(v) for v in labels]
    return pd.DataFrame(data)
