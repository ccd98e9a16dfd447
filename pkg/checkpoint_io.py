"""
Checkpoint container encoding.

A checkpoint is a UTF-8 JSON document: a versioned header, a body holding
named float64 arrays as base64 little-endian row-major payloads, and a
SHA-256 digest over the canonical body text. Encoding is deterministic,
so save -> load -> save reproduces the same bytes.
"""
import base64
import hashlib
import json
import logging
from typing import Any, Dict, Mapping

import numpy as np

from errors import ContainerError

logger = logging.getLogger("odgae.checkpoint_io")

CHECKPOINT_FORMAT = "odgae-checkpoint"
CHECKPOINT_VERSION = 1

_LE_FLOAT64 = np.dtype("<f8")


def _canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True, allow_nan=False)


def encode_array(arr: np.ndarray) -> Dict[str, Any]:
    """Shape plus base64 of the little-endian float64 row-major bytes."""
    data = np.ascontiguousarray(arr, dtype=_LE_FLOAT64)
    return {
        "shape": [int(s) for s in data.shape],
        "data": base64.b64encode(data.tobytes(order="C")).decode("ascii"),
    }


def decode_array(payload: Mapping[str, Any], name: str = "<array>") -> np.ndarray:
    try:
        shape = tuple(int(s) for s in payload["shape"])
        raw = base64.b64decode(payload["data"], validate=True)
    except (KeyError, TypeError, ValueError) as e:
        raise ContainerError(f"malformed array payload ({e})", parameter=name)
    expected = int(np.prod(shape)) * _LE_FLOAT64.itemsize
    if len(raw) != expected:
        raise ContainerError(f"payload has {len(raw)} bytes, shape {shape} needs {expected}",
                             parameter=name)
    arr = np.frombuffer(raw, dtype=_LE_FLOAT64).astype(np.float64).reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise ContainerError("non-finite values in payload", parameter=name)
    return arr


def encode_arrays(arrays: Mapping[str, np.ndarray]) -> Dict[str, Dict[str, Any]]:
    return {name: encode_array(arr) for name, arr in arrays.items()}


def decode_arrays(payload: Mapping[str, Any]) -> Dict[str, np.ndarray]:
    return {name: decode_array(value, name) for name, value in payload.items()}


def body_digest(body: Mapping[str, Any]) -> str:
    return hashlib.sha256(_canonical(body).encode("utf-8")).hexdigest()


def dumps_checkpoint(body: Mapping[str, Any]) -> str:
    """Wrap ``body`` with the header and digest and serialize it."""
    document = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "sha256": body_digest(body),
        "body": body,
    }
    return _canonical(document) + "\n"


def loads_checkpoint(text: str, source: str = "<checkpoint>") -> Dict[str, Any]:
    """Parse and verify a checkpoint document, returning its body.

    Raises:
        ContainerError: Unknown format, version mismatch, or digest mismatch.
    """
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ContainerError(f"{source}: checkpoint is not valid JSON ({e})")
    if not isinstance(document, dict) or document.get("format") != CHECKPOINT_FORMAT:
        raise ContainerError(f"{source}: not a checkpoint container")
    if document.get("version") != CHECKPOINT_VERSION:
        raise ContainerError(
            f"{source}: checkpoint version {document.get('version')} is not supported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    body = document.get("body")
    if not isinstance(body, dict):
        raise ContainerError(f"{source}: checkpoint has no body")
    if body_digest(body) != document.get("sha256"):
        raise ContainerError(f"{source}: checkpoint digest mismatch, payload is corrupt")
    return body
