"""
ReachDiff Storage Module

Binary artifact container, integrity hashing and atomic file writes.

Container layout (all integers little-endian):

    magic (4 bytes) | version (uint16) | reserved (uint16) |
    header length (uint64) | header (canonical JSON) | payload (float64 LE)

The header records the SHA-256 digest of the payload, checked on read.
"""

import csv
import hashlib
import io
import os
import struct
import tempfile
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import orjson
import structlog

from src.core.exceptions import ArtifactFormatError

logger = structlog.get_logger(__name__)

FORMAT_VERSION = 1

MAGIC: dict[str, bytes] = {
    "dataset": b"RDDS",
    "trajectories": b"RDTR",
    "checkpoint": b"RDCK",
    "policy": b"RDCP",
}

_PREFIX = struct.Struct("<4sHHQ")
_FLOAT = np.dtype("<f8")

JSON_OPTIONS = orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_INDENT_2


class HashingService:
    """Content digests used for artifact integrity checks."""

    @staticmethod
    def sha256(data: bytes) -> str:
        """Generate SHA-256 hex digest of raw bytes."""
        return hashlib.sha256(data).hexdigest()

    @staticmethod
    def verify_integrity(data: bytes, expected_hash: str) -> bool:
        """Verify data integrity against expected hash."""
        return HashingService.sha256(data) == expected_hash


def atomic_write_bytes(path: Path, data: bytes) -> Path:
    """
    Write bytes to path atomically (temp file in the same directory + rename).

    Args:
        path: Destination file
        data: File contents

    Returns:
        The destination path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.debug("Artifact written", path=str(path), size=len(data))
    return path


def dumps_json(obj: Any) -> bytes:
    """Canonical JSON encoding (sorted keys, numpy aware)."""
    return orjson.dumps(obj, option=JSON_OPTIONS) + b"\n"


def write_json(path: Path, obj: Any) -> Path:
    """Atomically write a canonical JSON document."""
    return atomic_write_bytes(path, dumps_json(obj))


def write_jsonl(path: Path, records: Iterable[Any]) -> Path:
    """Atomically write one canonical JSON object per line."""
    lines = [
        orjson.dumps(r, option=orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY)
        for r in records
    ]
    return atomic_write_bytes(path, b"".join(line + b"\n" for line in lines))


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Atomically write a CSV file with a fixed column order."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_csv_cell(v) for v in row])
    return atomic_write_bytes(path, buf.getvalue().encode("utf-8"))


def _csv_cell(value: Any) -> Any:
    if isinstance(value, float | np.floating):
        return repr(float(value))
    return value


def encode_container(kind: str, header: dict[str, Any], payload: np.ndarray) -> bytes:
    """
    Encode a header and a float64 payload into container bytes.

    Args:
        kind: Artifact kind, one of MAGIC's keys
        header: JSON-serializable header
        payload: Any float array; flattened in C order

    Returns:
        Encoded container
    """
    if kind not in MAGIC:
        raise ArtifactFormatError(f"Unknown artifact kind {kind!r}; valid: {sorted(MAGIC)}")
    body = np.ascontiguousarray(payload, dtype=_FLOAT).reshape(-1).tobytes()
    full_header = {
        **header,
        "payload_count": len(body) // _FLOAT.itemsize,
        "payload_sha256": HashingService.sha256(body),
    }
    header_bytes = orjson.dumps(
        full_header, option=orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY
    )
    prefix = _PREFIX.pack(MAGIC[kind], FORMAT_VERSION, 0, len(header_bytes))
    return prefix + header_bytes + body


def decode_container(kind: str, data: bytes) -> tuple[dict[str, Any], np.ndarray]:
    """
    Decode container bytes and verify magic, version and payload digest.

    Returns:
        Tuple of (header, flat float64 payload)
    """
    if len(data) < _PREFIX.size:
        raise ArtifactFormatError("Artifact truncated before header")
    magic, version, _, header_len = _PREFIX.unpack_from(data)
    if magic != MAGIC[kind]:
        raise ArtifactFormatError(
            f"Not a {kind} artifact (magic {magic!r}, expected {MAGIC[kind]!r})"
        )
    if version != FORMAT_VERSION:
        raise ArtifactFormatError(f"Unsupported {kind} format version {version}")
    start = _PREFIX.size
    try:
        header = orjson.loads(data[start : start + header_len])
    except orjson.JSONDecodeError as e:
        raise ArtifactFormatError(f"Corrupt {kind} header: {e}")
    body = data[start + header_len :]
    if not HashingService.verify_integrity(body, header.get("payload_sha256", "")):
        raise ArtifactFormatError(f"{kind} payload digest mismatch")
    payload = np.frombuffer(body, dtype=_FLOAT).astype(np.float64)
    if payload.size != header.get("payload_count"):
        raise ArtifactFormatError(f"{kind} payload length mismatch")
    return header, payload


def write_container(
    path: Path, kind: str, header: dict[str, Any], payload: np.ndarray
) -> Path:
    """Atomically write a container artifact."""
    return atomic_write_bytes(path, encode_container(kind, header, payload))


def read_container(path: Path, kind: str) -> tuple[dict[str, Any], np.ndarray]:
    """Read and verify a container artifact."""
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise ArtifactFormatError(f"Could not read {kind} artifact {path}: {e}")
    return decode_container(kind, data)


def container_kind(path: Path) -> str:
    """Artifact kind of a container file, from its magic bytes."""
    try:
        with open(path, "rb") as fh:
            magic = fh.read(4)
    except OSError as e:
        raise ArtifactFormatError(f"Could not read artifact {path}: {e}")
    for kind, expected in MAGIC.items():
        if magic == expected:
            return kind
    raise ArtifactFormatError(f"{path} is not a ReachDiff artifact (magic {magic!r})")
