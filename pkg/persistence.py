"""
Persistence - every file the toolkit reads or writes
====================================================

Formats:
- datasets, fixtures, quarantine: one JSON object per line (sorted keys)
- vocabulary: one token per line, line number = id
- audio features: "AFTR" header + little-endian float32 rows
- checkpoints: "ILKM" header + JSON config block + named float64 tensor table
- reports: pretty JSON and plain text; training log: "step<TAB>loss" lines

Writers take an advisory lock file next to the target and replace the target
atomically. Binary readers reject unknown magic and versions they cannot read.
"""

import json
import os
import struct
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from errors import (
    CorruptFeature,
    IntegrityError,
    PersistenceError,
    SchemaError,
    SchemaVersionError,
)
from tokenizer import Vocabulary

FEATURE_MAGIC = b"AFTR"
FEATURE_VERSION = 1
_FEATURE_HEADER = struct.Struct("<4sIII")

CHECKPOINT_MAGIC = b"ILKM"
CHECKPOINT_VERSION = 1
_CHECKPOINT_HEADER = struct.Struct("<4sIQ")

# version -> function(config_block, tensors) upgrading one version; empty until a bump needs it
CHECKPOINT_MIGRATIONS = {}


@dataclass(frozen=True)
class RecordError:
    line_number: int
    message: str

    def __str__(self):
        return f"line {self.line_number}: {self.message}"


def _pid_alive(pid):
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


def lock_is_stale(lock_path):
    """True when the lock names a writer process that no longer exists

    A lock without a readable PID counts as held.
    """
    try:
        owner = Path(lock_path).read_text().strip()
    except OSError:
        return False
    if not owner.isdigit():
        return False
    return not _pid_alive(int(owner))


def _acquire_lock(path, lock_path):
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        return False
    except OSError as e:
        raise PersistenceError(path, f"Cannot create lock ({e.strerror})") from e
    with os.fdopen(fd, "w") as f:
        f.write(f"{os.getpid()}\n")
    return True


@contextmanager
def exclusive_write(path):
    """Advisory lock + atomic replace for one output path

    The lock file holds the writer's PID; a lock left by a dead writer is
    taken over.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lock_path = path.with_name(path.name + ".lock")
    if not _acquire_lock(path, lock_path):
        if not lock_is_stale(lock_path):
            raise PersistenceError(path, "Another writer holds the lock")
        print(f"✗ Removing stale lock {lock_path}")
        lock_path.unlink(missing_ok=True)
        if not _acquire_lock(path, lock_path):
            raise PersistenceError(path, "Another writer holds the lock")

    tmp_path = path.with_name(path.name + ".tmp")
    try:
        yield tmp_path
        os.replace(tmp_path, path)
    except OSError as e:
        raise PersistenceError(path, f"Write failed ({e.strerror})") from e
    finally:
        if tmp_path.exists():
            tmp_path.unlink()
        lock_path.unlink(missing_ok=True)


def _read_bytes(path):
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise PersistenceError(path, f"Cannot read file ({e.strerror})") from e


# ---------------------------------------------------------------- records

def write_records(path, records):
    """records: objects with to_dict(), or plain dicts"""
    with exclusive_write(path) as tmp:
        with open(tmp, "w", encoding="utf-8") as f:
            for record in records:
                payload = record.to_dict() if hasattr(record, "to_dict") else record
                f.write(json.dumps(payload, sort_keys=True, ensure_ascii=False))
                f.write("\n")
    return Path(path)


def read_records(path, expected_schema, strict=False):
    """Parse a line-delimited file into expected_schema objects

    expected_schema must offer from_dict(). Returns (records, errors); in
    strict mode the first bad line raises SchemaError instead.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as e:
        raise PersistenceError(path, f"Cannot read records ({e.strerror})") from e

    records, errors = [], []
    for line_number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
            if not isinstance(payload, dict):
                raise SchemaError("line is not an object")
            records.append(expected_schema.from_dict(payload))
        except (ValueError, KeyError, TypeError) as e:
            error = RecordError(line_number, str(e))
            if strict:
                raise SchemaError(f"{path}: {error}") from e
            errors.append(error)
    return records, errors


# ---------------------------------------------------------------- vocabulary

def write_vocab(path, vocab):
    with exclusive_write(path) as tmp:
        with open(tmp, "w", encoding="utf-8") as f:
            for token in vocab.id_to_token:
                f.write(token + "\n")
    return Path(path)


def read_vocab(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            tokens = [line.rstrip("\n") for line in f]
    except OSError as e:
        raise PersistenceError(path, f"Cannot read vocabulary ({e.strerror})") from e
    return Vocabulary(tokens)


# ---------------------------------------------------------------- features

def write_features(path, features):
    features = np.asarray(features, dtype="<f4")
    if features.ndim != 2 or features.shape[0] < 1:
        raise SchemaError(f"feature matrix must be frames x dim with frames >= 1, got {features.shape}")
    header = _FEATURE_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, features.shape[0], features.shape[1])
    with exclusive_write(path) as tmp:
        with open(tmp, "wb") as f:
            f.write(header)
            f.write(np.ascontiguousarray(features).tobytes())
    return Path(path)


def read_features(path):
    """frames x feature_dim float64 array"""
    raw = _read_bytes(path)
    if len(raw) < _FEATURE_HEADER.size:
        raise CorruptFeature(f"feature file too short for its header: {path}")
    magic, version, frames, dim = _FEATURE_HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise SchemaVersionError(f"{path}: expected magic {FEATURE_MAGIC!r}, found {magic!r}")
    if version > FEATURE_VERSION:
        raise SchemaVersionError(f"{path}: feature version {version} is newer than {FEATURE_VERSION}")
    expected = frames * dim * 4
    body = raw[_FEATURE_HEADER.size:]
    if frames < 1 or len(body) != expected:
        raise CorruptFeature(f"{path}: header declares {frames}x{dim} floats, found {len(body)} bytes")
    return np.frombuffer(body, dtype="<f4").reshape(frames, dim).astype(np.float64)


# ---------------------------------------------------------------- checkpoints

def write_checkpoint(path, config_block, tensors):
    """config_block: JSON-able dict; tensors: ordered name -> float64 array"""
    config_bytes = json.dumps(config_block, sort_keys=True).encode("utf-8")
    parts = [struct.pack("<I", len(config_bytes)), config_bytes, struct.pack("<I", len(tensors))]
    for name, array in tensors.items():
        array = np.ascontiguousarray(array, dtype="<f8")
        name_bytes = name.encode("utf-8")
        parts.append(struct.pack("<I", len(name_bytes)))
        parts.append(name_bytes)
        parts.append(struct.pack("<I", array.ndim))
        parts.append(struct.pack(f"<{array.ndim}I", *array.shape))
        parts.append(array.tobytes())
    payload = b"".join(parts)
    header = _CHECKPOINT_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(payload))

    with exclusive_write(path) as tmp:
        with open(tmp, "wb") as f:
            f.write(header)
            f.write(payload)
    return Path(path)


def read_checkpoint(path):
    """Returns (config_block, tensors)"""
    raw = _read_bytes(path)
    if len(raw) < _CHECKPOINT_HEADER.size:
        raise IntegrityError(f"{path}: file shorter than the checkpoint header")
    magic, version, payload_len = _CHECKPOINT_HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise SchemaVersionError(f"{path}: expected magic {CHECKPOINT_MAGIC!r}, found {magic!r}")
    if version != CHECKPOINT_VERSION and version not in CHECKPOINT_MIGRATIONS:
        raise SchemaVersionError(
            f"{path}: checkpoint version {version} cannot be read "
            f"(current {CHECKPOINT_VERSION}, no migration registered)"
        )
    payload = raw[_CHECKPOINT_HEADER.size:]
    if len(payload) != payload_len:
        raise IntegrityError(f"{path}: header declares {payload_len} payload bytes, found {len(payload)}")

    try:
        offset = 0
        (config_len,) = struct.unpack_from("<I", payload, offset)
        offset += 4
        config_block = json.loads(payload[offset:offset + config_len].decode("utf-8"))
        offset += config_len
        (count,) = struct.unpack_from("<I", payload, offset)
        offset += 4
        tensors = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", payload, offset)
            offset += 4
            name = payload[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<I", payload, offset)
            offset += 4
            shape = struct.unpack_from(f"<{ndim}I", payload, offset)
            offset += 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            array = np.frombuffer(payload, dtype="<f8", count=size, offset=offset)
            tensors[name] = array.reshape(shape).astype(np.float64)
            offset += 8 * size
    except (struct.error, ValueError) as e:
        raise IntegrityError(f"{path}: malformed tensor table ({e})") from e
    if offset != len(payload):
        raise IntegrityError(f"{path}: {len(payload) - offset} trailing bytes after tensor table")

    while version != CHECKPOINT_VERSION:
        config_block, tensors = CHECKPOINT_MIGRATIONS[version](config_block, tensors)
        version += 1
    return config_block, tensors


# ---------------------------------------------------------------- reports / logs

def write_json(path, payload):
    with exclusive_write(path) as tmp:
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(payload, f, sort_keys=True, indent=2, ensure_ascii=False)
            f.write("\n")
    return Path(path)


def read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise PersistenceError(path, f"Cannot read JSON ({e.strerror})") from e
    except ValueError as e:
        raise SchemaError(f"{path}: invalid JSON ({e})") from e


def write_text(path, text):
    with exclusive_write(path) as tmp:
        with open(tmp, "w", encoding="utf-8") as f:
            f.write(text)
    return Path(path)


def append_log_line(path, step, loss):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "a", encoding="utf-8") as f:
            f.write(f"{step}\t{loss!r}\n")
    except OSError as e:
        raise PersistenceError(path, f"Cannot append to training log ({e.strerror})") from e


def read_log(path):
    rows = []
    try:
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                step, loss = line.rstrip("\n").split("\t")
                rows.append((int(step), float(loss)))
    except OSError as e:
        raise PersistenceError(path, f"Cannot read training log ({e.strerror})") from e
    return rows
