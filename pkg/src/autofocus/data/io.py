"""On-disk formats: JSONL QA records, binary per-episode features, event logs."""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Iterable

import numpy as np

from .episodes import Event, EventLog
from .qa import QARecord

FEATURE_MAGIC = b"AFTF"
FEATURE_VERSION = 1
# magic, version, episode-id byte length, N, d_a, d_m
_HEADER = struct.Struct("<4sHHIII")

DATASET_FIELDS = ("episode_id", "question", "question_type", "sport", "answer", "meta_key")


class DataValidationError(ValueError):
    pass


def write_jsonl(path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_jsonl(path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if line.strip():
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise DataValidationError(f"{path}:{n}: {exc}") from exc
    return rows


def save_records(path, records: Iterable[QARecord]) -> None:
    write_jsonl(path, (r.to_dict() for r in records))


def load_records(path) -> list[QARecord]:
    out = []
    for n, row in enumerate(read_jsonl(path), 1):
        missing = [f for f in DATASET_FIELDS if f not in row]
        if missing:
            raise DataValidationError(f"{path}: record {n} lacks fields {missing}")
        out.append(QARecord.from_dict(row))
    return out


def write_features(path, episode_id: str, appearance: np.ndarray, motion: np.ndarray) -> None:
    """Header then row-major little-endian float32 appearance rows, then motion rows."""
    if appearance.shape[0] != motion.shape[0]:
        raise DataValidationError("appearance and motion frame counts differ")
    eid = episode_id.encode("utf-8")
    n, da = appearance.shape
    dm = motion.shape[1]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, len(eid), n, da, dm))
        fh.write(eid)
        fh.write(np.ascontiguousarray(appearance, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(motion, dtype="<f4").tobytes())


def read_features(path) -> tuple[str, np.ndarray, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DataValidationError(f"{path}: truncated header")
    magic, version, idlen, n, da, dm = _HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC or version != FEATURE_VERSION:
        raise DataValidationError(f"{path}: not a feature file (magic={magic!r}, version={version})")
    off = _HEADER.size
    eid = raw[off:off + idlen].decode("utf-8")
    off += idlen
    expected = off + 4 * n * (da + dm)
    if len(raw) != expected:
        raise DataValidationError(f"{path}: expected {expected} bytes, found {len(raw)}")
    body = np.frombuffer(raw, dtype="<f4", offset=off)
    app = body[: n * da].reshape(n, da).astype(np.float64)
    mot = body[n * da:].reshape(n, dm).astype(np.float64)
    return eid, app, mot


def write_manifest(path, entries: dict[str, str]) -> None:
    Path(path).write_text(json.dumps(entries, indent=1, sort_keys=True), encoding="utf-8")


def read_manifest(path) -> dict[str, str]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise DataValidationError(f"{path}: manifest must map episode ids to feature files")
    return data


def write_event_log(path, log: EventLog) -> None:
    """First line is the episode header, then one event per line."""
    header = {"episode_id": log.episode_id, "n_frames": log.n_frames, "sport": log.sport}
    write_jsonl(path, [header] + [e.to_dict() for e in log.events])


def read_event_log(path) -> EventLog:
    rows = read_jsonl(path)
    if not rows:
        raise DataValidationError(f"{path}: empty event log")
    head = rows[0]
    return EventLog(head["episode_id"], head["n_frames"], [Event.from_dict(r) for r in rows[1:]], head["sport"])
