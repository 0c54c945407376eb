"""File formats: logits, reports, calibrators, checkpoints, histories.

Logits travel either as CSV (header ``logit_0,...,logit_{K-1},label``, floats
printed with 17 significant digits so text round-trips are exact) or as a
binary blob (magic ``CLBK``, u16 version, u64 n, u32 k, row-major little-
endian float64 values, then n little-endian int32 labels).  Loaders
auto-detect the format by the magic bytes.  All writers are atomic: they
write to a temporary file in the target directory and rename over the
destination.
"""

from __future__ import annotations

import csv
import json
import os
import struct
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .calibrate import Calibrator
from .errors import FormatError, InvalidInputError
from .metrics import CalibrationReport, ReliabilityBins
from .numerics import as_label_vector, as_logit_matrix
from .trainer import EpochStats, MlpParams, TrainConfig

LOGITS_MAGIC = b"CLBK"
CHECKPOINT_MAGIC = b"MLPC"
FORMAT_VERSION = 1
REPORT_SCHEMA_VERSION = 1
TOOL_VERSION = "0.1.0"


def _atomic_write(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_text(path, text: str) -> None:
    _atomic_write(path, text.encode("utf-8"))


# ---------------------------------------------------------------------------
# Logits
# ---------------------------------------------------------------------------


def save_logits(path, z, y, fmt: str = "csv") -> None:
    """Write a logit matrix and its labels as CSV or the binary twin."""
    z = as_logit_matrix(z)
    y = as_label_vector(y, z.shape[1])
    if y.shape[0] != z.shape[0]:
        raise InvalidInputError(f"got {z.shape[0]} logit rows but {y.shape[0]} labels")
    n, k = z.shape
    if fmt == "csv":
        lines = [",".join([f"logit_{j}" for j in range(k)] + ["label"])]
        for i in range(n):
            lines.append(",".join([f"{v:.17g}" for v in z[i]] + [str(int(y[i]))]))
        _atomic_write_text(path, "\n".join(lines) + "\n")
    elif fmt == "binary":
        header = LOGITS_MAGIC + struct.pack("<HQI", FORMAT_VERSION, n, k)
        body = z.astype("<f8").tobytes(order="C") + y.astype("<i4").tobytes()
        _atomic_write(path, header + body)
    else:
        raise InvalidInputError(f"format must be 'csv' or 'binary', got {fmt!r}")


def _load_logits_binary(path, blob: bytes):
    header_size = 4 + struct.calcsize("<HQI")
    if len(blob) < header_size:
        raise FormatError(f"{path}: truncated binary logits file")
    version, n, k = struct.unpack("<HQI", blob[4:header_size])
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported binary version {version}")
    expected = header_size + n * k * 8 + n * 4
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(blob)}")
    z = np.frombuffer(blob, dtype="<f8", count=n * k, offset=header_size).reshape(n, k)
    y = np.frombuffer(blob, dtype="<i4", count=n, offset=header_size + n * k * 8)
    return z.astype(np.float64), y.astype(np.int64)


def _load_logits_csv(path, text: str):
    reader = csv.reader(text.splitlines())
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError(f"{path}: empty file") from None
    except csv.Error as exc:
        raise FormatError(f"{path}: not a CSV logits file ({exc})") from None
    k = len(header) - 1
    expected = [f"logit_{j}" for j in range(k)] + ["label"]
    if k < 2 or [h.strip() for h in header] != expected:
        raise FormatError(f"{path}:1: header must be logit_0,...,logit_{{K-1}},label")
    rows, labels = [], []
    try:
        body = list(enumerate(reader, start=2))
    except csv.Error as exc:
        raise FormatError(f"{path}: not a CSV logits file ({exc})") from None
    for lineno, row in body:
        if not row:
            continue
        if len(row) != k + 1:
            raise FormatError(f"{path}:{lineno}: expected {k + 1} columns, found {len(row)}")
        try:
            rows.append([float(v) for v in row[:k]])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        try:
            labels.append(int(row[k]))
        except ValueError:
            raise FormatError(f"{path}:{lineno}: label {row[k]!r} is not an integer") from None
        if not 0 <= labels[-1] < k:
            raise FormatError(f"{path}:{lineno}: label {labels[-1]} outside [0, {k})")
    if not rows:
        raise FormatError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64), np.asarray(labels, dtype=np.int64)


def load_logits(path) -> tuple[np.ndarray, np.ndarray]:
    """Read logits and labels, auto-detecting binary vs CSV by magic bytes."""
    blob = Path(path).read_bytes()
    if blob[:4] == LOGITS_MAGIC:
        z, y = _load_logits_binary(path, blob)
    else:
        try:
            text = blob.decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"{path}: neither a CLBK binary file nor UTF-8 text") from None
        z, y = _load_logits_csv(path, text)
    z = as_logit_matrix(z)
    return z, as_label_vector(y, z.shape[1])


# ---------------------------------------------------------------------------
# Reports and calibrators
# ---------------------------------------------------------------------------


def report_document(report: CalibrationReport, input_path, calibrator: str = "none", extras: dict | None = None) -> dict:
    doc = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "tool_version": TOOL_VERSION,
        "generated_at": datetime.now(timezone.utc).isoformat(),
        "input": str(input_path),
        "calibrator": calibrator,
    }
    doc.update(report.to_dict())
    if extras:
        doc.update(extras)
    return doc


def save_report(path, report: CalibrationReport, input_path="", calibrator: str = "none", extras: dict | None = None) -> None:
    doc = report_document(report, input_path, calibrator, extras)
    _atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def save_calibrator(path, calibrator: Calibrator) -> None:
    doc = {"schema_version": REPORT_SCHEMA_VERSION}
    doc.update(calibrator.to_dict())
    _atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def load_calibrator(path) -> Calibrator:
    try:
        doc = json.loads(Path(path).read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    return Calibrator.from_dict(doc)


def save_reliability_csv(path, bins: ReliabilityBins) -> None:
    lines = ["lo,hi,count,conf,acc"]
    for row in bins.rows():
        lines.append(f"{row['lo']:.17g},{row['hi']:.17g},{row['count']},{row['conf']:.17g},{row['acc']:.17g}")
    _atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Checkpoints and histories
# ---------------------------------------------------------------------------


def save_checkpoint(path, params: MlpParams, cfg: TrainConfig) -> None:
    """Versioned binary checkpoint: layer sizes, little-endian float64
    parameter arrays, and the training configuration as embedded JSON."""
    cfg_blob = json.dumps(cfg.to_dict()).encode("utf-8")
    out = [CHECKPOINT_MAGIC, struct.pack("<HI", FORMAT_VERSION, len(cfg_blob)), cfg_blob]
    out.append(struct.pack("<I", len(params.sizes)))
    out.append(np.asarray(params.sizes, dtype="<u4").tobytes())
    for w, b in zip(params.weights, params.biases):
        out.append(w.astype("<f8").tobytes(order="C"))
        out.append(b.astype("<f8").tobytes())
    _atomic_write(path, b"".join(out))


def load_checkpoint(path) -> tuple[MlpParams, TrainConfig]:
    blob = Path(path).read_bytes()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint file")
    version, cfg_len = struct.unpack("<HI", blob[4:10])
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    pos = 10
    try:
        cfg = TrainConfig.from_dict(json.loads(blob[pos : pos + cfg_len].decode("utf-8")))
    except (json.JSONDecodeError, KeyError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: bad embedded config ({exc})") from None
    pos += cfg_len
    (n_sizes,) = struct.unpack("<I", blob[pos : pos + 4])
    pos += 4
    sizes = np.frombuffer(blob, dtype="<u4", count=n_sizes, offset=pos).astype(int).tolist()
    pos += 4 * n_sizes
    weights, biases = [], []
    for layer in range(len(sizes) - 1):
        fan_in, fan_out = sizes[layer], sizes[layer + 1]
        w = np.frombuffer(blob, dtype="<f8", count=fan_in * fan_out, offset=pos).reshape(fan_in, fan_out)
        pos += fan_in * fan_out * 8
        b = np.frombuffer(blob, dtype="<f8", count=fan_out, offset=pos)
        pos += fan_out * 8
        weights.append(w.astype(np.float64))
        biases.append(b.astype(np.float64))
    if pos != len(blob):
        raise FormatError(f"{path}: {len(blob) - pos} trailing bytes")
    return MlpParams(sizes, weights, biases), cfg


def save_history_csv(path, history: list[EpochStats]) -> None:
    lines = ["epoch,train_loss,val_loss,val_error"]
    for s in history:
        lines.append(f"{s.epoch},{s.train_loss:.17g},{s.val_loss:.17g},{s.val_error:.17g}")
    _atomic_write_text(path, "\n".join(lines) + "\n")
