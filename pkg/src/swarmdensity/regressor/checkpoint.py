"""Versioned binary checkpoints and loss-curve CSV."""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import DatasetError
from .arch import ArchSpec, param_shapes
from .network import RegressorParams
from .train import History

MAGIC = b"SWDCKPT\x00"
VERSION = 1


def _history_dict(hist: History) -> dict:
    return {"epoch": hist.epoch, "train_loss": [None if np.isnan(v) else v for v in hist.train_loss],
            "val_loss": hist.val_loss, "lr": hist.lr, "best_epoch": hist.best_epoch}


def _history_from(d: dict) -> History:
    h = History()
    for e, t, v, lr in zip(d["epoch"], d["train_loss"], d["val_loss"], d["lr"]):
        h.append(e, float("nan") if t is None else t, v, lr)
    h.best_epoch = int(d["best_epoch"])
    return h


def save_checkpoint(path, rp: RegressorParams, history: History = None, extra: dict = None) -> Path:
    """Header JSON (arch, tensor table, history, extra) followed by little-endian f4 tensors."""
    path = Path(path)
    names = list(param_shapes(rp.arch))
    header = {"arch": rp.arch.to_dict(), "tensors": [[n, list(rp.tensors[n].shape)] for n in names],
              "history": _history_dict(history) if history is not None else None,
              "extra": extra or {}}
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(blob)))
        f.write(blob)
        for n in names:
            f.write(np.ascontiguousarray(rp.tensors[n], dtype="<f4").tobytes())
    return path


def load_checkpoint(path):
    """Returns ``(params, history, extra)``; tensors come back as float32."""
    data = Path(path).read_bytes()
    if data[:len(MAGIC)] != MAGIC:
        raise DatasetError(f"{path}: not a checkpoint")
    off = len(MAGIC)
    version, size = struct.unpack_from("<II", data, off)
    if version != VERSION:
        raise DatasetError(f"{path}: unsupported checkpoint version {version}")
    off += 8
    header = json.loads(data[off:off + size])
    off += size
    arch = ArchSpec.from_dict(header["arch"])
    tensors = {}
    for name, shape in header["tensors"]:
        n = int(np.prod(shape))
        if off + 4 * n > len(data):
            raise DatasetError(f"{path}: truncated at tensor {name}")
        tensors[name] = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(shape).astype(np.float32)
        off += 4 * n
    if off != len(data):
        raise DatasetError(f"{path}: {len(data) - off} trailing bytes")
    try:
        rp = RegressorParams(arch, tensors)
    except ValueError as e:
        raise DatasetError(f"{path}: {e}") from None
    hist = _history_from(header["history"]) if header["history"] else None
    return rp, hist, header["extra"]


def write_history_csv(path, hist: History) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(["epoch", "train_loss", "val_loss", "lr"])
        for e, t, v, lr in hist.rows():
            wr.writerow([e, "" if np.isnan(t) else format(t, ".9g"), format(v, ".9g"), format(lr, ".9g")])
    return path


def read_history_csv(path) -> History:
    h = History()
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            t = float(row["train_loss"]) if row["train_loss"] else float("nan")
            h.append(int(row["epoch"]), t, float(row["val_loss"]), float(row["lr"]))
    h.best_epoch = int(np.argmin(h.val_loss))
    return h
