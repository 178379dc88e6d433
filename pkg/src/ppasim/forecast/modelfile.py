"""Self-describing binary model container and the model-file store.

Layout::

    b"PPAM" | u16 version | u32 header length | header JSON (UTF-8)
    | float64 little-endian parameter block | sha256 of everything before

The header names the model type, the channel order, every parameter array
with its shape (in block order) and any type-specific integers or flags.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from ..telemetry import CHANNELS
from .base import Forecaster, Scaler

MAGIC = b"PPAM"
VERSION = 1
_DIGEST = 32


class ModelFileError(ValueError):
    pass


def _registry() -> dict[str, type[Forecaster]]:
    from .arma import ArmaForecaster
    from .lstm import LstmForecaster
    return {ArmaForecaster.model_type: ArmaForecaster, LstmForecaster.model_type: LstmForecaster}


def encode(model: Forecaster) -> bytes:
    params = model.params()
    header = {
        "type": model.model_type,
        "channels": list(CHANNELS),
        "arrays": [[name, list(arr.shape)] for name, arr in params.items()],
        "meta": model.header(),
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    block = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in params.values())
    body = MAGIC + struct.pack("<HI", VERSION, len(head)) + head + block
    return body + hashlib.sha256(body).digest()


def decode(data: bytes) -> Forecaster:
    if len(data) < len(MAGIC) + 6 + _DIGEST or data[:4] != MAGIC:
        raise ModelFileError("bad magic or truncated file")
    body, digest = data[:-_DIGEST], data[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise ModelFileError("checksum mismatch")
    version, hlen = struct.unpack_from("<HI", body, 4)
    if version != VERSION:
        raise ModelFileError(f"unsupported version {version}")
    off = 10
    try:
        header = json.loads(body[off:off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"unreadable header: {exc}") from None
    if header.get("channels") != list(CHANNELS):
        raise ModelFileError("channel order differs from the metric protocol")
    cls = _registry().get(header.get("type"))
    if cls is None:
        raise ModelFileError(f"unknown model type {header.get('type')!r}")
    off += hlen
    params = {}
    for name, shape in header["arrays"]:
        n = int(np.prod(shape)) if shape else 1
        end = off + 8 * n
        if end > len(body):
            raise ModelFileError("parameter block truncated")
        arr = np.frombuffer(body[off:end], dtype="<f8").astype(float).reshape(shape)
        if not np.all(np.isfinite(arr)):
            raise ModelFileError(f"non-finite values in {name}")
        params[name] = arr
        off = end
    if off != len(body):
        raise ModelFileError("trailing bytes after parameter block")
    return cls.from_parts(header.get("meta", {}), params)


def save_model(model: Forecaster, path: str | Path) -> None:
    """Write atomically: temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".model-")
    with os.fdopen(fd, "wb") as fh:
        fh.write(encode(model))
    os.replace(tmp, path)


def load_model(path: str | Path) -> Forecaster:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ModelFileError(str(exc)) from None
    return decode(data)


class ModelStore:
    """The evaluator's view of a model file.

    ``load`` returns ``None`` when the file is missing, corrupt, or flagged as
    being rewritten by the updater. A decoded model is cached until the file's
    identity (inode, size, mtime) changes, so recursion state survives
    between control loops.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.updating = False
        self._stamp = None
        self._model: Forecaster | None = None
        self.last_error: str | None = None

    def _identity(self):
        try:
            st = os.stat(self.path)
        except OSError:
            return None
        return (st.st_ino, st.st_size, st.st_mtime_ns)

    def load(self) -> Forecaster | None:
        if self.updating:
            self.last_error = "model file is being updated"
            return None
        stamp = self._identity()
        if stamp is None:
            self._stamp, self._model = None, None
            self.last_error = "model file missing"
            return None
        if stamp != self._stamp:
            self._stamp = stamp
            try:
                self._model = load_model(self.path)
                self.last_error = None
            except ModelFileError as exc:
                self._model = None
                self.last_error = str(exc)
        return self._model

    def replace(self, model: Forecaster) -> None:
        save_model(model, self.path)
        self._stamp = self._identity()
        self._model = model
        self.last_error = None


class StaticModelSource:
    """Always hands out the same in-memory forecaster (oracles, tests)."""

    def __init__(self, model: Forecaster | None):
        self.model = model
        self.updating = False
        self.path = None

    def load(self) -> Forecaster | None:
        if self.updating or self.model is None or not self.model.is_valid():
            return None
        return self.model

    def replace(self, model: Forecaster) -> None:
        self.model = model


def save_scaler(scaler: Scaler, path: str | Path) -> None:
    """CSV with the channel names as header, then the min row and the max row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(CHANNELS),
             ",".join(repr(float(v)) for v in scaler.lo),
             ",".join(repr(float(v)) for v in scaler.hi)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_scaler(path: str | Path) -> Scaler:
    try:
        lines = Path(path).read_text(encoding="utf-8").split()
    except OSError as exc:
        raise ModelFileError(str(exc)) from None
    if len(lines) != 3 or lines[0] != ",".join(CHANNELS):
        raise ModelFileError(f"{path}: expected a channel header and two rows")
    try:
        lo = [float(v) for v in lines[1].split(",")]
        hi = [float(v) for v in lines[2].split(",")]
    except ValueError as exc:
        raise ModelFileError(f"{path}: {exc}") from None
    if len(lo) != len(CHANNELS) or len(hi) != len(CHANNELS):
        raise ModelFileError(f"{path}: wrong number of columns")
    return Scaler(lo, hi)
