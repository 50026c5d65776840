"""Config files, snapshot containers and run manifests.

Snapshot container layout (all integers and floats little-endian):

    bytes 0..7     magic b"GFSNAP01"
    bytes 8..15    uint64 header length H
    next H bytes   UTF-8 JSON header: {"format", "n_points", "dx", "config", "record_bytes"}
    records        one per snapshot, each (1 + 2n + 4n^2) float64 values:
                   time, mean (re, im interleaved), c_norm row-major (re, im),
                   m_anom row-major (re, im)
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import fields
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .lattice import CLOSURES, GaussianFieldState, GridSpec, SimulationConfig

MAGIC = b"GFSNAP01"
CONFIG_KEYS = tuple(f.name for f in fields(SimulationConfig))
_INT_KEYS = {"n_points"}
_STR_KEYS = {"closure"}


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.key = key
        self.line = line


class SnapshotFormatError(ValueError):
    pass


def _parse_value(key: str, text: str, line: int):
    if key in _STR_KEYS:
        if text not in CLOSURES:
            raise ConfigError(f"expected one of {CLOSURES}, got {text!r}", key, line)
        return text
    try:
        if key in _INT_KEYS:
            return int(text)
        value = float(text)
    except ValueError:
        raise ConfigError(f"cannot parse {text!r} as a number", key, line) from None
    if not math.isfinite(value):
        raise ConfigError("value must be finite", key, line)
    return value


def parse_config_text(text: str, base: SimulationConfig | None = None) -> SimulationConfig:
    """Parse ``key = value`` lines (``#`` starts a comment).

    Without ``base`` every key must be present; with ``base`` the file only
    overrides.  Unknown, duplicate, missing or invalid keys raise ConfigError
    naming the key and, where there is one, the line.
    """
    values: dict = {}
    lines: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected key = value, got {body!r}", None, lineno)
        key, _, val = (part.strip() for part in body.partition("="))
        if key not in CONFIG_KEYS:
            raise ConfigError("unknown key", key, lineno)
        if key in values:
            raise ConfigError(f"duplicate key (first on line {lines[key]})", key, lineno)
        if not val:
            raise ConfigError("missing value", key, lineno)
        values[key] = _parse_value(key, val, lineno)
        lines[key] = lineno
    if base is None:
        missing = [k for k in CONFIG_KEYS if k not in values]
        if missing:
            raise ConfigError("missing required key", missing[0])
        merged = values
    else:
        merged = {**base.as_dict(), **values}
    try:
        return SimulationConfig(**merged)
    except ValueError as exc:
        key = next((k for k in CONFIG_KEYS if k in str(exc)), None)
        raise ConfigError(str(exc), key, lines.get(key)) from None


def load_config(path, base: SimulationConfig | None = None) -> SimulationConfig:
    return parse_config_text(Path(path).read_text(), base)


def format_config(cfg: SimulationConfig) -> str:
    """Canonical text form; ``repr`` of floats round-trips exactly."""
    out = []
    for k in CONFIG_KEYS:
        v = getattr(cfg, k)
        out.append(f"{k} = {v if isinstance(v, str) else repr(v)}\n")
    return "".join(out)


def config_sha256(cfg: SimulationConfig) -> str:
    return hashlib.sha256(format_config(cfg).encode()).hexdigest()


# ---------------------------------------------------------------------------
# Snapshot container


def _record_floats(n: int) -> int:
    return 1 + 2 * n + 4 * n * n


class SnapshotWriter:
    """Streaming writer; use as a context manager."""

    def __init__(self, path, config: SimulationConfig):
        self.path = Path(path)
        self.config = config
        self.n = config.n_points
        header = json.dumps({
            "format": "gaussian-field-snapshots/1",
            "n_points": self.n,
            "dx": config.dx,
            "config": config.as_dict(),
            "record_bytes": 8 * _record_floats(self.n),
        }, sort_keys=True).encode()
        self._fh = open(self.path, "wb")
        self._fh.write(MAGIC + struct.pack("<Q", len(header)) + header)
        self.count = 0
        self.times: list[float] = []

    def write(self, state: GaussianFieldState) -> None:
        if state.grid.n_points != self.n:
            raise ValueError("state grid does not match the container")
        self._fh.write(np.array([state.time], dtype="<f8").tobytes())
        for a in (state.mean, state.c_norm, state.m_anom):
            self._fh.write(np.ascontiguousarray(a, dtype="<c16").tobytes())
        self.count += 1
        self.times.append(float(state.time))

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_snapshots(path, config: SimulationConfig, states: Iterable[GaussianFieldState]) -> int:
    with SnapshotWriter(path, config) as w:
        for s in states:
            w.write(s)
        return w.count


class SnapshotReader:
    """Random-access reader of a snapshot container."""

    def __init__(self, path):
        self.path = Path(path)
        with open(self.path, "rb") as fh:
            head = fh.read(16)
            if len(head) < 16 or head[:8] != MAGIC:
                raise SnapshotFormatError(f"{self.path}: not a snapshot container")
            (hlen,) = struct.unpack("<Q", head[8:])
            raw = fh.read(hlen)
        if len(raw) != hlen:
            raise SnapshotFormatError(f"{self.path}: truncated header")
        try:
            self.header = json.loads(raw.decode())
        except ValueError as exc:
            raise SnapshotFormatError(f"{self.path}: bad header: {exc}") from None
        self.n = int(self.header["n_points"])
        self.grid = GridSpec(self.n, float(self.header["dx"]))
        self.config = SimulationConfig(**self.header["config"])
        self.offset = 16 + hlen
        self.record_bytes = 8 * _record_floats(self.n)
        body = self.path.stat().st_size - self.offset
        if body % self.record_bytes:
            raise SnapshotFormatError(f"{self.path}: trailing partial record")
        self.count = body // self.record_bytes

    def __len__(self) -> int:
        return self.count

    def _decode(self, buf: bytes) -> GaussianFieldState:
        n = self.n
        a = np.frombuffer(buf, dtype="<f8")
        t = float(a[0])
        z = a[1:].view("<c16")
        mean = z[:n]
        c = z[n:n + n * n].reshape(n, n)
        m = z[n + n * n:].reshape(n, n)
        return GaussianFieldState(self.grid, t, mean, c, m)

    def __getitem__(self, i: int) -> GaussianFieldState:
        if i < 0:
            i += self.count
        if not 0 <= i < self.count:
            raise IndexError(i)
        with open(self.path, "rb") as fh:
            fh.seek(self.offset + i * self.record_bytes)
            return self._decode(fh.read(self.record_bytes))

    def __iter__(self) -> Iterator[GaussianFieldState]:
        with open(self.path, "rb") as fh:
            fh.seek(self.offset)
            for _ in range(self.count):
                yield self._decode(fh.read(self.record_bytes))


def read_snapshots(path) -> list[GaussianFieldState]:
    return list(SnapshotReader(path))


# ---------------------------------------------------------------------------
# Manifest


def write_manifest(path, entries: dict) -> None:
    """Flat key=value file; values are written verbatim, keys in insertion order."""
    lines = []
    for k, v in entries.items():
        text = str(v)
        if "\n" in text or "=" in k or "\n" in k:
            raise ValueError(f"manifest entry {k!r} is not a single key=value line")
        lines.append(f"{k}={text}\n")
    Path(path).write_text("".join(lines))


def read_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            k, _, v = line.partition("=")
            out[k] = v
    return out
