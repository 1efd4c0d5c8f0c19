"""Binary frame dumps (``frame_<index>.nslf``) with a JSON manifest of times.

Layout, little-endian: magic ``NSLF``, version u32 = 1, dim u32, n u32,
L f64, t f64, then ``n**dim`` complex values as (re f64, im f64) pairs in
row-major axis order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FrameFormatError
from .grid import Grid, WaveFunction

MAGIC = b"NSLF"
VERSION = 1
_HEAD = struct.Struct("<4sIIIdd")


def encode_frame(psi: WaveFunction) -> bytes:
    g = psi.grid
    head = _HEAD.pack(MAGIC, VERSION, g.dim, g.n, float(g.L), float(psi.t))
    body = np.ascontiguousarray(psi.values, dtype="<c16").tobytes()
    return head + body


def decode_frame(data: bytes) -> WaveFunction:
    if len(data) < _HEAD.size:
        raise FrameFormatError("frame shorter than its header")
    magic, version, dim, n, L, t = _HEAD.unpack_from(data)
    if magic != MAGIC:
        raise FrameFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FrameFormatError(f"unsupported frame version {version}")
    grid = Grid(dim, n, L)
    count = n**dim
    if len(data) != _HEAD.size + 16 * count:
        raise FrameFormatError(f"expected {count} complex values, file has {(len(data) - _HEAD.size) / 16:g}")
    values = np.frombuffer(data, dtype="<c16", count=count, offset=_HEAD.size).reshape(grid.shape)
    return WaveFunction(grid, t, values.astype(complex))


def write_frame(path, psi: WaveFunction):
    Path(path).write_bytes(encode_frame(psi))


def read_frame(path) -> WaveFunction:
    return decode_frame(Path(path).read_bytes())


class FrameWriter:
    """Writes ``frame_<index>.nslf`` files and keeps ``manifest.json`` current."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.entries = []

    def write(self, psi: WaveFunction) -> Path:
        index = len(self.entries)
        name = f"frame_{index}.nslf"
        write_frame(self.directory / name, psi)
        self.entries.append({"index": index, "t": float(psi.t), "file": name})
        return self.directory / name

    def close(self):
        manifest = {"format": "NSLF", "version": VERSION, "frames": self.entries}
        (self.directory / "manifest.json").write_text(json.dumps(manifest, indent=1))


def read_manifest(directory) -> list[dict]:
    return json.loads((Path(directory) / "manifest.json").read_text())["frames"]


def iter_frames(directory):
    directory = Path(directory)
    for entry in read_manifest(directory):
        yield read_frame(directory / entry["file"])
