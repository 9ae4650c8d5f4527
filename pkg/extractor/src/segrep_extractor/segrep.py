"""SEGREP1 writer (independent implementation of the on-disk format).

Layout per utterance file::

    bytes 0..7    magic "SEGREP1\\0"
    bytes 8..9    byte-order marker 0x0102 (uint16, little-endian)
    bytes 10..11  format version (uint16, little-endian) == 1
    bytes 12..23  n_layers, n_frames, dim (uint32 each, little-endian)
    bytes 24..    n_layers * n_frames * dim float32, little-endian,
                  layer-major then row-major

plus a ``manifest.json`` naming every utterance. The consumer side lives in
the analysis toolkit; this module only writes.
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"SEGREP1\0"
BYTE_ORDER_MARK = 0x0102
FORMAT_VERSION = 1
HEADER_BYTES = 24
LOCK_NAME = ".segrep.lock"


class SegrepDirWriter:
    """Streams (n_layers, n_frames, dim) float32 arrays into a SEGREP1 dir."""

    def __init__(self, directory: str | Path, model_id: str, n_layers: int,
                 dim: int, frame_hop: float, extra: Mapping | None = None):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.model_id = model_id
        self.n_layers = int(n_layers)
        self.dim = int(dim)
        self.frame_hop = float(frame_hop)
        self.extra = dict(extra or {})
        self.entries: list[dict] = []
        self._lock_fd: int | None = None

    def __enter__(self) -> "SegrepDirWriter":
        self._lock_fd = os.open(self.dir / LOCK_NAME,
                                os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        return self

    def add(self, utterance_id: str, layers: np.ndarray) -> None:
        arr = np.ascontiguousarray(layers, dtype="<f4")
        if arr.ndim != 3 or arr.shape[0] != self.n_layers or arr.shape[2] != self.dim:
            raise ValueError(
                f"{utterance_id}: expected ({self.n_layers}, n_frames, {self.dim}), "
                f"got {arr.shape}"
            )
        n_frames = arr.shape[1]
        fname = f"{utterance_id}.segrep"
        header = MAGIC + struct.pack("<HHIII", BYTE_ORDER_MARK, FORMAT_VERSION,
                                     self.n_layers, n_frames, self.dim)
        (self.dir / fname).write_bytes(header + arr.tobytes())
        self.entries.append({
            "utterance_id": utterance_id,
            "n_frames": n_frames,
            "file": fname,
            "data_offset": HEADER_BYTES,
            "size": HEADER_BYTES + 4 * self.n_layers * n_frames * self.dim,
        })

    def __exit__(self, exc_type, exc, tb) -> None:
        try:
            if exc_type is None:
                manifest = {
                    "format": "SEGREP1",
                    "version": FORMAT_VERSION,
                    "model_id": self.model_id,
                    "n_layers": self.n_layers,
                    "dim": self.dim,
                    "frame_hop": self.frame_hop,
                    "utterances": self.entries,
                    **self.extra,
                }
                (self.dir / "manifest.json").write_text(
                    json.dumps(manifest, indent=1, sort_keys=True, ensure_ascii=False)
                    + "\n",
                    encoding="utf-8",
                )
        finally:
            if self._lock_fd is not None:
                os.close(self._lock_fd)
                os.unlink(self.dir / LOCK_NAME)
                self._lock_fd = None
