"""SEGREP1 on-disk container for per-layer frame representations.

Layout: a directory holding ``manifest.json`` plus one binary file per
utterance. Each binary file is::

    bytes 0..7    magic "SEGREP1\\0"
    bytes 8..9    byte-order marker 0x0102 (uint16, little-endian)
    bytes 10..11  format version (uint16, little-endian) == 1
    bytes 12..23  n_layers, n_frames, dim (uint32 each, little-endian)
    bytes 24..    n_layers * n_frames * dim float32, little-endian,
                  layer-major then row-major

Frame k's center time is (k + 0.5) * frame_hop seconds. Writers hold an
exclusive ``.segrep.lock`` in the directory; readers need no lock.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import ParseError, SegprobeError, ValidationError
from .ingest import PhoneToken

MAGIC = b"SEGREP1\0"
BYTE_ORDER_MARK = 0x0102
FORMAT_VERSION = 1
HEADER_BYTES = 24
LOCK_NAME = ".segrep.lock"
MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class UtteranceEntry:
    utterance_id: str
    n_frames: int
    file: str
    data_offset: int
    size: int


@dataclass(frozen=True)
class RepManifest:
    model_id: str
    n_layers: int
    dim: int
    frame_hop: float
    utterances: tuple[UtteranceEntry, ...]
    extra: dict

    def __post_init__(self) -> None:
        if self.n_layers < 1 or self.dim < 1:
            raise ValidationError("n_layers and dim must be >= 1")
        if not self.frame_hop > 0:
            raise ValidationError("frame_hop must be positive")


def _expected_size(n_layers: int, n_frames: int, dim: int) -> int:
    return HEADER_BYTES + 4 * n_layers * n_frames * dim


class SegrepWriter:
    """Streams utterance matrices into a SEGREP1 directory.

    Use as a context manager; the manifest is written on clean exit and an
    exclusive lock file is held for the duration.
    """

    def __init__(self, directory: str | Path, model_id: str, n_layers: int,
                 dim: int, frame_hop: float, extra: Mapping | None = None):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.model_id = model_id
        self.n_layers = int(n_layers)
        self.dim = int(dim)
        self.frame_hop = float(frame_hop)
        self.extra = dict(extra or {})
        self.entries: list[UtteranceEntry] = []
        self._lock_fd: int | None = None

    def __enter__(self) -> "SegrepWriter":
        lock = self.dir / LOCK_NAME
        try:
            self._lock_fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise SegprobeError(f"{self.dir}: locked by another writer ({lock})") from None
        return self

    def add(self, utterance_id: str, layers: np.ndarray) -> None:
        arr = np.asarray(layers, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[0] != self.n_layers or arr.shape[2] != self.dim:
            raise ValidationError(
                f"{utterance_id}: expected shape ({self.n_layers}, n_frames, {self.dim}), "
                f"got {arr.shape}"
            )
        n_frames = arr.shape[1]
        fname = f"{utterance_id}.segrep"
        header = MAGIC + struct.pack(
            "<HHIII", BYTE_ORDER_MARK, FORMAT_VERSION, self.n_layers, n_frames, self.dim
        )
        payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        (self.dir / fname).write_bytes(header + payload)
        self.entries.append(
            UtteranceEntry(utterance_id, n_frames, fname, HEADER_BYTES,
                           _expected_size(self.n_layers, n_frames, self.dim))
        )

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
                    "utterances": [
                        {
                            "utterance_id": e.utterance_id,
                            "n_frames": e.n_frames,
                            "file": e.file,
                            "data_offset": e.data_offset,
                            "size": e.size,
                        }
                        for e in self.entries
                    ],
                    **self.extra,
                }
                (self.dir / MANIFEST_NAME).write_text(
                    json.dumps(manifest, indent=1, sort_keys=True, ensure_ascii=False) + "\n",
                    encoding="utf-8",
                )
        finally:
            if self._lock_fd is not None:
                os.close(self._lock_fd)
                os.unlink(self.dir / LOCK_NAME)
                self._lock_fd = None


def write_segrep(directory: str | Path, model_id: str, frame_hop: float,
                 utterances: Mapping[str, np.ndarray], extra: Mapping | None = None) -> None:
    """One-shot writer: ``utterances`` maps id -> (n_layers, n_frames, dim)."""
    first = next(iter(utterances.values()))
    n_layers, _, dim = np.asarray(first).shape
    with SegrepWriter(directory, model_id, n_layers, dim, frame_hop, extra) as w:
        for utt_id in utterances:
            w.add(utt_id, utterances[utt_id])


class SegrepStore:
    """Read-side access to a SEGREP1 directory with lazy per-layer loads."""

    def __init__(self, directory: str | Path):
        self.dir = Path(directory)
        mpath = self.dir / MANIFEST_NAME
        if not mpath.is_file():
            raise ParseError(f"{self.dir}: missing {MANIFEST_NAME}")
        raw = json.loads(mpath.read_text(encoding="utf-8"))
        if raw.get("format") != "SEGREP1":
            raise ParseError(f"{mpath}: not a SEGREP1 manifest")
        if raw.get("version") != FORMAT_VERSION:
            raise ParseError(f"{mpath}: unsupported version {raw.get('version')!r}")
        entries = tuple(
            UtteranceEntry(
                u["utterance_id"], int(u["n_frames"]), u["file"],
                int(u.get("data_offset", HEADER_BYTES)), int(u["size"]),
            )
            for u in raw["utterances"]
        )
        known = {"format", "version", "model_id", "n_layers", "dim", "frame_hop", "utterances"}
        self.manifest = RepManifest(
            model_id=raw["model_id"],
            n_layers=int(raw["n_layers"]),
            dim=int(raw["dim"]),
            frame_hop=float(raw["frame_hop"]),
            utterances=entries,
            extra={k: v for k, v in raw.items() if k not in known},
        )
        self._by_id = {e.utterance_id: e for e in entries}
        self._checked: set[str] = set()

    @property
    def utterance_ids(self) -> list[str]:
        return [e.utterance_id for e in self.manifest.utterances]

    def n_frames(self, utterance_id: str) -> int:
        return self._entry(utterance_id).n_frames

    def _entry(self, utterance_id: str) -> UtteranceEntry:
        if utterance_id not in self._by_id:
            raise ValidationError(f"utterance {utterance_id!r} not in manifest")
        return self._by_id[utterance_id]

    def _check_header(self, entry: UtteranceEntry) -> Path:
        path = self.dir / entry.file
        if entry.utterance_id in self._checked:
            return path
        if not path.is_file():
            raise ParseError(f"{path}: missing payload file")
        with open(path, "rb") as fh:
            head = fh.read(HEADER_BYTES)
        if len(head) < HEADER_BYTES:
            raise ParseError(f"{path}: truncated file (no complete header)")
        if head[:8] != MAGIC:
            raise ParseError(f"{path}: bad magic {head[:8]!r}")
        bom, version, n_layers, n_frames, dim = struct.unpack("<HHIII", head[8:24])
        if bom != BYTE_ORDER_MARK:
            raise ParseError(f"{path}: endianness marker mismatch (0x{bom:04x})")
        if version != FORMAT_VERSION:
            raise ParseError(f"{path}: unsupported payload version {version}")
        if n_layers != self.manifest.n_layers:
            raise ParseError(
                f"{path}: layer count mismatch (manifest {self.manifest.n_layers}, "
                f"payload {n_layers})"
            )
        if dim != self.manifest.dim:
            raise ParseError(
                f"{path}: dim mismatch (manifest {self.manifest.dim}, payload {dim})"
            )
        if n_frames != entry.n_frames:
            raise ParseError(
                f"{path}: frame count mismatch (manifest {entry.n_frames}, "
                f"payload {n_frames})"
            )
        actual = path.stat().st_size
        expected = _expected_size(n_layers, n_frames, dim)
        if actual != expected:
            raise ParseError(
                f"{path}: truncated file (expected {expected} bytes, found {actual})"
            )
        self._checked.add(entry.utterance_id)
        return path

    def layer_matrix(self, utterance_id: str, layer: int) -> np.ndarray:
        """The (n_frames, dim) float32 matrix for one layer of one utterance."""
        entry = self._entry(utterance_id)
        if not 0 <= layer < self.manifest.n_layers:
            raise ValidationError(
                f"layer {layer} outside 0..{self.manifest.n_layers - 1}"
            )
        path = self._check_header(entry)
        count = entry.n_frames * self.manifest.dim
        offset = entry.data_offset + 4 * layer * count
        with open(path, "rb") as fh:
            fh.seek(offset)
            buf = fh.read(4 * count)
        mat = np.frombuffer(buf, dtype="<f4").reshape(entry.n_frames, self.manifest.dim)
        if not np.all(np.isfinite(mat)):
            raise ValidationError(f"{path}: non-finite values in layer {layer}")
        return mat.astype(np.float32)

    def read_all(self, utterance_id: str) -> np.ndarray:
        entry = self._entry(utterance_id)
        path = self._check_header(entry)
        with open(path, "rb") as fh:
            fh.seek(entry.data_offset)
            buf = fh.read()
        return (
            np.frombuffer(buf, dtype="<f4")
            .reshape(self.manifest.n_layers, entry.n_frames, self.manifest.dim)
            .astype(np.float32)
        )

    def validate(self) -> None:
        """Check header/size/shape consistency of every payload file."""
        for entry in self.manifest.utterances:
            self._check_header(entry)

    def __iter__(self) -> Iterator[str]:
        return iter(self.utterance_ids)


def read_segrep(directory: str | Path) -> SegrepStore:
    return SegrepStore(directory)


@dataclass(frozen=True)
class SegmentVector:
    token: PhoneToken
    layer: int
    v: np.ndarray


def covered_frames(n_frames: int, hop: float, t_start: float, t_end: float) -> np.ndarray:
    """Indices of frames whose centers (k + 0.5) * hop fall in [t_start, t_end)."""
    centers = (np.arange(n_frames) + 0.5) * hop
    return np.flatnonzero((centers >= t_start) & (centers < t_end))


def segment_vector(matrix: np.ndarray, token: PhoneToken, hop: float,
                   layer: int = 0) -> SegmentVector:
    """Mean of the frame rows covered by the token span.

    Raises if the span covers no frame center.
    """
    idx = covered_frames(matrix.shape[0], hop, token.t_start, token.t_end)
    if idx.size == 0:
        raise ValidationError(
            f"token {token.token_id} [{token.phone}]: segment shorter than frame hop"
        )
    return SegmentVector(token, layer, matrix[idx].mean(axis=0))


def segment_matrix(store: SegrepStore, tokens: Sequence[PhoneToken], layer: int) -> np.ndarray:
    """Stack segment vectors for ``tokens`` at one layer into an (n, dim) matrix."""
    rows = []
    cache: dict[str, np.ndarray] = {}
    for tok in tokens:
        if tok.utterance_id not in cache:
            cache[tok.utterance_id] = store.layer_matrix(tok.utterance_id, layer)
        rows.append(
            segment_vector(cache[tok.utterance_id], tok, store.manifest.frame_hop, layer).v
        )
    return np.vstack(rows) if rows else np.zeros((0, store.manifest.dim))
