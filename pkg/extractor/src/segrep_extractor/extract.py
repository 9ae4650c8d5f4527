"""Per-layer hidden-state export from pretrained speech encoders.

Loads a checkpoint (hub identifier or local path) with transformers, runs
inference over mono 16-bit PCM WAV files listed in a delimited-text manifest,
and writes the requested layers into a SEGREP1 directory. The extractor does
no alignment or averaging: the frame/segment bookkeeping belongs to the
consumer.

Layer indexing convention (recorded in the output manifest): index k is
``hidden_states[k]`` of the encoder, so 0 is the encoder input (the output of
the convolutional feature extractor projection) and k in 1..n_blocks is the
output of block k.
"""
from __future__ import annotations

import logging
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from transformers import AutoConfig, AutoModel

from .segrep import SegrepDirWriter

log = logging.getLogger("segrep_extractor")


@dataclass
class ExtractJob:
    model_id: str
    audio_manifest: Path
    output_dir: Path
    layers: list[int] | None = None  # None -> every available index
    sample_rate: int = 16000
    normalize: bool = True  # per-utterance zero-mean/unit-variance input
    device: str = "cpu"


@dataclass
class ExtractResult:
    written: list[str] = field(default_factory=list)
    failed: dict[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failed


def read_audio_manifest(path: str | Path) -> list[tuple[str, Path]]:
    """Rows of ``utterance_id<TAB>wav_path`` (or comma-separated); '#' comments."""
    path = Path(path)
    entries: list[tuple[str, Path]] = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        sep = "\t" if "\t" in line else ","
        cells = [c.strip() for c in line.split(sep)]
        if len(cells) < 2:
            raise ValueError(f"{path}:{lineno}: expected 'utterance_id{sep}wav_path'")
        wav = Path(cells[1])
        if not wav.is_absolute():
            wav = (path.parent / wav).resolve()
        entries.append((cells[0], wav))
    if not entries:
        raise ValueError(f"{path}: empty audio manifest")
    return entries


def read_wav_mono(path: Path, expected_rate: int) -> np.ndarray:
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono, got {w.getnchannels()} channels")
        if w.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit PCM")
        if w.getframerate() != expected_rate:
            raise ValueError(
                f"{path}: sample rate {w.getframerate()} != expected {expected_rate}; "
                f"resample before extraction"
            )
        raw = w.readframes(w.getnframes())
    return np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0


def frame_hop_seconds(config) -> float:
    """Analysis hop implied by the convolutional feature extractor strides."""
    strides = getattr(config, "conv_stride", None)
    if strides:
        return float(np.prod(strides)) / float(getattr(config, "sampling_rate", 16000) or 16000)
    return 0.02


def resolve_layers(config, layers: list[int] | None) -> list[int]:
    n_blocks = int(config.num_hidden_layers)
    available = list(range(n_blocks + 1))  # hidden_states indices
    if layers is None:
        return available
    for idx in layers:
        if idx not in available:
            raise ValueError(
                f"layer {idx} outside this checkpoint's range 0..{n_blocks} "
                f"({n_blocks} encoder blocks)"
            )
    return list(layers)


def extract(job: ExtractJob) -> ExtractResult:
    """Run the job; per-file failures are recorded and do not abort the rest."""
    config = AutoConfig.from_pretrained(job.model_id)
    layers = resolve_layers(config, job.layers)
    dim = int(config.hidden_size)
    hop = frame_hop_seconds(config)

    model = AutoModel.from_pretrained(job.model_id)
    model.to(job.device)
    model.eval()

    entries = read_audio_manifest(job.audio_manifest)
    result = ExtractResult()
    extra = {
        "layers": layers,
        "layer_indexing": "hidden_states index: 0 = encoder input, "
                          "k = output of encoder block k",
        "sample_rate": job.sample_rate,
    }
    with SegrepDirWriter(job.output_dir, model_id=str(job.model_id),
                         n_layers=len(layers), dim=dim, frame_hop=hop,
                         extra=extra) as writer:
        for utt_id, wav_path in entries:
            try:
                samples = read_wav_mono(wav_path, job.sample_rate)
                if job.normalize:
                    mu = samples.mean()
                    sd = samples.std()
                    samples = (samples - mu) / (sd if sd > 1e-8 else 1.0)
                with torch.no_grad():
                    inputs = torch.from_numpy(samples[None, :]).to(job.device)
                    out = model(inputs, output_hidden_states=True)
                stack = np.stack(
                    [out.hidden_states[k][0].cpu().numpy() for k in layers], axis=0
                )
                if not np.all(np.isfinite(stack)):
                    raise ValueError("non-finite activations")
                writer.add(utt_id, stack)
                result.written.append(utt_id)
                log.info("extracted %s: %d frames x %d dims x %d layers",
                         utt_id, stack.shape[1], dim, len(layers))
            except Exception as e:  # per-file isolation, job continues
                result.failed[utt_id] = str(e)
                log.error("failed %s: %s", utt_id, e)
    return result
