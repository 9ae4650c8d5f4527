"""MFCC frame features from mono PCM audio.

Pipeline: pre-emphasis, Hamming window, magnitude FFT, mel filterbank on the
power spectrum, floored log, orthonormal DCT-II. Frame centers are reported in
seconds so downstream frame/segment alignment never re-derives the framing.
"""
from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class MfccConfig:
    sample_rate: int = 16000
    window: float = 0.025
    hop: float = 0.010
    n_fft: int = 512
    n_mels: int = 40
    n_coeffs: int = 13
    preemphasis: float = 0.97
    log_floor: float = 1e-10

    def __post_init__(self) -> None:
        if not (self.window >= self.hop > 0):
            raise ValidationError("require window >= hop > 0")
        if self.n_coeffs > self.n_mels:
            raise ValidationError("n_coeffs must not exceed n_mels")
        if self.n_fft < self.window_samples:
            raise ValidationError("n_fft must cover one analysis window")
        if not 0 <= self.preemphasis < 1:
            raise ValidationError("preemphasis must lie in [0, 1)")
        if self.log_floor <= 0:
            raise ValidationError("log_floor must be positive")

    @property
    def window_samples(self) -> int:
        return int(round(self.window * self.sample_rate))

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop * self.sample_rate))


@dataclass(frozen=True)
class FrameMatrix:
    """n_frames x n_coeffs feature matrix plus frame-center times (seconds)."""

    data: np.ndarray
    frame_times: np.ndarray

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]


def hz_to_mel(f):
    # HTK mel scale
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def mel_filterbank(cfg: MfccConfig) -> np.ndarray:
    """Triangular mel filters (n_mels x n_fft//2+1), unit peak, HTK spacing."""
    n_bins = cfg.n_fft // 2 + 1
    f_max = cfg.sample_rate / 2.0
    mel_points = np.linspace(0.0, float(hz_to_mel(f_max)), cfg.n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    bin_freqs = np.arange(n_bins) * cfg.sample_rate / cfg.n_fft
    fb = np.zeros((cfg.n_mels, n_bins))
    for i in range(cfg.n_mels):
        left, center, right = hz_points[i], hz_points[i + 1], hz_points[i + 2]
        rising = (bin_freqs - left) / (center - left)
        falling = (right - bin_freqs) / (right - center)
        fb[i] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def mel_filter_centers_hz(cfg: MfccConfig) -> np.ndarray:
    mel_points = np.linspace(0.0, float(hz_to_mel(cfg.sample_rate / 2.0)), cfg.n_mels + 2)
    return mel_to_hz(mel_points[1:-1])


def dct_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Orthonormal DCT-II basis, rows are output coefficients."""
    n = np.arange(n_in)
    k = np.arange(n_out)[:, None]
    d = np.sqrt(2.0 / n_in) * np.cos(np.pi * (2 * n[None, :] + 1) * k / (2 * n_in))
    d[0] /= np.sqrt(2.0)
    return d


def frame_signal(signal: np.ndarray, cfg: MfccConfig) -> tuple[np.ndarray, np.ndarray]:
    """Slice the signal into overlapping frames; returns (frames, center_times).

    Frame count is floor((N - window)/hop) + 1 for N >= window, else zero.
    """
    w, h = cfg.window_samples, cfg.hop_samples
    n = signal.shape[0]
    if n < w:
        return np.zeros((0, w)), np.zeros(0)
    n_frames = (n - w) // h + 1
    idx = np.arange(w)[None, :] + h * np.arange(n_frames)[:, None]
    centers = (h * np.arange(n_frames) + w / 2.0) / cfg.sample_rate
    return signal[idx], centers


def mel_energies(signal: np.ndarray, cfg: MfccConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame mel filterbank energies (pre-log). Returns (E, frame_times)."""
    signal = np.asarray(signal, dtype=float)
    if signal.ndim != 1:
        raise ValidationError("signal must be mono (1-D)")
    if signal.size and not np.all(np.isfinite(signal)):
        raise ValidationError("signal contains NaN or Inf")
    if cfg.preemphasis > 0 and signal.size:
        signal = np.concatenate([signal[:1], signal[1:] - cfg.preemphasis * signal[:-1]])
    frames, times = frame_signal(signal, cfg)
    if frames.shape[0] == 0:
        return np.zeros((0, cfg.n_mels)), times
    frames = frames * np.hamming(cfg.window_samples)
    spec = np.fft.rfft(frames, n=cfg.n_fft, axis=1)
    power = np.abs(spec) ** 2
    return power @ mel_filterbank(cfg).T, times


def compute_mfcc(signal: np.ndarray, cfg: MfccConfig) -> FrameMatrix:
    """MFCC features for a mono signal at the configured sample rate.

    A signal shorter than one window yields an empty FrameMatrix; NaN input is
    an error.
    """
    energies, times = mel_energies(signal, cfg)
    if energies.shape[0] == 0:
        return FrameMatrix(np.zeros((0, cfg.n_coeffs)), times)
    logmel = np.log(np.maximum(energies, cfg.log_floor))
    coeffs = logmel @ dct_matrix(cfg.n_coeffs, cfg.n_mels).T
    return FrameMatrix(coeffs, times)


def read_wav(path: str | Path) -> tuple[np.ndarray, int]:
    """Read a 16-bit PCM RIFF WAV; returns (samples scaled to [-1, 1], rate)."""
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1:
            raise ValidationError(f"{path}: expected mono audio, got {w.getnchannels()} channels")
        if w.getsampwidth() != 2:
            raise ValidationError(f"{path}: expected 16-bit PCM, got {8 * w.getsampwidth()}-bit")
        rate = w.getframerate()
        raw = w.readframes(w.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(float) / 32768.0
    return samples, rate


def write_wav(path: str | Path, samples: np.ndarray, rate: int) -> None:
    """Write float samples in [-1, 1] as 16-bit PCM WAV."""
    scaled = np.round(np.asarray(samples, dtype=float) * 32768.0)
    pcm = np.clip(scaled, -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(rate)
        w.writeframes(pcm.tobytes())
