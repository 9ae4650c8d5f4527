"""Per-frame phonological feature probability model.

A compact feedforward network over context-stacked MFCC frames with one
sigmoid head per feature. Replaces a recurrent frame classifier at desk scale:
the +/- context window stands in for temporal context, the heads share one
hidden representation, and training uses Adam with early stopping on a held
out 20% validation split. Features whose training labels are single-class are
pinned to the constant predictor and excluded from gradient updates.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ParseError, ValidationError
from ..ingest import PhoneToken
from ..mfcc import FrameMatrix
from .mapping import FEATURE_NAMES, N_FEATURES

_MAGIC = b"SEGFEAT1"
_BYTE_ORDER_MARK = 0x0102
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class FeatureModelConfig:
    """Training knobs. With full-batch updates (batch_size >= n_frames) and a
    learning rate at or below ~3e-4 the epoch training-loss trace is
    non-increasing on standardized inputs; larger rates trade monotonicity for
    speed."""

    hidden: int = 128
    context: int = 5
    learning_rate: float = 1e-3
    max_epochs: int = 30
    patience: int = 5
    batch_size: int = 256
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.hidden < 1 or self.context < 0:
            raise ValidationError("hidden >= 1 and context >= 0 required")
        if not 0 < self.val_fraction < 1:
            raise ValidationError("val_fraction must lie in (0, 1)")


def stack_context(frames: np.ndarray, context: int) -> np.ndarray:
    """Concatenate each frame with +/- context neighbours (edge-replicated)."""
    if context == 0:
        return np.asarray(frames, dtype=float)
    x = np.asarray(frames, dtype=float)
    padded = np.pad(x, ((context, context), (0, 0)), mode="edge")
    n = x.shape[0]
    return np.hstack([padded[k:k + n] for k in range(2 * context + 1)])


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _bce_from_logits(z: np.ndarray, y: np.ndarray, mask: np.ndarray) -> float:
    # numerically stable mean-over-frames, sum-over-features cross-entropy
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    return float(per[:, mask].sum(axis=1).mean()) if mask.any() else 0.0


class FeatureModel:
    """Frame MFCCs in, 26 independent feature probabilities out."""

    def __init__(self, n_coeffs: int, context: int, W1: np.ndarray, b1: np.ndarray,
                 W2: np.ndarray, b2: np.ndarray, mu: np.ndarray, sd: np.ndarray,
                 pinned: np.ndarray, feature_names: Sequence[str] = FEATURE_NAMES):
        self.n_coeffs = int(n_coeffs)
        self.context = int(context)
        self.W1, self.b1, self.W2, self.b2 = W1, b1, W2, b2
        self.mu, self.sd = mu, sd
        self.pinned = pinned.astype(bool)
        self.feature_names = tuple(feature_names)

    @property
    def n_inputs(self) -> int:
        return (2 * self.context + 1) * self.n_coeffs

    def _forward(self, frames: np.ndarray) -> np.ndarray:
        x = (np.asarray(frames, dtype=float) - self.mu) / self.sd
        xs = stack_context(x, self.context)
        h = np.maximum(xs @ self.W1 + self.b1, 0.0)
        return h @ self.W2 + self.b2

    def predict_proba(self, frames: np.ndarray) -> np.ndarray:
        """Per-frame feature probabilities, shape (n_frames, 26)."""
        if frames.shape[0] == 0:
            return np.zeros((0, len(self.feature_names)))
        if frames.shape[1] != self.n_coeffs:
            raise ValidationError(
                f"expected {self.n_coeffs} coefficients per frame, got {frames.shape[1]}"
            )
        return _sigmoid(self._forward(frames))

    # -- serialization: little-endian float32, row-major, shape-checked ------

    def save(self, path: str | Path) -> None:
        names_blob = "\n".join(self.feature_names).encode("utf-8")
        parts = [
            _MAGIC,
            struct.pack("<HH", _BYTE_ORDER_MARK, _FORMAT_VERSION),
            struct.pack("<IIII", self.n_coeffs, self.context, self.W1.shape[1],
                        len(self.feature_names)),
            struct.pack("<I", len(names_blob)),
            names_blob,
        ]
        for arr in (self.mu, self.sd, self.W1, self.b1, self.W2, self.b2):
            parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        parts.append(self.pinned.astype(np.uint8).tobytes())
        Path(path).write_bytes(b"".join(parts))

    @classmethod
    def load(cls, path: str | Path) -> "FeatureModel":
        raw = Path(path).read_bytes()
        if raw[:8] != _MAGIC:
            raise ParseError(f"{path}: bad magic {raw[:8]!r}")
        bom, version = struct.unpack_from("<HH", raw, 8)
        if bom != _BYTE_ORDER_MARK:
            raise ParseError(f"{path}: byte-order marker mismatch (0x{bom:04x})")
        if version != _FORMAT_VERSION:
            raise ParseError(f"{path}: unsupported model format version {version}")
        n_coeffs, context, hidden, n_feat = struct.unpack_from("<IIII", raw, 12)
        (blob_len,) = struct.unpack_from("<I", raw, 28)
        offset = 32
        names = raw[offset:offset + blob_len].decode("utf-8").split("\n")
        if len(names) != n_feat:
            raise ParseError(f"{path}: feature name count mismatch")
        offset += blob_len
        n_in = (2 * context + 1) * n_coeffs

        def take(shape: tuple[int, ...]) -> np.ndarray:
            nonlocal offset
            count = int(np.prod(shape))
            end = offset + 4 * count
            if end > len(raw):
                raise ParseError(f"{path}: truncated model file")
            arr = np.frombuffer(raw[offset:end], dtype="<f4").astype(float).reshape(shape)
            offset = end
            return arr

        mu = take((n_coeffs,))
        sd = take((n_coeffs,))
        W1 = take((n_in, hidden))
        b1 = take((hidden,))
        W2 = take((hidden, n_feat))
        b2 = take((n_feat,))
        pinned = np.frombuffer(raw[offset:offset + n_feat], dtype=np.uint8)
        if pinned.shape[0] != n_feat:
            raise ParseError(f"{path}: truncated model file")
        return cls(n_coeffs, context, W1, b1, W2, b2, mu, sd, pinned.astype(bool), names)


@dataclass
class TrainResult:
    model: FeatureModel
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1


def train_feature_model(
    frame_sets: Sequence[np.ndarray | FrameMatrix],
    label_sets: Sequence[np.ndarray],
    cfg: FeatureModelConfig = FeatureModelConfig(),
) -> TrainResult:
    """Train the frame classifier on (frames, labels) pairs.

    Frames and labels are concatenated after per-utterance context stacking;
    a random 80/20 frame split (seeded) provides the validation set for early
    stopping. Training stops at ``max_epochs`` or when validation loss has not
    improved for ``patience`` epochs; the best-validation parameters are kept.
    """
    if len(frame_sets) != len(label_sets):
        raise ValidationError("frame/label set counts differ")
    if len(frame_sets) == 0:
        raise ValidationError("no training data")
    xs, ys = [], []
    n_coeffs = None
    for frames, labels in zip(frame_sets, label_sets):
        data = frames.data if isinstance(frames, FrameMatrix) else np.asarray(frames, float)
        labels = np.asarray(labels)
        if data.shape[0] != labels.shape[0]:
            raise ValidationError("frames and labels disagree on frame count")
        if labels.shape[1] != N_FEATURES:
            raise ValidationError(f"labels must have {N_FEATURES} columns")
        if data.shape[0] == 0:
            continue
        if n_coeffs is None:
            n_coeffs = data.shape[1]
        xs.append(data)
        ys.append(labels.astype(float))
    if not xs:
        raise ValidationError("all frame sets are empty")

    raw = np.vstack(xs)
    mu = raw.mean(axis=0)
    sd = np.maximum(raw.std(axis=0), 1e-8)

    stacked = [stack_context((x - mu) / sd, cfg.context) for x in xs]
    X = np.vstack(stacked)
    Y = np.vstack(ys)
    n = X.shape[0]

    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(n)
    n_val = max(1, int(round(cfg.val_fraction * n)))
    val_idx, train_idx = order[:n_val], order[n_val:]
    if train_idx.size == 0:
        raise ValidationError("too few frames for an 80/20 split")
    Xt, Yt = X[train_idx], Y[train_idx]
    Xv, Yv = X[val_idx], Y[val_idx]

    pinned = np.zeros(N_FEATURES, dtype=bool)
    pinned_logit = np.zeros(N_FEATURES)
    for f in range(N_FEATURES):
        rate = Yt[:, f].mean()
        if rate in (0.0, 1.0):
            pinned[f] = True
            p = min(max(rate, 1e-4), 1.0 - 1e-4)
            pinned_logit[f] = float(np.log(p / (1.0 - p)))
            warnings.warn(
                f"feature {FEATURE_NAMES[f]!r} has single-class training labels; "
                "its head is pinned to the constant predictor",
                stacklevel=2,
            )
    active = ~pinned

    n_in = X.shape[1]
    W1 = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_in, cfg.hidden))
    b1 = np.zeros(cfg.hidden)
    W2 = rng.normal(0.0, 1.0 / np.sqrt(cfg.hidden), size=(cfg.hidden, N_FEATURES))
    b2 = np.zeros(N_FEATURES)
    W2[:, pinned] = 0.0
    b2[pinned] = pinned_logit[pinned]

    params = [W1, b1, W2, b2]
    m_state = [np.zeros_like(p) for p in params]
    v_state = [np.zeros_like(p) for p in params]
    beta1, beta2, eps_adam = 0.9, 0.999, 1e-8
    step = 0

    def forward_logits(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        h = np.maximum(x @ W1 + b1, 0.0)
        return h, h @ W2 + b2

    def loss_on(x: np.ndarray, y: np.ndarray) -> float:
        _, z = forward_logits(x)
        return _bce_from_logits(z, y, active)

    result = TrainResult(model=None)  # type: ignore[arg-type]
    best_val = np.inf
    best_params = [p.copy() for p in params]
    best_epoch = -1
    stall = 0

    n_train = Xt.shape[0]
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n_train)
        for start in range(0, n_train, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = Xt[idx], Yt[idx]
            h, z = forward_logits(xb)
            dz = (_sigmoid(z) - yb) / xb.shape[0]
            dz[:, pinned] = 0.0
            gW2 = h.T @ dz
            gb2 = dz.sum(axis=0)
            dh = dz @ W2.T
            dh[h <= 0.0] = 0.0
            gW1 = xb.T @ dh
            gb1 = dh.sum(axis=0)
            step += 1
            for p, g, m_, v_ in zip(params, [gW1, gb1, gW2, gb2], m_state, v_state):
                m_ += (1 - beta1) * (g - m_)
                v_ += (1 - beta2) * (g * g - v_)
                m_hat = m_ / (1 - beta1 ** step)
                v_hat = v_ / (1 - beta2 ** step)
                p -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + eps_adam)
            W2[:, pinned] = 0.0
            b2[pinned] = pinned_logit[pinned]

        tr = loss_on(Xt, Yt)
        vl = loss_on(Xv, Yv)
        result.train_loss.append(tr)
        result.val_loss.append(vl)
        if vl < best_val - 1e-12:
            best_val = vl
            best_params = [p.copy() for p in params]
            best_epoch = epoch
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                break

    W1, b1, W2, b2 = best_params
    result.best_epoch = best_epoch
    result.model = FeatureModel(
        n_coeffs=int(n_coeffs), context=cfg.context, W1=W1, b1=b1, W2=W2, b2=b2,
        mu=mu, sd=sd, pinned=pinned,
    )
    return result


@dataclass(frozen=True)
class SegmentFeatureProfile:
    """Frame-averaged feature probabilities for one token."""

    token: PhoneToken
    probs: np.ndarray


def average_profiles(
    probs: np.ndarray,
    frame_times: np.ndarray,
    tokens: Sequence[PhoneToken],
) -> list[SegmentFeatureProfile]:
    """Average per-frame probabilities over each token's [t_start, t_end) span.

    A token covering no frame center is an error.
    """
    times = np.asarray(frame_times, dtype=float)
    out = []
    for tok in tokens:
        covered = (times >= tok.t_start) & (times < tok.t_end)
        if not covered.any():
            raise ValidationError(
                f"token {tok.token_id} [{tok.phone}]: segment shorter than frame hop"
            )
        out.append(SegmentFeatureProfile(tok, probs[covered].mean(axis=0)))
    return out


def score_segments(
    model: FeatureModel,
    frames: FrameMatrix,
    tokens: Sequence[PhoneToken],
) -> list[SegmentFeatureProfile]:
    """Frame-averaged model outputs per token."""
    return average_profiles(model.predict_proba(frames.data), frames.frame_times, tokens)


@dataclass(frozen=True)
class FeatureScore:
    feature: str
    accuracy: float
    f1: float


def binary_scores(pred: np.ndarray, true: np.ndarray) -> tuple[float, float]:
    """(accuracy, F1) in percent for one feature's boolean predictions.

    F1 is 2TP/(2TP+FP+FN); with no positives anywhere (TP=FP=FN=0) it is 100
    by convention.
    """
    pred = np.asarray(pred, dtype=bool)
    true = np.asarray(true, dtype=bool)
    tp = float(np.sum(pred & true))
    fp = float(np.sum(pred & ~true))
    fn = float(np.sum(~pred & true))
    acc = 100.0 * float(np.mean(pred == true))
    denom = 2 * tp + fp + fn
    f1 = 100.0 if denom == 0 else 100.0 * 2 * tp / denom
    return acc, f1


def evaluate_features(
    model: FeatureModel,
    frame_sets: Sequence[np.ndarray | FrameMatrix],
    label_sets: Sequence[np.ndarray],
    threshold: float = 0.5,
) -> list[FeatureScore]:
    """Per-feature accuracy and F1 (percent) on held-out frames.

    Predictions are thresholded at 0.5. F1 is 2TP/(2TP+FP+FN); a feature with
    no positives anywhere (TP=FP=FN=0) scores 100 by convention.
    """
    preds, labels = [], []
    for frames, y in zip(frame_sets, label_sets):
        data = frames.data if isinstance(frames, FrameMatrix) else np.asarray(frames, float)
        if data.shape[0] == 0:
            continue
        preds.append(model.predict_proba(data) >= threshold)
        labels.append(np.asarray(y, dtype=bool))
    if not preds:
        raise ValidationError("no evaluation frames")
    P = np.vstack(preds)
    Y = np.vstack(labels)
    scores = []
    for f, name in enumerate(model.feature_names):
        acc, f1 = binary_scores(P[:, f], Y[:, f])
        scores.append(FeatureScore(name, acc, f1))
    return scores
