"""Deterministic synthetic fixture corpus for end-to-end runs.

Generates a desk-scale corpus with the full directory layout the pipeline
expects: analysis audio + TextGrids + ratings, AE/IE baseline audio +
TextGrids, SEGREP1 representation stores for every set, and a ready-to-run
config file. Representations carry a planted accent signal in one layer per
representation kind, and an accent-graded axis that places strong-accent
tokens near the IE baseline cluster and no/negligible tokens near the AE
cluster, so probes, correlations and the distance regression all have
structure to find. Everything derives from the seed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import Interval, UtteranceAlignment, write_textgrid
from .mfcc import write_wav
from .repstore import SegrepWriter

SAMPLE_RATE = 16000
FRAME_HOP = 0.02

TARGETS = ("ʋ", "ɾ", "ʈ")  # ʋ ɾ ʈ
NATIVES = {"ʋ": "v", "ɾ": "ɹ", "ʈ": "t"}  # v ɹ t
FILLERS = ("a", "i", "f", "p", "s", "m", "l", "h", "ow", "aː", "ʔ")

# representation geometry: 3 block dims per target segment plus one
# accent-graded axis shared by analysis tokens and the baseline banks; the
# signal is graded along a fixed direction per segment so accent classes stay
# linearly separable for the probes while the distance geometry overlaps
# smoothly (no quasi-complete separation in the regression)
SEG_BLOCK = {"ʋ": (0, 1, 2), "ɾ": (3, 4, 5), "ʈ": (6, 7, 8)}
GRADE_DIM = 9
REP_DIM = 10
REP_LAYERS = 3
SIGNAL_LAYER = {"w2v": 1, "wavlm": 2}
BLOCK_GAIN = 1.8
GRADE_GAIN = 1.6
TOKEN_JITTER = 1.5  # token-level noise keeps classes overlapping

_PHONE_TONES = {}


def _phone_tone(phone: str) -> float:
    if phone not in _PHONE_TONES:
        h = sum(ord(c) * (i + 7) for i, c in enumerate(phone))
        _PHONE_TONES[phone] = 300.0 + (h % 40) * 65.0
    return _PHONE_TONES[phone]


@dataclass
class _Utterance:
    utterance_id: str
    alignment: UtteranceAlignment
    duration: float


def _build_utterance(utt_id: str, rng: np.random.Generator, targets_per_pos: list[str]) -> _Utterance:
    """Words of 3 phones each; each requested target placed initial, medial
    and final across successive words."""
    t = 0.12  # leading silence
    phones: list[Interval] = [Interval("", 0.0, t)]
    words: list[Interval] = [Interval("", 0.0, t)]
    word_idx = 0
    for target in targets_per_pos:
        for pos in range(3):
            slots = [rng.choice(FILLERS), rng.choice(FILLERS), rng.choice(FILLERS)]
            slots[pos] = target
            w_start = t
            for ph in slots:
                dur = float(rng.uniform(0.08, 0.14))
                phones.append(Interval(str(ph), t, t + dur))
                t += dur
            words.append(Interval(f"word{word_idx}", w_start, t))
            word_idx += 1
            gap = float(rng.uniform(0.05, 0.09))
            phones.append(Interval("", t, t + gap))
            words.append(Interval("", t, t + gap))
            t += gap
    alignment = UtteranceAlignment(utt_id, tuple(phones), tuple(words))
    return _Utterance(utt_id, alignment, t)


def _synth_audio(utt: _Utterance, rng: np.random.Generator) -> np.ndarray:
    n = int(round(utt.duration * SAMPLE_RATE))
    signal = rng.normal(0.0, 0.01, size=n)
    tt = np.arange(n) / SAMPLE_RATE
    for iv in utt.alignment.phone_tier:
        if not iv.label:
            continue
        sel = (tt >= iv.t_start) & (tt < iv.t_end)
        freq = _phone_tone(iv.label)
        signal[sel] += 0.25 * np.sin(2 * np.pi * freq * tt[sel])
        signal[sel] += 0.1 * np.sin(2 * np.pi * 2.3 * freq * tt[sel])
    return np.clip(signal, -0.9, 0.9)


def _rep_frames(utt: _Utterance, rng: np.random.Generator, kind: str,
                accent_of: dict[str, int] | None, variety: str | None) -> np.ndarray:
    """(layers, frames, dim) with the planted signal in SIGNAL_LAYER[kind]."""
    n_frames = int(utt.duration / FRAME_HOP)
    layers = rng.normal(0.0, 1.0, size=(REP_LAYERS, n_frames, REP_DIM))
    centers = (np.arange(n_frames) + 0.5) * FRAME_HOP
    sig = SIGNAL_LAYER[kind]
    for iv in utt.alignment.phone_tier:
        if not iv.label:
            continue
        if variety is None:
            if iv.label not in SEG_BLOCK or accent_of is None:
                continue
            block = SEG_BLOCK[iv.label]
            accent = accent_of[utt.utterance_id]
            grade = (accent - 1) * GRADE_GAIN  # -2, 0, +2
        elif variety == "AE":
            category = {v: k for k, v in NATIVES.items()}.get(iv.label)
            if category is None:
                continue
            block = SEG_BLOCK[category]
            accent = 0
            grade = -GRADE_GAIN
        else:  # IE
            if iv.label not in SEG_BLOCK:
                continue
            block = SEG_BLOCK[iv.label]
            accent = 2
            grade = GRADE_GAIN
        sel = (centers >= iv.t_start) & (centers < iv.t_end)
        level = (accent - 1) * BLOCK_GAIN + TOKEN_JITTER * rng.normal()
        for dim in block:
            layers[sig, sel, dim] += level
        layers[sig, sel, GRADE_DIM] += grade + TOKEN_JITTER * rng.normal()
    return layers.astype(np.float32)


def build_fixture_corpus(
    root: str | Path,
    seed: int = 20240601,
    n_analysis: int = 24,
    n_baseline: int = 8,
    rep_kinds: tuple[str, ...] = ("w2v", "wavlm"),
) -> Path:
    """Write the fixture corpus under ``root``; returns the config file path."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    for kind in rep_kinds:
        if kind not in SIGNAL_LAYER:
            raise ValueError(f"no planted layer defined for representation {kind!r}")

    # ---- analysis set: every utterance carries each target at all positions
    ana_dir = root / "analysis"
    (ana_dir / "audio").mkdir(parents=True, exist_ok=True)
    (ana_dir / "textgrids").mkdir(parents=True, exist_ok=True)
    accent_of: dict[str, int] = {}
    ratings_rows = []
    utterances: list[_Utterance] = []
    rating_menu = {
        0: [(1, 2, 3), (1, 1, 2), (1, 3, 4), (1, 2, 2)],
        1: [(2, 3, 3), (2, 2, 4), (2, 3, 2), (2, 4, 3)],
        2: [(3, 3, 4), (4, 4, 4), (3, 4, 3), (3, 3, 3)],
    }
    for i in range(n_analysis):
        utt_id = f"fae{i:03d}"
        accent = i % 3
        accent_of[utt_id] = accent
        utt = _build_utterance(utt_id, rng, list(TARGETS))
        utterances.append(utt)
        write_textgrid(utt.alignment, ana_dir / "textgrids" / f"{utt_id}.TextGrid")
        write_wav(ana_dir / "audio" / f"{utt_id}.wav", _synth_audio(utt, rng), SAMPLE_RATE)
        menu = rating_menu[accent]
        ratings_rows.append((utt_id, *menu[int(rng.integers(len(menu)))]))
    lines = ["utterance_id\trating1\trating2\trating3"]
    lines += ["\t".join(str(c) for c in row) for row in ratings_rows]
    (ana_dir / "ratings.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    for kind in rep_kinds:
        with SegrepWriter(ana_dir / f"segrep_{kind}", model_id=f"synthetic-{kind}",
                          n_layers=REP_LAYERS, dim=REP_DIM, frame_hop=FRAME_HOP) as w:
            for utt in utterances:
                w.add(utt.utterance_id, _rep_frames(utt, rng, kind, accent_of, None))

    # ---- baseline sets
    for variety in ("AE", "IE"):
        b_dir = root / f"baseline_{variety.lower()}"
        (b_dir / "audio").mkdir(parents=True, exist_ok=True)
        (b_dir / "textgrids").mkdir(parents=True, exist_ok=True)
        b_utts: list[_Utterance] = []
        members = list(NATIVES.values()) if variety == "AE" else list(TARGETS)
        for i in range(n_baseline):
            utt_id = f"{variety.lower()}{i:03d}"
            utt = _build_utterance(utt_id, rng, members)
            b_utts.append(utt)
            write_textgrid(utt.alignment, b_dir / "textgrids" / f"{utt_id}.TextGrid")
            write_wav(b_dir / "audio" / f"{utt_id}.wav", _synth_audio(utt, rng), SAMPLE_RATE)
        for kind in rep_kinds:
            with SegrepWriter(b_dir / f"segrep_{kind}", model_id=f"synthetic-{kind}",
                              n_layers=REP_LAYERS, dim=REP_DIM, frame_hop=FRAME_HOP) as w:
                for utt in b_utts:
                    w.add(utt.utterance_id, _rep_frames(utt, rng, kind, None, variety))

    config = {
        "seed": seed,
        "eps_t": 0.010,
        "tiers": {"phones": "phones", "words": "words"},
        "targets": list(TARGETS),
        "pairs": dict(NATIVES),
        "paths": {
            "audio": "analysis/audio",
            "textgrids": "analysis/textgrids",
            "ratings": "analysis/ratings.tsv",
            "segreps": {k: f"analysis/segrep_{k}" for k in rep_kinds},
            "baselines": {
                v: {
                    "audio": f"baseline_{v.lower()}/audio",
                    "textgrids": f"baseline_{v.lower()}/textgrids",
                    "segreps": {k: f"baseline_{v.lower()}/segrep_{k}" for k in rep_kinds},
                }
                for v in ("AE", "IE")
            },
            "output": "out",
        },
        "mfcc": {"sample_rate": SAMPLE_RATE},
        "phonet": {"hidden": 32, "context": 2, "max_epochs": 4, "batch_size": 256},
        "probe": {"kinds": ["logreg", "svm"], "grid_size": 6,
                  "grid_min_ratio": 1e-2, "cv_folds": 3, "tol": 1e-6},
        "cca": {"variance_kept": 0.99, "ridge": 1e-8, "baseline_pooled": True},
        # mains-only regression: the fixture's per-cell token counts are too
        # small to fit stable interaction terms
        "regression": {"interactions": False, "standardize": True, "alpha": 0.05,
                       "cap": 2000, "layer_from": "logreg"},
    }
    config_path = root / "config.json"
    config_path.write_text(
        json.dumps(config, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    return config_path
