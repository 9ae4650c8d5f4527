"""Run configuration: one JSON file drives the whole pipeline.

Schema (paths may be relative to the config file's directory)::

    {
      "seed": 123,
      "eps_t": 0.010,
      "tiers": {"phones": "phones", "words": "words"},
      "targets": ["ʋ", "ɾ", "ʈ"],
      "pairs": {"ʋ": "v", "ɾ": "ɹ", "ʈ": "t"},
      "paths": {
        "audio": "analysis/audio",
        "textgrids": "analysis/textgrids",
        "ratings": "analysis/ratings.tsv",
        "segreps": {"w2v": "analysis/segrep_w2v"},
        "baselines": {
          "AE": {"audio": "...", "textgrids": "...", "segreps": {"w2v": "..."}},
          "IE": {"audio": "...", "textgrids": "...", "segreps": {"w2v": "..."}}
        },
        "output": "out"
      },
      "mfcc": {...}, "phonet": {...}, "probe": {...}, "cca": {...},
      "regression": {...}
    }

The config hash covers everything except the output path (which cannot affect
results), so the same corpus and settings always stamp the same hash.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .mfcc import MfccConfig
from .phonfeat import TARGET_PAIRS, FeatureModelConfig, normalize_phone
from .probe import ProbeConfig
from .svcca import CcaConfig


@dataclass(frozen=True)
class BaselineSource:
    variety: str
    audio_dir: Path
    textgrid_dir: Path
    segreps: dict[str, Path]


@dataclass
class RunConfig:
    seed: int
    eps_t: float
    phone_tier: str
    word_tier: str
    targets: list[str]
    pairs: dict[str, str]  # non-native segment -> native counterpart
    audio_dir: Path
    textgrid_dir: Path
    ratings_path: Path
    segreps: dict[str, Path]
    baselines: dict[str, BaselineSource]
    output_dir: Path
    mfcc: MfccConfig
    phonet: FeatureModelConfig
    probe_kinds: tuple[str, ...]
    probe_grid_size: int
    probe_grid_min_ratio: float
    probe_cv_folds: int
    probe_tol: float
    cca: CcaConfig
    cca_baseline_pooled: bool
    reg_interactions: bool
    reg_standardize: bool
    reg_alpha: float
    reg_cap: int | None
    reg_layer_from: str
    config_hash: str = ""
    raw: dict = field(default_factory=dict, repr=False)

    def probe_config(self, kind: str) -> ProbeConfig:
        return ProbeConfig(
            probe_kind=kind,
            grid_size=self.probe_grid_size,
            grid_min_ratio=self.probe_grid_min_ratio,
            cv_folds=self.probe_cv_folds,
            seed=self.seed,
            tol=self.probe_tol,
        )

    def stage_dir(self, stage: str) -> Path:
        return self.output_dir / stage


def _need(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"config missing {where}.{key}" if where else f"config missing {key}")
    return d[key]


def _resolve(base: Path, p: str) -> Path:
    path = Path(p)
    return path if path.is_absolute() else (base / path).resolve()


def _check_dir(path: Path, what: str) -> Path:
    if not path.is_dir():
        raise ConfigError(f"{what} directory does not exist: {path}")
    return path


def _check_file(path: Path, what: str) -> Path:
    if not path.is_file():
        raise ConfigError(f"{what} file does not exist: {path}")
    return path


def config_hash_of(raw: dict) -> str:
    scrubbed = copy.deepcopy(raw)
    scrubbed.setdefault("paths", {})["output"] = ""
    blob = json.dumps(scrubbed, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def load_config(path: str | Path, seed_override: int | None = None) -> RunConfig:
    """Parse and validate a run configuration file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    base = path.parent.resolve()

    if seed_override is not None:
        raw["seed"] = int(seed_override)
    seed = int(raw.get("seed", 0))
    eps_t = float(raw.get("eps_t", 0.010))
    tiers = raw.get("tiers", {})
    phone_tier = tiers.get("phones", "phones")
    word_tier = tiers.get("words", "words")

    targets = [normalize_phone(t) for t in _need(raw, "targets", "")]
    if not targets:
        raise ConfigError("targets must be non-empty")
    pairs = {normalize_phone(k): normalize_phone(v)
             for k, v in _need(raw, "pairs", "").items()}
    for t in targets:
        if t not in pairs:
            raise ConfigError(f"pair mapping does not cover target segment {t!r}")
        if t not in TARGET_PAIRS:
            raise ConfigError(
                f"target segment {t!r} has no registered feature list; "
                f"known segments: {sorted(TARGET_PAIRS)}"
            )
        if TARGET_PAIRS[t].native != pairs[t]:
            raise ConfigError(
                f"pair mapping for {t!r} names {pairs[t]!r}; the registered "
                f"native counterpart is {TARGET_PAIRS[t].native!r}"
            )

    paths = _need(raw, "paths", "")
    audio_dir = _check_dir(_resolve(base, _need(paths, "audio", "paths")), "audio")
    textgrid_dir = _check_dir(_resolve(base, _need(paths, "textgrids", "paths")), "textgrids")
    ratings_path = _check_file(_resolve(base, _need(paths, "ratings", "paths")), "ratings")
    segreps = {
        kind: _check_dir(_resolve(base, p), f"segrep[{kind}]")
        for kind, p in sorted(_need(paths, "segreps", "paths").items())
    }
    if not segreps:
        raise ConfigError("paths.segreps must name at least one representation")

    baselines: dict[str, BaselineSource] = {}
    raw_baselines = _need(paths, "baselines", "paths")
    for variety in ("AE", "IE"):
        if variety not in raw_baselines:
            raise ConfigError(f"paths.baselines must define {variety}")
        b = raw_baselines[variety]
        b_segreps = {
            kind: _check_dir(_resolve(base, p), f"baselines.{variety}.segrep[{kind}]")
            for kind, p in sorted(_need(b, "segreps", f"paths.baselines.{variety}").items())
        }
        if set(b_segreps) != set(segreps):
            raise ConfigError(
                f"baselines.{variety} must provide the same representation kinds "
                f"as the analysis set ({sorted(segreps)})"
            )
        baselines[variety] = BaselineSource(
            variety=variety,
            audio_dir=_check_dir(
                _resolve(base, _need(b, "audio", f"paths.baselines.{variety}")),
                f"baselines.{variety}.audio"),
            textgrid_dir=_check_dir(
                _resolve(base, _need(b, "textgrids", f"paths.baselines.{variety}")),
                f"baselines.{variety}.textgrids"),
            segreps=b_segreps,
        )

    output_dir = _resolve(base, _need(paths, "output", "paths"))

    try:
        mfcc_cfg = MfccConfig(**raw.get("mfcc", {}))
        phonet_raw = dict(raw.get("phonet", {}))
        phonet_raw.setdefault("seed", seed)
        phonet_cfg = FeatureModelConfig(**phonet_raw)
        cca_raw = dict(raw.get("cca", {}))
        baseline_pooled = bool(cca_raw.pop("baseline_pooled", True))
        cca_cfg = CcaConfig(**cca_raw)
    except TypeError as e:
        raise ConfigError(f"bad config section: {e}") from None

    probe_raw = raw.get("probe", {})
    probe_kinds = tuple(probe_raw.get("kinds", ["logreg", "svm"]))
    for kind in probe_kinds:
        if kind not in ("logreg", "svm"):
            raise ConfigError(f"unknown probe kind {kind!r}")

    reg_raw = raw.get("regression", {})
    layer_from = reg_raw.get("layer_from", "logreg")
    if layer_from not in probe_kinds:
        raise ConfigError(
            f"regression.layer_from={layer_from!r} is not one of the probe kinds"
        )
    cap = reg_raw.get("cap", 2000)

    return RunConfig(
        seed=seed,
        eps_t=eps_t,
        phone_tier=phone_tier,
        word_tier=word_tier,
        targets=targets,
        pairs=pairs,
        audio_dir=audio_dir,
        textgrid_dir=textgrid_dir,
        ratings_path=ratings_path,
        segreps=segreps,
        baselines=baselines,
        output_dir=output_dir,
        mfcc=mfcc_cfg,
        phonet=phonet_cfg,
        probe_kinds=probe_kinds,
        probe_grid_size=int(probe_raw.get("grid_size", 20)),
        probe_grid_min_ratio=float(probe_raw.get("grid_min_ratio", 1e-4)),
        probe_cv_folds=int(probe_raw.get("cv_folds", 5)),
        probe_tol=float(probe_raw.get("tol", 1e-6)),
        cca=cca_cfg,
        cca_baseline_pooled=baseline_pooled,
        reg_interactions=bool(reg_raw.get("interactions", True)),
        reg_standardize=bool(reg_raw.get("standardize", True)),
        reg_alpha=float(reg_raw.get("alpha", 0.05)),
        reg_cap=None if cap in (None, "none") else int(cap),
        reg_layer_from=layer_from,
        config_hash=config_hash_of(raw),
        raw=raw,
    )
