"""Pipeline stages and their artifact contracts.

Each stage reads its dependencies' delimited-text artifacts from the output
directory, writes its own into ``<output>/<stage>/``, and finishes by writing
a ``stage.json`` stamp carrying the config hash. A stage whose stamp matches
the current config is skipped unless forced. Dependency checks raise
MissingArtifactError naming the stage that must run first (CLI exit code 2).
"""
from __future__ import annotations

import json
import shutil
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .distreg import (
    BaselineBank,
    DistanceRecord,
    RegressionSpec,
    build_distance_records,
    fit_multinomial,
    project_2d,
)
from .errors import ConfigError, MissingArtifactError, ValidationError
from .ingest import (
    AccentLabel,
    PhoneToken,
    WordPosition,
    extract_tokens,
    merge_ratings,
    parse_textgrid,
    read_ratings,
    tabulate_distribution,
)
from .mfcc import compute_mfcc, read_wav
from .phonfeat import (
    FEATURE_NAMES,
    FeatureMapping,
    FeatureModel,
    average_profiles,
    evaluate_features,
    feature_list,
    label_frames,
    train_feature_model,
    verify_pair_contrasts,
    TARGET_PAIRS,
)
from .probe import ProbeResult, sweep_layers
from .repstore import SegrepStore, segment_matrix
from .svcca import correlate_features, relative_weights
from .tableio import read_table, write_table
from .util import log, parallel_map

STAGE_DEPS: dict[str, tuple[str, ...]] = {
    "ingest": (),
    "mfcc": ("ingest",),
    "phonet-train": ("ingest", "mfcc"),
    "phonet-score": ("ingest", "mfcc", "phonet-train"),
    "probe": ("ingest", "mfcc"),
    "svcca": ("ingest", "probe", "phonet-score"),
    "distance": ("ingest", "probe"),
    "regress": ("ingest", "distance"),
    "report": ("ingest", "phonet-train", "probe", "svcca", "distance", "regress"),
}
STAGE_ORDER = tuple(STAGE_DEPS)


@dataclass
class StageContext:
    cfg: RunConfig
    force: bool = False
    jobs: int = 1


def stamp_path(cfg: RunConfig, stage: str) -> Path:
    return cfg.stage_dir(stage) / "stage.json"


def is_complete(cfg: RunConfig, stage: str) -> bool:
    path = stamp_path(cfg, stage)
    if not path.is_file():
        return False
    try:
        stamp = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        return False
    return stamp.get("config_hash") == cfg.config_hash


def require_deps(cfg: RunConfig, stage: str) -> None:
    for dep in STAGE_DEPS[stage]:
        if not is_complete(cfg, dep):
            raise MissingArtifactError(
                f"stage {stage!r} requires artifacts from stage {dep!r}; "
                f"run 'segprobe {dep}' first"
            )


def run_stage(ctx: StageContext, stage: str) -> bool:
    """Run one stage; returns False when skipped as already complete."""
    if stage not in STAGE_DEPS:
        raise ConfigError(f"unknown stage {stage!r} (stages: {', '.join(STAGE_ORDER)})")
    cfg = ctx.cfg
    if is_complete(cfg, stage) and not ctx.force:
        log.info("stage %s: up to date, skipping", stage)
        return False
    require_deps(cfg, stage)
    out = cfg.stage_dir(stage)
    out.mkdir(parents=True, exist_ok=True)
    log.info("stage %s: running", stage)
    t0 = time.monotonic()
    _STAGE_FUNCS[stage](ctx)
    elapsed = time.monotonic() - t0
    stamp_path(cfg, stage).write_text(
        json.dumps(
            {"stage": stage, "config_hash": cfg.config_hash, "seed": cfg.seed,
             "toolkit_version": __version__},
            sort_keys=True,
        ) + "\n",
        encoding="utf-8",
    )
    with open(cfg.output_dir / "run_log.jsonl", "a", encoding="utf-8") as fh:
        fh.write(json.dumps(
            {"stage": stage, "config_hash": cfg.config_hash, "seed": cfg.seed,
             "elapsed_s": round(elapsed, 3), "status": "ok"},
            sort_keys=True,
        ) + "\n")
    log.info("stage %s: done (%.2fs)", stage, elapsed)
    return True


def run_pipeline(ctx: StageContext, until: str | None = None) -> None:
    stages = STAGE_ORDER
    if until is not None:
        if until not in STAGE_DEPS:
            raise ConfigError(f"unknown stage {until!r}")
        stages = STAGE_ORDER[: STAGE_ORDER.index(until) + 1]
    for stage in stages:
        run_stage(ctx, stage)


# ---------------------------------------------------------------------------
# shared artifact loaders

_TOKEN_HEADER = ("token_id", "utterance_id", "index", "phone", "word_id",
                 "position", "t_start", "t_end", "accent")


def _token_row(tok: PhoneToken) -> tuple:
    return (tok.token_id, tok.utterance_id, tok.index, tok.phone, tok.word_id,
            tok.position.value, tok.t_start, tok.t_end, tok.accent.token)


def _token_from_row(row: dict[str, str]) -> PhoneToken:
    return PhoneToken(
        utterance_id=row["utterance_id"],
        phone=row["phone"],
        word_id=row["word_id"],
        position=WordPosition.from_token(row["position"]),
        t_start=float(row["t_start"]),
        t_end=float(row["t_end"]),
        accent=AccentLabel.from_token(row["accent"]),
        index=int(row["index"]),
    )


def load_analysis_tokens(cfg: RunConfig) -> list[PhoneToken]:
    rows = read_table(cfg.stage_dir("ingest") / "tokens.tsv")
    toks = [_token_from_row(r) for r in rows]
    return sorted(toks, key=lambda t: t.token_id)


def load_baseline_tokens(cfg: RunConfig) -> dict[tuple[str, str], list[PhoneToken]]:
    """(variety, target category) -> tokens, sorted for determinism."""
    rows = read_table(cfg.stage_dir("ingest") / "baseline_tokens.tsv")
    out: dict[tuple[str, str], list[PhoneToken]] = {}
    for r in rows:
        out.setdefault((r["variety"], r["category"]), []).append(_token_from_row(r))
    for key in out:
        out[key].sort(key=lambda t: t.token_id)
    return out


def _frames_dir(cfg: RunConfig, subset: str) -> Path:
    return cfg.stage_dir("mfcc") / subset


def load_frames(cfg: RunConfig, subset: str, utterance_id: str) -> tuple[np.ndarray, np.ndarray]:
    base = _frames_dir(cfg, subset)
    data = np.load(base / f"{utterance_id}.npy")
    times = np.load(base / f"{utterance_id}.times.npy")
    return data, times


def load_profiles(cfg: RunConfig) -> dict[str, np.ndarray]:
    rows = read_table(cfg.stage_dir("phonet-score") / "profiles.tsv")
    return {
        r["token_id"]: np.asarray([float(r[f]) for f in FEATURE_NAMES])
        for r in rows
    }


def _utterance_rows(cfg: RunConfig, name: str) -> list[dict[str, str]]:
    return read_table(cfg.stage_dir("ingest") / name)


# ---------------------------------------------------------------------------
# stage: ingest

def stage_ingest(ctx: StageContext) -> None:
    cfg = ctx.cfg
    out = cfg.stage_dir("ingest")
    ratings = read_ratings(cfg.ratings_path)

    grids = sorted(cfg.textgrid_dir.glob("*.TextGrid"))
    if not grids:
        raise ConfigError(f"no *.TextGrid files in {cfg.textgrid_dir}")
    utt_rows = []
    all_tokens: list[PhoneToken] = []
    for grid in grids:
        utt_id = grid.stem
        if utt_id not in ratings:
            raise ConfigError(f"utterance {utt_id!r} has no row in {cfg.ratings_path}")
        wav = cfg.audio_dir / f"{utt_id}.wav"
        if not wav.is_file():
            raise ConfigError(f"missing audio for {utt_id!r}: {wav}")
        alignment = parse_textgrid(grid, cfg.phone_tier, cfg.word_tier, cfg.eps_t)
        accent = merge_ratings(ratings[utt_id])
        tokens = extract_tokens(alignment, set(cfg.targets), accent, cfg.eps_t)
        all_tokens.extend(tokens)
        utt_rows.append((utt_id, str(wav), str(grid),
                         "|".join(str(r) for r in ratings[utt_id]), accent.token))
    all_tokens.sort(key=lambda t: t.token_id)

    write_table(out / "analysis_utterances.tsv",
                ("utterance_id", "audio", "textgrid", "ratings", "accent"),
                utt_rows, cfg.config_hash)
    write_table(out / "tokens.tsv", _TOKEN_HEADER,
                [_token_row(t) for t in all_tokens], cfg.config_hash)

    # distribution counts over the full (segment, position, accent) grid
    counts = tabulate_distribution(all_tokens)
    dist_rows = []
    for seg in sorted(cfg.targets):
        for pos in WordPosition:
            for accent in AccentLabel:
                dist_rows.append((seg, pos.value, accent.token,
                                  counts.get((seg, pos, accent), 0)))
    write_table(out / "distribution_counts.tsv",
                ("segment", "position", "accent", "count"), dist_rows, cfg.config_hash)

    b_utt_rows = []
    b_token_rows = []
    native_to_category = {v: k for k, v in cfg.pairs.items()}
    for variety in ("AE", "IE"):
        src = cfg.baselines[variety]
        members = (
            {cfg.pairs[t] for t in cfg.targets} if variety == "AE" else set(cfg.targets)
        )
        b_grids = sorted(src.textgrid_dir.glob("*.TextGrid"))
        if not b_grids:
            raise ConfigError(f"no *.TextGrid files in {src.textgrid_dir}")
        for grid in b_grids:
            utt_id = grid.stem
            wav = src.audio_dir / f"{utt_id}.wav"
            if not wav.is_file():
                raise ConfigError(f"missing audio for baseline {utt_id!r}: {wav}")
            alignment = parse_textgrid(grid, cfg.phone_tier, cfg.word_tier, cfg.eps_t)
            b_utt_rows.append((variety, utt_id, str(wav), str(grid)))
            # baseline tokens carry a placeholder accent; only spans are used
            tokens = extract_tokens(alignment, members, AccentLabel.NO_NEGLIGIBLE, cfg.eps_t)
            for tok in sorted(tokens, key=lambda t: t.token_id):
                category = tok.phone if variety == "IE" else native_to_category[tok.phone]
                b_token_rows.append((variety, category, *_token_row(tok)))
    write_table(out / "baseline_utterances.tsv",
                ("variety", "utterance_id", "audio", "textgrid"), b_utt_rows,
                cfg.config_hash)
    write_table(out / "baseline_tokens.tsv", ("variety", "category", *_TOKEN_HEADER),
                b_token_rows, cfg.config_hash)


# ---------------------------------------------------------------------------
# stage: mfcc

def _mfcc_one(args: tuple) -> tuple[str, str, np.ndarray, np.ndarray]:
    subset, utt_id, wav_path, mfcc_cfg = args
    samples, rate = read_wav(wav_path)
    if rate != mfcc_cfg.sample_rate:
        raise ValidationError(
            f"{wav_path}: sample rate {rate} != configured {mfcc_cfg.sample_rate}"
        )
    fm = compute_mfcc(samples, mfcc_cfg)
    return subset, utt_id, fm.data, fm.frame_times


def stage_mfcc(ctx: StageContext) -> None:
    cfg = ctx.cfg
    jobs_list = [
        ("analysis", r["utterance_id"], r["audio"], cfg.mfcc)
        for r in _utterance_rows(cfg, "analysis_utterances.tsv")
    ]
    jobs_list += [
        (f"baseline_{r['variety'].lower()}", r["utterance_id"], r["audio"], cfg.mfcc)
        for r in _utterance_rows(cfg, "baseline_utterances.tsv")
    ]
    results = parallel_map(_mfcc_one, jobs_list, ctx.jobs)
    for subset, utt_id, data, times in results:
        base = _frames_dir(cfg, subset)
        base.mkdir(parents=True, exist_ok=True)
        np.save(base / f"{utt_id}.npy", data)
        np.save(base / f"{utt_id}.times.npy", times)


# ---------------------------------------------------------------------------
# stage: phonet-train

def stage_phonet_train(ctx: StageContext) -> None:
    cfg = ctx.cfg
    out = cfg.stage_dir("phonet-train")
    mapping = FeatureMapping.load()
    for pair in TARGET_PAIRS.values():
        verify_pair_contrasts(mapping, pair)

    rows = _utterance_rows(cfg, "baseline_utterances.tsv")
    frame_sets, label_sets = [], []
    for r in rows:
        subset = f"baseline_{r['variety'].lower()}"
        data, times = load_frames(cfg, subset, r["utterance_id"])
        if data.shape[0] == 0:
            continue
        alignment = parse_textgrid(r["textgrid"], cfg.phone_tier, cfg.word_tier, cfg.eps_t)
        frame_sets.append(data)
        label_sets.append(label_frames(alignment, mapping, times))
    if len(frame_sets) < 2:
        raise ValidationError("need at least two baseline utterances with frames")

    # hold out ~20% of utterances for the reported per-feature scores
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(frame_sets))
    n_eval = max(1, int(round(0.2 * len(frame_sets))))
    eval_idx = set(order[:n_eval].tolist())
    tr_frames = [frame_sets[i] for i in range(len(frame_sets)) if i not in eval_idx]
    tr_labels = [label_sets[i] for i in range(len(frame_sets)) if i not in eval_idx]
    ev_frames = [frame_sets[i] for i in sorted(eval_idx)]
    ev_labels = [label_sets[i] for i in sorted(eval_idx)]

    result = train_feature_model(tr_frames, tr_labels, cfg.phonet)
    result.model.save(out / "model.bin")
    write_table(out / "training_log.tsv", ("epoch", "train_loss", "val_loss"),
                [(i, tr, vl) for i, (tr, vl) in
                 enumerate(zip(result.train_loss, result.val_loss))],
                cfg.config_hash)
    scores = evaluate_features(result.model, ev_frames, ev_labels)
    write_table(out / "feature_classifier_eval.tsv", ("feature", "accuracy", "f1"),
                [(s.feature, s.accuracy, s.f1) for s in scores], cfg.config_hash)


# ---------------------------------------------------------------------------
# stage: phonet-score

def stage_phonet_score(ctx: StageContext) -> None:
    cfg = ctx.cfg
    out = cfg.stage_dir("phonet-score")
    model = FeatureModel.load(cfg.stage_dir("phonet-train") / "model.bin")
    tokens = load_analysis_tokens(cfg)
    by_utt: dict[str, list[PhoneToken]] = {}
    for tok in tokens:
        by_utt.setdefault(tok.utterance_id, []).append(tok)
    rows = []
    for utt_id in sorted(by_utt):
        data, times = load_frames(cfg, "analysis", utt_id)
        probs = model.predict_proba(data)
        for prof in average_profiles(probs, times, by_utt[utt_id]):
            rows.append((prof.token.token_id, *prof.probs.tolist()))
    rows.sort(key=lambda r: r[0])
    write_table(out / "profiles.tsv", ("token_id", *FEATURE_NAMES), rows, cfg.config_hash)


# ---------------------------------------------------------------------------
# stage: probe

def _mfcc_segment_means(cfg: RunConfig, tokens: list[PhoneToken]) -> np.ndarray:
    rows = []
    cache: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for tok in tokens:
        if tok.utterance_id not in cache:
            cache[tok.utterance_id] = load_frames(cfg, "analysis", tok.utterance_id)
        data, times = cache[tok.utterance_id]
        covered = (times >= tok.t_start) & (times < tok.t_end)
        if not covered.any():
            raise ValidationError(
                f"token {tok.token_id}: segment shorter than frame hop"
            )
        rows.append(data[covered].mean(axis=0))
    return np.vstack(rows)


def stage_probe(ctx: StageContext) -> None:
    cfg = ctx.cfg
    out = cfg.stage_dir("probe")
    tokens = load_analysis_tokens(cfg)
    layer_rows = []
    best_rows = []
    selection: dict = {}
    for segment in sorted(cfg.targets):
        seg_tokens = [t for t in tokens if t.phone == segment]
        if not seg_tokens:
            raise ValidationError(f"no tokens extracted for target segment {segment!r}")
        y = np.asarray([t.accent for t in seg_tokens])
        rep_features: dict[str, dict[int, np.ndarray]] = {}
        for kind in sorted(cfg.segreps):
            store = SegrepStore(cfg.segreps[kind])
            rep_features[kind] = {
                layer: segment_matrix(store, seg_tokens, layer)
                for layer in range(store.manifest.n_layers)
            }
        rep_features["mfcc"] = {0: _mfcc_segment_means(cfg, seg_tokens)}

        selection[segment] = {}
        for rep in sorted(rep_features):
            selection[segment][rep] = {}
            for kind in cfg.probe_kinds:
                result: ProbeResult = sweep_layers(
                    rep_features[rep], y, cfg.probe_config(kind)
                )
                for layer in sorted(result.per_layer_scores):
                    layer_rows.append((
                        segment, rep, kind, layer,
                        result.per_layer_lambda[layer],
                        result.per_layer_scores[layer],
                        layer == result.best_layer,
                    ))
                best_rows.append((
                    segment, rep, kind, result.best_layer,
                    result.per_layer_scores[result.best_layer],
                ))
                selection[segment][rep][kind] = {
                    "best_layer": result.best_layer,
                    "lambda": result.per_layer_lambda[result.best_layer],
                    "test_f1": result.per_layer_scores[result.best_layer],
                    "selected_features": list(result.selected_features),
                }
    write_table(out / "layer_scores.tsv",
                ("segment", "representation", "probe", "layer", "lambda",
                 "weighted_f1", "best"),
                layer_rows, cfg.config_hash)
    write_table(out / "best_layer_scores.tsv",
                ("segment", "representation", "probe", "best_layer", "weighted_f1"),
                best_rows, cfg.config_hash)
    (out / "selection.json").write_text(
        json.dumps(selection, indent=1, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def _load_selection(cfg: RunConfig) -> dict:
    return json.loads((cfg.stage_dir("probe") / "selection.json").read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# stage: svcca

def stage_svcca(ctx: StageContext) -> None:
    cfg = ctx.cfg
    out = cfg.stage_dir("svcca")
    tokens = load_analysis_tokens(cfg)
    profiles = load_profiles(cfg)
    selection = _load_selection(cfg)

    corr_rows = []
    weight_rows = []
    for segment in sorted(cfg.targets):
        seg_tokens = [t for t in tokens if t.phone == segment]
        P = np.vstack([profiles[t.token_id] for t in seg_tokens])
        names = feature_list(segment)
        idx = [FEATURE_NAMES.index(f) for f in names]
        accents = np.asarray([int(t.accent) for t in seg_tokens])
        for rep in sorted(cfg.segreps):
            store = SegrepStore(cfg.segreps[rep])
            for probe_kind in cfg.probe_kinds:
                sel = selection[segment][rep][probe_kind]
                layer = int(sel["best_layer"])
                chosen = [int(j) for j in sel["selected_features"]]
                if not chosen:
                    raise ValidationError(
                        f"{segment}/{rep}/{probe_kind}: probe selected no features"
                    )
                X_full = segment_matrix(store, seg_tokens, layer)
                X_sub = X_full[:, chosen]

                if cfg.cca_baseline_pooled:
                    rho_base = correlate_features(X_full, P, idx, cfg.cca)
                    corr_rows += [
                        (segment, rep, probe_kind, "baseline", names[i], float(rho_base[i]))
                        for i in range(len(names))
                    ]
                    base_by_accent = {a: rho_base for a in AccentLabel}
                else:
                    base_by_accent = {}
                    for accent in AccentLabel:
                        mask = accents == int(accent)
                        if not mask.any():
                            continue
                        rho = correlate_features(X_full[mask], P[mask], idx, cfg.cca)
                        base_by_accent[accent] = rho
                        corr_rows += [
                            (segment, rep, probe_kind, f"baseline_{accent.token}",
                             names[i], float(rho[i]))
                            for i in range(len(names))
                        ]

                for accent in AccentLabel:
                    mask = accents == int(accent)
                    if not mask.any():
                        continue
                    rho_sub = correlate_features(X_sub[mask], P[mask], idx, cfg.cca)
                    corr_rows += [
                        (segment, rep, probe_kind, accent.token, names[i], float(rho_sub[i]))
                        for i in range(len(names))
                    ]
                    rel = relative_weights(
                        {names[i]: float(rho_sub[i]) for i in range(len(names))},
                        {names[i]: float(base_by_accent[accent][i]) for i in range(len(names))},
                    )
                    for f in names:
                        w_sub, w_base, ratio = rel[f]
                        weight_rows.append((segment, rep, probe_kind, accent.token,
                                            f, w_sub, w_base, ratio))
                # the reference row: baseline weights relativized to one
                for f in names:
                    weight_rows.append((segment, rep, probe_kind, "baseline", f,
                                        float("nan"), float("nan"), 1.0))

    write_table(out / "feature_correlations.tsv",
                ("segment", "representation", "probe", "accent", "feature", "rho"),
                corr_rows, cfg.config_hash)
    write_table(out / "relative_weights.tsv",
                ("segment", "representation", "probe", "accent", "feature",
                 "weight_subset", "weight_baseline", "ratio"),
                weight_rows, cfg.config_hash)


# ---------------------------------------------------------------------------
# stage: distance

def stage_distance(ctx: StageContext) -> None:
    cfg = ctx.cfg
    out = cfg.stage_dir("distance")
    tokens = load_analysis_tokens(cfg)
    baseline_tokens = load_baseline_tokens(cfg)
    selection = _load_selection(cfg)

    dist_rows = []
    proj_rows = []
    for segment in sorted(cfg.targets):
        seg_tokens = [t for t in tokens if t.phone == segment]
        for rep in sorted(cfg.segreps):
            layer = int(selection[segment][rep][cfg.reg_layer_from]["best_layer"])
            store = SegrepStore(cfg.segreps[rep])
            X = segment_matrix(store, seg_tokens, layer)
            banks = {}
            for variety in ("AE", "IE"):
                b_tokens = baseline_tokens.get((variety, segment), [])
                if not b_tokens:
                    raise ValidationError(
                        f"no {variety} baseline tokens for segment {segment!r}"
                    )
                b_store = SegrepStore(cfg.baselines[variety].segreps[rep])
                banks[variety] = BaselineBank(
                    variety, segment, segment_matrix(b_store, b_tokens, layer)
                )
            records = build_distance_records(
                seg_tokens, X, banks["AE"], banks["IE"], cap=cfg.reg_cap, seed=cfg.seed
            )
            for rec in records:
                dist_rows.append((
                    segment, rep, rec.token.token_id, rec.token.utterance_id,
                    rec.position.value, rec.accent.token,
                    rec.d_ae, rec.d_ie, rec.z_ae, rec.z_ie,
                ))
            pooled = np.vstack([X, banks["AE"].vectors, banks["IE"].vectors])
            labels = (
                [t.accent.token for t in seg_tokens]
                + ["AE"] * banks["AE"].vectors.shape[0]
                + ["IE"] * banks["IE"].vectors.shape[0]
            )
            coords, labels = project_2d(pooled, labels)
            proj_rows += [
                (segment, rep, labels[i], float(coords[i, 0]), float(coords[i, 1]))
                for i in range(len(labels))
            ]
    write_table(out / "distances.tsv",
                ("segment", "representation", "token_id", "utterance_id", "position",
                 "accent", "d_ae", "d_ie", "z_ae", "z_ie"),
                dist_rows, cfg.config_hash)
    write_table(out / "projection_2d.tsv",
                ("segment", "representation", "source", "x", "y"),
                proj_rows, cfg.config_hash)


# ---------------------------------------------------------------------------
# stage: regress

def stage_regress(ctx: StageContext) -> None:
    cfg = ctx.cfg
    out = cfg.stage_dir("regress")
    tokens = {t.token_id: t for t in load_analysis_tokens(cfg)}
    rows = read_table(cfg.stage_dir("distance") / "distances.tsv")
    groups: dict[tuple[str, str], list] = {}
    for r in rows:
        groups.setdefault((r["segment"], r["representation"]), []).append(r)

    spec = RegressionSpec(
        interactions=cfg.reg_interactions,
        standardize=cfg.reg_standardize,
        alpha=cfg.reg_alpha,
    )
    report_rows = []
    full_rows = []
    stat_rows = []
    for (segment, rep) in sorted(groups):
        records = [
            DistanceRecord(
                token=tokens[r["token_id"]],
                d_ae=float(r["d_ae"]),
                d_ie=float(r["d_ie"]),
                z_ae=float(r["z_ae"]),
                z_ie=float(r["z_ie"]),
            )
            for r in groups[(segment, rep)]
        ]
        result = fit_multinomial(records, spec)
        stat_rows.append((segment, rep, result.n, result.loglik))
        for level in result.levels:
            for term in result.terms:
                st = result.coef[level][term]
                full_rows.append((segment, rep, level.token, term,
                                  st.beta, st.se, st.z, st.p))
        for level, term, st in result.significant_rows():
            report_rows.append((segment, rep, level.token, term,
                                st.beta, st.se, st.z, st.p))
    write_table(out / "accent_regression.tsv",
                ("segment", "representation", "accent", "effect", "beta", "se", "z", "p"),
                report_rows, cfg.config_hash)
    write_table(out / "accent_regression_full.tsv",
                ("segment", "representation", "accent", "effect", "beta", "se", "z", "p"),
                full_rows, cfg.config_hash)
    write_table(out / "regression_stats.tsv",
                ("segment", "representation", "n", "loglik"), stat_rows, cfg.config_hash)


# ---------------------------------------------------------------------------
# stage: report

_REPORT_FILES = (
    ("ingest", "distribution_counts.tsv"),
    ("phonet-train", "feature_classifier_eval.tsv"),
    ("probe", "layer_scores.tsv"),
    ("probe", "best_layer_scores.tsv"),
    ("svcca", "feature_correlations.tsv"),
    ("svcca", "relative_weights.tsv"),
    ("distance", "projection_2d.tsv"),
    ("regress", "accent_regression.tsv"),
    ("regress", "accent_regression_full.tsv"),
    ("regress", "regression_stats.tsv"),
)


def stage_report(ctx: StageContext) -> None:
    cfg = ctx.cfg
    out = cfg.stage_dir("report")
    for stage, fname in _REPORT_FILES:
        src = cfg.stage_dir(stage) / fname
        if not src.is_file():
            raise MissingArtifactError(
                f"stage 'report' requires {fname} from stage {stage!r}; "
                f"run 'segprobe {stage}' first"
            )
        shutil.copyfile(src, out / fname)


_STAGE_FUNCS = {
    "ingest": stage_ingest,
    "mfcc": stage_mfcc,
    "phonet-train": stage_phonet_train,
    "phonet-score": stage_phonet_score,
    "probe": stage_probe,
    "svcca": stage_svcca,
    "distance": stage_distance,
    "regress": stage_regress,
    "report": stage_report,
}
