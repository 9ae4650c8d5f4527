import json

import pytest

from segprobe.config import load_config
from segprobe.errors import ConfigError
from segprobe.stages import STAGE_DEPS, STAGE_ORDER, StageContext, run_stage


def _base_config(root):
    for sub in ("audio", "textgrids", "segrep", "b_ae/audio", "b_ae/textgrids",
                "b_ae/segrep", "b_ie/audio", "b_ie/textgrids", "b_ie/segrep"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    (root / "ratings.tsv").write_text("utterance_id\tr1\n", encoding="utf-8")
    return {
        "seed": 1,
        "targets": ["ʈ"],
        "pairs": {"ʈ": "t"},
        "paths": {
            "audio": "audio",
            "textgrids": "textgrids",
            "ratings": "ratings.tsv",
            "segreps": {"w2v": "segrep"},
            "baselines": {
                "AE": {"audio": "b_ae/audio", "textgrids": "b_ae/textgrids",
                       "segreps": {"w2v": "b_ae/segrep"}},
                "IE": {"audio": "b_ie/audio", "textgrids": "b_ie/textgrids",
                       "segreps": {"w2v": "b_ie/segrep"}},
            },
            "output": "out",
        },
    }


def _write(root, cfg):
    path = root / "config.json"
    path.write_text(json.dumps(cfg, ensure_ascii=False), encoding="utf-8")
    return path


class TestConfigValidation:
    def test_minimal_config_loads(self, tmp_path):
        cfg = load_config(_write(tmp_path, _base_config(tmp_path)))
        assert cfg.targets == ["ʈ"]
        assert cfg.reg_cap == 2000
        assert cfg.probe_kinds == ("logreg", "svm")

    def test_pair_must_cover_targets(self, tmp_path):
        raw = _base_config(tmp_path)
        raw["pairs"] = {}
        with pytest.raises(ConfigError, match="pair mapping"):
            load_config(_write(tmp_path, raw))

    def test_unregistered_segment_rejected(self, tmp_path):
        raw = _base_config(tmp_path)
        raw["targets"] = ["q"]
        raw["pairs"] = {"q": "k"}
        with pytest.raises(ConfigError, match="feature list"):
            load_config(_write(tmp_path, raw))

    def test_wrong_native_counterpart_rejected(self, tmp_path):
        raw = _base_config(tmp_path)
        raw["pairs"] = {"ʈ": "d"}
        with pytest.raises(ConfigError, match="native counterpart"):
            load_config(_write(tmp_path, raw))

    def test_missing_path_rejected(self, tmp_path):
        raw = _base_config(tmp_path)
        raw["paths"]["audio"] = "nowhere"
        with pytest.raises(ConfigError, match="audio"):
            load_config(_write(tmp_path, raw))

    def test_missing_baseline_variety_rejected(self, tmp_path):
        raw = _base_config(tmp_path)
        del raw["paths"]["baselines"]["IE"]
        with pytest.raises(ConfigError, match="IE"):
            load_config(_write(tmp_path, raw))

    def test_baseline_must_match_representation_kinds(self, tmp_path):
        raw = _base_config(tmp_path)
        raw["paths"]["baselines"]["AE"]["segreps"] = {"other": "b_ae/segrep"}
        with pytest.raises(ConfigError, match="representation kinds"):
            load_config(_write(tmp_path, raw))

    def test_layer_from_must_be_a_probe_kind(self, tmp_path):
        raw = _base_config(tmp_path)
        raw["probe"] = {"kinds": ["svm"]}
        raw["regression"] = {"layer_from": "logreg"}
        with pytest.raises(ConfigError, match="layer_from"):
            load_config(_write(tmp_path, raw))

    def test_cap_none(self, tmp_path):
        raw = _base_config(tmp_path)
        raw["regression"] = {"cap": "none"}
        assert load_config(_write(tmp_path, raw)).reg_cap is None

    def test_invalid_json_rejected(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError, match="JSON"):
            load_config(path)


class TestStageErrors:
    def test_unknown_stage_rejected(self, tmp_path):
        cfg = load_config(_write(tmp_path, _base_config(tmp_path)))
        with pytest.raises(ConfigError, match="unknown stage"):
            run_stage(StageContext(cfg=cfg), "frobnicate")

    def test_ingest_requires_textgrids(self, tmp_path):
        cfg = load_config(_write(tmp_path, _base_config(tmp_path)))
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        with pytest.raises(ConfigError, match="TextGrid"):
            run_stage(StageContext(cfg=cfg), "ingest")

    def test_ingest_requires_rating_for_every_utterance(self, tmp_path):
        from segprobe.ingest import Interval, UtteranceAlignment, write_textgrid
        raw = _base_config(tmp_path)
        cfg = load_config(_write(tmp_path, raw))
        a = UtteranceAlignment(
            "u1", (Interval("ʈ", 0.0, 0.1),), (Interval("w", 0.0, 0.1),)
        )
        write_textgrid(a, tmp_path / "textgrids" / "u1.TextGrid")
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        with pytest.raises(ConfigError, match="no row"):
            run_stage(StageContext(cfg=cfg), "ingest")

    def test_dependency_order_is_consistent(self):
        seen = set()
        for stage in STAGE_ORDER:
            assert set(STAGE_DEPS[stage]) <= seen
            seen.add(stage)
