"""Tests for configuration loading and overrides."""

import json
from unittest.mock import patch

import pytest

from sonar_histnet.config import (
    THREADS_ENV,
    FeatureConfig,
    ModelConfig,
    RunConfig,
    apply_overrides,
    load_config,
    worker_count,
)
from sonar_histnet.errors import ConfigError, MissingStageError
from sonar_histnet.types import FeatureKind, ModelKind


class TestDefaults:
    def test_run_defaults(self):
        cfg = load_config()
        assert cfg == RunConfig()
        assert cfg.features == [FeatureKind.STFT]
        assert cfg.models == [ModelKind.TDNN, ModelKind.HLTDNN]
        assert cfg.ratios == (0.70, 0.15, 0.15)
        assert cfg.fdr_aggregate == "sum"

    def test_feature_geometry(self):
        cfg = FeatureConfig()
        assert (cfg.window_samples, cfg.hop_samples, cfg.segment_samples) == (4000, 1024, 48000)
        assert cfg.raw_frames == 47
        assert cfg.padded_shape(FeatureKind.MFCC) == (16, 48)
        assert cfg.padded_shape(FeatureKind.VQT) == (64, 48)

    def test_pad_must_cover_raw(self):
        with pytest.raises(ValueError):
            FeatureConfig(pad_time=40)
        with pytest.raises(ValueError):
            FeatureConfig(n_mels=60)

    def test_model_embed_size(self):
        cfg = ModelConfig()
        assert cfg.pooled_time == 3
        assert cfg.hist_grid == (1, 1)
        assert cfg.hist_descriptor_size == 16 * 128


class TestOverrides:
    def test_dotted_keys(self):
        data = apply_overrides({"hp": {"lr": 0.1}}, {"hp.epochs": "5", "model.hist_impl": "direct"})
        assert data == {"hp": {"lr": 0.1, "epochs": 5}, "model": {"hist_impl": "direct"}}

    def test_json_values(self):
        cfg = load_config(overrides={"hp.seeds": "[4, 5]", "synth.probe": "false", "data_dir": "corpus"})
        assert cfg.hp.seeds == [4, 5]
        assert cfg.synth.probe is False
        assert cfg.data_dir == "corpus"

    def test_override_beats_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"hp": {"lr": 0.01, "batch": 32}, "features": ["cqt"]}))
        cfg = load_config(path, {"hp.lr": "0.5"})
        assert cfg.hp.lr == 0.5
        assert cfg.hp.batch == 32
        assert cfg.features == [FeatureKind.CQT]


class TestErrors:
    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown config key 'hp.learning_rate'"):
            load_config(overrides={"hp.learning_rate": "0.1"})

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="unknown config key 'colour'"):
            load_config(overrides={"colour": "red"})

    def test_invalid_value(self):
        with pytest.raises(ConfigError, match="hp.lr"):
            load_config(overrides={"hp.lr": "-1"})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "nope.json")

    def test_bad_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{hp: 1")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(path)

    def test_non_object(self, tmp_path):
        path = tmp_path / "list.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            load_config(path)


class TestStagePaths:
    def dirs(self, tmp_path):
        return {"data_dir": str(tmp_path / "data"), "cache_dir": str(tmp_path / "cache"), "output_dir": str(tmp_path / "runs")}

    def test_synth_needs_nothing(self, tmp_path):
        cfg = load_config(overrides=self.dirs(tmp_path), stage="synth")
        assert cfg.stage_inputs("synth") == []

    @pytest.mark.parametrize(
        "stage,producer",
        [("ingest", "synth"), ("extract", "ingest"), ("train", "extract"), ("evaluate", "extract"), ("report", "train")],
    )
    def test_missing_input_names_its_stage(self, tmp_path, stage, producer):
        with pytest.raises(MissingStageError) as info:
            load_config(overrides=self.dirs(tmp_path), stage=stage)
        assert info.value.stage == producer
        assert f"sonar-histnet {producer}" in str(info.value)

    def test_present_inputs_validate(self, tmp_path):
        (tmp_path / "data").mkdir()
        (tmp_path / "data" / "manifest.csv").write_text("record_id,path,label,duration_s\n")
        cfg = load_config(overrides=self.dirs(tmp_path), stage="ingest")
        assert cfg.manifest_path.exists()

    def test_train_checks_every_feature(self, tmp_path):
        stft = tmp_path / "cache" / "features" / "stft"
        stft.mkdir(parents=True)
        (stft / "index.csv").write_text("")
        overrides = {**self.dirs(tmp_path), "features": '["stft"]'}
        assert load_config(overrides=overrides, stage="train").features == [FeatureKind.STFT]
        overrides["features"] = '["stft", "gfcc"]'
        with pytest.raises(MissingStageError, match="gfcc"):
            load_config(overrides=overrides, stage="train")

    def test_file_where_directory_expected(self, tmp_path):
        (tmp_path / "data").write_text("not a directory")
        with pytest.raises(ConfigError, match="data_dir"):
            load_config(overrides=self.dirs(tmp_path))

    def test_unknown_stage(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown stage"):
            load_config(overrides=self.dirs(tmp_path), stage="deploy")

    def test_library_use_skips_stage_checks(self, tmp_path):
        assert RunConfig(**self.dirs(tmp_path)).data_dir == str(tmp_path / "data")


class TestWorkerCount:
    def test_env_cap(self):
        with patch.dict("os.environ", {THREADS_ENV: "3"}):
            assert worker_count() == 3

    def test_default_when_unset(self):
        with patch.dict("os.environ", {}, clear=True):
            assert worker_count(default=5) == 5

    @pytest.mark.parametrize("raw", ["zero", "0", "-2"])
    def test_bad_env(self, raw):
        with patch.dict("os.environ", {THREADS_ENV: raw}):
            with pytest.raises(ConfigError):
                worker_count()
