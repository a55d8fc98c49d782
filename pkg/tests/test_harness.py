"""Config validation, CLI pipeline, manifests, and reproducibility."""

import json
from pathlib import Path

import numpy as np
import pytest

from tactloc.exceptions import ConfigurationError
from tactloc.harness.cli import main
from tactloc.harness.config import ExperimentConfig, load_config
from tactloc.harness.manifest import CSV_SCHEMA_VERSION, sha256_file, write_csv

TINY = {
    "n": 2,
    "d": 5,
    "env": {
        "feature_dim": 8,
        "components": 4,
        "f_max": 1.2,
        "noise_sigma": 0.2,
        "object_count": 6,
        "train_objects": 5,
        "object_seed": 11,
        "samples_per_state": 1,
        "include_noiseless": True,
        "dataset_seed": 3,
    },
    "obsmodel": {"hidden": [32], "learning_rate": 0.003, "batch_size": 32, "epochs": 2, "seed": 0},
    "agent": {
        "n_envs": 4,
        "rollout_steps": 64,
        "minibatches": 2,
        "update_epochs": 2,
        "total_steps": 128,
        "eval_episodes": 8,
    },
    "run": {"task": "reaching", "seeds": [0], "horizon": 8},
}


def write_tiny_config(tmp_path, **overrides) -> Path:
    doc = json.loads(json.dumps(TINY))
    for key, value in overrides.items():
        section, field = key.split(".")
        doc[section][field] = value
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


class TestConfig:
    def test_defaults_validate(self):
        cfg = ExperimentConfig()
        cfg.validate()
        assert cfg.spec().d == 11
        assert cfg.ppo_config().total_steps == 500_000
        assert cfg.policy_net_config().num_actions == 20

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigurationError, match="unknown config keys"):
            ExperimentConfig.from_dict({"nope": 1})

    def test_unknown_section_field_rejected(self):
        with pytest.raises(ConfigurationError, match="env"):
            ExperimentConfig.from_dict({"env": {"bogus_field": 1}})

    def test_bad_values_rejected(self, tmp_path):
        for override in (
            {"env": {"object_count": 5, "train_objects": 5}},
            {"run": {"task": "flying"}},
            {"run": {"task": "active", "baseline": "recurrent"}},
            {"agent": {"clip_ratio": 1.5}},
            {"d": 10},
        ):
            raw = dict(TINY)
            raw.update(override) if set(override) <= {"d"} else None
            doc = json.loads(json.dumps(TINY))
            for section, fields in override.items():
                if isinstance(fields, dict):
                    doc[section].update(fields)
                else:
                    doc[section] = fields
            path = tmp_path / "bad.json"
            path.write_text(json.dumps(doc))
            with pytest.raises(ConfigurationError):
                load_config(path)

    def test_config_hash_is_stable(self):
        a, b = ExperimentConfig(), ExperimentConfig()
        assert a.config_hash() == b.config_hash()
        assert a.canonical_json() == b.canonical_json()

    def test_load(self, tmp_path):
        cfg = load_config(write_tiny_config(tmp_path))
        assert cfg.d == 5
        assert cfg.env.object_count == 6
        assert cfg.obs_config().train_noise_sigma == 0.2

    def test_missing_file_is_config_error(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(tmp_path / "nope.json")


class TestCsv:
    def test_schema_version_column(self, tmp_path):
        path = tmp_path / "t.csv"
        write_csv(path, [{"a": 1, "b": 0.5}], ["a", "b"])
        lines = path.read_text().splitlines()
        assert lines[0] == "schema_version,a,b"
        assert lines[1] == f"{CSV_SCHEMA_VERSION},1,0.5"

    def test_float_formatting_roundtrips(self, tmp_path):
        path = tmp_path / "t.csv"
        value = 0.1234567890123456789
        write_csv(path, [{"x": value}], ["x"])
        cell = path.read_text().splitlines()[1].split(",")[1]
        assert float(cell) == value


class TestCliPipeline:
    def test_full_pipeline(self, tmp_path):
        cfg_path = write_tiny_config(tmp_path)
        out = tmp_path / "run"

        assert main(["gen", "--config", str(cfg_path), "--out", str(out)]) == 0
        sidecar = json.loads((out / "dataset_train.json").read_text())
        assert sidecar["record_count"] == 5 * 5 ** 2 * 2  # objects * d^n * passes
        assert (out / "objects.json").exists()

        # refuse to clobber without --force
        assert main(["gen", "--config", str(cfg_path), "--out", str(out)]) == 1
        assert main(["gen", "--config", str(cfg_path), "--out", str(out), "--force"]) == 0

        assert main(["train-obs", "--config", str(cfg_path), "--out", str(out)]) == 0
        assert (out / "obsmodel.ckpt").exists()
        topk = (out / "topk.csv").read_text().splitlines()
        assert topk[0] == "schema_version,split,dimension,k,accuracy"
        assert len(topk) == 1 + 2 * 2 * 5  # splits * dims * k

        assert main(["train-agent", "--config", str(cfg_path), "--out", str(out)]) == 0
        assert (out / "policy_tpn_reaching_seed0.ckpt").exists()
        metrics = (out / "metrics_tpn_reaching_seed0.csv").read_text().splitlines()
        assert len(metrics) == 1 + 2  # 128 total steps / 64 per rollout
        assert (out / "metrics_tpn_reaching_mean.csv").exists()

        assert main(["eval", "--config", str(cfg_path), "--out", str(out)]) == 0
        report = json.loads((out / "eval_report.json").read_text())
        assert 0.0 <= report["success_rate"] <= 1.0
        assert len(report["filter_accuracy_over_time"]) == TINY["run"]["horizon"] + 1

        assert main(["filter-demo", "--config", str(cfg_path), "--out", str(out)]) == 0
        demo = json.loads((out / "filter_demo.json").read_text())
        assert demo["steps"][0]["action"] is None
        for entry in demo["steps"]:
            belief = np.asarray(entry["belief"])
            assert belief.shape == (2, 5)
            assert np.allclose(belief.sum(axis=1), 1.0, atol=1e-6)
            assert np.asarray(entry["likelihood"]).shape == (2, 5)
            assert len(entry["true_state"]) == 2
        assert len(demo["steps"]) == demo["length"] + 1

    def test_train_obs_without_dataset_fails(self, tmp_path):
        cfg_path = write_tiny_config(tmp_path)
        assert main(["train-obs", "--config", str(cfg_path), "--out", str(tmp_path / "empty")]) == 2

    def test_bad_config_exits_one(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{\"run\": {\"task\": \"flying\"}}")
        assert main(["gen", "--config", str(path), "--out", str(tmp_path / "x")]) == 1

    def test_task_override_flag(self, tmp_path):
        cfg_path = write_tiny_config(tmp_path)
        out = tmp_path / "run_active"
        assert main(["gen", "--config", str(cfg_path), "--out", str(out)]) == 0
        assert main(["train-obs", "--config", str(cfg_path), "--out", str(out)]) == 0
        assert main([
            "train-agent", "--config", str(cfg_path), "--out", str(out), "--task", "active", "--seed", "1",
        ]) == 0
        assert (out / "policy_tpn_active_seed1.ckpt").exists()


class TestReproducibility:
    def test_gen_and_train_obs_reproduce_byte_identical_artifacts(self, tmp_path):
        cfg_path = write_tiny_config(tmp_path)
        hashes = {}
        for run in ("a", "b"):
            out = tmp_path / run
            assert main(["gen", "--config", str(cfg_path), "--out", str(out)]) == 0
            assert main(["train-obs", "--config", str(cfg_path), "--out", str(out)]) == 0
            assert main(["train-agent", "--config", str(cfg_path), "--out", str(out)]) == 0
            hashes[run] = {
                name: sha256_file(out / name)
                for name in (
                    "dataset_train.bin",
                    "dataset_holdout.bin",
                    "obsmodel.ckpt",
                    "topk.csv",
                    "obs_training.csv",
                    "policy_tpn_reaching_seed0.ckpt",
                    "metrics_tpn_reaching_seed0.csv",
                )
            }
        assert hashes["a"] == hashes["b"]

    def test_manifest_records_checksums(self, tmp_path):
        cfg_path = write_tiny_config(tmp_path)
        out = tmp_path / "m"
        main(["gen", "--config", str(cfg_path), "--out", str(out)])
        manifest = json.loads((out / "manifest_gen.json").read_text())
        assert manifest["command"] == "gen"
        assert manifest["files"]["dataset_train.bin"] == sha256_file(out / "dataset_train.bin")
        assert manifest["config_hash"] == load_config(cfg_path).config_hash()
