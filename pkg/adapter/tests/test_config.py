"""AdapterConfig validation and CLI flag resolution."""

from __future__ import annotations

import json

import pytest

from model_adapter import AdapterConfig, AdapterConfigError, config_from_dict, load_config
from model_adapter.cli import build_parser, resolve_config


class TestAdapterConfig:
    def test_defaults(self):
        cfg = AdapterConfig()
        assert cfg.model == "builtin:tiny"
        assert cfg.device == "cpu"
        assert cfg.max_new_tokens == 24
        assert cfg.k == 8
        assert cfg.strategy == "greedy"

    def test_k_must_be_at_least_two(self):
        with pytest.raises(AdapterConfigError):
            AdapterConfig(k=1)
        AdapterConfig(k=2)

    def test_k_must_be_integer(self):
        with pytest.raises(AdapterConfigError):
            AdapterConfig(k=2.5)

    def test_max_new_tokens_must_be_positive_integer(self):
        with pytest.raises(AdapterConfigError):
            AdapterConfig(max_new_tokens=0)
        with pytest.raises(AdapterConfigError):
            AdapterConfig(max_new_tokens=1.5)
        AdapterConfig(max_new_tokens=1)

    def test_only_greedy_strategy(self):
        with pytest.raises(AdapterConfigError):
            AdapterConfig(strategy="sample")

    def test_empty_model_rejected(self):
        with pytest.raises(AdapterConfigError):
            AdapterConfig(model="")

    def test_unknown_keys_rejected(self):
        with pytest.raises(AdapterConfigError):
            config_from_dict({"model": "builtin:tiny", "temperature": 0.7})


class TestConfigFile:
    def test_load_and_parse(self, tmp_path):
        path = tmp_path / "adapter.json"
        path.write_text(json.dumps({"model": "builtin:tiny?seed=3", "k": 4}))
        cfg = load_config(str(path))
        assert cfg.model == "builtin:tiny?seed=3"
        assert cfg.k == 4
        assert cfg.max_new_tokens == 24

    def test_missing_file(self, tmp_path):
        with pytest.raises(AdapterConfigError):
            load_config(str(tmp_path / "ghost.json"))

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(AdapterConfigError):
            load_config(str(path))


class TestFlagResolution:
    def test_flags_override_config_file(self, tmp_path):
        path = tmp_path / "adapter.json"
        path.write_text(json.dumps({"k": 4, "max_new_tokens": 12}))
        args = build_parser().parse_args(
            ["--config", str(path), "--topk", "6", "--model", "builtin:tiny?seed=9"]
        )
        cfg = resolve_config(args)
        assert cfg.k == 6
        assert cfg.model == "builtin:tiny?seed=9"
        assert cfg.max_new_tokens == 12

    def test_defaults_without_config(self):
        args = build_parser().parse_args([])
        assert resolve_config(args) == AdapterConfig()
