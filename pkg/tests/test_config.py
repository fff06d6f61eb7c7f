"""Run config documents: strict parsing and conversion to core settings."""
import json

import pytest

from src.core.config import RunConfig, load_config, parse_config
from src.core.errors import ConfigError
from src.core.models import SamplerMode


def _write(tmp_path, text):
    path = tmp_path / "run.json"
    path.write_text(text, encoding="utf-8")
    return path


def test_minimal_document_gets_defaults():
    config = parse_config({"version": 1})
    assert config == RunConfig.defaults()
    assert config.kernel.rank_min == 0.01
    assert config.kernel.rank_max == 0.49
    assert config.sampler.mode == "hybrid_exact"
    assert config.paths.distribution == "builtin:reference"


def test_sections_convert_to_core_settings():
    config = parse_config({
        "version": 1,
        "kernel": {"rank_min": 0.05, "rank_max": 0.45},
        "train": {"steps": 10, "learning_rate": 0.05},
        "sampler": {"nfe": 8, "mode": "masked", "temperature": 0.5},
    })
    kernel_cfg = config.kernel.to_kernel_config(vocab=3, seq_len=2)
    assert (kernel_cfg.vocab, kernel_cfg.seq_len, kernel_cfg.rank_min) == (3, 2, 0.05)
    assert config.train.to_train_config().steps == 10
    sampler_cfg = config.sampler.to_sampler_config(kernel_cfg)
    assert sampler_cfg.mode is SamplerMode.MASKED
    assert sampler_cfg.nfe == 8


def test_kernel_shape_must_come_from_somewhere():
    with pytest.raises(ConfigError):
        RunConfig.defaults().kernel.to_kernel_config()
    fixed = parse_config({"version": 1, "kernel": {"vocab": 5, "seq_len": 4}}).kernel
    assert fixed.to_kernel_config(vocab=3, seq_len=2).vocab == 5


def test_rank_bounds_error_names_both_fields():
    with pytest.raises(ConfigError) as exc:
        parse_config({"version": 1, "kernel": {"rank_min": 0.3, "rank_max": 0.2}})
    assert "rank_min" in str(exc.value)
    assert "rank_max" in str(exc.value)


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError) as exc:
        parse_config({"version": 1, "sampler": {"steps": 3}})
    assert "sampler.steps" in str(exc.value)


@pytest.mark.parametrize("document", [{}, {"version": 2}, {"version": 1, "sampler": {"nfe": 0}},
                                      {"version": 1, "sampler": {"mode": "beam"}}])
def test_invalid_documents(document):
    with pytest.raises(ConfigError):
        parse_config(document)


def test_load_config_reports_the_line_of_a_syntax_error(tmp_path):
    path = _write(tmp_path, '{\n  "version": 1,\n  "kernel": {,}\n}\n')
    with pytest.raises(ConfigError) as exc:
        load_config(path)
    assert "line 3" in str(exc.value)


def test_load_config_from_file(tmp_path):
    path = _write(tmp_path, json.dumps({"version": 1, "paths": {"distribution": "builtin:single"}}))
    assert load_config(path).paths.distribution == "builtin:single"
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
