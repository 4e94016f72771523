"""
Tests for canonical JSON checkpoints and filter transfer between models.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from cosgauss_frontend.classifier import BackendModel, train_supervised
from cosgauss_frontend.config import parse_config_text
from cosgauss_frontend.errors import (
    CheckpointError,
    CheckpointParseError,
    IncompatibleCheckpointError,
    UnsupportedCheckpointVersionError,
)
from cosgauss_frontend.filterbank import FilterbankParams, mel_init_params
from cosgauss_frontend.persistence import (
    export_filterbank,
    filterbank_from_checkpoint,
    load_checkpoint,
    save_checkpoint,
    transfer_filters,
)

DOCS = Path(__file__).resolve().parents[2] / "docs"

TRANSFER_CONFIG = """
audio.frame_len = 256
audio.hop = 128
filters.F = 8
filters.kernel_len = 65
relevance.hidden = 5
model.hidden = 8
train.epochs = 2
"""


@pytest.fixture
def transfer_config():
    return parse_config_text(TRANSFER_CONFIG)


@pytest.fixture
def custom_filters() -> FilterbankParams:
    return FilterbankParams(mu=np.linspace(0.03, 0.3, 8), kernel_len=65)


# ROUND TRIP

def test_round_trip_is_bit_exact(tmp_path, rng):
    params = {"a": rng.standard_normal((3, 4)), "b": rng.uniform(1e-300, 1e-290, 5), "c": np.array([np.pi])}
    save_checkpoint(params, "backend", tmp_path / "ckpt.json", config={"x": {"y": 0.1}}, provenance="test")

    loaded = load_checkpoint(tmp_path / "ckpt.json")

    assert loaded.names() == ["a", "b", "c"]
    for name, array in params.items():
        np.testing.assert_array_equal(loaded.array(name), array)
        assert loaded.array(name).shape == array.shape
    assert loaded.config == {"x": {"y": 0.1}}
    assert loaded.provenance == "test"


def test_identical_parameters_give_identical_bytes(tmp_path, rng):
    params = {"w": rng.standard_normal(10), "v": rng.standard_normal((2, 2))}
    save_checkpoint(params, "cpc", tmp_path / "one.json", config={"b": 1, "a": [1.5, 2.5]})
    save_checkpoint(dict(reversed(list(params.items()))), "cpc", tmp_path / "two.json",
                    config={"a": [1.5, 2.5], "b": 1})

    data = (tmp_path / "one.json").read_bytes()
    assert data == (tmp_path / "two.json").read_bytes()
    assert data.endswith(b"\n") and b"\r" not in data


def test_non_finite_values_cannot_be_saved(tmp_path):
    with pytest.raises(CheckpointError):
        save_checkpoint({"x": np.array([1.0, np.nan])}, "backend", tmp_path / "bad.json")


def test_shape_and_value_count_must_agree(tmp_path):
    path = tmp_path / "ckpt.json"
    path.write_text(json.dumps({"format_version": 1, "kind": "filterbank",
                                "arrays": [{"name": "filterbank.mu", "shape": [3], "values": [0.1, 0.2]}]}))
    with pytest.raises(CheckpointParseError):
        load_checkpoint(path)


def test_truncated_file(tmp_path, rng):
    path = tmp_path / "ckpt.json"
    save_checkpoint({"x": rng.standard_normal(20)}, "backend", path)
    path.write_bytes(path.read_bytes()[:-40])
    with pytest.raises(CheckpointParseError):
        load_checkpoint(path)


def test_unknown_format_version(tmp_path, rng):
    path = tmp_path / "ckpt.json"
    save_checkpoint({"x": rng.standard_normal(2)}, "backend", path)
    path.write_text(path.read_text().replace('"format_version": 1', '"format_version": 2'))
    with pytest.raises(UnsupportedCheckpointVersionError):
        load_checkpoint(path)


def test_unknown_kind(tmp_path):
    path = tmp_path / "ckpt.json"
    path.write_text(json.dumps({"format_version": 1, "kind": "sincnet", "arrays": []}))
    with pytest.raises(CheckpointParseError):
        load_checkpoint(path)


def test_missing_checkpoint(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "absent.json")


def test_documented_example_loads():
    ckpt = load_checkpoint(DOCS / "example_filterbank_checkpoint.json")
    p = filterbank_from_checkpoint(ckpt)
    assert ckpt.kind == "filterbank"
    assert p.n_filters == 4 and p.kernel_len == 257


# FILTERBANK EXPORT

def test_exported_filterbank_restores_clamps(tmp_path):
    p = mel_init_params(F=6, kernel_len=65, mu_min=0.002, mu_max=0.48)
    export_filterbank(p, tmp_path / "fb.json", 16000, provenance="mel init")

    restored = filterbank_from_checkpoint(load_checkpoint(tmp_path / "fb.json"))

    np.testing.assert_array_equal(restored.mu, p.mu)
    assert (restored.kernel_len, restored.mu_min, restored.mu_max, restored.eps) == (65, 0.002, 0.48, p.eps)


def test_checkpoint_without_filters(tmp_path):
    ckpt = save_checkpoint({"x": np.zeros(2)}, "backend", tmp_path / "x.json")
    with pytest.raises(IncompatibleCheckpointError):
        filterbank_from_checkpoint(ckpt)


# TRANSFER

def test_transfer_rejects_other_filter_count(tmp_path, transfer_config, rng):
    ckpt = export_filterbank(mel_init_params(F=4, kernel_len=65), tmp_path / "fb.json", 16000)
    target = BackendModel.init(transfer_config, rng)
    with pytest.raises(IncompatibleCheckpointError):
        transfer_filters(ckpt, target, transfer_config.train_config(), freeze=True)


def test_transfer_rejects_other_kernel_length(tmp_path, transfer_config, rng):
    ckpt = export_filterbank(mel_init_params(F=8, kernel_len=129), tmp_path / "fb.json", 16000)
    target = BackendModel.init(transfer_config, rng)
    with pytest.raises(IncompatibleCheckpointError):
        transfer_filters(ckpt, target, transfer_config.train_config(), freeze=True)


def test_transfer_copies_mu_and_records_freeze(tmp_path, transfer_config, custom_filters, rng):
    ckpt = export_filterbank(custom_filters, tmp_path / "fb.json", 16000)
    target = BackendModel.init(transfer_config, rng)
    target_mu = target.filterbank.mu.copy()

    model, cfg = transfer_filters(ckpt, target, transfer_config.train_config(), freeze=True)

    np.testing.assert_array_equal(model.filterbank.mu, custom_filters.mu)
    np.testing.assert_array_equal(target.filterbank.mu, target_mu)
    np.testing.assert_array_equal(ckpt.array("filterbank.mu"), custom_filters.mu)
    assert cfg.freeze_filters
    np.testing.assert_array_equal(model.relevance.hidden.W, target.relevance.hidden.W)


def test_transfer_relevance_when_present(tmp_path, transfer_config, rng):
    source = BackendModel.init(transfer_config, np.random.default_rng(11))
    params = {"filterbank.mu": source.filterbank.mu}
    params.update({f"relevance.{k}": v for k, v in source.relevance.params().items()})
    ckpt = save_checkpoint(params, "backend", tmp_path / "src.json",
                           config={"filters": {"kernel_len": 65}})

    model, _ = transfer_filters(ckpt, BackendModel.init(transfer_config, rng), transfer_config.train_config(),
                                freeze=False, include_relevance=True)

    np.testing.assert_array_equal(model.relevance.hidden.W, source.relevance.hidden.W)
    np.testing.assert_array_equal(model.relevance.output.b, source.relevance.output.b)


def test_transfer_relevance_when_absent_keeps_target_net(tmp_path, transfer_config, custom_filters, rng):
    ckpt = export_filterbank(custom_filters, tmp_path / "fb.json", 16000)
    target = BackendModel.init(transfer_config, rng)

    model, _ = transfer_filters(ckpt, target, transfer_config.train_config(), freeze=False,
                                include_relevance=True)

    np.testing.assert_array_equal(model.relevance.hidden.W, target.relevance.hidden.W)
    np.testing.assert_array_equal(model.filterbank.mu, custom_filters.mu)


def test_frozen_transfer_survives_training(tmp_path, small_corpus, transfer_config, custom_filters):
    ckpt = export_filterbank(custom_filters, tmp_path / "fb.json", 16000)
    model = BackendModel.init(transfer_config, np.random.default_rng(0))
    cfg = transfer_config.train_config().model_copy(update={"freeze_filters": True})

    trained, _ = train_supervised(small_corpus / "manifest.csv", cfg, model, init=ckpt)

    np.testing.assert_array_equal(trained.filterbank.mu, custom_filters.mu)


def test_fine_tuned_transfer_moves_filters(tmp_path, small_corpus, transfer_config, custom_filters):
    ckpt = export_filterbank(custom_filters, tmp_path / "fb.json", 16000)
    model = BackendModel.init(transfer_config, np.random.default_rng(0))

    trained, _ = train_supervised(small_corpus / "manifest.csv", transfer_config.train_config(), model, init=ckpt)

    assert not np.array_equal(trained.filterbank.mu, custom_filters.mu)
