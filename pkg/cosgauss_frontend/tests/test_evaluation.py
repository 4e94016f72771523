"""
Tests for fold construction, the fold list format and the k-fold report.
"""

import pandas as pd
import pytest

from cosgauss_frontend.audio_io import read_manifest, write_manifest
from cosgauss_frontend.config import parse_config_text
from cosgauss_frontend.errors import FoldFailedError, ManifestError
from cosgauss_frontend.evaluation import FoldSpec, make_folds, read_fold_list, run_folds, write_report

FOLD_CONFIG = """
audio.frame_len = 256
audio.hop = 128
filters.F = 8
filters.kernel_len = 65
relevance.hidden = 5
model.hidden = 8
train.epochs = 1
"""


@pytest.fixture
def folds(small_corpus, tmp_path):
    return make_folds(small_corpus / "manifest.csv", 3, 0.2, seed=100, out_dir=tmp_path / "folds")


def test_folds_are_stratified_and_partition_the_corpus(folds, small_corpus):
    corpus = set(read_manifest(small_corpus / "manifest.csv")["path"])
    val_paths = []
    for fold in folds:
        train, val = read_manifest(fold.train), read_manifest(fold.val)
        assert not set(train["path"]) & set(val["path"])
        assert set(train["path"]) | set(val["path"]) == corpus
        assert val["label"].value_counts().to_dict() == {0: 2, 1: 2}
        val_paths.extend(val["path"])

    assert sorted(val_paths) == sorted(corpus)


def test_fold_list_reads_back(folds, tmp_path):
    listed = read_fold_list(tmp_path / "folds" / "folds.csv")
    assert [f.fold_id for f in listed] == [1, 2, 3]
    assert [f.train.resolve() for f in listed] == [f.train.resolve() for f in folds]
    lines = (tmp_path / "folds" / "folds.csv").read_text().splitlines()
    assert lines[0] == "1,fold1_train.csv,fold1_val.csv"


def test_single_split_holds_out_a_fraction(small_corpus, tmp_path):
    (fold,) = make_folds(small_corpus / "manifest.csv", 1, 0.34, seed=1, out_dir=tmp_path)
    assert read_manifest(fold.val)["label"].value_counts().to_dict() == {0: 2, 1: 2}
    assert len(read_manifest(fold.train)) == 8


def test_folds_need_enough_files_per_class(small_corpus, tmp_path):
    with pytest.raises(ManifestError):
        make_folds(small_corpus / "manifest.csv", 7, 0.2, seed=1, out_dir=tmp_path)


def test_missing_fold_manifest(tmp_path):
    (tmp_path / "folds.csv").write_text("1,absent_train.csv,absent_val.csv\n")
    with pytest.raises(ManifestError):
        read_fold_list(tmp_path / "folds.csv")


def test_run_folds_reports_each_fold_and_the_mean(small_corpus, tmp_path):
    config = parse_config_text(FOLD_CONFIG)
    folds = make_folds(small_corpus / "manifest.csv", 2, 0.2, seed=100, out_dir=tmp_path)

    report = run_folds(folds, config)

    assert report["fold"].tolist() == ["1", "2", "avg"]
    assert report["auc"].between(0, 1).all()
    assert report["auc"].iloc[-1] == pytest.approx(report["auc"].iloc[:2].mean())

    again = run_folds(folds, parse_config_text(FOLD_CONFIG + "run.jobs = 2\n"))
    pd.testing.assert_frame_equal(report, again)


def test_failing_fold_names_its_id(small_corpus, tmp_path):
    manifest = read_manifest(small_corpus / "manifest.csv")
    write_manifest(manifest, tmp_path / "train.csv")
    write_manifest(manifest[manifest["label"] == 0], tmp_path / "val.csv")
    fold = FoldSpec(fold_id=4, train=tmp_path / "train.csv", val=tmp_path / "val.csv")

    with pytest.raises(FoldFailedError) as info:
        run_folds([fold], parse_config_text(FOLD_CONFIG))

    assert info.value.fold_id == 4


def test_report_is_written_in_percent(tmp_path):
    report = pd.DataFrame({"fold": ["1", "2", "avg"], "auc": [0.8, 0.9, 0.85]})
    write_report(report, tmp_path / "report.csv")
    assert (tmp_path / "report.csv").read_text() == "fold,auc\n1,80.0\n2,90.0\navg,85.0\n"
