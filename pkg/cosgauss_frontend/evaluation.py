"""
K-fold evaluation harness
Stratified train/validation splits, one training run per fold and a report
of per-fold AUCs plus their unweighted mean.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, field_validator

from cosgauss_frontend.audio_io import read_manifest, write_manifest
from cosgauss_frontend.classifier import BackendModel, score_manifest, train_supervised
from cosgauss_frontend.config import FOLD_SEED_OFFSET, RunConfig, TrainConfig
from cosgauss_frontend.errors import FoldFailedError, ManifestError
from cosgauss_frontend.logger import logger
from cosgauss_frontend.metrics import roc_auc
from cosgauss_frontend.persistence import Checkpoint


class FoldSpec(BaseModel):
    fold_id: int
    train: Path
    val: Path

    @field_validator("train", "val")
    @classmethod
    def manifest_exists(cls, v: Path) -> Path:
        if not v.exists():
            raise ValueError(f"manifest not found: {v}")
        return v


def _stratified_blocks(labels: np.ndarray, k: int, val_fraction: float,
                       rng: np.random.Generator) -> list[np.ndarray]:
    """Validation row indices for each fold, drawn per class"""
    per_class = [rng.permutation(np.flatnonzero(labels == c)) for c in (0, 1)]
    if k == 1:
        return [np.sort(np.concatenate([idx[:max(1, int(round(val_fraction * len(idx))))] for idx in per_class]))]
    chunks = [np.array_split(idx, k) for idx in per_class]
    return [np.sort(np.concatenate([c[j] for c in chunks])) for j in range(k)]


def make_folds(manifest: str | Path, k: int, val_fraction: float, seed: int, out_dir: str | Path) -> list[FoldSpec]:
    """
    Write stratified fold manifests and the fold list `folds.csv`

    With k > 1 the validation sets are rotating class-balanced blocks that
    partition the corpus; with k = 1 a single split holds out val_fraction of
    each class.
    """
    table = read_manifest(manifest)
    labels = table["label"].to_numpy()
    for c in (0, 1):
        if (labels == c).sum() < max(k, 2):
            raise ManifestError(f"class {c} has {(labels == c).sum()} files, {k} folds need at least {max(k, 2)}")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.PCG64(seed))
    relative = table.assign(path=[os.path.relpath(p, out_dir) for p in table["path"]])

    folds, rows = [], []
    for j, val_index in enumerate(_stratified_blocks(labels, k, val_fraction, rng), start=1):
        is_val = np.zeros(len(table), dtype=bool)
        is_val[val_index] = True
        train_name, val_name = f"fold{j}_train.csv", f"fold{j}_val.csv"
        write_manifest(relative[~is_val], out_dir / train_name)
        write_manifest(relative[is_val], out_dir / val_name)
        rows.append({"fold_id": j, "train": train_name, "val": val_name})
        folds.append(FoldSpec(fold_id=j, train=out_dir / train_name, val=out_dir / val_name))

    pd.DataFrame(rows).to_csv(out_dir / "folds.csv", header=False, index=False, lineterminator="\n")
    logger.info(f"Wrote {k} folds for {len(table)} files to {out_dir}")
    return folds


def read_fold_list(path: str | Path) -> list[FoldSpec]:
    """Parse a header-less `fold_id,train,val` list; manifest paths are relative to its directory"""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"fold list not found: {path}")
    try:
        table = pd.read_csv(path, header=None, names=["fold_id", "train", "val"], dtype={"train": str, "val": str})
    except (pd.errors.EmptyDataError, ValueError) as e:
        raise ManifestError(f"{path}: unreadable fold list ({e})") from e
    if table.empty:
        raise ManifestError(f"{path}: fold list is empty")

    base = path.parent
    try:
        return [FoldSpec(fold_id=int(row.fold_id), train=base / row.train, val=base / row.val)
                for row in table.itertuples()]
    except ValueError as e:
        raise ManifestError(f"{path}: {e}") from e


def run_fold(fold: FoldSpec, index: int, run_config: RunConfig, pretrain: Checkpoint | None = None,
             include_relevance: bool = False, train_cfg: TrainConfig | None = None) -> float:
    """Train on the fold's training manifest and return the validation AUC"""
    try:
        train = read_manifest(fold.train)
        val = read_manifest(fold.val)
        overlap = set(train["path"]) & set(val["path"])
        if overlap:
            raise ManifestError(f"train and validation manifests share {len(overlap)} files")

        seed = run_config.run.seed + FOLD_SEED_OFFSET + index
        cfg = (train_cfg or run_config.train_config()).model_copy(update={"seed": seed})
        model = BackendModel.init(run_config, np.random.Generator(np.random.PCG64(seed)))
        model, _ = train_supervised(train, cfg, model, init=pretrain, include_relevance=include_relevance)

        scored = score_manifest(model, val)
        auc = roc_auc(scored["score"], scored["label"])
    except Exception as e:
        logger.error(f"Fold {fold.fold_id} failed: {e}")
        raise FoldFailedError(fold.fold_id, e) from e

    logger.info(f"Fold {fold.fold_id}: AUC = {100 * auc:.1f}%")
    return auc


def run_folds(folds: list[FoldSpec], run_config: RunConfig, pretrain: Checkpoint | None = None,
              include_relevance: bool = False, train_cfg: TrainConfig | None = None) -> pd.DataFrame:
    """
    Per-fold validation AUCs followed by an `avg` row with their arithmetic mean

    Folds run on up to run.jobs threads; each fold derives its own seed, so the
    report does not depend on the number of jobs.

    Raises:
        FoldFailedError: the first failing fold, in fold order
    """
    if not folds:
        raise ManifestError("run_folds needs at least one fold")

    def run(indexed: tuple[int, FoldSpec]) -> float:
        index, fold = indexed
        return run_fold(fold, index, run_config, pretrain, include_relevance, train_cfg)

    jobs = run_config.run.jobs
    if jobs <= 1:
        aucs = [run(item) for item in enumerate(folds)]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            aucs = list(pool.map(run, enumerate(folds)))

    report = pd.DataFrame({"fold": [str(f.fold_id) for f in folds], "auc": aucs})
    average = pd.DataFrame({"fold": ["avg"], "auc": [float(np.mean(aucs))]})
    return pd.concat([report, average], ignore_index=True)


def write_report(report: pd.DataFrame, path: str | Path) -> None:
    """`fold,auc` CSV with AUC in percent to one decimal"""
    formatted = report.assign(auc=[f"{100 * auc:.1f}" for auc in report["auc"]])
    formatted.to_csv(path, index=False, lineterminator="\n")
