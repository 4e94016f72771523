"""
Supervised back-end classifier
frames -> learned spectrogram I -> relevance mask M -> J = I * M
-> [J; delta; delta-delta] -> per-utterance z-score -> BLSTM -> BLSTM
-> mean over time -> one logit -> sigmoid.
Training runs Adam on binary cross entropy through the whole chain, so the
filter center frequencies and the relevance net learn with the classifier.
"""

import copy
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.special import expit

from cosgauss_frontend.audio_io import (
    FrameSequence,
    Waveform,
    frame_signal,
    load_frame_sequences,
    load_waveform,
    read_manifest,
    resample_linear,
)
from cosgauss_frontend.config import RunConfig, TrainConfig
from cosgauss_frontend.errors import CheckpointParseError, IncompatibleCheckpointError, ManifestError, TrainingError
from cosgauss_frontend.filterbank import (
    FilterbankCache,
    FilterbankParams,
    clamp_mu,
    fb_backward,
    fb_forward,
    mel_init_params,
)
from cosgauss_frontend.logger import logger
from cosgauss_frontend.mel import mel_spectrogram
from cosgauss_frontend.metrics import roc_auc
from cosgauss_frontend.nn_core import (
    AdamState,
    BiLstm,
    Dense,
    adam_update,
    bce_loss,
    bilstm_backward,
    bilstm_forward,
)
from cosgauss_frontend.nn_core.lstm import BiLstmCache
from cosgauss_frontend.persistence import Checkpoint, save_checkpoint, transfer_filters
from cosgauss_frontend.relevance import (
    RelevanceCache,
    RelevanceNet,
    apply_mask,
    relevance_backward,
    relevance_forward,
)

STD_FLOOR = 1e-8


@dataclass
class BackendModel:
    filterbank: FilterbankParams
    relevance: RelevanceNet
    blstm1: BiLstm
    blstm2: BiLstm
    head: Dense
    config: RunConfig

    @classmethod
    def init(cls, config: RunConfig, rng: np.random.Generator) -> "BackendModel":
        """Mel-initialized filters and uniformly initialized layers"""
        F, Hc = config.filters.F, config.model.hidden
        return cls(
            filterbank=_mel_filterbank(config),
            relevance=RelevanceNet.init(config.relevance.hidden, rng),
            blstm1=BiLstm.init(3 * F, Hc, rng),
            blstm2=BiLstm.init(2 * Hc, Hc, rng),
            head=Dense.init(2 * Hc, 1, rng),
            config=config,
        )

    @classmethod
    def zeros(cls, config: RunConfig) -> "BackendModel":
        F, Hc = config.filters.F, config.model.hidden
        return cls(
            filterbank=_mel_filterbank(config),
            relevance=RelevanceNet.zeros(config.relevance.hidden),
            blstm1=BiLstm.zeros(3 * F, Hc),
            blstm2=BiLstm.zeros(2 * Hc, Hc),
            head=Dense.zeros(2 * Hc, 1),
            config=config,
        )

    def parameters(self) -> dict[str, np.ndarray]:
        """Every trainable array under a `group.name` key; the arrays are the model's own"""
        params = {"filterbank.mu": self.filterbank.mu}
        for group, values in (("relevance", self.relevance.params()), ("blstm1", self.blstm1.params()),
                              ("blstm2", self.blstm2.params()), ("head", self.head.params())):
            params.update({f"{group}.{name}": array for name, array in values.items()})
        return params


def _mel_filterbank(config: RunConfig) -> FilterbankParams:
    f = config.filters
    return mel_init_params(F=f.F, f_min=f.f_min, f_max=f.f_max, sample_rate=config.audio.sample_rate,
                           kernel_len=f.kernel_len, mu_min=f.mu_min, mu_max=f.mu_max, eps=f.eps)


def frozen_groups(cfg: TrainConfig, model: BackendModel) -> set[str]:
    """Parameter groups that must not receive updates"""
    frozen = set()
    if cfg.freeze_filters or model.config.model.feature_mode == "mel":
        frozen.add("filterbank")
    if cfg.freeze_relevance or not model.config.relevance.enabled:
        frozen.add("relevance")
    return frozen


# FEATURES

def delta_matrix(T: int, window: int) -> sparse.csr_array:
    """Banded T x T regression-delta operator D with edge replication: delta = X @ D.T"""
    offsets = np.arange(-window, window + 1)
    weights = offsets / (2.0 * np.sum(offsets[window + 1:] ** 2))
    rows = np.repeat(np.arange(T), offsets.size)
    cols = np.clip(rows + np.tile(offsets, T), 0, T - 1)
    # duplicate (row, col) pairs at the edges are summed
    return sparse.csr_array((np.tile(weights, T), (rows, cols)), shape=(T, T))


def delta_features(J: np.ndarray, window: int = 2) -> np.ndarray:
    """Stack [J; delta; delta-delta] into a 3F x T matrix"""
    D = delta_matrix(J.shape[1], window)
    delta = (D @ J.T).T
    return np.vstack([J, delta, (D @ delta.T).T])


def delta_backward(grad_X: np.ndarray, window: int = 2) -> np.ndarray:
    F = grad_X.shape[0] // 3
    D = delta_matrix(grad_X.shape[1], window)
    g0, g1, g2 = grad_X[:F], grad_X[F:2 * F], grad_X[2 * F:]
    Dt = D.T
    return g0 + (Dt @ g1.T).T + (Dt @ (Dt @ g2.T)).T


@dataclass
class NormCache:
    std: np.ndarray
    output: np.ndarray
    floored: np.ndarray


def normalize_features(X: np.ndarray, mode: str = "utterance") -> tuple[np.ndarray, NormCache | None]:
    """Per-row z-score over time; rows with std below 1e-8 use the floor"""
    if mode == "none":
        return X, None
    raw_std = X.std(axis=1, keepdims=True)
    floored = raw_std < STD_FLOOR
    std = np.where(floored, STD_FLOOR, raw_std)
    Y = (X - X.mean(axis=1, keepdims=True)) / std
    return Y, NormCache(std=std, output=Y, floored=floored)


def normalize_backward(grad_Y: np.ndarray, cache: NormCache | None) -> np.ndarray:
    if cache is None:
        return grad_Y
    centered = grad_Y - grad_Y.mean(axis=1, keepdims=True)
    full = centered - cache.output * np.mean(grad_Y * cache.output, axis=1, keepdims=True)
    return np.where(cache.floored, centered, full) / cache.std


# MODEL

@dataclass
class ModelCache:
    I: np.ndarray
    M: np.ndarray
    J: np.ndarray
    logit: float
    pooled: np.ndarray
    fb: FilterbankCache | None
    relevance: RelevanceCache | None
    norm: NormCache | None
    blstm1: BiLstmCache
    blstm2: BiLstmCache


def front_end_forward(frames: FrameSequence, model: BackendModel):
    """Learned (or mel) spectrogram I, mask M and weighted spectrogram J, each F x T"""
    cfg = model.config
    if cfg.model.feature_mode == "mel":
        I, fb_cache = mel_spectrogram(frames, cfg.filters.F, cfg.filters.f_min, cfg.filters.f_max,
                                      cfg.filters.eps), None
    else:
        I, fb_cache = fb_forward(frames, model.filterbank)

    if cfg.relevance.enabled:
        M, rel_cache = relevance_forward(I, model.relevance)
        J = apply_mask(I, M)
    else:
        M, rel_cache, J = np.ones_like(I), None, I
    return I, M, J, fb_cache, rel_cache


def forward_frames(frames: FrameSequence, model: BackendModel) -> tuple[float, ModelCache]:
    cfg = model.config
    I, M, J, fb_cache, rel_cache = front_end_forward(frames, model)
    X = delta_features(J, cfg.train.delta_window)
    Z, norm_cache = normalize_features(X, cfg.train.normalization)

    H1, cache1 = bilstm_forward(Z.T, model.blstm1.fwd, model.blstm1.bwd)
    H2, cache2 = bilstm_forward(H1, model.blstm2.fwd, model.blstm2.bwd)
    pooled = H2.mean(axis=0)
    logit = float(pooled @ model.head.W[:, 0] + model.head.b[0])

    cache = ModelCache(I=I, M=M, J=J, logit=logit, pooled=pooled, fb=fb_cache, relevance=rel_cache,
                       norm=norm_cache, blstm1=cache1, blstm2=cache2)
    return float(expit(logit)), cache


def frames_for(w: Waveform, model: BackendModel) -> FrameSequence:
    """Resample to the model's rate and cut into its analysis frames"""
    audio = model.config.audio
    if w.sample_rate != audio.sample_rate:
        w = resample_linear(w, audio.sample_rate)
    return frame_signal(w, audio.frame_len, audio.hop)


def model_forward(w: Waveform, model: BackendModel) -> tuple[float, ModelCache]:
    """
    Probability of the positive class for one recording

    Raises:
        TooShortError: the waveform holds less than one frame
    """
    return forward_frames(frames_for(w, model), model)


def model_backward(dlogit: float, cache: ModelCache, model: BackendModel,
                   frozen: set[str] | frozenset[str] = frozenset()) -> dict[str, np.ndarray]:
    """
    Gradients of the loss for every non-frozen parameter, keyed like parameters()

    Args:
        dlogit: d loss / d logit from the loss function
    """
    grads = {}
    if "head" not in frozen:
        grads["head.W"] = cache.pooled[:, None] * dlogit
        grads["head.b"] = np.array([dlogit])

    T = cache.J.shape[1]
    grad_H2 = np.broadcast_to(model.head.W[:, 0] * dlogit / T, (T, model.head.n_in))
    grad_H1, g2 = bilstm_backward(grad_H2, cache.blstm2, model.blstm2.fwd, model.blstm2.bwd)
    grad_Z, g1 = bilstm_backward(grad_H1, cache.blstm1, model.blstm1.fwd, model.blstm1.bwd)
    for group, group_grads in (("blstm2", g2), ("blstm1", g1)):
        if group not in frozen:
            grads.update({f"{group}.{name}": g for name, g in group_grads.items()})

    need_relevance = "relevance" not in frozen and cache.relevance is not None
    need_filters = "filterbank" not in frozen and cache.fb is not None
    if not (need_relevance or need_filters):
        return grads

    grad_X = normalize_backward(grad_Z.T, cache.norm)
    grad_J = delta_backward(grad_X, model.config.train.delta_window)

    if cache.relevance is not None:
        grad_I, rel_grads = relevance_backward(grad_J, cache.relevance, model.relevance)
        if need_relevance:
            grads.update({f"relevance.{name}": g for name, g in rel_grads.items()})
    else:
        grad_I = grad_J

    if need_filters:
        grads["filterbank.mu"] = fb_backward(grad_I, cache.fb)
    return grads


# TRAINING

def _as_manifest(manifest: pd.DataFrame | str | Path, with_labels: bool = True) -> pd.DataFrame:
    if isinstance(manifest, pd.DataFrame):
        return manifest
    return read_manifest(manifest, with_labels=with_labels)


def _check_both_classes(labels: np.ndarray, what: str) -> None:
    if len(np.unique(labels)) < 2:
        raise ManifestError(f"{what} manifest must contain both classes, found only {np.unique(labels).tolist()}")


def train_supervised(manifest: pd.DataFrame | str | Path, cfg: TrainConfig, model: BackendModel,
                     init: Checkpoint | None = None, include_relevance: bool = False,
                     val_manifest: pd.DataFrame | str | Path | None = None,
                     jobs: int = 1) -> tuple[BackendModel, pd.DataFrame]:
    """
    Train the back-end end to end with Adam on binary cross entropy

    The given model is not modified; a trained copy is returned. With init, the
    filters (and with include_relevance the relevance net) are taken from that
    checkpoint and frozen when cfg.freeze_filters is set.

    Returns:
        (trained model, history with columns epoch, train_loss, val_auc)

    Raises:
        ManifestError: empty or single-class training manifest
        TrainingError: a non-finite loss
    """
    train = _as_manifest(manifest)
    labels = train["label"].to_numpy()
    _check_both_classes(labels, "training")

    if init is not None:
        model, cfg = transfer_filters(init, model, cfg, freeze=cfg.freeze_filters,
                                      include_relevance=include_relevance)
    else:
        model = copy.deepcopy(model)

    val = None
    if val_manifest is not None:
        val = _as_manifest(val_manifest)
        _check_both_classes(val["label"].to_numpy(), "validation")

    audio = model.config.audio
    sequences = load_frame_sequences(train["path"].tolist(), audio.sample_rate, audio.frame_len, audio.hop, jobs)
    val_sequences = None
    if val is not None:
        val_sequences = load_frame_sequences(val["path"].tolist(), audio.sample_rate, audio.frame_len,
                                             audio.hop, jobs)

    frozen = frozen_groups(cfg, model)
    params = model.parameters()
    state = AdamState(lr=cfg.lr)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    logger.info(f"Training on {len(sequences)} recordings for {cfg.epochs} epochs; frozen groups: "
                f"{sorted(frozen) or 'none'}")

    rows = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(sequences))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            summed: dict[str, np.ndarray] = {}
            for j in batch:
                _, cache = forward_frames(sequences[j], model)
                loss, dlogit = bce_loss(cache.logit, int(labels[j]))
                if not np.isfinite(loss):
                    raise TrainingError(f"non-finite loss in epoch {epoch}")
                total += loss
                for name, g in model_backward(dlogit, cache, model, frozen).items():
                    summed[name] = summed[name] + g if name in summed else g.copy()

            adam_update(params, {name: g / len(batch) for name, g in summed.items()}, state)
            clamp_mu(model.filterbank)

        val_auc = np.nan
        if val_sequences is not None:
            scores = [forward_frames(seq, model)[0] for seq in val_sequences]
            val_auc = roc_auc(scores, val["label"].to_numpy())
        train_loss = total / len(sequences)
        rows.append({"epoch": epoch, "train_loss": train_loss, "val_auc": val_auc})
        logger.info(f"Epoch {epoch}/{cfg.epochs}: train_loss={train_loss:.4f} val_auc={val_auc:.4f}")

    return model, pd.DataFrame(rows, columns=["epoch", "train_loss", "val_auc"])


def epochs_to_reach(history: pd.DataFrame, target_auc: float) -> int | None:
    """First epoch whose validation AUC reaches target_auc, or None"""
    reached = history[history["val_auc"] >= target_auc]
    return None if reached.empty else int(reached["epoch"].iloc[0])


# SCORING

def predict_file(model: BackendModel, path: str | Path) -> float:
    return model_forward(load_waveform(path, model.config.audio.sample_rate), model)[0]


def score_manifest(model: BackendModel, manifest: pd.DataFrame | str | Path, jobs: int = 1) -> pd.DataFrame:
    """Score every file of a labelled manifest; rows keep the manifest order"""
    table = _as_manifest(manifest).copy()
    paths = table["path"].tolist()
    if jobs <= 1:
        scores = [predict_file(model, p) for p in paths]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            scores = list(pool.map(lambda p: predict_file(model, p), paths))
    table["score"] = scores
    return table


# CHECKPOINTS

def save_backend(model: BackendModel, path: str | Path, provenance: str = "") -> Checkpoint:
    return save_checkpoint(model.parameters(), "backend", path,
                           config=model.config.model_dump(mode="json"), provenance=provenance)


def model_from_checkpoint(ckpt: Checkpoint) -> BackendModel:
    """
    Rebuild a BackendModel from a backend-kind checkpoint

    Raises:
        IncompatibleCheckpointError: wrong kind, missing or misshaped arrays
        CheckpointParseError: the config echo is not a valid RunConfig
    """
    if ckpt.kind != "backend":
        raise IncompatibleCheckpointError(f"expected a backend checkpoint, got {ckpt.kind}")
    try:
        config = RunConfig.model_validate(ckpt.config)
    except ValueError as e:
        raise CheckpointParseError(f"backend checkpoint carries an invalid config: {e}") from e

    model = BackendModel.zeros(config)
    for name, array in model.parameters().items():
        if not ckpt.has(name):
            raise IncompatibleCheckpointError(f"checkpoint is missing {name}")
        values = ckpt.array(name)
        if values.shape != array.shape:
            raise IncompatibleCheckpointError(f"{name}: checkpoint shape {values.shape}, model expects {array.shape}")
        array[...] = values
    model.filterbank.validate()
    return model


def build_backend(config: RunConfig) -> BackendModel:
    """Freshly initialized model seeded from the training seed"""
    seed = config.train_config().seed
    return BackendModel.init(config, np.random.Generator(np.random.PCG64(seed)))

