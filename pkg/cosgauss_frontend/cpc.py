"""
Contrastive predictive coding (CPC) for the filterbank
Encodings z_t are the columns of the learned spectrogram (no relevance
mask). An LSTM g_ar summarizes z_1..z_t into c_t, and one affine head per
horizon k scores candidates by <head_k(c_t), z>. The InfoNCE loss pits the
true z_{t+k} against N negatives drawn from the other frames of the batch.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from cosgauss_frontend.audio_io import FrameSequence, frame_signal, load_waveform, read_manifest
from cosgauss_frontend.config import CpcConfig, RunConfig
from cosgauss_frontend.errors import ShapeMismatchError, TooShortError, TrainingError
from cosgauss_frontend.filterbank import (
    FilterbankCache,
    FilterbankParams,
    clamp_mu,
    fb_backward,
    fb_forward,
    mel_init_params,
)
from cosgauss_frontend.logger import logger
from cosgauss_frontend.nn_core import (
    AdamState,
    Dense,
    LstmCell,
    adam_update,
    info_nce_loss,
    lstm_backward,
    lstm_forward,
)
from cosgauss_frontend.persistence import Checkpoint, filterbank_config_echo, save_checkpoint


@dataclass
class CpcModel:
    filterbank: FilterbankParams
    g_ar: LstmCell
    heads: list[Dense]

    @classmethod
    def init(cls, filterbank: FilterbankParams, cfg: CpcConfig, rng: np.random.Generator) -> "CpcModel":
        F = filterbank.n_filters
        g_ar = LstmCell.init(F, cfg.context_dim, rng)
        heads = [Dense.init(cfg.context_dim, F, rng) for _ in range(cfg.K)]
        return cls(filterbank=filterbank.copy(), g_ar=g_ar, heads=heads)

    @classmethod
    def zeros(cls, filterbank: FilterbankParams, cfg: CpcConfig) -> "CpcModel":
        F = filterbank.n_filters
        heads = [Dense.zeros(cfg.context_dim, F) for _ in range(cfg.K)]
        return cls(filterbank=filterbank.copy(), g_ar=LstmCell.zeros(F, cfg.context_dim), heads=heads)

    @property
    def horizon(self) -> int:
        return len(self.heads)

    def parameters(self) -> dict[str, np.ndarray]:
        params = {"filterbank.mu": self.filterbank.mu, "g_ar.W": self.g_ar.W, "g_ar.b": self.g_ar.b}
        for k, head in enumerate(self.heads, start=1):
            params[f"heads.{k}.W"] = head.W
            params[f"heads.{k}.b"] = head.b
        return params


@dataclass
class CpcPlan:
    """Sampled prediction terms: anchor (file, t), horizon k and flat negative indices"""
    file: np.ndarray
    t: np.ndarray
    k: np.ndarray
    negatives: np.ndarray

    def __len__(self) -> int:
        return self.file.shape[0]


@dataclass
class CpcResult:
    loss: float
    accuracy: float
    grads: dict[str, np.ndarray]


def encode_frames(frames: FrameSequence, p: FilterbankParams, horizon: int = 1) -> tuple[np.ndarray, FilterbankCache]:
    """
    T x F encodings; row t is column t of the learned spectrogram

    Raises:
        TooShortError: fewer than horizon + 1 frames
    """
    if frames.n_frames < horizon + 1:
        raise TooShortError(f"{frames.n_frames} frames, CPC with horizon {horizon} needs at least {horizon + 1}")
    I, cache = fb_forward(frames, p)
    return I.T, cache


def context_forward(Z: np.ndarray, g_ar: LstmCell) -> np.ndarray:
    """c_t after consuming z_1..z_t from zero state"""
    H, _ = lstm_forward(Z, g_ar)
    return H[-1]


def cpc_scores(c: np.ndarray, candidates: np.ndarray, head: Dense) -> np.ndarray:
    """<head(c), z_j> for every candidate row; the first is the positive"""
    if candidates.ndim != 2 or candidates.shape[1] != head.n_out:
        raise ShapeMismatchError(f"candidates must be n x {head.n_out}, got {candidates.shape}")
    prediction = c @ head.W + head.b
    return candidates @ prediction


def sample_negatives(positives: np.ndarray, pool_size: int, N: int, rng: np.random.Generator) -> np.ndarray:
    """N uniform draws from range(pool_size) per row, never the row's positive"""
    if pool_size < 2:
        raise TooShortError("negative sampling needs at least two frames in the batch")
    draws = rng.integers(0, pool_size - 1, size=(positives.shape[0], N))
    return draws + (draws >= positives[:, None])


def _offsets(lengths: list[int]) -> np.ndarray:
    return np.concatenate([[0], np.cumsum(lengths)[:-1]]).astype(int)


def plan_batch(lengths: list[int], cfg: CpcConfig, rng: np.random.Generator) -> CpcPlan:
    """Up to anchors_per_file anchors per sequence, each predicting every horizon 1..K"""
    files, times = [], []
    for b, T in enumerate(lengths):
        valid = T - cfg.K
        chosen = rng.choice(valid, size=min(cfg.anchors_per_file, valid), replace=False)
        files.append(np.full(chosen.shape[0], b))
        times.append(np.sort(chosen))
    file = np.repeat(np.concatenate(files), cfg.K)
    t = np.repeat(np.concatenate(times), cfg.K)
    k = np.tile(np.arange(1, cfg.K + 1), file.shape[0] // cfg.K)
    positives = _offsets(lengths)[file] + t + k
    return CpcPlan(file=file, t=t, k=k, negatives=sample_negatives(positives, sum(lengths), cfg.N, rng))


def plan_random_anchors(lengths: list[int], K: int, N: int, n_anchors: int, rng: np.random.Generator) -> CpcPlan:
    """n_anchors independent terms with uniformly drawn file, time and horizon"""
    lengths_arr = np.asarray(lengths)
    file = rng.integers(0, len(lengths), size=n_anchors)
    k = rng.integers(1, K + 1, size=n_anchors)
    t = np.floor(rng.random(n_anchors) * (lengths_arr[file] - k)).astype(int)
    positives = _offsets(lengths)[file] + t + k
    return CpcPlan(file=file, t=t, k=k, negatives=sample_negatives(positives, int(lengths_arr.sum()), N, rng))


def cpc_objective(model: CpcModel, sequences: list[FrameSequence], plan: CpcPlan,
                  with_grads: bool = True) -> CpcResult:
    """
    Mean InfoNCE loss and contrastive accuracy over the planned terms

    Gradients reach the heads, g_ar and mu; the positive and every negative
    encoding receive their share through the candidate scores.
    """
    encoded = [encode_frames(seq, model.filterbank, model.horizon) for seq in sequences]
    contexts = [lstm_forward(Z, model.g_ar) for Z, _ in encoded]
    pool = np.vstack([Z for Z, _ in encoded])
    offsets = _offsets([Z.shape[0] for Z, _ in encoded])
    n_terms = len(plan)

    grad_pool = np.zeros_like(pool)
    grad_contexts = [np.zeros_like(H) for H, _ in contexts]
    head_grads = [{"W": np.zeros_like(h.W), "b": np.zeros_like(h.b)} for h in model.heads]

    total, hits = 0.0, 0
    for r in range(n_terms):
        b, t, k = int(plan.file[r]), int(plan.t[r]), int(plan.k[r])
        head = model.heads[k - 1]
        c = contexts[b][0][t]
        index = np.concatenate([[offsets[b] + t + k], plan.negatives[r]])
        candidates = pool[index]
        scores = cpc_scores(c, candidates, head)

        loss, d_pos, d_negs = info_nce_loss(scores[0], scores[1:])
        total += loss
        hits += int(scores[0] > scores[1:].max())
        if not with_grads:
            continue

        d_scores = np.concatenate([[d_pos], d_negs]) / n_terms
        prediction = c @ head.W + head.b
        d_prediction = candidates.T @ d_scores
        np.add.at(grad_pool, index, d_scores[:, None] * prediction[None, :])
        head_grads[k - 1]["W"] += np.outer(c, d_prediction)
        head_grads[k - 1]["b"] += d_prediction
        grad_contexts[b][t] += head.W @ d_prediction

    grads: dict[str, np.ndarray] = {}
    if with_grads:
        grads["g_ar.W"] = np.zeros_like(model.g_ar.W)
        grads["g_ar.b"] = np.zeros_like(model.g_ar.b)
        grads["filterbank.mu"] = np.zeros_like(model.filterbank.mu)
        for b, ((Z, fb_cache), (_, lstm_cache)) in enumerate(zip(encoded, contexts)):
            grad_Z, g = lstm_backward(grad_contexts[b], lstm_cache, model.g_ar)
            grads["g_ar.W"] += g["W"]
            grads["g_ar.b"] += g["b"]
            grad_Z += grad_pool[offsets[b]:offsets[b] + Z.shape[0]]
            grads["filterbank.mu"] += fb_backward(grad_Z.T, fb_cache)
        for k, g in enumerate(head_grads, start=1):
            grads[f"heads.{k}.W"] = g["W"]
            grads[f"heads.{k}.b"] = g["b"]

    return CpcResult(loss=total / n_terms, accuracy=hits / n_terms, grads=grads)


def contrastive_accuracy(model: CpcModel, sequences: list[FrameSequence], cfg: CpcConfig,
                         rng: np.random.Generator, n_anchors: int = 1000) -> float:
    """Fraction of random anchors whose positive outscores all N negatives; no training"""
    plan = plan_random_anchors([seq.n_frames for seq in sequences], model.horizon, cfg.N, n_anchors, rng)
    return cpc_objective(model, sequences, plan, with_grads=False).accuracy


def _load_cpc_sequences(paths: list[str], run_config: RunConfig, min_frames: int) -> list[FrameSequence]:
    audio = run_config.audio
    sequences = []
    for path in paths:
        try:
            frames = frame_signal(load_waveform(path, audio.sample_rate), audio.frame_len, audio.hop)
        except TooShortError as e:
            logger.warning(f"Skipping {path}: {e}")
            continue
        if frames.n_frames < min_frames:
            logger.warning(f"Skipping {path}: {frames.n_frames} frames, CPC needs {min_frames}")
            continue
        sequences.append(frames)
    return sequences


def pretrain_cpc(manifest: pd.DataFrame | str | Path, cfg: CpcConfig, run_config: RunConfig,
                 model: CpcModel | None = None) -> tuple[CpcModel, pd.DataFrame]:
    """
    Self-supervised pretraining of mu, g_ar and the prediction heads

    Only the path column of the manifest is read. Files shorter than K + 1
    frames are skipped with a warning.

    Returns:
        (model, history with columns step, loss, contrastive_accuracy)

    Raises:
        TooShortError: every file was skipped
        TrainingError: a non-finite loss
    """
    table = manifest if isinstance(manifest, pd.DataFrame) else read_manifest(manifest, with_labels=False)
    sequences = _load_cpc_sequences(table["path"].tolist(), run_config, cfg.K + 1)
    if not sequences:
        raise TooShortError(f"no file in the manifest yields the {cfg.K + 1} frames CPC needs")

    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    if model is None:
        f = run_config.filters
        filterbank = mel_init_params(F=f.F, f_min=f.f_min, f_max=f.f_max, sample_rate=run_config.audio.sample_rate,
                                     kernel_len=f.kernel_len, mu_min=f.mu_min, mu_max=f.mu_max, eps=f.eps)
        model = CpcModel.init(filterbank, cfg, rng)

    params = model.parameters()
    state = AdamState(lr=cfg.lr)
    batch_size = min(cfg.batch_size, len(sequences))
    logger.info(f"CPC pretraining on {len(sequences)} files for {cfg.steps} steps "
                f"(K={cfg.K}, N={cfg.N}, chance accuracy {1 / (cfg.N + 1):.3f})")

    rows = []
    for step in range(1, cfg.steps + 1):
        chosen = np.sort(rng.choice(len(sequences), size=batch_size, replace=False))
        batch = [sequences[j] for j in chosen]
        plan = plan_batch([seq.n_frames for seq in batch], cfg, rng)
        result = cpc_objective(model, batch, plan)
        if not np.isfinite(result.loss):
            raise TrainingError(f"non-finite CPC loss at step {step}")

        adam_update(params, result.grads, state)
        clamp_mu(model.filterbank)
        rows.append({"step": step, "loss": result.loss, "contrastive_accuracy": result.accuracy})
        if step % 50 == 0 or step == cfg.steps:
            logger.info(f"CPC step {step}/{cfg.steps}: loss={result.loss:.4f} accuracy={result.accuracy:.3f}")

    return model, pd.DataFrame(rows, columns=["step", "loss", "contrastive_accuracy"])


def save_cpc(model: CpcModel, cfg: CpcConfig, path: str | Path, sample_rate: int,
             provenance: str = "") -> Checkpoint:
    config = {
        "filters": filterbank_config_echo(model.filterbank),
        "audio": {"sample_rate": sample_rate},
        "cpc": cfg.model_dump(mode="json"),
    }
    return save_checkpoint(model.parameters(), "cpc", path, config=config, provenance=provenance)
