from cosgauss_frontend.audio_io import Waveform, frame_signal, read_wav, resample_linear, synth_corpus
from cosgauss_frontend.classifier import BackendModel, model_forward, predict_file, train_supervised
from cosgauss_frontend.config import RunConfig, parse_config
from cosgauss_frontend.cpc import CpcModel, pretrain_cpc
from cosgauss_frontend.evaluation import FoldSpec, make_folds, run_folds
from cosgauss_frontend.filterbank import FilterbankParams, build_kernels, fb_backward, fb_forward
from cosgauss_frontend.metrics import roc_auc
from cosgauss_frontend.persistence import load_checkpoint, save_checkpoint, transfer_filters
from cosgauss_frontend.relevance import RelevanceNet, apply_mask, relevance_backward, relevance_forward

__all__ = [
    "BackendModel",
    "CpcModel",
    "FilterbankParams",
    "FoldSpec",
    "RelevanceNet",
    "RunConfig",
    "Waveform",
    "apply_mask",
    "build_kernels",
    "fb_backward",
    "fb_forward",
    "frame_signal",
    "load_checkpoint",
    "make_folds",
    "model_forward",
    "parse_config",
    "predict_file",
    "pretrain_cpc",
    "read_wav",
    "relevance_backward",
    "relevance_forward",
    "resample_linear",
    "roc_auc",
    "run_folds",
    "save_checkpoint",
    "synth_corpus",
    "train_supervised",
    "transfer_filters",
]
