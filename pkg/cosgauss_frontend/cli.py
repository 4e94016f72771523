"""
Command line interface
`cosgauss <subcommand>`: every subcommand reads an optional config file,
logs the fully resolved configuration and writes only under --out.
Exit codes: 0 success, 1 config or processing error, 2 usage error.
"""

import functools
from pathlib import Path

import click
import numpy as np
import pandas as pd

from cosgauss_frontend.audio_io import load_waveform, synth_corpus
from cosgauss_frontend.classifier import (
    build_backend,
    epochs_to_reach,
    frames_for,
    front_end_forward,
    model_from_checkpoint,
    save_backend,
    score_manifest,
    train_supervised,
)
from cosgauss_frontend.config import FOLD_SEED_OFFSET, RunConfig, format_config, parse_config
from cosgauss_frontend.cpc import pretrain_cpc, save_cpc
from cosgauss_frontend.errors import CosGaussError
from cosgauss_frontend.evaluation import make_folds, read_fold_list, run_folds, write_report
from cosgauss_frontend.filterbank import center_histogram, filter_table, mel_init_params, response_table
from cosgauss_frontend.logger import logger
from cosgauss_frontend.mel import mel_spectrogram
from cosgauss_frontend.persistence import (
    Checkpoint,
    export_filterbank,
    filterbank_from_checkpoint,
    load_checkpoint,
    transfer_filters,
)

config_option = click.option("--config", "config_path", type=click.Path(dir_okay=False),
                             default=None, help="`section.key = value` config file; defaults when omitted")
out_option = click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True,
                          help="Output directory")


def reports_errors(command):
    """Turn library errors into a one-line diagnostic and exit code 1"""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (CosGaussError, OSError) as e:
            logger.error(f"{command.__name__} failed: {e}")
            raise click.ClickException(str(e)) from e
    return wrapper


def load_config(path: str | None) -> RunConfig:
    cfg = parse_config(path)
    logger.info(f"Resolved configuration ({path or 'defaults'}):")
    for line in format_config(cfg):
        logger.info(f"  {line}")
    return cfg


def prepare_out(out_dir: str) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_csv(table: pd.DataFrame, path: Path, header: bool = True) -> None:
    table.to_csv(path, header=header, index=False, lineterminator="\n")
    logger.info(f"Wrote {path}")


def write_matrix(matrix: np.ndarray, path: Path) -> None:
    write_csv(pd.DataFrame(matrix), path, header=False)


@click.group()
def cli():
    """Learnable cosine-modulated Gaussian filterbank front-end for binary audio classification."""


@cli.command()
@config_option
@out_option
@reports_errors
def synth(config_path, out_dir):
    """Generate the labelled two-band synthetic corpus."""
    cfg = load_config(config_path)
    synth_corpus(cfg.synth_spec(), prepare_out(out_dir))


@cli.command("make-folds")
@click.option("--manifest", type=click.Path(dir_okay=False), required=True)
@config_option
@out_option
@reports_errors
def make_folds_command(manifest, config_path, out_dir):
    """Split a labelled manifest into stratified k-fold train/validation manifests."""
    cfg = load_config(config_path)
    make_folds(manifest, cfg.eval.folds, cfg.eval.val_fraction, cfg.run.seed + FOLD_SEED_OFFSET,
               prepare_out(out_dir))


@cli.command("pretrain-cpc")
@config_option
@click.option("--manifest", type=click.Path(dir_okay=False), required=True)
@out_option
@reports_errors
def pretrain_cpc_command(config_path, manifest, out_dir):
    """Self-supervised CPC pretraining of the filterbank (labels are ignored)."""
    cfg = load_config(config_path)
    out = prepare_out(out_dir)
    cpc_cfg = cfg.cpc_config()
    model, history = pretrain_cpc(manifest, cpc_cfg, cfg)

    write_csv(history, out / "history.csv")
    provenance = f"cpc pretraining on {Path(manifest).name}, seed {cpc_cfg.seed}"
    save_cpc(model, cpc_cfg, out / "cpc.json", cfg.audio.sample_rate, provenance)
    export_filterbank(model.filterbank, out / "filterbank.json", cfg.audio.sample_rate, provenance)


def _train_and_save(cfg: RunConfig, manifest: str, val_manifest: str | None, out: Path,
                    init: Checkpoint | None, freeze: bool | None, transfer_relevance: bool, provenance: str):
    train_cfg = cfg.train_config()
    if freeze is not None:
        train_cfg = train_cfg.model_copy(update={"freeze_filters": freeze})

    model, history = train_supervised(manifest, train_cfg, build_backend(cfg), init=init,
                                      include_relevance=transfer_relevance, val_manifest=val_manifest,
                                      jobs=cfg.run.jobs)
    write_csv(history, out / "history.csv")
    save_backend(model, out / "backend.json", provenance)
    export_filterbank(model.filterbank, out / "filterbank.json", cfg.audio.sample_rate, provenance)

    if val_manifest is not None:
        write_csv(score_manifest(model, val_manifest, cfg.run.jobs), out / "scores.csv")
        reached = epochs_to_reach(history, train_cfg.target_auc)
        logger.info(f"Validation AUC {history['val_auc'].iloc[-1]:.4f}; target {train_cfg.target_auc} "
                    f"{'reached at epoch ' + str(reached) if reached else 'not reached'}")


@cli.command("pretrain-supervised")
@config_option
@click.option("--manifest", type=click.Path(dir_okay=False), required=True)
@click.option("--val-manifest", type=click.Path(dir_okay=False), default=None)
@out_option
@reports_errors
def pretrain_supervised_command(config_path, manifest, val_manifest, out_dir):
    """Train the full back-end on a pretraining corpus to obtain transferable filters."""
    cfg = load_config(config_path)
    _train_and_save(cfg, manifest, val_manifest, prepare_out(out_dir), init=None, freeze=None,
                    transfer_relevance=False, provenance=f"supervised pretraining on {Path(manifest).name}")


@cli.command()
@config_option
@click.option("--manifest", type=click.Path(dir_okay=False), required=True)
@click.option("--val-manifest", type=click.Path(dir_okay=False), default=None)
@out_option
@click.option("--init-from", type=click.Path(dir_okay=False), default=None,
              help="Checkpoint whose filters initialize the model")
@click.option("--freeze-filters/--fine-tune", "freeze", default=None,
              help="Keep transferred filters fixed or keep learning them")
@click.option("--transfer-relevance", is_flag=True, help="Also take the relevance net from --init-from")
@reports_errors
def train(config_path, manifest, val_manifest, out_dir, init_from, freeze, transfer_relevance):
    """Train the classifier, optionally starting from pretrained filters."""
    cfg = load_config(config_path)
    init = load_checkpoint(init_from) if init_from else None
    provenance = f"trained on {Path(manifest).name}" + (f", filters from {Path(init_from).name}" if init_from else "")
    _train_and_save(cfg, manifest, val_manifest, prepare_out(out_dir), init=init, freeze=freeze,
                    transfer_relevance=transfer_relevance, provenance=provenance)


@cli.command("eval-folds")
@config_option
@click.option("--folds", "folds_path", type=click.Path(dir_okay=False), required=True,
              help="Header-less fold list `fold_id,train,val`")
@out_option
@click.option("--init-from", type=click.Path(dir_okay=False), default=None)
@click.option("--freeze-filters/--fine-tune", "freeze", default=None)
@click.option("--transfer-relevance", is_flag=True)
@reports_errors
def eval_folds(config_path, folds_path, out_dir, init_from, freeze, transfer_relevance):
    """Train and score every fold; write per-fold and average AUC (%)."""
    cfg = load_config(config_path)
    out = prepare_out(out_dir)
    pretrain = load_checkpoint(init_from) if init_from else None
    train_cfg = cfg.train_config()
    if freeze is not None:
        train_cfg = train_cfg.model_copy(update={"freeze_filters": freeze})

    report = run_folds(read_fold_list(folds_path), cfg, pretrain=pretrain, include_relevance=transfer_relevance,
                       train_cfg=train_cfg)
    write_report(report, out / "report.csv")
    logger.info(f"Average AUC over {len(report) - 1} folds: {100 * report['auc'].iloc[-1]:.1f}%")


@cli.command()
@click.option("--checkpoint", "checkpoint_path", type=click.Path(dir_okay=False), required=True)
@click.option("--wav", type=click.Path(dir_okay=False), required=True)
@config_option
@out_option
@click.option("--mel", "with_mel", is_flag=True, help="Also write the fixed mel spectrogram")
@reports_errors
def extract(checkpoint_path, wav, config_path, out_dir, with_mel):
    """Dump the learned spectrogram I, relevance mask M and weighted spectrogram J of one file."""
    ckpt = load_checkpoint(checkpoint_path)
    if ckpt.kind == "backend":
        if config_path is not None:
            raise click.UsageError("--config cannot be combined with a backend checkpoint; "
                                   "the checkpoint carries its own configuration")
        model = model_from_checkpoint(ckpt)
        logger.info(f"Using the configuration stored in {checkpoint_path}:")
        for line in format_config(model.config):
            logger.info(f"  {line}")
    else:
        cfg = load_config(config_path)
        model, _ = transfer_filters(ckpt, build_backend(cfg), cfg.train_config(), freeze=True)
    out = prepare_out(out_dir)

    frames = frames_for(load_waveform(wav, model.config.audio.sample_rate), model)
    I, M, J, _, _ = front_end_forward(frames, model)
    for name, matrix in (("I", I), ("M", M), ("J", J)):
        write_matrix(matrix, out / f"{name}.csv")
    if with_mel:
        f = model.config.filters
        write_matrix(mel_spectrogram(frames, f.F, f.f_min, f.f_max, f.eps), out / "mel.csv")


@cli.command("filters-dump")
@click.option("--checkpoint", "checkpoint_path", type=click.Path(dir_okay=False), default=None)
@click.option("--mel-init", is_flag=True, help="Dump the mel-initialized filterbank of the config")
@config_option
@out_option
@click.option("--kernels", "include_kernels", is_flag=True, help="Add the kernel taps k0..k{L-1}")
@click.option("--n-fft", type=click.IntRange(min=2), default=4096, show_default=True)
@click.option("--bins", type=click.IntRange(min=1), default=20, show_default=True)
@reports_errors
def filters_dump(checkpoint_path, mel_init, config_path, out_dir, include_kernels, n_fft, bins):
    """Center frequencies, bandwidths and responses of a filterbank, as CSV."""
    if bool(checkpoint_path) == mel_init:
        raise click.UsageError("give exactly one of --checkpoint or --mel-init")
    cfg = load_config(config_path)
    f = cfg.filters

    sample_rate = cfg.audio.sample_rate
    if checkpoint_path:
        ckpt = load_checkpoint(checkpoint_path)
        params = filterbank_from_checkpoint(ckpt)
        sample_rate = ckpt.config.get("audio", {}).get("sample_rate", sample_rate)
    else:
        params = mel_init_params(F=f.F, f_min=f.f_min, f_max=f.f_max, sample_rate=sample_rate,
                                 kernel_len=f.kernel_len, mu_min=f.mu_min, mu_max=f.mu_max, eps=f.eps)
    mel = mel_init_params(F=params.n_filters, f_min=f.f_min, f_max=f.f_max, sample_rate=sample_rate,
                          kernel_len=params.kernel_len, mu_min=params.mu_min, mu_max=params.mu_max, eps=params.eps)

    out = prepare_out(out_dir)
    write_csv(filter_table(params, sample_rate, n_fft, include_kernels), out / "filters.csv")
    write_csv(response_table(params, sample_rate, n_fft), out / "responses.csv")
    centers = {"mel": mel.mu} if mel_init else {"mel": mel.mu, "learned": params.mu}
    write_csv(center_histogram(centers, sample_rate, bins), out / "histogram.csv")


def main():
    cli(prog_name="cosgauss")


if __name__ == "__main__":
    main()
