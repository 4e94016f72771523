"""
Checkpoints and filter transfer
A checkpoint is one UTF-8 JSON document: format_version, kind, named
row-major arrays, a config echo and a provenance note. Rendering is
canonical (sorted keys, 17 significant digits) so identical parameters give
byte-identical files and save -> load is bit-exact.
"""

import copy
import json
import os
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ValidationError, model_validator

from cosgauss_frontend.config import TrainConfig
from cosgauss_frontend.errors import (
    CheckpointError,
    CheckpointParseError,
    IncompatibleCheckpointError,
    UnsupportedCheckpointVersionError,
)
from cosgauss_frontend.filterbank import FilterbankParams
from cosgauss_frontend.logger import logger

FORMAT_VERSION = 1
CheckpointKind = Literal["filterbank", "cpc", "backend"]
RELEVANCE_ARRAYS = ("W1", "b1", "W2", "b2")


class NamedArray(BaseModel):
    name: str
    shape: list[int]
    values: list[float]

    @model_validator(mode="after")
    def check_size(self):
        expected = int(np.prod(self.shape)) if self.shape else 1
        if expected != len(self.values):
            raise ValueError(f"array {self.name}: shape {self.shape} needs {expected} values, found {len(self.values)}")
        return self


class Checkpoint(BaseModel):
    format_version: int
    kind: CheckpointKind
    arrays: list[NamedArray]
    config: dict[str, Any] = {}
    provenance: str = ""

    def names(self) -> list[str]:
        return [a.name for a in self.arrays]

    def has(self, name: str) -> bool:
        return name in self.names()

    def array(self, name: str) -> np.ndarray:
        for a in self.arrays:
            if a.name == name:
                return np.array(a.values, dtype=np.float64).reshape(a.shape)
        raise KeyError(f"checkpoint has no array named {name}")


def _render(value: Any, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f'{pad}  {json.dumps(str(k))}: {_render(value[k], indent + 1)}' for k in sorted(value)]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(value, (list, tuple)):
        if any(isinstance(v, dict) for v in value):
            items = [f"{pad}  {_render(v, indent + 1)}" for v in value]
            return "[\n" + ",\n".join(items) + f"\n{pad}]"
        return "[" + ",".join(_render(v, indent) for v in value) + "]"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if not np.isfinite(value):
            raise CheckpointError(f"cannot serialize non-finite value {value}")
        return format(float(value), ".17g")
    if value is None:
        return "null"
    return json.dumps(str(value))


def render_checkpoint(checkpoint: Checkpoint) -> str:
    return _render(checkpoint.model_dump()) + "\n"


def save_checkpoint(params: dict[str, np.ndarray], kind: CheckpointKind, path: str | Path,
                    config: dict[str, Any] | None = None, provenance: str = "") -> Checkpoint:
    """Write named parameter arrays as a canonical JSON checkpoint"""
    arrays = [
        NamedArray(name=name, shape=list(np.shape(params[name])),
                   values=np.asarray(params[name], dtype=np.float64).ravel(order="C").tolist())
        for name in sorted(params)
    ]
    checkpoint = Checkpoint(format_version=FORMAT_VERSION, kind=kind, arrays=arrays,
                            config=config or {}, provenance=provenance)

    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(render_checkpoint(checkpoint), encoding="utf-8", newline="\n")
    os.replace(tmp, path)
    logger.info(f"Saved {kind} checkpoint with {len(arrays)} arrays to {path}")
    return checkpoint


def load_checkpoint(path: str | Path) -> Checkpoint:
    """
    Parse and validate a checkpoint; nothing is returned unless all of it is valid

    Raises:
        FileNotFoundError: path does not exist
        CheckpointParseError: invalid JSON or schema / shape violation
        UnsupportedCheckpointVersionError: unknown format_version
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such checkpoint: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CheckpointParseError(f"{path}: not a valid checkpoint document ({e})") from e

    if not isinstance(data, dict) or not isinstance(data.get("format_version"), int):
        raise CheckpointParseError(f"{path}: missing integer format_version")
    if data["format_version"] != FORMAT_VERSION:
        raise UnsupportedCheckpointVersionError(
            f"{path}: format_version {data['format_version']} is not supported (expected {FORMAT_VERSION})"
        )

    try:
        return Checkpoint.model_validate(data)
    except ValidationError as e:
        raise CheckpointParseError(f"{path}: {e.errors()[0]['msg']}") from e


def filterbank_config_echo(p: FilterbankParams) -> dict[str, Any]:
    return {"F": p.n_filters, "kernel_len": p.kernel_len, "mu_min": p.mu_min, "mu_max": p.mu_max, "eps": p.eps}


def export_filterbank(p: FilterbankParams, path: str | Path, sample_rate: int,
                      provenance: str = "") -> Checkpoint:
    """Filterbank-kind checkpoint carrying only mu and its structural config"""
    config = {"filters": filterbank_config_echo(p), "audio": {"sample_rate": sample_rate}}
    return save_checkpoint({"filterbank.mu": p.mu}, "filterbank", path, config=config, provenance=provenance)


def filterbank_from_checkpoint(ckpt: Checkpoint) -> FilterbankParams:
    """The filterbank stored in any checkpoint kind, with the clamps of its config echo"""
    if not ckpt.has("filterbank.mu"):
        raise IncompatibleCheckpointError(f"{ckpt.kind} checkpoint carries no filterbank.mu")
    echo = ckpt.config.get("filters", {})
    try:
        return FilterbankParams(mu=ckpt.array("filterbank.mu"), kernel_len=echo["kernel_len"],
                                mu_min=echo["mu_min"], mu_max=echo["mu_max"], eps=echo["eps"])
    except KeyError as e:
        raise CheckpointParseError(f"{ckpt.kind} checkpoint config lacks filters.{e.args[0]}") from e


def transfer_filters(ckpt: Checkpoint, target, cfg: TrainConfig, freeze: bool,
                     include_relevance: bool = False):
    """
    Copy of target whose mu (and optionally relevance net) come from ckpt

    Neither ckpt nor target is modified. The returned TrainConfig records the
    freeze decision so train_supervised leaves the filters untouched.

    Returns:
        (model, TrainConfig)

    Raises:
        IncompatibleCheckpointError: F or kernel length differs from target
    """
    if not ckpt.has("filterbank.mu"):
        raise IncompatibleCheckpointError(f"{ckpt.kind} checkpoint carries no filterbank.mu")
    mu = ckpt.array("filterbank.mu")
    fb = target.filterbank

    if mu.shape != (fb.n_filters,):
        raise IncompatibleCheckpointError(f"checkpoint has F={mu.shape[0]}, target model has F={fb.n_filters}")
    ckpt_len = ckpt.config.get("filters", {}).get("kernel_len")
    if ckpt_len != fb.kernel_len:
        raise IncompatibleCheckpointError(f"checkpoint kernel_len={ckpt_len}, target model has {fb.kernel_len}")
    if np.any(mu < fb.mu_min) or np.any(mu > fb.mu_max):
        raise IncompatibleCheckpointError(f"checkpoint mu outside the target clamps [{fb.mu_min}, {fb.mu_max}]")

    model = copy.deepcopy(target)
    model.filterbank.mu[:] = mu

    if include_relevance:
        names = [f"relevance.{n}" for n in RELEVANCE_ARRAYS]
        if all(ckpt.has(n) for n in names):
            relevance = model.relevance.params()
            for n in RELEVANCE_ARRAYS:
                values = ckpt.array(f"relevance.{n}")
                if values.shape != relevance[n].shape:
                    raise IncompatibleCheckpointError(
                        f"relevance.{n}: checkpoint shape {values.shape}, target {relevance[n].shape}"
                    )
                relevance[n][...] = values
        else:
            logger.warning(f"{ckpt.kind} checkpoint has no relevance net; transferring filters only")

    logger.info(f"Transferred {fb.n_filters} filters from {ckpt.kind} checkpoint "
                f"({'frozen' if freeze else 'fine-tuned'})")
    return model, cfg.model_copy(update={"freeze_filters": freeze})
