"""
Audio input and output
Reading and writing 16-bit PCM mono WAV files, linear resampling,
rectangular framing and the deterministic synthetic corpus generator.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
import soundfile as sf
from pydantic import BaseModel, Field, model_validator

from cosgauss_frontend.errors import (
    AudioFormatError,
    ManifestError,
    TooShortError,
    UnsupportedAudioError,
)
from cosgauss_frontend.logger import logger

CANONICAL_SAMPLE_RATE = 16000
PCM16_SCALE = 32768.0


@dataclass
class Waveform:
    """Mono audio as float64 amplitudes in [-1, 1] plus its sample rate"""
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise UnsupportedAudioError("waveform must be one-dimensional (mono)")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class FrameSequence:
    """T x s matrix of rectangular analysis frames"""
    frames: np.ndarray
    frame_len: int
    hop: int
    sample_rate: int

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


class SynthSpec(BaseModel):
    n_per_class: int = Field(50, ge=1)
    duration_s: float = Field(1.0, gt=0)
    class0_band: tuple[float, float] = (500.0, 1500.0)
    class1_band: tuple[float, float] = (3000.0, 4000.0)
    snr_db: float = 0.0
    seed: int = 0
    sample_rate: int = Field(CANONICAL_SAMPLE_RATE, gt=0)

    @model_validator(mode="after")
    def check_bands(self):
        nyquist = self.sample_rate / 2
        for name, (low, high) in (("class0_band", self.class0_band), ("class1_band", self.class1_band)):
            if not 0 < low < high < nyquist:
                raise ValueError(f"{name} must satisfy 0 < low < high < {nyquist}, got ({low}, {high})")
        return self


def read_wav(path: str | Path) -> Waveform:
    """
    Read a RIFF/WAVE 16-bit PCM mono file

    Integer samples are scaled by 1/32768, so the result lies in [-1, 1).

    Raises:
        FileNotFoundError: path does not exist
        AudioFormatError: the header cannot be parsed as WAV
        UnsupportedAudioError: the file is multichannel or not 16-bit PCM
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such audio file: {path}")

    try:
        info = sf.info(str(path))
    except (sf.LibsndfileError, RuntimeError) as e:
        raise AudioFormatError(f"{path}: malformed WAV header ({e})") from e

    if info.format not in ("WAV", "WAVEX"):
        raise AudioFormatError(f"{path}: expected RIFF/WAVE, found {info.format}")
    if info.channels != 1:
        raise UnsupportedAudioError(f"{path}: {info.channels} channels, only mono is supported")
    if info.subtype != "PCM_16":
        raise UnsupportedAudioError(f"{path}: subtype {info.subtype}, only 16-bit PCM is supported")

    try:
        ints, sample_rate = sf.read(str(path), dtype="int16", always_2d=False)
    except (sf.LibsndfileError, RuntimeError) as e:
        raise AudioFormatError(f"{path}: could not decode samples ({e})") from e

    return Waveform(samples=ints.astype(np.float64) / PCM16_SCALE, sample_rate=int(sample_rate))


def write_wav(path: str | Path, w: Waveform) -> None:
    """Write a waveform as 16-bit PCM mono, rounding to the nearest 1/32768 step"""
    clipped = np.clip(w.samples, -1.0, (PCM16_SCALE - 1) / PCM16_SCALE)
    ints = np.rint(clipped * PCM16_SCALE).astype(np.int16)
    sf.write(str(path), ints, w.sample_rate, subtype="PCM_16", format="WAV")


def resample_linear(w: Waveform, target_rate: int) -> Waveform:
    """
    Linear interpolation onto a uniform grid at target_rate

    Output length is round(len * target / source). Grid points past the last
    input sample hold the last value.
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate == w.sample_rate:
        return Waveform(samples=w.samples.copy(), sample_rate=w.sample_rate)

    n_out = int(round(len(w) * target_rate / w.sample_rate))
    source_times = np.arange(len(w)) / w.sample_rate
    target_times = np.arange(n_out) / target_rate
    samples = np.interp(target_times, source_times, w.samples)
    return Waveform(samples=samples, sample_rate=target_rate)


def load_waveform(path: str | Path, sample_rate: int = CANONICAL_SAMPLE_RATE) -> Waveform:
    """Read a WAV file and bring it to the canonical sample rate"""
    return resample_linear(read_wav(path), sample_rate)


def frame_signal(w: Waveform, s: int, hop: int) -> FrameSequence:
    """
    Split a waveform into rectangular frames of s samples every hop samples

    Frame t covers samples [t*hop, t*hop + s); a trailing partial frame is dropped.
    """
    if s < 1 or hop < 1:
        raise ValueError(f"frame length and hop must be >= 1, got s={s}, hop={hop}")
    if len(w) < s:
        raise TooShortError(f"signal has {len(w)} samples, frame needs {s}")

    windows = np.lib.stride_tricks.sliding_window_view(w.samples, s)[::hop]
    return FrameSequence(frames=np.ascontiguousarray(windows), frame_len=s, hop=hop, sample_rate=w.sample_rate)


def _tone_burst(rng: np.random.Generator, band: tuple[float, float], n: int, sample_rate: int) -> np.ndarray:
    low, high = band
    margin = 0.1 * (high - low)
    freq = rng.uniform(low + margin, high - margin)
    burst_len = int(rng.uniform(0.3, 0.6) * n)
    onset = int(rng.integers(0, n - burst_len + 1))
    phase = rng.uniform(0.0, 2 * np.pi)

    burst = np.zeros(n)
    t = np.arange(burst_len) / sample_rate
    burst[onset:onset + burst_len] = np.hanning(burst_len) * np.sin(2 * np.pi * freq * t + phase)
    return burst


def synthesize_example(rng: np.random.Generator, band: tuple[float, float], spec: SynthSpec) -> Waveform:
    """White noise plus one Hann-shaped tone burst inside band at spec.snr_db"""
    n = int(round(spec.duration_s * spec.sample_rate))
    noise = rng.standard_normal(n)
    burst = _tone_burst(rng, band, n, spec.sample_rate)

    noise_power = np.mean(noise ** 2)
    burst_power = np.mean(burst ** 2)
    gain = np.sqrt(noise_power * 10 ** (spec.snr_db / 10) / burst_power)
    signal = noise + gain * burst
    signal *= 0.9 / np.max(np.abs(signal))
    return Waveform(samples=signal, sample_rate=spec.sample_rate)


def synth_corpus(spec: SynthSpec, out_dir: str | Path) -> pd.DataFrame:
    """
    Generate a labelled two-class corpus of WAV files plus manifest.csv

    Draws come from numpy's PCG64 generator seeded with spec.seed, class 0
    first, so the corpus is identical for identical specs.

    Returns:
        DataFrame with columns path (relative to out_dir) and label
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.PCG64(spec.seed))

    rows = []
    for label, band in ((0, spec.class0_band), (1, spec.class1_band)):
        for i in range(spec.n_per_class):
            name = f"class{label}_{i:04d}.wav"
            write_wav(out_dir / name, synthesize_example(rng, band, spec))
            rows.append({"path": name, "label": label})

    manifest = pd.DataFrame(rows, columns=["path", "label"])
    write_manifest(manifest, out_dir / "manifest.csv")
    logger.info(f"Synthesized {len(manifest)} files into {out_dir}")
    return manifest


def write_manifest(manifest: pd.DataFrame, path: str | Path) -> None:
    """Header-less `path,label` CSV with LF line endings"""
    manifest[["path", "label"]].to_csv(path, header=False, index=False, lineterminator="\n")


def read_manifest(path: str | Path, with_labels: bool = True) -> pd.DataFrame:
    """
    Read a header-less `path,label` manifest

    Relative paths are resolved against the manifest's directory. With
    with_labels=False only the first column is parsed, so an unlabelled or
    label-shuffled manifest yields the same result.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")

    columns = ["path", "label"] if with_labels else ["path"]
    try:
        manifest = pd.read_csv(path, header=None, names=columns, usecols=range(len(columns)),
                               dtype={"path": str})
    except (pd.errors.EmptyDataError, ValueError) as e:
        raise ManifestError(f"{path}: unreadable manifest ({e})") from e

    if manifest.empty:
        raise ManifestError(f"{path}: manifest is empty")

    base = path.parent
    manifest["path"] = [p if Path(p).is_absolute() else os.path.normpath(base / p) for p in manifest["path"]]

    if with_labels:
        if manifest["label"].isna().any() or not manifest["label"].isin([0, 1]).all():
            raise ManifestError(f"{path}: labels must be 0 or 1")
        manifest["label"] = manifest["label"].astype(int)
    return manifest


def load_frame_sequences(paths: list[str], sample_rate: int, frame_len: int, hop: int,
                         jobs: int = 1) -> list[FrameSequence]:
    """Decode, resample and frame every file; results keep the input order"""
    def load(path: str) -> FrameSequence:
        return frame_signal(load_waveform(path, sample_rate), frame_len, hop)

    if jobs <= 1:
        return [load(p) for p in paths]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(load, paths))
