"""
Cosine-modulated Gaussian filterbank
Kernels g_i(n) = cos(2*pi*mu_i*n) * exp(-n^2 * mu_i^2 / 2) in normalized
frequency units (cycles/sample). The forward pass per frame is
valid convolution -> square -> mean -> log(. + eps); the backward pass
returns the exact gradient with respect to every center frequency mu_i.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.signal import fftconvolve

from cosgauss_frontend.audio_io import FrameSequence
from cosgauss_frontend.errors import FilterbankConfigError, ShapeMismatchError
from cosgauss_frontend.mel import hz_to_mel, mel_to_hz


@dataclass
class FilterbankParams:
    """Learnable center frequencies plus the fixed structure of the bank"""
    mu: np.ndarray
    kernel_len: int = 257
    mu_min: float = 0.004
    mu_max: float = 0.45
    eps: float = 1e-10

    def __post_init__(self):
        self.mu = np.array(self.mu, dtype=np.float64)
        self.validate()

    @property
    def n_filters(self) -> int:
        return self.mu.shape[0]

    def validate(self) -> None:
        if self.mu.ndim != 1 or self.mu.shape[0] < 1:
            raise FilterbankConfigError("mu must be a non-empty vector")
        if self.kernel_len < 1 or self.kernel_len % 2 == 0:
            raise FilterbankConfigError(f"kernel_len must be odd and positive, got {self.kernel_len}")
        if not 0 < self.mu_min <= self.mu_max < 0.5:
            raise FilterbankConfigError(
                f"clamps must satisfy 0 < mu_min <= mu_max < 0.5, got [{self.mu_min}, {self.mu_max}]"
            )
        if self.eps <= 0:
            raise FilterbankConfigError(f"eps must be positive, got {self.eps}")
        if np.any(self.mu < self.mu_min) or np.any(self.mu > self.mu_max):
            raise FilterbankConfigError(f"mu outside [{self.mu_min}, {self.mu_max}]")

    def copy(self) -> "FilterbankParams":
        return FilterbankParams(self.mu.copy(), self.kernel_len, self.mu_min, self.mu_max, self.eps)


@dataclass
class FilterbankCache:
    frames: np.ndarray
    kernels: np.ndarray
    outputs: np.ndarray
    energy: np.ndarray
    params: FilterbankParams = field(repr=False)


def init_mel_centers(F: int, f_min: float, f_max: float, sample_rate: int) -> np.ndarray:
    """
    F center frequencies equally spaced on the mel scale, normalized by sample_rate

    The first and last centers are exactly f_min/sr and f_max/sr.
    """
    if F < 1:
        raise FilterbankConfigError(f"F must be >= 1, got {F}")
    if not 0 < f_min < f_max <= sample_rate / 2:
        raise FilterbankConfigError(
            f"need 0 < f_min < f_max <= sample_rate/2, got f_min={f_min}, f_max={f_max}, sr={sample_rate}"
        )
    hz = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), F))
    hz[0] = f_min
    if F > 1:
        hz[-1] = f_max
    return hz / sample_rate


def mel_init_params(F: int = 64, f_min: float = 64.0, f_max: float = 7200.0, sample_rate: int = 16000,
                    kernel_len: int = 257, mu_min: float = 0.004, mu_max: float = 0.45,
                    eps: float = 1e-10) -> FilterbankParams:
    mu = np.clip(init_mel_centers(F, f_min, f_max, sample_rate), mu_min, mu_max)
    return FilterbankParams(mu=mu, kernel_len=kernel_len, mu_min=mu_min, mu_max=mu_max, eps=eps)


def kernel_taps(kernel_len: int) -> np.ndarray:
    half = (kernel_len - 1) // 2
    return np.arange(-half, half + 1, dtype=np.float64)


def build_kernels(p: FilterbankParams) -> np.ndarray:
    """F x L kernel matrix, row i sampled at n = -(L-1)/2 .. (L-1)/2"""
    # |n| keeps every row exactly symmetric
    n = np.abs(kernel_taps(p.kernel_len))[None, :]
    mu = p.mu[:, None]
    return np.cos(2 * np.pi * mu * n) * np.exp(-(n ** 2) * (mu ** 2) / 2)


def kernel_grad_mu(p: FilterbankParams) -> np.ndarray:
    """F x L matrix of d g_i(n) / d mu_i"""
    n = np.abs(kernel_taps(p.kernel_len))[None, :]
    mu = p.mu[:, None]
    phase = 2 * np.pi * mu * n
    envelope = np.exp(-(n ** 2) * (mu ** 2) / 2)
    return (-2 * np.pi * n * np.sin(phase) - (n ** 2) * mu * np.cos(phase)) * envelope


def fb_forward(frames: FrameSequence, p: FilterbankParams) -> tuple[np.ndarray, FilterbankCache]:
    """
    Learned spectrogram I (F x T) of a frame sequence

    Per frame and filter: valid-mode convolution (s - L + 1 outputs),
    elementwise square, arithmetic mean, log(mean + eps).
    """
    s = frames.frame_len
    if s < p.kernel_len:
        raise FilterbankConfigError(f"frame length {s} is shorter than kernel length {p.kernel_len}")

    kernels = build_kernels(p)
    x = frames.frames
    # (T, 1, s) * (1, F, L) -> (T, F, s - L + 1)
    outputs = fftconvolve(x[:, None, :], kernels[None, :, :], mode="valid", axes=-1)
    energy = np.mean(outputs ** 2, axis=-1)
    spectrogram = np.log(energy + p.eps).T

    return spectrogram, FilterbankCache(frames=x, kernels=kernels, outputs=outputs, energy=energy, params=p)


def fb_backward(grad_I: np.ndarray, cache: FilterbankCache) -> np.ndarray:
    """Gradient of the loss with respect to mu given dL/dI, summed over frames"""
    T, F, P = cache.outputs.shape
    if grad_I.shape != (F, T):
        raise ShapeMismatchError(f"grad_I has shape {grad_I.shape}, expected {(F, T)}")

    grad_energy = grad_I.T / (cache.energy + cache.params.eps)
    grad_outputs = grad_energy[:, :, None] * (2.0 / P) * cache.outputs

    # dL/dg[m] = sum_j dY[j] * x[j + L - 1 - m]: a valid correlation, reversed
    correlation = fftconvolve(cache.frames[:, None, :], grad_outputs[:, :, ::-1], mode="valid", axes=-1)
    grad_kernels = np.sum(correlation[:, :, ::-1], axis=0)

    return np.sum(grad_kernels * kernel_grad_mu(cache.params), axis=1)


def clamp_mu(p: FilterbankParams) -> FilterbankParams:
    """Project mu into [mu_min, mu_max] in place"""
    np.clip(p.mu, p.mu_min, p.mu_max, out=p.mu)
    return p


def frequency_response(kernel: np.ndarray, n_fft: int) -> np.ndarray:
    """Magnitude of the zero-padded DFT of one kernel row (n_fft // 2 + 1 bins)"""
    if n_fft < kernel.shape[-1]:
        raise FilterbankConfigError(f"n_fft={n_fft} is shorter than the kernel ({kernel.shape[-1]})")
    return np.abs(np.fft.rfft(kernel, n_fft))


def bandwidth_3db(magnitude: np.ndarray, n_fft: int) -> float:
    """Width in cycles/sample between the half-power crossings around the peak"""
    peak = int(np.argmax(magnitude))
    level = magnitude[peak] / np.sqrt(2)

    left = peak
    while left > 0 and magnitude[left - 1] >= level:
        left -= 1
    if left > 0:
        lo, hi = magnitude[left - 1], magnitude[left]
        left_edge = left - 1 + (level - lo) / (hi - lo)
    else:
        left_edge = 0.0

    right = peak
    while right < len(magnitude) - 1 and magnitude[right + 1] >= level:
        right += 1
    if right < len(magnitude) - 1:
        hi, lo = magnitude[right], magnitude[right + 1]
        right_edge = right + (hi - level) / (hi - lo)
    else:
        right_edge = float(len(magnitude) - 1)

    return (right_edge - left_edge) / n_fft


def filter_table(p: FilterbankParams, sample_rate: int, n_fft: int = 4096,
                 include_kernels: bool = False) -> pd.DataFrame:
    """One row per filter: center frequency and -3 dB bandwidth, normalized and in Hz"""
    kernels = build_kernels(p)
    bandwidths = [bandwidth_3db(frequency_response(row, n_fft), n_fft) for row in kernels]

    table = pd.DataFrame({
        "filter": np.arange(p.n_filters),
        "mu": p.mu,
        "center_hz": p.mu * sample_rate,
        "bandwidth": bandwidths,
        "bandwidth_hz": np.asarray(bandwidths) * sample_rate,
    })
    if include_kernels:
        taps = pd.DataFrame(kernels, columns=[f"k{j}" for j in range(p.kernel_len)])
        table = pd.concat([table, taps], axis=1)
    return table


def response_table(p: FilterbankParams, sample_rate: int, n_fft: int = 4096) -> pd.DataFrame:
    """Long-format magnitude responses in dB, for frequency-response plots"""
    kernels = build_kernels(p)
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    rows = []
    for i, row in enumerate(kernels):
        magnitude = frequency_response(row, n_fft)
        db = 20 * np.log10(magnitude / magnitude.max() + 1e-12)
        rows.append(pd.DataFrame({"filter": i, "freq_hz": freqs, "magnitude_db": db}))
    return pd.concat(rows, ignore_index=True)


def center_histogram(centers: dict[str, np.ndarray], sample_rate: int, bins: int = 20) -> pd.DataFrame:
    """
    Counts of center frequencies per Hz bin for each labelled set of mu vectors

    Args:
        centers: label -> normalized center frequencies (e.g. "mel", "learned")
        bins: number of equal-width bins spanning 0 .. sample_rate / 2
    """
    edges = np.linspace(0.0, sample_rate / 2, bins + 1)
    table = pd.DataFrame({"bin_low_hz": edges[:-1], "bin_high_hz": edges[1:]})
    for label, mu in centers.items():
        counts, _ = np.histogram(np.asarray(mu) * sample_rate, bins=edges)
        table[label] = counts
    return table
