"""
Mel scale helpers
mel(f) = 2595 * log10(1 + f / 700). Used to initialize the learnable
center frequencies and as the fixed mel-spectrogram comparison front-end.
"""

import numpy as np

from cosgauss_frontend.audio_io import FrameSequence


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(F: int, n_fft: int, sample_rate: int, f_min: float, f_max: float) -> np.ndarray:
    """
    Triangular filters with edges equally spaced on the mel scale

    Returns:
        F x (n_fft // 2 + 1) weight matrix over rfft bins
    """
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), F + 2))
    bin_hz = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)

    weights = np.zeros((F, bin_hz.shape[0]))
    for i in range(F):
        low, center, high = edges_hz[i], edges_hz[i + 1], edges_hz[i + 2]
        rising = (bin_hz - low) / (center - low)
        falling = (high - bin_hz) / (high - center)
        weights[i] = np.maximum(0.0, np.minimum(rising, falling))
    return weights


def mel_spectrogram(frames: FrameSequence, F: int, f_min: float, f_max: float, eps: float = 1e-10) -> np.ndarray:
    """Log mel energies (F x T) of Hann-tapered frames; not learnable"""
    n_fft = frames.frame_len
    taper = np.hanning(n_fft)
    power = np.abs(np.fft.rfft(frames.frames * taper, n_fft, axis=-1)) ** 2 / n_fft
    weights = mel_filterbank(F, n_fft, frames.sample_rate, f_min, f_max)
    return np.log(power @ weights.T + eps).T
