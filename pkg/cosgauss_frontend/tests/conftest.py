import numpy as np
import pytest

from cosgauss_frontend.audio_io import SynthSpec, Waveform, frame_signal, synth_corpus
from cosgauss_frontend.config import RunConfig, parse_config_text


TINY_CONFIG = """
# F=4, L=33, Hc=8: small enough for finite-difference checks
audio.frame_len = 48
audio.hop = 16
filters.F = 4
filters.kernel_len = 33
relevance.hidden = 5
model.hidden = 8
"""


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(1234))


@pytest.fixture
def tiny_config() -> RunConfig:
    return parse_config_text(TINY_CONFIG)


@pytest.fixture
def tiny_waveform(rng) -> Waveform:
    """192 samples: exactly 10 frames of 48 samples at hop 16"""
    return Waveform(samples=0.3 * rng.standard_normal(192), sample_rate=16000)


@pytest.fixture
def tiny_frames(tiny_waveform):
    return frame_signal(tiny_waveform, 48, 16)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Six short files per class of the two-band synthetic task"""
    out = tmp_path_factory.mktemp("small_corpus")
    spec = SynthSpec(n_per_class=6, duration_s=0.25, seed=7)
    synth_corpus(spec, out)
    return out
