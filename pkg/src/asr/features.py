"""
Differentiable log-mel feature chain for the toy recognizer.

framing -> Hann window -> DFT -> power -> mel filterbank -> log(max(., floor)) -> optional DCT

Everything runs in float64 torch so input gradients are exact.
"""

import logging
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
import torch
from scipy import fft as sp_fft

from ..config.constants import (
    ASR_HOP,
    ASR_INCLUDE_DCT,
    ASR_LOG_FLOOR_DB,
    ASR_MEL_FILTERS,
    ASR_WINDOW,
    DEFAULT_SAMPLE_RATE,
)
from ..errors import ConfigError, RateMismatchError, ShapeError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FeatureChain:
    window: int = ASR_WINDOW
    hop: int = ASR_HOP
    mel_filter_count: int = ASR_MEL_FILTERS
    log_floor_db: float = ASR_LOG_FLOOR_DB
    include_dct: bool = ASR_INCLUDE_DCT
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        if self.window <= 0 or self.hop <= 0:
            raise ConfigError("feature_chain", "window and hop must be positive")
        if self.mel_filter_count < 2:
            raise ConfigError("feature_chain", "need at least two mel filters")

    @property
    def log_floor(self):
        """Power floor applied before the log (strictly positive)"""
        return 10.0 ** (self.log_floor_db / 10.0)

    @property
    def n_coefficients(self):
        return self.mel_filter_count

    def frame_count(self, length):
        """Frames fully inside a clip of `length` samples; the tail is dropped"""
        if length < self.window:
            return 0
        return 1 + (length - self.window) // self.hop

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def mel_filterbank(mel_filter_count, window, sample_rate):
    """
    Triangular filterbank over [0, Nyquist] whose filters sum to one at every bin.

    Filter centres are equally spaced in mel with the first at 0 Hz and the last at
    Nyquist (half triangles at both ends).

    Returns:
        np.ndarray: (mel_filter_count, window // 2 + 1)
    """
    freqs = np.arange(window // 2 + 1) * sample_rate / window
    mels = hz_to_mel(freqs)
    centres = np.linspace(0.0, hz_to_mel(sample_rate / 2.0), mel_filter_count)
    spacing = centres[1] - centres[0]
    bank = np.maximum(0.0, 1.0 - np.abs(mels[None, :] - centres[:, None]) / spacing)
    bank.flags.writeable = False
    return bank


def mel_centres_hz(chain):
    centres = np.linspace(0.0, hz_to_mel(chain.sample_rate / 2.0), chain.mel_filter_count)
    return mel_to_hz(centres)


@lru_cache(maxsize=8)
def dct_matrix(size):
    """Orthonormal DCT-II as a matrix acting on row vectors"""
    matrix = sp_fft.dct(np.eye(size), type=2, norm="ortho", axis=0).T
    matrix.flags.writeable = False
    return matrix


def _chain_tensors(chain):
    bank = torch.from_numpy(
        np.array(mel_filterbank(chain.mel_filter_count, chain.window, chain.sample_rate))
    )
    window = torch.hann_window(chain.window, periodic=True, dtype=torch.float64)
    return bank, window


def features_tensor(samples, chain):
    """
    Feature matrix (frames x coefficients) from a 1-D float64 sample tensor.

    Raises:
        ShapeError: when the input is shorter than one window
    """
    if samples.shape[-1] < chain.window:
        raise ShapeError(
            f"Clip of {samples.shape[-1]} samples is shorter than the {chain.window}-sample window"
        )
    bank, window = _chain_tensors(chain)
    frames = samples.unfold(-1, chain.window, chain.hop) * window
    spectrum = torch.fft.rfft(frames, dim=-1)
    power = (spectrum.real**2 + spectrum.imag**2) / chain.window
    mel = power @ bank.T
    logmel = torch.log(torch.clamp(mel, min=chain.log_floor))
    if chain.include_dct:
        logmel = logmel @ torch.from_numpy(np.array(dct_matrix(chain.mel_filter_count)))
    return logmel


def features(clip, chain):
    """Feature matrix of an AudioClip as a numpy array"""
    if clip.sample_rate != chain.sample_rate:
        raise RateMismatchError(
            f"Feature chain expects {chain.sample_rate} Hz audio, got {clip.sample_rate} Hz"
        )
    with torch.no_grad():
        return features_tensor(torch.from_numpy(np.array(clip.samples)), chain).numpy()
