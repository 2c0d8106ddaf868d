"""
Audio containers and the deterministic signal plumbing every other module uses:
framing/STFT, saturating mixing, band-limited resampling and noise injection.
All functions are pure; clips are immutable once built.
"""

import logging
from dataclasses import dataclass
from math import gcd

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import fft as sp_fft
from scipy import signal as sp_signal

from ..config.constants import (
    PSY_WINDOW_SIZE,
    PSY_HOP,
    RESAMPLE_KAISER_BETA,
)
from ..errors import DomainError, RateMismatchError, ShapeError

logger = logging.getLogger(__name__)


def _frozen(array):
    array = np.array(array, dtype=np.float64, copy=True).reshape(-1)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono PCM signal; the carrier for speech, perturbations and music alike"""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = _frozen(self.samples)
        if not np.all(np.isfinite(samples)):
            raise DomainError("Audio samples must be finite")
        if int(self.sample_rate) <= 0 or int(self.sample_rate) != self.sample_rate:
            raise DomainError(f"Invalid sample rate: {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return len(self.samples)

    def __eq__(self, other):
        if not isinstance(other, AudioClip):
            return NotImplemented
        return self.sample_rate == other.sample_rate and np.array_equal(
            self.samples, other.samples
        )

    __hash__ = None

    @classmethod
    def silence(cls, length, sample_rate):
        return cls(np.zeros(int(length)), sample_rate)

    @property
    def duration(self):
        """Length in seconds"""
        return len(self.samples) / self.sample_rate

    @property
    def rms(self):
        if len(self.samples) == 0:
            return 0.0
        return float(np.sqrt(np.mean(self.samples**2)))

    @property
    def peak(self):
        if len(self.samples) == 0:
            return 0.0
        return float(np.max(np.abs(self.samples)))

    def pad_to(self, length):
        """Zero-pad (or keep) to at least `length` samples"""
        if length <= len(self.samples):
            return self
        padded = np.zeros(int(length))
        padded[: len(self.samples)] = self.samples
        return AudioClip(padded, self.sample_rate)

    def truncate(self, length):
        return AudioClip(self.samples[: int(length)], self.sample_rate)

    def with_samples(self, samples):
        return AudioClip(samples, self.sample_rate)


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """Complex STFT frames, one row per analysis window"""

    frames: np.ndarray
    window_size: int
    hop: int
    sample_rate: int

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def n_bins(self):
        return self.window_size // 2 + 1

    def bin_frequencies(self):
        return np.arange(self.n_bins) * self.sample_rate / self.window_size

    def magnitude_db(self, floor_db=-200.0):
        magnitude = np.abs(self.frames)
        with np.errstate(divide="ignore"):
            db = 20.0 * np.log10(magnitude)
        return np.maximum(db, floor_db)


def modified_hann(window_size):
    """Power-normalised periodic Hann window: sqrt(8/3) * 0.5 * (1 - cos(2 pi n / N))"""
    n = np.arange(window_size)
    return np.sqrt(8.0 / 3.0) * 0.5 * (1.0 - np.cos(2.0 * np.pi * n / window_size))


def frame_count(length, window_size, hop):
    """Number of analysis frames covering `length` samples (tail zero-padded)"""
    if length <= 0:
        return 0
    if length <= window_size:
        return 1
    return int(np.ceil((length - window_size) / hop)) + 1


def frame_signal(samples, window_size, hop):
    """Split samples into overlapping frames, zero-padding the tail"""
    n_frames = frame_count(len(samples), window_size, hop)
    if n_frames == 0:
        return np.zeros((0, window_size))
    padded = np.zeros((n_frames - 1) * hop + window_size)
    padded[: len(samples)] = samples
    return sliding_window_view(padded, window_size)[::hop][:n_frames]


def stft(clip, window_size=PSY_WINDOW_SIZE, hop=PSY_HOP):
    """
    Short-time Fourier transform with the modified Hann window.

    Args:
        clip (AudioClip): Input signal
        window_size (int): Window length N in samples (power of two)
        hop (int): Hop size in samples, at most window_size

    Returns:
        Spectrogram: n_frames x (N/2 + 1) complex coefficients
    """
    if window_size <= 0:
        raise DomainError(f"Window size must be positive: {window_size}")
    if window_size & (window_size - 1):
        raise DomainError(f"Window size must be a power of two: {window_size}")
    if hop <= 0 or hop > window_size:
        raise DomainError(f"Hop must be in (0, window_size]: {hop}")

    frames = frame_signal(clip.samples, window_size, hop)
    if frames.shape[0] == 0:
        coefficients = np.zeros((0, window_size // 2 + 1), dtype=np.complex128)
    else:
        coefficients = sp_fft.rfft(frames * modified_hann(window_size), axis=1)
    return Spectrogram(coefficients, window_size, hop, clip.sample_rate)


def mix(a, b, offset=0):
    """
    Saturating sum of two clips with `b` delayed by `offset` samples.

    The result spans max(len(a), offset + len(b)) samples and is clipped to [-1, 1].
    """
    if a.sample_rate != b.sample_rate:
        raise RateMismatchError(
            f"Cannot mix {a.sample_rate} Hz with {b.sample_rate} Hz audio"
        )
    if offset < 0:
        raise ShapeError(f"Mix offset must be non-negative: {offset}")
    offset = int(offset)
    length = max(len(a), offset + len(b))
    out = np.zeros(length)
    out[: len(a)] += a.samples
    out[offset : offset + len(b)] += b.samples
    return AudioClip(np.clip(out, -1.0, 1.0), a.sample_rate)


def resample(clip, target_rate):
    """
    Band-limited polyphase resampling (Kaiser windowed sinc, >= 60 dB stopband).

    Content above the lower of the two Nyquist rates is removed; the output length
    is round(len * target_rate / source_rate).
    """
    if target_rate <= 0:
        raise DomainError(f"Target rate must be positive: {target_rate}")
    target_rate = int(target_rate)
    source_rate = clip.sample_rate
    if target_rate == source_rate:
        return clip

    length = int(round(len(clip) * target_rate / source_rate))
    if len(clip) == 0 or length == 0:
        return AudioClip(np.zeros(length), target_rate)

    common = gcd(target_rate, source_rate)
    up, down = target_rate // common, source_rate // common
    out = sp_signal.resample_poly(
        clip.samples, up, down, window=("kaiser", RESAMPLE_KAISER_BETA)
    )
    if len(out) < length:
        out = np.concatenate([out, np.zeros(length - len(out))])
    return AudioClip(out[:length], target_rate)


def add_white_noise(clip, sigma, seed):
    """Add i.i.d. Gaussian noise N(0, sigma^2), clipped to [-1, 1]; deterministic per seed"""
    if sigma < 0:
        raise DomainError(f"Noise sigma must be non-negative: {sigma}")
    if sigma == 0:
        return clip
    rng = np.random.default_rng(seed)
    noisy = clip.samples + rng.normal(0.0, sigma, size=len(clip))
    return AudioClip(np.clip(noisy, -1.0, 1.0), clip.sample_rate)


def signal_to_distortion(reference, degraded):
    """Signal-to-distortion ratio of `degraded` against `reference`, in dB"""
    n = min(len(reference), len(degraded))
    ref = reference.samples[:n]
    distortion = degraded.samples[:n] - ref
    noise_energy = float(np.sum(distortion**2))
    if noise_energy == 0.0:
        return float("inf")
    return 10.0 * np.log10(float(np.sum(ref**2)) / noise_energy)
