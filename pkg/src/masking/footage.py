"""
Additive-synthesis music footage: the tone material the masking search places
over an adversarial sample.
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, replace

import numpy as np

from ..audio.clip import AudioClip
from ..config.constants import (
    DEFAULT_DURATIONS_MS,
    DEFAULT_SAMPLE_RATE,
    DEFAULT_TIMBRES,
    DEFAULT_TONES_HZ,
    FOOTAGE_FADE_MS,
)
from ..errors import ConfigError, DomainError

logger = logging.getLogger(__name__)

HARMONIC_COUNT = 8
PIANO_DECAY_S = 0.25
STRINGS_ATTACK_S = 0.05


@dataclass(frozen=True)
class TimbreProfile:
    """Harmonic numbers with their relative amplitudes plus an envelope shape"""

    name: str
    harmonics: tuple
    amplitudes: tuple
    decay_s: float = 0.0  # exponential decay time constant, 0 = sustained
    attack_s: float = 0.0  # linear attack time


def _series(harmonics):
    return tuple(harmonics), tuple(1.0 / n for n in harmonics)


TIMBRES = {
    "sine": TimbreProfile("sine", (1,), (1.0,)),
    "piano": TimbreProfile("piano", *_series(range(1, HARMONIC_COUNT + 1)), decay_s=PIANO_DECAY_S),
    "organ": TimbreProfile("organ", *_series(range(1, HARMONIC_COUNT + 1, 2))),
    "strings": TimbreProfile(
        "strings", *_series(range(1, HARMONIC_COUNT + 1)), attack_s=STRINGS_ATTACK_S
    ),
}


@dataclass(frozen=True, eq=False)
class MusicFootage:
    tone: float  # fundamental, Hz
    timbre: str
    duration_ms: float
    amplitude: float
    rendered: AudioClip
    position: int = 0  # insertion offset in samples, on the frame grid

    def at(self, position):
        return replace(self, position=int(position))

    def describe(self):
        return {
            "tone_hz": self.tone,
            "timbre": self.timbre,
            "duration_ms": self.duration_ms,
            "amplitude": self.amplitude,
            "position_samples": self.position,
            "position_ms": 1000.0 * self.position / self.rendered.sample_rate,
        }


@dataclass(frozen=True)
class FootageBank:
    tones_hz: tuple = DEFAULT_TONES_HZ
    timbres: tuple = DEFAULT_TIMBRES
    durations_ms: tuple = DEFAULT_DURATIONS_MS

    def __post_init__(self):
        for name in ("tones_hz", "timbres", "durations_ms"):
            values = tuple(getattr(self, name))
            object.__setattr__(self, name, values)
            if not values:
                raise ConfigError(f"bank.{name}", "must not be empty")
        unknown = [t for t in self.timbres if t not in TIMBRES]
        if unknown:
            raise ConfigError("bank.timbres", f"unknown timbre(s): {', '.join(unknown)}")
        if any(float(t) <= 0 for t in self.tones_hz):
            raise ConfigError("bank.tones_hz", "tones must be positive")
        if any(float(d) <= 0 for d in self.durations_ms):
            raise ConfigError("bank.durations_ms", "durations must be positive")

    @property
    def size(self):
        return len(self.tones_hz) * len(self.timbres) * len(self.durations_ms)

    def to_dict(self):
        return {key: list(value) for key, value in asdict(self).items()}

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - {"tones_hz", "timbres", "durations_ms"}
        if unknown:
            raise ConfigError(f"bank.{sorted(unknown)[0]}", "unknown key")
        return cls(
            tones_hz=tuple(float(t) for t in data.get("tones_hz", DEFAULT_TONES_HZ)),
            timbres=tuple(data.get("timbres", DEFAULT_TIMBRES)),
            durations_ms=tuple(float(d) for d in data.get("durations_ms", DEFAULT_DURATIONS_MS)),
        )

    @classmethod
    def load(cls, path):
        if not os.path.exists(path):
            raise FileNotFoundError(f"Bank file not found: {path}")
        with open(path, "r", encoding="utf-8") as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError("bank", f"invalid JSON: {e}") from e
        return cls.from_dict(data)


def raised_cosine_fade(n_samples, sample_rate, fade_ms=FOOTAGE_FADE_MS):
    envelope = np.ones(n_samples)
    n_fade = min(int(round(sample_rate * fade_ms / 1000.0)), n_samples // 2)
    if n_fade > 0:
        ramp = 0.5 * (1.0 - np.cos(np.pi * np.arange(n_fade) / n_fade))
        envelope[:n_fade] *= ramp
        envelope[n_samples - n_fade :] *= ramp[::-1]
    return envelope


def synth_footage(tone, timbre, duration_ms, amplitude, sample_rate=DEFAULT_SAMPLE_RATE):
    """
    Render one footage piece by additive synthesis.

    Partials at or above Nyquist are dropped; the partial sum is normalized to
    peak 1, shaped by the timbre envelope and the 10 ms fades, then scaled by
    `amplitude`.

    Args:
        tone (float): fundamental in Hz, below Nyquist
        timbre (str): name in TIMBRES
        duration_ms (float): positive length
        amplitude (float): gain in [0, 1]

    Returns:
        MusicFootage
    """
    nyquist = sample_rate / 2.0
    if tone <= 0 or tone >= nyquist:
        raise DomainError(f"Tone {tone} Hz outside (0, {nyquist:g}) Hz")
    if duration_ms <= 0:
        raise DomainError(f"Footage duration must be positive: {duration_ms} ms")
    if not 0.0 <= amplitude <= 1.0:
        raise DomainError(f"Footage amplitude must be in [0, 1]: {amplitude}")
    if timbre not in TIMBRES:
        raise ConfigError("timbre", f"unknown timbre: {timbre}")

    profile = TIMBRES[timbre]
    n_samples = int(round(duration_ms * sample_rate / 1000.0))
    t = np.arange(n_samples) / sample_rate
    wave = np.zeros(n_samples)
    for harmonic, weight in zip(profile.harmonics, profile.amplitudes):
        if harmonic * tone < nyquist:
            wave += weight * np.sin(2.0 * np.pi * harmonic * tone * t)

    peak = np.max(np.abs(wave)) if n_samples else 0.0
    if peak > 0:
        wave /= peak
    if profile.decay_s > 0:
        wave *= np.exp(-t / profile.decay_s)
    if profile.attack_s > 0:
        wave *= np.minimum(1.0, t / profile.attack_s)
    wave *= raised_cosine_fade(n_samples, sample_rate)

    return MusicFootage(
        tone=float(tone),
        timbre=timbre,
        duration_ms=float(duration_ms),
        amplitude=float(amplitude),
        rendered=AudioClip(amplitude * wave, sample_rate),
    )
