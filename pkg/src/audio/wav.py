"""
PCM16 mono WAV reader/writer
"""

import os
import logging

import numpy as np
import soundfile as sf

from .clip import AudioClip
from ..config.constants import PCM16_SCALE, SUPPORTED_SAMPLE_RATES
from ..errors import AudioFormatError

logger = logging.getLogger(__name__)


def read_wav(path):
    """
    Read a PCM 16-bit mono WAV file.

    Args:
        path (str): WAV file path

    Returns:
        AudioClip: samples scaled to [-1, 1] by 1/32768

    Raises:
        FileNotFoundError: if the file does not exist
        AudioFormatError: naming the offending field (format, channels, subtype, sample_rate)
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise FileNotFoundError(f"WAV file not found: {path}")

    try:
        info = sf.info(path)
    except RuntimeError as e:
        raise AudioFormatError("container", os.path.basename(path), f"Unreadable audio file {path}: {e}")

    if info.format != "WAV":
        raise AudioFormatError("format", info.format)
    if info.channels != 1:
        raise AudioFormatError("channels", info.channels)
    if info.subtype != "PCM_16":
        raise AudioFormatError("subtype", info.subtype)
    if info.samplerate not in SUPPORTED_SAMPLE_RATES:
        raise AudioFormatError("sample_rate", info.samplerate)

    data, rate = sf.read(path, dtype="int16", always_2d=False)
    return AudioClip(np.asarray(data, dtype=np.float64) / PCM16_SCALE, rate)


def quantize_pcm16(samples):
    """Round to the PCM16 grid, saturating out-of-range values"""
    scaled = np.round(np.asarray(samples, dtype=np.float64) * PCM16_SCALE)
    return np.clip(scaled, -32768, 32767).astype(np.int16)


def write_wav(clip, path):
    """Write a clip as PCM 16-bit mono WAV; samples outside [-1, 1] saturate"""
    path = os.fspath(path)
    if clip.sample_rate not in SUPPORTED_SAMPLE_RATES:
        raise AudioFormatError("sample_rate", clip.sample_rate)
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise FileNotFoundError(f"Output directory does not exist: {parent}")

    try:
        sf.write(
            path,
            quantize_pcm16(clip.samples),
            clip.sample_rate,
            subtype="PCM_16",
            format="WAV",
        )
    except RuntimeError as e:
        raise OSError(f"Cannot write WAV file {path}: {e}")
