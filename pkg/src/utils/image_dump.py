import os
import hashlib
import logging

import numpy as np
from PIL import Image

logger = logging.getLogger(__name__)

# Grayscale heatmap constants
GRAY_LEVELS = 255
HIGHLIGHT_LEVEL = 255  # overlay value for flagged cells
HASH_CHUNK_SIZE = 1 << 16
SPECTROGRAM_FLOOR_DB = -120.0  # magnitudes below this map to black


def scale_to_gray(matrix_db, low=None, high=None):
    """
    Map a dB matrix linearly onto 8-bit gray levels.

    Args:
        matrix_db (np.ndarray): 2-D matrix (rows=frames, cols=bins)
        low (float): dB value mapped to 0 (defaults to the matrix minimum)
        high (float): dB value mapped to 255 (defaults to the matrix maximum)

    Returns:
        np.ndarray: uint8 matrix with the same shape
    """
    matrix_db = np.asarray(matrix_db, dtype=np.float64)
    if matrix_db.size == 0:
        return np.zeros(matrix_db.shape, dtype=np.uint8)
    low = float(np.min(matrix_db)) if low is None else float(low)
    high = float(np.max(matrix_db)) if high is None else float(high)
    if high <= low:
        return np.zeros(matrix_db.shape, dtype=np.uint8)
    scaled = (np.clip(matrix_db, low, high) - low) / (high - low) * GRAY_LEVELS
    return np.round(scaled).astype(np.uint8)


def save_pgm(matrix_db, path, low=None, high=None, highlight=None):
    """
    Save a dB matrix as a binary PGM heatmap.

    Args:
        matrix_db (np.ndarray): rows=frames, cols=bins
        path (str): destination file (.pgm)
        highlight (np.ndarray): optional boolean mask of cells drawn at full scale

    Returns:
        str: the written path
    """
    gray = scale_to_gray(matrix_db, low, high)
    if highlight is not None:
        gray = gray.copy()
        gray[np.asarray(highlight, dtype=bool)] = HIGHLIGHT_LEVEL
    if gray.ndim != 2 or 0 in gray.shape:
        # PGM needs at least one pixel
        gray = np.zeros((1, 1), dtype=np.uint8)
    Image.fromarray(gray).save(path, format="PPM")
    return path


def file_digest(path):
    """
    SHA-256 digest of a file, read in chunks.

    Returns:
        str: hex digest, or None if the file is missing
    """
    if not os.path.exists(path):
        logger.warning(f"[HASH] File not found: {path}")
        return None
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(HASH_CHUNK_SIZE), b""):
            digest.update(chunk)
    return digest.hexdigest()


def compare_digests(first, second):
    """
    Compare two {name: digest} maps produced by two runs.

    Returns:
        tuple: (identical, differing_names)
    """
    names = sorted(set(first) | set(second))
    differing = [name for name in names if first.get(name) != second.get(name)]
    return not differing, differing


def spectrogram_pgm(spectrogram, path, floor_db=SPECTROGRAM_FLOOR_DB):
    """STFT magnitude dump: rows=frames, cols=bins, dB scaled to [0, 255]"""
    return save_pgm(spectrogram.magnitude_db(floor_db), path)
