"""
Psychoacoustic model: per-frame global masking thresholds.

Pipeline per analysis frame:
    stft -> psd -> normalize_psd -> find_maskers -> global_threshold

Levels are in dB on the normalized scale (frame maximum at 96 dB). Frequencies
are in Hz, critical-band positions in Bark.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..audio.clip import stft
from ..config.constants import (
    HEARING_MAX_HZ,
    HEARING_MIN_HZ,
    MASKER_BARK_RADIUS,
    PSD_FLOOR_DB,
    PSD_NORMALIZED_MAX_DB,
    PSY_HOP,
    PSY_WINDOW_SIZE,
)
from ..errors import DomainError, PreconditionError, ShapeError
from ..manager import INLINE

logger = logging.getLogger(__name__)

# Two-slope spreading function and masker offset
LOWER_SLOPE_DB_PER_BARK = 27.0
UPPER_SLOPE_BASE = -27.0
UPPER_SLOPE_LEVEL_GAIN = 0.37
UPPER_SLOPE_KNEE_DB = 40.0
MASKER_OFFSET_DB = -6.025
MASKER_OFFSET_PER_BARK = -0.275


@dataclass(frozen=True)
class PSDFrame:
    """Per-bin dB levels of one frame; normalization_offset = 96 - max(p) once normalized"""

    values: np.ndarray
    normalized: bool = False
    normalization_offset: float = 0.0


@dataclass(frozen=True)
class Masker:
    bin_index: int
    bark: float
    level: float  # smoothed normalized PSD, dB


@dataclass(frozen=True, eq=False)
class MaskingThreshold:
    """Global masking threshold theta (frames x bins, dB) plus the data it came from"""

    theta: np.ndarray
    psd: np.ndarray  # normalized PSD per frame
    offsets: np.ndarray  # per-frame normalization offsets
    window_size: int
    hop: int
    sample_rate: int
    maskers: list = field(default_factory=list)

    @property
    def n_frames(self):
        return self.theta.shape[0]

    def bin_frequencies(self):
        return bin_frequencies(self.window_size, self.sample_rate)

    def hearing_mask(self):
        """Boolean mask of bins inside the 20 Hz - 20 kHz hearing range"""
        freqs = self.bin_frequencies()
        return (freqs >= HEARING_MIN_HZ) & (freqs <= HEARING_MAX_HZ)


def _check_hearing_range(f):
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < HEARING_MIN_HZ) or np.any(f > HEARING_MAX_HZ):
        raise DomainError(
            f"Frequency outside the {HEARING_MIN_HZ:g}-{HEARING_MAX_HZ:g} Hz hearing range"
        )
    return f


def ath(f):
    """
    Absolute threshold of hearing in quiet, dB.

    Args:
        f (float | np.ndarray): frequency in Hz, 20 <= f <= 20000

    Raises:
        DomainError: for frequencies outside the hearing range
    """
    khz = _check_hearing_range(f) / 1000.0
    value = (
        3.64 * khz**-0.8
        - 6.5 * np.exp(-0.6 * (khz - 3.3) ** 2)
        + 1e-3 * khz**4
    )
    return float(value) if np.ndim(value) == 0 else value


def ath_extended(f):
    """ATH with the frequency clamped into the hearing range"""
    clamped = np.clip(np.asarray(f, dtype=np.float64), HEARING_MIN_HZ, HEARING_MAX_HZ)
    return ath(clamped)


def bark(f):
    """Critical-band rate b(f) = 13 atan(0.76 f / 1000) + 3.5 atan(f / 7500)^2"""
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise DomainError("Frequency must be non-negative")
    value = 13.0 * np.arctan(0.76 * f / 1000.0) + 3.5 * np.arctan(f / 7500.0) ** 2
    return float(value) if np.ndim(value) == 0 else value


def bin_to_freq(k, window_size, sample_rate):
    """Centre frequency of DFT bin k: (k / N) * fs, for 0 <= k <= N/2"""
    if k < 0 or k > window_size // 2:
        raise ShapeError(f"Bin index {k} outside [0, {window_size // 2}]")
    return k * sample_rate / window_size


@lru_cache(maxsize=16)
def _bin_tables(window_size, sample_rate):
    freqs = np.arange(window_size // 2 + 1) * sample_rate / window_size
    barks = bark(freqs)
    quiet = ath_extended(freqs)
    for table in (freqs, barks, quiet):
        table.flags.writeable = False
    return freqs, barks, quiet


def bin_frequencies(window_size, sample_rate):
    return _bin_tables(window_size, sample_rate)[0]


def psd(frame, window_size):
    """
    Log-magnitude power spectral density p(k) = 10 log10 |s(k) / N|^2.

    Zero-magnitude bins are floored at -200 dB.
    """
    power = np.abs(np.asarray(frame) / window_size) ** 2
    with np.errstate(divide="ignore"):
        values = 10.0 * np.log10(power)
    return PSDFrame(np.maximum(values, PSD_FLOOR_DB))


def normalize_psd(p):
    """Shift a frame so its maximum sits at 96 dB; the shift is kept for reuse"""
    if p.normalized:
        raise PreconditionError("PSD frame is already normalized")
    offset = PSD_NORMALIZED_MAX_DB - float(np.max(p.values))
    return PSDFrame(p.values + offset, normalized=True, normalization_offset=offset)


def smooth_level(values, k):
    """Masker level smoothed with its two neighbours (log-additive sum)"""
    return 10.0 * np.log10(
        10.0 ** (values[k - 1] / 10.0)
        + 10.0 ** (values[k] / 10.0)
        + 10.0 ** (values[k + 1] / 10.0)
    )


def _peak_bins(values):
    """
    Local maxima of a spectrum, one per plateau.

    A run of equal bins is a peak when every existing outer neighbour is strictly
    lower; its masker bin is the run centre. Flat frames have no peaks, and the
    boundary bins 0 and N/2 are never returned.
    """
    n = len(values)
    if n < 3:
        return np.zeros(0, dtype=int)
    change = np.flatnonzero(np.diff(values) != 0) + 1
    if len(change) == 0:
        return np.zeros(0, dtype=int)
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change - 1, [n - 1]])
    run_values = values[starts]
    previous = np.concatenate([[-np.inf], run_values[:-1]])
    following = np.concatenate([run_values[1:], [-np.inf]])
    peaks = (previous < run_values) & (following < run_values)
    centres = (starts[peaks] + ends[peaks]) // 2
    return centres[(centres > 0) & (centres < n - 1)]


def find_maskers(p, window_size, sample_rate):
    """
    Select maskers from a normalized PSD frame.

    Criteria: local maximum, level at or above ATH, and highest level within
    +-0.5 Bark (applied greedily from the loudest candidate, ties to the lower bin).

    Returns:
        list[Masker]: sorted by bin index; may be empty
    """
    if not p.normalized:
        raise PreconditionError("find_maskers needs a normalized PSD frame")
    values = p.values
    freqs, barks, quiet = _bin_tables(window_size, sample_rate)

    candidates = _peak_bins(values)
    candidates = candidates[values[candidates] >= quiet[candidates]]
    if len(candidates) == 0:
        return []

    order = sorted(candidates.tolist(), key=lambda k: (-values[k], k))
    kept = []
    kept_barks = np.empty(len(order))
    for k in order:
        b = barks[k]
        if kept and np.any(np.abs(kept_barks[: len(kept)] - b) <= MASKER_BARK_RADIUS):
            continue
        kept_barks[len(kept)] = b
        kept.append(k)

    return [
        Masker(bin_index=int(k), bark=float(barks[k]), level=float(smooth_level(values, k)))
        for k in sorted(kept)
    ]


def spreading(b_masker, b_maskee, masker_level):
    """
    Two-slope spreading function in dB.

    +27 dB/Bark below the masker; level-dependent slope
    G = -27 + 0.37 max(level - 40, 0) above it.
    """
    delta = np.asarray(b_maskee, dtype=np.float64) - b_masker
    upper = UPPER_SLOPE_BASE + UPPER_SLOPE_LEVEL_GAIN * max(
        masker_level - UPPER_SLOPE_KNEE_DB, 0.0
    )
    value = np.where(delta < 0, LOWER_SLOPE_DB_PER_BARK * delta, upper * delta)
    return float(value) if np.ndim(value) == 0 else value


def masker_offset(b_masker):
    """Delta_m = -6.025 - 0.275 b"""
    return MASKER_OFFSET_DB + MASKER_OFFSET_PER_BARK * b_masker


def individual_threshold(masker, b_maskee):
    """T = level + Delta_m(b_masker) + SF(b_masker, b_maskee)"""
    return masker.level + masker_offset(masker.bark) + spreading(
        masker.bark, b_maskee, masker.level
    )


def global_threshold(maskers, window_size, sample_rate):
    """
    Global masking threshold of one frame:
    theta(i) = 10 log10(10^(ATH(i)/10) + sum_j 10^(T_j(i)/10)).

    Bins above 20 kHz copy the value of the last in-range bin.
    """
    freqs, barks, quiet = _bin_tables(window_size, sample_rate)
    if not maskers:
        theta = quiet.copy()
    else:
        total = 10.0 ** (quiet / 10.0)
        for masker in maskers:
            total = total + 10.0 ** (individual_threshold(masker, barks) / 10.0)
        theta = 10.0 * np.log10(total)

    beyond = freqs > HEARING_MAX_HZ
    if np.any(beyond) and not np.all(beyond):
        last_in_range = int(np.flatnonzero(~beyond)[-1])
        theta[beyond] = theta[last_in_range]
    return theta


def _frame_threshold(row, window_size, sample_rate):
    normalized = normalize_psd(psd(row, window_size))
    maskers = find_maskers(normalized, window_size, sample_rate)
    theta = global_threshold(maskers, window_size, sample_rate)
    return theta, normalized, maskers


def masking_threshold(clip, window_size=PSY_WINDOW_SIZE, hop=PSY_HOP, pool=INLINE):
    """
    Per-frame global masking threshold of a clip.

    Args:
        clip (AudioClip): non-empty input
        window_size (int): analysis window N
        hop (int): hop size
        pool (WorkerPool): frames are independent and may be computed in parallel

    Returns:
        MaskingThreshold: theta, normalized PSD, per-frame offsets and maskers
    """
    if len(clip) == 0:
        raise PreconditionError("masking_threshold needs a non-empty clip")
    spectrum = stft(clip, window_size, hop)
    results = pool.map(
        lambda row: _frame_threshold(row, window_size, clip.sample_rate),
        list(spectrum.frames),
    )
    theta = np.vstack([r[0] for r in results])
    normalized = np.vstack([r[1].values for r in results])
    offsets = np.array([r[1].normalization_offset for r in results])
    return MaskingThreshold(
        theta=theta,
        psd=normalized,
        offsets=offsets,
        window_size=window_size,
        hop=hop,
        sample_rate=clip.sample_rate,
        maskers=[r[2] for r in results],
    )


def relative_psd(clip, offsets, window_size=PSY_WINDOW_SIZE, hop=PSY_HOP):
    """
    PSD of `clip` shifted by another signal's per-frame normalization offsets,
    so both signals share one dB scale. Floored (silent) cells stay at the floor.
    """
    spectrum = stft(clip, window_size, hop)
    offsets = np.asarray(offsets, dtype=np.float64)
    if spectrum.n_frames != len(offsets):
        raise ShapeError(
            f"Frame count mismatch: {spectrum.n_frames} frames vs {len(offsets)} offsets"
        )
    rows = [psd(row, window_size).values for row in spectrum.frames]
    if not rows:
        return np.zeros((0, spectrum.n_bins))
    levels = np.vstack(rows)
    return np.where(levels > PSD_FLOOR_DB, levels + offsets[:, None], PSD_FLOOR_DB)


def threshold_rows(threshold):
    """Rows for the threshold-dump CSV: frame, bin, freq_hz, psd_db, theta_db"""
    freqs = threshold.bin_frequencies()
    for frame_index in range(threshold.n_frames):
        for bin_index, freq in enumerate(freqs):
            yield (
                frame_index,
                bin_index,
                float(freq),
                float(threshold.psd[frame_index, bin_index]),
                float(threshold.theta[frame_index, bin_index]),
            )
