"""
Heuristic search for music footage placements that hide an adversarial sample
under the mixture's masking threshold without changing its transcription.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from ..asr.model import transcribe
from ..audio.clip import AudioClip, mix
from ..config.constants import (
    LOG_INTERVAL,
    SEARCH_AMPLITUDE,
    SEARCH_BATCH,
    SEARCH_FRAME_LEN_CAP_MS,
    SEARCH_FRAME_LEN_MS,
    SEARCH_K,
    SEARCH_LEVEL,
    SEARCH_LEVEL_BACKOFF_STEPS,
    SEARCH_MAX_ITERS,
    SEARCH_MAX_SATURATION,
)
from ..errors import ConfigError, PreconditionError, RateMismatchError, ShapeError
from ..manager import INLINE
from ..psychoacoustics.model import masking_threshold, relative_psd
from .footage import FootageBank, synth_footage

logger = logging.getLogger(__name__)

SATURATION_BACKOFF = 0.8
MAX_BACKOFF_STEPS = 60

# Mutable coordinates of a placement
TONE, TIMBRE, DURATION, SLOT = range(4)


@dataclass(frozen=True)
class SearchConfig:
    k: int = SEARCH_K
    frame_len_ms: float = SEARCH_FRAME_LEN_MS
    max_iters: int = SEARCH_MAX_ITERS
    seed: int = 0
    bank: FootageBank = field(default_factory=FootageBank)
    level: float = SEARCH_LEVEL  # footage peak per unit of perturbation peak; None is absolute
    amplitude: float = SEARCH_AMPLITUDE  # absolute footage peak when level is None
    level_backoff: int = SEARCH_LEVEL_BACKOFF_STEPS
    batch: int = SEARCH_BATCH
    hinge: bool = False
    max_saturation: float = SEARCH_MAX_SATURATION
    log_interval: int = LOG_INTERVAL

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("search.k", "must be >= 1")
        if not 0 < self.frame_len_ms <= SEARCH_FRAME_LEN_CAP_MS:
            raise ConfigError(
                "search.frame_len_ms", f"must be in (0, {SEARCH_FRAME_LEN_CAP_MS}] ms"
            )
        if self.max_iters < 0:
            raise ConfigError("search.max_iters", "must be >= 0")
        if self.batch < 1:
            raise ConfigError("search.batch", "must be >= 1")
        if not 0.0 <= self.amplitude <= 1.0:
            raise ConfigError("search.amplitude", "must be in [0, 1]")
        if self.level is not None and self.level < 0:
            raise ConfigError("search.level", f"must be >= 0, got {self.level}")
        if self.level_backoff < 0:
            raise ConfigError("search.level_backoff", "must be >= 0")


@dataclass(eq=False)
class MaskedSample:
    mixture: AudioClip
    placements: list
    score: float
    transcription: object
    no_mask: bool = False
    initial_score: float = float("nan")
    footage_gain: float = 1.0
    footage_amplitude: float = float("nan")
    iterations: int = 0
    accepted: int = 0
    v_trace: list = field(default_factory=list)
    best_trace: list = field(default_factory=list)
    coverage_before: float = float("nan")
    coverage_after: float = float("nan")

    def telemetry(self):
        return {
            "no_mask": self.no_mask,
            "transcription": self.transcription.text,
            "v_initial": self.initial_score,
            "v_best": self.score,
            "footage_gain": self.footage_gain,
            "footage_amplitude": self.footage_amplitude,
            "iterations": self.iterations,
            "accepted": self.accepted,
            "coverage_before": self.coverage_before,
            "coverage_after": self.coverage_after,
            "placements": [p.describe() for p in self.placements],
            "v_trace": self.v_trace,
            "best_trace": self.best_trace,
        }


def frame_step(sample_rate, frame_len_ms):
    return max(1, int(round(frame_len_ms * sample_rate / 1000.0)))


def frame_grid(delta, frame_len_ms):
    """
    Insertion positions (samples) at multiples of the frame length covering the clip.

    Raises:
        ConfigError: frame length above the 200 ms cap or not positive
    """
    if not 0 < frame_len_ms <= SEARCH_FRAME_LEN_CAP_MS:
        raise ConfigError(
            "search.frame_len_ms",
            f"{frame_len_ms} ms outside (0, {SEARCH_FRAME_LEN_CAP_MS}] ms",
        )
    step = frame_step(delta.sample_rate, frame_len_ms)
    if len(delta) <= step:
        return [0]
    return list(range(0, len(delta), step))


def _aligned(mixture, delta):
    if mixture.sample_rate != delta.sample_rate:
        raise RateMismatchError(
            f"Mixture at {mixture.sample_rate} Hz vs perturbation at {delta.sample_rate} Hz"
        )
    if len(delta) > len(mixture):
        raise ShapeError(f"Perturbation ({len(delta)}) longer than mixture ({len(mixture)})")
    return delta.pad_to(len(mixture))


def threshold_gap(mixture, delta, pool=INLINE):
    """
    theta of the mixture and theta_delta (delta's PSD on the mixture's per-frame
    scale), restricted to in-range bins by the returned mask.

    Returns:
        tuple: (theta, theta_delta, hearing_mask)
    """
    delta = _aligned(mixture, delta)
    threshold = masking_threshold(mixture, pool=pool)
    theta_delta = relative_psd(
        delta, threshold.offsets, threshold.window_size, threshold.hop
    )
    return threshold.theta, theta_delta, threshold.hearing_mask()


def score(mixture, delta, hinge=False, pool=INLINE):
    """
    v_t = mean over frames and in-range bins of |theta_delta - theta|
    (mean of max(theta_delta - theta, 0) with `hinge`).
    """
    theta, theta_delta, in_range = threshold_gap(mixture, delta, pool)
    gap = theta_delta[:, in_range] - theta[:, in_range]
    if hinge:
        return float(np.mean(np.maximum(gap, 0.0)))
    return float(np.mean(np.abs(gap)))


def coverage(mixture, delta, pool=INLINE):
    """Fraction of in-range (frame, bin) cells where delta rises above the threshold"""
    theta, theta_delta, in_range = threshold_gap(mixture, delta, pool)
    return float(np.mean(theta_delta[:, in_range] > theta[:, in_range]))


class PlacementRenderer:
    """Renders placement states into mixtures, caching footage by (tone, timbre, duration)"""

    def __init__(self, delta, cfg, grid, amplitude):
        self.delta = delta
        self.cfg = cfg
        self.amplitude = amplitude
        self.grid = grid
        self.bank = cfg.bank
        self._cache = {}

    def footage(self, state):
        pieces = []
        for tone_i, timbre_i, duration_i, slot_i in state:
            key = (tone_i, timbre_i, duration_i)
            if key not in self._cache:
                self._cache[key] = synth_footage(
                    self.bank.tones_hz[tone_i],
                    self.bank.timbres[timbre_i],
                    self.bank.durations_ms[duration_i],
                    self.amplitude,
                    self.delta.sample_rate,
                )
            pieces.append(self._cache[key].at(self.grid[slot_i]))
        return pieces

    def music(self, pieces):
        """Sum of footage truncated to the perturbation's length"""
        track = np.zeros(len(self.delta))
        for piece in pieces:
            end = min(len(track), piece.position + len(piece.rendered))
            if end > piece.position:
                track[piece.position : end] += piece.rendered.samples[: end - piece.position]
        return track

    def render(self, state):
        """
        Returns:
            tuple: (mixture, placed footage, gain applied to the footage)
        """
        pieces = self.footage(state)
        track = self.music(pieces)
        gain = 1.0
        for _ in range(MAX_BACKOFF_STEPS):
            saturated = np.mean(np.abs(self.delta.samples + gain * track) > 1.0)
            if saturated <= self.cfg.max_saturation:
                break
            gain *= SATURATION_BACKOFF
        music = AudioClip(gain * track, self.delta.sample_rate)
        return mix(self.delta, music), pieces, gain


def _random_state(rng, bank, grid, k):
    return tuple(
        (
            int(rng.integers(len(bank.tones_hz))),
            int(rng.integers(len(bank.timbres))),
            int(rng.integers(len(bank.durations_ms))),
            int(rng.integers(len(grid))),
        )
        for _ in range(k)
    )


def mutate(state, rng, bank, grid):
    """Redraw one coordinate of one placement uniformly, excluding its current value"""
    sizes = (len(bank.tones_hz), len(bank.timbres), len(bank.durations_ms), len(grid))
    piece = int(rng.integers(len(state)))
    coordinate = int(rng.integers(4))
    current = list(state[piece])
    if sizes[coordinate] > 1:
        step = int(rng.integers(1, sizes[coordinate]))
        current[coordinate] = (current[coordinate] + step) % sizes[coordinate]
    mutated = list(state)
    mutated[piece] = tuple(current)
    return tuple(mutated)


def footage_amplitude(delta, cfg):
    """Starting footage peak: level times the perturbation peak, or the absolute amplitude"""
    if cfg.level is None:
        return cfg.amplitude
    return min(1.0, cfg.level * delta.peak)


def search(delta, target, model, cfg, pool=INLINE):
    """
    Greedy heuristic search over footage placements.

    The footage amplitude is calibrated once on the initial random state: it backs
    off by SATURATION_BACKOFF (at most `cfg.level_backoff` times) until that
    mixture transcribes to `target`, then stays fixed. Each iteration proposes
    `cfg.batch` single-coordinate mutations of the best state; candidates are
    scored in parallel and accepted in order iff their score beats v_best and
    the mixture still transcribes to `target`. When no state keeps the target the
    result has no_mask set and a NaN score.

    Raises:
        PreconditionError: when `delta` does not transcribe to `target`
    """
    if transcribe(model, delta) != target:
        raise PreconditionError("Perturbation does not transcribe to the target")

    rng = np.random.default_rng(cfg.seed)
    grid = frame_grid(delta, cfg.frame_len_ms)
    amplitude = footage_amplitude(delta, cfg)

    def evaluate(state):
        mixture, pieces, gain = renderer.render(state)
        value = score(mixture, delta, cfg.hinge)
        return state, mixture, pieces, gain, value, transcribe(model, mixture) == target

    state = _random_state(rng, cfg.bank, grid, cfg.k)
    for attempt in range(cfg.level_backoff + 1):
        renderer = PlacementRenderer(delta, cfg, grid, amplitude)
        initial = evaluate(state)
        if initial[5] or attempt == cfg.level_backoff:
            break
        amplitude *= SATURATION_BACKOFF
    logger.info(f"[SEARCH] footage amplitude {amplitude:.4f} after {attempt} back-off step(s)")
    initial_score = initial[4]
    best = initial if initial[5] else None
    best_score = initial_score if best else float("inf")
    base_state = initial[0]
    v_trace, best_trace = [], []
    accepted = 0

    for iteration in range(cfg.max_iters):
        candidates = [mutate(base_state, rng, cfg.bank, grid) for _ in range(cfg.batch)]
        for result in pool.map(evaluate, candidates):
            v_trace.append(result[4])
            if result[4] < best_score and result[5]:
                best, best_score = result, result[4]
                base_state = result[0]
                accepted += 1
        best_trace.append(best_score)
        if (iteration + 1) % max(1, cfg.log_interval) == 0:
            logger.info(
                f"[SEARCH] iteration {iteration + 1}/{cfg.max_iters} "
                f"v_best={best_score:.3f} accepted={accepted}"
            )

    coverage_before = coverage(delta, delta)
    if best is None:
        logger.warning("[SEARCH] No placement preserved the target; returning the bare perturbation")
        return MaskedSample(
            mixture=delta,
            placements=[],
            score=float("nan"),
            transcription=target,
            no_mask=True,
            initial_score=initial_score,
            footage_amplitude=amplitude,
            iterations=cfg.max_iters,
            v_trace=v_trace,
            best_trace=best_trace,
            coverage_before=coverage_before,
            coverage_after=coverage_before,
        )

    _, mixture, pieces, gain, value, _ = best
    transcription = transcribe(model, mixture)
    assert transcription == target
    logger.info(
        f"[SEARCH] v {initial_score:.3f} -> {value:.3f} after {cfg.max_iters} iterations "
        f"({accepted} accepted)"
    )
    return MaskedSample(
        mixture=mixture,
        placements=pieces,
        score=value,
        transcription=transcription,
        initial_score=initial_score,
        footage_gain=gain,
        footage_amplitude=amplitude,
        iterations=cfg.max_iters,
        accepted=accepted,
        v_trace=v_trace,
        best_trace=best_trace,
        coverage_before=coverage_before,
        coverage_after=coverage(mixture, delta),
    )
