"""
Defenses (down/up sampling, additive noise) and a play/record relay channel.
"""

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import signal as sp_signal
from scipy import stats

from ..asr.model import transcribe
from ..audio.clip import AudioClip, add_white_noise, resample
from ..config.constants import (
    RELAY_GAIN_JITTER_DB,
    RELAY_LOW_RATE,
    RELAY_NOISE_SIGMA,
    RELAY_REVERB_DECAY_MS,
    RELAY_REVERB_WET,
)
from ..errors import ConfigError
from ..manager import INLINE

logger = logging.getLogger(__name__)

REVERB_TAIL_CONSTANTS = 5  # kernel length in decay time constants


@dataclass(frozen=True, eq=False)
class DefenseSample:
    """One clip under test with the transcription it is supposed to produce"""

    sample_id: str
    clip: AudioClip
    target: object


@dataclass(frozen=True)
class DefenseRow:
    sample_id: str
    target: str
    before: str
    after: str
    success_before: bool
    success_after: bool


@dataclass
class DefenseReport:
    rows: list = field(default_factory=list)
    parameters: dict = field(default_factory=dict)

    @property
    def rate_before(self):
        return _rate([row.success_before for row in self.rows])

    @property
    def rate_after(self):
        return _rate([row.success_after for row in self.rows])

    def to_dict(self):
        return {
            "parameters": self.parameters,
            "samples": len(self.rows),
            "rate_before": self.rate_before,
            "rate_after": self.rate_after,
        }


@dataclass(frozen=True)
class NoiseCurve:
    sigmas: tuple
    rates: tuple
    trials: int

    def slope(self):
        """Least-squares trend of success rate against sigma"""
        if len(self.sigmas) < 2:
            return 0.0
        return float(stats.linregress(self.sigmas, self.rates).slope)


@dataclass(frozen=True)
class RelayParams:
    low_rate: int = RELAY_LOW_RATE  # None or >= sample rate disables band-limiting
    gain_jitter_db: float = RELAY_GAIN_JITTER_DB
    noise_sigma: float = RELAY_NOISE_SIGMA
    reverb_decay_ms: float = RELAY_REVERB_DECAY_MS
    reverb_wet: float = RELAY_REVERB_WET
    seed: int = 0

    @classmethod
    def identity(cls, seed=0):
        return cls(None, 0.0, 0.0, 0.0, 0.0, seed)

    def to_dict(self):
        return asdict(self)


def _rate(flags):
    return sum(1 for flag in flags if flag) / len(flags) if flags else float("nan")


def downsample_restore(clip, low, restore):
    """Resample to `low`, up to `restore`, then back to the clip's own rate"""
    processed = resample(resample(clip, low), restore)
    if restore != clip.sample_rate:
        processed = resample(processed, clip.sample_rate)
    if len(processed) != len(clip):
        processed = processed.pad_to(len(clip)).truncate(len(clip))
    return processed


def defense_downsample(samples, model, low, restore, pool=INLINE):
    """
    Down/up sampling defense.

    Args:
        samples (list[DefenseSample]): clips with their expected transcriptions
        low (int): intermediate rate
        restore (int): rate restored to, low <= restore <= clip rate

    Returns:
        DefenseReport
    """
    for sample in samples:
        if not low <= restore <= sample.clip.sample_rate:
            raise ConfigError(
                "defense.low_rate",
                f"need low ({low}) <= restore ({restore}) <= sample rate "
                f"({sample.clip.sample_rate})",
            )

    def check(sample):
        before = transcribe(model, sample.clip)
        after = transcribe(model, downsample_restore(sample.clip, low, restore))
        return DefenseRow(
            sample_id=sample.sample_id,
            target=sample.target.text,
            before=before.text,
            after=after.text,
            success_before=before == sample.target,
            success_after=after == sample.target,
        )

    report = DefenseReport(
        rows=pool.map(check, samples),
        parameters={"low_rate": low, "restore_rate": restore},
    )
    logger.info(
        f"[DEFENSE] down/up {low}->{restore} Hz: success {report.rate_before:.3f} -> "
        f"{report.rate_after:.3f} over {len(samples)} samples"
    )
    return report


def trial_seeds(seed, trials):
    return [int(s) for s in np.random.SeedSequence(int(seed)).generate_state(int(trials))]


def defense_noise_probe(sample, model, target, sigma_grid, trials, seed):
    """
    Success rate of `target` under additive Gaussian noise for each sigma.

    The same trial seeds are reused at every sigma.
    """
    sigmas = tuple(float(s) for s in sigma_grid)
    if any(b < a for a, b in zip(sigmas, sigmas[1:])):
        raise ConfigError("defense.sigma_grid", "must be sorted ascending")
    seeds = trial_seeds(seed, trials)
    rates = []
    for sigma in sigmas:
        hits = sum(transcribe(model, add_white_noise(sample, sigma, s)) == target for s in seeds)
        rates.append(hits / len(seeds) if seeds else float("nan"))
    return NoiseCurve(sigmas, tuple(rates), int(trials))


def reverb_kernel(decay_ms, wet, sample_rate):
    """Direct path plus an exponentially decaying tail whose taps sum to about `wet`"""
    tau = decay_ms * sample_rate / 1000.0
    length = int(np.ceil(REVERB_TAIL_CONSTANTS * tau))
    n = np.arange(1, length + 1)
    tail = wet * (1.0 - np.exp(-1.0 / tau)) * np.exp(-(n - 1) / tau)
    return np.concatenate([[1.0], tail])


def relay_hop(clip, params, hop_index):
    """One play/record pass: band-limit, gain, reverb, noise; deterministic per (seed, hop)"""
    seed_seq = np.random.SeedSequence([int(params.seed), int(hop_index)])
    rng = np.random.default_rng(seed_seq)
    out = clip
    if params.low_rate and params.low_rate < clip.sample_rate:
        out = resample(resample(out, params.low_rate), clip.sample_rate)
        out = out.pad_to(len(clip)).truncate(len(clip))
    samples = out.samples
    if params.gain_jitter_db > 0:
        gain_db = rng.uniform(-params.gain_jitter_db, params.gain_jitter_db)
        samples = samples * 10.0 ** (gain_db / 20.0)
    if params.reverb_wet > 0 and params.reverb_decay_ms > 0 and len(samples):
        kernel = reverb_kernel(params.reverb_decay_ms, params.reverb_wet, clip.sample_rate)
        samples = sp_signal.fftconvolve(samples, kernel)[: len(samples)]
    out = AudioClip(np.clip(samples, -1.0, 1.0), clip.sample_rate)
    noise_seed = int(seed_seq.generate_state(1)[0])
    return add_white_noise(out, params.noise_sigma, noise_seed)


def relay_chain(sample, hops, params):
    """Clip after each hop: [hop 1, ..., hop `hops`]"""
    if hops < 1:
        raise ConfigError("relay.hops", f"must be >= 1, got {hops}")
    outputs = []
    current = sample
    for hop_index in range(hops):
        current = relay_hop(current, params, hop_index)
        outputs.append(current)
    return outputs


def relay_simulate(sample, hops, params):
    """Clip after `hops` simulated play/record passes"""
    return relay_chain(sample, hops, params)[-1]
