"""
Synthetic training corpus, corpus manifests and toy recognizer training.
"""

import csv
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np
import torch
from torch import nn

from ..audio.clip import AudioClip, resample
from ..audio.wav import read_wav
from ..config.constants import (
    ASR_CONTEXT,
    ASR_HIDDEN_SIZES,
    BLANK_TOKEN,
    DEFAULT_SAMPLE_RATE,
    LOG_INTERVAL,
    TRAIN_AUGMENT_COPIES,
    TRAIN_AUGMENT_GAIN_DB,
    TRAIN_AUGMENT_SNR_DB,
    TRAIN_BANDLIMIT_PROB,
    TRAIN_BANDLIMIT_RATES,
    TRAIN_BATCH_SIZE,
    TRAIN_EPOCHS,
    TRAIN_HOLDOUT,
    TRAIN_LR,
    TRAIN_MUSIC_LEVEL_DB,
    TRAIN_MUSIC_PROB,
)
from ..config.vocabulary import TOKENS
from ..errors import ConfigError, TrainingError
from ..manager import INLINE
from ..masking.footage import FootageBank, synth_footage
from .features import FeatureChain, features
from .model import AcousticModel, decode, forward, uniform_alignment

logger = logging.getLogger(__name__)

# Utterance layout (milliseconds)
TOKEN_MS = (100, 300)
GAP_MS = (0, 120)  # 0 joins tokens without a pause
EDGE_SILENCE_MS = (50, 150)
TOKENS_PER_UTTERANCE = (2, 4)
UTTERANCE_GAIN = (0.3, 0.8)
CORPUS_NOISE_SIGMA = 0.002
TOKEN_FADE_MS = 10
PITCH_JITTER = 0.02
MIN_FEATURE_STD = 1e-6

MANIFEST_FIELDS = ["wav_path", "tokens", "segments"]


@dataclass(frozen=True)
class TokenRecipe:
    """Sound of one token: partials as (frequency_hz, relative_amplitude)"""

    token: str
    partials: tuple


@dataclass(frozen=True, eq=False)
class LabeledClip:
    clip: AudioClip
    tokens: tuple
    segments: tuple = ()  # (start_sample, end_sample) per token; empty when unknown


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = TRAIN_EPOCHS
    batch_size: int = TRAIN_BATCH_SIZE
    learning_rate: float = TRAIN_LR
    hidden_sizes: tuple = ASR_HIDDEN_SIZES
    context: int = ASR_CONTEXT
    holdout: float = TRAIN_HOLDOUT
    seed: int = 0
    log_interval: int = LOG_INTERVAL
    augment_copies: int = TRAIN_AUGMENT_COPIES
    gain_db: tuple = TRAIN_AUGMENT_GAIN_DB
    snr_db: tuple = TRAIN_AUGMENT_SNR_DB
    music_prob: float = TRAIN_MUSIC_PROB
    music_level_db: tuple = TRAIN_MUSIC_LEVEL_DB
    bandlimit_prob: float = TRAIN_BANDLIMIT_PROB
    bandlimit_rates: tuple = TRAIN_BANDLIMIT_RATES

    def __post_init__(self):
        if self.augment_copies < 0:
            raise ConfigError("train.augment_copies", "must be >= 0")
        for name in ("music_prob", "bandlimit_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"train.{name}", "must be in [0, 1]")


@dataclass
class TrainReport:
    train_clips: int = 0
    augmented_clips: int = 0
    train_frames: int = 0
    holdout_clips: int = 0
    frame_accuracy: float = float("nan")
    sequence_accuracy: float = float("nan")
    final_loss: float = float("nan")
    loss_trace: list = field(default_factory=list)

    def to_dict(self):
        return {
            "train_clips": self.train_clips,
            "augmented_clips": self.augmented_clips,
            "train_frames": self.train_frames,
            "holdout_clips": self.holdout_clips,
            "holdout_frame_accuracy": self.frame_accuracy,
            "holdout_sequence_accuracy": self.sequence_accuracy,
            "final_loss": self.final_loss,
            "loss_trace": self.loss_trace,
        }


def default_recipes(tokens=TOKENS):
    """Three partials per token; each coordinate walks a different permutation of the tokens"""
    n = len(tokens)
    recipes = []
    for i, token in enumerate(tokens):
        partials = (
            (300.0 + 140.0 * i, 1.0),
            (1000.0 + 210.0 * ((5 * i) % n), 0.6),
            (2400.0 + 170.0 * ((7 * i) % n), 0.35),
        )
        recipes.append(TokenRecipe(token, partials))
    return tuple(recipes)


def _fade(n_samples, sample_rate, fade_ms=TOKEN_FADE_MS):
    envelope = np.ones(n_samples)
    n_fade = min(int(sample_rate * fade_ms / 1000), n_samples // 2)
    if n_fade > 0:
        ramp = 0.5 * (1.0 - np.cos(np.pi * np.arange(n_fade) / n_fade))
        envelope[:n_fade] = ramp
        envelope[n_samples - n_fade :] = ramp[::-1]
    return envelope


def render_token(recipe, n_samples, sample_rate, rng):
    """One realisation of a token: jittered partials with random phases, peak 1"""
    t = np.arange(n_samples) / sample_rate
    jitter = 1.0 + rng.uniform(-PITCH_JITTER, PITCH_JITTER)
    sound = np.zeros(n_samples)
    for freq, amplitude in recipe.partials:
        phase = rng.uniform(0.0, 2.0 * np.pi)
        sound += amplitude * np.sin(2.0 * np.pi * freq * jitter * t + phase)
    sound *= _fade(n_samples, sample_rate)
    peak = np.max(np.abs(sound))
    return sound / peak if peak > 0 else sound


def _ms(rng, bounds, sample_rate):
    return int(round(rng.uniform(*bounds) * sample_rate / 1000.0))


def synth_corpus(recipes, count, seed, sample_rate=DEFAULT_SAMPLE_RATE):
    """
    Labeled utterances of 2-4 tokens with random gaps, gain and light noise.

    Args:
        recipes (Sequence[TokenRecipe]): at least two token sounds
        count (int): number of utterances
        seed (int): deterministic per seed

    Returns:
        list[LabeledClip]
    """
    recipes = tuple(recipes)
    if len(recipes) < 2:
        raise ConfigError("corpus", "need at least two token recipes")
    rng = np.random.default_rng(seed)
    corpus = []
    for _ in range(int(count)):
        n_tokens = int(rng.integers(TOKENS_PER_UTTERANCE[0], TOKENS_PER_UTTERANCE[1] + 1))
        chosen = [int(rng.integers(len(recipes)))]
        while len(chosen) < n_tokens:
            # no adjacent repeats, greedy decoding would merge them
            step = int(rng.integers(1, len(recipes)))
            chosen.append((chosen[-1] + step) % len(recipes))

        pieces = [np.zeros(_ms(rng, EDGE_SILENCE_MS, sample_rate))]
        segments = []
        cursor = len(pieces[0])
        for position, index in enumerate(chosen):
            if position > 0:
                gap = np.zeros(_ms(rng, GAP_MS, sample_rate))
                pieces.append(gap)
                cursor += len(gap)
            n_samples = _ms(rng, TOKEN_MS, sample_rate)
            pieces.append(render_token(recipes[index], n_samples, sample_rate, rng))
            segments.append((cursor, cursor + n_samples))
            cursor += n_samples
        pieces.append(np.zeros(_ms(rng, EDGE_SILENCE_MS, sample_rate)))

        gain = rng.uniform(*UTTERANCE_GAIN)
        samples = gain * np.concatenate(pieces)
        samples = samples + rng.normal(0.0, CORPUS_NOISE_SIGMA, size=len(samples))
        corpus.append(
            LabeledClip(
                clip=AudioClip(np.clip(samples, -1.0, 1.0), sample_rate),
                tokens=tuple(recipes[i].token for i in chosen),
                segments=tuple(segments),
            )
        )
    logger.info(f"[CORPUS] Synthesized {len(corpus)} utterances (seed={seed})")
    return corpus


def _background(samples, sample_rate, rng, config, bank):
    """One or two footage pieces at random offsets, peak set against the utterance"""
    music = np.zeros(len(samples))
    for _ in range(int(rng.integers(1, 3))):
        piece = synth_footage(
            float(bank.tones_hz[int(rng.integers(len(bank.tones_hz)))]),
            bank.timbres[int(rng.integers(len(bank.timbres)))],
            float(bank.durations_ms[int(rng.integers(len(bank.durations_ms)))]),
            1.0,
            sample_rate,
        ).rendered.samples[: len(samples)]
        start = int(rng.integers(0, len(samples) - len(piece) + 1))
        music[start : start + len(piece)] += piece
    music_peak = np.max(np.abs(music))
    if music_peak == 0:
        return samples
    level = np.max(np.abs(samples)) * 10.0 ** (rng.uniform(*config.music_level_db) / 20.0)
    return samples + music * (level / music_peak)


def _bandlimit(samples, sample_rate, rate):
    clip = AudioClip(samples, sample_rate)
    restored = resample(resample(clip, rate), sample_rate).pad_to(len(clip))
    return restored.samples[: len(clip)]


def augment_clip(item, rng, config=None, bank=None):
    """
    A perturbed copy of a training utterance, same tokens and spans.

    Applied in order: random gain, background footage (with probability
    `music_prob`), Gaussian noise at a random SNR, then down/up resampling
    (with probability `bandlimit_prob`). Peaks above 1 are scaled back.

    Args:
        item (LabeledClip): source utterance
        rng (numpy.random.Generator): drives every draw
        config (TrainConfig): augmentation ranges
        bank (FootageBank): background pieces, default bank when None

    Returns:
        LabeledClip
    """
    config = config or TrainConfig()
    bank = bank or FootageBank()
    sample_rate = item.clip.sample_rate
    samples = item.clip.samples * 10.0 ** (rng.uniform(*config.gain_db) / 20.0)
    if len(samples) and rng.uniform() < config.music_prob:
        samples = _background(samples, sample_rate, rng, config, bank)
    rms = float(np.sqrt(np.mean(samples**2))) if len(samples) else 0.0
    if rms > 0:
        sigma = rms / 10.0 ** (rng.uniform(*config.snr_db) / 20.0)
        samples = samples + rng.normal(0.0, sigma, size=len(samples))
    if len(samples) and config.bandlimit_rates and rng.uniform() < config.bandlimit_prob:
        rate = int(config.bandlimit_rates[int(rng.integers(len(config.bandlimit_rates)))])
        if rate < sample_rate:
            samples = _bandlimit(samples, sample_rate, rate)
    peak = np.max(np.abs(samples)) if len(samples) else 0.0
    if peak > 1.0:
        samples = samples / peak
    return replace(item, clip=AudioClip(samples, sample_rate))


def frame_labels(item, chain, model):
    """
    Per-frame training labels: the token whose span holds the frame centre, blank
    elsewhere. Clips without spans fall back to the uniform alignment.
    """
    n_frames = chain.frame_count(len(item.clip))
    ids = model.token_ids(item.tokens)
    if not item.segments:
        return uniform_alignment(n_frames, ids, model.blank_index)
    centres = np.arange(n_frames) * chain.hop + chain.window // 2
    labels = np.full(n_frames, model.blank_index, dtype=np.int64)
    for token_id, (start, end) in zip(ids, item.segments):
        labels[(centres >= start) & (centres < end)] = token_id
    return torch.from_numpy(labels)


def _split(corpus, holdout, seed):
    order = np.random.default_rng(seed).permutation(len(corpus))
    n_holdout = int(round(len(corpus) * holdout))
    if holdout > 0 and len(corpus) > 1:
        n_holdout = min(max(n_holdout, 1), len(corpus) - 1)
    else:
        n_holdout = 0
    held = [corpus[i] for i in sorted(order[:n_holdout])]
    kept = [corpus[i] for i in sorted(order[n_holdout:])]
    return kept, held


def evaluate_holdout(model, held, pool=INLINE):
    """Held-out frame accuracy and whole-sequence exact match"""
    if not held:
        return float("nan"), float("nan")

    def score(item):
        probs = forward(model, features(item.clip, model.chain))
        labels = frame_labels(item, model.chain, model).numpy()
        correct = int(np.sum(np.argmax(probs, axis=1) == labels))
        exact = decode(model, probs).tokens == tuple(item.tokens)
        return correct, len(labels), exact

    results = pool.map(score, held)
    frames = sum(r[1] for r in results)
    frame_accuracy = sum(r[0] for r in results) / frames if frames else float("nan")
    sequence_accuracy = sum(1 for r in results if r[2]) / len(results)
    return frame_accuracy, sequence_accuracy


def train(corpus, config=None, chain=None, tokens=TOKENS, pool=INLINE):
    """
    Mini-batch training of the frame classifier with a fixed seed.

    Args:
        corpus (list[LabeledClip]): labeled utterances
        config (TrainConfig): training parameters
        chain (FeatureChain): feature chain stored in the model
        tokens (Sequence[str]): non-blank vocabulary
        pool (WorkerPool): feature extraction and held-out scoring

    Returns:
        tuple: (AcousticModel, TrainReport)

    Raises:
        TrainingError: empty corpus or no usable training frames
    """
    config = config or TrainConfig()
    chain = chain or FeatureChain()
    if not corpus:
        raise TrainingError("Cannot train on an empty corpus")

    vocabulary = (BLANK_TOKEN,) + tuple(tokens)
    torch.manual_seed(config.seed)
    model = AcousticModel(
        vocabulary,
        chain=chain,
        hidden_sizes=config.hidden_sizes,
        context=config.context,
        seed=config.seed,
    )
    for item in corpus:
        model.token_ids(item.tokens)

    train_items, held = _split(corpus, config.holdout, config.seed)
    train_items = [item for item in train_items if chain.frame_count(len(item.clip)) > 0]
    if not train_items:
        raise TrainingError("No training clip is long enough for one analysis window")
    n_original = len(train_items)
    if config.augment_copies:
        rng = np.random.default_rng(config.seed)
        bank = FootageBank()
        train_items = train_items + [
            augment_clip(item, rng, config, bank)
            for item in train_items
            for _ in range(config.augment_copies)
        ]

    feature_list = pool.map(lambda item: features(item.clip, chain), train_items)
    stacked = np.vstack(feature_list)
    model.feature_mean.copy_(torch.from_numpy(stacked.mean(axis=0)))
    model.feature_std.copy_(
        torch.from_numpy(np.maximum(stacked.std(axis=0), MIN_FEATURE_STD))
    )

    with torch.no_grad():
        inputs = torch.cat([model.prepare(torch.from_numpy(f)) for f in feature_list])
    labels = torch.cat([frame_labels(item, chain, model) for item in train_items])

    report = TrainReport(
        train_clips=n_original,
        augmented_clips=len(train_items) - n_original,
        train_frames=len(labels),
        holdout_clips=len(held),
    )
    logger.info(
        f"[TRAIN] {n_original} clips (+{report.augmented_clips} augmented) / {len(labels)} frames, "
        f"{len(held)} held out, {config.epochs} epochs"
    )

    optimizer = torch.optim.Adam(model.network.parameters(), lr=config.learning_rate)
    generator = torch.Generator().manual_seed(config.seed)
    model.train()
    for epoch in range(config.epochs):
        order = torch.randperm(len(labels), generator=generator)
        epoch_loss = 0.0
        for start in range(0, len(labels), config.batch_size):
            batch = order[start : start + config.batch_size]
            optimizer.zero_grad()
            value = nn.functional.nll_loss(
                torch.log_softmax(model.network(inputs[batch]), dim=-1), labels[batch]
            )
            value.backward()
            optimizer.step()
            epoch_loss += value.item() * len(batch)
        epoch_loss /= len(labels)
        if not np.isfinite(epoch_loss):
            raise TrainingError(f"Training diverged at epoch {epoch + 1}")
        report.loss_trace.append(epoch_loss)
        if (epoch + 1) % max(1, config.log_interval) == 0 or epoch + 1 == config.epochs:
            logger.info(f"[TRAIN] epoch {epoch + 1}/{config.epochs} loss={epoch_loss:.4f}")
    model.eval()

    if report.loss_trace:
        report.final_loss = report.loss_trace[-1]
    report.frame_accuracy, report.sequence_accuracy = evaluate_holdout(model, held, pool)
    logger.info(
        f"[TRAIN] held-out frame accuracy={report.frame_accuracy:.3f} "
        f"sequence accuracy={report.sequence_accuracy:.3f}"
    )
    return model, report


def write_manifest(path, entries):
    """
    Corpus manifest CSV: wav path, space-separated tokens, space-separated start:end spans.

    Args:
        entries (Iterable[tuple]): (wav_path, tokens, segments)
    """
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=MANIFEST_FIELDS, lineterminator="\n")
        writer.writeheader()
        for wav_path, tokens, segments in entries:
            writer.writerow(
                {
                    "wav_path": wav_path,
                    "tokens": " ".join(tokens),
                    "segments": " ".join(f"{s}:{e}" for s, e in segments),
                }
            )
    return path


def read_manifest(path):
    """
    Load a manifest; relative wav paths resolve against the manifest's directory.

    Returns:
        list[LabeledClip]
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Manifest not found: {path}")
    base = os.path.dirname(os.path.abspath(path))
    corpus = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        missing = {"wav_path", "tokens"} - set(reader.fieldnames or [])
        if missing:
            raise ConfigError("manifest", f"missing column(s): {', '.join(sorted(missing))}")
        for row in reader:
            wav_path = row["wav_path"]
            if not os.path.isabs(wav_path):
                wav_path = os.path.join(base, wav_path)
            segments = ()
            if row.get("segments"):
                try:
                    segments = tuple(
                        tuple(int(v) for v in span.split(":")) for span in row["segments"].split()
                    )
                except ValueError as e:
                    raise ConfigError("manifest", f"bad segments '{row['segments']}'") from e
            tokens = tuple(row["tokens"].split())
            if segments and len(segments) != len(tokens):
                raise ConfigError("manifest", f"{wav_path}: {len(tokens)} tokens vs {len(segments)} spans")
            corpus.append(LabeledClip(read_wav(wav_path), tokens, segments))
    logger.info(f"[CORPUS] Loaded {len(corpus)} entries from {path}")
    return corpus
