from dataclasses import dataclass

import numpy as np
import pytest
import torch

from src.asr import AcousticModel, FeatureChain, Transcription, transcribe
from src.asr.training import TrainConfig, default_recipes, synth_corpus, train
from src.attack import AttackConfig, generate
from src.audio import AudioClip
from src.config.constants import CORPUS_SIZE
from src.config.vocabulary import TOKENS, token_mapper

# Small enough to train in seconds, large enough to separate the tokens
CORPUS_SEED = 11
CORPUS_SIZE_SMALL = 160
FIXTURE_TRAIN = TrainConfig(
    epochs=12,
    batch_size=128,
    learning_rate=2e-3,
    hidden_sizes=(64,),
    context=2,
    holdout=0.2,
    seed=3,
)

# Full-size recognizer and the attack batch run against it
DEFAULT_CORPUS_SEED = 17
DEFAULT_TRAIN_SEED = 5
ATTACK_BATCH = 20
ATTACK_TARGET_SEED = 2024


@dataclass
class AttackRun:
    target: Transcription
    config: AttackConfig
    result: object


def random_targets(count, seed):
    """2-4 token targets without adjacent repeats"""
    rng = np.random.default_rng(seed)
    targets = []
    for _ in range(count):
        length = int(rng.integers(2, 5))
        chosen = [int(rng.integers(len(TOKENS)))]
        while len(chosen) < length:
            chosen.append((chosen[-1] + int(rng.integers(1, len(TOKENS)))) % len(TOKENS))
        targets.append(Transcription(tuple(TOKENS[i] for i in chosen)))
    return targets


@pytest.fixture
def chain():
    return FeatureChain()


@pytest.fixture
def untrained_model(chain):
    torch.manual_seed(0)
    return AcousticModel(token_mapper.get_vocabulary(), chain=chain, hidden_sizes=(32,), context=1)


@pytest.fixture(scope="session")
def corpus():
    return synth_corpus(default_recipes(), CORPUS_SIZE_SMALL, CORPUS_SEED)


@pytest.fixture(scope="session")
def trained(corpus):
    """(model, report) trained once per session"""
    return train(corpus, FIXTURE_TRAIN)


@pytest.fixture(scope="session")
def trained_model(trained):
    return trained[0]


@pytest.fixture(scope="session")
def default_trained():
    """(model, report) with the toolkit's default corpus size and training settings"""
    corpus = synth_corpus(default_recipes(), CORPUS_SIZE, DEFAULT_CORPUS_SEED)
    return train(corpus, TrainConfig(seed=DEFAULT_TRAIN_SEED))


@pytest.fixture(scope="session")
def default_model(default_trained):
    return default_trained[0]


@pytest.fixture(scope="session")
def attack_batch(default_model):
    """Default two-stage attacks on 20 random targets, one pinned seed each"""
    runs = []
    for index, target in enumerate(random_targets(ATTACK_BATCH, ATTACK_TARGET_SEED)):
        config = AttackConfig(seed=7 + index)
        runs.append(AttackRun(target, config, generate(default_model, target, config)))
    return runs


@pytest.fixture(scope="session")
def masking_case(trained_model):
    """A clip the trained model transcribes to a non-empty sequence, with that sequence"""
    for item in synth_corpus(default_recipes(), 20, seed=99):
        decoded = transcribe(trained_model, item.clip)
        if len(decoded) > 0:
            return item.clip, decoded
    pytest.skip("trained fixture model decodes every sample clip to nothing")


@pytest.fixture
def noise_clip():
    rng = np.random.default_rng(21)
    return AudioClip(rng.normal(0.0, 0.05, 4000), 16000)
