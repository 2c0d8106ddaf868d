"""
Tests for SRoA alignment, defenses, the relay channel and evaluation rows
"""

import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, strategies as st

from src.asr import Transcription, default_recipes, synth_corpus, transcribe
from src.audio import AudioClip, signal_to_distortion
from src.config.constants import (
    DEFENSE_LOW_RATE,
    DEFENSE_RESTORE_RATE,
    DEFENSE_SIGMA_GRID,
    DEFENSE_TRIALS,
)
from src.errors import ConfigError, DomainError
from src.evaluation import (
    DefenseReport,
    DefenseSample,
    EvaluationRow,
    NoiseCurve,
    RelayParams,
    align,
    defense_downsample,
    defense_noise_probe,
    evaluate_samples,
    relay_chain,
    relay_simulate,
    sroa,
    summarize,
)
from src.evaluation.metrics import FINE

FS = 16000


def brute_force(ref, hyp):
    """(edits, matches) of the best alignment by exhaustive recursion"""

    @lru_cache(maxsize=None)
    def best(i, j):
        if i == len(ref):
            return (len(hyp) - j, 0)
        if j == len(hyp):
            return (len(ref) - i, 0)
        edits, neg = best(i + 1, j + 1)
        same = ref[i] == hyp[j]
        options = [(edits + (0 if same else 1), neg - (1 if same else 0))]
        edits, neg = best(i + 1, j)
        options.append((edits + 1, neg))
        edits, neg = best(i, j + 1)
        options.append((edits + 1, neg))
        return min(options)

    edits, neg = best(0, 0)
    return edits, -neg


units = st.lists(st.sampled_from("abc"), max_size=6)


@given(units, units)
def test_alignment_matches_exhaustive_search(ref, hyp):
    alignment = align(ref, hyp)
    assert (alignment.distance, alignment.matches) == brute_force(tuple(ref), tuple(hyp))
    consumed_ref = [i for _, i, _ in alignment.operations if i is not None]
    consumed_hyp = [j for _, _, j in alignment.operations if j is not None]
    assert consumed_ref == list(range(len(ref)))
    assert consumed_hyp == list(range(len(hyp)))


def test_sroa_coarse_and_fine():
    reference = Transcription(("hui", "che"))
    hypothesis = Transcription(("huo", "che"))
    assert sroa(reference, hypothesis) == 0.5
    assert sroa(reference, hypothesis, FINE) == pytest.approx(5 / 6)


def test_sroa_of_identical_sequences():
    reference = Transcription(("bo", "fang", "yin", "yue"))
    assert sroa(reference, reference) == 1.0
    assert sroa(reference, reference, FINE) == 1.0


def test_sroa_of_empty_hypothesis():
    assert sroa(Transcription(("da", "kai")), Transcription()) == 0.0


def test_sroa_needs_a_reference():
    with pytest.raises(DomainError):
        sroa(Transcription(), Transcription(("da",)))


def test_sroa_unknown_granularity():
    with pytest.raises(ConfigError):
        sroa(Transcription(("da",)), Transcription(("da",)), "phoneme")


@given(st.lists(st.sampled_from(["hui", "che", "da", "kai"]), min_size=1, max_size=5))
def test_sroa_is_a_fraction(tokens):
    reference = Transcription(tuple(tokens))
    hypothesis = Transcription(tuple(reversed(tokens)))
    assert 0.0 <= sroa(reference, hypothesis) <= 1.0
    assert 0.0 <= sroa(reference, hypothesis, FINE) <= 1.0


# Relay


def test_identity_relay_leaves_the_clip_alone(noise_clip):
    assert relay_simulate(noise_clip, 3, RelayParams.identity()) == noise_clip


def test_relay_needs_a_hop(noise_clip):
    with pytest.raises(ConfigError):
        relay_chain(noise_clip, 0, RelayParams())


def test_relay_is_deterministic_per_seed(noise_clip):
    params = RelayParams(seed=4)
    assert relay_simulate(noise_clip, 2, params) == relay_simulate(noise_clip, 2, params)
    assert relay_simulate(noise_clip, 2, params) != relay_simulate(
        noise_clip, 2, RelayParams(seed=5)
    )


def test_relay_distortion_grows_with_hops():
    t = np.arange(8000) / FS
    clip = AudioClip(0.3 * np.sin(2 * np.pi * 440.0 * t), FS)
    params = RelayParams(low_rate=None, gain_jitter_db=0.0, noise_sigma=0.01, seed=2)
    chain = relay_chain(clip, 3, params)
    assert [len(c) for c in chain] == [len(clip)] * 3
    sdrs = [signal_to_distortion(clip, c) for c in chain]
    assert sdrs[2] < sdrs[0]


# Defenses


def test_downsample_to_the_same_rate_changes_nothing(untrained_model, noise_clip):
    target = transcribe(untrained_model, noise_clip)
    samples = [DefenseSample("sample_0000", noise_clip, target)]
    report = defense_downsample(samples, untrained_model, FS, FS)
    assert report.rate_before == report.rate_after == 1.0
    row = report.rows[0]
    assert row.before == row.after == target.text


def test_downsample_rejects_bad_rate_order(untrained_model, noise_clip):
    samples = [DefenseSample("sample_0000", noise_clip, Transcription(("da",)))]
    with pytest.raises(ConfigError):
        defense_downsample(samples, untrained_model, 8000, 4000)
    with pytest.raises(ConfigError):
        defense_downsample(samples, untrained_model, 8000, 22050)


def test_downsample_report(untrained_model, noise_clip):
    samples = [
        DefenseSample(f"sample_{i:04d}", noise_clip, Transcription(("da",))) for i in range(2)
    ]
    report = defense_downsample(samples, untrained_model, 8000, FS)
    assert len(report.rows) == 2
    summary = report.to_dict()
    assert summary["parameters"] == {"low_rate": 8000, "restore_rate": FS}
    assert summary["samples"] == 2


def test_empty_report_rates_are_nan():
    report = DefenseReport()
    assert math.isnan(report.rate_before)
    assert math.isnan(report.rate_after)


def test_noise_curve_without_noise(untrained_model):
    clip = AudioClip.silence(4000, FS)
    target = transcribe(untrained_model, clip)
    curve = defense_noise_probe(clip, untrained_model, target, (0.0,), trials=4, seed=1)
    assert curve.rates == (1.0,)
    assert curve.trials == 4


def test_noise_curve_needs_sorted_grid(untrained_model):
    clip = AudioClip.silence(4000, FS)
    with pytest.raises(ConfigError):
        defense_noise_probe(clip, untrained_model, Transcription(("da",)), (0.1, 0.0), 2, 1)


def test_noise_curve_is_deterministic(untrained_model, noise_clip):
    target = transcribe(untrained_model, noise_clip)
    grid = (0.0, 0.05, 0.2)
    first = defense_noise_probe(noise_clip, untrained_model, target, grid, 3, seed=9)
    second = defense_noise_probe(noise_clip, untrained_model, target, grid, 3, seed=9)
    assert first == second
    assert all(0.0 <= rate <= 1.0 for rate in first.rates)


def test_noise_curve_slope():
    curve = NoiseCurve((0.0, 0.1, 0.2), (1.0, 0.5, 0.0), trials=10)
    assert curve.slope() == pytest.approx(-5.0)
    assert NoiseCurve((0.1,), (0.5,), 10).slope() == 0.0


# Evaluation rows


def test_evaluation_rows_per_condition(untrained_model, noise_clip):
    samples = [DefenseSample("sample_0000", noise_clip, Transcription(("hui", "che")))]
    rows = evaluate_samples(samples, untrained_model, 2, RelayParams.identity())
    assert [row.condition for row in rows] == ["digital", "relay_1", "relay_2"]
    assert len({(row.decoded, row.sroa_coarse, row.sroa_fine) for row in rows}) == 1
    assert all(row.sdr_db == float("inf") for row in rows)


def test_digital_only_evaluation(untrained_model, noise_clip):
    samples = [DefenseSample("sample_0000", noise_clip, Transcription(("hui", "che")))]
    rows = evaluate_samples(samples, untrained_model, 0, RelayParams())
    assert len(rows) == 1
    assert rows[0].to_dict()["sample_id"] == "sample_0000"


def test_summarize_groups_by_condition():
    rows = [
        EvaluationRow("a", "hui che", "hui che", 1.0, 1.0, "digital", 30.0),
        EvaluationRow("b", "hui che", "huo che", 0.5, 5 / 6, "digital", 28.0),
        EvaluationRow("a", "hui che", "", 0.0, 0.0, "relay_1", 5.0),
    ]
    summary = summarize(rows)
    assert list(summary) == ["digital", "relay_1"]
    assert summary["digital"]["samples"] == 2
    assert summary["digital"]["sroa_coarse"] == pytest.approx(0.75)
    assert summary["digital"]["exact"] == pytest.approx(0.5)
    assert summary["relay_1"]["sroa_fine"] == 0.0


# Defense direction on the default recognizer

BENIGN_SEED = 31
BENIGN_COUNT = 40


@pytest.fixture(scope="module")
def defense_sets(attack_batch):
    adversarial = [
        DefenseSample(f"sample_{i:04d}", run.result.delta, run.target)
        for i, run in enumerate(attack_batch)
        if run.result.success
    ]
    benign = [
        DefenseSample(f"benign_{i:04d}", item.clip, Transcription(item.tokens))
        for i, item in enumerate(synth_corpus(default_recipes(), BENIGN_COUNT, BENIGN_SEED))
    ]
    return adversarial, benign


def mean_curve(samples, model):
    curves = [
        defense_noise_probe(
            s.clip, model, s.target, DEFENSE_SIGMA_GRID, DEFENSE_TRIALS, seed=index
        )
        for index, s in enumerate(samples)
    ]
    rates = np.mean([curve.rates for curve in curves], axis=0)
    return NoiseCurve(tuple(DEFENSE_SIGMA_GRID), tuple(rates), DEFENSE_TRIALS)


@pytest.mark.slow
def test_downsampling_breaks_attacks_but_not_speech(default_model, defense_sets):
    adversarial, benign = defense_sets
    rates = (DEFENSE_LOW_RATE, DEFENSE_RESTORE_RATE)
    attacked = defense_downsample(adversarial, default_model, *rates)
    clean = defense_downsample(benign, default_model, *rates)

    assert attacked.rate_after < attacked.rate_before
    assert clean.rate_before > 0
    assert (clean.rate_before - clean.rate_after) / clean.rate_before < 0.1


@pytest.mark.slow
def test_noise_hurts_attacks_more_than_speech(default_model, defense_sets):
    adversarial, benign = defense_sets
    attacked = mean_curve(adversarial, default_model)
    clean = mean_curve(benign, default_model)

    assert attacked.slope() <= 0
    assert clean.slope() <= 0
    dominated = sum(b >= a for a, b in zip(attacked.rates, clean.rates))
    assert dominated >= 0.8 * len(DEFENSE_SIGMA_GRID)
