"""
Tests for music footage synthesis and the masking placement search
"""

import importlib
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.asr import Transcription, transcribe
from src.audio import AudioClip, mix, stft
from src.errors import ConfigError, DomainError, PreconditionError
from src.manager import WorkerPool
from src.masking import (
    TIMBRES,
    FootageBank,
    SearchConfig,
    coverage,
    frame_grid,
    score,
    search,
    synth_footage,
    threshold_gap,
)
from src.masking.search import SATURATION_BACKOFF, footage_amplitude, mutate
from src.psychoacoustics import masking_threshold

search_module = importlib.import_module("src.masking.search")

FS = 16000


def sine(freq, length, amplitude):
    t = np.arange(length) / FS
    return amplitude * np.sin(2 * np.pi * freq * t)


# Footage


def test_footage_length():
    footage = synth_footage(440.0, "piano", 200, 0.5)
    assert len(footage.rendered) == 3200


def test_silent_footage():
    footage = synth_footage(440.0, "organ", 100, 0.0)
    assert len(footage.rendered) == 1600
    assert not np.any(footage.rendered.samples)


def test_sine_footage_is_a_pure_tone():
    footage = synth_footage(437.5, "sine", 400, 0.8)  # bin-centred at N=2048
    spectrum = np.abs(stft(footage.rendered, 2048, 512).frames[1])
    peak = int(np.argmax(spectrum))
    assert peak == 56
    harmonics = [spectrum[peak * n] for n in (2, 3, 4)]
    assert 20 * np.log10(max(harmonics) / spectrum[peak]) < -40


def test_footage_peak_is_the_amplitude():
    for timbre in TIMBRES:
        footage = synth_footage(262.0, timbre, 400, 0.3)
        assert footage.rendered.peak <= 0.3 + 1e-12


@pytest.mark.parametrize(
    "tone, duration, amplitude",
    [(8000.0, 100, 0.5), (9000.0, 100, 0.5), (440.0, 0, 0.5), (440.0, 100, 1.5)],
)
def test_footage_domain(tone, duration, amplitude):
    with pytest.raises(DomainError):
        synth_footage(tone, "sine", duration, amplitude)


def test_unknown_timbre():
    with pytest.raises(ConfigError):
        synth_footage(440.0, "kazoo", 100, 0.5)


def test_bank_validation(tmp_path):
    with pytest.raises(ConfigError):
        FootageBank(tones_hz=())
    with pytest.raises(ConfigError):
        FootageBank(timbres=("kazoo",))
    with pytest.raises(ConfigError):
        FootageBank.from_dict({"tones": [440.0]})

    path = tmp_path / "bank.json"
    path.write_text(json.dumps({"tones_hz": [330.0], "timbres": ["sine"]}), encoding="utf-8")
    bank = FootageBank.load(path)
    assert bank.tones_hz == (330.0,)
    assert bank.size == len(bank.durations_ms)


# Frame grid


def test_frame_grid_positions():
    delta = AudioClip.silence(FS, FS)
    assert frame_grid(delta, 200) == [0, 3200, 6400, 9600, 12800]


def test_frame_grid_cap():
    with pytest.raises(ConfigError):
        frame_grid(AudioClip.silence(FS, FS), 250)


def test_short_clip_has_one_position():
    assert frame_grid(AudioClip.silence(1000, FS), 200) == [0]


@given(st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_mutation_changes_one_coordinate(k, seed):
    bank = FootageBank()
    grid = list(range(5))
    rng = np.random.default_rng(seed)
    state = tuple((0, 0, 0, 0) for _ in range(k))
    mutated = mutate(state, rng, bank, grid)
    changed = [
        (a, b) for old, new in zip(state, mutated) for a, b in zip(old, new) if a != b
    ]
    assert len(changed) <= 1
    for piece in mutated:
        assert piece[0] < len(bank.tones_hz)
        assert piece[1] < len(bank.timbres)
        assert piece[2] < len(bank.durations_ms)
        assert piece[3] < len(grid)


# Score


def test_silent_delta_scores_against_the_floor():
    rng = np.random.default_rng(4)
    mixture = AudioClip(rng.normal(0.0, 0.05, 6000), FS)
    delta = AudioClip.silence(6000, FS)
    theta, theta_delta, in_range = threshold_gap(mixture, delta)
    assert np.all(theta_delta == -200.0)
    expected = np.mean(theta[:, in_range] + 200.0)
    assert score(mixture, delta) == pytest.approx(expected)


def test_self_masking_baseline():
    rng = np.random.default_rng(5)
    delta = AudioClip(rng.normal(0.0, 0.05, 6000), FS)
    threshold = masking_threshold(delta)
    in_range = threshold.hearing_mask()
    expected = np.mean(np.abs(threshold.psd[:, in_range] - threshold.theta[:, in_range]))
    assert score(delta, delta) == pytest.approx(expected, rel=1e-9)


def test_overlapping_tone_hides_the_perturbation():
    length = 8000
    samples = np.zeros(length)
    samples[:4000] = sine(500.0, 4000, 0.02) + sine(750.0, 4000, 0.02)
    delta = AudioClip(samples, FS)
    footage = synth_footage(500.0, "sine", 250, 0.5).rendered

    overlapping = mix(delta, footage, 0)
    disjoint = mix(delta, footage, 4000)
    assert len(overlapping) == len(disjoint) == length
    assert score(overlapping, delta, hinge=True) < score(disjoint, delta, hinge=True)
    assert coverage(overlapping, delta) < coverage(disjoint, delta)


# Search


def test_search_config_validation():
    with pytest.raises(ConfigError):
        SearchConfig(k=0)
    with pytest.raises(ConfigError):
        SearchConfig(frame_len_ms=250)
    with pytest.raises(ConfigError):
        SearchConfig(batch=0)
    with pytest.raises(ConfigError):
        SearchConfig(level=-1.0)
    with pytest.raises(ConfigError):
        SearchConfig(level_backoff=-1)


def test_footage_amplitude_follows_the_perturbation():
    delta = AudioClip(sine(500.0, 4000, 0.05), FS)
    assert footage_amplitude(delta, SearchConfig(level=4.0)) == pytest.approx(4.0 * delta.peak)
    assert footage_amplitude(delta, SearchConfig(level=100.0)) == 1.0
    assert footage_amplitude(delta, SearchConfig(level=None, amplitude=0.3)) == 0.3


def test_unmaskable_perturbation_reports_no_score(untrained_model, monkeypatch):
    delta = AudioClip(sine(500.0, 6000, 0.05), FS)
    target = Transcription(("hui", "che"))

    def only_bare_delta(model, clip):
        return target if clip is delta else Transcription(())

    monkeypatch.setattr(search_module, "transcribe", only_bare_delta)
    cfg = SearchConfig(k=1, max_iters=3, batch=2, seed=4, level_backoff=2)
    result = search(delta, target, untrained_model, cfg)

    assert result.no_mask
    assert result.mixture is delta
    assert math.isnan(result.score)
    assert not math.isnan(result.initial_score)
    assert result.footage_amplitude == pytest.approx(
        footage_amplitude(delta, cfg) * SATURATION_BACKOFF**cfg.level_backoff
    )
    assert math.isnan(result.telemetry()["v_best"])


@pytest.mark.slow
def test_non_adversarial_delta_is_rejected(trained_model, masking_case):
    delta, target = masking_case
    other = AudioClip.silence(len(delta), FS)
    if transcribe(trained_model, other) == target:
        pytest.skip("silence decodes to the target")
    with pytest.raises(PreconditionError):
        search(other, target, trained_model, SearchConfig(max_iters=1))


@pytest.mark.slow
def test_search_keeps_the_transcription(trained_model, masking_case):
    delta, target = masking_case
    cfg = SearchConfig(k=2, max_iters=12, seed=1)
    result = search(delta, target, trained_model, cfg)

    assert transcribe(trained_model, result.mixture) == target
    assert len(result.mixture) == len(delta)
    assert np.max(np.abs(result.mixture.samples)) <= 1.0
    assert all(b <= a for a, b in zip(result.best_trace, result.best_trace[1:]))
    if not result.no_mask:
        assert result.score <= result.initial_score
        assert len(result.placements) == cfg.k
    telemetry = result.telemetry()
    assert telemetry["footage_amplitude"] <= min(1.0, cfg.level * delta.peak)
    if not result.no_mask:
        assert telemetry["v_best"] == result.score
    assert len(telemetry["v_trace"]) == cfg.max_iters * cfg.batch


@pytest.mark.slow
def test_parallel_search_matches_sequential(trained_model, masking_case):
    delta, target = masking_case
    cfg = SearchConfig(k=1, max_iters=4, batch=3, seed=2)
    sequential = search(delta, target, trained_model, cfg)
    with WorkerPool(3) as pool:
        parallel = search(delta, target, trained_model, cfg, pool=pool)
    assert parallel.mixture == sequential.mixture
    assert parallel.v_trace == sequential.v_trace


@settings(max_examples=10, deadline=None)
@given(st.sampled_from(["sine", "piano", "organ", "strings"]), st.floats(100.0, 2000.0))
def test_footage_is_deterministic(timbre, tone):
    first = synth_footage(tone, timbre, 50, 0.4)
    second = synth_footage(tone, timbre, 50, 0.4)
    assert first.rendered == second.rendered


@pytest.mark.slow
def test_search_hides_generated_perturbations(default_model, attack_batch):
    successes = [run for run in attack_batch if run.result.success][:3]
    assert successes
    for index, run in enumerate(successes):
        delta = run.result.delta
        result = search(delta, run.target, default_model, SearchConfig(max_iters=100, seed=index))
        assert not result.no_mask
        assert result.score < result.initial_score
        assert transcribe(default_model, result.mixture) == run.target
        assert result.coverage_after < result.coverage_before
