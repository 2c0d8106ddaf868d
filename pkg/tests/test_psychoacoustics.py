"""
Tests for the psychoacoustic masking-threshold model
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.audio import AudioClip
from src.errors import DomainError, PreconditionError, ShapeError
from src.manager import WorkerPool
from src.psychoacoustics import (
    Masker,
    PSDFrame,
    ath,
    ath_extended,
    bark,
    bin_to_freq,
    find_maskers,
    global_threshold,
    individual_threshold,
    masking_threshold,
    normalize_psd,
    psd,
    relative_psd,
    spreading,
    threshold_rows,
)
from src.psychoacoustics.model import bin_frequencies

N = 2048
FS = 16000


def tone(freq, length=4096, amplitude=0.5):
    t = np.arange(length) / FS
    return AudioClip(amplitude * np.sin(2 * np.pi * freq * t), FS)


# Closed forms


def test_ath_reference_values():
    assert ath(1000) == pytest.approx(3.369, abs=0.005)
    assert ath(3300) == pytest.approx(-4.98, abs=0.01)


def test_ath_outside_hearing_range():
    with pytest.raises(DomainError):
        ath(10)
    with pytest.raises(DomainError):
        ath(25000)


def test_ath_extended_clamps():
    assert ath_extended(0.0) == ath(20.0)
    assert ath_extended(30000.0) == ath(20000.0)


def test_bark_reference_values():
    assert bark(0) == 0.0
    assert bark(1000) == pytest.approx(8.51, abs=0.01)
    assert bark(16000) == pytest.approx(23.84, abs=0.05)


def test_bark_rejects_negative():
    with pytest.raises(DomainError):
        bark(-1.0)


@given(st.floats(0, 20000), st.floats(0, 20000))
def test_bark_is_monotone(f1, f2):
    low, high = sorted((f1, f2))
    assert bark(low) <= bark(high)


def test_bin_to_freq():
    assert bin_to_freq(128, N, FS) == 1000.0
    assert bin_to_freq(N // 2, N, FS) == FS / 2
    with pytest.raises(ShapeError):
        bin_to_freq(N // 2 + 1, N, FS)
    with pytest.raises(ShapeError):
        bin_to_freq(-1, N, FS)


# PSD


def test_psd_floors_zero_bins():
    frame = psd(np.zeros(N // 2 + 1), N)
    assert np.all(frame.values == -200.0)


def test_normalize_puts_max_at_96():
    rng = np.random.default_rng(1)
    frame = normalize_psd(psd(rng.normal(size=N // 2 + 1), N))
    assert frame.normalized
    assert np.max(frame.values) == pytest.approx(96.0, abs=1e-12)
    assert np.all(np.isfinite(frame.values))


def test_normalize_twice_is_rejected():
    frame = normalize_psd(psd(np.ones(N // 2 + 1), N))
    with pytest.raises(PreconditionError):
        normalize_psd(frame)


# Maskers


def test_find_maskers_needs_normalized_frame():
    with pytest.raises(PreconditionError):
        find_maskers(PSDFrame(np.full(N // 2 + 1, 50.0)), N, FS)


def test_flat_frame_has_no_maskers():
    frame = PSDFrame(np.full(N // 2 + 1, 96.0), normalized=True)
    assert find_maskers(frame, N, FS) == []


def test_plateau_smoothing():
    values = np.full(N // 2 + 1, 50.0)
    values[127:130] = 60.0
    maskers = find_maskers(PSDFrame(values, normalized=True), N, FS)
    assert [m.bin_index for m in maskers] == [128]
    assert maskers[0].level == pytest.approx(60 + 10 * np.log10(3), abs=1e-9)
    assert maskers[0].level == pytest.approx(64.77, abs=0.01)


def test_peak_below_ath_is_not_a_masker():
    values = np.full(N // 2 + 1, -60.0)
    values[2] = -50.0  # 15.6 Hz region, far below the hearing threshold there
    assert find_maskers(PSDFrame(values, normalized=True), N, FS) == []


def test_quieter_neighbour_within_half_bark_is_dropped():
    values = np.full(N // 2 + 1, 20.0)
    values[128] = 80.0
    values[131] = 70.0  # about 0.2 Bark away
    values[200] = 70.0  # several Bark away
    maskers = find_maskers(PSDFrame(values, normalized=True), N, FS)
    assert [m.bin_index for m in maskers] == [128, 200]


def test_equal_candidates_keep_lower_bin():
    values = np.full(N // 2 + 1, 20.0)
    values[128] = 80.0
    values[131] = 80.0
    maskers = find_maskers(PSDFrame(values, normalized=True), N, FS)
    assert [m.bin_index for m in maskers] == [128]


def test_single_tone_gives_one_masker_per_frame():
    threshold = masking_threshold(tone(1000.0), N, 512)
    assert threshold.n_frames == 5
    for frame_maskers in threshold.maskers:
        assert [m.bin_index for m in frame_maskers] == [128]


# Spreading and thresholds


def test_spreading_slopes():
    assert spreading(10.0, 9.0, 60.0) == pytest.approx(-27.0)
    assert spreading(10.0, 11.0, 30.0) == pytest.approx(-27.0)
    assert spreading(10.0, 11.0, 60.0) == pytest.approx(-27.0 + 0.37 * 20.0)
    assert spreading(10.0, 10.0, 60.0) == 0.0


def test_individual_threshold_at_masker():
    masker = Masker(bin_index=128, bark=8.51, level=64.77)
    assert individual_threshold(masker, 8.51) == pytest.approx(56.40, abs=0.01)


def test_empty_masker_set_is_ath():
    theta = global_threshold([], N, FS)
    assert np.array_equal(theta, ath_extended(bin_frequencies(N, FS)))


def test_tone_masks_neighbouring_frequency():
    freqs = bin_frequencies(N, FS)
    k = 108  # 843.75 Hz
    masker = Masker(bin_index=k, bark=bark(freqs[k]), level=50.0)
    theta = global_threshold([masker], N, FS)
    near_850 = int(np.argmin(np.abs(freqs - 850.0)))
    assert theta[near_850] > 32.0


def test_bins_above_hearing_range_copy_last_in_range_bin():
    rate = 48000
    theta = global_threshold([Masker(300, 12.0, 70.0)], N, rate)
    freqs = bin_frequencies(N, rate)
    last = int(np.flatnonzero(freqs <= 20000)[-1])
    assert np.all(theta[freqs > 20000] == theta[last])


masker_strategy = st.builds(
    lambda k, level: (k, level),
    st.integers(1, N // 2 - 1),
    st.floats(0.0, 96.0),
)


@settings(max_examples=100)
@given(st.lists(masker_strategy, max_size=6), masker_strategy)
def test_threshold_properties(existing, extra):
    freqs = bin_frequencies(N, FS)
    barks = bark(freqs)
    maskers = [Masker(k, float(barks[k]), level) for k, level in existing]
    theta = global_threshold(maskers, N, FS)
    assert np.all(theta >= ath_extended(freqs) - 1e-9)

    k, level = extra
    more = global_threshold(maskers + [Masker(k, float(barks[k]), level)], N, FS)
    assert np.all(more >= theta - 1e-9)


def test_silence_threshold_is_ath():
    threshold = masking_threshold(AudioClip.silence(8000, FS))
    expected = ath_extended(threshold.bin_frequencies())
    for row in threshold.theta:
        assert np.array_equal(row, expected)
    assert all(m == [] for m in threshold.maskers)


def test_empty_clip_rejected():
    with pytest.raises(PreconditionError):
        masking_threshold(AudioClip([], FS))


def test_parallel_threshold_is_bit_identical():
    rng = np.random.default_rng(5)
    clip = AudioClip(rng.uniform(-0.3, 0.3, 12000), FS)
    sequential = masking_threshold(clip)
    with WorkerPool(4) as pool:
        parallel = masking_threshold(clip, pool=pool)
    assert np.array_equal(sequential.theta, parallel.theta)
    assert np.array_equal(sequential.offsets, parallel.offsets)


def test_relative_psd_shares_mixture_scale():
    rng = np.random.default_rng(8)
    clip = AudioClip(rng.normal(0.0, 0.05, 6000), FS)
    threshold = masking_threshold(clip)
    shifted = relative_psd(clip, threshold.offsets)
    assert np.allclose(shifted, threshold.psd, atol=1e-9)
    with pytest.raises(ShapeError):
        relative_psd(clip, threshold.offsets[:-1])


def test_relative_psd_keeps_silence_at_floor():
    threshold = masking_threshold(tone(1000.0))
    silent = relative_psd(AudioClip.silence(4096, FS), threshold.offsets)
    assert np.all(silent == -200.0)


def test_threshold_rows_cover_every_cell():
    threshold = masking_threshold(tone(440.0, length=3000))
    rows = list(threshold_rows(threshold))
    assert len(rows) == threshold.n_frames * (N // 2 + 1)
    frame, k, freq, level, theta = rows[N // 2 + 2]
    assert (frame, k) == (1, 1)
    assert freq == pytest.approx(FS / N)
    assert theta == threshold.theta[1, 1]
