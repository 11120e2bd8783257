"""Unit tests for synthetic signals, augmentation and resampling."""

import numpy as np
import pytest

from core.exceptions import AugmentationNotApplicable, ParameterError, SignalFormatError
from core.signalgen import (default_profiles, generate_ibi_sequence, ibis_from_peaks,
                            pulse_template, render_pulse_train, resample, superpose_augment,
                            synthesize_subject)
from models.signal import AnnotatedSignal, PulseTemplate, SubjectProfile


def test_constant_ibis_when_std_is_zero():
    """Zero variance gives constant IBIs that just cover the duration."""
    profile = SubjectProfile(subject_id=1, ibi_mean=0.7, ibi_std=0.0, duration=2.1)
    ibis = generate_ibi_sequence(profile, seed=5)
    np.testing.assert_allclose(ibis, [0.7, 0.7, 0.7])


def test_ibis_are_clamped_and_cover_duration():
    """Draws stay within [ibi_min, ibi_max] and sum to at least the duration."""
    profile = SubjectProfile(subject_id=1, ibi_mean=0.7, ibi_std=0.05, ibi_min=0.5, ibi_max=1.1,
                             duration=60.0)
    ibis = generate_ibi_sequence(profile, seed=42)
    assert ibis.min() >= 0.5
    assert ibis.max() <= 1.1
    assert ibis.sum() >= 60.0 - 1e-9
    assert ibis[:-1].sum() < 60.0


def test_ibi_generation_is_deterministic():
    """Same seed, same sequence, bit for bit."""
    profile = SubjectProfile(subject_id=1, ibi_mean=0.7, ibi_std=0.05)
    first = generate_ibi_sequence(profile, seed=42)
    second = generate_ibi_sequence(profile, seed=42)
    assert first.tobytes() == second.tobytes()
    assert not np.array_equal(first, generate_ibi_sequence(profile, seed=43))


def test_invalid_profile_is_rejected():
    """Profile invariants raise ParameterError."""
    with pytest.raises(ParameterError):
        SubjectProfile(subject_id=1, ibi_mean=0.4, ibi_min=0.5)
    with pytest.raises(ParameterError):
        SubjectProfile(subject_id=1, ibi_std=-0.1)
    with pytest.raises(ParameterError):
        SubjectProfile(subject_id=1, duration=0)
    with pytest.raises(ParameterError):
        SubjectProfile(subject_id=1, pulse_template_id="square")


def test_profile_dict_round_trip():
    """Profiles survive to_dict/from_dict and reject unknown keys."""
    profile = SubjectProfile(subject_id=3, pulse_template_id="biphasic")
    assert SubjectProfile.from_dict(profile.to_dict()) == profile
    with pytest.raises(ParameterError):
        SubjectProfile.from_dict({'subject_id': 1, 'colour': 'red'})


def test_render_places_peaks_at_cumulative_ibis(clean_profile):
    """R-peaks sit at round(fs * cumulative IBI)."""
    signal = render_pulse_train(np.array([1.0, 1.0]), clean_profile, 500, seed=0)
    assert signal.r_peaks.tolist() == [0, 500, 1000]


def test_render_n_ibis_gives_n_plus_one_peaks(clean_profile):
    """n IBIs produce n + 1 R-peaks."""
    signal = render_pulse_train(np.full(10, 0.7), clean_profile, 500, seed=0)
    assert len(signal.r_peaks) == 11


@pytest.mark.parametrize("kind", list(PulseTemplate))
def test_noise_free_samples_at_peaks_equal_template_maximum(kind):
    """Without noise every R-peak sample is the template maximum."""
    profile = SubjectProfile(subject_id=1, ibi_mean=0.8, ibi_std=0.0, noise_std=0.0,
                             pulse_template_id=kind, duration=5.0)
    signal = render_pulse_train(np.full(6, 0.8), profile, 500, seed=0)
    template, _ = pulse_template(kind, 500)
    np.testing.assert_allclose(signal.samples[signal.r_peaks], template.max(), rtol=1e-6)


def test_render_rejects_low_sampling_rate(clean_profile):
    """Sampling rates below 100 Hz are refused."""
    with pytest.raises(ParameterError):
        render_pulse_train(np.full(3, 0.7), clean_profile, 50, seed=0)


def test_peaks_reproduce_ibis_within_one_sample():
    """ibis_from_peaks recovers the generated IBIs up to quantisation."""
    profile = SubjectProfile(subject_id=2, ibi_mean=0.75, ibi_std=0.06, duration=40.0)
    ibis = generate_ibi_sequence(profile, seed=9)
    signal = render_pulse_train(ibis, profile, 500, seed=9)
    recovered = ibis_from_peaks(signal.r_peaks, signal.fs)
    assert np.max(np.abs(recovered - ibis)) <= 1 / 500 + 1e-12


def test_synthesis_is_pure():
    """Two syntheses with the same seed are identical."""
    profile = SubjectProfile(subject_id=5, duration=10.0)
    a = synthesize_subject(profile, 500, seed=3)
    b = synthesize_subject(profile, 500, seed=3)
    assert a.samples.tobytes() == b.samples.tobytes()
    assert a.r_peaks.tolist() == b.r_peaks.tolist()


def test_annotated_signal_rejects_bad_peaks():
    """Out-of-range, unordered or too-close R-peaks are refused."""
    samples = np.zeros(1000, dtype=np.float32)
    with pytest.raises(SignalFormatError):
        AnnotatedSignal(samples, 500, np.array([0, 1000]))
    with pytest.raises(SignalFormatError):
        AnnotatedSignal(samples, 500, np.array([400, 200]))
    with pytest.raises(SignalFormatError):
        AnnotatedSignal(samples, 500, np.array([0, 100]))


def _spaced_signal(peak_seconds, fs=500, length_seconds=2.2):
    samples = np.zeros(int(length_seconds * fs), dtype=np.float32)
    peaks = (np.array(peak_seconds) * fs).astype(int)
    samples[peaks] = 1.0
    return AnnotatedSignal(samples, fs, peaks, subject_id=4)


def test_superposition_halves_one_second_rhythm():
    """Peaks every 1 s shifted by 0.5 s give peaks every 0.5 s."""
    signal = _spaced_signal([0.0, 1.0, 2.0])
    out = superpose_augment(signal, seed=0, alpha=0.5)
    assert out.r_peaks.tolist() == [0, 250, 500, 750]
    np.testing.assert_allclose(out.ibis(), 0.5)
    assert len(out.samples) == len(signal.samples) - 250
    assert out.meta['augmented'] is True


def test_superposition_of_zero_signal_is_zero():
    """The augmentation is linear in the samples."""
    signal = AnnotatedSignal(np.zeros(1500, np.float32), 500, np.array([0, 500, 1000]))
    out = superpose_augment(signal, seed=1)
    assert not out.samples.any()


def test_superposition_requires_slow_rhythm(small_population):
    """Median IBI outside [0.9, 1.1] s is not augmentable."""
    with pytest.raises(AugmentationNotApplicable):
        superpose_augment(small_population[0], seed=0)


def test_superposition_requires_two_peaks():
    """A single R-peak cannot be augmented."""
    signal = AnnotatedSignal(np.zeros(1000, np.float32), 500, np.array([10]))
    with pytest.raises(AugmentationNotApplicable):
        superpose_augment(signal, seed=0)


def test_superposition_matches_shifted_union(slow_profile):
    """Over fifty slow signals, output peaks equal the union of the original and shifted index sets."""
    for seed in range(50):
        signal = synthesize_subject(slow_profile, 500, seed=seed)
        out = superpose_augment(signal, seed=7 + seed)
        shift = out.meta['shift_samples']
        assert 225 <= shift <= 275
        n = len(out.samples)
        expected = sorted(
            {int(p) for p in signal.r_peaks if p < n}
            | {int(p) - shift for p in signal.r_peaks if 0 <= p - shift < n}
        )
        assert out.r_peaks.tolist() == expected
        np.testing.assert_array_equal(out.samples, signal.samples[:n] + signal.samples[shift:shift + n])
        assert 0.40 <= np.median(out.ibis()) <= 0.60


def test_resample_identity():
    """Resampling to the same rate returns an equal copy."""
    signal = _spaced_signal([0.5, 1.5])
    out = resample(signal, 500)
    assert out is not signal
    np.testing.assert_array_equal(out.samples, signal.samples)
    assert out.r_peaks.tolist() == signal.r_peaks.tolist()


def test_resample_scales_peak_indices():
    """A peak at sample 100 of a 250 Hz signal lands on sample 200 at 500 Hz."""
    signal = AnnotatedSignal(np.zeros(1000, np.float32), 250, np.array([100, 400]))
    out = resample(signal, 500)
    assert out.fs == 500
    assert out.r_peaks.tolist() == [200, 800]


def test_resample_matches_linear_interpolation(ramp_signal):
    """Every output sample equals the interpolated input at t = k / target_fs."""
    out = resample(ramp_signal, 500)
    t = np.arange(len(out.samples)) / 500
    expected = np.interp(t * 1000, np.arange(2000), ramp_signal.samples)
    np.testing.assert_allclose(out.samples, expected, atol=1e-4)
    assert out.r_peaks.tolist() == [50, 300, 550]


def test_resample_rejects_low_rate(ramp_signal):
    """Targets under 100 Hz are refused."""
    with pytest.raises(ParameterError):
        resample(ramp_signal, 50)


def test_default_profiles_cover_population():
    """Eleven subjects with medians in the observed spread and two augmentable ones."""
    profiles = default_profiles(duration=60.0)
    assert [p.subject_id for p in profiles] == list(range(1, 12))
    means = [p.ibi_mean for p in profiles]
    assert sum(m < 0.6 for m in means) == 2
    assert sum(0.9 <= m <= 1.1 for m in means) >= 1
    assert all(p.duration == 60.0 for p in profiles)
