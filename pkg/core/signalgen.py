"""Synthetic annotated pulse trains, superposition augmentation and resampling."""

import logging
from typing import List, Optional, Tuple

import numpy as np
from scipy.stats import truncnorm

from core.exceptions import AugmentationNotApplicable, ParameterError
from models.signal import AnnotatedSignal, PulseTemplate, SubjectProfile

logger = logging.getLogger(__name__)

DEFAULT_TEMPLATE_WIDTH = 0.06
MIN_FS = 100
AUGMENT_MEDIAN_RANGE = (0.9, 1.1)
AUGMENT_SHIFT_RANGE = (0.450, 0.550)


def ibis_from_peaks(r_peaks: np.ndarray, fs: float) -> np.ndarray:
    """IBIs in seconds between consecutive R-peak sample indices."""
    return np.diff(np.asarray(r_peaks, dtype=np.int64)) / float(fs)


def generate_ibi_sequence(profile: SubjectProfile, seed: int) -> np.ndarray:
    """
    Draw IBIs for one subject until they cover the profile duration.

    Each IBI is an i.i.d. truncated-normal draw clamped to
    [ibi_min, ibi_max]; the same seed always yields the same sequence.
    """
    profile.check()
    rng = np.random.default_rng(seed)
    n_max = int(np.ceil(profile.duration / profile.ibi_min)) + 1

    if profile.ibi_std == 0:
        draws = np.full(n_max, profile.ibi_mean, dtype=np.float64)
    else:
        a = (profile.ibi_min - profile.ibi_mean) / profile.ibi_std
        b = (profile.ibi_max - profile.ibi_mean) / profile.ibi_std
        draws = truncnorm.rvs(a, b, loc=profile.ibi_mean, scale=profile.ibi_std,
                              size=n_max, random_state=rng)
    draws = np.clip(draws, profile.ibi_min, profile.ibi_max)

    # first index whose running total reaches the duration
    n = int(np.searchsorted(np.cumsum(draws), profile.duration - 1e-9)) + 1
    return draws[:n]


def pulse_template(kind: PulseTemplate, fs: float,
                   width: float = DEFAULT_TEMPLATE_WIDTH) -> Tuple[np.ndarray, int]:
    """Return a beat template normalised to a peak of 1.0 and the index of that peak."""
    if kind == PulseTemplate.GAUSSIAN_DERIVATIVE:
        sigma = width / 6
        t = np.arange(-int(np.ceil(3 * sigma * fs)), int(np.ceil(3 * sigma * fs)) + 1) / fs
        wave = -t * np.exp(-t ** 2 / (2 * sigma ** 2))
    elif kind == PulseTemplate.DAMPED_SINUSOID:
        t = np.arange(int(np.ceil(width * fs)) + 1) / fs
        wave = np.exp(-t / (width / 4)) * np.sin(2 * np.pi * (2 / width) * t)
    elif kind == PulseTemplate.BIPHASIC:
        sigma = width / 8
        half = int(np.ceil(width / 2 * fs))
        t = np.arange(-half, half + 1) / fs
        wave = (np.exp(-(t + sigma) ** 2 / (2 * sigma ** 2))
                - 0.7 * np.exp(-(t - 1.5 * sigma) ** 2 / (2 * sigma ** 2)))
    else:
        raise ParameterError(f"Unknown pulse template: {kind!r}")

    peak = int(np.argmax(wave))
    return wave / wave[peak], peak


def render_pulse_train(ibis: np.ndarray, profile: SubjectProfile, fs: int,
                       seed: int) -> AnnotatedSignal:
    """
    Render a pulse train whose beats are separated by the given IBIs.

    R-peak k sits at round(fs * sum(ibis[:k])); each beat's template maximum is
    aligned with its R-peak. White Gaussian noise scaled by the template peak
    amplitude is added last.
    """
    ibis = np.asarray(ibis, dtype=np.float64)
    if fs < MIN_FS:
        raise ParameterError(f"fs must be >= {MIN_FS}, got {fs}")
    if ibis.size == 0 or np.any(ibis <= 0):
        raise ParameterError("IBIs must be a non-empty sequence of positive values")

    onsets = np.concatenate([[0.0], np.cumsum(ibis)])
    r_peaks = np.round(fs * onsets).astype(np.int64)

    template, offset = pulse_template(profile.pulse_template_id, fs)
    if len(template) / fs > ibis.min():
        logger.warning(
            f"Subject {profile.subject_id}: template spans {len(template) / fs:.3f} s, "
            f"longer than the smallest IBI {ibis.min():.3f} s; pulses will overlap"
        )

    n = int(r_peaks[-1]) + len(template) - offset
    samples = np.zeros(n, dtype=np.float64)
    for peak in r_peaks:
        start = peak - offset
        lo = max(start, 0)
        samples[lo:start + len(template)] += template[lo - start:]

    if profile.noise_std > 0:
        rng = np.random.default_rng(seed)
        samples += rng.normal(0.0, profile.noise_std * template[offset], size=n)

    return AnnotatedSignal(samples, fs, r_peaks, subject_id=profile.subject_id)


def synthesize_subject(profile: SubjectProfile, fs: int, seed: int) -> AnnotatedSignal:
    """Generate the IBI sequence and render it with seeds derived from (seed, subject)."""
    ibi_seed, noise_seed = np.random.SeedSequence([seed, profile.subject_id]).generate_state(2)
    ibis = generate_ibi_sequence(profile, int(ibi_seed))
    return render_pulse_train(ibis, profile, fs, int(noise_seed))


def superpose_augment(signal: AnnotatedSignal, seed: int,
                      alpha: Optional[float] = None) -> AnnotatedSignal:
    """
    Add a left-shifted copy of a slow-rhythm signal to itself.

    x_aug(t) = x(t) + x(t + alpha), alpha ~ U(0.45, 0.55) s rounded to samples.
    The output is trimmed to the support where both addends exist and its
    R-peaks are the union of the original and shifted peak sets.
    """
    if len(signal.r_peaks) < 2:
        raise AugmentationNotApplicable(
            f"Subject {signal.subject_id}: need at least 2 R-peaks, got {len(signal.r_peaks)}"
        )
    median_ibi = float(np.median(signal.ibis()))
    lo, hi = AUGMENT_MEDIAN_RANGE
    if not lo - 1e-9 <= median_ibi <= hi + 1e-9:
        raise AugmentationNotApplicable(
            f"Subject {signal.subject_id}: median IBI {median_ibi:.3f} s outside [{lo}, {hi}]"
        )

    if alpha is None:
        alpha = np.random.default_rng(seed).uniform(*AUGMENT_SHIFT_RANGE)
    shift = int(round(alpha * signal.fs))
    n = len(signal.samples) - shift
    if n <= 0:
        raise AugmentationNotApplicable(
            f"Subject {signal.subject_id}: signal shorter than the {alpha:.3f} s shift"
        )

    samples = signal.samples[:n] + signal.samples[shift:shift + n]
    original = signal.r_peaks[signal.r_peaks < n]
    shifted = signal.r_peaks - shift
    shifted = shifted[(shifted >= 0) & (shifted < n)]

    return AnnotatedSignal(
        samples, signal.fs, np.union1d(original, shifted),
        subject_id=signal.subject_id,
        meta={**signal.meta, 'augmented': True, 'shift_samples': shift},
    )


def resample(signal: AnnotatedSignal, target_fs: int) -> AnnotatedSignal:
    """Linearly interpolate a signal onto a new sampling rate and remap its R-peaks."""
    if target_fs < MIN_FS:
        raise ParameterError(f"target_fs must be >= {MIN_FS}, got {target_fs}")
    if target_fs == signal.fs:
        return AnnotatedSignal(signal.samples.copy(), signal.fs, signal.r_peaks.copy(),
                               subject_id=signal.subject_id, meta=dict(signal.meta))

    n_in = len(signal.samples)
    n_out = (n_in - 1) * target_fs // signal.fs + 1
    # output sample k lands on input position k * fs / target_fs
    positions = np.arange(n_out, dtype=np.float64) * signal.fs / target_fs
    samples = np.interp(positions, np.arange(n_in, dtype=np.float64),
                        signal.samples.astype(np.float64))
    r_peaks = np.round(signal.r_peaks * target_fs / signal.fs).astype(np.int64)
    r_peaks = np.minimum(r_peaks, n_out - 1)

    return AnnotatedSignal(samples, target_fs, r_peaks,
                           subject_id=signal.subject_id, meta=dict(signal.meta))


def default_profiles(duration: float = 300.0) -> List[SubjectProfile]:
    """Eleven subjects: two with low IBIs, three with high IBIs, the rest mid-range."""
    means = [0.70, 0.72, 0.56, 0.68, 0.74, 0.66, 0.84, 0.96, 0.93, 0.58, 0.71]
    stds = [0.05, 0.04, 0.03, 0.05, 0.04, 0.05, 0.05, 0.04, 0.04, 0.03, 0.05]
    return [
        SubjectProfile(subject_id=i + 1, ibi_mean=mean, ibi_std=std,
                       ibi_min=0.4, ibi_max=1.2, noise_std=0.05, duration=duration)
        for i, (mean, std) in enumerate(zip(means, stds))
    ]
