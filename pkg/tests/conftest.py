"""Shared fixtures for the test suite."""

import numpy as np
import pytest

from core.signalgen import render_pulse_train, synthesize_subject
from models.architecture import tiny_arch
from models.signal import AnnotatedSignal, SubjectProfile


def _finite_difference(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central differences of the scalar function f with respect to every element of x (in place)."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        plus = f()
        flat[i] = original - h
        minus = f()
        flat[i] = original
        out[i] = (plus - minus) / (2 * h)
    return grad


def _max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    scale = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


@pytest.fixture
def finite_difference():
    """Central finite-difference gradient helper."""
    return _finite_difference


@pytest.fixture
def relative_error():
    """Elementwise max relative error with an absolute floor for near-zero entries."""
    return _max_relative_error


@pytest.fixture
def rng():
    """Seeded generator for test data."""
    return np.random.default_rng(1234)


@pytest.fixture
def clean_profile():
    """Noise-free constant-rhythm subject."""
    return SubjectProfile(subject_id=1, ibi_mean=0.7, ibi_std=0.0, ibi_min=0.5, ibi_max=1.1,
                          noise_std=0.0, duration=12.0)


@pytest.fixture
def slow_profile():
    """Subject whose median IBI qualifies for superposition augmentation."""
    return SubjectProfile(subject_id=4, ibi_mean=1.0, ibi_std=0.03, ibi_min=0.92, ibi_max=1.08,
                          noise_std=0.02, duration=30.0)


@pytest.fixture
def constant_signal(clean_profile):
    """15 R-peaks every 0.7 s at 500 Hz."""
    return render_pulse_train(np.full(14, 0.7), clean_profile, 500, seed=0)


@pytest.fixture
def small_population():
    """Four short synthetic subjects at 500 Hz, one of them slow enough to augment."""
    profiles = [
        SubjectProfile(subject_id=1, ibi_mean=0.70, ibi_std=0.04, duration=20.0),
        SubjectProfile(subject_id=2, ibi_mean=0.62, ibi_std=0.03, duration=20.0),
        SubjectProfile(subject_id=3, ibi_mean=0.80, ibi_std=0.04, duration=20.0),
        SubjectProfile(subject_id=4, ibi_mean=1.00, ibi_std=0.03, ibi_min=0.92, ibi_max=1.08,
                       duration=30.0),
    ]
    return [synthesize_subject(p, 500, seed=11) for p in profiles]


@pytest.fixture
def tiny_config():
    """Input length 64, two conv blocks, one hidden dense layer."""
    return tiny_arch()


@pytest.fixture
def ramp_signal():
    """1 kHz linear ramp with three annotated peaks."""
    return AnnotatedSignal(np.arange(2000, dtype=np.float32), 1000, np.array([100, 600, 1100]),
                           subject_id=9)
