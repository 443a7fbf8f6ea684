import numpy as np
import pytest

from spintomo import (apply_unitary, build_spin_system, detect_signal, evolve,
                      gradient_project, rotation_pulse)

# Two-spin demonstration system and state used across the suite.
TWO_SPIN_LARMOR = (1200.0, 1800.0)
TWO_SPIN_J = 200.0
TWO_SPIN_T2 = 0.010

DEMO_COEFFS = {
    "zo": 1.0, "oz": 2.3, "zz": 6.7,
    "xo": 1.0, "xz": 10.0, "yo": 5.0, "yz": 3.5,
    "yy": 2.5, "yx": 7.2, "xx": 13.0, "xy": 1.45,
    "ox": 2.0, "zx": 3.45, "oy": 6.9, "zy": 6.753,
}

FOUR_SPIN_LARMOR = (600.0, 750.0, 1000.0, 1400.0)
FOUR_SPIN_COUPLINGS = {
    (1, 2): 20.0, (1, 3): 10.0, (1, 4): 70.0,
    (2, 3): 35.0, (2, 4): 24.0, (3, 4): 16.0,
}
FOUR_SPIN_STATE = {
    "xooo": 0.8, "yooo": 1.0, "oxoo": 0.5, "oyoo": 1.0,
    "ooxo": 0.9, "ooyo": 1.1, "ooox": 1.0, "oooy": 1.2,
    "xxxx": 6.3, "xyyy": 3.9, "xxzz": 1.0, "oxxx": 1.3,
    "xxyo": 1.9, "xzyx": 1.5,
    "oooz": 0.6, "ozoz": 1.0, "ozzz": 1.3, "zzzz": 2.0,
}


@pytest.fixture
def two_spin_system():
    return build_spin_system(2, TWO_SPIN_LARMOR, {(1, 2): TWO_SPIN_J}, TWO_SPIN_T2)


@pytest.fixture
def four_spin_system():
    return build_spin_system(4, FOUR_SPIN_LARMOR, FOUR_SPIN_COUPLINGS, 0.010)


def random_hermitian_traceless(rng, dim):
    raw = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    herm = 0.5 * (raw + raw.conj().T)
    return herm - np.trace(herm) / dim * np.eye(dim)


def random_coefficients(rng, labels, low=-10.0, high=10.0):
    return {label: float(rng.uniform(low, high)) for label in labels}


def reference_sequence_a(system, rho0, params):
    """Step-by-step sequence A, one density matrix per grid point.

    Independent of the vectorized production path: uses only the primitive
    single-state operations.
    """
    grid = np.zeros((params.n_t1, params.n_t2), dtype=complex)
    pulse_90 = rotation_pulse(system, np.pi / 2.0, 0.0)
    pulse_read = rotation_pulse(system, params.alpha_rad, np.pi)
    for i, t1 in enumerate(params.t1_times):
        rho = evolve(rho0, system, float(t1), with_decay=True)
        rho = apply_unitary(rho, pulse_90)
        rho = gradient_project(rho)
        rho = apply_unitary(rho, pulse_read)
        for k, t2 in enumerate(params.t2_times):
            probed = evolve(rho, system, float(t2), with_decay=True)
            grid[i, k] = detect_signal(probed, system)
    return grid


def reference_sequence_b(system, rho0, params):
    samples = np.zeros(params.n_t2, dtype=complex)
    pulse = rotation_pulse(system, params.beta_rad, 0.0)
    rho = gradient_project(rho0)
    rho = apply_unitary(rho, pulse)
    for k, t2 in enumerate(params.t2_times):
        probed = evolve(rho, system, float(t2), with_decay=True)
        samples[k] = detect_signal(probed, system)
    return samples


def local_maxima_above(values, threshold):
    """Indices of strict local maxima exceeding ``threshold``."""
    out = []
    for i in range(1, len(values) - 1):
        if values[i] > threshold and values[i] >= values[i - 1] and values[i] > values[i + 1]:
            out.append(i)
    return out


def fit_t1_trace(trace, t1, frequencies, time_constant):
    """Least-squares expansion of a trace over decaying cosines and sines.

    Returns (amplitudes keyed by ('cos'|'sin', f) plus a constant term, and
    the relative residual).
    """
    decay = np.exp(-t1 / time_constant)
    columns = [np.ones_like(t1)]
    keys = [("const", 0.0)]
    for f in frequencies:
        columns.append(np.cos(2 * np.pi * f * t1) * decay)
        keys.append(("cos", f))
        columns.append(np.sin(2 * np.pi * f * t1) * decay)
        keys.append(("sin", f))
    basis = np.column_stack(columns).astype(complex)
    solution, _, _, _ = np.linalg.lstsq(basis, trace, rcond=None)
    residual = np.linalg.norm(basis @ solution - trace)
    scale = np.linalg.norm(trace)
    return dict(zip(keys, solution)), (residual / scale if scale > 0 else 0.0)
