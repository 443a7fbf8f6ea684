"""Pulse-sequence execution over sampled t1/t2 grids.

Sequence A (two-dimensional, reads out all off-diagonal content):

    t1 evolution -> (pi/2) about +y -> gradient -> alpha about -y -> detect(t2)

Sequence B (one-dimensional, reads out the diagonal):

    gradient -> beta about +y -> detect(t2)

Both are implemented with a vectorized t1 axis: every step of the sequence is
linear in the density matrix, and free evolution is an element-wise phase, so
the whole t1 series is propagated as one (n_t1, dim, dim) array.  Rows of the
result are bit-identical to running the per-step chain one t1 increment at a
time.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import SpinSystem, is_hermitian, rotation_pulse, single_quantum_transitions
from .dynamics import detection_elements, evolution_cache
from .errors import DegenerateTransitionError, NyquistError


@dataclass(frozen=True)
class AcquisitionParams:
    """Sampling grid and pulse angles for one experiment pair.

    ``n_t1`` counts indirect-dimension increments starting at t1 = 0;
    ``n_t2`` counts FID samples starting at t2 = 0.  Powers of two keep the
    transforms simple; other lengths are zero-filled by the spectral module.
    """

    n_t1: int
    n_t2: int
    dwell_t1_s: float
    dwell_t2_s: float
    alpha_rad: float = np.pi / 4
    beta_rad: float = np.radians(10.0)

    def __post_init__(self):
        if self.n_t1 < 1 or self.n_t2 < 1:
            raise ValueError("n_t1 and n_t2 must be positive")
        if self.dwell_t1_s <= 0 or self.dwell_t2_s <= 0:
            raise ValueError("dwell times must be positive")

    @property
    def t1_times(self) -> np.ndarray:
        return np.arange(self.n_t1) * self.dwell_t1_s

    @property
    def t2_times(self) -> np.ndarray:
        return np.arange(self.n_t2) * self.dwell_t2_s

    @property
    def spectral_width_1(self) -> float:
        return 1.0 / self.dwell_t1_s

    @property
    def spectral_width_2(self) -> float:
        return 1.0 / self.dwell_t2_s

    def to_dict(self) -> dict:
        return {
            "n_t1": self.n_t1,
            "n_t2": self.n_t2,
            "dwell_t1_s": self.dwell_t1_s,
            "dwell_t2_s": self.dwell_t2_s,
            "alpha_rad": self.alpha_rad,
            "beta_rad": self.beta_rad,
        }


@dataclass(frozen=True)
class Transition:
    """Single-quantum transition: spin ``qubit`` flips between two eigenstates.

    ``upper`` has the spin up, ``lower`` has it down; ``frequency_hz`` is the
    eigenvalue difference E(upper) - E(lower).
    """

    qubit: int
    upper: int
    lower: int
    frequency_hz: float


@dataclass(frozen=True)
class TransitionTable:
    """All n * 2^(n-1) single-quantum transitions of a system."""

    entries: tuple

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def frequencies(self) -> np.ndarray:
        return np.array([t.frequency_hz for t in self.entries])

    def for_qubit(self, qubit: int) -> tuple:
        return tuple(t for t in self.entries if t.qubit == qubit)

    def max_frequency(self) -> float:
        return float(np.max(np.abs(self.frequencies())))


def transition_table(system: SpinSystem, tol_hz: float = 1e-6) -> TransitionTable:
    """Enumerate single-quantum transitions, refusing degenerate sets.

    Raises
    ------
    DegenerateTransitionError
        If any two transitions coincide within ``tol_hz``; the message lists
        the colliding pairs.  Uncoupled spins always trip this (their
        2^(n-1) transitions collapse onto the bare Larmor frequency).
    """
    entries = tuple(
        Transition(qubit=j, upper=r, lower=s, frequency_hz=f)
        for j, r, s, f in single_quantum_transitions(system)
    )
    collisions = []
    for i in range(len(entries)):
        for k in range(i + 1, len(entries)):
            if abs(entries[i].frequency_hz - entries[k].frequency_hz) <= tol_hz:
                collisions.append((entries[i], entries[k]))
    if collisions:
        desc = "; ".join(
            f"qubit {a.qubit} ({a.frequency_hz:.6g} Hz) vs qubit {b.qubit} "
            f"({b.frequency_hz:.6g} Hz)"
            for a, b in collisions[:8]
        )
        raise DegenerateTransitionError(
            f"{len(collisions)} degenerate transition pair(s): {desc}",
            pairs=collisions,
        )
    return TransitionTable(entries=entries)


def default_acquisition(system: SpinSystem, n_t1: int | None = None,
                        n_t2: int = 512,
                        alpha_rad: float = np.pi / 4,
                        beta_rad: float = np.radians(10.0),
                        dwell_t1_s: float | None = None,
                        dwell_t2_s: float | None = None,
                        sw_factor: float = 4.0) -> AcquisitionParams:
    """Sensible defaults: spectral width sw_factor times the largest transition.

    The t1 increment count grows with the register size to keep resolution as
    the number of lines grows.
    """
    table = transition_table(system)
    sw = sw_factor * table.max_frequency()
    if n_t1 is None:
        n_t1 = 512 if system.n <= 2 else (1024 if system.n == 3 else 2048)
    return AcquisitionParams(
        n_t1=n_t1,
        n_t2=n_t2,
        dwell_t1_s=dwell_t1_s if dwell_t1_s is not None else 1.0 / sw,
        dwell_t2_s=dwell_t2_s if dwell_t2_s is not None else 1.0 / sw,
        alpha_rad=alpha_rad,
        beta_rad=beta_rad,
    )


def check_nyquist(table: TransitionTable, params: AcquisitionParams) -> None:
    """Both spectral widths must exceed twice the largest transition frequency."""
    fmax = table.max_frequency()
    for name, sw in (("t1", params.spectral_width_1), ("t2", params.spectral_width_2)):
        if sw <= 2.0 * fmax:
            raise NyquistError(
                f"{name} spectral width {sw:.6g} Hz does not exceed twice the "
                f"largest transition frequency ({fmax:.6g} Hz)"
            )


@dataclass(eq=False)
class Signal2D:
    """Complex time-domain grid s(t1, t2) with sampling metadata."""

    grid: np.ndarray
    dwell_t1_s: float
    dwell_t2_s: float
    meta: dict = field(default_factory=dict)

    @property
    def n_t1(self) -> int:
        return self.grid.shape[0]

    @property
    def n_t2(self) -> int:
        return self.grid.shape[1]


@dataclass(eq=False)
class Signal1D:
    """Complex FID s(t2) with sampling metadata."""

    samples: np.ndarray
    dwell_s: float
    meta: dict = field(default_factory=dict)


def _validate_state(rho: np.ndarray, system: SpinSystem) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (system.dim, system.dim):
        raise ValueError(f"state shape {rho.shape} does not match dim {system.dim}")
    if not is_hermitian(rho):
        raise ValueError("state matrix is not Hermitian")
    return rho


def _grad_projected(sigma: np.ndarray, system: SpinSystem, gradient: str,
                    rng, draws: int, tau_max_s: float) -> np.ndarray:
    """Gradient step for a batch (..., dim, dim) of states."""
    dim = system.dim
    if gradient == "ideal":
        out = np.zeros_like(sigma)
        idx = np.arange(dim)
        out[..., idx, idx] = sigma[..., idx, idx]
        return out
    if gradient != "realistic":
        raise ValueError(f"unknown gradient mode {gradient!r}")
    if rng is None:
        raise ValueError("realistic gradient mode needs an rng")
    cache = evolution_cache(system)
    kept = sigma * (cache.orders == 0)
    expo = -2.0j * np.pi * cache.frequencies - (1.0 - np.eye(dim)) / system.t2_s
    taus = rng.uniform(0.0, tau_max_s, size=draws)
    acc = np.zeros_like(kept)
    for tau in taus:
        acc += kept * np.exp(expo * tau)
    return acc / draws


def _fid_from_states(sigma: np.ndarray, system: SpinSystem,
                     t2_times: np.ndarray) -> np.ndarray:
    """Detected FIDs for a batch of states under free evolution with decay.

    Only single-quantum elements reach the detector; each contributes its
    current amplitude times exp((2i*pi*f - 1/T2) * t2).
    """
    rows, cols, freqs = detection_elements(system)
    amplitudes = sigma[..., rows, cols]
    rates = 2.0j * np.pi * freqs - 1.0 / system.t2_s
    phases = np.exp(np.outer(rates, t2_times))
    return amplitudes @ phases


def run_sequence_A(system: SpinSystem, rho0: np.ndarray, params: AcquisitionParams,
                   gradient: str = "ideal", rng=None,
                   gradient_draws: int = 16,
                   gradient_tau_max_s: float = 0.02) -> Signal2D:
    """Two-dimensional experiment over the full t1 x t2 grid.

    For each t1 increment: evolve the input state with decay, apply a hard
    (pi/2) pulse about +y, project through the gradient, apply the read pulse
    of angle alpha about -y, then record the FID.  Purely diagonal input
    produces an identically zero grid.
    """
    rho0 = _validate_state(rho0, system)
    table = transition_table(system)
    check_nyquist(table, params)
    cache = evolution_cache(system)
    dim = system.dim

    expo = -2.0j * np.pi * cache.frequencies - (1.0 - np.eye(dim)) / system.t2_s
    sigma = rho0[None, :, :] * np.exp(params.t1_times[:, None, None] * expo[None, :, :])

    pulse_90 = rotation_pulse(system, np.pi / 2.0, 0.0)
    sigma = pulse_90 @ sigma @ pulse_90.conj().T
    sigma = _grad_projected(sigma, system, gradient, rng, gradient_draws,
                            gradient_tau_max_s)
    pulse_read = rotation_pulse(system, params.alpha_rad, np.pi)
    sigma = pulse_read @ sigma @ pulse_read.conj().T

    grid = _fid_from_states(sigma, system, params.t2_times)
    meta = {
        "sequence": "A",
        "system": system.to_dict(),
        "system_digest": system.digest(),
        "t2_s": system.t2_s,
        "params": params.to_dict(),
        "gradient": gradient,
    }
    return Signal2D(grid=grid, dwell_t1_s=params.dwell_t1_s,
                    dwell_t2_s=params.dwell_t2_s, meta=meta)


def run_sequence_B(system: SpinSystem, rho0: np.ndarray, params: AcquisitionParams,
                   gradient: str = "ideal", rng=None,
                   gradient_draws: int = 16,
                   gradient_tau_max_s: float = 0.02) -> Signal1D:
    """One-dimensional diagonal readout: gradient, small beta pulse, detect.

    The beta pulse converts population differences into single-quantum
    coherences; amplitudes stay proportional to the diagonal coefficients for
    small beta (linear response), hence the warning above 15 degrees.
    """
    rho0 = _validate_state(rho0, system)
    table = transition_table(system)
    check_nyquist(table, params)
    if params.beta_rad > np.radians(15.0):
        warnings.warn(
            f"beta = {np.degrees(params.beta_rad):.1f} deg exceeds the "
            "linear-response regime (15 deg)",
            stacklevel=2,
        )
    sigma = _grad_projected(rho0[None, :, :], system, gradient, rng,
                            gradient_draws, gradient_tau_max_s)[0]
    pulse = rotation_pulse(system, params.beta_rad, 0.0)
    sigma = pulse @ sigma @ pulse.conj().T
    samples = _fid_from_states(sigma[None, :, :], system, params.t2_times)[0]
    meta = {
        "sequence": "B",
        "system": system.to_dict(),
        "system_digest": system.digest(),
        "t2_s": system.t2_s,
        "params": params.to_dict(),
        "gradient": gradient,
    }
    return Signal1D(samples=samples, dwell_s=params.dwell_t2_s, meta=meta)


def reference_fid(system: SpinSystem, rho0: np.ndarray,
                  params: AcquisitionParams) -> Signal1D:
    """Pulse-free detection of the directly observable single-quantum content.

    Used to calibrate a global scale for fitted coefficients; with ideal
    pulses the calibration factor is 1.
    """
    rho0 = _validate_state(rho0, system)
    samples = _fid_from_states(rho0[None, :, :], system, params.t2_times)[0]
    meta = {
        "sequence": "reference",
        "system": system.to_dict(),
        "system_digest": system.digest(),
        "t2_s": system.t2_s,
        "params": params.to_dict(),
    }
    return Signal1D(samples=samples, dwell_s=params.dwell_t2_s, meta=meta)


# ---------------------------------------------------------------------------
# Exports


def export_signal2d(signal: Signal2D, csv_path, sidecar_path=None) -> None:
    """CSV with one row per t1 increment, paired re/im columns per t2 sample.

    A JSON sidecar records dwell times and acquisition parameters.
    """
    n_t2 = signal.n_t2
    header = ["t1_s"]
    for k in range(n_t2):
        header += [f"re_t2_{k}", f"im_t2_{k}"]
    with open(csv_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["# time-domain signal; t1_s in s, samples dimensionless"])
        writer.writerow(header)
        for i in range(signal.n_t1):
            row = [repr(i * signal.dwell_t1_s)]
            values = signal.grid[i]
            for k in range(n_t2):
                row += [repr(values[k].real), repr(values[k].imag)]
            writer.writerow(row)
    if sidecar_path is not None:
        sidecar = {
            "dwell_t1_s": signal.dwell_t1_s,
            "dwell_t2_s": signal.dwell_t2_s,
            "n_t1": signal.n_t1,
            "n_t2": signal.n_t2,
            "meta": signal.meta,
        }
        with open(sidecar_path, "w") as handle:
            json.dump(sidecar, handle, indent=2, sort_keys=True)
            handle.write("\n")


def export_signal1d(signal: Signal1D, csv_path, sidecar_path=None) -> None:
    """CSV with columns t2_s, re, im plus an optional JSON sidecar."""
    with open(csv_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t2_s", "re", "im"])
        for k, value in enumerate(signal.samples):
            writer.writerow([repr(k * signal.dwell_s), repr(value.real), repr(value.imag)])
    if sidecar_path is not None:
        sidecar = {
            "dwell_s": signal.dwell_s,
            "n_samples": int(len(signal.samples)),
            "meta": signal.meta,
        }
        with open(sidecar_path, "w") as handle:
            json.dump(sidecar, handle, indent=2, sort_keys=True)
            handle.write("\n")
