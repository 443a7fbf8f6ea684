"""Density-matrix propagation: free evolution, pulses, gradients, detection.

All functions are pure; none mutates its input.  Time evolution works
element-wise on the density matrix because the weak-coupling Hamiltonian is
diagonal in the computational basis: element (r, s) acquires the phase
exp(-2i*pi*(E_r - E_s)*t) and, when transverse decay is enabled, the factor
exp(-t/T2) for r != s.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .core import SpinSystem, down_counts, energies


@dataclass(frozen=True, eq=False)
class EvolutionCache:
    """Per-element evolution data derived from the diagonal Hamiltonian.

    ``frequencies[r, s]`` is E_r - E_s in Hz and ``orders[r, s]`` is the
    difference in down-spin counts between states r and s (coherence order).
    Both tables are antisymmetric with zero diagonal.
    """

    energies: np.ndarray
    frequencies: np.ndarray
    orders: np.ndarray
    down: np.ndarray

    def __post_init__(self):
        for array in (self.energies, self.frequencies, self.orders, self.down):
            array.setflags(write=False)


@functools.lru_cache(maxsize=None)
def evolution_cache(system: SpinSystem) -> EvolutionCache:
    level = energies(system)
    down = down_counts(system.n)
    return EvolutionCache(
        energies=level,
        frequencies=level[:, None] - level[None, :],
        orders=down[:, None] - down[None, :],
        down=down,
    )


def _offdiag_mask(dim: int) -> np.ndarray:
    return 1.0 - np.eye(dim)


def evolve(rho: np.ndarray, system: SpinSystem, t_s: float,
           with_decay: bool = True) -> np.ndarray:
    """Free evolution for time ``t_s`` under the system Hamiltonian.

    Diagonal elements are invariant (no longitudinal relaxation is modeled);
    off-diagonal elements rotate at their eigenvalue-difference frequency and,
    with ``with_decay``, shrink by exp(-t/T2).
    """
    if t_s < 0:
        raise ValueError(f"evolution time must be non-negative, got {t_s}")
    cache = evolution_cache(system)
    factor = np.exp(-2.0j * np.pi * cache.frequencies * t_s)
    if with_decay:
        factor = factor * np.exp(-_offdiag_mask(system.dim) * (t_s / system.t2_s))
    return np.asarray(rho, dtype=complex) * factor


def apply_unitary(rho: np.ndarray, unitary: np.ndarray) -> np.ndarray:
    """Conjugation U rho U^dagger."""
    rho = np.asarray(rho, dtype=complex)
    unitary = np.asarray(unitary, dtype=complex)
    if rho.shape != unitary.shape:
        raise ValueError(f"shape mismatch: rho {rho.shape}, unitary {unitary.shape}")
    return unitary @ rho @ unitary.conj().T


def gradient_project(rho: np.ndarray) -> np.ndarray:
    """Idealized field-gradient pulse: zero every off-diagonal element.

    Real gradients spare homonuclear zero-quantum coherences; this models the
    end result of the randomized-delay averaging that suppresses them (see
    :func:`realistic_gradient_project` for the explicit mechanism).
    """
    rho = np.asarray(rho, dtype=complex)
    return np.diag(np.diag(rho))


def realistic_gradient_project(rho: np.ndarray, system: SpinSystem,
                               rng: np.random.Generator,
                               draws: int = 16,
                               tau_max_s: float = 0.02) -> np.ndarray:
    """Gradient that spares zero-quantum coherences, followed by randomized delays.

    Keeps diagonal and zero-quantum elements, then ensemble-averages the state
    over ``draws`` random free-evolution delays uniform in [0, tau_max_s].
    Zero-quantum phases average towards zero; the diagonal is untouched.
    """
    if draws < 1:
        raise ValueError("draws must be at least 1")
    cache = evolution_cache(system)
    rho = np.asarray(rho, dtype=complex)
    kept = rho * (cache.orders == 0)
    taus = rng.uniform(0.0, tau_max_s, size=draws)
    acc = np.zeros_like(kept)
    for tau in taus:
        acc += evolve(kept, system, float(tau), with_decay=True)
    return acc / draws


def coherence_order_decompose(rho: np.ndarray, system: SpinSystem) -> dict:
    """Split a matrix into components of fixed coherence order.

    Returns a map order -> matrix over every order with nonzero support; the
    components sum exactly to the input.
    """
    cache = evolution_cache(system)
    rho = np.asarray(rho, dtype=complex)
    out = {}
    for order in range(-system.n, system.n + 1):
        component = rho * (cache.orders == order)
        if np.any(component):
            out[order] = component
    return out


@functools.lru_cache(maxsize=None)
def raising_operator(system: SpinSystem) -> np.ndarray:
    """Total raising operator sum_j (I_jx + i I_jy); the detection operator."""
    plus = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
    eye = np.eye(2, dtype=complex)
    total = np.zeros((system.dim, system.dim), dtype=complex)
    for j in range(1, system.n + 1):
        op = np.array([[1.0 + 0.0j]])
        for k in range(1, system.n + 1):
            op = np.kron(op, plus if k == j else eye)
        total += op
    total.setflags(write=False)
    return total


def detect_signal(rho: np.ndarray, system: SpinSystem) -> complex:
    """Quadrature observable Tr[(sum_j I_j+) rho]."""
    rho = np.asarray(rho, dtype=complex)
    return complex(np.einsum("rs,sr->", raising_operator(system), rho))


@functools.lru_cache(maxsize=None)
def detection_elements(system: SpinSystem):
    """Index arrays of the density-matrix elements picked up by detection.

    Returns ``(rows, cols, freqs)`` such that the detected signal is
    ``sum_p rho[rows[p], cols[p]]`` and, under free evolution, element p
    oscillates as exp(+2i*pi*freqs[p]*t).  ``freqs`` are exactly the
    single-quantum transition frequencies.
    """
    plus = raising_operator(system)
    level = energies(system)
    r_idx, s_idx = np.nonzero(plus)
    freqs = level[r_idx] - level[s_idx]
    rows = s_idx.copy()
    cols = r_idx.copy()
    for array in (rows, cols, freqs):
        array.setflags(write=False)
    return rows, cols, freqs
