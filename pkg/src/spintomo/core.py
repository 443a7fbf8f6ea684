"""Spin systems and product-operator algebra for weakly coupled spin-1/2 registers.

Conventions used throughout the package:

* Single-spin operators are Ix = sx/2, Iy = sy/2, Iz = sz/2 (s = Pauli matrices),
  and the identity is written ``o``.  A product operator is the plain Kronecker
  product of single-spin factors with no extra prefactors.
* Qubit 1 is the leftmost (most significant) tensor factor, so basis state
  index ``r`` encodes spin j as bit ``n - j`` (0 = up, 1 = down).
* All frequencies are stored in Hz.  The 2*pi factor is applied inside time
  evolution, so a state evolves as exp(-2i*pi*H*t) rho exp(+2i*pi*H*t).
"""

from __future__ import annotations

import hashlib
import itertools
import json
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

AXES = "oxyz"

IDENTITY_2 = np.eye(2, dtype=complex)
SPIN_X = 0.5 * np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SPIN_Y = 0.5 * np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SPIN_Z = 0.5 * np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SINGLE_SPIN_OPS = {"o": IDENTITY_2, "x": SPIN_X, "y": SPIN_Y, "z": SPIN_Z}


@dataclass(frozen=True)
class SpinSystem:
    """Weakly coupled register of n spin-1/2 nuclei.

    Attributes
    ----------
    n : int
        Number of spins (qubits).
    larmor_hz : tuple of float
        Rotating-frame precession frequency of each spin, in Hz.
    couplings_hz : tuple of (j, k, J)
        Scalar couplings J_jk in Hz for 1-based pairs j < k.
    t2_s : float
        Transverse relaxation time in seconds, uniform for all coherences.
    """

    n: int
    larmor_hz: tuple
    couplings_hz: tuple
    t2_s: float

    @property
    def dim(self) -> int:
        return 2 ** self.n

    @property
    def coupling_map(self) -> dict:
        return {(j, k): value for j, k, value in self.couplings_hz}

    def coupling(self, j: int, k: int) -> float:
        if j > k:
            j, k = k, j
        return self.coupling_map.get((j, k), 0.0)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "larmor_hz": list(self.larmor_hz),
            "couplings_hz": [[j, k, value] for j, k, value in self.couplings_hz],
            "t2_s": self.t2_s,
        }

    def digest(self) -> str:
        """Short stable hash of the system parameters."""
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def build_spin_system(n, larmor_hz, couplings_hz=None, t2_s=0.01) -> SpinSystem:
    """Validate parameters and construct a :class:`SpinSystem`.

    Parameters
    ----------
    n : int
        Spin count, at least 1.
    larmor_hz : sequence of float
        One frequency per spin, Hz.
    couplings_hz : mapping (j, k) -> J, optional
        Couplings for 1-based pairs with j < k, Hz.
    t2_s : float
        Transverse relaxation time, strictly positive.

    Raises
    ------
    ValueError
        On length mismatch, non-positive t2, or malformed coupling keys.

    Notes
    -----
    Coinciding single-quantum transition frequencies only raise a warning
    here; experiment setup enforces them as a hard error.
    """
    n = int(n)
    if n < 1:
        raise ValueError(f"need at least one spin, got n={n}")
    larmor = tuple(float(w) for w in larmor_hz)
    if len(larmor) != n:
        raise ValueError(
            f"larmor_hz has {len(larmor)} entries for n={n} spins"
        )
    if not all(np.isfinite(larmor)):
        raise ValueError("larmor_hz entries must be finite")
    t2_s = float(t2_s)
    if not (np.isfinite(t2_s) and t2_s > 0.0):
        raise ValueError(f"t2_s must be positive and finite, got {t2_s}")

    pairs = []
    for key, value in (couplings_hz or {}).items():
        j, k = (int(key[0]), int(key[1]))
        if not (1 <= j < k <= n):
            raise ValueError(
                f"coupling key ({j},{k}) invalid: need 1 <= j < k <= {n}"
            )
        value = float(value)
        if not np.isfinite(value):
            raise ValueError(f"coupling ({j},{k}) must be finite")
        pairs.append((j, k, value))
    seen = {(j, k) for j, k, _ in pairs}
    if len(seen) != len(pairs):
        raise ValueError("duplicate coupling keys")

    system = SpinSystem(n=n, larmor_hz=larmor, couplings_hz=tuple(sorted(pairs)), t2_s=t2_s)

    freqs = [f for _, _, _, f in single_quantum_transitions(system)]
    freqs = sorted(freqs)
    scale = max(1.0, max(abs(f) for f in freqs))
    for a, b in zip(freqs, freqs[1:]):
        if abs(b - a) <= 1e-9 * scale:
            warnings.warn(
                f"single-quantum transitions coincide near {a:.6g} Hz; "
                "tomography setup will reject this system",
                stacklevel=2,
            )
            break
    return system


# ---------------------------------------------------------------------------
# Product-operator labels


def parse_label(text: str, n: int | None = None) -> str:
    """Normalize a label like ``"x z"`` or ``"xz"`` to the compact form ``"xz"``."""
    label = "".join(str(text).lower().split())
    validate_label(label, n)
    return label


def format_label(label: str) -> str:
    """Spaced per-spin form used in config files and reports."""
    return " ".join(label)


def validate_label(label: str, n: int | None = None) -> None:
    if n is not None and len(label) != n:
        raise ValueError(f"label {label!r} has {len(label)} axes, expected {n}")
    bad = set(label) - set(AXES)
    if bad:
        raise ValueError(f"label {label!r} contains invalid axes {sorted(bad)}")
    if set(label) == {"o"}:
        raise ValueError("the all-identity label is excluded (traceless basis)")


def all_labels(n: int) -> tuple:
    """All 4^n - 1 product-operator labels, in lexicographic o<x<y<z order."""
    labels = ("".join(p) for p in itertools.product(AXES, repeat=n))
    return tuple(label for label in labels if set(label) != {"o"})


def diagonal_labels(n: int) -> tuple:
    """The 2^n - 1 labels built from o/z only; their operators are diagonal."""
    return tuple(label for label in all_labels(n) if set(label) <= {"o", "z"})


def offdiagonal_labels(n: int) -> tuple:
    """Labels with at least one transverse axis; their operators have zero diagonal."""
    return tuple(label for label in all_labels(n) if set(label) & {"x", "y"})


def observable_labels(n: int) -> tuple:
    """Single-quantum labels: exactly one transverse axis, o/z elsewhere.

    These are the only labels with directly detectable signal content.
    """
    return tuple(label for label in all_labels(n)
                 if sum(c in "xy" for c in label) == 1)


def operator_norm_squared(label: str) -> float:
    """Trace of the squared basis operator: 2^n / 4^m with m non-identity axes."""
    n = len(label)
    m = sum(1 for c in label if c != "o")
    return 2.0 ** n / 4.0 ** m


def product_operator(system: SpinSystem, label: str) -> np.ndarray:
    """Kronecker product of single-spin operators selected by ``label``."""
    label = parse_label(label, system.n)
    out = np.array([[1.0 + 0.0j]])
    for axis in label:
        out = np.kron(out, SINGLE_SPIN_OPS[axis])
    return out


# ---------------------------------------------------------------------------
# Hamiltonian and eigenstructure


def spin_orientations(n: int) -> np.ndarray:
    """(2^n, n) array of magnetic quantum numbers, +1/2 (up) or -1/2 (down)."""
    dim = 2 ** n
    out = np.empty((dim, n))
    for j in range(n):
        bit = (np.arange(dim) >> (n - 1 - j)) & 1
        out[:, j] = 0.5 - bit
    return out


def energies(system: SpinSystem) -> np.ndarray:
    """Diagonal Hamiltonian eigenvalues in Hz, one per basis state."""
    m = spin_orientations(system.n)
    values = m @ np.asarray(system.larmor_hz)
    for j, k, coupling in system.couplings_hz:
        values = values + coupling * m[:, j - 1] * m[:, k - 1]
    return values


def hamiltonian(system: SpinSystem) -> np.ndarray:
    """Weak-coupling Hamiltonian as a real diagonal matrix in Hz.

    H = sum_j w_j I_jz + sum_{j<k} J_jk I_jz I_kz, evaluated in the
    computational basis where it is diagonal.
    """
    return np.diag(energies(system))


def down_counts(n: int) -> np.ndarray:
    """Number of down spins per basis state; differences give coherence order."""
    dim = 2 ** n
    return np.array([bin(r).count("1") for r in range(dim)])


def single_quantum_transitions(system: SpinSystem):
    """All single-spin-flip transitions as (qubit, upper_state, lower_state, freq_hz).

    ``upper_state`` has the flipping spin up, ``lower_state`` has it down and is
    identical otherwise.  The frequency is the eigenvalue difference
    E(upper) - E(lower), which is the sign convention under which detected
    coherences appear at positive Larmor-like frequencies.
    """
    level = energies(system)
    n = system.n
    out = []
    for j in range(1, n + 1):
        bit = 1 << (n - j)
        for r in range(system.dim):
            if r & bit:
                continue
            s = r | bit
            out.append((j, r, s, float(level[r] - level[s])))
    return out


# ---------------------------------------------------------------------------
# Coefficient vector <-> density matrix


def validate_coefficients(system: SpinSystem, coefficients: Mapping[str, float]) -> dict:
    """Normalize labels and check the coefficients are finite reals."""
    out = {}
    for raw_label, value in coefficients.items():
        label = parse_label(raw_label, system.n)
        if label in out:
            raise ValueError(f"duplicate coefficient for label {format_label(label)!r}")
        value = float(value)
        if not np.isfinite(value):
            raise ValueError(f"coefficient for {format_label(label)!r} must be finite")
        out[label] = value
    return out


def coefficients_to_density(system: SpinSystem, coefficients: Mapping[str, float]) -> np.ndarray:
    """Assemble sum_L q_L B_L.  Hermitian and traceless by construction."""
    coefficients = validate_coefficients(system, coefficients)
    rho = np.zeros((system.dim, system.dim), dtype=complex)
    for label, value in coefficients.items():
        rho += value * product_operator(system, label)
    return rho


def is_hermitian(rho: np.ndarray, tol: float = 1e-10) -> bool:
    scale = max(1.0, float(np.max(np.abs(rho))) if rho.size else 1.0)
    return bool(np.max(np.abs(rho - rho.conj().T)) <= tol * scale)


def density_to_coefficients(system: SpinSystem, rho: np.ndarray) -> dict:
    """Expand a Hermitian traceless matrix over the product-operator basis.

    Uses trace orthogonality: q_L = Tr(rho B_L) / Tr(B_L^2).  Inverse of
    :func:`coefficients_to_density` to better than 1e-10.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (system.dim, system.dim):
        raise ValueError(f"matrix shape {rho.shape} does not match dim {system.dim}")
    if not is_hermitian(rho):
        raise ValueError("matrix is not Hermitian")
    out = {}
    for label in all_labels(system.n):
        overlap = np.trace(rho @ product_operator(system, label))
        out[label] = float(np.real(overlap)) / operator_norm_squared(label)
    return out


# ---------------------------------------------------------------------------
# RF rotations


def rotation_pulse(system: SpinSystem, theta_rad: float, phase_rad: float,
                   targets: Iterable[int] | None = None) -> np.ndarray:
    """Unitary of an ideal RF pulse of flip angle theta and phase phi.

    The rotation generator per target spin is Ix*sin(phi) + Iy*cos(phi), so
    phase 0 rotates about +y and phase pi about -y.  Non-targeted spins get
    the identity.  With ``targets=None`` the pulse is non-selective.

    Built from the closed form u = cos(theta/2) - 2i sin(theta/2) (Ix sin(phi)
    + Iy cos(phi)), which is exactly unitary.
    """
    if targets is None:
        targets = range(1, system.n + 1)
    targets = sorted(set(int(t) for t in targets))
    if not targets:
        raise ValueError("pulse needs at least one target spin")
    if targets[0] < 1 or targets[-1] > system.n:
        raise ValueError(f"targets {targets} outside 1..{system.n}")

    axis = SPIN_X * np.sin(phase_rad) + SPIN_Y * np.cos(phase_rad)
    single = (np.cos(theta_rad / 2.0) * IDENTITY_2
              - 2.0j * np.sin(theta_rad / 2.0) * axis)
    out = np.array([[1.0 + 0.0j]])
    target_set = set(targets)
    for j in range(1, system.n + 1):
        out = np.kron(out, single if j in target_set else IDENTITY_2)
    return out
