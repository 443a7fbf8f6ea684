"""Forward-model inversion of the simulated measurements.

Off-diagonal coefficients come from a linear least-squares fit of the
two-dimensional data: every off-diagonal basis operator is pushed through the
same sequence and processing as the measurement, its t1-domain cross-sections
at the selected transitions form one column of a design matrix, and the
measured cross-sections are solved against those columns.  This sidesteps any
hand-derived lineshape algebra and stays exact for arbitrary register sizes,
including partially overlapping lines, because model and measurement share
every processing step bin for bin.

Diagonal coefficients come from the one-dimensional readout the same way:
peak amplitudes of the measured spectrum are fit against the simulated
amplitudes of each diagonal basis operator at the same pulse angle.
"""

from __future__ import annotations

import hashlib
import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .core import (SpinSystem, coefficients_to_density, diagonal_labels,
                   observable_labels, offdiagonal_labels, product_operator)
from .errors import RankDeficiencyError
from .experiment import (AcquisitionParams, Signal1D, Signal2D, TransitionTable,
                         check_nyquist, reference_fid, run_sequence_A,
                         run_sequence_B, transition_table)
from .spectral import (dft_fid, dft_t2, hybrid_omega2_axis, nearest_bin,
                       peak_amplitudes)

log = logging.getLogger(__name__)

# Bump when the fixed internal processing (apodization, zero fill, stacking)
# changes; it keys cached design matrices.
PROCESSING_VERSION = "v1"

RESIDUAL_WARN_THRESHOLD = 1e-6


@dataclass(eq=False)
class DesignMatrix:
    """Stacked unit-coefficient responses of all off-diagonal basis operators.

    Rows are the real and imaginary parts of the t1-mean-subtracted
    cross-section traces at the selected transitions; one column per
    off-diagonal label.  ``rank``, ``condition_number`` and the offending
    label lists describe the numerical solvability of the fit.
    """

    matrix: np.ndarray
    labels: tuple
    system_digest: str
    params: AcquisitionParams
    transition_indices: tuple
    bins: tuple
    singular_values: np.ndarray
    rank: int
    condition_number: float
    zero_labels: tuple = ()
    nullspace_labels: tuple = ()
    undetermined_labels: tuple = ()
    digest: str = ""

    @property
    def is_full_rank(self) -> bool:
        return self.rank == len(self.labels)

    @property
    def is_solvable(self) -> bool:
        """Numerically full rank and structurally complete.

        Single-quantum labels of a qubit with no selected cross-section are
        carried only by lineshape tails leaking into other qubits' bins; the
        fit refuses to determine them from that.
        """
        return self.is_full_rank and not self.undetermined_labels


@dataclass
class OffdiagonalFit:
    coefficients: dict
    residual_norm: float
    relative_residual: float


@dataclass
class DiagonalFit:
    coefficients: dict
    residual_norm: float
    relative_residual: float
    condition_number: float


@dataclass(eq=False)
class TomographyResult:
    """Recovered coefficients and reconstruction, with quality metrics."""

    coefficients: dict
    matrix: np.ndarray
    fidelity: float | None
    residual_offdiagonal: float
    residual_diagonal: float
    condition_number: float
    condition_number_diagonal: float
    scale_factor: float | None = None
    reference: np.ndarray | None = None
    element_errors: np.ndarray | None = None
    max_relative_element_error: float | None = None
    notes: tuple = ()

    def to_json_dict(self) -> dict:
        out = {
            "coefficients": [
                [" ".join(label), value]
                for label, value in sorted(self.coefficients.items())
            ],
            "matrix_re": np.real(self.matrix).tolist(),
            "matrix_im": np.imag(self.matrix).tolist(),
            "fidelity": self.fidelity,
            "residual_offdiagonal": self.residual_offdiagonal,
            "residual_diagonal": self.residual_diagonal,
            "condition_number": self.condition_number,
            "condition_number_diagonal": self.condition_number_diagonal,
            "scale_factor": self.scale_factor,
            "max_relative_element_error": self.max_relative_element_error,
            "notes": list(self.notes),
        }
        if self.reference is not None:
            out["reference_re"] = np.real(self.reference).tolist()
            out["reference_im"] = np.imag(self.reference).tolist()
        return out


def _resolve_transitions(table: TransitionTable, selected) -> tuple:
    if selected is None:
        return tuple(range(len(table)))
    indices = tuple(int(i) for i in selected)
    if not indices:
        raise ValueError("selected_transitions must not be empty")
    for i in indices:
        if not 0 <= i < len(table):
            raise ValueError(f"transition index {i} outside 0..{len(table) - 1}")
    if len(set(indices)) != len(indices):
        raise ValueError("selected_transitions contains duplicates")
    return indices


def _hybrid_bins(table: TransitionTable, indices, params: AcquisitionParams):
    """Omega2 bin index for each selected transition under default processing."""
    axis = hybrid_omega2_axis(params.n_t2, params.dwell_t2_s)
    return tuple(nearest_bin(axis, table.entries[i].frequency_hz) for i in indices)


def _stack_cross_sections(hybrid_grid: np.ndarray, bins) -> np.ndarray:
    """Real measurement vector: per bin, mean-free trace split into re and im.

    The t1-constant component of a cross-section carries no off-diagonal
    information, so each trace has its t1 mean removed before stacking.
    """
    pieces = []
    for b in bins:
        trace = hybrid_grid[:, b]
        trace = trace - trace.mean()
        pieces.append(trace.real)
        pieces.append(trace.imag)
    return np.concatenate(pieces)


def design_digest(system: SpinSystem, params: AcquisitionParams,
                  transition_indices) -> str:
    payload = json.dumps(
        {
            "system": system.to_dict(),
            "params": params.to_dict(),
            "transitions": list(transition_indices),
            "processing": PROCESSING_VERSION,
        },
        sort_keys=True, separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def build_design_matrix(system: SpinSystem, params: AcquisitionParams,
                        selected_transitions=None, threads: int = 1) -> DesignMatrix:
    """Simulate every off-diagonal basis operator and stack its cross-sections.

    ``selected_transitions`` are indices into the transition table; default is
    all of them.  One cross-section per qubit is the minimum that can
    determine every off-diagonal coefficient; using all of them averages down
    numerical error.  A selection that leaves some qubit uncovered leaves that
    qubit's single-quantum labels supported only by lineshape-tail leakage;
    they are reported through ``undetermined_labels`` and the fit refuses to
    run.
    """
    table = transition_table(system)
    check_nyquist(table, params)
    indices = _resolve_transitions(table, selected_transitions)
    covered = {table.entries[i].qubit for i in indices}
    missing = sorted(set(range(1, system.n + 1)) - covered)
    if missing:
        warnings.warn(
            f"no cross-section selected for qubit(s) {missing}; their "
            "single-quantum coefficients cannot be determined",
            stacklevel=2,
        )
    bins = _hybrid_bins(table, indices, params)
    labels = offdiagonal_labels(system.n)
    undetermined = tuple(
        label for label in labels
        if sum(c in "xy" for c in label) == 1
        and (label.index("x") if "x" in label else label.index("y")) + 1 in missing
    )

    def column(label: str) -> np.ndarray:
        signal = run_sequence_A(system, product_operator(system, label), params)
        hybrid = dft_t2(signal)
        return _stack_cross_sections(hybrid.grid, bins)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            columns = list(pool.map(column, labels))
    else:
        columns = [column(label) for label in labels]
    matrix = np.column_stack(columns)

    column_norms = np.linalg.norm(matrix, axis=0)
    norm_scale = float(np.max(column_norms)) if np.any(column_norms) else 0.0
    zero_labels = tuple(
        labels[i] for i in range(len(labels))
        if column_norms[i] <= 1e-12 * max(norm_scale, 1e-300)
    )

    svals = np.linalg.svd(matrix, compute_uv=False)
    tol = svals[0] * max(matrix.shape) * np.finfo(float).eps * 10 if svals[0] > 0 else 0.0
    rank = int(np.sum(svals > tol))
    cond = float(svals[0] / svals[-1]) if svals[-1] > 0 else float("inf")

    nullspace_labels = ()
    if rank < len(labels):
        _, _, vt = np.linalg.svd(matrix, full_matrices=True)
        null_rows = vt[rank:]
        weight = np.max(np.abs(null_rows), axis=0)
        nullspace_labels = tuple(
            labels[i] for i in range(len(labels)) if weight[i] > 0.1
        )

    design = DesignMatrix(
        matrix=matrix,
        labels=labels,
        system_digest=system.digest(),
        params=params,
        transition_indices=indices,
        bins=bins,
        singular_values=svals,
        rank=rank,
        condition_number=cond,
        zero_labels=zero_labels,
        nullspace_labels=nullspace_labels,
        undetermined_labels=undetermined,
        digest=design_digest(system, params, indices),
    )
    log.info("design matrix %s: shape %s, rank %d/%d, condition %.3g",
             design.digest, matrix.shape, rank, len(labels), cond)
    return design


def save_design(design: DesignMatrix, path) -> None:
    meta = {
        "system_digest": design.system_digest,
        "params": design.params.to_dict(),
        "transition_indices": list(design.transition_indices),
        "bins": list(design.bins),
        "rank": design.rank,
        "condition_number": design.condition_number,
        "zero_labels": list(design.zero_labels),
        "nullspace_labels": list(design.nullspace_labels),
        "undetermined_labels": list(design.undetermined_labels),
        "digest": design.digest,
        "processing": PROCESSING_VERSION,
    }
    np.savez_compressed(
        path,
        matrix=design.matrix,
        labels=np.array(design.labels),
        singular_values=design.singular_values,
        meta=np.array(json.dumps(meta, sort_keys=True)),
    )


def load_design(path) -> DesignMatrix:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("processing") != PROCESSING_VERSION:
            raise ValueError("cached design matrix uses a different processing version")
        params = AcquisitionParams(**meta["params"])
        return DesignMatrix(
            matrix=data["matrix"],
            labels=tuple(str(x) for x in data["labels"]),
            system_digest=meta["system_digest"],
            params=params,
            transition_indices=tuple(meta["transition_indices"]),
            bins=tuple(meta["bins"]),
            singular_values=data["singular_values"],
            rank=int(meta["rank"]),
            condition_number=float(meta["condition_number"]),
            zero_labels=tuple(meta["zero_labels"]),
            nullspace_labels=tuple(meta["nullspace_labels"]),
            undetermined_labels=tuple(meta["undetermined_labels"]),
            digest=meta["digest"],
        )


def _check_signal_matches_design(signal: Signal2D, design: DesignMatrix) -> None:
    digest = signal.meta.get("system_digest")
    if digest is not None and digest != design.system_digest:
        raise ValueError("signal was recorded on a different spin system than the design matrix")
    params = signal.meta.get("params")
    if params is not None and params != design.params.to_dict():
        raise ValueError("signal acquisition parameters differ from the design matrix")


def fit_offdiagonal(signal: Signal2D, design: DesignMatrix) -> OffdiagonalFit:
    """Least-squares solve of the stacked cross-sections against the design.

    Refuses rank-deficient designs outright rather than returning a silent
    pseudo-inverse answer.
    """
    _check_signal_matches_design(signal, design)
    if not design.is_solvable:
        bad = (design.undetermined_labels or design.nullspace_labels
               or design.zero_labels)
        raise RankDeficiencyError(
            f"design matrix does not determine all {len(design.labels)} "
            f"coefficients (rank {design.rank}); undetermined labels: "
            f"{[' '.join(l) for l in bad]}",
            labels=bad,
        )
    hybrid = dft_t2(signal)
    target = _stack_cross_sections(hybrid.grid, design.bins)
    solution, _, _, _ = np.linalg.lstsq(design.matrix, target, rcond=None)
    residual = float(np.linalg.norm(design.matrix @ solution - target))
    scale = float(np.linalg.norm(target))
    relative = residual / scale if scale > 0 else 0.0
    if relative > RESIDUAL_WARN_THRESHOLD and scale > 0:
        warnings.warn(
            f"off-diagonal fit residual {relative:.3g} exceeds "
            f"{RESIDUAL_WARN_THRESHOLD}; model mismatch or noisy data",
            stacklevel=2,
        )
    coefficients = {label: float(q) for label, q in zip(design.labels, solution)}
    return OffdiagonalFit(coefficients=coefficients, residual_norm=residual,
                          relative_residual=relative)


def _diagonal_response_matrix(system: SpinSystem, params: AcquisitionParams,
                              table: TransitionTable):
    labels = diagonal_labels(system.n)
    columns = []
    for label in labels:
        signal = run_sequence_B(system, product_operator(system, label), params)
        amps = peak_amplitudes(dft_fid(signal), table, strict=False)
        stacked = np.concatenate([
            np.array([amps[t].real for t in table]),
            np.array([amps[t].imag for t in table]),
        ])
        columns.append(stacked)
    return labels, np.column_stack(columns)


def fit_diagonal(signal: Signal1D, system: SpinSystem,
                 params: AcquisitionParams) -> DiagonalFit:
    """Recover the 2^n - 1 diagonal coefficients from the 1D readout.

    Measured line amplitudes are fit against the simulated response of each
    diagonal basis operator at the same beta, so the finite-pulse-angle terms
    cancel exactly; the linear-response approximation never enters.
    """
    table = transition_table(system)
    with warnings.catch_warnings():
        # Overlapping lines are absorbed by the shared forward model; a single
        # warning from the measured spectrum is enough.
        warnings.simplefilter("ignore")
        labels, response = _diagonal_response_matrix(system, params, table)
    amps = peak_amplitudes(dft_fid(signal), table, strict=False)
    target = np.concatenate([
        np.array([amps[t].real for t in table]),
        np.array([amps[t].imag for t in table]),
    ])

    svals = np.linalg.svd(response, compute_uv=False)
    if svals[0] == 0 or svals[-1] <= svals[0] * 1e-10:
        raise RankDeficiencyError(
            "diagonal response system is singular; line positions do not "
            "separate the diagonal coefficients",
            labels=labels,
        )
    condition = float(svals[0] / svals[-1])
    solution, _, _, _ = np.linalg.lstsq(response, target, rcond=None)
    residual = float(np.linalg.norm(response @ solution - target))
    scale = float(np.linalg.norm(target))
    relative = residual / scale if scale > 0 else 0.0
    coefficients = {label: float(q) for label, q in zip(labels, solution)}
    return DiagonalFit(coefficients=coefficients, residual_norm=residual,
                       relative_residual=relative, condition_number=condition)


def reconstruct(system: SpinSystem, offdiagonal_coefficients,
                diagonal_coefficients) -> np.ndarray:
    """Merge the two disjoint coefficient sets and assemble the matrix."""
    overlap = set(offdiagonal_coefficients) & set(diagonal_coefficients)
    if overlap:
        raise ValueError(f"coefficient sets overlap on labels {sorted(overlap)}")
    merged = dict(offdiagonal_coefficients)
    merged.update(diagonal_coefficients)
    return coefficients_to_density(system, merged)


def fidelity(reference: np.ndarray, reconstructed: np.ndarray) -> float:
    """Normalized Hilbert-Schmidt overlap, in [-1, 1].

    Deviation matrices are traceless and generally not positive, so the
    state-fidelity formulas for density operators do not apply; the
    normalized overlap treats them as vectors in operator space.
    """
    a = np.asarray(reference, dtype=complex)
    b = np.asarray(reconstructed, dtype=complex)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    norm_a = float(np.real(np.trace(a @ a.conj().T)))
    norm_b = float(np.real(np.trace(b @ b.conj().T)))
    if norm_a <= 0 or norm_b <= 0:
        raise ValueError("fidelity undefined for zero-norm input")
    overlap = float(np.real(np.trace(a.conj().T @ b)))
    return overlap / np.sqrt(norm_a * norm_b)


def max_relative_element_error(reference: np.ndarray, reconstructed: np.ndarray,
                               floor_fraction: float = 1e-6) -> float:
    """Largest per-element relative deviation |rec - ref| / |ref|.

    Elements smaller than ``floor_fraction`` of the largest reference element
    are compared against that floor instead, so structural zeros do not
    dominate the metric.
    """
    ref = np.asarray(reference, dtype=complex)
    rec = np.asarray(reconstructed, dtype=complex)
    scale = float(np.max(np.abs(ref)))
    if scale == 0.0:
        raise ValueError("reference matrix is zero")
    denom = np.maximum(np.abs(ref), floor_fraction * scale)
    return float(np.max(np.abs(rec - ref) / denom))


def reference_normalize(system: SpinSystem, rho0: np.ndarray,
                        result: TomographyResult,
                        params: AcquisitionParams) -> TomographyResult:
    """Rescale fitted coefficients against a pulse-free reference detection.

    The directly observable single-quantum coefficients of the input state are
    re-measured without any pulse and compared with the fitted values; their
    common ratio (a least-squares average over the observable labels) becomes
    a single global scale factor.  With ideal pulses the factor is 1 to
    numerical precision.
    """
    labels = observable_labels(system.n)
    measured = reference_fid(system, rho0, params)
    target = np.concatenate([measured.samples.real, measured.samples.imag])
    if np.linalg.norm(target) <= 1e-12 * max(1.0, float(np.max(np.abs(rho0)))):
        return replace(result, scale_factor=None,
                       notes=result.notes + (
                           "reference normalization skipped: no directly "
                           "observable single-quantum content",))

    columns = []
    for label in labels:
        response = reference_fid(system, product_operator(system, label), params)
        columns.append(np.concatenate([response.samples.real, response.samples.imag]))
    response_matrix = np.column_stack(columns)
    q_ref, _, _, _ = np.linalg.lstsq(response_matrix, target, rcond=None)

    q_fit = np.array([result.coefficients.get(label, 0.0) for label in labels])
    mask = np.abs(q_ref) > 1e-9 * max(1.0, float(np.max(np.abs(q_ref))))
    denom = float(np.dot(q_fit[mask], q_fit[mask]))
    if denom <= 0.0:
        return replace(result, scale_factor=None,
                       notes=result.notes + (
                           "reference normalization skipped: fitted observable "
                           "coefficients are zero",))
    scale = float(np.dot(q_ref[mask], q_fit[mask])) / denom

    coefficients = {label: q * scale for label, q in result.coefficients.items()}
    matrix = coefficients_to_density(system, coefficients)
    scored = _score(result.reference, matrix)
    return replace(result, coefficients=coefficients, matrix=matrix,
                   scale_factor=scale, fidelity=scored[0],
                   element_errors=scored[1], max_relative_element_error=scored[2],
                   notes=result.notes + scored[3])


def _score(reference, matrix):
    """(fidelity, element_errors, max_relative_error, notes) against a reference."""
    if reference is None:
        return None, None, None, ()
    try:
        fid = fidelity(reference, matrix)
    except ValueError:
        return None, None, None, ("fidelity skipped: zero-norm matrix",)
    errors = matrix - reference
    max_rel = max_relative_element_error(reference, matrix)
    return fid, errors, max_rel, ()


def tomograph_state(system: SpinSystem, rho0: np.ndarray,
                    params: AcquisitionParams, design: DesignMatrix | None = None,
                    signal_a: Signal2D | None = None,
                    signal_b: Signal1D | None = None,
                    selected_transitions=None, normalize: bool = True,
                    threads: int = 1) -> TomographyResult:
    """Full pipeline: simulate both experiments, invert, reassemble, score.

    Pre-simulated (possibly noise-added) signals can be passed in; otherwise
    both sequences run with ideal settings.  The input state serves as the
    scoring reference.
    """
    if design is None:
        design = build_design_matrix(system, params, selected_transitions,
                                     threads=threads)
    if signal_a is None:
        signal_a = run_sequence_A(system, rho0, params)
    if signal_b is None:
        signal_b = run_sequence_B(system, rho0, params)

    off = fit_offdiagonal(signal_a, design)
    diag = fit_diagonal(signal_b, system, params)
    matrix = reconstruct(system, off.coefficients, diag.coefficients)
    coefficients = dict(off.coefficients)
    coefficients.update(diag.coefficients)

    fid, errors, max_rel, notes = _score(rho0, matrix)
    result = TomographyResult(
        coefficients=coefficients,
        matrix=matrix,
        fidelity=fid,
        residual_offdiagonal=off.relative_residual,
        residual_diagonal=diag.relative_residual,
        condition_number=design.condition_number,
        condition_number_diagonal=diag.condition_number,
        reference=rho0,
        element_errors=errors,
        max_relative_element_error=max_rel,
        notes=notes,
    )
    if normalize:
        result = reference_normalize(system, rho0, result, params)
    return result
