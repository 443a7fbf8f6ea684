"""Fourier processing: apodized, zero-filled DFTs and peak readout.

Frequency axes run negative to positive with zero at the center (fftshift
layout), in Hz.  Detected coherences rotate as exp(+2i*pi*f*t), so a line at
transition frequency f lands at +f on the axis.

Default processing is a matched exponential apodization (rate 1/T2), two-fold
zero fill, and halving of the first time-domain point.  Each can be switched
off; the Parseval identity holds exactly when apodization and the first-point
correction are disabled.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import LineOverlapError
from .experiment import Signal1D, Signal2D, TransitionTable


@dataclass(eq=False)
class HybridSpectrum:
    """Signal transformed along t2 only: rows are t1 samples, columns are Omega2 bins."""

    grid: np.ndarray
    t1_s: np.ndarray
    omega2_hz: np.ndarray
    meta: dict = field(default_factory=dict)


@dataclass(eq=False)
class Spectrum2D:
    """Fully transformed spectrum S(Omega1, Omega2)."""

    grid: np.ndarray
    omega1_hz: np.ndarray
    omega2_hz: np.ndarray
    meta: dict = field(default_factory=dict)


@dataclass(eq=False)
class Spectrum1D:
    values: np.ndarray
    omega_hz: np.ndarray
    meta: dict = field(default_factory=dict)


@dataclass(eq=False)
class CrossSection:
    """Trace parallel to Omega1 at one Omega2 position.

    ``time_trace`` is the t1-domain form (present when extracted from a hybrid
    spectrum), ``freq_trace`` its transform; the two are related by this
    module's own DFT with the processing recorded in ``meta``.
    """

    anchor_hz: float
    bin_hz: float
    time_trace: np.ndarray | None
    t1_s: np.ndarray | None
    freq_trace: np.ndarray
    omega1_hz: np.ndarray
    meta: dict = field(default_factory=dict)


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def _resolve_rate(apodization, meta: dict) -> float:
    """Apodization spec -> decay rate in 1/s (0 disables)."""
    if apodization is None:
        return 0.0
    if isinstance(apodization, str):
        if apodization != "matched":
            raise ValueError(f"unknown apodization {apodization!r}")
        t2_s = meta.get("t2_s")
        if not t2_s:
            raise ValueError("matched apodization needs t2_s in the signal metadata")
        return 1.0 / float(t2_s)
    rate = float(apodization)
    if rate < 0:
        raise ValueError("apodization rate must be non-negative")
    return rate


def _dft_trace(trace: np.ndarray, dwell_s: float, rate: float,
               zero_fill: int, first_point_half: bool):
    x = np.asarray(trace, dtype=complex).copy()
    if rate:
        x *= np.exp(-rate * np.arange(len(x)) * dwell_s)
    if first_point_half:
        x[0] *= 0.5
    n_fft = int(zero_fill) * _next_pow2(len(x))
    spec = np.fft.fftshift(np.fft.fft(x, n=n_fft))
    freqs = np.fft.fftshift(np.fft.fftfreq(n_fft, dwell_s))
    return freqs, spec


def _processing_dict(apodization, rate, zero_fill, first_point_half) -> dict:
    return {
        "apodization": apodization if isinstance(apodization, str) else rate or None,
        "apod_rate_per_s": rate,
        "zero_fill": int(zero_fill),
        "first_point_half": bool(first_point_half),
    }


def dft_t2(signal: Signal2D, apodization="matched", zero_fill: int = 2,
           first_point_half: bool = True) -> HybridSpectrum:
    """Transform along t2 for every t1 row."""
    rate = _resolve_rate(apodization, signal.meta)
    grid = np.asarray(signal.grid, dtype=complex).copy()
    if rate:
        grid *= np.exp(-rate * np.arange(signal.n_t2) * signal.dwell_t2_s)[None, :]
    if first_point_half:
        grid[:, 0] *= 0.5
    n_fft = int(zero_fill) * _next_pow2(signal.n_t2)
    spec = np.fft.fftshift(np.fft.fft(grid, n=n_fft, axis=1), axes=1)
    freqs = np.fft.fftshift(np.fft.fftfreq(n_fft, signal.dwell_t2_s))
    meta = dict(signal.meta)
    meta["processing_t2"] = _processing_dict(apodization, rate, zero_fill, first_point_half)
    meta["dwell_t1_s"] = signal.dwell_t1_s
    return HybridSpectrum(
        grid=spec,
        t1_s=np.arange(signal.n_t1) * signal.dwell_t1_s,
        omega2_hz=freqs,
        meta=meta,
    )


def dft_t1(hybrid: HybridSpectrum, apodization="matched", zero_fill: int = 2,
           first_point_half: bool = True) -> Spectrum2D:
    """Transform the hybrid data along t1, completing the 2D spectrum.

    Cosine-modulated t1 content produces symmetric absorptive pairs at
    +-Omega1, sine-modulated content antisymmetric dispersive pairs.
    """
    rate = _resolve_rate(apodization, hybrid.meta)
    n_t1 = hybrid.grid.shape[0]
    dwell = float(hybrid.t1_s[1] - hybrid.t1_s[0]) if n_t1 > 1 else float(hybrid.meta.get("dwell_t1_s", 1.0))
    grid = np.asarray(hybrid.grid, dtype=complex).copy()
    if rate:
        grid *= np.exp(-rate * hybrid.t1_s)[:, None]
    if first_point_half:
        grid[0, :] *= 0.5
    n_fft = int(zero_fill) * _next_pow2(n_t1)
    spec = np.fft.fftshift(np.fft.fft(grid, n=n_fft, axis=0), axes=0)
    freqs = np.fft.fftshift(np.fft.fftfreq(n_fft, dwell))
    meta = dict(hybrid.meta)
    meta["processing_t1"] = _processing_dict(apodization, rate, zero_fill, first_point_half)
    return Spectrum2D(grid=spec, omega1_hz=freqs, omega2_hz=hybrid.omega2_hz, meta=meta)


def dft_fid(signal: Signal1D, apodization="matched", zero_fill: int = 2,
            first_point_half: bool = True) -> Spectrum1D:
    """Transform a one-dimensional FID."""
    rate = _resolve_rate(apodization, signal.meta)
    freqs, spec = _dft_trace(signal.samples, signal.dwell_s, rate, zero_fill,
                             first_point_half)
    meta = dict(signal.meta)
    meta["processing"] = _processing_dict(apodization, rate, zero_fill, first_point_half)
    return Spectrum1D(values=spec, omega_hz=freqs, meta=meta)


def nearest_bin(axis_hz: np.ndarray, frequency_hz: float) -> int:
    return int(np.argmin(np.abs(np.asarray(axis_hz) - frequency_hz)))


def hybrid_omega2_axis(n_t2: int, dwell_t2_s: float, zero_fill: int = 2) -> np.ndarray:
    """The Omega2 axis :func:`dft_t2` would produce, without the transform."""
    n_fft = int(zero_fill) * _next_pow2(n_t2)
    return np.fft.fftshift(np.fft.fftfreq(n_fft, dwell_t2_s))


def cross_section(source, omega2_hz: float) -> CrossSection:
    """Extract the trace parallel to Omega1 at the Omega2 bin nearest ``omega2_hz``.

    From a :class:`HybridSpectrum` the t1-domain trace is returned together
    with its transform; from a :class:`Spectrum2D` only the frequency-domain
    trace is available.
    """
    axis = source.omega2_hz
    if not (axis[0] <= omega2_hz <= axis[-1]):
        raise ValueError(
            f"omega2 = {omega2_hz:.6g} Hz outside axis range "
            f"[{axis[0]:.6g}, {axis[-1]:.6g}] Hz"
        )
    b = nearest_bin(axis, omega2_hz)
    t2_s = source.meta.get("t2_s")
    if t2_s:
        linewidth = 1.0 / (np.pi * t2_s)
        if abs(axis[b] - omega2_hz) > 0.5 * linewidth:
            warnings.warn(
                f"nearest Omega2 bin ({axis[b]:.6g} Hz) is more than half a "
                f"linewidth from requested {omega2_hz:.6g} Hz",
                stacklevel=2,
            )

    if isinstance(source, HybridSpectrum):
        column = source.grid[:, b].copy()
        n_t1 = len(column)
        dwell = float(source.t1_s[1] - source.t1_s[0]) if n_t1 > 1 else float(source.meta.get("dwell_t1_s", 1.0))
        proc = source.meta.get("processing_t2", {})
        rate = 1.0 / t2_s if t2_s else 0.0
        freqs, spec = _dft_trace(column, dwell, rate, proc.get("zero_fill", 2), True)
        meta = dict(source.meta)
        meta["cross_section_processing"] = _processing_dict(
            "matched" if rate else None, rate, proc.get("zero_fill", 2), True)
        return CrossSection(anchor_hz=float(omega2_hz), bin_hz=float(axis[b]),
                            time_trace=column, t1_s=source.t1_s.copy(),
                            freq_trace=spec, omega1_hz=freqs, meta=meta)
    if isinstance(source, Spectrum2D):
        return CrossSection(anchor_hz=float(omega2_hz), bin_hz=float(axis[b]),
                            time_trace=None, t1_s=None,
                            freq_trace=source.grid[:, b].copy(),
                            omega1_hz=source.omega1_hz.copy(),
                            meta=dict(source.meta))
    raise TypeError(f"cannot take a cross-section of {type(source).__name__}")


def peak_amplitudes(spectrum: Spectrum1D, table: TransitionTable,
                    strict: bool = True) -> dict:
    """Complex amplitude at each transition, read from the spectrum.

    The line center is known (the transition frequency), so a three-bin
    quadratic interpolation of the complex spectrum is evaluated there to
    correct for off-bin centering.  The readout is linear in the spectrum,
    which lets forward-model fits reproduce it exactly.  Lines closer than
    one linewidth overlap and cannot be read independently: with ``strict``
    this raises, otherwise it warns (useful when a forward model reads the
    same bins and absorbs the overlap).
    """
    t2_s = spectrum.meta.get("t2_s")
    if t2_s:
        linewidth = 1.0 / (np.pi * t2_s)
        close = []
        entries = list(table)
        for i in range(len(entries)):
            for k in range(i + 1, len(entries)):
                if abs(entries[i].frequency_hz - entries[k].frequency_hz) < linewidth:
                    close.append((entries[i], entries[k]))
        if close:
            desc = "; ".join(
                f"{a.frequency_hz:.6g} Hz vs {b.frequency_hz:.6g} Hz"
                for a, b in close[:6]
            )
            message = (f"{len(close)} line pair(s) closer than the linewidth "
                       f"({linewidth:.3g} Hz): {desc}")
            if strict:
                raise LineOverlapError(message, pairs=close)
            warnings.warn(message, stacklevel=2)

    axis = spectrum.omega_hz
    values = spectrum.values
    bin_width = float(axis[1] - axis[0])
    out = {}
    for transition in table:
        f = transition.frequency_hz
        if not (axis[0] <= f <= axis[-1]):
            raise ValueError(f"transition at {f:.6g} Hz outside the spectrum axis")
        b = nearest_bin(axis, f)
        if b == 0 or b == len(axis) - 1:
            out[transition] = complex(values[b])
            continue
        # Quadratic through the three bins around the known line center,
        # evaluated at the center's fractional offset.
        offset = (f - axis[b]) / bin_width
        left, mid, right = values[b - 1], values[b], values[b + 1]
        out[transition] = complex(
            mid + 0.5 * (right - left) * offset
            + 0.5 * (right - 2.0 * mid + left) * offset ** 2
        )
    return out


# ---------------------------------------------------------------------------
# Exports


def export_spectrum2d(spectrum: Spectrum2D, csv_path, axes_json_path=None) -> None:
    """Magnitude grid as CSV (rows Omega1, columns Omega2) plus axis metadata."""
    mag = np.abs(spectrum.grid)
    with open(csv_path, "w") as handle:
        handle.write("omega1_hz\\omega2_hz," +
                     ",".join(repr(float(f)) for f in spectrum.omega2_hz) + "\n")
        for i, f1 in enumerate(spectrum.omega1_hz):
            handle.write(repr(float(f1)) + "," +
                         ",".join(repr(float(v)) for v in mag[i]) + "\n")
    if axes_json_path is not None:
        payload = {
            "omega1_hz": [float(f) for f in spectrum.omega1_hz],
            "omega2_hz": [float(f) for f in spectrum.omega2_hz],
            "units": {"omega1": "Hz", "omega2": "Hz"},
            "meta": spectrum.meta,
        }
        with open(axes_json_path, "w") as handle:
            json.dump(payload, handle, indent=2, sort_keys=True)
            handle.write("\n")


def export_cross_section(section: CrossSection, csv_path) -> None:
    """Frequency-domain trace as omega1_hz, re, im columns."""
    with open(csv_path, "w") as handle:
        handle.write("omega1_hz,re,im\n")
        for f, v in zip(section.omega1_hz, section.freq_trace):
            handle.write(f"{float(f)!r},{float(v.real)!r},{float(v.imag)!r}\n")


def export_spectrum1d(spectrum: Spectrum1D, csv_path) -> None:
    with open(csv_path, "w") as handle:
        handle.write("omega_hz,re,im\n")
        for f, v in zip(spectrum.omega_hz, spectrum.values):
            handle.write(f"{float(f)!r},{float(v.real)!r},{float(v.imag)!r}\n")
