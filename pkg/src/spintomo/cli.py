"""Command-line entry point: config parsing, pipeline orchestration, exports.

Subcommands
-----------
simulate    run both pulse sequences and export signals and spectra
tomograph   simulate, invert, and score against the configured input state
basis       build (or load from cache) the design matrix and dump a summary

Exit codes: 0 success, 2 configuration error, 3 numerical or rank error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (SpinSystem, build_spin_system, coefficients_to_density,
                   format_label, parse_label)
from .errors import (ConfigError, DegenerateTransitionError, LineOverlapError,
                     NyquistError, RankDeficiencyError, SpinTomoError)
from .experiment import (default_acquisition, export_signal1d, export_signal2d,
                         run_sequence_A, run_sequence_B, transition_table)
from .spectral import (cross_section, dft_fid, dft_t1, dft_t2,
                       export_cross_section, export_spectrum1d,
                       export_spectrum2d)
from .tomography import (build_design_matrix, design_digest, load_design,
                         save_design, tomograph_state)

log = logging.getLogger(__name__)


@dataclass
class RunOptions:
    noise_rms: float = 0.0
    realistic_gradient: bool = False
    gradient_draws: int = 16
    gradient_tau_max_s: float = 0.02
    seed: int = 0
    output_dir: str = "out"
    reference_normalize: bool = True


@dataclass
class RunConfig:
    system: SpinSystem
    coefficients: dict
    acquisition: dict = field(default_factory=dict)
    options: RunOptions = field(default_factory=RunOptions)


_ACQ_KEYS = {"n_t1", "n_t2", "dwell_t1_s", "dwell_t2_s", "alpha_deg",
             "beta_deg", "cross_section_qubits"}
_OPT_KEYS = {"noise_rms", "realistic_gradient", "gradient_draws",
             "gradient_tau_max_s", "seed", "output_dir", "reference_normalize"}


def _reject_unknown(block: dict, allowed, path: str) -> None:
    unknown = sorted(set(block) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in '{path}'")


def parse_config(path) -> RunConfig:
    """Load and validate a JSON run configuration."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    _reject_unknown(raw, {"spin_system", "state", "acquisition", "options"}, "<root>")
    for block in ("spin_system", "state"):
        if block not in raw:
            raise ConfigError(f"missing required block '{block}'")

    sys_block = raw["spin_system"]
    _reject_unknown(sys_block, {"n", "larmor_hz", "couplings_hz", "t2_s"}, "spin_system")
    for key in ("n", "larmor_hz", "t2_s"):
        if key not in sys_block:
            raise ConfigError(f"missing 'spin_system.{key}'")
    couplings = {}
    for key, value in (sys_block.get("couplings_hz") or {}).items():
        parts = str(key).split(",")
        if len(parts) != 2:
            raise ConfigError(
                f"coupling key {key!r} in 'spin_system.couplings_hz' must be 'j,k'")
        try:
            couplings[(int(parts[0]), int(parts[1]))] = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"bad coupling entry {key!r}: {value!r}")
    try:
        system = build_spin_system(sys_block["n"], sys_block["larmor_hz"],
                                   couplings, sys_block["t2_s"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid 'spin_system': {exc}")

    state_block = raw["state"]
    _reject_unknown(state_block, {"coefficients"}, "state")
    coefficients = {}
    for entry in state_block.get("coefficients", []):
        if not (isinstance(entry, (list, tuple)) and len(entry) == 2):
            raise ConfigError(
                f"'state.coefficients' entries must be [label, value]; got {entry!r}")
        try:
            label = parse_label(entry[0], system.n)
        except ValueError as exc:
            raise ConfigError(f"bad label in 'state.coefficients': {exc}")
        if label in coefficients:
            raise ConfigError(
                f"duplicate label {format_label(label)!r} in 'state.coefficients'")
        try:
            coefficients[label] = float(entry[1])
        except (TypeError, ValueError):
            raise ConfigError(
                f"coefficient for {format_label(label)!r} must be a number")

    acq = dict(raw.get("acquisition") or {})
    _reject_unknown(acq, _ACQ_KEYS, "acquisition")
    if "cross_section_qubits" in acq:
        qubits = acq["cross_section_qubits"]
        if (not isinstance(qubits, list) or not qubits
                or any(int(q) < 1 or int(q) > system.n for q in qubits)):
            raise ConfigError(
                "'acquisition.cross_section_qubits' must be a non-empty list "
                f"of qubits in 1..{system.n}")
        acq["cross_section_qubits"] = sorted(set(int(q) for q in qubits))

    opt_block = dict(raw.get("options") or {})
    _reject_unknown(opt_block, _OPT_KEYS, "options")
    options = RunOptions()
    try:
        options.noise_rms = float(opt_block.get("noise_rms", options.noise_rms))
        options.realistic_gradient = bool(opt_block.get("realistic_gradient",
                                                        options.realistic_gradient))
        options.gradient_draws = int(opt_block.get("gradient_draws",
                                                   options.gradient_draws))
        options.gradient_tau_max_s = float(opt_block.get("gradient_tau_max_s",
                                                         options.gradient_tau_max_s))
        options.seed = int(opt_block.get("seed", options.seed))
        options.output_dir = str(opt_block.get("output_dir", options.output_dir))
        options.reference_normalize = bool(opt_block.get("reference_normalize",
                                                         options.reference_normalize))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid 'options' value: {exc}")
    if options.noise_rms < 0:
        raise ConfigError("'options.noise_rms' must be non-negative")

    return RunConfig(system=system, coefficients=coefficients,
                     acquisition=acq, options=options)


def config_to_dict(cfg: RunConfig) -> dict:
    """Canonical dictionary form; parse(emit(cfg)) reproduces cfg exactly."""
    params = resolve_params(cfg)
    acquisition = {
        "n_t1": params.n_t1,
        "n_t2": params.n_t2,
        "dwell_t1_s": params.dwell_t1_s,
        "dwell_t2_s": params.dwell_t2_s,
        "alpha_deg": float(np.degrees(params.alpha_rad)),
        "beta_deg": float(np.degrees(params.beta_rad)),
    }
    if "cross_section_qubits" in cfg.acquisition:
        acquisition["cross_section_qubits"] = list(cfg.acquisition["cross_section_qubits"])
    return {
        "spin_system": {
            "n": cfg.system.n,
            "larmor_hz": list(cfg.system.larmor_hz),
            "couplings_hz": {f"{j},{k}": value
                             for j, k, value in cfg.system.couplings_hz},
            "t2_s": cfg.system.t2_s,
        },
        "state": {
            "coefficients": [[format_label(label), value]
                             for label, value in sorted(cfg.coefficients.items())],
        },
        "acquisition": acquisition,
        "options": {
            "noise_rms": cfg.options.noise_rms,
            "realistic_gradient": cfg.options.realistic_gradient,
            "gradient_draws": cfg.options.gradient_draws,
            "gradient_tau_max_s": cfg.options.gradient_tau_max_s,
            "seed": cfg.options.seed,
            "output_dir": cfg.options.output_dir,
            "reference_normalize": cfg.options.reference_normalize,
        },
    }


def resolve_params(cfg: RunConfig):
    acq = cfg.acquisition
    kwargs = {}
    if "n_t1" in acq:
        kwargs["n_t1"] = int(acq["n_t1"])
    if "n_t2" in acq:
        kwargs["n_t2"] = int(acq["n_t2"])
    if "dwell_t1_s" in acq:
        kwargs["dwell_t1_s"] = float(acq["dwell_t1_s"])
    if "dwell_t2_s" in acq:
        kwargs["dwell_t2_s"] = float(acq["dwell_t2_s"])
    if "alpha_deg" in acq:
        kwargs["alpha_rad"] = float(np.radians(acq["alpha_deg"]))
    if "beta_deg" in acq:
        kwargs["beta_rad"] = float(np.radians(acq["beta_deg"]))
    return default_acquisition(cfg.system, **kwargs)


def selected_transition_indices(cfg: RunConfig, table):
    qubits = cfg.acquisition.get("cross_section_qubits")
    if not qubits:
        return None
    return [i for i, t in enumerate(table) if t.qubit in set(qubits)]


# ---------------------------------------------------------------------------
# Output helpers


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: Path, payload: dict) -> None:
    _atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _export_with_temp(export_fn, path: Path, *objects) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    export_fn(*objects, tmp)
    os.replace(tmp, path)


def _apply_noise(rng, array: np.ndarray, rms: float) -> np.ndarray:
    noise = (rng.standard_normal(array.shape)
             + 1j * rng.standard_normal(array.shape)) * (rms / np.sqrt(2.0))
    return array + noise


def _simulate_signals(cfg: RunConfig, params, rng):
    system = cfg.system
    rho0 = coefficients_to_density(system, cfg.coefficients)
    gradient = "realistic" if cfg.options.realistic_gradient else "ideal"
    kwargs = dict(gradient=gradient, rng=rng,
                  gradient_draws=cfg.options.gradient_draws,
                  gradient_tau_max_s=cfg.options.gradient_tau_max_s)
    signal_a = run_sequence_A(system, rho0, params, **kwargs)
    signal_b = run_sequence_B(system, rho0, params, **kwargs)
    if cfg.options.noise_rms > 0:
        signal_a.grid = _apply_noise(rng, signal_a.grid, cfg.options.noise_rms)
        signal_b.samples = _apply_noise(rng, signal_b.samples, cfg.options.noise_rms)
    return rho0, signal_a, signal_b


def _export_simulation(cfg: RunConfig, signal_a, signal_b, out: Path):
    _export_with_temp(lambda s, p: export_signal2d(s, p, None), out / "signal_a.csv", signal_a)
    _write_json(out / "signal_a.json", {
        "dwell_t1_s": signal_a.dwell_t1_s, "dwell_t2_s": signal_a.dwell_t2_s,
        "n_t1": signal_a.n_t1, "n_t2": signal_a.n_t2, "meta": signal_a.meta,
    })
    _export_with_temp(lambda s, p: export_signal1d(s, p, None), out / "signal_b.csv", signal_b)
    _write_json(out / "signal_b.json", {
        "dwell_s": signal_b.dwell_s, "n_samples": int(len(signal_b.samples)),
        "meta": signal_b.meta,
    })

    hybrid = dft_t2(signal_a)
    spectrum = dft_t1(hybrid)
    _export_with_temp(lambda s, p: export_spectrum2d(s, p, None),
                      out / "spectrum_2d.csv", spectrum)
    _write_json(out / "spectrum_2d_axes.json", {
        "omega1_hz": [float(f) for f in spectrum.omega1_hz],
        "omega2_hz": [float(f) for f in spectrum.omega2_hz],
        "units": {"omega1": "Hz", "omega2": "Hz"},
    })

    table = transition_table(cfg.system)
    for transition in table:
        section = cross_section(hybrid, transition.frequency_hz)
        name = f"cross_section_q{transition.qubit}_{transition.frequency_hz:.1f}Hz.csv"
        _export_with_temp(export_cross_section, out / name, section)

    spectrum_b = dft_fid(signal_b)
    _export_with_temp(export_spectrum1d, out / "spectrum_b.csv", spectrum_b)
    return hybrid, spectrum


def _design_with_cache(cfg: RunConfig, params, out: Path, threads: int):
    table = transition_table(cfg.system)
    selected = selected_transition_indices(cfg, table)
    indices = tuple(range(len(table))) if selected is None else tuple(selected)
    digest = design_digest(cfg.system, params, indices)
    cache_dir = out / "cache"
    cache_path = cache_dir / f"design_{digest}.npz"
    if cache_path.exists():
        log.info("design cache hit: %s", cache_path)
        return load_design(cache_path), cache_path, True
    design = build_design_matrix(cfg.system, params, selected, threads=threads)
    cache_dir.mkdir(parents=True, exist_ok=True)
    tmp = cache_path.with_name(cache_path.name + ".tmp.npz")
    save_design(design, tmp)
    os.replace(tmp, cache_path)
    log.info("design cache written: %s", cache_path)
    return design, cache_path, False


def _design_summary(design, cache_path) -> dict:
    return {
        "digest": design.digest,
        "cache_file": cache_path.name,
        "shape": list(design.matrix.shape),
        "labels": [format_label(l) for l in design.labels],
        "rank": design.rank,
        "columns": len(design.labels),
        "full_rank": design.is_full_rank,
        "solvable": design.is_solvable,
        "condition_number": design.condition_number,
        "zero_labels": [format_label(l) for l in design.zero_labels],
        "nullspace_labels": [format_label(l) for l in design.nullspace_labels],
        "undetermined_labels": [format_label(l) for l in design.undetermined_labels],
        "transition_indices": list(design.transition_indices),
    }


def _format_matrix(matrix: np.ndarray) -> str:
    return np.array2string(np.asarray(matrix), precision=5, suppress_small=True,
                           max_line_width=120)


def _write_report(path: Path, result, cfg: RunConfig) -> None:
    lines = ["state reconstruction report", "=" * 28, ""]
    if result.reference is not None:
        lines += ["input matrix:", _format_matrix(result.reference), ""]
    lines += ["reconstructed matrix:", _format_matrix(result.matrix), ""]
    if result.fidelity is not None:
        lines.append(f"fidelity: {result.fidelity:.10f}")
    if result.max_relative_element_error is not None:
        lines.append(
            f"max relative element error: {result.max_relative_element_error:.3e}")
        lines.append(
            "max absolute element error: "
            f"{float(np.max(np.abs(result.element_errors))):.3e}")
    lines.append(f"off-diagonal fit residual (relative): {result.residual_offdiagonal:.3e}")
    lines.append(f"diagonal fit residual (relative): {result.residual_diagonal:.3e}")
    lines.append(f"design condition number: {result.condition_number:.6g}")
    if result.scale_factor is not None:
        lines.append(f"reference scale factor: {result.scale_factor:.10f}")
    for note in result.notes:
        lines.append(f"note: {note}")
    _atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Commands


def cmd_simulate(cfg: RunConfig, out: Path, threads: int) -> int:
    params = resolve_params(cfg)
    rng = np.random.default_rng(cfg.options.seed)
    _, signal_a, signal_b = _simulate_signals(cfg, params, rng)
    _export_simulation(cfg, signal_a, signal_b, out)
    print(f"simulation artifacts written to {out}")
    return 0


def cmd_tomograph(cfg: RunConfig, out: Path, threads: int) -> int:
    params = resolve_params(cfg)
    rng = np.random.default_rng(cfg.options.seed)
    rho0, signal_a, signal_b = _simulate_signals(cfg, params, rng)
    _export_simulation(cfg, signal_a, signal_b, out)

    design, cache_path, _ = _design_with_cache(cfg, params, out, threads)
    _write_json(out / "design_summary.json", _design_summary(design, cache_path))

    result = tomograph_state(cfg.system, rho0, params, design=design,
                             signal_a=signal_a, signal_b=signal_b,
                             normalize=cfg.options.reference_normalize)
    _write_json(out / "result.json", result.to_json_dict())
    _write_report(out / "report.txt", result, cfg)

    if result.fidelity is None:
        print("fidelity skipped:", "; ".join(result.notes) or "no reference")
    else:
        print(f"fidelity: {result.fidelity:.8f}   "
              f"max relative element error: {result.max_relative_element_error:.3e}")
    print(f"tomography artifacts written to {out}")
    return 0


def cmd_basis(cfg: RunConfig, out: Path, threads: int) -> int:
    params = resolve_params(cfg)
    design, cache_path, hit = _design_with_cache(cfg, params, out, threads)
    _write_json(out / "design_summary.json", _design_summary(design, cache_path))
    print(f"design matrix {design.matrix.shape[0]}x{design.matrix.shape[1]}, "
          f"rank {design.rank}/{len(design.labels)}, "
          f"condition number {design.condition_number:.6g}"
          + (" (cache hit)" if hit else ""))
    if not design.is_solvable:
        bad = (design.undetermined_labels or design.nullspace_labels
               or design.zero_labels)
        print("design does not determine these labels: "
              + ", ".join(format_label(l) for l in bad), file=sys.stderr)
        return 3
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spintomo",
        description="Simulate and invert two-dimensional state tomography "
                    "experiments on coupled spin-1/2 registers.",
    )
    parser.add_argument("command", choices=["simulate", "tomograph", "basis"])
    parser.add_argument("--config", required=True, help="path to a JSON run configuration")
    parser.add_argument("--out", default=None, help="output directory (default: from config)")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for design-matrix columns")
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )

    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg.options.seed = args.seed
        out = Path(args.out) if args.out is not None else Path(cfg.options.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        handler = {"simulate": cmd_simulate, "tomograph": cmd_tomograph,
                   "basis": cmd_basis}[args.command]
        return handler(cfg, out, max(1, args.threads))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NyquistError, DegenerateTransitionError, RankDeficiencyError,
            LineOverlapError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except SpinTomoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
