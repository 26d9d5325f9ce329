"""Command-line entry point: configuration, run orchestration, file output.

Subcommands: absorb, golden-rule, equilibrate, truncation-study,
dump-matrices. Runs are described by a small key = value configuration
file with optional [x]/[y]/[z] sections for per-axis bath parameters;
results are written as CSV plus a JSON metadata file, with matplotlib
figures rendered alongside unless --no-plot is given.

Exit status: 0 on success, 2 for configuration/validation errors, 3 for
numerical failures (divergence, non-convergence).
"""

from __future__ import annotations

import argparse
import json
import sys
import time as _time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .basis import (
    AXES,
    BasisSet,
    OperatorMatrix,
    dipole_operator_matrix,
    enumerate_basis,
    hamiltonian_matrix,
    position_operator_matrix,
    write_matrix_csv,
)
from .bath import BathSpec, pade_decomposition
from .errors import NumericalError
from .hierarchy import enumerate_indices
from .propagator import (
    HierarchyState,
    ModelContext,
    PropagatorConfig,
    boltzmann_initial,
    build_model,
    diagnostics,
    equilibrate,
    heom_rhs,
    save_checkpoint,
)
from .spectroscopy import (
    Spectrum,
    StickSpectrum,
    compute_response,
    golden_rule_spectrum,
    spectrum_from_response,
)


class ConfigError(ValueError):
    """Configuration file problem, annotated with a line number when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class RunConfig:
    """Validated parameters of one run."""

    n_max: int
    beta: float
    eta: dict[str, float]
    gamma: dict[str, float]
    pade_K: dict[str, int] = field(default_factory=lambda: {a: 1 for a in AXES})
    depth: int = 2
    truncation: str = "global"
    dt: float = 0.1
    n_steps: int = 3000
    terminator_mode: str = "eq8"
    dipole_radial_mode: str = "unit"
    mu0: float = 1.0
    apodization_rate: float | None = None
    components: tuple[str, ...] = ("zz",)
    output_dir: str = "out"
    workers: int = 1
    equilibration_tolerance: float = 1e-9
    max_equilibration_steps: int = 200_000
    n_max_list: tuple[int, ...] = (2, 3, 4, 5)
    plot: bool = True

    def __post_init__(self):
        if self.n_max < 1:
            raise ConfigError(f"n_max must be >= 1, got {self.n_max}")
        if self.beta <= 0:
            raise ConfigError(f"beta must be > 0, got {self.beta}")
        for axis in AXES:
            if self.eta.get(axis) is None or self.eta[axis] < 0:
                raise ConfigError(f"eta must be >= 0 for axis {axis}")
            if self.gamma.get(axis) is None or self.gamma[axis] <= 0:
                raise ConfigError(f"gamma must be > 0 for axis {axis}")
            if self.pade_K.get(axis) is None or self.pade_K[axis] < 0:
                raise ConfigError(f"pade_k must be >= 0 for axis {axis}")
        if self.depth < 0:
            raise ConfigError(f"depth must be >= 0, got {self.depth}")
        if self.truncation not in ("global", "per_bath"):
            raise ConfigError(f"truncation must be global or per_bath, got {self.truncation!r}")
        if self.dt <= 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if self.n_steps < 1:
            raise ConfigError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.terminator_mode not in ("eq8", "zero"):
            raise ConfigError(f"terminator must be eq8 or zero, got {self.terminator_mode!r}")
        if self.dipole_radial_mode not in ("unit", "linear"):
            raise ConfigError(
                f"dipole_radial_mode must be unit or linear, got {self.dipole_radial_mode!r}"
            )
        if self.apodization_rate is not None and self.apodization_rate < 0:
            raise ConfigError("apodization_rate must be >= 0 or auto")
        for comp in self.components:
            if len(comp) != 2 or any(c not in AXES for c in comp):
                raise ConfigError(f"component {comp!r} must be two of x, y, z")
        if not self.components:
            raise ConfigError("at least one component is required")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.equilibration_tolerance <= 0:
            raise ConfigError("equilibration_tolerance must be > 0")
        if self.max_equilibration_steps < 1:
            raise ConfigError("max_equilibration_steps must be >= 1")
        if any(n < 1 for n in self.n_max_list):
            raise ConfigError("n_max_list entries must be >= 1")

    def resolved_apodization_rate(self) -> float:
        # default window: decay to e^-5 at the end of the propagation
        if self.apodization_rate is not None:
            return self.apodization_rate
        return 5.0 / (self.n_steps * self.dt)


_GLOBAL_KEYS = {
    "n_max": int,
    "beta": float,
    "eta": float,
    "gamma": float,
    "pade_k": int,
    "depth": int,
    "truncation": str,
    "dt": float,
    "n_steps": int,
    "terminator": str,
    "dipole_radial_mode": str,
    "mu0": float,
    "apodization_rate": "auto_or_float",
    "components": "csv_str",
    "output_dir": str,
    "workers": int,
    "equilibration_tolerance": float,
    "max_equilibration_steps": int,
    "n_max_list": "csv_int",
    "plot": "bool",
}

_AXIS_KEYS = {"eta": float, "gamma": float, "pade_k": int}

_REQUIRED = ("n_max", "beta", "eta", "gamma")


def _convert(key: str, raw: str, kind, line: int):
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        if kind == "bool":
            if raw.lower() in ("true", "yes", "1", "on"):
                return True
            if raw.lower() in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if kind == "auto_or_float":
            return None if raw.lower() == "auto" else float(raw)
        if kind == "csv_str":
            return tuple(part.strip() for part in raw.split(",") if part.strip())
        if kind == "csv_int":
            return tuple(int(part) for part in raw.split(","))
    except ValueError:
        raise ConfigError(f"malformed value for {key}: {raw!r}", line=line) from None
    raise AssertionError(f"unhandled kind {kind}")


def parse_config(text: str) -> RunConfig:
    """Parse key = value configuration text into a validated RunConfig.

    Per-axis overrides live in [x], [y], [z] sections; a bare eta/gamma/
    pade_k at top level applies to all three axes. Unknown keys and
    sections are rejected with their line number.
    """
    globals_seen: dict[str, object] = {}
    axis_seen: dict[str, dict[str, object]] = {a: {} for a in AXES}
    section: str | None = None

    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in AXES:
                raise ConfigError(f"unknown section [{name}]", line=lineno)
            section = name
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value, got {raw_line.strip()!r}", line=lineno)
        key, _, raw = line.partition("=")
        key = key.strip().lower()
        raw = raw.strip()
        if not raw:
            raise ConfigError(f"missing value for {key}", line=lineno)
        if section is None:
            if key not in _GLOBAL_KEYS:
                raise ConfigError(f"unknown key {key!r}", line=lineno)
            globals_seen[key] = _convert(key, raw, _GLOBAL_KEYS[key], lineno)
        else:
            if key not in _AXIS_KEYS:
                raise ConfigError(f"unknown key {key!r} in section [{section}]", line=lineno)
            axis_seen[section][key] = _convert(key, raw, _AXIS_KEYS[key], lineno)

    for key in _REQUIRED:
        if key in globals_seen:
            continue
        if key in _AXIS_KEYS and all(key in axis_seen[a] for a in AXES):
            continue
        raise ConfigError(f"missing required key {key!r}")

    def per_axis(key: str, fallback):
        base = globals_seen.get(key, fallback)
        return {a: axis_seen[a].get(key, base) for a in AXES}

    kwargs: dict = {
        "n_max": globals_seen["n_max"],
        "beta": globals_seen["beta"],
        "eta": per_axis("eta", None),
        "gamma": per_axis("gamma", None),
        "pade_K": per_axis("pade_k", 1),
    }
    passthrough = {
        "depth": "depth",
        "truncation": "truncation",
        "dt": "dt",
        "n_steps": "n_steps",
        "terminator": "terminator_mode",
        "dipole_radial_mode": "dipole_radial_mode",
        "mu0": "mu0",
        "apodization_rate": "apodization_rate",
        "components": "components",
        "output_dir": "output_dir",
        "workers": "workers",
        "equilibration_tolerance": "equilibration_tolerance",
        "max_equilibration_steps": "max_equilibration_steps",
        "n_max_list": "n_max_list",
        "plot": "plot",
    }
    for cfg_key, attr in passthrough.items():
        if cfg_key in globals_seen:
            kwargs[attr] = globals_seen[cfg_key]
    return RunConfig(**kwargs)


def serialize_config(config: RunConfig) -> str:
    """Canonical text form; parse_config(serialize_config(c)) == c."""
    lines = [
        f"n_max = {config.n_max}",
        f"beta = {config.beta!r}",
    ]
    for key, values in (("eta", config.eta), ("gamma", config.gamma),
                        ("pade_k", config.pade_K)):
        first = values[AXES[0]]
        if all(values[a] == first for a in AXES):
            lines.append(f"{key} = {first!r}" if isinstance(first, float) else f"{key} = {first}")
    lines += [
        f"depth = {config.depth}",
        f"truncation = {config.truncation}",
        f"dt = {config.dt!r}",
        f"n_steps = {config.n_steps}",
        f"terminator = {config.terminator_mode}",
        f"dipole_radial_mode = {config.dipole_radial_mode}",
        f"mu0 = {config.mu0!r}",
        "apodization_rate = auto"
        if config.apodization_rate is None
        else f"apodization_rate = {config.apodization_rate!r}",
        f"components = {','.join(config.components)}",
        f"output_dir = {config.output_dir}",
        f"workers = {config.workers}",
        f"equilibration_tolerance = {config.equilibration_tolerance!r}",
        f"max_equilibration_steps = {config.max_equilibration_steps}",
        f"n_max_list = {','.join(str(n) for n in config.n_max_list)}",
        f"plot = {'true' if config.plot else 'false'}",
    ]
    for axis in AXES:
        overrides = []
        for key, values in (("eta", config.eta), ("gamma", config.gamma),
                            ("pade_k", config.pade_K)):
            if not all(values[a] == values[AXES[0]] for a in AXES):
                value = values[axis]
                overrides.append(
                    f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}"
                )
        if overrides:
            lines.append(f"[{axis}]")
            lines.extend(overrides)
    return "\n".join(lines) + "\n"


@dataclass
class _ModelBundle:
    basis: BasisSet
    model: ModelContext
    dipoles: dict[str, OperatorMatrix]
    propagator_config: PropagatorConfig


def build_bundle(config: RunConfig, n_max: int | None = None) -> _ModelBundle:
    """Construct operators, hierarchy and model for a RunConfig."""
    basis = enumerate_basis(n_max if n_max is not None else config.n_max)
    h_matrix = hamiltonian_matrix(basis)
    coupling = {a: position_operator_matrix(basis, a, "linear") for a in AXES}
    dipoles = {
        a: dipole_operator_matrix(basis, a, config.dipole_radial_mode, config.mu0)
        for a in AXES
    }
    space = enumerate_indices(config.pade_K, config.depth, config.truncation)
    baths = {
        a: BathSpec(eta=config.eta[a], gamma=config.gamma[a], beta=config.beta)
        for a in AXES
    }
    schemes = {a: pade_decomposition(config.pade_K[a]) for a in AXES}
    model = build_model(h_matrix, coupling, baths, schemes, space)
    prop = PropagatorConfig(
        dt=config.dt,
        n_steps=config.n_steps,
        terminator_mode=config.terminator_mode,
        equilibration_tolerance=config.equilibration_tolerance,
        max_equilibration_steps=config.max_equilibration_steps,
    )
    return _ModelBundle(basis=basis, model=model, dipoles=dipoles,
                        propagator_config=prop)


def _write_spectrum_csv(path: Path, spectrum: Spectrum) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("omega,intensity\n")
        for w, s in zip(spectrum.frequencies, spectrum.intensities):
            fh.write(f"{w:.17g},{s:.17g}\n")


def _write_response_csv(path: Path, trace) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("time,real,imag\n")
        for t, v in zip(trace.times, trace.values):
            fh.write(f"{t:.17g},{v.real:.17g},{v.imag:.17g}\n")


def _write_sticks_csv(path: Path, sticks: StickSpectrum) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("omega,weight,n,n_prime,series\n")
        for line in sticks.lines:
            fh.write(
                f"{line.omega:.17g},{line.weight:.17g},{line.n},{line.n_prime},{line.series}\n"
            )


def _config_as_dict(config: RunConfig) -> dict:
    out = {}
    for f in fields(config):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = list(value)
        out[f.name] = value
    return out


def run_absorption(config: RunConfig, out_dir: Path) -> dict:
    """Five-step absorption pipeline; writes CSVs, metadata and figures.

    Returns the metadata dictionary (also written to metadata.json).
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    t_start = _time.perf_counter()
    bundle = build_bundle(config)
    model, basis = bundle.model, bundle.basis

    initial = boltzmann_initial(basis, config.beta, model.space)
    eq_state = equilibrate(initial, model, bundle.propagator_config,
                           workers=config.workers)
    eq_diag = diagnostics(eq_state)
    residual = float(
        np.max(np.abs(heom_rhs(eq_state, model, config.terminator_mode,
                               config.workers).matrices))
    )
    eq_wall = _time.perf_counter() - t_start

    apod = config.resolved_apodization_rate()
    metadata = {
        "parameters": _config_as_dict(config),
        "version": __version__,
        "apodization_rate": apod,
        "raw_bin_width": 2.0 * np.pi / (config.n_steps * config.dt),
        "equilibration": {
            "time_reached": eq_state.time,
            "residual": residual,
            "residual_tolerance": config.equilibration_tolerance,
            "trace": [eq_diag["trace"].real, eq_diag["trace"].imag],
            "trace_drift": abs(eq_diag["trace"] - 1.0),
            "hermiticity_defect": eq_diag["hermiticity_defect"],
            "wall_seconds": eq_wall,
        },
        "components": {},
    }

    spectra: dict[str, Spectrum] = {}
    stick_sets: dict[str, StickSpectrum] = {}
    for comp in config.components:
        alpha_out, alpha_in = comp[0], comp[1]
        t0 = _time.perf_counter()
        trace = compute_response(
            eq_state,
            model,
            mu_in=bundle.dipoles[alpha_in],
            mu_out=bundle.dipoles[alpha_out],
            config=bundle.propagator_config,
            workers=config.workers,
            component=(alpha_out, alpha_in),
        )
        spectrum = spectrum_from_response(trace, apod)
        sticks = golden_rule_spectrum(
            basis, config.beta, bundle.dipoles[alpha_out], bundle.dipoles[alpha_in],
            component=(alpha_out, alpha_in),
        )
        _write_response_csv(out_dir / f"response_{comp}.csv", trace)
        _write_spectrum_csv(out_dir / f"spectrum_{comp}.csv", spectrum)
        _write_sticks_csv(out_dir / f"golden_rule_{comp}.csv", sticks)
        spectra[comp] = spectrum
        stick_sets[comp] = sticks
        metadata["components"][comp] = {
            "response_c0": [trace.values[0].real, trace.values[0].imag],
            "wall_seconds": _time.perf_counter() - t0,
        }

    with open(out_dir / "metadata.json", "w") as fh:
        json.dump(metadata, fh, indent=2, sort_keys=True)

    if config.plot:
        from .plotting import render_absorption_report

        render_absorption_report(out_dir, spectra, stick_sets)
    return metadata


def run_golden_rule(config: RunConfig, out_dir: Path) -> None:
    """Golden-rule stick spectra for each requested component."""
    out_dir.mkdir(parents=True, exist_ok=True)
    bundle = build_bundle(config)
    stick_sets = {}
    for comp in config.components:
        alpha_out, alpha_in = comp[0], comp[1]
        sticks = golden_rule_spectrum(
            bundle.basis, config.beta, bundle.dipoles[alpha_out],
            bundle.dipoles[alpha_in], component=(alpha_out, alpha_in),
        )
        _write_sticks_csv(out_dir / f"golden_rule_{comp}.csv", sticks)
        stick_sets[comp] = sticks
    if config.plot:
        from .plotting import render_stick_report

        render_stick_report(out_dir, stick_sets)


def run_equilibrate(config: RunConfig, out_dir: Path) -> None:
    """Relax to the correlated equilibrium; write checkpoint + diagnostics."""
    out_dir.mkdir(parents=True, exist_ok=True)
    bundle = build_bundle(config)
    initial = boltzmann_initial(bundle.basis, config.beta, bundle.model.space)
    eq_state = equilibrate(initial, bundle.model, bundle.propagator_config,
                           workers=config.workers)
    diag = diagnostics(eq_state)
    header = {
        "n_max": config.n_max,
        "beta": config.beta,
        "eta": config.eta,
        "gamma": config.gamma,
        "pade_K": config.pade_K,
        "terminator_mode": config.terminator_mode,
    }
    save_checkpoint(out_dir / "equilibrium.npz", eq_state, header)
    with open(out_dir / "equilibrium.json", "w") as fh:
        json.dump(
            {
                "time_reached": eq_state.time,
                "trace": [diag["trace"].real, diag["trace"].imag],
                "hermiticity_defect": diag["hermiticity_defect"],
                "populations": [float(p) for p in diag["populations"]],
            },
            fh,
            indent=2,
            sort_keys=True,
        )


def run_truncation_study(config: RunConfig, out_dir: Path,
                         n_max_list: tuple[int, ...] | None = None) -> dict:
    """Absorption at several basis truncations, normalized for comparison.

    Writes one normalized spectrum CSV per n_max and a report with the
    pairwise sup-norm differences between consecutive truncations.
    """
    n_list = tuple(n_max_list if n_max_list is not None else config.n_max_list)
    if list(n_list) != sorted(n_list) or len(set(n_list)) != len(n_list):
        raise ConfigError(f"n_max_list must be strictly ascending, got {n_list}")
    out_dir.mkdir(parents=True, exist_ok=True)
    comp = config.components[0]
    alpha_out, alpha_in = comp[0], comp[1]
    apod = config.resolved_apodization_rate()

    normalized: dict[int, Spectrum] = {}
    for n_max in n_list:
        bundle = build_bundle(config, n_max=n_max)
        initial = boltzmann_initial(bundle.basis, config.beta, bundle.model.space)
        eq_state = equilibrate(initial, bundle.model, bundle.propagator_config,
                               workers=config.workers)
        trace = compute_response(
            eq_state,
            bundle.model,
            mu_in=bundle.dipoles[alpha_in],
            mu_out=bundle.dipoles[alpha_out],
            config=bundle.propagator_config,
            workers=config.workers,
            component=(alpha_out, alpha_in),
        )
        spectrum = spectrum_from_response(trace, apod)
        peak = float(np.max(np.abs(spectrum.intensities)))
        normalized[n_max] = Spectrum(
            frequencies=spectrum.frequencies,
            intensities=spectrum.intensities / peak,
            metadata=dict(spectrum.metadata, normalized=True, n_max=n_max),
        )
        _write_spectrum_csv(out_dir / f"spectrum_{comp}_nmax{n_max}.csv",
                            normalized[n_max])

    differences = {}
    for a, b in zip(n_list[:-1], n_list[1:]):
        diff = float(np.max(np.abs(normalized[a].intensities - normalized[b].intensities)))
        differences[f"{a}->{b}"] = diff
    report = {
        "component": comp,
        "n_max_list": list(n_list),
        "consecutive_sup_differences": differences,
        "beta": config.beta,
        "eta": config.eta,
    }
    with open(out_dir / "truncation_report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    if config.plot:
        from .plotting import render_truncation_report

        render_truncation_report(out_dir, normalized, comp)
    return report


def run_dump_matrices(config: RunConfig, out_dir: Path) -> None:
    """CSV dumps of the Hamiltonian, coupling and dipole operators."""
    out_dir.mkdir(parents=True, exist_ok=True)
    basis = enumerate_basis(config.n_max)
    write_matrix_csv(hamiltonian_matrix(basis), out_dir / "H.csv")
    for axis in AXES:
        write_matrix_csv(position_operator_matrix(basis, axis, "linear"),
                         out_dir / f"V_{axis}.csv")
        write_matrix_csv(
            dipole_operator_matrix(basis, axis, config.dipole_radial_mode, config.mu0),
            out_dir / f"mu_{axis}.csv",
        )


def _load_config(args) -> RunConfig:
    path = Path(args.config)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    config = parse_config(text)
    overrides = {}
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    if getattr(args, "out", None) is not None:
        overrides["output_dir"] = args.out
    if getattr(args, "no_plot", False):
        overrides["plot"] = False
    return replace(config, **overrides) if overrides else config


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="atomheom",
        description="Dissipative hydrogen absorption spectra via a bath hierarchy",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, workers=True):
        p.add_argument("--config", required=True, help="path to the run configuration")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--no-plot", action="store_true", help="skip figure rendering")
        if workers:
            p.add_argument("--workers", type=int, default=None,
                           help="parallel workers for the hierarchy map")

    add_common(sub.add_parser("absorb", help="equilibrate, perturb and transform"))
    add_common(sub.add_parser("golden-rule", help="zero-coupling stick spectrum"),
               workers=False)
    add_common(sub.add_parser("equilibrate", help="relax to thermal equilibrium"))
    study = sub.add_parser("truncation-study", help="basis-size convergence sweep")
    add_common(study)
    study.add_argument("--n-max-list", default=None,
                       help="comma-separated ascending n_max values")
    add_common(sub.add_parser("dump-matrices", help="write operator CSVs"),
               workers=False)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _load_config(args)
        out_dir = Path(config.output_dir)
        if args.command == "absorb":
            run_absorption(config, out_dir)
        elif args.command == "golden-rule":
            run_golden_rule(config, out_dir)
        elif args.command == "equilibrate":
            run_equilibrate(config, out_dir)
        elif args.command == "truncation-study":
            n_list = None
            if args.n_max_list:
                n_list = tuple(int(part) for part in args.n_max_list.split(","))
            run_truncation_study(config, out_dir, n_list)
        elif args.command == "dump-matrices":
            run_dump_matrices(config, out_dir)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            with open(out_dir / "failure.json", "w") as fh:
                json.dump({"error": str(exc), "type": type(exc).__name__}, fh, indent=2)
        except Exception:
            pass
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
