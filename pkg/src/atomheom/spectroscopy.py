"""Linear absorption: response functions, spectra and the golden-rule reference.

The absorption spectrum along component (alpha_out, alpha_in) is obtained in
five steps: (i) relax the hierarchy to its correlated thermal equilibrium,
(ii) hit every member with the dipole commutator mu_in^x, (iii) propagate
the perturbed hierarchy, (iv) record C(t) = Tr{mu_out rho_0(t)}, and
(v) apodize and Fourier transform, keeping I(w) = Im[i C^hat(w)] on the
non-negative frequency grid.

The zero-coupling reference is the golden-rule stick spectrum: one line per
allowed (n -> n') level pair at the Rydberg frequency, weighted by the
dipole matrix elements and Boltzmann population difference, aggregated over
degenerate sublevels and labelled by series (Lyman, Balmer, ...).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import exp

import numpy as np
from numpy.typing import NDArray

from .basis import BasisSet, OperatorMatrix, eigenenergy
from .propagator import (
    HierarchyState,
    ModelContext,
    PropagatorConfig,
    propagate,
)

ZERO_PAD_FACTOR = 4

SERIES_NAMES = {1: "Lyman", 2: "Balmer", 3: "Paschen", 4: "Brackett", 5: "Pfund"}

_WEIGHT_FLOOR = 1e-14


@dataclass(frozen=True)
class ResponseTrace:
    """Complex dipole response C(t) on a uniform time grid."""

    times: NDArray[np.float64] = field(repr=False)
    values: NDArray[np.complex128] = field(repr=False)
    component: tuple[str, str]

    def __post_init__(self):
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must have matching shapes")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


@dataclass(frozen=True)
class Spectrum:
    """Real absorption intensity on a non-negative frequency grid."""

    frequencies: NDArray[np.float64] = field(repr=False)
    intensities: NDArray[np.float64] = field(repr=False)
    metadata: dict = field(default_factory=dict)

    @property
    def grid_spacing(self) -> float:
        return float(self.frequencies[1] - self.frequencies[0])


@dataclass(frozen=True)
class StickLine:
    omega: float
    weight: float
    n: int
    n_prime: int
    series: str


@dataclass(frozen=True)
class StickSpectrum:
    """Discrete golden-rule lines aggregated over degenerate sublevels."""

    lines: tuple[StickLine, ...]
    partition: float
    component: tuple[str, str]


def rydberg_frequency(n: int, n_prime: int) -> float:
    """Transition frequency (1/2)(1/n^2 - 1/n'^2) for n' > n >= 1."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if n_prime <= n:
        raise ValueError(f"n' must exceed n, got n={n}, n'={n_prime}")
    return 0.5 * (1.0 / n**2 - 1.0 / n_prime**2)


def series_label(n: int) -> str:
    return SERIES_NAMES.get(n, f"n={n}")


def golden_rule_spectrum(basis: BasisSet, beta: float, mu_out: OperatorMatrix,
                         mu_in: OperatorMatrix,
                         component: tuple[str, str] = ("z", "z")) -> StickSpectrum:
    """Stick spectrum from the dipole matrices and Boltzmann populations.

    Lines sharing the same (n, n') level pair are merged with summed
    weights; weights below 1e-14 are dropped, so the selection rules emerge
    from the dipole matrices rather than being imposed.
    """
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    energies = np.array([eigenenergy(s.n) for s in basis.states])
    shifted = np.exp(-beta * (energies - energies.min()))
    partition_shifted = shifted.sum()
    # e^{-beta E_n}/Z is shift-invariant; report Z itself separately
    partition = float(np.sum(np.exp(-beta * energies)))
    populations = shifted / partition_shifted

    out = mu_out.entries
    inn = mu_in.entries
    merged: dict[tuple[int, int], float] = {}
    for i, si in enumerate(basis.states):
        for f, sf in enumerate(basis.states):
            if sf.n <= si.n:
                continue
            weight = out[f, i] * inn[i, f] * (populations[i] - populations[f])
            if weight == 0.0:
                continue
            key = (si.n, sf.n)
            merged[key] = merged.get(key, 0.0) + weight
    lines = tuple(
        StickLine(
            omega=rydberg_frequency(n, n_prime),
            weight=w,
            n=n,
            n_prime=n_prime,
            series=series_label(n),
        )
        for (n, n_prime), w in sorted(merged.items())
        if abs(w) >= _WEIGHT_FLOOR
    )
    return StickSpectrum(lines=lines, partition=partition, component=component)


def apply_dipole_commutator(state: HierarchyState, mu: OperatorMatrix) -> HierarchyState:
    """Replace every member rho by mu rho - rho mu."""
    if mu.basis.dimension != state.dimension:
        raise ValueError(
            f"dipole dimension {mu.basis.dimension} does not match state "
            f"dimension {state.dimension}"
        )
    m = mu.entries.astype(np.complex128)
    matrices = m @ state.matrices - state.matrices @ m
    return HierarchyState(space=state.space, matrices=matrices, time=state.time)


def compute_response(eq_state: HierarchyState, model: ModelContext,
                     mu_in: OperatorMatrix, mu_out: OperatorMatrix,
                     config: PropagatorConfig, workers: int = 1,
                     component: tuple[str, str] = ("z", "z")) -> ResponseTrace:
    """Perturb the equilibrated hierarchy and record Tr{mu_out rho_0(t)}."""
    perturbed = apply_dipole_commutator(eq_state, mu_in)
    perturbed.time = 0.0
    n_samples = config.n_steps + 1
    values = np.empty(n_samples, dtype=np.complex128)
    mu_c = mu_out.entries.astype(np.complex128)

    def record(step: int, state: HierarchyState):
        values[step] = np.einsum("ij,ji->", mu_c, state.zeroth)

    propagate(perturbed, model, config, workers=workers, observer=record)
    times = np.arange(n_samples) * config.dt
    return ResponseTrace(times=times, values=values, component=component)


def one_sided_transform(trace: ResponseTrace, apodization_rate: float,
                        pad_factor: int = ZERO_PAD_FACTOR):
    """Apodized one-sided Fourier transform on the zero-padded grid.

    Returns (frequencies, transform) with transform_j = dt * sum_n
    C(t_n) e^{-a t_n} e^{+i w_j t_n} for w_j = 2 pi j / (n_fft dt),
    j = 0 .. n_fft // 2.
    """
    if apodization_rate < 0:
        raise ValueError("apodization_rate must be >= 0")
    dt = trace.dt
    windowed = trace.values * np.exp(-apodization_rate * trace.times)
    n_fft = pad_factor * (len(trace.values) - 1)
    if n_fft < len(windowed):
        n_fft = len(windowed)
    # ifft carries the e^{+i w t} kernel; undo its 1/N normalization
    transform = n_fft * np.fft.ifft(windowed, n=n_fft) * dt
    keep = n_fft // 2 + 1
    frequencies = 2.0 * np.pi * np.arange(keep) / (n_fft * dt)
    return frequencies, transform[:keep]


def spectrum_from_response(trace: ResponseTrace, apodization_rate: float,
                           pad_factor: int = ZERO_PAD_FACTOR,
                           metadata: dict | None = None) -> Spectrum:
    """Absorption intensity I(w) = Im[i C^hat(w)] on the padded grid."""
    frequencies, transform = one_sided_transform(trace, apodization_rate, pad_factor)
    meta = {
        "component": "".join(trace.component),
        "apodization_rate": apodization_rate,
        "apodization_half_width": apodization_rate,
        "raw_bin_width": 2.0 * np.pi / ((len(trace.values) - 1) * trace.dt),
        "pad_factor": pad_factor,
    }
    if metadata:
        meta.update(metadata)
    return Spectrum(frequencies=frequencies, intensities=transform.real.copy(),
                    metadata=meta)


def convolve_sticks(sticks: StickSpectrum, width: float,
                    grid: NDArray[np.float64], scale: float = 1.0) -> Spectrum:
    """Sum of unit-area Lorentzians of the given half-width at each line.

    A unit-weight line peaks at 1/(pi width); scale multiplies everything
    (used to overlay golden-rule references on hierarchy spectra).
    """
    if width <= 0:
        raise ValueError(f"width must be > 0, got {width}")
    grid = np.asarray(grid, dtype=float)
    intensities = np.zeros_like(grid)
    for line in sticks.lines:
        intensities += line.weight * (width / np.pi) / ((grid - line.omega) ** 2 + width**2)
    intensities *= scale
    return Spectrum(
        frequencies=grid.copy(),
        intensities=intensities,
        metadata={"width": width, "scale": scale, "component": "".join(sticks.component)},
    )


def find_peaks(spectrum: Spectrum, threshold: float = 0.1) -> list[tuple[float, float]] :
    """Local maxima above threshold * global maximum, as (omega, height)."""
    y = spectrum.intensities
    x = spectrum.frequencies
    floor = threshold * y.max()
    peaks = []
    for i in range(1, len(y) - 1):
        if y[i] >= y[i - 1] and y[i] > y[i + 1] and y[i] >= floor:
            peaks.append((float(x[i]), float(y[i])))
    return peaks


def peak_half_width(spectrum: Spectrum, omega_center: float,
                    window: float = 0.15) -> float:
    """Half width at half maximum of the peak nearest omega_center.

    The crossings of the half-maximum level are located by linear
    interpolation on the frequency grid within +- window of the peak.
    """
    x = spectrum.frequencies
    y = spectrum.intensities
    mask = (x >= omega_center - window) & (x <= omega_center + window)
    if not mask.any():
        raise ValueError("window contains no grid points")
    xs, ys = x[mask], y[mask]
    ipk = int(np.argmax(ys))
    half = ys[ipk] / 2.0

    def cross(idx_range):
        prev = ipk
        for i in idx_range:
            if ys[i] <= half:
                # interpolate between i and prev
                x0, y0, x1, y1 = xs[i], ys[i], xs[prev], ys[prev]
                return x0 + (half - y0) * (x1 - x0) / (y1 - y0)
            prev = i
        return None

    left = cross(range(ipk - 1, -1, -1))
    right = cross(range(ipk + 1, len(ys)))
    if left is None or right is None:
        raise ValueError(
            f"half-maximum crossings not bracketed within window {window} "
            f"around {omega_center}"
        )
    return 0.5 * (right - left)
