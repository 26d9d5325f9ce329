"""Hydrogenic eigenbasis and dense operator matrices.

Builds the bound states |n, l, m> of the attractive 1/r potential (atomic
units, nuclear charge 1) using real-valued spherical harmonics, and
assembles the system operators needed by the propagator: the diagonal
Hamiltonian, the bath-coupling operators V_x, V_y, V_z (position
components) and the dipole operators mu_x, mu_y, mu_z.

All matrices are real in the real-harmonic basis and are symmetrized after
assembly. Angular integrals use a product Gauss-Legendre x trapezoid
quadrature that is exact for the polynomial integrands involved; radial
integrals use adaptive quadrature on a truncated interval chosen so the
neglected tail is below 1e-14.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial, pi, sqrt

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import quad
from scipy.special import eval_genlaguerre, lpmv

from .errors import QuadratureError

AXES = ("x", "y", "z")

RYDBERG = 0.5  # atomic units

_PRACTICAL_N_MAX = 10


@dataclass(frozen=True, order=True)
class QuantumNumbers:
    """One hydrogenic state (n, l, m) in the real-harmonic convention."""

    n: int
    l: int
    m: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"principal quantum number must be >= 1, got {self.n}")
        if not 0 <= self.l <= self.n - 1:
            raise ValueError(f"l must satisfy 0 <= l <= n-1, got (n={self.n}, l={self.l})")
        if abs(self.m) > self.l:
            raise ValueError(f"|m| must not exceed l, got (l={self.l}, m={self.m})")

    @property
    def label(self) -> str:
        return f"{self.n}.{self.l}.{self.m}"


@dataclass(frozen=True)
class BasisSet:
    """All bound states with n <= n_max in (n, l, m) lexicographic order."""

    n_max: int
    states: tuple[QuantumNumbers, ...]

    @property
    def dimension(self) -> int:
        return len(self.states)

    def index(self, qn: QuantumNumbers) -> int:
        return self.states.index(qn)

    def labels(self) -> list[str]:
        return [s.label for s in self.states]


@dataclass(frozen=True)
class OperatorMatrix:
    """Dense real symmetric matrix of a system operator in a BasisSet."""

    basis: BasisSet
    entries: NDArray[np.float64] = field(repr=False)
    label: str

    def __post_init__(self):
        d = self.basis.dimension
        if self.entries.shape != (d, d):
            raise ValueError(
                f"entries shape {self.entries.shape} does not match basis dimension {d}"
            )
        self.entries.setflags(write=False)


def enumerate_basis(n_max: int) -> BasisSet:
    """Enumerate all (n, l, m) with n <= n_max.

    The ordering is lexicographic in (n, l, m) and the dimension is
    sum_{n<=n_max} n^2 (55 states for n_max = 5).
    """
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    if n_max > _PRACTICAL_N_MAX:
        warnings.warn(
            f"n_max = {n_max} exceeds the validated range (<= {_PRACTICAL_N_MAX}); "
            "radial quadrature may need tighter settings",
            stacklevel=2,
        )
    states = tuple(
        QuantumNumbers(n, l, m)
        for n in range(1, n_max + 1)
        for l in range(n)
        for m in range(-l, l + 1)
    )
    return BasisSet(n_max=n_max, states=states)


def eigenenergy(n: int) -> float:
    """Bound-state energy -R/n^2 with R = 1/2 in atomic units."""
    if n < 1:
        raise ValueError(f"principal quantum number must be >= 1, got {n}")
    return -RYDBERG / (n * n)


def radial_wavefunction(n: int, l: int, r) -> np.ndarray | float:
    """Normalized radial function R_nl(r) for nuclear charge 1.

    Satisfies integral_0^inf R_nl(r)^2 r^2 dr = 1. Accepts scalar or array r.
    """
    QuantumNumbers(n, l, 0)
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radius must be non-negative")
    # (n-l-1)! / (n+l)! computed as an exact integer ratio before the sqrt
    norm = sqrt((2.0 / n) ** 3 * factorial(n - l - 1) / (2 * n * factorial(n + l)))
    x = 2.0 * r / n
    value = norm * np.exp(-x / 2.0) * x**l * eval_genlaguerre(n - l - 1, 2 * l + 1, x)
    return value if value.ndim else float(value)


def _harmonic_norm(l: int, m_abs: int) -> float:
    return sqrt((2 * l + 1) / (4.0 * pi) * factorial(l - m_abs) / factorial(l + m_abs))


def real_spherical_harmonic(l: int, m: int, theta, phi) -> np.ndarray | float:
    """Real spherical harmonic: cos(|m| phi) branch for m > 0, sin for m < 0.

    The Condon-Shortley phase carried by scipy's associated Legendre
    functions is cancelled so that e.g. Y_{1,1} is positive along +x.
    """
    if l < 0 or abs(m) > l:
        raise ValueError(f"invalid harmonic indices (l={l}, m={m})")
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    m_abs = abs(m)
    leg = (-1.0) ** m_abs * lpmv(m_abs, l, np.cos(theta))
    if m == 0:
        value = _harmonic_norm(l, 0) * leg
    elif m > 0:
        value = sqrt(2.0) * _harmonic_norm(l, m_abs) * np.cos(m_abs * phi) * leg
    else:
        value = sqrt(2.0) * _harmonic_norm(l, m_abs) * np.sin(m_abs * phi) * leg
    value = np.asarray(value)
    return value if value.ndim else float(value)


@lru_cache(maxsize=None)
def radial_integral(n: int, l: int, n2: int, l2: int, power: int) -> float:
    """integral_0^inf R_nl(r) r^power R_{n2 l2}(r) r^2 dr by adaptive quadrature.

    power = 1 gives the position matrix element, power = 0 the radial
    overlap used by the unit-dipole convention.
    """
    QuantumNumbers(n, l, 0)
    QuantumNumbers(n2, l2, 0)
    if power not in (0, 1):
        raise ValueError(f"power must be 0 or 1, got {power}")
    # R_nl decays as exp(-r/n); 40 n^2 bounds the tail below 1e-14
    r_cut = 40.0 * max(n, n2) ** 2

    def integrand(r):
        return radial_wavefunction(n, l, r) * radial_wavefunction(n2, l2, r) * r ** (power + 2)

    value, abserr = quad(integrand, 0.0, r_cut, limit=400, epsabs=1e-13, epsrel=1e-12)
    if abserr > max(1e-10 * abs(value), 1e-10):
        raise QuadratureError(
            f"radial integral ({n},{l})->({n2},{l2}) power {power} did not converge "
            f"(error estimate {abserr:.3e})",
            achieved_error=abserr,
        )
    return value


class _AngularGrid:
    """Product quadrature grid over the sphere, exact for the integrands here.

    Gauss-Legendre in cos(theta) integrates polynomials up to degree
    2*n_theta - 1 exactly; the uniform periodic trapezoid rule in phi is
    exact for trigonometric polynomials of degree < n_phi.
    """

    def __init__(self, l_max: int):
        order = 2 * l_max + 2
        u, wu = np.polynomial.legendre.leggauss(order)
        phi = np.arange(order) * (2.0 * pi / order)
        self.theta, self.phi = np.broadcast_arrays(np.arccos(u)[:, None], phi[None, :])
        self.weights = np.broadcast_to(wu[:, None] * (2.0 * pi / order), self.theta.shape)
        sin_theta = np.sqrt(1.0 - u**2)[:, None]
        self.direction = {
            "x": sin_theta * np.cos(self.phi),
            "y": sin_theta * np.sin(self.phi),
            "z": np.broadcast_to(u[:, None], self.theta.shape),
        }

    def harmonic_table(self, lm_pairs) -> np.ndarray:
        return np.stack(
            [real_spherical_harmonic(l, m, self.theta, self.phi) for (l, m) in lm_pairs]
        )


def _angular_factors(basis: BasisSet, axis: str) -> NDArray[np.float64]:
    """<Y_{lm} | direction_cosine(axis) | Y_{l'm'}> for every basis pair."""
    lm_pairs = sorted({(s.l, s.m) for s in basis.states})
    grid = _AngularGrid(l_max=basis.n_max - 1)
    table = grid.harmonic_table(lm_pairs)
    weighted = grid.direction[axis] * grid.weights
    gaunt = np.einsum("aij,ij,bij->ab", table, weighted, table)
    pos = {lm: i for i, lm in enumerate(lm_pairs)}
    rows = [pos[(s.l, s.m)] for s in basis.states]
    return gaunt[np.ix_(rows, rows)]


def position_operator_matrix(
    basis: BasisSet, axis: str, radial_mode: str = "linear"
) -> OperatorMatrix:
    """Matrix of the position component (radial_mode 'linear') or of the bare
    direction cosine (radial_mode 'unit') along the given axis.

    'linear' produces the bath-coupling operators V_alpha = r * direction
    cosine; 'unit' produces dipole operators proportional to the direction
    cosine alone. Entries obey the one-photon selection rules: the z
    operator couples only Delta l = +-1 with Delta m = 0, the x and y
    operators only Delta l = +-1 with |m| changing by one.
    """
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}, got {axis!r}")
    if radial_mode not in ("linear", "unit"):
        raise ValueError(f"radial_mode must be 'linear' or 'unit', got {radial_mode!r}")
    power = 1 if radial_mode == "linear" else 0
    angular = _angular_factors(basis, axis)
    d = basis.dimension
    entries = np.zeros((d, d))
    for i, si in enumerate(basis.states):
        for j, sj in enumerate(basis.states):
            if j < i:
                continue
            if abs(angular[i, j]) < 1e-14:
                continue
            entries[i, j] = angular[i, j] * radial_integral(si.n, si.l, sj.n, sj.l, power)
    entries = entries + np.triu(entries, 1).T
    entries = 0.5 * (entries + entries.T)
    prefix = "V" if radial_mode == "linear" else "mu"
    return OperatorMatrix(basis=basis, entries=entries, label=f"{prefix}_{axis}")


def hamiltonian_matrix(basis: BasisSet) -> OperatorMatrix:
    """Diagonal Hamiltonian with entries -1/(2 n^2)."""
    entries = np.diag([eigenenergy(s.n) for s in basis.states]).astype(float)
    return OperatorMatrix(basis=basis, entries=entries, label="H_S")


def dipole_operator_matrix(basis: BasisSet, axis: str, radial_mode: str = "unit",
                           mu0: float = 1.0) -> OperatorMatrix:
    """Dipole operator mu_alpha = mu0 * (direction cosine), optionally with
    the r factor restored (radial_mode 'linear')."""
    op = position_operator_matrix(basis, axis, radial_mode=radial_mode)
    return OperatorMatrix(basis=basis, entries=mu0 * op.entries, label=f"mu_{axis}")


def write_matrix_csv(op: OperatorMatrix, path) -> None:
    """Dump an operator to CSV with a header row of 'n.l.m' state labels."""
    labels = op.basis.labels()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["state"] + labels)
        for label, row in zip(labels, op.entries):
            writer.writerow([label] + [f"{v:.17g}" for v in row])
