"""Drude baths and their exponential decomposition.

Each Cartesian axis carries an independent harmonic bath with the Drude
spectral density J(w) = (eta/pi) * gamma^2 w / (gamma^2 + w^2) (hbar = 1).
The finite-temperature part of the bath correlation function is expanded
with the [K-1/K] Pade spectrum decomposition of the Bose distribution,

    1/(e^x - 1)  ~=  1/x - 1/2 + sum_{k=1}^{K} 2 eta_k x / (x^2 + xi_k^2),

whose poles xi_k and weights eta_k come from two small symmetric
tridiagonal eigenvalue problems. The decomposition frequencies entering
the propagator are nu_0 = gamma and nu_k = xi_k / beta for k >= 1.

The corresponding dissipation operators acting on a hierarchy member are
scalar multiples of V^x (commutator with the coupling operator) plus, for
k = 0, a multiple of ([H, V])^o (anticommutator); this module computes the
three scalar coefficient groups.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import expm1

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import DegeneratePoleError, NumericalError

_K_MAX = 20


@dataclass(frozen=True)
class BathSpec:
    """Per-axis Drude parameters and the shared inverse temperature."""

    eta: float
    gamma: float
    beta: float

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError(f"coupling strength eta must be >= 0, got {self.eta}")
        if self.gamma <= 0:
            raise ValueError(f"inverse correlation time gamma must be > 0, got {self.gamma}")
        if self.beta <= 0:
            raise ValueError(f"inverse temperature beta must be > 0, got {self.beta}")


@dataclass(frozen=True)
class PadeScheme:
    """Dimensionless poles and weights of the [K-1/K] Bose decomposition."""

    K: int
    xi: tuple[float, ...]
    kappa: tuple[float, ...]

    def __post_init__(self):
        if len(self.xi) != self.K or len(self.kappa) != self.K:
            raise ValueError("pole/weight lists must have length K")
        if any(x <= 0 for x in self.xi) or any(w <= 0 for w in self.kappa):
            raise ValueError("poles and weights must be positive")
        if any(b <= a for a, b in zip(self.xi, self.xi[1:])):
            raise ValueError("poles must be strictly increasing")

    def frequencies(self, gamma: float, beta: float) -> np.ndarray:
        """Decomposition frequencies nu_k: nu_0 = gamma, nu_k = xi_k / beta."""
        return np.array([gamma] + [x / beta for x in self.xi])


@dataclass(frozen=True)
class ThetaCoefficients:
    """Scalar coefficients of the k-indexed dissipation operators.

    c0_fluct multiplies V^x and c0_diss multiplies ([H, V])^o in the k = 0
    operator; ck[k-1] multiplies V^x in the k >= 1 operators.
    """

    c0_fluct: float
    c0_diss: float
    ck: tuple[float, ...]


def drude_sdf(omega, eta: float, gamma: float):
    """Drude spectral density (eta/pi) gamma^2 omega / (gamma^2 + omega^2)."""
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    omega = np.asarray(omega, dtype=float)
    value = (eta / np.pi) * gamma**2 * omega / (gamma**2 + omega**2)
    return value if value.ndim else float(value)


def bose_function(x: float) -> float:
    """Exact Bose distribution 1/(e^x - 1); reference for the decomposition."""
    return 1.0 / expm1(x)


def pade_decomposition(K: int) -> PadeScheme:
    """Poles and weights of the [K-1/K] Pade approximant to the Bose function.

    Follows the spectrum-decomposition construction: the poles are
    xi_j = 2/e_j with e_j the positive eigenvalues of the 2K x 2K symmetric
    tridiagonal matrix with off-diagonal 1/sqrt((2m+1)(2m+3)); the zeros
    zeta_j come from the analogous (2K-1)-dimensional matrix built from
    2m+3, and the weights are

        eta_j = (K (2K+3) / 2) * prod_k (zeta_k^2 - xi_j^2)
                               / prod_{k != j} (xi_k^2 - xi_j^2).

    K = 0 is the bare high-temperature scheme (empty decomposition).
    """
    if not 0 <= K <= _K_MAX:
        raise ValueError(f"Pade order must be in [0, {_K_MAX}], got {K}")
    if K == 0:
        return PadeScheme(K=0, xi=(), kappa=())
    try:
        b = np.arange(1, 2 * K + 1) * 2.0 + 1.0
        ev = eigh_tridiagonal(np.zeros(2 * K), 1.0 / np.sqrt(b[:-1] * b[1:]),
                              eigvals_only=True)
        xi = np.sort(2.0 / ev[ev > 0.0])
        if K > 1:
            bp = np.arange(1, 2 * K) * 2.0 + 3.0
            evp = eigh_tridiagonal(np.zeros(2 * K - 1), 1.0 / np.sqrt(bp[:-1] * bp[1:]),
                                   eigvals_only=True)
            # the odd-dimensional matrix has one zero eigenvalue; keep the K-1
            # genuinely positive ones
            positive = np.sort(evp)[::-1][: K - 1]
            zeta2 = (2.0 / positive) ** 2
        else:
            zeta2 = np.array([])
    except np.linalg.LinAlgError as exc:  # pragma: no cover - eigh on tridiag is robust
        raise NumericalError(f"Pade eigenproblem failed for K={K}: {exc}") from exc

    xi2 = xi**2
    prefactor = 0.5 * K * (2 * K + 3)
    weights = np.empty(K)
    for j in range(K):
        numerator = np.prod(zeta2 - xi2[j]) if K > 1 else 1.0
        denominator = np.prod(np.delete(xi2, j) - xi2[j]) if K > 1 else 1.0
        weights[j] = prefactor * numerator / denominator
    return PadeScheme(K=K, xi=tuple(xi), kappa=tuple(weights))


def pade_bose_approximant(scheme: PadeScheme, x: float) -> float:
    """Evaluate the decomposition's approximation to the Bose function at x."""
    xi = np.asarray(scheme.xi)
    kappa = np.asarray(scheme.kappa)
    return 1.0 / x - 0.5 + float(np.sum(2.0 * kappa * x / (x**2 + xi**2)))


def theta_coefficients(bath: BathSpec, scheme: PadeScheme) -> ThetaCoefficients:
    """Scalar coefficients of the dissipation operators for one axis.

    c0_fluct = (eta gamma / beta) (1 + sum_k 2 eta_k gamma^2 / (gamma^2 - nu_k^2))
    c0_diss  = -eta gamma / 2
    ck       = -(eta gamma^2 / beta) 2 eta_k nu_k / (gamma^2 - nu_k^2)

    with nu_k = xi_k / beta. Raises DegeneratePoleError when gamma lands on
    a decomposition frequency (measure-zero configuration; perturb gamma).
    """
    eta, gamma, beta = bath.eta, bath.gamma, bath.beta
    nu = np.asarray(scheme.xi) / beta
    denom = gamma**2 - nu**2
    if np.any(np.abs(denom) < 1e-12 * gamma**2):
        k_bad = int(np.argmin(np.abs(denom))) + 1
        raise DegeneratePoleError(
            f"gamma = {gamma} coincides with decomposition frequency nu_{k_bad} "
            f"= {nu[k_bad - 1]}; perturb gamma to avoid the pole"
        )
    kappa = np.asarray(scheme.kappa)
    c0_fluct = (eta * gamma / beta) * (1.0 + float(np.sum(2.0 * kappa * gamma**2 / denom)))
    c0_diss = -eta * gamma / 2.0
    ck = -(eta * gamma**2 / beta) * 2.0 * kappa * nu / denom
    return ThetaCoefficients(c0_fluct=c0_fluct, c0_diss=c0_diss, ck=tuple(ck))
