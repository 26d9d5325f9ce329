"""Hierarchy propagation: right-hand side, RK4 stepping, equilibration.

The equation of motion for member n (hbar = 1) is

    d rho_n / dt = -i [H, rho_n] - (sum_c n_c nu_c) rho_n
                   - i sum_c n_c Theta_c rho_{n - e_c}
                   - i sum_c V^x rho_{n + e_c}

with one channel c per (axis, k) pair. Theta_c multiplies V^x by a scalar
and, for k = 0, adds a scalar multiple of ([H, V])^o, where A^x B = AB - BA
and A^o B = AB + BA. At the truncation shell the hierarchy is closed either
by the terminator identity (mode 'eq8': the damping term of a shell member
equals minus its inward coupling sum, so both are dropped) or by plain zero
closure (mode 'zero': absent outward neighbors contribute nothing).

Evaluation is a parallel map over hierarchy members: the member list is
split into contiguous chunks, each worker writes only its own output rows
and reads from an immutable snapshot. Per-member summation order is fixed
(drift, inward couplings by axis, outward couplings by axis), so results
are bitwise identical for any worker count.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .basis import AXES, BasisSet, OperatorMatrix, eigenenergy
from .bath import BathSpec, PadeScheme, ThetaCoefficients, theta_coefficients
from .errors import ConvergenceError, DivergenceError
from .hierarchy import HierarchyIndexSpace

CHECKPOINT_VERSION = 1

TERMINATOR_MODES = ("eq8", "zero")

# RK4 stays stable while dt * |eigenvalue| < 2.8 along the imaginary axis
RK4_STABILITY_LIMIT = 2.8


@dataclass
class HierarchyState:
    """All auxiliary density matrices, stacked in index-space order."""

    space: HierarchyIndexSpace
    matrices: NDArray[np.complex128] = field(repr=False)
    time: float = 0.0

    def __post_init__(self):
        if self.matrices.ndim != 3 or self.matrices.shape[0] != self.space.size:
            raise ValueError(
                f"matrices shape {self.matrices.shape} does not match "
                f"{self.space.size} hierarchy members"
            )

    @property
    def dimension(self) -> int:
        return self.matrices.shape[1]

    @property
    def zeroth(self) -> NDArray[np.complex128]:
        """The physical reduced density matrix (zero multi-index member)."""
        return self.matrices[0]

    def copy(self) -> "HierarchyState":
        return HierarchyState(space=self.space, matrices=self.matrices.copy(),
                              time=self.time)


@dataclass(frozen=True)
class ModelContext:
    """System operators plus per-axis bath data shared by all members."""

    H: OperatorMatrix
    V: dict[str, OperatorMatrix]
    theta: dict[str, ThetaCoefficients]
    nu: dict[str, NDArray[np.float64]]
    space: HierarchyIndexSpace

    def __post_init__(self):
        d = self.H.basis.dimension
        for axis in AXES:
            if self.V[axis].basis.dimension != d:
                raise ValueError("coupling operators must share the Hamiltonian basis")
            if len(self.nu[axis]) != self.space.per_axis_K[axis] + 1:
                raise ValueError(
                    f"axis {axis}: expected {self.space.per_axis_K[axis] + 1} "
                    f"frequencies, got {len(self.nu[axis])}"
                )

    @property
    def dimension(self) -> int:
        return self.H.basis.dimension

    def nu_by_channel(self) -> NDArray[np.float64]:
        return np.concatenate([self.nu[axis] for axis in AXES])


def build_model(
    basis_H: OperatorMatrix,
    coupling: dict[str, OperatorMatrix],
    baths: dict[str, BathSpec],
    schemes: dict[str, PadeScheme],
    space: HierarchyIndexSpace,
) -> ModelContext:
    """Assemble a ModelContext from per-axis bath specs and Pade schemes."""
    theta = {axis: theta_coefficients(baths[axis], schemes[axis]) for axis in AXES}
    nu = {
        axis: schemes[axis].frequencies(baths[axis].gamma, baths[axis].beta)
        for axis in AXES
    }
    return ModelContext(H=basis_H, V=coupling, theta=theta, nu=nu, space=space)


class RhsEvaluator:
    """Batched right-hand side with preallocated scratch and worker chunks."""

    def __init__(self, model: ModelContext, terminator_mode: str = "eq8",
                 workers: int = 1):
        if terminator_mode not in TERMINATOR_MODES:
            raise ValueError(
                f"terminator_mode must be one of {TERMINATOR_MODES}, got {terminator_mode!r}"
            )
        if workers < 1:
            raise ValueError(f"workers must be >= 1, got {workers}")
        self.model = model
        self.terminator_mode = terminator_mode
        self.workers = workers
        space = model.space
        d = model.dimension
        n = space.size

        self._H = np.ascontiguousarray(model.H.entries, dtype=np.complex128)
        self._V = {
            axis: np.ascontiguousarray(model.V[axis].entries, dtype=np.complex128)
            for axis in AXES
        }
        h = model.H.entries
        self._W = {
            axis: np.ascontiguousarray(
                h @ model.V[axis].entries - model.V[axis].entries @ h,
                dtype=np.complex128,
            )
            for axis in AXES
        }

        damp = space.counts_array.astype(float) @ model.nu_by_channel()
        term = space.terminator_mask()
        if terminator_mode == "eq8":
            damp = np.where(term, 0.0, damp)
        self._damp = damp[:, None, None]

        # per axis: gather indices and scalar coefficients for each channel,
        # with absent neighbors redirected to a trailing all-zero pad row
        self._axis_tables = []
        channel_offset = 0
        for axis in AXES:
            k_count = space.per_axis_K[axis] + 1
            th = model.theta[axis]
            v_coefs = np.array([th.c0_fluct] + list(th.ck))
            down_src, down_coef = [], []
            for k in range(k_count):
                c = channel_offset + k
                src = space.neighbor_table[:, c, 0].copy()
                src[src < 0] = n
                coef = space.counts_array[:, c].astype(float)
                if terminator_mode == "eq8":
                    coef = np.where(term, 0.0, coef)
                down_src.append(src)
                down_coef.append(coef)
            up_src = []
            for k in range(k_count):
                c = channel_offset + k
                src = space.neighbor_table[:, c, 1].copy()
                src[src < 0] = n
                up_src.append(src)
            self._axis_tables.append(
                (axis, v_coefs, down_src, down_coef, np.array(th.c0_diss), up_src)
            )
            channel_offset += k_count

        self._pad_shape = (n + 1, d, d)
        self._chunks = self._make_chunks(n, workers)
        self._pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    @staticmethod
    def _make_chunks(n: int, workers: int) -> list[slice]:
        bounds = np.linspace(0, n, min(workers, n) + 1).astype(int)
        return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False

    def rhs(self, matrices: NDArray[np.complex128],
            out: NDArray[np.complex128] | None = None) -> NDArray[np.complex128]:
        """Evaluate the hierarchy derivative for stacked member matrices."""
        n, d = matrices.shape[0], matrices.shape[1]
        if out is None:
            out = np.empty_like(matrices)
        padded = np.empty(self._pad_shape, dtype=np.complex128)
        padded[:n] = matrices
        padded[n] = 0.0

        if self._pool is None or len(self._chunks) == 1:
            for sl in self._chunks:
                self._rhs_rows(padded, sl, out)
        else:
            futures = [
                self._pool.submit(self._rhs_rows, padded, sl, out)
                for sl in self._chunks
            ]
            for f in futures:
                f.result()
        return out

    def _rhs_rows(self, padded: NDArray[np.complex128], rows: slice,
                  out: NDArray[np.complex128]) -> None:
        """Fill out[rows]; reads arbitrary rows of the padded snapshot."""
        A = padded[: padded.shape[0] - 1][rows]
        H = self._H
        acc = H @ A
        acc -= A @ H
        acc *= -1j
        acc -= self._damp[rows] * A

        for axis, v_coefs, down_src, down_coef, c0_diss, up_src in self._axis_tables:
            V = self._V[axis]
            # inward couplings: V^x part combined over k, then the k = 0
            # anticommutator part
            mix = None
            for k, (src, coef) in enumerate(zip(down_src, down_coef)):
                gathered = padded[src[rows]]
                weighted = (v_coefs[k] * coef[rows])[:, None, None] * gathered
                mix = weighted if mix is None else mix + weighted
                if k == 0:
                    w_in = (float(c0_diss) * coef[rows])[:, None, None] * gathered
                    prod = self._W[axis] @ w_in
                    prod += w_in @ self._W[axis]
                    acc -= 1j * prod
            if mix is not None:
                prod = V @ mix
                prod -= mix @ V
                acc -= 1j * prod
            # outward couplings: bare V^x on the sum of raised neighbors
            lifted = padded[up_src[0][rows]]
            for src in up_src[1:]:
                lifted = lifted + padded[src[rows]]
            prod = V @ lifted
            prod -= lifted @ V
            acc -= 1j * prod

        out[rows] = acc


@dataclass
class PropagatorConfig:
    """Time stepping and equilibration settings.

    equilibration_dt may exceed dt: any stable step size converges to the
    same fixed point because an RK4 update leaves exact stationary states
    unchanged, so the relaxation run can take longer strides than the
    response propagation.
    """

    dt: float = 0.1
    n_steps: int = 3000
    terminator_mode: str = "eq8"
    equilibration_tolerance: float = 1e-9
    max_equilibration_steps: int = 200_000
    equilibration_dt: float | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.n_steps < 0:
            raise ValueError(f"n_steps must be >= 0, got {self.n_steps}")
        if self.terminator_mode not in TERMINATOR_MODES:
            raise ValueError(
                f"terminator_mode must be one of {TERMINATOR_MODES}, "
                f"got {self.terminator_mode!r}"
            )
        if self.equilibration_tolerance <= 0:
            raise ValueError("equilibration_tolerance must be > 0")
        if self.max_equilibration_steps < 1:
            raise ValueError("max_equilibration_steps must be >= 1")
        if self.equilibration_dt is not None and self.equilibration_dt <= 0:
            raise ValueError("equilibration_dt must be > 0 when given")

    @property
    def effective_equilibration_dt(self) -> float:
        return self.equilibration_dt if self.equilibration_dt is not None else self.dt


def check_rk4_stability(model: ModelContext, dt: float) -> None:
    """Warn when dt is outside the RK4 stability heuristic (not enforced)."""
    damp_max = float(
        (model.space.counts_array.astype(float) @ model.nu_by_channel()).max()
    )
    energies = np.diagonal(model.H.entries)
    spectral_bound = 2.0 * float(np.abs(energies).max())
    if dt * (damp_max + spectral_bound) >= RK4_STABILITY_LIMIT:
        warnings.warn(
            f"dt = {dt} violates the RK4 stability heuristic: "
            f"dt * (max damping {damp_max:.3g} + spectral bound {spectral_bound:.3g}) "
            f">= {RK4_STABILITY_LIMIT}",
            stacklevel=2,
        )


def heom_rhs(state: HierarchyState, model: ModelContext,
             terminator_mode: str = "eq8", workers: int = 1) -> HierarchyState:
    """Hierarchy time derivative packaged as a HierarchyState."""
    if state.dimension != model.dimension:
        raise ValueError(
            f"state dimension {state.dimension} does not match model "
            f"dimension {model.dimension}"
        )
    with RhsEvaluator(model, terminator_mode, workers) as ev:
        derivative = ev.rhs(state.matrices)
    return HierarchyState(space=state.space, matrices=derivative, time=state.time)


class _Stepper:
    """RK4 stepping with persistent stage buffers around one evaluator."""

    def __init__(self, model: ModelContext, terminator_mode: str, workers: int):
        self.evaluator = RhsEvaluator(model, terminator_mode, workers)
        self._k = None
        self._tmp = None

    def close(self):
        self.evaluator.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False

    def step(self, A: NDArray[np.complex128], dt: float) -> float:
        """Advance A in place by one RK4 step; returns max |dA/dt| at entry."""
        if self._k is None:
            self._k = [np.empty_like(A) for _ in range(4)]
            self._tmp = np.empty_like(A)
        k1, k2, k3, k4 = self._k
        tmp = self._tmp
        ev = self.evaluator

        ev.rhs(A, out=k1)
        residual = float(np.max(np.abs(k1)))
        np.multiply(k1, 0.5 * dt, out=tmp)
        tmp += A
        ev.rhs(tmp, out=k2)
        np.multiply(k2, 0.5 * dt, out=tmp)
        tmp += A
        ev.rhs(tmp, out=k3)
        np.multiply(k3, dt, out=tmp)
        tmp += A
        ev.rhs(tmp, out=k4)

        k2 += k3
        k2 *= 2.0
        k1 += k2
        k1 += k4
        k1 *= dt / 6.0
        A += k1
        return residual


def _check_finite(A: NDArray[np.complex128], step: int) -> None:
    if np.isfinite(A.real).all() and np.isfinite(A.imag).all():
        return
    bad = ~np.isfinite(A.reshape(A.shape[0], -1)).all(axis=1)
    ado = int(np.argmax(bad))
    raise DivergenceError(
        f"non-finite values at step {step} in hierarchy member {ado}",
        step=step,
        ado_index=ado,
    )


def rk4_step(state: HierarchyState, model: ModelContext, dt: float,
             terminator_mode: str = "eq8", workers: int = 1) -> HierarchyState:
    """One classical Runge-Kutta step; returns a new state at time + dt."""
    new = state.copy()
    with _Stepper(model, terminator_mode, workers) as stepper:
        stepper.step(new.matrices, dt)
    _check_finite(new.matrices, step=0)
    new.time = state.time + dt
    return new


def propagate(state: HierarchyState, model: ModelContext, config: PropagatorConfig,
              workers: int = 1, observer=None) -> HierarchyState:
    """Advance n_steps of dt, optionally calling observer(step, state) each step.

    The observer is invoked with step 0 before the first update and after
    every step thereafter (n_steps + 1 calls).
    """
    check_rk4_stability(model, config.dt)
    new = state.copy()
    with _Stepper(model, config.terminator_mode, workers) as stepper:
        if observer is not None:
            observer(0, new)
        for step in range(1, config.n_steps + 1):
            stepper.step(new.matrices, config.dt)
            if step % 50 == 0 or step == config.n_steps:
                _check_finite(new.matrices, step)
            new.time += config.dt
            if observer is not None:
                observer(step, new)
    return new


def boltzmann_initial(basis: BasisSet, beta: float,
                      space: HierarchyIndexSpace) -> HierarchyState:
    """Factorized start: zeroth member e^(-beta H)/Z, all others zero."""
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    energies = np.array([eigenenergy(s.n) for s in basis.states])
    # shift by the ground state energy so large beta cannot overflow
    weights = np.exp(-beta * (energies - energies.min()))
    populations = weights / weights.sum()
    matrices = np.zeros((space.size, basis.dimension, basis.dimension),
                        dtype=np.complex128)
    matrices[0] = np.diag(populations)
    return HierarchyState(space=space, matrices=matrices, time=0.0)


def equilibrate(state0: HierarchyState, model: ModelContext,
                config: PropagatorConfig, workers: int = 1) -> HierarchyState:
    """Propagate until max |d rho / dt| over all members drops below tolerance.

    Returns the full correlated hierarchy (every member, not only the
    zeroth); raises ConvergenceError when max_equilibration_steps is
    exhausted first.
    """
    dt = config.effective_equilibration_dt
    check_rk4_stability(model, dt)
    new = state0.copy()
    tol = config.equilibration_tolerance
    residual = float("inf")
    with _Stepper(model, config.terminator_mode, workers) as stepper:
        ev = stepper.evaluator
        probe = ev.rhs(new.matrices)
        residual = float(np.max(np.abs(probe)))
        if residual < tol:
            return new
        for step in range(1, config.max_equilibration_steps + 1):
            residual = stepper.step(new.matrices, dt)
            new.time += dt
            if step % 100 == 0:
                _check_finite(new.matrices, step)
            if residual < tol:
                _check_finite(new.matrices, step)
                return new
    raise ConvergenceError(
        f"equilibration residual {residual:.3e} above tolerance {tol:.3e} "
        f"after {config.max_equilibration_steps} steps",
        residual=residual,
        steps=config.max_equilibration_steps,
    )


def diagnostics(state: HierarchyState) -> dict:
    """Trace, Hermiticity defect and populations of the physical member."""
    rho = state.zeroth
    defect = float(np.max(np.abs(state.matrices - np.conj(np.swapaxes(state.matrices, 1, 2)))))
    return {
        "trace": complex(np.trace(rho)),
        "hermiticity_defect": defect,
        "populations": np.real(np.diagonal(rho)).copy(),
    }


def save_checkpoint(path, state: HierarchyState, header: dict) -> None:
    """Versioned dump of all member matrices plus a JSON header."""
    meta = dict(header)
    meta.update(
        depth=state.space.depth,
        per_axis_K=state.space.per_axis_K,
        truncation=state.space.truncation,
        time=state.time,
    )
    np.savez(
        path,
        version=np.int64(CHECKPOINT_VERSION),
        header=np.array(json.dumps(meta, sort_keys=True)),
        matrices=state.matrices,
        time=np.float64(state.time),
    )


def load_checkpoint(path) -> tuple[dict, NDArray[np.complex128], float]:
    """Read back a checkpoint; returns (header, matrices, time)."""
    with np.load(path, allow_pickle=False) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        header = json.loads(str(data["header"][()]))
        return header, data["matrices"].copy(), float(data["time"])
