"""Split-step Fourier propagation of the 1D Gross-Pitaevskii equation.

Internal units have hbar = 1. The equation solved is

    i dpsi/dt = -(1/2m) d^2psi/dx^2 + V(x, u(t)) psi + beta |psi|^2 psi

on a periodic grid. Real time uses second-order Strang splitting with the
nonlinear term grouped with the potential; imaginary time uses the same
splitting with renormalization after every step.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels


class GpeError(Exception):
    """Base class for propagation and eigenstate failures."""


class NumericalBlowupError(GpeError):
    """Non-finite amplitudes appeared during propagation."""

    def __init__(self, time_index: int, message: str | None = None):
        self.time_index = int(time_index)
        super().__init__(message or f"non-finite amplitudes at time index {self.time_index}")


class ConvergenceError(GpeError):
    def __init__(self, last_delta: float, iterations: int):
        self.last_delta = float(last_delta)
        self.iterations = int(iterations)
        super().__init__(
            f"imaginary-time relaxation did not converge after {iterations} iterations "
            f"(last energy delta {last_delta:.3e})"
        )


class UnsupportedPotentialError(GpeError, ValueError):
    """Raised when a parity-restricted solve is requested for an asymmetric potential."""


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform periodic grid ``x_j = x_min + j * dx`` for ``j < n_points``."""

    x_min: float
    x_max: float
    n_points: int = 256

    def __post_init__(self):
        n = int(self.n_points)
        if n < 2 or n & (n - 1):
            raise ValueError(f"n_points must be a power of two, got {self.n_points}")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @classmethod
    def symmetric(cls, half_width: float, n_points: int = 256) -> "SpatialGrid":
        return cls(-float(half_width), float(half_width), n_points)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_points

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @cached_property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    @cached_property
    def k(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)

    @cached_property
    def k2(self) -> np.ndarray:
        return self.k**2

    @cached_property
    def mirror(self) -> np.ndarray:
        """Index map j -> index of -x_j. Only meaningful for symmetric grids."""
        return (-np.arange(self.n_points)) % self.n_points

    @property
    def is_symmetric(self) -> bool:
        return abs(self.x_min + self.x_max) <= 1e-12 * self.length

    def max_kinetic(self, mass: float = 1.0) -> float:
        return float(np.max(self.k2)) / (2.0 * mass)


@dataclass(frozen=True)
class GpeParams:
    mass: float = 1.0
    beta: float = 0.0
    dt: float = 1e-3

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.mass > 0:
            raise ValueError("mass must be positive")


@dataclass
class WaveFunction:
    amplitudes: np.ndarray
    grid: SpatialGrid

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (self.grid.n_points,):
            raise ValueError(
                f"amplitudes have shape {self.amplitudes.shape}, grid has {self.grid.n_points} points"
            )

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.dx)

    def normalized(self) -> "WaveFunction":
        return WaveFunction(self.amplitudes / np.sqrt(self.norm2()), self.grid)

    def density(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def expect_x(self) -> float:
        return float(np.sum(self.grid.x * self.density()) * self.grid.dx)

    def copy(self) -> "WaveFunction":
        return WaveFunction(self.amplitudes.copy(), self.grid)


@dataclass
class Trajectory:
    """Result of :func:`propagate`.

    ``states`` holds psi at every control sample (row j at time j*dt) when the
    propagation was run with ``store=True``, else None.
    """

    final: WaveFunction
    controls: np.ndarray
    dt: float
    states: np.ndarray | None = field(default=None, repr=False)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.controls))

    def state(self, j: int) -> WaveFunction:
        if self.states is None:
            raise ValueError("trajectory was propagated without store=True")
        return WaveFunction(self.states[j], self.final.grid)

    def expect_x(self) -> np.ndarray:
        if self.states is None:
            raise ValueError("trajectory was propagated without store=True")
        x = self.final.grid.x
        return np.sum(np.abs(self.states) ** 2 * x, axis=1) * self.final.grid.dx


def _check_same_grid(a: WaveFunction, b: WaveFunction):
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")


def inner_product(a: WaveFunction, b: WaveFunction) -> complex:
    """<a|b> = sum conj(a_j) b_j dx."""
    _check_same_grid(a, b)
    return complex(np.vdot(a.amplitudes, b.amplitudes) * a.grid.dx)


def fidelity(a: WaveFunction, b: WaveFunction) -> float:
    f = abs(inner_product(a, b)) ** 2
    return float(min(max(f, 0.0), 1.0))


def step_real_time(
    psi: WaveFunction,
    potential_column: np.ndarray,
    params: GpeParams,
    potential_next: np.ndarray | None = None,
    time_index: int = 0,
) -> WaveFunction:
    """Advance psi by one Strang step of length ``params.dt``.

    The first potential half-step uses ``potential_column``; the second uses
    ``potential_next`` (the potential at the end of the step) when given.
    This is the reference implementation of the loop inside :func:`propagate`.
    """
    grid = psi.grid
    v0 = np.asarray(potential_column, dtype=float)
    v1 = v0 if potential_next is None else np.asarray(potential_next, dtype=float)
    h = 0.5 * params.dt
    kin = np.exp(-0.5j * grid.k2 * params.dt / params.mass)
    a = psi.amplitudes
    a = a * np.exp(-1j * h * (v0 + params.beta * np.abs(a) ** 2))
    a = np.fft.ifft(kin * np.fft.fft(a))
    a = a * np.exp(-1j * h * (v1 + params.beta * np.abs(a) ** 2))
    if not np.all(np.isfinite(a)):
        raise NumericalBlowupError(time_index + 1)
    return WaveFunction(a, grid)


def potential_table(problem, x: np.ndarray, controls: np.ndarray) -> np.ndarray:
    """V(x, u_j) for every sample, shape (len(controls), len(x))."""
    return np.ascontiguousarray(
        problem.potential(x[None, :], np.asarray(controls, dtype=float)[:, None]), dtype=float
    )


def propagate(
    psi0: WaveFunction,
    control_samples: np.ndarray,
    problem,
    params: GpeParams,
    store: bool = False,
) -> Trajectory:
    """Propagate psi0 along a sampled control.

    ``problem`` only needs a ``potential(x, u)`` method broadcasting over
    arrays. One control sample per time point, spaced ``params.dt``; an empty
    or single-sample control is the identity evolution.
    """
    grid = psi0.grid
    u = np.atleast_1d(np.asarray(control_samples, dtype=float))
    if u.size == 0:
        states = psi0.amplitudes[None, :].copy() if store else None
        return Trajectory(psi0.copy(), u, params.dt, states)
    V = potential_table(problem, grid.x, u)
    kin = np.exp(-0.5j * grid.k2 * params.dt / params.mass)
    final, traj, bad = _kernels.forward(
        psi0.amplitudes.copy(), V, kin, params.dt, params.beta, store
    )
    if bad >= 0:
        raise NumericalBlowupError(bad)
    return Trajectory(WaveFunction(final, grid), u, params.dt, traj if store else None)


def gpe_energy(psi: WaveFunction, potential_column: np.ndarray, params: GpeParams) -> float:
    """<psi| -(1/2m) d^2/dx^2 + V + (beta/2)|psi|^2 |psi>."""
    grid = psi.grid
    return float(
        _kernels.energy(
            psi.amplitudes, np.asarray(potential_column, dtype=float), grid.k2,
            params.mass, params.beta, grid.dx,
        )
    )


def _linear_eigenstate(V: np.ndarray, grid: SpatialGrid, mass: float, parity: int) -> np.ndarray:
    """Lowest eigenvector of the discretized linear Hamiltonian in a parity sector."""
    n = grid.n_points
    kinetic = np.fft.ifft(grid.k2[:, None] / (2.0 * mass) * np.fft.fft(np.eye(n), axis=0), axis=0).real
    H = 0.5 * (kinetic + kinetic.T) + np.diag(V)
    if parity:
        # Restrict to the parity subspace with projector P = (1 + p R)/2.
        R = np.eye(n)[grid.mirror]
        P = 0.5 * (np.eye(n) + parity * R)
        vals, vecs = np.linalg.eigh(P @ H @ P + 1e6 * (1.0 + np.abs(V).max()) * (np.eye(n) - P))
    else:
        vals, vecs = np.linalg.eigh(H)
    return vecs[:, 0].astype(np.complex128)


def _fix_phase(a: np.ndarray, grid: SpatialGrid, parity: int) -> np.ndarray:
    j = int(np.argmax(np.abs(a)))
    a = a * np.exp(-1j * np.angle(a[j]))
    if parity == -1 and grid.x[j] < 0:
        a = -a
    return a


def _relax(problem, u_fixed, params, parity, guess, dtau, tol, max_iter):
    grid = problem.grid
    V = np.asarray(problem.potential(grid.x, float(u_fixed)), dtype=float)
    if parity:
        if not grid.is_symmetric:
            raise UnsupportedPotentialError("parity-restricted solve needs a grid symmetric about x=0")
        scale = max(1.0, float(np.abs(V).max()))
        if np.max(np.abs(V - V[grid.mirror])) > 1e-9 * scale:
            raise UnsupportedPotentialError(f"potential at u={u_fixed} is not symmetric under x -> -x")
    if guess is None:
        psi = _linear_eigenstate(V, grid, params.mass, parity)
    else:
        psi = np.asarray(guess.amplitudes if isinstance(guess, WaveFunction) else guess, dtype=np.complex128)
    if parity:
        psi = 0.5 * (psi + parity * psi[grid.mirror])
    psi = psi / np.sqrt(np.sum(np.abs(psi) ** 2) * grid.dx)
    if dtau is None:
        dtau = 0.1 / grid.max_kinetic(params.mass)
    out, energies, n_iter, ok = _kernels.imaginary_time(
        psi, V, grid.k2, params.mass, params.beta, grid.dx, float(dtau), float(tol),
        int(max_iter), int(parity), grid.mirror,
    )
    if not ok:
        delta = abs(energies[-1] - energies[-2]) if len(energies) > 1 else float("nan")
        raise ConvergenceError(delta, n_iter)
    return WaveFunction(_fix_phase(out, grid, parity), grid), energies


def relax_imaginary_time(
    problem, u_fixed: float, params: GpeParams, *, parity: int = 0, guess=None,
    dtau: float | None = None, tol: float = 1e-10, max_iter: int = 2_000_000,
):
    """Imaginary-time relaxation returning ``(state, energy_history)``.

    Without a guess the iteration is seeded with the lowest eigenvector of the
    linear (beta = 0) discretized Hamiltonian in the requested parity sector.
    """
    return _relax(problem, u_fixed, params, parity, guess, dtau, tol, max_iter)


def ground_state(problem, u_fixed: float, params: GpeParams, **kwargs) -> WaveFunction:
    """Lowest-energy stationary state of V(., u_fixed).

    ``problem`` needs ``grid`` and ``potential(x, u)``. Keyword arguments are
    passed to :func:`relax_imaginary_time`.
    """
    return relax_imaginary_time(problem, u_fixed, params, parity=0, **kwargs)[0]


def excited_state(problem, u_fixed: float, params: GpeParams, **kwargs) -> WaveFunction:
    """First excited state, obtained as the odd-parity ground state."""
    return relax_imaginary_time(problem, u_fixed, params, parity=-1, **kwargs)[0]
