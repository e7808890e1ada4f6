"""Cost functional and its adjoint gradient in the chopped basis.

    J(c) = (1 - F)/2 + (gamma/2) int u'(t)^2 dt,   F = |<psi_target|psi(T)>|^2

    dJ/dc_n = -int (Re <chi|dV/du|psi> + gamma u'') S(t) f_n(t) dt

The adjoint chi is propagated backward with the exact transpose of the
forward split-step map, so the discrete gradient is the derivative of the
discrete cost (trapezoid weights on the sample grid) rather than an
approximation to it. Terminal condition: chi(T) = i <psi_target|psi(T)> psi_target.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .control import (
    BasisSpec,
    SampledControl,
    apply_transfer,
    expansion_matrix,
    regularization_cost,
    regularization_gradient,
    transfer_adjoint,
)
from .gpe import (
    GpeParams,
    NumericalBlowupError,
    SpatialGrid,
    Trajectory,
    WaveFunction,
    inner_product,
    potential_table,
    propagate,
)


@dataclass(frozen=True)
class CostBreakdown:
    infidelity_term: float
    regularization_term: float = 0.0

    @property
    def total(self) -> float:
        return self.infidelity_term + self.regularization_term

    @property
    def fidelity(self) -> float:
        return 1.0 - 2.0 * self.infidelity_term

    @property
    def infidelity(self) -> float:
        return 2.0 * self.infidelity_term


@dataclass
class AdjointState:
    chi: np.ndarray  # (n_samples, n_points), row j at time j*dt
    grid: SpatialGrid
    dt: float
    control_gradient: np.ndarray  # dJ/dv_j of the fidelity term per sample

    def state(self, j: int) -> WaveFunction:
        return WaveFunction(self.chi[j], self.grid)


class PropagationError(NumericalBlowupError):
    """Blow-up during a cost evaluation; carries the offending coefficients."""

    def __init__(self, time_index: int, coeffs):
        self.coeffs = np.array(coeffs, dtype=float)
        super().__init__(time_index, f"non-finite amplitudes at time index {time_index} for c={self.coeffs!r}")


@dataclass
class ControlSamples:
    t: np.ndarray
    dt: float
    raw: np.ndarray  # before clipping
    u: SampledControl  # commanded, clipped
    v: SampledControl  # experienced (after transfer)
    jacobian: np.ndarray  # S(t) f_n(t), (n_samples, M)
    transfer: object


def control_samples(coeffs, basis: BasisSpec, problem) -> ControlSamples:
    t, dt = problem.time_grid(basis.T)
    jac = expansion_matrix(basis, t)
    c = np.asarray(coeffs, dtype=float)
    if c.size != basis.M:
        raise ValueError(f"{c.size} coefficients for a basis of size {basis.M}")
    raw = problem.reference(t, basis.T) + jac @ c
    lo, hi = problem.u_bounds
    u = SampledControl(np.clip(raw, lo, hi), dt)
    tf = problem.transfer(dt) if len(t) > 2 else None
    if tf is not None and tf.kernel.size >= len(t):
        tf = None
    v = apply_transfer(u, tf)
    return ControlSamples(t, dt, raw, u, v, jac, tf)


def _params(problem, dt: float) -> GpeParams:
    return GpeParams(mass=problem.params.mass, beta=problem.params.beta, dt=dt)


def _forward(samples: ControlSamples, problem, coeffs, store: bool) -> Trajectory:
    try:
        return propagate(problem.psi_initial, samples.v.u, problem, _params(problem, samples.dt), store=store)
    except NumericalBlowupError as err:
        raise PropagationError(err.time_index, coeffs) from None


def cost(coeffs, basis: BasisSpec, problem) -> CostBreakdown:
    """(1 - F)/2 on the transferred control plus regularization on the commanded one."""
    samples = control_samples(coeffs, basis, problem)
    traj = _forward(samples, problem, coeffs, store=False)
    overlap = inner_product(problem.psi_target, traj.final)
    F = min(abs(overlap) ** 2, 1.0)
    return CostBreakdown(0.5 * (1.0 - F), regularization_cost(samples.u, problem.gamma))


def _backward(traj: Trajectory, psi_target: WaveFunction, problem, store_chi: bool):
    grid = traj.final.grid
    overlap = inner_product(psi_target, traj.final)
    lam_final = -overlap * psi_target.amplitudes
    V = potential_table(problem, grid.x, traj.controls)
    dV = np.ascontiguousarray(
        problem.dV_du(grid.x[None, :], traj.controls[:, None]) * np.ones((1, grid.n_points)), dtype=float
    )
    kin = np.exp(-0.5j * grid.k2 * traj.dt / problem.params.mass)
    dJ, chi, bad = _kernels.backward(
        traj.states, V, dV, kin, traj.dt, problem.params.beta, grid.dx, lam_final, store_chi
    )
    if bad >= 0:
        raise NumericalBlowupError(bad)
    return dJ, chi


def backward_adjoint(traj: Trajectory, psi_target: WaveFunction, problem) -> AdjointState:
    """Backward costate for the infidelity term along a stored trajectory.

    Satisfies the discrete counterpart of
    i dchi/dt = (H + 2 beta |psi|^2) chi + beta psi^2 conj(chi)
    with chi(T) = i <psi_target|psi(T)> psi_target.
    """
    if traj.states is None:
        raise ValueError("backward_adjoint needs a trajectory propagated with store=True")
    dJ, chi = _backward(traj, psi_target, problem, store_chi=True)
    return AdjointState(chi, traj.final.grid, traj.dt, dJ)


def trapezoid_weights(n_samples: int, dt: float) -> np.ndarray:
    w = np.full(n_samples, dt)
    if n_samples == 1:
        return np.zeros(1)
    w[0] = w[-1] = 0.5 * dt
    return w


def adjoint_integrand(adj: AdjointState, traj: Trajectory, problem) -> np.ndarray:
    """Re <chi(t_j)| dV/du(v_j) |psi(t_j)> at every sample."""
    grid = traj.final.grid
    dV = problem.dV_du(grid.x[None, :], traj.controls[:, None])
    return np.sum((np.conj(adj.chi) * dV * traj.states).real, axis=1) * grid.dx


def cost_and_gradient(coeffs, basis: BasisSpec, problem) -> tuple[CostBreakdown, np.ndarray]:
    samples = control_samples(coeffs, basis, problem)
    traj = _forward(samples, problem, coeffs, store=True)
    overlap = inner_product(problem.psi_target, traj.final)
    F = min(abs(overlap) ** 2, 1.0)
    breakdown = CostBreakdown(0.5 * (1.0 - F), regularization_cost(samples.u, problem.gamma))
    try:
        dJ_dv, _ = _backward(traj, problem.psi_target, problem, store_chi=False)
    except NumericalBlowupError as err:
        raise PropagationError(err.time_index, coeffs) from None
    dJ_du = transfer_adjoint(dJ_dv, samples.transfer)
    dJ_du += regularization_gradient(samples.u, problem.gamma)
    lo, hi = problem.u_bounds
    dJ_du[(samples.raw < lo) | (samples.raw > hi)] = 0.0
    return breakdown, samples.jacobian.T @ dJ_du


def gradient(coeffs, basis: BasisSpec, problem) -> np.ndarray:
    return cost_and_gradient(coeffs, basis, problem)[1]


def finite_diff_gradient(coeffs, basis: BasisSpec, problem, h: float = 1e-6, fun=None) -> np.ndarray:
    """Central differences (J(c + h e_n) - J(c - h e_n)) / 2h.

    ``fun`` replaces the cost functional when given (called with the
    coefficient vector only).
    """
    if not h > 0:
        raise ValueError("step must be positive")
    if fun is None:
        def fun(c):
            return cost(c, basis, problem).total
    c0 = np.asarray(coeffs, dtype=float)
    g = np.empty(c0.size)
    for n in range(c0.size):
        e = np.zeros(c0.size)
        e[n] = h
        g[n] = (fun(c0 + e) - fun(c0 - e)) / (2.0 * h)
    return g


class ControlObjective:
    """Cost of a genome (c, r) for one problem at a fixed duration T."""

    def __init__(self, problem, T: float, c_max: float = 5.0):
        self.problem = problem
        self.T = float(T)
        self.c_max = float(c_max)

    def basis(self, r) -> BasisSpec:
        return BasisSpec(np.asarray(r, dtype=float), self.T)

    def evaluate(self, c, r) -> CostBreakdown:
        return cost(c, self.basis(r), self.problem)

    def evaluate_with_gradient(self, c, r):
        return cost_and_gradient(c, self.basis(r), self.problem)
