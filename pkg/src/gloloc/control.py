"""Chopped random basis (CRAB) controls.

A control over duration T is written as

    u(t) = u0(t) + S(t) * sum_n c_n sin((n + r_n) pi t / T),   n = 1..M

with the shape function S(t) = sin(pi t / T) pinning both endpoints, then
clipped to the admissible interval. An optional finite-bandwidth transfer
function smooths the commanded control u into the experienced control v.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BasisSpec:
    """Basis size, frequency shifts r_n in [-0.5, 0.5] and duration T."""

    r: np.ndarray
    T: float

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float).ravel()
        if r.size < 1:
            raise ValueError("basis needs at least one function")
        if np.any(np.abs(r) > 0.5):
            raise ValueError("frequency shifts must lie in [-0.5, 0.5]")
        if self.T < 0:
            raise ValueError("duration must be non-negative")
        object.__setattr__(self, "r", r)

    @property
    def M(self) -> int:
        return self.r.size

    def functions(self, t: np.ndarray) -> np.ndarray:
        """Basis matrix f_n(t_j), shape (len(t), M)."""
        t = np.asarray(t, dtype=float)
        if self.T == 0:
            return np.zeros((t.size, self.M))
        n = np.arange(1, self.M + 1) + self.r
        return np.sin(np.pi * np.outer(t / self.T, n))


@dataclass
class SampledControl:
    u: np.ndarray
    dt: float

    @property
    def n_samples(self) -> int:
        return len(self.u)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.u))


@dataclass(frozen=True)
class TransferFunction:
    """Symmetric unit-gain convolution kernel of odd length."""

    kernel: np.ndarray
    bandwidth: float = float("inf")

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=float).ravel()
        if k.size % 2 == 0:
            raise ValueError("kernel length must be odd")
        if np.any(k < 0):
            raise ValueError("kernel weights must be non-negative")
        object.__setattr__(self, "kernel", k / k.sum())

    @property
    def half_width(self) -> int:
        return self.kernel.size // 2


def gaussian_transfer(bandwidth: float, dt: float) -> TransferFunction:
    """Gaussian low-pass with -3 dB amplitude at ``bandwidth`` (cycles per time unit).

    The kernel is truncated at +-3 sigma; if sigma is below half a sample the
    identity kernel is returned.
    """
    sigma = np.sqrt(np.log(2.0)) / (2.0 * np.pi * bandwidth) / dt
    half = int(np.ceil(3.0 * sigma))
    if sigma < 0.5 or half == 0:
        return TransferFunction(np.ones(1), bandwidth)
    j = np.arange(-half, half + 1)
    return TransferFunction(np.exp(-0.5 * (j / sigma) ** 2), bandwidth)


def time_grid(T: float, dt_max: float) -> tuple[np.ndarray, float]:
    """Sample times covering [0, T] with spacing at most ``dt_max``.

    The spacing is T / ceil(T / dt_max) so the last sample lands on T exactly.
    """
    if T <= 0:
        return np.zeros(1), float(dt_max)
    n_steps = max(1, int(np.ceil(T / dt_max - 1e-9)))
    return np.linspace(0.0, T, n_steps + 1), T / n_steps


def shape_function(t, T: float):
    """S(t) = sin(pi t / T) with S(0) = S(T) = 0 exactly."""
    t_arr = np.asarray(t, dtype=float)
    if T <= 0:
        raise ValueError("duration must be positive")
    if np.any(t_arr < -1e-12 * T) or np.any(t_arr > T * (1 + 1e-12)):
        raise ValueError("t outside [0, T]")
    s = np.sin(np.pi * np.clip(t_arr / T, 0.0, 1.0))
    s = np.where((t_arr <= 0) | (t_arr >= T), 0.0, s)
    return float(s) if s.ndim == 0 else s


def expansion_matrix(basis: BasisSpec, t: np.ndarray) -> np.ndarray:
    """Columns S(t) f_n(t); the Jacobian of the unclipped control in c."""
    t = np.asarray(t, dtype=float)
    if basis.T <= 0:
        return np.zeros((t.size, basis.M))
    return shape_function(t, basis.T)[:, None] * basis.functions(t)


def synthesize_raw(coeffs, basis: BasisSpec, reference: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.asarray(reference, dtype=float) + expansion_matrix(basis, t) @ np.asarray(coeffs, dtype=float)


def synthesize(
    coeffs,
    basis: BasisSpec,
    reference: SampledControl,
    bounds: tuple[float, float] = (-np.inf, np.inf),
) -> SampledControl:
    """Control samples u0(t_j) + S(t_j) sum_n c_n f_n(t_j), clipped to ``bounds``."""
    c = np.asarray(coeffs, dtype=float)
    if c.size != basis.M:
        raise ValueError(f"{c.size} coefficients for a basis of size {basis.M}")
    t = reference.times
    u = synthesize_raw(c, basis, reference.u, t)
    return SampledControl(np.clip(u, bounds[0], bounds[1]), reference.dt)


def regularization_cost(u: SampledControl, gamma: float) -> float:
    """(gamma/2) sum_j ((u_{j+1} - u_j)/dt)^2 dt."""
    if len(u.u) < 2:
        return 0.0
    du = np.diff(u.u)
    return 0.5 * gamma * float(np.sum(du * du)) / u.dt


def regularization_gradient(u: SampledControl, gamma: float) -> np.ndarray:
    """Derivative of :func:`regularization_cost` with respect to every sample.

    Interior samples give -gamma * u''_j * dt with the centered second
    difference u''_j.
    """
    g = np.zeros(len(u.u))
    if len(u.u) < 2:
        return g
    du = np.diff(u.u) / u.dt
    g[:-1] -= gamma * du
    g[1:] += gamma * du
    return g


def _convolve_hold(u: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    h = kernel.size // 2
    padded = np.concatenate([np.full(h, u[0]), u, np.full(h, u[-1])])
    return np.convolve(padded, kernel, mode="valid")


def apply_transfer(u: SampledControl, tf: TransferFunction | None) -> SampledControl:
    """v = kernel * u with boundary-hold padding; v keeps the endpoints of u."""
    if tf is None or tf.kernel.size == 1 or len(u.u) < 3:
        return SampledControl(u.u.copy(), u.dt)
    if tf.kernel.size >= len(u.u):
        raise ValueError("transfer kernel must be shorter than the control")
    v = _convolve_hold(u.u, tf.kernel)
    v[0], v[-1] = u.u[0], u.u[-1]
    return SampledControl(v, u.dt)


def transfer_adjoint(g: np.ndarray, tf: TransferFunction | None) -> np.ndarray:
    """K^T g for the linear map K of :func:`apply_transfer`."""
    g = np.asarray(g, dtype=float)
    if tf is None or tf.kernel.size == 1 or len(g) < 3:
        return g.copy()
    h = tf.half_width
    n = len(g)
    inner = g.copy()
    inner[0] = inner[-1] = 0.0
    # Transpose of the 'valid' convolution of the padded signal.
    full = np.convolve(inner, tf.kernel[::-1], mode="full")
    out = full[h : h + n].copy()
    out[0] += full[:h].sum()
    out[-1] += full[h + n :].sum()
    out[0] += g[0]
    out[-1] += g[-1]
    return out
