"""Jitted inner loops for split-step propagation.

All kernels work on raw arrays; the public wrappers in :mod:`gloloc.gpe` and
:mod:`gloloc.gradient` own validation and error reporting. ``np.fft`` inside
``njit`` is provided by the ``rocket-fft`` extension.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _abs2(z):
    return z.real * z.real + z.imag * z.imag


@njit(cache=True)
def forward(psi0, V, kin, dt, beta, store):
    """Strang propagation through the potential table ``V`` (n_samples, n).

    Step j uses ``V[j]`` in the first half and ``V[j + 1]`` in the second half.
    Returns ``(psi_final, traj, bad)`` where ``bad`` is the first sample index
    holding a non-finite amplitude, or -1.
    """
    n_samples, n = V.shape
    psi = psi0.copy()
    if store:
        traj = np.empty((n_samples, n), dtype=np.complex128)
        traj[0] = psi
    else:
        traj = np.empty((1, n), dtype=np.complex128)
    h = 0.5 * dt
    for j in range(n_samples - 1):
        psi = psi * np.exp(-1j * h * (V[j] + beta * _abs2(psi)))
        psi = np.fft.ifft(kin * np.fft.fft(psi))
        psi = psi * np.exp(-1j * h * (V[j + 1] + beta * _abs2(psi)))
        if not np.isfinite(psi.real.sum() + psi.imag.sum()):
            return psi, traj, j + 1
        if store:
            traj[j + 1] = psi
    return psi, traj, -1


@njit(cache=True)
def backward(traj, V, dV, kin, dt, beta, dx, lam_final, store_chi):
    """Exact transpose of :func:`forward` for the gradient of a final-state cost.

    ``lam_final`` is the gradient of the cost with respect to the final state in
    the real inner product ``Re <a, b> dx``. Returns ``(dJ_dv, chi, bad)``: the
    derivative of the cost with respect to every control sample, the adjoint
    state at the stored sample times (empty unless ``store_chi``) and the
    blow-up index or -1.
    """
    n_samples, n = traj.shape
    dJ = np.zeros(n_samples)
    if store_chi:
        chi = np.empty((n_samples, n), dtype=np.complex128)
    else:
        chi = np.empty((1, n), dtype=np.complex128)
    kin_c = np.conj(kin)
    lam = lam_final.copy()
    h = 0.5 * dt
    for j in range(n_samples - 1, -1, -1):
        psi = traj[j]
        pre = h if j > 0 else 0.0
        post = h if j < n_samples - 1 else 0.0
        w = pre + post
        phase = V[j] + beta * _abs2(psi)
        b = psi * np.exp(-1j * post * phase)
        dJ[j] = w * np.sum((np.conj(lam) * dV[j] * b).imag) * dx
        if store_chi:
            chi[j] = -1j * np.exp(1j * post * phase) * lam
        a = psi * np.exp(1j * pre * phase)
        mu = lam * np.exp(1j * w * phase)
        lam = mu + 2.0 * w * beta * (np.conj(mu) * a).imag * a
        if j > 0:
            lam = np.fft.ifft(kin_c * np.fft.fft(lam))
        if not np.isfinite(lam.real.sum() + lam.imag.sum()):
            return dJ, chi, j
    return dJ, chi, -1


@njit(cache=True)
def energy(psi, V, k2, mass, beta, dx):
    n = psi.shape[0]
    psik = np.fft.fft(psi)
    kinetic = np.sum(k2 * _abs2(psik)) * dx / n / (2.0 * mass)
    dens = _abs2(psi)
    return kinetic + np.sum((V + 0.5 * beta * dens) * dens) * dx


@njit(cache=True)
def imaginary_time(psi0, V, k2, mass, beta, dx, dtau, tol, max_iter, parity, mirror):
    """Normalized imaginary-time Strang iteration.

    ``parity`` is 0 (none), +1 or -1; the state is projected onto that parity
    sector after every step using the ``mirror`` index map. Stops once the
    energy changes by less than ``tol`` in one step. Returns
    ``(psi, energies, n_iter, converged)``.
    """
    kin = np.exp(-0.5 * k2 * dtau / mass)
    h = 0.5 * dtau
    psi = psi0.copy()
    energies = np.empty(max_iter + 1)
    energies[0] = energy(psi, V, k2, mass, beta, dx)
    for it in range(max_iter):
        psi = psi * np.exp(-h * (V + beta * _abs2(psi)))
        psi = np.fft.ifft(kin * np.fft.fft(psi))
        psi = psi * np.exp(-h * (V + beta * _abs2(psi)))
        if parity != 0:
            psi = 0.5 * (psi + parity * psi[mirror])
        psi = psi / np.sqrt(np.sum(_abs2(psi)) * dx)
        e = energy(psi, V, k2, mass, beta, dx)
        energies[it + 1] = e
        if not np.isfinite(e):
            return psi, energies[: it + 2], it + 1, False
        if abs(e - energies[it]) < tol:
            return psi, energies[: it + 2], it + 1, True
    return psi, energies, max_iter, False
