"""Vectorized NumPy implementation of the time-stepping kernels.

Every kernel works on a batch of ``B`` independent blocks (one block is one
2x2 density operator, or its memory operator, under one set of bath
parameters). All blocks share the drift ``h0``, control generator ``hc`` and
coupling ``lop``; they differ only through ``amp`` (Gamma*gamma/2) and
``decay`` (gamma + i*Omega).

Time layout: controls ``c[k]`` act on ``[k dt, (k+1) dt)``. Memory operators
live on the half grid, ``obar[:, m]`` at ``t = m dt / 2``, so that the RK4
stages of step ``k`` read ``obar[:, 2k]``, ``obar[:, 2k+1]`` and
``obar[:, 2k+2]``.
"""
import numpy as np

BACKEND = "python"


def _dag(a):
    return np.conj(np.swapaxes(a, -1, -2))


def _obar_rhs(o, h, lop, ldag, amp, decay):
    k = -1j * h - ldag @ o
    return amp[:, None, None] * lop - decay[:, None, None] * o + k @ o - o @ k


def obar_rk4(h0, hc, lop, amp, decay, controls, dt):
    """Integrate dO/dt = amp L - decay O + [-iH(t) - L^dag O, O], O(0) = 0."""
    amp = np.ascontiguousarray(amp, dtype=float)
    decay = np.ascontiguousarray(decay, dtype=complex)
    n = len(controls)
    b = len(amp)
    ldag = _dag(lop)
    out = np.zeros((b, 2 * n + 1, 2, 2), dtype=complex)
    o = np.zeros((b, 2, 2), dtype=complex)
    h = 0.5 * dt
    for m in range(2 * n):
        ham = h0 + controls[m // 2] * hc
        k1 = _obar_rhs(o, ham, lop, ldag, amp, decay)
        k2 = _obar_rhs(o + 0.5 * h * k1, ham, lop, ldag, amp, decay)
        k3 = _obar_rhs(o + 0.5 * h * k2, ham, lop, ldag, amp, decay)
        k4 = _obar_rhs(o + h * k3, ham, lop, ldag, amp, decay)
        o = o + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[:, m + 1] = o
    return out


def _rho_rhs(rho, o, h, lop, ldag):
    odag = _dag(o)
    return (-1j * (h @ rho - rho @ h)
            + lop @ rho @ odag - rho @ odag @ lop
            - ldag @ o @ rho + o @ rho @ ldag)


def _rho_step(rho, oa, om, ob, ham, lop, ldag, dt):
    k1 = _rho_rhs(rho, oa, ham, lop, ldag)
    k2 = _rho_rhs(rho + 0.5 * dt * k1, om, ham, lop, ldag)
    k3 = _rho_rhs(rho + 0.5 * dt * k2, om, ham, lop, ldag)
    k4 = _rho_rhs(rho + dt * k3, ob, ham, lop, ldag)
    rho = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return 0.5 * (rho + _dag(rho))


def rho_forward(h0, hc, lop, obar, controls, rho0, dt):
    """RK4 propagation of the master equation; re-hermitizes every step."""
    n = len(controls)
    ldag = _dag(lop)
    out = np.empty((obar.shape[0], n + 1, 2, 2), dtype=complex)
    rho = np.array(rho0, dtype=complex)
    out[:, 0] = rho
    for k in range(n):
        ham = h0 + controls[k] * hc
        rho = _rho_step(rho, obar[:, 2 * k], obar[:, 2 * k + 1], obar[:, 2 * k + 2], ham, lop, ldag, dt)
        out[:, k + 1] = rho
    return out


def _adj_rhs(x, o, h, lop, ldag):
    odag = _dag(o)
    return (1j * (h @ x - x @ h)
            + ldag @ x @ o - x @ ldag @ o
            - odag @ lop @ x + odag @ x @ lop)


def costate_backward(h0, hc, lop, obar, controls, chi_final, dt):
    """Integrate dX/dt = -D(t)^dag X from T back to 0 (Hilbert-Schmidt adjoint)."""
    n = len(controls)
    ldag = _dag(lop)
    out = np.empty((obar.shape[0], n + 1, 2, 2), dtype=complex)
    x = np.array(chi_final, dtype=complex)
    out[:, n] = x
    for k in range(n - 1, -1, -1):
        ham = h0 + controls[k] * hc
        oa, om, ob = obar[:, 2 * k + 2], obar[:, 2 * k + 1], obar[:, 2 * k]
        k1 = _adj_rhs(x, oa, ham, lop, ldag)
        k2 = _adj_rhs(x + 0.5 * dt * k1, om, ham, lop, ldag)
        k3 = _adj_rhs(x + 0.5 * dt * k2, om, ham, lop, ldag)
        k4 = _adj_rhs(x + dt * k3, ob, ham, lop, ldag)
        x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[:, k] = x
    return out


def control_pairing(chi, rho, hc):
    """Sum over blocks of Re tr(chi^dag (-i[hc, rho])), blocks in index order."""
    g = -1j * (hc @ rho - rho @ hc)
    terms = np.real(np.sum(np.conj(chi) * g, axis=(-1, -2)))
    total = 0.0
    for v in terms:
        total += v
    return total


def sequential_update(h0, hc, lop, obar, controls, chi, rho0, shape, lambda_a, dt):
    """First-order Krotov sweep with frozen memory operators.

    The sample ``c[k]`` is updated from the co-states ``chi[:, k]`` and the
    forward state already propagated with the updated samples ``< k``.
    Returns the new controls and the forward trajectory under them.
    """
    n = len(controls)
    ldag = _dag(lop)
    new = np.array(controls, dtype=float)
    out = np.empty((obar.shape[0], n + 1, 2, 2), dtype=complex)
    rho = np.array(rho0, dtype=complex)
    out[:, 0] = rho
    for k in range(n):
        if shape[k] != 0.0:
            new[k] = controls[k] + (shape[k] / lambda_a) * control_pairing(chi[:, k], rho, hc)
        ham = h0 + new[k] * hc
        rho = _rho_step(rho, obar[:, 2 * k], obar[:, 2 * k + 1], obar[:, 2 * k + 2], ham, lop, ldag, dt)
        out[:, k + 1] = rho
    return new, out
