"""Independent reference computations shared by the unit and acceptance tests."""
import numpy as np

from nmr_probe.bath import correlation


def decoherence(t, gamma, gamma_cap=1.0):
    """|coherence(t)| / |coherence(0)| of the uncontrolled dephasing qubit."""
    t = np.asarray(t, dtype=float)
    return np.exp(-2 * gamma_cap * (t - (1 - np.exp(-gamma * t)) / gamma))


def dephasing_qfi(t, gamma, gamma_cap=1.0):
    t = np.asarray(t, dtype=float)
    d = decoherence(t, gamma, gamma_cap)
    dd = 2 * gamma_cap * d * (t * np.exp(-gamma * t) / gamma - (1 - np.exp(-gamma * t)) / gamma ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(t > 0, dd ** 2 / (1 - d ** 2), 0.0)


def comm(a, b):
    return a @ b - b @ a


def obar_two_time(system, bath, control, refine=5):
    """O(t) = int_0^t alpha(t,s) O(t,s) ds by explicit two-time quadrature.

    Every O(., s) is marched in t with Heun steps of ``dt / refine`` and the
    s-integral is a trapezoid over all start times; second order overall.
    Returns O on the control grid, shape (N+1, 2, 2).
    """
    n = control.n_steps
    h = control.dt / refine
    lop = system.coupling
    ldag = lop.conj().T
    m = n * refine
    ops = np.zeros((m + 1, 2, 2), dtype=complex)   # O(t, s_j), j <= current step
    ops[0] = lop
    out = np.zeros((n + 1, 2, 2), dtype=complex)

    def integral(ops_now, j, t):
        s = np.arange(j + 1) * h
        w = np.full(j + 1, h)
        w[0] = w[-1] = 0.5 * h
        if j == 0:
            return np.zeros((2, 2), dtype=complex)
        a = correlation(bath, t, s) * w
        return np.einsum("j,jab->ab", a, ops_now[: j + 1])

    obar = np.zeros((2, 2), dtype=complex)
    for j in range(m):
        t = j * h
        c = control.samples[j // refine]
        hmat = system.hamiltonian(c)
        x = -1j * hmat - ldag @ obar
        cur = ops[: j + 1]
        k1 = x @ cur - cur @ x
        pred = np.empty((j + 2, 2, 2), dtype=complex)
        pred[: j + 1] = cur + h * k1
        pred[j + 1] = lop
        obar_pred = integral(pred, j + 1, t + h)
        xp = -1j * hmat - ldag @ obar_pred
        k2 = xp @ pred[: j + 1] - pred[: j + 1] @ xp
        ops[: j + 1] = cur + 0.5 * h * (k1 + k2)
        ops[j + 1] = lop
        obar = integral(ops, j + 1, t + h)
        if (j + 1) % refine == 0:
            out[(j + 1) // refine] = obar
    return out
