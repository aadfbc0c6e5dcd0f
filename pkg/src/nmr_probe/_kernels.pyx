# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled time-stepping kernels; same contracts as ``_kernels_py``."""
import numpy as np

BACKEND = "compiled"


cdef struct M2:
    double complex a
    double complex b
    double complex c
    double complex d


cdef inline M2 mk(double complex a, double complex b, double complex c, double complex d) noexcept nogil:
    cdef M2 r
    r.a = a
    r.b = b
    r.c = c
    r.d = d
    return r


cdef inline M2 mul(M2 x, M2 y) noexcept nogil:
    return mk(x.a * y.a + x.b * y.c, x.a * y.b + x.b * y.d,
              x.c * y.a + x.d * y.c, x.c * y.b + x.d * y.d)


cdef inline M2 add(M2 x, M2 y) noexcept nogil:
    return mk(x.a + y.a, x.b + y.b, x.c + y.c, x.d + y.d)


cdef inline M2 sub(M2 x, M2 y) noexcept nogil:
    return mk(x.a - y.a, x.b - y.b, x.c - y.c, x.d - y.d)


cdef inline M2 scale(double complex s, M2 x) noexcept nogil:
    return mk(s * x.a, s * x.b, s * x.c, s * x.d)


cdef inline M2 axpy(double complex s, M2 x, M2 y) noexcept nogil:
    # y + s*x
    return mk(y.a + s * x.a, y.b + s * x.b, y.c + s * x.c, y.d + s * x.d)


cdef inline double complex conj(double complex z) noexcept nogil:
    return z.real - 1j * z.imag


cdef inline M2 dagger(M2 x) noexcept nogil:
    return mk(conj(x.a), conj(x.c), conj(x.b), conj(x.d))


cdef inline M2 hermitize(M2 x) noexcept nogil:
    cdef double complex off = 0.5 * (x.b + conj(x.c))
    return mk(x.a.real, off, conj(off), x.d.real)


cdef inline M2 comm(M2 x, M2 y) noexcept nogil:
    return sub(mul(x, y), mul(y, x))


cdef inline M2 load(const double complex[:, ::1] m) noexcept nogil:
    return mk(m[0, 0], m[0, 1], m[1, 0], m[1, 1])


cdef inline M2 load3(const double complex[:, :, ::1] m, Py_ssize_t i) noexcept nogil:
    return mk(m[i, 0, 0], m[i, 0, 1], m[i, 1, 0], m[i, 1, 1])


cdef inline M2 load4(const double complex[:, :, :, ::1] m, Py_ssize_t i, Py_ssize_t j) noexcept nogil:
    return mk(m[i, j, 0, 0], m[i, j, 0, 1], m[i, j, 1, 0], m[i, j, 1, 1])


cdef inline void store4(double complex[:, :, :, ::1] m, Py_ssize_t i, Py_ssize_t j, M2 x) noexcept nogil:
    m[i, j, 0, 0] = x.a
    m[i, j, 0, 1] = x.b
    m[i, j, 1, 0] = x.c
    m[i, j, 1, 1] = x.d


cdef inline M2 obar_rhs(M2 o, M2 h, M2 lop, M2 ldag, double amp, double complex decay) noexcept nogil:
    cdef M2 k = sub(scale(-1j, h), mul(ldag, o))
    return add(sub(scale(amp, lop), scale(decay, o)), comm(k, o))


cdef inline M2 rho_rhs(M2 rho, M2 o, M2 h, M2 lop, M2 ldag) noexcept nogil:
    cdef M2 odag = dagger(o)
    cdef M2 r = scale(-1j, comm(h, rho))
    r = add(r, sub(mul(mul(lop, rho), odag), mul(rho, mul(odag, lop))))
    r = sub(r, sub(mul(mul(ldag, o), rho), mul(mul(o, rho), ldag)))
    return r


cdef inline M2 adj_rhs(M2 x, M2 o, M2 h, M2 lop, M2 ldag) noexcept nogil:
    cdef M2 odag = dagger(o)
    cdef M2 r = scale(1j, comm(h, x))
    r = add(r, sub(mul(mul(ldag, x), o), mul(x, mul(ldag, o))))
    r = sub(r, sub(mul(mul(odag, lop), x), mul(mul(odag, x), lop)))
    return r


cdef inline M2 rho_step(M2 rho, M2 oa, M2 om, M2 ob, M2 h, M2 lop, M2 ldag, double dt) noexcept nogil:
    cdef M2 k1 = rho_rhs(rho, oa, h, lop, ldag)
    cdef M2 k2 = rho_rhs(axpy(0.5 * dt, k1, rho), om, h, lop, ldag)
    cdef M2 k3 = rho_rhs(axpy(0.5 * dt, k2, rho), om, h, lop, ldag)
    cdef M2 k4 = rho_rhs(axpy(dt, k3, rho), ob, h, lop, ldag)
    cdef M2 inc = add(add(k1, k4), scale(2.0, add(k2, k3)))
    return hermitize(axpy(dt / 6.0, inc, rho))


def obar_rk4(h0, hc, lop, amp, decay, controls, double dt):
    cdef const double[::1] amp_v = np.ascontiguousarray(amp, dtype=np.float64)
    cdef const double complex[::1] decay_v = np.ascontiguousarray(decay, dtype=np.complex128)
    cdef const double[::1] c = np.ascontiguousarray(controls, dtype=np.float64)
    cdef Py_ssize_t nb = amp_v.shape[0]
    cdef Py_ssize_t n = c.shape[0]
    out = np.zeros((nb, 2 * n + 1, 2, 2), dtype=np.complex128)
    cdef double complex[:, :, :, ::1] ov = out
    cdef M2 H0 = load(np.ascontiguousarray(h0, dtype=np.complex128))
    cdef M2 HC = load(np.ascontiguousarray(hc, dtype=np.complex128))
    cdef M2 L = load(np.ascontiguousarray(lop, dtype=np.complex128))
    cdef M2 Ld = dagger(L)
    cdef M2 o, h, k1, k2, k3, k4
    cdef double hs = 0.5 * dt
    cdef Py_ssize_t b, m
    with nogil:
        for b in range(nb):
            o = mk(0, 0, 0, 0)
            for m in range(2 * n):
                h = axpy(c[m // 2], HC, H0)
                k1 = obar_rhs(o, h, L, Ld, amp_v[b], decay_v[b])
                k2 = obar_rhs(axpy(0.5 * hs, k1, o), h, L, Ld, amp_v[b], decay_v[b])
                k3 = obar_rhs(axpy(0.5 * hs, k2, o), h, L, Ld, amp_v[b], decay_v[b])
                k4 = obar_rhs(axpy(hs, k3, o), h, L, Ld, amp_v[b], decay_v[b])
                o = axpy(hs / 6.0, add(add(k1, k4), scale(2.0, add(k2, k3))), o)
                store4(ov, b, m + 1, o)
    return out


def rho_forward(h0, hc, lop, obar, controls, rho0, double dt):
    cdef const double complex[:, :, :, ::1] ov = np.ascontiguousarray(obar, dtype=np.complex128)
    cdef const double complex[:, :, ::1] r0 = np.ascontiguousarray(
        np.broadcast_to(rho0, (ov.shape[0], 2, 2)), dtype=np.complex128)
    cdef const double[::1] c = np.ascontiguousarray(controls, dtype=np.float64)
    cdef Py_ssize_t nb = ov.shape[0]
    cdef Py_ssize_t n = c.shape[0]
    out = np.empty((nb, n + 1, 2, 2), dtype=np.complex128)
    cdef double complex[:, :, :, ::1] rv = out
    cdef M2 H0 = load(np.ascontiguousarray(h0, dtype=np.complex128))
    cdef M2 HC = load(np.ascontiguousarray(hc, dtype=np.complex128))
    cdef M2 L = load(np.ascontiguousarray(lop, dtype=np.complex128))
    cdef M2 Ld = dagger(L)
    cdef M2 rho, h
    cdef Py_ssize_t b, k
    with nogil:
        for b in range(nb):
            rho = load3(r0, b)
            store4(rv, b, 0, rho)
            for k in range(n):
                h = axpy(c[k], HC, H0)
                rho = rho_step(rho, load4(ov, b, 2 * k), load4(ov, b, 2 * k + 1),
                               load4(ov, b, 2 * k + 2), h, L, Ld, dt)
                store4(rv, b, k + 1, rho)
    return out


def costate_backward(h0, hc, lop, obar, controls, chi_final, double dt):
    cdef const double complex[:, :, :, ::1] ov = np.ascontiguousarray(obar, dtype=np.complex128)
    cdef const double complex[:, :, ::1] xf = np.ascontiguousarray(chi_final, dtype=np.complex128)
    cdef const double[::1] c = np.ascontiguousarray(controls, dtype=np.float64)
    cdef Py_ssize_t nb = ov.shape[0]
    cdef Py_ssize_t n = c.shape[0]
    out = np.empty((nb, n + 1, 2, 2), dtype=np.complex128)
    cdef double complex[:, :, :, ::1] xv = out
    cdef M2 H0 = load(np.ascontiguousarray(h0, dtype=np.complex128))
    cdef M2 HC = load(np.ascontiguousarray(hc, dtype=np.complex128))
    cdef M2 L = load(np.ascontiguousarray(lop, dtype=np.complex128))
    cdef M2 Ld = dagger(L)
    cdef M2 x, h, oa, om, ob, k1, k2, k3, k4
    cdef Py_ssize_t b, k
    with nogil:
        for b in range(nb):
            x = load3(xf, b)
            store4(xv, b, n, x)
            for k in range(n - 1, -1, -1):
                h = axpy(c[k], HC, H0)
                oa = load4(ov, b, 2 * k + 2)
                om = load4(ov, b, 2 * k + 1)
                ob = load4(ov, b, 2 * k)
                k1 = adj_rhs(x, oa, h, L, Ld)
                k2 = adj_rhs(axpy(0.5 * dt, k1, x), om, h, L, Ld)
                k3 = adj_rhs(axpy(0.5 * dt, k2, x), om, h, L, Ld)
                k4 = adj_rhs(axpy(dt, k3, x), ob, h, L, Ld)
                x = axpy(dt / 6.0, add(add(k1, k4), scale(2.0, add(k2, k3))), x)
                store4(xv, b, k, x)
    return out


cdef inline double pair_re(M2 x, M2 y) noexcept nogil:
    # Re tr(x^dag y)
    return (conj(x.a) * y.a + conj(x.b) * y.b + conj(x.c) * y.c + conj(x.d) * y.d).real


def control_pairing(chi, rho, hc):
    cdef const double complex[:, :, ::1] xv = np.ascontiguousarray(chi, dtype=np.complex128)
    cdef const double complex[:, :, ::1] rv = np.ascontiguousarray(rho, dtype=np.complex128)
    cdef M2 HC = load(np.ascontiguousarray(hc, dtype=np.complex128))
    cdef double total = 0.0
    cdef Py_ssize_t b
    for b in range(xv.shape[0]):
        total += pair_re(load3(xv, b), scale(-1j, comm(HC, load3(rv, b))))
    return total


def sequential_update(h0, hc, lop, obar, controls, chi, rho0, shape, double lambda_a, double dt):
    cdef const double complex[:, :, :, ::1] ov = np.ascontiguousarray(obar, dtype=np.complex128)
    cdef const double complex[:, :, :, ::1] xv = np.ascontiguousarray(chi, dtype=np.complex128)
    cdef const double complex[:, :, ::1] r0 = np.ascontiguousarray(
        np.broadcast_to(rho0, (ov.shape[0], 2, 2)), dtype=np.complex128)
    cdef const double[::1] c = np.ascontiguousarray(controls, dtype=np.float64)
    cdef const double[::1] s = np.ascontiguousarray(shape, dtype=np.float64)
    cdef Py_ssize_t nb = ov.shape[0]
    cdef Py_ssize_t n = c.shape[0]
    new = np.array(c, dtype=np.float64)
    cdef double[::1] cn = new
    out = np.empty((nb, n + 1, 2, 2), dtype=np.complex128)
    cdef double complex[:, :, :, ::1] rv = out
    cdef M2 H0 = load(np.ascontiguousarray(h0, dtype=np.complex128))
    cdef M2 HC = load(np.ascontiguousarray(hc, dtype=np.complex128))
    cdef M2 L = load(np.ascontiguousarray(lop, dtype=np.complex128))
    cdef M2 Ld = dagger(L)
    cdef M2 h, rho
    cdef double g
    cdef Py_ssize_t b, k
    with nogil:
        for b in range(nb):
            store4(rv, b, 0, load3(r0, b))
        for k in range(n):
            if s[k] != 0.0:
                g = 0.0
                for b in range(nb):
                    g = g + pair_re(load4(xv, b, k), scale(-1j, comm(HC, load4(rv, b, k))))
                cn[k] = c[k] + (s[k] / lambda_a) * g
            h = axpy(cn[k], HC, H0)
            for b in range(nb):
                rho = rho_step(load4(rv, b, k), load4(ov, b, 2 * k), load4(ov, b, 2 * k + 1),
                               load4(ov, b, 2 * k + 2), h, L, Ld, dt)
                store4(rv, b, k + 1, rho)
    return new, out
