# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled stepping kernels for the ensemble methods.

Arithmetic mirrors `_kernels_py.py` expression for expression (and the
extension is built with -ffp-contract=off), so both backends agree to
floating-point roundoff.  See that module for the storage conventions.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log, sqrt

BACKEND = "cython"


def qtraj_ostensible_segment(
    cnp.complex128_t[:, ::1] c,
    cnp.float64_t[::1] logw,
    cnp.float64_t[::1] r_seg,
    cnp.float64_t[:, :] dn,
    double dt,
    double g1,
    double g2,
    double lam,
    double mu,
    bint adaptive,
):
    cdef double sq1 = sqrt(g1)
    cdef double sq2 = sqrt(g2)
    cdef double gtot = g1 + g2
    cdef double slam = 0.5 * sq1 * lam * dt
    cdef double lam2 = lam * lam
    cdef Py_ssize_t n = c.shape[0]
    cdef Py_ssize_t m = r_seg.shape[0]
    cdef Py_ssize_t i, k
    cdef double a, w, mu_k, s, nrm2, inv
    cdef double complex c1, c2, c3, n1, n2, n3
    for k in range(m):
        a = (r_seg[k] - lam) * dt
        for i in range(n):
            w = dn[i, k]
            c1 = c[i, 0]
            c2 = c[i, 1]
            c3 = c[i, 2]
            if adaptive:
                mu_k = sq2 * 2.0 * (c2.conjugate() * c3).real
            else:
                mu_k = mu
            s = -0.5 * (lam * a + mu_k * w) - 0.125 * (lam2 + mu_k * mu_k) * dt
            n1 = c1 + sq1 * a * c3 + slam * c3 + s * c1
            n2 = c2 + sq2 * w * c3 + 0.5 * sq2 * mu_k * dt * c3 + s * c2
            n3 = c3 - 0.5 * gtot * dt * c3 + s * c3
            nrm2 = (
                n1.real * n1.real
                + n1.imag * n1.imag
                + n2.real * n2.real
                + n2.imag * n2.imag
                + n3.real * n3.real
                + n3.imag * n3.imag
            )
            logw[i] += log(nrm2)
            inv = 1.0 / sqrt(nrm2)
            c[i, 0] = n1 * inv
            c[i, 1] = n2 * inv
            c[i, 2] = n3 * inv
    return -1


def classical_particles_segment(
    cnp.float64_t[::1] x,
    cnp.float64_t[::1] logw,
    cnp.float64_t[::1] r_seg,
    cnp.float64_t[:, :] dn,
    double dt,
    double kk,
    double ll,
    double b,
    double beta,
    double lam,
    double mu,
    double m,
):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t nk = r_seg.shape[0]
    cdef Py_ssize_t i, k
    cdef double w, fac, rk
    cdef double mmu = m - mu
    cdef double mum_dt = (mu - m) * dt
    for k in range(nk):
        rk = r_seg[k]
        for i in range(n):
            w = dn[i, k]
            fac = 1.0 + mmu * w + dt * (x[i] - lam) * (rk - lam) / beta
            if fac <= 0.0:
                return i
            logw[i] += log(fac)
            x[i] += dt * (-kk * x[i] + ll) + b * (w + mum_dt)
    return -1


def hybrid_segment(
    cnp.complex128_t[:, ::1] psi,
    cnp.float64_t[::1] x,
    cnp.float64_t[::1] logw,
    cnp.float64_t[::1] r_seg,
    cnp.float64_t[:, :] dn,
    double dt,
    double omega,
    double gamma,
    double bb,
    double beta,
    double lam,
    double mu,
    bint adaptive,
):
    cdef double sg = sqrt(gamma)
    cdef double complex hOmdt = 0.5j * omega * dt
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t nk = r_seg.shape[0]
    cdef Py_ssize_t i, k
    cdef double w, mu_k, fac, rk, half_mu2, nrm2, inv
    cdef double complex pe, pg, ne, ng
    for k in range(nk):
        rk = r_seg[k]
        for i in range(n):
            w = dn[i, k]
            pe = psi[i, 0]
            pg = psi[i, 1]
            if adaptive:
                mu_k = sg * 2.0 * (pg.conjugate() * pe).real
            else:
                mu_k = mu
            fac = 1.0 + dt * (x[i] - lam) * (rk - lam) / beta
            if fac <= 0.0:
                return i
            logw[i] += log(fac)
            half_mu2 = 0.125 * mu_k * mu_k * dt
            ne = (
                pe
                - hOmdt * pg
                - 0.5 * mu_k * w * pe
                - 0.5 * gamma * dt * pe
                - half_mu2 * pe
            )
            ng = (
                pg
                - hOmdt * pe
                + w * (sg * pe - 0.5 * mu_k * pg)
                + 0.5 * sg * mu_k * dt * pe
                - half_mu2 * pg
            )
            nrm2 = ne.real * ne.real + ne.imag * ne.imag + ng.real * ng.real + ng.imag * ng.imag
            logw[i] += log(nrm2)
            inv = 1.0 / sqrt(nrm2)
            psi[i, 0] = ne * inv
            psi[i, 1] = ng * inv
            x[i] += dt * (-bb * x[i]) + bb * (w + mu_k * dt)
    return -1
