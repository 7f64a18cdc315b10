"""NumPy fallback for the compiled stepping kernels.

Each function advances a whole ensemble in place over a segment of time
steps.  The arithmetic (expression structure, evaluation order per element)
mirrors `_kernels.pyx` so the two backends agree to floating-point roundoff;
estimator reductions happen outside the kernels in stream order, so results
are deterministic for a given seed on either backend.

State storage convention: trajectory states are kept unit-normalized and the
running norm is folded into `logw` after every step (pure bookkeeping; the
linear, norm-non-preserving dynamics are unchanged).

All kernels return -1 on success or the flat index of the first trajectory
whose multiplicative weight factor was <= 0 (caller raises).
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def qtraj_ostensible_segment(c, logw, r_seg, dn, dt, g1, g2, lam, mu, adaptive):
    """Advance the three-level ostensible SSE ensemble over len(r_seg) steps.

    c : (n, 3) complex, unit-norm rows; logw : (n,) accumulated log norm^2.
    r_seg : (m,) replayed real record; dn : (n, m) fictitious Wiener
    increments (variance dt).  lam/mu are the reference-law means; with
    adaptive=True mu is recomputed per trajectory per step.
    """
    sq1 = np.sqrt(g1)
    sq2 = np.sqrt(g2)
    gtot = g1 + g2
    for k in range(len(r_seg)):
        a = (r_seg[k] - lam) * dt
        w = dn[:, k]
        c1, c2, c3 = c[:, 0], c[:, 1], c[:, 2]
        if adaptive:
            mu_k = sq2 * 2.0 * (np.conj(c2) * c3).real
        else:
            mu_k = mu
        s = -0.5 * (lam * a + mu_k * w) - 0.125 * (lam * lam + mu_k * mu_k) * dt
        n1 = c1 + sq1 * a * c3 + 0.5 * sq1 * lam * dt * c3 + s * c1
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
        logw += np.log(nrm2)
        inv = 1.0 / np.sqrt(nrm2)
        c[:, 0] = n1 * inv
        c[:, 1] = n2 * inv
        c[:, 2] = n3 * inv
    return -1


def classical_particles_segment(x, logw, r_seg, dn, dt, kk, ll, b, beta, lam, mu, m):
    """Advance the weighted-particle ensemble for the linear drift scenario.

    x : (n,) particle coordinates; logw : (n,).  Weight factor uses the
    pre-step coordinate; the factor must stay positive.
    """
    for k in range(len(r_seg)):
        w = dn[:, k]
        fac = 1.0 + (m - mu) * w + dt * (x - lam) * (r_seg[k] - lam) / beta
        if np.any(fac <= 0.0):
            return int(np.argmax(fac <= 0.0))
        logw += np.log(fac)
        x += dt * (-kk * x + ll) + b * (w + (mu - m) * dt)
    return -1


def hybrid_segment(psi, x, logw, r_seg, dn, dt, omega, gamma, bb, beta, lam, mu, adaptive):
    """Advance the hybrid (two-level SSE + detector particle) ensemble.

    psi : (n, 2) complex, basis (|e>, |g>), unit-norm rows; x : (n,) detector
    coordinates; logw : (n,) combined log(p * p_check).  One fictitious
    Wiener increment per step drives both the SSE and the particle.
    """
    sg = np.sqrt(gamma)
    for k in range(len(r_seg)):
        w = dn[:, k]
        pe, pg = psi[:, 0], psi[:, 1]
        if adaptive:
            mu_k = sg * 2.0 * (np.conj(pg) * pe).real
        else:
            mu_k = mu
        fac = 1.0 + dt * (x - lam) * (r_seg[k] - lam) / beta
        if np.any(fac <= 0.0):
            return int(np.argmax(fac <= 0.0))
        logw += np.log(fac)
        half_mu2 = 0.125 * mu_k * mu_k * dt
        ne = (
            pe
            - 0.5j * omega * dt * pg
            - 0.5 * mu_k * w * pe
            - 0.5 * gamma * dt * pe
            - half_mu2 * pe
        )
        ng = (
            pg
            - 0.5j * omega * dt * pe
            + w * (sg * pe - 0.5 * mu_k * pg)
            + 0.5 * sg * mu_k * dt * pe
            - half_mu2 * pg
        )
        nrm2 = ne.real * ne.real + ne.imag * ne.imag + ng.real * ng.real + ng.imag * ng.imag
        logw += np.log(nrm2)
        inv = 1.0 / np.sqrt(nrm2)
        psi[:, 0] = ne * inv
        psi[:, 1] = ng * inv
        x += dt * (-bb * x) + bb * (w + mu_k * dt)
    return -1
