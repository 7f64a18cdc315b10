"""Cross-checks between the compiled kernels and the NumPy fallback.

The two implementations mirror each other's arithmetic, so they must agree
to floating-point roundoff (not necessarily bitwise: libm vs vectorized
log/sqrt may differ in the last ulp).
"""

import numpy as np
import pytest

from trajkit.backend import available_backends

BACKENDS = available_backends()
needs_both = pytest.mark.skipif(
    "cython" not in BACKENDS, reason="compiled kernels not built"
)


def _rand_state(rng, n):
    c = rng.standard_normal((n, 3)) + 1j * rng.standard_normal((n, 3))
    c /= np.linalg.norm(c, axis=1)[:, None]
    return np.ascontiguousarray(c)


@needs_both
@pytest.mark.parametrize("adaptive", [False, True])
def test_qtraj_kernels_agree(adaptive):
    rng = np.random.default_rng(0)
    n, m, dt = 257, 40, 1e-3
    r = rng.standard_normal(m) / np.sqrt(dt)
    dn = rng.standard_normal((n, m)) * np.sqrt(dt)
    states, logs = {}, {}
    for name, mod in BACKENDS.items():
        c = _rand_state(np.random.default_rng(1), n)
        logw = np.zeros(n)
        status = mod.qtraj_ostensible_segment(c, logw, r, dn, dt, 0.5, 1.0, 0.2,
                                              0.1, adaptive)
        assert status == -1
        states[name], logs[name] = c, logw
    assert np.allclose(states["python"], states["cython"], rtol=0, atol=1e-12)
    assert np.allclose(logs["python"], logs["cython"], rtol=0, atol=1e-11)


@needs_both
def test_classical_kernels_agree():
    rng = np.random.default_rng(2)
    n, m, dt = 513, 60, 1e-3
    r = 1.0 + rng.standard_normal(m) / np.sqrt(dt)
    dn = rng.standard_normal((n, m)) * np.sqrt(dt)
    out = {}
    for name, mod in BACKENDS.items():
        x = np.random.default_rng(3).standard_normal(n)
        logw = np.zeros(n)
        status = mod.classical_particles_segment(x, logw, r, dn, dt, 1.0, 1.0, 1.0,
                                                 1.0, 0.1, 0.05, 0.0)
        assert status == -1
        out[name] = (x, logw)
    assert np.allclose(out["python"][0], out["cython"][0], rtol=0, atol=1e-12)
    assert np.allclose(out["python"][1], out["cython"][1], rtol=0, atol=1e-11)


@needs_both
@pytest.mark.parametrize("adaptive", [False, True])
def test_hybrid_kernels_agree(adaptive):
    rng = np.random.default_rng(4)
    n, m, dt = 129, 50, 5e-4
    r = rng.standard_normal(m) / np.sqrt(dt)
    dn = rng.standard_normal((n, m)) * np.sqrt(dt)
    out = {}
    for name, mod in BACKENDS.items():
        gen = np.random.default_rng(5)
        psi = gen.standard_normal((n, 2)) + 1j * gen.standard_normal((n, 2))
        psi /= np.linalg.norm(psi, axis=1)[:, None]
        psi = np.ascontiguousarray(psi)
        x = gen.standard_normal(n)
        logw = np.zeros(n)
        status = mod.hybrid_segment(psi, x, logw, r, dn, dt, 5.0, 1.0, 2.0, 0.5,
                                    0.0, 0.3, adaptive)
        assert status == -1
        out[name] = (psi, x, logw)
    for i in range(3):
        assert np.allclose(out["python"][i], out["cython"][i], rtol=0, atol=1e-11)


@needs_both
def test_weight_underflow_status_agrees():
    # a huge adverse record value drives the factor negative in both backends
    for name, mod in BACKENDS.items():
        x = np.array([5.0, -5.0])
        logw = np.zeros(2)
        status = mod.classical_particles_segment(
            x, logw, np.array([-400.0]), np.zeros((2, 1)), 1.0, 1.0, 1.0, 1.0,
            1.0, 0.0, 0.0, 0.0,
        )
        assert status == 0
