"""Head-to-head comparison for an inefficiently monitored damped atom.

A two-level atom decays at rate gamma while its homodyne-x signal is
detected with efficiency eta.  The conditioned state is mixed; three ways to
compute it are implemented:

* `sme_eta_*`: the exact conditioned solver (Kraus-factorized, completely
  positive update; the unmonitored fraction (1-eta) enters as a sandwich
  term).
* `bg_*`: the normalized extension that adds a fictitious noise term
  through the nonlinear conditioning superoperator and averages normalized
  states.  Because conditioning is nonlinear, the fictitious-noise average
  does not commute with it: this estimator carries a bias that does not
  shrink with ensemble size.
* `ours_*`: the linear (unnormalized) extension with reference-law means
  lam (real channel) and mu (fictitious channel) and Girsanov weights; its
  weighted average is unbiased for any reference-law choice.

All three steppers share the same one-step operator algebra, so at eta = 1
they follow the reference trajectory exactly.

States are stored as (a, b, c) = (rho_ee, rho_eg, rho_gg) with basis
(|e>, |g>); everything is vectorized over trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import NOISE_CHUNK, fill_noise, make_streams, output_indices
from .stochproc import NoiseStream, Record, RecordFormatError, scenario_hash


@dataclass
class BGScenario:
    eta: float = 0.4
    gamma: float = 1.0
    omega: float = 0.0  # optional drive; the benchmark is undriven
    dt: float = 5e-4
    t_final: float = 3.0
    init_bloch: tuple = (1.0, 0.0, 0.0)  # x-polarized superposition

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("efficiency must be in (0, 1]")
        if self.gamma <= 0:
            raise ValueError("decay rate must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def params(self) -> dict:
        return {
            "model": "tla-homodyne-eta",
            "eta": self.eta,
            "gamma": self.gamma,
            "omega": self.omega,
            "dt": self.dt,
            "t_final": self.t_final,
            "init_bloch": self.init_bloch,
        }

    def hash(self) -> str:
        return scenario_hash(self.params())

    def initial_abc(self):
        x, y, z = self.init_bloch
        return 0.5 * (1 + z), 0.5 * (x - 1j * y), 0.5 * (1 - z)


def _to_complex(v):
    if isinstance(v, np.ndarray) and v.dtype != np.complex128:
        return v.astype(np.complex128)
    return v


def _m_rho_m(a, b, c, m00, m01, m10, m11):
    """M rho M+ on (a, b, c) triples; any argument may be an array.

    Everything is coerced to complex up front (via astype, not arithmetic):
    NumPy's mixed float64/complex128 ufunc loops are an order of magnitude
    slower than the homogeneous ones, and this sits in the ensemble hot path.
    """
    a = _to_complex(a)
    c = _to_complex(c)
    m10 = _to_complex(m10)
    m00 = complex(m00)
    m01 = complex(m01)
    m11 = complex(m11)
    bc = np.conj(b)
    r00 = m00 * a + m01 * bc
    r01 = m00 * b + m01 * c
    r10 = m10 * a + m11 * bc
    r11 = m10 * b + m11 * c
    m10c = np.conj(m10)
    na = (r00 * m00.conjugate() + r01 * m01.conjugate()).real
    nb = r00 * m10c + r01 * m11.conjugate()
    nc = (r10 * m10c + r11 * m11.conjugate()).real
    return na, nb, nc


def _step_triple(sc: BGScenario, a, b, c, coupling, sandwich: float, dt: float | None = None):
    """Shared one-step update: M rho M+ with M = 1 + coupling*sigma
    - gamma dt P_e/2 - i omega dt sx/2, plus `sandwich` * dt gamma sigma rho sigma+.
    """
    if dt is None:
        dt = sc.dt
    g = 0.5 * sc.gamma * dt
    h = 0.5j * sc.omega * dt
    m10 = _to_complex(coupling)
    if h != 0.0:
        m10 = m10 - h
    na, nb, nc = _m_rho_m(a, b, c, 1.0 - g, -h, m10, 1.0 + 0.0j)
    if sandwich:
        nc = nc + sandwich * sc.gamma * dt * a
    return na, nb, nc


def _bloch_x(a, b, c):
    """<sigma_x> of a normalized (a, b, c) triple."""
    return 2.0 * b.real / (a + c)


def sme_eta_step(rho: np.ndarray, dt: float, sc: BGScenario, stream: NoiseStream):
    """One exact conditioned step on a 2x2 density matrix; returns (rho', r)."""
    a, b, c = rho[0, 0].real, rho[0, 1], rho[1, 1].real
    seff = np.sqrt(sc.eta * sc.gamma)
    x = 2.0 * b.real / (a + c)
    dw = stream.normal() * np.sqrt(dt)
    r = (dw + dt * seff * x) / dt
    na, nb, nc = _step_triple(sc, a, b, c, seff * r * dt, 1.0 - sc.eta, dt=dt)
    tr = na + nc
    return np.array([[na / tr, nb / tr], [np.conj(nb) / tr, nc / tr]]), r


def sme_eta_reference(sc: BGScenario, seed: int, out_every: int = 10, stream_id: int = 0):
    """Exact conditioned trajectory plus the record it generates (stream 0).

    Returns (t, bloch (T, 3), Record).
    """
    stream = NoiseStream(seed, stream_id)
    a, b, c = sc.initial_abc()
    n_steps = sc.n_steps
    out_idx = output_indices(n_steps, out_every)
    bloch = np.empty((len(out_idx), 3))
    bloch[0] = sc.init_bloch
    rvals = np.empty(n_steps)
    seff = np.sqrt(sc.eta * sc.gamma)
    sqdt = np.sqrt(sc.dt)
    pos = 1
    for k in range(1, n_steps + 1):
        x = 2.0 * b.real / (a + c)
        r = (stream.normal() * sqdt + sc.dt * seff * x) / sc.dt
        rvals[k - 1] = r
        a, b, c = _step_triple(sc, a, b, c, seff * r * sc.dt, 1.0 - sc.eta)
        tr = a + c
        a, b, c = a / tr, b / tr, c / tr
        if pos < len(out_idx) and k == out_idx[pos]:
            bloch[pos] = (2 * b.real, 2 * b.imag, a - c)
            pos += 1
    record = Record(dt=sc.dt, values=rvals, channel="real", scenario_hash=sc.hash())
    return out_idx * sc.dt, bloch, record


def bg_step(rho: np.ndarray, r: float, dt: float, sc: BGScenario, stream: NoiseStream):
    """One step of the normalized extension for a single 2x2 state.

    Replays the stored real result r; draws the fictitious Wiener increment
    and gives it the step-local true mean, keeping the state normalized.
    """
    a, b, c = rho[0, 0].real, rho[0, 1], rho[1, 1].real
    x = 2.0 * b.real / (a + c)
    sf = np.sqrt((1.0 - sc.eta) * sc.gamma)
    fdt = stream.normal() * np.sqrt(dt) + dt * sf * x
    coupling = np.sqrt(sc.eta * sc.gamma) * r * dt + sf * fdt
    na, nb, nc = _step_triple(sc, a, b, c, coupling, 0.0, dt=dt)
    tr = na + nc
    return np.array([[na / tr, nb / tr], [np.conj(nb) / tr, nc / tr]])


def ours_linear_step(
    rho_bar: np.ndarray,
    r: float,
    dt: float,
    sc: BGScenario,
    lam: float,
    mu: float,
    stream: NoiseStream,
):
    """One step of the linear unnormalized extension for a single 2x2 state.

    The fictitious result obeys f dt = dW + mu dt under the reference law;
    the exact Gaussian likelihood-ratio scalars for both channels multiply
    the state, so no renormalization is applied.
    """
    a, b, c = rho_bar[0, 0], rho_bar[0, 1], rho_bar[1, 1]
    fdt = stream.normal() * np.sqrt(dt) + mu * dt
    rdt = r * dt
    coupling = np.sqrt(sc.eta * sc.gamma) * rdt + np.sqrt((1.0 - sc.eta) * sc.gamma) * fdt
    na, nb, nc = _step_triple(sc, a, b, c, coupling, 0.0, dt=dt)
    ratio = np.exp(-rdt * lam + 0.5 * lam * lam * dt) * np.exp(-fdt * mu + 0.5 * mu * mu * dt)
    return np.array([[na * ratio, nb * ratio], [np.conj(nb) * ratio, nc * ratio]])


def _ensemble_run(sc: BGScenario, record: Record, n: int, seed: int, out_every: int,
                  prefixes, method: str, lam=0.0, mu=0.0, stream_offset: int = 1,
                  pools: int = 1):
    """Shared vectorized driver for the bg / ours ensembles.

    Returns (t, {(pool, prefix): bloch (T, 3)}).  Pool k occupies the
    contiguous stream block [k*n, (k+1)*n) (all pools advance in one
    vectorized pass); within each pool the requested ensemble sizes are
    nested prefixes.  Trajectory i draws one fictitious variate per step
    from stream stream_offset + i.
    """
    if record.dt != sc.dt:
        raise RecordFormatError(f"record dt {record.dt} != scenario dt {sc.dt}")
    if record.scenario_hash and record.scenario_hash != sc.hash():
        raise RecordFormatError("record was generated for a different scenario")
    prefixes = sorted(prefixes) if prefixes else [n]
    rvals = record.values
    n_steps = len(rvals)
    out_idx = output_indices(n_steps, out_every)
    n_tot = n * pools
    a0, b0, c0 = sc.initial_abc()
    a = np.full(n_tot, float(a0))
    b = np.full(n_tot, b0, dtype=complex)
    c = np.full(n_tot, float(c0))
    logw = np.zeros(n_tot)
    streams = make_streams(seed, stream_offset, 0, n_tot)
    buf = np.empty((n_tot, NOISE_CHUNK))
    seff = np.sqrt(sc.eta * sc.gamma)
    sf = np.sqrt((1.0 - sc.eta) * sc.gamma)
    adaptive_lam = lam == "adaptive"
    adaptive_mu = mu == "adaptive"
    out = {(k, p): np.empty((len(out_idx), 3)) for k in range(pools) for p in prefixes}
    br = b.real.copy()
    bi = b.imag.copy()
    del b
    g = 0.5 * sc.gamma * sc.dt
    omdt = 0.5 * sc.omega * sc.dt

    def collect(j):
        for k in range(pools):
            sl = slice(k * n, (k + 1) * n)
            ap, brp, bip, cp, lw = a[sl], br[sl], bi[sl], c[sl], logw[sl]
            if method == "bg":
                w = np.ones(n)
            else:
                w = np.exp(lw - np.max(lw))
            wx = w * 2 * brp
            wy = w * 2 * bip
            wz = w * (ap - cp)
            wt = w * (ap + cp)
            for p in prefixes:
                den = np.sum(wt[:p])
                out[(k, p)][j] = (
                    np.sum(wx[:p]) / den,
                    np.sum(wy[:p]) / den,
                    np.sum(wz[:p]) / den,
                )

    def step_real(q):
        # M rho M+ for the real step matrix [[1-g, 0], [q, 1]] on the
        # split-real state; everything stays in float64 (homogeneous ufunc
        # loops; the complex path is an order of magnitude slower).
        p0 = 1.0 - g
        na = p0 * p0 * a
        nbr = p0 * (a * q + br)
        nbi = p0 * bi
        nc = q * q * a + 2.0 * q * br + c
        return na, nbr, nbi, nc

    def step_complex(q):
        bb = br + 1j * bi
        na, nb, nc = _step_triple(sc, a, bb, c, q, 0.0)
        return na, nb.real.copy(), nb.imag.copy(), nc

    step = step_real if omdt == 0.0 else step_complex
    collect(0)
    base, pos = 0, 1
    sqdt = np.sqrt(sc.dt)
    while base < n_steps:
        hi_k = min(base + NOISE_CHUNK, n_steps)
        fill_noise(streams, buf, n_steps - base, sqdt)
        for k in range(base, hi_k):
            dn = buf[:, k - base]
            rdt = rvals[k] * sc.dt
            if method == "bg":
                x = 2.0 * br / (a + c)
                fdt = dn + sc.dt * sf * x
                a, br, bi, c = step(seff * rdt + sf * fdt)
                inv = 1.0 / (a + c)
                a, br, bi, c = a * inv, br * inv, bi * inv, c * inv
            else:
                lam_k = seff * 2.0 * br / (a + c) if adaptive_lam else lam
                mu_k = sf * 2.0 * br / (a + c) if adaptive_mu else mu
                fdt = dn + mu_k * sc.dt
                a, br, bi, c = step(seff * rdt + sf * fdt)
                tr = a + c
                logw = logw + np.log(tr)
                if adaptive_lam or adaptive_mu or lam != 0.0 or mu != 0.0:
                    logw = logw + (-rdt * lam_k + 0.5 * lam_k * lam_k * sc.dt) + (
                        -fdt * mu_k + 0.5 * mu_k * mu_k * sc.dt
                    )
                inv = 1.0 / tr
                a, br, bi, c = a * inv, br * inv, bi * inv, c * inv
            if pos < len(out_idx) and k + 1 == out_idx[pos]:
                collect(pos)
                pos += 1
        base = hi_k
    return out_idx * sc.dt, out


def bg_ensemble(sc: BGScenario, record: Record, n: int, seed: int,
                out_every: int = 10, prefixes=None, stream_offset: int = 1):
    t, data = _ensemble_run(sc, record, n, seed, out_every, prefixes, "bg",
                            stream_offset=stream_offset)
    return t, {p: series for (_, p), series in data.items()}


def ours_ensemble(sc: BGScenario, record: Record, n: int, seed: int,
                  lam=0.0, mu=0.0, out_every: int = 10, prefixes=None,
                  stream_offset: int = 1):
    t, data = _ensemble_run(sc, record, n, seed, out_every, prefixes, "ours",
                            lam=lam, mu=mu, stream_offset=stream_offset)
    return t, {p: series for (_, p), series in data.items()}


def error_vs_ensemble(sc: BGScenario, seed: int, n_list, lam=0.0, mu=0.0,
                      out_every: int = 10, pools: int = 1):
    """Bloch-component errors of both methods against the exact trajectory.

    One stored record is shared by every method, ensemble size and pool
    (sizes are nested prefixes of each trajectory pool).  The RMS for a
    given n is the root of the squared error averaged over time, Bloch
    components and `pools` independent trajectory pools; a single pool's
    time-averaged RMS has few effective degrees of freedom (errors are
    strongly correlated over the filter's memory time), so several pools
    make the n-scaling measurable.  Returns the pool-0 difference series and
    the RMS per (method, n).
    """
    n_list = sorted(n_list)
    n_max = n_list[-1]
    t, ref_bloch, record = sme_eta_reference(sc, seed, out_every=out_every)
    report = {"t": t, "reference": ref_bloch, "series": {}, "rms": {}}
    sq = {(m, p): 0.0 for m in ("ours", "bg") for p in n_list}
    runs = {}
    for name, kwargs in (("ours", {"lam": lam, "mu": mu}), ("bg", {})):
        _, runs[name] = _ensemble_run(sc, record, n_max, seed, out_every, n_list,
                                      name, pools=pools, **kwargs)
    for name in ("ours", "bg"):
        report["series"][name] = {p: runs[name][(0, p)] for p in n_list}
        for pool in range(pools):
            for p in n_list:
                sq[(name, p)] += float(np.mean((runs[name][(pool, p)] - ref_bloch)[1:] ** 2))
        report["rms"][name] = {p: float(np.sqrt(sq[(name, p)] / pools)) for p in n_list}
    return report
