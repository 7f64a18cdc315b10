"""Three-level atom under partial homodyne observation.

The atom has lowering operators L1 = |1><3| (rate gamma1, homodyne-x
monitored) and L2 = |2><3| (rate gamma2, unobserved).  This module provides

* the deterministic master-equation solver (no drive, H = 0),
* the stochastic master equation conditioned on the homodyne record,
* the linear ("ostensible") stochastic Schroedinger equation that replays a
  stored record while sampling a fictitious record for the unobserved decay
  channel, with Girsanov log-weights,
* the weighted ensemble estimator reconstructing the conditioned mixed
  state from pure trajectories, and
* an exact finite-outcome oracle that checks the Girsanov identity and the
  ensemble decomposition in closed form (two two-point noise channels, two
  time steps), including the failure of the naive normalized decomposition.

Stochastic steppers use a completely positive Kraus-factorized update
(apply the one-step measurement operator, add the unobserved-channel
sandwich term, renormalize).  This agrees with the literal Euler form of
the conditioning equations to the same order in dt but cannot produce
negative states, and it makes the infinite-ensemble estimator coincide with
the reference solver step by step for the static zero-mean reference law.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backend import kernels
from .ensemble import (
    BATCH_SIZE,
    NOISE_CHUNK,
    combine_prefix_partials,
    fill_noise,
    make_streams,
    output_indices,
    prefix_partial_sums,
    run_batches,
)
from .statekit import L1, L2, X1, lindblad_dissipator
from .stochproc import (
    LogWeight,
    NoiseStream,
    OstensibleDistribution,
    Record,
    RecordFormatError,
    sample_fictitious,
    sample_real_record_quantum,
    scenario_hash,
)


class SolverError(RuntimeError):
    """A stochastic solver left its validity domain (positivity, NaN)."""


def fig2_initial_state(renormalize: bool = True) -> np.ndarray:
    """The benchmark initial superposition 0.4123|1> + 0.1|2> + (0.9+0.1i)|3>.

    Its printed amplitudes have norm 0.999996 rather than exactly 1; by
    default the state is renormalized on load.
    """
    psi = np.array([0.4123, 0.1, 0.9 + 0.1j], dtype=complex)
    if renormalize:
        psi = psi / np.sqrt(np.vdot(psi, psi).real)
    return psi


@dataclass
class ThreeLevelScenario:
    gamma1: float = 0.5
    gamma2: float = 1.0
    psi0: np.ndarray = field(default_factory=fig2_initial_state)
    dt: float = 1e-3
    t_final: float = 4.0

    def __post_init__(self):
        self.psi0 = np.asarray(self.psi0, dtype=complex)
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise ValueError("decay rates must be non-negative")
        if self.dt <= 0 or self.t_final <= 0:
            raise ValueError("dt and t_final must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def warnings(self) -> list[str]:
        out = []
        if self.dt * (self.gamma1 + self.gamma2) > 0.01:
            out.append(
                f"dt*(gamma1+gamma2) = {self.dt * (self.gamma1 + self.gamma2):.3g} > 0.01; "
                "first-order stepping may be inaccurate"
            )
        return out

    def params(self) -> dict:
        return {
            "model": "three-level-homodyne",
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
            "dt": self.dt,
            "t_final": self.t_final,
            "psi0": np.array2string(self.psi0, precision=12),
        }

    def hash(self) -> str:
        return scenario_hash(self.params())


@dataclass
class OstensibleSSEConfig:
    """Reference-law parameters for the linear SSE ensemble.

    lam is the mean of the real-channel reference law; mu is the mean of the
    fictitious-channel law, either a number (static) or "adaptive" (mean
    recomputed each step from the trajectory state).
    """

    lam: float = 0.0
    mu: float | str = 0.0
    n: int = 1000

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("ensemble size must be >= 1")
        if isinstance(self.mu, str) and self.mu != "adaptive":
            raise ValueError(f"mu must be a number or 'adaptive', got {self.mu!r}")

    @property
    def adaptive(self) -> bool:
        return self.mu == "adaptive"


# ---------------------------------------------------------------------------
# Master equation


def me_step(rho: np.ndarray, dt: float, sc: ThreeLevelScenario) -> np.ndarray:
    """One explicit Euler step of the undriven master equation."""
    return rho + dt * (
        sc.gamma1 * lindblad_dissipator(L1, rho) + sc.gamma2 * lindblad_dissipator(L2, rho)
    )


def me_solve(sc: ThreeLevelScenario, out_every: int = 1):
    """Solve the master equation; returns (t, rhos) at the output times.

    Raises SolverError if the trace drifts by more than 1e-6 over the run
    (the generator is traceless, so drift signals dt trouble).
    """
    rho = np.outer(sc.psi0, sc.psi0.conj())
    rho = rho / np.trace(rho).real
    out_idx = output_indices(sc.n_steps, out_every)
    out = np.empty((len(out_idx), 3, 3), dtype=complex)
    out[0] = rho
    pos = 1
    for k in range(1, sc.n_steps + 1):
        rho = me_step(rho, sc.dt, sc)
        if pos < len(out_idx) and k == out_idx[pos]:
            out[pos] = rho
            pos += 1
    drift = abs(np.trace(out[-1]).real - 1.0)
    if drift > 1e-6:
        raise SolverError(f"master-equation trace drift {drift:.2e} > 1e-6; reduce dt")
    return out_idx * sc.dt, out


# ---------------------------------------------------------------------------
# Stochastic master equation (conditioned on the homodyne record)


def _sme_kraus_update(rho: np.ndarray, rdt, dt: float, g1: float, g2: float) -> np.ndarray:
    """K rho K+ + dt*g2 L2 rho L2+ with K = 1 + sqrt(g1) r dt L1 - dt(g1+g2)P3/2.

    Completely positive by construction; works on a single matrix or on a
    batch with rho (n, 3, 3) and rdt (n,).
    """
    batched = rho.ndim == 3
    n = rho.shape[0] if batched else 1
    k = np.zeros((n, 3, 3), dtype=complex)
    k[:, 0, 0] = 1.0
    k[:, 1, 1] = 1.0
    k[:, 2, 2] = 1.0 - 0.5 * (g1 + g2) * dt
    k[:, 0, 2] = np.sqrt(g1) * np.atleast_1d(rdt)
    r = rho if batched else rho[None]
    out = np.matmul(np.matmul(k, r), k.conj().transpose(0, 2, 1))
    out[:, 1, 1] += dt * g2 * r[:, 2, 2].real
    out /= np.trace(out, axis1=1, axis2=2).real[:, None, None]
    out = 0.5 * (out + out.conj().transpose(0, 2, 1))
    return out if batched else out[0]


def _check_positive(rho: np.ndarray, t: float, tol: float = 1e-4) -> None:
    w = np.linalg.eigvalsh(rho if rho.ndim == 3 else rho[None])
    wmin = float(np.min(w))
    if wmin < -tol:
        raise SolverError(f"conditioned state lost positivity at t={t:.4g}: min eig {wmin:.3e}")


def sme_step(rho: np.ndarray, dt: float, sc: ThreeLevelScenario, stream: NoiseStream):
    """One conditioned step; returns (rho', r) with r*dt = dW + dt*sqrt(g1)<x1>."""
    mean_signal = np.sqrt(sc.gamma1) * float(np.einsum("ij,ji->", X1, rho).real)
    r = sample_real_record_quantum(mean_signal, dt, stream)
    return _sme_kraus_update(rho, r * dt, dt, sc.gamma1, sc.gamma2), r


def sme_reference_run(sc: ThreeLevelScenario, seed: int, out_every: int = 1, stream_id: int = 0):
    """Generate one conditioned trajectory and its record (stream 0).

    Returns (t, rhos, record); record values feed the ostensible solver.
    """
    stream = NoiseStream(seed, stream_id)
    rho = np.outer(sc.psi0, sc.psi0.conj())
    rho = rho / np.trace(rho).real
    n_steps = sc.n_steps
    out_idx = output_indices(n_steps, out_every)
    rhos = np.empty((len(out_idx), 3, 3), dtype=complex)
    rhos[0] = rho
    rvals = np.empty(n_steps)
    pos = 1
    for k in range(1, n_steps + 1):
        rho, r = sme_step(rho, sc.dt, sc, stream)
        rvals[k - 1] = r
        if pos < len(out_idx) and k == out_idx[pos]:
            rhos[pos] = rho
            _check_positive(rho, k * sc.dt)
            pos += 1
    record = Record(dt=sc.dt, values=rvals, channel="real", scenario_hash=sc.hash())
    return out_idx * sc.dt, rhos, record


def sme_ensemble_runs(sc: ThreeLevelScenario, seed: int, n: int, out_every: int = 100):
    """n independent conditioned trajectories (streams 0..n-1), vectorized.

    Returns (t, rhos) with rhos of shape (T, n, 3, 3); used for
    unconditional-average checks.
    """
    streams = make_streams(seed, 0, 0, n)
    rho = np.tile(np.outer(sc.psi0, sc.psi0.conj()) / np.vdot(sc.psi0, sc.psi0).real, (n, 1, 1))
    n_steps = sc.n_steps
    out_idx = output_indices(n_steps, out_every)
    out = np.empty((len(out_idx), n, 3, 3), dtype=complex)
    out[0] = rho
    sq1 = np.sqrt(sc.gamma1)
    buf = np.empty((n, NOISE_CHUNK))
    pos, filled, base = 1, 0, 0
    for k in range(1, n_steps + 1):
        if k - 1 >= base + filled:
            base += filled
            fill_noise(streams, buf, n_steps - base, np.sqrt(sc.dt))
            filled = min(NOISE_CHUNK, n_steps - base)
        dw = buf[:, k - 1 - base]
        mean = sq1 * np.einsum("ij,nji->n", X1, rho).real
        rdt = dw + sc.dt * mean
        rho = _sme_kraus_update(rho, rdt, sc.dt, sc.gamma1, sc.gamma2)
        if pos < len(out_idx) and k == out_idx[pos]:
            out[pos] = rho
            _check_positive(rho, k * sc.dt)
            pos += 1
    return out_idx * sc.dt, out


# ---------------------------------------------------------------------------
# Ostensible linear SSE


def kraus_homodyne_step(psi: np.ndarray, r: float, f: float, dt: float, sc: ThreeLevelScenario):
    """Apply the operator part of the dual homodyne measurement operator.

    M(r, f) = 1 + sqrt(g1) r dt L1 + sqrt(g2) f dt L2
              - dt (g1 L1+L1 + g2 L2+L2)/2,
    i.e. the one-step measurement operator stripped of its Gaussian scalar
    prefactors.  Returns the (unnormalized) new state.
    """
    c1, c2, c3 = psi
    g = sc.gamma1 + sc.gamma2
    return np.array(
        [
            c1 + np.sqrt(sc.gamma1) * r * dt * c3,
            c2 + np.sqrt(sc.gamma2) * f * dt * c3,
            c3 * (1.0 - 0.5 * g * dt),
        ],
        dtype=complex,
    )


def adaptive_mu(psi_bar: np.ndarray, sc: ThreeLevelScenario) -> float:
    """Reference-law mean sqrt(g2) <L2 + L2+> / <psi|psi> of the current state."""
    n2 = float(np.vdot(psi_bar, psi_bar).real)
    if n2 <= 0.0:
        raise ValueError("zero-norm state has no adaptive reference mean")
    x2 = 2.0 * float((np.conj(psi_bar[1]) * psi_bar[2]).real)
    return np.sqrt(sc.gamma2) * x2 / n2


def _ossse_apply(psi, r, dW, dt, g1, g2, lam, mu):
    """One linear SSE step (component form derived from the operator form)."""
    sq1, sq2 = np.sqrt(g1), np.sqrt(g2)
    a = (r - lam) * dt
    c1, c2, c3 = psi
    s = -0.5 * (lam * a + mu * dW) - 0.125 * (lam * lam + mu * mu) * dt
    return np.array(
        [
            c1 + sq1 * a * c3 + 0.5 * sq1 * lam * dt * c3 + s * c1,
            c2 + sq2 * dW * c3 + 0.5 * sq2 * mu * dt * c3 + s * c2,
            c3 - 0.5 * (g1 + g2) * dt * c3 + s * c3,
        ],
        dtype=complex,
    )


def ossse_step(
    psi_bar: np.ndarray,
    w: LogWeight,
    r: float,
    dt: float,
    sc: ThreeLevelScenario,
    config: OstensibleSSEConfig,
    stream: NoiseStream,
):
    """One step of the linear SSE; returns (psi', w, f).

    The update is norm-non-preserving and no renormalization is applied (the
    state's norm is the Girsanov weight); w is passed through unchanged.
    The fictitious result f is sampled from the reference law.
    """
    mu = adaptive_mu(psi_bar, sc) if config.adaptive else float(config.mu)
    dist = OstensibleDistribution(mode="static", mean_param=mu)
    f = sample_fictitious(dist, dt, stream)
    dW = (f - mu) * dt
    psi_new = _ossse_apply(psi_bar, r, dW, dt, sc.gamma1, sc.gamma2, config.lam, mu)
    if not np.all(np.isfinite(psi_new.view(float))):
        raise SolverError("NaN in ostensible state amplitudes")
    return psi_new, w, f


def estimate_rho_R(trajectories) -> np.ndarray:
    """Weighted pure-state estimator of the conditioned mixed state.

    trajectories: iterable of (psi_bar, LogWeight).  The estimate is
    E[|psi><psi| e^w] / E[<psi|psi> e^w], stabilized by subtracting the
    maximum log-weight; output is exactly Hermitian with unit trace.
    """
    psis = np.array([np.asarray(p, dtype=complex) for p, _ in trajectories])
    logw = np.array([w.log_p if isinstance(w, LogWeight) else float(w) for _, w in trajectories])
    if len(psis) < 1:
        raise ValueError("need at least one trajectory")
    m = np.max(logw)
    scaled = np.exp(logw - m)
    num = np.einsum("n,ni,nj->ij", scaled, psis, psis.conj())
    den = float(np.einsum("n,ni,ni->", scaled, psis, psis.conj()).real)
    if den == 0.0:
        raise ValueError("all trajectory weights are zero")
    rho = num / den
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def ostensible_ensemble(
    sc: ThreeLevelScenario,
    record: Record,
    config: OstensibleSSEConfig,
    seed: int,
    prefixes=None,
    out_every: int = 10,
    threads: int = 1,
    batch_size: int | None = None,
):
    """Replay a stored record through a weighted linear-SSE ensemble.

    Returns (t, {prefix: rho series (T, 3, 3)}).  Prefixes are nested
    ensemble sizes evaluated from one trajectory pool (trajectory i uses
    stream seed id i+1; stream 0 belongs to the record generator), so
    estimates at different n are consistent and the whole run is
    deterministic for a given seed regardless of batching or thread count.
    """
    if record.channel != "real":
        raise RecordFormatError("ostensible solver replays the real-channel record")
    if record.dt != sc.dt:
        raise RecordFormatError(f"record dt {record.dt} does not match scenario dt {sc.dt}")
    if record.scenario_hash and record.scenario_hash != sc.hash():
        raise RecordFormatError("record was generated for a different scenario")
    prefixes = sorted(prefixes) if prefixes else [config.n]
    if max(prefixes) > config.n:
        raise ValueError("prefix larger than ensemble size")
    rvals = record.values
    n_steps = len(rvals)
    out_idx = output_indices(n_steps, out_every)
    psi0 = sc.psi0 / np.sqrt(np.vdot(sc.psi0, sc.psi0).real)
    mu_static = 0.0 if config.adaptive else float(config.mu)

    def batch_fn(lo, hi):
        nb = hi - lo
        streams = make_streams(seed, 1, lo, hi)
        c = np.tile(psi0, (nb, 1))
        logw = np.zeros(nb)
        buf = np.empty((nb, NOISE_CHUNK))
        partials = [prefix_partial_sums(lo, logw, _outer(c), prefixes)]
        base = 0
        pos = 1
        while base < n_steps:
            hi_k = min(base + NOISE_CHUNK, n_steps)
            fill_noise(streams, buf, n_steps - base, np.sqrt(sc.dt))
            a = base
            while a < hi_k:
                b = out_idx[pos] if pos < len(out_idx) and out_idx[pos] <= hi_k else hi_k
                status = kernels.qtraj_ostensible_segment(
                    c,
                    logw,
                    rvals[a:b],
                    buf[:, a - base : b - base],
                    sc.dt,
                    sc.gamma1,
                    sc.gamma2,
                    config.lam,
                    mu_static,
                    config.adaptive,
                )
                if status >= 0:
                    raise SolverError(f"trajectory {lo + status} produced a bad weight factor")
                if pos < len(out_idx) and b == out_idx[pos]:
                    if not np.all(np.isfinite(logw)):
                        raise SolverError(
                            f"non-finite trajectory weight by step {b}; dt too large"
                        )
                    partials.append(prefix_partial_sums(lo, logw, _outer(c), prefixes))
                    pos += 1
                a = b
            base = hi_k
        return partials

    per_batch = run_batches(config.n, batch_fn, threads=threads,
                            batch_size=batch_size or BATCH_SIZE)
    series = {p: np.empty((len(out_idx), 3, 3), dtype=complex) for p in prefixes}
    for j in range(len(out_idx)):
        combined = combine_prefix_partials([pb[j] for pb in per_batch], prefixes)
        for p, (num, den) in combined.items():
            rho = num / den
            rho = 0.5 * (rho + rho.conj().T)
            series[p][j] = rho / np.trace(rho).real
    return out_idx * sc.dt, series


def _outer(c: np.ndarray) -> np.ndarray:
    return np.einsum("ni,nj->nij", c, c.conj())


# ---------------------------------------------------------------------------
# Exact two-step enumeration oracle


def two_step_oracle(sc: ThreeLevelScenario, dt: float = 0.01) -> dict:
    """Exact finite-outcome check of the pure-state decomposition.

    Both noise channels are discretized to two outcomes +-1/sqrt(dt) with
    reference probability 1/2 each, which keeps (r dt)^2 = dt exact, and two
    time steps are enumerated exhaustively (16 outcome paths).  For every
    real record R the report contains

    * girsanov_err: max |sum_F <psi|psi> Lambda(F,R) - P(R)|,
    * decomposition_err: max difference between the weighted pure-state sum
      and the conditioned state from the direct operation product,
    * bg_discrepancy: same comparison for the normalized decomposition whose
      fictitious outcomes are weighted by their step-local conditional
      probabilities; nonzero whenever the unobserved channel is active.
    """
    outcomes = np.array([1.0, -1.0]) / np.sqrt(dt)
    lam0 = 0.5  # reference probability of each outcome, per channel
    psi0 = sc.psi0 / np.sqrt(np.vdot(sc.psi0, sc.psi0).real)
    rho0 = np.outer(psi0, psi0.conj())

    def mstep(psi, r, f):
        return kraus_homodyne_step(psi, r, f, dt, sc)

    def operation(rho, r):
        out = np.zeros_like(rho)
        for f in outcomes:
            m = np.column_stack([mstep(e, r, f) for e in np.eye(3, dtype=complex)])
            out += lam0 * lam0 * (m @ rho @ m.conj().T)
        return out

    girsanov_err = 0.0
    decomposition_err = 0.0
    bg_discrepancy = 0.0
    for r1 in outcomes:
        for r2 in outcomes:
            rho_tilde = operation(operation(rho0, r1), r2)
            p_r = float(np.trace(rho_tilde).real)
            rho_direct = rho_tilde / p_r

            # Ostensible route: unnormalized pure states, flat reference law.
            total_p = 0.0
            rho_sum = np.zeros((3, 3), dtype=complex)
            for f1 in outcomes:
                for f2 in outcomes:
                    psi = mstep(mstep(psi0, r1, f1), r2, f2)
                    lam_fr = lam0**4
                    total_p += float(np.vdot(psi, psi).real) * lam_fr
                    rho_sum += lam_fr * np.outer(psi, psi.conj())
            girsanov_err = max(girsanov_err, abs(total_p - p_r))
            decomposition_err = max(
                decomposition_err, float(np.max(np.abs(rho_sum / p_r - rho_direct)))
            )

            # Normalized route: states renormalized each step, fictitious
            # outcomes weighted by their step-local conditional probability.
            rho_bg = np.zeros((3, 3), dtype=complex)
            for f1 in outcomes:
                for f2 in outcomes:
                    psi, wgt = psi0, 1.0
                    for r, f in ((r1, f1), (r2, f2)):
                        probs = {
                            fo: lam0 * float(np.vdot(mstep(psi, r, fo), mstep(psi, r, fo)).real)
                            for fo in outcomes
                        }
                        tot = sum(probs.values())
                        wgt *= probs[f] / tot
                        psi = mstep(psi, r, f)
                        psi = psi / np.sqrt(np.vdot(psi, psi).real)
                    rho_bg += wgt * np.outer(psi, psi.conj())
            bg_discrepancy = max(bg_discrepancy, float(np.max(np.abs(rho_bg - rho_direct))))

    return {
        "dt": dt,
        "girsanov_err": girsanov_err,
        "decomposition_err": decomposition_err,
        "bg_discrepancy": bg_discrepancy,
    }
