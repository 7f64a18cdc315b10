"""Classical system with an internal unobservable white-noise drive, measured
with Gaussian precision.

The benchmark system has linear drift A(x) = -k x + l and constant diffusion
amplitude b, so the conditioned distribution stays Gaussian and the filter
reduces to two ODE-like recursions for mean and variance (the exact
reference).  A general grid solver for the nonlinear filtering equation and
the weighted-particle method (particle SDE + multiplicative Girsanov weight,
no resampling) are provided alongside, with an exact finite-outcome oracle
tying the particle decomposition to the Bayesian update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend import kernels
from .ensemble import (
    BATCH_SIZE,
    NOISE_CHUNK,
    fill_noise,
    make_streams,
    output_indices,
    run_batches,
)
from .stochproc import (
    LogWeight,
    NoiseStream,
    Record,
    RecordFormatError,
    WeightUnderflowError,
    combine_partials,
    log_weight_update,
    scenario_hash,
    weighted_sums,
)


@dataclass
class ClassicalScenario:
    """Linear-drift scenario: A(x) = -k x + l, D(x) = b, readout strength beta."""

    k: float = 1.0
    l: float = 1.0
    b: float = 1.0
    beta: float = 1.0
    m: float = 0.0  # internal-noise mean
    dt: float = 1e-3
    t_final: float = 5.0
    init_mean: float = 0.0
    init_var: float = 0.1  # 0 = point mass at init_mean
    x_min: float = -6.0
    x_max: float = 6.0
    n_grid: int = 241

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.b < 0:
            raise ValueError("diffusion amplitude must be non-negative")
        if self.init_var < 0:
            raise ValueError("initial variance must be non-negative")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_grid - 1)

    def grid(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_grid)

    def drift(self, x):
        return -self.k * x + self.l

    def stationary_variance(self) -> float:
        """Fixed point of the variance recursion: -v^2/beta - 2kv + b^2 = 0."""
        return -self.k * self.beta + np.sqrt(
            self.k**2 * self.beta**2 + self.beta * self.b**2
        )

    def params(self) -> dict:
        return {
            "model": "classical-linear-gaussian",
            "k": self.k,
            "l": self.l,
            "b": self.b,
            "beta": self.beta,
            "m": self.m,
            "dt": self.dt,
            "t_final": self.t_final,
            "init_mean": self.init_mean,
            "init_var": self.init_var,
        }

    def hash(self) -> str:
        return scenario_hash(self.params())

    def warnings(self) -> list[str]:
        out = []
        if self.dt > self.dx**2 / max(self.b**2, 1e-300):
            out.append(
                f"dt = {self.dt:.3g} violates the grid CFL bound dx^2/b^2 = "
                f"{self.dx ** 2 / self.b ** 2:.3g}"
            )
        spread = self.t_final * max(self.init_var, self.b**2 / max(2 * self.k, 1e-12)) / self.beta
        if spread > 20:
            out.append(
                f"expected log-weight spread ~{spread:.0f} over the run; "
                "weights may underflow (reduce t_final or increase beta)"
            )
        return out


@dataclass
class GaussianFilterState:
    mean: float
    var: float

    def __post_init__(self):
        if self.var <= 0:
            raise ValueError("filter variance must stay positive")


@dataclass
class WeightedParticle:
    x: float
    w: LogWeight


def linear_sde_step(x, f, m: float, dt: float, sc: ClassicalScenario):
    """dx = dt A(x) + dt (f - m) D(x) for the back-action noise result f."""
    return x + dt * sc.drift(x) + dt * (f - m) * sc.b


def kalman_exact_step(state: GaussianFilterState, r: float, dt: float, sc: ClassicalScenario):
    """Exact Gaussian filter recursion for the linear scenario."""
    mean = state.mean + dt * (
        state.var * (r - state.mean) / sc.beta - sc.k * state.mean + sc.l
    )
    var = state.var + dt * (-state.var**2 / sc.beta - 2 * sc.k * state.var + sc.b**2)
    return GaussianFilterState(mean, var)


def kalman_reference_run(sc: ClassicalScenario, seed: int, out_every: int = 1, stream_id: int = 0):
    """Run the exact filter while generating the readout record it conditions on.

    r = <x>_t + sqrt(beta) dW/dt; returns (t, means, vars, Record).
    """
    stream = NoiseStream(seed, stream_id)
    state = GaussianFilterState(sc.init_mean, sc.init_var if sc.init_var > 0 else 1e-12)
    n_steps = sc.n_steps
    out_idx = output_indices(n_steps, out_every)
    means = np.empty(len(out_idx))
    varis = np.empty(len(out_idx))
    means[0], varis[0] = state.mean, state.var
    rvals = np.empty(n_steps)
    sqdt = np.sqrt(sc.dt)
    pos = 1
    for k in range(1, n_steps + 1):
        dw = stream.normal() * sqdt
        r = state.mean + np.sqrt(sc.beta) * dw / sc.dt
        rvals[k - 1] = r
        state = kalman_exact_step(state, r, sc.dt, sc)
        if pos < len(out_idx) and k == out_idx[pos]:
            means[pos], varis[pos] = state.mean, state.var
            pos += 1
    record = Record(dt=sc.dt, values=rvals, channel="real", scenario_hash=sc.hash())
    return out_idx * sc.dt, means, varis, record


# ---------------------------------------------------------------------------
# Grid solver for the nonlinear filtering equation


def grid_moments(x: np.ndarray, p: np.ndarray, dx: float):
    mean = float(np.sum(x * p) * dx)
    var = float(np.sum((x - mean) ** 2 * p) * dx)
    return mean, var


def initial_grid_density(sc: ClassicalScenario) -> np.ndarray:
    x = sc.grid()
    if sc.init_var > 0:
        p = np.exp(-((x - sc.init_mean) ** 2) / (2 * sc.init_var))
    else:
        p = np.zeros_like(x)
        p[np.argmin(np.abs(x - sc.init_mean))] = 1.0
    return p / (np.sum(p) * sc.dx)


def kse_grid_step(
    p: np.ndarray,
    r: float,
    dt: float,
    sc: ClassicalScenario,
    renormalize: bool = True,
    innovation: str = "exact",
) -> np.ndarray:
    """One step of the grid filtering equation (innovation, drift, diffusion).

    Conservative central differences with zero-flux boundaries: the
    drift/diffusion part conserves mass to roundoff.  Rejects dt above the
    diffusive CFL bound.

    innovation="exact" multiplies by the full Gaussian likelihood
    exp[(x - <x>)(r - <x>) dt/beta - (x - <x>)^2 dt/(2 beta)]; this equals
    the first-order innovation term to O(dt) but drops its mean-zero O(dt)
    noise (which otherwise random-walks the tracked variance by O(sqrt(dt)))
    and keeps the density non-negative.  innovation="linear" applies the
    literal first-order term 1 + (x - <x>)(r - <x>) dt/beta, which
    integrates to zero against the same quadrature, so renormalization only
    removes O(dt^2) residue.
    """
    dx = sc.dx
    if sc.b > 0 and dt > dx * dx / (sc.b * sc.b):
        raise ValueError(f"CFL violation: dt={dt} > dx^2/b^2={dx * dx / sc.b ** 2}")
    x = sc.grid()
    mean = float(np.sum(x * p) * dx)
    # Flux at cell midpoints: (k x - l) P + (b^2/2) dP/dx  (zero at both ends).
    xm = 0.5 * (x[1:] + x[:-1])
    flux = (sc.k * xm - sc.l) * 0.5 * (p[1:] + p[:-1]) + 0.5 * sc.b**2 * (p[1:] - p[:-1]) / dx
    new = p.copy()
    new[1:-1] += dt * (flux[1:] - flux[:-1]) / dx
    new[0] += dt * flux[0] / dx
    new[-1] += dt * -flux[-1] / dx
    delta = x - mean
    if innovation == "exact":
        new *= np.exp(delta * (r - mean) * dt / sc.beta - delta**2 * dt / (2 * sc.beta))
    elif innovation == "linear":
        new += dt * delta * (r - mean) * p / sc.beta
        np.maximum(new, 0.0, out=new)
    else:
        raise ValueError(f"unknown innovation mode {innovation!r}")
    if renormalize:
        new /= np.sum(new) * dx
    return new


def kse_grid_run(sc: ClassicalScenario, record: Record, out_every: int = 1):
    """Replay a record through the grid solver; returns (t, means, vars).

    Asserts mass conservation |int P dx - 1| <= 1e-9 after each renormalized
    output step.
    """
    _check_record(sc, record)
    x = sc.grid()
    p = initial_grid_density(sc)
    n_steps = len(record.values)
    out_idx = output_indices(n_steps, out_every)
    means = np.empty(len(out_idx))
    varis = np.empty(len(out_idx))
    means[0], varis[0] = grid_moments(x, p, sc.dx)
    pos = 1
    for k in range(1, n_steps + 1):
        p = kse_grid_step(p, record.values[k - 1], sc.dt, sc)
        if pos < len(out_idx) and k == out_idx[pos]:
            mass = np.sum(p) * sc.dx
            if abs(mass - 1.0) > 1e-9:
                raise RuntimeError(f"grid mass drift {mass - 1.0:.2e} at step {k}")
            means[pos], varis[pos] = grid_moments(x, p, sc.dx)
            pos += 1
    return out_idx * sc.dt, means, varis


# ---------------------------------------------------------------------------
# Weighted-particle method


def sample_initial_particles(sc: ClassicalScenario, n: int, stream: NoiseStream) -> np.ndarray:
    """i.i.d. draws from the initial distribution; point mass if init_var = 0."""
    if n < 1:
        raise ValueError("need at least one particle")
    if sc.init_var > 0:
        return sc.init_mean + np.sqrt(sc.init_var) * stream.normals(n)
    return np.full(n, sc.init_mean)


def particle_weight_step(
    w: LogWeight, x: float, f: float, r: float, dt: float, sc: ClassicalScenario,
    lam: float, mu: float,
) -> LogWeight:
    """Multiplicative Girsanov factor 1 + dt(m-mu)(f-mu) + dt(x-lam)(r-lam)/beta."""
    fac = 1.0 + dt * (sc.m - mu) * (f - mu) + dt * (x - lam) * (r - lam) / sc.beta
    return log_weight_update(w, fac)


def estimate_classical_moments(particles):
    """Weighted mean and variance from particles.

    Accepts a list of WeightedParticle or a pair (x array, log-weight array).
    """
    if isinstance(particles, tuple):
        x, logw = particles
        x = np.asarray(x, dtype=float)
        logw = np.asarray(logw, dtype=float)
    else:
        x = np.array([p.x for p in particles], dtype=float)
        logw = np.array([p.w.log_p for p in particles], dtype=float)
    if len(x) < 1:
        raise ValueError("need at least one particle")
    num, den, _ = weighted_sums(logw, np.column_stack([x, x * x]))
    if den == 0.0:
        raise ValueError("all particle weights are zero")
    mean = num[0] / den
    var = num[1] / den - mean * mean
    return float(mean), float(max(var, 0.0))


def _check_record(sc: ClassicalScenario, record: Record) -> None:
    if record.channel != "real":
        raise RecordFormatError("particle/grid solvers replay the real-channel record")
    if record.dt != sc.dt:
        raise RecordFormatError(f"record dt {record.dt} != scenario dt {sc.dt}")
    if record.scenario_hash and record.scenario_hash != sc.hash():
        raise RecordFormatError("record was generated for a different scenario")


def particle_ensemble(
    sc: ClassicalScenario,
    record: Record,
    n: int,
    seed: int,
    lam: float = 0.0,
    mu: float = 0.0,
    prefixes=None,
    out_every: int = 10,
    threads: int = 1,
    batch_size: int | None = None,
    snapshot_positions=(),
):
    """Replay a record through the weighted-particle ensemble.

    Returns (t, {prefix: (mean, var, ess) arrays}) or, when
    snapshot_positions (output-time indices) is non-empty,
    (t, per-prefix, {pos: (x, logw)}) with the raw pool state for bootstrap
    analysis.  Particle i draws its initial position and then one noise
    variate per step from stream i+1.  No resampling is performed (the
    estimator under test is pure importance sampling); the effective sample
    size is reported as a diagnostic only.
    """
    _check_record(sc, record)
    prefixes = sorted(prefixes) if prefixes else [n]
    if max(prefixes) > n:
        raise ValueError("prefix larger than ensemble size")
    snapshot_positions = set(snapshot_positions)
    rvals = record.values
    n_steps = len(rvals)
    out_idx = output_indices(n_steps, out_every)

    def batch_fn(lo, hi):
        nb = hi - lo
        streams = make_streams(seed, 1, lo, hi)
        if sc.init_var > 0:
            x = sc.init_mean + np.sqrt(sc.init_var) * np.array([s.normal() for s in streams])
        else:
            x = np.full(nb, sc.init_mean)
        logw = np.zeros(nb)
        buf = np.empty((nb, NOISE_CHUNK))
        partials = [_moment_partials(lo, x, logw, prefixes)]
        snaps = {0: (x.copy(), logw.copy())} if 0 in snapshot_positions else {}
        base, pos = 0, 1
        while base < n_steps:
            hi_k = min(base + NOISE_CHUNK, n_steps)
            fill_noise(streams, buf, n_steps - base, np.sqrt(sc.dt))
            a = base
            while a < hi_k:
                b = out_idx[pos] if pos < len(out_idx) and out_idx[pos] <= hi_k else hi_k
                status = kernels.classical_particles_segment(
                    x, logw, rvals[a:b], buf[:, a - base : b - base],
                    sc.dt, sc.k, sc.l, sc.b, sc.beta, lam, mu, sc.m,
                )
                if status >= 0:
                    raise WeightUnderflowError(
                        f"particle {lo + status} hit a non-positive weight factor; reduce dt"
                    )
                if pos < len(out_idx) and b == out_idx[pos]:
                    partials.append(_moment_partials(lo, x, logw, prefixes))
                    if pos in snapshot_positions:
                        snaps[pos] = (x.copy(), logw.copy())
                    pos += 1
                a = b
            base = hi_k
        return partials, snaps

    results = run_batches(n, batch_fn, threads=threads,
                            batch_size=batch_size or BATCH_SIZE)
    per_batch = [r[0] for r in results]
    snapshots = {
        j: (
            np.concatenate([r[1][j][0] for r in results]),
            np.concatenate([r[1][j][1] for r in results]),
        )
        for j in snapshot_positions
    }
    out = {}
    for p in prefixes:
        means = np.empty(len(out_idx))
        varis = np.empty(len(out_idx))
        ess = np.empty(len(out_idx))
        out[p] = (means, varis, ess)
    for j in range(len(out_idx)):
        for p in prefixes:
            parts = [pb[j][p] for pb in per_batch if p in pb[j]]
            (num, den, m_star) = combine_partials([q[0] for q in parts])
            sq_den = sum(q[1] * np.exp(2.0 * (q[0][2] - m_star)) for q in parts)
            mean = num[0] / den
            var = max(num[1] / den - mean * mean, 0.0)
            out[p][0][j] = mean
            out[p][1][j] = var
            out[p][2][j] = den * den / sq_den
    if snapshot_positions:
        return out_idx * sc.dt, out, snapshots
    return out_idx * sc.dt, out


def _moment_partials(lo, x, logw, prefixes):
    """Per-prefix ((num, den, m), sum-of-squared-weights) for moment estimates."""
    vals = np.column_stack([x, x * x])
    out = {}
    nb = len(x)
    for p in prefixes:
        hi = min(p - lo, nb)
        if hi > 0:
            triple = weighted_sums(logw[:hi], vals[:hi])
            mref = triple[2]
            sq = float(np.sum(np.exp(2.0 * (logw[:hi] - mref))))
            out[p] = (triple, sq)
    return out


# ---------------------------------------------------------------------------
# Exact one-step enumeration oracle


def one_step_oracle(sc: ClassicalScenario | None = None, dt: float = 0.01) -> dict:
    """Exact finite-outcome check of the weighted-particle decomposition.

    The readout is discretized to two outcomes +-sqrt(beta/dt) with
    likelihood F_r(x) = (1 + r x dt/beta)/2 (which sums to one exactly), the
    internal noise to +-1/sqrt(dt) with probability 1/2, and the initial
    distribution is a three-atom discrete law.  With lam = mu = 0 the
    particle weight factor equals the exact likelihood ratio, so the
    weighted decomposition must reproduce the Bayesian update to roundoff,
    and the reference-law-weighted total must reproduce P(r) exactly.
    """
    sc = sc or ClassicalScenario(dt=dt)
    xs = np.array([-0.7, 0.4, 1.3])
    qs = np.array([0.3, 0.5, 0.2])
    fs = np.array([1.0, -1.0]) / np.sqrt(dt)
    out = {"dt": dt, "weight_err": 0.0, "moment_err": 0.0, "p_r_err": 0.0}
    for r in (np.sqrt(sc.beta / dt), -np.sqrt(sc.beta / dt)):
        lik = 0.5 * (1.0 + r * xs * dt / sc.beta)
        p_r = float(np.sum(qs * lik))
        # Direct Bayesian update: atoms (x', weight) for each (atom, noise).
        direct = {}
        for i, x0 in enumerate(xs):
            for f in fs:
                xn = linear_sde_step(x0, f, sc.m, dt, sc)
                direct[(i, f)] = qs[i] * 0.5 * lik[i] / p_r
        # Particle route: same enumeration, weights via the Girsanov factor.
        traj = {}
        total = 0.0
        for i, x0 in enumerate(xs):
            for f in fs:
                w = particle_weight_step(LogWeight(np.log(qs[i])), x0, f, r, dt, sc, 0.0, 0.0)
                traj[(i, f)] = 0.5 * w.p
                total += 0.5 * w.p * 0.5  # times Lambda(r) = 1/2
        # sum_F E[p] * Lambda(f) * Lambda(r) recovers P(r) exactly here
        # because the two-point likelihood is linear in x.
        out["p_r_err"] = max(out["p_r_err"], abs(total - p_r))
        norm = sum(traj.values())
        for key in direct:
            out["weight_err"] = max(out["weight_err"], abs(traj[key] / norm - direct[key]))
        xn = {k: linear_sde_step(xs[k[0]], k[1], sc.m, dt, sc) for k in direct}
        m_direct = sum(direct[k] * xn[k] for k in direct)
        m_part = sum(traj[k] * xn[k] for k in direct) / norm
        out["moment_err"] = max(out["moment_err"], abs(m_direct - m_part))
    return out
