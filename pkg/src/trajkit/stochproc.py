"""Random-number streams, Wiener increments, measurement records and
Girsanov log-weights.

Reproducibility contract: every stochastic quantity in the package is drawn
from a counter-based Philox stream keyed by (seed, stream_id), so ensembles
can be evaluated in any order, in batches, or in parallel with bit-identical
results.  Trajectory i of an ensemble owns stream_id i (stream 0 is reserved
for the reference solver that generates the real record).  Weighted
reductions must run in stream_id order; `combine_partials` below implements
the stable, deterministic combination rule used everywhere.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


class WeightUnderflowError(ValueError):
    """A multiplicative weight factor was <= 0: dt too large for the weight SDE."""


class RecordFormatError(ValueError):
    """Malformed record file or metadata mismatch on replay."""


class NoiseStream:
    """Counter-based Gaussian stream for one trajectory.

    Same (seed, stream_id) always reproduces the same sequence; the counter
    records how many variates have been consumed.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.counter = 0
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        self._gen = np.random.Generator(np.random.Philox(ss))

    def normal(self) -> float:
        self.counter += 1
        return float(self._gen.standard_normal())

    def normals(self, n: int) -> np.ndarray:
        self.counter += int(n)
        return self._gen.standard_normal(int(n))

    def __repr__(self):
        return f"NoiseStream(seed={self.seed}, stream_id={self.stream_id}, counter={self.counter})"


def wiener_increment(stream: NoiseStream, dt: float) -> float:
    """One Wiener increment dW ~ N(0, dt)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return stream.normal() * np.sqrt(dt)


def sample_real_record_quantum(mean_signal: float, dt: float, stream: NoiseStream) -> float:
    """Homodyne result r with r*dt = dW + dt*mean_signal.

    The caller supplies the line-signal mean, e.g. sqrt(gamma1)*<x1>_t.
    """
    dw = wiener_increment(stream, dt)
    return (dw + dt * mean_signal) / dt


def sample_real_record_classical(mean: float, beta: float, dt: float, stream: NoiseStream) -> float:
    """Gaussian-precision readout r = mean + sqrt(beta) dW/dt."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    dw = wiener_increment(stream, dt)
    return mean + np.sqrt(beta) * dw / dt


@dataclass
class OstensibleDistribution:
    """Per-step Gaussian reference law for one noise channel.

    The result scaled by dt is d(noise) + mean_param*dt with the noise
    variance variance_scale*dt.  In static mode mean_param is fixed; in
    adaptive mode the caller recomputes the mean from the current trajectory
    state before each step and passes it to `sample_fictitious`.
    """

    mode: str = "static"  # "static" | "adaptive"
    mean_param: float = 0.0
    variance_scale: float = 1.0

    def __post_init__(self):
        if self.mode not in ("static", "adaptive"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.variance_scale <= 0:
            raise ValueError("variance_scale must be positive")


def sample_fictitious(
    dist: OstensibleDistribution,
    dt: float,
    stream: NoiseStream,
    adaptive_mean: float | None = None,
) -> float:
    """Fictitious result f with f*dt = dN + mu*dt, dN ~ N(0, variance_scale*dt)."""
    if dist.mode == "adaptive":
        if adaptive_mean is None:
            raise ValueError("adaptive mode needs the state-derived mean")
        mu = float(adaptive_mean)
    else:
        mu = dist.mean_param
    dn = stream.normal() * np.sqrt(dist.variance_scale * dt)
    return (dn + mu * dt) / dt


@dataclass
class LogWeight:
    """Girsanov weight stored in log space (norm of the ostensible state)."""

    log_p: float = 0.0

    @property
    def p(self) -> float:
        return float(np.exp(self.log_p))


def log_weight_update(w: LogWeight, increment_factor: float) -> LogWeight:
    """Apply a multiplicative step p <- p * increment_factor in log space."""
    if not increment_factor > 0.0:
        raise WeightUnderflowError(
            f"weight factor {increment_factor} <= 0: dt too large for the weight SDE"
        )
    return LogWeight(w.log_p + float(np.log(increment_factor)))


@dataclass
class Record:
    """Time-indexed measurement results r_k (or f_k), with dt metadata."""

    dt: float
    values: np.ndarray
    channel: str = "real"  # "real" | "fictitious"
    scenario_hash: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.channel not in ("real", "fictitious"):
            raise ValueError(f"unknown channel {self.channel!r}")
        if self.values.size and not np.all(np.isfinite(self.values)):
            raise ValueError("record contains non-finite values")

    @property
    def total_time(self) -> float:
        return self.dt * len(self.values)


def scenario_hash(params: dict) -> str:
    """Short content hash of a flat parameter mapping."""
    canon = ";".join(f"{k}={params[k]!r}" for k in sorted(params))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def write_record(path, record: Record) -> None:
    with open(path, "w") as fh:
        fh.write(
            f"# dt={record.dt:.17g} channel={record.channel} scenario={record.scenario_hash}\n"
        )
        for v in record.values:
            fh.write(f"{v:.17g}\n")


def read_record(path, expect_dt: float | None = None, expect_scenario: str | None = None) -> Record:
    with open(path) as fh:
        header = fh.readline().strip()
        body = fh.read().split()
    fields = {}
    if header.startswith("# "):
        for tok in header[2:].split():
            if "=" in tok:
                k, v = tok.split("=", 1)
                fields[k] = v
    if set(fields) != {"dt", "channel", "scenario"}:
        raise RecordFormatError(f"bad record header: {header!r}")
    rec = Record(
        dt=float(fields["dt"]),
        values=np.array([float(v) for v in body]),
        channel=fields["channel"],
        scenario_hash=fields["scenario"],
    )
    if expect_dt is not None and rec.dt != expect_dt:
        raise RecordFormatError(f"record dt {rec.dt} does not match expected {expect_dt}")
    if expect_scenario is not None and rec.scenario_hash != expect_scenario:
        raise RecordFormatError(
            f"record scenario {rec.scenario_hash!r} does not match {expect_scenario!r}"
        )
    return rec


# ---------------------------------------------------------------------------
# Stable weighted reductions.
#
# Estimators exponentiate after subtracting the per-batch maximum log-weight;
# batches are combined in stream_id order so results do not depend on worker
# scheduling.


def weighted_sums(log_w: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Partial sums (sum_i e^{w_i - m} v_i, sum_i e^{w_i - m}, m) with m = max w."""
    log_w = np.asarray(log_w, dtype=float)
    m = float(np.max(log_w))
    scaled = np.exp(log_w - m)
    num = np.tensordot(scaled, np.asarray(values), axes=(0, 0))
    return num, float(np.sum(scaled)), m


def combine_partials(partials):
    """Combine (num, den, m) triples from ordered batches into one triple."""
    m_star = max(p[2] for p in partials)
    num = None
    den = 0.0
    for pn, pd, pm in partials:
        scale = np.exp(pm - m_star)
        num = pn * scale if num is None else num + pn * scale
        den += pd * scale
    return num, den, m_star


def weighted_mean(log_w: np.ndarray, values: np.ndarray) -> np.ndarray:
    num, den, _ = weighted_sums(log_w, values)
    if den == 0.0:
        raise ValueError("all weights are zero")
    return num / den


def bootstrap_se(values: np.ndarray, log_w: np.ndarray, estimator=None,
                 n_boot: int = 200, seed: int = 0) -> np.ndarray:
    """Bootstrap standard error of a weighted estimator over trajectories.

    values: (n, k) per-trajectory payloads; log_w: (n,) log-weights.  By
    default the estimator is the weighted mean of each column; pass
    `estimator(num, den) -> array` to post-process the resampled weighted
    sums (e.g. variances from first and second moments).  Resampling uses
    its own deterministic stream.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float).T).T
    log_w = np.asarray(log_w, dtype=float)
    n = len(log_w)
    w = np.exp(log_w - np.max(log_w))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=seed)))
    reps = []
    for _ in range(n_boot):
        idx = rng.integers(0, n, size=n)
        wb = w[idx]
        den = float(np.sum(wb))
        num = wb @ values[idx]
        reps.append(num / den if estimator is None else estimator(num / den))
    return np.std(np.asarray(reps), axis=0, ddof=1)


def effective_sample_size(log_w: np.ndarray) -> float:
    """Kish ESS (sum w)^2 / sum w^2; diagnostic only, never used to resample."""
    log_w = np.asarray(log_w, dtype=float)
    m = np.max(log_w)
    w = np.exp(log_w - m)
    return float(np.sum(w) ** 2 / np.sum(w**2))
