"""Batched, deterministic ensemble execution.

Trajectories are processed in fixed-size batches (BATCH_SIZE trajectories,
noise buffered NOISE_CHUNK steps at a time).  Batches may be farmed out to
worker threads, but partial estimator sums are always combined in batch
(i.e. stream_id) order, so the result is bit-identical for a given seed
regardless of thread count.  Per-trajectory randomness comes from
NoiseStream(seed, stream_offset + i); each trajectory consumes its
documented draws (initial-condition draws first, then one variate per time
step), independent of batching.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .stochproc import NoiseStream, combine_partials, weighted_sums

BATCH_SIZE = 4096
NOISE_CHUNK = 512


def output_indices(n_steps: int, out_every: int) -> np.ndarray:
    """Step indices at which estimates are recorded (always 0 and n_steps)."""
    idx = list(range(0, n_steps + 1, max(1, out_every)))
    if idx[-1] != n_steps:
        idx.append(n_steps)
    return np.asarray(idx, dtype=int)


def batch_ranges(n: int, batch_size: int = BATCH_SIZE):
    return [(lo, min(lo + batch_size, n)) for lo in range(0, n, batch_size)]


def make_streams(seed: int, stream_offset: int, lo: int, hi: int) -> list[NoiseStream]:
    return [NoiseStream(seed, stream_offset + i) for i in range(lo, hi)]


def fill_noise(streams, buf: np.ndarray, n_steps: int, scale: float) -> None:
    """Fill buf[:, :m] with the next m = min(chunk, remaining) variates."""
    m = min(buf.shape[1], n_steps)
    for j, s in enumerate(streams):
        buf[j, :m] = s.normals(m)
    if scale != 1.0:
        buf[:, :m] *= scale


def run_batches(n: int, batch_fn, threads: int = 1, batch_size: int = BATCH_SIZE):
    """Run batch_fn(lo, hi) over fixed batch ranges; results in batch order."""
    ranges = batch_ranges(n, batch_size)
    if threads <= 1 or len(ranges) == 1:
        return [batch_fn(lo, hi) for lo, hi in ranges]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(batch_fn, lo, hi) for lo, hi in ranges]
        return [f.result() for f in futures]


def prefix_partial_sums(lo: int, logw: np.ndarray, values: np.ndarray, prefixes) -> dict:
    """Per-prefix (num, den, max) partials for a batch starting at index lo.

    Prefix p uses trajectories [0, p); this batch contributes its overlap
    slice.  Used to evaluate several ensemble sizes from one trajectory pool.
    """
    out = {}
    nb = len(logw)
    for p in prefixes:
        hi = min(p - lo, nb)
        if hi > 0:
            out[p] = weighted_sums(logw[:hi], values[:hi])
    return out


def combine_prefix_partials(per_batch: list[dict], prefixes) -> dict:
    """Combine the per-batch prefix partials into (num/den) weighted means."""
    out = {}
    for p in prefixes:
        parts = [d[p] for d in per_batch if p in d]
        num, den, _ = combine_partials(parts)
        out[p] = (num, den)
    return out
