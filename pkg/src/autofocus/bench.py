"""Banded versus dense attention: exact score counts and single-thread wall time."""

from __future__ import annotations

import statistics
import time
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from threadpoolctl import threadpool_limits

from .attention import as_focal_set


def banded_count(n: int, focal) -> int:
    """Number of (query, key) pairs inside the clipped bands, summed over focal lengths."""
    total = 0
    for f in as_focal_set(focal):
        j = np.arange(n)
        total += int(np.sum(np.minimum(n - 1, j + f) - np.maximum(0, j - f) + 1))
    return total


def dense_count(n: int) -> int:
    return n * n


@dataclass
class BenchReport:
    n: int
    focal: list[int]
    heads: int
    d: int
    repetitions: int
    banded_scores: int
    dense_scores: int
    banded_seconds: float
    dense_seconds: float

    @property
    def speedup(self) -> float:
        return self.dense_seconds / self.banded_seconds

    @property
    def count_ratio(self) -> float:
        return self.dense_scores / self.banded_scores

    def to_dict(self) -> dict:
        out = asdict(self)
        out["speedup"] = self.speedup
        out["count_ratio"] = self.count_ratio
        return out


def banded_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray, alpha: np.ndarray, focal):
    """Multi-focus attention evaluating only in-band scores.

    ``q``, ``k``, ``v`` are (heads, N, d_h); ``alpha`` has one weight per focal length.
    Returns the output and the number of valid score evaluations performed.
    """
    h, n, dh = q.shape
    scale = 1.0 / np.sqrt(dh)
    out = np.zeros_like(q)
    evaluated = 0
    for a, f in zip(alpha, as_focal_set(focal)):
        f = min(f, n - 1)
        width = 2 * f + 1
        kp = np.pad(k, ((0, 0), (f, f), (0, 0)))
        vp = np.pad(v, ((0, 0), (f, f), (0, 0)))
        # (heads, N, d_h, width) views: window i of query j covers key j - f + i
        kw = sliding_window_view(kp, width, axis=1)
        vw = sliding_window_view(vp, width, axis=1)
        scores = np.matmul(q[:, :, None, :], kw)[:, :, 0, :] * scale
        offs = np.arange(n)[:, None] + np.arange(-f, f + 1)[None, :]
        valid = (offs >= 0) & (offs < n)
        evaluated += int(valid.sum()) * h
        scores = np.where(valid, scores, -np.inf)
        scores -= scores.max(axis=-1, keepdims=True)
        p = np.exp(scores)
        p /= p.sum(axis=-1, keepdims=True)
        out += a * np.matmul(vw, p[..., None])[..., 0]
    return out, evaluated // h


def dense_attention_np(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    scores = np.matmul(q, np.swapaxes(k, -1, -2)) / np.sqrt(q.shape[-1])
    scores -= scores.max(axis=-1, keepdims=True)
    p = np.exp(scores)
    p /= p.sum(axis=-1, keepdims=True)
    return np.matmul(p, v)


def _median_time(fn, repetitions: int) -> float:
    fn()  # warm-up
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def bench_attention(n: int, focal=(3, 9, 80), heads: int = 4, d: int = 64, repetitions: int = 5,
                    seed: int = 0) -> BenchReport:
    if n < 2:
        raise ValueError("bench needs N >= 2")
    if repetitions < 3:
        raise ValueError("bench needs at least 3 repetitions")
    if d % heads:
        raise ValueError(f"d={d} not divisible by heads={heads}")
    focal = as_focal_set(focal)
    rng = np.random.default_rng(seed)
    q, k, v = (rng.normal(size=(heads, n, d // heads)) for _ in range(3))
    alpha = np.full(len(focal), 1.0 / len(focal))
    with threadpool_limits(limits=1):
        _, counted = banded_attention(q, k, v, alpha, focal)
        t_band = _median_time(lambda: banded_attention(q, k, v, alpha, focal), repetitions)
        t_dense = _median_time(lambda: dense_attention_np(q, k, v), repetitions)
    return BenchReport(n, list(focal), heads, d, repetitions, counted, dense_count(n), t_band, t_dense)
