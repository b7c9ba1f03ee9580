"""Auto-focus attention: a question-weighted mixture of banded softmax attentions.

For query position ``j`` and focal length ``f`` the attended band is
``{i : |i - j| <= f}`` clipped to the sequence. Each band gets its own
softmax; the per-band outputs are then mixed with focus weights that sum
to one and come from a linear gate + softmax over the question vector.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor, ShapeError

SIMPLEX_TOL = 1e-6


class ConfigError(ValueError):
    """Invalid model configuration (e.g. width not divisible by heads)."""


@dataclass(frozen=True)
class FocalSet:
    lengths: tuple[int, ...]

    def __post_init__(self):
        lengths = tuple(int(f) for f in self.lengths)
        if not lengths:
            raise ConfigError("focal set must not be empty")
        if any(f < 1 for f in lengths):
            raise ConfigError(f"focal lengths must be >= 1, got {lengths}")
        if any(b <= a for a, b in zip(lengths, lengths[1:])):
            raise ConfigError(f"focal lengths must be strictly increasing, got {lengths}")
        object.__setattr__(self, "lengths", lengths)

    def __len__(self) -> int:
        return len(self.lengths)

    def __iter__(self):
        return iter(self.lengths)


def as_focal_set(focal) -> FocalSet:
    return focal if isinstance(focal, FocalSet) else FocalSet(tuple(focal))


@dataclass(frozen=True)
class BandRange:
    lo: int
    hi: int

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1


def band_index_set(j: int, f: int, n: int) -> BandRange:
    """Inclusive clipped band of neighbours within distance ``f`` of position ``j``."""
    if not 0 <= j < n:
        raise IndexError(f"position {j} outside sequence of length {n}")
    if f < 1:
        raise ValueError(f"focal length must be >= 1, got {f}")
    return BandRange(max(0, j - f), min(n - 1, j + f))


@functools.lru_cache(maxsize=256)
def band_mask(n: int, f: int) -> np.ndarray:
    idx = np.arange(n)
    mask = np.abs(idx[:, None] - idx[None, :]) <= f
    mask.setflags(write=False)
    return mask


def focus_weights(w, gate, bias) -> Tensor:
    """softmax(gate @ w + bias): one weight per focal length.

    ``w`` may be a single vector (d,) or a batch (B, d); ``gate`` is (|F|, d).
    """
    w, gate, bias = T.as_tensor(w), T.as_tensor(gate), T.as_tensor(bias)
    if gate.ndim != 2 or w.shape[-1] != gate.shape[1] or bias.shape != (gate.shape[0],):
        raise ShapeError(f"focus_weights: w {w.shape}, gate {gate.shape}, bias {bias.shape}")
    return T.softmax(T.matmul(w, T.transpose(gate)) + bias)


def check_simplex(alpha: np.ndarray, n_focal: int) -> None:
    if alpha.shape[-1] != n_focal:
        raise ValueError(f"focus weights have {alpha.shape[-1]} entries for {n_focal} focal lengths")
    if not np.isfinite(alpha).all() or (alpha < 0).any() or (alpha > 1).any():
        raise ValueError("focus weights must lie in [0, 1]")
    if np.abs(alpha.sum(axis=-1) - 1.0).max() > SIMPLEX_TOL:
        raise ValueError("focus weights must sum to 1")


def afa(q, k, v, alpha, focal) -> Tensor:
    """Auto-focus attention over the last two axes of ``q``, ``k``, ``v`` (..., N, d_h).

    ``alpha`` has shape (..., |F|) broadcastable against the leading axes of
    ``q``. Scores are scaled by 1/sqrt(d_h). Each focal band is normalised
    separately before mixing.
    """
    q, k, v, alpha = (T.as_tensor(x) for x in (q, k, v, alpha))
    focal = as_focal_set(focal)
    if q.shape != k.shape or k.shape[:-1] != v.shape[:-1] or q.ndim < 2:
        raise ShapeError(f"afa: incompatible q {q.shape}, k {k.shape}, v {v.shape}")
    check_simplex(alpha.data, len(focal))
    dh = q.shape[-1]
    scale = 1.0 / math.sqrt(dh)
    scores = np.matmul(q.data, np.swapaxes(k.data, -1, -2))
    scores *= scale
    # (..., F) -> per-focus weights shaped to broadcast against (..., N) row vectors
    a = np.moveaxis(alpha.data, -1, 0)[..., None]
    e, inv_z = _shared_exp(scores, focal)
    if e is None:
        return _afa_literal(q, k, v, alpha, focal, scores, scale)
    full_shape = np.broadcast_shapes(scores.shape, a.shape[1:-1] + (1, 1))
    if e.shape != full_shape:
        e = np.ascontiguousarray(np.broadcast_to(e, full_shape))
    coefs = [a[fi] * inv_z[fi] for fi in range(len(focal))]
    mix = _banded_combination(coefs, focal, e)
    out = np.matmul(mix, v.data)

    def backward(g):
        dv = np.matmul(np.swapaxes(mix, -1, -2), g)
        dmix = np.matmul(g, np.swapaxes(v.data, -1, -2))
        dalpha, corr = [], []
        # r[j] = sum_i dmix[j, i] * P_f[j, i]
        for fi, r in enumerate(_nested_band_sums(dmix, e, focal)):
            r = r * inv_z[fi]
            dalpha.append(r.sum(axis=-1))
            corr.append(a[fi] * r * inv_z[fi])
        dscores = dmix
        dscores *= mix
        dscores -= _banded_combination(corr, focal, e)
        dscores *= scale
        dq = np.matmul(dscores, k.data)
        dk = np.matmul(np.swapaxes(dscores, -1, -2), q.data)
        da = np.stack(dalpha, axis=-1)
        return (T._unbroadcast(dq, q.shape), T._unbroadcast(dk, k.shape),
                T._unbroadcast(dv, v.shape), T._unbroadcast(da, alpha.shape))

    return T._make(out, (q, k, v, alpha), backward)


_UNDERFLOW = 1e-200


def _diagonal(x: np.ndarray, offset: int) -> tuple[np.ndarray, slice]:
    """Writable view of diagonal ``offset`` of contiguous (..., N, N) plus the rows it spans."""
    n = x.shape[-1]
    flat = x.reshape(x.shape[:-2] + (n * n,))
    start = offset if offset >= 0 else -offset * n
    length = n - abs(offset)
    view = np.lib.stride_tricks.as_strided(
        flat[..., start:], shape=x.shape[:-2] + (length,),
        strides=flat.strides[:-1] + (flat.strides[-1] * (n + 1),))
    rows = slice(0, length) if offset >= 0 else slice(-offset, n)
    return view, rows


def _nested_band_sums(x: np.ndarray, y: np.ndarray | None, focal) -> list[np.ndarray]:
    """For each focal length, row sums of ``x`` (times ``y`` if given) inside the clipped band."""
    n = x.shape[-1]
    x = np.ascontiguousarray(x)
    y = None if y is None else np.ascontiguousarray(y)
    out, acc, done = [], None, -1
    for f in focal:
        if f >= n - 1:
            if y is None:
                out.append(x.sum(axis=-1))
            else:
                out.append(np.einsum("...ij,...ij->...i", x, y))
            continue
        if acc is None:
            acc = np.zeros(x.shape[:-1])
        for d in range(done + 1, f + 1):
            for off in {d, -d}:
                xd, rows = _diagonal(x, off)
                acc[..., rows] += xd if y is None else xd * _diagonal(y, off)[0]
        done = f
        out.append(acc.copy())
    return out


def _banded_combination(coefs, focal, e: np.ndarray) -> np.ndarray:
    """sum_f coefs[f][..., j] * e[..., j, i] over the band of f, as a fresh array."""
    n = e.shape[-1]
    full = [c for c, f in zip(coefs, focal) if f >= n - 1]
    out = np.empty(e.shape)
    if full:
        np.multiply(e, sum(full)[..., None], out=out)
    else:
        out.fill(0.0)
    for c, f in zip(coefs, focal):
        if f >= n - 1:
            continue
        c = np.broadcast_to(c, e.shape[:-1])
        for off in range(-f, f + 1):
            od, rows = _diagonal(out, off)
            od += c[..., rows] * _diagonal(e, off)[0]
    return out


def _shared_exp(scores: np.ndarray, focal: FocalSet):
    """exp(scores - row max) plus 1/Z per focus; (None, None) if a band sum underflows."""
    e = scores - scores.max(axis=-1, keepdims=True)
    np.exp(e, out=e)
    inv = []
    for z in _nested_band_sums(e, None, focal):
        if z.min() < _UNDERFLOW:
            return None, None
        inv.append(1.0 / z)
    return e, inv


def _afa_literal(q, k, v, alpha, focal, scores, scale) -> Tensor:
    """Per-band softmax with each band's own maximum; used when the shared exp underflows."""
    n = scores.shape[-1]
    a = alpha.data[..., None, None]
    probs = []
    mix = np.zeros(np.broadcast_shapes(scores.shape, a.shape[:-3] + (1, 1)))
    for fi, f in enumerate(focal):
        p = T._softmax_rows(scores, None if f >= n - 1 else band_mask(n, f))
        probs.append(p)
        mix = mix + a[..., fi, :, :] * p
    out = np.matmul(mix, v.data)

    def backward(g):
        dv = np.matmul(np.swapaxes(mix, -1, -2), g)
        dmix = np.matmul(g, np.swapaxes(v.data, -1, -2))
        dscores = np.zeros_like(dmix)
        dalpha = np.empty(dmix.shape[:-2] + (len(focal),))
        for fi, p in enumerate(probs):
            dp_p = dmix * p
            dalpha[..., fi] = dp_p.sum(axis=(-1, -2))
            dscores += a[..., fi, :, :] * (dp_p - p * dp_p.sum(axis=-1, keepdims=True))
        dscores *= scale
        dq = np.matmul(dscores, k.data)
        dk = np.matmul(np.swapaxes(dscores, -1, -2), q.data)
        return (T._unbroadcast(dq, q.shape), T._unbroadcast(dk, k.shape),
                T._unbroadcast(dv, v.shape), T._unbroadcast(dalpha, alpha.shape))

    return T._make(out, (q, k, v, alpha), backward)


def scores_softmax(scores: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    return T._softmax_rows(scores, mask)


def band_probabilities(q: np.ndarray, k: np.ndarray, f: int) -> np.ndarray:
    """Per-focus attention matrix (zeros outside the band); for diagnostics and tests."""
    n, dh = q.shape[-2], q.shape[-1]
    scores = np.matmul(q, np.swapaxes(k, -1, -2)) / math.sqrt(dh)
    return T._softmax_rows(scores, band_mask(n, f))


def dense_attention_oracle(q, k, v) -> np.ndarray:
    """softmax(Q K^T / sqrt(d_h)) V by explicit loops; the reference for full-width focus."""
    q = np.asarray(q, dtype=float)
    k = np.asarray(k, dtype=float)
    v = np.asarray(v, dtype=float)
    if q.ndim != 2 or q.shape != k.shape or v.shape[0] != k.shape[0]:
        raise ShapeError(f"oracle: incompatible q {q.shape}, k {k.shape}, v {v.shape}")
    n, dh = q.shape
    scale = math.sqrt(dh)
    out = np.zeros((n, v.shape[1]))
    for j in range(n):
        scores = []
        for i in range(n):
            s = 0.0
            for t in range(dh):
                s += q[j, t] * k[i, t]
            scores.append(s / scale)
        top = max(scores)
        weights = [math.exp(s - top) for s in scores]
        total = sum(weights)
        for i in range(n):
            out[j] += (weights[i] / total) * v[i]
    return out


def dense_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """Standard scaled dot-product attention from generic differentiable ops."""
    dh = q.shape[-1]
    scores = T.mul(T.matmul(q, T.swapaxes(k, -1, -2)), 1.0 / math.sqrt(dh))
    return T.matmul(T.softmax(scores), v)


# ---------------------------------------------------------------------------
# Multi-head attention and the encoder stack
# ---------------------------------------------------------------------------

@dataclass
class AttentionParams:
    """Query/key/value/output projections.

    The query, key and value matrices are stored as d x d; head ``h`` uses
    columns ``h*d_h:(h+1)*d_h``, which is the per-head d x d_h projection.
    """

    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    heads: int

    def __post_init__(self):
        d = self.wq.shape[0]
        if d % self.heads:
            raise ConfigError(f"model width {d} not divisible by {self.heads} heads")
        for m in (self.wq, self.wk, self.wv, self.wo):
            if m.shape != (d, d):
                raise ShapeError(f"attention projection must be {d}x{d}, got {m.shape}")

    @classmethod
    def init(cls, d: int, heads: int, rng: np.random.Generator, prefix: str = "") -> AttentionParams:
        if d % heads:
            raise ConfigError(f"model width {d} not divisible by {heads} heads")
        std = 1.0 / math.sqrt(d)
        mk = lambda n: T.parameter(rng.normal(0.0, std, (d, d)), name=prefix + n)
        return cls(mk("wq"), mk("wk"), mk("wv"), mk("wo"), heads)

    def named(self, prefix: str = "") -> dict[str, Tensor]:
        return {prefix + "wq": self.wq, prefix + "wk": self.wk,
                prefix + "wv": self.wv, prefix + "wo": self.wo}


def _split_heads(x: Tensor, heads: int) -> Tensor:
    b, n, d = x.shape
    return T.transpose(T.reshape(x, (b, n, heads, d // heads)), (0, 2, 1, 3))


def _merge_heads(x: Tensor) -> Tensor:
    b, h, n, dh = x.shape
    return T.reshape(T.transpose(x, (0, 2, 1, 3)), (b, n, h * dh))


def multi_head_afa(x, params: AttentionParams, alpha, focal) -> Tensor:
    """Multi-head auto-focus attention; every head shares the same ``alpha``.

    ``x`` is (N, d) with ``alpha`` (|F|,), or (B, N, d) with ``alpha`` (B, |F|).
    A ``focal`` of None means plain dense attention (alpha is ignored).
    """
    x = T.as_tensor(x)
    single = x.ndim == 2
    if single:
        x = T.reshape(x, (1,) + x.shape)
        if alpha is not None:
            alpha = T.reshape(T.as_tensor(alpha), (1, -1))
    d = x.shape[-1]
    if d % params.heads:
        raise ConfigError(f"model width {d} not divisible by {params.heads} heads")
    q = _split_heads(T.matmul(x, params.wq), params.heads)
    k = _split_heads(T.matmul(x, params.wk), params.heads)
    v = _split_heads(T.matmul(x, params.wv), params.heads)
    if focal is None:
        heads_out = dense_attention(q, k, v)
    else:
        a = T.reshape(T.as_tensor(alpha), (alpha.shape[0], 1, alpha.shape[-1]))
        heads_out = afa(q, k, v, a, focal)
    out = T.matmul(_merge_heads(heads_out), params.wo)
    return T.reshape(out, out.shape[1:]) if single else out


@dataclass
class EncoderLayer:
    attn: AttentionParams
    ln1_g: Tensor
    ln1_b: Tensor
    ff_w1: Tensor | None
    ff_b1: Tensor | None
    ff_w2: Tensor | None
    ff_b2: Tensor | None
    ln2_g: Tensor
    ln2_b: Tensor

    @classmethod
    def init(cls, d: int, heads: int, d_ff: int, rng: np.random.Generator,
             prefix: str = "", identity_ff: bool = False) -> EncoderLayer:
        attn = AttentionParams.init(d, heads, rng, prefix + "attn.")
        p = lambda arr, n: T.parameter(arr, name=prefix + n)
        if identity_ff:
            ff = (None, None, None, None)
        else:
            ff = (p(rng.normal(0, 1 / math.sqrt(d), (d, d_ff)), "ff.w1"), p(np.zeros(d_ff), "ff.b1"),
                  p(rng.normal(0, 1 / math.sqrt(d_ff), (d_ff, d)), "ff.w2"), p(np.zeros(d), "ff.b2"))
        return cls(attn, p(np.ones(d), "ln1.g"), p(np.zeros(d), "ln1.b"), *ff,
                   p(np.ones(d), "ln2.g"), p(np.zeros(d), "ln2.b"))

    def named(self, prefix: str = "") -> dict[str, Tensor]:
        out = self.attn.named(prefix + "attn.")
        fields = {"ln1.g": self.ln1_g, "ln1.b": self.ln1_b, "ff.w1": self.ff_w1,
                  "ff.b1": self.ff_b1, "ff.w2": self.ff_w2, "ff.b2": self.ff_b2,
                  "ln2.g": self.ln2_g, "ln2.b": self.ln2_b}
        out.update({prefix + k: t for k, t in fields.items() if t is not None})
        return out

    def feed_forward(self, x: Tensor) -> Tensor:
        if self.ff_w1 is None:
            return x
        return T.linear(T.relu(T.linear(x, self.ff_w1, self.ff_b1)), self.ff_w2, self.ff_b2)

    def __call__(self, x: Tensor, alpha, focal, ln_eps: float = 1e-5) -> Tensor:
        h = T.layer_norm(x + multi_head_afa(x, self.attn, alpha, focal), self.ln1_g, self.ln1_b, ln_eps)
        return T.layer_norm(h + self.feed_forward(h), self.ln2_g, self.ln2_b, ln_eps)


@dataclass
class EncoderOutput:
    M: Tensor
    alpha: Tensor | None


def aft_encoder_forward(r, w, layers: Sequence[EncoderLayer], gate: Tensor, gate_bias: Tensor,
                        focal, alpha_override=None) -> EncoderOutput:
    """Run the AFT stack: alpha from the question once, then post-norm AFA layers.

    ``r`` is (N, d) or (B, N, d); ``w`` is (d,) or (B, d). ``alpha_override``
    replaces the gate output (used to freeze the focus); ``focal=None`` runs
    the layers with dense attention.
    """
    if not layers:
        raise ConfigError("encoder needs at least one layer")
    r = T.as_tensor(r)
    alpha = None
    if focal is not None:
        alpha = T.as_tensor(alpha_override) if alpha_override is not None else focus_weights(w, gate, gate_bias)
    x = r
    for layer in layers:
        x = layer(x, alpha, focal)
    if x.shape != r.shape:
        raise ShapeError(f"encoder changed shape {r.shape} -> {x.shape}")
    return EncoderOutput(x, alpha)
