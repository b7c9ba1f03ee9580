"""Question tokenisation, word embeddings and a bidirectional GRU encoder."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor

PAD = "<pad>"
UNK = "<unk>"

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:-[a-z0-9]+)*|[^\sa-z0-9]")


class Vocabulary:
    """Token <-> id map with contiguous ids; always contains PAD and UNK."""

    def __init__(self, tokens: Sequence[str]):
        seen: dict[str, int] = {}
        for tok in tokens:
            if tok not in seen:
                seen[tok] = len(seen)
        for special in (PAD, UNK):
            if special not in seen:
                seen[special] = len(seen)
        self.token_to_id = seen
        self.id_to_token = list(seen)

    @classmethod
    def build(cls, texts: Iterable[str]) -> Vocabulary:
        tokens = sorted({tok for text in texts for tok in split_tokens(text)})
        return cls([PAD, UNK] + tokens)

    @property
    def pad_id(self) -> int:
        return self.token_to_id[PAD]

    @property
    def unk_id(self) -> int:
        return self.token_to_id[UNK]

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, tok: str) -> bool:
        return tok in self.token_to_id

    def save(self, path) -> None:
        Path(path).write_text("".join(tok + "\n" for tok in self.id_to_token), encoding="utf-8")

    @classmethod
    def load(cls, path) -> Vocabulary:
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(lines)


def split_tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def tokenize(question: str, vocab: Vocabulary) -> list[int]:
    """Lower-case, split on whitespace and punctuation, map unknown words to UNK."""
    if not question or not question.strip():
        raise ValueError("empty question")
    unk = vocab.unk_id
    return [vocab.token_to_id.get(tok, unk) for tok in split_tokens(question)]


def pad_batch(seqs: Sequence[Sequence[int]], pad_id: int) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad id sequences; returns (ids (B, L), valid mask (B, L))."""
    if any(len(s) == 0 for s in seqs):
        raise ValueError("cannot encode an empty token sequence")
    width = max(len(s) for s in seqs)
    ids = np.full((len(seqs), width), pad_id, dtype=np.int64)
    mask = np.zeros((len(seqs), width), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
        mask[i, : len(s)] = True
    return ids, mask


@dataclass
class GRUParams:
    """One GRU direction: input weights (d, 3H), recurrent weights (H, 3H), bias (3H,).

    Gate order along the 3H axis is update, reset, candidate.
    """

    w_in: Tensor
    w_rec: Tensor
    bias: Tensor

    @property
    def hidden(self) -> int:
        return self.w_rec.shape[0]

    @classmethod
    def init(cls, d_in: int, hidden: int, rng: np.random.Generator, prefix: str = "") -> GRUParams:
        s = 1.0 / math.sqrt(hidden)
        return cls(T.parameter(rng.uniform(-s, s, (d_in, 3 * hidden)), prefix + "w_in"),
                   T.parameter(rng.uniform(-s, s, (hidden, 3 * hidden)), prefix + "w_rec"),
                   T.parameter(np.zeros(3 * hidden), prefix + "bias"))

    def named(self, prefix: str = "") -> dict[str, Tensor]:
        return {prefix + "w_in": self.w_in, prefix + "w_rec": self.w_rec, prefix + "bias": self.bias}


def gru_step(x_proj: Tensor, h: Tensor, p: GRUParams) -> Tensor:
    """x_proj is the precomputed input projection (B, 3H) for this step."""
    hd = p.hidden
    rec = T.matmul(h, p.w_rec)
    z = T.sigmoid(x_proj[:, :hd] + rec[:, :hd])
    r = T.sigmoid(x_proj[:, hd:2 * hd] + rec[:, hd:2 * hd])
    n = T.tanh(x_proj[:, 2 * hd:] + r * rec[:, 2 * hd:])
    return n + z * (h - n)


def run_gru(x_proj: Tensor, mask: np.ndarray, p: GRUParams, reverse: bool) -> tuple[list[Tensor], Tensor]:
    """Scan over time; padded steps (mask False) carry the previous state through."""
    b, steps, _ = x_proj.shape
    h = T.Tensor(np.zeros((b, p.hidden)))
    states: list[Tensor | None] = [None] * steps
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        h_new = gru_step(x_proj[:, t, :], h, p)
        m = mask[:, t]
        if m.all():
            h = h_new
        else:
            keep = m[:, None].astype(float)
            h = h_new * keep + h * (1.0 - keep)
        states[t] = h
    return states, h


@dataclass
class QuestionEncoding:
    w: Tensor  # (d,) or (B, d)
    W: Tensor  # (L, d) or (B, L, d)


@dataclass
class TextEncoder:
    embedding: Tensor
    fwd: GRUParams
    bwd: GRUParams
    proj_global: Tensor
    proj_global_b: Tensor
    proj_local: Tensor
    proj_local_b: Tensor

    @classmethod
    def init(cls, vocab_size: int, d: int, hidden: int, rng: np.random.Generator,
             prefix: str = "text.") -> TextEncoder:
        p = lambda arr, n: T.parameter(arr, prefix + n)
        s = 1.0 / math.sqrt(2 * hidden)
        return cls(
            p(rng.normal(0, 1.0, (vocab_size, d)), "embedding"),
            GRUParams.init(d, hidden, rng, prefix + "fwd."),
            GRUParams.init(d, hidden, rng, prefix + "bwd."),
            p(rng.normal(0, s, (2 * hidden, d)), "proj_global"), p(np.zeros(d), "proj_global_b"),
            p(rng.normal(0, s, (2 * hidden, d)), "proj_local"), p(np.zeros(d), "proj_local_b"),
        )

    def named(self, prefix: str = "text.") -> dict[str, Tensor]:
        out = {prefix + "embedding": self.embedding}
        out.update(self.fwd.named(prefix + "fwd."))
        out.update(self.bwd.named(prefix + "bwd."))
        out.update({prefix + "proj_global": self.proj_global, prefix + "proj_global_b": self.proj_global_b,
                    prefix + "proj_local": self.proj_local, prefix + "proj_local_b": self.proj_local_b})
        return out

    def encode_batch(self, ids: np.ndarray, mask: np.ndarray, local: bool = True) -> QuestionEncoding:
        """Encode a padded batch (B, L). Global vector from the final states of both directions."""
        emb = T.take_rows(self.embedding, ids)  # (B, L, d)
        xf = T.matmul(emb, self.fwd.w_in) + self.fwd.bias
        xb = T.matmul(emb, self.bwd.w_in) + self.bwd.bias
        f_states, f_last = run_gru(xf, mask, self.fwd, reverse=False)
        b_states, b_last = run_gru(xb, mask, self.bwd, reverse=True)
        w = T.linear(T.concat([f_last, b_last], axis=-1), self.proj_global, self.proj_global_b)
        W = None
        if local:
            both = T.concat([T.stack(f_states, axis=1), T.stack(b_states, axis=1)], axis=-1)
            W = T.linear(both, self.proj_local, self.proj_local_b)
        return QuestionEncoding(w, W)


def encode_question(token_ids: Sequence[int], encoder: TextEncoder) -> QuestionEncoding:
    """Encode one question: w has shape (d,), W has shape (L, d)."""
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ValueError("encode_question needs a non-empty 1-D id sequence")
    vocab_size = encoder.embedding.shape[0]
    if ids.min() < 0 or ids.max() >= vocab_size:
        raise IndexError(f"token id outside vocabulary of size {vocab_size}")
    enc = encoder.encode_batch(ids[None, :], np.ones((1, ids.size), dtype=bool))
    return QuestionEncoding(T.reshape(enc.w, enc.w.shape[1:]), T.reshape(enc.W, enc.W.shape[1:]))
