"""Question-answering models: AFT, the dense-attention Transformer baseline, BlindQA,
and the two random baselines."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .attention import ConfigError, EncoderLayer, FocalSet, aft_encoder_forward, focus_weights
from .tensor import ShapeError, Tensor
from .text import TextEncoder

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    kind: str = "aft"  # "aft", "transformer" or "blind"
    d: int = 64
    heads: int = 4
    layers: int = 2
    d_ff: int = 128
    focal: tuple[int, ...] = (3, 9, 80)
    max_frames: int = 80
    d_appearance: int = 32
    d_motion: int = 32
    rnn_hidden: int = 32
    vocab_size: int = 2
    n_classes: int = 2
    blind_hidden: int = 128
    identity_ff: bool = False
    init_seed: int = 0

    def __post_init__(self):
        self.focal = tuple(int(f) for f in self.focal)
        if self.kind not in ("aft", "transformer", "blind"):
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if self.d % self.heads:
            raise ConfigError(f"d={self.d} not divisible by heads={self.heads}")
        if self.layers < 1:
            raise ConfigError("need at least one encoder layer")
        if self.n_classes < 2:
            raise ConfigError("answer space needs at least two classes")
        FocalSet(self.focal)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["focal"] = list(self.focal)
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------

def project_frames(appearance, motion, projection) -> Tensor:
    """R[t] = concat(appearance[t], motion[t]) @ projection, projection shaped (d_a + d_m, d)."""
    appearance, motion, projection = (T.as_tensor(x) for x in (appearance, motion, projection))
    if appearance.shape[:-1] != motion.shape[:-1]:
        raise ShapeError(f"appearance {appearance.shape} and motion {motion.shape} frame axes differ")
    if projection.shape[0] != appearance.shape[-1] + motion.shape[-1]:
        raise ShapeError(f"projection {projection.shape} does not take {appearance.shape[-1]}+{motion.shape[-1]} inputs")
    return T.matmul(T.concat([appearance, motion], axis=-1), projection)


@dataclass
class FusionHead:
    """s = sigmoid([mean(M); w] @ gate + gate_b) * (mean(M) @ video + w @ text + blend_b);
    logits = s @ out + out_b."""

    gate: Tensor
    gate_b: Tensor
    video: Tensor
    text: Tensor
    blend_b: Tensor
    out: Tensor
    out_b: Tensor

    @classmethod
    def init(cls, d: int, n_classes: int, rng: np.random.Generator, prefix: str = "head.") -> FusionHead:
        p = lambda arr, n: T.parameter(arr, prefix + n)
        s = 1.0 / math.sqrt(d)
        return cls(p(rng.normal(0, 1 / math.sqrt(2 * d), (2 * d, d)), "gate"), p(np.zeros(d), "gate_b"),
                   p(rng.normal(0, s, (d, d)), "video"), p(rng.normal(0, s, (d, d)), "text"),
                   p(np.zeros(d), "blend_b"), p(rng.normal(0, s, (d, n_classes)), "out"),
                   p(np.zeros(n_classes), "out_b"))

    def named(self, prefix: str = "head.") -> dict[str, Tensor]:
        return {prefix + f.name: getattr(self, f.name) for f in dataclasses.fields(self)}


def fuse_and_classify(M, w, head: FusionHead) -> Tensor:
    """Logits from encoder output M (N, d)/(B, N, d) and question vector w (d,)/(B, d)."""
    M, w = T.as_tensor(M), T.as_tensor(w)
    if M.shape[-1] != w.shape[-1] or M.ndim != w.ndim + 1:
        raise ShapeError(f"fusion: M {M.shape} vs w {w.shape}")
    m = T.mean(M, axis=-2)
    g = T.sigmoid(T.linear(T.concat([m, w], axis=-1), head.gate, head.gate_b))
    blend = T.matmul(m, head.video) + T.matmul(w, head.text) + head.blend_b
    return T.linear(g * blend, head.out, head.out_b)


def predict(logits: np.ndarray) -> np.ndarray:
    """Argmax over the last axis; ties go to the lowest class index."""
    return np.argmax(np.asarray(logits), axis=-1)


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

class QAModel:
    """Shared parameter bookkeeping and checkpointing."""

    config: ModelConfig

    def parameters(self) -> dict[str, Tensor]:
        raise NotImplementedError

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        params = self.parameters()
        missing = set(params) - set(state)
        if strict and (missing or set(state) - set(params)):
            raise ValueError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(set(state) - set(params))}")
        for k, p in params.items():
            if k in state:
                if state[k].shape != p.shape:
                    raise ShapeError(f"{k}: checkpoint shape {state[k].shape} vs model {p.shape}")
                p.data = np.array(state[k], dtype=T.DTYPE)

    def save(self, path, extra: dict | None = None) -> None:
        meta = {"version": CHECKPOINT_VERSION, "config": self.config.to_dict(),
                "config_hash": self.config.digest(), "extra": extra or {}}
        arrays = {"param/" + k: v for k, v in self.state_dict().items()}
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


class AFTModel(QAModel):
    """Frames -> projection + positions -> AFT encoder -> fusion with the question -> logits.

    ``kind="transformer"`` swaps every AFA sublayer for dense attention and
    drops the focus gate: the dense-attention baseline.
    """

    def __init__(self, config: ModelConfig):
        if config.kind == "blind":
            raise ConfigError("use BlindQA for the blind baseline")
        self.config = config
        rng = np.random.default_rng(config.init_seed)
        d = config.d
        self.focal = FocalSet(config.focal) if config.kind == "aft" else None
        self.frame_proj = T.parameter(rng.normal(0, 1 / math.sqrt(config.d_appearance + config.d_motion),
                                                 (config.d_appearance + config.d_motion, d)), "frame_proj")
        self.positions = T.parameter(rng.normal(0, 0.1, (config.max_frames, d)), "positions")
        self.text = TextEncoder.init(config.vocab_size, d, config.rnn_hidden, rng)
        self.layers = [EncoderLayer.init(d, config.heads, config.d_ff, rng, f"enc{i}.", config.identity_ff)
                       for i in range(config.layers)]
        # zero gate: uniform focus weights until trained
        self.gate = T.parameter(np.zeros((len(config.focal), d)), "focus.gate")
        self.gate_b = T.parameter(np.zeros(len(config.focal)), "focus.bias")
        self.head = FusionHead.init(d, config.n_classes, rng)

    def parameters(self) -> dict[str, Tensor]:
        out = {"frame_proj": self.frame_proj, "positions": self.positions}
        out.update(self.text.named())
        for i, layer in enumerate(self.layers):
            out.update(layer.named(f"enc{i}."))
        if self.config.kind == "aft":
            out.update({"focus.gate": self.gate, "focus.bias": self.gate_b})
        out.update(self.head.named())
        return out

    def frames(self, appearance, motion) -> Tensor:
        r = project_frames(appearance, motion, self.frame_proj)
        n = r.shape[-2]
        if n > self.config.max_frames:
            raise ShapeError(f"{n} frames exceed max_frames={self.config.max_frames}")
        return r + self.positions[:n]

    def forward(self, appearance, motion, ids: np.ndarray, mask: np.ndarray,
                alpha_override=None) -> tuple[Tensor, Tensor | None]:
        """Batched forward: appearance (B, N, d_a), motion (B, N, d_m), ids/mask (B, L).

        Returns (logits (B, C), focus weights (B, |F|) or None).
        """
        r = self.frames(appearance, motion)
        q = self.text.encode_batch(ids, mask, local=False)
        enc = aft_encoder_forward(r, q.w, self.layers, self.gate, self.gate_b, self.focal, alpha_override)
        return fuse_and_classify(enc.M, q.w, self.head), enc.alpha

    def focus(self, ids: np.ndarray, mask: np.ndarray) -> np.ndarray:
        if self.focal is None:
            raise ConfigError("the transformer baseline has no focus gate")
        with T.no_grad():
            w = self.text.encode_batch(ids, mask, local=False).w
            return focus_weights(w, self.gate, self.gate_b).data.copy()


class BlindQA(QAModel):
    """Question encoder plus a one-hidden-layer MLP decoder; never sees video."""

    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.init_seed)
        d, hdim = config.d, config.blind_hidden
        self.text = TextEncoder.init(config.vocab_size, d, config.rnn_hidden, rng)
        self.w1 = T.parameter(rng.normal(0, 1 / math.sqrt(d), (d, hdim)), "mlp.w1")
        self.b1 = T.parameter(np.zeros(hdim), "mlp.b1")
        self.w2 = T.parameter(rng.normal(0, 1 / math.sqrt(hdim), (hdim, config.n_classes)), "mlp.w2")
        self.b2 = T.parameter(np.zeros(config.n_classes), "mlp.b2")

    def parameters(self) -> dict[str, Tensor]:
        out = self.text.named()
        out.update({"mlp.w1": self.w1, "mlp.b1": self.b1, "mlp.w2": self.w2, "mlp.b2": self.b2})
        return out

    def forward(self, appearance, motion, ids: np.ndarray, mask: np.ndarray,
                alpha_override=None) -> tuple[Tensor, None]:
        # video arguments are accepted for a uniform call signature and ignored
        w = self.text.encode_batch(ids, mask, local=False).w
        return T.linear(T.relu(T.linear(w, self.w1, self.b1)), self.w2, self.b2), None


def build_model(config: ModelConfig) -> QAModel:
    return BlindQA(config) if config.kind == "blind" else AFTModel(config)


def load_checkpoint(path, expect: ModelConfig | None = None) -> tuple[QAModel, dict]:
    """Rebuild a model from a checkpoint, validating config hash and shapes."""
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(bytes(z["__meta__"]).decode())
        state = {k[len("param/"):]: z[k] for k in z.files if k.startswith("param/")}
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
    cfg = ModelConfig(**meta["config"])
    if cfg.digest() != meta["config_hash"]:
        raise ValueError("checkpoint config hash does not match its config")
    if expect is not None and expect.digest() != cfg.digest():
        raise ValueError("checkpoint was produced by a different model config")
    model = build_model(cfg)
    model.load_state_dict(state)
    return model, meta.get("extra", {})


# ---------------------------------------------------------------------------
# Random baselines
# ---------------------------------------------------------------------------

def random_baseline(n_classes: int, rng: np.random.Generator, size: int | None = None):
    """Uniform draw over all answer classes."""
    if n_classes < 1:
        raise ValueError("answer space is empty")
    return rng.integers(0, n_classes, size=size)


_BINARY_LEADS = ("do", "does", "did", "is", "are", "was", "were", "would")


def question_kind(question: str) -> str:
    words = question.strip().lower().split()
    if not words:
        return "open"
    if words[0] in _BINARY_LEADS:
        return "binary"
    if words[:2] == ["how", "many"]:
        return "numeric"
    return "open"


def constrained_classes(question: str, labels: Sequence[str]) -> list[int]:
    kind = question_kind(question)
    if kind == "binary":
        return [i for i, a in enumerate(labels) if a in ("yes", "no")]
    if kind == "numeric":
        return [i for i, a in enumerate(labels) if a.isdigit()]
    return list(range(len(labels)))


def semantic_aware_random(question: str, labels: Sequence[str], rng: np.random.Generator) -> int:
    """Uniform draw restricted by question form: yes/no for binary, digits for counting."""
    allowed = constrained_classes(question, labels)
    if not allowed:
        log.warning("no answer class fits %r; sampling from the full space", question)
        allowed = list(range(len(labels)))
    return int(allowed[int(rng.integers(len(allowed)))])
