"""Mini-batch training, evaluation and focus-weight dumps."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .data.qa import QARecord
from .metrics import MetricsRow, accuracy, breakdown
from .model import QAModel, predict
from .text import Vocabulary, pad_batch, tokenize

log = logging.getLogger(__name__)


class NumericalError(FloatingPointError):
    """Loss or parameters became non-finite."""


@dataclass
class Encoded:
    """Records with pre-tokenised questions and gold class ids."""

    records: list[QARecord]
    tokens: list[list[int]]
    gold: np.ndarray

    @classmethod
    def build(cls, records: Sequence[QARecord], vocab: Vocabulary, label_index: dict[str, int]) -> Encoded:
        toks = [tokenize(r.question, vocab) for r in records]
        gold = np.array([label_index[r.answer] for r in records], dtype=np.int64)
        return cls(list(records), toks, gold)

    def __len__(self) -> int:
        return len(self.records)


def make_batch(enc: Encoded, idx: Sequence[int], features: dict, pad_id: int):
    recs = [enc.records[i] for i in idx]
    app = np.stack([features[r.episode_id][0] for r in recs])
    mot = np.stack([features[r.episode_id][1] for r in recs])
    ids, mask = pad_batch([enc.tokens[i] for i in idx], pad_id)
    return app, mot, ids, mask, enc.gold[np.asarray(idx)]


@dataclass
class TrainConfig:
    epochs: int = 4
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    max_steps: int | None = None
    eval_batch: int = 128


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_accuracy: float
    seconds: float


@dataclass
class TrainResult:
    history: list[EpochLog] = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = -1.0
    best_state: dict | None = None


def predict_records(model: QAModel, enc: Encoded, features: dict, pad_id: int,
                    batch: int = 128) -> tuple[np.ndarray, np.ndarray | None]:
    """Predicted class ids and (for AFT) focus weights for every encoded record."""
    preds, alphas = [], []
    with T.no_grad():
        for start in range(0, len(enc), batch):
            idx = list(range(start, min(start + batch, len(enc))))
            app, mot, ids, mask, _ = make_batch(enc, idx, features, pad_id)
            logits, alpha = model.forward(app, mot, ids, mask)
            preds.append(predict(logits.data))
            if alpha is not None:
                alphas.append(alpha.data.copy())
    p = np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)
    return p, (np.concatenate(alphas) if alphas else None)


def train_model(model: QAModel, train: Encoded, val: Encoded | None, features: dict, pad_id: int,
                cfg: TrainConfig, log_path=None) -> TrainResult:
    """Adam on cross-entropy; keeps the state with the best validation accuracy (earliest on ties).

    With ``epochs == 0`` the returned best state is the initialisation.
    """
    params = model.parameters()
    opt = T.Adam(params, lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    result = TrainResult(best_state=model.state_dict())
    writer = None
    fh = None
    if log_path is not None:
        fh = open(log_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "train_accuracy", "val_accuracy"])
    steps = 0
    try:
        for epoch in range(1, cfg.epochs + 1):
            t0 = time.time()
            order = rng.permutation(len(train))
            losses, correct = [], 0
            for start in range(0, len(order), cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                app, mot, ids, mask, gold = make_batch(train, idx, features, pad_id)
                opt.zero_grad()
                logits, _ = model.forward(app, mot, ids, mask)
                loss = T.cross_entropy(logits, gold)
                if not math.isfinite(loss.item()):
                    raise NumericalError(f"non-finite loss at epoch {epoch}, step {steps}")
                loss.backward()
                opt.step()
                losses.append(loss.item())
                correct += int(np.sum(predict(logits.data) == gold))
                steps += 1
                if cfg.max_steps is not None and steps >= cfg.max_steps:
                    break
            seen = min(len(order), len(losses) * cfg.batch_size)
            val_acc = float("nan")
            if val is not None and len(val):
                vp, _ = predict_records(model, val, features, pad_id, cfg.eval_batch)
                val_acc = accuracy(val.gold, vp)
            entry = EpochLog(epoch, float(np.mean(losses)) if losses else float("nan"),
                             correct / max(seen, 1), val_acc, time.time() - t0)
            result.history.append(entry)
            log.info("epoch %d loss %.4f train acc %.3f val acc %.3f (%.0fs)", epoch, entry.train_loss,
                     entry.train_accuracy, entry.val_accuracy, entry.seconds)
            if writer is not None:
                writer.writerow([epoch, repr(entry.train_loss), repr(entry.train_accuracy), repr(entry.val_accuracy)])
                fh.flush()
            score = val_acc if val is not None and len(val) else -float(entry.train_loss)
            if score > result.best_val:
                result.best_val, result.best_epoch = score, epoch
                result.best_state = model.state_dict()
            if cfg.max_steps is not None and steps >= cfg.max_steps:
                break
    finally:
        if fh is not None:
            fh.close()
    return result


def evaluate_model(model: QAModel, enc: Encoded, features: dict, pad_id: int, split: str,
                   batch: int = 128) -> tuple[list[MetricsRow], np.ndarray, np.ndarray | None]:
    if len(enc) == 0:
        raise ValueError(f"split {split!r} is empty")
    pred, alpha = predict_records(model, enc, features, pad_id, batch)
    rows = breakdown(split, enc.gold, pred, [r.question_type for r in enc.records],
                     [r.sport for r in enc.records])
    return rows, pred, alpha


def is_counting(record: QARecord) -> bool:
    return record.question.startswith("How many")


def focus_summary(records: Sequence[QARecord], alpha: np.ndarray) -> dict[str, np.ndarray]:
    """Mean focus weights per question group: each question type plus 'counting'."""
    groups: dict[str, list[int]] = {}
    for i, r in enumerate(records):
        groups.setdefault(r.question_type, []).append(i)
        if is_counting(r):
            groups.setdefault("counting", []).append(i)
    return {k: alpha[v].mean(axis=0) for k, v in sorted(groups.items())}


def prediction_rows(enc: Encoded, pred: np.ndarray, labels: Sequence[str]) -> list[dict]:
    return [{"qid": r.qid, "pred": int(p), "gold": int(g), "pred_label": labels[int(p)],
             "gold_label": labels[int(g)], "question_type": r.question_type, "sport": r.sport}
            for r, p, g in zip(enc.records, pred, enc.gold)]


def metrics_from_predictions(split: str, rows: Sequence[dict]) -> list[MetricsRow]:
    """Recompute the metrics breakdown from persisted prediction rows."""
    if not rows:
        raise ValueError(f"split {split!r} is empty")
    return breakdown(split, [r["gold"] for r in rows], [r["pred"] for r in rows],
                     [r["question_type"] for r in rows], [r["sport"] for r in rows])
