"""Corpus de-correlation, answer-pool construction and episode-level splits."""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .qa import QARecord, meta_question

log = logging.getLogger(__name__)


def _max_allowed(rest: int, threshold: Fraction) -> int:
    """Largest count c with c / (c + rest) strictly below ``threshold``."""
    if threshold >= 1:
        return -1 if rest == 0 else 10**18
    # c < threshold * rest / (1 - threshold)
    bound = threshold * rest / (1 - threshold)
    c = bound.numerator // bound.denominator
    if Fraction(c) == bound:
        c -= 1
    return c


def balance_filter(records: Sequence[QARecord], threshold: float = 0.5, seed: int = 0) -> list[QARecord]:
    """Drop question/answer correlations that a blind model could exploit.

    Per meta-question: groups with a single distinct answer are removed, and
    any answer whose frequency is not strictly below ``threshold`` is
    randomly thinned by the minimum number of records needed. The two rules
    are applied until neither fires.
    """
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    thr = Fraction(threshold)
    rng = np.random.default_rng(seed)
    groups: dict[str, list[int]] = defaultdict(list)
    for i, r in enumerate(records):
        key = r.meta_key or meta_question(r)
        groups[key].append(i)
    keep = np.ones(len(records), dtype=bool)
    for key in sorted(groups):
        by_answer: dict[str, list[int]] = defaultdict(list)
        for i in groups[key]:
            by_answer[records[i].answer].append(i)
        while by_answer:
            if len(by_answer) == 1:
                for idx in by_answer.popitem()[1]:
                    keep[idx] = False
                break
            total = sum(len(v) for v in by_answer.values())
            top = max(sorted(by_answer), key=lambda a: len(by_answer[a]))
            count = len(by_answer[top])
            if Fraction(count, total) < thr:
                break
            allowed = max(0, _max_allowed(total - count, thr))
            members = by_answer[top]
            drop = rng.choice(len(members), size=count - allowed, replace=False)
            for j in drop:
                keep[members[j]] = False
            drop_set = set(int(j) for j in drop)
            remaining = [m for n, m in enumerate(members) if n not in drop_set]
            if remaining:
                by_answer[top] = remaining
            else:
                del by_answer[top]
    return [r for r, k in zip(records, keep) if k]


@dataclass
class AnswerPool:
    labels: list[str]
    counts: list[int]

    def __post_init__(self):
        self.index = {a: i for i, a in enumerate(self.labels)}
        if len(self.index) != len(self.labels):
            raise ValueError("answer labels must be unique")

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self.index

    def to_dict(self) -> dict:
        return {"labels": self.labels, "counts": self.counts}

    @classmethod
    def from_dict(cls, d: dict) -> AnswerPool:
        return cls(list(d["labels"]), list(d["counts"]))


class EmptyPoolError(ValueError):
    pass


def build_answer_pool(records: Sequence[QARecord], min_count: int = 30) -> tuple[AnswerPool, list[QARecord]]:
    """Keep answer classes with at least ``min_count`` records; order by count desc, then label."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter(r.answer for r in records)
    kept = sorted((a for a, c in counts.items() if c >= min_count), key=lambda a: (-counts[a], a))
    if not kept:
        raise EmptyPoolError(f"no answer class has {min_count} or more samples")
    pool = AnswerPool(kept, [counts[a] for a in kept])
    return pool, [r for r in records if r.answer in pool]


def _apportion(n: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of n items; ties go to the earlier subset."""
    quotas = [n * r for r in ratios]
    sizes = [int(q) for q in quotas]
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def stratified_split(records: Sequence[QARecord], ratios: Sequence[float] = (0.6, 0.2, 0.2),
                     seed: int = 0, episode_sport: dict[str, str] | None = None
                     ) -> tuple[list[QARecord], list[QARecord], list[QARecord]]:
    """Split by episode, stratified by sport, so no episode spans two subsets.

    ``episode_sport`` may list episodes that have no surviving records so
    they still count toward the apportionment.
    """
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    sport_of = dict(episode_sport or {})
    for r in records:
        sport_of.setdefault(r.episode_id, r.sport)
    by_sport: dict[str, list[str]] = defaultdict(list)
    for ep, sp in sport_of.items():
        by_sport[sp].append(ep)
    rng = np.random.default_rng(seed)
    subset_of: dict[str, int] = {}
    for sport in sorted(by_sport):
        eps = sorted(by_sport[sport])
        if len(eps) < 3:
            log.warning("sport %s has only %d episodes; assigning all to train", sport, len(eps))
            subset_of.update({ep: 0 for ep in eps})
            continue
        eps = [eps[i] for i in rng.permutation(len(eps))]
        sizes = _apportion(len(eps), ratios)
        start = 0
        for s, size in enumerate(sizes):
            subset_of.update({ep: s for ep in eps[start:start + size]})
            start += size
    out: tuple[list, list, list] = ([], [], [])
    for r in records:
        out[subset_of[r.episode_id]].append(r)
    return out


def split_episode_ids(episode_sport: dict[str, str], ratios: Sequence[float] = (0.6, 0.2, 0.2),
                      seed: int = 0) -> tuple[list[str], list[str], list[str]]:
    """Episode ids per subset, using the same assignment as :func:`stratified_split`."""
    dummy = [QARecord("", ep, "", "", sp, "") for ep, sp in episode_sport.items()]
    parts = stratified_split(dummy, ratios, seed, episode_sport)
    return tuple(sorted(r.episode_id for r in part) for part in parts)
