"""End-to-end corpus construction: episodes -> QA -> balance -> pool -> split."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .episodes import EventLog, GeneratorConfig, generate_episode
from .processing import AnswerPool, balance_filter, build_answer_pool, stratified_split
from .qa import QARecord, generate_qa

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")


def episode_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


@dataclass
class Corpus:
    features: dict[str, tuple[np.ndarray, np.ndarray]]
    logs: dict[str, EventLog]
    pool: AnswerPool
    splits: dict[str, list[QARecord]]
    stats: dict = field(default_factory=dict)
    raw: list[QARecord] = field(default_factory=list)  # pre-balance records, kept for inspection

    def records(self, split: str) -> list[QARecord]:
        return self.splits[split]

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        (out / "features").mkdir(parents=True, exist_ok=True)
        (out / "events").mkdir(exist_ok=True)
        manifest = {}
        for eid, (app, mot) in sorted(self.features.items()):
            rel = f"features/{eid}.bin"
            io.write_features(out / rel, eid, app, mot)
            manifest[eid] = rel
        io.write_manifest(out / "manifest.json", manifest)
        for eid, elog in self.logs.items():
            io.write_event_log(out / "events" / f"{eid}.jsonl", elog)
        for split in SPLITS:
            io.save_records(out / f"{split}.jsonl", self.splits[split])
        if self.raw:
            io.save_records(out / "raw.jsonl", self.raw)
        (out / "answer_pool.json").write_text(json.dumps(self.pool.to_dict(), indent=1), encoding="utf-8")
        (out / "stats.json").write_text(json.dumps(self.stats, indent=1, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, data_dir, with_logs: bool = False) -> Corpus:
        root = Path(data_dir)
        for name in ("manifest.json", "answer_pool.json", *(f"{s}.jsonl" for s in SPLITS)):
            if not (root / name).exists():
                raise io.DataValidationError(f"{root}: missing {name}")
        manifest = io.read_manifest(root / "manifest.json")
        features = {}
        for eid, rel in manifest.items():
            got, app, mot = io.read_features(root / rel)
            if got != eid:
                raise io.DataValidationError(f"{rel}: header names episode {got!r}, manifest says {eid!r}")
            features[eid] = (app, mot)
        pool = AnswerPool.from_dict(json.loads((root / "answer_pool.json").read_text(encoding="utf-8")))
        splits = {s: io.load_records(root / f"{s}.jsonl") for s in SPLITS}
        for s, recs in splits.items():
            for r in recs:
                if r.episode_id not in features:
                    raise io.DataValidationError(f"{s}: record {r.qid} refers to unknown episode {r.episode_id}")
                if r.answer not in pool:
                    raise io.DataValidationError(f"{s}: record {r.qid} answer {r.answer!r} outside the pool")
        logs = {}
        if with_logs and (root / "events").exists():
            for p in sorted((root / "events").glob("*.jsonl")):
                elog = io.read_event_log(p)
                logs[elog.episode_id] = elog
        stats_path = root / "stats.json"
        stats = json.loads(stats_path.read_text()) if stats_path.exists() else {}
        raw = io.load_records(root / "raw.jsonl") if (root / "raw.jsonl").exists() else []
        return cls(features, logs, pool, splits, stats, raw)


def build_corpus(gen: GeneratorConfig, n_episodes: int, seed: int = 0, per_template: int | None = 1,
                 threshold: float = 0.5, min_count: int = 30,
                 ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)) -> Corpus:
    features, logs, raw = {}, {}, []
    for i in range(n_episodes):
        s = episode_seed(seed, i)
        eid = f"ep{i:06d}"
        app, mot, elog = generate_episode(gen, s, eid)
        features[eid] = (app, mot)
        logs[eid] = elog
        raw.extend(generate_qa(elog, gen, np.random.default_rng(s + 1), per_template))
    balanced = balance_filter(raw, threshold, seed)
    pool, pooled = build_answer_pool(balanced, min_count)
    episode_sport = {eid: elog.sport for eid, elog in logs.items()}
    train, val, test = stratified_split(pooled, ratios, seed, episode_sport)
    stats = {"episodes": n_episodes, "raw_records": len(raw), "balanced_records": len(balanced),
             "pooled_records": len(pooled), "classes": len(pool),
             "split_records": {"train": len(train), "val": len(val), "test": len(test)}}
    log.info("corpus: %s", stats)
    return Corpus(features, logs, pool, {"train": train, "val": val, "test": test}, stats, raw)
