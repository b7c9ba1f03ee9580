"""Command line: gen, balance, train, eval, focus-dump, bench.

Exit codes: 0 success, 2 config error, 3 data validation error, 4 non-finite loss.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .attention import ConfigError
from .bench import bench_attention
from .config import RunConfig, desk, load_config
from .data import io
from .data.corpus import Corpus, build_corpus
from .data.episodes import GeneratorConfigError
from .data.processing import EmptyPoolError, balance_filter, build_answer_pool, stratified_split
from .metrics import rows_to_csv
from .model import build_model, load_checkpoint
from .tensor import ShapeError
from .text import Vocabulary
from .train import (Encoded, NumericalError, evaluate_model, focus_summary, prediction_rows,
                    train_model)

log = logging.getLogger("autofocus")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else desk()
    if args.seed is not None:
        cfg = cfg.replace(data_seed=args.seed, init_seed=args.seed, train_seed=args.seed)
    return cfg


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_config(out: Path, cfg: RunConfig) -> None:
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True), encoding="utf-8")


def cmd_gen(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    log.info("generating %d episodes with data seed %d", cfg.episodes, cfg.data_seed)
    corpus = build_corpus(cfg.generator(), cfg.episodes, seed=cfg.data_seed, per_template=cfg.per_template,
                          threshold=cfg.balance_threshold, min_count=cfg.min_count, ratios=cfg.split_ratios)
    corpus.save(out)
    Vocabulary.build(r.question for r in corpus.splits["train"]).save(out / "vocab.txt")
    _write_config(out, cfg)
    print(json.dumps(corpus.stats, sort_keys=True))
    return EXIT_OK


def cmd_balance(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    records = io.load_records(args.input)
    balanced = balance_filter(records, cfg.balance_threshold, cfg.data_seed)
    pool, pooled = build_answer_pool(balanced, cfg.min_count)
    episode_sport = {r.episode_id: r.sport for r in pooled}
    splits = stratified_split(pooled, cfg.split_ratios, cfg.data_seed, episode_sport)
    io.save_records(out / "balanced.jsonl", balanced)
    (out / "answer_pool.json").write_text(json.dumps(pool.to_dict(), indent=1), encoding="utf-8")
    for name, recs in zip(("train", "val", "test"), splits):
        io.save_records(out / f"{name}.jsonl", recs)
    stats = {"input": len(records), "balanced": len(balanced), "pooled": len(pooled), "classes": len(pool)}
    print(json.dumps(stats, sort_keys=True))
    return EXIT_OK


def _load_vocab(data_dir: Path, corpus: Corpus) -> Vocabulary:
    path = data_dir / "vocab.txt"
    if path.exists():
        return Vocabulary.load(path)
    return Vocabulary.build(r.question for r in corpus.splits["train"])


def cmd_train(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    data_dir = Path(args.data or cfg.data_dir)
    corpus = Corpus.load(data_dir)
    vocab = _load_vocab(data_dir, corpus)
    model_cfg = cfg.model(len(vocab), len(corpus.pool), kind=args.kind)
    model = build_model(model_cfg)
    idx = corpus.pool.index
    train = Encoded.build(corpus.splits["train"], vocab, idx)
    val = Encoded.build(corpus.splits["val"], vocab, idx)
    if len(train) == 0:
        raise io.DataValidationError("training split is empty")
    log.info("training %s on %d records (%d classes)", model_cfg.kind, len(train), len(corpus.pool))
    result = train_model(model, train, val, corpus.features, vocab.pad_id, cfg.training(),
                         log_path=out / "train_log.csv")
    model.load_state_dict(result.best_state)
    model.save(out / "model.npz", extra={"best_epoch": result.best_epoch, "best_val": result.best_val,
                                        "labels": corpus.pool.labels})
    vocab.save(out / "vocab.txt")
    _write_config(out, cfg)
    if len(val):
        rows, _, _ = evaluate_model(model, val, corpus.features, vocab.pad_id, "val")
        (out / "metrics.csv").write_text(rows_to_csv(rows), encoding="utf-8")
    print(json.dumps({"best_epoch": result.best_epoch, "best_val": result.best_val}))
    return EXIT_OK


def _checkpoint_and_split(args):
    cfg = _config(args)
    data_dir = Path(args.data or cfg.data_dir)
    corpus = Corpus.load(data_dir)
    ckpt = Path(args.checkpoint)
    try:
        model, extra = load_checkpoint(ckpt)
    except (KeyError, ValueError) as exc:
        raise io.DataValidationError(f"{ckpt}: unusable checkpoint ({exc})") from exc
    labels = extra.get("labels")
    if labels is not None and list(labels) != list(corpus.pool.labels):
        raise io.DataValidationError("checkpoint answer pool differs from the dataset's")
    if model.config.n_classes != len(corpus.pool):
        raise io.DataValidationError(f"checkpoint predicts {model.config.n_classes} classes, "
                                     f"pool has {len(corpus.pool)}")
    vocab_path = ckpt.parent / "vocab.txt"
    vocab = Vocabulary.load(vocab_path) if vocab_path.exists() else _load_vocab(data_dir, corpus)
    if len(vocab) != model.config.vocab_size:
        raise io.DataValidationError("vocabulary size differs from the checkpoint's")
    enc = Encoded.build(corpus.splits[args.split], vocab, corpus.pool.index)
    return cfg, corpus, model, vocab, enc


def cmd_eval(args) -> int:
    cfg, corpus, model, vocab, enc = _checkpoint_and_split(args)
    out = _out_dir(args, cfg)
    rows, pred, _ = evaluate_model(model, enc, corpus.features, vocab.pad_id, args.split)
    (out / "metrics.csv").write_text(rows_to_csv(rows), encoding="utf-8")
    io.write_jsonl(out / "predictions.jsonl", prediction_rows(enc, pred, corpus.pool.labels))
    print(f"{args.split}: accuracy {rows[0].accuracy:.4f} macro-F1 {rows[0].macro_f1:.4f} (n={rows[0].count})")
    return EXIT_OK


def cmd_focus_dump(args) -> int:
    cfg, corpus, model, vocab, enc = _checkpoint_and_split(args)
    if model.config.kind != "aft":
        raise ConfigError(f"focus weights need an aft checkpoint, got {model.config.kind!r}")
    out = _out_dir(args, cfg)
    _, _, alpha = evaluate_model(model, enc, corpus.features, vocab.pad_id, args.split)
    cols = [f"alpha_f{f}" for f in model.config.focal]
    with open(out / "focus_weights.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["qid", "question_type", *cols])
        for r, a in zip(enc.records, alpha):
            w.writerow([r.qid, r.question_type, *(repr(float(x)) for x in a)])
    with open(out / "focus_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", *cols])
        for group, mean in focus_summary(enc.records, alpha).items():
            w.writerow([group, *(repr(float(x)) for x in mean)])
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    n = args.n or cfg.bench_n
    report = bench_attention(n, cfg.focal, cfg.heads, cfg.d, cfg.bench_repetitions, seed=cfg.data_seed)
    (out / "bench.json").write_text(json.dumps(report.to_dict(), indent=1), encoding="utf-8")
    print(f"N={n} banded {report.banded_scores} vs dense {report.dense_scores} scores; "
          f"speedup {report.speedup:.2f}x")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="autofocus", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, split=False, data=False, checkpoint=False):
        p.add_argument("--config", help="YAML or JSON run config")
        p.add_argument("--seed", type=int, help="overrides every seed in the config")
        p.add_argument("--out", help="output directory")
        if data:
            p.add_argument("--data", help="dataset directory written by `gen`")
        if checkpoint:
            p.add_argument("--checkpoint", required=True)
        if split:
            p.add_argument("--split", choices=("train", "val", "test"), default="test")
        return p

    common(sub.add_parser("gen", help="generate a synthetic dataset")).set_defaults(func=cmd_gen)
    p = common(sub.add_parser("balance", help="balance, pool and split a QA record file"))
    p.add_argument("--input", required=True, help="JSONL QA records")
    p.set_defaults(func=cmd_balance)
    p = common(sub.add_parser("train", help="train a model"), data=True)
    p.add_argument("--kind", choices=("aft", "transformer", "blind"))
    p.set_defaults(func=cmd_train)
    common(sub.add_parser("eval", help="evaluate a checkpoint"), split=True, data=True,
           checkpoint=True).set_defaults(func=cmd_eval)
    common(sub.add_parser("focus-dump", help="dump per-question focus weights"), split=True, data=True,
           checkpoint=True).set_defaults(func=cmd_focus_dump)
    p = common(sub.add_parser("bench", help="banded vs dense attention benchmark"))
    p.add_argument("--n", type=int, help="sequence length (default from config)")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, GeneratorConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (io.DataValidationError, EmptyPoolError, FileNotFoundError, ShapeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
