"""Command-line interface binding curation, labeling, training, evaluation,
search, inference and FLOP accounting.

All subcommands read an optional JSON config file (--config) whose sections
("model", "train", "curate", "search") supply defaults; explicit flags
override config values. Report-producing commands render matplotlib figures
next to their delimited outputs unless --no-figures is given.

Exit codes: 0 success; 2 usage error (bad flags or subcommand); 3 unreadable
or missing file; 4 input schema violation; 5 runtime failure (divergence,
checkpoint mismatch, numeric error). Failures print one JSON error line to
stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import corpus as cp
from . import labels as lb
from . import plots
from .checkpoint import CheckpointError, load_checkpoint
from .model import ModelConfig, flops_estimate
from .search import SearchSpace, search
from .train import TrainConfig, TrainingDiverged, evaluate_checkpoint, score_texts, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_SCHEMA = 4
EXIT_RUNTIME = 5


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise lb.SchemaError(f"invalid JSON config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise lb.SchemaError(f"config {path} must be a JSON object")
    return cfg


def _section(cfg: dict, name: str) -> dict:
    section = cfg.get(name, {})
    if not isinstance(section, dict):
        raise lb.SchemaError(f"config section {name!r} must be an object")
    return section


def _merged(section: dict, overrides: dict) -> dict:
    merged = dict(section)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return merged


def _model_config(cfg: dict, overrides: dict, vocab_size: int = 3) -> ModelConfig:
    merged = _merged(_section(cfg, "model"), overrides)
    merged.setdefault("vocab_size", vocab_size)
    try:
        return ModelConfig.from_dict(merged)
    except (TypeError, ValueError) as exc:
        raise lb.SchemaError(f"bad model config: {exc}") from exc


def _train_config(cfg: dict, overrides: dict) -> TrainConfig:
    merged = _merged(_section(cfg, "train"), overrides)
    try:
        return TrainConfig(**merged)
    except (TypeError, ValueError) as exc:
        raise lb.SchemaError(f"bad train config: {exc}") from exc


def _emit(obj: dict) -> None:
    print(json.dumps(obj, sort_keys=True))


# -- subcommand handlers ---------------------------------------------------------


def cmd_curate(args) -> int:
    cfg = _load_config(args.config)
    section = _merged(_section(cfg, "curate"),
                      {"bottom_fraction": args.bottom_fraction, "seed": args.seed})
    comments = cp.load_comments_jsonl(args.comments)
    sentiment = cp.load_lexicon_tsv(args.sentiment_lexicon, "sentiment")
    hate = cp.load_lexicon_tsv(args.hate_lexicon, "hate")
    terms = cp.load_term_list(args.racial_terms)
    curation_cfg = cp.CurationConfig(
        bottom_fraction=float(section.get("bottom_fraction", 0.2)),
        racial_terms=terms,
        seed=int(section.get("seed", 0)),
    )
    result = cp.curate(comments, sentiment, hate, curation_cfg)
    extra = {s.id: {"candidate": s.id in result.candidate_ids} for s in result.samples}
    lb.dump_annotated_jsonl(args.out, result.samples, extra_fields=extra)
    _emit({"command": "curate", "out": str(args.out), **result.summary()})
    return EXIT_OK


def cmd_stats(args) -> int:
    comments = cp.load_comments_jsonl(args.comments)
    sentiment = cp.load_lexicon_tsv(args.sentiment_lexicon, "sentiment")
    hate = cp.load_lexicon_tsv(args.hate_lexicon, "hate")
    scored = cp.score_comments(comments, sentiment, hate)
    stats = cp.corpus_stats(scored)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "stats.json").write_text(cp.stats_to_json(stats) + "\n", encoding="utf-8")
    table = cp.stats_table(stats)
    (out_dir / "stats.txt").write_text(table + "\n", encoding="utf-8")
    with open(out_dir / "stats.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source", "count", "percent_negative", "mean", "median",
                         "min", "max"])
        for source, s in sorted(stats.items()):
            writer.writerow([source, s.count, repr(s.percent_negative), repr(s.mean),
                             repr(s.median), repr(s.min), repr(s.max)])
    if not args.no_figures:
        by_source: dict[str, list[float]] = {}
        for s in scored:
            by_source.setdefault(s.comment.source, []).append(s.score)
        plots.plot_score_histograms(by_source, out_dir / "score_histogram.png")
    print(table)
    return EXIT_OK


def cmd_aggregate(args) -> int:
    samples = lb.load_annotated_jsonl(args.input, require_annotations=True)
    total = len(samples)
    dropped_fraction = 0.0
    if args.cv_threshold is not None:
        samples, dropped_fraction = lb.cv_filter(samples, args.cv_threshold)
        if not samples:
            raise ValueError(f"cv threshold {args.cv_threshold} drops every sample")
    out_path = Path(args.out)
    with open(out_path, "w", encoding="utf-8") as fh:
        for s in samples:
            p = lb.soft_label(s.annotations)
            obj = lb.sample_to_dict(s)
            obj["soft_label"] = [round(x, 6) for x in p.probs.tolist()]
            obj["multiclass_target"] = lb.multiclass_target(p)
            fh.write(json.dumps(obj, sort_keys=True) + "\n")
    if not args.no_figures:
        cvs = [c for c in (lb.sample_cv(s) for s in samples) if c is not None]
        if cvs:
            plots.plot_cv_histogram(cvs, args.cv_threshold,
                                    out_path.with_suffix(".cv.png"))
    _emit({"command": "aggregate", "out": str(out_path), "input_samples": total,
           "kept_samples": len(samples), "dropped_fraction": dropped_fraction})
    return EXIT_OK


def cmd_split(args) -> int:
    samples = lb.load_annotated_jsonl(args.input, require_annotations=False)
    splits = cp.split_dataset(samples, seed=args.seed, val_fraction=args.val_fraction)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    counts = {}
    for name, part in splits.items():
        lb.dump_annotated_jsonl(out_dir / f"{name}.jsonl", part)
        counts[name] = len(part)
    _emit({"command": "split", "out_dir": str(out_dir), "counts": counts})
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    train_samples = lb.load_annotated_jsonl(args.train)
    val_samples = lb.load_annotated_jsonl(args.val)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_cfg = _model_config(cfg, {"max_len": args.max_len, "seed": args.seed},
                              vocab_size=args.vocab_size or 4096)
    if args.vocab_size:
        model_cfg = replace(model_cfg, vocab_size=args.vocab_size)
    train_cfg = _train_config(cfg, {
        "lr": args.lr, "batch_size": args.batch_size, "epochs": args.epochs,
        "seed": args.seed,
    })
    train_cfg = replace(train_cfg, checkpoint_path=str(out_dir / "model.ckpt"))
    result = train(model_cfg, train_cfg, train_samples, val_samples)
    (out_dir / "history.json").write_text(
        json.dumps(result.history, sort_keys=True) + "\n", encoding="utf-8")
    if not args.no_figures:
        plots.plot_loss_curves(result.history, out_dir / "loss_curves.png")
    _emit({"command": "train", "checkpoint": result.checkpoint_path,
           "best_val_loss": result.best_val_loss, "best_epoch": result.best_epoch,
           "epochs": len(result.history)})
    return EXIT_OK


def cmd_evaluate(args) -> int:
    samples = lb.load_annotated_jsonl(args.data)
    report, extras = evaluate_checkpoint(args.checkpoint, samples, mode=args.mode,
                                         batch_size=args.batch_size)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    header, row = report.to_csv_row()
    with open(out_dir / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerow(row)
    payload = report.to_json_dict()
    payload["mean_loss"] = extras["mean_loss"]
    payload["n_samples"] = extras["n_samples"]
    payload["mode"] = extras["mode"]
    (out_dir / "metrics.json").write_text(
        json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")
    if not args.no_figures:
        plots.plot_ap_per_class(report, out_dir / "ap_per_class.png")
    print(",".join(header))
    print(",".join(row))
    return EXIT_OK


def cmd_search(args) -> int:
    cfg = _load_config(args.config)
    train_samples = lb.load_annotated_jsonl(args.train)
    val_samples = lb.load_annotated_jsonl(args.val)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_cfg = _model_config(cfg, {"max_len": args.max_len}, vocab_size=4096)
    train_cfg = _train_config(cfg, {"epochs": args.epochs, "batch_size": args.batch_size})
    section = _section(cfg, "search")
    space = SearchSpace(
        lr_min=float(section.get("lr_min", 1e-4)),
        lr_max=float(section.get("lr_max", 1e-2)),
        pool_num_heads=tuple(section.get("pool_num_heads", (1, 2, 4))),
    )
    seed = args.seed if args.seed is not None else int(section.get("seed", 0))
    n_trials = args.trials if args.trials is not None else int(section.get("n_trials", 10))
    trials, front = search(model_cfg, train_cfg, space, train_samples, val_samples,
                           n_trials=n_trials, seed=seed)
    with open(out_dir / "trials.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial_id", "lr", "num_hf_layers", "use_hopfield_pool",
                         "pool_num_heads", "val_loss", "flops", "map", "iou_at_1",
                         "on_front"])
        front_ids = set(front.member_ids())
        for t in trials:
            writer.writerow([t.trial_id, repr(t.lr), t.num_hf_layers,
                             int(t.use_hopfield_pool), t.pool_num_heads,
                             repr(t.val_loss), t.flops, repr(t.map), repr(t.iou_at_1),
                             int(t.trial_id in front_ids)])
    (out_dir / "pareto.json").write_text(json.dumps({
        "front": [t.to_dict() for t in front.members],
        "selected": front.selected().to_dict(),
    }, sort_keys=True) + "\n", encoding="utf-8")
    if not args.no_figures:
        plots.plot_parallel_coordinates(trials, front.member_ids(),
                                        out_dir / "parallel_coordinates.png")
    _emit({"command": "search", "trials": len(trials),
           "front": front.member_ids(), "selected": front.selected().trial_id})
    return EXIT_OK


def cmd_score(args) -> int:
    model, header = load_checkpoint(args.checkpoint)
    if "vocab" not in header:
        raise CheckpointError("checkpoint has no stored vocabulary")
    vocab = cp.Vocab(tokens=list(header["vocab"]))
    rows = []
    with open(args.input, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise lb.SchemaError(f"invalid JSON on line {i}: {exc}") from exc
            if not isinstance(obj, dict) or "text" not in obj:
                raise lb.SchemaError(f"score input needs a 'text' field (line {i})")
            rows.append((str(obj.get("id", f"line{i}")), str(obj["text"])))
    if not rows:
        raise lb.SchemaError("score input holds no records")
    probs = score_texts(model, vocab, [text for _, text in rows],
                        batch_size=args.batch_size)
    out = sys.stdout if args.out == "-" else open(args.out, "w", encoding="utf-8")
    try:
        for (sample_id, _), p in zip(rows, probs):
            out.write(json.dumps({"id": sample_id, "probs": p.tolist()},
                                 sort_keys=True) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_flops(args) -> int:
    cfg = _load_config(args.config)
    model_cfg = _model_config(cfg, {}, vocab_size=args.vocab_size or 4096)
    seq_len = args.seq_len if args.seq_len is not None else model_cfg.max_len
    est = flops_estimate(model_cfg, seq_len)
    _emit({"command": "flops", "seq_len": seq_len,
           "forward_flops": est.forward_flops, "breakdown": est.breakdown})
    return EXIT_OK


# -- parser and dispatch ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hopbert",
        description="Hopfield-augmented text bias classifier pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--no-figures", action="store_true",
                       help="skip matplotlib figure rendering")

    p = sub.add_parser("curate", help="lexicon scoring, candidates, matched controls")
    common(p)
    p.add_argument("--comments", required=True)
    p.add_argument("--sentiment-lexicon", required=True)
    p.add_argument("--hate-lexicon", required=True)
    p.add_argument("--racial-terms", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bottom-fraction", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=cmd_curate)

    p = sub.add_parser("stats", help="corpus sentiment statistics report")
    common(p)
    p.add_argument("--comments", required=True)
    p.add_argument("--sentiment-lexicon", required=True)
    p.add_argument("--hate-lexicon", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser("aggregate", help="soft labels from annotations (+ CV filter)")
    common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cv-threshold", type=float)
    p.set_defaults(handler=cmd_aggregate)

    p = sub.add_parser("split", help="source-based train/validation/test split")
    common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.set_defaults(handler=cmd_split)

    p = sub.add_parser("train", help="train a model on annotated JSON lines")
    common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-len", type=int)
    p.add_argument("--vocab-size", type=int)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("evaluate", help="metric report for a labeled dataset")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--mode", choices=["multiclass", "multilabel", "both"],
                   default="both")
    p.add_argument("--batch-size", type=int, default=32)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("search", help="multi-objective hyperparameter search")
    common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--max-len", type=int)
    p.set_defaults(handler=cmd_search)

    p = sub.add_parser("score", help="batch inference to JSON lines")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", default="-")
    p.add_argument("--batch-size", type=int, default=32)
    p.set_defaults(handler=cmd_score)

    p = sub.add_parser("flops", help="analytic forward FLOP estimate")
    common(p)
    p.add_argument("--seq-len", type=int)
    p.add_argument("--vocab-size", type=int)
    p.set_defaults(handler=cmd_flops)

    return parser


def _error_line(code: int, exc: BaseException) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc),
                      "exit_code": code}, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        return args.handler(args)
    except (FileNotFoundError, PermissionError, IsADirectoryError, OSError) as exc:
        return _error_line(EXIT_IO, exc)
    except lb.SchemaError as exc:
        return _error_line(EXIT_SCHEMA, exc)
    except (CheckpointError, TrainingDiverged, FloatingPointError) as exc:
        return _error_line(EXIT_RUNTIME, exc)
    except ValueError as exc:
        return _error_line(EXIT_SCHEMA, exc)


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
