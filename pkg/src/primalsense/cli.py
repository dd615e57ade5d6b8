"""Command-line pipeline: synth, train, score, fuse, eval, report (and run = all).

Every command works inside a run directory (``--out``)::

    checkpoints/<model>.ckpt      logs/<model>.train.jsonl
    scores/<model>.<split>.jsonl  graphs/relgraph.<split>.tsv
    fusion.json                   fused/hybrid.<split>.jsonl
    reports/<model>.<split>.json  reports/table.<split>.txt
    reports/overlap.<split>.json  manifest.jsonl

Exit status: 0 on success, 1 on invalid data, 2 on missing inputs or bad usage.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .checkpoint import CheckpointError
from .config import RunConfig, read_config_file, resolve
from .corpus import (
    CorpusError,
    CorpusSplit,
    SynthSpec,
    generate_synthetic,
    load_running_text,
    load_split,
    write_running_text,
    write_split,
)
from .evalkit import EvalError, EvalReport, evaluate, format_table, overlap_report
from .fusion import HYBRID_MODELS, FusionError, HybridRanker
from .scorers import SCORERS, SenseScores, document_triples, sentence_triples

logger = logging.getLogger("primalsense")

MODELS = tuple(SCORERS)
REPORT_ORDER = ("umfs", "skipthought", "pattern", "relgraph", "hybrid")


class MissingInput(Exception):
    pass


# -- helpers -----------------------------------------------------------------------

def _dump_jsonl(path: Path, records) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False))
            fh.write("\n")


def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        raise MissingInput(f"missing input: {path}")
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _record_manifest(cfg: RunConfig, command: str, **extra) -> None:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rec = {"command": command, "seed": cfg.seed, "config_hash": cfg.config_hash(),
           "versions": {"primalsense": __version__, "checkpoint_format": 1}, **extra}
    with open(out / "manifest.jsonl", "a", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _load_corpus(cfg: RunConfig) -> CorpusSplit:
    if not cfg.corpus:
        raise MissingInput("no corpus given (--corpus)")
    if not Path(cfg.corpus).exists():
        raise MissingInput(f"missing input: {cfg.corpus}")
    return load_split(cfg.corpus)


def make_estimator(model: str, cfg: RunConfig):
    if model == "umfs":
        return SCORERS[model](embedding_dim=cfg.embedding_dim, epochs=cfg.umfs_epochs,
                              max_len=cfg.max_len, random_state=cfg.seed)
    if model == "skipthought":
        return SCORERS[model](hidden_dim=cfg.hidden_dim, max_len=cfg.max_len, epochs=cfg.skipthought_epochs,
                              lr=cfg.skipthought_lr, random_state=cfg.seed)
    return SCORERS[model](embedding_dim=cfg.embedding_dim, hidden_dim=cfg.hidden_dim, n_layers=cfg.n_layers,
                          dropout=cfg.dropout, max_len=cfg.max_len, batch_size=cfg.batch_size,
                          epochs=cfg.epochs, lr=cfg.lr, attention=cfg.attention, random_state=cfg.seed)


def _checkpoint_path(cfg: RunConfig, model: str) -> Path:
    return Path(cfg.out) / "checkpoints" / f"{model}.ckpt"


def _scores_path(cfg: RunConfig, model: str, split: str) -> Path:
    return Path(cfg.out) / "scores" / f"{model}.{split}.jsonl"


def _report_path(cfg: RunConfig, model: str, split: str) -> Path:
    return Path(cfg.out) / "reports" / f"{model}.{split}.json"


def _running_text(cfg: RunConfig):
    path = cfg.running_text
    if path is None and cfg.corpus:
        sibling = Path(cfg.corpus).with_name("running_text.jsonl")
        path = sibling if sibling.exists() else None
    if path is None:
        return None
    if not Path(path).exists():
        raise MissingInput(f"missing input: {path}")
    return load_running_text(path)


# -- commands ------------------------------------------------------------------------

def cmd_synth(cfg: RunConfig, args) -> None:
    spec = SynthSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in cfg.synth.items()})
    split = generate_synthetic(spec, cfg.seed)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_split(out / "corpus.jsonl", split)
    write_running_text(out / "running_text.jsonl", split.running_text)
    logger.info("wrote %d/%d/%d expressions to %s", len(split.train), len(split.validation),
                len(split.test), out / "corpus.jsonl")
    _record_manifest(cfg, "synth")


def cmd_train(cfg: RunConfig, args) -> None:
    split = _load_corpus(cfg)
    model = args.model
    est = make_estimator(model, cfg)
    if model == "skipthought":
        docs = _running_text(cfg)
        if docs is None:
            logger.warning("no running text found; pretraining skip-thought on page text")
            est.fit(sentence_triples(split.train))
        else:
            est.fit(document_triples(docs))
    elif model == "umfs":
        est.fit(split.train)
    else:
        est.fit(split.train, split.validation or None)
    path = _checkpoint_path(cfg, model)
    path.parent.mkdir(parents=True, exist_ok=True)
    est.save(path, {"seed": cfg.seed, "config_hash": cfg.config_hash()})
    _dump_jsonl(Path(cfg.out) / "logs" / f"{model}.train.jsonl", getattr(est, "history_", []))
    logger.info("trained %s -> %s", model, path)
    _record_manifest(cfg, f"train {model}")


def _load_estimator(cfg: RunConfig, model: str):
    path = _checkpoint_path(cfg, model)
    if not path.exists():
        raise MissingInput(f"missing checkpoint: {path}")
    return SCORERS[model].load(path)


def cmd_score(cfg: RunConfig, args) -> None:
    split = _load_corpus(cfg)
    exprs = split[args.split]
    est = _load_estimator(cfg, args.model)
    scores = est.score_senses(exprs)
    _dump_jsonl(_scores_path(cfg, args.model, args.split), (s.to_record() for s in scores))
    if args.model == "relgraph":
        lines = ["expr_id\tfrom_sense\tto_sense\tweight"]
        for e in exprs:
            lines.extend(f"{r['expr_id']}\t{r['from_sense']}\t{r['to_sense']}\t{r['weight']!r}"
                         for r in est.export_graph(e))
        _write_text(Path(cfg.out) / "graphs" / f"relgraph.{args.split}.tsv", "\n".join(lines) + "\n")
    logger.info("scored %d %s expressions with %s", len(scores), args.split, args.model)
    _record_manifest(cfg, f"score {args.model} {args.split}")


def _read_scores(cfg: RunConfig, model: str, split: str) -> list[SenseScores]:
    return [SenseScores.from_record(r) for r in _read_jsonl(_scores_path(cfg, model, split))]


def cmd_fuse(cfg: RunConfig, args) -> None:
    split = _load_corpus(cfg)
    dev = {m: _read_scores(cfg, m, "validation") for m in HYBRID_MODELS}
    ranker = HybridRanker().fit(dev, split.validation)
    for name, w in ranker.config_.models.items():
        lam = "inf (one-hot)" if w.degenerate else f"{w.lam:.3f}"
        logger.info("fusion %s: R=%.3f lambda=%s p=%.3f", name, w.R, lam, w.p)
    _write_text(Path(cfg.out) / "fusion.json", ranker.config_.to_json() + "\n")
    target = {m: _read_scores(cfg, m, args.split) for m in HYBRID_MODELS}
    fused = ranker.transform(target)
    _dump_jsonl(Path(cfg.out) / "fused" / f"hybrid.{args.split}.jsonl", (t.to_record() for t in fused))
    _dump_jsonl(_scores_path(cfg, "hybrid", args.split),
                (SenseScores(t.expression_id, "hybrid", t.total).to_record() for t in fused))
    _record_manifest(cfg, f"fuse {args.split}")


def cmd_eval(cfg: RunConfig, args) -> None:
    split = _load_corpus(cfg)
    exprs = split[args.split]
    scores = _read_scores(cfg, args.model, args.split)
    by_id = {s.expression_id: s for s in scores}
    missing = [e.id for e in exprs if e.id not in by_id]
    if missing:
        raise EvalError(f"{args.model} has no scores for {missing[:5]}")
    report = evaluate(args.model, [by_id[e.id] for e in exprs], exprs)
    _write_text(_report_path(cfg, args.model, args.split), report.to_json() + "\n")
    print(format_table([report]))
    _record_manifest(cfg, f"eval {args.model} {args.split}")


def cmd_report(cfg: RunConfig, args) -> None:
    reports, rankings = [], {}
    for model in REPORT_ORDER:
        path = _report_path(cfg, model, args.split)
        if path.exists():
            reports.append(EvalReport.from_dict(json.loads(path.read_text(encoding="utf-8"))))
            rankings[model] = _read_scores(cfg, model, args.split)
    if not reports:
        raise MissingInput(f"no evaluation reports for split {args.split!r} in {cfg.out}")
    table = format_table(reports)
    _write_text(Path(cfg.out) / "reports" / f"table.{args.split}.txt", table + "\n")
    print(table)
    hybrid_parts = {m: rankings[m] for m in HYBRID_MODELS if m in rankings}
    if len(hybrid_parts) >= 2:
        split = _load_corpus(cfg)
        by_id = {e.id: e for e in split[args.split]}
        golds = [by_id[s.expression_id].gold_index for s in next(iter(hybrid_parts.values()))]
        overlap = overlap_report(hybrid_parts, golds)
        _write_text(Path(cfg.out) / "reports" / f"overlap.{args.split}.json",
                    json.dumps(overlap.to_dict(), sort_keys=True, indent=2) + "\n")
    _record_manifest(cfg, f"report {args.split}")


def cmd_run(cfg: RunConfig, args) -> None:
    """Train every model, score validation and the target split, fuse, evaluate, report."""
    for model in MODELS:
        cmd_train(cfg, argparse.Namespace(model=model))
    for model in MODELS:
        for split in sorted({"validation", args.split}):
            cmd_score(cfg, argparse.Namespace(model=model, split=split))
    cmd_fuse(cfg, argparse.Namespace(split=args.split))
    for model in MODELS + ("hybrid",):
        cmd_eval(cfg, argparse.Namespace(model=model, split=args.split))
    cmd_report(cfg, argparse.Namespace(split=args.split))


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "score": cmd_score, "fuse": cmd_fuse,
            "eval": cmd_eval, "report": cmd_report, "run": cmd_run}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--corpus", help="corpus file (JSON lines with a split field)")
    common.add_argument("--running-text", dest="running_text", help="running-text documents for skip-thought")
    common.add_argument("--config", help="JSON config file mirroring RunConfig fields")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="run directory")
    common.add_argument("--profile", choices=("desk", "paper"))
    common.add_argument("--epochs", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="primalsense", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    for name in ("train", "score", "eval"):
        p = sub.add_parser(name, parents=[common])
        choices = MODELS + ("hybrid",) if name == "eval" else MODELS
        p.add_argument("model_pos", nargs="?", choices=choices, metavar="MODEL")
        p.add_argument("--model", choices=choices)
        if name != "train":
            p.add_argument("--split", default="test", choices=("train", "validation", "test"))
    for name in ("fuse", "report", "run"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--split", default="test", choices=("validation", "test"))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command in ("train", "score", "eval"):
        args.model = args.model or args.model_pos
        if args.model is None:
            parser.error(f"{args.command}: a model is required")
    try:
        file_values = read_config_file(args.config) if args.config else {}
        cfg = resolve(file_values, {k: getattr(args, k, None) for k in
                                    ("corpus", "running_text", "seed", "out", "profile", "epochs")})
        COMMANDS[args.command](cfg, args)
    except (MissingInput, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CorpusError, FusionError, EvalError, CheckpointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
