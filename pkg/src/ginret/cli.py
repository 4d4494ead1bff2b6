"""Command-line entry point.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import zipfile
from pathlib import Path

from .config import CONFIG_ENV, ConfigError, RunConfig, load_run_config
from .data_io import DataError, SyntheticSpec, load_manifest_corpus, read_texts, write_synthetic
from .evaluation import IMAGE_TO_TEXT, TEXT_TO_IMAGE, rank_candidates, write_reports
from .gradcheck import check_gradients, tiny_problem
from .model import load_checkpoint
from .pipeline import evaluate_split, score_split, train_run
from .text_graph import (build_text_graph, build_vocabulary, load_embeddings, load_vocabulary, save_graph,
                         save_vocabulary)
from .trainer import ProgressLog

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")


def cmd_vocab(args) -> int:
    docs = read_texts(args.corpus)
    vocab = build_vocabulary([d.tokens for d in docs], args.max_words, args.min_doc_freq)
    save_vocabulary(vocab, args.out)
    print(f"wrote {len(vocab)} words to {args.out}")
    return EXIT_OK


def cmd_graph(args) -> int:
    vocab = load_vocabulary(args.vocab)
    emb = load_embeddings(args.embeddings, wanted=set(vocab.words))
    missing = len(vocab) - len(emb.words)
    if missing:
        print(f"warning: dropped {missing} vocabulary words without an embedding", file=sys.stderr)
    graph = build_text_graph(vocab, emb, args.k)
    save_graph(graph, args.out)
    if args.vocab_out:
        save_vocabulary(graph.vocab, args.vocab_out)
    print(f"wrote graph with {graph.n} vertices, {len(graph.edges())} edges, "
          f"lambda_max={graph.lambda_max:.9g} to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_run_config(args.config, args.set)
    if args.corpus:
        cfg = RunConfig.from_dict({**cfg.to_dict(), "corpus": args.corpus})
    if not cfg.corpus:
        raise ConfigError("no corpus manifest given (config key 'corpus' or --corpus)")
    out = Path(args.out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "effective_config.json", cfg.to_dict())
    corpus, manifest = load_manifest_corpus(cfg.corpus)
    emb = load_embeddings(manifest.embeddings)
    with ProgressLog(out / "loss.log", echo=args.verbose) as sink:
        run = train_run(cfg, corpus, emb, sink, checkpoint_path=str(out / "checkpoint.gin"))
    save_vocabulary(run.graph.vocab, out / "vocab.tsv")
    save_graph(run.graph, out / "graph.txt")
    losses = run.result.epoch_loss
    if losses:
        print(f"trained {len(losses)} epochs: first-epoch loss {losses[0]:.6g}, last-epoch loss {losses[-1]:.6g}")
    print(f"checkpoint: {out / 'checkpoint.gin'}")
    return EXIT_OK


def _load_for_inference(args):
    if not Path(args.checkpoint).is_file():
        raise DataError(f"checkpoint not found: {args.checkpoint}")
    model, graph, meta = load_checkpoint(args.checkpoint)
    if graph is None:
        raise DataError(f"{args.checkpoint}: checkpoint carries no graph")
    corpus, _ = load_manifest_corpus(args.corpus)
    run_config = meta.get("run_config", {})
    return model, graph, corpus, run_config


def cmd_eval(args) -> int:
    model, graph, corpus, run_config = _load_for_inference(args)
    reports = evaluate_split(model, graph, corpus, args.split, run_config.get("normalize_counts", False))
    out = Path(args.out_dir)
    write_reports(reports, out)
    _write_json(out / "effective_config.json", {"checkpoint": str(args.checkpoint), "corpus": str(args.corpus),
                                                "split": args.split, "run_config": run_config})
    for r in reports:
        print(f"{r.direction}\tMAP={r.map:.9g}\tqueries={len(r.per_query_ap)}\texcluded={r.excluded}")
    return EXIT_OK


def cmd_query(args) -> int:
    model, graph, corpus, run_config = _load_for_inference(args)
    sm = score_split(model, graph, corpus, args.split, run_config.get("normalize_counts", False))
    if args.direction == IMAGE_TO_TEXT:
        sm = sm.transpose()
    if args.id not in sm.query_ids:
        raise DataError(f"unknown query id {args.id!r} for direction {args.direction} in split {args.split!r}")
    q = sm.query_ids.index(args.id)
    order = rank_candidates(sm.scores[q])[: args.top_n]
    for rank, j in enumerate(order, start=1):
        print(f"{rank}\t{sm.candidate_ids[j]}\t{sm.candidate_labels[j]}\t{sm.scores[q, j]:.9g}")
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        num_classes=args.classes, texts_per_class=args.per_class, images_per_class=args.per_class,
        vocab_size=args.vocab_size, embed_dim=args.embed_dim, image_dim=args.image_dim,
        noise_level=args.noise, seed=args.seed,
    )
    manifest = write_synthetic(spec, args.out_dir)
    # desk-scale run config matching the generated corpus
    desk = RunConfig(corpus="manifest.json", out_dir="run", common_dim=64, batch_size=40, q1=20, q2=20,
                     total_pos=400, total_neg=400, seed=args.seed)
    _write_json(Path(args.out_dir) / "run_config.json", desk.to_dict())
    print(f"wrote synthetic corpus: {manifest}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = load_run_config(args.config, args.set)
    problem = tiny_problem(seed=args.seed, order=cfg.order, score_mode=cfg.score_mode,
                           image_hidden=cfg.image_hidden, loss_cfg=cfg.loss_config())
    errors = check_gradients(problem, step=args.step)
    ok = True
    for name, err in errors.items():
        passed = err < args.tolerance
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}\t{name}\trel_err={err:.3e}")
    print("all parameter groups pass" if ok else f"gradient check failed at tolerance {args.tolerance:g}")
    return EXIT_OK if ok else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ginret", description="Cross-modal text/image retrieval with a graph-convolution text encoder")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("vocab", help="build a vocabulary TSV from a texts file")
    s.add_argument("--corpus", required=True, help="texts file (doc_id<TAB>label<TAB>tokens)")
    s.add_argument("--max-words", type=int, default=10_000)
    s.add_argument("--min-doc-freq", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_vocab)

    s = sub.add_parser("graph", help="build the k-NN word graph")
    s.add_argument("--vocab", required=True)
    s.add_argument("--embeddings", required=True)
    s.add_argument("--k", type=int, default=8)
    s.add_argument("--out", required=True)
    s.add_argument("--vocab-out", help="write the embedding-filtered vocabulary here")
    s.set_defaults(func=cmd_graph)

    s = sub.add_parser("train", help="train a model")
    s.add_argument("--config", help=f"JSON run config (default: ${CONFIG_ENV})")
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    s.add_argument("--corpus", help="corpus manifest (overrides config)")
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="MAP and PR curves on a split")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--corpus", required=True)
    s.add_argument("--split", default="test", choices=["train", "test", "all"])
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("query", help="rank candidates for one query")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--corpus", required=True)
    s.add_argument("--id", required=True)
    s.add_argument("--direction", default=TEXT_TO_IMAGE, choices=[TEXT_TO_IMAGE, IMAGE_TO_TEXT])
    s.add_argument("--top-n", type=int, default=10)
    s.add_argument("--split", default="test", choices=["train", "test", "all"])
    s.set_defaults(func=cmd_query)

    s = sub.add_parser("synth", help="generate a synthetic corpus")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--classes", type=int, default=3)
    s.add_argument("--per-class", type=int, default=100)
    s.add_argument("--vocab-size", type=int, default=60)
    s.add_argument("--embed-dim", type=int, default=16)
    s.add_argument("--image-dim", type=int, default=32)
    s.add_argument("--noise", type=float, default=0.1)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("grad-check", help="finite-difference gradient check on a tiny model")
    s.add_argument("--config")
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    s.add_argument("--tolerance", type=float, default=1e-4)
    s.add_argument("--step", type=float, default=1e-5)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, KeyError, zipfile.BadZipFile) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
