"""Command-line entry point: gen-data, train, synthesize, evaluate, attack."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Sequence

from . import errors

USAGE_ERRORS = (errors.ConfigError, errors.ValidationError, errors.ParseError, errors.ParameterError,
                errors.SizeError, FileNotFoundError)
METRICS = ("unigram", "bigram", "seq_bigram", "dimwise")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 instead of argparse's 2
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--desk-scale", action="store_true", help="small-dimension profile")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="msic", description="Multi-type EHR synthesis with latent health states.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write a planted-rule corpus")
    _common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-dir", help="where to write vocabularies (default: next to --out)")
    p.add_argument("--split", action="store_true", help="also write .train/.val/.test splits")

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    _common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab-dir")
    p.add_argument("--out", required=True)
    p.add_argument("--telemetry", help="per-epoch JSONL loss log")

    p = sub.add_parser("synthesize", help="generate records from a checkpoint")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab-dir")
    p.add_argument("--mode", required=True, choices=("cross-type", "longitudinal", "de-novo"))
    p.add_argument("--corpus", help="input records for cross-type and longitudinal modes")
    p.add_argument("--n-records", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--strategy", choices=("bernoulli", "threshold", "top_k"))
    p.add_argument("--reports", action="store_true", help="also generate reports")
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="compare a synthetic corpus to a real one")
    _common(p)
    p.add_argument("--real", required=True)
    p.add_argument("--synthetic", required=True)
    p.add_argument("--vocab-dir")
    p.add_argument("--metrics", default=",".join(METRICS))
    p.add_argument("--kinds", default="symptom,diagnosis,medication")
    p.add_argument("--out", help="write the metric report as JSON")

    p = sub.add_parser("attack", help="run privacy attacks against a synthetic corpus")
    _common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--synthetic", required=True)
    p.add_argument("--vocab-dir")
    p.add_argument("--attacks", default="membership,attribute")
    p.add_argument("--out")
    return parser


def _settings(args):
    from .config import load_settings
    settings = load_settings(args.config, desk_scale=args.desk_scale)
    if args.seed is not None:
        settings.train.seed = args.seed
    return settings


def _vocabularies(vocab_dir, corpus_paths: Sequence[str]):
    from .data import infer_vocabularies, read_vocabularies
    for path in corpus_paths:
        if path and not os.path.exists(path):
            raise FileNotFoundError(f"corpus file not found: {path}")
    if vocab_dir:
        return read_vocabularies(vocab_dir)
    return infer_vocabularies([p for p in corpus_paths if p])


def _corpus(path: str, vocabs):
    from .data import parse_corpus
    return parse_corpus(path, vocabs)


def cmd_gen_data(args) -> None:
    from .data import split_corpus, write_corpus, write_vocabularies
    from .planted import generate_planted_corpus
    settings = _settings(args)
    seed = args.seed if args.seed is not None else 0
    corpus = generate_planted_corpus(settings.data, seed)
    write_corpus(corpus, args.out)
    vocab_dir = args.vocab_dir or os.path.dirname(os.path.abspath(args.out))
    write_vocabularies(corpus.vocabularies, vocab_dir)
    print(f"wrote {len(corpus)} patients ({corpus.visit_count()} visits) to {args.out}")
    if args.split:
        stem = args.out[:-6] if args.out.endswith(".jsonl") else args.out
        for name, part in zip(("train", "val", "test"), split_corpus(corpus, seed=seed)):
            write_corpus(part, f"{stem}.{name}.jsonl")
            print(f"  {name}: {len(part)} patients")


def cmd_train(args) -> None:
    from .checkpoint import save_checkpoint
    from .training import train
    settings = _settings(args)
    vocabs = _vocabularies(args.vocab_dir, [args.corpus])
    corpus = _corpus(args.corpus, vocabs)
    result = train(settings, corpus, telemetry=args.telemetry)
    save_checkpoint(result.model, settings, args.out)
    last = result.history[-1] if result.history else None
    summary = f"final loss {last.loss_total:.4f}" if last else "no epochs run"
    print(f"trained on {len(corpus)} patients, {settings.train.epochs} epochs; {summary}; wrote {args.out}")


def cmd_synthesize(args) -> None:
    from .checkpoint import load_checkpoint
    from .data import write_corpus
    from .model.events import SamplingStrategy
    from . import synthesis
    vocabs = _vocabularies(args.vocab_dir, [args.corpus] if args.corpus else [])
    if not args.vocab_dir and not args.corpus:
        raise errors.ConfigError("synthesize needs --vocab-dir (or --corpus to infer vocabularies)")
    model, settings = load_checkpoint(args.checkpoint, vocabs)
    if args.config or args.desk_scale:
        settings.synth = _settings(args).synth
    sc = settings.synth
    name = args.strategy or sc.strategy
    strategy = {"bernoulli": SamplingStrategy.bernoulli(), "threshold": SamplingStrategy.thresholded(sc.threshold),
                "top_k": SamplingStrategy.top_k(sc.top_k)}[name]
    seed = args.seed if args.seed is not None else 0
    reports = args.reports or sc.with_reports
    if args.mode == "de-novo":
        n = args.n_records or sc.n_records
        if n < 1:
            raise errors.ConfigError("de-novo mode needs --n-records")
        out = synthesis.synthesize_de_novo(model, n, strategy, seed, with_reports=reports)
    else:
        if not args.corpus:
            raise errors.ConfigError(f"{args.mode} mode needs --corpus")
        corpus = _corpus(args.corpus, vocabs)
        if args.mode == "cross-type":
            out = synthesis.synthesize_cross_type(model, corpus, strategy, seed, with_reports=reports)
        else:
            out = synthesis.synthesize_longitudinal(model, corpus, args.steps or sc.steps, strategy, seed,
                                                    with_reports=reports)
    write_corpus(out, args.out)
    print(f"{args.mode}: wrote {len(out)} records ({out.visit_count()} visits) to {args.out}")


def cmd_evaluate(args) -> None:
    from .evaluation import evaluate_corpora
    vocabs = _vocabularies(args.vocab_dir, [args.real, args.synthetic])
    real, syn = _corpus(args.real, vocabs), _corpus(args.synthetic, vocabs)
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    kinds = tuple(k.strip() for k in args.kinds.split(",") if k.strip())
    report = evaluate_corpora(real, syn, metrics, kinds)
    for name in metrics:
        value = report.values[name]
        print(f"{name}: {value:.6f}" if value is not None else f"{name}: undefined ({report.reasons[name]})")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())


def cmd_attack(args) -> None:
    import numpy as np
    from .evaluation import MetricReport, corpus_digest
    from .privacy import attribute_attack, membership_attack
    settings = _settings(args)
    ac = settings.attack
    vocabs = _vocabularies(args.vocab_dir, [args.train, args.test, args.synthetic])
    train, test, syn = (_corpus(p, vocabs) for p in (args.train, args.test, args.synthetic))
    seed = args.seed if args.seed is not None else 0
    attacks = [a.strip() for a in args.attacks.split(",") if a.strip()]
    report = MetricReport(metadata={"train_digest": corpus_digest(train), "test_digest": corpus_digest(test),
                                    "synthetic_digest": corpus_digest(syn), "seed": seed})
    rng = np.random.default_rng(seed)

    def sample(records):
        n = min(ac.sample_size, len(records))
        return [records[i] for i in sorted(rng.choice(len(records), n, replace=False))]

    for name in attacks:
        if name == "membership":
            res = membership_attack(sample(train.records), sample(test.records), syn.records, seed=seed,
                                    calibration_fraction=ac.calibration_fraction, threshold=ac.threshold)
            for key in ("accuracy", "precision", "recall", "f1"):
                report.values[f"membership_{key}"] = getattr(res, key)
            print(f"membership: accuracy {res.accuracy:.4f} f1 {res.f1:.4f} (tau {res.config['threshold']:.4f})")
        elif name == "attribute":
            res = attribute_attack(train, syn, ac.common_fraction, seed=seed, test_records=test)
            report.values["attribute_f1"] = res.f1
            report.values["attribute_baseline_f1"] = res.baseline_f1
            verdict = "withstands" if res.withstands else "does not withstand"
            print(f"attribute: f1 {res.f1:.4f} vs real-data baseline {res.baseline_f1:.4f} ({verdict})")
        else:
            raise errors.ParameterError(f"unknown attack {name!r}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "synthesize": cmd_synthesize,
            "evaluate": cmd_evaluate, "attack": cmd_attack}


def _configure_logging() -> None:
    level = os.environ.get("MSIC_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")


def run(argv: Sequence[str] | None = None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"msic: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.threads < 1:
        print("msic: error: --threads must be at least 1", file=sys.stderr)
        return 1
    try:
        from threadpoolctl import threadpool_limits
        for target in (getattr(args, "out", None), getattr(args, "telemetry", None)):
            if target and os.path.dirname(target):
                os.makedirs(os.path.dirname(target), exist_ok=True)
        with threadpool_limits(limits=args.threads):
            COMMANDS[args.command](args)
    except USAGE_ERRORS as exc:
        print(f"msic: error: {exc}", file=sys.stderr)
        return 1
    except (errors.MsicError, OSError, ValueError, ArithmeticError) as exc:
        print(f"msic: runtime failure: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
