"""Command-line entry point: ``radex <command> ...``.

Exit codes: 0 success, 1 usage, 2 input schema, 3 backend failure.
Options may also come from a JSON file given with ``--config``; keys are
option names with dashes or underscores, and explicit flags win.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .backends import GoldReplayBackend, NoisyReplayBackend, RemoteBackend
from .context import ContextKind, RetrieverMissing
from .evaluation import evaluate
from .io import (
    SchemaError,
    dump_annotations,
    dump_corpus,
    load_annotations,
    load_corpus,
    read_lines,
    write_json,
    write_jsonl,
)
from .ontology import Ontology, OntologyError, TermList
from .pipeline import PipelineKind, RunConfig, cost_report, run
from .retrieval import RetrievalConfig, SearchIndex, SnapshotError, filter_corpus
from .synthetic import SyntheticShape, synthetic_corpus
from .textio import emit_training_pairs

EXIT_OK, EXIT_USAGE, EXIT_SCHEMA, EXIT_BACKEND = 0, 1, 2, 3

log = logging.getLogger("radex")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _ontology(args) -> Optional[Ontology]:
    return Ontology.from_json(args.ontology) if getattr(args, "ontology", None) else None


def cmd_extract(args) -> int:
    corpus = load_corpus(args.corpus)
    ontology = _ontology(args)
    kind = PipelineKind(args.pipeline)
    retriever = SearchIndex.load(args.index) if args.index else None
    if args.backend in ("replay", "noisy"):
        if not args.annotations:
            raise UsageError(f"--backend {args.backend} needs --annotations")
        gold = load_annotations(args.annotations, corpus, **({"ontology": ontology} if ontology else {}))
        backend = GoldReplayBackend(corpus, gold, kind.output_format)
        if args.backend == "noisy":
            backend = NoisyReplayBackend(backend, args.seed, args.drop_prob, args.flip_prob,
                                         **({"ontology": ontology} if ontology else {}))
    else:
        if not args.endpoint:
            raise UsageError("--backend remote needs --endpoint")
        backend = RemoteBackend(args.endpoint, timeout=args.timeout, retries=args.retries)
    config = RunConfig(
        context=ContextKind(args.context),
        retriever=retriever,
        max_output_tokens=args.max_output_tokens,
        workers=args.workers,
    )
    if ontology is not None:
        config.ontology = ontology
    result = run(kind, corpus, backend, config=config)
    dump_annotations(result.predictions, args.out, corpus)
    report = cost_report(result.logs).to_json()
    report["pipeline"] = kind.value
    report["failed_sentences"] = len(result.failures)
    if args.report:
        write_json(args.report, report)
    else:
        print(json.dumps(report, indent=2))
    if result.logs and len(result.failures) == len(result.logs):
        print(f"error: every sentence failed; first: {result.logs[result.failures[0]].error}", file=sys.stderr)
        return EXIT_BACKEND
    return EXIT_OK


def cmd_evaluate(args) -> int:
    corpus = load_corpus(args.corpus) if args.corpus else None
    gold = load_annotations(args.gold, corpus)
    pred = load_annotations(args.pred, corpus)
    if corpus is None:
        g_docs, p_docs = {k[0] for k in gold}, {k[0] for k in pred}
        if g_docs != p_docs:
            extra = sorted(g_docs ^ p_docs)[:5]
            raise SchemaError(f"gold and prediction document ids differ (e.g. {extra})")
    report = evaluate(gold, pred)
    print(json.dumps(report.to_json({"gold": str(args.gold), "pred": str(args.pred)}), indent=2))
    return EXIT_OK


def cmd_filter_corpus(args) -> int:
    sentences = read_lines(args.sentences)
    terms = TermList.from_file(args.terms) if args.terms else None
    kept = filter_corpus(sentences, terms, args.min_tokens)
    Path(args.out).write_text("".join(s + "\n" for s in kept), encoding="utf-8")
    print(f"{len(kept)}/{len(sentences)} retained")
    return EXIT_OK


def cmd_build_index(args) -> int:
    config = RetrievalConfig(k1=args.k1, b=args.b, epsilon=args.epsilon)
    index = SearchIndex(read_lines(args.sentences), config)
    index.save(args.out)
    print(f"indexed {len(index)} sentences")
    return EXIT_OK


def cmd_retrieve(args) -> int:
    index = SearchIndex.load(args.index)
    for hit in index.retrieve(args.query, args.top_k):
        print(json.dumps({"id": hit.id, "score": hit.score, "text": hit.text}, ensure_ascii=False))
    return EXIT_OK


def cmd_emit_training(args) -> int:
    corpus = load_corpus(args.corpus)
    gold = load_annotations(args.annotations, corpus)
    records = emit_training_pairs(corpus, gold, args.format, args.aux, args.aux_anatomy_span)
    write_jsonl(args.out, (r.to_json() for r in records))
    print(f"wrote {len(records)} records")
    return EXIT_OK


def cmd_synth(args) -> int:
    shape = SyntheticShape(args.trigger_rate, args.anatomy_rate, args.two_trigger_rate)
    corpus, gold = synthetic_corpus(args.sentences, args.seed, shape)
    dump_corpus(corpus, args.out_corpus)
    dump_annotations(gold, args.out_annotations, corpus)
    print(f"{corpus.sentence_count()} sentences in {len(corpus)} documents")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="radex", description="Generative radiology event extraction toolkit.")
    parser.add_argument("--version", action="version", version=f"radex {__version__}")
    parser.add_argument("--config", help="JSON file of option defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract", help="run an extraction pipeline over a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--pipeline", choices=[k.value for k in PipelineKind], default="one-step-blocks")
    p.add_argument("--backend", choices=["replay", "noisy", "remote"], default="replay")
    p.add_argument("--annotations", help="gold annotations for the replay backends")
    p.add_argument("--endpoint", help="remote backend URL")
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--drop-prob", type=float, default=0.0)
    p.add_argument("--flip-prob", type=float, default=0.0)
    p.add_argument("--context", choices=[k.value for k in ContextKind], default="all")
    p.add_argument("--index", help="retrieval index snapshot for bm25/all contexts")
    p.add_argument("--ontology", help="anatomy ontology JSON (parent -> children)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--max-output-tokens", type=int, default=512)
    p.add_argument("--out", required=True, help="predictions file (JSON Lines)")
    p.add_argument("--report", help="cost report path (default: stdout)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("evaluate", help="score predictions against gold annotations")
    p.add_argument("gold")
    p.add_argument("pred")
    p.add_argument("--corpus", help="validate offsets against this corpus")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("filter-corpus", help="keep sentences mentioning anatomy terms")
    p.add_argument("sentences")
    p.add_argument("--terms", help="one term per line (default: built-in list)")
    p.add_argument("--min-tokens", type=int, default=RetrievalConfig.min_tokens)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_filter_corpus)

    p = sub.add_parser("build-index", help="build a BM25 index snapshot")
    p.add_argument("sentences")
    p.add_argument("--k1", type=float, default=RetrievalConfig.k1)
    p.add_argument("--b", type=float, default=RetrievalConfig.b)
    p.add_argument("--epsilon", type=float, default=RetrievalConfig.epsilon)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("retrieve", help="query a BM25 index snapshot")
    p.add_argument("--index", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--top-k", type=int, default=1)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("emit-training", help="write prompt/target pairs for an external trainer")
    p.add_argument("--corpus", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--format", choices=["vanilla", "blocks"], default="blocks")
    p.add_argument("--aux", action="store_true", help="add auxiliary subtask records")
    p.add_argument("--aux-anatomy-span", action="store_true", help="also add anatomy span detection records")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_emit_training)

    p = sub.add_parser("synth", help="generate a synthetic annotated corpus")
    p.add_argument("--sentences", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trigger-rate", type=float, default=0.7)
    p.add_argument("--anatomy-rate", type=float, default=0.8)
    p.add_argument("--two-trigger-rate", type=float, default=0.0)
    p.add_argument("--out-corpus", required=True)
    p.add_argument("--out-annotations", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def _config_defaults(argv: Sequence[str]) -> dict:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return {}
    try:
        data = json.loads(Path(known.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {known.config}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError(f"config {known.config} must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        defaults = _config_defaults(argv)
        if defaults:
            for action in parser._subparsers._group_actions:
                for sub in action.choices.values():
                    sub.set_defaults(**defaults)
                    for opt in sub._actions:
                        if opt.dest in defaults:
                            opt.required = False
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RetrieverMissing as exc:
        print(f"error: RetrieverMissing: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SchemaError, OntologyError, SnapshotError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
