"""Command line interface: ``extract``, ``evaluate`` and ``cache``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 backend error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
import time
from pathlib import Path

from .corpus import AnnotatedCorpus, CorpusFormatError, load_benchmark_tsv, load_jsonl
from .estimator import PIPELINE_MODES, FewShotExtractor
from .gateway import BackendError, HTTPChatBackend, ResponseCache, ScriptedBackend, SyntheticExtractor
from .prompts import load_assets
from .records import extraction_line, read_extractions
from .retrieval import HashingEmbedder, HTTPEmbedder
from .scoring import MATCHERS, UnknownIdError, evaluate

logger = logging.getLogger("fewshot_oie")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BACKEND = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` file; keys use flag names with or without dashes."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string("[defaults]\n" + Path(path).read_text(encoding="utf-8"))
    return {k.replace("-", "_"): v for k, v in parser["defaults"].items()}


def load_corpus(path, fmt: str = "auto") -> AnnotatedCorpus:
    if fmt == "auto":
        fmt = "tsv" if str(path).endswith((".tsv", ".txt")) else "jsonl"
    return load_benchmark_tsv(path) if fmt == "tsv" else load_jsonl(path)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fewshot-oie", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ex = sub.add_parser("extract", help="run a pipeline over a dataset and write extraction JSONL")
    ex.add_argument("--config", help="flat key = value file with default flag values")
    ex.add_argument("--dataset", required=True, help="target sentences (canonical JSONL or benchmark TSV)")
    ex.add_argument("--dataset-format", choices=("auto", "jsonl", "tsv"), default="auto")
    ex.add_argument("--train", help="annotated demonstration source for the retrieval modes")
    ex.add_argument("--train-format", choices=("auto", "jsonl", "tsv"), default="auto")
    ex.add_argument("--mode", choices=PIPELINE_MODES, default="selected_demo_uncertainty")
    ex.add_argument("--backend", default="synthetic", help="http, mock:<fixture.jsonl> or synthetic")
    ex.add_argument("--model", default="gpt-3.5-turbo")
    ex.add_argument("--temperature", type=float, default=0.7)
    ex.add_argument("--max-tokens", type=int, default=512)
    ex.add_argument("--base-url", default="https://api.openai.com/v1/chat/completions")
    ex.add_argument("--api-key-env", default="OPENAI_API_KEY")
    ex.add_argument("--embed-backend", choices=("hashing", "http"), default="hashing")
    ex.add_argument("--embed-url", default="https://api.openai.com/v1/embeddings")
    ex.add_argument("--embed-model", default="text-embedding-3-small")
    ex.add_argument("--pool-size", type=int, default=10)
    ex.add_argument("--subset-size", type=int, default=3)
    ex.add_argument("--ensemble", type=int, default=5, help="number of sampled demonstration subsets")
    ex.add_argument("--threshold", type=float, default=0.8, help="uncertainty threshold k")
    ex.add_argument("--count-mode", choices=("concat", "run_fraction"), default="concat")
    ex.add_argument("--filter-rule", choices=("le", "ge"), default="le",
                    help="keep u <= k (le) or the literal u >= k reading (ge)")
    ex.add_argument("--no-quiz", action="store_true", help="skip the error-correction quiz")
    ex.add_argument("--assets", help="directory with instruction.txt, quiz.jsonl, fixed_demos.jsonl")
    ex.add_argument("--no-leakage-guard", action="store_true")
    ex.add_argument("--p-drop", type=float, default=0.3, help="synthetic backend: gold drop probability")
    ex.add_argument("--p-noise", type=float, default=0.5, help="synthetic backend: distractor probability")
    ex.add_argument("--demo-benefit", type=float, default=0.5,
                    help="synthetic backend: relative error reduction when demonstrations are shown")
    ex.add_argument("--seed", type=int, default=0)
    ex.add_argument("--workers", type=int, default=4)
    ex.add_argument("--cache-dir", help="response cache directory (disabled when omitted)")
    ex.add_argument("--out", required=True)
    ex.add_argument("--log", help="run log path (default: <out>.log)")

    ev = sub.add_parser("evaluate", help="score an extraction file against gold annotations")
    ev.add_argument("--config")
    ev.add_argument("--pred", required=True, help="extraction JSONL")
    ev.add_argument("--gold", required=True)
    ev.add_argument("--gold-format", choices=("auto", "jsonl", "tsv"), default="auto")
    ev.add_argument("--matcher", choices=MATCHERS, default="exact")
    ev.add_argument("--thresholds", help="comma-separated thresholds (default: sweep observed uncertainties)")
    ev.add_argument("--out", help="write the report JSON here")
    ev.add_argument("--table", action="store_true", help="also print a human-readable table")

    ca = sub.add_parser("cache", help="inspect or clear the response cache")
    ca.add_argument("action", choices=("stats", "clear"))
    ca.add_argument("--cache-dir", required=True)
    ca.add_argument("--yes", action="store_true", help="confirm clearing")
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        values = read_config(known.config)
        subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        for name in ("extract", "evaluate"):
            sp = subparsers.choices[name]
            dests = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in values.items() if k in dests})
    return parser.parse_args(argv)


def make_backend(args, dataset, train, assets):
    kind = args.backend
    if kind == "http":
        return HTTPChatBackend(args.base_url, api_key_env=args.api_key_env, max_in_flight=args.workers)
    if kind.startswith("mock:"):
        return ScriptedBackend.from_jsonl(kind[len("mock:"):])
    if kind == "synthetic":
        corpora = [dataset, assets.quiz, assets.fixed_demos] + ([train] if train is not None else [])
        return SyntheticExtractor.from_corpora(*corpora, p_drop=args.p_drop, p_noise=args.p_noise,
                                               seed=args.seed, demo_benefit=args.demo_benefit)
    raise UsageError(f"unknown backend {kind!r}; expected http, mock:<fixture> or synthetic")


def make_embedder(args):
    if args.embed_backend == "http":
        return HTTPEmbedder(args.embed_url, args.embed_model, api_key_env=args.api_key_env)
    return HashingEmbedder()


def cmd_extract(args) -> int:
    try:
        dataset = load_corpus(args.dataset, args.dataset_format)
        train = load_corpus(args.train, args.train_format) if args.train else None
        assets = load_assets(args.assets)
    except (OSError, CorpusFormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if args.mode in ("selected_demo", "selected_demo_uncertainty") and train is None:
        print(f"usage error: --mode {args.mode} requires --train", file=sys.stderr)
        return EXIT_USAGE
    try:
        backend = make_backend(args, dataset, train, assets)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND

    extractor = FewShotExtractor(
        backend=backend, mode=args.mode, embedder=make_embedder(args), pool_size=args.pool_size,
        subset_size=args.subset_size, ensemble_size=args.ensemble, threshold=args.threshold,
        count_mode=args.count_mode, filter_rule=args.filter_rule, seed=args.seed, quiz=not args.no_quiz,
        assets=assets, cache_dir=args.cache_dir, model=args.model, temperature=args.temperature,
        max_tokens=args.max_tokens, n_jobs=args.workers, leakage_guard=not args.no_leakage_guard,
    )
    try:
        extractor.fit(train)
    except (ValueError, TypeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    log_path = Path(args.log) if args.log else Path(str(args.out) + ".log")
    config = {k: v for k, v in sorted(vars(args).items())}
    config["backend_id"] = backend.backend_id
    failed = 0
    start = time.perf_counter()
    with open(args.out, "w", encoding="utf-8", newline="\n") as out, \
            open(log_path, "w", encoding="utf-8") as log:
        log.write(json.dumps({"event": "config", **config}, default=str) + "\n")
        for result in extractor.predict(dataset):
            out.write(extraction_line(result.to_record()))
            if result.error:
                failed += 1
                logger.warning("sentence %s failed: %s", result.id, result.error)
            log.write(json.dumps({"event": "sentence", "id": result.id, "elapsed_ms": result.elapsed_ms,
                                  "cache_hits": result.cache_hits, "triplets": len(result.scored),
                                  "warnings": result.warnings, "error": result.error}) + "\n")
        gateway = extractor.gateway_
        log.write(json.dumps({"event": "summary", "sentences": len(dataset), "failed": failed,
                              "backend_calls": gateway.backend_calls, "cache_hits": gateway.cache_hits,
                              "elapsed_ms": int((time.perf_counter() - start) * 1000)}) + "\n")
    if dataset and failed * 2 > len(dataset):
        print(f"backend error: {failed} of {len(dataset)} sentences failed", file=sys.stderr)
        return EXIT_BACKEND
    return EXIT_OK


def cmd_evaluate(args) -> int:
    try:
        predictions = read_extractions(args.pred)
        gold = load_corpus(args.gold, args.gold_format)
    except (OSError, CorpusFormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    thresholds = None
    if args.thresholds:
        try:
            thresholds = [float(x) for x in args.thresholds.split(",") if x.strip()]
        except ValueError:
            print(f"usage error: bad --thresholds {args.thresholds!r}", file=sys.stderr)
            return EXIT_USAGE
    try:
        report = evaluate(predictions, gold, args.matcher, thresholds)
    except UnknownIdError as exc:
        print(f"data error: prediction ids missing from gold: {', '.join(exc.ids)}", file=sys.stderr)
        return EXIT_DATA
    text = json.dumps(report.to_dict(), indent=2)
    print(text)
    if args.table:
        print(report.table())
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_cache(args) -> int:
    cache = ResponseCache(args.cache_dir)
    directory = Path(args.cache_dir)
    if directory.exists() and not directory.is_dir():
        print(f"data error: {directory} is not a directory", file=sys.stderr)
        return EXIT_DATA
    if args.action == "stats":
        entries, size = cache.stats()
        print(f"entries: {entries}\nbytes: {size}")
        return EXIT_OK
    if not args.yes:
        print("refusing to clear the cache without --yes", file=sys.stderr)
        return EXIT_USAGE
    if directory.exists() and not os.access(directory, os.W_OK):
        print(f"data error: {directory} is not writable", file=sys.stderr)
        return EXIT_DATA
    try:
        removed = cache.clear()
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(f"removed: {removed}")
    return EXIT_OK


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"extract": cmd_extract, "evaluate": cmd_evaluate, "cache": cmd_cache}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
