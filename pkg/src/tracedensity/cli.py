"""Command-line interface.

Subcommands: init, train, eval, prob, sample, verify, inspect.  Reports are
line-oriented ``key=value`` text on stdout, or a single JSON object with
``--json``.  Exit codes: 0 success, 1 usage error, 2 validation error (bad
model or corpus), 3 numerical failure (non-convergence, zero probability).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .channels import (
    apply_right_channel,
    random_model,
    solve_right_density,
)
from .corpus import (
    IngestOptions,
    Vocabulary,
    corpus_from_file,
)
from .exceptions import (
    FixedPointError,
    IngestionError,
    LikelihoodError,
    ProjectionError,
    SamplingError,
    StepError,
    TraceDensityError,
    TrainingError,
    UndefinedConditionalError,
    ValidationError,
)
from .model import (
    conditional_next,
    constraint_residuals,
    normalization_sum,
    sample_phrase,
    trace_density,
    trivial_model,
)
from .serialize import load_model, save_model
from .training import TrainConfig, evaluate, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

VERIFY_ENUMERATION_CAP = 10**6

_NUMERICAL_ERRORS = (
    FixedPointError,
    LikelihoodError,
    SamplingError,
    StepError,
    ProjectionError,
    TrainingError,
    UndefinedConditionalError,
)


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; the contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _flatten(report: dict, prefix: str = "") -> list[str]:
    lines: list[str] = []
    for key, value in report.items():
        name = f"{prefix}{key}"
        if value is None:
            continue
        if isinstance(value, dict):
            lines.extend(_flatten(value, prefix=f"{name}."))
        elif isinstance(value, (list, tuple)):
            for i, item in enumerate(value):
                if isinstance(item, dict):
                    lines.extend(_flatten(item, prefix=f"{name}[{i}]."))
                else:
                    lines.append(f"{name}[{i}]={_format_value(item)}")
        else:
            lines.append(f"{name}={_format_value(value)}")
    return lines


def _emit(report: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(report))
    else:
        for line in _flatten(report):
            print(line)


def _residuals_dict(model) -> dict:
    res = constraint_residuals(model)
    return {
        "left_residual": res.left,
        "right_residual": res.right,
        "trace_residual": res.trace,
    }


def _ingest_options(args, min_count: int = 1) -> IngestOptions:
    return IngestOptions(
        lowercase=args.lowercase,
        split_punct=args.split_punct,
        min_count=min_count,
    )


def _add_ingestion_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--no-lowercase", dest="lowercase", action="store_false",
        help="keep token case as written",
    )
    p.add_argument(
        "--no-split-punct", dest="split_punct", action="store_false",
        help="keep punctuation attached to its token",
    )


def _phrase_ids(model, phrase: str) -> tuple[int, ...]:
    tokens = phrase.split()
    return tuple(model.vocab.id_of(t) for t in tokens)


# ----------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------

def _cmd_init(args) -> int:
    if args.vocab is not None:
        words = tuple(w for w in args.vocab.split(",") if w)
        vocab = Vocabulary(words)
    elif args.vocab_size is not None:
        if args.vocab_size < 1:
            raise ValueError("--vocab-size must be >= 1")
        vocab = Vocabulary(tuple(f"w{i + 1}" for i in range(args.vocab_size)))
    else:
        corpus = corpus_from_file(args.corpus, _ingest_options(args, args.min_count))
        vocab = corpus.vocab

    if args.trivial:
        model = trivial_model(vocab, args.dim)
        kind = "trivial"
    else:
        model = random_model(
            vocab, args.dim, args.seed, tol=args.fp_tol, max_iter=args.fp_max_iter
        )
        kind = "random"
    save_model(model, args.out)
    report = {
        "out": str(args.out),
        "kind": kind,
        "n": model.n,
        "d": model.d,
        **_residuals_dict(model),
    }
    _emit(report, args.json)
    return EXIT_OK


def _resolve_train_config(args) -> TrainConfig:
    values = TrainConfig().to_dict()
    if args.config is not None:
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_values = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"{args.config}: {exc}") from exc
        if not isinstance(file_values, dict):
            raise ValidationError(f"{args.config}: config must be a JSON object")
        unknown = set(file_values) - set(values)
        if unknown:
            raise ValidationError(
                f"{args.config}: unknown config fields {sorted(unknown)}"
            )
        values.update(file_values)
    for field in values:
        flag_value = getattr(args, field)
        if flag_value is not None:
            values[field] = flag_value
    try:
        return TrainConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad training configuration: {exc}") from exc


def _cmd_train(args) -> int:
    config = _resolve_train_config(args)
    corpus = corpus_from_file(args.corpus, _ingest_options(args, config.min_count))
    model, report = train(corpus, config)
    save_model(model, args.out)
    report_doc = {"config": config.to_dict(), **report.to_dict()}
    if args.report is not None:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report_doc, fh, indent=2, allow_nan=True)
            fh.write("\n")
    final = report.records[report.best_epoch - 1] if report.best_epoch >= 1 else None
    out = {
        "corpus": str(args.corpus),
        "out": str(args.out),
        "n": model.n,
        "d": model.d,
        "config": config.to_dict(),
        "epochs": [r.to_dict() for r in report.records],
        "init_nll": report.init_nll,
        "best_epoch": report.best_epoch,
        "best_nll": final.nll if final is not None else report.init_nll,
        **_residuals_dict(model),
    }
    _emit(out, args.json)
    return EXIT_OK


def _cmd_eval(args) -> int:
    model = load_model(args.model)
    corpus = corpus_from_file(args.corpus, _ingest_options(args), vocab=model.vocab)
    report = evaluate(model, corpus, args.k)
    _emit(report.to_dict(), args.json)
    return EXIT_OK


def _cmd_prob(args) -> int:
    model = load_model(args.model)
    ids = _phrase_ids(model, args.phrase)
    q = trace_density(model, ids)
    conditional = conditional_next(model, ids)
    report = {
        "phrase": " ".join(model.vocab.words[i] for i in ids),
        "q": q.value,
        "log_q": q.log_value,
        "next": {model.vocab.words[i]: float(p) for i, p in enumerate(conditional)},
    }
    _emit(report, args.json)
    return EXIT_OK


def _cmd_sample(args) -> int:
    model = load_model(args.model)
    ids = sample_phrase(model, args.length, args.seed)
    report = {
        "length": args.length,
        "seed": args.seed,
        "phrase": " ".join(model.vocab.words[i] for i in ids),
    }
    _emit(report, args.json)
    return EXIT_OK


def _cmd_verify(args) -> int:
    model = load_model(args.model)
    if args.max_k < 1:
        raise ValueError("--max-k must be >= 1")
    if model.n**args.max_k > VERIFY_ENUMERATION_CAP:
        print(
            f"verify: refusing to enumerate n^k = {model.n}^{args.max_k} "
            f"> {VERIFY_ENUMERATION_CAP} phrases",
            file=sys.stderr,
        )
        return EXIT_USAGE
    fp = solve_right_density(
        model.dictionary, model.p_left, tol=args.fp_tol, max_iter=args.fp_max_iter
    )
    sums = {str(k): normalization_sum(model, k) for k in range(1, args.max_k + 1)}
    res = _residuals_dict(model)
    ok = all(v <= args.tol for v in res.values()) and all(
        abs(s - 1.0) <= args.tol for s in sums.values()
    )
    report = {
        "n": model.n,
        "d": model.d,
        **res,
        "fp_iterations": fp.iterations,
        "fp_residual": fp.residual,
        "fp_eigvalue": fp.eigvalue_estimate,
        "norm_sum": sums,
        "tol": args.tol,
        "status": "ok" if ok else "fail",
    }
    _emit(report, args.json)
    return EXIT_OK if ok else EXIT_VALIDATION


def _cmd_inspect(args) -> int:
    model = load_model(args.model)
    eig = float(
        np.einsum(
            "ab,ba->",
            model.p_left.matrix,
            apply_right_channel(model.dictionary, model.p_right.matrix),
        ).real
    )
    head = model.vocab.words[:10]
    report = {
        "n": model.n,
        "d": model.d,
        **_residuals_dict(model),
        "eigvalue_estimate": eig,
        "vocab_head": ",".join(head),
    }
    _emit(report, args.json)
    return EXIT_OK


# ----------------------------------------------------------------------
# Parser wiring
# ----------------------------------------------------------------------

def _build_parser() -> _Parser:
    parser = _Parser(prog="tdm", description=__doc__)
    parser.add_argument("--version", action="version", version=f"tdm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--json", action="store_true", help="emit one JSON object")

    p = sub.add_parser("init", help="write a trivial or random-isometric model")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--vocab", help="comma-separated vocabulary words")
    src.add_argument("--vocab-size", type=int, help="synthesize words w1..wN")
    src.add_argument("--corpus", help="build the vocabulary from this text file")
    p.add_argument("--dim", type=int, required=True, help="bond dimension d")
    p.add_argument("--out", required=True, help="output model path")
    p.add_argument("--trivial", action="store_true", help="uniform model instead of random")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--fp-tol", type=float, default=1e-10)
    p.add_argument("--fp-max-iter", type=int, default=10_000)
    _add_ingestion_flags(p)
    common(p)
    p.set_defaults(func=_cmd_init)

    p = sub.add_parser("train", help="train a model on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="output model path")
    p.add_argument("--report", help="write the JSON training report here")
    p.add_argument("--config", help="JSON config file with TrainConfig fields")
    p.add_argument("--d", type=int, help="bond dimension")
    p.add_argument("--k", type=int, help="training window length")
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--fp-tol", type=float)
    p.add_argument("--fp-max-iter", type=int)
    p.add_argument("--min-count", type=int)
    _add_ingestion_flags(p)
    common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="cross-entropy / perplexity / KL on a corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--k", type=int, required=True, help="phrase window length")
    _add_ingestion_flags(p)
    common(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("prob", help="probability and next-word table of a phrase")
    p.add_argument("--model", required=True)
    p.add_argument("--phrase", required=True, help="space-separated tokens")
    common(p)
    p.set_defaults(func=_cmd_prob)

    p = sub.add_parser("sample", help="draw a phrase from the model")
    p.add_argument("--model", required=True)
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    common(p)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("verify", help="check constraints and normalization sums")
    p.add_argument("--model", required=True)
    p.add_argument("--max-k", type=int, default=3, help="enumerate phrases up to this length")
    p.add_argument("--tol", type=float, default=1e-8, help="pass/fail tolerance")
    p.add_argument("--fp-tol", type=float, default=1e-10)
    p.add_argument("--fp-max-iter", type=int, default=10_000)
    common(p)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("inspect", help="model summary")
    p.add_argument("--model", required=True)
    common(p)
    p.set_defaults(func=_cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _NUMERICAL_ERRORS as exc:
        print(f"tdm {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (IngestionError, ValidationError, ValueError) as exc:
        print(f"tdm {args.command}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except TraceDensityError as exc:
        print(f"tdm {args.command}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"tdm {args.command}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
