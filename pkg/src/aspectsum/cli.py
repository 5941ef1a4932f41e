"""Command-line interface.

Subcommands: ``ingest`` (segment raw reviews into the sentence corpus
format), ``train`` (fit a cascaded or multitask model), ``eval``
(cross-validated metrics for the CNN models or the SVM baseline),
``gradcheck`` (finite-difference verification of the backward pass) and
``summarize`` (run the full pipeline over raw reviews and render
reports).

Exit codes: 0 success, 1 usage or configuration error, 2 validation
error, 3 numerical-check failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .errors import AspectSumError, ConfigError, ValidationError
from .text import (
    corpus_stats,
    load_corpus,
    load_reviews,
    load_schema,
    segment_review,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: A003 - argparse API
        raise ConfigError(message)


_HP_FLAGS = {
    "k": ("--k", int, "embedding dimension"),
    "h": ("--h", int, "convolution window size"),
    "m_aspect": ("--m-aspect", int, "filters per aspect mapper"),
    "m_sentiment": ("--m-sentiment", int, "filters for the sentiment classifier"),
    "batch_size": ("--batch", int, "mini-batch size (clamped to the dataset)"),
    "learning_rate": ("--lr", float, "learning rate"),
    "momentum": ("--momentum", float, "momentum coefficient"),
    "init_std": ("--init-std", float, "weight init standard deviation"),
    "epochs": ("--epochs", int, "training epochs"),
    "threshold": ("--threshold", float, "decision threshold"),
    "seed": ("--seed", int, "random seed"),
}


def _add_hyperparam_flags(p: argparse.ArgumentParser) -> None:
    for _, (flag, typ, help_) in _HP_FLAGS.items():
        p.add_argument(flag, type=typ, default=None, help=help_)
    p.add_argument(
        "--lambdas", default=None,
        help="auxiliary task weights: one value or comma-separated per task",
    )
    p.add_argument("--config", default=None, help="key = value config file")


def _parse_lambdas(text: str):
    try:
        values = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"bad lambdas value: {text!r}") from None
    return values[0] if len(values) == 1 else values


def _load_config_file(path: str) -> dict:
    """Flat ``key = value`` file mirroring the hyperparameter fields."""
    from .train import Hyperparams

    fields = {f.name: f.type for f in dataclasses.fields(Hyperparams)}
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in fields:
            raise ConfigError(f"{path}: line {lineno}: unknown key {key!r}")
        try:
            if key == "lambdas":
                out[key] = _parse_lambdas(value)
            elif key in ("learning_rate", "momentum", "init_std", "threshold"):
                out[key] = float(value)
            else:
                out[key] = int(value)
        except ValueError:
            raise ConfigError(f"{path}: line {lineno}: bad value for {key!r}") from None
    return out


def _build_hyperparams(args):
    """Defaults, overridden by the config file, overridden by flags."""
    from .train import Hyperparams

    values = {}
    if args.config:
        values.update(_load_config_file(args.config))
    for field_name, (flag, _, _) in _HP_FLAGS.items():
        dest = flag.lstrip("-").replace("-", "_")
        flag_value = getattr(args, dest, None)
        if flag_value is not None:
            values[field_name] = flag_value
    if args.lambdas is not None:
        values["lambdas"] = _parse_lambdas(args.lambdas)
    hp = Hyperparams(**values)
    hp.validate()
    return hp


def _load_embeddings_if_given(args, vocab, hp):
    if not getattr(args, "embeddings", None):
        return None
    from .train import load_pretrained_embeddings

    layer, report = load_pretrained_embeddings(
        args.embeddings, vocab, hp.k, fallback_std=hp.init_std, seed=hp.seed
    )
    print(
        f"embeddings: {report.covered} covered, {report.missing} fallback columns",
        file=sys.stderr,
    )
    return layer


def _cmd_ingest(args) -> int:
    load_schema(args.schema)  # validates the schema file early
    reviews = load_reviews(args.reviews)
    records = []
    for review_id, text in reviews:
        for ordinal, sentence in enumerate(segment_review(text)):
            records.append(
                {
                    "review_id": review_id,
                    "ordinal": ordinal,
                    "text": sentence,
                    "aspects": [],
                    "sentiment": None,
                }
            )
    with open(args.out, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    print(f"wrote {len(records)} sentences from {len(reviews)} reviews to {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    from .train import save_model, train_ccnn, train_mcnn

    hp = _build_hyperparams(args)
    schema = load_schema(args.schema)
    corpus = load_corpus(args.corpus, schema, min_count=args.min_count)
    stats = corpus_stats(corpus)
    print("corpus:", ", ".join(f"{k}={v}" for k, v in stats.items()))
    pretrained = _load_embeddings_if_given(args, corpus.vocabulary, hp)
    if args.arch == "ccnn":
        suite = train_ccnn(corpus, hp, pretrained=pretrained)
    else:
        suite = train_mcnn(corpus, hp, pretrained=pretrained)
    for t, log in enumerate(suite.logs):
        name = schema.names[t] if t < schema.count else "sentiment"
        print(f"task {name}: loss {log[0]:.4f} -> {log[-1]:.4f}")
    Path(args.out).write_bytes(save_model(suite))
    print(f"saved {args.arch} model to {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    from .baseline import train_cascaded_svm
    from .evaluation import cross_validate
    from .train import train_ccnn, train_mcnn

    hp = _build_hyperparams(args)
    schema = load_schema(args.schema)
    corpus = load_corpus(args.corpus, schema, min_count=args.min_count)
    pretrained = _load_embeddings_if_given(args, corpus.vocabulary, hp)

    def trainer(c, train_idx, fold_seed):
        fold_hp = dataclasses.replace(hp, seed=fold_seed)
        if args.arch == "ccnn":
            return train_ccnn(c, fold_hp, train_idx, pretrained=pretrained)
        if args.arch == "mcnn":
            return train_mcnn(c, fold_hp, train_idx, pretrained=pretrained)
        return train_cascaded_svm(
            c, train_idx, reg_c=args.reg_c, epochs=fold_hp.epochs, seed=fold_seed
        )

    report = cross_validate(trainer, corpus, k=args.folds, seed=hp.seed)
    sys.stdout.write(report.format_text())
    if args.out_json:
        Path(args.out_json).write_bytes(report.to_json_bytes())
        print(f"wrote machine-readable report to {args.out_json}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    from .nn import gradient_check_suite

    worst = gradient_check_suite(count=args.count, seed=args.seed, eps=args.eps)
    print(f"max relative gradient error over {args.count} networks: {worst:.3e}")
    if worst >= args.tol:
        print(f"FAIL: above tolerance {args.tol:g}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"OK: below tolerance {args.tol:g}")
    return EXIT_OK


def _cmd_summarize(args) -> int:
    from .summarize import emit_html, emit_json, summarize_reviews
    from .train import load_model

    predictor = load_model(Path(args.model).read_bytes())
    reviews = load_reviews(args.reviews)
    report = summarize_reviews(predictor, predictor.vocabulary, reviews)
    Path(args.out_json).write_bytes(emit_json(report))
    Path(args.out_html).write_bytes(emit_html(report))
    for s in report.summaries:
        print(f"{s.aspect}: +{s.positive_count} / -{s.negative_count}")
    print(
        f"{report.processed} sentences processed, {report.mapped} mapped; "
        f"reports: {args.out_json}, {args.out_html}"
    )
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="aspectsum", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="segment raw reviews into the sentence corpus format")
    p.add_argument("--reviews", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_ingest)

    p = sub.add_parser("train", help="train a model on a labeled corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--arch", choices=("ccnn", "mcnn"), required=True)
    p.add_argument("--embeddings", default=None, help="word-vector text file")
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--out", required=True)
    _add_hyperparam_flags(p)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="k-fold cross-validated evaluation")
    p.add_argument("--corpus", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--arch", choices=("ccnn", "mcnn", "svm"), required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--embeddings", default=None)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--reg-c", type=float, default=1.0, help="SVM regularization trade-off")
    p.add_argument("--out-json", default=None, help="write the full-precision report here")
    _add_hyperparam_flags(p)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("summarize", help="classify raw reviews and render reports")
    p.add_argument("--model", required=True)
    p.add_argument("--reviews", required=True)
    p.add_argument("--out-json", required=True)
    p.add_argument("--out-html", required=True)
    p.set_defaults(fn=_cmd_summarize)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except AspectSumError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
