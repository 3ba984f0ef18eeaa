"""Command-line entry point: ``wcapsule {synth,train,eval,predict,dbd}``.

Exit codes: 0 success, 1 usage error, 2 data or model error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .corpus import SyntheticSpec, generate_synthetic, load_dataset, save_dataset
from .dbd import build_domain_stats, dbd_table
from .ensemble import WCapsuleEnsemble, evaluate
from .errors import WCapsuleError
from .persistence import MAGIC, load_model
from .text import load_stopwords

MODEL_DIR_ENV = "WCAPSULE_MODEL_DIR"
DEFAULT_MODEL_NAME = "model.bin"

log = logging.getLogger("wcapsule")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _positive_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {value}")
    return value


def _fraction(text):
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in [0, 1], got {value}")
    return value


def build_parser():
    p = _Parser(prog="wcapsule", description="Multi-domain sentiment analysis with DBD-weighted capsule ensembles.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write a synthetic multi-domain JSONL corpus")
    s.add_argument("--domains", type=_positive_int, default=3)
    s.add_argument("--docs-per-domain", type=_positive_int, default=40)
    s.add_argument("--domain-vocab-size", type=_positive_int, default=40)
    s.add_argument("--lexicon-size", type=_positive_int, default=6)
    s.add_argument("--overlap", type=_fraction, default=0.0)
    s.add_argument("--imbalance-ratio", type=_positive_float, default=1.0)
    s.add_argument("--min-length", type=_positive_int, default=6)
    s.add_argument("--max-length", type=_positive_int, default=14)
    s.add_argument("--mixed-sentiment", action="store_true")
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("-o", "--output", required=True)

    t = sub.add_parser("train", help="train an ensemble model")
    t.add_argument("data")
    t.add_argument("-o", "--output", required=True, help="model file to write")
    t.add_argument("--log", help="training log JSON (default: <output>.log.json)")
    t.add_argument("--format", choices=("jsonl", "csv"))
    t.add_argument("--seed", type=int, default=42)
    t.add_argument("--epochs", type=_positive_int, default=10)
    t.add_argument("--batch-size", type=_positive_int, help="default 8, or 128 with --cost-sensitive")
    t.add_argument("--hidden-dim", type=_positive_int, default=64)
    t.add_argument("--embed-dim", type=_positive_int, default=32)
    t.add_argument("--routing-iterations", type=_positive_int, default=3)
    t.add_argument("--capsules", type=_positive_int, default=4)
    t.add_argument("--capsule-dim", type=_positive_int, default=8)
    t.add_argument("--learning-rate", type=_positive_float, default=1e-2)
    t.add_argument("--cost-sensitive", action="store_true")
    t.add_argument("--minority-label", choices=("positive", "negative"))
    t.add_argument("--min-count", type=_positive_int, default=2)
    t.add_argument("--max-len", type=_positive_int, help="fixed sequence length (default: corpus maximum)")
    t.add_argument("--stopwords", help="stopword file, one token per line")
    t.add_argument("--embeddings", help="textual word-vector file")

    e = sub.add_parser("eval", help="score a model on a labeled dataset")
    e.add_argument("model")
    e.add_argument("data")
    e.add_argument("-o", "--output", help="report path (default: <model>.report.json)")
    e.add_argument("--format", choices=("json", "tsv"), default="json")
    e.add_argument("--folds", type=_positive_int, help="k-fold cross-validation, retraining per fold")
    e.add_argument("--seed", type=int, default=42)

    r = sub.add_parser("predict", help="predict domain and polarity for texts, one per line")
    r.add_argument("--model", help=f"model file (default: ${MODEL_DIR_ENV}/{DEFAULT_MODEL_NAME})")
    r.add_argument("--input", help="UTF-8 text file, one document per line (default: stdin)")
    r.add_argument("-o", "--output", help="JSONL output (default: stdout)")

    d = sub.add_parser("dbd", help="dump token-level tf, idf and dbd as TSV")
    d.add_argument("source", help="model file or dataset")
    d.add_argument("-o", "--output", help="TSV path (default: stdout)")
    return p


def _open_out(path):
    return open(path, "w", encoding="utf-8", newline="\n") if path else sys.stdout


def _resolve_model(path):
    if path:
        candidate = Path(path)
    elif os.environ.get(MODEL_DIR_ENV):
        candidate = Path(os.environ[MODEL_DIR_ENV]) / DEFAULT_MODEL_NAME
    else:
        raise DataError(f"no model file given: pass --model or set {MODEL_DIR_ENV}")
    if not candidate.is_file():
        raise DataError(f"model file not found: {candidate}")
    return candidate


def cmd_synth(args):
    spec = SyntheticSpec(num_domains=args.domains, docs_per_domain=args.docs_per_domain,
                         domain_vocab_size=args.domain_vocab_size, sentiment_lexicon_size=args.lexicon_size,
                         vocab_overlap=args.overlap, imbalance_ratio=args.imbalance_ratio,
                         doc_length_range=(args.min_length, args.max_length), seed=args.seed,
                         mixed_sentiment=args.mixed_sentiment)
    data = generate_synthetic(spec)
    save_dataset(data, args.output)
    log.info("wrote %d documents to %s", len(data), args.output)


def cmd_train(args):
    data = load_dataset(args.data, args.format)
    model = WCapsuleEnsemble(
        embed_dim=args.embed_dim, hidden_dim=args.hidden_dim, n_capsules=args.capsules,
        capsule_dim=args.capsule_dim, routing_iterations=args.routing_iterations, epochs=args.epochs,
        batch_size=args.batch_size, learning_rate=args.learning_rate, cost_sensitive=args.cost_sensitive,
        minority_label=args.minority_label, min_count=args.min_count, max_len=args.max_len or "auto",
        stopwords=sorted(load_stopwords(args.stopwords)) if args.stopwords else None,
        embeddings=args.embeddings, random_state=args.seed)
    model.fit_dataset(data)
    model.save(args.output)
    log_path = args.log or f"{args.output}.log.json"
    with open(log_path, "w", encoding="utf-8") as fh:
        json.dump({
            "n_documents": len(data),
            "domains": list(model.domains_),
            "batch_size": model.effective_batch_size,
            "params": {k: v for k, v in model.get_params().items() if k != "stopwords"},
            "epoch_losses": dict(zip(model.domains_, model.history_)),
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("wrote model %s and log %s", args.output, log_path)


def _report_tsv(report):
    lines = ["section\tkey\tvalue"]
    pol = report["polarity"]
    for k in ("accuracy", "precision", "recall", "f1", "g_mean"):
        lines.append(f"polarity\t{k}\t{pol[k]:.6f}")
    dom = report["domain"]
    lines.append(f"domain\taccuracy\t{dom['accuracy']:.6f}")
    for avg in ("macro", "micro"):
        for k in ("precision", "recall"):
            lines.append(f"domain\t{avg}_{k}\t{dom[avg][k]:.6f}")
    for name, row in report["per_domain"].items():
        lines.append(f"per_domain\t{name}\t{row['polarity_accuracy']:.6f}")
    return "\n".join(lines) + "\n"


def cmd_eval(args):
    model = load_model(_resolve_model(args.model))
    data = load_dataset(args.data)
    report = evaluate(model, data, folds=args.folds, seed=args.seed)
    out = args.output or f"{args.model}.report.{args.format}"
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        if args.format == "json":
            json.dump(report, fh, indent=2, sort_keys=True, ensure_ascii=False)
            fh.write("\n")
        elif args.folds:
            for i, fold in enumerate(report["folds"]):
                fh.write(f"# fold {i}\n" + _report_tsv(fold))
        else:
            fh.write(_report_tsv(report))
    log.info("wrote report %s", out)


def cmd_predict(args):
    model = load_model(_resolve_model(args.model))
    if args.input:
        lines = Path(args.input).read_text(encoding="utf-8").splitlines()
    else:
        lines = sys.stdin.read().splitlines()
    texts = [line for line in lines if line.strip()]
    results = model.predict_details(texts) if texts else []
    fh = _open_out(args.output)
    try:
        for text, res in zip(texts, results):
            fh.write(json.dumps({"text": text, **res}, ensure_ascii=False, sort_keys=True) + "\n")
    finally:
        if fh is not sys.stdout:
            fh.close()


def cmd_dbd(args):
    source = Path(args.source)
    if not source.is_file():
        raise DataError(f"file not found: {source}")
    with open(source, "rb") as fh:
        is_model = fh.read(len(MAGIC)) == MAGIC
    stats = load_model(source).dbd_.stats_ if is_model else build_domain_stats(load_dataset(source))
    fh = _open_out(args.output)
    try:
        fh.write("token\tdomain\ttf\tidf\tdbd\n")
        for token, domain, tf, idf, d in dbd_table(stats):
            fh.write(f"{token}\t{domain}\t{tf!r}\t{idf!r}\t{d!r}\n")
    finally:
        if fh is not sys.stdout:
            fh.close()


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval,
            "predict": cmd_predict, "dbd": cmd_dbd}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (DataError, WCapsuleError, OSError) as exc:
        print(f"wcapsule {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
