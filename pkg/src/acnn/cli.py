"""Command line: ``acnn train | eval | predict | gradcheck``.

Exit codes: 0 success, 1 usage, 2 data/format error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time

import numpy as np

from . import archive as archive_mod
from .archive import ArchiveError, ModelArchive
from .attention import encode
from .convnet import forward, init_params
from .data_ingest import LABELS, PAD, DatasetFormatError, Example, RawInstance, \
    build_corpus, clean_aspect, encode_instance, load_stopwords, preprocess, read_dataset
from .embeddings import EmbeddingConfigError, aspect_vector, embed_sentence, load_pretrained, \
    random_table
from .training import TrainConfig, TrainingDivergedError, evaluate, grad_check, gradients, \
    make_batch, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
GRADCHECK_TOL = 1e-4
# scale of the random parameters used by the tiny-model gradient check
GRADCHECK_PARAM_SCALE = 0.5

log = logging.getLogger("acnn")


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _widths(text):
    try:
        widths = tuple(int(k) for k in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad filter widths {text!r}") from None
    if not widths or min(widths) < 1:
        raise argparse.ArgumentTypeError("filter widths must be positive")
    return widths


def _default_seed():
    env = os.environ.get("ACNN_SEED")
    try:
        return int(env) if env else 0
    except ValueError:
        return 0


def _variant(text):
    if text not in ("atten1", "atten2"):
        raise argparse.ArgumentTypeError("variant must be atten1 or atten2")
    return text


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="acnn", formatter_class=fmt,
                     description="Aspect sentiment CNN with attention-based inputs.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    d = TrainConfig()

    p = sub.add_parser("train", formatter_class=fmt, help="train a model")
    p.add_argument("--data-train", required=True, help="training file (3-line $T$ format)")
    p.add_argument("--data-test", required=True, help="test file (3-line $T$ format)")
    p.add_argument("--vectors", required=True, help="GloVe-format text vectors")
    p.add_argument("--variant", type=_variant, default=d.variant, help="atten1 or atten2")
    p.add_argument("--epochs", type=int, default=d.epochs, help="passes over the training set")
    p.add_argument("--batch-size", type=int, default=d.batch_size, help="examples per update")
    p.add_argument("--lr", type=float, default=d.learning_rate, help="Adam learning rate")
    p.add_argument("--l2", type=float, default=d.l2_lambda, help="L2 weight on softmax_W")
    p.add_argument("--keep-prob", type=float, default=d.keep_prob,
                   help="dropout keep probability on the pooled features")
    p.add_argument("--filter-widths", type=_widths, default=",".join(map(str, d.widths)),
                   help="comma-separated filter widths")
    p.add_argument("--filters-per-width", type=int, default=d.n_per_width,
                   help="convolution filters of each width")
    p.add_argument("--dim", type=int, default=d.embedding_dim, help="embedding dimension")
    p.add_argument("--seed", type=int, default=_default_seed(),
                   help="random seed (falls back to $ACNN_SEED)")
    p.add_argument("--out", default="model.acnn", help="archive path")
    p.add_argument("--history", default=None, help="history CSV path; None means OUT.history.csv")
    p.add_argument("--stopwords", default=None, help="stop-word file; None means the bundled list")

    p = sub.add_parser("eval", formatter_class=fmt, help="evaluate an archive on a test file")
    p.add_argument("--model", required=True, help="archive written by train")
    p.add_argument("--data-test", required=True, help="test file (3-line $T$ format)")
    p.add_argument("--stopwords", default=None, help="stop-word file used at training time")

    p = sub.add_parser("predict", formatter_class=fmt, help="classify one sentence/aspect pair")
    p.add_argument("--model", required=True, help="archive written by train")
    p.add_argument("--sentence", required=True, help="text; may contain $T$ for the aspect")
    p.add_argument("--aspect", required=True, help="aspect phrase")
    p.add_argument("--stopwords", default=None, help="stop-word file used at training time")

    p = sub.add_parser("gradcheck", formatter_class=fmt,
                       help="finite-difference check of the analytic gradients")
    p.add_argument("--seed", type=int, default=_default_seed(),
                   help="random seed (falls back to $ACNN_SEED)")
    p.add_argument("--dims", type=int, default=8, help="embedding dimension of the tiny model")
    p.add_argument("--maxlen", type=int, default=10, help="sentence length of the tiny model")
    p.add_argument("--epsilon", type=float, default=1e-5, help="central-difference step")
    p.add_argument("--corrupt", action="store_true",
                   help="perturb the analytic gradient (negative control; must fail)")
    return parser


def _read(path) -> list[RawInstance]:
    try:
        return read_dataset(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    except (DatasetFormatError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: {exc}") from None


def _stopwords(path):
    if path is None:
        return None
    try:
        return load_stopwords(path)
    except OSError as exc:
        raise DataError(f"cannot read stop-word file {path}: {exc}") from None


def write_history(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "test_accuracy", "test_macro_f1"])
        for r in history:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.test_accuracy),
                        repr(r.test_macro_f1)])


def cmd_train(args) -> int:
    stop = _stopwords(args.stopwords)
    train_raw = _read(args.data_train)
    test_raw = _read(args.data_test)
    try:
        train_corpus = build_corpus(train_raw, stopwords=stop)
        test_corpus = build_corpus(test_raw, train_corpus.vocab, train_corpus.maxlen, stop)
    except (DatasetFormatError, ValueError) as exc:
        raise DataError(str(exc)) from None
    try:
        config = TrainConfig(variant=args.variant, widths=args.filter_widths,
                             n_per_width=args.filters_per_width, embedding_dim=args.dim,
                             keep_prob=args.keep_prob, l2_lambda=args.l2,
                             batch_size=args.batch_size, learning_rate=args.lr,
                             epochs=args.epochs, seed=args.seed)
    except ValueError as exc:
        print(f"acnn train: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if max(config.widths) > train_corpus.maxlen:
        print(f"acnn train: filter width exceeds maxlen {train_corpus.maxlen}", file=sys.stderr)
        return EXIT_USAGE
    try:
        with open(args.vectors, encoding="utf-8") as fh:
            table = load_pretrained(fh, train_corpus.vocab, args.dim, args.seed)
    except OSError as exc:
        raise DataError(f"cannot read {args.vectors}: {exc}") from None
    except EmbeddingConfigError as exc:
        raise DataError(f"{args.vectors}: {exc}") from None

    print(f"train {len(train_corpus)} (skipped {train_corpus.skipped}), "
          f"test {len(test_corpus)} (skipped {test_corpus.skipped}), "
          f"vocab {len(train_corpus.vocab)}, maxlen {train_corpus.maxlen}, "
          f"pretrained rows {int(table.pretrained_mask.sum())}")
    t0 = time.time()
    params, history = train(config, train_corpus, test_corpus, table,
                            on_epoch=lambda r: log.info(
                                "epoch %d  loss %.4f  acc %.4f  macro-F1 %.4f",
                                r.epoch, r.train_loss, r.test_accuracy, r.test_macro_f1))
    archive_mod.save(ModelArchive(config.variant, train_corpus.maxlen, train_corpus.vocab,
                                  table, params), args.out)
    write_history(history, args.history or args.out + ".history.csv")
    if history:
        last = history[-1]
        print(f"accuracy {last.test_accuracy:.4f}  macro-F1 {last.test_macro_f1:.4f}  "
              f"({time.time() - t0:.0f}s)")
    return EXIT_OK


def _load_archive(path) -> ModelArchive:
    try:
        return archive_mod.load(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    except ArchiveError as exc:
        raise DataError(f"{path}: {exc}") from None


def cmd_eval(args) -> int:
    arc = _load_archive(args.model)
    stop = _stopwords(args.stopwords)
    try:
        corpus = build_corpus(_read(args.data_test), arc.vocab, arc.maxlen, stop)
    except (DatasetFormatError, ValueError) as exc:
        raise DataError(str(exc)) from None
    if len(corpus) == 0:
        raise DataError("test set is empty")
    ev = evaluate(arc.params, corpus, arc.table, arc.variant)
    print(f"accuracy: {ev.accuracy:.4f}")
    print(f"macro_f1: {ev.macro_f1:.4f}")
    print(f"n={len(corpus)}")
    print(f"accuracy={ev.accuracy!r}")
    print(f"macro_f1={ev.macro_f1!r}")
    return EXIT_OK


def encode_pair(sentence: str, aspect: str, arc: ModelArchive, stopwords=None) -> Example:
    aspect_tokens = clean_aspect(aspect)
    if not aspect_tokens:
        raise DataError(f"aspect {aspect!r} is empty after cleaning")
    text = sentence.replace("$T$", aspect)
    tokens = preprocess(text, frozenset(aspect_tokens), stopwords)
    if not tokens:
        raise DataError("sentence is empty after cleaning")
    return encode_instance(tokens, aspect_tokens, "neutral", arc.vocab, arc.maxlen)


def cmd_predict(args) -> int:
    arc = _load_archive(args.model)
    ex = encode_pair(args.sentence, args.aspect, arc, _stopwords(args.stopwords))
    s = encode(embed_sentence(ex, arc.table), aspect_vector(ex, arc.table), arc.variant)
    probs, _, _ = forward(arc.params, s)
    print(LABELS[int(np.argmax(probs))])
    for name, p in zip(LABELS, probs):
        print(f"{name}={p:.6f}")
    return EXIT_OK


def tiny_problem(seed: int, dim: int = 8, maxlen: int = 10, variant: str = "atten2",
                 widths=(2, 3), n_per_width: int = 2, n_examples: int = 4,
                 vocab_size: int = 30):
    """Random examples and parameters for the small gradient-check model."""
    rng = np.random.default_rng([seed, 0 if variant == "atten1" else 1])
    table = random_table(vocab_size, dim, seed)
    examples = []
    for _ in range(n_examples):
        n = int(rng.integers(1, maxlen + 1))
        ids = np.full(maxlen, PAD, dtype=np.int64)
        ids[:n] = rng.integers(2, vocab_size, size=n)
        aspect = rng.integers(2, vocab_size, size=int(rng.integers(1, 3)))
        examples.append(Example(ids, n, aspect, LABELS[int(rng.integers(3))]))
    batch = make_batch(examples, table, variant)
    s = GRADCHECK_PARAM_SCALE
    params = init_params(widths, n_per_width, 2 * dim, rng, maxlen=maxlen, init_range=s)
    params.biases = [rng.uniform(-0.2 * s, 0.2 * s, size=n_per_width) for _ in widths]
    params.softmax_b = rng.uniform(-s, s, size=3)
    return params, batch


def run_gradcheck(seed: int = 0, dim: int = 8, maxlen: int = 10, epsilon: float = 1e-5,
                  corrupt: bool = False, l2: float = TrainConfig.l2_lambda) -> dict:
    """Max relative gradient error of the tiny model, per input variant."""
    results = {}
    for variant in ("atten1", "atten2"):
        params, batch = tiny_problem(seed, dim, maxlen, variant)
        grad_fn = None
        if corrupt:
            def grad_fn(p, batch=batch):
                g = gradients(p, batch, None, l2)
                g.softmax_b = g.softmax_b * 1.01 + 1e-3
                return g
        results[variant] = grad_check(params, batch, epsilon, seed, l2=l2, grad_fn=grad_fn)
    return results


def cmd_gradcheck(args) -> int:
    if args.dims < 1 or args.maxlen < 3:
        print("acnn gradcheck: --dims must be >= 1 and --maxlen >= 3", file=sys.stderr)
        return EXIT_USAGE
    t0 = time.time()
    results = run_gradcheck(args.seed, args.dims, args.maxlen, args.epsilon, args.corrupt)
    for variant, err in results.items():
        print(f"{variant} max_relative_error={err:.3e}")
    worst = max(results.values())
    ok = worst <= GRADCHECK_TOL
    print(f"{'PASS' if ok else 'FAIL'} max_relative_error={worst:.3e} tol={GRADCHECK_TOL:g} "
          f"({time.time() - t0:.2f}s)")
    return EXIT_OK if ok else EXIT_NUMERIC


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "predict": cmd_predict,
            "gradcheck": cmd_gradcheck}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except DataError as exc:
        print(f"acnn {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDivergedError as exc:
        print(f"acnn {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
