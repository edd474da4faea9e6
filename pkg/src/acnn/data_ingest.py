"""Reading the 3-line Twitter aspect corpus and encoding it to fixed-length ids.

The dataset format repeats blocks of three lines::

    sentence containing the $T$ placeholder
    aspect phrase
    -1 | 0 | 1
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

logger = logging.getLogger(__name__)

PLACEHOLDER = "$T$"
LABELS = ("positive", "neutral", "negative")
LABEL_INDEX = {name: i for i, name in enumerate(LABELS)}
_RAW_TO_LABEL = {"1": "positive", "0": "neutral", "-1": "negative"}
_LABEL_TO_RAW = {v: k for k, v in _RAW_TO_LABEL.items()}

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD = 0
UNK = 1

_NON_ALPHA = re.compile(r"[^a-z]")


class DatasetFormatError(ValueError):
    """Malformed dataset file: bad block structure, label, or placeholder."""


@dataclass(frozen=True)
class RawInstance:
    sentence_template: str
    aspect_text: str
    label: str

    def sentence(self) -> str:
        return self.sentence_template.replace(PLACEHOLDER, self.aspect_text)


def parse_dataset(raw_text: str) -> list[RawInstance]:
    lines = raw_text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if len(lines) % 3:
        # the block that is incomplete, counted from 1
        raise DatasetFormatError(
            f"incomplete block {len(lines) // 3 + 1}: "
            f"{len(lines)} lines is not a multiple of 3")

    instances = []
    for b in range(len(lines) // 3):
        template, aspect, raw_label = lines[3 * b:3 * b + 3]
        block = b + 1
        template = template.strip()
        if template.count(PLACEHOLDER) != 1:
            raise DatasetFormatError(
                f"block {block}: sentence must contain {PLACEHOLDER} exactly once")
        aspect = aspect.strip()
        if not aspect:
            raise DatasetFormatError(f"block {block}: empty aspect")
        label = _RAW_TO_LABEL.get(raw_label.strip())
        if label is None:
            raise DatasetFormatError(
                f"block {block}: label {raw_label.strip()!r} not in {{-1, 0, 1}}")
        instances.append(RawInstance(template, aspect, label))
    return instances


def serialize_dataset(instances: list[RawInstance]) -> str:
    return "".join(
        f"{r.sentence_template}\n{r.aspect_text}\n{_LABEL_TO_RAW[r.label]}\n"
        for r in instances)


def read_dataset(path) -> list[RawInstance]:
    with open(path, encoding="utf-8") as fh:
        return parse_dataset(fh.read())


def load_stopwords(path=None) -> frozenset[str]:
    """Read a stop-word file (one token per line, ``#`` comments).

    With no path, the list bundled with the package is used.
    """
    if path is None:
        text = resources.files("acnn").joinpath("data/stopwords.txt").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    words = set()
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip().lower()
        if line:
            words.add(line)
    return frozenset(words)


_DEFAULT_STOPWORDS: frozenset[str] | None = None


def default_stopwords() -> frozenset[str]:
    global _DEFAULT_STOPWORDS
    if _DEFAULT_STOPWORDS is None:
        _DEFAULT_STOPWORDS = load_stopwords()
    return _DEFAULT_STOPWORDS


def preprocess(text: str, protected_tokens=frozenset(), stopwords=None) -> list[str]:
    """Lowercase, blank out everything but a-z, split, drop stop words.

    Tokens in ``protected_tokens`` survive stop-word removal.
    """
    if stopwords is None:
        stopwords = default_stopwords()
    tokens = _NON_ALPHA.sub(" ", text.lower()).split()
    return [t for t in tokens if t in protected_tokens or t not in stopwords]


def clean_aspect(aspect_text: str) -> list[str]:
    # aspect words are never stop-word filtered
    return _NON_ALPHA.sub(" ", aspect_text.lower()).split()


class Vocab:
    """Token <-> id map with PAD=0 and UNK=1 reserved."""

    def __init__(self, tokens=()):
        self.itos: list[str] = [PAD_TOKEN, UNK_TOKEN]
        self.stoi: dict[str, int] = {PAD_TOKEN: PAD, UNK_TOKEN: UNK}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        idx = self.stoi.get(token)
        if idx is None:
            idx = len(self.itos)
            self.stoi[token] = idx
            self.itos.append(token)
        return idx

    def lookup(self, token: str) -> int:
        return self.stoi.get(token, UNK)

    def encode(self, tokens) -> list[int]:
        return [self.lookup(t) for t in tokens]

    def decode(self, ids) -> list[str]:
        return [self.itos[i] for i in ids]

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.itos == other.itos

    @classmethod
    def from_itos(cls, itos: list[str]) -> "Vocab":
        if list(itos[:2]) != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError("vocabulary must start with the PAD and UNK tokens")
        v = cls(itos[2:])
        if len(v) != len(itos):
            raise ValueError("duplicate tokens in vocabulary listing")
        return v


@dataclass
class Example:
    token_ids: np.ndarray  # (maxlen,) int64
    true_length: int
    aspect_ids: np.ndarray  # (n_aspect,) int64
    label: str

    @property
    def label_index(self) -> int:
        return LABEL_INDEX[self.label]


@dataclass
class Corpus:
    examples: list[Example]
    maxlen: int
    vocab: Vocab
    split: str
    skipped: int = 0
    raw: list[RawInstance] = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.examples)

    def subset(self, indices) -> "Corpus":
        return Corpus([self.examples[i] for i in indices], self.maxlen, self.vocab,
                      self.split)

    def token_matrix(self) -> np.ndarray:
        return np.stack([e.token_ids for e in self.examples])

    def lengths(self) -> np.ndarray:
        return np.array([e.true_length for e in self.examples], dtype=np.int64)

    def labels(self) -> np.ndarray:
        return np.array([e.label_index for e in self.examples], dtype=np.int64)


def encode_instance(tokens: list[str], aspect_tokens: list[str], label: str,
                    vocab: Vocab, maxlen: int, grow: bool = False) -> Example:
    if grow:
        ids = [vocab.add(t) for t in tokens]
        aspect_ids = [vocab.add(t) for t in aspect_tokens]
    else:
        ids = vocab.encode(tokens)
        aspect_ids = vocab.encode(aspect_tokens)
    ids = ids[:maxlen]
    n = len(ids)
    token_ids = np.full(maxlen, PAD, dtype=np.int64)
    token_ids[:n] = ids
    return Example(token_ids, n, np.asarray(aspect_ids, dtype=np.int64), label)


def build_corpus(instances: list[RawInstance], vocab: Vocab | None = None,
                 maxlen: int | None = None, stopwords=None) -> Corpus:
    """Clean and encode instances.

    With ``vocab`` and ``maxlen`` both absent this is the training split: ids
    are allocated and maxlen is the longest cleaned sentence. Otherwise both
    must be given and unseen tokens become UNK.
    """
    training = vocab is None
    if training != (maxlen is None):
        raise ValueError("vocab and maxlen must be both given (test) or both absent (train)")

    cleaned = []
    skipped = 0
    for n, inst in enumerate(instances):
        aspect_tokens = clean_aspect(inst.aspect_text)
        if not aspect_tokens:
            raise DatasetFormatError(
                f"instance {n + 1}: aspect {inst.aspect_text!r} is empty after cleaning")
        tokens = preprocess(inst.sentence(), frozenset(aspect_tokens), stopwords)
        if not tokens:
            skipped += 1
            continue
        cleaned.append((tokens, aspect_tokens, inst))
    if skipped:
        logger.warning("skipped %d instance(s) whose sentence cleaned to nothing", skipped)

    if training:
        vocab = Vocab()
        maxlen = max((len(t) for t, _, _ in cleaned), default=0)
        if maxlen < 1:
            raise ValueError("training split has no usable sentences")
    elif maxlen < 1:
        raise ValueError("maxlen must be positive")

    examples = [encode_instance(t, a, inst.label, vocab, maxlen, grow=training)
                for t, a, inst in cleaned]
    return Corpus(examples, maxlen, vocab, "train" if training else "test", skipped,
                  [inst for _, _, inst in cleaned])


def class_distribution(corpus: Corpus) -> tuple[float, float, float]:
    """Fractions of (positive, neutral, negative) examples."""
    if not corpus.examples:
        raise ValueError("empty corpus")
    counts = np.bincount(corpus.labels(), minlength=len(LABELS))
    return tuple(float(c) / len(corpus.examples) for c in counts)
