"""Word vector table and the per-example lookups built on it."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data_ingest import PAD, Example, Vocab

logger = logging.getLogger(__name__)

OOV_RANGE = 0.25


class EmbeddingConfigError(ValueError):
    pass


@dataclass
class EmbeddingTable:
    matrix: np.ndarray  # (|vocab|, d) float64
    pretrained_mask: np.ndarray  # (|vocab|,) bool

    @property
    def d(self) -> int:
        return self.matrix.shape[1]

    def __len__(self):
        return self.matrix.shape[0]


@dataclass
class SentenceMatrix:
    rows: np.ndarray  # (maxlen, d)
    true_length: int


def oov_vector(seed: int, token_id: int, d: int) -> np.ndarray:
    # keyed on (seed, id) so the draw does not depend on vocabulary iteration order
    rng = np.random.default_rng([seed, token_id])
    return rng.uniform(-OOV_RANGE, OOV_RANGE, size=d)


def random_table(vocab_size: int, d: int, seed: int) -> EmbeddingTable:
    """Table with every non-PAD row drawn as an OOV vector."""
    matrix = np.zeros((vocab_size, d))
    for i in range(vocab_size):
        if i != PAD:
            matrix[i] = oov_vector(seed, i, d)
    return EmbeddingTable(matrix, np.zeros(vocab_size, dtype=bool))


def load_pretrained(vector_file, vocab: Vocab, d: int, seed: int) -> EmbeddingTable:
    """Build a table from a GloVe-format text stream.

    Only tokens in ``vocab`` are parsed; the first occurrence of a token wins.
    Lines whose vector length differs from ``d`` are skipped and counted.
    """
    if d <= 0:
        raise EmbeddingConfigError("embedding dimension must be positive")
    matrix = np.zeros((len(vocab), d))
    found = np.zeros(len(vocab), dtype=bool)
    n_lines = bad_dim = 0
    for line in vector_file:
        line = line.rstrip()
        if not line:
            continue
        n_lines += 1
        token, _, rest = line.partition(" ")
        values = rest.split()
        if len(values) != d:
            bad_dim += 1
            continue
        idx = vocab.stoi.get(token)
        if idx is None or idx == PAD or found[idx]:
            continue
        try:
            matrix[idx] = np.array(values, dtype=np.float64)
        except ValueError:
            bad_dim += 1
            continue
        found[idx] = True

    if n_lines and bad_dim == n_lines:
        raise EmbeddingConfigError(
            f"no line in the vector file has dimension {d}")
    if bad_dim:
        logger.warning("skipped %d malformed vector line(s)", bad_dim)

    for i in range(len(vocab)):
        if i != PAD and not found[i]:
            matrix[i] = oov_vector(seed, i, d)
    logger.info("pretrained vectors for %d of %d vocabulary entries",
                int(found.sum()), len(vocab) - 1)
    return EmbeddingTable(matrix, found)


def embed_sentence(example: Example, table: EmbeddingTable) -> SentenceMatrix:
    ids = example.token_ids
    if ids.size and (ids.max() >= len(table) or ids.min() < 0):
        raise IndexError("token id outside the embedding table")
    return SentenceMatrix(table.matrix[ids], example.true_length)


def aspect_vector(example: Example, table: EmbeddingTable) -> np.ndarray:
    if len(example.aspect_ids) == 0:
        raise ValueError("example has no aspect tokens")
    return table.matrix[example.aspect_ids].mean(axis=0)


def embed_batch(examples: list[Example], table: EmbeddingTable):
    """Stacked sentence matrices, lengths and aspect vectors for many examples."""
    ids = np.stack([e.token_ids for e in examples])
    x = table.matrix[ids]
    lengths = np.array([e.true_length for e in examples], dtype=np.int64)
    aspects = np.stack([aspect_vector(e, table) for e in examples])
    return x, lengths, aspects
