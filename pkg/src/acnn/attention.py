"""Aspect-aware input encodings.

Each word vector is scored against the aspect vector by cosine similarity,
the scores of the real (non-padding) words are softmax-normalised, and the
sentence is widened to 2d columns in one of two ways:

* ``atten1``: ``[x_i ; A_i * x_i]``
* ``atten2``: ``[x_i ; a]``

Neither encoding has trainable parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embeddings import SentenceMatrix

VARIANTS = ("atten1", "atten2")


@dataclass
class AttentionWeights:
    D: np.ndarray  # cosine scores, (true_length,)
    E: np.ndarray  # softmax input, identical to D
    A: np.ndarray  # normalised weights, (true_length,)


@dataclass
class AttendedSentence:
    rows: np.ndarray  # (maxlen, 2d)
    true_length: int
    variant: str


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(u @ v / (nu * nv))


def softmax(z, axis=-1):
    z = np.asarray(z)
    if not np.issubdtype(z.dtype, np.floating):
        z = z.astype(np.float64)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def attention_weights(x: SentenceMatrix, a) -> AttentionWeights:
    n = x.true_length
    if n < 1:
        raise ValueError("sentence has no words")
    D = np.array([cosine(x.rows[i], a) for i in range(n)])
    return AttentionWeights(D, D.copy(), softmax(D))


def atten_emb1(x: SentenceMatrix, a) -> AttendedSentence:
    w = attention_weights(x, a)
    maxlen, d = x.rows.shape
    out = np.zeros((maxlen, 2 * d))
    n = x.true_length
    out[:n, :d] = x.rows[:n]
    out[:n, d:] = w.A[:, None] * x.rows[:n]
    return AttendedSentence(out, n, "atten1")


def atten_emb2(x: SentenceMatrix, a) -> AttendedSentence:
    if x.true_length < 1:
        raise ValueError("sentence has no words")
    maxlen, d = x.rows.shape
    out = np.zeros((maxlen, 2 * d))
    n = x.true_length
    out[:n, :d] = x.rows[:n]
    out[:n, d:] = np.asarray(a, dtype=np.float64)
    return AttendedSentence(out, n, "atten2")


def encode(x: SentenceMatrix, a, variant: str) -> AttendedSentence:
    if variant == "atten1":
        return atten_emb1(x, a)
    if variant == "atten2":
        return atten_emb2(x, a)
    raise ValueError(f"unknown variant {variant!r}")


# Batched forms used by training. x: (B, L, d), lengths: (B,), a: (B, d).

def batch_attention(x, lengths, a):
    valid = np.arange(x.shape[1])[None, :] < lengths[:, None]
    xn = np.linalg.norm(x, axis=2)
    an = np.linalg.norm(a, axis=1)
    denom = xn * an[:, None]
    dots = np.einsum("bld,bd->bl", x, a)
    D = np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)
    E = np.where(valid, D, -np.inf)
    A = np.exp(E - E.max(axis=1, keepdims=True))
    A /= A.sum(axis=1, keepdims=True)
    return A


def encode_batch(x, lengths, a, variant: str) -> np.ndarray:
    valid = (np.arange(x.shape[1])[None, :] < lengths[:, None])[:, :, None]
    x = x * valid
    if variant == "atten1":
        A = batch_attention(x, lengths, a)
        second = A[:, :, None] * x
    elif variant == "atten2":
        second = np.broadcast_to(a[:, None, :], x.shape) * valid
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return np.concatenate([x, second], axis=2)
