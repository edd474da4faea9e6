"""Loss, hand-written backprop, Adam, finite-difference checking and the training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .attention import VARIANTS, encode_batch
from .convnet import ModelParams, N_CLASSES, dropout_mask, forward_batch, init_params, \
    predict_proba
from .data_ingest import Corpus
from .embeddings import EmbeddingTable, embed_batch

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-12


class TrainingDivergedError(ArithmeticError):
    def __init__(self, epoch, batch, value):
        super().__init__(f"non-finite loss {value} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class TrainConfig:
    variant: str = "atten2"
    widths: tuple = (2, 3, 4)
    n_per_width: int = 200
    embedding_dim: int = 200
    keep_prob: float = 0.5
    l2_lambda: float = 2.6
    batch_size: int = 64
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 30
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        self.widths = tuple(int(k) for k in self.widths)
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if not self.widths or min(self.widths) < 1:
            raise ValueError("filter widths must be positive")
        if self.n_per_width < 1 or self.embedding_dim < 1:
            raise ValueError("n_per_width and embedding_dim must be positive")
        if not 0.0 < self.keep_prob <= 1.0:
            raise ValueError("keep_prob must lie in (0, 1]")
        if self.l2_lambda < 0 or self.learning_rate <= 0 or self.adam_eps <= 0:
            raise ValueError("l2_lambda >= 0, learning_rate > 0 and adam_eps > 0 required")
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size >= 1 and epochs >= 0 required")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")


@dataclass
class Batch:
    inputs: np.ndarray  # (B, maxlen, 2d) encoded sentences
    lengths: np.ndarray  # (B,)
    labels: np.ndarray  # (B,) class indices

    def __post_init__(self):
        if len(self.labels) == 0:
            raise ValueError("empty batch")

    @property
    def one_hot(self) -> np.ndarray:
        return np.eye(N_CLASSES)[self.labels]

    def __len__(self):
        return len(self.labels)


def make_batch(examples, table: EmbeddingTable, variant: str) -> Batch:
    x, lengths, aspects = embed_batch(examples, table)
    S = encode_batch(x, lengths, aspects, variant)
    return Batch(S, lengths, np.array([e.label_index for e in examples], dtype=np.int64))


def loss_and_gradients(params: ModelParams, batch: Batch, masks=None, l2: float = 0.0,
                       need_grad: bool = True):
    """Mean cross-entropy plus ``l2 * ||softmax_W||^2`` and its exact gradient."""
    res = forward_batch(params, batch.inputs, batch.lengths, masks)
    B = len(batch)
    rows = np.arange(B)
    z = res.logits - res.logits.max(axis=1, keepdims=True)
    logp = z[rows, batch.labels] - np.log(np.exp(z).sum(axis=1))
    floor = math.log(LOG_FLOOR)
    active = logp > floor
    # np.maximum keeps NaN so divergence is not masked by the floor
    ce = -np.maximum(logp, floor)
    value = ce.mean() + l2 * np.sum(params.softmax_W ** 2)
    if not need_grad:
        return value, None

    dlogits = (res.probs - batch.one_hot) * active[:, None] / B
    h = res.pooled if masks is None else res.pooled * masks
    gW = h.T @ dlogits + 2.0 * l2 * params.softmax_W
    gb = dlogits.sum(axis=0)
    dpooled = dlogits @ params.softmax_W.T
    if masks is not None:
        dpooled = dpooled * masks

    S = batch.inputs
    L, D = S.shape[1], S.shape[2]
    n = params.n_per_width
    gfilters, gbiases = [], []
    for w, k in enumerate(params.widths):
        # gradient reaches only the winning window, and only through an active ReLU
        dpre = dpooled[:, w * n:(w + 1) * n] * (res.pre_at_max[w] > 0)
        T = L - k + 1
        G = np.zeros((B, T, n), dtype=dpre.dtype)
        np.add.at(G, (rows[:, None], res.argmax_positions[w], np.arange(n)[None, :]), dpre)
        Gf = G.reshape(B * T, n).T
        gF = np.empty((n, k, D), dtype=G.dtype)
        for r in range(k):
            gF[:, r] = Gf @ S[:, r:r + T].reshape(B * T, D)
        gfilters.append(gF.reshape(n, k * D))
        gbiases.append(dpre.sum(axis=0))
    return value, params.with_arrays([*gfilters, *gbiases, gW, gb])


def loss(params: ModelParams, batch: Batch, masks=None, l2: float = 0.0) -> float:
    return loss_and_gradients(params, batch, masks, l2, need_grad=False)[0]


def gradients(params: ModelParams, batch: Batch, masks=None, l2: float = 0.0) -> ModelParams:
    return loss_and_gradients(params, batch, masks, l2)[1]


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def central_difference(f, x: np.ndarray, index, eps: float) -> float:
    """(f(x + eps e_i) - f(x - eps e_i)) / 2 eps, restoring x afterwards."""
    old = x[index]
    x[index] = old + eps
    fp = f()
    x[index] = old - eps
    fm = f()
    x[index] = old
    return (fp - fm) / (2 * eps)


def sample_coordinates(params: ModelParams, n_coords: int, rng, per_array: int = 4):
    """(array index, flat index) pairs covering every array, at least n_coords in total.

    When the model has no more than n_coords parameters, all of them are returned.
    """
    arrays = params.arrays()
    total = sum(a.size for a in arrays)
    if total <= n_coords:
        return [(i, j) for i, a in enumerate(arrays) for j in range(a.size)]
    chosen = set()
    for i, a in enumerate(arrays):
        for j in rng.choice(a.size, size=min(per_array, a.size), replace=False):
            chosen.add((i, int(j)))
    offsets = np.cumsum([0] + [a.size for a in arrays])
    while len(chosen) < n_coords:
        flat = int(rng.integers(total))
        i = int(np.searchsorted(offsets, flat, side="right") - 1)
        chosen.add((i, flat - int(offsets[i])))
    return sorted(chosen)


def as_dtype(params: ModelParams, batch: Batch, dtype):
    return (params.with_arrays(a.astype(dtype) for a in params.arrays()),
            Batch(batch.inputs.astype(dtype), batch.lengths, batch.labels))


def grad_check(params: ModelParams, batch: Batch, epsilon: float = 1e-5, seed: int = 0,
               l2: float = 0.0, n_coords: int = 200, grad_fn=None,
               dtype=np.longdouble) -> float:
    """Largest relative error between analytic and central-difference gradients.

    Runs in ``dtype`` (extended precision by default) with dropout off.
    ``grad_fn`` replaces the analytic gradient, e.g. to feed in a deliberately
    broken gradient as a negative control.
    """
    params, batch = as_dtype(params, batch, dtype)
    grad_fn = grad_fn or (lambda p: gradients(p, batch, None, l2))
    analytic = grad_fn(params).arrays()
    arrays = params.arrays()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i, j in sample_coordinates(params, n_coords, rng):
        flat = arrays[i].reshape(-1)
        numeric = central_difference(lambda: loss(params, batch, None, l2), flat, j, epsilon)
        worst = max(worst, float(relative_error(analytic[i].reshape(-1)[j], numeric)))
    return worst


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros(cls, arrays) -> "AdamState":
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], 0)


def adam_update(arrays, grads, state: AdamState, lr=0.001, beta1=0.9, beta2=0.999,
                eps=1e-8):
    """One bias-corrected Adam step on a list of arrays. Inputs are not modified."""
    if len(arrays) != len(grads) or len(arrays) != len(state.m):
        raise ValueError("parameter, gradient and state lists differ in length")
    t = state.t + 1
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    new_arrays, new_m, new_v = [], [], []
    for p, g, m, v in zip(arrays, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: {p.shape} vs {g.shape}")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        new_arrays.append(p - lr * (m / bc1) / (np.sqrt(v / bc2) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_arrays, AdamState(new_m, new_v, t)


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState, config: TrainConfig):
    arrays, state = adam_update(params.arrays(), grads.arrays(), state, config.learning_rate,
                                config.adam_beta1, config.adam_beta2, config.adam_eps)
    return params.with_arrays(arrays), state


def sgd_step(params: ModelParams, grads: ModelParams, lr: float) -> ModelParams:
    return params.with_arrays(p - lr * g for p, g in zip(params.arrays(), grads.arrays()))


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    test_accuracy: float
    test_macro_f1: float


@dataclass
class Evaluation:
    accuracy: float
    macro_f1: float
    confusion: np.ndarray = field(repr=False)
    probs: np.ndarray = field(repr=False)


def encode_corpus(corpus: Corpus, table: EmbeddingTable, variant: str, chunk: int = 512):
    """Encoded inputs, lengths and labels for a whole corpus."""
    parts = [make_batch(corpus.examples[i:i + chunk], table, variant)
             for i in range(0, len(corpus), chunk)]
    return (np.concatenate([p.inputs for p in parts]), np.concatenate([p.lengths for p in parts]),
            np.concatenate([p.labels for p in parts]))


def evaluate(params: ModelParams, corpus: Corpus, table: EmbeddingTable, variant: str,
             encoded=None) -> Evaluation:
    if len(corpus) == 0:
        raise ValueError("cannot evaluate on an empty corpus")
    S, lengths, labels = encoded if encoded is not None else encode_corpus(corpus, table, variant)
    probs = predict_proba(params, S, lengths)
    cm = metrics.confusion_matrix(labels, probs.argmax(axis=1))
    return Evaluation(metrics.accuracy(cm), metrics.macro_f1(cm), cm, probs)


def train(config: TrainConfig, train_corpus: Corpus, eval_corpus: Corpus,
          table: EmbeddingTable, on_epoch=None):
    """Train from a seeded initialisation; returns (params, history).

    ``on_epoch`` is called with each EpochRecord as it is produced.
    """
    if len(train_corpus) == 0 or len(eval_corpus) == 0:
        raise ValueError("training and evaluation corpora must be non-empty")
    if train_corpus.maxlen != eval_corpus.maxlen or train_corpus.vocab != eval_corpus.vocab:
        raise ValueError("corpora must share vocab and maxlen")
    if table.d != config.embedding_dim:
        raise ValueError(
            f"embedding table has d={table.d}, config expects {config.embedding_dim}")

    rng = np.random.default_rng(config.seed)
    params = init_params(config.widths, config.n_per_width, 2 * table.d, rng,
                         maxlen=train_corpus.maxlen)
    state = AdamState.zeros(params.arrays())
    eval_encoded = encode_corpus(eval_corpus, table, config.variant)
    history: list[EpochRecord] = []
    examples = train_corpus.examples
    N = len(examples)

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(N)
        total = 0.0
        for bi, start in enumerate(range(0, N, config.batch_size)):
            idx = order[start:start + config.batch_size]
            batch = make_batch([examples[i] for i in idx], table, config.variant)
            masks = None
            if config.keep_prob < 1.0:
                masks = np.stack([dropout_mask(params.feature_dim, config.keep_prob, rng)
                                  for _ in idx])
            value, grads = loss_and_gradients(params, batch, masks, config.l2_lambda)
            if not math.isfinite(value):
                raise TrainingDivergedError(epoch, bi + 1, value)
            if config.optimizer == "adam":
                params, state = adam_step(params, grads, state, config)
            else:
                params = sgd_step(params, grads, config.learning_rate)
            total += value * len(idx)
        ev = evaluate(params, eval_corpus, table, config.variant, eval_encoded)
        rec = EpochRecord(epoch, total / N, ev.accuracy, ev.macro_f1)
        history.append(rec)
        logger.info("epoch %d loss %.4f acc %.4f macro-F1 %.4f", epoch, rec.train_loss,
                    rec.test_accuracy, rec.test_macro_f1)
        if on_epoch is not None:
            on_epoch(rec)
    return params, history
