"""Multi-width convolution, max-over-time pooling and the softmax classifier.

A filter of width k holds a (k * D) weight vector laid out row-major over
k consecutive input rows of width D. Windows may only start inside the
real part of a sentence, except that a sentence shorter than k still gets
the single window at position 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import AttendedSentence, softmax

N_CLASSES = 3
INIT_RANGE = 0.01


class ModelConfigError(ValueError):
    pass


@dataclass
class ConvFilter:
    weights: np.ndarray  # (width * input_dim,)
    bias: float
    width: int


@dataclass
class ModelParams:
    widths: tuple
    filters: list  # per width, (n_per_width, width * input_dim)
    biases: list  # per width, (n_per_width,)
    softmax_W: np.ndarray  # (feature_dim, 3)
    softmax_b: np.ndarray  # (3,)

    @property
    def n_per_width(self) -> int:
        return self.filters[0].shape[0]

    @property
    def input_dim(self) -> int:
        return self.filters[0].shape[1] // self.widths[0]

    @property
    def feature_dim(self) -> int:
        return self.n_per_width * len(self.widths)

    def filter(self, width_index: int, i: int) -> ConvFilter:
        return ConvFilter(self.filters[width_index][i], float(self.biases[width_index][i]),
                          self.widths[width_index])

    def arrays(self) -> list[np.ndarray]:
        """Every trainable array in a fixed order: filters, biases, softmax W, b."""
        return [*self.filters, *self.biases, self.softmax_W, self.softmax_b]

    def names(self) -> list[str]:
        return ([f"filters_{k}" for k in self.widths] + [f"biases_{k}" for k in self.widths]
                + ["softmax_W", "softmax_b"])

    def with_arrays(self, arrays) -> "ModelParams":
        arrays = list(arrays)
        n = len(self.widths)
        return ModelParams(tuple(self.widths), arrays[:n], arrays[n:2 * n],
                           arrays[2 * n], arrays[2 * n + 1])

    def copy(self) -> "ModelParams":
        return self.with_arrays(a.copy() for a in self.arrays())

    def zeros_like(self) -> "ModelParams":
        return self.with_arrays(np.zeros_like(a) for a in self.arrays())

    def validate(self, maxlen: int | None = None):
        if not self.widths or any(k < 1 for k in self.widths):
            raise ModelConfigError("filter widths must be positive")
        if maxlen is not None and max(self.widths) > maxlen:
            raise ModelConfigError(
                f"filter width {max(self.widths)} exceeds maxlen {maxlen}")
        n = self.n_per_width
        for k, W, b in zip(self.widths, self.filters, self.biases):
            if W.shape != (n, k * self.input_dim) or b.shape != (n,):
                raise ModelConfigError(f"bad filter shapes for width {k}")
        if self.softmax_W.shape != (self.feature_dim, N_CLASSES):
            raise ModelConfigError("softmax_W rows must equal feature_dim")
        if self.softmax_b.shape != (N_CLASSES,):
            raise ModelConfigError("softmax_b must have 3 entries")


def init_params(widths, n_per_width: int, input_dim: int, rng: np.random.Generator,
                maxlen: int | None = None, init_range: float = INIT_RANGE) -> ModelParams:
    widths = tuple(int(k) for k in widths)
    if n_per_width < 1 or input_dim < 1:
        raise ModelConfigError("n_per_width and input_dim must be positive")
    filters = [rng.uniform(-init_range, init_range, size=(n_per_width, k * input_dim))
               for k in widths]
    biases = [np.zeros(n_per_width) for _ in widths]
    W = rng.uniform(-init_range, init_range, size=(n_per_width * len(widths), N_CLASSES))
    params = ModelParams(widths, filters, biases, W, np.zeros(N_CLASSES))
    params.validate(maxlen)
    return params


def window(s: AttendedSentence, j: int, k: int) -> np.ndarray:
    maxlen = s.rows.shape[0]
    if j < 0 or k < 1 or j + k > maxlen:
        raise IndexError(f"window [{j}, {j + k}) outside sentence of length {maxlen}")
    return s.rows[j:j + k].reshape(-1)


def n_windows(true_length, k):
    return np.maximum(1, true_length - k + 1)


def conv_feature_map(s: AttendedSentence, f: ConvFilter) -> np.ndarray:
    if f.width > s.rows.shape[0]:
        raise ModelConfigError(f"filter width {f.width} exceeds maxlen {s.rows.shape[0]}")
    count = int(n_windows(s.true_length, f.width))
    pre = np.array([window(s, j, f.width) @ f.weights + f.bias for j in range(count)])
    return np.maximum(pre, 0.0)


def max_pool(c) -> float:
    c = np.asarray(c)
    if c.size == 0:
        raise ValueError("empty feature map")
    return float(c.max())


def dropout_mask(dim: int, keep_prob: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted dropout: survivors are scaled by 1/keep_prob."""
    if not 0.0 < keep_prob <= 1.0:
        raise ModelConfigError("keep_prob must lie in (0, 1]")
    if keep_prob == 1.0:
        return np.ones(dim)
    return (rng.random(dim) < keep_prob) / keep_prob


@dataclass
class ForwardResult:
    probs: np.ndarray  # (B, 3)
    pooled: np.ndarray  # (B, feature_dim), before dropout
    argmax_positions: list  # per width, (B, n_per_width) window index of each max
    logits: np.ndarray
    pre_at_max: list  # per width, (B, n_per_width) pre-activation of winning window


def _conv_pool(W, b, k, S, lengths):
    B, L, D = S.shape
    n = W.shape[0]
    T = L - k + 1
    Wr = W.reshape(n, k, D)
    pre = np.broadcast_to(b, (B, T, n)).copy()
    for r in range(k):
        pre += S[:, r:r + T] @ Wr[:, r].T
    act = np.maximum(pre, 0.0)
    valid = np.arange(T)[None, :] < n_windows(lengths, k)[:, None]
    # ReLU output is >= 0, so -1 can never win the max
    pos = np.where(valid[:, :, None], act, -1.0).argmax(axis=1)
    bi = np.arange(B)[:, None]
    fi = np.arange(n)[None, :]
    return act[bi, pos, fi], pos, pre[bi, pos, fi]


def forward_batch(params: ModelParams, S, lengths, masks=None) -> ForwardResult:
    S = np.asarray(S)
    if not np.issubdtype(S.dtype, np.floating):
        S = S.astype(np.float64)
    lengths = np.asarray(lengths)
    if S.ndim != 3 or S.shape[2] != params.input_dim:
        raise ModelConfigError(
            f"input width {S.shape[-1]} does not match model input width {params.input_dim}")
    if max(params.widths) > S.shape[1]:
        raise ModelConfigError("filter width exceeds maxlen")
    pooled_parts, positions, pre_at = [], [], []
    for k, W, b in zip(params.widths, params.filters, params.biases):
        p, pos, pre = _conv_pool(W, b, k, S, lengths)
        pooled_parts.append(p)
        positions.append(pos)
        pre_at.append(pre)
    pooled = np.concatenate(pooled_parts, axis=1)
    h = pooled
    if masks is not None:
        masks = np.asarray(masks)
        if masks.shape[-1] != params.feature_dim:
            raise ModelConfigError("dropout mask length must equal feature_dim")
        h = pooled * masks
    logits = h @ params.softmax_W + params.softmax_b
    return ForwardResult(softmax(logits, axis=1), pooled, positions, logits, pre_at)


def forward(params: ModelParams, s: AttendedSentence, mask=None):
    """Single-sentence forward pass: (probs, pooled, argmax_positions)."""
    res = forward_batch(params, s.rows[None], np.array([s.true_length]),
                        None if mask is None else np.asarray(mask)[None])
    return res.probs[0], res.pooled[0], [p[0] for p in res.argmax_positions]


def predict_proba(params: ModelParams, S, lengths, batch_size: int = 256) -> np.ndarray:
    out = [forward_batch(params, S[i:i + batch_size], lengths[i:i + batch_size]).probs
           for i in range(0, len(S), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, N_CLASSES))
