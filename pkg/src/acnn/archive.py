"""Single-file model archive.

Layout::

    ACNN1 key=value key=value ...\\n
    <pad>\\n
    <unk>\\n
    token\\n            (one per vocabulary entry, in id order)
    \\n                 (blank line ends the vocabulary)
    payload            (little-endian float64 arrays, back to back)

Payload order: embedding table, filters per width, biases per width,
softmax_W, softmax_b. The header carries a SHA-256 of the payload.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .convnet import ModelParams, N_CLASSES
from .data_ingest import Vocab
from .embeddings import EmbeddingTable

MAGIC = "ACNN1"
FORMAT_VERSION = 1
_LE = np.dtype("<f8")


class ArchiveError(ValueError):
    pass


@dataclass
class ModelArchive:
    variant: str
    maxlen: int
    vocab: Vocab
    table: EmbeddingTable
    params: ModelParams

    @property
    def header(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "variant": self.variant,
            "maxlen": self.maxlen,
            "dim": self.table.d,
            "widths": ",".join(str(k) for k in self.params.widths),
            "n_per_width": self.params.n_per_width,
            "vocab_size": len(self.vocab),
        }


def _payload_arrays(archive: ModelArchive):
    return [archive.table.matrix, *archive.params.arrays()]


def dumps(archive: ModelArchive) -> bytes:
    if archive.params.input_dim != 2 * archive.table.d:
        raise ArchiveError("model input width must be twice the embedding dimension")
    payload = b"".join(np.ascontiguousarray(a, dtype=_LE).tobytes()
                       for a in _payload_arrays(archive))
    fields = dict(archive.header, sha256=hashlib.sha256(payload).hexdigest())
    header = MAGIC + " " + " ".join(f"{k}={v}" for k, v in fields.items()) + "\n"
    vocab = "".join(t + "\n" for t in archive.vocab.itos) + "\n"
    return (header + vocab).encode("utf-8") + payload


def loads(data: bytes) -> ModelArchive:
    nl = data.find(b"\n")
    if nl < 0 or not data.startswith(MAGIC.encode() + b" "):
        raise ArchiveError("not an ACNN1 archive")
    try:
        fields = dict(item.split("=", 1) for item in data[:nl].decode("utf-8").split()[1:])
        version = int(fields["format_version"])
        variant = fields["variant"]
        maxlen = int(fields["maxlen"])
        d = int(fields["dim"])
        widths = tuple(int(k) for k in fields["widths"].split(","))
        n = int(fields["n_per_width"])
        vocab_size = int(fields["vocab_size"])
        digest = fields["sha256"]
    except (KeyError, ValueError, UnicodeDecodeError) as exc:
        raise ArchiveError(f"malformed archive header: {exc}") from None
    if version != FORMAT_VERSION:
        raise ArchiveError(f"archive format version {version}, expected {FORMAT_VERSION}")

    pos = nl + 1
    itos = []
    while True:
        end = data.find(b"\n", pos)
        if end < 0:
            raise ArchiveError("archive truncated inside the vocabulary")
        line = data[pos:end]
        pos = end + 1
        if not line:
            break
        itos.append(line.decode("utf-8"))
    if len(itos) != vocab_size:
        raise ArchiveError(f"vocabulary has {len(itos)} entries, header says {vocab_size}")

    D = 2 * d
    shapes = ([(vocab_size, d)] + [(n, k * D) for k in widths] + [(n,) for _ in widths]
              + [(n * len(widths), N_CLASSES), (N_CLASSES,)])
    expected = sum(int(np.prod(s)) for s in shapes) * _LE.itemsize
    payload = data[pos:]
    if len(payload) != expected:
        raise ArchiveError(f"payload is {len(payload)} bytes, expected {expected} (truncated?)")
    if hashlib.sha256(payload).hexdigest() != digest:
        raise ArchiveError("payload checksum mismatch")

    arrays = []
    offset = 0
    for s in shapes:
        count = int(np.prod(s))
        arrays.append(np.frombuffer(payload, dtype=_LE, count=count, offset=offset)
                      .astype(np.float64).reshape(s))
        offset += count * _LE.itemsize
    try:
        vocab = Vocab.from_itos(itos)
    except ValueError as exc:
        raise ArchiveError(str(exc)) from None
    table = EmbeddingTable(arrays[0], np.zeros(vocab_size, dtype=bool))
    L = len(widths)
    params = ModelParams(widths, arrays[1:1 + L], arrays[1 + L:1 + 2 * L],
                         arrays[1 + 2 * L], arrays[2 + 2 * L])
    return ModelArchive(variant, maxlen, vocab, table, params)


def save(archive: ModelArchive, path):
    with open(path, "wb") as fh:
        fh.write(dumps(archive))


def load(path) -> ModelArchive:
    with open(path, "rb") as fh:
        return loads(fh.read())
