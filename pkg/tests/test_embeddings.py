import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from acnn.data_ingest import PAD, UNK, Example, Vocab
from acnn.embeddings import OOV_RANGE, EmbeddingConfigError, EmbeddingTable, aspect_vector, \
    embed_sentence, load_pretrained


def _ex(ids, n, aspect=(2,)):
    return Example(np.array(ids), n, np.array(aspect), "neutral")


def test_load_copies_pretrained_rows():
    vocab = Vocab(["good", "qwzx"])
    table = load_pretrained(io.StringIO("good 0.1 0.2\nbad 0.3 0.4\n"), vocab, 2, seed=3)
    assert table.matrix[vocab.lookup("good")].tolist() == [0.1, 0.2]
    assert table.pretrained_mask.tolist() == [False, False, True, False]


def test_oov_rows_are_seeded_and_bounded():
    vocab = Vocab(["good", "qwzx"])
    text = "good 0.1 0.2\n"
    a = load_pretrained(io.StringIO(text), vocab, 2, seed=3)
    b = load_pretrained(io.StringIO(text), vocab, 2, seed=3)
    c = load_pretrained(io.StringIO(text), vocab, 2, seed=4)
    q = vocab.lookup("qwzx")
    assert np.array_equal(a.matrix, b.matrix)
    assert not np.array_equal(a.matrix[q], c.matrix[q])
    for row in (a.matrix[q], a.matrix[UNK]):
        assert np.all(np.abs(row) <= OOV_RANGE) and np.any(row != 0)


def test_oov_row_independent_of_vocab_order():
    v1 = Vocab(["x", "y"])
    v2 = Vocab(["x", "y", "z"])
    t1 = load_pretrained(io.StringIO(""), v1, 4, seed=9)
    t2 = load_pretrained(io.StringIO(""), v2, 4, seed=9)
    assert np.array_equal(t1.matrix, t2.matrix[:len(v1)])


def test_pad_row_is_zero():
    table = load_pretrained(io.StringIO("a 1 1\n"), Vocab(["a"]), 2, seed=0)
    assert not table.matrix[PAD].any()


def test_malformed_lines_skipped(caplog):
    vocab = Vocab(["a", "b"])
    table = load_pretrained(io.StringIO("a 1 2\nb 1 2 3\nc 4\n"), vocab, 2, seed=0)
    assert table.pretrained_mask.tolist() == [False, False, True, False]
    assert "skipped 2" in caplog.text


def test_every_line_wrong_dimension():
    with pytest.raises(EmbeddingConfigError):
        load_pretrained(io.StringIO("a 1 2 3\nb 4 5 6\n"), Vocab(["a"]), 2, seed=0)


def test_embed_sentence_lookup():
    m = np.zeros((6, 2))
    m[5] = [1, 2]
    table = EmbeddingTable(m, np.ones(6, bool))
    s = embed_sentence(_ex([5, PAD], 1), table)
    assert s.rows.tolist() == [[1, 2], [0, 0]] and s.true_length == 1
    with pytest.raises(IndexError):
        embed_sentence(_ex([9, PAD], 1), table)


def test_embed_pad_rows_zero():
    table = load_pretrained(io.StringIO(""), Vocab(list("abcd")), 3, seed=1)
    s = embed_sentence(_ex([2, 3, 4, PAD, PAD], 3), table)
    assert not s.rows[3:].any()
    assert np.array_equal(s.rows, embed_sentence(_ex([2, 3, 4, PAD, PAD], 3), table).rows)


def test_aspect_vector_mean():
    m = np.array([[0, 0], [9, 9], [3, 4], [1, 1], [3, 3]], dtype=float)
    table = EmbeddingTable(m, np.ones(5, bool))
    assert aspect_vector(_ex([2], 1, aspect=[2]), table).tolist() == [3, 4]
    assert aspect_vector(_ex([2], 1, aspect=[3, 4]), table).tolist() == [2, 2]
    assert aspect_vector(_ex([2], 1, aspect=[2, 2, 2]), table).tolist() == [3, 4]
    with pytest.raises(ValueError):
        aspect_vector(_ex([2], 1, aspect=[]), table)


@given(st.lists(st.integers(1, 7), min_size=1, max_size=6), st.floats(0.1, 10), st.randoms())
def test_aspect_vector_permutation_and_scaling(ids, alpha, rnd):
    rng = np.random.default_rng(len(ids))
    m = rng.normal(size=(8, 3))
    table = EmbeddingTable(m, np.ones(8, bool))
    base = aspect_vector(_ex([1], 1, aspect=ids), table)
    shuffled = list(ids)
    rnd.shuffle(shuffled)
    assert np.allclose(aspect_vector(_ex([1], 1, aspect=shuffled), table), base)
    scaled = EmbeddingTable(alpha * m, table.pretrained_mask)
    assert np.allclose(aspect_vector(_ex([1], 1, aspect=ids), scaled), alpha * base)
