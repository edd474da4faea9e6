import csv
import io

import numpy as np
import pytest

from acnn import archive
from acnn.archive import ArchiveError, ModelArchive
from acnn.cli import main, run_gradcheck
from acnn.convnet import init_params
from acnn.data_ingest import build_corpus, serialize_dataset
from acnn.embeddings import load_pretrained

from conftest import synthetic_instances, vectors_text

SMALL = ["--epochs", "2", "--filters-per-width", "4", "--dim", "16", "--filter-widths", "2,3"]


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    instances, words = synthetic_instances(120, seed=3)
    (root / "train.raw").write_text(serialize_dataset(instances[:90]))
    (root / "test.raw").write_text(serialize_dataset(instances[90:]))
    (root / "vec.txt").write_text(vectors_text(words[:250], 16, seed=1))
    return root


def _train(files, out, *extra):
    return main(["train", "--data-train", str(files / "train.raw"),
                 "--data-test", str(files / "test.raw"), "--vectors", str(files / "vec.txt"),
                 "--out", str(out), *SMALL, *extra])


@pytest.fixture(scope="module")
def trained(files, tmp_path_factory):
    out = tmp_path_factory.mktemp("model") / "m.acnn"
    assert _train(files, out, "--seed", "7") == 0
    return out


def _archive(seed=0, d=6, vocab_words=("alpha", "beta", "gamma")):
    instances, words = synthetic_instances(10, seed=seed)
    corpus = build_corpus(instances)
    table = load_pretrained(io.StringIO(vectors_text(words[:50], d)), corpus.vocab, d, seed)
    params = init_params((2, 3), 3, 2 * d, np.random.default_rng(seed), maxlen=corpus.maxlen)
    params.softmax_b = np.array([0.1, -0.2, 0.3])
    return ModelArchive("atten1", corpus.maxlen, corpus.vocab, table, params)


def test_archive_byte_round_trip():
    arc = _archive()
    data = archive.dumps(arc)
    back = archive.loads(data)
    assert archive.dumps(back) == data
    assert back.vocab == arc.vocab and back.maxlen == arc.maxlen and back.variant == "atten1"
    assert np.array_equal(back.table.matrix, arc.table.matrix)
    for a, b in zip(back.params.arrays(), arc.params.arrays()):
        assert np.array_equal(a, b)


def test_archive_rejects_damage():
    data = archive.dumps(_archive())
    with pytest.raises(ArchiveError, match="truncated"):
        archive.loads(data[:-8])
    flipped = bytearray(data)
    flipped[-3] ^= 0xFF
    with pytest.raises(ArchiveError, match="checksum"):
        archive.loads(bytes(flipped))
    with pytest.raises(ArchiveError, match="version"):
        archive.loads(data.replace(b"format_version=1", b"format_version=9", 1))
    with pytest.raises(ArchiveError):
        archive.loads(b"PK\x03\x04 zip")


def test_train_is_deterministic(files, trained, tmp_path):
    again = tmp_path / "again.acnn"
    assert _train(files, again, "--seed", "7") == 0
    assert again.read_bytes() == trained.read_bytes()
    other = tmp_path / "other.acnn"
    assert _train(files, other, "--seed", "8") == 0
    assert other.read_bytes() != trained.read_bytes()


def test_seed_environment_fallback(files, trained, tmp_path, monkeypatch):
    monkeypatch.setenv("ACNN_SEED", "7")
    out = tmp_path / "env.acnn"
    assert _train(files, out) == 0
    assert out.read_bytes() == trained.read_bytes()


def test_variants_share_shapes(files, trained, tmp_path):
    out = tmp_path / "a1.acnn"
    assert _train(files, out, "--seed", "7", "--variant", "atten1") == 0
    a1, a2 = archive.load(out), archive.load(trained)
    assert (a1.variant, a2.variant) == ("atten1", "atten2")
    assert [a.shape for a in a1.params.arrays()] == [a.shape for a in a2.params.arrays()]
    assert a1.params.input_dim == a2.params.input_dim == 32


def test_history_report(trained):
    with open(str(trained) + ".history.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["epoch"]) for r in rows] == [1, 2]
    assert all(0 <= float(r["test_accuracy"]) <= 1 for r in rows)


def test_eval_reproduces_final_history(files, trained, capsys):
    assert main(["eval", "--model", str(trained), "--data-test", str(files / "test.raw")]) == 0
    out = capsys.readouterr().out
    kv = dict(line.split("=", 1) for line in out.splitlines() if "=" in line)
    with open(str(trained) + ".history.csv") as fh:
        last = list(csv.DictReader(fh))[-1]
    assert kv["accuracy"] == last["test_accuracy"]
    assert kv["macro_f1"] == last["test_macro_f1"]
    assert out.splitlines()[0] == f"accuracy: {float(last['test_accuracy']):.4f}"


def test_eval_truncated_archive_exits_2(files, trained, tmp_path, capsys):
    bad = tmp_path / "bad.acnn"
    bad.write_bytes(trained.read_bytes()[:-100])
    assert main(["eval", "--model", str(bad), "--data-test", str(files / "test.raw")]) == 2
    assert "truncated" in capsys.readouterr().err


def test_missing_and_malformed_data_exit_2(files, tmp_path):
    assert _train(files, tmp_path / "x.acnn", "--data-train", str(tmp_path / "nope.raw")) == 2
    broken = tmp_path / "broken.raw"
    broken.write_text("no placeholder\naspect\n1\n")
    assert main(["eval", "--model", str(tmp_path / "x.acnn"),
                 "--data-test", str(broken)]) == 2


def test_predict_distribution(trained, capsys):
    code = main(["predict", "--model", str(trained), "--aspect", "picture quality",
                 "--sentence", "the picture quality is amazing but the battery life is too short"])
    assert code == 0
    lines = capsys.readouterr().out.split()
    probs = dict(line.split("=") for line in lines[1:])
    assert set(probs) == {"positive", "neutral", "negative"}
    assert abs(sum(float(p) for p in probs.values()) - 1) <= 1e-5
    assert lines[0] == max(probs, key=lambda k: float(probs[k]))


def test_predict_empty_aspect_exits_2(trained, capsys):
    assert main(["predict", "--model", str(trained), "--aspect", "12345",
                 "--sentence", "great phone"]) == 2
    assert "empty" in capsys.readouterr().err


def test_gradcheck_cli(capsys):
    assert main(["gradcheck"]) == 0
    assert main(["gradcheck", "--seed", "1"]) == 0
    first = capsys.readouterr().out.splitlines()
    assert main(["gradcheck", "--seed", "1"]) == 0
    second = capsys.readouterr().out.splitlines()
    # the last line carries wall time, the error values must match exactly
    assert first[-3:-1] == second[:-1] and first[-1].split("(")[0] == second[-1].split("(")[0]


def test_gradcheck_corrupt_exits_3():
    assert main(["gradcheck", "--corrupt"]) == 3
    assert max(run_gradcheck(0, corrupt=True).values()) > 1e-4


def test_usage_errors_exit_1(files, tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--data-train", "x"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1
    assert _train(files, tmp_path / "x.acnn", "--keep-prob", "0") == 1


@pytest.mark.parametrize("command", ["train", "gradcheck"])
def test_help_lists_defaults(command, capsys):
    with pytest.raises(SystemExit) as exc:
        main([command, "--help"])
    assert exc.value.code == 0
    text = " ".join(capsys.readouterr().out.split())
    if command == "train":
        for default in ("(default: 2,3,4)", "(default: 200)", "(default: 64)",
                        "(default: 0.001)", "(default: 0.5)", "(default: 2.6)",
                        "(default: atten2)", "(default: 30)"):
            assert default in text
    else:
        assert "(default: 8)" in text and "(default: 1e-05)" in text
