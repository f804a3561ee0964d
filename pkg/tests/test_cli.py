import csv

import pytest

from lrvq.cli import main
from lrvq.codec import deserialize
from lrvq.vq import load_codebook

PINNED_HASH = "6064c5e3"


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    assert main(["synth", "--out", str(root / "train"), "--count", "32", "--seed", "0"]) == 0
    assert main(["synth", "--out", str(root / "eval"), "--count", "2", "--seed", "10000"]) == 0
    args = ["train-codebook", "--corpus", str(root / "train"), "--patch-size", "8",
            "--rank", "2", "--iterations", "2", "--codebook-size", "256", "--seed", "0"]
    assert main(args + ["--out", str(root / "a.lrcb")]) == 0
    assert main(args + ["--out", str(root / "b.lrcb")]) == 0
    return root


def test_codebook_hash_pinned_and_rerun_identical(desk):
    cb = load_codebook(desk / "a.lrcb")
    assert (cb.size, cb.dimension) == (256, 8)
    assert f"{cb.content_hash:08x}" == PINNED_HASH
    assert (desk / "a.lrcb").read_bytes() == (desk / "b.lrcb").read_bytes()


def test_encode_decode_eval(desk, capsys):
    img = desk / "eval" / "synth_10000.pgm"
    s = desk / "x.lrvq"
    args = ["encode", str(img), "--codebook", str(desk / "a.lrcb"), "--patch-size", "8",
            "--rank", "2", "--iterations", "2", "--out", str(s)]
    assert main(args) == 0
    first = s.read_bytes()
    assert main(args) == 0
    assert s.read_bytes() == first and len(first) == 795
    assert deserialize(first).config.loop_mode == "closed"
    out = desk / "x.pgm"
    assert main(["decode", str(s), "--codebook", str(desk / "a.lrcb"), "--out", str(out)]) == 0
    decoded = out.read_bytes()
    assert main(["decode", str(s), "--codebook", str(desk / "a.lrcb"), "--out", str(out)]) == 0
    assert out.read_bytes() == decoded
    capsys.readouterr()
    assert main(["eval", str(img), str(s), "--codebook", str(desk / "a.lrcb"), "--header"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    rows = list(csv.DictReader(lines))
    assert len(rows) == 1
    assert float(rows[0]["bpp"]) == 1.552734375
    assert int(rows[0]["decoderMacs"]) == 18432
    assert float(rows[0]["mse"]) < 1e-3


def test_consistency_errors_exit_3(desk, tmp_path):
    img = sorted((desk / "eval").iterdir())[0]
    s = tmp_path / "x.lrvq"
    main(["encode", str(img), "--codebook", str(desk / "a.lrcb"), "--patch-size", "8",
          "--rank", "2", "--iterations", "2", "--out", str(s)])
    assert main(["synth", "--out", str(tmp_path / "big"), "--count", "1", "--size", "32"]) == 0
    small = sorted((tmp_path / "big").iterdir())[0]
    assert main(["eval", str(small), str(s), "--codebook", str(desk / "a.lrcb")]) == 3
    other = tmp_path / "other.lrcb"
    assert main(["train-codebook", "--corpus", str(desk / "eval"), "--patch-size", "8",
                 "--rank", "2", "--iterations", "2", "--codebook-size", "256", "--seed", "1",
                 "--out", str(other)]) == 0
    assert main(["decode", str(s), "--codebook", str(other), "--out", str(tmp_path / "y.pgm")]) == 3


def test_input_errors_exit_2(desk, tmp_path):
    img = sorted((desk / "eval").iterdir())[0]
    assert main(["encode", str(img), "--codebook", str(desk / "a.lrcb"), "--patch-size", "8",
                 "--rank", "8", "--iterations", "1", "--bypass", "--out", str(tmp_path / "b")]) == 2
    assert main(["train-codebook", "--corpus", str(desk / "eval"), "--patch-size", "8",
                 "--rank", "1", "--iterations", "1", "--codebook-size", "60000",
                 "--out", str(tmp_path / "k.lrcb")]) == 2
    (tmp_path / "empty").mkdir()
    assert main(["train-codebook", "--corpus", str(tmp_path / "empty"), "--patch-size", "8",
                 "--rank", "1", "--iterations", "1", "--codebook-size", "4",
                 "--out", str(tmp_path / "k.lrcb")]) == 2
    bad = tmp_path / "bad.lrvq"
    bad.write_bytes(b"LRVQ" + b"\0" * 5)
    assert main(["decode", str(bad), "--codebook", str(desk / "a.lrcb"),
                 "--out", str(tmp_path / "z.pgm")]) == 2
    assert main(["decode", str(tmp_path / "missing"), "--codebook", str(desk / "a.lrcb"),
                 "--out", str(tmp_path / "z.pgm")]) == 2


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def sweep(desk, out, ranks):
    return main(["sweep", "--corpus", str(desk / "eval"), "--eval", str(desk / "eval"),
                 "--patch-size", "8", "--rank", ranks, "--iterations", "1",
                 "--codebook-size", "16", "--csv", str(out)])


def test_sweep_rows(desk, tmp_path, monkeypatch):
    monkeypatch.setenv("LRCODEC_THREADS", "2")
    assert sweep(desk, tmp_path / "one.csv", "1") == 0
    rows = read_rows(tmp_path / "one.csv")
    data = [r for r in rows if not r["image"].startswith("reference:")]
    refs = [r for r in rows if r["image"].startswith("reference:")]
    assert len(data) == 2 and len(refs) == 1
    assert refs[0]["image"] == "reference:64x64x1"
    assert int(refs[0]["decoderMacs"]) == 163381248
    assert sweep(desk, tmp_path / "two.csv", "1,2") == 0
    rows2 = read_rows(tmp_path / "two.csv")
    assert len([r for r in rows2 if not r["image"].startswith("reference:")]) == 4
    keys = [(int(r["rank"]), r["image"]) for r in rows2 if not r["image"].startswith("reference:")]
    assert keys == sorted(keys)
    monkeypatch.setenv("LRCODEC_THREADS", "1")
    assert sweep(desk, tmp_path / "two_serial.csv", "1,2") == 0
    assert (tmp_path / "two.csv").read_bytes() == (tmp_path / "two_serial.csv").read_bytes()
