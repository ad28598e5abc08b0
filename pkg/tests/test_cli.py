import csv
import subprocess
import sys

import numpy as np
import pytest

from nscodec.audio_io import Signal, read_wav, write_wav
from nscodec.cli import main
from nscodec.coder import header_size
from nscodec.model import checkpoint_load
from nscodec.synth import make_corpus

TRAIN_ARGS = ["--target-bps", "9000", "--channels", "4", "--blocks", "1", "--epochs-stage1", "1",
              "--epochs-stage2", "1", "--batch-size", "32", "--split", "8,2,2", "--no-plot"]


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus"
    make_corpus(corpus, count=12, seconds=1.0, seed=5)
    model = root / "m.nscm"
    assert main(["train", "--corpus", str(corpus), "--out", str(model), *TRAIN_ARGS]) == 0
    return root, corpus, model


def test_train_outputs(trained):
    root, _, model = trained
    m = checkpoint_load(model)
    assert m.target_bps == 9000.0
    assert sorted(m.info["split"]) == ["test", "train", "validation"]
    rows = list(csv.DictReader(open(root / "m.nscm.log.csv")))
    assert [r["stage"] for r in rows] == ["1", "2"]


def test_encode_decode(trained, capsys):
    root, corpus, model = trained
    wav = corpus / "utt_000.wav"
    nsc, out = root / "a.nsc", root / "a.wav"
    assert main(["encode", str(model), str(wav), str(nsc)]) == 0
    assert "kbps" in capsys.readouterr().out
    first = nsc.read_bytes()
    assert main(["encode", str(model), str(wav), str(nsc)]) == 0
    assert nsc.read_bytes() == first
    assert main(["decode", str(model), str(nsc), str(out)]) == 0
    assert len(read_wav(out)) == len(read_wav(wav))


def test_decode_corrupt_leaves_no_file(trained, capsys):
    root, corpus, model = trained
    nsc = root / "b.nsc"
    main(["encode", str(model), str(corpus / "utt_001.wav"), str(nsc)])
    data = bytearray(nsc.read_bytes())
    data[header_size() + 2] ^= 0xFF
    nsc.write_bytes(bytes(data))
    out = root / "b.wav"
    assert main(["decode", str(model), str(nsc), str(out)]) == 1
    err = capsys.readouterr().err.strip()
    assert "CorruptPayload" in err and len(err.splitlines()) == 1
    assert not out.exists() and not (root / "b.wav.tmp").exists()


def test_eval_report(trained, capsys):
    root, corpus, model = trained
    report = root / "ev.csv"
    assert main(["eval", str(model), "--corpus", str(corpus), "--out", str(report)]) == 0
    rows = list(csv.DictReader(open(report)))
    assert len(rows) == 12 + 1 and rows[-1]["file"] == "MEAN"
    assert (root / "ev.png").stat().st_size > 0
    capsys.readouterr()
    assert main(["eval", str(model), "--corpus", str(corpus), "--files", "validation"]) == 0
    table = capsys.readouterr().out
    assert table.count(".wav") == 2


def test_eval_bypass(trained, capsys):
    _, corpus, model = trained
    assert main(["eval", str(model), "--corpus", str(corpus), "--bypass", "--files", "test"]) == 0
    mean = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("MEAN")][0]
    assert mean.split()[1:3] == ["99.00", "0.0000"]


def test_eval_survives_bad_file(trained, capsys):
    root, corpus, model = trained
    mixed = root / "mixed"
    mixed.mkdir()
    (mixed / "good.wav").write_bytes((corpus / "utt_002.wav").read_bytes())
    (mixed / "bad.wav").write_bytes(b"RIFF nonsense")
    assert main(["eval", str(model), "--corpus", str(mixed)]) == 0
    captured = capsys.readouterr()
    assert "good.wav" in captured.out and "bad.wav" in captured.err


def test_bench(trained, capsys):
    _, _, model = trained
    assert main(["bench", str(model), "--iterations", "3"]) == 0
    out = capsys.readouterr().out
    assert "combined" in out and "channels 4" in out


def test_missing_corpus_exit_code(tmp_path):
    missing = tmp_path / "nowhere"
    proc = subprocess.run([sys.executable, "-m", "nscodec", "train", "--corpus", str(missing),
                           "--target-bps", "9000", "--out", str(tmp_path / "m.nscm")],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert str(missing) in proc.stderr and len(proc.stderr.strip().splitlines()) == 1


def test_bad_model_file(tmp_path, capsys):
    bogus = tmp_path / "x.nscm"
    bogus.write_bytes(b"garbage!")
    wav = tmp_path / "w.wav"
    write_wav(wav, Signal(np.zeros(100)))
    assert main(["encode", str(bogus), str(wav), str(tmp_path / "o.nsc")]) == 1
    assert "BadMagic" in capsys.readouterr().err


def test_bad_arguments(tmp_path, trained):
    _, corpus, _ = trained
    assert main(["train", "--corpus", str(corpus), "--out", str(tmp_path / "m"), "--target-bps", "9000",
                 "--split", "1,2"]) == 2
    assert main(["train", "--corpus", str(corpus), "--out", str(tmp_path / "m"), "--target-bps", "-5"]) == 2
