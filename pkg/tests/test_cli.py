import numpy as np
import pytest

from conftest import noise_audio
from dsn.cli import main
from dsn.dsn_model import build_model, save_weights
from dsn.signal_frontend import write_wav


@pytest.fixture()
def wav_dir(tmp_path):
    d = tmp_path / "wavs"
    d.mkdir()
    # created out of order on purpose; outputs must be input-sorted
    for i, stem in enumerate(("utt_b", "utt_a", "utt_c")):
        write_wav(str(d / f"{stem}.wav"), noise_audio(i, seconds=0.4))
    return d


def _run_enhance(wav_dir, out, *extra):
    argv = ["enhance", str(wav_dir), "--out", str(out), *extra]
    assert main(argv) == 0
    return out


def test_enhance_directory_outputs(wav_dir, tmp_path):
    out = _run_enhance(wav_dir, tmp_path / "out")
    for stem in ("utt_a", "utt_b", "utt_c"):
        assert (out / f"{stem}.enhanced.wav").exists()
        trace = (out / f"{stem}.gates.csv").read_text().splitlines()
        assert trace[0] == "frame,gate"
        assert trace[1].startswith("0,")
    summary = (out / "gates.csv").read_text().splitlines()
    assert summary[0] == "utterance_id,n_frames,activation_ratio"
    assert [row.split(",")[0] for row in summary[1:]] == \
        ["utt_a", "utt_b", "utt_c"]


def test_enhance_single_file(wav_dir, tmp_path):
    out = tmp_path / "single"
    assert main(["enhance", str(wav_dir / "utt_a.wav"),
                 "--out", str(out)]) == 0
    assert (out / "utt_a.enhanced.wav").exists()
    assert len((out / "gates.csv").read_text().splitlines()) == 2


def test_gate_override_endpoints_differ(wav_dir, tmp_path):
    skip = _run_enhance(wav_dir, tmp_path / "skip", "--gate-override", "0")
    full = _run_enhance(wav_dir, tmp_path / "full", "--gate-override", "1")
    for path, ratio in ((skip, "0.000000"), (full, "1.000000")):
        rows = (path / "gates.csv").read_text().splitlines()[1:]
        assert all(row.endswith(ratio) for row in rows)
    a = (skip / "utt_a.enhanced.wav").read_bytes()
    b = (full / "utt_a.enhanced.wav").read_bytes()
    assert a != b


def test_enhance_reruns_are_byte_identical(wav_dir, tmp_path):
    one = _run_enhance(wav_dir, tmp_path / "one")
    two = _run_enhance(wav_dir, tmp_path / "two")
    for name in ("gates.csv", "utt_b.gates.csv", "utt_b.enhanced.wav"):
        assert (one / name).read_bytes() == (two / name).read_bytes()


def test_thread_pool_matches_serial(wav_dir, tmp_path, monkeypatch):
    serial = _run_enhance(wav_dir, tmp_path / "serial")
    monkeypatch.setenv("DSN_THREADS", "2")
    pooled = _run_enhance(wav_dir, tmp_path / "pooled")
    for name in ("gates.csv", "utt_a.enhanced.wav", "utt_c.enhanced.wav"):
        assert (serial / name).read_bytes() == (pooled / name).read_bytes()


def test_bad_thread_env_is_a_data_error(wav_dir, tmp_path, monkeypatch):
    for value in ("zero", "0"):
        monkeypatch.setenv("DSN_THREADS", value)
        assert main(["enhance", str(wav_dir),
                     "--out", str(tmp_path / "x")]) == 2


def test_masked_mode_runs(wav_dir, tmp_path):
    out = _run_enhance(wav_dir, tmp_path / "m", "--mode", "masked")
    assert (out / "utt_a.enhanced.wav").exists()


def test_weights_flag_reproduces_donor_model(wav_dir, tmp_path, config):
    weights = tmp_path / "donor.npz"
    save_weights(build_model(config, seed=7), str(weights))
    donor = _run_enhance(wav_dir, tmp_path / "donor", "--seed", "7")
    loaded = _run_enhance(wav_dir, tmp_path / "loaded",
                          "--weights", str(weights), "--seed", "0")
    assert (donor / "utt_a.enhanced.wav").read_bytes() == \
        (loaded / "utt_a.enhanced.wav").read_bytes()


def _sidecar(path, scores):
    path.write_text("".join(f"{utt}\t{val}\n" for utt, val in scores))
    return path


def test_analyze_joins_scores(wav_dir, tmp_path, capsys):
    out = _run_enhance(wav_dir, tmp_path / "out")
    sidecar = _sidecar(tmp_path / "scores.tsv",
                       [("utt_a", 3.0), ("utt_b", 3.0), ("utt_c", 4.5)])
    assert main(["analyze", str(out / "gates.csv"),
                 "--metrics", str(sidecar), "--out", str(out)]) == 0
    rows = (out / "activation.csv").read_text().splitlines()
    assert rows[0] == "utterance_id,key,ratio"
    assert len(rows) == 4
    grouped = (out / "activation_grouped.csv").read_text().splitlines()
    assert grouped[0] == "key,count,mean_ratio,std_ratio"
    assert grouped[1].startswith("3,2,")
    assert "gate objective" in capsys.readouterr().out


def test_analyze_missing_utterances(wav_dir, tmp_path, capsys):
    out = _run_enhance(wav_dir, tmp_path / "out")
    sidecar = _sidecar(tmp_path / "scores.tsv", [("utt_b", 3.0)])
    assert main(["analyze", str(out / "gates.csv"),
                 "--metrics", str(sidecar)]) == 2
    err = capsys.readouterr().err
    assert "utt_a, utt_c" in err


def test_analyze_malformed_sidecar(wav_dir, tmp_path):
    out = _run_enhance(wav_dir, tmp_path / "out")
    cases = ("utt_a 3.0\n", "utt_a\t3.0\nutt_a\t4.0\n", "utt_a\tbad\n", "")
    for text in cases:
        sidecar = tmp_path / "scores.tsv"
        sidecar.write_text(text)
        assert main(["analyze", str(out / "gates.csv"),
                     "--metrics", str(sidecar)]) == 2, repr(text)


def test_analyze_rejects_foreign_csv(tmp_path):
    bogus = tmp_path / "gates.csv"
    bogus.write_text("a,b\n1,2\n")
    sidecar = _sidecar(tmp_path / "scores.tsv", [("x", 3.0)])
    assert main(["analyze", str(bogus), "--metrics", str(sidecar)]) == 2


def test_maccount_writes_table(tmp_path, capsys):
    assert main(["maccount", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "macs.csv").read_text().splitlines()
    assert rows[0] == "block,static,dynamic,delta,pct"
    assert "conv3,202752,202752,12.6720,50.00" in rows
    assert "conv3" in capsys.readouterr().out


def test_gradcheck_passes(capsys):
    assert main(["gradcheck"]) == 0
    assert "gradcheck ok" in capsys.readouterr().out


def test_selftest_passes(capsys):
    assert main(["selftest"]) == 0
    assert "selftest ok" in capsys.readouterr().out


def test_usage_errors_exit_one(tmp_path):
    for argv in ([], ["frobnicate"],
                 ["enhance", str(tmp_path), "--mode", "fast"],
                 ["analyze", "gates.csv"]):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 1, argv


def test_missing_input_exits_two(tmp_path, capsys):
    assert main(["enhance", str(tmp_path / "nope.wav")]) == 2
    assert "nope.wav" in capsys.readouterr().err


def test_empty_directory_exits_two(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["enhance", str(empty)]) == 2
