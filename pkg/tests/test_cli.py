import subprocess
import sys

import numpy as np
import pytest

from warpfit.cli import main
from warpfit.seqcore import write_sequence


@pytest.fixture
def pair(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_sequence([[0.0], [1.0], [2.0]], a)
    write_sequence([[0.0], [2.0]], b)
    return str(a), str(b)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestDist:
    def test_identical_zero(self, capsys, pair):
        assert run(capsys, "dist", pair[0], pair[0]) == (0, "0.00000000\n", "")

    def test_dtw(self, capsys, pair):
        assert run(capsys, "dist", *pair)[1] == "1.00000000\n"

    def test_softdtw_example(self, capsys, pair):
        code, out, _ = run(capsys, "dist", *pair, "--metric", "softdtw", "--gamma", "1")
        assert code == 0 and out == "0.0297704733\n"

    def test_softdtw_zero_gamma(self, capsys, pair):
        code, out, err = run(capsys, "dist", *pair, "--metric", "softdtw", "--gamma", "0")
        assert code == 1 and out == "" and "--metric dtw" in err

    def test_parse_error_names_file_and_line(self, capsys, pair, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("1,2\n3\n")
        code, out, err = run(capsys, "dist", str(bad), pair[0])
        assert code == 2 and out == "" and f"{bad}:2" in err

    def test_missing_file(self, capsys, pair, tmp_path):
        assert run(capsys, "dist", str(tmp_path / "nope.csv"), pair[0])[0] == 2

    def test_dim_mismatch(self, capsys, pair, tmp_path):
        c = tmp_path / "c.csv"
        write_sequence(np.zeros((2, 2)), c)
        assert run(capsys, "dist", pair[0], str(c))[0] == 1


def test_unknown_flag_is_usage_error(capsys, pair):
    with pytest.raises(SystemExit) as exc:
        main(["dist", *pair, "--bogus"])
    assert exc.value.code == 1


def test_align(capsys, pair):
    assert run(capsys, "align", *pair) == (0, "1,1\n2,2\n3,2\n", "")


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    code = main(["gen", "--config", "rec", "--seed", "1", "--out", str(out), "--utterances", "3",
                 "--val", "2", "--test", "2", "--frames", "20"])
    assert code == 0
    return out


def test_gen_train_eval(capsys, corpus, tmp_path):
    capsys.readouterr()
    manifest = str(corpus / "manifest.json")
    code, out, _ = run(capsys, "train", "--manifest", manifest, "--out", str(tmp_path), "--epochs", "2",
                       "--gamma", "0.5")
    assert code == 0 and out.splitlines()[-1].startswith("best_epoch=")
    assert (tmp_path / "train_report.txt").read_text() == out
    code, out, _ = run(capsys, "eval", "--manifest", manifest, "--params", str(tmp_path / "params.txt"),
                       "--dump-pred", str(tmp_path / "pred"))
    assert code == 0 and out.startswith("mse_score=")
    assert len(list((tmp_path / "pred").glob("*.csv"))) == 2


def test_train_config_file_with_override(capsys, corpus, tmp_path):
    cfg = tmp_path / "train.cfg"
    cfg.write_text("epochs=3\nloss=l2\n")
    code, out, _ = run(capsys, "train", "--manifest", str(corpus), "--out", str(tmp_path),
                       "--train-config", str(cfg), "--epochs", "1")
    assert code == 0 and out.count("epoch=") == 2  # one epoch line plus best_epoch


def test_eval_bad_params(capsys, corpus, tmp_path):
    bad = tmp_path / "params.txt"
    bad.write_text("not params\n")
    assert run(capsys, "eval", "--manifest", str(corpus), "--params", str(bad))[0] == 2


def _repro(out, config="rec", loss="softdtw"):
    return main(["repro", "--config", config, "--loss", loss, "--seed", "3", "--out", str(out),
                 "--utterances", "2", "--epochs", "2"])


def test_repro_deterministic_and_summary(capsys, tmp_path):
    assert _repro(tmp_path / "one") == 0
    assert _repro(tmp_path / "two") == 0
    assert _repro(tmp_path / "one", "rec+tts13") == 0
    for name in ("metrics.txt", "train_report.txt", "params.txt"):
        a = (tmp_path / "one" / "rec_softdtw_seed3" / name).read_bytes()
        assert a == (tmp_path / "two" / "rec_softdtw_seed3" / name).read_bytes()
    summary = (tmp_path / "one" / "summary.txt").read_text().splitlines()
    assert summary[0] == "run mse_score dtw_score"
    assert {line.split()[0] for line in summary[1:3]} == {"rec_softdtw_seed3", "rec+tts13_softdtw_seed3"}
    assert summary[3].startswith("best_mse_score=") and summary[4].startswith("best_dtw_score=")


def test_repro_l1_on_warped_data_fails(capsys, tmp_path):
    assert _repro(tmp_path, "tts13", "l1") == 1
    assert "softdtw" in capsys.readouterr().err


def test_module_entry_point(pair):
    res = subprocess.run([sys.executable, "-m", "warpfit", "dist", *pair], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout == "1.00000000\n"
