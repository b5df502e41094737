import numpy as np
import pytest

from fisherda import cli, gradcheck
from fisherda.cli import main
from fisherda.data import load_csv
from fisherda.losses import fisher_grads

SMALL = """\
# tiny adversarial run
transfer = adversarial
fisher = trace_difference
lambda0 = 0.01
lambda_b = 0.0
lambda1 = 0.1
n_per_domain = 80
max_batches = 40
eval_every = 20
seed = 2
"""


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(SMALL)
    return path


def test_gen_data_writes_pair(tmp_path, capsys):
    assert main(["gen-data", "--kind", "moons", "--out", str(tmp_path / "d"), "--n", "50"]) == 0
    src = load_csv(tmp_path / "d" / "source.csv", num_classes=2)
    tgt = load_csv(tmp_path / "d" / "target.csv", num_classes=2)
    assert src.x.shape == tgt.x.shape == (50, 2)
    assert "source.csv" in capsys.readouterr().out


def test_gen_data_blobs(tmp_path):
    assert main(["gen-data", "--kind", "blobs", "--out", str(tmp_path), "--n", "40",
                 "--classes", "4"]) == 0
    assert set(load_csv(tmp_path / "source.csv").labels.tolist()) == {0, 1, 2, 3}


def test_train_then_eval(tmp_path, cfg_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg_path), "--out", str(out)]) == 0
    for name in ("metrics.csv", "embeddings.csv", "config.echo", "model.snapshot"):
        assert (out / name).exists()
    assert main(["gen-data", "--kind", "moons", "--out", str(tmp_path / "d"), "--n", "30",
                 "--seed", "2"]) == 0
    capsys.readouterr()
    assert main(["eval", "--model", str(out / "model.snapshot"),
                 "--data", str(tmp_path / "d" / "target.csv")]) == 0
    acc = float(capsys.readouterr().out.split()[1])
    assert 0.0 <= acc <= 1.0


def test_train_is_byte_deterministic(tmp_path, cfg_path):
    for name in ("a", "b"):
        assert main(["train", "--config", str(cfg_path), "--out", str(tmp_path / name)]) == 0
    a = (tmp_path / "a" / "metrics.csv").read_bytes()
    assert a == (tmp_path / "b" / "metrics.csv").read_bytes()
    assert (tmp_path / "a" / "embeddings.csv").read_bytes() == \
        (tmp_path / "b" / "embeddings.csv").read_bytes()


def test_bad_config_exits_1(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("transfer = adversarial\nlambda0 = -1\n")
    assert main(["train", "--config", str(path), "--out", str(tmp_path / "o")]) == 1
    assert "error" in capsys.readouterr().err


def test_unknown_key_exits_1(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("learning_rate = 0.1\n")
    assert main(["train", "--config", str(path), "--out", str(tmp_path / "o")]) == 1


def test_usage_error_exits_1():
    assert main(["gen-data", "--kind", "spirals", "--out", "x"]) == 1
    assert main([]) == 1


def test_missing_file_exits_2(tmp_path):
    assert main(["eval", "--model", str(tmp_path / "nope"), "--data", str(tmp_path / "nope")]) == 2


def test_malformed_csv_exits_1(tmp_path, cfg_path):
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg_path), "--out", str(out)]) == 0
    bad = tmp_path / "bad.csv"
    bad.write_text("x0,x1,label\n0.1,0.2,0\n0.3,oops,1\n")
    assert main(["eval", "--model", str(out / "model.snapshot"), "--data", str(bad)]) == 1


def test_gradcheck_passes(capsys):
    assert main(["gradcheck"]) == 0
    out = capsys.readouterr().out
    for name in ("network_backward", "fisher_trace_ratio", "fisher_trace_difference", "mmd",
                 "coral", "entropy_reg", "composite"):
        assert name in out
    assert out.strip().endswith("PASS")


def test_gradcheck_flags_sign_error(monkeypatch, capsys):
    def flipped(h, labels, centers, form, printed=False):
        gh, gc = fisher_grads(h, labels, centers, form, printed)
        return gh, -gc

    cases = [(name, check) for name, check in gradcheck.default_cases()
             if not name.startswith("fisher")]
    cases.append(("fisher_trace_ratio", lambda r: gradcheck.check_fisher(
        r, gradcheck.FisherForm.trace_ratio(), 3, 4, 9, grads_fn=flipped)))
    monkeypatch.setattr(cli, "run_gradcheck",
                        lambda seed=0: gradcheck.run_gradcheck(seed, cases=cases))
    assert main(["gradcheck"]) == 3
    out = capsys.readouterr().out
    bad = [line.split()[0] for line in out.splitlines()[1:-1] if line.endswith("FAIL")]
    assert bad == ["fisher_trace_ratio"]
    assert out.strip().endswith("FAIL")


def test_printed_center_gradient_fails_check():
    err = gradcheck.check_fisher(gradcheck.SeededRng(0), gradcheck.FisherForm.trace_ratio(), 3, 4,
                                 9, grads_fn=lambda *a: fisher_grads(*a, printed=True))
    assert err > 1e-3
    assert np.isfinite(err)
