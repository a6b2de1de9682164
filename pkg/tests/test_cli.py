import subprocess
import sys

import numpy as np
import pytest

from gradfit.cli import ExperimentConfig, compare, main, parse_box
from gradfit.errors import GradfitError, ParameterError


def run(*argv):
    return main(list(argv))


def data_rows(path):
    return np.loadtxt(path, delimiter=",", comments="#", ndmin=2)


def test_fit_then_eval_round_trip(tmp_path):
    pts = tmp_path / "pts.csv"
    np.savetxt(pts, np.random.default_rng(0).uniform(-2, 2, (25, 2)), delimiter=",")
    surrogate, pred_fit, pred_eval = tmp_path / "s.txt", tmp_path / "p1.csv", tmp_path / "p2.csv"
    assert run("fit", "--function", "model", "--box=-2:2,-2:2", "--q", "6", "--m", "20", "--N", "500",
               "--seed", "3", "--out", str(surrogate), "--predict", str(pts), "--predictions", str(pred_fit)) == 0
    assert run("eval", "--surrogate", str(surrogate), "--points", str(pts), "--out", str(pred_eval)) == 0
    a, b = data_rows(pred_fit), data_rows(pred_eval)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
    assert surrogate.read_text().startswith("# gradfit fit --function model")


def test_fit_from_samples_file(tmp_path):
    X = np.random.default_rng(1).uniform(-1, 1, (10, 2))
    data = np.column_stack([X, 1 + X[:, 0] - 2 * X[:, 1], np.ones(10), -2 * np.ones(10)])
    path = tmp_path / "samples.csv"
    np.savetxt(path, data, delimiter=",", header="x_1,x_2,f,df_1,df_2")
    out = tmp_path / "s.txt"
    assert run("fit", "--samples", str(path), "--family", "monomial", "--q", "2", "--out", str(out)) == 0
    from gradfit.gels import Surrogate

    s = Surrogate.load(out)
    assert s(np.array([0.5, 0.25])) == pytest.approx(1.0, abs=1e-10)


def test_maxvol_sample_is_subset_of_uniform(tmp_path):
    uni, mv = tmp_path / "u.csv", tmp_path / "m.csv"
    assert run("sample", "--box=-2:2,-2:2", "--sampler", "uniform", "--N", "400", "--seed", "5", "--out", str(uni)) == 0
    assert run("sample", "--box=-2:2,-2:2", "--sampler", "maxvol", "--N", "400", "--m", "15", "--q", "6",
               "--seed", "5", "--out", str(mv)) == 0
    U, M = data_rows(uni), data_rows(mv)
    assert M.shape == (15, 2)
    rows = {tuple(r) for r in U}
    assert all(tuple(r) in rows for r in M)
    assert uni.read_text().splitlines()[0].startswith("# gradfit sample")


def test_dc_fixture(tmp_path):
    out = tmp_path / "dc.csv"
    assert run("dc", "--fixture", "grid2x2", "--out", str(out)) == 0
    data = data_rows(out)
    np.testing.assert_allclose(data[:, 0], [1, 2, 3])
    np.testing.assert_allclose(data[:, 1], [1.0, 0.5, 0.5], atol=1e-14)
    np.testing.assert_allclose(data[:, 2], [-0.25, 0.125, -0.125], atol=1e-14)


def test_dae_writes_trajectory(tmp_path):
    net = tmp_path / "rc.net"
    net.write_text("R 1 2 1.0 1\nC 1 2 1.0\nI 1 1.0\nGROUND 2\n")
    out = tmp_path / "tr.csv"
    assert run("dae", "--netlist", str(net), "--t-end", "10", "--h", "1e-3", "--out", str(out)) == 0
    data = data_rows(out)
    t = data[:, 0]
    np.testing.assert_allclose(data[:, 1], 1 - np.exp(-t), atol=1e-2)
    np.testing.assert_allclose(data[:, 2], -1 + (1 + t) * np.exp(-t), atol=1e-2)


def test_field_and_stats(tmp_path, capsys):
    field = tmp_path / "f.csv"
    assert run("field", "--grid", "5", "--sigma", "0.5", "--terms", "10", "--resolution", "5", "--seed", "1", "--out", str(field)) == 0
    assert data_rows(field).shape == (25, 4)

    s, cdf = tmp_path / "s.txt", tmp_path / "cdf.csv"
    assert run("fit", "--function", "2+3*x1+x1*x2", "--family", "hermite", "--q", "2",
               "--dist", "normal:0:1,normal:0:1", "--m", "8", "--N", "200", "--out", str(s)) == 0
    capsys.readouterr()
    assert run("stats", "--surrogate", str(s), "--n", "20000", "--seed", "2", "--out", str(cdf)) == 0
    lines = dict(line.split() for line in capsys.readouterr().out.splitlines())
    assert float(lines["pce_mean"]) == pytest.approx(2.0, abs=1e-8)
    assert float(lines["pce_std"]) == pytest.approx(10**0.5, abs=1e-8)
    assert data_rows(cdf).shape == (20000, 2)


def test_compare_deterministic_and_with_derivatives_better(tmp_path, capsys):
    argv = ["compare", "--m", "20", "--N", "600", "--q", "9", "--sizes", "10,28,45", "--test-points", "2000"]
    assert run(*argv) == 0
    first = capsys.readouterr().out
    assert run(*argv) == 0
    assert capsys.readouterr().out == first
    path = tmp_path / "a.csv"
    path.write_text(first)
    rows = data_rows(path)
    assert rows[:, 0].tolist() == [10, 28, 45]
    assert rows[-1, 1] <= rows[-1, 2]
    # without derivatives the rank cannot exceed the number of points
    assert np.all(rows[:, 4] <= 20)


def test_compare_config_file(tmp_path):
    cfg = tmp_path / "exp.ini"
    cfg.write_text("m = 12\nN = 300\nq = 5\nsizes = 6,15\ntest_points = 500\n")
    out = tmp_path / "c.csv"
    assert run("compare", "--config", str(cfg), "--out", str(out)) == 0
    assert data_rows(out).shape == (2, 5)
    cfg.write_text("bogus = 1\n")
    assert run("compare", "--config", str(cfg)) == 2


def test_exit_codes(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        run("fit", "--no-such-flag")
    assert info.value.code == 2
    assert run("eval", "--surrogate", str(tmp_path / "missing.txt"), "--points", "x") == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("not a surrogate\n")
    assert run("eval", "--surrogate", str(bad), "--points", str(bad)) == 2
    net = tmp_path / "single.net"
    net.write_text("R 1 2 1.0 1\nI 1 1.0\nGROUND 2\n")
    capsys.readouterr()
    assert run("dc", "--netlist", str(net), "--xi=-1") == 3
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and "numerical" in err[-1]
    assert run("sample", "--box=0:1", "--sampler", "maxvol", "--N", "5", "--m", "10", "--seed", "0") == 2


def test_parse_box_and_config_validation():
    box = parse_box("-2:2,0:1")
    assert box.dim == 2
    with pytest.raises(ParameterError):
        parse_box("1:0")
    with pytest.raises(ParameterError):
        compare(ExperimentConfig(m=100, N=50))
    with pytest.raises(GradfitError):
        compare(ExperimentConfig(function="nonexistent_builtin"))


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "gradfit", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "compare" in proc.stdout
