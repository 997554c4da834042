import json
import math
import subprocess
import sys

import numpy as np
import pytest

from hida_matern.cli import main
from hida_matern.datasets import mauna_loa_kernel, mauna_loa_synthetic
from hida_matern.io import ExperimentConfig, read_matrix_dump, read_table_csv, write_table_csv
from hida_matern.kernels import HidaMaternSpec, MixtureSpec, mixture_from_json


def _write_config(path, **kw):
    path.write_text(ExperimentConfig(**kw).to_json())
    return str(path)


@pytest.fixture
def mauna(tmp_path):
    d = mauna_loa_synthetic(seed=0)
    data = tmp_path / "train.csv"
    write_table_csv(data, ["t", "y"], [d.t_train, d.y_train])
    cfg = _write_config(tmp_path / "cfg.json", kernel=mauna_loa_kernel(), obs_noise=0.01,
                        data=str(data), query={"times": d.t_test.tolist()})
    return cfg, d


def test_fit_no_opt_reports_finite_likelihood(mauna, tmp_path, capsys):
    cfg, _ = mauna
    assert main(["fit", "--config", cfg, "--out", str(tmp_path / "o"), "--no-opt"]) == 0
    report = (tmp_path / "o" / "report.txt").read_text()
    ll = float(report.split("log_likelihood ")[1])
    assert math.isfinite(ll)
    assert "log_likelihood" in capsys.readouterr().out


def test_fit_is_byte_identical_per_seed(tmp_path):
    rng = np.random.default_rng(0)
    t = np.sort(rng.uniform(0, 30, 120))
    y = np.sin(t) + 0.2 * rng.standard_normal(120)
    data = tmp_path / "d.csv"
    write_table_csv(data, ["t", "y"], [t, y])
    cfg = _write_config(tmp_path / "c.json",
                        kernel=MixtureSpec.single(HidaMaternSpec(1.0, 0.5, 0.0, 1)),
                        obs_noise=0.1, data=str(data), options={"n_starts": 2, "max_iter": 80})
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert main(["fit", "--config", cfg, "--out", str(out), "--seed", "7"]) == 0
        outs.append((out / "fitted.json").read_bytes())
    assert outs[0] == outs[1]
    fitted = ExperimentConfig.from_json(outs[0].decode())
    assert fitted.kernel is not None and fitted.seed == 7


def test_empty_data_is_a_clean_error(tmp_path, capsys):
    data = tmp_path / "empty.csv"
    data.write_text("t,y\n")
    cfg = _write_config(tmp_path / "c.json", kernel=mauna_loa_kernel(), data=str(data))
    assert main(["fit", "--config", cfg, "--out", str(tmp_path), "--no-opt"]) == 1
    err = capsys.readouterr().err
    assert "no data" in err


def test_missing_file_and_kernel(tmp_path):
    assert main(["fit", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 1
    cfg = _write_config(tmp_path / "c.json")
    assert main(["predict", "--config", cfg, "--out", str(tmp_path)]) == 1


def test_predict_interpolates_and_extrapolates(mauna, tmp_path):
    cfg, d = mauna
    out = tmp_path / "p"
    assert main(["predict", "--config", cfg, "--out", str(out)]) == 0
    header, pred = read_table_csv(out / "predictions.csv")
    assert header == ["t", "mean", "variance"]
    np.testing.assert_array_equal(pred[:, 0], d.t_test)
    rmse = np.sqrt(np.mean((pred[:, 1] - d.y_test) ** 2))
    base = np.sqrt(np.mean((d.y_train.mean() - d.y_test) ** 2))
    assert rmse < base

    doc = json.loads(open(cfg).read())
    doc["query"] = {"times": d.t_train[:50].tolist()}
    (tmp_path / "c2.json").write_text(json.dumps(doc))
    assert main(["predict", "--config", str(tmp_path / "c2.json"), "--out", str(out)]) == 0
    _, pred = read_table_csv(out / "predictions.csv")
    assert np.max(np.abs(pred[:, 1] - d.y_train[:50])) < 3 * math.sqrt(0.01)


def test_predict_rejects_empty_query(mauna, tmp_path):
    cfg, _ = mauna
    doc = json.loads(open(cfg).read())
    doc["query"] = {"times": []}
    (tmp_path / "c2.json").write_text(json.dumps(doc))
    assert main(["predict", "--config", str(tmp_path / "c2.json"), "--out", str(tmp_path)]) == 1


def test_sample_reproducible(tmp_path):
    cfg = _write_config(tmp_path / "c.json",
                        kernel=MixtureSpec.single(HidaMaternSpec(1.0, 1.0, 0.0, 0)),
                        query={"start": 0.0, "stop": 5.0, "step": 0.5},
                        options={"n_draws": 3})
    for k in range(2):
        assert main(["sample", "--config", cfg, "--out", str(tmp_path / f"s{k}"),
                     "--seed", "11"]) == 0
    a = (tmp_path / "s0" / "samples.csv").read_bytes()
    assert a == (tmp_path / "s1" / "samples.csv").read_bytes()
    header, data = read_table_csv(tmp_path / "s0" / "samples.csv")
    assert header == ["t", "draw_0", "draw_1", "draw_2"] and data.shape == (11, 4)


def test_approx_matern32(tmp_path):
    cfg = _write_config(tmp_path / "c.json", options={
        "reference": "matern32", "n_components": 1, "p": 1, "restarts": 2})
    assert main(["approx", "--config", cfg, "--out", str(tmp_path)]) == 0
    report = (tmp_path / "report.txt").read_text()
    rel = float(report.split("relative_error ")[1].split()[0])
    assert rel < 1e-10
    header, _ = read_table_csv(tmp_path / "kernel_curve.csv")
    assert header == ["tau", "k_ref", "k_fit"]
    header, _ = read_table_csv(tmp_path / "psd_curve.csv")
    assert header == ["omega", "S_ref", "S_fit"]
    mixture_from_json((tmp_path / "mixture.json").read_text())


def test_approx_unknown_reference_exit_2(tmp_path, capsys):
    cfg = _write_config(tmp_path / "c.json", options={"reference": "wiggly"})
    assert main(["approx", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "unknown reference" in capsys.readouterr().err


def test_condition_outputs(tmp_path):
    assert main(["condition", "--out", str(tmp_path)]) == 0
    header, data = read_table_csv(tmp_path / "conditioning.csv")
    assert header[0] == "tau" and data.shape == (5, 7)
    row0 = dict(zip(header, data[0]))
    assert row0["cond_A_corr"] == 1.0
    assert np.all(data[1:, header.index("cond_K_corr")] < data[1:, header.index("cond_K_raw")])
    dumps = read_matrix_dump(tmp_path / "matrices.txt")
    K0 = [m for name, tau, m in dumps if name == "K_corr" and tau == 0.0][0]
    np.testing.assert_array_equal(np.diag(K0), 1.0)


def test_bench_small(tmp_path):
    cfg = _write_config(tmp_path / "c.json", options={"sizes": [200, 400]})
    assert main(["bench", "--config", cfg, "--out", str(tmp_path)]) == 0
    header, data = read_table_csv(tmp_path / "bench.csv")
    assert header == ["M", "seconds", "kld"]
    assert np.all(data[:, 2] < 1e-9)


def test_module_entry_point_usage_error():
    r = subprocess.run([sys.executable, "-m", "hida_matern", "nonsense"],
                       capture_output=True, text=True)
    assert r.returncode == 2
    assert "usage" in r.stderr
