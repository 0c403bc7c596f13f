from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from micluster.harness import io
from micluster.harness.cli import main
from micluster.mechanisms import Dataset


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    code = main(["simulate", "--model", "IV", "--tau", "0.1", "--seed", "3", "--out", str(d / "data.csv"),
                 "--labels-out", str(d / "truth.csv")])
    assert code == 0
    return d


def test_simulate_outputs(simulated):
    data = io.load_csv(simulated / "data.csv")
    assert (data.n, data.p) == (500, 8)
    assert 0.08 < data.missing_fraction() < 0.12
    assert io.load_labels(simulated / "truth.csv").shape == (500,)


def test_impute_cluster_pool_chain(simulated, tmp_path):
    out = tmp_path / "imp"
    assert main(["impute", "--input", str(simulated / "data.csv"), "--engine", "fcs_homo", "--k", "2", "--m", "2",
                 "--l", "2", "--out-dir", str(out)]) == 0
    files = sorted(out.glob("imputed_*.csv"))
    assert len(files) == 2
    assert (out / "diagnostics.csv").exists()
    labels = []
    for i, f in enumerate(files):
        lab = tmp_path / f"labels_{i}.csv"
        assert main(["cluster", "--input", str(f), "--method", "kmeans", "--k", "2", "--out", str(lab)]) == 0
        labels.append(str(lab))
    pooled = tmp_path / "pooled.csv"
    args = ["pool", "--labels", *labels, "--data", *map(str, files), "--method", "kmeans", "--k", "2",
            "--rounds", "2", "--out", str(pooled)]
    assert main(args) == 0
    assert io.load_labels(pooled).shape == (500,)


def test_choose_k(simulated, tmp_path):
    table = tmp_path / "k.csv"
    assert main(["choose-k", "--input", str(simulated / "data.csv"), "--engine", "fcs_norm", "--m", "2", "--l", "2",
                 "--k-max", "3", "--rounds", "2", "--out", str(table)]) == 0
    df = pd.read_csv(table)
    assert list(df.columns) == ["clusterer", "engine", "K2", "K3"]


def test_experiment(tmp_path):
    cfg = tmp_path / "study.cfg"
    results, summary = tmp_path / "r.csv", tmp_path / "s.csv"
    cfg.write_text(f"model = IV\ntau = 0.1\nengine = fcs_norm\nclusterer = kmeans\nm = 2\nl = 2\nreplicates = 2\n"
                   f"results = {results}\nsummary = {summary}\n")
    assert main(["experiment", "--config", str(cfg)]) == 0
    df = pd.read_csv(results)
    assert df["replicate"].tolist() == [0, 1]
    assert pd.read_csv(summary)["S"].tolist() == [2]


def test_exit_code_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n3,oops\n")
    assert main(["cluster", "--input", str(bad), "--k", "2", "--out", str(tmp_path / "l.csv")]) == 2
    assert "line 3, column 2" in capsys.readouterr().err


def test_exit_code_config_error(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("engine = nope\n")
    assert main(["experiment", "--config", str(cfg)]) == 2
    assert main(["experiment", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_exit_code_chain_failure(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((8, 5))
    X[0, 0] = np.nan
    path = tmp_path / "small.csv"
    io.save_csv(Dataset(X), path)
    code = main(["impute", "--input", str(path), "--engine", "jm_gl", "--k", "2", "--m", "1", "--burn-in", "1",
                 "--thin", "1", "--out-dir", str(tmp_path / "o")])
    assert code == 3


def test_na_token(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("a,b,c\n1,2,3\n4,-,6\n7,8,9.5\n1,0,2\n3,3,1\n")
    out = tmp_path / "o"
    assert main(["impute", "--input", str(path), "--na-token", "-", "--engine", "fcs_norm", "--m", "1", "--l", "1",
                 "--out-dir", str(out)]) == 0
    Z = io.load_csv(out / "imputed_1.csv")
    assert Z.is_complete and Z.values[0, 2] == 3.0
