from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from micluster import rand
from micluster.clustering import ClustererSpec
from micluster.exceptions import InvalidParameterError, ParseError
from micluster.harness import io
from micluster.harness.experiment import (
    RESULT_COLUMNS,
    ExperimentSpec,
    impute,
    parse_config,
    run_experiment,
    spec_from_config,
    summarize,
    summarize_results,
)
from micluster.harness.models import MODELS, block_cov, generate_model, model_spec
from micluster.harness.wine import ampute_wine, load_wine_dataset
from micluster.mechanisms import Dataset, MechanismSpec, ampute
from micluster.pooling import analyse_copies, ari, choose_k, pool


def test_model_one_shape():
    data = generate_model(model_spec("I"), 0)
    assert (data.n, data.p) == (750, 8)
    assert np.bincount(data.ref_labels).tolist() == [250, 250, 250]
    mean = data.values[data.ref_labels == 0].mean(axis=0)
    assert np.abs(mean - [0, 0, 0, 0, 2, 2, 0, 4]).max() < 0.15


def test_model_ten_covariances():
    # one draw of 250 rows has entrywise s.e. near 0.09, so average ten draws
    acc = np.zeros((3, 4, 4))
    for seed in range(10):
        data = generate_model(model_spec("X"), seed)
        for w in range(3):
            acc[w] += np.cov(data.values[data.ref_labels == w, 4:].T) / 10
    for w, rho in enumerate((None, 0.3, -0.3)):
        assert np.abs(acc[w] - block_cov(rho)[4:, 4:]).max() < 0.1


def test_model_table():
    assert MODELS["IV"].k == 2 and MODELS["V"].k == 4
    assert MODELS["IX"].sizes == (400, 250, 250)
    assert MODELS["X"].constraint == "hetero" and MODELS["I"].constraint == "homo"
    assert np.allclose(MODELS["V"].centers()[3], [0, 0, 0, 0, 2, -2, -2, 4])
    assert model_spec("model-ii").delta == 1.5
    with pytest.raises(InvalidParameterError):
        model_spec("XII")


def test_csv_round_trip(tmp_path):
    rng = rand.as_generator(2)
    values = rng.standard_normal((20, 3)) * 1e3
    mask = rng.random((20, 3)) > 0.2
    data = Dataset(values, mask, columns=["a", "b", "c"])
    path = tmp_path / "d.csv"
    io.save_csv(data, path)
    back = io.load_csv(path)
    assert back.columns == ["a", "b", "c"]
    assert np.array_equal(back.mask, mask)
    assert np.array_equal(back.values[mask], values[mask])


def test_csv_na_token(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x,y\n1,?\n?,2.5\n3,4\n")
    data = io.load_csv(path, na_token="?")
    assert data.mask.tolist() == [[True, False], [False, True], [True, True]]


def test_csv_label_column_wine(tmp_path):
    wine = load_wine_dataset()
    path = tmp_path / "wine.csv"
    io.save_csv(wine, path, label_column="class")
    back = io.load_csv(path, label_column="class")
    assert (back.n, back.p) == (178, 13)
    assert np.unique(back.ref_labels).size == 3
    assert np.array_equal(back.values, wine.values)


@pytest.mark.parametrize(
    "text, where",
    [
        ("a,b\n1,2\n3\n", "line 3"),
        ("a,b\n1,2\n3,x\n", "line 3, column 2"),
        ("a,b\n1,inf\n", "line 2, column 2"),
    ],
)
def test_csv_parse_errors(tmp_path, text, where):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(ParseError, match=where):
        io.load_csv(path)


def test_labels_round_trip(tmp_path):
    path = tmp_path / "l.csv"
    io.save_labels([2, 0, 1, 1], path)
    assert io.load_labels(path).tolist() == [2, 0, 1, 1]
    path.write_text("cluster\n0\n-1\n")
    with pytest.raises(ParseError):
        io.load_labels(path)


def test_summarize_examples():
    assert summarize([1, 2, 3, 4]).median == 2.5
    assert summarize([7.0] * 5).iqr == 0.0
    s = summarize(np.arange(1, 101))
    v = np.sort(np.arange(1, 101, dtype=float))

    def quantile(q):
        h = (v.size - 1) * q
        lo = int(np.floor(h))
        return v[lo] + (h - lo) * (v[min(lo + 1, v.size - 1)] - v[lo])

    assert s.median == 50.5
    assert np.isclose(s.iqr, quantile(0.75) - quantile(0.25))
    assert s.count == 100
    with pytest.raises(InvalidParameterError):
        summarize([])


def test_config_parser():
    cfg = parse_config("# study\nmodel = X\ntau = 0.4\nmechanism = mar2\nengine = fcs_hetero\n"
                       "clusterer = mixture\nm = 5\nreplicates = 3\nseed = 9\n")
    spec = spec_from_config(cfg)
    assert spec.model.model_id == "X" and spec.mechanism.driver_col == 7
    assert spec.clusterer.constraint == "hetero" and spec.clusterer.k == 3
    assert (spec.m, spec.replicates, spec.master_seed) == (5, 3, 9)
    for bad, where in [("foo = 1", "line 1"), ("m = 2\nm = 3", "line 2"), ("m = two", "line 1"), ("m", "line 1")]:
        with pytest.raises(ParseError, match=where):
            parse_config(bad)
    with pytest.raises(ParseError):
        spec_from_config({"engine": "jm_dp"})


def _small_spec(**kw):
    base = dict(model=model_spec("I"), mechanism=MechanismSpec("mcar", 0.25), engine="fcs_homo",
                clusterer=ClustererSpec("mixture", 3), m=2, replicates=3, master_seed=4, l=2)
    base.update(kw)
    return ExperimentSpec(**base)


@pytest.fixture(scope="module")
def small_run():
    return run_experiment(_small_spec())


def test_experiment_reproducible(small_run):
    again = run_experiment(_small_spec())
    pd.testing.assert_frame_equal(small_run, again, check_exact=True)
    assert list(small_run.columns) == RESULT_COLUMNS
    assert (small_run["status"] == "ok").all()
    assert small_run["ari"].between(-1, 1).all()


def test_replicate_independence(small_run):
    alone = run_experiment(_small_spec(), replicates=[1])
    pd.testing.assert_frame_equal(alone.reset_index(drop=True), small_run.iloc[[1]].reset_index(drop=True),
                                  check_exact=True)


def test_summary_table(small_run):
    table = summarize_results(small_run)
    assert table["S"].tolist() == [3]
    assert np.isclose(table["ari_median"].iloc[0], small_run["ari"].median())


def test_full_data_control():
    df = run_experiment(_small_spec(mechanism=None, replicates=2))
    assert (df["engine"] == "full").all() and (df["ari"] > 0.9).all()


def test_chain_failure_recorded():
    # sixty classes on 300 rows: a class empties and the chain stops
    spec = _small_spec(model=model_spec("VII"), engine="jm_gl", burn_in=1, thin=1, imputation_k=60, replicates=1)
    df = run_experiment(spec)
    assert df["status"].tolist() == ["chain_failure"]
    assert np.isnan(df["ari"].iloc[0])


def test_reference_labels_never_used():
    data = generate_model(model_spec("I"), 5)
    masked = ampute(data, MechanismSpec("mcar", 0.25), 6)
    spec = ClustererSpec("kmeans", 3)
    outs = []
    for d in (masked, masked.without_labels()):
        res = impute("fcs_homo", d, 3, 2, rand.as_generator(7), l=2)
        parts, _ = analyse_copies(res.completed, spec, rand.as_generator(8), b=0)
        outs.append(pool(parts, 3, rand.as_generator(9)).partition.labels)
    assert np.array_equal(outs[0], outs[1])


def test_external_engine(tmp_path):
    data = generate_model(model_spec("IV"), 10)
    masked = ampute(data, MechanismSpec("mcar", 0.1), 11)
    res = impute("fcs_norm", masked, 2, 2, rand.as_generator(12), l=2)
    for i, Z in enumerate(res.completed):
        io.save_matrix(Z, tmp_path / f"imp_{i}.csv")
    ext = impute("external", masked, 2, 2, None, external_dir=tmp_path)
    assert all(np.array_equal(a, b) for a, b in zip(ext.completed, res.completed))
    io.save_matrix(np.zeros_like(res.completed[0]), tmp_path / "imp_0.csv")
    with pytest.raises(ParseError):
        impute("external", masked, 2, 2, None, external_dir=tmp_path)


def test_choose_k_with_engine():
    rng = rand.as_generator(13)
    X = (6.0 * np.eye(3))[np.repeat(np.arange(3), 40)] + rng.standard_normal((120, 3))
    masked = ampute(Dataset(X), MechanismSpec("mcar", 0.1), 14)

    def run(d, K, sub):
        return impute("fcs_norm", d, K, 2, sub, l=3)

    assert choose_k(masked, run, ClustererSpec("kmeans", 2), 5, 15, b=3).k == 3


def test_wine_masks_keep_driver():
    wine = load_wine_dataset()
    assert (wine.n, wine.p) == (178, 13)
    masked = ampute_wine(wine, MechanismSpec("mar", 0.3, 0), 16)
    assert masked.mask[:, 0].all()
    assert np.array_equal(masked.values[masked.mask], wine.values[masked.mask])
    assert abs(1 - masked.mask[:, 1:].mean() - 0.3) < 0.05
    assert ari(masked.ref_labels, wine.ref_labels) == 1.0
