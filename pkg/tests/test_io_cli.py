import json

import numpy as np
import pandas as pd
import pytest

from svecmsh import cli, io
from svecmsh.priors import default_hyperparameters
from svecmsh.sampler import ChainConfig, SweepError, run_chain
from svecmsh.simulation import builtin_dgps, simulate


def _write_levels(path, rows=246, n=3, seed=0):
    rng = np.random.default_rng(seed)
    y = np.cumsum(rng.standard_normal((rows, n)), axis=0) + 10
    frame = pd.DataFrame(y, columns=[f"x{i + 1}" for i in range(n)])
    frame.insert(0, "date", pd.period_range("1959Q1", periods=rows, freq="Q").astype(str))
    frame.to_csv(path, index=False)
    return y


def test_effective_sample_length(tmp_path):
    f = tmp_path / "levels.csv"
    y = _write_levels(f)
    cfg = io.load_config(overrides={"model": {"lag_order": 5}})
    ds = io.load_dataset(f, cfg)
    assert ds.T == 241 and ds.n == 3
    assert ds.names == ("x1", "x2", "x3")
    np.testing.assert_array_equal(ds.observations, y)


@pytest.mark.parametrize("cell,needle", [("", "missing value at row 4, column 'x2'"),
                                         ("abc", "non-numeric value 'abc' at row 4, column 'x2'")])
def test_bad_cells_are_located(tmp_path, cell, needle):
    f = tmp_path / "bad.csv"
    _write_levels(f, rows=10)
    lines = f.read_text().splitlines()
    parts = lines[4].split(",")
    parts[2] = cell
    lines[4] = ",".join(parts)
    f.write_text("\n".join(lines) + "\n")
    with pytest.raises(io.DataError, match=needle.replace("(", r"\(")):
        io.load_dataset(f)


def test_too_short_file(tmp_path):
    f = tmp_path / "short.csv"
    _write_levels(f, rows=3)
    with pytest.raises(io.DataError, match="fewer than lag_order"):
        io.load_dataset(f, io.load_config(overrides={"model": {"lag_order": 3}}))


def test_log_transform_and_non_positive(tmp_path):
    f = tmp_path / "levels.csv"
    y = _write_levels(f, rows=20)
    cfg = io.load_config(overrides={"data": {"log": ["x1"]}})
    np.testing.assert_allclose(io.load_dataset(f, cfg).observations[:, 0], np.log(y[:, 0]))
    frame = pd.read_csv(f)
    frame.loc[5, "x1"] = -1.0
    frame.to_csv(f, index=False)
    with pytest.raises(io.DataError, match="row 6"):
        io.load_dataset(f, cfg)


def test_csv_round_trip_is_bit_exact(tmp_path, rng):
    ds, _, _ = simulate(builtin_dgps()["SC"], rng)
    f = tmp_path / "sim.csv"
    io.write_dataset_csv(ds, f, meta={"seed": 1})
    back = io.load_dataset(f)
    np.testing.assert_array_equal(back.observations, ds.observations)
    assert io.read_csv_metadata(f)["seed"] == "1"


def test_config_validation(tmp_path):
    with pytest.raises(io.ConfigError, match="unknown"):
        io.load_config(overrides={"sampler": {"burnin": 10}})
    f = tmp_path / "cfg.yaml"
    f.write_text("model:\n  lag_order: 3\nprior:\n  alpha_scale: 0.2\n")
    cfg = io.load_config(f)
    assert cfg["model"]["lag_order"] == 3 and cfg["prior"]["alpha_scale"] == 0.2
    assert io.config_hash(cfg) != io.config_hash(io.load_config())


def _small_store(rng):
    ds, _, _ = simulate(builtin_dgps()["SC"], rng)
    hyper = default_hyperparameters(2, 2, 1, 0, 1)
    store = run_chain(ds, hyper, ChainConfig(burn_in=20, keep=15, seed=1, store_paths=True), 1)
    return store, ds


def test_store_round_trip_and_tamper_detection(tmp_path, rng):
    store, ds = _small_store(rng)
    digest = io.save_store(store, tmp_path / "s", ds)
    back, ds_back = io.load_store(tmp_path / "s")
    assert back.meta["content_hash"] == digest
    for k, v in store.arrays.items():
        np.testing.assert_array_equal(back[k], v)
    np.testing.assert_array_equal(ds_back.observations, ds.observations)
    arr = np.load(tmp_path / "s" / "b.npy")
    arr[0, 0] += 1.0
    np.save(tmp_path / "s" / "b.npy", arr)
    with pytest.raises(ValueError, match="checksum"):
        io.load_store(tmp_path / "s")
    with pytest.raises(FileNotFoundError):
        io.load_store(tmp_path / "missing")


def test_cli_simulate_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(["simulate", "--dgp", "LC", "--seed", "11", "--out", str(a)]) == 0
    assert cli.main(["simulate", "--dgp", "LC", "--seed", "11", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    truth = json.loads((tmp_path / "a.csv.truth.json").read_text())
    assert len(truth["states"]) == 201


def test_cli_estimate_then_analyze(tmp_path, capsys):
    data = tmp_path / "sc.csv"
    assert cli.main(["simulate", "--dgp", "SC", "--seed", "2", "--out", str(data)]) == 0
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("model:\n  lag_order: 2\n  rank: 1\n")
    store = tmp_path / "store"
    assert cli.main(["estimate", "--data", str(data), "--config", str(cfg), "--out", str(store),
                     "--burn", "30", "--keep", "20", "--seed", "4", "--csv"]) == 0
    H = 6
    assert cli.main(["analyze", "--store", str(store), "--horizon", str(H)]) == 0
    out = capsys.readouterr().out
    assert "Lindley statistic" in out
    irf = pd.read_csv(store / "irf.csv", comment="#")
    assert len(irf) == (H + 1) * 2 * 2 * 2
    assert np.all(irf["q16"] <= irf["q50"]) and np.all(irf["q50"] <= irf["q84"])
    fevd = pd.read_csv(store / "fevd.csv", comment="#")
    assert len(fevd) == H * 2 * 2 * 2
    shocks = pd.read_csv(store / "shocks.csv", comment="#")
    assert len(shocks) == 200
    meta = io.read_csv_metadata(store / "irf.csv")
    assert meta["seed"] == "4" and meta["store_hash"]
    assert len(pd.read_csv(store / "draws.csv", comment="#")) == 20


def test_cli_multiple_chains(tmp_path):
    data = tmp_path / "sc.csv"
    cli.main(["simulate", "--dgp", "SC", "--seed", "2", "--out", str(data)])
    store = tmp_path / "store"
    assert cli.main(["estimate", "--data", str(data), "--out", str(store), "--burn", "10",
                     "--keep", "5", "--seed", "1", "--chains", "2"]) == 0
    merged, _ = io.load_store(store)
    assert merged.n_draws == 10
    assert io.load_store(store / "chain2")[0].n_draws == 5


def test_cli_ident_prints_alternate(tmp_path, capsys):
    sol = tmp_path / "sol.json"
    sol.write_text(json.dumps({"B": [[1, -0.2], [0.5, 1]], "lambda1": [1, 0.7], "lambda2": [0.2, 0.1]}))
    assert cli.main(["ident", "--solution", str(sol), "--ordering", "descending"]) == 0
    out = capsys.readouterr().out
    assert "2 observationally equivalent" in out
    assert "[[1.0, 2.0], [-5.0, 1.0]]" in out
    assert "globally identified: yes" in out


def test_cli_rank_writes_table(tmp_path, capsys):
    data = tmp_path / "sc.csv"
    cli.main(["simulate", "--dgp", "SC", "--seed", "2", "--out", str(data)])
    out = tmp_path / "rank.csv"
    assert cli.main(["rank", "--data", str(data), "--ranks", "0..1", "--burn", "40", "--keep", "40",
                     "--seed", "3", "--out", str(out)]) == 0
    table = pd.read_csv(out, comment="#")
    assert list(table["rank"]) == [0, 1]
    assert "conditional" in capsys.readouterr().out


def test_cli_error_exit_codes(tmp_path, monkeypatch, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("sampler:\n  burnin: 3\n")
    data = tmp_path / "sc.csv"
    cli.main(["simulate", "--dgp", "SC", "--seed", "2", "--out", str(data)])
    assert cli.main(["estimate", "--data", str(data), "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["estimate", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o")]) == 2

    def boom(*a, **k):
        raise SweepError("ordering rejection cap reached")

    monkeypatch.setattr(cli, "run_chain", boom)
    assert cli.main(["estimate", "--data", str(data), "--out", str(tmp_path / "o"),
                     "--burn", "1", "--keep", "1"]) == 3
    assert "sampler aborted" in capsys.readouterr().err
