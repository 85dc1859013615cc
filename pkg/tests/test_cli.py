import json
import subprocess
import sys

import numpy as np
import pytest

from modelfree.cli import EXIT_ARBITRAGE, run_command
from modelfree.core import MarketSnapshot, OptionQuote, PayoffSpec, save_snapshot
from modelfree.hedge import PricerConfig, price_bounds
from modelfree.mot import MotPayoff, Uniform, load_measure, mot_bounds, u_quantize
from modelfree.pipeline import load_dataset, split_dataset


def run(capsys, *argv):
    rc = run_command([str(a) for a in argv])
    out, err = capsys.readouterr()
    return rc, out, err


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


def test_quantize_and_mot_price(capsys, workdir):
    m1, m2 = workdir / "m1.csv", workdir / "m2.csv"
    assert run(capsys, "quantize", "--dist", "uniform", "--params", "8,12", "-N", 20, "--out", m1)[0] == 0
    assert run(capsys, "quantize", "--dist", "uniform", "--params", "5,15", "-N", 20, "--out", m2)[0] == 0
    rc, out, _ = run(capsys, "mot", "price", "--m1", m1, "--m2", m2)
    assert rc == 0
    lo, up = map(float, out.strip().split(","))
    ref = mot_bounds(u_quantize(Uniform(8, 12), 20), u_quantize(Uniform(5, 15), 20), MotPayoff())
    assert (lo, up) == pytest.approx(ref, rel=1e-12)
    assert load_measure(str(m1)).atoms.size == 20
    # the measures in the wrong order are not in convex order
    rc, _, err = run(capsys, "mot", "price", "--m1", m2, "--m2", m1)
    assert rc == 1 and "convex order" in err


def test_quantize_stdout_and_errors(capsys):
    rc, out, _ = run(capsys, "quantize", "--dist", "lognormal", "--mu", 0, "--sigma", 0.25, "-N", 4)
    rows = [list(map(float, r.split(","))) for r in out.strip().splitlines()]
    assert rc == 0 and len(rows) == 4 and all(w == 0.25 for _, w in rows)
    assert run(capsys, "quantize", "--dist", "uniform", "--params", "1,2,3")[0] == 1
    assert run(capsys, "quantize", "--dist", "uniform", "--params", "3,1")[0] == 1
    assert run(capsys, "bogus")[0] == 1
    assert run(capsys, "quantize", "--dist", "nope", "--params", "1")[0] == 1


def test_hedge_price_and_strategy(capsys, workdir):
    snap = MarketSnapshot([100.0], [[OptionQuote("call", 90, 11.5, 12.0), OptionQuote("call", 110, 2.0, 2.4)]])
    p = workdir / "snap.json"
    save_snapshot(snap, str(p))
    s = workdir / "strat.json"
    rc, out, _ = run(capsys, "hedge", "price", "--snapshot", p, "--strike", 100, "--grid", 32,
                     "--emit-strategy", s)
    assert rc == 0
    lo, up = map(float, out.strip().split(","))
    res = price_bounds(snap, PayoffSpec.call(100), PricerConfig(grid_per_axis=32))
    assert (lo, up) == (res.lower, res.upper)
    doc = json.loads(s.read_text())
    assert doc["upper"] == up and "delta0" in doc["upper_strategy"]


def test_hedge_price_arbitrage_exit(capsys, workdir):
    # a call cheaper than its intrinsic value against the forward
    snap = MarketSnapshot([100.0], [[OptionQuote("call", 80, 10.0, 10.5)]])
    p = workdir / "arb.json"
    save_snapshot(snap, str(p))
    rc, out, err = run(capsys, "hedge", "price", "--snapshot", p, "--strike", 100)
    assert rc == EXIT_ARBITRAGE and out == "" and "arbitrage" in err
    bad = MarketSnapshot([100.0], [[OptionQuote("call", 80, 30.0, 20.0)]])
    save_snapshot(bad, str(p))
    assert run(capsys, "hedge", "price", "--snapshot", p, "--strike", 100)[0] == 1
    assert run(capsys, "hedge", "price", "--snapshot", workdir / "missing.json", "--strike", 1)[0] == 1


@pytest.fixture(scope="module")
def trained(workdir):
    data = workdir / "mot.csv"
    assert run_command(["gen", "mot-data", "--samples", "60", "-N", "5", "--seed", "1", "--out", str(data),
                        "--quiet"]) == 0
    models = []
    for name in ("a.json", "b.json"):
        m = workdir / name
        assert run_command(["train", "--data", str(data), "--arch", "8,8", "--epochs", "30", "--patience", "5",
                            "--batch", "16", "--seed", "2", "--out", str(m), "--quiet"]) == 0
        models.append(m)
    return data, models


def test_train_deterministic(trained):
    _, (a, b) = trained
    assert a.read_bytes() == b.read_bytes()
    meta = json.loads(a.read_text())["meta"]
    assert meta["seed"] == 2 and meta["arch"] == [8, 8] and meta["test_fraction"] == 0.1


def test_eval_and_predict(capsys, trained, workdir):
    data, (model, _) = trained
    meta = json.loads(model.read_text())["meta"]
    rc, out, _ = run(capsys, "eval", "--model", model, "--data", data, "--subset", "train")
    assert rc == 0
    summary = json.loads(out)
    assert summary["relative_mae_overall"] == pytest.approx(meta["train_relative_mae"], rel=1e-12)
    errs = workdir / "errs.csv"
    rc, out, _ = run(capsys, "eval", "--model", model, "--data", data, "--errors", errs)
    summary = json.loads(out)
    ds = load_dataset(str(data))
    _, test = split_dataset(ds, 0.1, 2)
    assert rc == 0 and summary["rows"] == len(test)
    rows = np.loadtxt(errs, delimiter=",", skiprows=1)
    assert rows.shape == (len(test), 2 + 4 * 2)
    # MOT targets have unit normalizers, so relative and absolute errors agree
    assert np.allclose(rows[:, 4], rows[:, 5], rtol=0, atol=1e-12)
    rc, out, _ = run(capsys, "predict", "--model", model, "--data", data)
    lines = out.strip().splitlines()
    assert rc == 0 and lines[0] == "lower,upper" and len(lines) == len(ds) + 1


def test_hedge_eval_relative_mae(capsys, workdir):
    data = workdir / "hedge.csv"
    assert run(capsys, "gen", "hedge-data", "--samples", 3, "--n-subset", 4, "--grid", 16, "--seed", 4,
               "--out", data, "--quiet")[0] == 0
    model = workdir / "h.json"
    assert run(capsys, "train", "--data", data, "--arch", "4", "--epochs", 3, "--batch", 4,
               "--test-fraction", 0.25, "--out", model, "--quiet")[0] == 0
    rc, out, _ = run(capsys, "eval", "--model", model, "--data", data, "--subset", "all")
    summary = json.loads(out)
    ds = load_dataset(str(data))
    rc2, pred_out, _ = run(capsys, "predict", "--model", model, "--data", data)
    pred = np.loadtxt(pred_out.strip().splitlines()[1:], delimiter=",", ndmin=2)
    z = ds.normalizers()
    expect = np.mean(np.abs(pred / z[:, None] - ds.Y / z[:, None]), axis=0)
    got = [summary["relative_mae"]["lower"], summary["relative_mae"]["upper"]]
    assert rc == rc2 == 0 and np.allclose(got, expect, rtol=0, atol=1e-12)


def test_strategy_eval_reports_derived_prices(capsys, workdir):
    data = workdir / "strat.csv"
    assert run(capsys, "gen", "hedge-data", "--samples", 2, "--quotes", 6, "--n-subset", 3, "--mode",
               "strategies", "--grid", 16, "--out", data, "--quiet")[0] == 0
    model = workdir / "s.json"
    assert run(capsys, "train", "--data", data, "--arch", "4", "--epochs", 2, "--batch", 2,
               "--test-fraction", 0.3, "--val-fraction", 0.25, "--out", model, "--quiet")[0] == 0
    rc, out, _ = run(capsys, "eval", "--model", model, "--data", data)
    assert rc == 0 and "derived_prices" in json.loads(out)


def test_missing_files_exit_one(capsys, workdir):
    assert run(capsys, "eval", "--model", workdir / "none.json", "--data", workdir / "none.csv")[0] == 1
    bad = workdir / "bad.json"
    bad.write_text("{not json")
    data = workdir / "empty.csv"
    data.write_text("")
    assert run(capsys, "predict", "--model", bad, "--data", data)[0] == 1


def test_console_script_runs():
    res = subprocess.run([sys.executable, "-m", "modelfree.cli", "quantize", "--dist", "uniform",
                          "--params", "0,1", "-N", "2"], capture_output=True, text=True)
    assert res.returncode == 0
    assert [float(r.split(",")[0]) for r in res.stdout.split()] == [0.25, 0.75]
