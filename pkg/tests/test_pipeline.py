import numpy as np
import pytest

from modelfree.core import snapshot_from_features
from modelfree.hedge import PricerConfig, check_no_arbitrage, price_bounds
from modelfree.mot import DiscreteMeasure, LogNormal, check_convex_order, mot_bounds, MotPayoff, u_quantize
from modelfree.pipeline import (Dataset, HedgeGenConfig, MotGenConfig, gen_hedge_dataset, gen_market_snapshot,
                                gen_marginal_pair, gen_mot_dataset, hedge_sample, load_dataset, mot_sample,
                                sample_rng, save_dataset, split_dataset, strategy_prices)

COARSE = PricerConfig(grid_per_axis=16)


@pytest.fixture(scope="module")
def mot_ds():
    return gen_mot_dataset(MotGenConfig(samples=12, N=4, seed=7))


@pytest.fixture(scope="module")
def strat_ds():
    return gen_hedge_dataset(HedgeGenConfig(samples=2, d=2, family="basket", mode="strategies", n_subset=2,
                                            seed=3, pricer=COARSE))


def test_sample_rng_is_per_index():
    a = sample_rng(1, 5).uniform(size=3)
    assert np.array_equal(a, sample_rng(1, 5).uniform(size=3))
    assert not np.array_equal(a, sample_rng(1, 6).uniform(size=3))
    assert not np.array_equal(a, sample_rng(2, 5).uniform(size=3))


def test_family_examples():
    rng = np.random.default_rng(0)
    for i in (1, 2):
        for _ in range(10):
            d1, d2 = gen_marginal_pair(i, rng)
            m1, m2 = u_quantize(d1, 20), u_quantize(d2, 20)
            assert check_convex_order(m1, m2)
    # equal log-volatilities give identical laws
    l1, l2 = LogNormal(0.3 - 0.02, 0.2), LogNormal(0.3 - 0.02, 0.2)
    assert np.array_equal(u_quantize(l1, 20).atoms, u_quantize(l2, 20).atoms)


def test_family_zero_preserves_mean():
    rng = np.random.default_rng(1)
    for _ in range(20):
        d1, d2 = gen_marginal_pair(0, rng)
        assert d1.mean() == pytest.approx(d2.mean(), rel=1e-12)


def test_mot_dataset_shapes_and_order(mot_ds):
    assert mot_ds.X.shape == (12, 8) and mot_ds.Y.shape == (12, 2)
    assert np.all(mot_ds.Y[:, 0] <= mot_ds.Y[:, 1] + 1e-9)
    assert mot_ds.meta["feature_names"][:2] == ["mu1_x0", "mu1_x1"]
    assert sum(mot_ds.meta["family_counts"]) == 12
    assert mot_ds.meta["attempts"] >= 12


def test_mot_dataset_labels_match_solver(mot_ds):
    for r in range(3):
        x1, x2 = mot_ds.X[r, :4], mot_ds.X[r, 4:]
        m1, m2 = DiscreteMeasure.from_atoms(x1), DiscreteMeasure.from_atoms(x2)
        assert np.allclose(mot_bounds(m1, m2, MotPayoff()), mot_ds.Y[r], rtol=0, atol=1e-12)


def test_mot_dataset_width_for_default_N():
    ds = gen_mot_dataset(MotGenConfig(samples=2, N=20, seed=0, families=(1,)))
    assert ds.X.shape == (2, 40)
    dv = gen_mot_dataset(MotGenConfig(samples=2, N=20, seed=0, families=(1,), variance=True))
    assert dv.X.shape == (2, 41) and dv.meta["feature_names"][-1] == "sigma12"
    assert np.all(dv.Y[:, 0] <= dv.Y[:, 1] + 1e-9)


def test_mot_dataset_deterministic_and_order_free():
    cfg = MotGenConfig(samples=6, N=5, seed=11)
    a, b = gen_mot_dataset(cfg), gen_mot_dataset(cfg)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.Y, b.Y)
    # producing attempts out of order yields the same rows
    rows = {}
    for i in reversed(range(a.meta["attempts"])):
        out = mot_sample(cfg, i)
        if out is not None:
            rows[i] = out
    X = np.array([rows[i][0] for i in sorted(rows)])
    assert np.array_equal(X, a.X)


def test_mot_attempt_limit():
    with pytest.raises(RuntimeError):
        gen_mot_dataset(MotGenConfig(samples=3, N=5, families=(3,), max_attempts=10))


def test_snapshot_examples():
    rng = np.random.default_rng(0)
    snap = gen_market_snapshot(rng, d=1, quotes_per_asset=20, spread=0.0)
    s0 = snap.spots[0]
    for q in snap.chains[0]:
        assert q.bid == q.ask
        assert max(s0 - q.strike, 0) - 1e-9 <= q.bid <= s0
    assert check_no_arbitrage(snap, COARSE).arbitrage_free
    two = gen_market_snapshot(rng, d=2, quotes_per_asset=5)
    assert two.d == 2 and two.n_calls() == [5, 5]
    for ch in two.chains:
        assert all(q.bid < q.ask or q.ask == 0 for q in ch)
    with pytest.raises(ValueError):
        gen_market_snapshot(rng, spread=1.0)


def test_hedge_prices_dataset():
    ds = gen_hedge_dataset(HedgeGenConfig(samples=2, seed=5))
    assert ds.X.shape == (10, 62) and ds.Y.shape == (10, 2)
    assert np.all(ds.Y[:, 0] <= ds.Y[:, 1] + 1e-9)
    m = ds.meta
    for r in (0, 7):
        snap, spec = snapshot_from_features(ds.X[r], m["n_calls"], m["n_puts"], m["family"])
        res = price_bounds(snap, spec)
        assert [res.lower, res.upper] == pytest.approx(ds.Y[r].tolist(), abs=1e-9)
    # relative errors are measured against the spot
    assert np.array_equal(ds.normalizers(), ds.X[:, m["feature_names"].index("spot_0")])


def test_hedge_strategy_dataset(strat_ds):
    assert strat_ds.X.shape == (4, 125) and strat_ds.Y.shape == (4, 86)
    assert strat_ds.meta["target_names"][0] == "lo_a" and strat_ds.meta["target_names"][43] == "up_a"
    prices = strategy_prices(strat_ds)
    m = strat_ds.meta
    for r in range(len(strat_ds)):
        snap, spec = snapshot_from_features(strat_ds.X[r], m["n_calls"], m["n_puts"], m["family"])
        res = price_bounds(snap, spec, COARSE)
        assert prices[r] == pytest.approx([res.lower, res.upper], abs=1e-6)


def test_hedge_sample_order_free():
    cfg = HedgeGenConfig(samples=3, seed=9, n_subset=2, pricer=COARSE)
    ds = gen_hedge_dataset(cfg)
    X2, Y2, _ = hedge_sample(cfg, 2)
    assert np.array_equal(np.array(X2), ds.X[4:]) and np.array_equal(np.array(Y2), ds.Y[4:])


def test_split(mot_ds):
    ds = Dataset(np.arange(200.0)[:, None], np.arange(200.0))
    tr, te = split_dataset(ds, 0.1, seed=3)
    assert len(tr) == 180 and len(te) == 20
    assert set(tr.X[:, 0]).isdisjoint(te.X[:, 0])
    tr2, te2 = split_dataset(ds, 0.1, seed=3)
    assert np.array_equal(te.X, te2.X)
    with pytest.raises(ValueError):
        split_dataset(ds, 0.0)
    with pytest.raises(ValueError):
        split_dataset(Dataset(np.ones((1, 1)), np.ones(1)), 0.5)


def test_dataset_round_trip(tmp_path, mot_ds, strat_ds):
    for ds in (mot_ds, strat_ds):
        p = tmp_path / "d.csv"
        save_dataset(ds, str(p))
        back = load_dataset(str(p))
        assert np.array_equal(back.X, ds.X) and np.array_equal(back.Y, ds.Y)
        assert back.meta["feature_names"] == ds.meta["feature_names"]
        assert np.array_equal(back.normalizers(), ds.normalizers())


def test_dataset_validation(tmp_path):
    with pytest.raises(ValueError):
        Dataset(np.ones((3, 2)), np.ones((2, 1)))
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan]]), np.ones(1))
    with pytest.raises(ValueError):
        Dataset(np.ones((1, 2)), np.ones(1), {"feature_names": ["a"]})
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        load_dataset(str(p))


def test_config_validation():
    with pytest.raises(ValueError):
        MotGenConfig(samples=0)
    with pytest.raises(ValueError):
        MotGenConfig(samples=1, families=(4,))
    with pytest.raises(ValueError):
        HedgeGenConfig(samples=1, d=4)
    with pytest.raises(ValueError):
        HedgeGenConfig(samples=1, mode="weights")
