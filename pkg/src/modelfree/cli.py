"""Command line entry point ``modelfree``.

Exit codes: 0 success, 1 bad input or failure, 2 arbitrage in the quoted prices.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import List, Optional

import numpy as np

from . import core, hedge, mlp, mot, pipeline
from .report import evaluate

EXIT_ERROR = 1
EXIT_ARBITRAGE = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# --------------------------------------------------------------------------
# commands

DISTRIBUTIONS = {
    "lognormal": (mot.LogNormal, 2),
    "uniform": (mot.Uniform, 2),
    "triangular": (mot.Triangular, 3),
    "trapezoidal": (mot.Trapezoidal, 4),
}


def cmd_quantize(args) -> int:
    if args.params is None:
        if args.dist == "lognormal" and args.mu is not None and args.sigma is not None:
            args.params = [args.mu, args.sigma]
        else:
            raise ValueError("give --params (or --mu and --sigma for lognormal)")
    if args.dist == "discrete":
        dist = mot.DiscreteUniform(args.params)
    else:
        cls, k = DISTRIBUTIONS[args.dist]
        if len(args.params) != k:
            raise ValueError(f"{args.dist} takes {k} parameters, got {len(args.params)}")
        dist = cls(*args.params)
    atoms = mot.u_quantize_atoms(dist, args.N)
    lines = [f"{_fmt(x)},{_fmt(1.0 / args.N)}" for x in atoms]
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_mot_price(args) -> int:
    m1, m2 = mot.load_measure(args.mu1), mot.load_measure(args.mu2)
    payoff = mot.MotPayoff(args.payoff, args.strike)
    lower, upper = mot.mot_bounds(m1, m2, payoff, mot.MotConstraints(args.variance),
                                  dump_tableau=args.dump_tableau)
    print(f"{_fmt(lower)},{_fmt(upper)}")
    return 0


def _payoff_from_args(args, d: int) -> core.PayoffSpec:
    if args.payoff == "call":
        return core.PayoffSpec.call(args.strike, args.asset)
    weights = args.weights if args.weights is not None else [1.0] * d
    return core.PayoffSpec.basket(weights, args.strike)


def _pricer_from_args(args) -> hedge.PricerConfig:
    return hedge.PricerConfig(kappa=args.kappa, cap=args.cap, budget=args.budget, grid_per_axis=args.grid)


def cmd_hedge_price(args) -> int:
    snap = core.load_snapshot(args.snapshot)
    problems = core.validate_snapshot(snap)
    if problems:
        raise ValueError("invalid snapshot: " + "; ".join(problems))
    cfg = _pricer_from_args(args)
    report = hedge.check_no_arbitrage(snap, cfg)
    if not report.arbitrage_free:
        print(f"arbitrage: {report.message}", file=sys.stderr)
        if report.strategy is not None:
            print(json.dumps(report.strategy.to_dict()), file=sys.stderr)
        return EXIT_ARBITRAGE
    spec = _payoff_from_args(args, snap.d)
    res = hedge.price_bounds(snap, spec, cfg, dump_tableau=args.dump_tableau)
    if not res.optimal:
        raise RuntimeError(f"hedging LP not optimal (lower: {res.lower_status}, upper: {res.upper_status})")
    print(f"{_fmt(res.lower)},{_fmt(res.upper)}")
    if args.emit_strategy:
        doc = {"lower": res.lower, "upper": res.upper,
               "lower_strategy": res.lower_strategy.to_dict(), "upper_strategy": res.upper_strategy.to_dict()}
        _emit(json.dumps(doc, indent=1) + "\n", None if args.emit_strategy == "-" else args.emit_strategy)
    return 0


def _progress(total: int, quiet: bool):
    if quiet:
        return None
    step = max(1, total // 20)

    def report(k):
        if k % step == 0 or k == total:
            print(f"  {k}/{total}", file=sys.stderr)
    return report


def cmd_gen_mot(args) -> int:
    cfg = pipeline.MotGenConfig(args.samples, N=args.N, seed=args.seed, variance=args.variance,
                                payoff=mot.MotPayoff(args.payoff, args.strike))
    ds = pipeline.gen_mot_dataset(cfg, _progress(args.samples, args.quiet))
    pipeline.save_dataset(ds, args.out)
    return 0


def cmd_gen_hedge(args) -> int:
    cfg = pipeline.HedgeGenConfig(args.samples, d=args.assets, quotes=args.quotes, family=args.family,
                                  mode=args.mode, n_subset=args.n_subset, seed=args.seed, spread=args.spread,
                                  pricer=_pricer_from_args(args))
    ds = pipeline.gen_hedge_dataset(cfg, _progress(args.samples, args.quiet))
    pipeline.save_dataset(ds, args.out)
    return 0


def _split(ds: pipeline.Dataset, fraction: float, seed: int):
    return pipeline.split_dataset(ds, fraction, seed)


def cmd_train(args) -> int:
    ds = pipeline.load_dataset(args.data)
    train, _ = _split(ds, args.test_fraction, args.seed)
    dims = [ds.X.shape[1], *args.arch, ds.Y.shape[1]]
    net = mlp.init(dims, args.seed)
    tcfg = mlp.TrainConfig(batch_size=args.batch, max_epochs=args.epochs, patience=args.patience,
                           val_fraction=args.val_fraction, seed=args.seed, lr=args.lr)
    best, scaler, hist = mlp.fit(net, train.X, train.Y, tcfg)
    rep = evaluate(mlp.predict(best, scaler, train.X), train.Y, train.normalizers(), ds.meta.get("target_names"))
    meta = {"seed": args.seed, "test_fraction": args.test_fraction, "arch": list(args.arch),
            "data_kind": ds.meta.get("kind"), "target_names": ds.meta.get("target_names"),
            "epochs_run": len(hist.val_mse), "best_epoch": hist.best_epoch,
            "best_val_mse": hist.best_val, "train_mae": float(np.mean(rep.mae)),
            "train_relative_mae": float(np.mean(rep.relative_mae)),
            "history": {"train_mse": hist.train_mse, "val_mse": hist.val_mse}}
    mlp.save_model(args.out, best, scaler, meta)
    if not args.quiet:
        print(f"epochs {len(hist.val_mse)}, best epoch {hist.best_epoch}, best val mse {hist.best_val:.6g}",
              file=sys.stderr)
    return 0


def cmd_predict(args) -> int:
    net, scaler, meta = mlp.load_model(args.model)
    ds = pipeline.load_dataset(args.data)
    pred = mlp.predict(net, scaler, ds.X)
    names = meta.get("target_names") or [f"y{j}" for j in range(pred.shape[1])]
    lines = [",".join(names)] + [",".join(_fmt(v) for v in row) for row in pred]
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _subset_for_eval(ds, meta, which: str):
    if which == "all":
        return ds
    train, test = _split(ds, meta.get("test_fraction", 0.1), meta.get("seed", 0))
    return train if which == "train" else test


def cmd_eval(args) -> int:
    net, scaler, meta = mlp.load_model(args.model)
    ds = _subset_for_eval(pipeline.load_dataset(args.data), meta, args.subset)
    pred = mlp.predict(net, scaler, ds.X)
    rep = evaluate(pred, ds.Y, ds.normalizers(), ds.meta.get("target_names"))
    out = rep.summary()
    if ds.meta.get("mode") == "strategies":
        derived = evaluate(pipeline.strategy_prices(ds, pred), pipeline.strategy_prices(ds), ds.normalizers(),
                           ["lower", "upper"])
        out["derived_prices"] = derived.summary()
    print(json.dumps(out, indent=1))
    if args.errors:
        rep.write_errors(args.errors)
    return 0


# --------------------------------------------------------------------------
# parser


def _add_pricer_flags(p) -> None:
    p.add_argument("--kappa", type=float, default=0.0, help="proportional transaction cost")
    p.add_argument("--cap", type=float, default=None, help="upper end of the price box")
    p.add_argument("--budget", type=float, default=100.0, help="bound on total position size")
    p.add_argument("--grid", type=int, default=None, help="uniform grid points per axis")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="modelfree", description="Model-free price bounds by linear programming and neural networks.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("quantize", help="U-quantize a distribution")
    q.add_argument("--dist", required=True, choices=sorted(DISTRIBUTIONS) + ["discrete"])
    q.add_argument("--params", type=_floats,
                   help="lognormal: mu,sigma; uniform: a,b; triangular: low,mode,high; "
                        "trapezoidal: a,b,c,d; discrete: points")
    q.add_argument("--mu", type=float, help="lognormal log-mean (with --sigma)")
    q.add_argument("--sigma", type=float, help="lognormal log-standard deviation")
    q.add_argument("-N", type=int, default=20)
    q.add_argument("--out")
    q.set_defaults(func=cmd_quantize)

    m = sub.add_parser("mot", help="martingale transport bounds")
    msub = m.add_subparsers(dest="mot_command", required=True, parser_class=_Parser)
    mp = msub.add_parser("price", help="print lower,upper for two measure files")
    mp.add_argument("--m1", "--mu1", dest="mu1", required=True, help="first-date measure CSV")
    mp.add_argument("--m2", "--mu2", dest="mu2", required=True, help="second-date measure CSV")
    mp.add_argument("--payoff", default="abs_diff", choices=mot.MotPayoff.KINDS)
    mp.add_argument("--strike", type=float, default=0.0)
    mp.add_argument("--variance", type=float, default=None, help="prescribed Var(S2/S1)")
    mp.add_argument("--dump-tableau")
    mp.set_defaults(func=cmd_mot_price)

    h = sub.add_parser("hedge", help="hedging bounds from option quotes")
    hsub = h.add_subparsers(dest="hedge_command", required=True, parser_class=_Parser)
    hp = hsub.add_parser("price", help="print lower,upper for a payoff")
    hp.add_argument("--snapshot", required=True, help="JSON or CSV market snapshot")
    hp.add_argument("--payoff", default="call", choices=["call", "basket"])
    hp.add_argument("--strike", type=float, required=True)
    hp.add_argument("--asset", type=int, default=0)
    hp.add_argument("--weights", type=_floats, default=None)
    _add_pricer_flags(hp)
    hp.add_argument("--emit-strategy", nargs="?", const="-", default=None,
                    help="write both optimal strategies as JSON (to stdout without a path)")
    hp.add_argument("--dump-tableau", help="write the final simplex tableau of the upper bound as CSV")
    hp.set_defaults(func=cmd_hedge_price)

    g = sub.add_parser("gen", help="generate labelled datasets")
    gsub = g.add_subparsers(dest="gen_command", required=True, parser_class=_Parser)
    gm = gsub.add_parser("mot-data")
    gm.add_argument("--samples", type=int, required=True)
    gm.add_argument("-N", type=int, default=20)
    gm.add_argument("--variance", action="store_true")
    gm.add_argument("--payoff", default="abs_diff", choices=mot.MotPayoff.KINDS)
    gm.add_argument("--strike", type=float, default=0.0)
    gm.add_argument("--seed", type=int, default=0)
    gm.add_argument("--out", required=True)
    gm.add_argument("--quiet", action="store_true")
    gm.set_defaults(func=cmd_gen_mot)
    gh = gsub.add_parser("hedge-data")
    gh.add_argument("--samples", type=int, required=True, help="number of snapshots")
    gh.add_argument("--assets", type=int, default=1)
    gh.add_argument("--quotes", type=int, default=20)
    gh.add_argument("--family", default=None, choices=["call", "basket"],
                    help="default: call for one asset, basket otherwise")
    gh.add_argument("--mode", default="prices", choices=["prices", "strategies"])
    gh.add_argument("--n-subset", type=int, default=5)
    gh.add_argument("--spread", type=float, default=0.005)
    gh.add_argument("--seed", type=int, default=0)
    _add_pricer_flags(gh)
    gh.add_argument("--out", required=True)
    gh.add_argument("--quiet", action="store_true")
    gh.set_defaults(func=cmd_gen_hedge)

    t = sub.add_parser("train", help="fit a network to a dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--arch", type=_ints, default=[512, 512, 512])
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--epochs", type=int, default=1000)
    t.add_argument("--patience", type=int, default=20)
    t.add_argument("--batch", type=int, default=256)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--val-fraction", type=float, default=0.1)
    t.add_argument("--test-fraction", type=float, default=0.1)
    t.add_argument("--out", required=True)
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="run a trained network on a dataset's features")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    e = sub.add_parser("eval", help="error report of a trained network")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--subset", default="test", choices=["test", "train", "all"],
                   help="rows to score, using the split recorded in the model")
    e.add_argument("--errors", help="write per-sample errors as CSV")
    e.set_defaults(func=cmd_eval)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "family", "unset") is None:
        args.family = "call" if args.assets == 1 else "basket"
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, RuntimeError, FloatingPointError) as exc:
        print(f"modelfree: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def run_command(argv: List[str]) -> int:
    """Run one command; argparse exits are turned into return codes."""
    try:
        return main(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
