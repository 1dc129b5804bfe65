"""Command-line entry point: estimate, simulate, analyze, rank, ident."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import pandas as pd

from . import analysis, io
from .identification import StructuralSolution, alternate_solutions, check_theorem_conditions
from .sampler import ChainConfig, DrawStore, NumericalError, SweepError, run_chain
from .selection import sddr_rank
from .simulation import DgpSpec, builtin_dgps, simulate

log = logging.getLogger("svecmsh")


def _parse_ranks(text: str) -> list:
    out = set()
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            out.update(range(int(lo), int(hi) + 1))
        elif part:
            out.add(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty rank list")
    return sorted(out)


def _chain_flags(p):
    p.add_argument("--seed", type=int)
    p.add_argument("--burn", type=int, help="burn-in sweeps")
    p.add_argument("--keep", type=int, help="retained sweeps")
    p.add_argument("--thin", type=int)
    p.add_argument("--chains", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="svecmsh", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="run the sampler and save a draw store")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--rank", type=int)
    p.add_argument("--csv", action="store_true", help="also export draws.csv")
    _chain_flags(p)

    p = sub.add_parser("simulate", help="simulate a dataset from a built-in or file DGP")
    p.add_argument("--dgp", required=True, help="SC, LC or a JSON file")
    p.add_argument("--out", required=True, help="output CSV; truth goes to <out>.truth.json")
    p.add_argument("--seed", type=int)
    p.add_argument("--T", type=int)

    p = sub.add_parser("analyze", help="IRF, FEVD, shock and summary tables from a store")
    p.add_argument("--store", required=True)
    p.add_argument("--horizon", type=int, default=40)
    p.add_argument("--out", help="output directory (defaults to the store)")
    p.add_argument("--level", type=float, default=0.95)

    p = sub.add_parser("rank", help="Savage-Dickey rank comparison")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--ranks", type=_parse_ranks, default=None)
    p.add_argument("--method", choices=("gaussian", "kde", "conditional"))
    p.add_argument("--out")
    _chain_flags(p)

    p = sub.add_parser("ident", help="equivalent structural solutions and uniqueness report")
    p.add_argument("--solution", required=True, help="JSON with B, lambda1, lambda2")
    p.add_argument("--ordering", default="ascending")
    p.add_argument("--tol", type=float, default=1e-8)
    return parser


def _overrides(args) -> dict:
    sampler = {}
    for flag, key in (("seed", "seed"), ("burn", "burn_in"), ("keep", "keep"), ("thin", "thin")):
        val = getattr(args, flag, None)
        if val is not None:
            sampler[key] = val
    out = {"sampler": sampler} if sampler else {}
    if getattr(args, "rank", None) is not None:
        out["model"] = {"rank": args.rank}
    return out


def _run_one(job):
    dataset, hyper, config, rank, fmap, seed_seq = job
    return run_chain(dataset, hyper, config, rank, np.random.default_rng(seed_seq), fmap)


def run_chains(dataset, hyper, config: ChainConfig, rank: int, fmap, chains: int = 1) -> list:
    """Independent chains from one seed; parallel processes when ``chains > 1``."""
    if chains < 1:
        raise ValueError("--chains must be >= 1")
    if chains == 1:
        return [run_chain(dataset, hyper, config, rank, np.random.default_rng(config.seed), fmap)]
    seeds = np.random.SeedSequence(config.seed).spawn(chains)
    jobs = [(dataset, hyper, config, rank, fmap, s) for s in seeds]
    with ProcessPoolExecutor(max_workers=chains) as pool:
        return list(pool.map(_run_one, jobs))


def cmd_estimate(args) -> int:
    cfg = io.load_config(args.config, _overrides(args))
    dataset = io.load_dataset(args.data, cfg)
    hyper = io.hyperparameters_from_config(cfg, dataset)
    fmap = io.free_entry_map_from_config(cfg, dataset.n)
    config = ChainConfig.from_dict(cfg["sampler"])
    rank = int(cfg["model"]["rank"])
    stores = run_chains(dataset, hyper, config, rank, fmap, args.chains)
    out = Path(args.out)
    meta = {"run_config": cfg, "config_hash": io.config_hash(cfg), "data_file": str(args.data)}
    if len(stores) > 1:
        for k, s in enumerate(stores):
            io.save_store(s, out / f"chain{k + 1}", dataset, meta)
    store = DrawStore.concatenate(stores) if len(stores) > 1 else stores[0]
    digest = io.save_store(store, out, dataset, meta)
    if args.csv:
        io.export_store_csv(store, out / "draws.csv")
    stats = store.meta.get("stats", {})
    print(f"saved {store.n_draws} draws to {out} (hash {digest[:12]})")
    acc = stats.get("mh_acceptance")
    if acc is not None:
        print(f"MH acceptance after burn-in: {acc:.3f}")
    return 0


def cmd_simulate(args) -> int:
    if args.dgp in ("SC", "LC"):
        spec = builtin_dgps()[args.dgp]
    else:
        with open(args.dgp) as fh:
            spec = DgpSpec.from_dict(json.load(fh))
    if args.seed is not None:
        spec.seed = args.seed
    if args.T is not None:
        spec.T = args.T
    dataset, path, shocks = simulate(spec, np.random.default_rng(spec.seed))
    out = Path(args.out)
    io.write_dataset_csv(dataset, out, meta={"dgp": spec.name, "seed": spec.seed})
    truth = spec.to_dict()
    truth["states"] = path.tolist()
    truth["shocks"] = shocks.tolist()
    with open(str(out) + ".truth.json", "w") as fh:
        json.dump(truth, fh, indent=1)
    print(f"wrote {dataset.T + dataset.lag_order} rows to {out}")
    return 0


def irf_table(store, horizon: int) -> pd.DataFrame:
    bands = analysis.irf_bands(store, horizon)
    names = store.meta.get("names") or [f"y{i + 1}" for i in range(store.meta["n"])]
    n = len(names)
    rows = []
    for m in (1, 2):
        q = bands[m]
        for h in range(horizon + 1):
            for j in range(n):
                for i in range(n):
                    rows.append((m, h, j + 1, names[i], q[0, h, i, j], q[1, h, i, j], q[2, h, i, j]))
    return pd.DataFrame(rows, columns=["state", "horizon", "shock", "variable", "q16", "q50", "q84"])


def fevd_table(store, horizon: int) -> pd.DataFrame:
    bands = analysis.fevd_bands(store, max(horizon, 1))
    names = store.meta.get("names") or [f"y{i + 1}" for i in range(store.meta["n"])]
    n = len(names)
    rows = []
    for m in (1, 2):
        q = bands[m]
        for h in range(q.shape[1]):
            for j in range(n):
                for i in range(n):
                    rows.append((m, h + 1, j + 1, names[i], q[0, h, i, j], q[1, h, i, j], q[2, h, i, j]))
    return pd.DataFrame(rows, columns=["state", "horizon", "shock", "variable", "q16", "q50", "q84"])


def cmd_analyze(args) -> int:
    store, dataset = io.load_store(args.store)
    if store.n_draws == 0:
        raise ValueError("store holds no draws")
    out = Path(args.out or args.store)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"store_hash": store.meta.get("content_hash", ""), "horizon": args.horizon,
            "seed": store.meta.get("config", {}).get("seed"),
            "config_hash": store.meta.get("config_hash", "")}
    io.write_csv(irf_table(store, args.horizon), out / "irf.csv", meta)
    io.write_csv(fevd_table(store, args.horizon), out / "fevd.csv", meta)
    rows = analysis.parameter_summaries(store, args.level)
    summary = pd.DataFrame(rows, columns=["parameter", "median", "mean", "hpd_low", "hpd_high"])
    io.write_csv(summary, out / "summary.csv", {**meta, "hpd_level": args.level})
    if dataset is not None:
        point = store.median_params()
        eps = analysis.shock_estimates(dataset, point)
        frame = pd.DataFrame(eps, columns=[f"shock{j + 1}" for j in range(eps.shape[1])])
        frame.insert(0, "t", np.arange(1, eps.shape[0] + 1))
        frame["prob_state1"] = store["state1_prob"][1:]
        io.write_csv(frame, out / "shocks.csv", {**meta, "point_estimate": "posterior median"})
    print(summary.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    om = store.omega2
    for (i, j), c in analysis.contrasts(om).items():
        stat, pval = analysis.lindley_test(c)
        print(f"omega2[{j + 1}]-omega2[{i + 1}]: Lindley statistic {stat:.3f}, p-value {pval:.4f}")
    print(f"tables written to {out}")
    return 0


def cmd_rank(args) -> int:
    overrides = _overrides(args)
    if args.method:
        overrides.setdefault("selection", {})["method"] = args.method
    cfg = io.load_config(args.config, overrides)
    dataset = io.load_dataset(args.data, cfg)
    hyper = io.hyperparameters_from_config(cfg, dataset)
    config = ChainConfig.from_dict(cfg["sampler"])
    ranks = args.ranks or cfg["selection"]["ranks"] or list(range(dataset.n + 1))
    method = cfg["selection"]["method"]
    res = sddr_rank(dataset, ranks, hyper, config, method=method)
    table = pd.DataFrame([(r, v.log10_bayes_factor, v.log_prior_at_zero, v.log_posterior_at_zero)
                          for r, v in res.items()],
                         columns=["rank", "log10_B_uc", "log_prior_at_0", "log_posterior_at_0"])
    best = int(table.loc[table["log10_B_uc"].idxmax(), "rank"])
    print(f"posterior density at the restriction: {method}")
    print(table.to_string(index=False, float_format=lambda v: f"{v:.3f}"))
    print(f"highest log10 B_uc at rank {best}")
    if args.out:
        io.write_csv(table, args.out, {"method": method, "config_hash": io.config_hash(cfg)})
    return 0


def cmd_ident(args) -> int:
    with open(args.solution) as fh:
        sol = StructuralSolution.from_dict(json.load(fh))
    sols = alternate_solutions(sol, args.tol)
    np.set_printoptions(precision=6, suppress=True)
    print(f"{len(sols)} observationally equivalent solution(s)")
    for k, s in enumerate(sols, start=1):
        tag = " (input)" if np.allclose(s.B, sol.B) and np.allclose(s.lambda1, sol.lambda1) else ""
        print(f"solution {k}{tag}")
        print(f"  B = {np.round(s.B, 10).tolist()}")
        print(f"  lambda1 = {np.round(s.lambda1, 10).tolist()}")
        print(f"  lambda2 = {np.round(s.lambda2, 10).tolist()}")
        print(f"  omega2 = {np.round(s.omega2, 10).tolist()}")
    report = check_theorem_conditions(sol, args.ordering)
    print("input solution:")
    for line in report.lines():
        print("  " + line)
    return 0


COMMANDS = {"estimate": cmd_estimate, "simulate": cmd_simulate, "analyze": cmd_analyze,
            "rank": cmd_rank, "ident": cmd_ident}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (SweepError, NumericalError) as exc:
        print(f"sampler aborted: {exc}", file=sys.stderr)
        return 3
    except (io.ConfigError, io.DataError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
