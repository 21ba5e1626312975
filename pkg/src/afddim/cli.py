"""Command-line entry point: ``afddim {simulate,train,alloc,mi,util}``."""

import argparse
import csv
import json
import logging
import math
import os
import sys

import numpy as np
import yaml

from . import harness, infotheory, poweralloc
from .signal import ConfigurationError, build_constellation

log = logging.getLogger("afddim")


def _load_yaml(path):
    if path is None:
        return {}
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return data


def cmd_simulate(args):
    raw = _load_yaml(args.config)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["out"] = args.out
    if args.detector:
        raw["detectors"] = args.detector
    if args.steps is not None:
        raw["steps"] = args.steps
    if args.model is not None:
        raw["model"] = args.model
    if args.trials is not None:
        raw["trials"] = args.trials
    if args.workers is not None:
        raw["workers"] = args.workers
    cfg = harness.ExperimentConfig.from_dict(raw)
    os.makedirs(cfg.out, exist_ok=True)
    rows = harness.run_experiment(cfg)
    harness.emit_csv(rows, os.path.join(cfg.out, "results.csv"))
    harness.emit_timings(rows, os.path.join(cfg.out, "timings.csv"))
    harness.emit_plotdata(rows, os.path.join(cfg.out, "plotdata"))
    for r in rows:
        print(f"M={r.M:<4d} N={r.N:<4d} H={r.H:<3d} snr={r.snr_db:6.2f} {r.detector:<13s} "
              f"mse={r.mse:.4e} ser={r.ser:.4e} ber={r.ber:.4e} {r.status}")
    print(f"wrote {len(rows)} rows to {cfg.out}")
    return 0


def cmd_train(args):
    raw = _load_yaml(args.config)
    if args.seed is not None:
        raw["seed"] = args.seed
    cfg = harness.TrainConfig.from_dict(raw)
    model, report = harness.train_pipeline(cfg)
    out = args.out or "model"
    os.makedirs(out, exist_ok=True)
    model.save(os.path.join(out, "model.json"))
    with open(os.path.join(out, "train_report.json"), "w") as fh:
        json.dump(report, fh, indent=2)
    for i, loss in enumerate(report["loss_history"]):
        print(f"epoch {i + 1}: loss {loss:.6f}")
    ratio = report["val_eps_mse"] / report["val_eps_mse_bayes"]
    print(f"held-out eps-MSE {report['val_eps_mse']:.6f} (exact Bayes {report['val_eps_mse_bayes']:.6f}, ratio {ratio:.3f})")
    print(f"model written to {os.path.join(out, 'model.json')}")
    return 0


def cmd_alloc(args):
    raw = _load_yaml(args.config)
    if args.c:
        raw["c"] = args.c
    if args.p_total is not None:
        raw["p_total"] = args.p_total
    if args.p_max:
        raw["p_max"] = args.p_max
    if "c" not in raw or "p_total" not in raw:
        raise ConfigurationError("alloc needs c and p_total (config file or --c/--p-total)")
    problem = poweralloc.AllocationProblem(raw["c"], float(raw["p_total"]), raw.get("p_max"))
    res = poweralloc.solve(problem)
    print("relay      c_t            P_t         capped")
    for t, (c, p, pm) in enumerate(zip(problem.c, res.p, problem.p_max)):
        print(f"{t:5d}  {c:12.6g}  {p:14.10f}  {'yes' if p >= pm else 'no'}")
    print(f"mu = {res.mu:.12g}")
    print(f"objective = {res.objective:.12g}")
    print(f"kkt residual = {res.kkt_residual:.3e} after {res.iterations} bisection steps")
    return 0


def cmd_mi(args):
    raw = _load_yaml(args.config)
    orders = args.M or raw.get("M", [4, 16, 64])
    snrs = args.snr_db or raw.get("snr_db", list(range(-10, 31, 5)))
    header = ["snr_db", "gaussian"] + [f"qam{m}" for m in orders]
    table = []
    consts = [build_constellation(m) for m in orders]
    for s in snrs:
        g = 10.0 ** (float(s) / 10.0)
        row = [float(s), infotheory.mi_gaussian(g)] + [infotheory.mi_via_immse(c, g) for c in consts]
        # nats -> bits
        table.append([row[0]] + [v / math.log(2.0) for v in row[1:]])
    print("  ".join(f"{h:>10s}" for h in header) + "   (bits/symbol)")
    for row in table:
        print("  ".join(f"{v:10.4f}" for v in row))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "mi_bits.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows([[format(v, ".9g") for v in row] for row in table])
    return 0


def cmd_util(args):
    raw = _load_yaml(args.config)
    kw = {}
    for key, val in (("Ns", args.N or raw.get("N")), ("Ms", args.M or raw.get("M")),
                     ("Bs", args.bits or raw.get("B_csi"))):
        if val:
            kw[key] = tuple(int(v) for v in val)
    table, checks = harness.utilization_table(**kw)
    print("    N     M     B      eta")
    for N, M, B, eta in table:
        print(f"{N:5d} {M:5d} {B:5d}   {eta:.4f}")
    print()
    for c in checks:
        flag = "ok" if c["holds"] else f"DISCREPANCY: formula gives {c['eta']:.4f} < 0.95, need N >= {c['min_N']}"
        print(f"claim N >= {c['N']} for M = {c['M']} (B = {c['B']}): eta = {c['eta']:.4f}  {flag}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "utilization.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("N", "M", "B_csi", "eta"))
            w.writerows([(N, M, B, format(eta, ".9g")) for N, M, B, eta in table])
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="afddim", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML config file")
        sp.add_argument("--seed", type=int, help="master seed (overrides config)")
        sp.add_argument("--out", help="output directory")
        return sp

    sp = common(sub.add_parser("simulate", help="Monte-Carlo sweep over (M, N, H, SNR)"))
    sp.add_argument("--detector", action="append", choices=harness.DETECTORS,
                    help="detector to run (repeatable; overrides config)")
    sp.add_argument("--steps", type=int, help="reverse steps T (default: H)")
    sp.add_argument("--model", help="trained denoiser checkpoint for ddim-learned")
    sp.add_argument("--trials", type=int)
    sp.add_argument("--workers", type=int)
    sp.set_defaults(func=cmd_simulate)

    sp = common(sub.add_parser("train", help="train the learned denoiser"))
    sp.set_defaults(func=cmd_train)

    sp = common(sub.add_parser("alloc", help="solve a relay power allocation"))
    sp.add_argument("--c", type=float, nargs="+", help="per-relay channel-to-noise ratios")
    sp.add_argument("--p-total", type=float)
    sp.add_argument("--p-max", type=float, nargs="+")
    sp.set_defaults(func=cmd_alloc)

    sp = common(sub.add_parser("mi", help="mutual information curves in bits"))
    sp.add_argument("--M", type=int, nargs="+")
    sp.add_argument("--snr-db", type=float, nargs="+")
    sp.set_defaults(func=cmd_mi)

    sp = common(sub.add_parser("util", help="payload utilization table"))
    sp.add_argument("--N", type=int, nargs="+")
    sp.add_argument("--M", type=int, nargs="+")
    sp.add_argument("--bits", type=int, nargs="+", help="signalling bits per block")
    sp.set_defaults(func=cmd_util)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(over="ignore", under="ignore")
    try:
        return args.func(args)
    except (ConfigurationError, ValueError, OSError, KeyError, yaml.YAMLError) as exc:
        print(f"afddim {args.command}: error: {exc}", file=sys.stderr)
        return 2
