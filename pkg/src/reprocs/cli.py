"""Command line interface: ``reprocs {gen,run,mc,theory,verify,metrics}``."""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys

import numpy as np

from . import theory
from .config import ConfigError, dump_config, load_config
from .experiment import aggregate, monte_carlo
from .io import fmt_float, load_matrix, read_csv, save_matrix, write_csv, write_json, write_metrics_csv
from .metrics import METRIC_COLUMNS, cluster_eigenvalues, decay_ratios, verify_model
from .model import make_dataset
from .recover import BPDNConvergenceError, RankDeficientSupportError
from .subspace import run

_logger = logging.getLogger("reprocs")

SLOW_ENV = "REPROCS_SLOW"


def slow_enabled(args=None):
    return bool(getattr(args, "slow", False)) or os.environ.get(SLOW_ENV, "") not in ("", "0")


def _load(args):
    cfg = load_config(args.config)
    if getattr(args, "variant", None):
        cfg = cfg.replace(algorithm={"variant": args.variant})
    if cfg.run.slow and not slow_enabled(args):
        raise ConfigError(f"{args.config} is a full-scale configuration; pass --slow or set {SLOW_ENV}=1")
    return cfg


def _out_dir(args, cfg):
    out = args.out or cfg.run.out
    os.makedirs(out, exist_ok=True)
    return out


def _seed(args, cfg):
    return cfg.run.seeds[0] if args.seed is None else args.seed


def cmd_gen(args):
    cfg = _load(args)
    seed = _seed(args, cfg)
    out = _out_dir(args, cfg)
    ds = make_dataset(cfg.model, seed)
    for name in ("M", "L", "S", "N"):
        save_matrix(os.path.join(out, f"{name}.bin"), getattr(ds, name))
        if args.csv:
            A = getattr(ds, name)
            write_csv(os.path.join(out, f"{name}.csv"), [f"t{t}" for t in range(1, A.shape[1] + 1)], A.tolist())
    truth = {
        "seed": seed,
        "checksum": ds.checksum(),
        "n": ds.n,
        "t_max": ds.t_max,
        "t_train": ds.t_train,
        "change_times": ds.schedule.change_times,
        "ranks": ds.schedule.ranks,
        "labels": [lab.tolist() for lab in ds.schedule.labels],
        "supports": [T.tolist() for T in ds.supports],
    }
    write_json(os.path.join(out, "truth.json"), truth)
    dump_config(cfg, os.path.join(out, "resolved_config.yaml"))
    print(f"seed {seed}: wrote {ds.n}x{ds.t_max} dataset to {out} (sha256 {truth['checksum'][:16]})")
    return 0


def _dataset_for_run(args, cfg, seed):
    ds = make_dataset(cfg.model, seed)
    if not args.dataset:
        return ds, ds.M
    M = load_matrix(os.path.join(args.dataset, "M.bin") if os.path.isdir(args.dataset) else args.dataset)
    if M.shape != (cfg.model.n, cfg.model.t_max):
        raise ConfigError(
            f"dataset is {M.shape[0]}x{M.shape[1]} but the configuration expects n={cfg.model.n}, t_max={cfg.model.t_max}"
        )
    if not np.array_equal(M, ds.M):
        _logger.warning("dataset differs from the one generated by (config, seed %d); metrics are skipped", seed)
        return None, M
    return ds, M


def cmd_run(args):
    cfg = _load(args)
    seed = _seed(args, cfg)
    out = _out_dir(args, cfg)
    variant = cfg.algorithm.variant
    ds, M = _dataset_for_run(args, cfg, seed)
    try:
        res = run(M, cfg.model.t_train, cfg.params(), r0=cfg.model.r0, variant=variant)
    except (BPDNConvergenceError, RankDeficientSupportError) as exc:
        _logger.error("solver failure: %s", exc)
        return 3
    dump_config(cfg, os.path.join(out, "resolved_config.yaml"))
    write_json(os.path.join(out, "events.json"), res.events)
    if ds is not None:
        from .metrics import frame_metrics

        fm = frame_metrics(res, ds, alpha=cfg.algorithm.alpha)
        write_metrics_csv(os.path.join(out, "metrics.csv"), fm)
        print(
            f"seed {seed} [{variant}]: support exact {100 * fm.support_rate:.2f}%, "
            f"final SE {fm.se_t[-1]:.3e}, final rank {fm.rank_hat[-1]}"
        )
    else:
        save_matrix(os.path.join(out, "S_hat.bin"), res.s_hat)
        print(f"seed {seed} [{variant}]: wrote S_hat for {res.n_frames} frames")
    return 0


def cmd_mc(args):
    cfg = _load(args)
    out = _out_dir(args, cfg)
    seeds = list(range(args.seeds)) if args.seeds is not None else cfg.run.seeds
    workers = args.workers or cfg.run.workers
    dump_config(cfg, os.path.join(out, "resolved_config.yaml"))
    manifest = monte_carlo(cfg, seeds, out, workers=workers, variant=cfg.algorithm.variant)
    print(f"{len(manifest['completed'])}/{len(seeds)} seeds completed; aggregate in {out}")
    return 0 if not manifest["failed"] else 3


def cmd_theory(args):
    r0 = args.r0 if args.r0 is not None else args.r
    cap = theory.zeta_cap(args.r, args.f, args.gamma_star)
    zeta = args.zeta if args.zeta is not None else cap * args.cap_fraction
    rows = [
        ("zeta", zeta),
        ("zeta_cap", cap),
        ("admissible", zeta <= cap * (1 + 1e-12)),
        ("K", theory.k_of_zeta(zeta, args.c)),
    ]
    K = rows[-1][1]
    if args.gamma_new is not None:
        rows.append(("xi0", theory.xi0(zeta, args.c, args.r, args.gamma_new)))
    if None not in (args.gamma_new, args.gamma_star, args.lambda_minus, args.n):
        rows.append(("alpha_add", theory.alpha_add(zeta, K, args.J, args.n, args.c, args.gamma_new, args.gamma_star, args.lambda_minus)))
        rows.append(
            (
                "alpha_add_simplified",
                theory.alpha_add(zeta, K, args.J, args.n, args.c, args.gamma_new, args.gamma_star, args.lambda_minus, simplified=True),
            )
        )
    if None not in (args.gamma_star, args.lambda_minus, args.n, args.vartheta):
        rows.append(("alpha_del", theory.alpha_del(zeta, args.vartheta, args.J, args.n, args.r, args.gamma_star, args.lambda_minus)))
    try:
        seq = theory.zeta_plus_sequence(theory.TheoryConstants(zeta=zeta, r=args.r, c=args.c, f=args.f, r0=r0), j=args.j, K=K)
        rows.append(("zeta_star_plus", seq.zeta_star))
        for k, v in enumerate(seq.values):
            rows.append((f"zeta_plus_{k}", v))
            if k:
                rows.append((f"bound_{k}", 0.6**k + 0.4 * args.c * zeta))
    except ValueError as exc:
        rows.append(("zeta_plus_error", str(exc)))

    def text(v):
        if isinstance(v, bool):
            return str(v).lower()
        if isinstance(v, float):
            return fmt_float(v)
        return str(v)

    if args.format == "csv":
        if args.out:
            write_csv(args.out, ["quantity", "value"], [(k, text(v)) for k, v in rows])
        else:
            print("quantity,value")
            for k, v in rows:
                print(f"{k},{text(v)}")
    else:
        width = max(len(k) for k, _ in rows)
        for k, v in rows:
            print(f"{k:<{width}}  {text(v)}")
    return 0


def cmd_verify(args):
    if args.matrix:
        data = load_matrix(args.matrix)
    else:
        cfg = _load(args)
        ds = make_dataset(cfg.model, _seed(args, cfg))
        data = ds.L
    rep = verify_model(data, args.d, energy=args.energy, retain=args.retain, alpha=args.alpha, h_threshold=args.h_threshold)
    summary = rep.summary()
    summary["ratio_series"] = [s.tolist() for s in rep.ratio_series]
    if args.out:
        write_json(args.out, summary)
    for key in ("rank_full", "r0", "c_max", "lambda_minus", "gamma_star", "gamma_new_ratio", "v_fit"):
        v = summary[key]
        print(f"{key:<16} {fmt_float(v) if isinstance(v, float) else v}")
    return 0


def _csv_table(path):
    header, rows = read_csv(path)
    if tuple(header) != METRIC_COLUMNS:
        raise ConfigError(f"{path} does not have the per-frame metric columns")
    return np.array([[float(v) for v in row] for row in rows])


def cmd_metrics(args):
    if args.eigenvalues:
        lam = sorted((float(v) for v in args.eigenvalues.split(",")), reverse=True)
        rep = cluster_eigenvalues(lam, args.h_threshold)
        print(f"clusters   {[[lam[i] for i in c] for c in rep.clusters]}")
        print(f"g_max      {fmt_float(rep.g_max)}")
        print(f"h_max      {fmt_float(rep.h_max)}")
        print(f"vartheta   {rep.vartheta}")
        print(f"c_min      {rep.c_min}")
        return 0
    if not args.csv:
        raise ConfigError("metrics needs --csv or --eigenvalues")
    tables = [_csv_table(p) for p in args.csv]
    if len(tables) > 1:
        header, rows = aggregate(tables)
        if args.out:
            write_csv(args.out, header, rows)
    tab = tables[0] if len(tables) == 1 else np.mean(np.stack(tables), axis=0)
    t = tab[:, 0].astype(int)
    se = tab[:, 1]
    print(f"frames           {t[0]}..{t[-1]}")
    print(f"support exact    {fmt_float(np.mean(tab[:, 4]))}")
    print(f"mean err_s_norm  {fmt_float(np.nanmean(tab[:, 3]))}")
    print(f"final SE         {fmt_float(se[-1])}")
    print(f"max d_t          {fmt_float(np.nanmax(tab[:, 5])) if np.any(~np.isnan(tab[:, 5])) else 'nan'}")
    if args.config:
        cfg = load_config(args.config)
        a = cfg.algorithm
        ep = np.full((len(cfg.model.change_times), a.K + 1), math.nan)
        for j, tj in enumerate(cfg.model.change_times):
            for k in range(a.K + 1):
                tt = tj if k == 0 else tj + k * a.alpha - 1
                idx = np.flatnonzero(t == tt)
                if idx.size:
                    ep[j, k] = se[idx[0]]
        for j, row in enumerate(ep, start=1):
            print(f"epoch SE t_{j}    {' '.join(fmt_float(v) for v in row)}")
        ratios = decay_ratios(ep)
        if ratios.size:
            print(f"median ratio     {fmt_float(np.median(ratios))}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="reprocs", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="YAML experiment configuration")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None, help="output directory (default: run.out)")
        sp.add_argument("--variant", choices=["reprocs", "reprocs-cpca"], default=None)
        sp.add_argument("--slow", action="store_true", help=f"allow full-scale configurations (or set {SLOW_ENV}=1)")

    sp = sub.add_parser("gen", help="generate a synthetic dataset")
    common(sp)
    sp.add_argument("--csv", action="store_true", help="also export matrices as CSV")
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("run", help="run ReProCS on one seed and write per-frame metrics")
    common(sp)
    sp.add_argument("--dataset", default=None, help="directory written by 'gen' (or a matrix file)")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("mc", help="Monte Carlo over seeds with aggregation")
    common(sp)
    sp.add_argument("--seeds", type=int, default=None, help="number of seeds (0..N-1)")
    sp.add_argument("--workers", type=int, default=None)
    sp.set_defaults(func=cmd_mc)

    sp = sub.add_parser("theory", help="parameter calculator and condition checks")
    sp.add_argument("--r", type=int, required=True)
    sp.add_argument("--c", type=int, required=True)
    sp.add_argument("--f", type=float, required=True)
    sp.add_argument("--r0", type=int, default=None)
    sp.add_argument("--j", type=int, default=1)
    sp.add_argument("--zeta", type=float, default=None)
    sp.add_argument("--cap-fraction", type=float, default=1.0)
    sp.add_argument("--gamma-new", type=float, default=None)
    sp.add_argument("--gamma-star", type=float, default=None)
    sp.add_argument("--lambda-minus", type=float, default=None)
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--J", type=int, default=1)
    sp.add_argument("--vartheta", type=int, default=None)
    sp.add_argument("--format", choices=["text", "csv"], default="text")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_theory)

    sp = sub.add_parser("verify", help="model verification on a data matrix (columns are frames)")
    common(sp, config_required=False)
    sp.add_argument("--matrix", default=None, help="matrix container file; otherwise L from --config")
    sp.add_argument("--d", type=int, default=150)
    sp.add_argument("--energy", type=float, default=0.90)
    sp.add_argument("--retain", type=float, default=0.9999)
    sp.add_argument("--alpha", type=int, default=40)
    sp.add_argument("--h-threshold", type=float, default=0.5)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("metrics", help="summarise per-frame CSVs or cluster eigenvalues")
    sp.add_argument("--csv", nargs="*", default=None)
    sp.add_argument("--config", default=None)
    sp.add_argument("--out", default=None)
    sp.add_argument("--eigenvalues", default=None, help="comma-separated eigenvalues to cluster")
    sp.add_argument("--h-threshold", type=float, default=0.5)
    sp.set_defaults(func=cmd_metrics)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "verify" and not args.matrix and not args.config:
        print("error: verify needs --matrix or --config", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
