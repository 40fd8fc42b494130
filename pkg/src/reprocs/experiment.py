"""Seeded experiment runs and Monte Carlo aggregation."""

from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .io import read_csv, write_csv, write_json, write_metrics_csv
from .metrics import METRIC_COLUMNS, FrameMetrics, frame_metrics
from .model import make_dataset
from .subspace import run

__all__ = ["Experiment", "run_experiment", "aggregate", "monte_carlo", "seed_csv_name"]

_logger = logging.getLogger(__name__)

AGG_COLUMNS = METRIC_COLUMNS[1:]


@dataclass
class Experiment:
    seed: int
    dataset: object
    result: object
    metrics: FrameMetrics


def run_experiment(cfg, seed, variant=None):
    """Generate the dataset for ``seed``, run the driver and evaluate it."""
    variant = variant or cfg.algorithm.variant
    if variant != cfg.algorithm.variant:
        cfg = cfg.replace(algorithm={"variant": variant})
    ds = make_dataset(cfg.model, seed)
    res = run(ds.M, cfg.model.t_train, cfg.params(), r0=cfg.model.r0, variant=variant)
    fm = frame_metrics(res, ds, alpha=cfg.algorithm.alpha)
    return Experiment(seed=seed, dataset=ds, result=res, metrics=fm)


def seed_csv_name(seed):
    return f"seed_{seed:05d}.csv"


def _mc_worker(args):
    cfg_dict, seed, out, variant = args
    from .config import ExperimentConfig

    cfg = ExperimentConfig.from_dict(cfg_dict)
    exp = run_experiment(cfg, seed, variant)
    path = os.path.join(out, seed_csv_name(seed))
    write_metrics_csv(path, exp.metrics)
    return seed, path


def _load_series(path):
    header, rows = read_csv(path)
    if tuple(header) != METRIC_COLUMNS:
        raise ValueError(f"{path}: unexpected columns {header}")
    return np.array([[float(v) for v in row] for row in rows])


def aggregate(tables, quantiles=(0.1, 0.5, 0.9)):
    """Per-frame mean and quantiles over seeds plus a summary row.

    ``tables`` are arrays with the :data:`METRIC_COLUMNS` layout and identical
    frame columns. The result does not depend on the order of ``tables``.
    """
    if not tables:
        raise ValueError("nothing to aggregate")
    stack = np.stack([np.asarray(t, dtype=float) for t in tables])
    frames = stack[0, :, 0]
    if any(not np.array_equal(s[:, 0], frames) for s in stack):
        raise ValueError("runs cover different frames")
    # sort along the seed axis so that the reduction order is fixed
    data = np.sort(stack[:, :, 1:], axis=0)
    header = ["t"]
    for name in AGG_COLUMNS:
        header.append(f"{name}_mean")
        header.extend(f"{name}_q{int(round(100 * q)):02d}" for q in quantiles)
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(data, axis=0)
        qs = [np.nanquantile(data, q, axis=0) for q in quantiles]
        for i, t in enumerate(frames):
            row = [int(t)]
            for c in range(len(AGG_COLUMNS)):
                row.append(mean[i, c])
                row.extend(q[i, c] for q in qs)
            rows.append(row)
        summary = ["summary"]
        for c in range(len(AGG_COLUMNS)):
            summary.append(float(np.nanmean(mean[:, c])))
            summary.extend(float(np.nanmean(q[:, c])) for q in qs)
    rows.append(summary)
    return header, rows


def monte_carlo(cfg, seeds, out, workers=1, variant=None):
    """Run ``seeds`` (each written to its own CSV) and write ``aggregate.csv``.

    Failures are recorded in ``manifest.json`` and the remaining seeds are
    still aggregated. Returns the manifest dictionary.
    """
    os.makedirs(out, exist_ok=True)
    seeds = sorted(int(s) for s in seeds)
    jobs = [(cfg.to_dict(), s, out, variant) for s in seeds]
    done, failed = {}, {}
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            futures = {s: pool.submit(_mc_worker, job) for s, job in zip(seeds, jobs)}
            for s, fut in futures.items():
                try:
                    done[s] = fut.result()[1]
                except Exception as exc:  # keep the other seeds
                    failed[s] = f"{type(exc).__name__}: {exc}"
    else:
        for s, job in zip(seeds, jobs):
            try:
                done[s] = _mc_worker(job)[1]
            except Exception as exc:
                failed[s] = f"{type(exc).__name__}: {exc}"
    for s, msg in failed.items():
        _logger.error("seed %d failed: %s", s, msg)
    manifest = {
        "seeds": seeds,
        "completed": sorted(done),
        "failed": {str(s): failed[s] for s in sorted(failed)},
        "files": {str(s): os.path.basename(done[s]) for s in sorted(done)},
    }
    if done:
        header, rows = aggregate([_load_series(done[s]) for s in sorted(done)], cfg.run.quantiles)
        write_csv(os.path.join(out, "aggregate.csv"), header, rows)
        manifest["aggregate"] = "aggregate.csv"
    write_json(os.path.join(out, "manifest.json"), manifest)
    return manifest
