import numpy as np
import pytest

from oracles import contiguous_partitions, dense_perp, random_basis
from reprocs.config import load_config
from reprocs.experiment import run_experiment
from reprocs.metrics import (
    cluster_eigenvalues,
    decay_ratios,
    epoch_se,
    post_transient_mask,
    subspace_error,
    verify_model,
)
from reprocs.model import make_dataset

CONFIGS = __import__("pathlib").Path(__file__).resolve().parents[1] / "configs"


def test_subspace_error_examples():
    rng = np.random.default_rng(0)
    P = random_basis(rng, 20, 3)
    Q, _ = np.linalg.qr(P @ rng.standard_normal((3, 3)))
    assert subspace_error(Q, P) <= 1e-10
    E = np.eye(6)
    assert subspace_error(E[:, :2], E[:, 2:4]) == pytest.approx(1.0)
    A, B = random_basis(rng, 20, 3), random_basis(rng, 20, 3)
    assert abs(subspace_error(A, B) - np.linalg.norm(dense_perp(B) @ A, 2)) <= 1e-10


def test_projection_norm_facts():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(6, 33))
        r = int(rng.integers(1, n // 3 + 1))
        P, Ph = random_basis(rng, n, r), random_basis(rng, n, r)
        zs = subspace_error(Ph, P)
        a = np.linalg.norm(dense_perp(Ph) @ P @ P.T, 2)
        b = np.linalg.norm(dense_perp(P) @ Ph @ Ph.T, 2)
        assert abs(a - zs) <= 1e-10 and abs(b - zs) <= 1e-10
        assert np.linalg.norm(P @ P.T - Ph @ Ph.T, 2) <= 2 * zs + 1e-10


def _desk(seed=0, **algorithm):
    cfg = load_config(CONFIGS / "desk_reprocs.yaml")
    if algorithm:
        cfg = cfg.replace(algorithm=algorithm)
    return cfg, run_experiment(cfg, seed)


@pytest.fixture(scope="module")
def desk_run():
    return _desk()


def test_frame_metrics_ranges_and_identity(desk_run):
    cfg, exp = desk_run
    fm, ds, res = exp.metrics, exp.dataset, exp.result
    assert len(fm) == cfg.model.t_max - cfg.model.t_train
    assert np.all((fm.se_t >= 0) & (fm.se_t <= 1))
    d = fm.d_t[~np.isnan(fm.d_t)]
    assert d.size and np.all((d >= 0) & (d <= 1))
    # e_t identity: S_hat - S = L - L_hat
    e = res.s_hat - ds.S[:, res.t - 1]
    l_err = ds.L[:, res.t - 1] - res.l_hat(ds.M)
    assert np.abs(e - l_err).max() <= 1e-12
    assert np.allclose(fm.err_s, np.linalg.norm(l_err, axis=0), rtol=0, atol=1e-12)


def test_d_t_defined_only_after_first_update(desk_run):
    cfg, exp = desk_run
    fm = exp.metrics
    t1, t2 = cfg.model.change_times
    alpha = cfg.algorithm.alpha
    assert np.all(np.isnan(fm.d_t[fm.t < t1 + alpha]))
    assert not np.any(np.isnan(fm.d_t[(fm.t >= t1 + alpha) & (fm.t < t2)]))


def test_perfect_estimates_give_zero_errors():
    from reprocs.subspace import ReprocsParams, run

    cfg = load_config(CONFIGS / "desk_reprocs.yaml").replace(
        model={"t_max": 200, "change_times": [], "c_new": [], "c_old": [], "delete_columns": []}
    )
    ds = make_dataset(cfg.model, 0)
    res = run(ds.M, ds.t_train, ReprocsParams(xi=1e-6, omega=1.0, alpha=40, K=1), basis=ds.schedule.bases[0])
    from reprocs.metrics import frame_metrics

    fm = frame_metrics(res, ds)
    assert fm.se_t.max() <= 1e-12
    assert fm.err_s.max() <= 1e-6
    assert fm.support_exact.all()


def test_epoch_se_and_decay(desk_run):
    cfg, exp = desk_run
    ep = epoch_se(exp.metrics, cfg.model.change_times, cfg.algorithm.alpha, cfg.algorithm.K)
    assert ep.shape == (2, cfg.algorithm.K + 1)
    t1 = cfg.model.change_times[0]
    assert ep[0, 1] == exp.metrics.se_t[exp.metrics.at(t1 + cfg.algorithm.alpha - 1)]
    r = decay_ratios(ep)
    assert r.size >= 2 and np.median(r) < 0.75


def test_decay_ratios_floor_rule():
    ep = np.array([[1.0, 0.1, 0.01, 0.011]])
    assert np.allclose(decay_ratios(ep), [0.1, 0.1])


def test_post_transient_mask():
    t = np.arange(1, 21)
    m = post_transient_mask(t, [5, 12], 3)
    kept = t[m].tolist()
    assert kept == [1, 2, 3, 4, 5, 9, 10, 11, 12, 16, 17, 18, 19, 20]


def test_cluster_example():
    rep = cluster_eigenvalues([100, 90, 9, 8, 1], 0.5)
    assert [c.tolist() for c in rep.clusters] == [[0, 1], [2, 3], [4]]
    assert np.allclose(rep.g, [100 / 90, 9 / 8, 1.0])
    assert rep.g_max == pytest.approx(9 / 8)
    assert np.allclose(rep.h, [9 / 90, 1 / 8])
    assert rep.h_max == pytest.approx(0.125)
    assert rep.vartheta == 3 and rep.c_min == 1


def test_cluster_all_equal():
    rep = cluster_eigenvalues([3.0] * 5)
    assert rep.vartheta == 1 and rep.g_max == 1.0 and rep.h_max == 0.0


def test_cluster_rejects_bad_input():
    for bad in ([], [1, 2], [1, -1]):
        with pytest.raises(ValueError):
            cluster_eigenvalues(bad)


def _threshold_consistent(lam, blocks, h):
    # a new block starts exactly where next / current-block-min drops below h
    for a, b in zip(blocks, blocks[1:]):
        if lam[b[0]] / lam[a[-1]] >= h:
            return False
    for blk in blocks:
        for i, k in zip(blk, blk[1:]):
            if lam[k] / lam[i] < h:
                return False
    return True


@pytest.mark.parametrize("seed", range(20))
def test_greedy_matches_unique_consistent_partition(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 9))
    lam = np.sort(np.exp(rng.uniform(-4, 4, m)))[::-1]
    h = float(rng.uniform(0.2, 0.8))
    ok = [p for p in contiguous_partitions(m) if _threshold_consistent(lam, p, h)]
    assert len(ok) == 1
    rep = cluster_eigenvalues(lam, h)
    assert [c.tolist() for c in rep.clusters] == ok[0]
    # disjoint ordered cover
    flat = np.concatenate(rep.clusters)
    assert flat.tolist() == list(range(m))
    for a, b in zip(rep.clusters, rep.clusters[1:]):
        assert lam[a].min() >= lam[b].max()


def test_verify_model_no_change():
    rng = np.random.default_rng(3)
    P = random_basis(rng, 40, 4)
    X = P @ rng.uniform(-3, 3, (4, 300)) + 5.0
    rep = verify_model(X, 60, energy=1.0, retain=1.0)
    assert rep.r0 == 4 and rep.c_max == 0


def test_verify_model_rejects_short_data():
    with pytest.raises(ValueError):
        verify_model(np.ones((5, 10)), 6)


def test_verify_model_synthetic_full_data():
    cfg = load_config(CONFIGS / "full_delta2.yaml").replace(model={"t_max": 3000})
    ds = make_dataset(cfg.model, 0)
    rep = verify_model(ds.L, 150, energy=1.0, retain=1 - 1e-8)
    assert rep.r0 == 36
    assert rep.c_max == 1
    assert sum(rep.c_new) == 2
    assert rep.summary()["c_max"] == 1
