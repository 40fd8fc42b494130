"""Ground-truth evaluation, eigenvalue clustering and the real-data model
verification pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "subspace_error",
    "FrameMetrics",
    "frame_metrics",
    "epoch_se",
    "decay_ratios",
    "post_transient_mask",
    "ClusterReport",
    "cluster_eigenvalues",
    "ModelVerificationReport",
    "verify_model",
    "METRIC_COLUMNS",
]

METRIC_COLUMNS = ("t", "se_t", "err_s", "err_s_norm", "support_exact", "d_t", "rank_hat")
D_NORM_MIN = 1e-10


def subspace_error(P_hat, P):
    """``||(I - P_hat P_hat') P||_2`` for orthonormal ``P_hat`` and ``P``."""
    P = np.asarray(P, dtype=float)
    if P.shape[1] == 0:
        return 0.0
    P_hat = np.asarray(P_hat, dtype=float)
    R = P - P_hat @ (P_hat.T @ P) if P_hat.shape[1] else P
    return float(min(np.linalg.norm(R, 2), 1.0))


@dataclass
class FrameMetrics:
    """Per-frame evaluation series, one entry per processed frame."""

    t: np.ndarray
    se_t: np.ndarray
    err_s: np.ndarray
    err_s_norm: np.ndarray
    support_exact: np.ndarray
    d_t: np.ndarray
    rank_hat: np.ndarray

    def __len__(self):
        return self.t.size

    def columns(self):
        return {name: getattr(self, name) for name in METRIC_COLUMNS}

    def rows(self):
        for i in range(len(self)):
            yield (
                int(self.t[i]),
                float(self.se_t[i]),
                float(self.err_s[i]),
                float(self.err_s_norm[i]),
                bool(self.support_exact[i]),
                float(self.d_t[i]),
                int(self.rank_hat[i]),
            )

    def at(self, t):
        """Row index of frame ``t``."""
        i = int(t) - int(self.t[0])
        if not 0 <= i < len(self) or self.t[i] != t:
            raise KeyError(t)
        return i

    @property
    def support_rate(self):
        return float(np.mean(self.support_exact)) if len(self) else float("nan")


def _d_ratio(P_hat, P_new, T):
    D = P_new - P_hat @ (P_hat.T @ P_new) if P_hat.shape[1] else P_new
    nD = np.linalg.norm(D, 2)
    if nD < D_NORM_MIN or T.size == 0:
        return float("nan")
    return float(np.linalg.norm(D[T], 2) / nD)


def frame_metrics(result, dataset, alpha=None):
    """Evaluate a :class:`reprocs.subspace.RunResult` against the ground truth.

    ``se_t`` uses the estimate at the end of frame t. ``d_t`` uses the
    estimate the frame was processed with, ``D = (I - P_hat P_hat') P_{j,new}``
    and the true support ``T_t``; it is defined from ``t_j + alpha`` (after the
    first projection-PCA step) until the next change, and NaN elsewhere.
    """
    sched = dataset.schedule
    S = dataset.S[:, result.t - 1]
    err = result.s_hat - S
    err_s = np.linalg.norm(err, axis=0)
    s_norm = np.linalg.norm(S, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        err_norm = np.where(s_norm > 0, err_s / np.where(s_norm > 0, s_norm, 1.0), np.nan)
    n_frames = result.n_frames
    se = np.empty(n_frames)
    d = np.full(n_frames, np.nan)
    exact = np.empty(n_frames, dtype=bool)
    se_cache = {}
    for i, t in enumerate(result.t):
        t = int(t)
        j = sched.segment(t)
        key = (int(result.after[i]), j)
        if key not in se_cache:
            se_cache[key] = subspace_error(result.basis_after(i), sched.bases[j])
        se[i] = se_cache[key]
        T = np.asarray(dataset.supports[t - 1])
        exact[i] = np.array_equal(np.asarray(result.supports[i]), T)
        if alpha is not None and j >= 1 and sched.c_new[j - 1] > 0 and t >= sched.change_times[j - 1] + alpha:
            d[i] = _d_ratio(result.basis_used(i), sched.new_basis(j), T)
    return FrameMetrics(
        t=result.t.copy(),
        se_t=se,
        err_s=err_s,
        err_s_norm=err_norm,
        support_exact=exact,
        d_t=d,
        rank_hat=result.ranks,
    )


def epoch_se(metrics, change_times, alpha, K):
    """SE at the end of each projection-PCA epoch.

    Row j holds ``K + 1`` values: entry 0 is SE at ``t_j`` (before any update)
    and entry k is SE right after the k-th step, at ``t_j + k alpha - 1``.
    """
    out = np.full((len(change_times), K + 1), np.nan)
    for j, tj in enumerate(change_times):
        for k in range(K + 1):
            t = tj if k == 0 else tj + k * alpha - 1
            try:
                out[j, k] = metrics.se_t[metrics.at(t)]
            except KeyError:
                pass
    return out


def post_transient_mask(t, update_times, hold):
    """True for frames more than ``hold`` frames after the most recent subspace
    update. An update logged at frame u first affects frame u + 1, so frames
    ``u + 1 .. u + hold`` are masked; frames before any update are kept."""
    t = np.asarray(t)
    upd = np.sort(np.asarray(update_times, dtype=int))
    idx = np.searchsorted(upd, t, side="left") - 1  # last update strictly before t
    last = np.where(idx >= 0, upd[np.clip(idx, 0, None)], np.iinfo(int).min // 2)
    return t - last > hold


def decay_ratios(epochs, floor_factor=2.0):
    """Per-epoch ratios ``SE_k / SE_{k-1}`` taken only while ``SE_{k-1}`` is
    above ``floor_factor`` times the change's final SE (the floor)."""
    ratios = []
    for row in np.atleast_2d(epochs):
        floor = row[-1]
        for k in range(1, row.size):
            if row[k - 1] > floor_factor * floor:
                ratios.append(row[k] / row[k - 1])
    return np.array(ratios)


@dataclass
class ClusterReport:
    """Greedy partition of a decreasing eigenvalue list into clusters.

    ``g[i]`` is the within-cluster condition number ``lam_plus / lam_minus``;
    ``h[i]`` is the ratio of cluster ``i + 1``'s largest eigenvalue to cluster
    ``i``'s smallest.
    """

    clusters: list
    lam_plus: np.ndarray
    lam_minus: np.ndarray
    g: np.ndarray
    h: np.ndarray

    @property
    def vartheta(self):
        return len(self.clusters)

    @property
    def sizes(self):
        return [len(c) for c in self.clusters]

    @property
    def g_max(self):
        return float(self.g.max())

    @property
    def h_max(self):
        return float(self.h.max()) if self.h.size else 0.0

    @property
    def c_min(self):
        return min(self.sizes)


def cluster_eigenvalues(lambdas, h_threshold=0.5):
    """Start a new cluster whenever the next eigenvalue divided by the current
    cluster's smallest one drops below ``h_threshold``.

    >>> cluster_eigenvalues([100, 90, 9, 8, 1]).sizes
    [2, 2, 1]
    """
    lam = np.asarray(lambdas, dtype=float).ravel()
    if lam.size == 0:
        raise ValueError("need at least one eigenvalue")
    if np.any(lam <= 0):
        raise ValueError("eigenvalues must be positive")
    if np.any(np.diff(lam) > 0):
        raise ValueError("eigenvalues must be sorted in decreasing order")
    if not 0 < h_threshold <= 1:
        raise ValueError("h_threshold must lie in (0, 1]")
    clusters = [[0]]
    for i in range(1, lam.size):
        if lam[i] / lam[clusters[-1][-1]] < h_threshold:
            clusters.append([i])
        else:
            clusters[-1].append(i)
    plus = np.array([lam[c[0]] for c in clusters])
    minus = np.array([lam[c[-1]] for c in clusters])
    return ClusterReport(
        clusters=[np.array(c) for c in clusters],
        lam_plus=plus,
        lam_minus=minus,
        g=plus / minus,
        h=plus[1:] / minus[:-1],
    )


@dataclass
class ModelVerificationReport:
    rank_full: int
    r0: int
    lambda_minus: float
    c_new: list
    gamma_star: float
    ratio_series: list = field(default_factory=list)
    gamma_new_ratio: float = float("nan")
    v_fit: float = float("nan")
    clusters: ClusterReport | None = None

    @property
    def c_max(self):
        return max(self.c_new) if self.c_new else 0

    def summary(self):
        out = {
            "rank_full": self.rank_full,
            "r0": self.r0,
            "c_max": self.c_max,
            "c_new": list(self.c_new),
            "lambda_minus": self.lambda_minus,
            "gamma_star": self.gamma_star,
            "gamma_new_ratio": self.gamma_new_ratio,
            "v_fit": self.v_fit,
        }
        if self.clusters is not None:
            out.update(
                vartheta=self.clusters.vartheta,
                g_max=self.clusters.g_max,
                h_max=self.clusters.h_max,
                cluster_sizes=self.clusters.sizes,
            )
        return out


def _eig_desc(C):
    w, V = np.linalg.eigh(C)
    return w[::-1], V[:, ::-1]


def _energy_rank(w, frac, rel_tol):
    w = np.clip(w, 0.0, None)
    total = w.sum()
    if total <= 0:
        return 0
    nonzero = int(np.sum(w > rel_tol * w[0]))
    if frac >= 1.0:
        return nonzero
    k = int(np.searchsorted(np.cumsum(w), frac * total) + 1)
    return min(k, nonzero)


def _batch_eig(X):
    n, d = X.shape
    if d < n:
        # Gram route, mapped back
        w, V = _eig_desc(X.T @ X / d)
        keep = w > 0
        U = X @ V[:, keep] / np.sqrt(d * w[keep])
        return w[keep], U
    return _eig_desc(X @ X.T / d)


def verify_model(data, d, energy=0.90, retain=0.9999, alpha=40, rel_tol=1e-10, h_threshold=0.5):
    """Check the slow-subspace-change model on an ``n x t`` data matrix.

    The data are mean-subtracted and projected onto the eigenvectors holding
    ``energy`` of the total variance. ``P_0`` keeps ``retain`` of the first
    batch's energy and ``lambda_minus`` is its smallest retained eigenvalue
    (floored at ``rel_tol`` times the largest). Each later batch of ``d``
    frames is projected perpendicular to the current basis and the
    eigenvectors with eigenvalue ``>= lambda_minus`` become the new directions.

    Returns a :class:`ModelVerificationReport`; ``v_fit`` is the slope of a
    least-squares line through the log of the per-``alpha``-block maxima of
    ``||a_new||_inf``.
    """
    X = np.asarray(data, dtype=float)
    n, t_len = X.shape
    if d < 1 or t_len < 2 * d:
        raise ValueError(f"need at least two batches: t={t_len}, d={d}")
    X = X - X.mean(axis=1, keepdims=True)

    w, U = _batch_eig(X)
    if w.size == 0 or w[0] <= 0:
        raise ValueError("data is identically constant")
    k_full = _energy_rank(w, energy, rel_tol)
    P_full = U[:, :k_full]
    Lr = P_full @ (P_full.T @ X)
    clusters = cluster_eigenvalues(w[:k_full], h_threshold) if k_full else None

    w0, U0 = _batch_eig(Lr[:, :d])
    if w0.size == 0 or w0[0] <= 0:
        raise ValueError("first batch is degenerate")
    r0 = _energy_rank(w0, retain, rel_tol)
    P = U0[:, :r0]
    lam_minus = max(float(w0[r0 - 1]), rel_tol * float(w0[0]))

    c_new = []
    new_blocks = []  # (start, P_new)
    bases = [(0, P)]
    n_batches = t_len // d
    for b in range(1, n_batches):
        lo = b * d
        Y = Lr[:, lo : lo + d]
        Yp = Y - P @ (P.T @ Y)
        wb, Ub = _batch_eig(Yp)
        c = int(np.sum(wb >= lam_minus))
        c_new.append(c)
        if c:
            P_new = Ub[:, :c]
            P_new = P_new - P @ (P.T @ P_new)
            P_new, _ = np.linalg.qr(P_new)
            new_blocks.append((lo, P_new))
            P = np.hstack([P, P_new])
        bases.append((lo, P))

    gamma_star = 0.0
    for idx, (lo, B) in enumerate(bases):
        hi = bases[idx + 1][0] if idx + 1 < len(bases) else t_len
        if B.shape[1]:
            gamma_star = max(gamma_star, float(np.abs(B.T @ Lr[:, lo:hi]).max()))

    series = []
    log_max, steps = [], []
    first = []
    for lo, P_new in new_blocks:
        a_new = np.abs(P_new.T @ Lr[:, lo : lo + d]).max(axis=0)
        ratio = a_new / gamma_star if gamma_star > 0 else a_new
        series.append(ratio)
        for k, start in enumerate(range(0, ratio.size, alpha)):
            m = ratio[start : start + alpha].max()
            if k == 0:
                first.append(m)
            if m > 0:
                log_max.append(np.log(m))
                steps.append(k)
    v_fit = float("nan")
    if len(set(steps)) > 1:
        A = np.column_stack([np.ones(len(steps)), steps])
        coef, *_ = np.linalg.lstsq(A, np.array(log_max), rcond=None)
        v_fit = float(np.exp(coef[1]))
    return ModelVerificationReport(
        rank_full=k_full,
        r0=r0,
        lambda_minus=lam_minus,
        c_new=c_new,
        gamma_star=gamma_star,
        ratio_series=series,
        gamma_new_ratio=float(max(first)) if first else float("nan"),
        v_fit=v_fit,
        clusters=clusters,
    )
