"""Subspace estimation: projection-PCA, cluster-PCA and the online ReProCS drivers.

Time indices are 1-based frame numbers: the training frames are
``t = 1..t_train`` and the online drivers process ``t > t_train`` one frame
at a time, in order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .recover import Projector, bpdn, estimate_support, ls_refine

__all__ = [
    "EigengapWarning",
    "RankDeficiencyWarning",
    "proj_pca",
    "fix_signs",
    "ReprocsParams",
    "ReprocsState",
    "FrameOutput",
    "init",
    "step",
    "step_cpca",
    "cluster_pca",
    "RunResult",
    "run",
]


class EigengapWarning(UserWarning):
    """Eigenvalues at the retained-rank cut are (numerically) tied."""


class RankDeficiencyWarning(UserWarning):
    """A retained eigenvalue is numerically zero."""


def fix_signs(Q):
    """Flip columns so that each column's largest-magnitude entry is positive."""
    if Q.shape[1] == 0:
        return Q
    idx = np.argmax(np.abs(Q), axis=0)
    signs = np.sign(Q[idx, np.arange(Q.shape[1])])
    signs[signs == 0] = 1.0
    return Q * signs


def _complete(Q, P, n, count):
    # deterministic completion with projected standard basis vectors
    cols = [Q] if Q.size else []
    have = np.hstack([P] + cols) if (P.size or cols) else np.zeros((n, 0))
    extra = []
    for i in range(n):
        if len(extra) == count:
            break
        v = np.zeros(n)
        v[i] = 1.0
        basis = np.hstack([have] + [e[:, None] for e in extra]) if extra else have
        if basis.size:
            v -= basis @ (basis.T @ v)
            v -= basis @ (basis.T @ v)
        nv = np.linalg.norm(v)
        if nv > 1e-6:
            extra.append(v / nv)
    return np.column_stack(extra) if extra else np.zeros((n, 0))


def proj_pca(D, P=None, r=0, return_eigenvalues=True):
    """Top-``r`` eigenvectors of ``(1/alpha) D_proj D_proj'`` with ``D_proj = (I - P P') D``.

    Parameters
    ----------
    D : array (n, alpha)
        Data columns.
    P : array (n, p) or None
        Orthonormal basis to project away; None or empty gives standard PCA.
    r : int
        Retained rank, ``r <= min(n, alpha)``.

    Returns
    -------
    Q : array (n, r)
        Orthonormal, perpendicular to ``P``; each column's largest-magnitude
        entry is positive.
    eigenvalues : array
        The nonzero-spectrum eigenvalues in decreasing order
        (``min(n, alpha)`` of them).
    """
    D = np.asarray(D, dtype=float)
    if D.ndim != 2:
        raise ValueError("D must be 2-d")
    n, alpha = D.shape
    if P is None:
        P = np.zeros((n, 0))
    P = np.asarray(P, dtype=float)
    if P.shape[0] != n:
        raise ValueError(f"P has {P.shape[0]} rows, D has {n}")
    if r < 0 or r > min(n, alpha):
        raise ValueError(f"retained rank r={r} must be in [0, min(n, alpha)={min(n, alpha)}]")
    Dp = D - P @ (P.T @ D) if P.shape[1] else D

    if alpha < n:
        # EVD of the alpha x alpha Gram matrix, mapped back to R^n
        w, V = np.linalg.eigh(Dp.T @ Dp / alpha)
    else:
        w, V = np.linalg.eigh(Dp @ Dp.T / alpha)
    order = np.argsort(-w, kind="stable")
    w = np.clip(w[order], 0.0, None)
    V = V[:, order]
    if r == 0:
        Q = np.zeros((n, 0))
        return (Q, w) if return_eigenvalues else Q

    lead = w[0] if w[0] > 0 else 1.0
    if r < w.size and w[r - 1] - w[r] < 1e-12 * lead:
        warnings.warn(
            f"degenerate eigen-gap at the rank-{r} cut ({w[r - 1]:.3e} vs {w[r]:.3e})",
            EigengapWarning,
            stacklevel=2,
        )
    good = int(np.sum(w[:r] > 1e-14 * lead)) if w[0] > 0 else 0
    if good < r:
        warnings.warn(
            f"only {good} of {r} retained eigenvalues are numerically nonzero",
            RankDeficiencyWarning,
            stacklevel=2,
        )
    if alpha < n:
        Q = Dp @ V[:, :good] / np.sqrt(alpha * w[:good])
    else:
        Q = V[:, :good]
    if good < r:
        Q = np.hstack([Q, _complete(Q, P, n, r - good)])
    if P.shape[1]:
        Q = Q - P @ (P.T @ Q)
    if np.abs(Q.T @ Q - np.eye(r)).max() > 1e-12:
        Qr, R = np.linalg.qr(Q)
        Q = Qr * np.sign(np.where(np.diag(R) == 0, 1.0, np.diag(R)))
    Q = fix_signs(Q)
    return (Q, w) if return_eigenvalues else Q


@dataclass
class ReprocsParams:
    """Algorithm knobs plus the model knowledge the drivers assume.

    ``change_times`` are 1-based frame indices ``t_j``; ``c_new[j]`` is the
    number of directions added at ``t_j``. The cPCA fields are only used by
    :func:`step_cpca`: ``cluster_sizes[j]`` lists the cluster sizes after the
    j-th change and must sum to ``r_j``.
    """

    xi: float
    omega: float
    alpha: int
    K: int
    change_times: list = field(default_factory=list)
    c_new: list = field(default_factory=list)
    alpha_tilde: int | None = None
    cluster_sizes: list | None = None
    tol: float = 1e-8
    max_iter: int = 5000
    max_outer: int = 60

    def __post_init__(self):
        self.change_times = [int(t) for t in self.change_times]
        self.c_new = [int(c) for c in self.c_new]
        if self.alpha < 1 or self.K < 1:
            raise ValueError("need alpha >= 1 and K >= 1")
        if self.omega < 0 or self.xi < 0:
            raise ValueError("need omega >= 0 and xi >= 0")
        if len(self.change_times) != len(self.c_new):
            raise ValueError("change_times and c_new must have equal length")
        if any(b <= a for a, b in zip(self.change_times, self.change_times[1:])):
            raise ValueError("change_times must be strictly increasing")
        if any(c < 0 for c in self.c_new):
            raise ValueError("c_new entries must be nonnegative")
        if self.cluster_sizes is not None:
            self.cluster_sizes = [[int(c) for c in sizes] for sizes in self.cluster_sizes]
            if len(self.cluster_sizes) != len(self.change_times):
                raise ValueError("need one cluster-size list per change time")
            if any(not sizes or min(sizes) < 1 for sizes in self.cluster_sizes):
                raise ValueError("cluster sizes must be positive")

    def validate_schedule(self, t_train, cpca=False):
        if self.change_times and self.change_times[0] <= t_train:
            raise ValueError(f"first change time {self.change_times[0]} must exceed t_train={t_train}")
        span = self.K * self.alpha
        if cpca:
            if self.alpha_tilde is None or self.cluster_sizes is None:
                raise ValueError("ReProCS-cPCA needs alpha_tilde and cluster_sizes")
        for j, (a, b) in enumerate(zip(self.change_times, self.change_times[1:])):
            need = span + (len(self.cluster_sizes[j]) * self.alpha_tilde if cpca else 0)
            if b - a < need:
                raise ValueError(f"t_{j + 2} - t_{j + 1} = {b - a} is shorter than the {need} frames the updates need")


@dataclass
class FrameOutput:
    t: int
    s_hat: np.ndarray
    l_hat: np.ndarray
    support: np.ndarray
    x_cs: np.ndarray
    y: np.ndarray
    rank: int


@dataclass
class ReprocsState:
    """Evolving subspace estimate and phase bookkeeping.

    ``p_star`` is the committed estimate ``P_{j-1}``; ``p_new`` the current
    estimate of the directions added at ``t_j``. ``j`` is the 1-based index of
    the next (or current) change time and ``k`` the next projection-PCA step.
    """

    p_star: np.ndarray
    p_new: np.ndarray
    t: int
    j: int = 1
    k: int = 1
    mode: str = "steady"
    buffer: list = field(default_factory=list)
    g_blocks: list = field(default_factory=list)
    events: list = field(default_factory=list)
    lam: float | None = None

    @property
    def n(self):
        return self.p_star.shape[0]

    @property
    def basis(self):
        if self.p_new.shape[1] == 0:
            return self.p_star
        return np.hstack([self.p_star, self.p_new])

    @property
    def rank(self):
        return self.p_star.shape[1] + self.p_new.shape[1]

    def copy(self):
        return ReprocsState(
            p_star=self.p_star.copy(),
            p_new=self.p_new.copy(),
            t=self.t,
            j=self.j,
            k=self.k,
            mode=self.mode,
            buffer=list(self.buffer),
            g_blocks=list(self.g_blocks),
            events=list(self.events),
            lam=self.lam,
        )


def init(training=None, r0=None, basis=None, t_train=None):
    """Initial state from training data (standard PCA) or a given ``P_0`` estimate.

    ``training`` is ``n x t_train``. With ``basis`` given, ``t_train`` must be
    passed so the driver knows where the online phase starts.
    """
    if basis is not None:
        basis = np.asarray(basis, dtype=float)
        if t_train is None:
            if training is None:
                raise ValueError("t_train is required with a precomputed basis")
            t_train = np.asarray(training).shape[1]
        Projector(basis)  # orthonormality check
        n = basis.shape[0]
        return ReprocsState(p_star=basis.copy(), p_new=np.zeros((n, 0)), t=int(t_train))
    if training is None:
        raise ValueError("need training data or a basis")
    training = np.asarray(training, dtype=float)
    n, t_len = training.shape
    if r0 is None:
        r0 = int(np.linalg.matrix_rank(training))
    if r0 > t_len:
        raise ValueError(f"t_train={t_len} is smaller than r0={r0}")
    with warnings.catch_warnings():
        warnings.simplefilter("error", RankDeficiencyWarning)
        try:
            P0, _ = proj_pca(training, None, r0)
        except RankDeficiencyWarning as exc:
            raise ValueError(f"training data has rank below r0={r0}: {exc}") from None
    return ReprocsState(p_star=P0, p_new=np.zeros((n, 0)), t=t_len)


def _recover(state, m, params):
    phi = Projector(state.basis, check=False)
    y = phi(m)
    x_cs, info = bpdn(
        y,
        phi,
        params.xi,
        tol=params.tol,
        max_iter=params.max_iter,
        max_outer=params.max_outer,
        lam0=state.lam,
        return_info=True,
    )
    if info.get("lam") is not None:
        state.lam = info["lam"]
    support = estimate_support(x_cs, params.omega)
    s_hat = ls_refine(y, phi, support)
    return x_cs, support, s_hat, y


def _advance(state, m, t, params):
    m = np.asarray(m, dtype=float)
    if m.shape != (state.n,):
        raise ValueError(f"frame has shape {m.shape}, expected ({state.n},)")
    if t != state.t + 1:
        raise ValueError(f"frames must be consecutive: got t={t} after t={state.t}")
    x_cs, support, s_hat, y = _recover(state, m, params)
    rank = state.rank
    l_hat = m - s_hat
    state.t = t
    return FrameOutput(t=t, s_hat=s_hat, l_hat=l_hat, support=support, x_cs=x_cs, y=y, rank=rank)


def _addition(state, l_hat, t, params):
    """Addition proj-PCA bookkeeping shared by both drivers; returns True when
    the K-th step fired at this frame."""
    J = len(params.change_times)
    if state.j > J or state.mode == "deletion":
        return False
    tj = params.change_times[state.j - 1]
    if t < tj:
        return False
    state.mode = "addition"
    state.buffer.append(l_hat)
    if t != tj + state.k * params.alpha - 1:
        return False
    c = params.c_new[state.j - 1]
    D = np.column_stack(state.buffer[-params.alpha :])
    state.buffer = []
    if c > 0:
        Q, ev = proj_pca(D, state.p_star, c)
        state.p_new = Q
        state.events.append(
            {"t": t, "event": "proj_pca", "j": state.j, "k": state.k, "rank": state.rank, "eigenvalues": ev[: c + 1].tolist()}
        )
    done = state.k == params.K
    state.k = 1 if done else state.k + 1
    return done


def step(state, m, t, params):
    """One ReProCS frame. Mutates and returns ``state``.

    Projection-PCA fires at ``t = t_j + k alpha - 1`` for ``k = 1..K`` on the
    last ``alpha`` estimated low-rank columns; after the K-th step the new
    directions are committed to ``P_j``.
    """
    out = _advance(state, m, t, params)
    if _addition(state, out.l_hat, t, params):
        state.p_star = state.basis
        state.p_new = np.zeros((state.n, 0))
        state.events.append({"t": t, "event": "commit", "j": state.j, "rank": state.rank})
        state.j += 1
        state.mode = "steady"
    return out, state


def cluster_pca(buffer, cluster_sizes, alpha_tilde=None):
    """Re-estimate the full subspace one eigenvalue cluster at a time.

    ``buffer`` holds ``len(cluster_sizes) * alpha_tilde`` columns in time order;
    block ``i`` estimates cluster ``i`` perpendicular to the clusters already
    found. Returns ``(P_hat, blocks)``.
    """
    buffer = np.asarray(buffer, dtype=float)
    n, cols = buffer.shape
    theta = len(cluster_sizes)
    if alpha_tilde is None:
        if cols % theta:
            raise ValueError("buffer length is not a multiple of the cluster count")
        alpha_tilde = cols // theta
    if cols != theta * alpha_tilde:
        raise ValueError(f"buffer has {cols} columns, expected {theta} x {alpha_tilde}")
    blocks = []
    found = np.zeros((n, 0))
    for i, size in enumerate(cluster_sizes):
        chunk = buffer[:, i * alpha_tilde : (i + 1) * alpha_tilde]
        G, _ = proj_pca(chunk, found, int(size))
        blocks.append(G)
        found = np.hstack([found, G])
    return found, blocks


def step_cpca(state, m, t, params):
    """One ReProCS-cPCA frame. Mutates and returns ``state``.

    Addition steps are as in :func:`step` but nothing is committed; from
    ``t_j + K alpha`` the estimated low-rank columns are buffered and at
    ``t_j + K alpha + theta_j alpha_tilde - 1`` cluster-PCA replaces the
    estimate by ``P_j`` of rank ``r_j``.
    """
    out = _advance(state, m, t, params)
    if state.mode == "deletion":
        sizes = params.cluster_sizes[state.j - 1]
        state.buffer.append(out.l_hat)
        tj = params.change_times[state.j - 1]
        if t == tj + params.K * params.alpha + len(sizes) * params.alpha_tilde - 1:
            P_hat, blocks = cluster_pca(np.column_stack(state.buffer), sizes, params.alpha_tilde)
            state.p_star = P_hat
            state.p_new = np.zeros((state.n, 0))
            state.g_blocks = blocks
            state.buffer = []
            state.events.append({"t": t, "event": "cluster_pca", "j": state.j, "rank": state.rank, "cluster_sizes": list(sizes)})
            state.j += 1
            state.mode = "steady"
        return out, state
    if _addition(state, out.l_hat, t, params):
        state.mode = "deletion"
    return out, state


@dataclass
class RunResult:
    """Output of :func:`run` over frames ``t_train + 1 .. t_max``.

    Bases are stored once per change: ``snapshots[used[i]]`` is the estimate
    used to process frame ``t[i]`` and ``snapshots[after[i]]`` the estimate at
    the end of that frame.
    """

    t: np.ndarray
    s_hat: np.ndarray
    supports: list
    snapshots: list
    used: np.ndarray
    after: np.ndarray
    events: list
    variant: str

    @property
    def ranks(self):
        return np.array([self.snapshots[i].shape[1] for i in self.after])

    @property
    def n_frames(self):
        return self.t.size

    def basis_used(self, i):
        return self.snapshots[self.used[i]]

    def basis_after(self, i):
        return self.snapshots[self.after[i]]

    def l_hat(self, M):
        """``L_hat = M - S_hat`` for the processed frames."""
        return M[:, self.t - 1] - self.s_hat


VARIANTS = {"reprocs": step, "reprocs-cpca": step_cpca}


def run(M, t_train, params, r0=None, variant="reprocs", basis=None, callback=None):
    """Run a driver over all frames of ``M`` after the training period.

    ``P_0`` is estimated from ``M[:, :t_train]`` by standard PCA of rank ``r0``
    unless ``basis`` is given.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {sorted(VARIANTS)}")
    M = np.asarray(M, dtype=float)
    n, t_max = M.shape
    if t_train >= t_max:
        raise ValueError(f"t_train={t_train} leaves no frames to process (t_max={t_max})")
    params.validate_schedule(t_train, cpca=variant == "reprocs-cpca")
    if basis is not None:
        state = init(basis=basis, t_train=t_train)
    else:
        state = init(M[:, :t_train], r0)
    driver = VARIANTS[variant]
    frames = np.arange(t_train + 1, t_max + 1)
    s_hat = np.zeros((n, frames.size))
    supports = []
    snapshots = [state.basis]
    used = np.zeros(frames.size, dtype=np.intp)
    after = np.zeros(frames.size, dtype=np.intp)
    for i, t in enumerate(frames):
        used[i] = len(snapshots) - 1
        n_events = len(state.events)
        out, state = driver(state, M[:, t - 1], int(t), params)
        if len(state.events) != n_events:
            snapshots.append(state.basis)
        after[i] = len(snapshots) - 1
        s_hat[:, i] = out.s_hat
        supports.append(out.support)
        if callback is not None:
            callback(out, state)
    return RunResult(
        t=frames,
        s_hat=s_hat,
        supports=supports,
        snapshots=snapshots,
        used=used,
        after=after,
        events=state.events,
        variant=variant,
    )
