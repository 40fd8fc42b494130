"""Seeded synthetic data: piecewise-constant subspaces, slowly ramping new
directions, and sparse outliers with a sliding (correlated) support.

Frames are 1-based (frame ``t`` is column ``t - 1``). Every random draw comes
from its own stream ``SeedSequence(seed, spawn_key=(component, t))`` so that
the low-rank coefficients, the sparse part and the training noise are
independent and any frame can be regenerated on its own.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ConfigError",
    "SubspaceSchedule",
    "CoeffProcessSpec",
    "SparseProcessSpec",
    "SyntheticDataset",
    "generate_schedule",
    "generate_lowrank",
    "generate_sparse",
    "assemble",
    "make_dataset",
    "rng_for",
    "STREAM_BASIS",
    "STREAM_COEFF",
    "STREAM_SPARSE",
    "STREAM_NOISE",
]

STREAM_BASIS = 0
STREAM_COEFF = 1
STREAM_SPARSE = 2
STREAM_NOISE = 3


class ConfigError(ValueError):
    """Inconsistent or infeasible model configuration."""


def rng_for(seed, component, t=0):
    """Generator for one (component, frame) stream."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(component), int(t)))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class SubspaceSchedule:
    """Ground-truth subspace model.

    ``bases[0]`` is ``P_0`` and ``bases[j]`` is ``P_j``, active for
    ``change_times[j-1] <= t < change_times[j]``. ``labels[j]`` maps each column
    of ``P_j`` to a direction id: ids ``< r0`` are the initial directions and id
    ``r0 + sum(c_new[:j-1]) + i`` is the i-th direction added at change j.
    """

    n: int
    t_train: int
    change_times: list
    bases: list
    labels: list
    c_new: list
    c_old: list
    rotations: list = field(default_factory=list)

    @property
    def J(self):
        return len(self.change_times)

    @property
    def ranks(self):
        return [b.shape[1] for b in self.bases]

    @property
    def r0(self):
        return self.bases[0].shape[1]

    @property
    def r_max(self):
        return max(self.ranks)

    def segment(self, t):
        """Index j of the basis active at frame t."""
        return int(np.searchsorted(np.asarray(self.change_times), t, side="right"))

    def basis_at(self, t):
        return self.bases[self.segment(t)]

    def new_basis(self, j):
        """``P_{j,new}``: the last ``c_new[j-1]`` columns of ``P_j`` (j >= 1)."""
        c = self.c_new[j - 1]
        P = self.bases[j]
        return P[:, P.shape[1] - c :]

    def direction_change(self, label):
        """1-based change index that introduced direction ``label`` (0 for initial ones)."""
        edge = self.r0
        for j, c in enumerate(self.c_new, start=1):
            if label < edge + c:
                return j
            edge += c
        raise KeyError(label)


def _orthonormal_gaussian(rng, n, m):
    G = rng.standard_normal((n, m))
    Q, R = np.linalg.qr(G)
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    return Q * d  # R with a nonnegative diagonal


def generate_schedule(n, t_train, r0, change_times=(), c_new=(), c_old=None, delete_columns=None, rotations=None, seed=0):
    """Build the bases by column-slicing one orthonormalized Gaussian matrix.

    ``delete_columns[j]`` lists 0-based positions in ``P_{j-1} R_j`` removed at
    change ``j + 1``; ``rotations[j]`` is ``R_{j+1}`` (identity when None).
    """
    change_times = [int(t) for t in change_times]
    c_new = [int(c) for c in c_new]
    J = len(change_times)
    if len(c_new) != J:
        raise ConfigError("c_new needs one entry per change time")
    if c_old is None:
        c_old = [0] * J
    c_old = [int(c) for c in c_old]
    if delete_columns is None:
        delete_columns = [[] for _ in range(J)]
    delete_columns = [[int(i) for i in cols] for cols in delete_columns]
    if len(c_old) != J or len(delete_columns) != J:
        raise ConfigError("c_old and delete_columns need one entry per change time")
    for j, (c, cols) in enumerate(zip(c_old, delete_columns)):
        if len(cols) != c or len(set(cols)) != c:
            raise ConfigError(f"change {j + 1}: c_old={c} but delete_columns={cols}")
    if rotations is None:
        rotations = [None] * J
    if J and change_times[0] <= t_train:
        raise ConfigError(f"first change time {change_times[0]} must exceed t_train={t_train}")
    if any(b <= a for a, b in zip(change_times, change_times[1:])):
        raise ConfigError("change_times must be strictly increasing")
    if r0 < 1 or r0 > n:
        raise ConfigError(f"r0={r0} must lie in [1, n={n}]")
    total = r0 + sum(c_new)
    if total > n:
        raise ConfigError(f"r0 + sum(c_new) = {total} exceeds n = {n}")

    U = _orthonormal_gaussian(rng_for(seed, STREAM_BASIS), n, total)
    bases = [U[:, :r0]]
    labels = [np.arange(r0)]
    edge = r0
    for j in range(J):
        prev, lab = bases[-1], labels[-1]
        R = rotations[j]
        if R is not None:
            R = np.asarray(R, dtype=float)
            if R.shape != (prev.shape[1], prev.shape[1]) or not np.allclose(R.T @ R, np.eye(R.shape[0]), atol=1e-12):
                raise ConfigError(f"rotation for change {j + 1} must be an orthonormal {prev.shape[1]}x{prev.shape[1]} matrix")
            prev = prev @ R
        cols = delete_columns[j]
        if any(i < 0 or i >= prev.shape[1] for i in cols):
            raise ConfigError(f"change {j + 1}: delete_columns {cols} out of range for rank {prev.shape[1]}")
        keep = np.setdiff1d(np.arange(prev.shape[1]), cols)
        new = U[:, edge : edge + c_new[j]]
        P = np.hstack([prev[:, keep], new])
        if P.shape[1] <= 0 or P.shape[1] > n:
            raise ConfigError(f"rank r_{j + 1} = {P.shape[1]} is infeasible")
        bases.append(P)
        labels.append(np.concatenate([lab[keep], np.arange(edge, edge + c_new[j])]))
        edge += c_new[j]
    return SubspaceSchedule(
        n=n,
        t_train=t_train,
        change_times=change_times,
        bases=bases,
        labels=labels,
        c_new=c_new,
        c_old=c_old,
        rotations=list(rotations),
    )


@dataclass
class CoeffProcessSpec:
    """Magnitude profile of the coefficients ``a_t``.

    Each entry is uniform on ``[-gamma_i, gamma_i]``. ``per_index_gamma`` gives
    ``gamma_i`` for the ``r0`` initial directions. A direction added at
    ``t_j`` has magnitude ``min(gamma_new * ramp_v**(min(k, ramp_steps[j]) - 1), gamma_star)``
    during the k-th interval of ``alpha`` frames after ``t_j``, and keeps its
    final value afterwards.
    """

    per_index_gamma: list
    gamma_new: float
    gamma_star: float
    ramp_v: float
    alpha: int
    ramp_steps: list | None = None

    def __post_init__(self):
        self.per_index_gamma = [float(g) for g in self.per_index_gamma]
        if self.alpha < 1:
            raise ConfigError("ramp interval alpha must be >= 1")
        if self.ramp_v < 1:
            raise ConfigError("ramp factor v must be >= 1")
        if self.gamma_new > self.gamma_star:
            raise ConfigError("gamma_new must not exceed gamma_star")
        if any(g <= 0 for g in self.per_index_gamma):
            raise ConfigError("per_index_gamma entries must be positive")
        if max(self.per_index_gamma) > self.gamma_star:
            raise ConfigError("per_index_gamma exceeds gamma_star")

    def steps_for(self, j):
        if self.ramp_steps is None:
            return None
        return self.ramp_steps[j - 1]

    def gamma_new_k(self, k, j=1):
        """Magnitude bound during the k-th ramp interval after change j."""
        steps = self.steps_for(j)
        kk = k if steps is None else min(k, steps)
        return min(self.ramp_v ** (kk - 1) * self.gamma_new, self.gamma_star)

    def gammas(self, schedule, t):
        """Per-column magnitudes of ``a_t`` for the basis active at frame t."""
        j = schedule.segment(t)
        out = np.empty(schedule.bases[j].shape[1])
        for pos, label in enumerate(schedule.labels[j]):
            if label < schedule.r0:
                out[pos] = self.per_index_gamma[label]
            else:
                jj = schedule.direction_change(label)
                k = (t - schedule.change_times[jj - 1]) // self.alpha + 1
                out[pos] = self.gamma_new_k(k, jj)
        return out

    @property
    def lambda_plus(self):
        return self.gamma_star**2 / 3.0


def generate_lowrank(schedule, coeff_spec, t_max, seed=0):
    """``L_t = P_(t) a_t`` for t = 1..t_max.

    Returns ``(L, coeffs)`` where ``coeffs[t-1]`` is ``a_t`` (length ``r_(t)``).
    """
    if len(coeff_spec.per_index_gamma) != schedule.r0:
        raise ConfigError(f"per_index_gamma has {len(coeff_spec.per_index_gamma)} entries, r0={schedule.r0}")
    if coeff_spec.ramp_steps is not None and len(coeff_spec.ramp_steps) != schedule.J:
        raise ConfigError("ramp_steps needs one entry per change time")
    L = np.empty((schedule.n, t_max))
    coeffs = []
    for t in range(1, t_max + 1):
        gam = coeff_spec.gammas(schedule, t)
        a = rng_for(seed, STREAM_COEFF, t).uniform(-1.0, 1.0, size=gam.size) * gam
        coeffs.append(a)
        L[:, t - 1] = schedule.basis_at(t) @ a
    return L, coeffs


@dataclass
class SparseProcessSpec:
    """Outlier process.

    ``delta`` is the support-shift period; ``None`` keeps the support fixed.
    ``mode='random'`` draws an independent uniformly random support of size
    ``s`` every frame.
    """

    s: int
    mag_range: tuple = (2.0, 3.0)
    delta: int | None = 2
    mode: str = "correlated"

    def __post_init__(self):
        self.mag_range = tuple(float(v) for v in self.mag_range)
        if self.s < 0:
            raise ConfigError("s must be nonnegative")
        if not 0 < self.mag_range[0] <= self.mag_range[1]:
            raise ConfigError("mag_range must be a positive interval")
        if self.mode not in ("correlated", "random"):
            raise ConfigError(f"unknown support mode {self.mode!r}")
        if self.delta is not None and self.delta < 1:
            raise ConfigError("delta must be >= 1 or None")

    @property
    def s_min(self):
        return self.mag_range[0]

    def shift(self, t, t_train):
        if self.delta is None:
            return 0
        return (t - t_train - 1) // self.delta


def generate_sparse(sparse_spec, t_max, t_train, n, seed=0):
    """Sparse matrix ``S`` (zero for t <= t_train) and the per-frame supports.

    In correlated mode the support ``{shift, ..., shift + s - 1}`` moves by one
    index every ``delta`` frames, with ``shift = (t - t_train - 1) // delta``;
    a support that would run past index ``n - 1`` is a configuration error.
    """
    s = sparse_spec.s
    if sparse_spec.mode == "correlated":
        last = sparse_spec.shift(t_max, t_train) + s if t_max > t_train else s
        if last > n:
            raise ConfigError(
                f"support would overflow: needs {last} indices but n={n} (reduce t_max, s or raise delta)"
            )
    elif s > n:
        raise ConfigError(f"s={s} exceeds n={n}")
    S = np.zeros((n, t_max))
    supports = []
    lo, hi = sparse_spec.mag_range
    for t in range(1, t_max + 1):
        if t <= t_train:
            supports.append(np.zeros(0, dtype=np.intp))
            continue
        rng = rng_for(seed, STREAM_SPARSE, t)
        if sparse_spec.mode == "correlated":
            start = sparse_spec.shift(t, t_train)
            T = np.arange(start, start + s)
        else:
            T = np.sort(rng.choice(n, size=s, replace=False))
        signs = np.where(rng.random(s) < 0.5, -1.0, 1.0)
        S[T, t - 1] = signs * rng.uniform(lo, hi, size=s)
        supports.append(T)
    return S, supports


@dataclass
class SyntheticDataset:
    """``M = L + S + N`` where the training noise ``N`` is zero for t > t_train."""

    M: np.ndarray
    L: np.ndarray
    S: np.ndarray
    N: np.ndarray
    schedule: SubspaceSchedule
    supports: list
    training_noise_amp: float
    coeffs: list | None = None

    @property
    def n(self):
        return self.M.shape[0]

    @property
    def t_max(self):
        return self.M.shape[1]

    @property
    def t_train(self):
        return self.schedule.t_train

    @property
    def training(self):
        """Observed training columns ``L_t + N_t``, t = 1..t_train."""
        return self.M[:, : self.t_train]

    def frame(self, t):
        return self.M[:, t - 1]

    def checksum(self):
        h = hashlib.sha256()
        for arr in (self.M, self.L, self.S, self.N):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()


def assemble(L, S, noise_amp, t_train, seed=0, schedule=None, supports=None, coeffs=None):
    """Add uniform ``[-noise_amp, noise_amp]`` noise to the first ``t_train`` frames."""
    L = np.asarray(L, dtype=float)
    S = np.asarray(S, dtype=float)
    if L.shape != S.shape:
        raise ValueError(f"shape mismatch: L {L.shape} vs S {S.shape}")
    if noise_amp < 0:
        raise ValueError("noise_amp must be nonnegative")
    N = np.zeros_like(L)
    if noise_amp > 0:
        for t in range(1, min(t_train, L.shape[1]) + 1):
            N[:, t - 1] = rng_for(seed, STREAM_NOISE, t).uniform(-noise_amp, noise_amp, size=L.shape[0])
    M = L + S + N
    return SyntheticDataset(
        M=M, L=L, S=S, N=N, schedule=schedule, supports=supports, training_noise_amp=noise_amp, coeffs=coeffs
    )


def make_dataset(cfg, seed):
    """Generate a full dataset from a :class:`reprocs.config.ModelConfig`."""
    sched = generate_schedule(
        cfg.n,
        cfg.t_train,
        cfg.r0,
        cfg.change_times,
        cfg.c_new,
        cfg.c_old,
        cfg.delete_columns,
        seed=seed,
    )
    coeff = CoeffProcessSpec(
        per_index_gamma=cfg.gamma_profile(),
        gamma_new=cfg.gamma_new,
        gamma_star=cfg.gamma_star,
        ramp_v=cfg.ramp_v,
        alpha=cfg.ramp_alpha,
        ramp_steps=cfg.ramp_steps,
    )
    sparse = SparseProcessSpec(s=cfg.s, mag_range=tuple(cfg.mag_range), delta=cfg.delta, mode=cfg.support_mode)
    L, coeffs = generate_lowrank(sched, coeff, cfg.t_max, seed=seed)
    S, supports = generate_sparse(sparse, cfg.t_max, cfg.t_train, cfg.n, seed=seed)
    return assemble(L, S, cfg.noise_amp, cfg.t_train, seed=seed, schedule=sched, supports=supports, coeffs=coeffs)


def lambda_bounds(coeff_spec, schedule):
    """``(lambda_minus, lambda_plus, f)`` for uniform coefficients (variance gamma^2 / 3)."""
    lo = min(min(coeff_spec.per_index_gamma), coeff_spec.gamma_new) if schedule.J else min(coeff_spec.per_index_gamma)
    hi = max(coeff_spec.per_index_gamma)
    for j in range(1, schedule.J + 1):
        steps = coeff_spec.steps_for(j)
        hi = max(hi, coeff_spec.gamma_new_k(steps if steps is not None else math.inf, j) if steps is not None else coeff_spec.gamma_star)
    return lo**2 / 3.0, hi**2 / 3.0, hi**2 / lo**2
