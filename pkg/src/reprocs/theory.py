"""Closed-form parameter calculators and denseness / RIC diagnostics.

Everything here is a pure function of its arguments. The calculators mirror
the parameter choices of the ReProCS and ReProCS-cPCA guarantees: the number
of projection-PCA steps ``K``, the CS noise bound ``xi0``, the data lengths
``alpha_add`` / ``alpha_del``, the ``zeta_k^+`` bound sequence and the
cluster-condition functions ``f_inc`` / ``f_dec``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import orth

__all__ = [
    "TheoryConstants",
    "ZetaSequence",
    "zeta_cap",
    "k_of_zeta",
    "xi0",
    "alpha_add",
    "alpha_del",
    "zeta_plus_sequence",
    "f_inc",
    "f_dec",
    "cluster_condition",
    "small_f_condition",
    "kappa_s",
    "ric_delta_s",
    "MAX_SUBSETS",
]

#: Largest number of index subsets an exact kappa_s / delta_s enumeration may visit.
MAX_SUBSETS = 2_000_000

PHI_PLUS_ADD = 1.1735
PHI_PLUS_DEL = 1.1732


@dataclass
class TheoryConstants:
    """Bundle of model bounds used by the bound sequences.

    ``r`` is the rank bound used in the admissible-``zeta`` cap and ``r0`` the
    initial rank entering ``zeta_*^+ = (r0 + (j-1) c) zeta``; ``r0`` defaults
    to ``r`` (the worst case).
    """

    zeta: float
    r: int
    c: int
    f: float
    r0: int | None = None
    g_plus: float = math.sqrt(2.0)
    kappa_star_plus: float = 0.3
    kappa_new_plus: float = 0.15
    # the recursion for zeta_k^+ is evaluated with kappa_s^+ = 0.15; the
    # D_{new,k} denseness condition itself uses 0.152 (see kappa_d_condition)
    kappa_s_plus: float = 0.15
    kappa_d_condition: float = 0.152
    kappa_tilde_plus: float = 0.15
    phi_plus: float = PHI_PLUS_ADD
    gamma_star: float | None = None
    gamma_new: float | None = None
    lambda_minus: float | None = None

    def __post_init__(self):
        if self.r0 is None:
            self.r0 = self.r
        if self.zeta <= 0:
            raise ValueError("zeta must be positive")
        if self.r < 1 or self.c < 0 or self.f < 1:
            raise ValueError("need r >= 1, c >= 0 and f >= 1")

    @property
    def cap(self) -> float:
        return zeta_cap(self.r, self.f, self.gamma_star)

    def admissible(self) -> bool:
        return self.zeta <= self.cap * (1 + 1e-12)


def zeta_cap(r: int, f: float, gamma_star: float | None = None) -> float:
    """Largest admissible accuracy parameter.

    ``min(1e-4 / r^2, 1.5e-4 / (r^2 f), 1 / (r^3 gamma_*^2))``; the last term
    is dropped when ``gamma_star`` is None.
    """
    terms = [1e-4 / r**2, 1.5e-4 / (r**2 * f)]
    if gamma_star is not None:
        terms.append(1.0 / (r**3 * gamma_star**2))
    return min(terms)


def _ceil(x: float) -> int:
    # snap values that are an integer up to a few ulps so ceil(2 + 4e-16) == 2
    nearest = round(x)
    if abs(x - nearest) <= 8 * math.ulp(max(1.0, abs(x))):
        return int(nearest)
    return math.ceil(x)


def k_of_zeta(zeta: float, c: float) -> int:
    """Number of addition projection-PCA steps, ``ceil(log(0.6 c zeta) / log 0.6)``.

    Clamped to 1 when ``0.6 c zeta >= 1``.
    """
    if c * zeta <= 0:
        raise ValueError(f"c * zeta must be positive, got c={c}, zeta={zeta}")
    arg = 0.6 * c * zeta
    if arg >= 1.0:
        return 1
    return max(1, _ceil(math.log(arg) / math.log(0.6)))


def xi0(zeta: float, c: float, r: float, gamma_new: float) -> float:
    """CS noise bound ``sqrt(c) gamma_new + sqrt(zeta) (sqrt(r) + sqrt(c))``."""
    if min(zeta, c, r, gamma_new) < 0:
        raise ValueError("xi0 inputs must be nonnegative")
    return math.sqrt(c) * gamma_new + math.sqrt(zeta) * (math.sqrt(r) + math.sqrt(c))


def alpha_add(zeta, K, J, n, c, gamma_new, gamma_star, lambda_minus, simplified=False) -> int:
    """Projection-PCA data length for the addition steps.

    With ``simplified=True`` the ``gamma_*^4`` variant is returned; it dominates
    the full value whenever ``gamma_*^4`` exceeds every argument of the max.
    """
    if min(zeta, K, J, n, c, gamma_new, gamma_star, lambda_minus) <= 0:
        raise ValueError("alpha_add inputs must be positive")
    log_term = math.log(6 * K * J) + 11 * math.log(n)
    scale = 8 * 24**2 / (zeta**2 * lambda_minus**2)
    if simplified:
        return _ceil(log_term * scale * gamma_star**4)
    tail = max(
        min(1.2 ** (4 * K) * gamma_new**4, gamma_star**4),
        16.0 / c**2,
        4 * (0.186 * gamma_new**2 + 0.0034 * gamma_new + 2.3) ** 2,
    )
    return _ceil(log_term * scale * tail)


def alpha_del(zeta, vartheta_max, J, n, r, gamma_star, lambda_minus, phi_plus=PHI_PLUS_DEL) -> int:
    """Cluster-PCA data length ``alpha_del(zeta)``."""
    if min(zeta, vartheta_max, J, n, r, gamma_star, lambda_minus) <= 0:
        raise ValueError("alpha_del inputs must be positive")
    b7 = (math.sqrt(r) * gamma_star + phi_plus * math.sqrt(zeta)) ** 2
    log_term = math.log(6 * vartheta_max * J) + 11 * math.log(n)
    return _ceil(log_term * 8 * 10**2 / (zeta * lambda_minus) ** 2 * max(4.2**2, 4 * b7**2))


@dataclass
class ZetaSequence:
    values: list[float]
    denominators: list[float]
    zeta_star: float
    b: list[float] = field(default_factory=list)

    def __getitem__(self, k):
        return self.values[k]

    def __len__(self):
        return len(self.values)


def zeta_plus_sequence(constants: TheoryConstants, j: int = 1, K: int | None = None) -> ZetaSequence:
    """High-probability bounds ``zeta_{j,k}^+`` for k = 0..K.

    ``values[0] == 1``; ``denominators[k-1]`` is the denominator used for step
    k. Raises ValueError naming k if a denominator is not positive.
    """
    cst = constants
    if K is None:
        K = k_of_zeta(cst.zeta, cst.c)
    zeta, c, f = cst.zeta, cst.c, cst.f
    kap, phi, g = cst.kappa_s_plus, cst.phi_plus, cst.g_plus
    zs = (cst.r0 + (j - 1) * c) * zeta
    if zs >= 1:
        raise ValueError(f"zeta_* = {zs} must be below 1")
    root = math.sqrt(1 - zs**2)
    C = 2 * kap * phi / root + phi
    C_prime = phi**2 + 2 * phi / root + 1 + phi + kap * phi / root + kap * phi**2 / root
    C_tilde = phi**2 + kap * phi**2 / root

    values, dens, bs = [1.0], [], []
    for k in range(1, K + 1):
        prev = values[-1]
        b = C * kap * g * prev + C_tilde * kap**2 * g * prev**2 + C_prime * f * zs**2
        den = 1 - zs**2 - zs**2 * f - 0.125 * c * zeta - b
        if den <= 0:
            raise ValueError(f"non-positive denominator {den!r} at k={k}")
        bs.append(b)
        dens.append(den)
        values.append((b + 0.125 * c * zeta) / den)
    return ZetaSequence(values=values, denominators=dens, zeta_star=zs, b=bs)


def f_inc(g_t, h_t, kappa_se, kappa_sd, r, c, zeta, f, phi_plus=PHI_PLUS_DEL) -> float:
    """Increasing (in g_t, h_t) numerator of the cluster-PCA error bound."""
    rz2 = (r * zeta) ** 2
    if rz2 >= 1:
        raise ValueError("r * zeta must be below 1")
    first = max(3 * kappa_se * kappa_sd * phi_plus * g_t, kappa_se * phi_plus * h_t)
    second = (kappa_se * phi_plus + kappa_se * (1 + 2 * phi_plus) * rz2 / math.sqrt(1 - rz2)) * h_t
    third = (
        r**2 / (r + c) * zeta
        + 4 * r * zeta * kappa_se * phi_plus
        + 2 * (r + c) * zeta * (1 + kappa_se**2) * phi_plus**2
    ) * f
    return (r + c) * zeta * (first + second + third + 0.2 / (r + c))


def f_dec(g_t, h_t, kappa_se, kappa_sd, r, c, zeta, f, phi_plus=PHI_PLUS_DEL) -> float:
    """Decreasing (in g_t, h_t) denominator of the cluster-PCA error bound."""
    inc = f_inc(g_t, h_t, kappa_se, kappa_sd, r, c, zeta, f, phi_plus)
    return 1 - h_t - 0.2 * zeta - r**2 * zeta**2 * f - r**2 * zeta**2 - inc


def cluster_condition(g_max, h_max, c_min, kappa_se, kappa_star, r, c, zeta, f, phi_plus=PHI_PLUS_DEL) -> bool:
    """Clustered-eigenvalue condition ``f_dec - f_inc / (c_min zeta) > 0``.

    Both functions are evaluated at ``kappa_sD = kappa_star + r zeta``.
    """
    kd = kappa_star + r * zeta
    inc = f_inc(g_max, h_max, kappa_se, kd, r, c, zeta, f, phi_plus)
    dec = f_dec(g_max, h_max, kappa_se, kd, r, c, zeta, f, phi_plus)
    return dec - inc / (c_min * zeta) > 0


def small_f_condition(r_j, kappa_se, kappa_star, r, c, zeta, f, phi_plus=PHI_PLUS_DEL) -> bool:
    """Single-cluster (small f) condition ``f_inc(f, 0) <= f_dec(f, 0) r_j zeta``."""
    kd = kappa_star + r * zeta
    inc = f_inc(f, 0.0, kappa_se, kd, r, c, zeta, f, phi_plus)
    dec = f_dec(f, 0.0, kappa_se, kd, r, c, zeta, f, phi_plus)
    return inc <= dec * r_j * zeta


def _subsets(n: int, s: int):
    if math.comb(n, s) > MAX_SUBSETS:
        raise ValueError(
            f"C({n},{s}) = {math.comb(n, s)} subsets exceeds the exact-enumeration guard "
            f"({MAX_SUBSETS}); use mode='bound'"
        )
    return itertools.combinations(range(n), s)


def _chunks(iterable, size=20_000):
    it = iter(iterable)
    while True:
        block = list(itertools.islice(it, size))
        if not block:
            return
        yield np.array(block, dtype=np.intp)


def kappa_s(B, s: int, mode: str = "exact") -> float:
    """Denseness coefficient ``max_{|T| <= s} ||I_T' basis(B)||_2``.

    ``mode='bound'`` returns ``min(1, sqrt(s) kappa_1)`` without enumeration.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    Q = orth(B)
    n = Q.shape[0]
    if Q.shape[1] == 0 or s <= 0:
        return 0.0
    s = min(s, n)
    row_norms = np.linalg.norm(Q, axis=1)
    if mode == "bound":
        return float(min(1.0, math.sqrt(s) * row_norms.max()))
    if mode != "exact":
        raise ValueError(f"unknown mode {mode!r}")
    if s == 1:
        return float(row_norms.max())
    # kappa_s is nondecreasing in s, so subsets of size exactly s suffice
    best = 0.0
    for idx in _chunks(_subsets(n, s)):
        sub = Q[idx]  # (m, s, r)
        best = max(best, float(np.linalg.norm(sub, ord=2, axis=(1, 2)).max()))
    return min(best, 1.0)


def ric_delta_s(Psi, s: int) -> float:
    """Restricted isometry constant of ``Psi`` by brute-force enumeration.

    Subsets of size exactly ``min(s, m)`` are enough: eigenvalues of a principal
    submatrix of the Gram matrix interlace those of the larger one.
    """
    Psi = np.asarray(Psi, dtype=float)
    m = Psi.shape[1]
    s = min(s, m)
    if s <= 0:
        return 0.0
    gram = Psi.T @ Psi
    worst = 0.0
    for idx in _chunks(_subsets(m, s)):
        sub = gram[idx[:, :, None], idx[:, None, :]]
        ev = np.linalg.eigvalsh(sub)
        worst = max(worst, float(np.max(ev[:, -1] - 1.0)), float(np.max(1.0 - ev[:, 0])))
    return worst
