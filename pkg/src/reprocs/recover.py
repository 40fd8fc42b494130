"""Projected compressive-sensing step: perpendicular projection, l1 recovery,
support thresholding and least-squares refinement of the sparse part."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "Projector",
    "SparseEstimate",
    "BPDNConvergenceError",
    "RankDeficientSupportError",
    "project_perp",
    "bpdn",
    "estimate_support",
    "ls_refine",
    "recover_frame",
]

_logger = logging.getLogger(__name__)

ORTHO_TOL = 1e-8
GRAM_COND_MAX = 1e12


class BPDNConvergenceError(RuntimeError):
    """The l1 solver hit its iteration cap; carries the best iterate found."""

    def __init__(self, message, x, residual):
        super().__init__(message)
        self.x = x
        self.residual = residual


class RankDeficientSupportError(np.linalg.LinAlgError):
    def __init__(self, support, cond):
        self.support = tuple(int(i) for i in support)
        self.cond = cond
        super().__init__(f"(Phi)_T is rank deficient (cond={cond:.3g}) on support T={list(self.support)}")


class Projector:
    """The operator ``I - P P'`` for an orthonormal ``P``, applied implicitly.

    Parameters
    ----------
    basis : array of shape (n, r) or None
        Orthonormal columns. ``None`` or an empty matrix means the identity.
    n : int, optional
        Ambient dimension, required only when ``basis`` is None.
    """

    def __init__(self, basis=None, n=None, check=True):
        if basis is None:
            if n is None:
                raise ValueError("need basis or n")
            basis = np.zeros((n, 0))
        basis = np.asarray(basis, dtype=float)
        if basis.ndim != 2:
            raise ValueError("basis must be a 2-d array")
        if n is not None and basis.shape[0] != n:
            raise ValueError(f"basis has {basis.shape[0]} rows, expected {n}")
        if check and basis.shape[1]:
            err = np.abs(basis.T @ basis - np.eye(basis.shape[1])).max()
            if err > ORTHO_TOL:
                raise ValueError(f"basis is not orthonormal (max |P'P - I| = {err:.2e})")
        self.basis = basis
        self.basis.flags.writeable = False

    @property
    def n(self):
        return self.basis.shape[0]

    @property
    def rank(self):
        return self.basis.shape[1]

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.n:
            raise ValueError(f"dimension mismatch: vector has {v.shape[0]} rows, projector acts on {self.n}")
        if not self.rank:
            return v.copy()
        return v - self.basis @ (self.basis.T @ v)

    def columns(self, T):
        """``(Phi)_T``, the columns of the projector indexed by T."""
        T = np.asarray(T, dtype=np.intp)
        cols = np.zeros((self.n, T.size))
        cols[T, np.arange(T.size)] = 1.0
        return self(cols)

    def gram(self, T):
        """``(Phi)_T' (Phi)_T``, which equals the principal submatrix ``Phi[T, T]``."""
        T = np.asarray(T, dtype=np.intp)
        Pt = self.basis[T]
        return np.eye(T.size) - Pt @ Pt.T

    def dense(self):
        return np.eye(self.n) - self.basis @ self.basis.T


def project_perp(basis, v):
    """Return ``v - P (P' v)``."""
    if isinstance(basis, Projector):
        return basis(v)
    v = np.asarray(v, dtype=float)
    return Projector(basis, n=v.shape[0])(v)


def _as_projector(phi, n):
    if isinstance(phi, Projector):
        return phi
    return Projector(phi, n=n)


def _soft(v, lam):
    return np.sign(v) * np.maximum(np.abs(v) - lam, 0.0)


class _Problem:
    """min lam ||x||_1 + 1/2 ||y - Phi x||^2 with Phi a projector.

    Since ``Phi' Phi = Phi``, ``||y - Phi x||^2 = ||Phi y - Phi x||^2 + ||y - Phi y||^2``
    and the gradient is ``Phi x - Phi y``; the Lipschitz constant is 1.
    """

    def __init__(self, y, phi):
        self.phi = phi
        self.y = y
        self.py = phi(y)
        self.out2 = float(np.dot(y - self.py, y - self.py))

    def residual(self, x):
        d = self.py - self.phi(x)
        return float(np.sqrt(np.dot(d, d) + self.out2))

    def lasso(self, lam, x0, tol, max_iter):
        """FISTA with gradient-based adaptive restart."""
        x = x0.copy()
        z = x.copy()
        theta = 1.0
        for it in range(1, max_iter + 1):
            x_new = _soft(z - self.phi(z) + self.py, lam)
            step = x_new - x
            if np.dot(z - x_new, step) > 0:
                theta = 1.0
                z = x_new
            else:
                theta_new = 0.5 * (1 + np.sqrt(1 + 4 * theta**2))
                z = x_new + ((theta - 1) / theta_new) * step
                theta = theta_new
            x = x_new
            if np.max(np.abs(step)) <= tol * max(1.0, np.max(np.abs(x))):
                return x, it
        return x, max_iter

    def polish(self, x, xi):
        """Exact constrained minimiser on the support and signs of ``x``.

        On a fixed support T with signs z the problem ``min z'x_T s.t.
        ||y - Phi_T x_T|| <= xi`` has the closed form ``x_T = x_ls - lam G^{-1} z``
        where ``G = Phi[T, T]``; ``lam`` makes the constraint tight. Returns
        ``(x, lam)`` or None if the candidate is not sign consistent or the
        optimality condition off T fails.
        """
        T = np.flatnonzero(x)
        n = x.size
        if T.size == 0 or T.size >= n:
            return None
        z = np.sign(x[T])
        G = self.phi.gram(T)
        try:
            cf = scipy.linalg.cho_factor(G, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            return None
        if np.linalg.cond(G) > GRAM_COND_MAX:
            return None
        x_ls = scipy.linalg.cho_solve(cf, self.py[T], check_finite=False)
        w = scipy.linalg.cho_solve(cf, z, check_finite=False)
        cand = np.zeros(n)
        cand[T] = x_ls
        r_ls2 = self.residual(cand) ** 2
        q = float(z @ w)
        if q <= 0 or xi**2 < r_ls2:
            return None
        lam = np.sqrt((xi**2 - r_ls2) / q)
        cand[T] = x_ls - lam * w
        if np.any(np.sign(cand[T]) != z):
            return None
        grad = self.py - self.phi(cand)
        off = np.ones(n, dtype=bool)
        off[T] = False
        if off.any() and np.max(np.abs(grad[off])) > lam * (1 + 1e-9) + 1e-14:
            return None
        return cand, lam


def bpdn(y, phi, xi, tol=1e-8, max_iter=5000, max_outer=60, lam0=None, x0=None, return_info=False):
    """Basis pursuit denoising ``min ||x||_1 s.t. ||y - Phi x||_2 <= xi``.

    ``Phi`` is the projector ``I - P P'`` (a :class:`Projector` or a basis
    matrix). The penalised problem is solved by accelerated proximal gradient
    and the penalty ``lam`` is searched (bracketed bisection, accelerated by the
    closed-form ``lam`` of the current support) until the constraint is tight.
    Whenever the support and signs of an iterate are correct, the solution is
    finished exactly on that support.

    Raises
    ------
    BPDNConvergenceError
        If no certified solution is found within the iteration caps.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    phi = _as_projector(phi, n)
    if xi < 0 or tol <= 0:
        raise ValueError("need xi >= 0 and tol > 0")
    prob = _Problem(y, phi)
    r0 = prob.residual(np.zeros(n))
    info = {"outer": 0, "inner": 0, "lam": None, "exact": True}
    if r0 <= xi:
        x = np.zeros(n)
        return (x, info) if return_info else x
    # basis-pursuit limit: a vanishing constraint radius with a 1e-12 floor
    xi_eff = max(xi, 1e-12 * max(1.0, r0))

    lam_hi = float(np.max(np.abs(prob.py)))  # x = 0 is optimal at and above this
    lam_lo = 0.0
    lam = lam0 if lam0 is not None and 0 < lam0 < lam_hi else 0.5 * lam_hi
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    best = None
    inner_tol = min(1e-6, tol)
    for outer in range(1, max_outer + 1):
        x, its = prob.lasso(lam, x, inner_tol, max_iter)
        info["inner"] += its
        info["outer"] = outer
        polished = prob.polish(x, xi_eff)
        if polished is not None:
            x_p, lam_p = polished
            info["lam"] = lam_p
            return (x_p, info) if return_info else x_p
        res = prob.residual(x)
        if abs(res - xi_eff) <= tol * xi_eff and its < max_iter:
            best = x
            info["lam"] = lam
            info["exact"] = False
            break
        if res > xi_eff:
            lam_hi = lam
        else:
            lam_lo = lam
        guess = _lam_guess(prob, x, xi_eff)
        if guess is not None and lam_lo < guess < lam_hi:
            lam = guess
        else:
            lam = 0.5 * (lam_lo + lam_hi)
        if lam_hi - lam_lo <= 1e-15 * lam_hi:
            break
    if best is None:
        raise BPDNConvergenceError(
            f"BPDN did not converge within {max_outer} outer / {max_iter} inner iterations",
            x,
            prob.residual(x),
        )
    if not return_info:
        return best
    return best, info


def _lam_guess(prob, x, xi):
    T = np.flatnonzero(x)
    if T.size == 0 or T.size >= x.size:
        return None
    z = np.sign(x[T])
    G = prob.phi.gram(T)
    try:
        cf = scipy.linalg.cho_factor(G, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return None
    x_ls = scipy.linalg.cho_solve(cf, prob.py[T], check_finite=False)
    w = scipy.linalg.cho_solve(cf, z, check_finite=False)
    cand = np.zeros(x.size)
    cand[T] = x_ls
    r_ls2 = prob.residual(cand) ** 2
    q = float(z @ w)
    if q <= 0 or xi**2 < r_ls2:
        return None
    return float(np.sqrt((xi**2 - r_ls2) / q))


def estimate_support(x_cs, omega):
    """Indices with ``|x_i| > omega`` (strict), 0-based and sorted."""
    if omega < 0:
        raise ValueError("omega must be nonnegative")
    return np.flatnonzero(np.abs(np.asarray(x_cs)) > omega)


def ls_refine(y, phi, support):
    """Least-squares estimate on the columns ``(Phi)_T``, zero elsewhere.

    Uses ``(Phi)_T' Phi = I_T' Phi`` so only the ``|T| x |T|`` Gram matrix
    ``Phi[T, T]`` is formed.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    phi = _as_projector(phi, n)
    T = np.asarray(support, dtype=np.intp)
    out = np.zeros(n)
    if T.size == 0:
        return out
    if T.size > n:
        raise ValueError("support larger than n")
    G = phi.gram(T)
    ev = np.linalg.eigvalsh(G)
    cond = np.inf if ev[0] <= 0 else ev[-1] / ev[0]
    if cond > GRAM_COND_MAX:
        raise RankDeficientSupportError(T, cond)
    rhs = phi(y)[T]
    try:
        out[T] = scipy.linalg.cho_solve(scipy.linalg.cho_factor(G, lower=True), rhs)
    except np.linalg.LinAlgError:
        out[T] = np.linalg.pinv(G) @ rhs
    return out


@dataclass
class SparseEstimate:
    x_cs: np.ndarray
    support: np.ndarray
    refined: np.ndarray
    residual_norm: float


def recover_frame(m, basis, xi, omega, tol=1e-8, max_iter=5000, max_outer=60, lam0=None):
    """One projected-CS frame: returns ``(SparseEstimate, L_hat)``.

    ``basis`` may be a :class:`Projector` or an orthonormal matrix.
    """
    m = np.asarray(m, dtype=float)
    phi = _as_projector(basis, m.shape[0])
    y = phi(m)
    x_cs = bpdn(y, phi, xi, tol=tol, max_iter=max_iter, max_outer=max_outer, lam0=lam0)
    support = estimate_support(x_cs, omega)
    s_hat = ls_refine(y, phi, support)
    est = SparseEstimate(
        x_cs=x_cs,
        support=support,
        refined=s_hat,
        residual_norm=float(np.linalg.norm(y - phi(x_cs))),
    )
    return est, m - s_hat
