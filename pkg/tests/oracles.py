"""Independent reference implementations used only by the tests.

They favour brute force and dense linear algebra over speed, and avoid the
code paths of the package under test.
"""

import itertools

import numpy as np


def random_basis(rng, n, r):
    Q, _ = np.linalg.qr(rng.standard_normal((n, r)))
    return Q


def dense_perp(P):
    n = P.shape[0]
    return np.eye(n) - P @ P.T


def bpdn_enumerate(y, A, xi):
    """Exact ``min ||x||_1 s.t. ||y - A x||_2 <= xi`` for small n.

    For every support T with full column rank and every sign pattern z, the
    minimiser of ``z'x`` over the constraint ellipse is
    ``x = x_ls - lam G^{-1} z`` (``G = A_T' A_T``); sign-consistent candidates
    are feasible points whose l1 norm equals ``z'x``, and the optimum is one of
    them. Returns ``(x_opt, l1_opt)``.
    """
    y = np.asarray(y, float)
    n = A.shape[1]
    if np.linalg.norm(y) <= xi:
        return np.zeros(n), 0.0
    best, best_x = np.inf, None
    for k in range(1, n + 1):
        for T in itertools.combinations(range(n), k):
            AT = A[:, T]
            sv = np.linalg.svd(AT, compute_uv=False)
            if sv[-1] < 1e-9 * max(1.0, sv[0]):
                continue
            G = AT.T @ AT
            Ginv = np.linalg.inv(G)
            x_ls = Ginv @ (AT.T @ y)
            r2 = float(np.sum((y - AT @ x_ls) ** 2))
            if r2 > xi**2:
                continue
            for signs in itertools.product((-1.0, 1.0), repeat=k):
                z = np.array(signs)
                q = z @ Ginv @ z
                lam = np.sqrt(max(xi**2 - r2, 0.0) / q)
                xT = x_ls - lam * (Ginv @ z)
                if np.any(np.sign(xT) != z):
                    continue
                val = float(z @ xT)
                if val < best:
                    best = val
                    best_x = np.zeros(n)
                    best_x[list(T)] = xT
    return best_x, best


def orth_svd(B):
    U, s, _ = np.linalg.svd(np.atleast_2d(B), full_matrices=False)
    return U[:, s > 1e-12 * max(1.0, s[0])]


def kappa_brute(B, s):
    """max over ALL |T| <= s of ||I_T' orth(B)||_2 via SVD."""
    Q = orth_svd(B if B.ndim == 2 else B[:, None])
    n = Q.shape[0]
    best = 0.0
    for k in range(1, s + 1):
        for T in itertools.combinations(range(n), k):
            best = max(best, np.linalg.svd(Q[list(T)], compute_uv=False)[0])
    return best


def ric_brute(Psi, s):
    """max over ALL |T| <= s of max(sigma_max^2 - 1, 1 - sigma_min^2) via SVD."""
    m = Psi.shape[1]
    worst = 0.0
    for k in range(1, s + 1):
        for T in itertools.combinations(range(m), k):
            sv = np.linalg.svd(Psi[:, list(T)], compute_uv=False)
            worst = max(worst, sv[0] ** 2 - 1, 1 - sv[-1] ** 2)
    return worst


def contiguous_partitions(m):
    """All ways to cut ``range(m)`` into contiguous blocks."""
    for cuts in itertools.product((False, True), repeat=m - 1):
        blocks, cur = [], [0]
        for i, c in enumerate(cuts, start=1):
            if c:
                blocks.append(cur)
                cur = [i]
            else:
                cur.append(i)
        blocks.append(cur)
        yield blocks


def principal_angle_sin(A, B):
    """Largest sine of the principal angles between span(A) and span(B) (same dim)."""
    # norm of the residual projection; accurate for tiny angles unlike sqrt(1 - cos^2)
    Qa, Qb = orth_svd(A), orth_svd(B)
    R = Qb - Qa @ (Qa.T @ Qb)
    return float(np.linalg.svd(R, compute_uv=False)[0])
