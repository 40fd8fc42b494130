"""scikit-learn style wrappers around the online drivers.

Rows of ``X`` are frames (time) and columns are the ``n`` measurement
coordinates, as usual for estimators. ``fit`` estimates ``P_0`` from training
frames ``1..t_train``; ``transform`` then separates later frames into a
low-rank and a sparse part, numbering them ``t_train + 1, t_train + 2, ...``
so that ``change_times`` refer to absolute frame indices.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .subspace import ReprocsParams, init, step, step_cpca

__all__ = ["ReProCS"]


class ReProCS(TransformerMixin, BaseEstimator):
    """Recursive projected compressive sensing.

    Parameters
    ----------
    n_components : int or None
        Rank ``r0`` of the initial subspace; None uses the numerical rank of
        the training data.
    xi, omega : float
        l1 constraint radius and support threshold.
    alpha, K : int
        Projection-PCA window and number of addition steps per change.
    change_times, c_new : sequence of int
        Known change times (1-based absolute frame index) and the number of
        directions added at each.
    variant : {"reprocs", "reprocs-cpca"}
        ``reprocs-cpca`` also re-estimates the whole subspace by cluster-PCA
        after each addition phase, which removes deleted directions.
    alpha_tilde, cluster_sizes
        Cluster-PCA block length and per-change cluster sizes.

    Attributes
    ----------
    basis_ : ndarray (n_features, n_components)
        Initial subspace estimate.
    components_ : ndarray (rank, n_features)
        Current subspace estimate (rows), updated by :meth:`partial_transform`.
    sparse_ : ndarray
        Sparse part of the most recent call to ``transform``.
    supports_ : list of ndarray
        Estimated supports of the most recent call.
    events_ : list of dict
        Subspace-update log.
    """

    def __init__(
        self,
        n_components=None,
        xi=1.0,
        omega=1.0,
        alpha=40,
        K=5,
        change_times=(),
        c_new=(),
        variant="reprocs",
        alpha_tilde=None,
        cluster_sizes=None,
        tol=1e-8,
        max_iter=5000,
        max_outer=60,
    ):
        self.n_components = n_components
        self.xi = xi
        self.omega = omega
        self.alpha = alpha
        self.K = K
        self.change_times = change_times
        self.c_new = c_new
        self.variant = variant
        self.alpha_tilde = alpha_tilde
        self.cluster_sizes = cluster_sizes
        self.tol = tol
        self.max_iter = max_iter
        self.max_outer = max_outer

    def _params(self):
        return ReprocsParams(
            xi=self.xi,
            omega=self.omega,
            alpha=self.alpha,
            K=self.K,
            change_times=list(self.change_times),
            c_new=list(self.c_new),
            alpha_tilde=self.alpha_tilde,
            cluster_sizes=self.cluster_sizes,
            tol=self.tol,
            max_iter=self.max_iter,
            max_outer=self.max_outer,
        )

    def fit(self, X, y=None):
        """Estimate ``P_0`` by PCA of the training frames (rows of X)."""
        X = check_array(X, dtype=np.float64)
        if self.variant not in ("reprocs", "reprocs-cpca"):
            raise ValueError(f"unknown variant {self.variant!r}")
        t_train, n = X.shape
        params = self._params()
        params.validate_schedule(t_train, cpca=self.variant == "reprocs-cpca")
        r0 = self.n_components
        if r0 is None:
            r0 = int(np.linalg.matrix_rank(X))
        state = init(X.T, r0)
        self.basis_ = state.p_star
        self.n_features_in_ = n
        self.t_train_ = t_train
        self.params_ = params
        self._reset()
        return self

    def _reset(self):
        self.state_ = init(basis=self.basis_, t_train=self.t_train_)

    @property
    def components_(self):
        check_is_fitted(self, "basis_")
        return self.state_.basis.T

    def _drive(self, X):
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, the estimator was fitted with {self.n_features_in_}")
        driver = step_cpca if self.variant == "reprocs-cpca" else step
        S = np.zeros_like(X)
        supports = []
        for i, m in enumerate(X):
            t = self.state_.t + 1
            out, self.state_ = driver(self.state_, m, t, self.params_)
            S[i] = out.s_hat
            supports.append(out.support)
        self.sparse_ = S
        self.supports_ = supports
        self.events_ = self.state_.events
        return X - S

    def transform(self, X):
        """Low-rank part of frames ``t_train + 1, ..., t_train + len(X)``.

        Starts from the fitted ``P_0`` on every call; use
        :meth:`partial_transform` to continue a stream.
        """
        check_is_fitted(self, "basis_")
        self._reset()
        return self._drive(X)

    def partial_transform(self, X):
        """Process the next frames of the stream, keeping the current state."""
        check_is_fitted(self, "basis_")
        return self._drive(X)

    def decompose(self, X):
        """``(L_hat, S_hat)`` for frames following the training period."""
        L_hat = self.transform(X)
        return L_hat, self.sparse_

    def score(self, X, y=None):
        """Negative mean squared residual of ``X`` after removing the current subspace."""
        check_is_fitted(self, "basis_")
        X = check_array(X, dtype=np.float64)
        B = self.components_.T
        R = X - (X @ B) @ B.T
        return -float(np.mean(R**2))
