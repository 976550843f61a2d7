"""scikit-learn style wrappers around the functional API."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import DegenerateInputError, check_belief
from .entropy import make_entropy
from .greedy import build_skeleton
from .screening import TypeModel, build_menu, menu_revenue
from .stopping import stopping_law


def _times(X) -> np.ndarray:
    t = np.asarray(X, dtype=float).ravel()
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise DegenerateInputError("times must be finite and nonnegative")
    return t


class GreedyExplorationModel(TransformerMixin, BaseEstimator):
    """Greedy exploration model fitted to a prior belief.

    ``fit(prior)`` builds the skeleton and stopping law; ``predict(t)`` returns
    the stopping-time CDF and ``transform(t)`` the per-state sub-CDFs.
    """

    def __init__(self, entropy="quadratic-binary", alpha=2.0, chi=0.125, step=None,
                 eps_iso=1e-7, horizon_lifetimes=20.0):
        self.entropy = entropy
        self.alpha = alpha
        self.chi = chi
        self.step = step
        self.eps_iso = eps_iso
        self.horizon_lifetimes = horizon_lifetimes

    def fit(self, X, y=None):
        prior = check_belief(np.asarray(X, dtype=float).ravel())
        model = make_entropy(self.entropy, self.alpha, prior.size)
        self.skeleton_ = build_skeleton(model, prior, self.chi, step=self.step, eps_iso=self.eps_iso)
        self.law_ = stopping_law(self.skeleton_, self.skeleton_.default_horizon(self.horizon_lifetimes))
        self.entropy_model_ = model
        self.n_states_ = prior.size
        self.hazard_ = self.skeleton_.hazard
        self.breakpoints_ = self.skeleton_.breakpoints
        return self

    def predict(self, X):
        check_is_fitted(self, "law_")
        return self.law_.cdf(_times(X))

    def transform(self, X):
        check_is_fitted(self, "law_")
        return np.array([self.law_.state_cdf(t) for t in _times(X)])

    def belief_path(self, X):
        check_is_fitted(self, "skeleton_")
        return np.atleast_2d(self.skeleton_.belief_at(_times(X)))


class TokenPriceMenu(BaseEstimator):
    """Token cap / price menu fitted to a type distribution.

    ``fit`` accepts a ``TypeModel`` or an ``(m, 2)`` table of ``(r, cdf)``
    rows.  ``predict(r)`` gives the token cap and ``transform(r)`` the
    ``(cap, price)`` pair for each type.
    """

    def __init__(self, entropy="quadratic-binary", alpha=2.0, prior=(0.5, 0.5), chi=0.125, n_types=401):
        self.entropy = entropy
        self.alpha = alpha
        self.prior = prior
        self.chi = chi
        self.n_types = n_types

    def fit(self, X, y=None):
        if isinstance(X, TypeModel):
            tm = X
        else:
            table = np.asarray(X, dtype=float)
            if table.ndim != 2 or table.shape[1] != 2:
                raise DegenerateInputError("expected a TypeModel or an (m, 2) table of (r, cdf)")
            tm = TypeModel.tabulated(table[:, 0], cdf=table[:, 1])
        prior = check_belief(np.asarray(self.prior, dtype=float))
        model = make_entropy(self.entropy, self.alpha, prior.size)
        sk = build_skeleton(model, prior, self.chi)
        self.law_ = stopping_law(sk, sk.default_horizon())
        self.type_model_ = tm
        self.menu_ = build_menu(tm, self.law_, self.chi, self.n_types)
        self.revenue_ = menu_revenue(self.menu_)
        return self

    def _types(self, X):
        r = np.asarray(X, dtype=float).ravel()
        for v in r:
            self.type_model_.check(v)
        return r

    def predict(self, X):
        check_is_fitted(self, "menu_")
        return np.array([self.chi * self.type_model_.cutoff(v) for v in self._types(X)])

    def transform(self, X):
        check_is_fitted(self, "menu_")
        r = self._types(X)
        caps = self.predict(r)
        prices = np.array([self.menu_.price_at(v) for v in r])
        return np.column_stack([caps, prices])
