"""scikit-learn style wrappers around the lens-data operations.

Rows of X are entry points (y0, eta0) on the incoming face, so X has
2 * d columns for a boundary of dimension d. ``fit`` only validates and
records the model dimension; the maps themselves have no learned state.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .config import build_model
from .dynamics import integrate_entry
from .lens import renormalized_length, scattering_map


def _resolve(model):
    return build_model(model) if isinstance(model, dict) else model


class _EntryMixin:
    def _check(self, X, reset):
        X = check_array(X, dtype=np.float64, ensure_min_samples=1)
        model = _resolve(self.model)
        if X.shape[1] != 2 * model.d:
            raise ValueError(f"expected {2 * model.d} columns (y, eta), got {X.shape[1]}")
        if reset:
            self.model_ = model
            self.n_features_in_ = X.shape[1]
        elif X.shape[1] != self.n_features_in_:
            raise ValueError("column count differs from fit")
        return X

    def _entries(self, X):
        d = self.model_.d
        for row in X:
            yield row[:d], row[d:]


class ScatteringMap(_EntryMixin, TransformerMixin, BaseEstimator):
    """Transform entry points to exit points (y1, eta1); trapped rows are NaN.

    Parameters
    ----------
    model : metric model or a [metric] config dict
    """

    def __init__(self, model=None):
        self.model = model

    def fit(self, X, y=None):
        self._check(X, reset=True)
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = self._check(X, reset=False)
        out = np.full(X.shape, np.nan)
        for i, (y0, eta0) in enumerate(self._entries(X)):
            y1, eta1 = scattering_map(self.model_, y0, eta0)
            if y1 is not None:
                out[i] = np.concatenate([y1, eta1])
        return out


class RenormalizedLength(_EntryMixin, RegressorMixin, BaseEstimator):
    """Predict the renormalized length L_g of each entry geodesic."""

    def __init__(self, model=None, method="cut-extrapolation"):
        self.model = model
        self.method = method

    def fit(self, X, y=None):
        if self.method not in ("cut-extrapolation", "tau-subtraction", "limit"):
            raise ValueError(f"unknown method {self.method!r}")
        self._check(X, reset=True)
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = self._check(X, reset=False)
        return np.array([renormalized_length(self.model_, y0, eta0, self.method).length
                         for y0, eta0 in self._entries(X)])


class XRayTransform(_EntryMixin, TransformerMixin, BaseEstimator):
    """Transform entry points to I_m f for each field in ``fields``."""

    def __init__(self, model=None, fields=()):
        self.model = model
        self.fields = fields

    def fit(self, X, y=None):
        self._check(X, reset=True)
        if not len(self.fields):
            raise ValueError("need at least one field")
        return self

    def transform(self, X):
        from .tensors import xray_integrand

        check_is_fitted(self, "model_")
        X = self._check(X, reset=False)
        gs = tuple(xray_integrand(f, self.model_) for f in self.fields)
        out = np.full((X.shape[0], len(gs)), np.nan)
        for i, (y0, eta0) in enumerate(self._entries(X)):
            tr = integrate_entry(self.model_, y0, eta0, integrands=gs)
            if tr.status == "ok":
                out[i] = tr.acc_end[2:2 + len(gs)]
        return out
