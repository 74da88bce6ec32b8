"""Estimator-style wrappers around the functional core.

These follow the scikit-learn conventions (constructor stores hyperparameters
verbatim, ``fit`` learns and sets trailing-underscore attributes, ``get_params``
round-trips) so the pieces compose with sklearn tooling. X is a sequence of
patch grids — either a 4-d array (n, grid_h, grid_w, dim) or a list of 3-d
arrays with matching feature dimension.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .cut import maskcut
from .graph import FeatureMap, KernelSpec, build_adjacency, fiedler_value
from .model import (
    AsymLossParams,
    RegularizerSpec,
    SgdState,
    encode,
    init_params,
    loss_and_gradients,
    predict,
    sgd_step,
)
from .validation import split_seed


def _as_grids(X):
    if isinstance(X, np.ndarray):
        if X.ndim != 4:
            raise ValueError("array input must have shape (n, grid_h, grid_w, dim)")
        return [X[i] for i in range(X.shape[0])]
    grids = [np.asarray(x, dtype=np.float64) for x in X]
    if not grids:
        raise ValueError("empty input")
    for g in grids:
        if g.ndim != 3:
            raise ValueError("each sample must be an (h, w, dim) patch grid")
        if g.shape[2] != grids[0].shape[2]:
            raise ValueError("samples disagree on the feature dimension")
    return grids


def _grid_to_fm(grid):
    h, w, d = grid.shape
    return FeatureMap(h, w, grid.reshape(h * w, d))


class MaskCutLocalizer(TransformerMixin, BaseEstimator):
    """Iterative spectral cut-out of salient patch regions.

    ``transform`` maps each patch grid to its cut result (masks, boxes, and
    per-iteration cut diagnostics). There is nothing to learn; ``fit`` only
    validates and records the input feature dimension.
    """

    def __init__(self, kernel_kind="gaussian", sigma="median", tau_sim=0.2,
                 epsilon_floor=1e-5, n_iters=3):
        self.kernel_kind = kernel_kind
        self.sigma = sigma
        self.tau_sim = tau_sim
        self.epsilon_floor = epsilon_floor
        self.n_iters = n_iters

    def _kernel(self):
        return KernelSpec(
            kind=self.kernel_kind,
            sigma=self.sigma,
            tau_sim=self.tau_sim,
            epsilon_floor=self.epsilon_floor,
        )

    def fit(self, X, y=None):
        grids = _as_grids(X)
        self._kernel()  # validate hyperparameters eagerly
        self.n_features_in_ = grids[0].shape[2]
        return self

    def transform(self, X):
        if not hasattr(self, "n_features_in_"):
            raise NotFittedError("MaskCutLocalizer is not fitted; call fit first")
        kernel = self._kernel()
        return [maskcut(_grid_to_fm(g), kernel, n_iters=self.n_iters)
                for g in _as_grids(X)]


class FiedlerScorer(TransformerMixin, BaseEstimator):
    """Algebraic connectivity of each sample's patch graph.

    Lower values mean the features split into well-separated groups, which is
    the desirable state for a feature extractor; ``score`` therefore returns
    the negated mean so that greater is better.
    """

    def __init__(self, kernel_kind="gaussian", sigma="median", tau_sim=0.2,
                 epsilon_floor=1e-5, which="normalized"):
        self.kernel_kind = kernel_kind
        self.sigma = sigma
        self.tau_sim = tau_sim
        self.epsilon_floor = epsilon_floor
        self.which = which

    def fit(self, X, y=None):
        grids = _as_grids(X)
        self.n_features_in_ = grids[0].shape[2]
        return self

    def transform(self, X):
        if not hasattr(self, "n_features_in_"):
            raise NotFittedError("FiedlerScorer is not fitted; call fit first")
        kernel = KernelSpec(
            kind=self.kernel_kind,
            sigma=self.sigma,
            tau_sim=self.tau_sim,
            epsilon_floor=self.epsilon_floor,
        )
        out = []
        for g in _as_grids(X):
            graph = build_adjacency(_grid_to_fm(g), kernel)
            out.append(fiedler_value(graph, which=self.which))
        return np.array(out)

    def score(self, X, y=None):
        return -float(self.transform(X).mean())


class CuterClassifier(BaseEstimator):
    """Online multi-label classifier: tanh patch encoder + sigmoid heads,
    trained with the asymmetric loss one ``partial_fit`` call at a time."""

    def __init__(self, n_classes, dim_feat=12, lr=0.01, momentum=0.9,
                 gamma_pos=0.0, gamma_neg=4.0, reg_kind="none", alpha=0.1,
                 seed=0):
        self.n_classes = n_classes
        self.dim_feat = dim_feat
        self.lr = lr
        self.momentum = momentum
        self.gamma_pos = gamma_pos
        self.gamma_neg = gamma_neg
        self.reg_kind = reg_kind
        self.alpha = alpha
        self.seed = seed

    def partial_fit(self, X, Y, observed=None):
        """One SGD step on a batch. Y is (n, n_classes) binary; ``observed``
        optionally masks which labels were annotated (all, when None)."""
        grids = _as_grids(X)
        Y = np.asarray(Y, dtype=np.float64)
        if Y.shape != (len(grids), self.n_classes):
            raise ValueError(f"Y must have shape (n_samples, {self.n_classes})")
        if observed is None:
            observed = np.ones_like(Y, dtype=bool)
        else:
            observed = np.asarray(observed, dtype=bool)
            if observed.shape != Y.shape:
                raise ValueError("observed mask must match Y's shape")
        if not hasattr(self, "params_"):
            self.params_ = init_params(
                grids[0].shape[2],
                self.dim_feat,
                self.n_classes,
                split_seed(self.seed, 0),
                active_classes=self.n_classes,
            )
            self.sgd_ = SgdState.zeros_like(self.params_)
            self.n_features_in_ = grids[0].shape[2]
        batch = [(g, Y[i], observed[i]) for i, g in enumerate(grids)]
        reg = RegularizerSpec(kind=self.reg_kind, alpha=self.alpha)
        _, grads = loss_and_gradients(
            self.params_,
            batch,
            AsymLossParams(self.gamma_pos, self.gamma_neg),
            reg=reg,
        )
        self.params_, self.sgd_ = sgd_step(
            self.params_, grads, self.lr, self.momentum, self.sgd_
        )
        return self

    def predict_proba(self, X):
        if not hasattr(self, "params_"):
            raise NotFittedError("CuterClassifier is not fitted; call partial_fit")
        return np.array(
            [predict(self.params_, encode(self.params_, g)) for g in _as_grids(X)]
        )

    def predict(self, X):
        return (self.predict_proba(X) >= 0.5).astype(int)
