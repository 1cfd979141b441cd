"""Scikit-learn style estimator wrapping the functional solver."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .dictionaries import identity_dictionary
from .solver import SolverConfig, solve
from .tensors import SparseTensor3


def check_tensor(x):
    """Validate a dense or COO 3-way tensor input."""
    if isinstance(x, SparseTensor3):
        return x
    x = np.asarray(x, dtype=float)
    if x.ndim != 3:
        raise ValueError(f"expected a 3-way tensor, got ndim={x.ndim}")
    return x


class MDTD(BaseEstimator):
    """Multi-dictionary tensor decomposition estimator.

    Fits a rank-``rank`` CPD-shaped model in which each mode's factor is a
    sparse combination of fixed dictionary atoms.  Follows the
    scikit-learn estimator conventions (``get_params`` /  ``set_params``,
    fitted attributes with trailing underscores).

    Parameters
    ----------
    rank : int
        Number of components.
    dictionaries : sequence of 3 Dictionary, optional
        Per-mode dictionaries; identity dictionaries (plain CPD behavior
        for that mode) are used where None.
    lam : float or 3-tuple
        l1 sparsity weight per mode.
    rho : float or 3-tuple
        ADMM coupling strength per mode.
    lambda_d : float
        Pull of observed cells on the imputation tensor.
    epsilon : float
        Stop once the objective changes by at most this much.
    max_iters : int
        Iteration cap.
    impute : {"none", "dense", "sparse"}
        Missing-value handling; see :func:`mdtd.solver.solve`.
    random_state : int
        Seed for the random initialization.

    Attributes
    ----------
    encodings_ : list of ndarray
        Sparse per-mode encodings (exact zeros from soft thresholding).
    scale_ : ndarray
        Per-component scale, applied once at reconstruction.
    n_iter_ : int
    converged_ : bool
    objective_trace_ : list of float
    fit_trace_ : list of float
    report_ : FitReport
    model_ : MdtdModel
    """

    def __init__(
        self,
        rank: int = 5,
        dictionaries=None,
        lam=0.1,
        rho=1.0,
        lambda_d: float = 1.0,
        epsilon: float = 1e-4,
        max_iters: int = 500,
        impute: str = "none",
        random_state: int = 0,
    ):
        self.rank = rank
        self.dictionaries = dictionaries
        self.lam = lam
        self.rho = rho
        self.lambda_d = lambda_d
        self.epsilon = epsilon
        self.max_iters = max_iters
        self.impute = impute
        self.random_state = random_state

    def _config(self) -> SolverConfig:
        return SolverConfig(
            lam=self.lam,
            rho=self.rho,
            lambda_d=self.lambda_d,
            epsilon=self.epsilon,
            max_iters=self.max_iters,
            impute_mode=self.impute,
            seed=self.random_state,
        )

    def _dicts_for(self, x):
        if self.dictionaries is None:
            return [identity_dictionary(d) for d in x.shape]
        if len(self.dictionaries) != 3:
            raise ValueError("dictionaries must hold exactly 3 entries")
        return [
            d if d is not None else identity_dictionary(x.shape[m])
            for m, d in enumerate(self.dictionaries)
        ]

    def fit(self, X, y=None, mask=None):
        """Fit the decomposition to a dense array or SparseTensor3.

        ``mask`` marks observed cells (dense zero-one array) or, for
        sparse input, lists the missing cells as (m, 3) zero-based rows.
        """
        X = check_tensor(X)
        model, report = solve(X, self._dicts_for(X), self.rank, self._config(), mask=mask)
        self.model_ = model
        self.report_ = report
        self.encodings_ = model.z
        self.scale_ = model.s
        self.dims_ = tuple(X.shape)
        self.n_iter_ = report.n_iter
        self.converged_ = report.converged
        self.objective_trace_ = report.objective
        self.fit_trace_ = report.fit_trace
        return self

    def predict(self, indices=None) -> np.ndarray:
        """Model values at (m, 3) zero-based cells, or the full dense
        reconstruction when ``indices`` is None."""
        check_is_fitted(self, "model_")
        if indices is None:
            return self.model_.reconstruction("z")
        return self.model_.reconstruct_entries(np.asarray(indices), source="z")

    def score(self, X, y=None, mask=None) -> float:
        """Fit quality ``1 - ||X - recon||_F / ||X||_F`` over observed cells."""
        check_is_fitted(self, "model_")
        X = check_tensor(X)
        if isinstance(X, SparseTensor3):
            X = X.to_dense()
        recon = self.model_.reconstruction("z")
        if X.shape != recon.shape:
            raise ValueError(f"tensor shape {X.shape} does not match fitted {recon.shape}")
        diff = X - recon
        ref = X
        if mask is not None:
            mask = np.asarray(mask, float)
            diff = diff * mask
            ref = X * mask
        denom = np.linalg.norm(ref)
        if denom == 0:
            raise ZeroDivisionError("score undefined for an all-zero reference")
        return 1.0 - np.linalg.norm(diff) / denom

    @property
    def nnz_(self) -> int:
        check_is_fitted(self, "model_")
        return self.model_.num_nonzeros()
