"""scikit-learn style wrappers around the LoPE optimizer and MMSE decoder."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .costs import QuadratureConfig, conditional_mean, estimation_cost
from .optimizer import OptimizerOptions, WeightedObjective, optimize_at, optimize_at_power
from .strategies import Lope, LopeParams, ProblemConfig, apply_gamma1, state_density


def _column(X, name="X"):
    X = check_array(X, ensure_2d=False, dtype=np.float64)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError(f"{name} must be one-dimensional or a single column, got shape {X.shape}")
        X = X[:, 0]
    return X


class LopeController(BaseEstimator, TransformerMixin):
    """Optimized n-step LoPE controller for the first decision maker.

    Exactly one of ``omega`` (weight of power in omega*P + (1-omega)*S) and
    ``power`` (an exact power budget) selects the operating point.

    Parameters
    ----------
    n_steps : int
        Number of quantizer steps per half-line.
    omega : float or None
        Scalarization weight in [0, 1].
    power : float or None
        Power budget; the controller minimizes S subject to P == power.
    Q : float or None
        Source variance. ``None`` estimates it from the samples passed to
        ``fit`` (zero-mean model, so the mean square is used).
    N : float
        Channel noise variance.
    restarts, max_iters : int
        Cold-start count and Nelder-Mead iteration budget.
    warm_start : LopeParams or None
        Initial controller; replaces the cold starts.

    Attributes
    ----------
    params_ : LopeParams
    power_, estimation_cost_, objective_ : float
    converged_ : bool
    """

    def __init__(self, n_steps=4, omega=None, power=None, Q=1.0, N=0.1,
                 restarts=8, max_iters=4000, abs_tol=1e-10, rel_tol=1e-8, warm_start=None):
        self.n_steps = n_steps
        self.omega = omega
        self.power = power
        self.Q = Q
        self.N = N
        self.restarts = restarts
        self.max_iters = max_iters
        self.abs_tol = abs_tol
        self.rel_tol = rel_tol
        self.warm_start = warm_start

    def _problem(self, X):
        if self.Q is not None:
            return ProblemConfig(self.Q, self.N)
        if X is None:
            raise ValueError("Q=None requires samples of the source in fit(X)")
        x = _column(X)
        return ProblemConfig(float(np.mean(x * x)), self.N)

    def fit(self, X=None, y=None):
        if (self.omega is None) == (self.power is None):
            raise ValueError("set exactly one of omega and power")
        cfg = self._problem(X)
        qc = QuadratureConfig(abs_tol=self.abs_tol, rel_tol=self.rel_tol)
        opts = OptimizerOptions(restarts=self.restarts, max_iters=self.max_iters, init=self.warm_start)
        if self.power is not None:
            rec = optimize_at_power(self.n_steps, self.power, cfg, qc, opts)
        else:
            rec = optimize_at(WeightedObjective(self.omega, self.n_steps, cfg, qc), opts)
        self.problem_ = cfg
        self.params_ = rec.params
        self.power_ = rec.point.P
        self.estimation_cost_ = rec.point.S
        self.objective_ = rec.objective_value
        self.converged_ = rec.converged
        return self

    @property
    def strategy_(self):
        check_is_fitted(self, "params_")
        return Lope(self.params_)

    def predict(self, X):
        """Control u1 for source samples ``X``."""
        check_is_fitted(self, "params_")
        return apply_gamma1(self.strategy_, _column(X), self.problem_)

    def transform(self, X):
        """State x1 = x0 + u1 for source samples ``X``."""
        x0 = _column(X)
        return (x0 + self.predict(x0))[:, None]

    def density(self, x):
        check_is_fitted(self, "params_")
        return state_density(self.params_, self.problem_, np.asarray(x, dtype=float))

    def decoder(self):
        """An ``MMSEDecoder`` matched to this controller."""
        check_is_fitted(self, "params_")
        return MMSEDecoder(a=self.params_.a, B=self.params_.B, Q=self.problem_.Q, N=self.problem_.N).fit()

    def score(self, X=None, y=None):
        """Negative objective: larger is better, as scikit-learn expects."""
        check_is_fitted(self, "params_")
        return -self.objective_


class MMSEDecoder(BaseEstimator, RegressorMixin):
    """Second decision maker: y -> E[X1 | Y1 = y] for a given LoPE controller."""

    def __init__(self, a=(0.0,), B=(0.0,), Q=1.0, N=0.1):
        self.a = a
        self.B = B
        self.Q = Q
        self.N = N

    def fit(self, X=None, y=None):
        self.params_ = LopeParams(self.a, self.B)
        self.problem_ = ProblemConfig(self.Q, self.N)
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        return np.asarray(conditional_mean(self.params_, self.problem_, _column(X, "Y")), dtype=float)

    def expected_cost(self, qc=None):
        check_is_fitted(self, "params_")
        return estimation_cost(self.params_, self.problem_, qc)
