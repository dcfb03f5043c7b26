"""scikit-learn style front end for the ADMM restoration solver."""
from __future__ import annotations

import numbers

from sklearn.base import BaseEstimator
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .signal import check_signal, r_snr
from .solver import Problem, SolverConfig, solve


class BivariateRestorer(BaseEstimator):
    """Restore a bivariate signal from multi-channel linear measurements.

    Minimizes data fidelity plus ``lambda1`` times the squared time gradient
    plus ``lambda2`` times the squared variation of the instantaneous
    covariance, with ADMM on the split ``Z = H X``.

    Parameters
    ----------
    lambda1 : float, default=0.0
        Weight of the time-smoothness penalty.
    lambda2 : float, default=0.0
        Weight of the covariance-smoothness penalty.
    rho : float, default=1.0
        ADMM augmentation parameter.
    max_outer_iters : int, default=100
    primal_tol, dual_tol : float, default=1e-3
        Relative residual tolerances; both must hold to stop early.
    cg_tol : float, default=1e-8
        Relative residual tolerance of the inner conjugate gradient.
    cg_max_iters : int, default=500
    random_state : int or None, default=0
        Seed of the random initial signal.

    Attributes
    ----------
    signal_ : ndarray of shape (n_samples, 2)
        Restored signal.
    state_ : AdmmState
    trace_ : list of dict
        Per-iteration diagnostics.
    converged_ : bool
    n_iter_ : int
    n_cg_iter_ : int

    Examples
    --------
    >>> from tacos.experiments import make_instance
    >>> inst = make_instance(256, sigma=1.0, seed=0)
    >>> est = BivariateRestorer(lambda1=10.0).fit(inst.y, inst.channels)
    >>> est.signal_.shape
    (256, 2)
    """

    def __init__(self, lambda1=0.0, lambda2=0.0, rho=1.0, max_outer_iters=100,
                 primal_tol=1e-3, dual_tol=1e-3, cg_tol=1e-8, cg_max_iters=500,
                 random_state=0):
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.rho = rho
        self.max_outer_iters = max_outer_iters
        self.primal_tol = primal_tol
        self.dual_tol = dual_tol
        self.cg_tol = cg_tol
        self.cg_max_iters = cg_max_iters
        self.random_state = random_state

    def _solver_config(self) -> SolverConfig:
        seed = self.random_state
        if seed is not None and not isinstance(seed, numbers.Integral):
            raise TypeError("random_state must be an int or None")
        return SolverConfig(
            lambda1=float(self.lambda1), lambda2=float(self.lambda2), rho=float(self.rho),
            max_outer_iters=int(self.max_outer_iters), primal_tol=float(self.primal_tol),
            dual_tol=float(self.dual_tol), cg_tol=float(self.cg_tol),
            cg_max_iters=int(self.cg_max_iters), seed=seed,
        )

    def fit(self, Y, channels, x0=None):
        """Run the solver on observations ``Y`` of shape ``(n_samples, n_channels)``.

        Parameters
        ----------
        Y : array-like of shape (n_samples, n_channels)
        channels : list of ChannelModel
            One per column of ``Y``.
        x0 : array-like of shape (n_samples, 2), optional
            Initial signal; drawn from ``random_state`` when omitted.
        """
        config = self._solver_config()
        Y = check_array(Y, dtype=None, ensure_min_samples=2, input_name="Y")
        if x0 is not None:
            x0 = check_signal(x0, "x0")
        result = solve(Problem(Y, channels), None, config, x0=x0)
        diag = result.diagnostics
        self.signal_ = result.signal
        self.state_ = result.state
        self.trace_ = diag["trace"]
        self.converged_ = diag["converged"]
        self.n_iter_ = diag["iterations"]
        self.n_cg_iter_ = diag["total_cg_iters"]
        self.n_features_in_ = Y.shape[1]
        return self

    def fit_transform(self, Y, channels, x0=None):
        return self.fit(Y, channels, x0=x0).signal_

    def score(self, Y, X_true, channels=None):
        """Reconstruction SNR (dB) against ``X_true``; refits when ``channels`` is given."""
        if channels is not None:
            self.fit(Y, channels)
        check_is_fitted(self, "signal_")
        X_true = check_signal(X_true, "X_true")
        if X_true.shape != self.signal_.shape:
            raise ValueError(f"X_true has shape {X_true.shape}, fitted signal {self.signal_.shape}")
        return r_snr(X_true, self.signal_)

    @property
    def config_label(self):
        return self._solver_config().label
