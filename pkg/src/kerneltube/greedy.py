"""Power function, P-greedy center selection, and decay diagnostics.

The squared power function of a center set Z at a point x is

    P_Z(x)^2 = k(x, x) - k(Z, x)^T K_Z^{-1} k(Z, x),

the worst-case pointwise interpolation error over the unit ball of the
kernel's native space.  P-greedy repeatedly selects the candidate that
maximizes P_Z(x)^2, maintained incrementally through the Newton basis so
that each sweep over M candidates costs O(M n) instead of a fresh O(n^3)
factorization.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .validation import as_points, check_positive

# residuals below this fraction of the kernel variance are numerically
# indistinguishable from zero; candidates there are never re-selected
_FLOOR_FRACTION = 1e-14


def power_all(kernel, Z, X, jitter=None):
    """Power function P_Z(x) for every row x of X.

    Uses a batch Cholesky factorization of the Gram matrix of Z; values
    are clamped to [0, sqrt(variance)].  With empty Z this is
    sqrt(k(x, x)).
    """
    Z = as_points(Z, "Z")
    X = as_points(X, "X")
    if Z.shape[0] == 0:
        return np.sqrt(kernel.diag(X))
    L, _ = kernel.chol_gram(Z, jitter=jitter)
    V = solve_triangular(L, kernel(Z, X), lower=True)
    p2 = kernel.diag(X) - np.einsum("ij,ij->j", V, V)
    return np.sqrt(np.clip(p2, 0.0, kernel.variance))


def fill_distance(X, Z):
    """max over X of the distance to the nearest point of Z.

    Discrete surrogate of the mesh norm of Z relative to the candidate
    cloud X.
    """
    X = as_points(X, "X")
    Z = as_points(Z, "Z", allow_empty=False)
    if Z.shape[0] == 0:
        raise ValueError("Z must contain at least one point")
    best = np.full(X.shape[0], np.inf)
    for start in range(0, Z.shape[0], 512):
        block = Z[start : start + 512]
        diff = X[:, None, :] - block[None, :, :]
        d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        best = np.minimum(best, d.min(axis=1))
    return float(best.max()) if X.shape[0] else 0.0


def theoretical_exponent(nu, d, q=np.inf):
    """Algebraic decay exponent -(nu + d/2)/d + (1/2 - 1/q)_+ .

    Predicted upper-bound exponent for the approximation numbers of a
    Sobolev-equivalent native space of smoothness l = nu + d/2 on a
    d-dimensional domain, measured in the L^q norm, 2 <= q <= inf.
    """
    check_positive(nu, "nu")
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if q < 2:
        raise ValueError(f"q must be in [2, inf], got {q}")
    inv_q = 0.0 if np.isinf(q) else 1.0 / q
    return -(nu + d / 2.0) / d + max(0.5 - inv_q, 0.0)


@dataclass
class DecayReport:
    """Least-squares decay fit of a max-power history."""

    model: str
    fitted_slope: float
    fit_r2: float
    theoretical_exponent: float | None = None
    exp_fit: tuple[float, float] | None = None  # (c, C) for C*exp(-c n^(1/d))


def decay_fit(history, model="algebraic", d=1, theoretical=None):
    """Fit the decay of a P-greedy max-power history.

    The first half of the history is discarded as burn-in; early
    iterations reflect constant factors rather than asymptotics.

    ``model="algebraic"`` fits log P(n) ~ slope * log n + const and
    reports the slope.  ``model="exponential"`` fits
    log P(n) ~ log C - c * n^(1/d) and reports (c, C) in ``exp_fit``
    (``fitted_slope`` is then -c).
    """
    hist = np.asarray(history, dtype=float)
    if hist.size < 5:
        raise ValueError(f"history must have at least 5 entries, got {hist.size}")
    if np.any(hist <= 0):
        raise ValueError("history entries must be strictly positive")
    n = np.arange(1, hist.size + 1, dtype=float)
    start = hist.size // 2
    n, hist = n[start:], hist[start:]
    logp = np.log(hist)
    if model == "algebraic":
        x = np.log(n)
    elif model == "exponential":
        x = n ** (1.0 / d)
    else:
        raise ValueError(f"unknown decay model {model!r}")
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, logp, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    resid = logp - A @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((logp - logp.mean()) ** 2))
    r2 = 1.0 if ss_tot <= 1e-30 else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    exp_fit = None
    if model == "exponential":
        exp_fit = (-slope, float(np.exp(intercept)))
    return DecayReport(
        model=model,
        fitted_slope=slope,
        fit_r2=r2,
        theoretical_exponent=theoretical,
        exp_fit=exp_fit,
    )


class PGreedySelector(TransformerMixin, BaseEstimator):
    """P-greedy selection of kernel centers from a candidate cloud.

    ``fit(X)`` repeatedly selects the candidate with the largest squared
    power value, stopping when the maximum drops below ``tol`` or when
    ``max_centers`` centers have been selected.  ``transform(X)`` returns
    the cross-kernel features k(X, Z) of the selected centers, so the
    selector composes with downstream linear models like a Nystroem map.

    Parameters
    ----------
    kernel : Kernel
        Kernel whose native space is being compressed.
    tol : float
        Stopping threshold on the squared power function.
    max_centers : int
        Hard cap on the number of selected centers.

    Attributes
    ----------
    centers_ : ndarray (n, d)
        Selected centers in selection order.
    center_indices_ : ndarray (n,)
        Indices of the centers in the candidate array.
    newton_factor_ : ndarray (n, n)
        Lower-triangular L with K_Z = L L^T, built incrementally.
    max_power_history_ : ndarray (n,)
        Maximum power value immediately before each selection
        (strictly positive, non-increasing).
    residual_power_sq_ : ndarray (M,)
        Final squared power values of all candidates.
    truncated_ : bool
        True when the selection stopped on ``max_centers`` (or on the
        numerical floor) before reaching ``tol``.
    stop_reason_ : str
        One of ``"tol"``, ``"max_centers"``, ``"floor"``.
    """

    def __init__(self, kernel=None, tol=1e-10, max_centers=500):
        self.kernel = kernel
        self.tol = tol
        self.max_centers = max_centers

    def fit(self, X, y=None):
        if self.kernel is None:
            raise ValueError("kernel must be set before fitting")
        check_positive(self.tol, "tol")
        if self.max_centers < 1:
            raise ValueError(f"max_centers must be >= 1, got {self.max_centers}")
        X = as_points(X, "X", allow_empty=False)
        kernel = self.kernel
        M = X.shape[0]
        max_n = int(min(self.max_centers, M))
        floor = _FLOOR_FRACTION * kernel.variance

        p2 = kernel.diag(X).copy()
        V = np.zeros((M, max_n))
        selected = []
        history = []
        stop = "max_centers"
        for j in range(max_n):
            i = int(np.argmax(p2))  # ties broken by lowest index
            pmax2 = float(p2[i])
            if pmax2 < self.tol:
                stop = "tol"
                break
            if pmax2 < floor:
                stop = "floor"
                break
            history.append(np.sqrt(pmax2))
            col = kernel(X, X[i : i + 1])[:, 0]
            if j:
                col -= V[:, :j] @ V[i, :j]
            V[:, j] = col / np.sqrt(pmax2)
            p2 = np.maximum(p2 - V[:, j] ** 2, 0.0)
            p2[i] = 0.0
            selected.append(i)
        else:
            # loop exhausted max_n selections; check whether tol was reached
            if p2.max() < self.tol:
                stop = "tol"

        n = len(selected)
        idx = np.array(selected, dtype=int)
        self.center_indices_ = idx
        self.centers_ = X[idx].copy()
        self.newton_factor_ = np.tril(V[idx, :n])
        self.max_power_history_ = np.array(history)
        self.residual_power_sq_ = p2
        self.stop_reason_ = stop
        self.truncated_ = stop != "tol"
        self.n_centers_ = n
        return self

    def transform(self, X):
        """Cross-kernel features k(X, Z) of the selected centers."""
        check_is_fitted(self, "centers_")
        X = as_points(X, "X")
        return self.kernel(X, self.centers_)

    def power(self, X):
        """Power function of the selected centers at the rows of X."""
        check_is_fitted(self, "centers_")
        return power_all(self.kernel, self.centers_, X)

    @property
    def selection_tolerance_reached_(self):
        check_is_fitted(self, "centers_")
        return not self.truncated_
