"""Isotropic positive-definite kernels and Gram-matrix assembly.

Families
--------
``matern12``   exp(-r)
``matern32``   (1 + sqrt(3) r) exp(-sqrt(3) r)
``matern52``   (1 + sqrt(5) r + 5 r^2 / 3) exp(-sqrt(5) r)
``gaussian``   exp(-r^2 / 2)
``wendland31`` (1 - r)_+^4 (4 r + 1)   (compactly supported, zero for r >= 1)

with r = ||x - y||_2 / lengthscale, all scaled by ``variance``.
"""

import json
import math

import numpy as np
from scipy.linalg import cholesky

from .validation import (
    NumericalError,
    as_points,
    as_vector,
    check_positive,
    check_same_dim,
)

FAMILIES = ("matern12", "matern32", "matern52", "gaussian", "wendland31")

SQRT3 = math.sqrt(3.0)
SQRT5 = math.sqrt(5.0)

# distances below this are treated as exactly zero (see Kernel._scaled_dist)
_DIST_CLAMP = 1e-12

# rows per block when assembling large cross-kernel matrices
_BLOCK_ROWS = 2048


def _profile(family, r):
    if family == "matern12":
        return np.exp(-r)
    if family == "matern32":
        s = SQRT3 * r
        out = np.exp(-s)
        out *= 1.0 + s
        return out
    if family == "matern52":
        s = SQRT5 * r
        out = np.exp(-s)
        out *= 1.0 + s + s * s / 3.0
        return out
    if family == "gaussian":
        return np.exp(-0.5 * r * r)
    if family == "wendland31":
        t = np.maximum(1.0 - r, 0.0)
        return t**4 * (4.0 * r + 1.0)
    raise ValueError(f"unknown kernel family {family!r}; expected one of {FAMILIES}")


class Kernel:
    """Stationary kernel k(x, y) = variance * profile(||x - y|| / lengthscale).

    The Matern smoothness enters through the family name; ``matern52`` has
    nu = 5/2 and so on.  ``smoothness`` exposes nu for the families that
    have one.

    Parameters
    ----------
    family : str
        One of ``FAMILIES``.
    lengthscale : float
        Positive, in the units of the input coordinates.
    variance : float
        Positive, in squared output units; k(x, x) = variance.
    """

    def __init__(self, family="matern52", lengthscale=1.0, variance=1.0):
        if family not in FAMILIES:
            raise ValueError(f"unknown kernel family {family!r}; expected one of {FAMILIES}")
        check_positive(lengthscale, "lengthscale")
        check_positive(variance, "variance")
        self.family = family
        self.lengthscale = float(lengthscale)
        self.variance = float(variance)

    # -- evaluation -----------------------------------------------------

    def _scaled_dist(self, X, Y):
        """Pairwise ||x - y|| / lengthscale, assembled in row blocks.

        Distances come from explicit coordinate differences accumulated
        per dimension (no expanded-dot-product shortcut) and are clamped
        to zero below 1e-12.
        """
        n, m = X.shape[0], Y.shape[0]
        R = np.empty((n, m))
        for start in range(0, n, _BLOCK_ROWS):
            stop = min(start + _BLOCK_ROWS, n)
            Xb = X[start:stop]
            d2 = np.square(Xb[:, 0, None] - Y[None, :, 0])
            for k in range(1, X.shape[1]):
                d = Xb[:, k, None] - Y[None, :, k]
                d2 += np.square(d, out=d)
            R[start:stop] = np.sqrt(d2, out=d2)
        R[R < _DIST_CLAMP] = 0.0
        R /= self.lengthscale
        return R

    def __call__(self, X, Y):
        """Cross-kernel matrix k(X, Y) of shape (len(X), len(Y))."""
        X = as_points(X, "X")
        Y = as_points(Y, "Y")
        if X.shape[0] and Y.shape[0]:
            check_same_dim(X.shape[1], Y.shape[1], "X", "Y")
        return self.variance * _profile(self.family, self._scaled_dist(X, Y))

    def diag(self, X):
        """k(x, x) for each row of X (equals variance for all rows)."""
        X = as_points(X, "X")
        return np.full(X.shape[0], self.variance)

    def eval(self, x, y):
        """Scalar kernel value k(x, y)."""
        x = as_vector(x, "x")
        y = as_vector(y, "y")
        check_same_dim(x.size, y.size, "x", "y")
        d = float(np.sqrt(np.sum((x - y) ** 2)))
        if d < _DIST_CLAMP:
            d = 0.0
        return self.variance * float(_profile(self.family, np.asarray(d / self.lengthscale)))

    def cross(self, Z, x):
        """Vector [k(z_1, x), ..., k(z_n, x)] for centers Z."""
        Z = as_points(Z, "Z")
        x = as_vector(x, "x")
        if Z.shape[0] == 0:
            return np.zeros(0)
        check_same_dim(Z.shape[1], x.size, "Z", "x")
        return self(Z, x.reshape(1, -1))[:, 0]

    def gram(self, X, jitter=None):
        """Gram matrix k(X, X) + jitter * I.

        ``jitter=None`` uses the default 1e-10 * variance; pass 0 for the
        raw Gram matrix.
        """
        X = as_points(X, "X", allow_empty=False)
        if jitter is None:
            jitter = 1e-10 * self.variance
        if jitter < 0:
            raise ValueError(f"jitter must be nonnegative, got {jitter}")
        K = self(X, X)
        if jitter:
            K[np.diag_indices_from(K)] += jitter
        return K

    @property
    def smoothness(self):
        """Matern smoothness nu, or None for non-Matern families."""
        return {"matern12": 0.5, "matern32": 1.5, "matern52": 2.5}.get(self.family)

    # -- factorization ---------------------------------------------------

    def chol_gram(self, X, jitter=None, max_tries=6):
        """Lower Cholesky factor of gram(X, jitter), escalating jitter on failure.

        Starts from the default jitter and multiplies by 100 per retry.
        Raises NumericalError if the matrix is still not factorizable,
        which signals duplicate or degenerate centers.
        """
        X = as_points(X, "X", allow_empty=False)
        if jitter is None:
            jitter = 1e-10 * self.variance
        K = self.gram(X, jitter=0.0)
        for _ in range(max_tries):
            try:
                Kj = K.copy()
                if jitter:
                    Kj[np.diag_indices_from(Kj)] += jitter
                return cholesky(Kj, lower=True), jitter
            except np.linalg.LinAlgError:
                jitter = max(jitter * 100.0, 1e-12 * self.variance)
        raise NumericalError(
            f"Gram matrix not factorizable after jitter escalation to {jitter:g}; "
            "centers are likely duplicated or degenerate"
        )

    # -- configuration ---------------------------------------------------

    def get_params(self, deep=True):
        return {
            "family": self.family,
            "lengthscale": self.lengthscale,
            "variance": self.variance,
        }

    def set_params(self, **params):
        for key, value in params.items():
            if key not in ("family", "lengthscale", "variance"):
                raise ValueError(f"unknown kernel parameter {key!r}")
            setattr(self, key, value)
        return self

    def to_dict(self):
        return {
            "family": self.family,
            "lengthscale": self.lengthscale,
            "variance": self.variance,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            family=data["family"],
            lengthscale=data["lengthscale"],
            variance=data.get("variance", 1.0),
        )

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return (
            f"Kernel(family={self.family!r}, lengthscale={self.lengthscale!r}, "
            f"variance={self.variance!r})"
        )

    def __eq__(self, other):
        return isinstance(other, Kernel) and self.to_dict() == other.to_dict()
