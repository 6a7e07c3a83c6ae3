"""End-to-end tube-model identification, prediction, and validation.

``identify`` wires the stages together: a fresh candidate cloud feeds
P-greedy basis selection, the basis size fixes the scenario sample count
through the exact binomial-tail bisection, a fresh training set feeds the
two per-output interval-predictor programs (shared basis and features),
and the union bound combines the per-output certificates.  Candidates,
training, and validation data come from separate named random streams so
no dataset is reused across stages.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .greedy import PGreedySelector
from .kernels import Kernel
from .scenario import ScenarioCertificate, min_samples_bisect, union_bound
from .socp import ScenarioProgram, solve_ipm
from .simulator import STREAMS, sample_dataset, sample_inputs, stream_rng
from .validation import as_points, as_vector, check_positive

TOL_MODES = ("tau-over-r-squared", "tau-direct")


class TubeRegressor(RegressorMixin, BaseEstimator):
    """Interval predictor on a fixed kernel basis, one program per output.

    Given centers Z (typically from :class:`PGreedySelector` on an
    independent candidate cloud), ``fit(X, y)`` solves, for every output
    column, the convex program minimizing the worst absolute residual
    subject to the native-space norm ball of radius ``norm_bound``.
    ``predict`` evaluates the nominal model; the per-output tube radii
    are in ``gammas_``.

    Parameters
    ----------
    kernel : Kernel
    centers : array (n, d)
        Kernel centers shared by all outputs.
    norm_bound : float
        Ball radius R on the native-space norm of each output model.
    solver_tol : float
        KKT residual target of the interior-point solves.
    reg_weight : float
        Weight of the norm regularization that makes the optimizer unique.
    jitter : float or None
        Gram factorization jitter; None uses the kernel default.
    n_jobs : int or None
        Worker threads for the per-output solves (None = one per output).
    """

    def __init__(
        self,
        kernel=None,
        centers=None,
        norm_bound=350.0,
        solver_tol=1e-8,
        reg_weight=1e-9,
        jitter=None,
        n_jobs=None,
    ):
        self.kernel = kernel
        self.centers = centers
        self.norm_bound = norm_bound
        self.solver_tol = solver_tol
        self.reg_weight = reg_weight
        self.jitter = jitter
        self.n_jobs = n_jobs

    def fit(self, X, y):
        if self.kernel is None or self.centers is None:
            raise ValueError("kernel and centers must be set before fitting")
        X = as_points(X, "X", allow_empty=False)
        y = np.asarray(y, dtype=float)
        self._single_output = y.ndim == 1
        Y = y.reshape(-1, 1) if self._single_output else y
        if Y.shape[0] != X.shape[0]:
            raise ValueError("X and y disagree on the sample count")
        Z = as_points(self.centers, "centers", allow_empty=False)

        L, used_jitter = self.kernel.chol_gram(Z, jitter=self.jitter)
        Phi = self.kernel(X, Z)
        programs = [
            ScenarioProgram(
                gram_factor=L,
                features=Phi,
                targets=Y[:, l],
                norm_bound=self.norm_bound,
            )
            for l in range(Y.shape[1])
        ]
        workers = self.n_jobs if self.n_jobs else len(programs)
        if workers > 1 and len(programs) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                sols = list(
                    pool.map(
                        lambda p: solve_ipm(
                            p,
                            tol=self.solver_tol,
                            reg_weight=self.reg_weight,
                        ),
                        programs,
                    )
                )
        else:
            sols = [
                solve_ipm(p, tol=self.solver_tol, reg_weight=self.reg_weight)
                for p in programs
            ]

        self.gram_factor_ = L
        self.jitter_ = used_jitter
        self.programs_ = programs
        self.solutions_ = sols
        self.alphas_ = np.stack([s.alpha for s in sols])
        self.gammas_ = np.array([s.gamma for s in sols])
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "alphas_")
        X = as_points(X, "X")
        out = self.kernel(X, as_points(self.centers)) @ self.alphas_.T
        return out[:, 0] if self._single_output else out


@dataclass
class TubeModel:
    """Identified one-step tube model with its violation certificate.

    The nominal prediction of output l at input z is
    ``alphas[l] . k(Z, z)``; the tube half-width of output l is
    ``gammas[l]`` everywhere on the certified domain.
    """

    kernel: Kernel
    centers: np.ndarray  # (n, 3)
    alphas: np.ndarray  # (2, n)
    gammas: np.ndarray  # (2,)
    norm_bound: float
    certificate: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        self.alphas = np.atleast_2d(np.asarray(self.alphas, dtype=float))
        self.gammas = np.asarray(self.gammas, dtype=float).ravel()
        if self.alphas.shape != (self.gammas.size, self.centers.shape[0]):
            raise ValueError("alphas must have shape (n_outputs, n_centers)")

    @property
    def n_centers(self):
        return self.centers.shape[0]

    @property
    def n_outputs(self):
        return self.gammas.size

    def predict(self, Z):
        """Nominal predictions for inputs Z: shape (M, n_outputs)."""
        Z = as_points(Z, "Z")
        return self.kernel(Z, self.centers) @ self.alphas.T

    def predict_point(self, z):
        """Prediction and tube radii at one input z.

        Returns (yhat, tube, extrapolating); ``extrapolating`` is True
        when z is farther than two lengthscales from every center, where
        the tube radii are not certified.
        """
        z = as_vector(z, "z")
        yhat = self.predict(z.reshape(1, -1))[0]
        dmin = float(
            np.min(np.sqrt(np.sum((self.centers - z) ** 2, axis=1)))
        )
        return yhat, self.gammas.copy(), dmin > 2.0 * self.kernel.lengthscale

    # -- serialization ----------------------------------------------------

    def to_dict(self):
        return {
            "kernel": self.kernel.to_dict(),
            "centers": self.centers.tolist(),
            "alphas": self.alphas.tolist(),
            "gammas": self.gammas.tolist(),
            "norm_bound": self.norm_bound,
            "certificate": self.certificate,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            kernel=Kernel.from_dict(data["kernel"]),
            centers=np.array(data["centers"], dtype=float),
            alphas=np.array(data["alphas"], dtype=float),
            gammas=np.array(data["gammas"], dtype=float),
            norm_bound=data["norm_bound"],
            certificate=data["certificate"],
            meta=data.get("meta", {}),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def derive_stream_seeds(seed):
    """Per-stream seeds derived from one base seed (pairwise distinct)."""
    return {name: int(seed) + offset for offset, name in enumerate(sorted(STREAMS))}


def _check_stream_hygiene(seeds):
    values = [(seeds[name], STREAMS[name]) for name in seeds]
    if len(set(values)) != len(values):
        raise ValueError(f"stream seeds collide: {seeds}")
    if len(set(seeds.values())) != len(seeds):
        raise ValueError(f"stream seeds must be pairwise distinct: {seeds}")


def identify(
    kernel,
    sim_config,
    tau,
    norm_bound,
    eps,
    beta,
    seed=0,
    *,
    seeds=None,
    candidate_count=12000,
    max_centers=1200,
    tol_mode="tau-over-r-squared",
    solver_tol=1e-8,
    reg_weight=1e-9,
    jitter=None,
    threads=2,
):
    """Identify a TubeModel end to end; deterministic under the seed.

    1. Draw ``candidate_count`` candidates from the candidates stream and
       run P-greedy with the tolerance wiring selected by ``tol_mode``:
       ``"tau-over-r-squared"`` stops at P^2 < (tau / R)^2 (realizing
       sup P <= tau / R), ``"tau-direct"`` stops at P^2 < tau.
    2. Compute N by exact bisection for decision dimension n + 1.
    3. Draw a fresh training set of size N from the training stream.
    4. Solve the two per-output programs on the shared basis.
    5. Attach per-program certificates and their union bound.
    """
    check_positive(tau, "tau")
    check_positive(norm_bound, "norm_bound")
    if tol_mode not in TOL_MODES:
        raise ValueError(f"tol_mode must be one of {TOL_MODES}, got {tol_mode!r}")
    if seeds is None:
        seeds = derive_stream_seeds(seed)
    _check_stream_hygiene(seeds)

    candidates = sample_inputs(
        candidate_count, sim_config, stream_rng(seeds["candidates"], "candidates")
    )
    tol = (tau / norm_bound) ** 2 if tol_mode == "tau-over-r-squared" else tau
    selector = PGreedySelector(kernel=kernel, tol=tol, max_centers=max_centers)
    selector.fit(candidates)
    n = selector.n_centers_
    if n == 0:
        raise ValueError(
            "P-greedy selected no centers; tolerance exceeds the kernel variance"
        )

    decision_dim = n + 1  # alpha_l in R^n plus gamma_l
    N = min_samples_bisect(eps, beta, decision_dim)
    training = sample_dataset(N, sim_config, stream="training", seed=seeds["training"])

    regressor = TubeRegressor(
        kernel=kernel,
        centers=selector.centers_,
        norm_bound=norm_bound,
        solver_tol=solver_tol,
        reg_weight=reg_weight,
        jitter=jitter,
        n_jobs=threads,
    )
    regressor.fit(training.inputs, training.outputs)

    per_program = [
        ScenarioCertificate.compute(eps, beta, decision_dim, N)
        for _ in range(training.outputs.shape[1])
    ]
    eps_total, beta_total = union_bound(per_program)
    certificate = {
        "per_program": [c.to_dict() for c in per_program],
        "eps_total": eps_total,
        "beta_total": beta_total,
        "num_scenarios": N,
        "decision_dim": decision_dim,
    }
    meta = {
        "seed": int(seed),
        "stream_seeds": seeds,
        "sim_config": sim_config.to_dict(),
        "tau": tau,
        "eps": eps,
        "beta": beta,
        "tol_mode": tol_mode,
        "greedy_tol": tol,
        "candidate_count": candidate_count,
        "max_centers": max_centers,
        "n_centers": n,
        "greedy_truncated": bool(selector.truncated_),
        "greedy_stop_reason": selector.stop_reason_,
        "max_power_final": float(selector.max_power_history_[-1]),
        "max_power_history": selector.max_power_history_.tolist(),
        "solver": [
            {
                "status": s.status,
                "kkt_residual": s.kkt_residual,
                "iterations": s.iterations,
                "active_count": s.active_count,
            }
            for s in regressor.solutions_
        ],
    }
    return TubeModel(
        kernel=kernel,
        centers=selector.centers_,
        alphas=regressor.alphas_,
        gammas=regressor.gammas_,
        norm_bound=norm_bound,
        certificate=certificate,
        meta=meta,
    )


def validate(model, m_test, sim_config, seed=None):
    """Violation rates of the tube on fresh validation samples.

    Draws ``m_test`` i.i.d. samples from the validation stream and
    returns the fraction violating |y_l - yhat_l| > gamma_l per output,
    plus the joint fraction (any output violated).
    """
    if seed is None:
        seed = model.meta.get("stream_seeds", {}).get("validation", 0)
    train_seed = model.meta.get("stream_seeds", {}).get("training")
    # distinct stream tags keep validation independent even under equal seeds
    assert (int(seed), STREAMS["validation"]) != (train_seed, STREAMS["training"])
    data = sample_dataset(m_test, sim_config, stream="validation", seed=seed)
    pred = model.predict(data.inputs)
    err = np.abs(data.outputs - pred)
    viol = err > model.gammas[None, :]
    per_output = viol.mean(axis=0)
    joint = float(np.any(viol, axis=1).mean())
    return {
        "m_test": int(m_test),
        "per_output": per_output.tolist(),
        "joint": joint,
        "eps_total": model.certificate.get("eps_total"),
        "seed": int(seed),
    }


def propagate_corners(model, x0, u_seq):
    """Axis-aligned reachability rectangles under the tube model.

    rect_0 is the point x0; rect_{k+1} is the bounding box of the model
    predictions at the four corners of rect_k (input u_k), inflated by
    the tube radii.  Returns an array of shape (H + 1, 2, 2) where
    ``rects[k, 0]`` is the lower corner and ``rects[k, 1]`` the upper.

    This is a heuristic outer approximation of the closed-loop rollout,
    not a certified reachable set: the certificate covers one-step
    predictions on the sampling domain only.
    """
    x0 = as_vector(x0, "x0")
    u_seq = np.asarray(u_seq, dtype=float).ravel()
    if u_seq.size < 1:
        raise ValueError("u_seq must contain at least one control")
    rects = np.empty((u_seq.size + 1, 2, 2))
    rects[0, 0] = x0
    rects[0, 1] = x0
    gam = model.gammas
    for k, u in enumerate(u_seq):
        lo, hi = rects[k]
        corners = np.array([[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], lo[1]], [hi[0], hi[1]]])
        inputs = np.column_stack([corners, np.full(4, u)])
        preds = model.predict(inputs)
        rects[k + 1, 0] = preds.min(axis=0) - gam
        rects[k + 1, 1] = preds.max(axis=0) + gam
    return rects
