"""Interval-predictor scenario programs solved by a primal-dual interior point method.

The per-output program is

    min_{alpha, gamma}  gamma
    s.t.                alpha^T K_Z alpha <= R^2
                        |y_i - alpha^T k(Z, z_i)| <= gamma,  i = 1..N.

Internally the norm ball is handled in Cholesky coordinates beta = L^T alpha
(so the constraint is ||beta|| <= R and the feature matrix is V = Phi L^{-T}),
which stays well conditioned when K_Z is nearly singular.  A tiny quadratic
regularization reg * ||beta||^2 added to the objective selects the
minimum-norm optimizer among gamma-optimal solutions, making the optimizer
unique as the scenario guarantee requires.

The solver is an infeasible-start Mehrotra predictor-corrector method on
the slack form; each iteration reduces to a dense (n+1) x (n+1) normal
system, so the cost per iteration is O(N n^2) and 20-40 iterations reach
KKT residuals of 1e-8.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .validation import NumericalError

logger = logging.getLogger(__name__)


@dataclass
class ScenarioProgram:
    """Data of one per-output interval-predictor program.

    gram_factor : (n, n) lower-triangular L with K_Z = L L^T
    features    : (N, n) matrix, row i = k(Z, z_i)^T
    targets     : (N,) vector of outputs
    norm_bound  : ball radius R >= 0 on the native-space norm
    """

    gram_factor: np.ndarray
    features: np.ndarray
    targets: np.ndarray
    norm_bound: float

    def __post_init__(self):
        self.gram_factor = np.asarray(self.gram_factor, dtype=float)
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.targets = np.asarray(self.targets, dtype=float).ravel()
        n = self.gram_factor.shape[0]
        if self.gram_factor.shape != (n, n):
            raise ValueError("gram_factor must be square")
        if np.any(np.triu(self.gram_factor, 1) != 0.0):
            raise ValueError("gram_factor must be lower triangular")
        if self.features.shape[1] != n:
            raise ValueError(
                f"features must have {n} columns to match gram_factor, "
                f"got {self.features.shape[1]}"
            )
        if self.features.shape[0] != self.targets.size:
            raise ValueError("features and targets disagree on the sample count")
        if self.features.shape[0] < 1:
            raise ValueError("program needs at least one sample")
        if not (self.norm_bound >= 0):
            raise ValueError(f"norm_bound must be >= 0, got {self.norm_bound}")

    @property
    def n_centers(self):
        return self.gram_factor.shape[0]

    @property
    def n_samples(self):
        return self.features.shape[0]


@dataclass
class IpmSolution:
    """Solution of one interval-predictor program."""

    alpha: np.ndarray
    gamma: float
    status: str  # "optimal" | "max_iter" | "infeasible_numerics"
    kkt_residual: float
    active_count: int
    iterations: int = 0
    beta: np.ndarray = field(default=None, repr=False)  # L^T alpha, solver coords


def _ball_chebyshev(V, y, R, reg, tol, max_iter):
    """min gamma + reg ||b||^2  s.t. |y - V b| <= gamma, ||b|| <= R.

    Mehrotra predictor-corrector.  Returns (b, gamma, lam, iters, kkt).
    """
    N, n = V.shape
    b = np.zeros(n)
    gam = float(np.max(np.abs(y)) * 1.05 + 1.0)
    m = 2 * N + 1

    def cons(b, gam):
        r = y - V @ b
        return np.concatenate([r - gam, -r - gam, [b @ b - R * R]])

    s = -cons(b, gam)
    lam = np.empty(m)
    lam[: 2 * N] = 0.5 / N
    lam[-1] = 1.0 / (R * R)
    kkt = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        lp, lm_, lq = lam[:N], lam[N : 2 * N], lam[-1]
        c = cons(b, gam)
        rd_b = 2 * reg * b + V.T @ (lm_ - lp) + 2 * lq * b
        rd_g = 1.0 - np.sum(lp) - np.sum(lm_)
        rp = c + s
        gap = float(s @ lam) / m
        kkt = max(np.max(np.abs(rd_b)), abs(rd_g), np.max(np.abs(rp)), gap)
        logger.debug("ipm iter %d: gap=%.3e kkt=%.3e gamma=%.6g", it, gap, kkt, gam)
        if not np.isfinite(kkt):
            raise NumericalError("interior-point iteration diverged")
        if kkt <= tol:
            break

        d = lam / s
        dp, dm, dq = d[:N], d[N : 2 * N], d[-1]
        dd = dp + dm
        M_ = np.empty((n + 1, n + 1))
        M_[:n, :n] = (V * dd[:, None]).T @ V
        M_[:n, :n] += (2 * reg + 2 * lq) * np.eye(n) + (4 * dq) * np.outer(b, b)
        hbg = V.T @ (dp - dm)
        M_[:n, n] = hbg
        M_[n, :n] = hbg
        M_[n, n] = np.sum(dd)
        jitter = 0.0
        for _ in range(12):
            try:
                C = cho_factor(
                    M_ + (jitter * np.eye(n + 1) if jitter else 0.0), lower=True
                )
                break
            except np.linalg.LinAlgError:
                jitter = max(jitter * 10.0, 1e-14 * np.trace(M_) / (n + 1))
        else:
            raise NumericalError("normal matrix not factorizable")

        rd = np.concatenate([rd_b, [rd_g]])

        def jt(u):
            return np.concatenate(
                [V.T @ (u[N : 2 * N] - u[:N]) + 2 * b * u[-1], [-np.sum(u[: 2 * N])]]
            )

        def newton(rc):
            u_hat = (rc + lam * rp) / s
            dx = cho_solve(C, -rd - jt(u_hat))
            db, dg = dx[:n], dx[n]
            Vdb = V @ db
            Jdx = np.concatenate([-Vdb - dg, Vdb - dg, [2 * (b @ db)]])
            ds = -rp - Jdx
            dlam = (rc - lam * ds) / s
            return db, dg, ds, dlam

        db_a, dg_a, ds_a, dl_a = newton(-lam * s)

        def max_step(v, dv, frac=1.0):
            msk = dv < 0
            return frac * (np.min(-v[msk] / dv[msk]) if np.any(msk) else np.inf)

        ap = min(1.0, max_step(s, ds_a))
        ad = min(1.0, max_step(lam, dl_a))
        gap_aff = float((s + ap * ds_a) @ (lam + ad * dl_a)) / m
        sigma = (max(gap_aff, 0.0) / gap) ** 3
        rc = sigma * gap - lam * s - ds_a * dl_a
        db, dg, ds, dlam = newton(rc)
        a = min(min(1.0, max_step(s, ds, 0.99)), min(1.0, max_step(lam, dlam, 0.99)))
        b = b + a * db
        gam = gam + a * dg
        s = s + a * ds
        lam = lam + a * dlam
    return b, gam, lam, it, float(kkt)


def solve_ipm(program, tol=1e-8, reg_weight=1e-9, max_iter=100, tol_active=1e-6):
    """Solve a ScenarioProgram to KKT residual <= tol.

    Targets are normalized to unit max before solving so the reported
    ``kkt_residual`` is relative to the problem scale; one retry with a
    perturbed start is attempted on numerical failure before returning
    status ``infeasible_numerics`` (the program is always feasible:
    alpha = 0, gamma = max|y|).
    """
    L = program.gram_factor
    Phi = program.features
    y = program.targets
    R = program.norm_bound
    n = program.n_centers

    y_scale = float(np.max(np.abs(y)))
    if R == 0.0 or n == 0 or y_scale == 0.0:
        # degenerate ball (alpha forced to 0) or trivially interpolated targets
        alpha = np.zeros(n)
        gamma = y_scale
        sol = IpmSolution(
            alpha=alpha,
            gamma=gamma,
            status="optimal",
            kkt_residual=0.0,
            active_count=0,
            iterations=0,
            beta=np.zeros(n),
        )
        sol.active_count = count_support(sol, program, tol_active)
        return sol

    V = solve_triangular(L, Phi.T, lower=True).T
    ys = y / y_scale
    Rs = R / y_scale

    attempt_err = None
    for attempt in range(2):
        try:
            reg = reg_weight * (10.0**attempt)
            b, gam, lam, iters, kkt = _ball_chebyshev(
                V, ys, Rs, reg=reg, tol=tol, max_iter=max_iter
            )
            break
        except NumericalError as err:
            attempt_err = err
    else:
        logger.warning("interval-predictor solve failed: %s", attempt_err)
        return IpmSolution(
            alpha=np.zeros(n),
            gamma=y_scale,
            status="infeasible_numerics",
            kkt_residual=np.inf,
            active_count=0,
            iterations=max_iter,
            beta=np.zeros(n),
        )

    beta = b * y_scale
    alpha = solve_triangular(L.T, beta, lower=False)
    gamma = float(gam * y_scale)
    status = "optimal" if kkt <= tol else "max_iter"
    sol = IpmSolution(
        alpha=alpha,
        gamma=gamma,
        status=status,
        kkt_residual=kkt,
        active_count=0,
        iterations=iters,
        beta=beta,
    )
    sol.active_count = count_support(sol, program, tol_active)
    return sol


def residuals(solution, program):
    """Per-sample residuals y_i - features_i . alpha."""
    return program.targets - program.features @ solution.alpha


def count_support(solution, program, tol_active=1e-6):
    """Number of near-active constraints of a solved program.

    Sample constraints with |residual| >= gamma - tol_active count, plus
    one when the norm ball ||L^T alpha|| >= R (1 - tol_active) is tight.
    """
    res = np.abs(residuals(solution, program))
    count = int(np.sum(res >= solution.gamma - tol_active))
    if solution.beta is not None:
        norm = float(np.linalg.norm(solution.beta))
    else:
        norm = float(np.linalg.norm(program.gram_factor.T @ solution.alpha))
    if norm >= program.norm_bound * (1.0 - tol_active):
        count += 1
    return count
