import numpy as np
import pytest

from kerneltube.kernels import Kernel
from kerneltube.socp import ScenarioProgram, count_support, residuals, solve_ipm


def make_program(features, targets, R, L=None):
    n = np.atleast_2d(features).shape[1]
    if L is None:
        L = np.eye(n)
    return ScenarioProgram(
        gram_factor=L, features=features, targets=targets, norm_bound=R
    )


def grid_gamma(program, lim=6.0, stages=6):
    """Exhaustive lattice search over alpha with sound refinement.

    Branch-and-bound on successively finer lattices: every cell whose
    value is within the Lipschitz margin of the incumbent survives to
    the next resolution, so flat valleys and ball-boundary optima are
    never pruned away.
    """
    n = program.n_centers
    LT = program.gram_factor.T
    F = program.features
    y = program.targets
    R = program.norm_bound
    lip = float(np.max(np.linalg.norm(F, axis=1)))

    spacing = 2.0 * lim / 60
    pts = np.stack(
        [g.ravel() for g in np.meshgrid(*([np.linspace(-lim, lim, 61)] * n), indexing="ij")],
        axis=1,
    )
    best = np.inf
    for stage in range(stages):
        values = np.abs(y[None, :] - pts @ F.T).max(axis=1)
        ball_norm = np.sqrt(np.sum((pts @ LT.T) ** 2, axis=1))
        feasible = ball_norm <= R
        if np.any(feasible):
            best = min(best, float(values[feasible].min()))
        if stage == stages - 1:
            break
        margin = 2.0 * lip * spacing * np.sqrt(n)
        keep = (values <= best + margin) & (ball_norm <= R + spacing * np.sqrt(n))
        pts = pts[keep]
        # refine survivors into local sub-lattices, deduped on integer keys
        offsets = np.stack(
            [g.ravel() for g in np.meshgrid(*([np.linspace(-spacing, spacing, 11)] * n), indexing="ij")],
            axis=1,
        )
        pts = (pts[:, None, :] + offsets[None, :, :]).reshape(-1, n)
        spacing /= 5.0
        grid_idx = np.round(pts / spacing).astype(np.int64)
        key = grid_idx[:, 0].copy()
        for axis in range(1, n):
            key = key * 2_000_003 + grid_idx[:, axis]
        _, first = np.unique(key, return_index=True)
        pts = grid_idx[first] * spacing
    return best


def test_chebyshev_center_closed_form():
    # features all ones, targets {0, 1, 4}: alpha = 2, gamma = 2
    prog = make_program(np.ones((3, 1)), np.array([0.0, 1.0, 4.0]), R=10.0)
    sol = solve_ipm(prog)
    assert sol.status == "optimal"
    assert sol.gamma == pytest.approx(2.0, abs=1e-6)
    assert sol.alpha[0] == pytest.approx(2.0, abs=1e-6)


def test_single_sample_interpolates():
    prog = make_program(np.array([[2.0]]), np.array([3.0]), R=100.0)
    sol = solve_ipm(prog)
    assert sol.gamma == pytest.approx(0.0, abs=1e-6)
    assert sol.alpha[0] == pytest.approx(1.5, abs=1e-5)


def test_degenerate_ball_forces_zero_alpha():
    prog = make_program(np.ones((4, 1)), np.array([1.0, -2.0, 0.5, 1.5]), R=0.0)
    sol = solve_ipm(prog)
    assert sol.status == "optimal"
    assert np.all(sol.alpha == 0.0)
    assert sol.gamma == 2.0


def test_residuals_alpha_zero_returns_targets():
    prog = make_program(np.ones((3, 1)), np.array([1.0, 2.0, 3.0]), R=0.0)
    sol = solve_ipm(prog)
    assert np.allclose(residuals(sol, prog), prog.targets)


def test_residuals_toy_case():
    prog = make_program(np.ones((3, 1)), np.array([0.0, 1.0, 4.0]), R=10.0)
    sol = solve_ipm(prog)
    r = residuals(sol, prog)
    assert np.allclose(r, [-2.0, -1.0, 2.0], atol=1e-5)
    assert np.abs(r).max() <= sol.gamma + 1e-6


def test_count_support_toy_case():
    prog = make_program(np.ones((3, 1)), np.array([0.0, 1.0, 4.0]), R=10.0)
    sol = solve_ipm(prog)
    assert count_support(sol, prog, tol_active=1e-5) == 2


def test_all_targets_equal_gamma_zero():
    prog = make_program(np.ones((5, 1)), np.full(5, 2.5), R=50.0)
    sol = solve_ipm(prog)
    assert sol.gamma == pytest.approx(0.0, abs=1e-6)


def test_feasibility_certificate_upper_bound():
    rng = np.random.default_rng(0)
    for _ in range(20):
        N, n = int(rng.integers(2, 8)), int(rng.integers(1, 3))
        prog = make_program(rng.normal(size=(N, n)), rng.normal(size=N), R=5.0)
        sol = solve_ipm(prog)
        assert sol.gamma <= np.abs(prog.targets).max() + 1e-6


def test_grid_oracle_tiny_instances():
    rng = np.random.default_rng(1)
    for trial in range(25):
        N = int(rng.integers(2, 7))
        n = int(rng.integers(1, 3))
        prog = make_program(rng.normal(size=(N, n)), rng.normal(size=N), R=5.0)
        sol = solve_ipm(prog)
        assert sol.status == "optimal"
        oracle = grid_gamma(prog)
        assert sol.gamma == pytest.approx(oracle, abs=1e-3)


def test_kkt_residual_below_tolerance():
    rng = np.random.default_rng(2)
    for _ in range(10):
        prog = make_program(rng.normal(size=(30, 3)), rng.normal(size=30), R=8.0)
        sol = solve_ipm(prog, tol=1e-8)
        assert sol.status == "optimal"
        assert sol.kkt_residual <= 1e-8


def test_scaling_covariance():
    rng = np.random.default_rng(3)
    feats = rng.normal(size=(12, 2))
    y = rng.normal(size=12)
    base = solve_ipm(make_program(feats, y, R=100.0))
    for c in [10.0, 0.01]:
        scaled = solve_ipm(make_program(feats, c * y, R=100.0))
        assert scaled.gamma == pytest.approx(c * base.gamma, rel=1e-6)
        assert np.allclose(scaled.alpha, c * base.alpha, rtol=1e-5, atol=1e-10)


def test_monotone_in_R():
    rng = np.random.default_rng(4)
    feats = rng.normal(size=(15, 2))
    y = 3.0 * rng.normal(size=15)
    gammas = [solve_ipm(make_program(feats, y, R=R)).gamma for R in [0.1, 0.5, 2.0, 10.0]]
    for a, b in zip(gammas, gammas[1:]):
        assert b <= a + 1e-6  # slack covers the solver's KKT tolerance


def test_norm_constraint_enforced():
    rng = np.random.default_rng(5)
    kern = Kernel("matern52", lengthscale=1.0)
    Z = rng.uniform(-2, 2, size=(6, 2))
    L, _ = kern.chol_gram(Z)
    X = rng.uniform(-2, 2, size=(40, 2))
    feats = kern(X, Z)
    y = 5.0 * rng.normal(size=40)
    R = 0.5  # tight ball so the constraint binds
    prog = ScenarioProgram(gram_factor=L, features=feats, targets=y, norm_bound=R)
    sol = solve_ipm(prog)
    K = L @ L.T
    assert sol.alpha @ K @ sol.alpha <= R**2 * (1 + 1e-6)
    assert count_support(sol, prog) >= 1  # ball is active


def test_active_count_generically_at_most_dim_plus_one():
    rng = np.random.default_rng(6)
    hits = []
    for _ in range(30):
        N, n = 25, 2
        prog = make_program(rng.normal(size=(N, n)), rng.normal(size=N), R=50.0)
        sol = solve_ipm(prog)
        hits.append(count_support(sol, prog, tol_active=1e-6) <= n + 1)
    assert np.mean(hits) == 1.0


def test_uniqueness_regularization_minimum_norm():
    # two identical feature columns: infinitely many gamma-optimal alphas,
    # the regularization must pick the minimum-norm one (equal split)
    feats = np.column_stack([np.ones(4), np.ones(4)])
    y = np.array([1.0, 2.0, 3.0, 4.0])
    sol = solve_ipm(make_program(feats, y, R=100.0))
    assert sol.gamma == pytest.approx(1.5, abs=1e-6)
    assert sol.alpha[0] == pytest.approx(sol.alpha[1], abs=1e-6)


def test_invalid_program_shapes_rejected():
    with pytest.raises(ValueError, match="columns"):
        ScenarioProgram(np.eye(2), np.ones((3, 1)), np.ones(3), 1.0)
    with pytest.raises(ValueError, match="sample count"):
        ScenarioProgram(np.eye(1), np.ones((3, 1)), np.ones(2), 1.0)
    with pytest.raises(ValueError, match="norm_bound"):
        ScenarioProgram(np.eye(1), np.ones((3, 1)), np.ones(3), -1.0)
    with pytest.raises(ValueError, match="lower triangular"):
        ScenarioProgram(np.array([[1.0, 0.5], [0.0, 1.0]]), np.ones((3, 2)), np.ones(3), 1.0)
