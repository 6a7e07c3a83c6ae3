import math

import numpy as np
import pytest

from kerneltube.greedy import (
    PGreedySelector,
    decay_fit,
    fill_distance,
    power_all,
    theoretical_exponent,
)
from kerneltube.kernels import Kernel


@pytest.fixture
def kern():
    return Kernel("matern52", lengthscale=2.0, variance=1.0)


def test_power_empty_center_set(kern):
    X = np.random.default_rng(0).uniform(-5, 5, size=(10, 3))
    assert np.allclose(power_all(kern, np.zeros((0, 3)), X), 1.0)


def test_power_small_at_centers(kern):
    # batch path: residual at centers is limited by the factorization jitter
    rng = np.random.default_rng(1)
    Z = rng.uniform(-5, 5, size=(8, 3))
    p = power_all(kern, Z, Z)
    assert np.all(p <= 5e-5)


def test_selector_power_exactly_zero_at_centers(kern):
    # incremental path: selected centers carry exactly zero residual power
    X = np.random.default_rng(1).uniform(-5, 5, size=(200, 3))
    sel = PGreedySelector(kernel=kern, tol=1e-10, max_centers=20).fit(X)
    assert np.all(sel.residual_power_sq_[sel.center_indices_] == 0.0)


def test_power_scalar_formula_gaussian():
    # single center at 0, query at 1: P = sqrt(1 - k(0,1)^2 / k(0,0))
    k = Kernel("gaussian", lengthscale=1.0, variance=1.0)
    p = power_all(k, np.array([[0.0]]), np.array([[1.0]]))
    assert p[0] == pytest.approx(math.sqrt(1 - math.exp(-1.0)), abs=1e-8)


def test_power_monotone_under_center_addition(kern):
    rng = np.random.default_rng(2)
    Z = rng.uniform(-5, 5, size=(6, 3))
    X = rng.uniform(-5, 5, size=(500, 3))
    p_small = power_all(kern, Z[:4], X)
    p_big = power_all(kern, Z, X)
    assert np.all(p_big <= p_small + 1e-9)


def test_selector_single_candidate(kern):
    sel = PGreedySelector(kernel=kern, tol=1e-6).fit(np.array([[1.0, 2.0, 3.0]]))
    assert sel.n_centers_ == 1
    assert sel.residual_power_sq_.max() < 1e-6
    assert not sel.truncated_


def test_selector_tol_above_variance_selects_nothing(kern):
    X = np.random.default_rng(3).uniform(-5, 5, size=(50, 3))
    sel = PGreedySelector(kernel=kern, tol=kern.variance * 1.001).fit(X)
    assert sel.n_centers_ == 0
    assert sel.stop_reason_ == "tol"


def test_selector_tol_equal_variance_selects(kern):
    # P^2 = variance is not < tol when tol == variance, so one center is taken
    X = np.random.default_rng(3).uniform(-5, 5, size=(20, 3))
    sel = PGreedySelector(kernel=kern, tol=kern.variance).fit(X)
    assert sel.n_centers_ >= 1


def test_selector_history_positive_nonincreasing(kern):
    X = np.random.default_rng(4).uniform(-5, 5, size=(400, 3))
    sel = PGreedySelector(kernel=kern, tol=1e-8, max_centers=60).fit(X)
    h = sel.max_power_history_
    assert np.all(h > 0)
    assert np.all(np.diff(h) <= 1e-12)


def test_selector_residuals_clamped_and_zero_at_centers(kern):
    X = np.random.default_rng(5).uniform(-5, 5, size=(300, 3))
    sel = PGreedySelector(kernel=kern, tol=1e-10, max_centers=40).fit(X)
    r = sel.residual_power_sq_
    assert np.all(r >= 0)
    assert np.all(r <= kern.variance)
    assert np.all(r[sel.center_indices_] <= 1e-9)


def test_selector_newton_factor_reproduces_gram(kern):
    X = np.random.default_rng(6).uniform(-5, 5, size=(200, 3))
    sel = PGreedySelector(kernel=kern, tol=1e-10, max_centers=30).fit(X)
    L = sel.newton_factor_
    assert np.allclose(np.triu(L, 1), 0.0)
    K = kern.gram(sel.centers_, jitter=0.0)
    assert np.allclose(L @ L.T, K, atol=1e-8)


def test_incremental_matches_batch_oracle(kern):
    # re-run power_all from scratch at every prefix and compare
    rng = np.random.default_rng(7)
    X = rng.uniform(-5, 5, size=(250, 3))
    sel = PGreedySelector(kernel=kern, tol=1e-12, max_centers=25).fit(X)
    for j in [1, 5, 12, 25]:
        Z = sel.centers_[:j]
        batch = power_all(kern, Z, X) ** 2
        if j == sel.n_centers_:
            assert np.allclose(sel.residual_power_sq_, batch, atol=1e-7)
    # selections themselves must match a batch-recomputation greedy
    sel_batch_indices = []
    idx_all = np.arange(len(X))
    chosen = []
    for _ in range(sel.n_centers_):
        p2 = power_all(kern, X[chosen] if chosen else np.zeros((0, 3)), X) ** 2
        if chosen:
            p2[np.array(chosen)] = 0.0
        i = int(np.argmax(p2))
        chosen.append(i)
        sel_batch_indices.append(i)
    assert list(sel.center_indices_) == sel_batch_indices


def test_selector_determinism(kern):
    X = np.random.default_rng(8).uniform(-5, 5, size=(300, 3))
    a = PGreedySelector(kernel=kern, tol=1e-8, max_centers=40).fit(X)
    b = PGreedySelector(kernel=kern, tol=1e-8, max_centers=40).fit(X)
    assert np.array_equal(a.center_indices_, b.center_indices_)
    assert np.array_equal(a.max_power_history_, b.max_power_history_)


def test_selector_truncation_flag(kern):
    X = np.random.default_rng(9).uniform(-5, 5, size=(500, 3))
    sel = PGreedySelector(kernel=kern, tol=1e-12, max_centers=10).fit(X)
    assert sel.truncated_
    assert sel.stop_reason_ == "max_centers"


def test_selector_duplicate_candidates(kern):
    X = np.tile(np.array([[1.0, 1.0, 1.0]]), (10, 1))
    sel = PGreedySelector(kernel=kern, tol=1e-9, max_centers=5).fit(X)
    assert sel.n_centers_ == 1  # all residuals vanish after the first pick


def test_transform_is_cross_kernel(kern):
    rng = np.random.default_rng(10)
    X = rng.uniform(-5, 5, size=(100, 3))
    sel = PGreedySelector(kernel=kern, tol=1e-8, max_centers=10).fit(X)
    Q = rng.uniform(-5, 5, size=(7, 3))
    assert np.allclose(sel.transform(Q), kern(Q, sel.centers_))


def test_sklearn_get_params_round_trip(kern):
    sel = PGreedySelector(kernel=kern, tol=1e-8, max_centers=10)
    params = sel.get_params(deep=False)
    assert params["tol"] == 1e-8
    clone = PGreedySelector(**params)
    assert clone.max_centers == 10


def test_sklearn_clone_compatible(kern):
    from sklearn.base import clone

    sel = PGreedySelector(kernel=kern, tol=1e-8, max_centers=10)
    cloned = clone(sel)
    assert cloned.max_centers == 10 and cloned.kernel == kern


def test_fill_distance_zero_when_equal():
    X = np.random.default_rng(11).uniform(-1, 1, size=(20, 2))
    assert fill_distance(X, X) == 0.0


def test_fill_distance_farthest_point():
    X = np.array([[0.0], [1.0], [2.0]])
    assert fill_distance(X, np.array([[0.0]])) == 2.0


def test_fill_distance_monotone_over_greedy_prefixes(kern):
    rng = np.random.default_rng(12)
    X = rng.uniform(-5, 5, size=(400, 3))
    sel = PGreedySelector(kernel=kern, tol=1e-10, max_centers=30).fit(X)
    vals = [fill_distance(X, sel.centers_[:j]) for j in range(1, sel.n_centers_ + 1)]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


def test_fill_distance_empty_Z_rejected():
    with pytest.raises(ValueError):
        fill_distance(np.zeros((3, 2)), np.zeros((0, 2)))


def test_theoretical_exponent_reference_values():
    assert theoretical_exponent(2.5, 3, np.inf) == pytest.approx(-5.0 / 6.0)
    assert theoretical_exponent(2.5, 3, 2) == pytest.approx(-(2.5 + 1.5) / 3.0)
    assert theoretical_exponent(2.5, 1, np.inf) == pytest.approx(-2.5)


def test_theoretical_exponent_q2_drops_positive_part():
    for nu, d in [(0.5, 1), (1.5, 2), (2.5, 3)]:
        assert theoretical_exponent(nu, d, 2) == pytest.approx(-(nu + d / 2) / d)


def test_decay_fit_exact_power_law():
    history = [1.0 / n for n in range(1, 21)]
    report = decay_fit(history, model="algebraic", d=1)
    assert report.fitted_slope == pytest.approx(-1.0, abs=1e-6)
    assert report.fit_r2 >= 0.9999


def test_decay_fit_constant_history():
    report = decay_fit([0.5] * 12, model="algebraic", d=1)
    assert report.fitted_slope == pytest.approx(0.0, abs=1e-12)


def test_decay_fit_exponential_model():
    n = np.arange(1, 31)
    history = 3.0 * np.exp(-0.7 * n)  # d = 1
    report = decay_fit(history, model="exponential", d=1)
    c, C = report.exp_fit
    assert c == pytest.approx(0.7, rel=1e-6)
    assert C == pytest.approx(3.0, rel=1e-6)


def test_decay_fit_short_history_rejected():
    with pytest.raises(ValueError):
        decay_fit([1.0, 0.5], model="algebraic", d=1)


def test_rkhs_ball_error_bound(kern):
    # |f(x) - interpolant(x)| <= ||f||_H * P_Z(x) for f in the span
    rng = np.random.default_rng(13)
    X = rng.uniform(-5, 5, size=(300, 3))
    sel = PGreedySelector(kernel=kern, tol=1e-10, max_centers=25).fit(X)
    Z = sel.centers_
    K_ZZ = kern.gram(Z)
    for _ in range(10):
        anchors = rng.uniform(-5, 5, size=(12, 3))
        c = rng.normal(size=12)
        K_aa = kern.gram(anchors, jitter=0.0)
        norm = math.sqrt(max(c @ K_aa @ c, 1e-300))
        R = 5.0
        c = c * (R / norm)  # scale so ||f||_H = R
        f_X = kern(X, anchors) @ c
        f_Z = kern(Z, anchors) @ c
        interp = kern(X, Z) @ np.linalg.solve(K_ZZ, f_Z)
        p = power_all(kern, Z, X)
        assert np.all(np.abs(f_X - interp) <= R * p + 1e-6)
