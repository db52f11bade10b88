import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aldb.core import make_rng
from aldb.gpr import (HyperSearchSpec, KernelParams, NotPositiveDefinite, cholesky_with_jitter, fit,
                      kernel_matrix, log_marginal_likelihood, optimize_hyperparams, rbf_kernel, standardize)

from reference import dense_lml, dense_posterior, gram, well_conditioned_instance


def random_instance(seed, n_max=20, d_max=6):
    """Well-conditioned random problem: (X, y, Q, params)."""
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(2, n_max + 1)), int(rng.integers(1, d_max + 1))
    p = KernelParams(float(rng.uniform(0.1, 0.8)), float(rng.uniform(0.5, 2.0)),
                     float(10 ** rng.uniform(-4, -1)))
    return rng.random((n, d)), rng.normal(size=n) * 3 + 1, rng.random((15, d)), p


def test_rbf_examples():
    p = KernelParams(1.0, 1.0)
    assert rbf_kernel([0.2, 0.3], [0.2, 0.3], KernelParams(0.5, 2.5)) == 2.5
    assert abs(rbf_kernel([0, 0], [1, 1], KernelParams(1e9, 1.7)) - 1.7) <= 1e-12
    assert abs(rbf_kernel([0, 0], [1, 1], p) - math.exp(-1)) <= 1e-15
    assert abs(rbf_kernel([0, 0], [1, 1], p) - 0.367879) < 5e-7


def test_kernel_symmetric():
    A = make_rng(0).random((7, 3))
    K = kernel_matrix(A, A, KernelParams(0.4))
    assert np.array_equal(K, K.T)


def test_single_point_factor():
    p = KernelParams(0.3, 1.5, 0.2)
    m = fit([[0.4, 0.6]], [[3.0]], p, jitter=1e-10)
    assert m.outputs[0].L.shape == (1, 1)
    assert abs(m.outputs[0].L[0, 0] - math.sqrt(1.5 + 0.2 + 1e-10)) <= 1e-15


def test_identical_inputs_not_pd():
    with pytest.raises(NotPositiveDefinite):
        fit([[0.5], [0.5]], [[1.0], [2.0]], KernelParams(0.3), jitter=0.0)


def test_jitter_escalation():
    # smallest eigenvalue -1e-9: the first jitter is too small
    K = np.array([[1.0, 1.0 + 1e-9], [1.0 + 1e-9, 1.0]])
    L, used = cholesky_with_jitter(K, 0.0, 1e-10)
    assert used > 1e-9 and np.all(np.isfinite(L))
    with pytest.raises(NotPositiveDefinite):
        cholesky_with_jitter(K - 1e-3 * np.eye(2), 0.0, 1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_factor_reconstructs(seed):
    rng = make_rng(seed)
    X = rng.random((20, 3))
    p = KernelParams(0.4, 1.3, 1e-3)
    m = fit(X, rng.normal(size=(20, 1)), p)
    L = m.outputs[0].L
    target = gram(X, X, 0.4, 1.3) + (1e-3 + m.outputs[0].jitter) * np.eye(20)
    rel = np.abs(L @ L.T - target) / np.maximum(np.abs(target), 1e-300)
    assert rel.max() <= 1e-8


@pytest.mark.parametrize("seed", range(100))
def test_matches_dense_oracle(seed):
    X, y, Q, p = random_instance(seed)
    got = fit(X, y, p).predict(Q)
    mean, std = dense_posterior(X, y, Q, p.length_scale, p.signal_variance, p.noise_variance)
    assert np.max(np.abs(got.mean[:, 0] - mean)) <= 1e-8
    assert np.max(np.abs(got.std[:, 0] - std)) <= 1e-8
    ys = (y - y.mean()) / y.std()
    lml = log_marginal_likelihood(X, ys, p)
    assert abs(lml - dense_lml(X, ys, p.length_scale, p.signal_variance, p.noise_variance)) <= 1e-8


@pytest.mark.parametrize("seed", range(20))
def test_interpolates_training_points(seed):
    X, Y, ell = well_conditioned_instance(seed)
    pred = fit(X, Y, KernelParams(ell, 1.0, 0.0), jitter=1e-10).predict(X)
    assert np.max(np.abs(pred.mean - Y)) <= 1e-6
    assert np.all(pred.std <= 1e-4 * Y.std(axis=0))


def test_prior_recovered_far_away():
    rng = make_rng(4)
    X, y = rng.random((10, 2)), rng.normal(size=10) * 5 + 2
    p = KernelParams(0.1, 2.0, 1e-6)
    pred = fit(X, y, p).predict([[50.0, 50.0]])
    assert abs(pred.mean[0, 0] - y.mean()) <= 1e-6
    assert abs(pred.std[0, 0] - math.sqrt(2.0) * y.std()) <= 1e-6


def test_lml_closed_forms():
    p = KernelParams(0.3, 1.0, 0.0)
    assert abs(log_marginal_likelihood([[0.5]], [0.0], p, jitter=0.0) - (-0.918939)) < 1e-6
    assert abs(log_marginal_likelihood([[0.5]], [1.0], p, jitter=0.0) - (-1.418939)) < 1e-6
    assert log_marginal_likelihood([[0.5]], [0.0], p, jitter=0.0) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-15)


@pytest.mark.parametrize("seed", range(30))
def test_lml_matches_determinant(seed):
    X, y, _, p = random_instance(1000 + seed, n_max=10)
    y = standardize(y)[0]
    lml = log_marginal_likelihood(X, y, p)
    assert abs(lml - dense_lml(X, y, p.length_scale, p.signal_variance, p.noise_variance)) <= 1e-8


def _gp_draw(seed, n=40, d=2, ell=0.3):
    rng = make_rng(seed)
    X = rng.random((n, d))
    K = gram(X, X, ell, 1.0) + 1e-8 * np.eye(n)
    return X, np.linalg.cholesky(K) @ rng.normal(size=n)


@pytest.mark.parametrize("seed", range(5))
def test_length_scale_recovered(seed):
    X, y = _gp_draw(seed)
    p = optimize_hyperparams(X, standardize(y)[0])
    assert 0.15 <= p.length_scale <= 0.6


def test_optimize_deterministic():
    X, y = _gp_draw(9, n=25)
    assert optimize_hyperparams(X, y) == optimize_hyperparams(X, y)


def test_optimize_grid_contains_optimum():
    # the result is at least as good as every grid cell
    X, y = _gp_draw(3, n=20)
    y = standardize(y)[0]
    s = HyperSearchSpec()
    best = optimize_hyperparams(X, y, s)
    top = log_marginal_likelihood(X, y, best)
    rng = make_rng(0)
    for _ in range(40):
        p = KernelParams(float(rng.choice(s.length_scales)), float(rng.choice(s.signal_variances)),
                         float(rng.choice(s.noise_variances)))
        assert log_marginal_likelihood(X, y, p) <= top + 1e-9


def test_optimize_constant_targets():
    p = optimize_hyperparams([[0.1], [0.9]], [0.0, 0.0])
    assert p.length_scale > 0 and p.signal_variance > 0


def test_constant_output_predicts_constant():
    m = fit([[0.1], [0.5], [0.9]], [[4.0], [4.0], [4.0]], KernelParams(0.3))
    pred = m.predict([[0.3], [0.7]])
    assert np.all(pred.mean == 4.0)


@pytest.mark.parametrize("seed", range(10))
def test_pre_clamp_variance(seed):
    X, y, Q, p = random_instance(2000 + seed)
    L, _ = cholesky_with_jitter(gram(X, X, p.length_scale, p.signal_variance), p.noise_variance, 1e-10)
    V = np.linalg.solve(L, gram(X, Q, p.length_scale, p.signal_variance))
    assert np.min(p.signal_variance - (V * V).sum(axis=0)) >= -1e-8


@given(st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_variance_shrinkage(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    p = KernelParams(float(rng.uniform(0.2, 0.6)), 1.0, 0.0)
    X = rng.random((int(rng.integers(1, 10)), d))
    Q = rng.random((100, d))
    X2 = np.vstack([X, rng.random((1, d))])
    # raw targets so both fits share the same output scale
    before = fit(X, np.zeros(len(X)), p, standardize_y=False).predict(Q).std
    after = fit(X2, np.zeros(len(X2)), p, standardize_y=False).predict(Q).std
    assert np.all(after <= before + 1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_permutation_invariance(seed):
    X, y, Q, p = random_instance(3000 + seed)
    perm = np.random.default_rng(seed).permutation(len(X))
    a = fit(X, y, p).predict(Q)
    b = fit(X[perm], y[perm], p).predict(Q)
    assert np.max(np.abs(a.mean - b.mean)) <= 1e-9
    assert np.max(np.abs(a.std - b.std)) <= 1e-9


def test_outputs_independent():
    rng = make_rng(5)
    X, Q = rng.random((15, 3)), rng.random((40, 3))
    Y = rng.normal(size=(15, 3))
    ps = [KernelParams(0.3), KernelParams(0.5, 2.0), KernelParams(0.3)]
    a = fit(X, Y, ps).predict(Q)
    Y2 = Y.copy()
    Y2[:, 1] = rng.normal(size=15) * 100
    b = fit(X, Y2, ps).predict(Q)
    for j in (0, 2):
        assert np.array_equal(a.mean[:, j], b.mean[:, j]) and np.array_equal(a.std[:, j], b.std[:, j])


def test_chunking_bit_identical():
    rng = make_rng(6)
    X, Q = rng.random((30, 4)), rng.random((1000, 4))
    m = fit(X, rng.normal(size=(30, 3)), KernelParams(0.35, 1.0, 1e-6))
    ref = m.predict(Q)
    for chunk, workers in ((7, 1), (100, 4), (1000, 8), (333, 3)):
        got = m.predict(Q, chunk_size=chunk, workers=workers)
        assert np.array_equal(got.mean, ref.mean) and np.array_equal(got.std, ref.std)
