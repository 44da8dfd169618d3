import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lfidgp.errors import DomainError, InsufficientDataError
from lfidgp.gp import (
    GammaPrior,
    GPConfig,
    GPModel,
    default_priors,
    gp_fit_map,
    gp_predict,
    lcb_acquisition,
    lml_and_grad,
)
from lfidgp.mathcore import Bounds, RngStream


def hand_cholesky(A):
    n = len(A)
    L = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1):
            s = A[i][j] - sum(L[i][k] * L[j][k] for k in range(j))
            L[i][j] = math.sqrt(s) if i == j else s / L[j][j]
    return L


def hand_solve(L, b):
    """Solve (L L^T) x = b by forward then backward substitution."""
    n = len(b)
    z = [0.0] * n
    for i in range(n):
        z[i] = (b[i] - sum(L[i][k] * z[k] for k in range(i))) / L[i][i]
    x = [0.0] * n
    for i in reversed(range(n)):
        x[i] = (z[i] - sum(L[k][i] * x[k] for k in range(i + 1, n))) / L[i][i]
    return x


def k_scalar(a, b, ls, var, bias):
    return var * math.exp(-0.5 * sum((p - q) ** 2 / l**2 for p, q, l in zip(a, b, ls))) + bias


def hand_predict(seed):
    """Largest |difference| between gp_predict and a hand-written Cholesky on a random 1-D set."""
    g = np.random.default_rng(seed)
    X = [[float(x)] for x in np.sort(g.uniform(0.0, 2.0, 3 + seed % 3))]
    y = [float(v) for v in g.normal(size=len(X))]
    ls, var, bias, noise = [float(g.uniform(0.5, 1.5))], float(g.uniform(0.5, 2.0)), 0.4, 0.05
    model = GPModel(np.array(X), np.array(y), np.log([*ls, var, bias, noise]))
    K = [[k_scalar(a, b, ls, var, bias) + (noise + model.jitter if i == j else 0.0)
          for j, b in enumerate(X)] for i, a in enumerate(X)]
    L = hand_cholesky(K)
    alpha = hand_solve(L, y)
    worst = 0.0
    for xs in ([0.4], [2.0], [-1.0]):
        ks = [k_scalar(xs, a, ls, var, bias) for a in X]
        mean = sum(k * a for k, a in zip(ks, alpha))
        v = hand_solve(L, ks)
        variance = k_scalar(xs, xs, ls, var, bias) - sum(k * w for k, w in zip(ks, v))
        m, s2 = gp_predict(model, np.array([xs]))
        worst = max(worst, abs(m[0] - mean), abs(s2[0] - variance))
    return worst


@pytest.mark.parametrize("seed", range(5))
def test_predict_matches_hand_cholesky(seed):
    assert hand_predict(seed) <= 1e-10


def test_interpolates_when_noise_vanishes():
    X = np.array([[0.0], [1.0], [2.5]])
    y = np.array([1.0, -1.0, 0.5])
    model = GPModel(X, y, np.log([1.0, 1.0, 0.1, 1e-10]))
    m, _ = model.predict(X)
    assert np.allclose(m, y, atol=1e-6)


def test_prior_reversion_far_from_data():
    X = np.array([[0.0], [0.5]])
    model = GPModel(X, np.array([0.2, -0.1]), np.log([0.3, 1.2, 0.01, 0.01]))
    m, v = model.predict(np.array([[1e3]]))
    # only the shared constant (bias) component reaches this far
    assert m[0] == pytest.approx(model.bias * model.alpha.sum(), abs=1e-12)
    assert abs(m[0]) <= 0.01 * (1.2 + 0.01)
    assert v[0] == pytest.approx(1.2 + 0.01, rel=0.01)


def test_predict_domain_error():
    model = GPModel(np.array([[1.0], [2.0]]), np.array([0.0, 1.0]), np.zeros(4))
    with pytest.raises(DomainError):
        gp_predict(model, np.array([[150.0]]), bounds=Bounds([0.0], [100.0]))


@pytest.mark.parametrize("seed", range(10))
def test_lml_gradient_matches_central_differences(seed):
    g = np.random.default_rng(seed)
    d = 1 + seed % 2
    X = g.normal(size=(5, d))
    y = g.normal(size=5)
    lp = g.uniform(-1.0, 0.5, d + 3)
    priors = default_priors(X)
    _, grad = lml_and_grad(lp, X, y, priors)
    h = 1e-5
    for j in range(lp.size):
        e = np.zeros_like(lp)
        e[j] = h
        fd = (lml_and_grad(lp + e, X, y, priors)[0] - lml_and_grad(lp - e, X, y, priors)[0]) / (2 * h)
        assert abs(fd - grad[j]) <= 1e-4 * max(abs(fd), 1e-3)


def test_lml_value_matches_model():
    g = np.random.default_rng(3)
    X, y = g.normal(size=(6, 2)), g.normal(size=6)
    lp = np.log([0.7, 1.1, 0.9, 0.3, 0.2])
    model = GPModel(X, y, lp)
    assert lml_and_grad(lp, X, y)[0] == pytest.approx(model.log_marginal_likelihood(), rel=1e-12)


def smooth_data(n=50, seed=0):
    g = np.random.default_rng(seed)
    X = np.sort(g.uniform(-2, 2, n))[:, None]
    y = np.sin(2 * X[:, 0]) + 0.05 * g.normal(size=n)
    return X, (y - y.mean()) / y.std()


def test_fit_improves_objective_and_is_deterministic():
    X, y = smooth_data()
    priors = default_priors(X)
    start = np.log([p.mean for p in priors])
    before = GPModel(X, y, start, priors).objective()
    a = gp_fit_map(X, y, RngStream(0))
    b = gp_fit_map(X, y, RngStream(0))
    assert a.objective() >= before
    assert np.array_equal(a.log_params, b.log_params)
    assert np.all(np.isfinite(a.lengthscales)) and np.all(a.lengthscales > 0)


def test_fit_needs_two_points():
    with pytest.raises(InsufficientDataError):
        gp_fit_map(np.zeros((1, 1)), np.zeros(1), RngStream(0))


def test_variance_bounded_by_prior_and_shrinks_with_data():
    X, y = smooth_data(12, 1)
    model = GPModel(X, y, np.log([0.4, 1.0, 0.3, 0.05]))
    grid = np.linspace(-4, 4, 200)[:, None]
    _, v = model.predict(grid, include_noise=True)
    assert np.all(v <= model.variance + model.bias + model.noise + 1e-8)
    x_new = np.array([[0.123]])
    _, v_before = model.predict(x_new)
    bigger = model.with_data(np.vstack([X, x_new]), np.append(y, 0.0))
    _, v_after = bigger.predict(x_new)
    assert v_after[0] <= v_before[0] + 1e-12


def test_lcb_examples():
    assert lcb_acquisition(2.0, 0.0, 5.0) == 2.0
    assert lcb_acquisition(1.0, 4.0, 4.0) == -3.0
    with pytest.raises(DomainError):
        lcb_acquisition(1.0, 1.0, -1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-10, 10), st.floats(0, 10), st.floats(0, 50), st.floats(0, 50))
def test_lcb_non_increasing_in_eta(m, v, e1, e2):
    lo, hi = sorted((e1, e2))
    assert lcb_acquisition(m, v, hi) <= lcb_acquisition(m, v, lo)


def test_gamma_prior_moments():
    p = GammaPrior.from_moments(0.2, cv=0.5)
    assert p.mean == pytest.approx(0.2)
    assert p.shape / p.rate**2 == pytest.approx((0.5 * 0.2) ** 2)
    x, h = 0.37, 1e-6
    fd = (p.logpdf(x * math.exp(h)) - p.logpdf(x * math.exp(-h))) / (2 * h)
    assert p.dlogpdf_dlog(x) == pytest.approx(fd, rel=1e-6)


def test_default_priors_follow_input_span():
    X = np.array([[0.0, 10.0], [4.0, 30.0]])
    pri = default_priors(X, GPConfig())
    assert pri[0].mean == pytest.approx(0.4) and pri[1].mean == pytest.approx(2.0)
    assert [p.mean for p in pri[2:]] == pytest.approx([1.0, 1.0, 0.1])


def test_model_file_round_trip(tmp_path):
    X, y = smooth_data(8)
    model = gp_fit_map(X, y, RngStream(2))
    path = tmp_path / "gp.json"
    model.save(path)
    back = GPModel.load(path)
    grid = np.linspace(-2, 2, 7)[:, None]
    assert np.array_equal(model.predict(grid)[0], back.predict(grid)[0])
