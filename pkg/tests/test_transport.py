import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lfidgp.errors import DomainError, InsufficientDataError, ShapeError
from lfidgp.transport import (
    SinkhornConfig,
    default_epsilon,
    entropic_ot,
    scaled_wasserstein,
    sinkhorn_divergence,
    sq_distances,
)


def cloud(seed, n=60, d=2, shift=0.0):
    return np.random.default_rng(seed).normal(size=(n, d)) + shift


def test_sq_distances():
    A = np.array([[0.0, 0.0], [1.0, 1.0]])
    B = np.array([[3.0, 4.0]])
    assert np.allclose(sq_distances(A, B), [[25.0], [13.0]])


def test_self_divergence_vanishes():
    for seed in range(5):
        A = cloud(seed)
        assert abs(sinkhorn_divergence(A, A).value) <= 1e-6
    w = np.random.default_rng(9).uniform(0.1, 1, 60)
    A = cloud(9)
    assert abs(sinkhorn_divergence(A, A, a=w, b=w).value) <= 1e-6


def test_symmetry():
    cfg = SinkhornConfig(tol=1e-12, max_iter=20_000)
    for seed in range(5):
        A, B = cloud(seed, 50), cloud(100 + seed, 70, shift=0.7)
        ab = sinkhorn_divergence(A, B, cfg).value
        ba = sinkhorn_divergence(B, A, cfg).value
        assert abs(ab - ba) <= 1e-8


def test_two_dirac_limit():
    for d2 in (0.25, 1.0, 9.0):
        A = np.array([[0.0, 0.0]])
        B = np.array([[np.sqrt(d2), 0.0]])
        res = sinkhorn_divergence(A, B, SinkhornConfig(epsilon=1e-4 * d2))
        assert res.value == pytest.approx(d2, rel=0.01)


def test_two_dirac_clouds_limit():
    # many copies of two points: the plan must still move all mass by d
    A = np.zeros((20, 1))
    B = np.full((30, 1), 2.0)
    res = sinkhorn_divergence(A, B, SinkhornConfig(epsilon=4e-4))
    assert res.value == pytest.approx(4.0, rel=0.01)


def test_divergence_grows_with_separation():
    A = cloud(1)
    vals = [sinkhorn_divergence(A, cloud(2, shift=s)).value for s in (0.0, 0.5, 1.0, 2.0)]
    assert np.all(np.diff(vals) > 0)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 3.0))
def test_nonnegative(seed, shift):
    A, B = cloud(seed, 30), cloud(seed + 1, 25, shift=shift)
    assert sinkhorn_divergence(A, B).value >= -1e-6


def test_entropic_ot_marginals_via_potentials():
    A, B = cloud(3, 40), cloud(4, 30, shift=1.0)
    val, conv, _ = entropic_ot(A, B, 0.5, tol=1e-10, max_iter=20_000)
    assert conv and np.isfinite(val)
    # a smaller regularization never gives a larger primal-dual value for these clouds
    val2, _, _ = entropic_ot(A, B, 0.05, tol=1e-10, max_iter=20_000)
    assert val2 <= val + 1e-9


def test_reports_non_convergence():
    res = sinkhorn_divergence(cloud(5), cloud(6, shift=1), SinkhornConfig(max_iter=1, tol=1e-14))
    assert not res.converged and np.isfinite(res.value)


def test_default_epsilon():
    A = np.array([[0.0], [2.0]])
    assert default_epsilon(A, A) == pytest.approx(0.05 * 4.0)
    assert default_epsilon(np.zeros((2, 1)), np.zeros((2, 1))) == 0.05


def test_errors():
    with pytest.raises(InsufficientDataError):
        sinkhorn_divergence(np.zeros((0, 1)), np.zeros((3, 1)))
    with pytest.raises(ShapeError):
        sinkhorn_divergence(np.zeros((2, 1)), np.zeros((3, 2)))
    with pytest.raises(DomainError):
        sinkhorn_divergence(np.zeros((2, 1)), np.zeros((3, 1)), a=[1.0, -1.0])
    with pytest.raises(DomainError):
        scaled_wasserstein({"gp": 0.0})


def test_scaled_wasserstein():
    assert scaled_wasserstein({"gp": 2.0, "lv-2gp": 1.0}) == {"gp": 2.0, "lv-2gp": 1.0}
    assert scaled_wasserstein({"gp": 3.0, "lv-2gp": 6.0}) == {"gp": 1.0, "lv-2gp": 2.0}
