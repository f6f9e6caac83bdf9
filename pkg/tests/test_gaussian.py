import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsheaf.errors import ParameterError, SingularityError
from gsheaf.gaussian import (Gaussian, GaussianField, bures_w2, convolve, kl_divergence, mle_fit, project_psd,
                             psd_sqrt, pushforward, sample)

from conftest import random_spd


def gaussian(rng, d):
    return Gaussian(rng.standard_normal(d), random_spd(rng, d))


def test_pushforward_identity(rng):
    g = gaussian(rng, 3)
    assert pushforward(np.eye(3), g).allclose(g)


def test_pushforward_diagonal_scaling():
    out = pushforward(np.diag([2.0, 1.0]), Gaussian([1.0, 1.0], np.eye(2)))
    np.testing.assert_allclose(out.mean, [2, 1])
    np.testing.assert_allclose(out.cov, np.diag([4, 1]))


def test_pushforward_zero_map(rng):
    out = pushforward(np.zeros((2, 2)), gaussian(rng, 2))
    assert np.all(out.mean == 0) and np.all(out.cov == 0)


def test_pushforward_composition(rng):
    g = gaussian(rng, 3)
    A, B = rng.standard_normal((2, 3, 3))
    assert pushforward(B, pushforward(A, g)).allclose(pushforward(B @ A, g), atol=1e-10)


def test_convolve_examples(rng):
    assert convolve([Gaussian(0, 1), Gaussian(0, 1)]).allclose(Gaussian(0, 2))
    g = gaussian(rng, 2)
    assert convolve([g]).allclose(g)
    assert convolve([Gaussian(1, 2), Gaussian(2, 3), Gaussian(-3, 5)]).allclose(Gaussian(0, 10))


def test_convolve_commutative_associative(rng):
    a, b, c = (gaussian(rng, 2) for _ in range(3))
    assert convolve([a, b]).allclose(convolve([b, a]), atol=1e-12)
    assert convolve([convolve([a, b]), c]).allclose(convolve([a, convolve([b, c])]), atol=1e-12)


def test_kl_examples(rng):
    g = gaussian(rng, 3)
    assert kl_divergence(g, g) == pytest.approx(0.0, abs=1e-12)
    assert kl_divergence(Gaussian(1, 1), Gaussian(0, 1)) == pytest.approx(0.5)
    with pytest.raises(SingularityError):
        kl_divergence(Gaussian(0, 1), Gaussian(0, 1e-20))


def kl_monte_carlo(p, q, rng, T=400_000):
    from scipy.stats import multivariate_normal
    x = rng.multivariate_normal(p.mean, p.cov, size=T)
    return float(np.mean(multivariate_normal(p.mean, p.cov).logpdf(x) - multivariate_normal(q.mean, q.cov).logpdf(x)))


def test_kl_matches_monte_carlo(rng):
    p, q = gaussian(rng, 2), gaussian(rng, 2)
    assert kl_divergence(p, q) == pytest.approx(kl_monte_carlo(p, q, rng), rel=0.05, abs=0.02)


def test_kl_nonnegative(rng):
    for _ in range(50):
        assert kl_divergence(gaussian(rng, 3), gaussian(rng, 3)) >= 0


def test_bures_examples(rng):
    assert bures_w2(Gaussian(0, 1), Gaussian(3, 1)) == pytest.approx(3.0)
    assert bures_w2(Gaussian(0, 1), Gaussian(0, 4)) == pytest.approx(1.0)
    g = gaussian(rng, 3)
    assert bures_w2(g, g) == pytest.approx(0.0, abs=1e-8)


def bures_oracle(p, q):
    # commuting-free formula via scipy's principal square root of S1 S2
    from scipy.linalg import sqrtm
    cross = np.real(sqrtm(p.cov @ q.cov))
    return np.sqrt(np.sum((p.mean - q.mean) ** 2) + np.trace(p.cov + q.cov - 2 * cross))


def test_bures_matches_oracle(rng):
    for _ in range(20):
        p, q = gaussian(rng, 3), gaussian(rng, 3)
        assert bures_w2(p, q) == pytest.approx(bures_oracle(p, q), rel=1e-7)


def test_bures_metric_axioms(rng):
    for _ in range(30):
        a, b, c = (gaussian(rng, 2) for _ in range(3))
        assert abs(bures_w2(a, b) - bures_w2(b, a)) < 1e-8
        assert bures_w2(a, c) <= bures_w2(a, b) + bures_w2(b, c) + 1e-6


def test_psd_sqrt_examples(rng):
    np.testing.assert_allclose(psd_sqrt(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    B = rng.standard_normal((4, 4))
    S = B.T @ B
    R = psd_sqrt(S)
    assert np.linalg.norm(R @ R - S) / np.linalg.norm(S) < 1e-8


def test_project_psd_clamps_and_is_idempotent():
    S = np.diag([1.0, -1e-12])
    P = project_psd(S)
    assert np.linalg.eigvalsh(P).min() >= 0
    np.testing.assert_array_equal(project_psd(P), P)


def test_project_psd_rejects_negative():
    with pytest.raises(ParameterError):
        project_psd(np.diag([1.0, -0.5]))
    with pytest.raises(ParameterError):
        project_psd(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_sample_degenerate_and_deterministic():
    g = Gaussian([1.0, -2.0], np.zeros((2, 2)))
    np.testing.assert_array_equal(sample(g, 5, 0), np.tile([1.0, -2.0], (5, 1)))
    h = Gaussian([0.0, 0.0], np.eye(2))
    np.testing.assert_array_equal(sample(h, 10, 42), sample(h, 10, 42))


def test_sample_mean_concentrates():
    x = sample(Gaussian([0.0, 0.0], np.eye(2)), 50_000, 3)
    assert np.all(np.abs(x.mean(0)) < 0.03)


def test_mle_fit_examples(rng):
    g = mle_fit([[0.0, 0.0], [2.0, 0.0]])
    np.testing.assert_allclose(g.mean, [1, 0])
    np.testing.assert_allclose(g.cov, [[1, 0], [0, 0]])
    z = mle_fit(np.ones((4, 2)))
    assert np.all(z.cov == 0)
    target = Gaussian(rng.standard_normal(2), random_spd(rng, 2, 0.3))
    assert bures_w2(mle_fit(sample(target, 100_000, rng)), target) < 0.05


def test_field_validation():
    with pytest.raises(Exception):
        GaussianField(np.zeros((3, 2)), np.zeros((3, 3, 3)))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4), st.floats(0.1, 3.0))
def test_pushforward_scalar_reading(entries, alpha):
    B = np.array(entries).reshape(2, 2)
    g = Gaussian([1.0, 2.0], B @ B.T)
    out = pushforward(alpha * np.eye(2), g)
    np.testing.assert_allclose(out.mean, alpha * g.mean)
    np.testing.assert_allclose(out.cov, alpha ** 2 * g.cov, atol=1e-12)
