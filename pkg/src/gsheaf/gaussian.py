"""Gaussian distributions and PSD matrix algebra.

Covariances are plain ``numpy`` arrays kept on the PSD cone by
:func:`project_psd`; a :class:`Gaussian` is a validated (mean, cov) pair and
a :class:`GaussianField` stacks one Gaussian per graph node.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import ParameterError, ShapeError, SingularityError

SYM_RTOL = 1e-10
PSD_TOL = 1e-9
KL_MIN_EIG = 1e-12


def project_psd(S, tol: float = PSD_TOL) -> np.ndarray:
    """Symmetrize ``S`` and clamp round-off negative eigenvalues to zero.

    Works on a single ``(d, d)`` matrix or a stack ``(..., d, d)``. Matrices
    whose negative spectrum exceeds ``tol * max(1, lambda_max)`` are rejected.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim < 2 or S.shape[-1] != S.shape[-2]:
        raise ShapeError(f"expected square matrices, got shape {S.shape}")
    if S.shape[-1] == 0:
        return S.copy()
    scale = np.maximum(np.abs(S).max(axis=(-2, -1), keepdims=True), 1.0)
    asym = np.abs(S - np.swapaxes(S, -1, -2))
    if np.any(asym > SYM_RTOL * scale):
        raise ParameterError("matrix is not symmetric")
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    w, U = np.linalg.eigh(S)
    floor = -tol * np.maximum(w[..., -1], 1.0)
    if np.any(w[..., 0] < floor):
        raise ParameterError(f"matrix is not positive semidefinite (min eig {w[..., 0].min():.3e})")
    if np.all(w >= 0):
        return S
    w = np.clip(w, 0.0, None)
    out = (U * w[..., None, :]) @ np.swapaxes(U, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def psd_sqrt(S) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition (stack-aware)."""
    S = np.asarray(S, dtype=float)
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    w, U = np.linalg.eigh(S)
    r = np.sqrt(np.clip(w, 0.0, None))
    R = (U * r[..., None, :]) @ np.swapaxes(U, -1, -2)
    return 0.5 * (R + np.swapaxes(R, -1, -2))


def congruence(A, S) -> np.ndarray:
    """``A S A^T``, broadcasting over leading axes."""
    A = np.asarray(A, dtype=float)
    return A @ np.asarray(S, dtype=float) @ np.swapaxes(A, -1, -2)


@dataclass(frozen=True)
class Gaussian:
    """Multivariate normal ``N(mean, cov)`` with a PSD covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.asarray(self.cov, dtype=float)
        if cov.ndim == 0:
            cov = cov.reshape(1, 1)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ShapeError(f"mean {mean.shape} and cov {cov.shape} are incompatible")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", project_psd(cov))

    @property
    def dim(self) -> int:
        return self.mean.size

    def allclose(self, other: "Gaussian", atol: float = 1e-10) -> bool:
        return (
            self.dim == other.dim
            and np.allclose(self.mean, other.mean, atol=atol, rtol=0)
            and np.allclose(self.cov, other.cov, atol=atol, rtol=0)
        )

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Gaussian":
        return cls(np.asarray(data["mean"], dtype=float), np.asarray(data["cov"], dtype=float))


class GaussianField:
    """One Gaussian per node, stored as stacked ``means (n, d)`` / ``covs (n, d, d)``."""

    def __init__(self, means, covs, check: bool = True):
        means = np.asarray(means, dtype=float)
        covs = np.asarray(covs, dtype=float)
        if means.ndim != 2 or covs.shape != (means.shape[0], means.shape[1], means.shape[1]):
            raise ShapeError(f"means {means.shape} and covs {covs.shape} are incompatible")
        self.means = means
        self.covs = project_psd(covs) if check else covs

    @classmethod
    def from_gaussians(cls, gs: Sequence[Gaussian]) -> "GaussianField":
        if not gs:
            raise ParameterError("empty field")
        dims = {g.dim for g in gs}
        if len(dims) != 1:
            raise ShapeError(f"mixed Gaussian dimensions {sorted(dims)}")
        return cls(np.stack([g.mean for g in gs]), np.stack([g.cov for g in gs]))

    @property
    def n(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, v: int) -> Gaussian:
        return Gaussian(self.means[v], self.covs[v])

    def __iter__(self) -> Iterator[Gaussian]:
        return (self[v] for v in range(self.n))

    def mean_vector(self) -> np.ndarray:
        """Stacked means as a length ``n*d`` vector (node-major)."""
        return self.means.reshape(-1)

    def allclose(self, other: "GaussianField", atol: float = 1e-10) -> bool:
        return (
            self.means.shape == other.means.shape
            and np.allclose(self.means, other.means, atol=atol, rtol=0)
            and np.allclose(self.covs, other.covs, atol=atol, rtol=0)
        )


def _check_square(A, d: int) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape != (d, d):
        raise ShapeError(f"map of shape {A.shape} cannot act on dimension {d}")
    return A


def pushforward(A, g: Gaussian) -> Gaussian:
    """Image of ``g`` under the linear map ``A``: ``N(A mu, A Sigma A^T)``."""
    A = _check_square(A, g.dim)
    return Gaussian(A @ g.mean, congruence(A, g.cov))


def convolve(gs: Sequence[Gaussian]) -> Gaussian:
    """Law of the sum of independent Gaussians."""
    gs = list(gs)
    if not gs:
        raise ParameterError("cannot convolve an empty list")
    d = gs[0].dim
    if any(g.dim != d for g in gs):
        raise ShapeError("convolution needs a common dimension")
    mean = np.zeros(d)
    cov = np.zeros((d, d))
    for g in gs:
        mean = mean + g.mean
        cov = cov + g.cov
    return Gaussian(mean, cov)


def kl_divergence(p: Gaussian, q: Gaussian) -> float:
    """KL(p || q) in nats."""
    if p.dim != q.dim:
        raise ShapeError("KL needs a common dimension")
    wq = np.linalg.eigvalsh(q.cov)
    if wq[0] <= KL_MIN_EIG:
        raise SingularityError(f"q covariance is singular (min eig {wq[0]:.3e})")
    diff = q.mean - p.mean
    trace_term = np.trace(np.linalg.solve(q.cov, p.cov))
    maha = diff @ np.linalg.solve(q.cov, diff)
    _, logdet_q = np.linalg.slogdet(q.cov)
    sign_p, logdet_p = np.linalg.slogdet(p.cov)
    if sign_p <= 0:
        return float("inf")
    kl = 0.5 * (trace_term + maha - p.dim + logdet_q - logdet_p)
    return float(max(kl, 0.0))


def bures_term(S1, S2) -> float:
    """``tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2)``, floored at zero."""
    R = psd_sqrt(S1)
    cross = psd_sqrt(R @ np.asarray(S2, dtype=float) @ R)
    val = np.trace(S1) + np.trace(S2) - 2.0 * np.trace(cross)
    return float(max(val, 0.0))


def w2_squared(p: Gaussian, q: Gaussian) -> float:
    if p.dim != q.dim:
        raise ShapeError("W2 needs a common dimension")
    return float(np.sum((p.mean - q.mean) ** 2)) + bures_term(p.cov, q.cov)


def bures_w2(p: Gaussian, q: Gaussian) -> float:
    """Closed-form 2-Wasserstein distance between two Gaussians."""
    return float(np.sqrt(w2_squared(p, q)))


def _rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample(g: Gaussian, T: int, rng=None) -> np.ndarray:
    """Draw ``T`` rows ``mu + R z`` with ``R = psd_sqrt(Sigma)``; returns ``(T, d)``."""
    if T < 1:
        raise ParameterError(f"sample count must be >= 1, got {T}")
    z = _rng(rng).standard_normal((T, g.dim))
    return g.mean + z @ psd_sqrt(g.cov)


def mle_fit(samples) -> Gaussian:
    """Maximum-likelihood Gaussian (1/T covariance) for a ``(T, d)`` sample set."""
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise ParameterError(f"mle_fit needs at least 2 samples, got {X.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise ParameterError("samples contain non-finite entries")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / X.shape[0]
    return Gaussian(mean, cov)
