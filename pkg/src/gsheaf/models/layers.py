"""Torch-side sheaf operators and the small networks shared by the models."""
from __future__ import annotations

import math

import torch
from torch import nn

from ..autodiff import DTYPE, sym_inv_sqrt
from ..errors import ParameterError

MAP_KINDS = ("diagonal", "orthogonal", "general")
GENERAL_RIDGE = 1e-3


def mlp(sizes, act=nn.ELU) -> nn.Sequential:
    layers = []
    for i in range(len(sizes) - 1):
        layers.append(nn.Linear(sizes[i], sizes[i + 1], dtype=DTYPE))
        if i < len(sizes) - 2:
            layers.append(act())
    return nn.Sequential(*layers)


def raw_width(kind: str, d: int) -> int:
    if kind == "diagonal":
        return d
    if kind == "orthogonal":
        return d * (d - 1) // 2
    if kind == "general":
        return d * d
    raise ParameterError(f"unknown map class {kind!r}")


def project_maps(raw: torch.Tensor, kind: str, d: int) -> torch.Tensor:
    """Turn raw network outputs ``(..., w)`` into ``(..., d, d)`` maps of the class."""
    if kind == "diagonal":
        return torch.diag_embed(raw)
    eye = torch.eye(d, dtype=raw.dtype)
    if kind == "orthogonal":
        S = torch.zeros(raw.shape[:-1] + (d, d), dtype=raw.dtype)
        if d > 1:
            iu = torch.triu_indices(d, d, offset=1)
            S[..., iu[0], iu[1]] = raw
            S = S - S.transpose(-1, -2)
        try:
            return torch.linalg.solve(eye - S, eye + S)
        except RuntimeError:
            return torch.linalg.matrix_exp(S)
    if kind == "general":
        return raw.reshape(raw.shape[:-1] + (d, d)) + GENERAL_RIDGE * eye
    raise ParameterError(f"unknown map class {kind!r}")


class MapLearner(nn.Module):
    """``F = project(tanh(Psi(features)))`` for both incidences of each edge."""

    def __init__(self, in_width: int, d: int, kind: str, hidden: int = 32):
        super().__init__()
        self.d, self.kind = d, kind
        self.width = raw_width(kind, d)
        self.net = mlp([in_width, hidden, max(self.width, 1)])

    def forward(self, feats_ab: torch.Tensor, feats_ba: torch.Tensor) -> torch.Tensor:
        """Pair features ``(..., E, k)`` ordered (own, other) -> maps ``(..., E, 2, d, d)``."""
        raw = torch.tanh(self.net(torch.stack([feats_ab, feats_ba], dim=-2)))
        return project_maps(raw[..., :self.width], self.kind, self.d)


def identity_maps(n_edges: int, d: int) -> torch.Tensor:
    return torch.eye(d, dtype=DTYPE).expand(n_edges, 2, d, d).clone()


class TorchSheaf:
    """Normalized sheaf Laplacian blocks built from a map tensor ``(..., E, 2, d, d)``.

    Leading batch axes of the maps carry through every operation.
    """

    def __init__(self, maps: torch.Tensor, edges: torch.Tensor, n: int):
        self.edges = edges
        self.n = n
        a, b = edges[:, 0], edges[:, 1]
        self.a, self.b = a, b
        F0, F1 = maps[..., 0, :, :], maps[..., 1, :, :]
        g0 = F0.transpose(-1, -2) @ F0
        g1 = F1.transpose(-1, -2) @ F1
        d = maps.shape[-1]
        ax = maps.dim() - 4
        diag = torch.zeros(maps.shape[:-4] + (n, d, d), dtype=maps.dtype)
        diag = diag.index_add(ax, a, g0).index_add(ax, b, g1)
        off = -F0.transpose(-1, -2) @ F1
        dis = sym_inv_sqrt(diag)
        self.ax = ax
        self.dis = dis
        da, db = dis.index_select(ax, a), dis.index_select(ax, b)
        self.ndiag = dis @ diag @ dis
        self.noff = da @ off @ db
        self.ng0 = da @ g0 @ da
        self.ng1 = db @ g1 @ db
        self._kron = None

    def mean(self, X: torch.Tensor) -> torch.Tensor:
        """``Delta_M X`` for ``X`` of shape ``(..., n, d, h)``."""
        ax = self.ax
        Y = self.ndiag @ X
        Y = Y.index_add(ax, self.a, self.noff @ X.index_select(ax, self.b))
        Y = Y.index_add(ax, self.b, self.noff.transpose(-1, -2) @ X.index_select(ax, self.a))
        return Y

    def energy(self, X: torch.Tensor) -> torch.Tensor:
        """Dirichlet energy ``tr(X^T Delta_M X)`` summed over channels (and batch)."""
        return (X * self.mean(X)).sum()

    def cov(self, S: torch.Tensor) -> torch.Tensor:
        """``Delta_C`` on covariances ``(n, h, d, d)`` via the slot/off-diagonal decomposition.

        Each congruence ``A S A^T`` is applied as ``(A kron A) vec(S)`` so all
        channels of an edge go through one matrix product.
        """
        if self._kron is None:
            N = self.noff
            self._kron = (_kron2(self.ng0), _kron2(N), _kron2(self.ng1), _kron2(N.transpose(-1, -2)))
        K0, KN, K1, KNt = self._kron
        n, h, d = S.shape[0], S.shape[1], S.shape[-1]
        flat = S.reshape(n, h, d * d)
        Sa, Sb = flat.index_select(0, self.a), flat.index_select(0, self.b)
        to_a = Sa @ K0.transpose(-1, -2) + Sb @ KN.transpose(-1, -2)
        to_b = Sb @ K1.transpose(-1, -2) + Sa @ KNt.transpose(-1, -2)
        out = torch.zeros_like(flat).index_add(0, self.a, to_a).index_add(0, self.b, to_b).reshape(S.shape)
        return 0.5 * (out + out.transpose(-1, -2))


def _kron2(A: torch.Tensor) -> torch.Tensor:
    """Row-major ``A kron A`` so that ``vec(A S A^T) = (A kron A) vec(S)``."""
    d = A.shape[-1]
    return (A[..., :, None, :, None] * A[..., None, :, None, :]).reshape(A.shape[:-2] + (d * d, d * d))


def normalized_adjacency(edges: torch.Tensor, n: int) -> torch.Tensor:
    """Dense ``D~^{-1/2} (A + I) D~^{-1/2}`` of the self-loop augmented graph."""
    A = torch.eye(n, dtype=DTYPE)
    if len(edges):
        A[edges[:, 0], edges[:, 1]] = 1.0
        A[edges[:, 1], edges[:, 0]] = 1.0
    dinv = 1.0 / torch.sqrt(A.sum(1))
    return dinv[:, None] * A * dinv[None, :]


def glorot_(t: torch.Tensor, fan_in: int, fan_out: int, gen: torch.Generator | None = None) -> torch.Tensor:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    with torch.no_grad():
        t.uniform_(-bound, bound, generator=gen)
    return t
