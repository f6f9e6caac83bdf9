"""Gaussian sheaf neural network.

Forward pass, per node ``v`` with input ``N(mu_v, Sigma_v)``:

1. embed into ``h`` channels of ``d``-dim stalks with ``W_o[c]``;
2. mix stalks with ``W1`` and channels with ``W2`` (covariances use a
   softplus copy of ``W2`` so the mix stays in the PSD cone);
3. diffuse ``layers`` times with ``I - Delta_M`` on means and ``I + Delta_C``
   on covariances, where the restriction maps are learned once from the input
   field (identity maps for the ``graphlap`` variant);
4. average channels, draw reparameterized samples, map each through the
   readout MLP.
"""
from __future__ import annotations

import math

import torch
from torch import nn

from ..autodiff import DTYPE, cholesky_jitter
from ..errors import ParameterError, ShapeError
from .base import GraphRegressor
from .layers import MAP_KINDS, MapLearner, TorchSheaf, identity_maps, mlp

VARIANTS = ("sheaf", "graphlap")
SOFTPLUS_ONE = math.log(math.e - 1.0)


class GSNNModule(nn.Module):
    def __init__(self, s: int, d: int, h: int, layers: int, out_dim: int, map_kind: str = "orthogonal",
                 variant: str = "sheaf", map_hidden: int = 32, readout_hidden: int = 32):
        super().__init__()
        if map_kind not in MAP_KINDS:
            raise ParameterError(f"unknown map class {map_kind!r}")
        if variant not in VARIANTS:
            raise ParameterError(f"unknown variant {variant!r}")
        self.s, self.d, self.h, self.layers = s, d, h, layers
        self.map_kind, self.variant = map_kind, variant
        self.W_o = nn.Parameter(torch.randn(h, d, s, dtype=DTYPE) / math.sqrt(s))
        self.W1 = nn.Parameter(torch.eye(d, dtype=DTYPE))
        self.W2 = nn.Parameter(torch.eye(h, dtype=DTYPE))
        raw = torch.full((h, h), -4.0, dtype=DTYPE)
        raw.fill_diagonal_(SOFTPLUS_ONE)
        self.W2_cov = nn.Parameter(raw)
        self.learner = MapLearner(2 * s + 2, d, map_kind, map_hidden) if variant == "sheaf" else None
        self.readout = mlp([d, readout_hidden, out_dim])

    @property
    def noise_dim(self) -> int:
        return self.d

    def sheaf_parameters(self):
        return list(self.learner.parameters()) if self.learner is not None else []

    def post_step(self):
        pass

    def cov_mixer(self) -> torch.Tensor:
        return nn.functional.softplus(self.W2_cov)

    def restriction_maps(self, means, covs, edges) -> torch.Tensor:
        if self.learner is None:
            return identity_maps(len(edges), self.d)
        det = torch.linalg.det(covs).unsqueeze(-1)
        a, b = edges[:, 0], edges[:, 1]
        ab = torch.cat([means[a], means[b], det[a], det[b]], dim=-1)
        ba = torch.cat([means[b], means[a], det[b], det[a]], dim=-1)
        return self.learner(ab, ba)

    def propagate(self, batch: dict, trace: dict | None = None):
        """Steps 1-3; returns channel means ``(n, d, h)`` and covariances ``(n, h, d, d)``."""
        means, covs, edges = batch["means"], batch["covs"], batch["edges"]
        if means.shape[-1] != self.s:
            raise ShapeError(f"model expects {self.s}-dim inputs, got {means.shape[-1]}")
        mu = torch.einsum("cds,ns->ndc", self.W_o, means)
        Sig = self.W_o @ covs.unsqueeze(1) @ self.W_o.transpose(-1, -2)
        mu = self.W1 @ mu @ self.W2
        Sig = torch.einsum("ncij,ce->neij", self.W1 @ Sig @ self.W1.T, self.cov_mixer())
        sheaf = TorchSheaf(self.restriction_maps(means, covs, edges), edges, batch["n"])
        if trace is not None:
            trace["maps"] = sheaf
            trace["covs"] = [Sig]
            trace["energies"] = [float(sheaf.energy(mu))]
        for _ in range(self.layers):
            mu = mu - sheaf.mean(mu)
            Sig = Sig + sheaf.cov(Sig)
            if trace is not None:
                trace["covs"].append(Sig)
                trace["energies"].append(float(sheaf.energy(mu)))
        return mu, Sig

    def forward(self, batch: dict, z: torch.Tensor, trace: dict | None = None) -> torch.Tensor:
        mu, Sig = self.propagate(batch, trace)
        m = mu.mean(-1)
        S = Sig.mean(1)
        L = cholesky_jitter(S)
        x = m.unsqueeze(1) + z @ L.transpose(-1, -2)
        return self.readout(x)


class GSNNRegressor(GraphRegressor):
    """GSNN estimator; ``map_kind`` picks Diag-, O(d)- or Gen-GSNN, ``variant='graphlap'`` the identity-map model."""

    model_name = "gsnn"

    def __init__(self, map_kind="orthogonal", variant="sheaf", stalk_dim=2, layers=2, hidden=32, map_hidden=32,
                 readout_hidden=32, lr=1e-2, epochs=1500, patience=100, lr_patience=20, lr_factor=0.5,
                 weight_decay=5e-3, sheaf_decay=5e-3, n_samples=30, sinkhorn_eps=None, sinkhorn_iters=100,
                 seed=0):
        self.map_kind = map_kind
        self.variant = variant
        self.stalk_dim = stalk_dim
        self.layers = layers
        self.hidden = hidden
        self.map_hidden = map_hidden
        self.readout_hidden = readout_hidden
        self.lr = lr
        self.epochs = epochs
        self.patience = patience
        self.lr_patience = lr_patience
        self.lr_factor = lr_factor
        self.weight_decay = weight_decay
        self.sheaf_decay = sheaf_decay
        self.n_samples = n_samples
        self.sinkhorn_eps = sinkhorn_eps
        self.sinkhorn_iters = sinkhorn_iters
        self.seed = seed

    def _build_module(self, dims: dict) -> GSNNModule:
        return GSNNModule(dims["input_dim"], self.stalk_dim, self.hidden, self.layers, dims["output_dim"],
                          self.map_kind, self.variant, self.map_hidden, self.readout_hidden)

    def layer_energies(self, X) -> list:
        """Mean-sheaf Dirichlet energy of the channel means after each diffusion layer."""
        from ..validation import check_dataset
        from .base import make_batch
        module = self._fitted()
        trace = {}
        with torch.no_grad():
            module.propagate(make_batch(check_dataset(X)), trace)
        return trace["energies"][1:]
