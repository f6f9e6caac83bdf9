"""Baseline models: MLP, GCN, GaussianGCN and neural sheaf diffusion.

MLP, GCN and NSD see the inputs only through samples: each of the
``n_samples`` draws from the node Gaussians is pushed through the network as
its own graph signal, giving one output sample per draw.
"""
from __future__ import annotations

import torch
from torch import nn

from ..autodiff import DTYPE
from ..errors import ParameterError
from .base import GraphRegressor
from .layers import MAP_KINDS, MapLearner, TorchSheaf, mlp, normalized_adjacency


def _input_samples(batch: dict, z: torch.Tensor) -> torch.Tensor:
    """``mu + z Sigma^{1/2}`` per node: ``(n, T, s)``."""
    return batch["means"].unsqueeze(1) + z @ batch["in_sqrt"].transpose(-1, -2)


def _vech(S: torch.Tensor) -> torch.Tensor:
    i, j = torch.tril_indices(S.shape[-1], S.shape[-1])
    return S[..., i, j]


class _Module(nn.Module):
    def sheaf_parameters(self):
        return []

    def post_step(self):
        pass


class MLPModule(_Module):
    def __init__(self, s, h, layers, out_dim):
        super().__init__()
        self.noise_dim = s
        self.net = mlp([s] + [h] * layers + [out_dim])

    def forward(self, batch, z):
        return self.net(_input_samples(batch, z))


class GCNModule(_Module):
    def __init__(self, s, h, layers, out_dim):
        super().__init__()
        self.noise_dim = s
        self.convs = nn.ModuleList(nn.Linear(s if i == 0 else h, h, dtype=DTYPE) for i in range(layers))
        self.head = nn.Linear(h if layers else s, out_dim, dtype=DTYPE)
        self._adj = None

    def adjacency(self, batch):
        key = (batch["n"], batch["edges"].data_ptr(), len(batch["edges"]))
        if self._adj is None or self._adj[0] != key:
            self._adj = (key, normalized_adjacency(batch["edges"], batch["n"]))
        return self._adj[1]

    def hidden_states(self, batch, X):
        """Node features after every layer for signals ``X`` of shape ``(..., n, s)``."""
        A = self.adjacency(batch)
        states = []
        for conv in self.convs:
            X = torch.relu(A @ conv(X))
            states.append(X)
        return states

    def forward(self, batch, z):
        X = _input_samples(batch, z).transpose(0, 1)
        states = self.hidden_states(batch, X)
        H = states[-1] if states else X
        return self.head(H).transpose(0, 1)


class GaussianGCNModule(GCNModule):
    def __init__(self, s, h, layers, out_dim):
        q_in = s * (s + 1) // 2
        super().__init__(s + q_in, h, layers, out_dim + out_dim * (out_dim + 1) // 2)
        self.out_dim = out_dim
        self.noise_dim = out_dim
        self.cov_head = nn.Linear(out_dim * (out_dim + 1) // 2, out_dim, dtype=DTYPE)

    def features(self, batch):
        return torch.cat([batch["means"], _vech(batch["covs"])], dim=-1)

    def gaussian(self, batch):
        """Predicted mean ``(n, out)`` and diagonal variances ``(n, out)``."""
        states = self.hidden_states(batch, self.features(batch))
        o = self.head(states[-1] if states else self.features(batch))
        mean, rest = o[..., :self.out_dim], o[..., self.out_dim:]
        return mean, torch.exp(self.cov_head(rest))

    def forward(self, batch, z):
        mean, var = self.gaussian(batch)
        return mean.unsqueeze(1) + z * torch.sqrt(var).unsqueeze(1)


class NSDModule(_Module):
    """Neural sheaf diffusion on sampled signals with per-layer learned maps."""

    def __init__(self, s, d, h, layers, out_dim, n_nodes, map_kind, map_hidden=32):
        super().__init__()
        self.noise_dim = s
        self.d, self.h = d, h
        self.n_nodes = n_nodes
        self.lift = nn.Linear(s, d * h, dtype=DTYPE)
        self.learners = nn.ModuleList(MapLearner(2 * d * h, d, map_kind, map_hidden) for _ in range(layers))
        self.W1 = nn.ParameterList(nn.Parameter(torch.eye(d, dtype=DTYPE)) for _ in range(layers))
        self.W2 = nn.ParameterList(nn.Parameter(torch.eye(h, dtype=DTYPE)) for _ in range(layers))
        self.epsilon = nn.Parameter(torch.zeros(n_nodes, d, dtype=DTYPE))
        self.head = nn.Linear(d * h, out_dim, dtype=DTYPE)

    def sheaf_parameters(self):
        return list(self.learners.parameters())

    def post_step(self):
        with torch.no_grad():
            self.epsilon.clamp_(-1.0, 1.0)

    def step(self, X, maps, edges, n, t):
        sheaf = TorchSheaf(maps, edges, n)
        eps = self.epsilon.clamp(-1.0, 1.0).unsqueeze(-1)
        return (1.0 + eps) * X - nn.functional.elu(sheaf.mean(self.W1[t] @ X @ self.W2[t]))

    def forward(self, batch, z):
        n, edges = batch["n"], batch["edges"]
        if n != self.n_nodes:
            raise ParameterError(f"NSD model was built for {self.n_nodes} nodes, got {n}")
        X = self.lift(_input_samples(batch, z).transpose(0, 1)).reshape(-1, n, self.d, self.h)
        a, b = edges[:, 0], edges[:, 1]
        for t, learner in enumerate(self.learners):
            flat = X.reshape(X.shape[0], n, -1)
            maps = learner(torch.cat([flat[:, a], flat[:, b]], -1), torch.cat([flat[:, b], flat[:, a]], -1))
            X = self.step(X, maps, edges, n, t)
        return self.head(X.reshape(X.shape[0], n, -1)).transpose(0, 1)


def _init_common(self, layers, hidden, lr, epochs, patience, lr_patience, lr_factor, weight_decay, sheaf_decay,
                 n_samples, sinkhorn_eps, sinkhorn_iters, seed):
    self.layers = layers
    self.hidden = hidden
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


class MLPRegressor(GraphRegressor):
    model_name = "mlp"

    def __init__(self, layers=2, hidden=32, lr=1e-2, epochs=1500, patience=100, lr_patience=20, lr_factor=0.5,
                 weight_decay=5e-3, sheaf_decay=5e-3, n_samples=30, sinkhorn_eps=None, sinkhorn_iters=100, seed=0):
        _init_common(self, layers, hidden, lr, epochs, patience, lr_patience, lr_factor, weight_decay,
                     sheaf_decay, n_samples, sinkhorn_eps, sinkhorn_iters, seed)

    def _build_module(self, dims):
        return MLPModule(dims["input_dim"], self.hidden, self.layers, dims["output_dim"])


class GCNRegressor(GraphRegressor):
    model_name = "gcn"

    def __init__(self, layers=2, hidden=32, lr=1e-2, epochs=1500, patience=100, lr_patience=20, lr_factor=0.5,
                 weight_decay=5e-3, sheaf_decay=5e-3, n_samples=30, sinkhorn_eps=None, sinkhorn_iters=100, seed=0):
        _init_common(self, layers, hidden, lr, epochs, patience, lr_patience, lr_factor, weight_decay,
                     sheaf_decay, n_samples, sinkhorn_eps, sinkhorn_iters, seed)

    def _build_module(self, dims):
        return GCNModule(dims["input_dim"], self.hidden, self.layers, dims["output_dim"])

    def layer_energies(self, X) -> list:
        """Dirichlet energy of the hidden features after each layer, fed the input means.

        Energy uses the augmented normalized Laplacian ``I - D~^{-1/2}(A+I)D~^{-1/2}``.
        """
        from ..validation import check_dataset
        from .base import make_batch
        module = self._fitted()
        batch = make_batch(check_dataset(X))
        A = module.adjacency(batch)
        with torch.no_grad():
            states = module.hidden_states(batch, batch["means"])
            return [float((H * (H - A @ H)).sum()) for H in states]


class GaussianGCNRegressor(GraphRegressor):
    model_name = "gaussian_gcn"

    def __init__(self, layers=2, hidden=32, lr=1e-2, epochs=1500, patience=100, lr_patience=20, lr_factor=0.5,
                 weight_decay=5e-3, sheaf_decay=5e-3, n_samples=30, sinkhorn_eps=None, sinkhorn_iters=100, seed=0):
        _init_common(self, layers, hidden, lr, epochs, patience, lr_patience, lr_factor, weight_decay,
                     sheaf_decay, n_samples, sinkhorn_eps, sinkhorn_iters, seed)

    def _build_module(self, dims):
        return GaussianGCNModule(dims["input_dim"], self.hidden, self.layers, dims["output_dim"])


class NSDRegressor(GraphRegressor):
    model_name = "nsd"

    def __init__(self, map_kind="general", stalk_dim=2, layers=2, hidden=8, map_hidden=32, lr=1e-2, epochs=1500,
                 patience=100, lr_patience=20, lr_factor=0.5, weight_decay=5e-3, sheaf_decay=5e-3, n_samples=30,
                 sinkhorn_eps=None, sinkhorn_iters=100, seed=0):
        self.map_kind = map_kind
        self.stalk_dim = stalk_dim
        self.map_hidden = map_hidden
        _init_common(self, layers, hidden, lr, epochs, patience, lr_patience, lr_factor, weight_decay,
                     sheaf_decay, n_samples, sinkhorn_eps, sinkhorn_iters, seed)

    def _build_module(self, dims):
        if self.map_kind not in MAP_KINDS:
            raise ParameterError(f"unknown map class {self.map_kind!r}")
        return NSDModule(dims["input_dim"], self.stalk_dim, self.hidden, self.layers, dims["output_dim"],
                         dims["n"], self.map_kind, self.map_hidden)
