"""Estimator plumbing shared by GSNN and the baselines.

Every model is an sklearn-style estimator: hyperparameters in ``__init__``,
``fit(dataset)`` learns a torch module stored as ``module_``, and
``predict`` / ``evaluate`` / ``score`` work on a split of a :class:`Dataset`.
"""
from __future__ import annotations

import copy
import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from sklearn.base import BaseEstimator

from ..autodiff import DTYPE, make_optimizer, sinkhorn_w2
from ..data import SPLIT_NAMES, Dataset
from ..errors import NumericError, ParameterError, SchemaError
from ..gaussian import psd_sqrt
from ..validation import check_dataset, check_positive_int, check_split

log = logging.getLogger(__name__)

EVAL_SEED_OFFSET = 7919
HISTORY_FIELDS = ("epoch", "train_loss", "val_loss", "lr")


@dataclass(frozen=True)
class EvalResult:
    mean: float
    sd: float
    per_node: np.ndarray
    nodes: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean, "sd": self.sd, "per_node": self.per_node.tolist(), "nodes": self.nodes.tolist()}


def make_batch(ds: Dataset) -> dict:
    """Tensors a module needs from a dataset (inputs, graph, targets)."""
    Y, w = ds.padded_targets()
    return {
        "n": ds.n,
        "means": torch.as_tensor(ds.inputs.means, dtype=DTYPE),
        "covs": torch.as_tensor(ds.inputs.covs, dtype=DTYPE),
        "in_sqrt": torch.as_tensor(psd_sqrt(ds.inputs.covs), dtype=DTYPE),
        "edges": torch.as_tensor(ds.graph.edge_array(), dtype=torch.long),
        "targets": torch.as_tensor(Y, dtype=DTYPE),
        "weights": torch.as_tensor(w, dtype=DTYPE),
    }


def w2_values(pred: torch.Tensor, targets: torch.Tensor, weights: torch.Tensor | None,
              epsilon=None, iters: int = 100) -> np.ndarray:
    """Per-node ``sqrt(max(Sinkhorn cost, 0))`` between predicted and target sample sets."""
    with torch.no_grad():
        cost = sinkhorn_w2(pred, targets, epsilon, iters, wy=weights)
    return np.sqrt(np.clip(cost.numpy(), 0.0, None))


class GraphRegressor(BaseEstimator):
    """Base class; subclasses define ``__init__`` and ``_build_module``."""

    model_name = "base"

    def _build_module(self, dims: dict) -> torch.nn.Module:
        raise NotImplementedError

    def _check_params(self):
        for name in ("hidden", "n_samples", "sinkhorn_iters"):
            check_positive_int(getattr(self, name), name)
        if isinstance(self.layers, bool) or not isinstance(self.layers, int) or self.layers < 0:
            raise ParameterError(f"layers must be a nonnegative integer, got {self.layers!r}")
        if self.epochs < 0:
            raise ParameterError(f"epochs must be >= 0, got {self.epochs}")
        if not self.lr > 0:
            raise ParameterError(f"lr must be positive, got {self.lr}")
        if self.sinkhorn_eps is not None and not self.sinkhorn_eps > 0:
            raise ParameterError(f"sinkhorn_eps must be positive, got {self.sinkhorn_eps}")

    def _loss(self, module, batch, z, idx, grad: bool):
        out = module(batch, z)
        cost = sinkhorn_w2(out[idx], batch["targets"][idx], self.sinkhorn_eps, self.sinkhorn_iters,
                           wy=batch["weights"][idx])
        return cost.mean() if grad else float(cost.mean())

    def _draw(self, module, n: int, gen: torch.Generator) -> torch.Tensor:
        return torch.randn((n, self.n_samples, module.noise_dim), generator=gen, dtype=DTYPE)

    def fit(self, X, y=None):
        ds = check_dataset(X)
        self._check_params()
        dims = {"n": ds.n, "input_dim": ds.input_dim, "output_dim": ds.output_dim}
        torch.manual_seed(self.seed)
        module = self._build_module(dims)
        batch = make_batch(ds)
        gen = torch.Generator().manual_seed(int(self.seed))
        z_eval = self._draw(module, ds.n, torch.Generator().manual_seed(int(self.seed) + EVAL_SEED_OFFSET))
        train_idx = torch.as_tensor(ds.splits["train"])
        val_idx = torch.as_tensor(ds.splits["val"]) if len(ds.splits["val"]) else train_idx
        if len(train_idx) == 0:
            raise ParameterError("training split is empty")
        sheaf = list(module.sheaf_parameters())
        sheaf_ids = {id(p) for p in sheaf}
        main = [p for p in module.parameters() if id(p) not in sheaf_ids]
        opt = make_optimizer({"main": main, "sheaf": sheaf}, self.lr, self.weight_decay, self.sheaf_decay)
        sched = torch.optim.lr_scheduler.ReduceLROnPlateau(opt, mode="min", factor=self.lr_factor,
                                                           patience=self.lr_patience)
        with torch.no_grad():
            best = self._loss(module, batch, z_eval, val_idx, grad=False)
        self.initial_val_loss_ = best
        best_state = copy.deepcopy(module.state_dict())
        history, wait = [], 0
        self.aborted_ = False
        for epoch in range(1, self.epochs + 1):
            opt.zero_grad()
            try:
                loss = self._loss(module, batch, self._draw(module, ds.n, gen), train_idx, grad=True)
                loss.backward()
                if not all(torch.isfinite(p.grad).all() for p in module.parameters() if p.grad is not None):
                    raise NumericError("non-finite gradient")
                opt.step()
                module.post_step()
                with torch.no_grad():
                    val = self._loss(module, batch, z_eval, val_idx, grad=False)
                if not math.isfinite(val):
                    raise NumericError("non-finite validation loss")
            except (NumericError, torch.linalg.LinAlgError) as exc:
                log.warning("training stopped at epoch %d: %s", epoch, exc)
                self.aborted_ = True
                break
            history.append({"epoch": epoch, "train_loss": loss.item(), "val_loss": val,
                            "lr": opt.param_groups[0]["lr"]})
            sched.step(val)
            if val < best:
                best, wait = val, 0
                best_state = copy.deepcopy(module.state_dict())
            else:
                wait += 1
                if wait >= self.patience:
                    break
        module.load_state_dict(best_state)
        self.module_ = module
        self.dims_ = dims
        self.history_ = history
        self.best_val_loss_ = best
        self.n_epochs_ = len(history)
        return self

    def _fitted(self):
        if not hasattr(self, "module_"):
            raise ParameterError(f"{type(self).__name__} is not fitted")
        return self.module_

    def _check_compatible(self, ds: Dataset):
        if getattr(self.module_, "n_nodes", None) not in (None, ds.n):
            raise ParameterError("this model is tied to the node count of its training graph")
        if ds.input_dim != self.dims_["input_dim"] or ds.output_dim != self.dims_["output_dim"]:
            raise ParameterError("dataset dimensions differ from the training dataset")

    def predict(self, X, split: str = "test", seed: int | None = None) -> np.ndarray:
        """Output samples ``(k, n_samples, out)`` for the nodes of ``split``."""
        ds = check_dataset(X)
        module = self._fitted()
        self._check_compatible(ds)
        idx = check_split(ds, split)
        seed = int(self.seed) + EVAL_SEED_OFFSET if seed is None else int(seed)
        z = self._draw(module, ds.n, torch.Generator().manual_seed(seed))
        with torch.no_grad():
            out = module(make_batch(ds), z)
        return out[torch.as_tensor(idx)].numpy()

    def evaluate(self, X, split: str = "test") -> EvalResult:
        ds = check_dataset(X)
        idx = check_split(ds, split)
        pred = torch.as_tensor(self.predict(ds, split))
        batch = make_batch(ds)
        tidx = torch.as_tensor(idx)
        vals = w2_values(pred, batch["targets"][tidx], batch["weights"][tidx], self.sinkhorn_eps, self.sinkhorn_iters)
        return EvalResult(float(vals.mean()), float(vals.std()), vals, idx)

    def score(self, X, y=None, split: str = "val") -> float:
        """Negative mean W2 on ``split`` (greater is better)."""
        return -self.evaluate(X, split).mean

    def write_history(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS)
            w.writeheader()
            for row in getattr(self, "history_", []):
                w.writerow(row)

    def save(self, path) -> None:
        """JSON checkpoint: model name, hyperparameters, dimensions and flat parameter arrays."""
        module = self._fitted()
        state = {k: {"shape": list(v.shape), "values": v.reshape(-1).tolist()}
                 for k, v in module.state_dict().items()}
        payload = {"model": self.model_name, "params": self.get_params(), "dims": self.dims_,
                   "state": state, "history": self.history_}
        Path(path).write_text(json.dumps(payload))

    @classmethod
    def load(cls, path) -> "GraphRegressor":
        from . import make_model
        payload = json.loads(Path(path).read_text())
        for key in ("model", "params", "dims", "state"):
            if key not in payload:
                raise SchemaError(f"checkpoint is missing {key!r}")
        est = make_model(payload["model"], **payload["params"])
        module = est._build_module(payload["dims"])
        state = {k: torch.tensor(v["values"], dtype=DTYPE).reshape(v["shape"]) for k, v in payload["state"].items()}
        module.load_state_dict(state)
        est.module_ = module
        est.dims_ = payload["dims"]
        est.history_ = payload.get("history", [])
        est.n_epochs_ = len(est.history_)
        return est


__all__ = ["EvalResult", "GraphRegressor", "make_batch", "w2_values", "SPLIT_NAMES"]
