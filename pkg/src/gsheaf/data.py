"""Datasets for distribution-on-distribution regression on graphs.

A :class:`Dataset` pairs one input Gaussian per node with a set of observed
target samples per node.  Synthetic data follows the recipe "node Gaussian
convolved with KL-weighted neighbors"; real data comes from station CSVs.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.stats import invwishart

from .errors import DegeneracyError, ParameterError, SchemaError
from .gaussian import Gaussian, GaussianField, convolve, kl_divergence, mle_fit, pushforward, sample
from .graph import Graph, barabasi_albert, geo_graph, watts_strogatz

log = logging.getLogger(__name__)

KL_FLOOR = 1e-8
RIDGE = 1e-6
SPLIT_NAMES = ("train", "val", "test")
DEFAULT_RATIOS = (0.6, 0.2, 0.2)


@dataclass
class Dataset:
    graph: Graph
    inputs: GaussianField
    targets: list
    splits: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.graph.n
        if self.inputs.n != n or len(self.targets) != n:
            raise ParameterError(f"dataset has {n} nodes but {self.inputs.n} inputs / {len(self.targets)} targets")
        self.targets = [np.atleast_2d(np.asarray(t, dtype=float)) for t in self.targets]
        dims = {t.shape[1] for t in self.targets}
        if len(dims) != 1 or any(t.shape[0] < 1 for t in self.targets):
            raise ParameterError("every node needs a nonempty target set of a common dimension")
        self.splits = {k: np.asarray(self.splits.get(k, []), dtype=int) for k in SPLIT_NAMES}
        allidx = np.concatenate(list(self.splits.values()))
        if len(allidx) != n or len(np.unique(allidx)) != n:
            raise ParameterError("splits must partition the nodes")

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def input_dim(self) -> int:
        return self.inputs.dim

    @property
    def output_dim(self) -> int:
        return self.targets[0].shape[1]

    def mask(self, name: str) -> np.ndarray:
        m = np.zeros(self.n, dtype=bool)
        m[self.splits[name]] = True
        return m

    def padded_targets(self):
        """``(n, S_max, out)`` target array and ``(n, S_max)`` weights (0 for padding)."""
        smax = max(t.shape[0] for t in self.targets)
        Y = np.zeros((self.n, smax, self.output_dim))
        w = np.zeros((self.n, smax))
        for v, t in enumerate(self.targets):
            Y[v, :len(t)] = t
            w[v, :len(t)] = 1.0
        return Y, w

    def to_dict(self) -> dict:
        return {
            "graph": self.graph.to_dict(),
            "inputs": [g.to_dict() for g in self.inputs],
            "targets": [t.tolist() for t in self.targets],
            "splits": {k: v.tolist() for k, v in self.splits.items()},
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Dataset":
        for key in ("graph", "inputs", "targets", "splits"):
            if key not in data:
                raise SchemaError(f"dataset JSON is missing {key!r}")
        graph = Graph.from_dict(data["graph"])
        inputs = GaussianField.from_gaussians([Gaussian.from_dict(g) for g in data["inputs"]])
        return cls(graph, inputs, data["targets"], data["splits"], dict(data.get("meta", {})))

    def save(self, path) -> None:
        # json writes floats with repr, which round-trips float64 exactly
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "Dataset":
        return cls.from_dict(json.loads(Path(path).read_text()))


def split(n: int, ratios=DEFAULT_RATIOS, seed: int = 0) -> dict:
    """Random train/val/test partition of ``range(n)``; sizes are rounded, test takes the rest."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ParameterError(f"ratios must be three nonnegative numbers summing to 1, got {ratios}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(ratios[0] * n))
    n_val = min(int(round(ratios[1] * n)), n - n_train)
    return {
        "train": np.sort(perm[:n_train]),
        "val": np.sort(perm[n_train:n_train + n_val]),
        "test": np.sort(perm[n_train + n_val:]),
    }


def neighbor_weights(graph: Graph, field: GaussianField, v: int) -> dict:
    """``alpha_u`` for the neighbors of ``v``: inverse KL, normalized by its maximum."""
    nbrs = graph.neighbors(v)
    if not nbrs:
        raise DegeneracyError(f"node {v} has no neighbors")
    inv = {u: 1.0 / max(kl_divergence(field[v], field[u]), KL_FLOOR) for u in nbrs}
    top = max(inv.values())
    return {u: w / top for u, w in inv.items()}


def make_targets(graph: Graph, field: GaussianField) -> list:
    """Per-node target Gaussians ``nu_v * conv_u alpha_u # nu_u``."""
    if field.n != graph.n:
        raise ParameterError("field and graph sizes differ")
    out = []
    eye = np.eye(field.dim)
    for v in range(graph.n):
        alpha = neighbor_weights(graph, field, v)
        parts = [field[v]] + [pushforward(a * eye, field[u]) for u, a in alpha.items()]
        out.append(convolve(parts))
    return out


def make_graph(gen: str, n: int, seed: int, m: int = 25, k: int = 10, p: float = 0.1) -> Graph:
    gen = gen.upper()
    if gen == "BA":
        return barabasi_albert(n, m, seed)
    if gen == "WS":
        return watts_strogatz(n, k, p, seed)
    raise ParameterError(f"unknown generator {gen!r} (expected BA or WS)")


def synthesize(gen: str = "BA", n: int = 200, m: int = 25, k: int = 10, p: float = 0.1, s: int = 2,
               n_target: int = 30, df: float | None = None, seed: int = 0,
               ratios=DEFAULT_RATIOS) -> Dataset:
    """Random graph, random node Gaussians and sampled convolution targets."""
    if s < 1 or n_target < 1:
        raise ParameterError("input dimension and target sample count must be >= 1")
    df = float(s + 3 if df is None else df)
    if df <= s + 1:
        raise ParameterError(f"inverse-Wishart df must exceed s + 1 = {s + 1}, got {df}")
    graph = make_graph(gen, n, seed, m=m, k=k, p=p)
    rng = np.random.default_rng(seed)
    U1 = rng.uniform(-1.0, 1.0, s)
    U2 = rng.uniform(-1.0, 1.0, (s, s))
    scale = U2 @ U2.T + RIDGE * np.eye(s)
    means = rng.multivariate_normal(U1, scale, size=n)
    covs = invwishart.rvs(df=df, scale=scale, size=n, random_state=rng)
    covs = np.asarray(covs).reshape(n, s, s)
    field = GaussianField(means, covs)
    targets = [sample(g, n_target, rng) for g in make_targets(graph, field)]
    meta = {"generator": gen.upper(), "n": n, "s": s, "n_target": n_target, "df": df, "seed": seed}
    meta.update({"m": m} if gen.upper() == "BA" else {"k": k, "p": p})
    return Dataset(graph, field, targets, split(n, ratios, seed), meta)


def _require(df: pd.DataFrame, cols, what: str) -> None:
    for c in cols:
        if c not in df.columns:
            raise SchemaError(f"{what} is missing column {c!r}")


def load_weather(stations_csv, measurements_csv, radius_km: float = 200.0, input_columns=("tmin", "tmax"),
                 target_columns=None, input_period=None, target_period=None, seed: int = 0,
                 ratios=DEFAULT_RATIOS) -> Dataset:
    """Station graph plus per-station input Gaussians and target sample sets.

    ``input_period`` / ``target_period`` are ``(start, end)`` ISO date pairs
    (inclusive; ``None`` for unbounded).  Stations with fewer than two input
    rows or no target rows are dropped with a warning.
    """
    target_columns = tuple(target_columns or input_columns)
    st = pd.read_csv(stations_csv)
    _require(st, ("station_id", "name", "latitude", "longitude"), "stations file")
    ms = pd.read_csv(measurements_csv)
    _require(ms, ("station_id", "date") + tuple(input_columns) + target_columns, "measurements file")
    ms["date"] = pd.to_datetime(ms["date"])

    def window(frame, period):
        if period is None:
            return frame
        lo, hi = period
        keep = np.ones(len(frame), dtype=bool)
        if lo is not None:
            keep &= frame["date"] >= pd.Timestamp(lo)
        if hi is not None:
            keep &= frame["date"] <= pd.Timestamp(hi)
        return frame[keep]

    inp = window(ms, input_period)
    tgt = window(ms, target_period)
    coords, gaussians, targets, ids = [], [], [], []
    for _, row in st.iterrows():
        sid = row["station_id"]
        x = inp.loc[inp["station_id"] == sid, list(input_columns)].dropna().to_numpy(float)
        y = tgt.loc[tgt["station_id"] == sid, list(target_columns)].dropna().to_numpy(float)
        if len(x) < 2 or len(y) < 1:
            log.warning("dropping station %s: %d input rows, %d target rows", sid, len(x), len(y))
            continue
        coords.append((float(row["latitude"]), float(row["longitude"])))
        gaussians.append(mle_fit(x))
        targets.append(y)
        ids.append(str(sid))
    if len(coords) < 2:
        raise SchemaError("fewer than two stations with usable rows")
    graph = geo_graph(coords, radius_km)
    meta = {"generator": "weather", "radius_km": radius_km, "stations": ids,
            "input_columns": list(input_columns), "target_columns": list(target_columns), "seed": seed}
    return Dataset(graph, GaussianField.from_gaussians(gaussians), targets, split(len(ids), ratios, seed), meta)
