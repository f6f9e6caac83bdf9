"""Cellular sheaf operators on Gaussian-valued stalks.

The mean side is an ordinary ``Vect`` sheaf with Laplacian ``L_M``; the
covariance side acts on the PSD cone through congruences ``S -> F S F^T``
induced by the same restriction maps.  ``L_M`` is stored block-sparse: one
``d x d`` diagonal block per node and one off-diagonal block per edge.

Incidence convention: ``maps.maps[e, 0]`` is the restriction map of the
lower-indexed endpoint of ``graph.edges[e]`` and ``maps.maps[e, 1]`` the map
of the higher-indexed one.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import ortho_group

from .errors import DegeneracyError, ParameterError, PathError, ShapeError
from .gaussian import Gaussian, GaussianField, congruence, convolve, project_psd, w2_squared
from .graph import Graph, Orientation

MAP_CLASSES = ("diagonal", "orthogonal", "general")
ORTHO_TOL = 1e-6
PINV_CUTOFF = 1e-10
SECTION_TOL = 1e-8


def _sym(S):
    return 0.5 * (S + np.swapaxes(S, -1, -2))


@dataclass(frozen=True)
class RestrictionMapSet:
    """Restriction maps ``F_{v<|e}`` for both incidences of every edge."""

    graph: Graph
    maps: np.ndarray
    kind: str = "general"

    def __post_init__(self):
        maps = np.asarray(self.maps, dtype=float)
        E = self.graph.n_edges
        if maps.ndim != 4 or maps.shape[:2] != (E, 2) or maps.shape[2] != maps.shape[3]:
            raise ShapeError(f"expected maps of shape ({E}, 2, d, d), got {maps.shape}")
        if self.kind not in MAP_CLASSES:
            raise ParameterError(f"unknown map class {self.kind!r}")
        d = maps.shape[-1]
        if self.kind == "diagonal":
            off = maps * (1.0 - np.eye(d))
            if np.any(off != 0.0):
                raise ParameterError("diagonal-class maps have nonzero off-diagonal entries")
        elif self.kind == "orthogonal" and E:
            gram = np.swapaxes(maps, -1, -2) @ maps
            err = np.linalg.norm(gram - np.eye(d), axis=(-2, -1)).max()
            if err >= ORTHO_TOL:
                raise ParameterError(f"orthogonal-class maps deviate from O(d) by {err:.2e}")
        object.__setattr__(self, "maps", maps)

    @property
    def d(self) -> int:
        return self.maps.shape[-1]

    def get(self, v: int, u: int) -> np.ndarray:
        """``F_{v<|e}`` for the edge ``e = {v, u}``."""
        e = self.graph.edge_id(v, u)
        return self.maps[e, 0 if v < u else 1]

    @classmethod
    def identity(cls, graph: Graph, d: int) -> "RestrictionMapSet":
        maps = np.broadcast_to(np.eye(d), (graph.n_edges, 2, d, d)).copy()
        return cls(graph, maps, "orthogonal")

    @classmethod
    def random(cls, graph: Graph, d: int, kind: str = "general", rng=None) -> "RestrictionMapSet":
        """Random invertible maps of the requested class."""
        rng = np.random.default_rng(rng)
        E = graph.n_edges
        if kind == "diagonal":
            vals = rng.uniform(0.5, 1.5, (E, 2, d)) * rng.choice([-1.0, 1.0], (E, 2, d))
            maps = vals[..., None] * np.eye(d)
        elif kind == "orthogonal":
            if d == 1:
                maps = rng.choice([-1.0, 1.0], (E, 2, 1, 1))
            else:
                maps = ortho_group.rvs(d, size=2 * E, random_state=rng).reshape(E, 2, d, d)
        elif kind == "general":
            maps = np.eye(d) + 0.5 * rng.standard_normal((E, 2, d, d))
        else:
            raise ParameterError(f"unknown map class {kind!r}")
        return cls(graph, maps, kind)


def _inv_sqrt_psd(S: np.ndarray) -> np.ndarray:
    """``S^{-1/2}`` by eigendecomposition; eigenvalues below the cutoff are dropped."""
    w, U = np.linalg.eigh(_sym(S))
    safe = np.where(w > PINV_CUTOFF, w, 1.0)
    r = np.where(w > PINV_CUTOFF, 1.0 / np.sqrt(safe), 0.0)
    return _sym((U * r[..., None, :]) @ np.swapaxes(U, -1, -2))


@dataclass(frozen=True, eq=False)
class SheafOperators:
    """Assembled block-sparse mean Laplacian with its normalized form.

    ``off[e]`` is the block at (row ``a``, column ``b``) for ``edges[e] = (a, b)``;
    the (``b``, ``a``) block is its transpose.  ``gram[e, s] = F^T F`` for each
    incidence; the decomposition pieces ``L_i`` / ``Delta_i`` are indexed by
    neighbor slot via :meth:`slot_blocks`.
    """

    graph: Graph
    maps: RestrictionMapSet
    diag: np.ndarray
    off: np.ndarray
    gram: np.ndarray
    d_inv_sqrt: np.ndarray
    norm_diag: np.ndarray
    norm_off: np.ndarray
    norm_gram: np.ndarray

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def d(self) -> int:
        return self.maps.d

    def slot_blocks(self, normalized: bool = False) -> np.ndarray:
        """Block diagonals of ``L_i`` (or ``Delta_i``), shape ``(k, n, d, d)``.

        Slot ``i`` at node ``v`` holds ``F^T F`` for the edge to the ``i``-th
        neighbor of ``v`` (sorted order), zero when ``v`` has fewer neighbors.
        """
        g, d = self.graph, self.d
        k = g.max_degree
        src = self.norm_gram if normalized else self.gram
        out = np.zeros((k, g.n, d, d))
        for v in range(g.n):
            for i, u in enumerate(g.adjacency[v]):
                e = g.edge_id(v, u)
                out[i, v] = src[e, 0 if v < u else 1]
        return out

    def dense(self, normalized: bool = False) -> np.ndarray:
        """Materialized ``(n d, n d)`` Laplacian; for tests and small graphs."""
        n, d = self.n, self.d
        diag, off = (self.norm_diag, self.norm_off) if normalized else (self.diag, self.off)
        L = np.zeros((n * d, n * d))
        for v in range(n):
            L[v * d:(v + 1) * d, v * d:(v + 1) * d] = diag[v]
        for e, (a, b) in enumerate(self.graph.edges):
            L[a * d:(a + 1) * d, b * d:(b + 1) * d] = off[e]
            L[b * d:(b + 1) * d, a * d:(a + 1) * d] = off[e].T
        return L

    def coboundary_parts(self, orientation: Orientation | None = None):
        """Dense ``(delta_plus, delta_minus)`` of shape ``(|E| d, n d)``.

        ``delta = delta_plus - delta_minus``; the source of each arc goes to
        the positive part.
        """
        orientation = orientation or self.graph.default_orientation()
        n, d, E = self.n, self.d, self.graph.n_edges
        plus = np.zeros((E * d, n * d))
        minus = np.zeros((E * d, n * d))
        for e, (s, t) in enumerate(orientation.arcs):
            rows = slice(e * d, (e + 1) * d)
            plus[rows, s * d:(s + 1) * d] = self.maps.get(s, t)
            minus[rows, t * d:(t + 1) * d] = self.maps.get(t, s)
        return plus, minus


def assemble(graph: Graph, maps: RestrictionMapSet) -> SheafOperators:
    """Build ``L_M``, the degree blocks and the normalized ``Delta_M``."""
    if maps.graph is not graph and maps.graph != graph:
        raise ShapeError("restriction maps were built for a different graph")
    deg = graph.degrees
    if graph.n and np.any(deg == 0):
        raise DegeneracyError(f"isolated node(s) {np.flatnonzero(deg == 0).tolist()}")
    d = maps.d
    F = maps.maps
    edges = graph.edge_array()
    gram = np.swapaxes(F, -1, -2) @ F
    diag = np.zeros((graph.n, d, d))
    for e, (a, b) in enumerate(graph.edges):
        diag[a] += gram[e, 0]
        diag[b] += gram[e, 1]
    off = -np.swapaxes(F[:, 0], -1, -2) @ F[:, 1]
    dis = _inv_sqrt_psd(diag)
    norm_diag = dis @ diag @ dis
    if len(edges):
        norm_off = dis[edges[:, 0]] @ off @ dis[edges[:, 1]]
        norm_gram = np.stack([dis[edges[:, 0]] @ gram[:, 0] @ dis[edges[:, 0]],
                              dis[edges[:, 1]] @ gram[:, 1] @ dis[edges[:, 1]]], axis=1)
    else:
        norm_off = np.zeros((0, d, d))
        norm_gram = np.zeros((0, 2, d, d))
    return SheafOperators(graph, maps, diag, off, gram, dis, norm_diag, norm_off, norm_gram)


def apply_mean_laplacian(ops: SheafOperators, X, normalized: bool = False) -> np.ndarray:
    """``L_M X`` (or ``Delta_M X``) for ``X`` of shape ``(n d,)`` or ``(n d, h)``."""
    X = np.asarray(X, dtype=float)
    n, d = ops.n, ops.d
    if X.shape[0] != n * d or X.ndim not in (1, 2):
        raise ShapeError(f"expected {n * d} rows, got shape {X.shape}")
    vec = X.ndim == 1
    Xb = X.reshape(n, d, -1)
    diag, off = (ops.norm_diag, ops.norm_off) if normalized else (ops.diag, ops.off)
    Y = diag @ Xb
    if ops.graph.n_edges:
        a, b = ops.graph.edge_array().T
        np.add.at(Y, a, off @ Xb[b])
        np.add.at(Y, b, np.swapaxes(off, -1, -2) @ Xb[a])
    Y = Y.reshape(n * d, -1)
    return Y[:, 0] if vec else Y


def _as_covs(ops: SheafOperators, covs) -> np.ndarray:
    if isinstance(covs, GaussianField):
        covs = covs.covs
    covs = np.asarray(covs, dtype=float)
    if covs.shape != (ops.n, ops.d, ops.d):
        raise ShapeError(f"expected covariance field ({ops.n}, {ops.d}, {ops.d}), got {covs.shape}")
    return covs


@dataclass(frozen=True)
class CovCoboundary:
    """Edge blocks of ``delta_C`` and its positive / negative parts, each ``(|E|, d, d)``."""

    edge: np.ndarray
    plus: np.ndarray
    minus: np.ndarray
    orientation: Orientation


def coboundary_cov(ops: SheafOperators, covs, orientation: Orientation | None = None) -> CovCoboundary:
    """Covariance coboundary: ``F_s S_s F_s^T + F_t S_t F_t^T`` per arc ``s -> t``."""
    covs = _as_covs(ops, covs)
    orientation = orientation or ops.graph.default_orientation()
    E, d = ops.graph.n_edges, ops.d
    plus = np.zeros((E, d, d))
    minus = np.zeros((E, d, d))
    for e, (s, t) in enumerate(orientation.arcs):
        plus[e] = congruence(ops.maps.get(s, t), covs[s])
        minus[e] = congruence(ops.maps.get(t, s), covs[t])
    return CovCoboundary(plus + minus, plus, minus, orientation)


def _cov_lap_edge(ops: SheafOperators, covs: np.ndarray) -> np.ndarray:
    # pull each edge block back with F^T at both endpoints
    F = ops.maps.maps
    cob = coboundary_cov(ops, covs)
    out = np.zeros_like(covs)
    for e, (a, b) in enumerate(ops.graph.edges):
        out[a] += congruence(F[e, 0].T, cob.edge[e])
        out[b] += congruence(F[e, 1].T, cob.edge[e])
    return out


def _cov_lap_blocks(ops: SheafOperators, covs: np.ndarray, normalized: bool) -> np.ndarray:
    gram = ops.norm_gram if normalized else ops.gram
    off = ops.norm_off if normalized else ops.off
    out = np.zeros_like(covs)
    for e, (a, b) in enumerate(ops.graph.edges):
        out[a] += congruence(gram[e, 0], covs[a]) + congruence(off[e], covs[b])
        out[b] += congruence(gram[e, 1], covs[b]) + congruence(off[e].T, covs[a])
    return out


def _cov_lap_dense(ops: SheafOperators, covs: np.ndarray, normalized: bool) -> np.ndarray:
    n, d = ops.n, ops.d
    S = np.zeros((n * d, n * d))
    for v in range(n):
        S[v * d:(v + 1) * d, v * d:(v + 1) * d] = covs[v]
    slots = ops.slot_blocks(normalized)
    total = np.zeros((n * d, n * d))
    for blocks in slots:
        Li = np.zeros((n * d, n * d))
        for v in range(n):
            Li[v * d:(v + 1) * d, v * d:(v + 1) * d] = blocks[v]
        total += Li @ S @ Li.T
    Lfull = ops.dense(normalized)
    Lprime = Lfull.copy()
    for v in range(n):
        Lprime[v * d:(v + 1) * d, v * d:(v + 1) * d] = 0.0
    off_part = Lprime @ S @ Lprime.T
    # B_j extraction: keep only the diagonal blocks
    out = np.zeros((n, d, d))
    for v in range(n):
        blk = slice(v * d, (v + 1) * d)
        out[v] = total[blk, blk] + off_part[blk, blk]
    return out


def apply_cov_laplacian(ops: SheafOperators, covs, normalized: bool = False, route: str | None = None) -> np.ndarray:
    """Covariance sheaf Laplacian ``L_C`` (or ``Delta_C``) on a field of PSD blocks.

    Routes, all equal up to round-off:

    * ``"edge"`` pulls back the edge blocks of the covariance coboundary at
      every endpoint (default when unnormalized).  The normalized variant
      sandwiches with ``D^{-1/2}`` before and after.
    * ``"decomposition"`` sums ``phi_{L_i}`` over neighbor slots plus the
      diagonal blocks of ``phi_{L'}``, block-sparse (default when normalized).
    * ``"dense"`` materializes ``L_i`` and ``L'`` and applies the congruences
      literally; quadratic memory, small graphs only.
    """
    covs = _as_covs(ops, covs)
    if route is None:
        route = "decomposition" if normalized else "edge"
    if route == "edge":
        if normalized:
            inner = congruence(ops.d_inv_sqrt, covs)
            out = congruence(ops.d_inv_sqrt, _cov_lap_edge(ops, inner))
        else:
            out = _cov_lap_edge(ops, covs)
    elif route == "decomposition":
        out = _cov_lap_blocks(ops, covs, normalized)
    elif route == "dense":
        out = _cov_lap_dense(ops, covs, normalized)
    else:
        raise ParameterError(f"unknown route {route!r}")
    return _sym(out)


def apply_gaussian_laplacian(ops: SheafOperators, field: GaussianField, normalized: bool = False) -> GaussianField:
    """``(L_M mu, L_C(Sigma))`` componentwise."""
    if field.n != ops.n or field.dim != ops.d:
        raise ShapeError("field does not match the sheaf dimensions")
    mu = apply_mean_laplacian(ops, field.mean_vector(), normalized)
    covs = apply_cov_laplacian(ops, field.covs, normalized)
    return GaussianField(mu.reshape(ops.n, ops.d), covs)


def _push_any(A: np.ndarray, g: Gaussian) -> Gaussian:
    # rectangular pushforward between Gaussian spaces of different dimension
    return Gaussian(A @ g.mean, congruence(A, g.cov))


def _joint(field: GaussianField) -> Gaussian:
    n, d = field.n, field.dim
    cov = np.zeros((n * d, n * d))
    for v in range(n):
        cov[v * d:(v + 1) * d, v * d:(v + 1) * d] = field.covs[v]
    return Gaussian(field.mean_vector(), cov)


def _selectors(count: int, d: int) -> list[np.ndarray]:
    out = []
    for i in range(count):
        A = np.zeros((count * d, count * d))
        A[i * d:(i + 1) * d, i * d:(i + 1) * d] = np.eye(d)
        out.append(A)
    return out


def _split(joint: Gaussian, n: int, d: int) -> GaussianField:
    covs = np.stack([joint.cov[v * d:(v + 1) * d, v * d:(v + 1) * d] for v in range(n)])
    return GaussianField(joint.mean.reshape(n, d), covs)


def distribution_coboundary(ops: SheafOperators, field: GaussianField,
                            orientation: Orientation | None = None) -> Gaussian:
    """Edge-space Gaussian obtained by convolving selected pushforwards of the field."""
    plus, minus = ops.coboundary_parts(orientation)
    nu = _joint(field)
    inner = convolve([_push_any(plus, nu), _push_any(-minus, nu)])
    return convolve([_push_any(A, inner) for A in _selectors(ops.graph.n_edges, ops.d)])


def distribution_laplacian(ops: SheafOperators, field: GaussianField, normalized: bool = False,
                           orientation: Orientation | None = None) -> GaussianField:
    """Gaussian sheaf Laplacian computed on distributions, not parameters.

    Works on the product measure of the field with dense pushforwards and
    convolutions; an independent check of :func:`apply_gaussian_laplacian`.
    """
    if field.n != ops.n or field.dim != ops.d:
        raise ShapeError("field does not match the sheaf dimensions")
    n, d = ops.n, ops.d
    B = _selectors(n, d)
    nu = _joint(field)
    if normalized:
        slots = ops.slot_blocks(normalized=True)
        parts = []
        for blocks in slots:
            Di = np.zeros((n * d, n * d))
            for v in range(n):
                Di[v * d:(v + 1) * d, v * d:(v + 1) * d] = blocks[v]
            parts.append(_push_any(Di, nu))
        Dprime = ops.dense(normalized=True)
        for v in range(n):
            Dprime[v * d:(v + 1) * d, v * d:(v + 1) * d] = 0.0
        pushed = _push_any(Dprime, nu)
        parts.extend(_push_any(Bj, pushed) for Bj in B)
        return _split(convolve(parts), n, d)
    if ops.graph.n_edges == 0:
        return GaussianField(np.zeros((n, d)), np.zeros((n, d, d)))
    plus, minus = ops.coboundary_parts(orientation)
    cob = distribution_coboundary(ops, field, orientation)
    inner = convolve([_push_any(plus.T, cob), _push_any(-minus.T, cob)])
    return _split(convolve([_push_any(Bj, inner) for Bj in B]), n, d)


def equalizer_parts(ops: SheafOperators, covs, orientation: Orientation | None = None):
    """Positive and negative parts of ``L_C`` per node, each ``(n, d, d)``.

    ``L_C^+`` pulls back the same-side coboundary part at each endpoint and
    ``L_C^-`` the opposite side; they agree exactly on global sections.
    """
    covs = _as_covs(ops, covs)
    cob = coboundary_cov(ops, covs, orientation)
    pos = np.zeros_like(covs)
    neg = np.zeros_like(covs)
    for e, (s, t) in enumerate(cob.orientation.arcs):
        Fs, Ft = ops.maps.get(s, t), ops.maps.get(t, s)
        pos[s] += congruence(Fs.T, cob.plus[e])
        pos[t] += congruence(Ft.T, cob.minus[e])
        neg[s] += congruence(Fs.T, cob.minus[e])
        neg[t] += congruence(Ft.T, cob.plus[e])
    return pos, neg


@dataclass(frozen=True)
class SectionReport:
    is_section: bool
    mean_residual: float
    cov_residual: float
    equalizer_residual: float

    def to_dict(self) -> dict:
        return {
            "is_section": self.is_section,
            "mean_residual": self.mean_residual,
            "cov_residual": self.cov_residual,
            "equalizer_residual": self.equalizer_residual,
        }


def is_global_section(ops: SheafOperators, field: GaussianField, tol: float = SECTION_TOL) -> SectionReport:
    """Check ``F_v mu_v = F_u mu_u`` and ``F_v S_v F_v^T = F_u S_u F_u^T`` on every edge."""
    if field.n != ops.n or field.dim != ops.d:
        raise ShapeError("field does not match the sheaf dimensions")
    F = ops.maps.maps
    if ops.graph.n_edges:
        a, b = ops.graph.edge_array().T
        mres = np.linalg.norm((F[:, 0] @ field.means[a][..., None] - F[:, 1] @ field.means[b][..., None])[..., 0], axis=-1)
        cres = np.linalg.norm(congruence(F[:, 0], field.covs[a]) - congruence(F[:, 1], field.covs[b]), axis=(-2, -1))
        mmax, cmax = float(mres.max()), float(cres.max())
    else:
        mmax = cmax = 0.0
    pos, neg = equalizer_parts(ops, field.covs)
    eq = float(np.sqrt(np.sum((pos - neg) ** 2)))
    return SectionReport(bool(mmax <= tol and cmax <= tol), mmax, cmax, eq)


def _step_matrix(maps: RestrictionMapSet, v: int, u: int) -> np.ndarray:
    if not maps.graph.has_edge(v, u):
        raise PathError(f"nodes {v} and {u} are not adjacent")
    return maps.get(u, v).T @ maps.get(v, u)


def transport_matrix(maps: RestrictionMapSet, path: Sequence[int]) -> np.ndarray:
    """Composite ``F_{u<|e}^T F_{v<|e}`` over consecutive steps of ``path``."""
    M = np.eye(maps.d)
    for v, u in zip(path[:-1], path[1:]):
        M = _step_matrix(maps, int(v), int(u)) @ M
    return M


def transport(maps: RestrictionMapSet, path: Sequence[int], g: Gaussian) -> Gaussian:
    """Push ``g`` along ``path``; paths of length 0 or 1 node return ``g``."""
    if g.dim != maps.d:
        raise ShapeError("Gaussian dimension does not match the stalks")
    if len(path) < 2:
        return g
    M = transport_matrix(maps, path)
    return Gaussian(M @ g.mean, congruence(M, g.cov))


def holonomy(maps: RestrictionMapSet, cycle: Sequence[int]) -> np.ndarray:
    """Transport matrix around a closed walk (first node == last node)."""
    if len(cycle) < 2 or cycle[0] != cycle[-1]:
        raise PathError("holonomy needs a closed walk with first node == last node")
    return transport_matrix(maps, cycle)


def transport_section(maps: RestrictionMapSet, root: int, g: Gaussian) -> GaussianField:
    """Seed ``g`` at ``root`` and transport it outward along a BFS tree.

    On trees with orthogonal maps (or any path-independent transport) the
    result is a global section.
    """
    graph = maps.graph
    means = np.zeros((graph.n, maps.d))
    covs = np.zeros((graph.n, maps.d, maps.d))
    seen = {root: g}
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for u in graph.adjacency[v]:
            if u not in seen:
                seen[u] = transport(maps, [v, u], seen[v])
                queue.append(u)
    if len(seen) != graph.n:
        raise DegeneracyError("graph is not connected")
    for v, gv in seen.items():
        means[v], covs[v] = gv.mean, gv.cov
    return GaussianField(means, covs)


def dirichlet_energy(ops: SheafOperators, mu) -> float:
    """``x^T Delta_M x``; for ``(n d, h)`` inputs the channel energies are summed."""
    mu = np.asarray(mu, dtype=float)
    lap = apply_mean_laplacian(ops, mu, normalized=True)
    return float(np.sum(mu * lap))


def lyapunov_energy(ops: SheafOperators, field: GaussianField) -> float:
    """Sum over edges of squared W2 between ``F D^{-1/2}``-pushforwards of the endpoints."""
    if field.n != ops.n or field.dim != ops.d:
        raise ShapeError("field does not match the sheaf dimensions")
    F = ops.maps.maps
    dis = ops.d_inv_sqrt
    total = 0.0
    for e, (a, b) in enumerate(ops.graph.edges):
        Pa = F[e, 0] @ dis[a]
        Pb = F[e, 1] @ dis[b]
        ga = Gaussian(Pa @ field.means[a], congruence(Pa, field.covs[a]))
        gb = Gaussian(Pb @ field.means[b], congruence(Pb, field.covs[b]))
        total += w2_squared(ga, gb)
    return total


@dataclass(frozen=True)
class OrbitReport:
    """Orbit / stabilizer diagnostics for the action ``g -> Q # g``."""

    is_orthogonal: bool
    is_diagonal: bool
    mean_norm_residual: float
    spectrum_residual: float
    fixes_g: bool
    expects_trivial_stabilizer: bool
    stabilizer_violated: bool
    invariants_hold: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def orbit_invariants(Q, g: Gaussian, tol: float = 1e-9) -> OrbitReport:
    """Check what a single transport matrix can and cannot change about ``g``.

    Orthogonal ``Q`` must preserve the mean norm and covariance spectrum.  A
    diagonal ``Q`` with some entry != 1 acting on a nowhere-zero mean must move
    ``g`` (trivial stabilizer).
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.shape != (g.dim, g.dim):
        raise ShapeError("transport matrix does not match the Gaussian")
    d = g.dim
    moved_mean = Q @ g.mean
    moved_cov = project_psd(congruence(Q, g.cov))
    is_orth = bool(np.linalg.norm(Q.T @ Q - np.eye(d)) < ORTHO_TOL)
    is_diag = bool(np.all(Q * (1.0 - np.eye(d)) == 0.0))
    norm_res = abs(float(np.linalg.norm(moved_mean) - np.linalg.norm(g.mean)))
    spec_res = float(np.abs(np.linalg.eigvalsh(moved_cov) - np.linalg.eigvalsh(g.cov)).max())
    fixes = bool(np.allclose(moved_mean, g.mean, atol=tol, rtol=0)
                 and np.allclose(moved_cov, g.cov, atol=tol, rtol=0))
    expects_trivial = bool(is_diag and np.any(np.abs(np.diag(Q) - 1.0) > tol)
                           and np.all(np.abs(g.mean) > tol))
    violated = expects_trivial and not fixes
    holds = True
    if is_orth:
        holds = norm_res <= tol and spec_res <= tol * max(1.0, float(np.abs(g.cov).max()))
    if expects_trivial:
        holds = holds and violated
    return OrbitReport(is_orth, is_diag, norm_res, spec_res, fixes, expects_trivial, violated, bool(holds))
