"""Integrated property checks behind ``gsheaf verify``.

Each check draws its own random instances from a fixed seed, compares the
library against an independent route or a closed form, and reports the worst
residual next to the threshold it must meet.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
import torch

from . import autodiff as ad
from .gaussian import Gaussian, GaussianField, congruence, pushforward, sample, w2_squared
from .graph import Graph
from .models.layers import TorchSheaf
from .sheaf import (
    RestrictionMapSet,
    apply_cov_laplacian,
    apply_gaussian_laplacian,
    apply_mean_laplacian,
    assemble,
    distribution_laplacian,
    is_global_section,
    lyapunov_energy,
    orbit_invariants,
    transport,
    transport_matrix,
    transport_section,
)

KINDS = ("diagonal", "orthogonal", "general")


@dataclass
class CheckResult:
    key: str
    title: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        info = ", ".join(f"{k}={v:.3g}" if isinstance(v, float) else f"{k}={v}" for k, v in self.detail.items())
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.key} {self.title} ({self.seconds:.1f}s) {info}"

    def to_dict(self) -> dict:
        return {"key": self.key, "title": self.title, "passed": self.passed, "detail": self.detail,
                "seconds": self.seconds}


def random_connected_graph(rng: np.random.Generator, n: int, p: float | None = None) -> Graph:
    """Erdos-Renyi draw made connected by adding a random spanning path."""
    p = rng.uniform(0.1, 0.6) if p is None else p
    g = nx.gnp_random_graph(n, p, seed=int(rng.integers(2**31)))
    order = rng.permutation(n)
    g.add_edges_from(zip(order[:-1], order[1:]))
    return Graph.from_edges(n, g.edges())


def random_tree(rng: np.random.Generator, n: int) -> Graph:
    edges = [(int(rng.integers(v)), v) for v in range(1, n)]
    return Graph.from_edges(n, edges)


def random_field(rng: np.random.Generator, n: int, d: int, isotropic: bool = False) -> GaussianField:
    means = rng.standard_normal((n, d))
    if isotropic:
        covs = rng.uniform(0.1, 2.0, n)[:, None, None] * np.eye(d)
    else:
        A = rng.standard_normal((n, d, d))
        covs = A @ A.transpose(0, 2, 1) + 0.1 * np.eye(d)
    return GaussianField(means, covs)


def _timed(fn):
    def run(seed: int = 0) -> CheckResult:
        t = time.perf_counter()
        res = fn(np.random.default_rng(seed))
        res.seconds = time.perf_counter() - t
        return res
    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


@_timed
def check_constant_sheaf(rng) -> CheckResult:
    """d=1 unit maps: integer graph Laplacian and the deg/neighbor-sum covariance formula."""
    lap_ok, worst = True, 0.0
    for _ in range(20):
        g = random_connected_graph(rng, int(rng.integers(2, 51)))
        ops = assemble(g, RestrictionMapSet.identity(g, 1))
        L = ops.dense()
        lap_ok &= bool(np.array_equal(L, L.round()) and np.array_equal(L.astype(np.int64), g.laplacian()))
        covs = rng.uniform(0.1, 3.0, (g.n, 1, 1))
        got = apply_cov_laplacian(ops, covs)[:, 0, 0]
        deg = g.degrees
        want = np.array([deg[v] * covs[v, 0, 0] + sum(covs[u, 0, 0] for u in g.neighbors(v)) for v in range(g.n)])
        worst = max(worst, float(np.abs(got - want).max()))
    return CheckResult("1", "constant-sheaf reduction", lap_ok and worst <= 1e-12,
                       {"laplacian_exact": lap_ok, "cov_err": worst})


def _random_instance(rng, kind):
    n = int(rng.integers(2, 9))
    d = int(rng.integers(1, 4))
    g = random_connected_graph(rng, n)
    return g, RestrictionMapSet.random(g, d, kind, rng), random_field(rng, n, d)


@_timed
def check_oracle_equivalence(rng) -> CheckResult:
    """Parameter route vs distribution route, and the two covariance-Laplacian code paths."""
    oracle, paths = 0.0, 0.0
    for i in range(100):
        g, maps, f = _random_instance(rng, KINDS[i % 3])
        ops = assemble(g, maps)
        a = apply_gaussian_laplacian(ops, f)
        b = distribution_laplacian(ops, f)
        oracle = max(oracle, float(np.abs(a.means - b.means).max()), float(np.abs(a.covs - b.covs).max()))
        for normalized in (False, True):
            e = apply_cov_laplacian(ops, f.covs, normalized, route="edge")
            dcmp = apply_cov_laplacian(ops, f.covs, normalized, route="decomposition")
            paths = max(paths, float(np.abs(e - dcmp).max()))
    return CheckResult("2", "coboundary/Laplacian oracle equivalence", oracle <= 1e-10 and paths <= 1e-10,
                       {"oracle_err": oracle, "path_err": paths})


@_timed
def check_equalizer(rng) -> CheckResult:
    """Tree-transported sections sit in the equalizer; perturbed fields leave it."""
    sec_worst, sec_ok, non_min, tested = 0.0, True, np.inf, 0
    while tested < 100:
        n = int(rng.integers(2, 12))
        d = int(rng.integers(1, 4))
        g = random_tree(rng, n)
        maps = RestrictionMapSet.random(g, d, "orthogonal", rng)
        ops = assemble(g, maps)
        root = int(rng.integers(n))
        f = transport_section(maps, root, random_field(rng, 1, d)[0])
        rep = is_global_section(ops, f, tol=1e-8)
        sec_ok &= rep.is_section
        sec_worst = max(sec_worst, rep.equalizer_residual)
        covs = f.covs.copy()
        v = int(rng.integers(n))
        B = rng.standard_normal((d, d))
        covs[v] = covs[v] + B @ B.T
        bad = GaussianField(f.means, covs)
        rep_bad = is_global_section(ops, bad, tol=1e-8)
        if rep_bad.cov_residual <= 1e-3:
            continue
        tested += 1
        non_min = min(non_min, rep_bad.equalizer_residual)
    passed = sec_ok and sec_worst <= 1e-8 and non_min > 1e-6
    return CheckResult("3", "equalizer vs global sections", passed,
                       {"sections_pass": sec_ok, "section_residual": sec_worst, "min_nonsection_residual": float(non_min)})


def _gsnn_instance(rng, n=6, s=2, d=2, h=3, layers=2, kind="general"):
    from .models.gsnn import GSNNModule
    g = random_connected_graph(rng, n)
    f = random_field(rng, n, s)
    torch.manual_seed(int(rng.integers(2**31)))
    module = GSNNModule(s, d, h, layers, 2, kind, "sheaf", map_hidden=8, readout_hidden=8)
    with torch.no_grad():
        for p in module.parameters():
            p.add_(0.5 * torch.randn_like(p))
    batch = {"n": n, "means": torch.as_tensor(f.means), "covs": torch.as_tensor(f.covs),
             "edges": torch.as_tensor(g.edge_array(), dtype=torch.long)}
    return g, f, module, batch


@_timed
def check_psd_closure(rng) -> CheckResult:
    """Covariance Laplacian outputs and every GSNN covariance block stay PSD."""
    worst = np.inf
    for i in range(1000):
        g, maps, f = _random_instance(rng, KINDS[i % 3])
        ops = assemble(g, maps)
        out = apply_cov_laplacian(ops, f.covs, normalized=bool(i % 2))
        worst = min(worst, float(np.linalg.eigvalsh(out).min()))
    gsnn_worst = np.inf
    for i in range(100):
        _, _, module, batch = _gsnn_instance(rng, n=int(rng.integers(3, 9)), kind=KINDS[i % 3],
                                             layers=int(rng.integers(0, 5)))
        trace = {}
        with torch.no_grad():
            module.propagate(batch, trace)
        for S in trace["covs"]:
            gsnn_worst = min(gsnn_worst, float(torch.linalg.eigvalsh(S).min()))
    # the threshold is absolute, as in the PSD check used everywhere else
    return CheckResult("4", "PSD cone closure", worst >= -1e-8 and gsnn_worst >= -1e-8,
                       {"laplacian_min_eig": worst, "gsnn_min_eig": gsnn_worst})


@_timed
def check_orbits(rng) -> CheckResult:
    """Orthogonal transports keep mean norm and covariance spectrum."""
    worst = 0.0
    ok = True
    for _ in range(200):
        n = int(rng.integers(2, 7))
        d = int(rng.integers(1, 4))
        g = random_tree(rng, n)
        maps = RestrictionMapSet.random(g, d, "orthogonal", rng)
        path = list(nx.shortest_path(g.to_networkx(), 0, int(rng.integers(n))))
        g0 = random_field(rng, 1, d)[0]
        out = transport(maps, path, g0)
        norm_err = abs(np.linalg.norm(out.mean) - np.linalg.norm(g0.mean))
        spec_err = float(np.abs(np.linalg.eigvalsh(out.cov) - np.linalg.eigvalsh(g0.cov)).max())
        rep = orbit_invariants(transport_matrix(maps, path), g0, tol=1e-9)
        ok &= rep.invariants_hold
        worst = max(worst, norm_err, spec_err)
    return CheckResult("5", "orbit invariants", ok and worst <= 1e-9, {"max_err": worst})


@_timed
def check_lyapunov_scaling(rng) -> CheckResult:
    """Scaling every stalk by c multiplies the Lyapunov energy by c^2."""
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 10))
        d = int(rng.integers(1, 4))
        g = random_connected_graph(rng, n)
        ops = assemble(g, RestrictionMapSet.random(g, d, "orthogonal", rng))
        f = random_field(rng, n, d, isotropic=True)
        base = lyapunov_energy(ops, f)
        for c in (0.5, 2.0, 3.0):
            W = c * np.eye(d)
            scaled = GaussianField.from_gaussians([pushforward(W, gv) for gv in f])
            rel = abs(lyapunov_energy(ops, scaled) - c * c * base) / max(c * c * base, 1e-300)
            worst = max(worst, rel)
    return CheckResult("6", "Lyapunov c^2 scaling", worst <= 1e-8, {"max_rel_err": worst})


def gsnn_loss_fn(module, batch, targets, z, epsilon: float = 1.0, iters: int = 60):
    """``params -> mean Sinkhorn loss`` for finite-difference checks of a GSNN module."""
    names = [k for k, _ in module.named_parameters()]

    def fn(*params):
        out = torch.func.functional_call(module, dict(zip(names, params)), (batch, z))
        return ad.sinkhorn_w2(out, targets, epsilon, iters).mean()
    return fn, [p.detach().clone() for p in module.parameters()]


@_timed
def check_gradients(rng) -> CheckResult:
    """Reverse-mode gradients against central differences, plus forward fidelity."""
    def T(*shape):
        return torch.as_tensor(rng.standard_normal(shape))

    S = T(3, 3)
    S = S @ S.T + 0.5 * torch.eye(3)
    G = T(3, 3)
    Wt = T(5, 4).abs()
    Yt = T(7, 2)
    ops = {
        "add": (lambda a, b: ((a + b) * G).sum(), [T(3, 3), T(3, 3)]),
        "scale": (lambda a: ((2.5 * a) * G).sum(), [T(3, 3)]),
        "matmul": (lambda a, b: ((a @ b) * G).sum(), [T(3, 3), T(3, 3)]),
        "transpose": (lambda a: (a.T * G).sum(), [T(3, 3)]),
        "congruence": (lambda a, s: (ad.congruence(a, s) * G).sum(), [T(3, 3), S]),
        "kron_identity": (lambda w, x: (ad.kron_identity_apply(w, x) ** 2).sum(), [T(2, 2), T(6, 3)]),
        "channel_mix": (lambda x, w: (ad.channel_mix(x, w) ** 2).sum(), [T(4, 3), T(3, 3)]),
        "elu": (lambda x: (ad.elu(x) * Wt).sum(), [T(5, 4)]),
        "affine": (lambda w, b, x: ((x @ w.T + b) ** 2).sum(), [T(3, 4), T(3), T(5, 4)]),
    }
    op_err = {k: ad.grad_check(fn, params, 1e-6) for k, (fn, params) in ops.items()}
    comp = {
        "eigen_sqrt": ad.grad_check(lambda s: (ad.sym_sqrt(s) * G).sum(), [S]),
        "inv_sqrt": ad.grad_check(lambda s: (ad.sym_inv_sqrt(s) * G).sum(), [S]),
        "cholesky_congruence": ad.grad_check(lambda a: (ad.cholesky_jitter(ad.congruence(a, S)) * G).sum(),
                                             [T(3, 3) + 2 * torch.eye(3)]),
        "sinkhorn": ad.grad_check(lambda x: ad.sinkhorn_w2(x, Yt, 0.5, 100), [T(5, 2)]),
    }
    g, f, module, batch = _gsnn_instance(rng, n=4, h=2, layers=2)
    targets = T(4, 6, 2)
    z = T(4, 5, 2)
    fn, params = gsnn_loss_fn(module, batch, targets, z)
    comp["gsnn_end_to_end"] = ad.grad_check(fn, params, 1e-6)
    # forward fidelity of the torch sheaf operator against the numpy one
    g2, maps, f2 = _random_instance(rng, "general")
    ops_np = assemble(g2, maps)
    tsheaf = TorchSheaf(torch.as_tensor(maps.maps), torch.as_tensor(g2.edge_array(), dtype=torch.long), g2.n)
    mu_t = tsheaf.mean(torch.as_tensor(f2.means)[..., None])[..., 0].numpy()
    cov_t = tsheaf.cov(torch.as_tensor(f2.covs)[:, None])[:, 0].numpy()
    fwd = max(float(np.abs(mu_t.reshape(-1) - apply_mean_laplacian(ops_np, f2.mean_vector(), True)).max()),
              float(np.abs(cov_t - apply_cov_laplacian(ops_np, f2.covs, True)).max()),
              float(np.abs(ad.congruence(G, S).numpy() - congruence(G.numpy(), S.numpy())).max()))
    worst_op = max(op_err.values())
    worst_comp = max(comp.values())
    passed = worst_op < 1e-4 and worst_comp < 1e-3 and fwd <= 1e-12
    return CheckResult("7", "gradient fidelity", passed,
                       {"op_err": worst_op, "composite_err": worst_comp, "forward_err": fwd,
                        "worst_composite": max(comp, key=comp.get)})


@_timed
def check_sinkhorn_bures(rng) -> CheckResult:
    """Sinkhorn on 2000 samples vs the closed-form Gaussian W2^2 for 10 pairs."""
    worst = 0.0
    done = 0
    while done < 10:
        m1, m2 = rng.standard_normal(2), rng.standard_normal(2) * 2.0
        A, B = rng.standard_normal((2, 2)), rng.standard_normal((2, 2))
        p, q = Gaussian(m1, A @ A.T * 0.5), Gaussian(m2, B @ B.T * 0.5)
        exact = w2_squared(p, q)
        if not 1.0 <= np.sqrt(exact) <= 5.0:
            continue
        X = torch.as_tensor(sample(p, 2000, rng))
        Y = torch.as_tensor(sample(q, 2000, rng))
        est = float(ad.sinkhorn_w2(X, Y, 0.05, 200))
        worst = max(worst, abs(est - exact) / exact)
        done += 1
    return CheckResult("8", "Sinkhorn vs Bures closed form", worst < 0.10, {"max_rel_err": worst})


CHECKS = {
    "1": check_constant_sheaf,
    "2": check_oracle_equivalence,
    "3": check_equalizer,
    "4": check_psd_closure,
    "5": check_orbits,
    "6": check_lyapunov_scaling,
    "7": check_gradients,
    "8": check_sinkhorn_bures,
}


def run_all(keys=None, seed: int = 0, echo=None) -> list:
    results = []
    for key in keys or CHECKS:
        res = CHECKS[key](seed)
        if echo:
            echo(res.line())
        results.append(res)
    return results
