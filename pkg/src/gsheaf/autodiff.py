"""Differentiable building blocks for training, on top of ``torch`` (float64).

Reverse-mode bookkeeping is torch's tape; this module adds the pieces torch
does not ship in the required form: symmetric matrix functions with a
gap-floored Daleckii-Krein backward, jittered Cholesky, a batched log-domain
Sinkhorn cost, a finite-difference gradient checker, and the optimizer
factory with separate decay for restriction-map learners.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import torch

from .errors import FactorizationError, NumericError, ParameterError, ShapeError

DTYPE = torch.float64
EIG_GAP = 1e-8
PINV_CUTOFF = 1e-10
JITTER_START = 1e-9
JITTER_MAX = 1e-3
BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


def as_tensor(x, requires_grad: bool = False) -> torch.Tensor:
    t = torch.as_tensor(np.asarray(x, dtype=float) if not torch.is_tensor(x) else x, dtype=DTYPE)
    if requires_grad:
        t = t.detach().clone().requires_grad_(True)
    return t


def congruence(A: torch.Tensor, S: torch.Tensor) -> torch.Tensor:
    """``A S A^T`` with broadcasting over leading axes."""
    if A.shape[-1] != S.shape[-2]:
        raise ShapeError(f"cannot form congruence of {tuple(A.shape)} with {tuple(S.shape)}")
    return A @ S @ A.transpose(-1, -2)


def kron_identity_apply(W: torch.Tensor, X: torch.Tensor) -> torch.Tensor:
    """``(I_n kron W) X`` for ``X`` of shape ``(n d, h)`` without forming the Kronecker product."""
    d = W.shape[-1]
    if X.shape[0] % d:
        raise ShapeError(f"row count {X.shape[0]} is not a multiple of {d}")
    n = X.shape[0] // d
    return (W @ X.reshape(n, d, -1)).reshape(n * d, -1)


def channel_mix(X: torch.Tensor, W: torch.Tensor) -> torch.Tensor:
    if X.shape[-1] != W.shape[0]:
        raise ShapeError(f"channel mismatch {tuple(X.shape)} x {tuple(W.shape)}")
    return X @ W


def elu(x: torch.Tensor) -> torch.Tensor:
    return torch.nn.functional.elu(x)


def _sqrt_fn(w):
    return torch.sqrt(torch.clamp(w, min=0.0))


def _sqrt_div(a, b):
    # (sqrt a - sqrt b) / (a - b) in closed form, safe at a == b
    return 1.0 / torch.clamp(_sqrt_fn(a) + _sqrt_fn(b), min=EIG_GAP)


def _isqrt_fn(w):
    keep = w > PINV_CUTOFF
    return torch.where(keep, 1.0 / torch.sqrt(torch.where(keep, w, torch.ones_like(w))), torch.zeros_like(w))


def _isqrt_div(a, b):
    fa, fb = _isqrt_fn(a), _isqrt_fn(b)
    both = (a > PINV_CUTOFF) & (b > PINV_CUTOFF)
    # -1 / (sqrt a sqrt b (sqrt a + sqrt b)) when both eigenvalues are kept
    closed = -fa * fb / torch.clamp(_sqrt_fn(a) + _sqrt_fn(b), min=EIG_GAP)
    diff = a - b
    safe = torch.where(diff.abs() > EIG_GAP, diff, torch.full_like(diff, EIG_GAP))
    return torch.where(both, closed, (fa - fb) / safe)


class _SymFunction(torch.autograd.Function):
    @staticmethod
    def forward(ctx, S, kind):
        S = 0.5 * (S + S.transpose(-1, -2))
        w, U = torch.linalg.eigh(S)
        f = _sqrt_fn(w) if kind == "sqrt" else _isqrt_fn(w)
        ctx.save_for_backward(w, U)
        ctx.kind = kind
        return (U * f.unsqueeze(-2)) @ U.transpose(-1, -2)

    @staticmethod
    def backward(ctx, G):
        w, U = ctx.saved_tensors
        div = _sqrt_div if ctx.kind == "sqrt" else _isqrt_div
        K = div(w.unsqueeze(-1), w.unsqueeze(-2))
        Gs = 0.5 * (G + G.transpose(-1, -2))
        inner = U.transpose(-1, -2) @ Gs @ U
        out = U @ (K * inner) @ U.transpose(-1, -2)
        return 0.5 * (out + out.transpose(-1, -2)), None


def sym_sqrt(S: torch.Tensor) -> torch.Tensor:
    """PSD square root by eigendecomposition (negative round-off clamped)."""
    return _SymFunction.apply(S, "sqrt")


def sym_inv_sqrt(S: torch.Tensor) -> torch.Tensor:
    """``S^{-1/2}`` with eigenvalues at or below 1e-10 mapped to zero (pseudo-inverse)."""
    return _SymFunction.apply(S, "isqrt")


def cholesky_jitter(S: torch.Tensor) -> torch.Tensor:
    """Lower Cholesky factor, adding ``jitter * I`` (1e-9, x10 per retry, up to 1e-3) where needed."""
    S = 0.5 * (S + S.transpose(-1, -2))
    L, info = torch.linalg.cholesky_ex(S)
    if not bool((info > 0).any()):
        return L
    eye = torch.eye(S.shape[-1], dtype=S.dtype)
    jitter = torch.zeros(S.shape[:-2] + (1, 1), dtype=S.dtype)
    level = JITTER_START
    while level <= JITTER_MAX * (1 + 1e-12):
        jitter = torch.where((info > 0)[..., None, None], torch.full_like(jitter, level), jitter)
        L, info = torch.linalg.cholesky_ex(S + jitter * eye)
        if not bool((info > 0).any()):
            return L
        level *= 10.0
    raise FactorizationError("matrix is not positive semidefinite even with jitter 1e-3")


def sqdist(X: torch.Tensor, Y: torch.Tensor) -> torch.Tensor:
    """Pairwise squared Euclidean distances between the rows, batched."""
    xx = (X * X).sum(-1).unsqueeze(-1)
    yy = (Y * Y).sum(-1).unsqueeze(-2)
    return torch.clamp(xx + yy - 2.0 * X @ Y.transpose(-1, -2), min=0.0)


def default_epsilon(C: torch.Tensor, wy: torch.Tensor | None = None) -> torch.Tensor:
    """0.1 times the median squared distance per problem (no gradient)."""
    C = C.detach()
    flat = C
    if wy is not None:
        flat = torch.where((wy > 0).unsqueeze(-2).expand_as(C), C, torch.full_like(C, float("nan")))
    med = torch.nanmedian(flat.reshape(flat.shape[:-2] + (-1,)), dim=-1).values
    return torch.clamp(0.1 * med, min=1e-12)


def _eps_schedule(eps: torch.Tensor, C: torch.Tensor, iters: int, anneal: bool) -> list:
    """Per-iteration epsilon: geometric decay from the cost scale over the first half, then constant."""
    if not anneal or iters < 8:
        return [eps] * iters
    top = C.detach().amax(dim=(-2, -1)).clamp(min=1e-12)
    ratio = torch.clamp(top / eps, min=1.0)
    n_st = max(1, min(10, (iters // 2) // 5))
    length = (iters // 2) // n_st
    out = []
    for k in range(n_st):
        out += [eps * ratio ** (1.0 - (k + 1) / (n_st + 1))] * length
    return out + [eps] * (iters - len(out))


def _log_step(M, f, g, e, log_a, log_b):
    f = -e * torch.logsumexp(M / e.unsqueeze(-1) + (g / e + log_b).unsqueeze(-2), dim=-1)
    g = -e * torch.logsumexp(M / e.unsqueeze(-1) + (f / e + log_a).unsqueeze(-1), dim=-2)
    return f, g


def _scaled_steps(M, f, g, e, log_a, log_b, steps):
    # The log-domain update carried out as matrix-vector products on a
    # kernel re-centred at the current potentials.
    a, b = log_a.exp(), log_b.exp()
    K = torch.exp((M + f.unsqueeze(-1) + g.unsqueeze(-2)) / e.unsqueeze(-1))
    u = torch.ones_like(f)
    v = torch.ones_like(g)
    for _ in range(steps):
        u = 1.0 / (K @ (v * b).unsqueeze(-1)).squeeze(-1)
        v = 1.0 / (K.transpose(-1, -2) @ (u * a).unsqueeze(-1)).squeeze(-1)
    return f + e * torch.log(u), g + e * torch.log(v)


def sinkhorn_w2(X: torch.Tensor, Y: torch.Tensor, epsilon: float | torch.Tensor | None = None,
                iters: int = 100, wy: torch.Tensor | None = None, anneal: bool = True) -> torch.Tensor:
    """Entropic estimate of squared W2 between two sample sets.

    ``X`` is ``(..., T, d)`` and ``Y`` is ``(..., S, d)``; leading axes are
    batched.  Marginals are uniform, except that ``wy`` (``(..., S)``
    nonnegative) may down-weight or mask padded target rows.  The returned
    value is the transport cost ``<P, C>`` of the entropic plan after
    ``iters`` log-domain updates; gradients flow through the unrolled loop.
    With ``anneal`` the first half of the iterations run at geometrically
    decreasing epsilon (epsilon-scaling), which matters when epsilon is
    small against the costs.
    """
    if X.shape[-1] != Y.shape[-1]:
        raise ShapeError(f"sample dimensions differ: {X.shape[-1]} vs {Y.shape[-1]}")
    if X.shape[-2] < 1 or Y.shape[-2] < 1:
        raise ParameterError("sample sets must be nonempty")
    if iters < 1:
        raise ParameterError(f"iters must be >= 1, got {iters}")
    C = sqdist(X, Y)
    if not bool(torch.isfinite(C).all()):
        raise NumericError("non-finite entries in the Sinkhorn cost matrix")
    if epsilon is None:
        eps = default_epsilon(C, wy)
    else:
        eps = torch.as_tensor(epsilon, dtype=C.dtype)
        if bool((eps <= 0).any()):
            raise ParameterError("epsilon must be positive")
    eps = eps.expand(C.shape[:-2]).clone()
    T = X.shape[-2]
    log_a = torch.full(C.shape[:-1], -float(np.log(T)), dtype=C.dtype)
    if wy is None:
        log_b = torch.full(C.shape[:-2] + (C.shape[-1],), -float(np.log(Y.shape[-2])), dtype=C.dtype)
    else:
        wy = wy / wy.sum(-1, keepdim=True)
        log_b = torch.log(wy)
    M = -C
    schedule = _eps_schedule(eps, C, iters, anneal)
    f = torch.zeros_like(log_a)
    g = torch.zeros_like(log_b)
    if torch.is_grad_enabled() and (X.requires_grad or Y.requires_grad):
        for e in schedule:
            f, g = _log_step(M, f, g, e.unsqueeze(-1), log_a, log_b)
    else:
        i = 0
        while i < iters:
            e = schedule[i]
            # one exact step re-centres the potentials, then cheap scaled steps
            f, g = _log_step(M, f, g, e.unsqueeze(-1), log_a, log_b)
            run = 1
            while i + run < iters and run < 10 and schedule[i + run] is e:
                run += 1
            if run > 1:
                f, g = _scaled_steps(M, f, g, e.unsqueeze(-1), log_a, log_b, run - 1)
            i += run
    e1 = eps.unsqueeze(-1)
    logP = (M + f.unsqueeze(-1) + g.unsqueeze(-2)) / e1.unsqueeze(-1) + log_a.unsqueeze(-1) + log_b.unsqueeze(-2)
    cost = (torch.exp(logP) * C).sum((-2, -1))
    if not bool(torch.isfinite(cost).all()):
        raise NumericError("Sinkhorn produced a non-finite cost")
    return cost


def grad_check(fn: Callable[..., torch.Tensor], params: Sequence, step: float = 1e-6) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``fn`` maps float64 tensors (one per entry of ``params``) to a scalar.
    The relative error of each coordinate is ``|g - g_fd| / max(1, |g|, |g_fd|)``.
    """
    base = [as_tensor(p) for p in params]
    xs = [b.clone().requires_grad_(True) for b in base]
    out = fn(*xs)
    grads = torch.autograd.grad(out, xs, allow_unused=True)
    worst = 0.0
    with torch.no_grad():
        for i, b in enumerate(base):
            g = grads[i] if grads[i] is not None else torch.zeros_like(b)
            flat = b.reshape(-1)
            for j in range(flat.numel()):
                plus = [x.clone() for x in base]
                minus = [x.clone() for x in base]
                plus[i].reshape(-1)[j] += step
                minus[i].reshape(-1)[j] -= step
                fd = (float(fn(*plus)) - float(fn(*minus))) / (2 * step)
                an = float(g.reshape(-1)[j])
                err = abs(an - fd) / max(1.0, abs(an), abs(fd))
                worst = max(worst, err)
    return worst


def make_optimizer(param_groups: dict, lr: float, weight_decay: float = 5e-3,
                   sheaf_decay: float = 5e-3) -> torch.optim.AdamW:
    """Adam with decoupled decay; ``param_groups`` maps ``"main"`` / ``"sheaf"`` to parameter lists."""
    groups = []
    if param_groups.get("main"):
        groups.append({"params": list(param_groups["main"]), "weight_decay": weight_decay, "name": "main"})
    if param_groups.get("sheaf"):
        groups.append({"params": list(param_groups["sheaf"]), "weight_decay": sheaf_decay, "name": "sheaf"})
    if not groups:
        raise ParameterError("no parameters to optimize")
    return torch.optim.AdamW(groups, lr=lr, betas=BETAS, eps=ADAM_EPS)


def adam_step(opt: torch.optim.Optimizer, params: Sequence[torch.Tensor], grads: Sequence[torch.Tensor]) -> None:
    """Install ``grads`` on ``params`` and take one optimizer step."""
    if len(params) != len(grads):
        raise ShapeError("params and grads differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {tuple(g.shape)} does not match parameter {tuple(p.shape)}")
        p.grad = g.detach().clone()
    opt.step()
