"""Node-embedding update for homogeneous graphs.

Embeddings are free per-node tables. With the transport plan held fixed they
minimise the fused GW cost, the unary Wasserstein cost and a regulariser that
fits the intra-graph kernel to the structural dissimilarity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from pgwmatch.errors import NumericalError, ValidationError
from pgwmatch.graph import KernelConfig, embedding_kernel, embedding_kernel_vjp
from pgwmatch.solver import SQUARE_LOSS, LossFactorization, PartialCouplingSpec, objective_eval


@dataclass(frozen=True)
class EmbedOptConfig:
    alpha1: float = 1e-2
    lr: float = 1e-2
    epochs: int = 100
    seed: int = 0
    d: int = 16
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.alpha1 < 0:
            raise ValidationError("embed.alpha1 must be nonnegative")
        if not self.lr > 0:
            raise ValidationError("embed.lr must be positive")
        if self.d < 1:
            raise ValidationError("embed.d must be at least 1")
        if self.epochs < 0:
            raise ValidationError("embed.epochs must be nonnegative")


def init_embeddings(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. ``N(0, 1/d)`` rows, redrawn until no row is exactly zero."""
    z = rng.normal(0.0, 1.0 / np.sqrt(d), size=(n, d))
    while np.any(np.linalg.norm(z, axis=1) == 0):
        bad = np.linalg.norm(z, axis=1) == 0
        z[bad] = rng.normal(0.0, 1.0 / np.sqrt(d), size=(int(bad.sum()), d))
    return z


class Adam:
    """Adam over a dict of arrays, updated in place."""

    def __init__(self, lr=1e-2, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(params[k])
                self.v[k] = np.zeros_like(params[k])
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)


def fused_cost(g_struct, z, alpha: float, cfg: KernelConfig = KernelConfig()):
    """``(1 - alpha) G + alpha K(Z, Z)``."""
    if not 0 <= alpha <= 1:
        raise ValidationError(f"alpha must lie in [0, 1], got {alpha}")
    g_struct = np.asarray(g_struct, dtype=float)
    if alpha == 0:
        return g_struct.copy()
    return (1.0 - alpha) * g_struct + alpha * embedding_kernel(z, z, cfg)


def homo_regularizer(zs, zt, gs, gt, g_st=None, st_mask=None, cfg: KernelConfig = KernelConfig()) -> float:
    """Squared Frobenius misfit between intra-graph kernels and dissimilarities.

    When ``g_st`` is given, the cross-graph kernel is also fitted to it on the
    entries selected by ``st_mask`` (all entries if the mask is omitted).
    """
    value = float(np.sum((embedding_kernel(zs, zs, cfg) - gs) ** 2))
    value += float(np.sum((embedding_kernel(zt, zt, cfg) - gt) ** 2))
    if g_st is not None:
        diff = embedding_kernel(zs, zt, cfg) - g_st
        if st_mask is not None:
            diff = diff * st_mask
        value += float(np.sum(diff**2))
    return value


def anchor_targets(anchors, n_s: int, n_t: int) -> tuple[np.ndarray, np.ndarray]:
    """Cross-graph target distances from known pairs: zero on anchors, masked elsewhere."""
    g_st = np.zeros((n_s, n_t))
    mask = np.zeros((n_s, n_t))
    for i, j in anchors:
        mask[i, j] = 1.0
    return g_st, mask


@dataclass
class EmbeddingProblem:
    """Everything the embedding objective holds fixed."""

    gs: np.ndarray
    gt: np.ndarray
    spec: PartialCouplingSpec
    plan: np.ndarray
    alpha: float
    alpha1: float
    kernel: KernelConfig = KernelConfig()
    g_st: Optional[np.ndarray] = None
    st_mask: Optional[np.ndarray] = None
    fac: LossFactorization = SQUARE_LOSS
    # switches off the regulariser, used by the heterogeneous objective
    use_regularizer: bool = True


def embedding_objective(zs, zt, prob: EmbeddingProblem) -> float:
    """Fused GW cost + ``alpha`` x unary cost + ``alpha1`` x regulariser at a fixed plan."""
    cs = fused_cost(prob.gs, zs, prob.alpha, prob.kernel)
    ct = fused_cost(prob.gt, zt, prob.alpha, prob.kernel)
    value = objective_eval(cs, ct, None, prob.plan, 0.0, prob.spec, prob.fac)
    if prob.alpha != 0:
        value += prob.alpha * float(np.sum(embedding_kernel(zs, zt, prob.kernel) * prob.plan))
    if prob.use_regularizer and prob.alpha1 != 0:
        value += prob.alpha1 * homo_regularizer(zs, zt, prob.gs, prob.gt, prob.g_st, prob.st_mask, prob.kernel)
    return value


def _check_finite(term: str, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalError(f"non-finite gradient in the {term} term")


def embedding_value_and_grad(zs, zt, prob: EmbeddingProblem):
    """Objective value and its analytic gradients ``(value, d/dzs, d/dzt)``."""
    t, fac, kcfg, alpha = prob.plan, prob.fac, prob.kernel, prob.alpha
    mu_s, mu_t = prob.spec.mu_s, prob.spec.mu_t
    gzs = np.zeros_like(zs)
    gzt = np.zeros_like(zt)
    value = embedding_objective(zs, zt, prob)

    if alpha != 0:
        # GW term through the fused costs
        cs = fused_cost(prob.gs, zs, alpha, kcfg)
        ct = fused_cost(prob.gt, zt, alpha, kcfg)
        r, c = t.sum(axis=1), t.sum(axis=0)
        d_cs = fac.d1_prime(cs) * np.outer(mu_s, r) - fac.h1_prime(cs) * (t @ fac.h2(ct) @ t.T)
        d_ct = fac.d2_prime(ct) * np.outer(mu_t, c) - fac.h2_prime(ct) * (t.T @ fac.h1(cs) @ t)
        a1, a2 = embedding_kernel_vjp(zs, zs, alpha * d_cs, kcfg)
        b1, b2 = embedding_kernel_vjp(zt, zt, alpha * d_ct, kcfg)
        _check_finite("Gromov-Wasserstein", a1, a2, b1, b2)
        gzs += a1 + a2
        gzt += b1 + b2

        # unary Wasserstein term
        ws, wt = embedding_kernel_vjp(zs, zt, alpha * t, kcfg)
        _check_finite("Wasserstein", ws, wt)
        gzs += ws
        gzt += wt

    if prob.use_regularizer and prob.alpha1 != 0:
        a1_ = prob.alpha1
        ks = embedding_kernel(zs, zs, kcfg)
        kt = embedding_kernel(zt, zt, kcfg)
        s1, s2 = embedding_kernel_vjp(zs, zs, 2.0 * a1_ * (ks - prob.gs), kcfg)
        t1, t2 = embedding_kernel_vjp(zt, zt, 2.0 * a1_ * (kt - prob.gt), kcfg)
        _check_finite("regulariser", s1, s2, t1, t2)
        gzs += s1 + s2
        gzt += t1 + t2
        if prob.g_st is not None:
            diff = embedding_kernel(zs, zt, kcfg) - prob.g_st
            mask = 1.0 if prob.st_mask is None else prob.st_mask
            x1, x2 = embedding_kernel_vjp(zs, zt, 2.0 * a1_ * diff * mask, kcfg)
            _check_finite("cross-graph regulariser", x1, x2)
            gzs += x1
            gzt += x2
    return value, gzs, gzt


def adam_descent(params: dict, value_and_grad, opt: EmbedOptConfig, lr=None):
    """Run ``opt.epochs`` Adam steps. Returns ``(initial, final, best_params, best_value)``.

    ``value_and_grad(params, epoch)`` returns the objective and a gradient dict.
    """
    adam = Adam(opt.lr if lr is None else lr, opt.beta1, opt.beta2, opt.eps)
    params = {k: v.copy() for k, v in params.items()}
    value, grads = value_and_grad(params, 0)
    initial = value
    best_value, best = value, {k: v.copy() for k, v in params.items()}
    for epoch in range(opt.epochs):
        adam.step(params, grads)
        value, grads = value_and_grad(params, epoch + 1)
        if value < best_value:
            best_value, best = value, {k: v.copy() for k, v in params.items()}
    return initial, value, params, best, best_value


def descend_with_retry(params: dict, value_and_grad, opt: EmbedOptConfig):
    """Adam with one halved-lr retry if the run ends above its starting value.

    If the retry also ends higher, the best iterate seen is returned so the
    objective never increases.
    """
    initial, final, out, best, _ = adam_descent(params, value_and_grad, opt)
    if final <= initial + 1e-6:
        return out, initial, final
    initial, final, out, best, best_value = adam_descent(params, value_and_grad, opt, lr=opt.lr / 2)
    if final <= initial + 1e-6:
        return out, initial, final
    return best, initial, best_value


def optimize_embeddings(zs, zt, prob: EmbeddingProblem, opt: EmbedOptConfig = EmbedOptConfig()):
    """Adam on :func:`embedding_objective` with the plan fixed.

    Returns
    -------
    zs, zt : ndarray
        Updated embeddings.
    info : dict
        ``initial`` and ``final`` objective values.
    """

    def value_and_grad(params, _epoch):
        value, gs, gt = embedding_value_and_grad(params["zs"], params["zt"], prob)
        return value, {"zs": gs, "zt": gt}

    params = {"zs": np.array(zs, dtype=float), "zt": np.array(zt, dtype=float)}
    out, initial, final = descend_with_retry(params, value_and_grad, opt)
    return out["zs"], out["zt"], {"initial": initial, "final": final}
