"""Heterogeneous extensions: RWR neighbour sampling, negative sampling and
the kernel type-separability penalty.

The node encoder is a free embedding row per node, so ``f(u)`` is simply
``Z[u]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from pgwmatch.embedding import (
    EmbeddingProblem,
    EmbedOptConfig,
    descend_with_retry,
    embedding_objective,
    embedding_value_and_grad,
)
from pgwmatch.errors import NumericalError, ValidationError
from pgwmatch.graph import Graph


@dataclass(frozen=True)
class RWRConfig:
    p: float = 0.5
    eta: int = 10
    iota: int = 10
    n: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ValidationError(f"rwr.p must lie in [0, 1], got {self.p}")
        for name in ("eta", "iota", "n"):
            if getattr(self, name) < 1:
                raise ValidationError(f"rwr.{name} must be at least 1")


@dataclass
class NeighborSets:
    """Per-node, per-type neighbour lists and their union."""

    by_type: list = field(default_factory=list)

    @property
    def union(self) -> list:
        return [
            np.sort(np.concatenate(list(d.values()))) if d else np.empty(0, dtype=int)
            for d in self.by_type
        ]

    def positive_pairs(self) -> np.ndarray:
        pairs = [(u, v) for u, nbrs in enumerate(self.union) for v in nbrs]
        return np.array(pairs, dtype=int).reshape(-1, 2)


def _walk_counts(adjacency: list, u: int, cfg: RWRConfig) -> np.ndarray:
    rng = np.random.default_rng([cfg.seed, u])
    counts = np.zeros(len(adjacency), dtype=int)
    if adjacency[u].size == 0:
        return counts
    for _ in range(cfg.iota):
        cur = u
        for _ in range(cfg.eta):
            restart = rng.random() < cfg.p
            nbrs = adjacency[cur]
            step = rng.integers(nbrs.size)
            cur = u if restart else int(nbrs[step])
            counts[cur] += 1
    counts[u] = 0
    return counts


def rwr_sample(g: Graph, cfg: RWRConfig = RWRConfig()) -> NeighborSets:
    """Random walks with restart from every node.

    Each node ``u`` runs ``iota`` walks of ``eta`` steps; each step first
    draws the restart coin and then a uniform neighbour index, both from a
    stream seeded by ``(seed, u)``. For every node type the ``n`` most visited
    nodes (ties to the lower id) form that type's neighbour set. ``u`` itself
    is never its own neighbour.
    """
    types = g.node_types if g.is_typed else np.zeros(g.node_count, dtype=int)
    adjacency = [g.neighbors(v) for v in range(g.node_count)]
    by_type = []
    for u in range(g.node_count):
        counts = _walk_counts(adjacency, u, cfg)
        sets = {}
        for r in np.unique(types):
            members = np.flatnonzero((types == r) & (counts > 0))
            if members.size == 0:
                continue
            # stable sort on -count keeps ascending id order within ties
            order = np.argsort(-counts[members], kind="stable")
            sets[int(r)] = np.sort(members[order[: cfg.n]])
        by_type.append(sets)
    return NeighborSets(by_type)


def sample_negatives(ns: NeighborSets, n_nodes: int, neg_per_node: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``neg_per_node`` nodes per ``u`` uniformly (with replacement) from
    the nodes outside ``N_u`` and other than ``u``. Nodes with no candidates
    contribute nothing.
    """
    pairs = []
    for u, nbrs in enumerate(ns.union):
        excluded = np.zeros(n_nodes, dtype=bool)
        excluded[nbrs] = True
        excluded[u] = True
        candidates = np.flatnonzero(~excluded)
        if candidates.size == 0 or neg_per_node == 0:
            continue
        for v in rng.choice(candidates, size=neg_per_node):
            pairs.append((u, int(v)))
    return np.array(pairs, dtype=int).reshape(-1, 2)


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def _sigmoid(x):
    return np.exp(_log_sigmoid(x))


def pair_loglik(z, pos_pairs, neg_pairs) -> float:
    """``sum log sigma(z_u . z_p) + sum log sigma(-z_u . z_n)``."""
    value = 0.0
    if len(pos_pairs):
        value += float(np.sum(_log_sigmoid(np.einsum("ij,ij->i", z[pos_pairs[:, 0]], z[pos_pairs[:, 1]]))))
    if len(neg_pairs):
        value += float(np.sum(_log_sigmoid(-np.einsum("ij,ij->i", z[neg_pairs[:, 0]], z[neg_pairs[:, 1]]))))
    return value


def pair_loglik_grad(z, pos_pairs, neg_pairs) -> np.ndarray:
    grad = np.zeros_like(z)
    for pairs, sign in ((pos_pairs, 1.0), (neg_pairs, -1.0)):
        if not len(pairs):
            continue
        u, v = pairs[:, 0], pairs[:, 1]
        x = np.einsum("ij,ij->i", z[u], z[v])
        # d/dx log sigma(sign x) = sign * sigma(-sign x)
        coef = sign * _sigmoid(-sign * x)
        np.add.at(grad, u, coef[:, None] * z[v])
        np.add.at(grad, v, coef[:, None] * z[u])
    return grad


def neg_sampling_loglik(z, ns: NeighborSets, neg_per_node: int = 5, seed: int = 0) -> float:
    """Negative-sampling log-likelihood of the neighbour sets; always <= 0."""
    z = np.asarray(z, dtype=float)
    neg = sample_negatives(ns, z.shape[0], neg_per_node, np.random.default_rng(seed))
    return pair_loglik(z, ns.positive_pairs(), neg)


@dataclass
class KernelClassifier:
    """Kernel regressor ``h(z) = sum_i beta_i k(z_i, z)`` with penalty weight ``zeta``."""

    beta: np.ndarray
    zeta: float = 1e-4

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        if not np.all(np.isfinite(self.beta)):
            raise ValidationError("classifier coefficients must be finite")
        if self.zeta < 0:
            raise ValidationError("zeta must be nonnegative")


def gaussian_gram(z) -> np.ndarray:
    """``exp(-|z_i - z_j|^2 / 2)``."""
    sq = np.sum(z * z, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * z @ z.T, 0.0)
    return np.exp(-0.5 * d2)


def type_separability_penalty(z, types, clf: KernelClassifier) -> float:
    """``sum_u (r_u - h(z_u))^2`` with integer type codes ``r_u`` (unweighted by zeta)."""
    z = np.asarray(z, dtype=float)
    resid = np.asarray(types, dtype=float) - gaussian_gram(z) @ clf.beta
    return float(resid @ resid)


def penalty_grads(z, types, beta):
    """Gradients of :func:`type_separability_penalty` w.r.t. ``z`` and ``beta``."""
    gram = gaussian_gram(z)
    resid = np.asarray(types, dtype=float) - gram @ beta
    g_beta = -2.0 * gram @ resid
    # w[i, u] = dP/dK_iu ; K symmetric so h_u = sum_i beta_i K_iu
    w = -2.0 * np.outer(beta, resid) * gram
    # dK_iu/dz_u = K_iu (z_i - z_u), dK_iu/dz_i = K_iu (z_u - z_i)
    g_z = (w.T @ z - w.sum(axis=0)[:, None] * z) + (w @ z - w.sum(axis=1)[:, None] * z)
    return g_z, g_beta


@dataclass
class HeteroProblem:
    """Fixed inputs of the heterogeneous embedding objective.

    ``base`` carries the GW and Wasserstein terms (its own regulariser is
    switched off); the proximity log-likelihood and the type penalty replace
    it.
    """

    base: EmbeddingProblem
    types_s: np.ndarray
    types_t: np.ndarray
    pos_s: np.ndarray
    pos_t: np.ndarray
    neg_s: np.ndarray
    neg_t: np.ndarray
    zeta: float = 1e-4

    def __post_init__(self):
        self.base.use_regularizer = False


def hetero_embedding_objective(params: dict, prob: HeteroProblem) -> float:
    return hetero_value_and_grad(params, prob, need_grad=False)[0]


def hetero_value_and_grad(params: dict, prob: HeteroProblem, need_grad: bool = True):
    """Value and gradients over ``zs, zt, beta_s, beta_t``."""
    zs, zt = params["zs"], params["zt"]
    a1 = prob.base.alpha1
    if need_grad:
        value, gzs, gzt = embedding_value_and_grad(zs, zt, prob.base)
    else:
        value, gzs, gzt = embedding_objective(zs, zt, prob.base), None, None
    grads = {}
    for side, z, types, pos, neg, gz in (
        ("s", zs, prob.types_s, prob.pos_s, prob.neg_s, gzs),
        ("t", zt, prob.types_t, prob.pos_t, prob.neg_t, gzt),
    ):
        beta = params[f"beta_{side}"]
        value += a1 * (-pair_loglik(z, pos, neg))
        value += a1 * prob.zeta * type_separability_penalty(z, types, KernelClassifier(beta, prob.zeta))
        if need_grad:
            g_ll = -a1 * pair_loglik_grad(z, pos, neg)
            g_pz, g_pb = penalty_grads(z, types, beta)
            for term, arr in (("log-likelihood", g_ll), ("type-separability", g_pz), ("type-separability", g_pb)):
                if not np.all(np.isfinite(arr)):
                    raise NumericalError(f"non-finite gradient in the {term} term")
            gz += g_ll + a1 * prob.zeta * g_pz
            grads[f"beta_{side}"] = a1 * prob.zeta * g_pb
    if need_grad:
        grads["zs"], grads["zt"] = gzs, gzt
    return value, grads


def optimize_hetero(params: dict, prob: HeteroProblem, ns_s: NeighborSets, ns_t: NeighborSets,
                    neg_per_node: int, opt: EmbedOptConfig = EmbedOptConfig(), neg_seed: int = 0):
    """Adam over embeddings and classifier coefficients.

    Negatives are redrawn every epoch from a stream seeded by
    ``(neg_seed, epoch)``.
    """
    n_s, n_t = params["zs"].shape[0], params["zt"].shape[0]

    def value_and_grad(p, epoch):
        rng = np.random.default_rng([neg_seed, epoch])
        prob.neg_s = sample_negatives(ns_s, n_s, neg_per_node, rng)
        prob.neg_t = sample_negatives(ns_t, n_t, neg_per_node, rng)
        return hetero_value_and_grad(p, prob)

    out, initial, final = descend_with_retry({k: np.array(v, dtype=float) for k, v in params.items()},
                                             value_and_grad, opt)
    return out, {"initial": initial, "final": final}
