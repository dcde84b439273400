"""Paired synthetic graphs (K-NN and Barabasi-Albert) with a known partial
correspondence."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import networkx as nx
import numpy as np

from pgwmatch.errors import ValidationError
from pgwmatch.graph import Graph, feature_cosine_weights
from pgwmatch.seeding import stream_seed

KINDS = ("knn", "ba")


@dataclass(frozen=True)
class SynthConfig:
    kind: str = "knn"
    k: int = 3
    m_ba: int = 3
    n_match: int = 50
    rho: float = 0.7
    feat_dim: int = 8
    noise_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not 0 < self.rho <= 1:
            raise ValidationError(f"rho must lie in (0, 1], got {self.rho}")
        if self.k < 1:
            raise ValidationError("k must be at least 1")
        if self.m_ba < 1:
            raise ValidationError("m_ba must be at least 1")
        if self.n_match < 2:
            raise ValidationError("n_match must be at least 2")
        if self.feat_dim < 1:
            raise ValidationError("feat_dim must be at least 1")
        if self.noise_scale < 0:
            raise ValidationError("noise_scale must be nonnegative")


@dataclass(frozen=True)
class TypeSpec:
    """Node types of a typed pair.

    ``fractions`` split ``n_match`` across types; ``rho`` gives each type's
    own overlap ratio. ``shift`` offsets each type's feature mean along its
    own axis so that types form separate clusters.
    """

    names: tuple = ("t0",)
    fractions: tuple = (1.0,)
    rho: tuple = (None,)
    shift: float = 3.0
    cross_k: int = 1

    def __post_init__(self):
        if not (len(self.names) == len(self.fractions) == len(self.rho)) or not self.names:
            raise ValidationError("type names, fractions and rho must have equal nonzero length")
        if abs(sum(self.fractions) - 1.0) > 1e-9 or min(self.fractions) <= 0:
            raise ValidationError("type fractions must be positive and sum to 1")
        for r in self.rho:
            if r is not None and not 0 < r <= 1:
                raise ValidationError(f"per-type rho must lie in (0, 1], got {r}")


@dataclass
class GraphPair:
    source: Graph
    target: Graph
    ground_truth: list = field(default_factory=list)


def knn_adjacency(x: np.ndarray, k: int, allowed: Optional[np.ndarray] = None) -> np.ndarray:
    """Symmetrised K-NN adjacency under Euclidean distance.

    ``allowed[u, v]`` restricts which nodes may be chosen as neighbours.
    Ties resolve to the lower index.
    """
    n = x.shape[0]
    d2 = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(d2, np.inf)
    if allowed is not None:
        d2 = np.where(allowed, d2, np.inf)
    adj = np.zeros((n, n), dtype=bool)
    order = np.argsort(d2, axis=1, kind="stable")
    for u in range(n):
        for v in order[u, :k]:
            if np.isfinite(d2[u, v]):
                adj[u, v] = True
    return adj | adj.T


def _ba_adjacency(n_total: int, m: int, core: nx.Graph, seed: int) -> np.ndarray:
    if n_total > core.number_of_nodes():
        g = nx.barabasi_albert_graph(n_total, m, seed=seed, initial_graph=core.copy())
    else:
        g = core
    return nx.to_numpy_array(g, nodelist=range(n_total)) > 0


def _side_sizes(n_match: int, rho: float) -> int:
    return max(int(round(n_match / rho)), n_match)


def _build_pair(cfg: SynthConfig, types: TypeSpec) -> GraphPair:
    rng = np.random.default_rng(stream_seed(cfg.seed, "generate"))
    n_types = len(types.names)
    if n_types > 1 and cfg.feat_dim < n_types:
        raise ValidationError("feat_dim must be at least the number of types")

    counts = [int(round(cfg.n_match * f)) for f in types.fractions]
    counts[-1] = cfg.n_match - sum(counts[:-1])
    if min(counts) < 1:
        raise ValidationError("every type needs at least one matched node")
    sizes = [_side_sizes(c, cfg.rho if r is None else r) for c, r in zip(counts, types.rho)]

    # per type: matched core first, then source-only and target-only extras
    xs_parts, xt_parts, ts_parts, tt_parts, core_s, core_t = [], [], [], [], [], []
    offset_s = offset_t = 0
    for r, (c, size) in enumerate(zip(counts, sizes)):
        mean = np.zeros(cfg.feat_dim)
        if r > 0:
            mean[r - 1] = types.shift * r
        core = rng.normal(size=(c, cfg.feat_dim)) + mean
        noisy = core + cfg.noise_scale * rng.normal(size=core.shape)
        extra_s = rng.normal(size=(size - c, cfg.feat_dim)) + mean
        extra_t = rng.normal(size=(size - c, cfg.feat_dim)) + mean
        xs_parts += [core, extra_s]
        xt_parts += [noisy, extra_t]
        ts_parts.append(np.full(size, r))
        tt_parts.append(np.full(size, r))
        core_s.append(offset_s + np.arange(c))
        core_t.append(offset_t + np.arange(c))
        offset_s += size
        offset_t += size
    xs, xt = np.vstack(xs_parts), np.vstack(xt_parts)
    ts, tt = np.concatenate(ts_parts), np.concatenate(tt_parts)
    core_s, core_t = np.concatenate(core_s), np.concatenate(core_t)
    n_s, n_t = xs.shape[0], xt.shape[0]

    if cfg.kind == "knn":
        if min(sizes) <= cfg.k:
            raise ValidationError(f"each type needs more than k={cfg.k} nodes")
        adj_s = _typed_knn(xs, ts, cfg.k, types.cross_k)
        adj_t = _typed_knn(xt, tt, cfg.k, types.cross_k)
    else:
        if cfg.n_match <= cfg.m_ba:
            raise ValidationError(f"n_match must exceed m_ba={cfg.m_ba}")
        # the shared core is grown first; each side then grows independently
        core_seed, seed_s, seed_t = (int(v) for v in rng.integers(0, 2**31 - 1, size=3))
        core_graph = nx.barabasi_albert_graph(cfg.n_match, cfg.m_ba, seed=core_seed)
        # relabel so that BA core node i is the i-th matched node
        adj_s = _ba_on_layout(core_graph, core_s, n_s, cfg.m_ba, seed_s)
        adj_t = _ba_on_layout(core_graph, core_t, n_t, cfg.m_ba, seed_t)

    ws = feature_cosine_weights(xs, adj_s)
    wt = feature_cosine_weights(xt, adj_t)

    perm = rng.permutation(n_t)
    # target node old -> new id is perm[old]
    inverse = np.empty(n_t, dtype=int)
    inverse[perm] = np.arange(n_t)
    wt = wt[np.ix_(inverse, inverse)]
    xt = xt[inverse]
    tt = tt[inverse]
    truth = sorted((int(i), int(perm[j])) for i, j in zip(core_s, core_t))

    if n_types == 1:
        source = Graph(ws, xs)
        target = Graph(wt, xt)
    else:
        source = Graph(ws, xs, ts, types.names)
        target = Graph(wt, xt, tt, types.names)
    return GraphPair(source, target, truth)


def _typed_knn(x, types, k, cross_k):
    same = types[:, None] == types[None, :]
    adj = knn_adjacency(x, k, allowed=same)
    if cross_k > 0 and len(np.unique(types)) > 1:
        for r in np.unique(types):
            allowed = np.broadcast_to(types[None, :] == r, adj.shape) & ~same
            rows = knn_adjacency(x, cross_k, allowed=allowed)
            adj |= rows
    return adj


def _ba_on_layout(core_graph, core_ids, n_total, m, seed):
    """Grow a BA graph from ``core_graph`` to ``n_total`` nodes and place the
    core node ``i`` at position ``core_ids[i]``."""
    adj_grown = _ba_adjacency(n_total, m, core_graph, seed)
    extra_ids = np.setdiff1d(np.arange(n_total), core_ids)
    position = np.concatenate([core_ids, extra_ids])
    adj = np.zeros_like(adj_grown)
    adj[np.ix_(position, position)] = adj_grown
    return adj


def gen_pair(cfg: SynthConfig = SynthConfig()) -> GraphPair:
    """Source/target pair with ``n_match`` shared nodes and overlap ratio ``rho``.

    Shared nodes draw features from ``N(0, I)``; their target copies are
    perturbed by ``noise_scale * N(0, I)``. Both sides are padded with fresh
    nodes up to ``round(n_match / rho)`` nodes. K-NN edges are recomputed on
    each full side; BA sides grow independently from a shared BA core. Edge
    weights are the rescaled feature cosines and target ids are shuffled.
    """
    return _build_pair(cfg, TypeSpec())


def gen_typed_pair(cfg: SynthConfig, types: TypeSpec) -> GraphPair:
    """Typed variant of :func:`gen_pair`.

    For K-NN, each node links to its ``k`` nearest nodes of its own type
    and its ``types.cross_k`` nearest nodes of every other type. For BA the
    growth ignores types. With a single type the result equals
    :func:`gen_pair` apart from the type labels.
    """
    return _build_pair(cfg, types)
