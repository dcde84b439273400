"""Alternating transport / embedding driver and correspondence extraction."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from pgwmatch.embedding import (
    EmbeddingProblem,
    EmbedOptConfig,
    anchor_targets,
    fused_cost,
    init_embeddings,
    optimize_embeddings,
)
from pgwmatch.errors import ValidationError
from pgwmatch.graph import Graph, KernelConfig, build_measure, embedding_kernel, structural_dissimilarity
from pgwmatch.hetero import (
    HeteroProblem,
    RWRConfig,
    optimize_hetero,
    rwr_sample,
)
from pgwmatch.seeding import stream_seed
from pgwmatch.solver import PartialCouplingSpec, SolverConfig, proximal_solve

MODES = ("homogeneous", "heterogeneous")


@dataclass(frozen=True)
class MatchConfig:
    """Settings for one matching run.

    ``embed.alpha1`` is the regulariser weight. ``wasserstein_only`` drops
    the GW term; with a fixed cross cost the run is then a single partial
    Wasserstein solve.
    """

    M: int = 10
    b: float = 1.0
    solver: SolverConfig = SolverConfig()
    embed: EmbedOptConfig = EmbedOptConfig()
    kernel: KernelConfig = KernelConfig()
    mode: str = "homogeneous"
    rwr: RWRConfig = RWRConfig()
    zeta: float = 1e-4
    neg_per_node: int = 5
    wasserstein_only: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.M < 1:
            raise ValidationError(f"M must be at least 1, got {self.M}")
        if not 0 < self.b <= 1:
            raise ValidationError(f"b must lie in (0, 1], got {self.b}")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.zeta < 0:
            raise ValidationError("zeta must be nonnegative")
        if self.neg_per_node < 0:
            raise ValidationError("neg_per_node must be nonnegative")

    @property
    def alpha1(self) -> float:
        return self.embed.alpha1


@dataclass
class Correspondence:
    pairs: list = field(default_factory=list)
    """``(source_id, target_id, score)`` triples."""
    unmatched: list = field(default_factory=list)
    """``(source_id, dummy_score)`` for sources sent to the dummy node."""

    def pair_set(self) -> set:
        return {(s, t) for s, t, _ in self.pairs}


@dataclass
class MatchResult:
    correspondence: Correspondence
    plan: np.ndarray
    zs: Optional[np.ndarray]
    zt: Optional[np.ndarray]
    trace: list
    """One dict per round with the transport and embedding objectives."""
    solver_trace: list
    """``(round, outer_iter, inner_iter, objective, r1, r2, r3)`` rows."""
    extras: dict = field(default_factory=dict)


def alpha_schedule(m: int, M: int) -> float:
    """Embedding weight ``m / M`` for round ``m``."""
    if not 0 <= m < M:
        raise ValidationError(f"round {m} outside [0, {M})")
    return m / M


def extend_plan(t_hat) -> np.ndarray:
    """Append the dummy column ``1 - T 1``."""
    t_hat = np.asarray(t_hat, dtype=float)
    rows = t_hat.sum(axis=1)
    if np.any(rows > 1 + 1e-9):
        raise ValidationError("plan row sums exceed 1; cannot build the dummy column")
    return np.hstack([t_hat, np.maximum(1.0 - rows, 0.0)[:, None]])


def row_normalized_plan(t, mu_s) -> np.ndarray:
    """Rows of ``t`` as fractions of each source node's mass.

    Each row is divided by ``max(mu_i, row sum)`` so round-off in the
    projections cannot push a row past 1; massless rows become zero.
    """
    t = np.asarray(t, dtype=float)
    denom = np.maximum(np.asarray(mu_s, dtype=float), t.sum(axis=1))
    out = np.zeros_like(t)
    np.divide(t, denom[:, None], out=out, where=denom[:, None] > 0)
    return out


def extract_correspondences(t_ext) -> Correspondence:
    """Row-wise argmax over the extended plan; the last column is the dummy.

    Ties between a real column and the dummy go to the real column, ties
    among real columns to the lowest index.
    """
    t_ext = np.asarray(t_ext, dtype=float)
    real, dummy = t_ext[:, :-1], t_ext[:, -1]
    out = Correspondence()
    if real.shape[1] == 0:
        out.unmatched = [(i, float(d)) for i, d in enumerate(dummy)]
        return out
    best = real.argmax(axis=1)
    for i, j in enumerate(best):
        score = real[i, j]
        if score > 0 and score >= dummy[i]:
            out.pairs.append((i, int(j), float(score)))
        else:
            out.unmatched.append((i, float(dummy[i])))
    return out


def _store_embeddings(checkpoint_dir, m, zs, zt, seed):
    from pgwmatch.io import write_embedding_checkpoint

    root = Path(checkpoint_dir)
    root.mkdir(parents=True, exist_ok=True)
    write_embedding_checkpoint(root / f"round{m:03d}_source.json", zs, seed=seed, round_index=m)
    write_embedding_checkpoint(root / f"round{m:03d}_target.json", zt, seed=seed, round_index=m)


def ppgm_run(
    gs: Graph,
    gt: Graph,
    cfg: MatchConfig = MatchConfig(),
    cross_cost=None,
    anchors: Optional[Sequence] = None,
    checkpoint_dir=None,
) -> MatchResult:
    """Match ``gs`` into ``gt``.

    Alternates a partial transport solve (with the embedding weight raised
    from 0 towards 1 over ``M`` rounds) and an embedding update, then
    reads the correspondence off the plan extended with a dummy column.

    Parameters
    ----------
    cross_cost : ndarray, optional
        Fixed unary cost replacing the embedding kernel between the graphs.
        Only meaningful with ``cfg.wasserstein_only``.
    anchors : sequence of (i, j), optional
        Known correspondences; enable the cross-graph regulariser term.
    checkpoint_dir : path, optional
        Where to store the embeddings after every round.
    """
    if cfg.mode == "heterogeneous" and not (gs.is_typed and gt.is_typed):
        raise ValidationError("heterogeneous mode requires node types on both graphs")
    mu_s, mu_t = build_measure(gs), build_measure(gt)
    spec = PartialCouplingSpec(mu_s, mu_t, cfg.b)
    solver_trace: list = []
    trace: list = []

    if cross_cost is not None:
        cross_cost = np.asarray(cross_cost, dtype=float)
        if cross_cost.shape != spec.shape:
            raise ValidationError(f"cross cost shape {cross_cost.shape} does not match {spec.shape}")
        if not cfg.wasserstein_only:
            raise ValidationError("a fixed cross cost requires wasserstein_only")
        t, log = proximal_solve(None, None, cross_cost, 1.0, spec, cfg.solver, log=True)
        solver_trace = [(0, *row) for row in log["trace"]]
        trace.append({"round": 0, "alpha": 1.0, "ot_objective": log["objective"][-1],
                      "embed_initial": float("nan"), "embed_final": float("nan")})
        corr = extract_correspondences(extend_plan(row_normalized_plan(t, mu_s)))
        return MatchResult(corr, t, None, None, trace, solver_trace)

    g_s, g_t = structural_dissimilarity(gs), structural_dissimilarity(gt)
    rng = np.random.default_rng(stream_seed(cfg.seed, "embed-init"))
    zs = init_embeddings(gs.node_count, cfg.embed.d, rng)
    zt = init_embeddings(gt.node_count, cfg.embed.d, rng)
    g_st = st_mask = None
    if anchors:
        g_st, st_mask = anchor_targets(anchors, gs.node_count, gt.node_count)

    hetero = cfg.mode == "heterogeneous"
    if hetero:
        rwr_cfg = RWRConfig(cfg.rwr.p, cfg.rwr.eta, cfg.rwr.iota, cfg.rwr.n, stream_seed(cfg.seed, "rwr"))
        ns_s, ns_t = rwr_sample(gs, rwr_cfg), rwr_sample(gt, rwr_cfg)
        betas = {"beta_s": np.zeros(gs.node_count), "beta_t": np.zeros(gt.node_count)}

    t = spec.initial_plan()
    for m in range(cfg.M):
        alpha = alpha_schedule(m, cfg.M)
        if cfg.wasserstein_only:
            cs = ct = None
            k_cross = embedding_kernel(zs, zt, cfg.kernel)
            unary = 1.0
        else:
            cs = fused_cost(g_s, zs, alpha, cfg.kernel)
            ct = fused_cost(g_t, zt, alpha, cfg.kernel)
            k_cross = embedding_kernel(zs, zt, cfg.kernel) if alpha > 0 else None
            unary = alpha
        t, log = proximal_solve(cs, ct, k_cross, unary, spec, cfg.solver, t_init=t, log=True)
        solver_trace.extend((m, *row) for row in log["trace"])

        # the embeddings are next read at the following round's weight; at
        # alpha = 0 the update would have no cross-graph term at all
        embed_alpha = (m + 1) / cfg.M
        prob = EmbeddingProblem(g_s, g_t, spec, t, embed_alpha, cfg.alpha1, cfg.kernel, g_st, st_mask)
        embed_seed = stream_seed(cfg.seed, "embed", m)
        opt = EmbedOptConfig(cfg.alpha1, cfg.embed.lr, cfg.embed.epochs, embed_seed, cfg.embed.d,
                             cfg.embed.beta1, cfg.embed.beta2, cfg.embed.eps)
        if hetero:
            hprob = HeteroProblem(prob, gs.node_types, gt.node_types, ns_s.positive_pairs(),
                                  ns_t.positive_pairs(), np.empty((0, 2), int), np.empty((0, 2), int), cfg.zeta)
            params, info = optimize_hetero({"zs": zs, "zt": zt, **betas}, hprob, ns_s, ns_t,
                                           cfg.neg_per_node, opt, neg_seed=stream_seed(cfg.seed, "negatives", m))
            zs, zt = params["zs"], params["zt"]
            betas = {"beta_s": params["beta_s"], "beta_t": params["beta_t"]}
        else:
            zs, zt, info = optimize_embeddings(zs, zt, prob, opt)
        trace.append({"round": m, "alpha": alpha, "embed_alpha": embed_alpha, "ot_objective": log["objective"][-1],
                      "embed_initial": info["initial"], "embed_final": info["final"]})
        if checkpoint_dir is not None:
            _store_embeddings(checkpoint_dir, m, zs, zt, cfg.seed)

    corr = extract_correspondences(extend_plan(row_normalized_plan(t, mu_s)))
    extras = {"betas": betas} if hetero else {}
    return MatchResult(corr, t, zs, zt, trace, solver_trace, extras)
