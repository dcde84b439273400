"""Graph representation, node measures, dissimilarities and kernels."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from pgwmatch.errors import ValidationError


@dataclass(frozen=True)
class Graph:
    """Undirected weighted graph, optionally attributed and typed.

    Parameters
    ----------
    weights : ndarray, shape (n, n)
        Symmetric nonnegative weight matrix with zero diagonal. A zero entry
        means "no edge".
    features : ndarray, shape (n, D), optional
        Node feature vectors.
    node_types : ndarray of int, shape (n,), optional
        Integer type code per node, indexing into ``type_names``.
    type_names : tuple of str
        Declared type vocabulary. Required when ``node_types`` is given.
    """

    weights: np.ndarray
    features: Optional[np.ndarray] = None
    node_types: Optional[np.ndarray] = None
    type_names: tuple = field(default_factory=tuple)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] < 1:
            raise ValidationError(f"weights must be a nonempty square matrix, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValidationError("weights must be finite and nonnegative")
        if not np.allclose(w, w.T, rtol=0, atol=1e-12):
            raise ValidationError("weights must be symmetric")
        if np.any(np.diag(w) != 0):
            raise ValidationError("weights must have a zero diagonal")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

        if self.features is not None:
            x = np.array(self.features, dtype=float)
            if x.ndim != 2 or x.shape[0] != w.shape[0]:
                raise ValidationError(f"features must have shape (n, D) with n={w.shape[0]}")
            if not np.all(np.isfinite(x)):
                raise ValidationError("features must be finite")
            x.setflags(write=False)
            object.__setattr__(self, "features", x)

        names = tuple(self.type_names)
        object.__setattr__(self, "type_names", names)
        if self.node_types is not None:
            r = np.array(self.node_types, dtype=int)
            if r.shape != (w.shape[0],):
                raise ValidationError("node_types must have one entry per node")
            if not names:
                raise ValidationError("node_types given without a declared type vocabulary")
            if np.any(r < 0) or np.any(r >= len(names)):
                raise ValidationError("node_types contain labels outside the declared type set")
            r.setflags(write=False)
            object.__setattr__(self, "node_types", r)

    @property
    def node_count(self) -> int:
        return self.weights.shape[0]

    @property
    def is_typed(self) -> bool:
        return self.node_types is not None

    def neighbors(self, u: int) -> np.ndarray:
        return np.flatnonzero(self.weights[u] > 0)


@dataclass(frozen=True)
class KernelConfig:
    """Bandwidth of the cosine kernel ``1 - exp(-delta * (1 - cos))``."""

    delta: float = 1.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValidationError(f"delta must be positive, got {self.delta}")


def build_measure(g: Graph) -> np.ndarray:
    """Node masses proportional to weighted degree.

    Isolated nodes get zero mass.
    """
    total = g.weights.sum()
    if total <= 0:
        raise ValidationError("degenerate graph: no edge mass")
    mu = g.weights.sum(axis=1) / total
    # renormalise to kill round-off in the sum
    return mu / mu.sum()


def structural_dissimilarity(g: Graph) -> np.ndarray:
    """Element-wise ``1 / (1 + w_ij)``; non-edges (and the diagonal) map to 1."""
    return 1.0 / (1.0 + g.weights)


def _unit_rows(z: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
    z = np.asarray(z, dtype=float)
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms == 0):
        bad = int(np.flatnonzero(norms == 0)[0])
        raise ValidationError(f"undefined cosine: row {bad} of {name} has zero norm")
    return z / norms[:, None], norms


def cosine_matrix(za: np.ndarray, zb: np.ndarray) -> np.ndarray:
    ua, _ = _unit_rows(za, "Za")
    ub, _ = _unit_rows(zb, "Zb")
    return np.clip(ua @ ub.T, -1.0, 1.0)


def embedding_kernel(za: np.ndarray, zb: np.ndarray, cfg: KernelConfig = KernelConfig()) -> np.ndarray:
    """Cosine-based dissimilarity ``K_ij = 1 - exp(-delta (1 - cos(za_i, zb_j)))``."""
    c = cosine_matrix(za, zb)
    return 1.0 - np.exp(-cfg.delta * (1.0 - c))


def embedding_kernel_vjp(za, zb, upstream, cfg: KernelConfig = KernelConfig()):
    """Pull ``upstream = dF/dK`` back to gradients w.r.t. ``za`` and ``zb``.

    ``dk/dcos = -delta * exp(-delta (1 - cos))`` and
    ``dcos(a, b)/da = (b_hat - cos * a_hat) / |a|``.
    """
    ua, na = _unit_rows(za, "Za")
    ub, nb = _unit_rows(zb, "Zb")
    c = np.clip(ua @ ub.T, -1.0, 1.0)
    p = upstream * (-cfg.delta * np.exp(-cfg.delta * (1.0 - c)))
    ga = (p @ ub - (p * c).sum(axis=1)[:, None] * ua) / na[:, None]
    gb = (p.T @ ua - (p * c).sum(axis=0)[:, None] * ub) / nb[:, None]
    return ga, gb


def feature_cosine_weights(x: np.ndarray, adjacency: Optional[np.ndarray] = None) -> np.ndarray:
    """Edge weights ``1/2 + cos(x_i, x_j)/2``, masked by ``adjacency`` when given.

    The diagonal is always zero.
    """
    c = cosine_matrix(x, x)
    w = 0.5 + 0.5 * c
    if adjacency is not None:
        w = np.where(np.asarray(adjacency) != 0, w, 0.0)
    np.fill_diagonal(w, 0.0)
    # exact symmetry for downstream validation
    return 0.5 * (w + w.T)


def type_codes(labels: Sequence[str], vocabulary: Sequence[str]) -> np.ndarray:
    index = {name: i for i, name in enumerate(vocabulary)}
    try:
        return np.array([index[label] for label in labels], dtype=int)
    except KeyError as exc:
        raise ValidationError(f"node type {exc.args[0]!r} not in declared types {list(vocabulary)}") from None
