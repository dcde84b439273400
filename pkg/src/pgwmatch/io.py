"""File formats: graph JSON, ground truth, correspondences, traces,
embedding checkpoints and plain matrices."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from pgwmatch.errors import ValidationError
from pgwmatch.graph import Graph

DUMMY = "DUMMY"
TRACE_COLUMNS = ("round", "outer_iter", "inner_iter", "objective", "residual_c1", "residual_c2", "residual_c3")


def graph_to_dict(g: Graph) -> dict:
    nodes = []
    for u in range(g.node_count):
        node = {"id": u}
        if g.is_typed:
            node["type"] = g.type_names[int(g.node_types[u])]
        if g.features is not None:
            node["features"] = [float(x) for x in g.features[u]]
        nodes.append(node)
    rows, cols = np.nonzero(np.triu(g.weights, k=1))
    edges = [{"src": int(i), "dst": int(j), "weight": float(g.weights[i, j])} for i, j in zip(rows, cols)]
    doc = {"nodes": nodes, "edges": edges}
    if g.is_typed:
        doc = {"types": list(g.type_names), **doc}
    return doc


def graph_from_dict(doc: dict) -> Graph:
    """Build a graph from the JSON document layout.

    Undirected edges are mirrored; an edge listed in both directions must
    carry the same weight. A typed document declares its vocabulary under
    ``types`` and every node then needs a ``type``.
    """
    try:
        nodes = doc["nodes"]
        edges = doc["edges"]
    except (KeyError, TypeError) as exc:
        raise ValidationError("graph document needs 'nodes' and 'edges'") from exc
    n = len(nodes)
    ids = sorted(int(node["id"]) for node in nodes)
    if ids != list(range(n)):
        raise ValidationError("node ids must be 0-based contiguous integers")
    by_id = {int(node["id"]): node for node in nodes}

    w = np.zeros((n, n))
    for e in edges:
        i, j, wt = int(e["src"]), int(e["dst"]), float(e["weight"])
        if not (0 <= i < n and 0 <= j < n):
            raise ValidationError(f"edge ({i}, {j}) references an unknown node")
        if i == j:
            raise ValidationError(f"self-loop on node {i}")
        for a, b in ((i, j), (j, i)):
            if w[a, b] != 0 and w[a, b] != wt:
                raise ValidationError(f"edge ({i}, {j}) listed twice with different weights")
            w[a, b] = wt

    features = None
    has_feat = ["features" in by_id[u] for u in range(n)]
    if any(has_feat):
        if not all(has_feat):
            raise ValidationError("either every node or no node must carry features")
        features = np.array([by_id[u]["features"] for u in range(n)], dtype=float)

    vocab = doc.get("types")
    if vocab is None:
        if any("type" in by_id[u] for u in range(n)):
            raise ValidationError("node types used without a 'types' header")
        return Graph(w, features)
    vocab = tuple(str(t) for t in vocab)
    index = {name: k for k, name in enumerate(vocab)}
    codes = np.empty(n, dtype=int)
    for u in range(n):
        name = by_id[u].get("type")
        if name not in index:
            raise ValidationError(f"node {u} has type {name!r} outside the declared vocabulary")
        codes[u] = index[name]
    return Graph(w, features, codes, vocab)


def write_graph(path, g: Graph) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(g), indent=1) + "\n")


def read_graph(path) -> Graph:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    return graph_from_dict(doc)


def write_ground_truth(path, pairs: Iterable[Sequence[int]]) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["source_id", "target_id"])
        out.writerows((int(i), int(j)) for i, j in pairs)


def read_ground_truth(path) -> list:
    with open(path, newline="") as fh:
        return [(int(r["source_id"]), int(r["target_id"])) for r in csv.DictReader(fh)]


def write_correspondence(path, corr) -> None:
    """One row per source node; unmatched sources point at ``DUMMY``."""
    rows = [(s, t, sc) for s, t, sc in corr.pairs] + [(s, DUMMY, sc) for s, sc in corr.unmatched]
    rows.sort(key=lambda r: r[0])
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["source_id", "target_id", "score"])
        for s, t, sc in rows:
            out.writerow([s, t, repr(float(sc))])


def read_correspondence(path) -> list:
    """``(source_id, target_id or None, score)`` rows."""
    out = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            t = None if r["target_id"] == DUMMY else int(r["target_id"])
            out.append((int(r["source_id"]), t, float(r["score"])))
    return out


def write_trace(path, rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(TRACE_COLUMNS)
        for r in rows:
            out.writerow([int(r[0]), int(r[1]), int(r[2])] + [repr(float(x)) for x in r[3:]])


def write_embedding_checkpoint(path, z, seed: int, round_index: int) -> None:
    z = np.asarray(z, dtype=float)
    doc = {
        "node_count": int(z.shape[0]),
        "d": int(z.shape[1]),
        "seed": int(seed),
        "round": int(round_index),
        "rows": z.tolist(),
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def read_embedding_checkpoint(path) -> tuple[np.ndarray, dict]:
    doc = json.loads(Path(path).read_text())
    z = np.array(doc["rows"], dtype=float).reshape(doc["node_count"], doc["d"])
    return z, {k: doc[k] for k in ("node_count", "d", "seed", "round")}


def write_matrix(path, a) -> None:
    np.savetxt(path, np.asarray(a, dtype=float), delimiter=",", fmt="%.17g")


def read_matrix(path) -> np.ndarray:
    try:
        a = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ValidationError(f"{path}: not a numeric CSV matrix ({exc})") from exc
    return a
