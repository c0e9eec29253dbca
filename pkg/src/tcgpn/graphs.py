"""Correlation graphs over time-series nodes: industry and distance graph
construction, edge masking with row renormalization, and a text file format.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass
class CorrelationGraph:
    """Weighted adjacency over N nodes. Self-weights are stored as zero;
    self-loops are added only inside the graph attention layer."""

    n_nodes: int
    weights: np.ndarray  # (N, N), non-negative, zero diagonal
    directed: bool
    node_ids: list[str]

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (self.n_nodes, self.n_nodes):
            raise ValueError(f"weights shape {self.weights.shape} != ({self.n_nodes}, {self.n_nodes})")
        if len(self.node_ids) != self.n_nodes:
            raise ValueError("node_ids length mismatch")
        if len(set(self.node_ids)) != self.n_nodes:
            raise ValueError("duplicate node_ids")
        if np.any(np.diag(self.weights) != 0):
            raise ValueError("self-weights must be zero")
        if np.any(self.weights < 0):
            raise ValueError("edge weights must be non-negative")

    def nnz(self) -> int:
        return int(np.count_nonzero(self.weights))

    def subgraph(self, indices: Sequence[int]) -> "CorrelationGraph":
        idx = np.asarray(indices)
        return CorrelationGraph(
            n_nodes=len(idx),
            weights=self.weights[np.ix_(idx, idx)].copy(),
            directed=self.directed,
            node_ids=[self.node_ids[i] for i in idx],
        )


@dataclass
class MaskedGraph:
    """A graph with some edges hidden from the model input.

    input_weights is the masked, row-normalized adjacency fed to the model;
    mask_kept is false exactly at the hidden entries, so reconstruction can
    be supervised on everything the model was allowed to see.
    """

    base: CorrelationGraph
    input_weights: np.ndarray  # (N, N), rows with support sum to 1
    mask_kept: np.ndarray  # (N, N) bool, False where masked
    mask_rate: float

    def connectivity(self) -> np.ndarray:
        """Boolean adjacency the attention layer may use (no self-loops)."""
        return self.input_weights != 0


def build_industry_graph(nodes: Sequence[tuple[str, str, float, float]]) -> CorrelationGraph:
    """Directed leadership graph from (node_id, industry, registered_capital,
    turnover) rows: within an industry, edge i->j weighs how much j leads i
    by capital and turnover ratios; across industries there is no edge."""
    ids = [n[0] for n in nodes]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate node_id in industry metadata")
    industries = [n[1] for n in nodes]
    cap = np.array([float(n[2]) for n in nodes])
    turn = np.array([float(n[3]) for n in nodes])
    if np.any(cap <= 0) or np.any(turn <= 0):
        raise ValueError("registered capital and turnover must be strictly positive")
    n = len(nodes)
    weights = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j and industries[i] == industries[j]:
                weights[i, j] = cap[j] / cap[i] + turn[j] / turn[i]
    return CorrelationGraph(n_nodes=n, weights=weights, directed=True, node_ids=list(ids))


def build_distance_graph(panel, k_neighbors: int) -> CorrelationGraph:
    """Symmetric graph weighted by Euclidean distance between whole node
    series, sparsified to the union of each node's k nearest neighbors."""
    feats = np.asarray(panel.features, dtype=np.float64)
    n = feats.shape[0]
    if n < 2:
        raise ValueError("distance graph needs at least 2 nodes")
    if not 0 < k_neighbors < n:
        raise ValueError(f"k_neighbors must be in [1, {n - 1}], got {k_neighbors}")
    flat = feats.reshape(n, -1)
    sq = np.sum(flat * flat, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (flat @ flat.T)
    np.clip(d2, 0.0, None, out=d2)
    dist = np.sqrt(d2)
    np.fill_diagonal(dist, 0.0)

    keep = np.zeros((n, n), dtype=bool)
    for i in range(n):
        order = np.argsort(dist[i], kind="stable")
        order = order[order != i]
        keep[i, order[:k_neighbors]] = True
    keep |= keep.T  # union over both endpoints preserves symmetry
    weights = np.where(keep, dist, 0.0)
    np.fill_diagonal(weights, 0.0)
    return CorrelationGraph(n_nodes=n, weights=weights, directed=False,
                            node_ids=list(panel.node_ids))


def mask_and_normalize(graph: CorrelationGraph, r_g: float, seed: int,
                       mask_mode: str = "edge") -> MaskedGraph:
    """Hide a fraction r_g of the graph from the model input and row-normalize
    the survivors. mask_mode "edge" hides individual nonzero entries;
    "node" hides whole rows."""
    if not 0.0 <= r_g < 1.0:
        raise ValueError(f"r_g must be in [0, 1), got {r_g}")
    rng = np.random.default_rng(seed)
    n = graph.n_nodes
    if mask_mode == "edge":
        rows, cols = np.nonzero(graph.weights)
        n_mask = int(np.floor(r_g * len(rows)))
        chosen = rng.choice(len(rows), size=n_mask, replace=False) if n_mask else np.array([], dtype=int)
        masked = (rows[chosen], cols[chosen])
    elif mask_mode == "node":
        n_mask = int(np.floor(r_g * n))
        picked = rng.choice(n, size=n_mask, replace=False) if n_mask else np.array([], dtype=int)
        row_idx = np.repeat(picked, n)
        col_idx = np.tile(np.arange(n), len(picked))
        masked = (row_idx, col_idx)
    else:
        raise ValueError(f"unknown mask_mode: {mask_mode}")
    return _apply_mask(graph, masked, r_g)


def _apply_mask(graph: CorrelationGraph, masked_idx: tuple[np.ndarray, np.ndarray],
                r_g: float) -> MaskedGraph:
    """Zero the given entries in a copy of the adjacency, then normalize each
    surviving row to sum 1. Split out so property tests can replay an exact
    edge set (e.g. under node permutation)."""
    input_weights = graph.weights.copy()
    mask_kept = np.ones_like(input_weights, dtype=bool)
    input_weights[masked_idx] = 0.0
    mask_kept[masked_idx] = False
    row_sums = input_weights.sum(axis=1, keepdims=True)
    np.divide(input_weights, row_sums, out=input_weights, where=row_sums > 0)
    return MaskedGraph(base=graph, input_weights=input_weights, mask_kept=mask_kept, mask_rate=r_g)


# file format ----------------------------------------------------------------


def save_graph(path: str | Path, graph: CorrelationGraph) -> None:
    """Write `tcgpn-graph v1` text format: a header line then one
    `src_id,dst_id,weight` line per stored edge (undirected graphs store
    each edge once, with src index < dst index)."""
    lines = [f"tcgpn-graph v1 directed={int(graph.directed)} n={graph.n_nodes}"]
    rows, cols = np.nonzero(graph.weights)
    for i, j in zip(rows, cols):
        if not graph.directed and i > j:
            continue
        lines.append(f"{graph.node_ids[i]},{graph.node_ids[j]},{float(graph.weights[i, j])!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_graph(path: str | Path, node_ids: Sequence[str]) -> CorrelationGraph:
    """Read the text format, resolving and validating ids against the given
    node universe (typically the panel's)."""
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if not text:
        raise ValueError(f"{path}: empty graph file")
    header = text[0].split()
    if len(header) != 4 or header[0] != "tcgpn-graph" or header[1] != "v1":
        raise ValueError(f"{path}: bad header {text[0]!r}")
    directed = bool(int(header[2].split("=")[1]))
    n = int(header[3].split("=")[1])
    if n != len(node_ids):
        raise ValueError(f"{path}: header n={n} but panel has {len(node_ids)} nodes")
    index = {nid: k for k, nid in enumerate(node_ids)}
    weights = np.zeros((n, n))
    for lineno, line in enumerate(text[1:], start=2):
        parts = line.split(",")
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected src,dst,weight")
        src, dst, w = parts
        if src not in index or dst not in index:
            raise ValueError(f"{path}:{lineno}: unknown node id {src!r} or {dst!r}")
        value = float(w)
        if not np.isfinite(value) or value < 0:
            raise ValueError(f"{path}:{lineno}: bad weight {w!r}")
        weights[index[src], index[dst]] = value
        if not directed:
            weights[index[dst], index[src]] = value
    return CorrelationGraph(n_nodes=n, weights=weights, directed=directed, node_ids=list(node_ids))
