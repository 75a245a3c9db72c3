"""Louvain community detection, pairwise label F1, and block densities.

The Louvain pass is the standard two-phase greedy modularity scheme on an
undirected weighted graph: nodes move to the neighboring community with the
best gain (visiting order drawn from the seed), then communities collapse
into super-nodes and the process repeats while modularity improves.
Directed graphs are symmetrized before detection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .graph import InferredGraph


@dataclass(frozen=True)
class CommunityResult:
    labels: np.ndarray  # dense ints 0..G-1
    modularity: float
    level_modularity: tuple[float, ...]  # after each aggregation level

    @property
    def n_communities(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0


def _build_adj(n: int, edges: Iterable[tuple]) -> list[dict[int, float]]:
    adj: list[dict[int, float]] = [dict() for _ in range(n)]
    for edge in edges:
        u, v = int(edge[0]), int(edge[1])
        w = float(edge[2]) if len(edge) > 2 else 1.0
        if u == v:
            adj[u][u] = adj[u].get(u, 0.0) + w
        else:
            adj[u][v] = adj[u].get(v, 0.0) + w
            adj[v][u] = adj[v].get(u, 0.0) + w
    return adj


def _degrees(adj: list[dict[int, float]]) -> np.ndarray:
    k = np.zeros(len(adj))
    for i, nbrs in enumerate(adj):
        for j, w in nbrs.items():
            k[i] += 2.0 * w if j == i else w
    return k


def modularity(n: int, edges: Iterable[tuple], labels: Sequence[int]) -> float:
    """Newman modularity of a labeling on an undirected weighted graph."""
    adj = _build_adj(n, edges)
    return _modularity_adj(adj, np.asarray(labels))


def _modularity_adj(adj: list[dict[int, float]], labels: np.ndarray) -> float:
    k = _degrees(adj)
    two_m = float(k.sum())
    if two_m == 0.0:
        return 0.0
    q = 0.0
    tot: dict[int, float] = {}
    inside: dict[int, float] = {}
    for i, nbrs in enumerate(adj):
        c = int(labels[i])
        tot[c] = tot.get(c, 0.0) + k[i]
        for j, w in nbrs.items():
            if labels[j] == c:
                inside[c] = inside.get(c, 0.0) + (2.0 * w if j == i else w)
    for c, t in tot.items():
        q += inside.get(c, 0.0) / two_m - (t / two_m) ** 2
    return q


def _one_level(adj: list[dict[int, float]], k: np.ndarray, two_m: float,
               rng: np.random.Generator) -> tuple[np.ndarray, bool]:
    n = len(adj)
    labels = np.arange(n)
    comm_tot = {i: float(k[i]) for i in range(n)}
    improved = False
    moved = True
    while moved:
        moved = False
        for node in rng.permutation(n):
            node = int(node)
            c_old = int(labels[node])
            link: dict[int, float] = {}
            for nb, w in adj[node].items():
                if nb != node:
                    link[int(labels[nb])] = link.get(int(labels[nb]), 0.0) + w
            comm_tot[c_old] -= k[node]
            best_c, best_gain = c_old, link.get(c_old, 0.0) - comm_tot[c_old] * k[node] / two_m
            for c in sorted(link):
                gain = link[c] - comm_tot[c] * k[node] / two_m
                if gain > best_gain + 1e-12 or (
                    abs(gain - best_gain) <= 1e-12 and c < best_c
                ):
                    best_c, best_gain = c, gain
            comm_tot[best_c] = comm_tot.get(best_c, 0.0) + k[node]
            labels[node] = best_c
            if best_c != c_old:
                moved = True
                improved = True
    return labels, improved


def _aggregate(adj: list[dict[int, float]],
               labels: np.ndarray) -> tuple[list[dict[int, float]], np.ndarray]:
    comms = sorted(set(int(c) for c in labels))
    remap = {c: i for i, c in enumerate(comms)}
    new_labels = np.array([remap[int(c)] for c in labels])
    new_adj: list[dict[int, float]] = [dict() for _ in comms]
    for i, nbrs in enumerate(adj):
        ci = int(new_labels[i])
        for j, w in nbrs.items():
            cj = int(new_labels[j])
            if i == j:
                new_adj[ci][ci] = new_adj[ci].get(ci, 0.0) + w
            elif ci == cj:
                # each undirected edge is stored twice; keep self-loop weight single
                new_adj[ci][ci] = new_adj[ci].get(ci, 0.0) + w / 2.0
            else:
                new_adj[ci][cj] = new_adj[ci].get(cj, 0.0) + w
    return new_adj, new_labels


def louvain(n_nodes: int, edges: Iterable[tuple], seed: int = 0) -> CommunityResult:
    """Two-phase Louvain on an undirected weighted edge list.

    Deterministic for a fixed seed.  Nodes of an empty graph each form
    their own community.
    """
    if n_nodes < 1:
        raise ValueError("graph needs at least one node")
    edges = list(edges)
    adj = _build_adj(n_nodes, edges)
    k = _degrees(adj)
    two_m = float(k.sum())
    if two_m == 0.0:
        return CommunityResult(np.arange(n_nodes), 0.0, ())

    rng = np.random.default_rng(seed)
    assignment = np.arange(n_nodes)
    level_adj = adj
    history: list[float] = []
    best_q = _modularity_adj(adj, assignment)
    while True:
        labels, improved = _one_level(level_adj, _degrees(level_adj), two_m, rng)
        if not improved:
            break
        level_adj, compact = _aggregate(level_adj, labels)
        assignment = compact[assignment]
        q_now = _modularity_adj(adj, assignment)
        history.append(q_now)
        if q_now <= best_q + 1e-12:
            break
        best_q = q_now

    # canonical dense labels ordered by first appearance
    remap: dict[int, int] = {}
    final = np.empty(n_nodes, dtype=np.int64)
    for i in range(n_nodes):
        c = int(assignment[i])
        if c not in remap:
            remap[c] = len(remap)
        final[i] = remap[c]
    return CommunityResult(final, _modularity_adj(adj, final), tuple(history))


def louvain_graph(graph: InferredGraph, seed: int = 0) -> CommunityResult:
    """Louvain on the symmetrized projection of a directed graph."""
    return louvain(graph.n_users, graph.symmetrized_edges(), seed=seed)


def pairwise_f1(labels_pred: Sequence[int], labels_true: Sequence[int]) -> float:
    """F1 of the 'same community' relation over all unordered user pairs."""
    pred = np.asarray(labels_pred)
    true = np.asarray(labels_true)
    if pred.shape != true.shape:
        raise ValueError("labelings cover different user sets")

    def same_pairs(lab: np.ndarray) -> int:
        _, counts = np.unique(lab, return_counts=True)
        return int((counts * (counts - 1)).sum()) // 2

    joint = pred.astype(np.int64) * (int(true.max()) + 1 if len(true) else 1) + true
    tp = same_pairs(joint)
    pos_pred = same_pairs(pred)
    pos_true = same_pairs(true)
    if tp == 0:
        return 0.0
    precision = tp / pos_pred
    recall = tp / pos_true
    return 2.0 * precision * recall / (precision + recall)


def estimate_block_densities(
    graph: InferredGraph, labels: Sequence[int]
) -> tuple[float | None, float | None]:
    """Directed edge density inside and across communities.

    Returns ``None`` for a side with no ordered pairs (single community has
    no cross pairs, all-singleton labelings no intra pairs).
    """
    lab = np.asarray(labels)
    if len(lab) != graph.n_users:
        raise ValueError("labels must cover every graph node")
    n = graph.n_users
    _, counts = np.unique(lab, return_counts=True)
    intra_pairs = int((counts * (counts - 1)).sum())
    inter_pairs = n * (n - 1) - intra_pairs
    intra_edges = sum(1 for i, j in graph.edges if lab[i] == lab[j])
    inter_edges = graph.n_edges - intra_edges
    p_hat = intra_edges / intra_pairs if intra_pairs else None
    q_hat = inter_edges / inter_pairs if inter_pairs else None
    return p_hat, q_hat
