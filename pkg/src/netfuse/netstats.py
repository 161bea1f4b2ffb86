"""Per-graph summary statistics averaged over active nodes: weighted
degree, local clustering (weighted and binary variants), and closeness
centrality on inverse-weight distances.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass

from .errors import ValidationError
from .graphs import WeightedGraph, active_nodes


@dataclass(frozen=True)
class NetworkStats:
    avg_weighted_degree: float
    avg_local_clustering: float
    avg_local_clustering_binary: float
    avg_closeness: float
    n_active: int


def _local_clustering(adj: dict[int, dict[int, float]], max_w: float):
    """Weighted (geometric-mean triangle intensity, weights scaled by the
    maximum) and binary local clustering per node."""
    weighted = {}
    binary = {}
    for i, nbrs in adj.items():
        k = len(nbrs)
        if k < 2:
            weighted[i] = 0.0
            binary[i] = 0.0
            continue
        nodes = sorted(nbrs)
        w_sum = 0.0
        tri = 0
        for a_idx in range(len(nodes)):
            for b_idx in range(a_idx + 1, len(nodes)):
                a, b = nodes[a_idx], nodes[b_idx]
                w_ab = adj[a].get(b)
                if w_ab is None:
                    continue
                tri += 1
                w_sum += (
                    (nbrs[a] / max_w) * (nbrs[b] / max_w) * (w_ab / max_w)
                ) ** (1.0 / 3.0)
        denom = k * (k - 1) / 2.0
        weighted[i] = w_sum / denom
        binary[i] = tri / denom
    return weighted, binary


def _dijkstra(adj: dict[int, dict[int, float]], source: int) -> dict[int, float]:
    dist = {source: 0.0}
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist.get(u, float("inf")):
            continue
        for v, w in adj[u].items():
            nd = d + 1.0 / w
            if nd < dist.get(v, float("inf")):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def network_stats(graph: WeightedGraph) -> NetworkStats:
    """Averages over the active nodes; disconnected closeness is scaled
    by (reachable - 1) / (n - 1)."""
    active = sorted(active_nodes(graph))
    if not active:
        raise ValidationError("statistics are undefined for an edgeless graph")
    adj = graph.adjacency_lists()
    n = len(active)
    max_w = max(w for nbrs in adj.values() for w in nbrs.values())
    degrees = {i: sum(adj[i].values()) for i in active}
    weighted_c, binary_c = _local_clustering(adj, max_w)
    closeness = {}
    for i in active:
        dist = _dijkstra(adj, i)
        reach = len(dist)
        total = sum(dist.values())
        if reach < 2 or total <= 0:
            closeness[i] = 0.0
        else:
            base = (reach - 1) / total
            closeness[i] = base * ((reach - 1) / (n - 1)) if n > 1 else base
    return NetworkStats(
        avg_weighted_degree=sum(degrees.values()) / n,
        avg_local_clustering=sum(weighted_c.values()) / n,
        avg_local_clustering_binary=sum(binary_c.values()) / n,
        avg_closeness=sum(closeness.values()) / n,
        n_active=n,
    )
