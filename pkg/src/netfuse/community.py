"""Weighted modularity and randomized modularity-maximizing community
detection (local moving, refinement of badly-connected communities,
aggregation), with best-of-k selection over independent runs.

Runs differ only in their node-processing orders, derived from a seeded
generator; given (graph, runs, seed) the result is deterministic. Within
a run, modularity never decreases from one pass to the next.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .graphs import WeightedGraph, active_nodes

_GAIN_TOL = 1e-12


@dataclass(frozen=True)
class Partition:
    """Community assignment over the active nodes of one graph.

    Community ids are dense 0..K-1; sizes are derived member counts.
    """

    assignment: dict[int, int]
    sizes: dict[int, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.assignment:
            raise ValidationError("partition must assign at least one node")
        sizes: dict[int, int] = {}
        for c in self.assignment.values():
            sizes[c] = sizes.get(c, 0) + 1
        if sorted(sizes) != list(range(len(sizes))):
            raise ValidationError("community ids must be dense 0..K-1")
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def from_assignment(cls, mapping: dict[int, int]) -> "Partition":
        """Build a partition, renumbering ids densely by node order."""
        relabel: dict[int, int] = {}
        assignment: dict[int, int] = {}
        for node in sorted(mapping):
            c = mapping[node]
            if c not in relabel:
                relabel[c] = len(relabel)
            assignment[node] = relabel[c]
        return cls(assignment)

    @property
    def K(self) -> int:
        return len(self.sizes)

    @property
    def n(self) -> int:
        return len(self.assignment)

    def members(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.K)]
        for node in sorted(self.assignment):
            out[self.assignment[node]].append(node)
        return out


@dataclass(frozen=True)
class PartitionSeries:
    """Per-time-step partitions of the active nodes."""

    entries: tuple[tuple[object, Partition], ...]

    def __len__(self) -> int:
        return len(self.entries)


def modularity(graph: WeightedGraph, part: Partition, resolution: float = 1.0) -> float:
    """Weighted Newman modularity of a partition of the active nodes."""
    active = active_nodes(graph)
    if set(part.assignment) != active:
        raise ValidationError("partition must cover exactly the active nodes")
    m2 = 0.0
    strength: dict[int, float] = {i: 0.0 for i in active}
    for i, j, w in graph.edges():
        strength[i] += w
        strength[j] += w
        m2 += 2.0 * w
    if m2 <= 0:
        raise ValidationError("modularity is undefined for an edgeless graph")
    in2 = [0.0] * part.K
    tot = [0.0] * part.K
    for i, j, w in graph.edges():
        if part.assignment[i] == part.assignment[j]:
            in2[part.assignment[i]] += 2.0 * w
    for i in active:
        tot[part.assignment[i]] += strength[i]
    return sum(
        in2[c] / m2 - resolution * (tot[c] / m2) ** 2 for c in range(part.K)
    )


class _Level:
    """One aggregation level: adjacency without self-loops, per-node
    internal (loop) weight, and node strengths including loops."""

    __slots__ = ("adj", "loop", "k", "m2", "orig")

    def __init__(self, adj, loop, k, m2, orig):
        self.adj = adj      # list[dict[int, float]]
        self.loop = loop    # list[float], once-counted internal weight
        self.k = k          # list[float], strength = sum(adj) + 2*loop
        self.m2 = m2        # twice the total weight, constant across levels
        self.orig = orig    # list[list[int]], original nodes per level node

    @property
    def n(self) -> int:
        return len(self.adj)


def _level_from_graph(graph: WeightedGraph, nodes: list[int]) -> _Level:
    index = {node: i for i, node in enumerate(nodes)}
    adj: list[dict[int, float]] = [{} for _ in nodes]
    k = [0.0] * len(nodes)
    m2 = 0.0
    for u, v, w in graph.edges():
        i, j = index[u], index[v]
        adj[i][j] = adj[i].get(j, 0.0) + w
        adj[j][i] = adj[j].get(i, 0.0) + w
        k[i] += w
        k[j] += w
        m2 += 2.0 * w
    return _Level(adj, [0.0] * len(nodes), k, m2, [[node] for node in nodes])


def _level_quality(level: _Level, comm: list[int], resolution: float) -> float:
    in2: dict[int, float] = {}
    tot: dict[int, float] = {}
    for i in range(level.n):
        c = comm[i]
        tot[c] = tot.get(c, 0.0) + level.k[i]
        in2[c] = in2.get(c, 0.0) + 2.0 * level.loop[i]
        for j, w in level.adj[i].items():
            if j > i and comm[j] == c:
                in2[c] = in2.get(c, 0.0) + 2.0 * w
    m2 = level.m2
    return sum(in2[c] / m2 - resolution * (tot[c] / m2) ** 2 for c in tot)


def _local_move(level: _Level, comm: list[int], rng, resolution: float) -> bool:
    """Greedy node moves to the best-gain neighboring community, with a
    revisit queue; returns whether anything moved."""
    tot: dict[int, float] = {}
    for i in range(level.n):
        tot[comm[i]] = tot.get(comm[i], 0.0) + level.k[i]
    next_label = max(tot) + 1 if tot else 0
    queue = [int(i) for i in rng.permutation(level.n)]
    in_queue = [True] * level.n
    moved_any = False
    head = 0
    while head < len(queue):
        i = queue[head]
        head += 1
        in_queue[i] = False
        old = comm[i]
        tot[old] -= level.k[i]
        link: dict[int, float] = {}
        for j, w in level.adj[i].items():
            c = comm[j]
            link[c] = link.get(c, 0.0) + w
        # scaled gain: k_{i,c} - resolution * k_i * tot_c / m2
        factor = resolution * level.k[i] / level.m2
        best_c = old
        best_gain = link.get(old, 0.0) - factor * tot[old]
        for c in sorted(link):
            if c == old:
                continue
            gain = link[c] - factor * tot[c]
            if gain > best_gain + _GAIN_TOL:
                best_c = c
                best_gain = gain
        if 0.0 > best_gain + _GAIN_TOL:
            # better off alone in a fresh community
            best_c = next_label
            next_label += 1
            best_gain = 0.0
        tot[best_c] = tot.get(best_c, 0.0) + level.k[i]
        comm[i] = best_c
        if best_c != old:
            moved_any = True
            for j in level.adj[i]:
                if not in_queue[j] and comm[j] != best_c:
                    queue.append(j)
                    in_queue[j] = True
    return moved_any


def _refine(level: _Level, comm: list[int], rng, resolution: float) -> list[int]:
    """Split each community into well-connected subclusters.

    Starting from singletons, each still-singleton node may merge into a
    positive-gain subcluster inside its own community; badly-connected
    communities therefore fall apart before aggregation.
    """
    refined = list(range(level.n))
    rtot = list(level.k)
    rsize = [1] * level.n
    for i in (int(x) for x in rng.permutation(level.n)):
        if rsize[refined[i]] > 1:
            continue
        link: dict[int, float] = {}
        for j, w in level.adj[i].items():
            if comm[j] == comm[i] and refined[j] != refined[i]:
                link[refined[j]] = link.get(refined[j], 0.0) + w
        if not link:
            continue
        factor = resolution * level.k[i] / level.m2
        best_r = None
        best_gain = 0.0
        for r in sorted(link):
            gain = link[r] - factor * rtot[r]
            if gain > best_gain + _GAIN_TOL:
                best_r = r
                best_gain = gain
        if best_r is not None:
            old = refined[i]
            rtot[best_r] += level.k[i]
            rtot[old] -= level.k[i]
            rsize[best_r] += rsize[old]
            rsize[old] = 0
            refined[i] = best_r
    return refined


def _aggregate(level: _Level, refined: list[int], comm: list[int]):
    """Collapse refined clusters into supernodes; each supernode starts
    in the community its members share."""
    relabel: dict[int, int] = {}
    for i in range(level.n):
        if refined[i] not in relabel:
            relabel[refined[i]] = len(relabel)
    n_new = len(relabel)
    adj: list[dict[int, float]] = [{} for _ in range(n_new)]
    loop = [0.0] * n_new
    k = [0.0] * n_new
    orig: list[list[int]] = [[] for _ in range(n_new)]
    comm_new = [0] * n_new
    for i in range(level.n):
        ci = relabel[refined[i]]
        loop[ci] += level.loop[i]
        k[ci] += level.k[i]
        orig[ci].extend(level.orig[i])
        comm_new[ci] = comm[i]
        for j, w in level.adj[i].items():
            if j > i:
                cj = relabel[refined[j]]
                if ci == cj:
                    loop[ci] += w
                else:
                    adj[ci][cj] = adj[ci].get(cj, 0.0) + w
                    adj[cj][ci] = adj[cj].get(ci, 0.0) + w
    return _Level(adj, loop, k, level.m2, orig), comm_new


def _detect_once(graph: WeightedGraph, nodes: list[int], rng, resolution: float):
    level = _level_from_graph(graph, nodes)
    comm = list(range(level.n))
    q_prev = -np.inf
    while True:
        moved = _local_move(level, comm, rng, resolution)
        q_now = _level_quality(level, comm, resolution)
        if q_now < q_prev - 1e-9:
            raise AssertionError("modularity decreased across passes")
        q_prev = q_now
        refined = _refine(level, comm, rng, resolution)
        n_clusters = len(set(refined))
        if not moved and n_clusters == level.n:
            break
        level, comm = _aggregate(level, refined, comm)
    assignment: dict[int, int] = {}
    for i in range(level.n):
        for node in level.orig[i]:
            assignment[node] = comm[i]
    return Partition.from_assignment(assignment), q_prev


def detect(
    graph: WeightedGraph,
    runs: int = 100,
    seed: int = 0,
    resolution: float = 1.0,
) -> Partition:
    """Best-of-`runs` randomized detection; ties keep the earliest run."""
    if runs < 1:
        raise ValidationError("need at least one detection run")
    nodes = sorted(active_nodes(graph))
    if not nodes or graph.edge_count() == 0:
        raise ValidationError("community detection needs at least one edge")
    best_part = None
    best_q = -np.inf
    for r in range(runs):
        rng = np.random.default_rng([seed, r])
        part, q = _detect_once(graph, nodes, rng, resolution)
        if q > best_q:
            best_q = q
            best_part = part
    return best_part
