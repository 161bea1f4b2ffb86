"""Core graph types: weighted graphs over a node registry, multiplex
snapshots/series, fusion weights, and the row-feature computations
(cosine similarity, normalized degrees) used by the structural losses.

All types are immutable after construction; the operations are pure
functions and safe to call concurrently.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class NodeRegistry:
    """Bijection between string node labels and dense integer ids."""

    labels: tuple[str, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        idx: dict[str, int] = {}
        for i, lab in enumerate(self.labels):
            if lab in idx:
                raise ValidationError(f"duplicate node label {lab!r}")
            idx[lab] = i
        object.__setattr__(self, "index", idx)

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "NodeRegistry":
        return cls(tuple(str(lab) for lab in labels))

    def __len__(self) -> int:
        return len(self.labels)

    def id_of(self, label: str) -> int:
        try:
            return self.index[label]
        except KeyError:
            raise ValidationError(f"unknown node label {label!r}") from None

    def label_of(self, i: int) -> str:
        return self.labels[i]


class WeightedGraph:
    """Undirected weighted graph with nonnegative weights and no self-loops.

    Edges are stored sparsely with canonical (i, j), i < j keys; only
    strictly positive weights are kept. Instances are immutable.
    """

    __slots__ = ("registry", "_edges")

    def __init__(self, registry: NodeRegistry, edges: Mapping[tuple[int, int], float]):
        n = len(registry)
        store: dict[tuple[int, int], float] = {}
        for (i, j), w in edges.items():
            if i == j:
                raise ValidationError(f"self-loop on node {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise ValidationError(f"edge ({i},{j}) outside registry of size {n}")
            w = float(w)
            if w < 0:
                raise ValidationError(f"negative weight {w} on edge ({i},{j})")
            if w == 0.0:
                continue
            key = (i, j) if i < j else (j, i)
            store[key] = store.get(key, 0.0) + w
        self.registry = registry
        self._edges = store

    @classmethod
    def empty(cls, registry: NodeRegistry) -> "WeightedGraph":
        return cls(registry, {})

    @classmethod
    def from_label_edges(
        cls, registry: NodeRegistry, triples: Iterable[tuple[str, str, float]]
    ) -> "WeightedGraph":
        acc: dict[tuple[int, int], float] = {}
        for u, v, w in triples:
            i, j = registry.id_of(u), registry.id_of(v)
            if i == j:
                raise ValidationError(f"self-loop on node {u!r}")
            key = (i, j) if i < j else (j, i)
            acc[key] = acc.get(key, 0.0) + float(w)
        return cls(registry, acc)

    @property
    def n(self) -> int:
        return len(self.registry)

    def edge_count(self) -> int:
        return len(self._edges)

    def total_weight(self) -> float:
        return float(sum(self._edges.values()))

    def weight(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        key = (i, j) if i < j else (j, i)
        return self._edges.get(key, 0.0)

    def edges(self) -> list[tuple[int, int, float]]:
        """Canonical (i < j) edges in sorted order."""
        return [(i, j, w) for (i, j), w in sorted(self._edges.items())]

    def edge_dict(self) -> dict[tuple[int, int], float]:
        return dict(self._edges)

    def adjacency_lists(self) -> dict[int, dict[int, float]]:
        adj: dict[int, dict[int, float]] = {}
        for (i, j), w in self._edges.items():
            adj.setdefault(i, {})[j] = w
            adj.setdefault(j, {})[i] = w
        return adj

    def dense(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for (i, j), w in self._edges.items():
            a[i, j] = w
            a[j, i] = w
        return a

    def submatrix(self, ids: Sequence[int]) -> np.ndarray:
        """Dense adjacency restricted to the given node ids (in that order)."""
        pos = {node: k for k, node in enumerate(ids)}
        a = np.zeros((len(ids), len(ids)))
        for (i, j), w in self._edges.items():
            ki = pos.get(i)
            kj = pos.get(j)
            if ki is not None and kj is not None:
                a[ki, kj] = w
                a[kj, ki] = w
        return a

    def scale(self, c: float) -> "WeightedGraph":
        return WeightedGraph(self.registry, {k: w * c for k, w in self._edges.items()})

    def binarize(self) -> "WeightedGraph":
        return WeightedGraph(self.registry, {k: 1.0 for k in self._edges})

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, WeightedGraph)
            and self.registry.labels == other.registry.labels
            and self._edges == other._edges
        )

    def __repr__(self) -> str:
        return f"WeightedGraph(n={self.n}, edges={self.edge_count()})"


@dataclass(frozen=True)
class MultiplexSnapshot:
    """One time step: H layers, each with a raw and an ancillary graph."""

    t: object
    raw: tuple[WeightedGraph, ...]
    add: tuple[WeightedGraph, ...]

    def __post_init__(self):
        if len(self.raw) < 1:
            raise ValidationError("snapshot needs at least one layer")
        if len(self.raw) != len(self.add):
            raise ValidationError("raw and add layer counts differ")
        reg = self.raw[0].registry
        for g in (*self.raw, *self.add):
            if g.registry is not reg and g.registry.labels != reg.labels:
                raise ValidationError("all layers must share one node registry")

    @property
    def H(self) -> int:
        return len(self.raw)

    @property
    def registry(self) -> NodeRegistry:
        return self.raw[0].registry


@dataclass(frozen=True)
class MultiplexSeries:
    """Ordered multiplex snapshots with strictly increasing time labels."""

    snapshots: tuple[MultiplexSnapshot, ...]

    def __post_init__(self):
        if len(self.snapshots) < 2:
            raise ValidationError("a series needs at least two time steps")
        H = self.snapshots[0].H
        reg = self.snapshots[0].registry
        prev = None
        for s in self.snapshots:
            if s.H != H:
                raise ValidationError("all snapshots must share the layer count")
            if s.registry.labels != reg.labels:
                raise ValidationError("all snapshots must share the node registry")
            if prev is not None and not s.t > prev:
                raise ValidationError("time labels must be strictly increasing")
            prev = s.t

    @property
    def T(self) -> int:
        return len(self.snapshots)

    @property
    def H(self) -> int:
        return self.snapshots[0].H

    @property
    def registry(self) -> NodeRegistry:
        return self.snapshots[0].registry


@dataclass(frozen=True)
class FusionWeights:
    """Layer-combination increments w_1..w_H (w_1 pinned to 1) plus the
    ancillary coupling w_add in [0, 1]. Cumulative weights are the
    partial sums of the increments."""

    w: tuple[float, ...]
    w_add: float

    def __post_init__(self):
        object.__setattr__(self, "w", tuple(float(x) for x in self.w))
        object.__setattr__(self, "w_add", float(self.w_add))
        if len(self.w) < 1:
            raise ValidationError("need at least one increment weight")
        if self.w[0] != 1.0:
            raise ValidationError("the first increment weight must be exactly 1")
        if any(x < 0 for x in self.w):
            raise ValidationError("increment weights must be nonnegative")
        if not 0.0 <= self.w_add <= 1.0:
            raise ValidationError("ancillary weight must lie in [0, 1]")

    @classmethod
    def unchecked(cls, w: Sequence[float], w_add: float) -> "FusionWeights":
        """Bypass validation (test-only; e.g. scaled weights with w_1 != 1)."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "w", tuple(float(x) for x in w))
        object.__setattr__(obj, "w_add", float(w_add))
        return obj

    @property
    def H(self) -> int:
        return len(self.w)

    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.w)


def fuse(snapshot: MultiplexSnapshot, weights: FusionWeights) -> WeightedGraph:
    """Combine a snapshot's layers into one weighted graph.

    Edge weight = sum over layers h of W_h * (raw_h + w_add * add_h),
    with W_h the cumulative increment weight. Linear in every layer.
    """
    if snapshot.H != weights.H:
        raise ValidationError(
            f"snapshot has {snapshot.H} layers but weights cover {weights.H}"
        )
    W = weights.cumulative()
    w_add = weights.w_add
    acc: dict[tuple[int, int], float] = {}
    for h in range(snapshot.H):
        for key, wt in snapshot.raw[h]._edges.items():
            acc[key] = acc.get(key, 0.0) + W[h] * wt
        if w_add != 0.0:
            for key, wt in snapshot.add[h]._edges.items():
                acc[key] = acc.get(key, 0.0) + W[h] * w_add * wt
    return WeightedGraph(snapshot.registry, acc)


def active_nodes(graph: WeightedGraph) -> set[int]:
    """Nodes with at least one incident positive-weight edge."""
    out: set[int] = set()
    for (i, j) in graph._edges:
        out.add(i)
        out.add(j)
    return out


def restrict(graph: WeightedGraph, ids: Sequence[int]) -> WeightedGraph:
    """Subgraph on the given node ids, re-registered over their labels."""
    sub_reg = NodeRegistry.from_labels(graph.registry.label_of(i) for i in ids)
    pos = {node: k for k, node in enumerate(ids)}
    edges: dict[tuple[int, int], float] = {}
    for (i, j), w in graph._edges.items():
        ki = pos.get(i)
        kj = pos.get(j)
        if ki is not None and kj is not None:
            key = (ki, kj) if ki < kj else (kj, ki)
            edges[key] = w
    return WeightedGraph(sub_reg, edges)


def coexist_restrict(
    g_t: WeightedGraph, g_next: WeightedGraph
) -> tuple[tuple[int, ...], WeightedGraph, WeightedGraph]:
    """Nodes active in both graphs, plus both graphs restricted to them.

    Returns (sorted ids in the shared registry, restriction of g_t,
    restriction of g_next). An empty intersection yields empty graphs.
    """
    if g_t.registry.labels != g_next.registry.labels:
        raise ValidationError("graphs must share a node registry")
    ids = tuple(sorted(active_nodes(g_t) & active_nodes(g_next)))
    return ids, restrict(g_t, ids), restrict(g_next, ids)


def cosine_similarity_matrix(adj: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarity of adjacency rows.

    Any row with zero norm gets similarity 0 against everything,
    including itself (diagonal included).
    """
    a = np.asarray(adj, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError("adjacency must be a square matrix")
    g = a @ a.T
    sq = np.diag(g).copy()
    inv = np.zeros_like(sq)
    pos = sq > 0
    inv[pos] = 1.0 / np.sqrt(sq[pos])
    return g * inv[:, None] * inv[None, :]


def normalized_degrees(adj: np.ndarray) -> np.ndarray:
    """Row sums divided by the total weight; all zeros when the total is 0."""
    a = np.asarray(adj, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError("adjacency must be a square matrix")
    rows = a.sum(axis=1)
    total = rows.sum()
    if total <= 0:
        return np.zeros_like(rows)
    return rows / total


# --- serialization ---------------------------------------------------------
#
# Multiplex series JSON:
# { "nodes": [labels...], "H": int,
#   "snapshots": [ { "t": label,
#                    "layers": [ { "h": int, "raw": [[u,v,w]...],
#                                  "add": [[u,v,w]...] } ... ] } ... ] }


def _edges_to_triples(graph: WeightedGraph) -> list[list]:
    reg = graph.registry
    return [[reg.label_of(i), reg.label_of(j), w] for i, j, w in graph.edges()]


def _graph_from_triples(registry: NodeRegistry, triples) -> WeightedGraph:
    return WeightedGraph.from_label_edges(
        registry, [(str(u), str(v), float(w)) for u, v, w in triples]
    )


def series_to_dict(series: MultiplexSeries) -> dict:
    return {
        "nodes": list(series.registry.labels),
        "H": series.H,
        "snapshots": [
            {
                "t": snap.t,
                "layers": [
                    {
                        "h": h + 1,
                        "raw": _edges_to_triples(snap.raw[h]),
                        "add": _edges_to_triples(snap.add[h]),
                    }
                    for h in range(snap.H)
                ],
            }
            for snap in series.snapshots
        ],
    }


def series_from_dict(data: dict) -> MultiplexSeries:
    try:
        registry = NodeRegistry.from_labels(data["nodes"])
        H = int(data["H"])
        snaps = []
        for snap in data["snapshots"]:
            layers = sorted(snap["layers"], key=lambda rec: int(rec["h"]))
            if [int(rec["h"]) for rec in layers] != list(range(1, H + 1)):
                raise ValidationError("layer indices must be 1..H")
            raw = tuple(_graph_from_triples(registry, rec["raw"]) for rec in layers)
            add = tuple(_graph_from_triples(registry, rec["add"]) for rec in layers)
            snaps.append(MultiplexSnapshot(t=snap["t"], raw=raw, add=add))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed series document: {exc}") from exc
    return MultiplexSeries(tuple(snaps))


def save_series(series: MultiplexSeries, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(series_to_dict(series), fh, separators=(",", ":"))
        fh.write("\n")


def load_series(path) -> MultiplexSeries:
    with open(path, "r", encoding="utf-8") as fh:
        return series_from_dict(json.load(fh))
