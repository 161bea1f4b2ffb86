"""Synthetic benchmark generator: a fixed combined network whose raw and
ancillary layer decomposition is re-randomized at every time step, with
known ground-truth fusion weights.

The first snapshot draws each raw layer as a Bernoulli random graph with
integer weights in {1..H} and masks ancillary edges from the raw support.
The combined graph of that snapshot (fused with the ground-truth weights)
is then held fixed: at every later step its edges are shuffled and dealt
to the layers by a multinomial draw, layer weights are set to the
combined weight divided by the layer's cumulative weight, and ancillary
edges are re-drawn and clamped so the raw part stays nonnegative.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .graphs import (
    FusionWeights,
    MultiplexSeries,
    MultiplexSnapshot,
    NodeRegistry,
    WeightedGraph,
    fuse,
)


@dataclass(frozen=True)
class SynthConfig:
    n: int
    T: int
    H: int
    p_h: tuple[float, ...]
    p_add: float
    gt_weights: FusionWeights
    epsilon: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "p_h", tuple(float(p) for p in self.p_h))
        if self.n < 2:
            raise ValidationError("need at least two nodes")
        if self.T < 2:
            raise ValidationError("need at least two time steps")
        if self.H < 1:
            raise ValidationError("need at least one layer")
        if len(self.p_h) != self.H:
            raise ValidationError("p_h must list one probability per layer")
        if any(not 0.0 <= p <= 1.0 for p in (*self.p_h, self.p_add)):
            raise ValidationError("edge probabilities must lie in [0, 1]")
        if self.gt_weights.H != self.H:
            raise ValidationError("ground-truth weights must cover H layers")
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        try:
            gt = FusionWeights(tuple(data["gt_w"]), float(data.get("gt_w_add", 0.0)))
            p_h = data["p_h"]
            if isinstance(p_h, (int, float)):
                p_h = [float(p_h)] * int(data["H"])
            return cls(
                n=int(data["n"]),
                T=int(data["T"]),
                H=int(data["H"]),
                p_h=tuple(float(p) for p in p_h),
                p_add=float(data["p_add"]),
                gt_weights=gt,
                epsilon=float(data.get("epsilon", 1e-6)),
                seed=int(data.get("seed", 0)),
            )
        except KeyError as exc:
            raise ValidationError(f"synth config missing key {exc}") from None


def _pair_index(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def _multinomial_counts(rng: np.random.Generator, total: int, probs) -> list[int]:
    """Multinomial draw via sequential binomial conditioning.

    Deterministic given the generator state and independent of any
    platform multinomial implementation.
    """
    probs = np.asarray(probs, dtype=float)
    if probs.sum() <= 0:
        raise ValidationError("layer probabilities must not all be zero")
    probs = probs / probs.sum()
    counts = []
    remaining = total
    tail = 1.0
    for k in range(len(probs) - 1):
        if remaining == 0 or tail <= 0:
            counts.append(0)
            continue
        ratio = min(1.0, max(0.0, probs[k] / tail))
        c = int(rng.binomial(remaining, ratio))
        counts.append(c)
        remaining -= c
        tail -= probs[k]
    counts.append(remaining)
    return counts


def init_snapshot(
    config: SynthConfig, rng: np.random.Generator | None = None
) -> MultiplexSnapshot:
    """First-step snapshot: Bernoulli raw layers, masked ancillary layers."""
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(config.seed))
    registry = NodeRegistry.from_labels(f"v{i}" for i in range(config.n))
    pairs = _pair_index(config.n)
    P = len(pairs)
    raw_layers = []
    add_layers = []
    for h in range(config.H):
        raw_mask = rng.random(P) < config.p_h[h]
        raw_w = rng.integers(1, config.H + 1, size=P)
        add_mask = rng.random(P) < config.p_add
        add_w = rng.integers(1, config.H + 1, size=P)
        raw_edges = {
            pairs[k]: float(raw_w[k]) for k in range(P) if raw_mask[k]
        }
        add_edges = {
            pairs[k]: float(add_w[k])
            for k in range(P)
            if raw_mask[k] and add_mask[k]
        }
        raw_layers.append(WeightedGraph(registry, raw_edges))
        add_layers.append(WeightedGraph(registry, add_edges))
    return MultiplexSnapshot(t=1, raw=tuple(raw_layers), add=tuple(add_layers))


def redistribute(
    t: int,
    combined: WeightedGraph,
    config: SynthConfig,
    rng: np.random.Generator,
) -> MultiplexSnapshot:
    """Snapshot for step t > 1: deal the combined edges to layers anew.

    Edges get multinomial layer counts, a seeded shuffle assigns them
    disjointly, each layer's weight is the combined weight over the
    layer's cumulative weight, and ancillary edges are clamped so that
    raw = layer - w_add * add stays positive.
    """
    if combined.edge_count() == 0:
        raise ValidationError("combined graph has no edges to redistribute")
    registry = combined.registry
    W = config.gt_weights.cumulative()
    w_add = config.gt_weights.w_add
    eps = config.epsilon
    edge_list = combined.edges()
    counts = _multinomial_counts(rng, len(edge_list), config.p_h)
    perm = rng.permutation(len(edge_list))
    raw_layers = []
    add_layers = []
    start = 0
    for h in range(config.H):
        assigned = [edge_list[perm[k]] for k in range(start, start + counts[h])]
        start += counts[h]
        add_mask = rng.random(len(assigned)) < config.p_add
        temp_w = rng.integers(1, config.H + 1, size=len(assigned))
        raw_edges: dict[tuple[int, int], float] = {}
        add_edges: dict[tuple[int, int], float] = {}
        for k, (i, j, combined_w) in enumerate(assigned):
            layer_w = combined_w / W[h]
            add_w = 0.0
            if add_mask[k]:
                if w_add == 0.0:
                    add_w = float(temp_w[k])
                else:
                    add_w = max(0.0, min(float(temp_w[k]), layer_w / w_add - eps))
            raw_edges[(i, j)] = layer_w - w_add * add_w
            if add_w > 0.0:
                add_edges[(i, j)] = add_w
        raw_layers.append(WeightedGraph(registry, raw_edges))
        add_layers.append(WeightedGraph(registry, add_edges))
    return MultiplexSnapshot(t=t, raw=tuple(raw_layers), add=tuple(add_layers))


def generate(config: SynthConfig) -> tuple[MultiplexSeries, FusionWeights]:
    """Generate the full series together with its ground-truth weights."""
    rng = np.random.Generator(np.random.PCG64(config.seed))
    first = init_snapshot(config, rng)
    combined = fuse(first, config.gt_weights)
    if combined.edge_count() == 0:
        raise ValidationError(
            "initial combined graph is empty; increase n or the edge probabilities"
        )
    snapshots = [first]
    for t in range(2, config.T + 1):
        snapshots.append(redistribute(t, combined, config, rng))
    return MultiplexSeries(tuple(snapshots)), config.gt_weights
