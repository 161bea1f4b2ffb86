"""Exact null distributions for long-term pair similarity, and the
significance machinery built on them.

For a pair of nodes, each co-existence time step is a Bernoulli trial
whose success ("same community") probability under the random-community
null follows from the observed community sizes. The count statistic is
the number of successes (a Poisson-binomial variable); the duration
statistic is the longest success run. Both distributions are computed
exactly by dynamic programming, p-values are upper tails, and Bonferroni
correction over all tested pairs selects the significant ones.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .community import Partition, PartitionSeries
from .errors import ValidationError
from .graphs import NodeRegistry, WeightedGraph

_PMF_TOL = 1e-10


@dataclass(frozen=True)
class BernoulliSeq:
    """Success probabilities of independent, non-identical Bernoulli trials."""

    probs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if len(self.probs) < 1:
            raise ValidationError("need at least one trial")
        if any(not 0.0 <= p <= 1.0 for p in self.probs):
            raise ValidationError("probabilities must lie in [0, 1]")

    @property
    def T(self) -> int:
        return len(self.probs)


@dataclass(frozen=True)
class Pmf:
    """Probability mass function on support {0..T}."""

    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if any(v < -_PMF_TOL for v in self.values):
            raise ValidationError("pmf entries must be nonnegative")
        if abs(math.fsum(self.values) - 1.0) > 1e-9:
            raise ValidationError("pmf must sum to one")

    def __getitem__(self, k: int) -> float:
        return self.values[k]

    def __len__(self) -> int:
        return len(self.values)


def count_dist(seq: BernoulliSeq) -> Pmf:
    """Exact Poisson-binomial distribution of the success count."""
    T = seq.T
    cur = np.zeros(T + 1)
    cur[0] = 1.0
    for t, p in enumerate(seq.probs, start=1):
        nxt = np.zeros(T + 1)
        nxt[: t + 1] = (1.0 - p) * cur[: t + 1]
        nxt[1 : t + 1] += p * cur[:t]
        cur = nxt
    return Pmf(tuple(cur))


def longest_run_dist(seq: BernoulliSeq) -> Pmf:
    """Exact distribution of the longest success run.

    Dynamic programming over (time, run length): boundary products for
    all-failures / all-successes / one failure at an end, an anchored
    two-term recursion for runs of length one, and the general
    three-part recursion conditioning on the position of the last
    failure for everything in between.
    """
    p = (math.nan,) + seq.probs  # 1-based
    T = seq.T
    # prefix products of p and (1-p)
    succ = [1.0] * (T + 1)
    fail = [1.0] * (T + 1)
    for s in range(1, T + 1):
        succ[s] = succ[s - 1] * p[s]
        fail[s] = fail[s - 1] * (1.0 - p[s])

    def run_prod(a: int, b: int) -> float:
        """Product of p_s for s in a..b (1 when empty)."""
        out = 1.0
        for s in range(a, b + 1):
            out *= p[s]
        return out

    P = [[0.0] * (T + 1) for _ in range(T + 1)]  # P[t][L]
    for t in range(1, T + 1):
        P[t][0] = fail[t]
        P[t][t] = succ[t]
        if t >= 2:
            P[t][t - 1] = (1.0 - p[t]) * run_prod(1, t - 1) + (1.0 - p[1]) * run_prod(2, t)
        if t >= 3:
            P[t][1] = (P[t - 2][0] + P[t - 2][1]) * (1.0 - p[t - 1]) * p[t] + (
                1.0 - p[t]
            ) * P[t - 1][1]
        for L in range(2, t - 1):
            head = math.fsum(P[t - L - 1][l] for l in range(L + 1))
            terms = [head * (1.0 - p[t - L]) * run_prod(t - L + 1, t)]
            for s in range(t - L + 1, t):
                terms.append((1.0 - p[s]) * run_prod(s + 1, t) * P[s - 1][L])
            terms.append((1.0 - p[t]) * P[t - 1][L])
            P[t][L] = math.fsum(terms)
    return Pmf(tuple(P[T]))


def longest_run(bits) -> int:
    """Length of the longest run of ones."""
    best = 0
    cur = 0
    for b in bits:
        cur = cur + 1 if b else 0
        best = max(best, cur)
    return best


def p_value(stat: int, dist: Pmf) -> float:
    """One-sided upper-tail probability P(X >= stat)."""
    if stat < 0:
        raise ValidationError("statistic must be nonnegative")
    if stat >= len(dist):
        return 0.0
    tail = math.fsum(dist.values[stat:])
    return min(1.0, max(0.0, tail))


def same_community_prob(part: Partition) -> float:
    """Chance that two random nodes share a community, given the sizes."""
    n = part.n
    if n < 2:
        raise ValidationError("need at least two active nodes")
    return math.fsum(
        size * (size - 1) for size in part.sizes.values()
    ) / (n * (n - 1))


@dataclass(frozen=True)
class PairTestResult:
    pair: tuple[str, str]
    coexist_steps: tuple[object, ...]
    bits: tuple[int, ...]
    null_probs: tuple[float, ...]
    count_stat: int
    duration_stat: int
    count_p: float
    duration_p: float


def pair_sequences(partitions: PartitionSeries, i: int, j: int):
    """Per-step same-community bits and null probabilities for one pair.

    Steps where either node is inactive are skipped entirely.
    """
    steps = []
    bits = []
    probs = []
    for t_label, part in partitions.entries:
        ci = part.assignment.get(i)
        cj = part.assignment.get(j)
        if ci is None or cj is None:
            continue
        steps.append(t_label)
        bits.append(1 if ci == cj else 0)
        probs.append(same_community_prob(part))
    return steps, bits, probs


def compute_pair_tests(
    partitions: PartitionSeries, registry: NodeRegistry
) -> list[PairTestResult]:
    """Test every pair that co-exists for at least one step.

    Null distributions are cached per distinct probability vector, which
    collapses the work to one DP per distinct co-existence pattern.
    """
    nodes = sorted({i for _, part in partitions.entries for i in part.assignment})
    count_cache: dict[tuple, Pmf] = {}
    run_cache: dict[tuple, Pmf] = {}
    results = []
    for i, j in combinations(nodes, 2):
        steps, bits, probs = pair_sequences(partitions, i, j)
        if not steps:
            continue
        key = tuple(probs)
        if key not in count_cache:
            seq = BernoulliSeq(key)
            count_cache[key] = count_dist(seq)
            run_cache[key] = longest_run_dist(seq)
        c_stat = sum(bits)
        d_stat = longest_run(bits)
        results.append(
            PairTestResult(
                pair=(registry.label_of(i), registry.label_of(j)),
                coexist_steps=tuple(steps),
                bits=tuple(bits),
                null_probs=key,
                count_stat=c_stat,
                duration_stat=d_stat,
                count_p=p_value(c_stat, count_cache[key]),
                duration_p=p_value(d_stat, run_cache[key]),
            )
        )
    return results


def bonferroni_select(
    results: list[PairTestResult], alpha: float = 0.05
) -> tuple[set[tuple[str, str]], set[tuple[str, str]]]:
    """Bonferroni-significant pairs for the count and duration statistics.

    The correction divides by the number of tested pairs (co-existence
    of at least one step), separately per statistic.
    """
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must lie in (0, 1)")
    m = len(results)
    if m == 0:
        return set(), set()
    threshold = alpha / m
    count_sig = {r.pair for r in results if r.count_p <= threshold}
    duration_sig = {r.pair for r in results if r.duration_p <= threshold}
    return count_sig, duration_sig


def similarity_graph(
    results: list[PairTestResult],
    registry: NodeRegistry,
    statistic: str = "count",
    mode: str = "full",
    alpha: float = 0.05,
) -> WeightedGraph:
    """Graph whose edge weights are the chosen similarity statistic.

    'full' keeps every pair with a positive statistic; 'thresholded'
    keeps only the Bonferroni-significant ones.
    """
    if statistic not in ("count", "duration"):
        raise ValidationError(f"unknown statistic {statistic!r}")
    if mode not in ("full", "thresholded"):
        raise ValidationError(f"unknown mode {mode!r}")
    keep = None
    if mode == "thresholded":
        count_sig, duration_sig = bonferroni_select(results, alpha)
        keep = count_sig if statistic == "count" else duration_sig
    triples = []
    for r in results:
        stat = r.count_stat if statistic == "count" else r.duration_stat
        if stat <= 0:
            continue
        if keep is not None and r.pair not in keep:
            continue
        triples.append((r.pair[0], r.pair[1], float(stat)))
    return WeightedGraph.from_label_edges(registry, triples)


def maximal_cliques(graph: WeightedGraph) -> list[list[str]]:
    """All maximal cliques (size >= 2) of the edge support.

    Bron-Kerbosch with pivoting; output sorted by descending size, then
    lexicographically by member labels.
    """
    adj = {i: set(nbrs) for i, nbrs in graph.adjacency_lists().items()}
    cliques: list[list[int]] = []

    def expand(r: set[int], p: set[int], x: set[int]) -> None:
        if not p and not x:
            if len(r) >= 2:
                cliques.append(sorted(r))
            return
        pivot = max(p | x, key=lambda u: (len(adj[u] & p), -u))
        for v in sorted(p - adj[pivot]):
            expand(r | {v}, p & adj[v], x & adj[v])
            p.remove(v)
            x.add(v)

    expand(set(), set(adj), set())
    labeled = [[graph.registry.label_of(i) for i in c] for c in cliques]
    for c in labeled:
        c.sort()
    labeled.sort(key=lambda c: (-len(c), c))
    return labeled


def connected_components(graph: WeightedGraph) -> list[list[str]]:
    """Components of the edge support (size >= 2), largest first."""
    adj = graph.adjacency_lists()
    seen: set[int] = set()
    comps = []
    for start in sorted(adj):
        if start in seen:
            continue
        stack = [start]
        comp = []
        seen.add(start)
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        comps.append(sorted(graph.registry.label_of(i) for i in comp))
    comps.sort(key=lambda c: (-len(c), c))
    return comps
