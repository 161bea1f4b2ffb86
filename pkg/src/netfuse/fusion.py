"""Fusion-weight learning: structural-consistency losses, unconstrained
reparameterization, full-batch Adam with validation early stopping, the
multi-initialization heuristic, test-loss model selection, and the two
fixed baselines.

The objective compares consecutive fused snapshots restricted to their
co-existing nodes: squared differences of the row-cosine similarity
matrices plus squared differences of the normalized weighted degrees,
each averaged over the consecutive-step pairs, plus an optional squared
penalty on the free weights. Increment weights live on softplus-
transformed reals, the ancillary weight on a logit-transformed real, so
every iterate is feasible (w_h > 0, 0 < w_add < 1, w_1 pinned at 1).

Gradients are computed analytically (reverse mode over the fixed
fuse -> restrict -> cosine/degree -> loss graph); central finite
differences are kept as a test oracle only.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError
from .graphs import (
    FusionWeights,
    MultiplexSeries,
    MultiplexSnapshot,
    WeightedGraph,
    active_nodes,
    coexist_restrict,
    cosine_similarity_matrix,
    fuse,
    normalized_degrees,
)

_ZERO_CLAMP = 1e-4
_ONE_CLAMP = 0.9999


@dataclass(frozen=True)
class LossWeights:
    alpha1: float = 1.0
    alpha2: float = 1.0
    alpha3: float = 0.001

    def __post_init__(self):
        if min(self.alpha1, self.alpha2, self.alpha3) < 0:
            raise ValidationError("loss weights must be nonnegative")


@dataclass(frozen=True)
class FreeParams:
    """Unconstrained parameters: softplus-space increments for w_2..w_H
    and a logit-space ancillary weight."""

    w_tilde: tuple[float, ...]
    w_add_tilde: float

    def __post_init__(self):
        values = (*self.w_tilde, self.w_add_tilde)
        if any(not math.isfinite(v) for v in values):
            raise ValidationError("free parameters must be finite")

    def as_vector(self) -> np.ndarray:
        return np.array([*self.w_tilde, self.w_add_tilde], dtype=float)

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "FreeParams":
        return cls(tuple(float(v) for v in vec[:-1]), float(vec[-1]))


@dataclass(frozen=True)
class SplitSpec:
    """Contiguous train/validation/test sets of pair-start indices.

    A consecutive-step pair (t, t+1) is indexed by its 0-based start t;
    the three blocks must cover 0..T-2 in order.
    """

    train: tuple[int, ...]
    val: tuple[int, ...]
    test: tuple[int, ...]

    def __post_init__(self):
        for name, part in (("train", self.train), ("val", self.val), ("test", self.test)):
            if not part:
                raise ValidationError(f"{name} split must not be empty")
            if list(part) != list(range(part[0], part[-1] + 1)):
                raise ValidationError(f"{name} split must be contiguous and ordered")
        if not (self.train[-1] < self.val[0] and self.val[-1] < self.test[0]):
            raise ValidationError("splits must be ordered train < val < test")
        if self.train[0] != 0 or self.val[0] != self.train[-1] + 1 or self.test[0] != self.val[-1] + 1:
            raise ValidationError("splits must tile the pair indices without gaps")

    @classmethod
    def from_step_counts(cls, train_steps: int, val_steps: int, test_steps: int) -> "SplitSpec":
        """Split by time-step counts; a pair belongs to its start step's block.

        For T = train+val+test steps there are T-1 pairs; the boundary
        pairs fall into the earlier block.
        """
        if min(train_steps, val_steps) < 1:
            raise ValidationError("train and val splits need at least one time step")
        if test_steps < 2:
            raise ValidationError(
                "test split needs at least two time steps (its last step starts no pair)"
            )
        a, b, c = train_steps, val_steps, test_steps
        T = a + b + c
        return cls(
            train=tuple(range(0, a)),
            val=tuple(range(a, a + b)),
            test=tuple(range(a + b, T - 1)),
        )

    @classmethod
    def default_for(cls, T: int) -> "SplitSpec":
        """Proportional 8:3:3 step split, smallest valid blocks otherwise."""
        if T < 4:
            raise ValidationError("need T >= 4 for a three-way split")
        val = max(1, round(3 * T / 14))
        test = max(2, round(3 * T / 14))
        train = T - val - test
        if train < 1:
            raise ValidationError(f"cannot split T={T} into three blocks")
        return cls.from_step_counts(train, val, test)

    def check_series(self, T: int) -> None:
        covered = (*self.train, *self.val, *self.test)
        if covered != tuple(range(T - 1)):
            raise ValidationError(
                f"splits cover pair starts {covered[0]}..{covered[-1]} "
                f"but the series has pairs 0..{T - 2}"
            )


@dataclass(frozen=True)
class FitConfig:
    loss_weights: LossWeights = LossWeights()
    learning_rate: float = 0.1
    max_epochs: int = 5000
    patience: int = 3000
    tiny_weight_threshold: float = 0.05
    seeds: tuple[int, ...] = (0, 1, 2)
    inits: tuple[FreeParams, ...] | None = None
    split: SplitSpec | None = None
    n_jobs: int = 1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning rate must be positive")
        if self.patience > self.max_epochs:
            raise ValidationError("patience must not exceed max epochs")
        if not self.seeds:
            raise ValidationError("need at least one seed")


@dataclass(frozen=True)
class FitResult:
    """One optimization run. The reported test loss is the data-only
    objective (regularization weight zero) at the selected epoch."""

    weights: FusionWeights
    raw_weights: FusionWeights
    train_losses: tuple[float, ...]
    val_losses: tuple[float, ...]
    test_losses: tuple[float, ...]
    selected_epoch: int
    init_id: int
    seed: int
    val_loss: float
    test_loss: float
    failed: bool = False


# --- reparameterization ----------------------------------------------------


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _softplus_inv(w: np.ndarray) -> np.ndarray:
    return np.log(np.expm1(w))


def _sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def reparam_to_free(weights: FusionWeights) -> FreeParams:
    """Map constrained weights to unconstrained space.

    Increments at 0 are nudged to 1e-4 before the inverse softplus;
    the ancillary weight is nudged into (0, 1) before the logit.
    """
    w = np.maximum(np.asarray(weights.w[1:], dtype=float), _ZERO_CLAMP)
    w_add = min(max(weights.w_add, _ZERO_CLAMP), _ONE_CLAMP)
    w_tilde = _softplus_inv(w) if w.size else np.empty(0)
    return FreeParams(tuple(w_tilde), float(np.log(w_add / (1.0 - w_add))))


def reparam_to_constrained(free: FreeParams) -> FusionWeights:
    """Map unconstrained parameters back to feasible fusion weights."""
    w = _softplus(np.asarray(free.w_tilde, dtype=float)) if free.w_tilde else np.empty(0)
    w_add = float(_sigmoid(free.w_add_tilde))
    return FusionWeights((1.0, *w), w_add)


# --- reference losses (graph-level path) -----------------------------------


def _pair_term_losses(adj_t: np.ndarray, adj_next: np.ndarray) -> tuple[float, float]:
    """Similarity and degree squared-difference sums for one restricted pair."""
    s_t = cosine_similarity_matrix(adj_t)
    s_next = cosine_similarity_matrix(adj_next)
    d_t = normalized_degrees(adj_t)
    d_next = normalized_degrees(adj_next)
    return float(((s_t - s_next) ** 2).sum()), float(((d_t - d_next) ** 2).sum())


def _term_losses(series: MultiplexSeries, weights: FusionWeights) -> list[tuple[float, float]]:
    fused = [fuse(snap, weights) for snap in series.snapshots]
    out = []
    for t in range(series.T - 1):
        ids, g_t, g_next = coexist_restrict(fused[t], fused[t + 1])
        if not ids:
            out.append((0.0, 0.0))
            continue
        out.append(_pair_term_losses(g_t.dense(), g_next.dense()))
    return out


def loss_sim(series: MultiplexSeries, weights: FusionWeights) -> float:
    """Mean squared change of co-existing nodes' cosine-similarity rows."""
    terms = _term_losses(series, weights)
    return sum(s for s, _ in terms) / (series.T - 1)


def loss_deg(series: MultiplexSeries, weights: FusionWeights) -> float:
    """Mean squared change of co-existing nodes' normalized degrees."""
    terms = _term_losses(series, weights)
    return sum(d for _, d in terms) / (series.T - 1)


def loss_reg(weights: FusionWeights) -> float:
    """Mean squared magnitude of the learnable weights (w_1 excluded)."""
    return (weights.w_add**2 + sum(w**2 for w in weights.w[1:])) / weights.H


def total_loss(
    series: MultiplexSeries,
    weights: FusionWeights,
    loss_weights: LossWeights = LossWeights(),
    subset: tuple[int, ...] | None = None,
) -> float:
    """Weighted objective over a subset of pair-start indices.

    The similarity/degree sums are averaged over the subset's pair
    count; subset None means all pairs.
    """
    if subset is None:
        subset = tuple(range(series.T - 1))
    if not subset:
        raise ValidationError("loss subset must not be empty")
    terms = _term_losses(series, weights)
    s = sum(terms[t][0] for t in subset) / len(subset)
    d = sum(terms[t][1] for t in subset) / len(subset)
    return (
        loss_weights.alpha1 * s
        + loss_weights.alpha2 * d
        + loss_weights.alpha3 * loss_reg(weights)
    )


# --- fast evaluation with analytic gradients -------------------------------


class _SideGroup:
    """All restricted sides sharing one matrix size, stored as a single
    flat (2H, n_sides*m*m) stack: raw layers first, ancillary layers
    after. Sides appear in first-use order over the terms, so the sides
    any term prefix touches form a prefix of the stack."""

    __slots__ = ("m", "H2", "layers", "n_sides", "t_idx", "pa", "pb")

    def __init__(self, m: int, H: int):
        self.m = m
        self.H2 = 2 * H
        self.layers: list[np.ndarray] = []
        self.n_sides = 0
        self.t_idx: list[int] = []   # pair-start index of each term
        self.pa: list[int] = []      # side position of the earlier snapshot
        self.pb: list[int] = []      # side position of the later snapshot

    def finalize(self) -> None:
        flat = np.empty((self.H2, self.n_sides * self.m * self.m))
        block = self.m * self.m
        for s, side in enumerate(self.layers):
            flat[:, s * block : (s + 1) * block] = side.reshape(self.H2, block)
        self.layers = flat  # type: ignore[assignment]
        self.t_idx = np.asarray(self.t_idx, dtype=int)  # type: ignore[assignment]
        self.pa = np.asarray(self.pa, dtype=int)  # type: ignore[assignment]
        self.pb = np.asarray(self.pb, dtype=int)  # type: ignore[assignment]


class FusionProblem:
    """Precomputed restricted layer stacks for one series.

    Restrictions use the union of the layer supports per snapshot,
    which equals the fused support for every interior iterate (all
    cumulative weights positive, ancillary weight in (0, 1)), so they
    are constant throughout optimization. Evaluation batches all sides
    of equal size through single BLAS passes; per-evaluation state is
    local, so one problem may serve concurrent runs.
    """

    def __init__(self, series: MultiplexSeries):
        self.H = series.H
        self.T = series.T
        supports = []
        for snap in series.snapshots:
            nodes: set[int] = set()
            for g in (*snap.raw, *snap.add):
                nodes |= active_nodes(g)
            supports.append(nodes)
        groups: dict[int, _SideGroup] = {}
        side_pos: dict[tuple, int] = {}
        self.n_terms = 0
        for t in range(self.T - 1):
            ids = tuple(sorted(supports[t] & supports[t + 1]))
            if not ids:
                continue
            group = groups.get(len(ids))
            if group is None:
                group = _SideGroup(len(ids), self.H)
                groups[len(ids)] = group
            pa = self._side_pos(series.snapshots[t], t, ids, group, side_pos)
            pb = self._side_pos(series.snapshots[t + 1], t + 1, ids, group, side_pos)
            group.t_idx.append(t)
            group.pa.append(pa)
            group.pb.append(pb)
            self.n_terms += 1
        for group in groups.values():
            group.finalize()
        self.groups = list(groups.values())

    def _side_pos(self, snap, s: int, ids, group: _SideGroup, side_pos) -> int:
        key = (s, ids)
        if key not in side_pos:
            m = len(ids)
            stack = np.empty((2 * self.H, m, m))
            for h in range(self.H):
                stack[h] = snap.raw[h].submatrix(ids)
                stack[self.H + h] = snap.add[h].submatrix(ids)
            group.layers.append(stack)
            side_pos[key] = group.n_sides
            group.n_sides += 1
        return side_pos[key]

    def _constrained(self, free: np.ndarray):
        w_inc = _softplus(free[:-1])
        W = np.empty(self.H)
        W[0] = 1.0
        if self.H > 1:
            W[1:] = 1.0 + np.cumsum(w_inc)
        w_add = float(_sigmoid(free[-1]))
        return w_inc, W, w_add

    def _forward(self, W: np.ndarray, w_add: float):
        """Per group: fused sides, Gram matrices, row-norm inverses,
        cosine matrices, normalized degrees, and per-term diffs."""
        theta = np.concatenate([W, w_add * W])
        state = []
        for group in self.groups:
            m = group.m
            A = (theta @ group.layers).reshape(group.n_sides, m, m)
            G = A @ A
            sq = np.einsum("sii->si", G)
            nz = sq > 0
            inv = np.zeros(sq.shape)
            np.sqrt(sq, out=inv, where=nz)
            np.divide(1.0, inv, out=inv, where=nz)
            S = G * inv[:, :, None]
            S *= inv[:, None, :]
            rows = A.sum(axis=2)
            ttl = rows.sum(axis=1)
            d = np.zeros_like(rows)
            np.divide(rows, ttl[:, None], where=ttl[:, None] > 0, out=d)
            DS = S[group.pa] - S[group.pb]
            dd = d[group.pa] - d[group.pb]
            state.append((A, G, inv, d, ttl, DS, dd))
        return state

    def _term_sums(self, state) -> tuple[np.ndarray, np.ndarray]:
        sim = np.zeros(self.T - 1)
        deg = np.zeros(self.T - 1)
        for group, (_, _, _, _, _, DS, dd) in zip(self.groups, state):
            sim[group.t_idx] = np.einsum("tmn,tmn->t", DS, DS)
            deg[group.t_idx] = np.einsum("tm,tm->t", dd, dd)
        return sim, deg

    def _subset_loss(self, sim, deg, lw: LossWeights, subset, reg: float) -> float:
        k = len(subset)
        idx = list(subset)
        s = sim[idx].sum() / k
        d = deg[idx].sum() / k
        return lw.alpha1 * s + lw.alpha2 * d + lw.alpha3 * reg

    def _backward(
        self,
        state,
        w_inc: np.ndarray,
        W: np.ndarray,
        w_add: float,
        free: np.ndarray,
        lw: LossWeights,
        subset,
    ) -> np.ndarray:
        k = len(subset)
        cs = 2.0 * lw.alpha1 / k
        cd = 2.0 * lw.alpha2 / k
        in_subset = set(subset)
        gW = np.zeros(self.H)
        g_wadd = 0.0
        for group, (A, G, inv, d, ttl, DS, dd) in zip(self.groups, state):
            picked = [
                i for i, t in enumerate(group.t_idx) if int(t) in in_subset
            ]
            if not picked:
                continue
            m = group.m
            n_used = 1 + max(
                max(int(group.pa[i]), int(group.pb[i])) for i in picked
            )
            upS = np.zeros((n_used, m, m))
            upd = np.zeros((n_used, m))
            for i in picked:
                pa, pb = int(group.pa[i]), int(group.pb[i])
                upS[pa] += cs * DS[i]
                upS[pb] -= cs * DS[i]
                upd[pa] += cd * dd[i]
                upd[pb] -= cd * dd[i]
            At = A[:n_used]
            invt = inv[:n_used]
            U = upS * invt[:, :, None]
            U *= invt[:, None, :]
            q = 2.0 * ((upS * G[:n_used]) @ invt[:, :, None])[:, :, 0]
            gA = 2.0 * (U @ At) - (q * invt**3)[:, :, None] * At
            ttlt = ttl[:n_used]
            coef = np.zeros_like(ttlt)
            np.divide(1.0, ttlt, where=ttlt > 0, out=coef)
            c = (upd * d[:n_used]).sum(axis=1)
            gA += ((upd - c[:, None]) * coef[:, None])[:, :, None]
            block = m * m
            gC = group.layers[:, : n_used * block] @ gA.reshape(-1)
            gW += gC[: self.H] + w_add * gC[self.H :]
            g_wadd += float(W @ gC[self.H :])
        # chain to the increments (cumulative weights are suffix sums) ...
        g_inc = np.cumsum(gW[::-1])[::-1][1:]
        # ... add the regularization, then map into free space
        g_inc = g_inc + lw.alpha3 * (2.0 / self.H) * w_inc
        g_wadd += lw.alpha3 * (2.0 / self.H) * w_add
        grad = np.empty_like(free)
        grad[:-1] = g_inc * _sigmoid(free[:-1])
        grad[-1] = g_wadd * w_add * (1.0 - w_add)
        return grad

    def epoch_eval(self, free: np.ndarray, lw: LossWeights, split: SplitSpec):
        """Losses on the three splits plus the training gradient.

        Returns (train total, val total, test data-only loss, gradient).
        """
        w_inc, W, w_add = self._constrained(free)
        state = self._forward(W, w_add)
        sim, deg = self._term_sums(state)
        reg = (w_add**2 + float(w_inc @ w_inc)) / self.H
        train = self._subset_loss(sim, deg, lw, split.train, reg)
        val = self._subset_loss(sim, deg, lw, split.val, reg)
        test = self._subset_loss(sim, deg, LossWeights(lw.alpha1, lw.alpha2, 0.0), split.test, 0.0)
        grad = self._backward(state, w_inc, W, w_add, free, lw, split.train)
        return train, val, test, grad

    def subset_total(self, free: np.ndarray, lw: LossWeights, subset) -> float:
        """Objective restricted to a pair subset (finite-difference oracle hook)."""
        if not subset:
            raise ValidationError("loss subset must not be empty")
        w_inc, W, w_add = self._constrained(free)
        state = self._forward(W, w_add)
        sim, deg = self._term_sums(state)
        reg = (w_add**2 + float(w_inc @ w_inc)) / self.H
        return self._subset_loss(sim, deg, lw, subset, reg)

    def gradient(self, free: np.ndarray, lw: LossWeights, subset) -> np.ndarray:
        if not subset:
            raise ValidationError("loss subset must not be empty")
        w_inc, W, w_add = self._constrained(free)
        state = self._forward(W, w_add)
        return self._backward(state, w_inc, W, w_add, free, lw, subset)


# --- optimization ----------------------------------------------------------

_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8


def _run_single(
    problem: FusionProblem,
    init: FreeParams,
    config: FitConfig,
    split: SplitSpec,
    init_id: int,
    seed: int,
) -> FitResult:
    lw = config.loss_weights
    x = init.as_vector()
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    train_path: list[float] = []
    val_path: list[float] = []
    test_path: list[float] = []
    best_val = math.inf
    best_test = math.inf
    best_x = x.copy()
    best_epoch = -1
    failed = False
    for epoch in range(config.max_epochs):
        train, val, test, grad = problem.epoch_eval(x, lw, split)
        if not (math.isfinite(train) and math.isfinite(val) and math.isfinite(test)):
            failed = True
            break
        train_path.append(train)
        val_path.append(val)
        test_path.append(test)
        if val < best_val:
            best_val = val
            best_test = test
            best_x = x.copy()
            best_epoch = epoch
        if epoch - best_epoch >= config.patience:
            break
        step = epoch + 1
        m = _ADAM_BETA1 * m + (1.0 - _ADAM_BETA1) * grad
        v = _ADAM_BETA2 * v + (1.0 - _ADAM_BETA2) * grad * grad
        m_hat = m / (1.0 - _ADAM_BETA1**step)
        v_hat = v / (1.0 - _ADAM_BETA2**step)
        x = x - config.learning_rate * m_hat / (np.sqrt(v_hat) + _ADAM_EPS)
    if best_epoch < 0:
        failed = True
        best_x = init.as_vector()
    raw = reparam_to_constrained(FreeParams.from_vector(best_x))
    thresholded = tuple(
        0.0 if (h > 0 and w < config.tiny_weight_threshold) else w
        for h, w in enumerate(raw.w)
    )
    return FitResult(
        weights=FusionWeights(thresholded, raw.w_add),
        raw_weights=raw,
        train_losses=tuple(train_path),
        val_losses=tuple(val_path),
        test_losses=tuple(test_path),
        selected_epoch=best_epoch,
        init_id=init_id,
        seed=seed,
        val_loss=best_val,
        test_loss=best_test,
        failed=failed,
    )


def init_grid(H: int) -> tuple[FreeParams, ...]:
    """The 6 + H starting points: six uniform levels (ancillary capped at
    one) plus one one-hot per learnable slot, the ancillary slot included."""
    if H < 1:
        raise ValidationError("need at least one layer")
    inits = []
    for v in (0.1, 0.2, 0.5, 1.0, 2.0, 5.0):
        weights = FusionWeights((1.0,) + (v,) * (H - 1), min(v, 1.0))
        inits.append(reparam_to_free(weights))
    for k in range(H):
        slots = [0.1] * H
        slots[k] = 1.0
        weights = FusionWeights((1.0, *slots[: H - 1]), slots[H - 1])
        inits.append(reparam_to_free(weights))
    return tuple(inits)


def fit(series: MultiplexSeries, config: FitConfig) -> list[FitResult]:
    """Run every initialization on every seed; one result per run.

    Full-batch optimization consumes no randomness, so runs differing
    only by seed coincide exactly; each initialization is optimized once
    and its result is reported under every seed.
    """
    if series.T < 4:
        raise ValidationError("need T >= 4 so every split is nonempty")
    split = config.split if config.split is not None else SplitSpec.default_for(series.T)
    split.check_series(series.T)
    problem = FusionProblem(series)
    inits = config.inits if config.inits is not None else init_grid(series.H)

    def run(job):
        init_id, init = job
        return _run_single(problem, init, config, split, init_id, config.seeds[0])

    jobs = list(enumerate(inits))
    if config.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=config.n_jobs) as pool:
            base_results = list(pool.map(run, jobs))
    else:
        base_results = [run(job) for job in jobs]
    results = []
    for base in base_results:
        for seed in config.seeds:
            results.append(base if seed == base.seed else replace(base, seed=seed))
    return results


def select_best(results: list[FitResult]) -> FitResult:
    """Lowest data-only test loss; ties fall to lower validation loss,
    then lower initialization id, then lower seed."""
    ok = [r for r in results if not r.failed]
    if not ok:
        raise ValidationError("all optimization runs failed")
    return min(ok, key=lambda r: (r.test_loss, r.val_loss, r.init_id, r.seed))


# --- baselines -------------------------------------------------------------


def baseline_weights(kind: str, H: int) -> FusionWeights:
    """Fixed weights used by the two baselines: unit first increment,
    0.1 for the rest and for the ancillary coupling."""
    if kind not in ("unlearned", "binary"):
        raise ValidationError(f"unknown baseline kind {kind!r}")
    return FusionWeights((1.0,) + (0.1,) * (H - 1), 0.1)


def baseline_fuse(snapshot: MultiplexSnapshot, kind: str) -> WeightedGraph:
    """Apply a baseline rule: 'unlearned' fuses with the fixed weights;
    'binary' additionally sets every positive edge weight to one."""
    g = fuse(snapshot, baseline_weights(kind, snapshot.H))
    return g.binarize() if kind == "binary" else g
