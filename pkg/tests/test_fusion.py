import math

import numpy as np
import pytest

from netfuse import (
    FitConfig,
    FreeParams,
    FusionWeights,
    LossWeights,
    MultiplexSeries,
    MultiplexSnapshot,
    NodeRegistry,
    SplitSpec,
    SynthConfig,
    ValidationError,
    WeightedGraph,
    baseline_fuse,
    baseline_weights,
    fit,
    fuse,
    generate,
    init_grid,
    loss_deg,
    loss_reg,
    loss_sim,
    reparam_to_constrained,
    reparam_to_free,
    select_best,
    total_loss,
)
from netfuse.fusion import FitResult, FusionProblem, _pair_term_losses, _sigmoid


def reg(*labels):
    return NodeRegistry.from_labels(labels)


def snapshot(registry, t, raw_layers, add_layers):
    return MultiplexSnapshot(
        t=t,
        raw=tuple(WeightedGraph.from_label_edges(registry, list(l)) for l in raw_layers),
        add=tuple(WeightedGraph.from_label_edges(registry, list(l)) for l in add_layers),
    )


def random_series(rng, n=8, H=2, T=3, p=0.4):
    r = reg(*[f"n{i}" for i in range(n)])
    snaps = []
    for t in range(1, T + 1):
        raw_layers = []
        add_layers = []
        for _ in range(H):
            raw = []
            add = []
            for i in range(n):
                for j in range(i + 1, n):
                    if rng.random() < p:
                        raw.append((f"n{i}", f"n{j}", float(rng.uniform(0.5, 3))))
                        if rng.random() < 0.4:
                            add.append((f"n{i}", f"n{j}", float(rng.uniform(0.5, 2))))
            raw_layers.append(raw)
            add_layers.append(add)
        snaps.append(snapshot(r, t, raw_layers, add_layers))
    return MultiplexSeries(tuple(snaps))


# --- loss terms ---------------------------------------------------------------


def test_loss_sim_zero_for_identical_snapshots():
    rng = np.random.default_rng(1)
    series = random_series(rng, T=2)
    frozen = MultiplexSeries(
        (
            series.snapshots[0],
            MultiplexSnapshot(
                t=2, raw=series.snapshots[0].raw, add=series.snapshots[0].add
            ),
        )
    )
    for w in (FusionWeights((1.0, 0.5), 0.2), FusionWeights((1.0, 2.0), 0.9)):
        assert loss_sim(frozen, w) == pytest.approx(0.0, abs=1e-15)
        assert loss_deg(frozen, w) == pytest.approx(0.0, abs=1e-15)


def test_pair_term_identity_vs_flat_rows():
    # rows (1,0)/(0,1) against any scaling of all-ones rows:
    # off-diagonal similarities 0 vs 1, two ordered pairs -> sim term 2
    a = np.eye(2)
    b = np.array([[1.0, 1.0], [1.0, 1.0]]) * 3.7
    sim, _ = _pair_term_losses(a, b)
    assert sim == pytest.approx(2.0)


def test_loss_sim_scale_invariant_per_step():
    rng = np.random.default_rng(2)
    series = random_series(rng, T=3)
    w = FusionWeights((1.0, 0.8), 0.4)
    scaled = FusionWeights.unchecked((2.5, 2.0), 0.4)
    assert loss_sim(series, w) == pytest.approx(loss_sim(series, scaled), abs=1e-10)


def test_loss_deg_restriction_hand_case():
    # t: single edge (a,b); t+1: star a-b, a-c. Restricted to {a,b} the
    # normalized degrees agree, so the degree term vanishes.
    r = reg("a", "b", "c")
    s1 = snapshot(r, 1, [[("a", "b", 1.0)]], [[]])
    s2 = snapshot(r, 2, [[("a", "b", 1.0), ("a", "c", 1.0)]], [[]])
    series = MultiplexSeries((s1, s2))
    assert loss_deg(series, FusionWeights((1.0,), 0.0)) == pytest.approx(0.0)


def test_loss_reg_values():
    assert loss_reg(FusionWeights((1.0, 0.0, 0.0, 0.0, 0.0), 0.0)) == 0.0
    w = FusionWeights((1.0, 0.0, 1.0, 0.0, 1.0), 0.5)
    assert loss_reg(w) == pytest.approx(0.45)


def test_loss_reg_monotone_in_each_weight():
    base = FusionWeights((1.0, 0.3, 0.7), 0.2)
    bigger = FusionWeights((1.0, 0.5, 0.7), 0.2)
    assert loss_reg(bigger) > loss_reg(base)


def test_total_loss_weighted_sum():
    rng = np.random.default_rng(3)
    series = random_series(rng, T=3)
    w = FusionWeights((1.0, 0.5), 0.2)
    lw = LossWeights(1.0, 1.0, 0.001)
    expected = loss_sim(series, w) + loss_deg(series, w) + 0.001 * loss_reg(w)
    assert total_loss(series, w, lw) == pytest.approx(expected, rel=1e-12)
    lw0 = LossWeights(1.0, 1.0, 0.0)
    assert total_loss(series, w, lw0) == pytest.approx(
        loss_sim(series, w) + loss_deg(series, w), rel=1e-12
    )
    with pytest.raises(ValidationError):
        total_loss(series, w, lw, subset=())


def test_scale_invariance_of_data_losses():
    rng = np.random.default_rng(4)
    series = random_series(rng, T=4)
    w = FusionWeights((1.0, 0.7), 0.3)
    base = loss_sim(series, w) + loss_deg(series, w)
    for c in (0.1, 2.0, 10.0):
        scaled = FusionWeights.unchecked(tuple(c * x for x in w.w), w.w_add)
        got = loss_sim(series, scaled) + loss_deg(series, scaled)
        assert got == pytest.approx(base, abs=1e-10)


# --- reparameterization ----------------------------------------------------------


def test_reparam_unit_weight():
    free = reparam_to_free(FusionWeights((1.0, 1.0), 0.5))
    assert free.w_tilde[0] == pytest.approx(math.log(math.e - 1), abs=1e-9)


def test_reparam_logistic_midpoint():
    weights = reparam_to_constrained(FreeParams((0.0,), 0.0))
    assert weights.w_add == pytest.approx(0.5)


def test_reparam_zero_weight_clamped():
    free = reparam_to_free(FusionWeights((1.0, 0.0), 0.0))
    # softplus-inverse of the 1e-4 clamp
    assert free.w_tilde[0] == pytest.approx(math.log(math.expm1(1e-4)), abs=1e-9)
    assert free.w_tilde[0] == pytest.approx(-9.21029, abs=1e-4)


def test_reparam_add_bounds_clamped():
    hi = reparam_to_free(FusionWeights((1.0,), 1.0))
    lo = reparam_to_free(FusionWeights((1.0,), 0.0))
    assert _sigmoid(hi.w_add_tilde) == pytest.approx(0.9999, abs=1e-9)
    assert _sigmoid(lo.w_add_tilde) == pytest.approx(0.0001, abs=1e-9)


def test_reparam_roundtrip():
    rng = np.random.default_rng(5)
    for _ in range(50):
        w = (1.0, *(float(x) for x in rng.uniform(0.001, 100, size=3)))
        w_add = float(rng.uniform(0.001, 0.999))
        weights = FusionWeights(w, w_add)
        back = reparam_to_constrained(reparam_to_free(weights))
        assert np.allclose(back.w, w, rtol=1e-9, atol=1e-9)
        assert back.w_add == pytest.approx(w_add, abs=1e-9)


# --- fast problem vs reference ----------------------------------------------------


def test_problem_matches_reference_losses():
    rng = np.random.default_rng(6)
    for _ in range(5):
        series = random_series(rng, n=7, H=3, T=4, p=0.35)
        problem = FusionProblem(series)
        free = FreeParams(tuple(rng.normal(size=2)), float(rng.normal()))
        weights = reparam_to_constrained(free)
        lw = LossWeights(1.0, 1.0, 0.001)
        subset = (0, 1, 2)
        got = problem.subset_total(free.as_vector(), lw, subset)
        want = total_loss(series, weights, lw, subset)
        assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(7)
    lw = LossWeights(1.0, 1.0, 0.001)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(5, 11))
        H = int(rng.integers(1, 4))
        T = int(rng.integers(2, 5))
        series = random_series(rng, n=n, H=H, T=T, p=0.5)
        problem = FusionProblem(series)
        subset = tuple(range(T - 1))
        x = np.concatenate([rng.normal(size=H - 1), rng.normal(size=1)])
        grad = problem.gradient(x, lw, subset)
        eps = 1e-5
        for k in range(len(x)):
            xp = x.copy()
            xp[k] += eps
            xm = x.copy()
            xm[k] -= eps
            fd = (
                problem.subset_total(xp, lw, subset)
                - problem.subset_total(xm, lw, subset)
            ) / (2 * eps)
            denom = max(abs(fd), abs(grad[k]), 1e-8)
            worst = max(worst, abs(grad[k] - fd) / denom)
    assert worst < 1e-4


# --- split spec ---------------------------------------------------------------------


def test_split_from_step_counts_paper_scheme():
    split = SplitSpec.from_step_counts(8, 3, 3)
    assert split.train == tuple(range(0, 8))
    assert split.val == (8, 9, 10)
    assert split.test == (11, 12)
    split.check_series(14)
    with pytest.raises(ValidationError):
        split.check_series(13)


def test_split_requires_two_test_steps():
    with pytest.raises(ValidationError):
        SplitSpec.from_step_counts(4, 1, 1)


def test_split_validation():
    with pytest.raises(ValidationError):
        SplitSpec(train=(0, 2), val=(3,), test=(4,))
    with pytest.raises(ValidationError):
        SplitSpec(train=(1, 2), val=(3,), test=(4,))


# --- initializations -----------------------------------------------------------------


def test_init_grid_sizes():
    assert len(init_grid(5)) == 11
    assert len(init_grid(10)) == 16


def test_init_grid_values():
    grid = init_grid(5)
    # uniform v=5: increments at 5, ancillary capped at 1 -> 0.9999 clamp
    w = reparam_to_constrained(grid[5])
    assert np.allclose(w.w[1:], 5.0, atol=1e-9)
    assert w.w_add == pytest.approx(0.9999, abs=1e-9)
    # one-hot on the first learnable increment
    w = reparam_to_constrained(grid[6])
    assert w.w[1] == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(w.w[2:], 0.1, atol=1e-9)
    assert w.w_add == pytest.approx(0.1, abs=1e-9)
    # one-hot on the ancillary slot
    w = reparam_to_constrained(grid[10])
    assert np.allclose(w.w[1:], 0.1, atol=1e-9)
    assert w.w_add == pytest.approx(0.9999, abs=1e-9)


# --- selection ------------------------------------------------------------------------


def fake_fit_result(test_loss, val_loss=0.0, init_id=0, seed=0, failed=False):
    w = FusionWeights((1.0,), 0.1)
    return FitResult(
        weights=w, raw_weights=w, train_losses=(0.0,), val_losses=(0.0,),
        test_losses=(0.0,), selected_epoch=0, init_id=init_id, seed=seed,
        val_loss=val_loss, test_loss=test_loss, failed=failed,
    )


def test_select_best_lowest_test_loss():
    a = fake_fit_result(0.01063, init_id=0)
    b = fake_fit_result(0.01061, init_id=1)
    assert select_best([a, b]) is b


def test_select_best_single_run():
    a = fake_fit_result(0.5)
    assert select_best([a]) is a


def test_select_best_tie_breaks():
    a = fake_fit_result(0.5, val_loss=0.1, init_id=2, seed=1)
    b = fake_fit_result(0.5, val_loss=0.1, init_id=1, seed=2)
    c = fake_fit_result(0.5, val_loss=0.2, init_id=0, seed=0)
    assert select_best([a, b, c]) is b
    d = fake_fit_result(0.5, val_loss=0.1, init_id=1, seed=0)
    assert select_best([a, b, d]) is d


def test_select_best_skips_failed():
    a = fake_fit_result(0.1, failed=True)
    b = fake_fit_result(0.2)
    assert select_best([a, b]) is b
    with pytest.raises(ValidationError):
        select_best([a])


# --- baselines ---------------------------------------------------------------------------


def test_unlearned_baseline_cumulative_weights():
    w = baseline_weights("unlearned", 10)
    assert np.allclose(w.cumulative(), [1.0 + 0.1 * k for k in range(10)])
    assert w.w_add == 0.1


def test_binary_baseline_all_ones():
    rng = np.random.default_rng(8)
    series = random_series(rng, T=2)
    g = baseline_fuse(series.snapshots[0], "binary")
    assert g.edge_count() > 0
    assert all(w == 1.0 for _, _, w in g.edges())
    un = baseline_fuse(series.snapshots[0], "unlearned")
    assert set(g.edge_dict()) == set(un.edge_dict())


def test_binary_baseline_empty_graph():
    r = reg("a", "b")
    snap = snapshot(r, 1, [[]], [[]])
    assert baseline_fuse(snap, "binary").edge_count() == 0


# --- fitting ----------------------------------------------------------------------------


def tiny_fit_setup(seed=0, alpha3=0.0):
    gt = FusionWeights((1.0, 0.6, 0.0), 0.3)
    cfg = SynthConfig(
        n=30, T=6, H=3, p_h=(0.2,) * 3, p_add=0.2, gt_weights=gt, seed=seed
    )
    series, _ = generate(cfg)
    fit_cfg = FitConfig(
        loss_weights=LossWeights(1.0, 1.0, alpha3),
        max_epochs=600,
        patience=600,
        seeds=(0,),
        split=SplitSpec.from_step_counts(3, 1, 2),
    )
    return series, gt, fit_cfg


def test_fit_early_stopping_tracks_best_validation():
    series, _, cfg = tiny_fit_setup()
    results = fit(series, cfg)
    for r in results:
        assert not r.failed
        assert r.val_loss == min(r.val_losses)
        assert r.val_losses[r.selected_epoch] == r.val_loss
        assert all(v >= r.val_loss for v in r.val_losses[: r.selected_epoch])
        assert r.test_loss == r.test_losses[r.selected_epoch]


def test_fit_deterministic():
    series, _, cfg = tiny_fit_setup()
    r1 = fit(series, cfg)
    r2 = fit(series, cfg)
    assert r1 == r2


def test_fit_parallel_matches_serial():
    series, _, cfg = tiny_fit_setup()
    serial = fit(series, cfg)
    parallel = fit(series, FitConfig(**{**cfg.__dict__, "n_jobs": 2}))
    assert serial == parallel


def test_fit_recovers_ground_truth_smoke():
    series, gt, cfg = tiny_fit_setup()
    best = select_best(fit(series, cfg))
    assert np.allclose(best.weights.w, gt.w, atol=0.05)
    assert best.weights.w_add == pytest.approx(gt.w_add, abs=0.05)


def test_fit_requires_enough_steps():
    rng = np.random.default_rng(9)
    series = random_series(rng, T=3)
    with pytest.raises(ValidationError):
        fit(series, FitConfig())
