import math

import numpy as np
import pytest

from corpus_select.errors import EmptyCorpus, SmallPoolWarning
from corpus_select.relevance import AggregationMode, FusionWeights, relevance_multi_dataset
from corpus_select.selection import (
    SelectionConfig,
    batched_mmr,
    duration_baseline,
    greedy_mmr_exact,
    random_baseline,
)
from corpus_select.store import TargetDataset, TargetSet
from conftest import unit_rows


# ---------- independent reference: a straightforward, stateless rendering
# of the batched procedure (recomputes diversity against the committed set
# every round; no prefilter bookkeeping, no incremental maxima) ----------

def reference_batched(durations, views, target_rows, weights, lam, alpha, rho, batch):
    d = np.asarray(durations, dtype=np.float64)
    n = d.size
    names = list(weights.weights)

    def fused_max(indices, against):
        total = np.zeros(len(indices))
        for name in names:
            mat = np.asarray(views[name], dtype=np.float64)
            sims = mat[indices] @ np.asarray(against[name], dtype=np.float64).T
            total += weights.weights[name] * sims.max(axis=1)
        return total

    budget = alpha * d.sum()
    r = fused_max(np.arange(n), target_rows)
    order = sorted(range(n), key=lambda i: (-r[i], i))
    pool = order[: max(1, math.ceil(rho * n))]

    selected = [pool[0]]
    total = d[pool[0]]
    while total < budget:
        remaining = [i for i in pool if i not in selected]
        if not remaining:
            break
        v = fused_max(
            np.array(remaining), {name: np.asarray(views[name])[selected] for name in names}
        )
        m = lam * r[remaining] - (1 - lam) * v
        ranked = sorted(range(len(remaining)), key=lambda p: (-m[p], remaining[p]))
        for p in ranked[:batch]:
            selected.append(remaining[p])
            total += d[remaining[p]]
    return selected, budget, total


def random_instance(rng, n=60, k_views=2, m_datasets=1, d=8, targets_per=5):
    views = {f"v{k}": unit_rows(rng, n, d) for k in range(k_views)}
    durations = rng.uniform(1.0, 10.0, size=n)
    datasets = [
        TargetDataset(f"ds{m}", {name: unit_rows(rng, targets_per, d) for name in views})
        for m in range(m_datasets)
    ]
    return views, durations, TargetSet(datasets)


class TestGreedyExact:
    def test_hand_worked_example(self):
        """Three candidates, target (1,0), lam=0.7, budget 2: picks [0, 2]."""
        cands = np.array([[1.0, 0.0], [0.0, 1.0], [0.7071, 0.7071]], dtype=np.float32)
        views = {"v": cands}
        r = np.array([1.0, 0.0, 0.70710678])
        cfg = SelectionConfig(alpha=2.0 / 3.0, lam=0.7, weights=FusionWeights({"v": 1.0}))
        result = greedy_mmr_exact(r, views, np.ones(3), cfg)
        assert [p.index for p in result.picks] == [0, 2]
        assert result.picks[0].relevance == pytest.approx(1.0)
        # second step: index 1 scores 0.7*0 - 0.3*0 = 0; index 2 scores ~0.2828
        assert result.picks[1].mmr == pytest.approx(0.4 * 0.70710678, abs=1e-4)
        assert result.picks[1].diversity == pytest.approx(0.70710678, abs=1e-4)

    def test_lambda_one_pure_relevance(self, rng):
        views, durations, targets = random_instance(rng, n=40)
        weights = FusionWeights.uniform(views)
        r = relevance_multi_dataset(views, targets, weights)
        cfg = SelectionConfig(alpha=0.4, lam=1.0, weights=weights)
        result = greedy_mmr_exact(r, views, durations, cfg)
        by_relevance = sorted(range(40), key=lambda i: (-r[i], i))
        assert [p.index for p in result.picks] == by_relevance[: len(result.picks)]

    def test_lambda_zero_pure_diversity(self, rng):
        """Second pick minimizes max similarity to the first."""
        views, durations, targets = random_instance(rng, n=30, k_views=1)
        weights = FusionWeights.uniform(views)
        r = relevance_multi_dataset(views, targets, weights)
        cfg = SelectionConfig(alpha=0.2, lam=0.0, weights=weights)
        result = greedy_mmr_exact(r, views, durations, cfg)
        first = result.picks[0].index
        mat = views["v0"].astype(np.float64)
        sims = mat @ mat[first]
        sims[first] = np.inf
        assert result.picks[1].index == int(np.argmin(sims))

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            greedy_mmr_exact(np.array([]), {"v": np.zeros((0, 2))}, np.array([]), SelectionConfig(alpha=0.5))


class TestBatchedMMR:
    def test_b1_rho1_equals_exact(self, rng):
        for _ in range(5):
            views, durations, targets = random_instance(
                rng, n=50, k_views=int(rng.integers(1, 4)), m_datasets=int(rng.integers(1, 3))
            )
            weights = FusionWeights.uniform(views)
            lam = float(rng.choice([0.0, 0.3, 0.7, 1.0]))
            cfg = SelectionConfig(alpha=0.3, lam=lam, rho=1.0, batch_size=1, weights=weights)
            r = relevance_multi_dataset(views, targets, weights)
            exact = greedy_mmr_exact(r, views, durations, cfg)
            batched = batched_mmr(durations, views, targets, cfg)
            assert [p.index for p in batched.picks] == [p.index for p in exact.picks]

    def test_matches_reference_implementation(self, rng):
        """N=500, 2 views, 20 targets, alpha=.1 rho=.5 B=8: same pick sequence."""
        views, durations, targets = random_instance(
            rng, n=500, k_views=2, m_datasets=1, targets_per=20
        )
        weights = FusionWeights.uniform(views)
        cfg = SelectionConfig(alpha=0.1, lam=0.7, rho=0.5, batch_size=8, weights=weights)
        result = batched_mmr(durations, views, targets, cfg)

        ref_picks, ref_budget, ref_total = reference_batched(
            durations, views, targets.datasets[0].views, weights, 0.7, 0.1, 0.5, 8
        )
        assert [p.index for p in result.picks] == ref_picks
        assert result.budget_s == pytest.approx(ref_budget)
        assert result.total_selected_s == pytest.approx(ref_total)

    def test_budget_bounds_and_prefilter_containment(self, rng):
        views, durations, targets = random_instance(rng, n=400, k_views=2, targets_per=20)
        weights = FusionWeights.uniform(views)
        cfg = SelectionConfig(alpha=0.1, lam=0.7, rho=0.5, batch_size=8, weights=weights)
        result = batched_mmr(durations, views, targets, cfg)
        d_max = durations.max()
        assert result.budget_s <= result.total_selected_s < result.budget_s + cfg.batch_size * d_max
        r = relevance_multi_dataset(views, targets, weights)
        pool_threshold = np.sort(r)[::-1][result.pool_size - 1]
        for pick in result.picks:
            assert pick.relevance >= pool_threshold - 1e-12

    def test_budget_smaller_than_any_duration_yields_seed_only(self, rng):
        """The seed commits before the loop test, so a tiny budget still picks one."""
        views, durations, targets = random_instance(rng, n=20)
        durations = np.full(20, 10.0)
        cfg = SelectionConfig(alpha=0.001, rho=1.0, weights=FusionWeights.uniform(views))
        result = batched_mmr(durations, views, targets, cfg)
        assert len(result.picks) == 1
        assert result.total_selected_s == 10.0

    def test_lambda_one_any_batch_is_relevance_order(self, rng):
        views, durations, targets = random_instance(rng, n=120)
        weights = FusionWeights.uniform(views)
        r = relevance_multi_dataset(views, targets, weights)
        cfg = SelectionConfig(alpha=0.3, lam=1.0, rho=1.0, batch_size=7, weights=weights)
        result = batched_mmr(durations, views, targets, cfg)
        by_relevance = sorted(range(120), key=lambda i: (-r[i], i))
        assert [p.index for p in result.picks] == by_relevance[: len(result.picks)]

    def test_deterministic_across_threads(self, rng):
        views, durations, targets = random_instance(rng, n=300, k_views=2, targets_per=15)
        cfg = SelectionConfig(alpha=0.1, rho=0.5, batch_size=16, weights=FusionWeights.uniform(views))
        results = [
            batched_mmr(durations, views, targets, cfg, threads=t) for t in (1, 4, 8)
        ]
        base = [(p.index, p.relevance, p.diversity, p.mmr) for p in results[0].picks]
        for other in results[1:]:
            assert [(p.index, p.relevance, p.diversity, p.mmr) for p in other.picks] == base

    def test_permutation_covariance(self, rng):
        """Permuting candidates permutes the pick sequence identically."""
        views, durations, targets = random_instance(rng, n=80)
        weights = FusionWeights.uniform(views)
        cfg = SelectionConfig(alpha=0.2, rho=0.6, batch_size=4, weights=weights)
        base = batched_mmr(durations, views, targets, cfg)

        perm = rng.permutation(80)
        p_views = {name: mat[perm] for name, mat in views.items()}
        permuted = batched_mmr(durations[perm], p_views, targets, cfg)
        inverse = np.empty(80, dtype=np.int64)
        inverse[perm] = np.arange(80)
        assert [p.index for p in base.picks] == [int(perm[p.index]) for p in permuted.picks]
        del inverse

    def test_small_pool_warns(self, rng):
        views, durations, targets = random_instance(rng, n=100)
        cfg = SelectionConfig(alpha=0.5, rho=0.05, weights=FusionWeights.uniform(views))
        with pytest.warns(SmallPoolWarning):
            batched_mmr(durations, views, targets, cfg)

    def test_cumulative_duration_strictly_increasing(self, rng):
        views, durations, targets = random_instance(rng, n=100)
        cfg = SelectionConfig(alpha=0.3, rho=1.0, batch_size=8, weights=FusionWeights.uniform(views))
        result = batched_mmr(durations, views, targets, cfg)
        cums = [p.cumulative_duration_s for p in result.picks]
        assert all(b > a for a, b in zip(cums, cums[1:]))
        indices = [p.index for p in result.picks]
        assert len(set(indices)) == len(indices)


class TestRandomBaseline:
    def test_alpha_one_selects_everything(self, rng):
        durations = rng.uniform(1, 5, size=30)
        result = random_baseline(durations, 1.0, seed=9)
        assert sorted(p.index for p in result.picks) == list(range(30))

    def test_same_seed_same_result(self, rng):
        durations = rng.uniform(1, 5, size=50)
        a = random_baseline(durations, 0.2, seed=7)
        b = random_baseline(durations, 0.2, seed=7)
        assert [p.index for p in a.picks] == [p.index for p in b.picks]
        c = random_baseline(durations, 0.2, seed=8)
        assert [p.index for p in c.picks] != [p.index for p in a.picks]

    def test_uniform_durations_exact_count(self):
        result = random_baseline(np.ones(10_000), 0.05, seed=1)
        assert len(result.picks) == 500
        assert all(p.relevance == 0.0 and p.mmr == 0.0 for p in result.picks)


class TestDurationBaseline:
    def test_matches_target_histogram(self, rng):
        """Same source/target distribution: per-bin duration mass within 2%."""
        source = rng.lognormal(mean=1.5, sigma=0.5, size=50_000)
        target = rng.lognormal(mean=1.5, sigma=0.5, size=1_000)
        result = duration_baseline(source, target, alpha=0.05, seed=3, bins=20)
        edges = np.quantile(target, np.linspace(0, 1, 21))
        inner = edges[1:-1]
        target_mass = np.zeros(20)
        np.add.at(target_mass, np.searchsorted(inner, target, side="right"), target)
        target_mass /= target_mass.sum()
        picked = source[[p.index for p in result.picks]]
        picked_mass = np.zeros(20)
        np.add.at(picked_mass, np.searchsorted(inner, picked, side="right"), picked)
        picked_mass /= picked_mass.sum()
        assert np.abs(picked_mass - target_mass).max() <= 0.02

    def test_constant_target_drains_single_bin(self, rng):
        source = np.concatenate([np.full(50, 2.0), np.full(50, 40.0)])
        target = np.full(30, 2.0)
        result = duration_baseline(source, target, alpha=0.3, seed=0, bins=5)
        # budget = 0.3 * (100 + 2000) = 630s; the 2s bin holds 100s total, so
        # it must drain completely before anything spills
        picked = {p.index for p in result.picks}
        assert set(range(50)) <= picked

    def test_one_bin_equals_random_baseline(self, rng):
        durations = rng.uniform(0.5, 20.0, size=400)
        target = rng.uniform(0.5, 20.0, size=50)
        a = duration_baseline(durations, target, alpha=0.1, seed=5, bins=1)
        b = random_baseline(durations, 0.1, seed=5)
        assert [p.index for p in a.picks] == [p.index for p in b.picks]

    def test_total_meets_budget(self, rng):
        source = rng.uniform(1, 10, size=2000)
        target = rng.uniform(1, 10, size=100)
        result = duration_baseline(source, target, alpha=0.2, seed=2, bins=10)
        assert result.total_selected_s >= result.budget_s
        assert not result.exhausted


class TestConfigValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"alpha": 0.0},
            {"alpha": 1.5},
            {"alpha": 0.1, "lam": -0.1},
            {"alpha": 0.1, "lam": 1.01},
            {"alpha": 0.1, "rho": 0.0},
            {"alpha": 0.1, "batch_size": 0},
        ],
    )
    def test_rejects_out_of_range(self, kwargs):
        with pytest.raises(ValueError):
            SelectionConfig(**kwargs)
