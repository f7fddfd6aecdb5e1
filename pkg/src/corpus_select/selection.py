"""Duration-budgeted subset selectors.

`batched_mmr` is the production selector: it prefilters candidates to the
top ceil(rho*N) by relevance, seeds the selection with the most relevant
candidate, then repeatedly commits the top B remaining candidates by
MMR score m_i = lam*r_i - (1-lam)*v_i until the selected duration reaches
the budget T = alpha * total duration. The diversity penalty v_i counts
only candidates committed in *previous* rounds, so diversity inside a
committed batch is deliberately not enforced; with B=1 and rho=1 the
procedure reduces exactly to greedy MMR.

`greedy_mmr_exact` is the reference selector for tests: no prefilter, no
batching, and v_i recomputed from scratch against the full selected set
at every step.

`random_baseline` and `duration_baseline` fill the same budget with a
seeded shuffle and with a target-duration-distribution match.

Everything here is deterministic: ties break toward the lower candidate
index, the batched selector contains no randomness at all, and the
baselines draw from Philox streams. Results are bit-identical for any
`threads` value because parallel blocks write disjoint slices.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from corpus_select.errors import EmptyCorpus, EmptyTargets, SmallPoolWarning
from corpus_select.relevance import (
    AggregationMode,
    FusionWeights,
    _as_matrix,
    max_similarity,
    relevance_multi_dataset,
    update_running_max,
)
from corpus_select.rng import generator
from corpus_select.store import CorpusManifest, TargetSet


@dataclass
class SelectionConfig:
    """Knobs of the batched selector.

    lam trades relevance (1.0) against diversity (0.0); alpha is the
    subset fraction of total duration; rho the prefilter fraction; weights
    default to uniform over the views in play. The seed only feeds the
    baselines: MMR selection itself has no randomness.
    """

    alpha: float
    lam: float = 0.7
    rho: float = 0.15
    batch_size: int = 1024
    weights: FusionWeights | None = None
    aggregation: AggregationMode = AggregationMode.MAX
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError(f"rho must be in (0, 1], got {self.rho}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class Pick:
    """One selected utterance with its scores at commit time."""

    rank: int
    index: int
    relevance: float
    diversity: float
    mmr: float
    cumulative_duration_s: float


@dataclass
class SelectionResult:
    picks: list[Pick]
    budget_s: float
    total_selected_s: float
    pool_size: int
    rounds: int
    exhausted: bool = False

    @property
    def indices(self) -> np.ndarray:
        return np.array([p.index for p in self.picks], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.picks)


def _durations(manifest) -> np.ndarray:
    if isinstance(manifest, CorpusManifest):
        return manifest.durations
    if hasattr(manifest, "__iter__") and not isinstance(manifest, np.ndarray):
        first = next(iter(manifest), None)
        if hasattr(first, "duration_s"):
            return np.array([r.duration_s for r in manifest], dtype=np.float64)
    return np.asarray(manifest, dtype=np.float64)


def _resolve_weights(weights: FusionWeights | None, view_names) -> FusionWeights:
    if weights is not None:
        return weights
    return FusionWeights.uniform(sorted(view_names))


def _ranked(indices: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Indices sorted by score descending, ties toward the lower index."""
    order = np.lexsort((indices, -scores))
    return indices[order]


def greedy_mmr_exact(
    relevance: np.ndarray,
    views: Mapping[str, np.ndarray],
    durations: np.ndarray,
    cfg: SelectionConfig,
) -> SelectionResult:
    """Reference greedy MMR: full candidate pool, one pick per step.

    Seeds with the argmax-relevance candidate, then each step picks the
    unselected candidate maximizing lam*r_i - (1-lam)*v_i, recomputing
    v_i (fused max similarity to the whole selected set) from scratch.
    Stops once cumulative duration reaches alpha * total duration.
    """
    r = np.asarray(relevance, dtype=np.float64)
    d = _durations(durations)
    n = r.shape[0]
    if n == 0:
        raise EmptyCorpus("no candidates to select from")
    if d.shape[0] != n:
        raise ValueError(f"relevance has {n} entries but durations {d.shape[0]}")
    weights = _resolve_weights(cfg.weights, views.keys())
    mats = {name: _as_matrix(views[name]).astype(np.float64) for name in weights.names}

    budget = cfg.alpha * float(d.sum())
    all_idx = np.arange(n)
    seed_idx = int(_ranked(all_idx, r)[0])
    picks = [
        Pick(1, seed_idx, float(r[seed_idx]), 0.0, cfg.lam * float(r[seed_idx]), float(d[seed_idx]))
    ]
    selected = [seed_idx]
    selected_mask = np.zeros(n, dtype=bool)
    selected_mask[seed_idx] = True
    total = float(d[seed_idx])
    exhausted = False

    while total < budget:
        remaining = all_idx[~selected_mask]
        if remaining.size == 0:
            exhausted = True
            break
        v = np.zeros(remaining.size, dtype=np.float64)
        for name, w in weights.weights.items():
            if w == 0.0:
                continue
            v += w * max_similarity(mats[name][remaining], mats[name][selected])
        np.clip(v, -1.0, 1.0, out=v)
        m = cfg.lam * r[remaining] - (1.0 - cfg.lam) * v
        local = np.lexsort((remaining, -m))[0]
        idx = int(remaining[local])
        total += float(d[idx])
        picks.append(
            Pick(len(picks) + 1, idx, float(r[idx]), float(v[local]), float(m[local]), total)
        )
        selected.append(idx)
        selected_mask[idx] = True

    return SelectionResult(picks, budget, total, pool_size=n, rounds=len(picks) - 1, exhausted=exhausted)


def batched_mmr(
    manifest,
    views: Mapping[str, np.ndarray],
    targets: TargetSet,
    cfg: SelectionConfig,
    *,
    threads: int = 1,
) -> SelectionResult:
    """Batched greedy MMR selection with a relevance prefilter.

    Relevance is computed once up front (fused across views, aggregated
    across target datasets) and frozen; only the diversity penalty evolves
    as batches commit, tracked as a per-view running max that each new
    batch folds into. The seed pick counts toward the budget before the
    first round's budget test.
    """
    d = _durations(manifest)
    n = d.shape[0]
    if n == 0:
        raise EmptyCorpus("no candidates to select from")
    weights = _resolve_weights(cfg.weights, views.keys())
    mats = {name: _as_matrix(views[name]) for name in weights.names}
    for name, mat in mats.items():
        if mat.shape[0] != n:
            raise ValueError(f"view {name!r} has {mat.shape[0]} rows, manifest {n}")

    budget = cfg.alpha * float(d.sum())
    r = relevance_multi_dataset(mats, targets, weights, cfg.aggregation, threads=threads)

    pool_size = min(n, max(1, math.ceil(cfg.rho * n)))
    pool = _ranked(np.arange(n), r)[:pool_size]
    expected_picks = math.ceil(cfg.alpha * n)
    if pool_size < 2 * expected_picks:
        warnings.warn(
            f"prefilter pool ({pool_size}) is below twice the expected pick "
            f"count ({expected_picks}); selection may exhaust it",
            SmallPoolWarning,
            stacklevel=2,
        )

    pool_rows = {name: mats[name][pool].astype(np.float64) for name in weights.names}
    r_pool = r[pool]

    seed_pos = 0  # pool is sorted by (-relevance, index)
    seed_idx = int(pool[seed_pos])
    total = float(d[seed_idx])
    picks = [Pick(1, seed_idx, float(r_pool[0]), 0.0, cfg.lam * float(r_pool[0]), total)]
    committed = np.zeros(pool_size, dtype=bool)
    committed[seed_pos] = True

    # per-view running max similarity to the committed set
    vmax = {
        name: np.clip(
            rows @ rows[seed_pos].astype(np.float64), -1.0, 1.0
        )
        for name, rows in pool_rows.items()
    }

    w_arr = weights.weights
    rounds = 0
    exhausted = False
    while total < budget:
        remaining = np.flatnonzero(~committed)
        if remaining.size == 0:
            exhausted = True
            break
        rounds += 1
        v = np.zeros(pool_size, dtype=np.float64)
        for name, w in w_arr.items():
            if w == 0.0:
                continue
            v += w * vmax[name]
        np.clip(v, -1.0, 1.0, out=v)
        m = cfg.lam * r_pool - (1.0 - cfg.lam) * v

        sub = np.lexsort((pool[remaining], -m[remaining]))[: cfg.batch_size]
        batch_pos = remaining[sub]
        for pos in batch_pos:
            idx = int(pool[pos])
            total += float(d[idx])
            picks.append(
                Pick(len(picks) + 1, idx, float(r_pool[pos]), float(v[pos]), float(m[pos]), total)
            )
        committed[batch_pos] = True
        for name, rows in pool_rows.items():
            update_running_max(rows, rows[batch_pos], vmax[name], threads=threads)

    return SelectionResult(picks, budget, total, pool_size=pool_size, rounds=rounds, exhausted=exhausted)


def random_baseline(manifest, alpha: float, seed: int) -> SelectionResult:
    """Seeded uniform shuffle, taking the prefix that fills the budget."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    d = _durations(manifest)
    n = d.shape[0]
    if n == 0:
        raise EmptyCorpus("no candidates to select from")
    budget = alpha * float(d.sum())
    perm = generator(seed, "baseline").permutation(n)
    picks: list[Pick] = []
    total = 0.0
    for idx in perm:
        idx = int(idx)
        total += float(d[idx])
        picks.append(Pick(len(picks) + 1, idx, 0.0, 0.0, 0.0, total))
        if total >= budget:
            break
    return SelectionResult(picks, budget, total, pool_size=n, rounds=0, exhausted=total < budget)


def duration_baseline(
    manifest,
    target_durations: Sequence[float] | np.ndarray,
    alpha: float,
    seed: int,
    bins: int = 20,
) -> SelectionResult:
    """Fill the budget while matching the target duration distribution.

    Buckets durations into `bins` quantile bins of the target durations and
    allocates the budget across bins proportional to the target's duration
    mass in each bin. Within a bin, source utterances are drawn by seeded
    shuffle without replacement; a bin that runs out spills its shortfall
    to the nearest bin with rows left (ties toward the lower bin). With
    bins=1 this reduces to `random_baseline` under the same seed.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    d = _durations(manifest)
    n = d.shape[0]
    if n == 0:
        raise EmptyCorpus("no candidates to select from")
    t = np.asarray(target_durations, dtype=np.float64)
    if t.size == 0:
        raise EmptyTargets("duration baseline needs target durations")

    budget = alpha * float(d.sum())
    edges = np.quantile(t, np.linspace(0.0, 1.0, bins + 1))
    inner = edges[1:-1]
    # left-closed bins: ties in the quantile edges keep items equal to a
    # point-mass target in that bin rather than lumping everything above it
    target_bin = np.searchsorted(inner, t, side="left")
    source_bin = np.searchsorted(inner, d, side="left")

    mass = np.zeros(bins, dtype=np.float64)
    np.add.at(mass, target_bin, t)
    mass /= mass.sum()
    alloc = budget * mass

    rng = generator(seed, "baseline")
    queues: dict[int, np.ndarray] = {}
    cursors: dict[int, int] = {}
    for q in range(bins):
        members = np.flatnonzero(source_bin == q)
        if members.size:
            queues[q] = rng.permutation(members)
            cursors[q] = 0

    picked: list[int] = []
    total = 0.0

    def _take_from(q: int) -> float | None:
        cur = cursors.get(q)
        if cur is None or cur >= queues[q].size:
            return None
        idx = int(queues[q][cur])
        cursors[q] = cur + 1
        picked.append(idx)
        return float(d[idx])

    shortfall = np.zeros(bins, dtype=np.float64)
    for q in range(bins):
        got = 0.0
        while got < alloc[q]:
            dur = _take_from(q)
            if dur is None:
                break
            got += dur
            total += dur
        shortfall[q] = max(alloc[q] - got, 0.0)

    def _spill_order(q: int):
        for dist in range(1, bins):
            if q - dist >= 0:
                yield q - dist
            if q + dist < bins:
                yield q + dist

    for q in range(bins):
        need = shortfall[q]
        if need <= 1e-12:
            continue
        for nb in _spill_order(q):
            while need > 1e-12:
                dur = _take_from(nb)
                if dur is None:
                    break
                need -= dur
                total += dur
            if need <= 1e-12:
                break

    # guard against float crumbs in the allocation split
    scan = 0
    while total < budget and scan < bins:
        dur = _take_from(scan)
        if dur is None:
            scan += 1
            continue
        total += dur

    picks = []
    cum = 0.0
    for rank, idx in enumerate(picked, start=1):
        cum += float(d[idx])
        picks.append(Pick(rank, idx, 0.0, 0.0, 0.0, cum))
    return SelectionResult(
        picks, budget, total, pool_size=n, rounds=0, exhausted=total < budget
    )
