"""The two non-embedding baselines: random and duration matching.

The random baseline fills the budget with a seeded shuffle. The duration
baseline matches the target's duration distribution: it buckets durations
into quantile bins of the target set and spends the budget across bins in
proportion to the target's duration mass, drawing uniformly inside each
bin. Useful as a control for "did embeddings matter, or just lengths?".
"""

import numpy as np

from corpus_select import duration_baseline, random_baseline

rng = np.random.default_rng(55)

# source skews long; the target skews short
source = np.concatenate([
    rng.lognormal(mean=2.2, sigma=0.4, size=40_000),   # long-form
    rng.lognormal(mean=1.2, sigma=0.4, size=10_000),   # short-form
])
target = rng.lognormal(mean=1.2, sigma=0.35, size=800)

print(f"source: {len(source)} utterances, median {np.median(source):.1f}s")
print(f"target: {len(target)} utterances, median {np.median(target):.1f}s\n")

rand = random_baseline(source, alpha=0.05, seed=1)
dur = duration_baseline(source, target, alpha=0.05, seed=1, bins=20)

for name, result in (("random", rand), ("duration", dur)):
    picked = source[result.indices]
    print(f"{name:>8}: {len(result.picks)} picks, median {np.median(picked):.1f}s, "
          f"selected {result.total_selected_s / 3600:.2f} h "
          f"(budget {result.budget_s / 3600:.2f} h)")

# quantify the distribution match: duration mass per target-quantile bin
edges = np.quantile(target, np.linspace(0, 1, 21))
inner = edges[1:-1]

def mass(values):
    bins = np.searchsorted(inner, values, side="left")
    out = np.zeros(20)
    np.add.at(out, bins, values)
    return out / out.sum()

target_mass = mass(target)
rand_mass = mass(source[rand.indices])
dur_mass = mass(source[dur.indices])
print(f"\nmax per-bin duration-mass gap vs target:")
print(f"  random:   {np.abs(rand_mass - target_mass).max():.3f}")
print(f"  duration: {np.abs(dur_mass - target_mass).max():.3f}")

# determinism: same seed, same picks
again = duration_baseline(source, target, alpha=0.05, seed=1, bins=20)
print(f"\nsame seed reproduces the duration baseline exactly: "
      f"{np.array_equal(again.indices, dur.indices)}")
print(f"bins=1 degenerates to the random baseline: "
      f"{np.array_equal(duration_baseline(source, target, 0.05, seed=1, bins=1).indices, rand.indices)}")
