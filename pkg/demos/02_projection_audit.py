"""Gaussian random projection and the cosine-preservation audit.

Projects high-dimensional embeddings to 256 dims and measures how well
pairwise cosines survive, as the Pearson correlation between pre- and
post-projection cosines over sampled row pairs. The punchline: the
correlation depends on how much cosine spread the data has. Clustered
(structured) embeddings audit near 0.97; isotropic noise has almost no
cosine spread to preserve, so the same projection audits near 0.28 even
though its per-pair distortion is identical.
"""

import numpy as np

from corpus_select import ProjectionSpec, audit_cosine_preservation, make_projection, project_view
from corpus_select.store import EmbeddingView, _normalize_rows

rng = np.random.default_rng(21)
n, d_hi, d_lo = 4000, 3072, 256

print(f"projection: {d_hi} -> {d_lo} dims, entries N(0, 1/{d_lo})")
matrix = make_projection(ProjectionSpec(d_hi, d_lo, seed=5))
print(f"matrix shape {matrix.shape}, sample std {matrix.std():.4f} "
      f"(target {1 / np.sqrt(d_lo):.4f})\n")

# structured embeddings: 15 clusters, per-vector noise norm ~0.5
centers, _ = _normalize_rows(rng.standard_normal((15, d_hi)).astype(np.float32))
assign = rng.integers(0, 15, size=n)
spread = 0.5 / np.sqrt(d_hi)
structured = centers.astype(np.float64)[assign] + spread * rng.standard_normal((n, d_hi))
structured_view = EmbeddingView("structured", d_hi, structured.astype(np.float32))

# isotropic noise: same shape, no structure at all
noise_view = EmbeddingView("noise", d_hi, rng.standard_normal((n, d_hi), dtype=np.float32))

for view in (structured_view, noise_view):
    lo = project_view(view, matrix)
    corr = audit_cosine_preservation(view, lo, pair_count=100_000, seed=9)
    hi_rows, _ = _normalize_rows(view.rows)
    i = rng.integers(0, n, 20_000)
    j = (i + 1 + rng.integers(0, n - 1, 20_000)) % n
    cos_spread = np.einsum("ij,ij->i", hi_rows[i], hi_rows[j], dtype=np.float64).std()
    print(f"{view.name:>10}: cosine spread {cos_spread:.4f} -> audit correlation {corr:.4f}")

print(
    "\nthe per-pair projection distortion is ~1/sqrt(256) = 0.0625 either way;"
    "\ncorrelation ~= spread / sqrt(spread^2 + 0.0625^2), so structure decides."
)

# determinism: the same spec always reproduces the same matrix, bitwise
again = make_projection(ProjectionSpec(d_hi, d_lo, seed=5))
print(f"\nsame seed reproduces the matrix bitwise: {np.array_equal(matrix, again)}")
