"""The label semantic similarity matrix.

Each row rescales cosines so the self-similarity is 1 and the row's
least-related label sits at 0. Because every row uses its own minimum,
the matrix need not be symmetric.
"""

import numpy as np

from labelspace_align import build_similarity_matrix, similarity_row

# three directions in the plane: 0 deg, 45 deg, 90 deg
emb = np.array(
    [
        [1.0, 0.0],
        [np.sqrt(0.5), np.sqrt(0.5)],
        [0.0, 1.0],
    ]
)

sim = build_similarity_matrix(emb)
print("similarity matrix:")
print(np.round(sim.data, 3))
print(f"asymmetric: S[0,1]={sim.data[0, 1]:.3f} vs S[1,0]={sim.data[1, 0]:.3f}")

# row 1 (the diagonal direction) is equally close to both axes, so its
# row minimum is higher and everything rescales differently
print(f"\nrow minima actually used: {np.round(sim.row_min, 3)}")

# rows are affine in the cosines: order is always preserved
row = similarity_row(0, emb)
print(f"row 0 (float64 path): {np.round(row, 3)}")

# duplicate-direction labels cannot be rescaled; the row degenerates to ones
dup = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
sim_dup = build_similarity_matrix(dup)
print(f"\nduplicate labels 0 and 1 -> degenerate rows {sim_dup.epsilon_rows}")
print(np.round(sim_dup.data, 3))
