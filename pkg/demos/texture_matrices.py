"""Walk through the three texture matrices on hand-sized regions.

Run with ``python demos/texture_matrices.py``. Every number printed here can
be checked by hand.
"""
import numpy as np

from cardiorad.texture import (glcm_features, glcm_from_grid, glrlm_features, glrlm_from_grid,
                               glszm_features, glszm_from_grid)

# A 3x3 slice. Level 0 would mean "outside the region"; here every pixel is inside.
slice_ = np.array([[1, 1, 2],
                   [1, 2, 2],
                   [2, 2, 3]])

# Co-occurrence along the first axis only. Pairs are counted in both
# directions, so the matrix comes out symmetric.
glcm = glcm_from_grid(slice_, num_levels=3, offsets=[(1, 0, 0)])
print("GLCM counts along (1,0,0):")
print(glcm.counts)
f = glcm_features(glcm)
print(f"contrast {f['Contrast']:.4f}, inverse difference {f['Id']:.4f}, "
      f"max probability {f['MaximumProbability']:.4f}\n")

# With all 13 directions the counts of every offset are summed before normalizing.
full = glcm_from_grid(slice_, num_levels=3)
print(f"all 13 offsets: {int(full.counts.sum())} ordered pairs, "
      f"contrast {glcm_features(full)['Contrast']:.4f}\n")

# Runs: a single row split into maximal constant stretches.
row = np.array([1, 1, 2, 2, 2, 3])[:, None, None]
runs = glrlm_from_grid(row, num_levels=3, directions=[(1, 0, 0)])
print("GLRLM (level x run length) along the row:")
print(runs.counts[0][:, :3])
f = glrlm_features(runs)
print(f"short run emphasis {f['ShortRunEmphasis']:.4f}, run percentage {f['RunPercentage']:.2f}\n")

# Zones: 26-connected blobs of equal level. Diagonal contact joins a zone.
zones = np.array([[1, 1, 2],
                  [1, 2, 2],
                  [3, 2, 2]])
szm = glszm_from_grid(zones, num_levels=3)
for level, sizes in enumerate(szm.counts, start=1):
    print(f"level {level}: zone sizes {[int(s) + 1 for s in np.flatnonzero(sizes)]}")
f = glszm_features(szm)
print(f"small area emphasis {f['SmallAreaEmphasis']:.4f}, zone percentage {f['ZonePercentage']:.4f}")
