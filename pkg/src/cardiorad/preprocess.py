"""Region-of-interest extraction and gray-level discretization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyRegionError
from .io import ImageVolume, LabeledSegmentation

DEFAULT_BINS = 32

# values within this fraction of a bin edge snap to the upper bin, so that
# affine rescaling of the intensities cannot flip a level through rounding
_EDGE_SNAP = 1e-9


@dataclass(frozen=True)
class RegionOfInterest:
    structure: str
    phase: str
    indices: np.ndarray       # (N, 3) voxel coordinates, lexicographic order
    intensities: np.ndarray   # (N,)
    spacing: tuple[float, float, float]
    mask: np.ndarray          # boolean grid, dims of the source volume

    def __post_init__(self):
        if len(self.indices) == 0:
            raise EmptyRegionError(f"{self.phase} {self.structure}: region is empty")
        if len(self.indices) != len(self.intensities):
            raise ValueError("indices and intensities differ in length")

    @property
    def size(self) -> int:
        return len(self.intensities)

    @property
    def voxel_volume(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz


@dataclass(frozen=True)
class DiscretizedRegion:
    region: RegionOfInterest
    num_levels: int
    levels: np.ndarray        # (N,) integers in 1..num_levels, aligned with region.indices

    def level_grid(self) -> np.ndarray:
        """Levels on the region's bounding box, 0 outside the region."""
        idx = self.region.indices
        lo = idx.min(axis=0)
        shape = idx.max(axis=0) - lo + 1
        grid = np.zeros(shape, dtype=np.int64)
        grid[tuple((idx - lo).T)] = self.levels
        return grid

    @classmethod
    def from_level_grid(cls, grid, num_levels: int | None = None, structure="LV", phase="ED"):
        """Wrap an integer grid (0 = outside) as a region whose intensities are its levels."""
        grid = np.asarray(grid, dtype=np.int64)
        if grid.ndim == 2:
            grid = grid[:, :, None]
        mask = grid > 0
        idx = np.argwhere(mask)
        levels = grid[mask]
        ng = int(num_levels if num_levels is not None else max(int(levels.max(initial=1)), 2))
        roi = RegionOfInterest(structure, phase, idx, levels.astype(np.float64), (1.0, 1.0, 1.0), mask)
        return cls(roi, ng, levels)


def extract_region(volume: ImageVolume, seg: LabeledSegmentation, label: int,
                   structure: str, phase: str) -> RegionOfInterest:
    if volume.dims != seg.dims:
        raise ValueError(f"volume dims {volume.dims} != segmentation dims {seg.dims}")
    mask = seg.labels == label
    idx = np.argwhere(mask)
    if len(idx) == 0:
        raise EmptyRegionError(f"{phase} {structure}: label {label} absent from segmentation")
    mask.setflags(write=False)
    return RegionOfInterest(structure, phase, idx, volume.data[mask].copy(),
                            volume.spacing, mask)


def discretize(region: RegionOfInterest, n_bins: int | None = DEFAULT_BINS,
               bin_width: float | None = None) -> DiscretizedRegion:
    """Map intensities to gray levels ``1..Ng``.

    With ``bin_width`` set, levels are ``floor((x - min) / w) + 1`` and Ng is
    the highest level observed. Otherwise ``n_bins`` equal-width bins span the
    region's intensity range, the maximum falling in the top bin.
    """
    x = region.intensities
    lo, hi = float(x.min()), float(x.max())
    if bin_width is not None:
        if not bin_width > 0:
            raise ValueError("bin_width must be > 0")
        levels = np.floor((x - lo) / bin_width + _EDGE_SNAP).astype(np.int64) + 1
        return DiscretizedRegion(region, max(int(levels.max()), 1), levels)
    if n_bins is None or n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    if hi == lo:
        return DiscretizedRegion(region, n_bins, np.ones(len(x), dtype=np.int64))
    t = (x - lo) * (n_bins / (hi - lo))
    levels = np.minimum(np.floor(t + _EDGE_SNAP * n_bins).astype(np.int64) + 1, n_bins)
    return DiscretizedRegion(region, n_bins, levels)
