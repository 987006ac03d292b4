"""Texture matrices (co-occurrence, run length, size zone) and their features.

All builders work on the integer level grid of a :class:`DiscretizedRegion`
(0 marks voxels outside the region). Offsets are in voxel units; anisotropic
spacing is not taken into account.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import ndimage

from .preprocess import DiscretizedRegion


def _directions() -> tuple[tuple[int, int, int], ...]:
    # one representative of each +-pair: first nonzero component positive
    out = []
    for d in itertools.product((-1, 0, 1), repeat=3):
        nz = [c for c in d if c != 0]
        if nz and nz[0] > 0:
            out.append(d)
    return tuple(out)


DIRECTIONS = _directions()

GLCM_FEATURES = (
    "Autocorrelation", "ClusterProminence", "ClusterShade", "ClusterTendency", "Contrast",
    "Correlation", "DifferenceAverage", "DifferenceEntropy", "DifferenceVariance",
    "JointEnergy", "JointEntropy", "Imc1", "Imc2", "Id", "Idn", "Idm", "Idmn",
    "InverseVariance", "MaximumProbability", "SumAverage", "SumEntropy", "SumSquares",
)
GLRLM_FEATURES = (
    "ShortRunEmphasis", "LongRunEmphasis", "GrayLevelNonUniformity",
    "GrayLevelNonUniformityNormalized", "RunLengthNonUniformity",
    "RunLengthNonUniformityNormalized", "RunPercentage", "GrayLevelVariance", "RunVariance",
    "RunEntropy", "LowGrayLevelRunEmphasis", "HighGrayLevelRunEmphasis",
    "ShortRunLowGrayLevelEmphasis", "ShortRunHighGrayLevelEmphasis",
    "LongRunLowGrayLevelEmphasis", "LongRunHighGrayLevelEmphasis",
)
GLSZM_FEATURES = (
    "SmallAreaEmphasis", "LargeAreaEmphasis", "GrayLevelNonUniformity",
    "GrayLevelNonUniformityNormalized", "SizeZoneNonUniformity",
    "SizeZoneNonUniformityNormalized", "ZonePercentage", "GrayLevelVariance", "ZoneVariance",
    "ZoneEntropy", "LowGrayLevelZoneEmphasis", "HighGrayLevelZoneEmphasis",
    "SmallAreaLowGrayLevelEmphasis", "SmallAreaHighGrayLevelEmphasis",
    "LargeAreaLowGrayLevelEmphasis", "LargeAreaHighGrayLevelEmphasis",
)


def _entropy_bits(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum()) + 0.0


# ---------------------------------------------------------------------------
# GLCM

@dataclass(frozen=True)
class CooccurrenceMatrix:
    num_levels: int
    counts: np.ndarray      # (Ng, Ng) symmetric pair counts, summed over offsets
    entries: np.ndarray     # counts normalised to probabilities
    offsets: tuple[tuple[int, int, int], ...]
    distance: int
    degenerate: bool = False


def _shifted_pairs(grid: np.ndarray, offset) -> tuple[np.ndarray, np.ndarray]:
    src, dst = [], []
    for d, n in zip(offset, grid.shape):
        if abs(d) >= n:
            return np.empty(0, np.int64), np.empty(0, np.int64)
        src.append(slice(max(0, -d), n - max(0, d)))
        dst.append(slice(max(0, d), n - max(0, -d)))
    a = grid[tuple(src)].ravel()
    b = grid[tuple(dst)].ravel()
    keep = (a > 0) & (b > 0)
    return a[keep], b[keep]


def glcm_from_grid(grid, num_levels: int, distance: int = 1, offsets=None) -> CooccurrenceMatrix:
    grid = np.asarray(grid, dtype=np.int64)
    if grid.ndim == 2:
        grid = grid[:, :, None]
    offsets = tuple(tuple(distance * c for c in d) for d in DIRECTIONS) if offsets is None \
        else tuple(tuple(o) for o in offsets)
    ng = num_levels
    counts = np.zeros(ng * ng, dtype=np.int64)
    for off in offsets:
        a, b = _shifted_pairs(grid, off)
        counts += np.bincount((a - 1) * ng + (b - 1), minlength=ng * ng)
    counts = counts.reshape(ng, ng)
    counts = counts + counts.T
    total = counts.sum()
    if total == 0:
        # no in-region pairs: single-entry convention at the region's level
        g = int(grid[grid > 0][0])
        entries = np.zeros((ng, ng))
        entries[g - 1, g - 1] = 1.0
        return CooccurrenceMatrix(ng, counts, entries, offsets, distance, degenerate=True)
    return CooccurrenceMatrix(ng, counts, counts / total, offsets, distance)


def build_glcm(region: DiscretizedRegion, distance: int = 1, offsets=None) -> CooccurrenceMatrix:
    return glcm_from_grid(region.level_grid(), region.num_levels, distance, offsets)


def glcm_features(m: CooccurrenceMatrix) -> dict[str, float]:
    p = m.entries
    ng = m.num_levels
    i = np.arange(1, ng + 1, dtype=np.float64)[:, None]
    j = i.T
    px = p.sum(axis=1)
    py = p.sum(axis=0)
    lv = i[:, 0]
    mux = float(px @ lv)
    muy = float(py @ lv)
    sigx = float(np.sqrt(px @ (lv - mux) ** 2))
    sigy = float(np.sqrt(py @ (lv - muy) ** 2))

    k_sum = (i + j).astype(np.int64).ravel()
    p_sum = np.bincount(k_sum, weights=p.ravel(), minlength=2 * ng + 1)
    k_diff = np.abs(i - j).astype(np.int64).ravel()
    p_diff = np.bincount(k_diff, weights=p.ravel(), minlength=ng)
    kd = np.arange(len(p_diff), dtype=np.float64)
    ks = np.arange(len(p_sum), dtype=np.float64)

    autocorr = float((i * j * p).sum())
    centred = i + j - mux - muy
    diff_avg = float(kd @ p_diff)

    hx = _entropy_bits(px)
    hy = _entropy_bits(py)
    hxy = _entropy_bits(p)
    pxy = np.outer(px, py)
    nzp = p > 0
    hxy1 = float(-(p[nzp] * np.log2(pxy[nzp])).sum())
    hxy2 = _entropy_bits(pxy)
    imc1 = (hxy - hxy1) / max(hx, hy) if max(hx, hy) > 0 else 0.0
    imc2 = float(np.sqrt(max(0.0, 1.0 - np.exp(-2.0 * (hxy2 - hxy)))))

    if sigx * sigy > 0:
        correlation = (autocorr - mux * muy) / (sigx * sigy)
    else:
        correlation = 1.0

    with np.errstate(divide="ignore"):
        inv_var = float((p_diff[1:] / kd[1:] ** 2).sum())

    return {
        "Autocorrelation": autocorr,
        "ClusterProminence": float((centred ** 4 * p).sum()),
        "ClusterShade": float((centred ** 3 * p).sum()),
        "ClusterTendency": float((centred ** 2 * p).sum()),
        "Contrast": float(((i - j) ** 2 * p).sum()),
        "Correlation": float(correlation),
        "DifferenceAverage": diff_avg,
        "DifferenceEntropy": _entropy_bits(p_diff),
        "DifferenceVariance": float(((kd - diff_avg) ** 2 * p_diff).sum()),
        "JointEnergy": float((p * p).sum()),
        "JointEntropy": hxy,
        "Imc1": float(imc1),
        "Imc2": imc2,
        "Id": float((p / (1 + np.abs(i - j))).sum()),
        "Idn": float((p / (1 + np.abs(i - j) / ng)).sum()),
        "Idm": float((p / (1 + (i - j) ** 2)).sum()),
        "Idmn": float((p / (1 + (i - j) ** 2 / ng ** 2)).sum()),
        "InverseVariance": inv_var,
        "MaximumProbability": float(p.max()),
        "SumAverage": float(ks @ p_sum),
        "SumEntropy": _entropy_bits(p_sum),
        "SumSquares": float(((i - mux) ** 2 * p).sum()),
    }


# ---------------------------------------------------------------------------
# GLRLM

@dataclass(frozen=True)
class RunLengthMatrix:
    num_levels: int
    counts: np.ndarray      # (n_directions, Ng, Lmax) run counts
    directions: tuple[tuple[int, int, int], ...]
    voxel_count: int

    @property
    def max_run_length(self) -> int:
        return self.counts.shape[2]

    def runs_per_direction(self) -> np.ndarray:
        return self.counts.sum(axis=(1, 2))

    def aggregated(self) -> np.ndarray:
        return self.counts.sum(axis=0)


@njit(cache=True, nogil=True)
def _runs_along(grid, dx, dy, dz, ng, lmax):
    nx, ny, nz = grid.shape
    out = np.zeros((ng, lmax), dtype=np.int64)
    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                g = grid[x, y, z]
                if g == 0:
                    continue
                px, py, pz = x - dx, y - dy, z - dz
                if 0 <= px < nx and 0 <= py < ny and 0 <= pz < nz and grid[px, py, pz] == g:
                    continue
                length = 1
                qx, qy, qz = x + dx, y + dy, z + dz
                while 0 <= qx < nx and 0 <= qy < ny and 0 <= qz < nz and grid[qx, qy, qz] == g:
                    length += 1
                    qx += dx
                    qy += dy
                    qz += dz
                out[g - 1, length - 1] += 1
    return out


def glrlm_from_grid(grid, num_levels: int, directions=None) -> RunLengthMatrix:
    grid = np.ascontiguousarray(grid, dtype=np.int64)
    if grid.ndim == 2:
        grid = grid[:, :, None]
    directions = DIRECTIONS if directions is None else tuple(tuple(d) for d in directions)
    lmax = max(grid.shape)
    counts = np.stack([_runs_along(grid, d[0], d[1], d[2], num_levels, lmax) for d in directions])
    return RunLengthMatrix(num_levels, counts, directions, int((grid > 0).sum()))


def build_glrlm(region: DiscretizedRegion, directions=None) -> RunLengthMatrix:
    return glrlm_from_grid(region.level_grid(), region.num_levels, directions)


def _emphasis_features(P: np.ndarray, n_voxels: int) -> np.ndarray:
    """The 16 weighted sums shared by run-length and size-zone matrices.

    ``P`` is (Ng, S): rows gray level, columns run length / zone size.
    """
    n = P.sum()
    ng, s = P.shape
    i = np.arange(1, ng + 1, dtype=np.float64)[:, None]
    j = np.arange(1, s + 1, dtype=np.float64)[None, :]
    p = P / n
    rows = P.sum(axis=1)
    cols = P.sum(axis=0)
    mu_i = float((p * i).sum())
    mu_j = float((p * j).sum())
    values = [
        (p / j ** 2).sum(),
        (p * j ** 2).sum(),
        (rows ** 2).sum() / n,
        (rows ** 2).sum() / n ** 2,
        (cols ** 2).sum() / n,
        (cols ** 2).sum() / n ** 2,
        n / n_voxels,
        (p * (i - mu_i) ** 2).sum(),
        (p * (j - mu_j) ** 2).sum(),
        _entropy_bits(p),
        (p / i ** 2).sum(),
        (p * i ** 2).sum(),
        (p / (i ** 2 * j ** 2)).sum(),
        (p * i ** 2 / j ** 2).sum(),
        (p * j ** 2 / i ** 2).sum(),
        (p * i ** 2 * j ** 2).sum(),
    ]
    return np.array(values, dtype=np.float64)


def glrlm_features(m: RunLengthMatrix) -> dict[str, float]:
    """Features per direction, then the mean over directions."""
    per_dir = np.stack([_emphasis_features(P, m.voxel_count) for P in m.counts])
    return {name: float(v) for name, v in zip(GLRLM_FEATURES, per_dir.mean(axis=0))}


# ---------------------------------------------------------------------------
# GLSZM

_CONNECTIVITY = np.ones((3, 3, 3), dtype=bool)   # 26-connected zones


@dataclass(frozen=True)
class SizeZoneMatrix:
    num_levels: int
    counts: np.ndarray      # (Ng, Zmax) zone counts
    voxel_count: int

    @property
    def max_zone_size(self) -> int:
        return self.counts.shape[1]

    @property
    def num_zones(self) -> int:
        return int(self.counts.sum())


def glszm_from_grid(grid, num_levels: int) -> SizeZoneMatrix:
    grid = np.asarray(grid, dtype=np.int64)
    if grid.ndim == 2:
        grid = grid[:, :, None]
    n_vox = int((grid > 0).sum())
    counts = np.zeros((num_levels, max(n_vox, 1)), dtype=np.int64)
    for g in np.unique(grid[grid > 0]):
        labels, n = ndimage.label(grid == g, structure=_CONNECTIVITY)
        sizes = np.bincount(labels.ravel())[1:]
        counts[g - 1] += np.bincount(sizes, minlength=counts.shape[1] + 1)[1:]
    return SizeZoneMatrix(num_levels, counts, n_vox)


def build_glszm(region: DiscretizedRegion) -> SizeZoneMatrix:
    return glszm_from_grid(region.level_grid(), region.num_levels)


def glszm_features(m: SizeZoneMatrix) -> dict[str, float]:
    values = _emphasis_features(m.counts, m.voxel_count)
    return {name: float(v) for name, v in zip(GLSZM_FEATURES, values)}


def texture_features(region: DiscretizedRegion) -> dict[str, dict[str, float]]:
    """All three families for one region, keyed ``glcm`` / ``glrlm`` / ``glszm``."""
    grid = region.level_grid()
    ng = region.num_levels
    return {
        "glcm": glcm_features(glcm_from_grid(grid, ng)),
        "glrlm": glrlm_features(glrlm_from_grid(grid, ng)),
        "glszm": glszm_features(glszm_from_grid(grid, ng)),
    }
