"""First-order intensity statistics of a region."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .preprocess import DiscretizedRegion


@dataclass(frozen=True)
class FirstOrderFeatures:
    energy: float
    total_energy: float
    entropy: float
    minimum: float
    p10: float
    p90: float
    maximum: float
    mean: float
    median: float
    interquartile_range: float
    range: float
    mean_absolute_deviation: float
    robust_mad: float
    root_mean_squared: float
    standard_deviation: float
    variance: float
    skewness: float
    kurtosis: float
    uniformity: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def histogram_probabilities(levels: np.ndarray, num_levels: int) -> np.ndarray:
    counts = np.bincount(levels, minlength=num_levels + 1)[1:]
    return counts / counts.sum()


def first_order_features(disc: DiscretizedRegion) -> FirstOrderFeatures:
    """Moments use population normalisation over the raw intensities.

    Entropy (bits) and uniformity come from the gray-level histogram of the
    discretized region. Skewness and kurtosis are 0 for a constant region;
    kurtosis is the plain fourth standardized moment (3 for a Gaussian).
    """
    x = np.asarray(disc.region.intensities, dtype=np.float64)
    n = len(x)
    # a constant region's float mean can be off by an ulp; pin it exactly
    mean = x[0] if x.min() == x.max() else x.mean()
    dev = x - mean
    variance = float(np.mean(dev ** 2))
    if variance > 0:
        skewness = float(np.mean(dev ** 3) / variance ** 1.5)
        kurtosis = float(np.mean(dev ** 4) / variance ** 2)
    else:
        skewness = kurtosis = 0.0

    p10, q25, median, q75, p90 = np.percentile(x, [10, 25, 50, 75, 90])
    inner = x[(x >= p10) & (x <= p90)]
    # with very few voxels the [p10, p90] band can hold none of them
    robust_mad = float(np.mean(np.abs(inner - inner.mean()))) if inner.size else 0.0

    p = histogram_probabilities(disc.levels, disc.num_levels)
    nz = p[p > 0]
    entropy = float(-(nz * np.log2(nz)).sum()) + 0.0

    energy = float(np.dot(x, x))
    return FirstOrderFeatures(
        energy=energy,
        total_energy=energy * disc.region.voxel_volume,
        entropy=entropy,
        minimum=float(x.min()),
        p10=float(p10),
        p90=float(p90),
        maximum=float(x.max()),
        mean=float(mean),
        median=float(median),
        interquartile_range=float(q75 - q25),
        range=float(x.max() - x.min()),
        mean_absolute_deviation=float(np.mean(np.abs(dev))),
        robust_mad=robust_mad,
        root_mean_squared=float(np.sqrt(energy / n)),
        standard_deviation=float(np.sqrt(variance)),
        variance=variance,
        skewness=skewness,
        kurtosis=kurtosis,
        uniformity=float(np.dot(p, p)),
    )
