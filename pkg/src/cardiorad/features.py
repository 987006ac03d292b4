"""Feature registry and the per-subject feature table."""
from __future__ import annotations

import csv
import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import texture
from .errors import CardioradError, EmptyRegionError, ExtractionError, TableFormatError
from .firstorder import first_order_features
from .io import PHASES, STRUCTURES, DatasetManifest, SubjectRecord, read_segmentation, read_volume
from .preprocess import DEFAULT_BINS, discretize, extract_region
from .shape import shape_features

log = logging.getLogger(__name__)

REGISTRY_VERSION = "1"

# canonical name -> dataclass field
SHAPE_FEATURES = {
    "VoxelVolume": "voxel_volume",
    "MeshVolume": "mesh_volume",
    "SurfaceArea": "surface_area",
    "SurfaceAreaToVolumeRatio": "surface_area_to_volume",
    "Sphericity": "sphericity",
    "Compactness1": "compactness1",
    "Compactness2": "compactness2",
    "SphericalDisproportion": "spherical_disproportion",
    "Maximum3DDiameter": "max_3d_diameter",
    "Maximum2DDiameterSlice": "max_2d_diameter_slice",
    "Maximum2DDiameterColumn": "max_2d_diameter_column",
    "Maximum2DDiameterRow": "max_2d_diameter_row",
    "MajorAxisLength": "major_axis",
    "MinorAxisLength": "minor_axis",
    "LeastAxisLength": "least_axis",
    "Elongation": "elongation",
    "Flatness": "flatness",
}
FIRSTORDER_FEATURES = {
    "Energy": "energy",
    "TotalEnergy": "total_energy",
    "Entropy": "entropy",
    "Minimum": "minimum",
    "10Percentile": "p10",
    "90Percentile": "p90",
    "Maximum": "maximum",
    "Mean": "mean",
    "Median": "median",
    "InterquartileRange": "interquartile_range",
    "Range": "range",
    "MeanAbsoluteDeviation": "mean_absolute_deviation",
    "RobustMeanAbsoluteDeviation": "robust_mad",
    "RootMeanSquared": "root_mean_squared",
    "StandardDeviation": "standard_deviation",
    "Variance": "variance",
    "Skewness": "skewness",
    "Kurtosis": "kurtosis",
    "Uniformity": "uniformity",
}
CATEGORY_FEATURES = {
    "shape": tuple(SHAPE_FEATURES),
    "firstorder": tuple(FIRSTORDER_FEATURES),
    "glcm": texture.GLCM_FEATURES,
    "glrlm": texture.GLRLM_FEATURES,
    "glszm": texture.GLSZM_FEATURES,
}
GLOBAL_FEATURES = ("height", "weight", "ed_es_duration")
# region order follows the feature-list convention LV, MYO, RV within ED then ES
REGION_ORDER = tuple((ph, st) for ph in PHASES for st in STRUCTURES)


@dataclass(frozen=True)
class FeatureDescriptor:
    name: str
    category: str
    feature: str
    structure: str | None = None
    phase: str | None = None

    @classmethod
    def parse(cls, name: str) -> "FeatureDescriptor":
        parts = name.split("_", 3)
        if parts[0] == "global" and len(parts) >= 2:
            return cls(name, "global", name[len("global_"):])
        if len(parts) == 4 and parts[0] in PHASES and parts[1] in STRUCTURES \
                and parts[2] in CATEGORY_FEATURES:
            return cls(name, parts[2], parts[3], parts[1], parts[0])
        return cls(name, "other", name)


def build_registry() -> tuple[FeatureDescriptor, ...]:
    reg = [FeatureDescriptor(f"global_{g}", "global", g) for g in GLOBAL_FEATURES]
    for phase, structure in REGION_ORDER:
        for category, names in CATEGORY_FEATURES.items():
            for feat in names:
                reg.append(FeatureDescriptor(f"{phase}_{structure}_{category}_{feat}",
                                             category, feat, structure, phase))
    return tuple(reg)


REGISTRY = build_registry()
PER_REGION_COUNT = sum(len(v) for v in CATEGORY_FEATURES.values())


def registry_digest(registry: Sequence[FeatureDescriptor] = REGISTRY) -> str:
    return hashlib.sha256("\n".join(d.name for d in registry).encode()).hexdigest()


@dataclass(frozen=True)
class ExtractionParams:
    n_bins: int | None = DEFAULT_BINS
    bin_width: float | None = None


@dataclass
class FeatureTable:
    descriptors: tuple[FeatureDescriptor, ...]
    subjects: list[str]
    values: np.ndarray
    labels: list[str | None] | None = None
    exclusions: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.descriptors = tuple(self.descriptors)
        self.values = np.asarray(self.values, dtype=np.float64).reshape(len(self.subjects),
                                                                         len(self.descriptors))
        names = self.names
        if len(set(names)) != len(names):
            raise TableFormatError("duplicate feature names")
        if not np.all(np.isfinite(self.values)):
            raise TableFormatError("feature table contains non-finite values")
        if self.labels is not None and len(self.labels) != len(self.subjects):
            raise TableFormatError("label count does not match subject count")

    @classmethod
    def from_arrays(cls, values, labels=None, names=None, subjects=None) -> "FeatureTable":
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        names = names or [f"f{k}" for k in range(values.shape[1])]
        subjects = subjects or [f"s{k:03d}" for k in range(values.shape[0])]
        return cls(tuple(FeatureDescriptor.parse(n) for n in names), list(subjects), values,
                   None if labels is None else [str(x) for x in labels])

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.descriptors]

    def column_index(self, names: Sequence[str]) -> list[int]:
        lookup = {n: k for k, n in enumerate(self.names)}
        missing = [n for n in names if n not in lookup]
        if missing:
            raise TableFormatError(f"features missing from table: {', '.join(missing)}")
        return [lookup[n] for n in names]

    def columns(self, names: Sequence[str]) -> np.ndarray:
        return self.values[:, self.column_index(names)]

    def subset_rows(self, rows: Sequence[int]) -> "FeatureTable":
        rows = list(rows)
        labels = None if self.labels is None else [self.labels[r] for r in rows]
        return FeatureTable(self.descriptors, [self.subjects[r] for r in rows],
                            self.values[rows], labels)

    def __eq__(self, other):
        if not isinstance(other, FeatureTable):
            return NotImplemented
        return (self.names == other.names and self.subjects == other.subjects
                and self.labels == other.labels and np.array_equal(self.values, other.values))


# ---------------------------------------------------------------------------
# extraction

def region_features(disc) -> list[float]:
    """Every feature block for one discretized region, in registry order."""
    region = disc.region
    shp = shape_features(region.mask, region.spacing)
    fo = first_order_features(disc)
    tex = texture.texture_features(disc)
    if region.size == 1:
        log.info("%s %s: single-voxel region, GLCM uses the single-entry convention",
                 region.phase, region.structure)
    row = [getattr(shp, f) for f in SHAPE_FEATURES.values()]
    row += [getattr(fo, f) for f in FIRSTORDER_FEATURES.values()]
    for cat in ("glcm", "glrlm", "glszm"):
        row += [tex[cat][n] for n in CATEGORY_FEATURES[cat]]
    return row


def extract_subject(record: SubjectRecord, manifest: DatasetManifest,
                    params: ExtractionParams = ExtractionParams()) -> np.ndarray:
    row = [record.height, record.weight, float(abs(record.es_frame - record.ed_frame))]
    for phase in PHASES:
        try:
            volume = read_volume(record.images[phase])
            seg = read_segmentation(record.masks[phase], volume.dims)
        except CardioradError as exc:
            raise ExtractionError(f"subject {record.id}: {phase} load failed: {exc}",
                                  subject=record.id, phase=phase) from exc
        regions = {}
        for structure in STRUCTURES:
            label = manifest.label_for(structure)
            try:
                regions[structure] = extract_region(volume, seg, label, structure, phase)
            except EmptyRegionError as exc:
                raise ExtractionError(
                    f"subject {record.id}: {phase} {structure} (label {label}) is empty",
                    subject=record.id, phase=phase, structure=structure) from exc
        for structure in STRUCTURES:
            disc = discretize(regions[structure], params.n_bins, params.bin_width)
            row += region_features(disc)
    out = np.asarray(row, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        bad = [REGISTRY[k].name for k in np.flatnonzero(~np.isfinite(out))]
        raise ExtractionError(f"subject {record.id}: non-finite features {bad}", subject=record.id)
    return out


def extract_table(manifest: DatasetManifest, params: ExtractionParams = ExtractionParams(),
                  threads: int = 1) -> FeatureTable:
    """Extract every subject; failed subjects are listed in ``exclusions``."""

    def work(rec):
        try:
            return extract_subject(rec, manifest, params), None
        except ExtractionError as exc:
            return None, {"subject": rec.id, "error": str(exc), **exc.context()}

    subjects = list(manifest.subjects)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, subjects))
    else:
        results = [work(s) for s in subjects]

    rows, ids, labels, exclusions = [], [], [], []
    for rec, (row, err) in zip(subjects, results):
        if err is not None:
            exclusions.append(err)
            continue
        rows.append(row)
        ids.append(rec.id)
        labels.append(rec.class_label)
    values = np.vstack(rows) if rows else np.zeros((0, len(REGISTRY)))
    has_labels = any(lab is not None for lab in labels)
    return FeatureTable(REGISTRY, ids, values, labels if has_labels else None, exclusions)


# ---------------------------------------------------------------------------
# CSV persistence

def write_table(table: FeatureTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = ["subject_id"] + (["class"] if table.labels is not None else []) + table.names
        w.writerow(head)
        for k, sid in enumerate(table.subjects):
            lead = [sid] + ([table.labels[k] or ""] if table.labels is not None else [])
            w.writerow(lead + [format(v, ".17g") for v in table.values[k]])


def read_table(path, registry: Sequence[FeatureDescriptor] | None = REGISTRY) -> FeatureTable:
    """Read a feature CSV.

    With the default ``registry`` the header must list exactly the registry
    columns in order; pass ``registry=None`` to accept arbitrary columns.
    """
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0] != "subject_id":
        raise TableFormatError(f"{path}: first column must be 'subject_id'")
    head = rows[0]
    has_class = len(head) > 1 and head[1] == "class"
    names = head[2:] if has_class else head[1:]
    if registry is not None:
        expected = [d.name for d in registry]
        if names != expected:
            missing = [n for n in expected if n not in names]
            extra = [n for n in names if n not in expected]
            raise TableFormatError(
                f"{path}: header does not match feature registry v{REGISTRY_VERSION}"
                f" (missing {missing[:5]}, unexpected {extra[:5]})")
        descriptors = tuple(registry)
    else:
        descriptors = tuple(FeatureDescriptor.parse(n) for n in names)
    ids, labels, values = [], [], []
    for lineno, r in enumerate(rows[1:], start=2):
        if len(r) != len(head):
            raise TableFormatError(f"{path}:{lineno}: expected {len(head)} cells, got {len(r)}")
        ids.append(r[0])
        if has_class:
            labels.append(r[1] or None)
        try:
            values.append([float(v) for v in r[len(head) - len(names):]])
        except ValueError as exc:
            raise TableFormatError(f"{path}:{lineno}: {exc}") from exc
    arr = np.asarray(values, dtype=np.float64).reshape(len(ids), len(names))
    return FeatureTable(descriptors, ids, arr, labels if has_class else None)
