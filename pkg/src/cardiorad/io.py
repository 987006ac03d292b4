"""Loading of image and label volumes plus subject manifests.

Two on-disk volume formats are understood:

* NIfTI-1 (``.nii`` / ``.nii.gz``), read through nibabel.
* A raw-JSON format, ``{"dims": [nx, ny, nz], "spacing": [sx, sy, sz],
  "data": [...]}`` with ``data`` stored x-fastest. It exists so small
  fixtures can be written by hand.

Arrays are held in memory indexed ``[x, y, z]`` and are marked read-only.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ManifestError, VolumeFormatError

STRUCTURES = ("LV", "MYO", "RV")
PHASES = ("ED", "ES")
CLASSES = ("NOR", "DCM", "HCM", "MINF", "RV")
DEFAULT_LABEL_MAP = {1: "RV", 2: "MYO", 3: "LV"}

# NIfTI datatype codes accepted by read_volume
_NIFTI_DTYPES = {2: "uint8", 4: "int16", 8: "int32", 16: "float32", 64: "float64"}


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ImageVolume:
    """3D intensity grid with physical voxel spacing in millimetres."""

    data: np.ndarray
    spacing: tuple[float, float, float]

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise VolumeFormatError(f"volume must be 3D, got shape {data.shape}")
        if min(data.shape) < 1:
            raise VolumeFormatError(f"volume dims must be positive, got {data.shape}")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or not all(s > 0 and np.isfinite(s) for s in spacing):
            raise VolumeFormatError(f"spacing must be 3 positive values, got {self.spacing}")
        if not np.all(np.isfinite(data)):
            raise VolumeFormatError("volume contains non-finite intensities")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.data.shape)

    @property
    def voxels(self) -> np.ndarray:
        """Flat voxel array in x-fastest order."""
        return self.data.ravel(order="F")


@dataclass(frozen=True)
class LabeledSegmentation:
    """Integer label grid aligned with an :class:`ImageVolume`; 0 is background."""

    labels: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 3:
            raise VolumeFormatError(f"segmentation must be 3D, got shape {labels.shape}")
        if not np.issubdtype(labels.dtype, np.integer):
            raise VolumeFormatError("segmentation labels must be integers")
        if labels.size and labels.min() < 0:
            raise VolumeFormatError("segmentation labels must be nonnegative")
        object.__setattr__(self, "labels", _frozen(labels.astype(np.int32)))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.labels.shape)

    def census(self) -> dict[int, int]:
        """Voxel count per label value, background included."""
        values, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}


@dataclass(frozen=True)
class SubjectRecord:
    id: str
    height: float
    weight: float
    ed_frame: int
    es_frame: int
    class_label: str | None
    images: Mapping[str, Path] = field(default_factory=dict)
    masks: Mapping[str, Path] = field(default_factory=dict)


@dataclass(frozen=True)
class DatasetManifest:
    subjects: tuple[SubjectRecord, ...]
    label_map: Mapping[int, str]

    def label_for(self, structure: str) -> int:
        for label, name in self.label_map.items():
            if name == structure:
                return label
        raise KeyError(structure)

    def class_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for s in self.subjects:
            if s.class_label is not None:
                counts[s.class_label] = counts.get(s.class_label, 0) + 1
        return counts


# ---------------------------------------------------------------------------
# volumes

def _read_raw_json(path: Path) -> tuple[np.ndarray, tuple[float, ...], bool]:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise VolumeFormatError(f"{path}: cannot parse raw-JSON volume ({exc})") from exc
    for key in ("dims", "spacing", "data"):
        if key not in obj:
            raise VolumeFormatError(f"{path}: missing key {key!r}")
    dims = obj["dims"]
    if len(dims) != 3:
        raise VolumeFormatError(f"{path}: dimension count {len(dims)} != 3")
    if not all(isinstance(d, int) and d > 0 for d in dims):
        raise VolumeFormatError(f"{path}: dims must be positive integers, got {dims}")
    values = obj["data"]
    if len(values) != int(np.prod(dims)):
        raise VolumeFormatError(
            f"{path}: header dims {dims} imply {int(np.prod(dims))} voxels, payload has {len(values)}"
        )
    is_int = all(isinstance(v, int) for v in values)
    data = np.asarray(values, dtype=np.int64 if is_int else np.float64)
    return data.reshape(dims, order="F"), tuple(obj["spacing"]), is_int


def _read_nifti(path: Path) -> tuple[np.ndarray, tuple[float, ...]]:
    import nibabel as nib

    try:
        img = nib.load(str(path))
    except Exception as exc:  # nibabel raises a zoo of error types
        raise VolumeFormatError(f"{path}: cannot read NIfTI ({exc})") from exc
    header = img.header
    code = int(header["datatype"])
    if code not in _NIFTI_DTYPES:
        raise VolumeFormatError(f"{path}: unsupported NIfTI datatype code {code}")
    if int(header["dim"][0]) != 3:
        raise VolumeFormatError(f"{path}: dimension count {int(header['dim'][0])} != 3")
    # get_fdata applies scl_slope/scl_inter when the slope is nonzero
    data = np.asarray(img.get_fdata(dtype=np.float64))
    return data, tuple(float(z) for z in header.get_zooms()[:3])


def _read_any(path) -> tuple[np.ndarray, tuple[float, ...]]:
    path = Path(path)
    if not path.exists():
        raise VolumeFormatError(f"{path}: no such file")
    name = path.name.lower()
    if name.endswith(".json"):
        data, spacing, _ = _read_raw_json(path)
        return data, spacing
    if name.endswith(".nii") or name.endswith(".nii.gz"):
        return _read_nifti(path)
    raise VolumeFormatError(f"{path}: unrecognised volume extension")


def read_volume(path) -> ImageVolume:
    data, spacing = _read_any(path)
    data = data.astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise VolumeFormatError(f"{path}: non-finite voxel values after scaling")
    return ImageVolume(data, spacing)


def read_segmentation(path, expected_dims=None) -> LabeledSegmentation:
    data, spacing = _read_any(path)
    if expected_dims is not None and tuple(data.shape) != tuple(expected_dims):
        raise VolumeFormatError(
            f"{path}: segmentation dims {tuple(data.shape)} != expected {tuple(expected_dims)}"
        )
    if data.dtype.kind == "f":
        if not np.all(np.isfinite(data)) or np.any(data != np.round(data)):
            raise VolumeFormatError(f"{path}: fractional label values")
    if data.size and data.min() < 0:
        raise VolumeFormatError(f"{path}: negative label values")
    return LabeledSegmentation(data.astype(np.int32), spacing)


def write_raw_json(obj: ImageVolume | LabeledSegmentation, path, decimals: int | None = None) -> None:
    """Write a volume or segmentation in the raw-JSON format.

    ``decimals`` rounds intensities before writing, which keeps phantom
    datasets compact; the default writes exact float reprs.
    """
    if isinstance(obj, LabeledSegmentation):
        flat = [int(v) for v in obj.labels.ravel(order="F")]
    else:
        values = obj.data.ravel(order="F")
        if decimals is not None:
            values = np.round(values, decimals)
        flat = [float(v) for v in values]
    payload = {"dims": list(obj.dims), "spacing": list(obj.spacing), "data": flat}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, separators=(",", ":"))


def write_nifti(array: np.ndarray, spacing, path, slope: float = 0.0, inter: float = 0.0) -> None:
    """Write a 3D array as NIfTI-1; the on-disk dtype follows ``array.dtype``."""
    import nibabel as nib

    img = nib.Nifti1Image(np.asarray(array), np.diag([*spacing, 1.0]))
    img.header.set_zooms(tuple(float(s) for s in spacing))
    if slope:
        img.header.set_slope_inter(slope, inter)
    nib.save(img, str(path))


# ---------------------------------------------------------------------------
# manifest

_REQUIRED = ("id", "height_cm", "weight_kg", "ed_frame", "es_frame",
             "ed_image", "ed_mask", "es_image", "es_mask")


def _parse_label_map(raw) -> dict[int, str]:
    if raw is None:
        return dict(DEFAULT_LABEL_MAP)
    try:
        label_map = {int(k): str(v) for k, v in raw.items()}
    except (AttributeError, ValueError) as exc:
        raise ManifestError(f"label_map: malformed ({exc})", field="label_map") from exc
    if any(k <= 0 for k in label_map):
        raise ManifestError("label_map: keys must be nonzero positive integers", field="label_map")
    if sorted(label_map.values()) != sorted(STRUCTURES):
        raise ManifestError(
            f"label_map: values {sorted(label_map.values())} must cover exactly {list(STRUCTURES)}",
            field="label_map",
        )
    return label_map


def _parse_subject(entry, base: Path, index: int) -> SubjectRecord:
    sid = entry.get("id") if isinstance(entry, dict) else None
    where = sid if sid is not None else f"#{index}"
    if not isinstance(entry, dict):
        raise ManifestError(f"subject {where}: entry is not an object", subject=where)
    for key in _REQUIRED:
        if key not in entry:
            raise ManifestError(f"subject {where}: missing field {key!r}", subject=where, field=key)
    try:
        height = float(entry["height_cm"])
        weight = float(entry["weight_kg"])
        ed, es = int(entry["ed_frame"]), int(entry["es_frame"])
    except (TypeError, ValueError) as exc:
        raise ManifestError(f"subject {where}: bad numeric field ({exc})", subject=where) from exc
    if not height > 0:
        raise ManifestError(f"subject {where}: height_cm must be > 0", subject=where, field="height_cm")
    if not weight > 0:
        raise ManifestError(f"subject {where}: weight_kg must be > 0", subject=where, field="weight_kg")
    if ed == es:
        raise ManifestError(f"subject {where}: ed_frame equals es_frame", subject=where, field="es_frame")
    label = entry.get("class")
    if label is not None and label not in CLASSES:
        raise ManifestError(f"subject {where}: unknown class {label!r}", subject=where, field="class")

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    return SubjectRecord(
        id=str(sid), height=height, weight=weight, ed_frame=ed, es_frame=es, class_label=label,
        images={"ED": resolve(entry["ed_image"]), "ES": resolve(entry["es_image"])},
        masks={"ED": resolve(entry["ed_mask"]), "ES": resolve(entry["es_mask"])},
    )


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"{path}: cannot parse manifest ({exc})") from exc
    if not isinstance(raw, dict) or "subjects" not in raw:
        raise ManifestError(f"{path}: missing field 'subjects'", field="subjects")
    label_map = _parse_label_map(raw.get("label_map"))
    subjects = []
    seen = set()
    for i, entry in enumerate(raw["subjects"]):
        rec = _parse_subject(entry, path.parent, i)
        if rec.id in seen:
            raise ManifestError(f"subject {rec.id}: duplicate subject id", subject=rec.id, field="id")
        seen.add(rec.id)
        subjects.append(rec)
    return DatasetManifest(tuple(subjects), label_map)


def write_manifest(manifest: DatasetManifest, path) -> None:
    """Serialise a manifest; file paths are written relative to its directory."""
    base = Path(path).parent

    def rel(p):
        return os.path.relpath(p, base).replace(os.sep, "/")

    subjects = []
    for s in manifest.subjects:
        entry = {"id": s.id, "height_cm": s.height, "weight_kg": s.weight,
                 "ed_frame": s.ed_frame, "es_frame": s.es_frame,
                 "ed_image": rel(s.images["ED"]), "ed_mask": rel(s.masks["ED"]),
                 "es_image": rel(s.images["ES"]), "es_mask": rel(s.masks["ES"])}
        if s.class_label is not None:
            entry["class"] = s.class_label
        subjects.append(entry)
    payload = {"label_map": {str(k): v for k, v in sorted(manifest.label_map.items())},
               "subjects": subjects}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
