"""Procedural cardiac phantoms standing in for the (non-redistributable) cine-MRI data.

Each subject is a pair of ED/ES frames built from nested ellipsoids. The LV
cavity sits inside a myocardial shell, and an RV crescent wraps against the
septum. Class-specific parameter distributions mimic the five diagnostic
groups:

========  ============================================================
NOR       normal LV geometry and contraction
DCM       dilated thin-walled LV with poor contraction
HCM       small LV cavity inside a thick, vigorously contracting wall
MINF      moderately dilated LV with a thinned akinetic wedge of darker wall
RV        normal LV, dilated and poorly contracting RV
========  ============================================================
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .io import (CLASSES, DEFAULT_LABEL_MAP, DatasetManifest, ImageVolume, LabeledSegmentation,
                 SubjectRecord, write_manifest, write_raw_json)

RV_LABEL, MYO_LABEL, LV_LABEL = 1, 2, 3

# (lv radius, wall thickness, rv radius, lv ES factor, wall ES thickening, rv ES factor)
_CLASS_PARAMS = {
    "NOR": (6.0, 1.8, 6.5, 0.74, 1.40, 0.75),
    "DCM": (8.3, 1.3, 6.5, 0.92, 1.08, 0.80),
    "HCM": (5.0, 3.0, 6.5, 0.62, 1.30, 0.74),
    "MINF": (7.2, 1.7, 6.5, 0.87, 1.15, 0.78),
    "RV": (6.0, 1.8, 9.5, 0.75, 1.38, 0.93),
}

_BLOOD, _MYO, _BACKGROUND, _SCAR = 220.0, 90.0, 45.0, 55.0


@dataclass(frozen=True)
class PhantomSpec:
    classes: tuple[str, ...] = CLASSES
    per_class: int = 20
    grid: int = 32
    noise: float = 10.0
    seed: int = 42


def _geometry(rng: np.random.Generator, label: str, grid: int) -> dict:
    r_lv, t, r_rv, f_lv, f_t, f_rv = _CLASS_PARAMS[label]

    def jitter(v, rel=0.09):
        return float(v * rng.normal(1.0, rel))

    c = grid / 32.0
    return {
        "center": (grid * 0.58 + rng.normal(0, 0.6), grid * 0.5 + rng.normal(0, 0.6),
                   grid * 0.45 + rng.normal(0, 0.6)),
        "r_lv": jitter(r_lv) * c, "t": jitter(t) * c, "r_rv": jitter(r_rv) * c,
        "f_lv": min(jitter(f_lv, 0.03), 0.98), "f_t": jitter(f_t, 0.03),
        "f_rv": min(jitter(f_rv, 0.03), 0.98),
        "wedge_angle": float(rng.uniform(0.3, 1.3)) if label == "MINF" else None,
        "spacing_xy": float(rng.uniform(1.37, 1.68)),
    }


def _frame(geom: dict, phase: str, grid: int) -> np.ndarray:
    cx, cy, cz = geom["center"]
    r_lv, t, r_rv = geom["r_lv"], geom["t"], geom["r_rv"]
    if phase == "ES":
        r_lv *= geom["f_lv"]
        t *= geom["f_t"]
        r_rv *= geom["f_rv"]
    x, y, z = np.indices((grid, grid, grid), dtype=np.float64)
    dx, dy, dz = x - cx, y - cy, z - cz
    rz = 1.7 * r_lv
    base = dz <= 0.55 * (rz + t)

    # wall thickness may vary with angle (infarct wedge)
    thick = np.full_like(dx, t)
    if geom["wedge_angle"] is not None:
        theta = np.arctan2(dy, dx)
        wedge = np.cos(theta - geom["wedge_angle"] * np.pi) > np.cos(np.pi / 4)
        thick = np.where(wedge, 0.55 * t, t)
        if phase == "ES":
            # akinetic: the wedge keeps its diastolic cavity radius
            r_es = r_lv
            r_lv = np.where(wedge, geom["r_lv"], r_es)
    else:
        wedge = np.zeros_like(dx, dtype=bool)

    cavity = (dx / r_lv) ** 2 + (dy / r_lv) ** 2 + (dz / rz) ** 2 <= 1.0
    outer_r = r_lv + thick
    outer = (dx / outer_r) ** 2 + (dy / outer_r) ** 2 + (dz / (rz + t)) ** 2 <= 1.0
    cavity &= base
    myo = outer & base & ~cavity

    r_out = float(np.max(r_lv)) + t
    rcx = cx - r_out - 0.15 * r_rv
    rv_shape = ((x - rcx) / (0.75 * r_rv)) ** 2 + ((y - cy) / (1.15 * r_rv)) ** 2 \
        + (dz / (0.85 * rz)) ** 2 <= 1.0
    rv = rv_shape & base & ~outer
    # keep the crescent off the septum surface
    rv &= ~ndimage.binary_dilation(outer, iterations=1)

    labels = np.zeros((grid, grid, grid), dtype=np.int32)
    labels[rv] = RV_LABEL
    labels[myo] = MYO_LABEL
    labels[cavity] = LV_LABEL
    labels[myo & wedge] = -MYO_LABEL      # scar marker, folded back below
    return labels


def _intensity(labels: np.ndarray, rng: np.random.Generator, noise: float) -> np.ndarray:
    img = np.full(labels.shape, _BACKGROUND)
    img[(labels == LV_LABEL) | (labels == RV_LABEL)] = _BLOOD
    img[labels == MYO_LABEL] = _MYO
    img[labels == -MYO_LABEL] = _SCAR
    img = ndimage.gaussian_filter(img, 0.6)
    tex = ndimage.gaussian_filter(rng.normal(0.0, 1.0, labels.shape), 0.8)
    tex *= noise / max(tex.std(), 1e-12)
    return img + tex


def generate_subject(label: str, seed_seq: np.random.SeedSequence, grid: int = 32,
                     noise: float = 10.0):
    """Return (metadata dict, {phase: (ImageVolume, LabeledSegmentation)})."""
    rng = np.random.default_rng(seed_seq)
    geom = _geometry(rng, label, grid)
    spacing = (geom["spacing_xy"], geom["spacing_xy"], 3.0)
    frames = {}
    for phase in ("ED", "ES"):
        raw = _frame(geom, phase, grid)
        img = _intensity(raw, rng, noise)
        seg = np.abs(raw)
        frames[phase] = (ImageVolume(img, spacing), LabeledSegmentation(seg, spacing))
    meta = {
        "height": round(float(rng.normal(170.0, 9.0)), 1),
        "weight": round(float(np.clip(rng.normal(76.0, 12.0), 45.0, 130.0)), 1),
        "ed_frame": int(rng.integers(0, 2)),
        "es_frame": int(rng.integers(9, 15)),
    }
    return meta, frames


def generate_dataset(spec: PhantomSpec, out_dir) -> DatasetManifest:
    """Write every subject as raw-JSON volumes plus ``manifest.json`` under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    labels = [c for c in spec.classes for _ in range(spec.per_class)]
    seeds = np.random.SeedSequence(spec.seed).spawn(len(labels))
    subjects = []
    for k, (label, ss) in enumerate(zip(labels, seeds), start=1):
        sid = f"patient{k:03d}"
        meta, frames = generate_subject(label, ss, spec.grid, spec.noise)
        sdir = out / sid
        sdir.mkdir(exist_ok=True)
        paths_img, paths_mask = {}, {}
        for phase, (vol, seg) in frames.items():
            if set(np.unique(seg.labels)) != {0, RV_LABEL, MYO_LABEL, LV_LABEL}:
                raise RuntimeError(f"{sid} {phase}: phantom lost a structure")
            pi = sdir / f"{phase.lower()}_image.json"
            pm = sdir / f"{phase.lower()}_mask.json"
            write_raw_json(vol, pi, decimals=3)
            write_raw_json(seg, pm)
            paths_img[phase], paths_mask[phase] = pi, pm
        subjects.append(SubjectRecord(sid, meta["height"], meta["weight"], meta["ed_frame"],
                                      meta["es_frame"], label, paths_img, paths_mask))
    manifest = DatasetManifest(tuple(subjects), dict(DEFAULT_LABEL_MAP))
    write_manifest(manifest, out / "manifest.json")
    return manifest
