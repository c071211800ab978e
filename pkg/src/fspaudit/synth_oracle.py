"""Synthetic group-photo generator with a controllable same-photo cue.

Each photo draws a latent (brightness offset, a*/b* tone cast, blur
radius) that is applied to the whole canvas scaled by ``cue_strength``,
so every face in a photo shares it.  Faces themselves are procedural
ellipses with independently jittered content, placed on a grid.  At
``cue_strength=0`` the latent has no effect and face crops from the same
photo are statistically indistinguishable from crops of different
photos, which is what makes the generator usable as ground truth.

Latent distributions (before scaling): brightness uniform in [-20, 20]
L* units, tone cast uniform in [-15, 15] for both a* and b*, blur sigma
uniform in [0, 2] px.  Per-face content jitter is kept small (a few Lab
units) relative to the latent ranges.

Determinism: photo i is generated entirely from the stream
``default_rng([seed, i])``, so any generation schedule yields identical
bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .dataset_model import DatasetManifest, FaceRecord, PhotoRecord, save_manifest, validate_manifest
from .errors import ValidationError
from .features import lab_to_rgb, write_image


@dataclass(frozen=True)
class SynthConfig:
    n_photos: int
    faces_per_photo: tuple[int, int] = (2, 5)
    image_px: int = 512
    cue_strength: float = 0.7
    noise_sigma: float = 2.0
    seed: int = 0
    face_px: tuple[int, int] = (56, 96)
    image_format: str = "png"

    def __post_init__(self):
        if self.n_photos < 2:
            raise ValidationError(f"n_photos must be >= 2, got {self.n_photos}")
        fmin, fmax = self.faces_per_photo
        if not 2 <= fmin <= fmax:
            raise ValidationError(
                f"faces_per_photo must be a range with min >= 2, got "
                f"{self.faces_per_photo}")
        if not 0.0 <= self.cue_strength <= 1.0:
            raise ValidationError(
                f"cue_strength must be in [0, 1], got {self.cue_strength}")
        if self.noise_sigma < 0:
            raise ValidationError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        smin, smax = self.face_px
        if not 8 <= smin <= smax:
            raise ValidationError(f"face_px must be a range with min >= 8, got "
                                  f"{self.face_px}")
        if self.image_format not in ("png", "ppm"):
            raise ValidationError(f"image_format must be png or ppm, got "
                                  f"{self.image_format!r}")
        cols = math.ceil(math.sqrt(fmax))
        if cols * (smax + 2) > self.image_px:
            raise ValidationError(
                f"image_px {self.image_px} too small for {fmax} faces of up "
                f"to {smax} px (need >= {cols * (smax + 2)})")


def _face_tile(rng: np.random.Generator, size: int) -> np.ndarray:
    """One procedural face: skin ellipse, two eye dots and a mouth on a
    textured background patch, in Lab."""
    s = size
    L = np.full((s, s), 55.0 + rng.uniform(-3, 3))
    L += rng.normal(0.0, 3.0, (s, s))
    a = np.full((s, s), rng.uniform(-4, 4))
    b = np.full((s, s), rng.uniform(-4, 4))

    yy, xx = np.mgrid[0:s, 0:s]
    cx = cy = (s - 1) / 2.0
    rx, ry = 0.34 * s, 0.42 * s
    head = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
    L[head] = 66.0 + rng.uniform(-3, 3)
    a[head] = 11.0 + rng.uniform(-2, 2)
    b[head] = 17.0 + rng.uniform(-2, 2)

    eye_r = max(1.0, 0.045 * s)
    for ex in (cx - 0.13 * s, cx + 0.13 * s):
        eye = (xx - ex) ** 2 + (yy - (cy - 0.08 * s)) ** 2 <= eye_r ** 2
        L[eye], a[eye], b[eye] = 25.0, 5.0, 8.0
    mouth = (((xx - cx) / (0.12 * s)) ** 2
             + ((yy - (cy + 0.18 * s)) / max(1.0, 0.035 * s)) ** 2) <= 1.0
    L[mouth], a[mouth], b[mouth] = 40.0, 18.0, 12.0
    return np.stack([L, a, b], axis=-1)


def _render_photo(config: SynthConfig, index: int) -> tuple[np.ndarray, list[tuple[int, int, int, int]]]:
    """Returns the uint8 RGB canvas and the face bboxes of photo ``index``."""
    rng = np.random.default_rng([config.seed, index])
    px = config.image_px
    fmin, fmax = config.faces_per_photo
    n_faces = int(rng.integers(fmin, fmax + 1))

    cue = config.cue_strength
    d_l = float(rng.uniform(-20, 20)) * cue
    d_a = float(rng.uniform(-15, 15)) * cue
    d_b = float(rng.uniform(-15, 15)) * cue
    blur = float(rng.uniform(0, 2)) * cue

    canvas = np.empty((px, px, 3))
    canvas[..., 0] = 60.0 + rng.normal(0.0, 2.0, (px, px))
    canvas[..., 1] = 0.0
    canvas[..., 2] = 0.0

    cols = math.ceil(math.sqrt(n_faces))
    rows = math.ceil(n_faces / cols)
    cell_w = px // cols
    cell_h = px // rows
    cells = rng.permutation(cols * rows)[:n_faces]
    smin, smax = config.face_px
    bboxes: list[tuple[int, int, int, int]] = []
    for cell in cells:
        size = int(rng.integers(smin, smax + 1))
        cx = int(cell) % cols
        cy = int(cell) // cols
        ox = cx * cell_w + int(rng.integers(0, cell_w - size + 1))
        oy = cy * cell_h + int(rng.integers(0, cell_h - size + 1))
        canvas[oy:oy + size, ox:ox + size] = _face_tile(rng, size)
        bboxes.append((ox, oy, size, size))

    canvas[..., 0] += d_l
    canvas[..., 1] += d_a
    canvas[..., 2] += d_b
    if blur > 0:
        for ch in range(3):
            canvas[..., ch] = gaussian_filter(canvas[..., ch], sigma=blur)
    if config.noise_sigma > 0:
        canvas[..., 0] += rng.normal(0.0, config.noise_sigma, (px, px))
        canvas[..., 1] += rng.normal(0.0, config.noise_sigma / 2.0, (px, px))
        canvas[..., 2] += rng.normal(0.0, config.noise_sigma / 2.0, (px, px))

    rgb = lab_to_rgb(canvas)
    rgb = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
    return rgb, bboxes


def generate(config: SynthConfig, out_dir: str | Path) -> DatasetManifest:
    """Write the photo images and ``manifest.json`` under ``out_dir``.

    Image paths in the manifest are relative to ``out_dir``.  Returns the
    manifest (already validated).
    """
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    photos = []
    for i in range(config.n_photos):
        rgb, bboxes = _render_photo(config, i)
        photo_id = f"photo{i:05d}"
        rel_path = f"images/{photo_id}.{config.image_format}"
        write_image(out / rel_path, rgb)
        faces = tuple(
            FaceRecord(face_id=f"{photo_id}_f{j}", bbox=bbox)
            for j, bbox in enumerate(bboxes))
        photos.append(PhotoRecord(photo_id=photo_id, image_path=rel_path,
                                  width=config.image_px, height=config.image_px,
                                  faces=faces))
    fmin, fmax = config.faces_per_photo
    manifest = DatasetManifest(
        photos=tuple(photos),
        metadata={
            "generator": "synthetic-group-photos",
            "n_photos": str(config.n_photos),
            "faces_per_photo": f"{fmin}..{fmax}",
            "image_px": str(config.image_px),
            "cue_strength": repr(config.cue_strength),
            "noise_sigma": repr(config.noise_sigma),
            "seed": str(config.seed),
            "image_format": config.image_format,
        })
    validate_manifest(manifest)
    save_manifest(manifest, out / "manifest.json")
    return manifest
