"""Compute one descriptor per manifest face and write an FSPE1 file.

FSPE1 is the plain-text feature interchange format of the audit
pipeline: a ``FSPE1 <dim>`` header line, then one ``face_id v0 v1 ...``
line per face.  Values are written with repr() so a reader gets the
float64 bits back exactly.
"""

import warnings
from pathlib import Path
from typing import NamedTuple

import numpy as np
from PIL import Image

from .backends import backend_by_name
from .errors import ExportError
from .manifest import read_manifest


class ExportResult(NamedTuple):
    written: int
    skipped: int


def _load_image(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def _crop(image: np.ndarray, bbox, face_id: str) -> np.ndarray:
    x, y, w, h = bbox
    hh, ww = image.shape[:2]
    if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > ww or y + h > hh:
        raise ExportError(f"face {face_id!r}: bbox {bbox} outside "
                          f"{ww}x{hh} image")
    return image[y:y + h, x:x + w]


def _resize(crop: np.ndarray, px: int) -> np.ndarray:
    img = Image.fromarray(np.ascontiguousarray(crop))
    return np.asarray(img.resize((px, px), Image.BILINEAR))


def export_manifest(manifest_path: str | Path, out_path: str | Path,
                    model: str, batch_size: int = 16) -> ExportResult:
    """Descriptor vectors for every face in the manifest, in manifest
    order.  Faces whose image cannot be read or whose box does not fit
    are skipped with a warning; everything else becomes one FSPE1 record.
    """
    if batch_size < 1:
        raise ExportError(f"batch_size must be >= 1, got {batch_size}")
    backend = backend_by_name(model)
    manifest_path = Path(manifest_path)
    photos = read_manifest(manifest_path)

    ids: list[str] = []
    crops: list[np.ndarray] = []
    skipped = 0
    for photo in photos:
        try:
            image = _load_image(manifest_path.parent / photo.image_path)
        except OSError as exc:
            warnings.warn(f"skipping photo {photo.photo_id!r}: {exc}",
                          stacklevel=2)
            skipped += len(photo.faces)
            continue
        for face in photo.faces:
            try:
                crop = _crop(image, face.bbox, face.face_id)
            except ExportError as exc:
                warnings.warn(f"skipping face: {exc}", stacklevel=2)
                skipped += 1
                continue
            ids.append(face.face_id)
            crops.append(_resize(crop, backend.input_px))

    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(f"FSPE1 {backend.dim}\n")
        for lo in range(0, len(ids), batch_size):
            chunk = np.stack(crops[lo:lo + batch_size])
            vectors = backend(chunk)
            for face_id, vec in zip(ids[lo:lo + batch_size], vectors):
                fh.write(face_id + " "
                         + " ".join(repr(float(v)) for v in vec) + "\n")
    return ExportResult(written=len(ids), skipped=skipped)
