"""Just enough manifest reading for the exporter.

The file layout is the dataset-manifest JSON used by the audit pipeline:
a "photos" list whose entries carry an image path and a list of faces,
each face an id plus an (x, y, w, h) bounding box.  Only the fields the
exporter touches are validated here.
"""

import json
from pathlib import Path
from typing import NamedTuple

from .errors import ExportError


class Face(NamedTuple):
    face_id: str
    bbox: tuple[int, int, int, int]


class Photo(NamedTuple):
    photo_id: str
    image_path: str
    faces: tuple[Face, ...]


def _require(obj, key, where):
    if key not in obj:
        raise ExportError(f"{where}: missing key {key!r}")
    return obj[key]


def read_manifest(path: str | Path) -> list[Photo]:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ExportError(f"{path}: invalid JSON ({exc})") from None
    photos = []
    seen_faces: set[str] = set()
    for entry in _require(doc, "photos", str(path)):
        photo_id = str(_require(entry, "photo_id", "photo"))
        image_path = str(_require(entry, "image_path", f"photo {photo_id!r}"))
        faces = []
        for face in _require(entry, "faces", f"photo {photo_id!r}"):
            face_id = str(_require(face, "face_id", f"photo {photo_id!r}"))
            if not face_id or any(c.isspace() for c in face_id):
                raise ExportError(f"unusable face_id {face_id!r}")
            if face_id in seen_faces:
                raise ExportError(f"duplicate face_id {face_id!r}")
            seen_faces.add(face_id)
            bbox = _require(face, "bbox", f"face {face_id!r}")
            if len(bbox) != 4 or not all(isinstance(v, int) for v in bbox):
                raise ExportError(
                    f"face {face_id!r}: bbox must be four integers, got {bbox!r}")
            faces.append(Face(face_id, tuple(bbox)))
        photos.append(Photo(photo_id, image_path, tuple(faces)))
    return photos
