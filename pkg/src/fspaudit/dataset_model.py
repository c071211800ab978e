"""Core data model: photos, faces, pairs, triplets, manifests and photo splits.

A *manifest* is the single bookkeeping structure the rest of the package
works from.  It records photos (with their face bounding boxes) plus any
labelled pair/triplet examples, and round-trips through a stable JSON
schema (see ``load_manifest``).  Splitting is always done at **photo**
level so that two faces from one photograph can never land in different
subsets.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import ValidationError

#: Recognised face roles. ``father``/``mother`` are parent roles; ``son``,
#: ``daughter`` and the gender-unknown ``child`` are child roles.
ROLES = ("father", "mother", "son", "daughter", "child", "other")
PARENT_ROLES = frozenset({"father", "mother"})
CHILD_ROLES = frozenset({"son", "daughter", "child"})

#: Recognised pair relation tags.  The four parent-child tags follow the
#: usual kinship-benchmark abbreviations (e.g. ``FD`` = father-daughter);
#: ``FMD``/``FMS`` are reserved for triplet-level (both-parents) records.
RELATIONS = ("MD", "MS", "FD", "FS", "FMD", "FMS", "sibling", "none")

LABELS = ("positive", "negative")
SUBSETS = ("train", "validation", "test")


@dataclass(frozen=True, slots=True)
class FaceRecord:
    """One annotated face inside a photo.

    ``bbox`` is ``(x, y, w, h)`` in pixel coordinates, origin top-left,
    fully inside the photo.  ``person_id``/``family_id``/``role`` are
    optional annotations used by the kinship-style pair builders.
    """

    face_id: str
    bbox: tuple[int, int, int, int]
    person_id: str | None = None
    family_id: str | None = None
    role: str | None = None


@dataclass(frozen=True, slots=True)
class PhotoRecord:
    photo_id: str
    image_path: str
    width: int
    height: int
    faces: tuple[FaceRecord, ...] = ()


@dataclass(frozen=True, slots=True)
class PairExample:
    """A labelled face pair.  ``fold`` is a published cross-validation fold
    index when the source benchmark defines one."""

    face_a: str
    face_b: str
    label: str
    relation: str | None = None
    fold: int | None = None


@dataclass(frozen=True, slots=True)
class TripletExample:
    """A (father, mother, child) face triplet with the child's gender."""

    father: str
    mother: str
    child: str
    label: str
    child_gender: str


@dataclass(frozen=True)
class DatasetManifest:
    photos: tuple[PhotoRecord, ...]
    pairs: tuple[PairExample, ...] = ()
    triplets: tuple[TripletExample, ...] = ()
    metadata: Mapping[str, str] = field(default_factory=dict)

    @cached_property
    def _face_index(self) -> dict[str, tuple[PhotoRecord, FaceRecord]]:
        index: dict[str, tuple[PhotoRecord, FaceRecord]] = {}
        for photo in self.photos:
            for face in photo.faces:
                index[face.face_id] = (photo, face)
        return index

    def face(self, face_id: str) -> FaceRecord:
        try:
            return self._face_index[face_id][1]
        except KeyError:
            raise ValidationError(f"unknown face_id {face_id!r}") from None

    def photo_of(self, face_id: str) -> PhotoRecord:
        """The photo containing ``face_id``."""
        try:
            return self._face_index[face_id][0]
        except KeyError:
            raise ValidationError(f"unknown face_id {face_id!r}") from None

    @property
    def face_ids(self) -> list[str]:
        return list(self._face_index)

    def photo_ids(self) -> list[str]:
        return [p.photo_id for p in self.photos]


@dataclass(frozen=True)
class SplitAssignment:
    """Maps every photo_id to one of ``train``/``validation``/``test``."""

    assignment: Mapping[str, str]

    def of(self, photo_id: str) -> str:
        try:
            return self.assignment[photo_id]
        except KeyError:
            raise ValidationError(f"photo_id {photo_id!r} has no split assignment") from None

    def subset(self, name: str) -> frozenset[str]:
        if name not in SUBSETS:
            raise ValidationError(f"unknown subset name {name!r}")
        return frozenset(p for p, s in self.assignment.items() if s == name)

    def counts(self) -> dict[str, int]:
        out = {name: 0 for name in SUBSETS}
        for s in self.assignment.values():
            out[s] += 1
        return out


# ---------------------------------------------------------------------------
# validation

def validate_manifest(manifest: DatasetManifest) -> None:
    """Check every manifest invariant; raise ValidationError naming the first
    offending record."""
    seen_photos: set[str] = set()
    seen_faces: set[str] = set()
    for photo in manifest.photos:
        if not photo.photo_id:
            raise ValidationError("empty photo_id")
        if photo.photo_id in seen_photos:
            raise ValidationError(f"duplicate photo_id {photo.photo_id!r}")
        seen_photos.add(photo.photo_id)
        if photo.width <= 0 or photo.height <= 0:
            raise ValidationError(
                f"photo {photo.photo_id!r}: non-positive dimensions "
                f"{photo.width}x{photo.height}")
        for face in photo.faces:
            if not face.face_id:
                raise ValidationError(f"photo {photo.photo_id!r}: empty face_id")
            if face.face_id in seen_faces:
                raise ValidationError(f"duplicate face_id {face.face_id!r}")
            seen_faces.add(face.face_id)
            x, y, w, h = face.bbox
            if w <= 0 or h <= 0:
                raise ValidationError(
                    f"face {face.face_id!r}: non-positive bbox size {w}x{h}")
            if x < 0 or y < 0 or x + w > photo.width or y + h > photo.height:
                raise ValidationError(
                    f"face {face.face_id!r}: bbox {face.bbox} exceeds photo "
                    f"bounds {photo.width}x{photo.height}")
            if face.role is not None and face.role not in ROLES:
                raise ValidationError(
                    f"face {face.face_id!r}: unknown role {face.role!r}")
    for pair in manifest.pairs:
        if pair.label not in LABELS:
            raise ValidationError(
                f"pair ({pair.face_a!r}, {pair.face_b!r}): bad label {pair.label!r}")
        if pair.face_a == pair.face_b:
            raise ValidationError(f"pair with identical members {pair.face_a!r}")
        for fid in (pair.face_a, pair.face_b):
            if fid not in seen_faces:
                raise ValidationError(
                    f"pair ({pair.face_a!r}, {pair.face_b!r}): unknown face_id {fid!r}")
        if pair.relation is not None and pair.relation not in RELATIONS:
            raise ValidationError(
                f"pair ({pair.face_a!r}, {pair.face_b!r}): unknown relation "
                f"{pair.relation!r}")
    for trip in manifest.triplets:
        members = (trip.father, trip.mother, trip.child)
        if len(set(members)) != 3:
            raise ValidationError(f"triplet with repeated members {members!r}")
        for fid in members:
            if fid not in seen_faces:
                raise ValidationError(f"triplet {members!r}: unknown face_id {fid!r}")
        if trip.label not in LABELS:
            raise ValidationError(f"triplet {members!r}: bad label {trip.label!r}")
        if trip.child_gender not in ("son", "daughter"):
            raise ValidationError(
                f"triplet {members!r}: bad child_gender {trip.child_gender!r}")


# ---------------------------------------------------------------------------
# JSON (de)serialization
#
# Schema (UTF-8, sorted keys when written by this package):
# {
#   "photos":   [{"photo_id", "image_path", "width", "height",
#                 "faces": [{"face_id", "bbox": [x, y, w, h],
#                            "person_id"?, "family_id"?, "role"?}]}],
#   "pairs":    [{"a", "b", "label", "relation"?, "fold"?}],
#   "triplets": [{"father", "mother", "child", "label", "child_gender"}],
#   "metadata": {str: str}
# }

def _require(obj: Mapping, key: str, where: str):
    if key not in obj:
        raise ValidationError(f"{where}: missing key {key!r}")
    return obj[key]


def _face_from_json(obj, where: str) -> FaceRecord:
    bbox = _require(obj, "bbox", where)
    if not (isinstance(bbox, list) and len(bbox) == 4
            and all(isinstance(v, int) and not isinstance(v, bool) for v in bbox)):
        raise ValidationError(f"{where}: bbox must be four integers, got {bbox!r}")
    return FaceRecord(
        face_id=str(_require(obj, "face_id", where)),
        bbox=tuple(bbox),
        person_id=obj.get("person_id"),
        family_id=obj.get("family_id"),
        role=obj.get("role"),
    )


def manifest_from_dict(doc: Mapping) -> DatasetManifest:
    if not isinstance(doc, Mapping):
        raise ValidationError("manifest root must be a JSON object")
    photos = []
    for pobj in doc.get("photos", []):
        where = f"photo {pobj.get('photo_id', '?')!r}"
        faces = tuple(
            _face_from_json(fobj, f"{where} face {fobj.get('face_id', '?')!r}")
            for fobj in pobj.get("faces", []))
        photos.append(PhotoRecord(
            photo_id=str(_require(pobj, "photo_id", where)),
            image_path=str(_require(pobj, "image_path", where)),
            width=_require(pobj, "width", where),
            height=_require(pobj, "height", where),
            faces=faces,
        ))
    pairs = tuple(
        PairExample(
            face_a=str(_require(obj, "a", "pair")),
            face_b=str(_require(obj, "b", "pair")),
            label=str(_require(obj, "label", "pair")),
            relation=obj.get("relation"),
            fold=obj.get("fold"),
        )
        for obj in doc.get("pairs", []))
    triplets = tuple(
        TripletExample(
            father=str(_require(obj, "father", "triplet")),
            mother=str(_require(obj, "mother", "triplet")),
            child=str(_require(obj, "child", "triplet")),
            label=str(_require(obj, "label", "triplet")),
            child_gender=str(_require(obj, "child_gender", "triplet")),
        )
        for obj in doc.get("triplets", []))
    metadata = doc.get("metadata", {})
    if not isinstance(metadata, Mapping):
        raise ValidationError("metadata must be an object")
    manifest = DatasetManifest(
        photos=tuple(photos), pairs=pairs, triplets=triplets,
        metadata=dict(metadata))
    validate_manifest(manifest)
    return manifest


def manifest_to_dict(manifest: DatasetManifest) -> dict:
    def face_obj(f: FaceRecord) -> dict:
        obj = {"face_id": f.face_id, "bbox": list(f.bbox)}
        if f.person_id is not None:
            obj["person_id"] = f.person_id
        if f.family_id is not None:
            obj["family_id"] = f.family_id
        if f.role is not None:
            obj["role"] = f.role
        return obj

    def pair_obj(p: PairExample) -> dict:
        obj = {"a": p.face_a, "b": p.face_b, "label": p.label}
        if p.relation is not None:
            obj["relation"] = p.relation
        if p.fold is not None:
            obj["fold"] = p.fold
        return obj

    return {
        "photos": [
            {"photo_id": p.photo_id, "image_path": p.image_path,
             "width": p.width, "height": p.height,
             "faces": [face_obj(f) for f in p.faces]}
            for p in manifest.photos],
        "pairs": [pair_obj(p) for p in manifest.pairs],
        "triplets": [
            {"father": t.father, "mother": t.mother, "child": t.child,
             "label": t.label, "child_gender": t.child_gender}
            for t in manifest.triplets],
        "metadata": dict(manifest.metadata),
    }


def load_manifest(path: str | Path) -> DatasetManifest:
    """Read and validate a manifest JSON file.

    Raises ValidationError for malformed JSON or contract violations and
    lets OSError propagate for I/O failures.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"manifest {path}: invalid JSON ({exc})") from exc
    return manifest_from_dict(doc)


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """Write the manifest as deterministic JSON (sorted keys, no timestamps)."""
    text = json.dumps(manifest_to_dict(manifest), sort_keys=True, indent=1)
    Path(path).write_text(text + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# filtering and splitting

def filter_usable_photos(manifest: DatasetManifest,
                         min_face_px: int = 50) -> DatasetManifest:
    """Drop faces smaller than ``min_face_px`` on either bbox side, then drop
    photos left with fewer than two faces.

    Pairs/triplets referencing a dropped face are removed as well, keeping
    the returned manifest self-consistent.  Photo order is preserved.
    """
    photos = []
    for photo in manifest.photos:
        faces = tuple(f for f in photo.faces
                      if f.bbox[2] >= min_face_px and f.bbox[3] >= min_face_px)
        if len(faces) >= 2:
            photos.append(replace(photo, faces=faces))
    kept = {f.face_id for p in photos for f in p.faces}
    pairs = tuple(p for p in manifest.pairs
                  if p.face_a in kept and p.face_b in kept)
    triplets = tuple(t for t in manifest.triplets
                     if {t.father, t.mother, t.child} <= kept)
    return DatasetManifest(photos=tuple(photos), pairs=pairs,
                           triplets=triplets, metadata=dict(manifest.metadata))


def _largest_remainder_counts(n: int, ratios: tuple[float, ...]) -> list[int]:
    exact = [n * r for r in ratios]
    base = [math.floor(e) for e in exact]
    leftover = n - sum(base)
    # Distribute leftovers to the largest fractional parts; ties go to the
    # earlier subset (train before validation before test).
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:leftover]:
        base[i] += 1
    return base


def split_photos(manifest: DatasetManifest,
                 ratios: tuple[float, float, float] = (0.7, 0.1, 0.2),
                 seed: int = 0) -> SplitAssignment:
    """Randomly partition photos into train/validation/test.

    Subset sizes are the largest-remainder rounding of ``len(photos) *
    ratios``, so they always sum to the photo count.  The assignment is a
    pure function of the photo-id *set*, the ratios and the seed: photo ids
    are sorted before the seeded shuffle, so manifest order is irrelevant.
    """
    if not manifest.photos:
        raise ValidationError("cannot split an empty manifest")
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValidationError(f"ratios must be three positive numbers, got {ratios!r}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValidationError(f"ratios must sum to 1, got {sum(ratios)!r}")
    ids = sorted(p.photo_id for p in manifest.photos)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ids))
    counts = _largest_remainder_counts(len(ids), tuple(ratios))
    assignment: dict[str, str] = {}
    start = 0
    for name, count in zip(SUBSETS, counts):
        for k in perm[start:start + count]:
            assignment[ids[k]] = name
        start += count
    return SplitAssignment(assignment=assignment)


def load_split(path: str | Path) -> SplitAssignment:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"split file {path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, Mapping) or "assignment" not in doc:
        raise ValidationError(f"split file {path}: missing 'assignment' object")
    assignment = doc["assignment"]
    for pid, name in assignment.items():
        if name not in SUBSETS:
            raise ValidationError(
                f"split file {path}: photo {pid!r} assigned to unknown subset {name!r}")
    return SplitAssignment(assignment=dict(assignment))


def save_split(split: SplitAssignment, path: str | Path) -> None:
    doc = {"assignment": dict(split.assignment), "counts": split.counts()}
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n",
                          encoding="utf-8")


def subset_faces(manifest: DatasetManifest, split: SplitAssignment,
                 name: str) -> list[str]:
    """Face ids whose photo belongs to subset ``name``, in manifest order."""
    wanted = split.subset(name)
    return [f.face_id for p in manifest.photos if p.photo_id in wanted
            for f in p.faces]
