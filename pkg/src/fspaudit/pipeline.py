"""Orchestration helpers joining the data model, features, scorer and
metrics into runnable stages.

The command-line layer is a thin argparse wrapper over these functions;
tests drive them directly.  All stages are deterministic given their
inputs and seeds, and all artifacts are plain files (manifest JSON,
FSPE1 feature files, .fspw params, report JSON/CSV).
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dataset_model import (
    DatasetManifest,
    PairExample,
    SplitAssignment,
    TripletExample,
)
from .errors import ValidationError
from .evaluation import (
    EvalReport,
    ScoredPair,
    ScoredTriplet,
    relation_breakdown,
    triplet_score,
)
from .features import (
    AugmentConfig,
    FaceVector,
    FeatureConfig,
    augment_views,
    crop_face,
    cue_features,
    decode_image,
    write_image,
)
from .pair_factory import (
    build_substitution_negatives,
    build_tskin_negatives,
    enumerate_positive_pairs,
    generate_negative_pairs,
    triplet_to_pairs,
)
from .scorer import ScorerParams, score_pair, score_pair_tta


class _ImageCache:
    """Decode each photo at most once while iterating faces."""

    def __init__(self, manifest: DatasetManifest, base_dir: str | Path):
        self.manifest = manifest
        self.base = Path(base_dir)
        self._paths = {p.photo_id: p.image_path for p in manifest.photos}
        self._photos: dict[str, np.ndarray] = {}

    def photo_image(self, photo_id: str) -> np.ndarray:
        if photo_id not in self._photos:
            self._photos[photo_id] = decode_image(self.base / self._paths[photo_id])
        return self._photos[photo_id]

    def face_crop(self, face_id: str, expansion: float) -> np.ndarray:
        photo = self.manifest.photo_of(face_id)
        image = self.photo_image(photo.photo_id)
        return crop_face(image, self.manifest.face(face_id).bbox, expansion)


def extract_features(manifest: DatasetManifest, base_dir: str | Path,
                     expansion: float = 0.0, view: str = "center", seed: int = 0,
                     augment: AugmentConfig | None = None,
                     feature: FeatureConfig | None = None) -> dict[str, FaceVector]:
    """Cue feature vectors for every face in the manifest.

    ``view`` picks the model input: "center" = deterministic resize +
    centre crop (the first TTA view), "random" = one seeded train-mode
    crop/flip per face, "raw" = the unresized crop (keeps the crop-area
    feature informative).
    """
    augment = augment or AugmentConfig()
    feature = feature or FeatureConfig()
    cache = _ImageCache(manifest, base_dir)
    out: dict[str, FaceVector] = {}
    counter = 0
    for photo in manifest.photos:
        image = cache.photo_image(photo.photo_id)
        for face in photo.faces:
            crop = crop_face(image, face.bbox, expansion)
            if view == "center":
                model_input = augment_views(crop, augment, mode="tta")[0]
            elif view == "random":
                model_input = augment_views(crop, augment, mode="train",
                                            seed=[seed, counter])[0]
            elif view == "raw":
                model_input = crop
            else:
                raise ValidationError(f"unknown view {view!r}")
            out[face.face_id] = cue_features(model_input, feature,
                                             face_id=face.face_id)
            counter += 1
    return out


def build_fsp_pairs(manifest: DatasetManifest, split: SplitAssignment,
                    seed: int = 0) -> DatasetManifest:
    """Attach balanced positive/negative same-photo pairs to the manifest.

    Positives are every within-photo pair of every subset; negatives are
    one cross-photo swap per positive, drawn within the subset.
    """
    positives: list[PairExample] = []
    for subset in ("train", "validation", "test"):
        positives.extend(enumerate_positive_pairs(manifest, split, subset))
    negatives = generate_negative_pairs(positives, manifest, split, seed=seed)
    return DatasetManifest(photos=manifest.photos,
                           pairs=tuple(positives + negatives),
                           triplets=manifest.triplets,
                           metadata=dict(manifest.metadata))


def pairs_in_subset(manifest: DatasetManifest, split: SplitAssignment,
                    subset: str) -> list[PairExample]:
    """Pairs whose faces live in ``subset``; raises if a pair straddles
    subsets (same-photo pair sets never should)."""
    out = []
    for pair in manifest.pairs:
        sa = split.of(manifest.photo_of(pair.face_a).photo_id)
        sb = split.of(manifest.photo_of(pair.face_b).photo_id)
        if sa != sb:
            raise ValidationError(
                f"pair ({pair.face_a!r}, {pair.face_b!r}) straddles subsets "
                f"{sa}/{sb}")
        if sa == subset:
            out.append(pair)
    return out


def score_pairs(params: ScorerParams, pairs: Sequence[PairExample],
                vectors: Mapping[str, FaceVector]) -> list[ScoredPair]:
    scored = []
    for pair in pairs:
        for fid in (pair.face_a, pair.face_b):
            if fid not in vectors:
                raise ValidationError(f"no feature vector for face {fid!r}")
        scored.append(ScoredPair(pair, score_pair(params, vectors[pair.face_a],
                                                  vectors[pair.face_b])))
    return scored


def evaluate_subset(manifest: DatasetManifest, split: SplitAssignment,
                    subset: str, params: ScorerParams,
                    vectors: Mapping[str, FaceVector], folds: int = 5,
                    seed: int = 0) -> EvalReport:
    pairs = pairs_in_subset(manifest, split, subset)
    if not pairs:
        raise ValidationError(f"no pairs in subset {subset!r}")
    return relation_breakdown(score_pairs(params, pairs, vectors),
                              folds=folds, seed=seed)


# ---------------------------------------------------------------------------
# kinship-style audit

class _PairScorer:
    """Scores (face_a, face_b) with either TTA over pixel crops (cue mode)
    or plain scoring of external embedding vectors."""

    def __init__(self, params: ScorerParams, manifest: DatasetManifest,
                 base_dir: str | Path | None,
                 embeddings: Mapping[str, FaceVector] | None,
                 expansion: float,
                 augment: AugmentConfig | None = None,
                 feature: FeatureConfig | None = None):
        self.params = params
        self.embeddings = embeddings
        self.expansion = expansion
        self.augment = augment or AugmentConfig()
        self.feature = feature or FeatureConfig()
        self._cache: dict[tuple[str, str], float] = {}
        self._images = None
        if embeddings is None:
            if base_dir is None:
                raise ValidationError("cue mode needs the manifest directory "
                                      "for pixel access")
            self._images = _ImageCache(manifest, base_dir)

    def crop(self, face_id: str) -> np.ndarray:
        return self._images.face_crop(face_id, self.expansion)

    def __call__(self, face_a: str, face_b: str) -> float:
        key = (face_a, face_b)
        if key in self._cache:
            return self._cache[key]
        if self.embeddings is not None:
            for fid in key:
                if fid not in self.embeddings:
                    raise ValidationError(f"no embedding for face {fid!r}")
            s = score_pair(self.params, self.embeddings[face_a],
                           self.embeddings[face_b])
        else:
            s = score_pair_tta(self.params, self.crop(face_a), self.crop(face_b),
                               self.augment, self.feature)
        self._cache[key] = s
        return s


def audit_manifest(manifest: DatasetManifest, params: ScorerParams,
                   base_dir: str | Path | None = None,
                   embeddings: Mapping[str, FaceVector] | None = None,
                   expansion: float = 0.0, folds: int = 5,
                   neg_versions: int = 5, seed: int = 0,
                   augment: AugmentConfig | None = None,
                   feature: FeatureConfig | None = None,
                   ) -> tuple[EvalReport, list[dict]]:
    """Score a kinship-style manifest with the same-photo scorer and break
    the results down per relation.

    Pair lists that already contain negatives are used as-is (one
    version).  Positive-only pair lists get ``neg_versions`` substitution
    negative sets; positive-only triplet lists get child-swap negatives,
    scored with the max rule over the two parent-child pairs.  Returns the
    report plus a top-scoring-pairs gallery (descending score).
    """
    if neg_versions < 1:
        raise ValidationError(f"neg_versions must be >= 1, got {neg_versions}")
    scorer_fn = _PairScorer(params, manifest, base_dir, embeddings, expansion,
                            augment, feature)
    records: list[ScoredPair | ScoredTriplet] = []

    pairs = list(manifest.pairs)
    if pairs:
        has_negatives = any(p.label == "negative" for p in pairs)
        if has_negatives:
            for pair in pairs:
                records.append(ScoredPair(pair, scorer_fn(pair.face_a, pair.face_b)))
        else:
            for pair in pairs:
                records.append(ScoredPair(pair, scorer_fn(pair.face_a, pair.face_b)))
            for v, negatives in enumerate(build_substitution_negatives(
                    pairs, manifest, versions=neg_versions, seed=seed)):
                for pair in negatives:
                    records.append(ScoredPair(
                        pair, scorer_fn(pair.face_a, pair.face_b), version=v))

    triplets = list(manifest.triplets)
    if triplets:
        def score_triplet(trip: TripletExample) -> float:
            fc, mc = triplet_to_pairs(trip)
            return triplet_score(scorer_fn(fc.face_a, fc.face_b),
                                 scorer_fn(mc.face_a, mc.face_b))

        has_negatives = any(t.label == "negative" for t in triplets)
        if has_negatives:
            for trip in triplets:
                records.append(ScoredTriplet(trip, score_triplet(trip)))
        else:
            for trip in triplets:
                records.append(ScoredTriplet(trip, score_triplet(trip)))
            for v in range(neg_versions):
                for trip in build_tskin_negatives(triplets, seed=seed, version=v):
                    records.append(ScoredTriplet(trip, score_triplet(trip),
                                                 version=v))

    if not records:
        raise ValidationError("manifest has neither pairs nor triplets to audit")
    report = relation_breakdown(records, folds=folds, seed=seed)
    gallery = _top_pairs(records, manifest)
    return report, gallery


def _top_pairs(records: Sequence[ScoredPair | ScoredTriplet],
               manifest: DatasetManifest, k: int = 10) -> list[dict]:
    entries = []
    for rec in records:
        if not isinstance(rec, ScoredPair):
            continue
        pair = rec.pair
        entries.append({
            "face_a": pair.face_a,
            "face_b": pair.face_b,
            "score": rec.score,
            "label": pair.label,
            "relation": pair.relation,
            "image_a": manifest.photo_of(pair.face_a).image_path,
            "image_b": manifest.photo_of(pair.face_b).image_path,
        })
    entries.sort(key=lambda e: (-e["score"], e["face_a"], e["face_b"]))
    return entries[:k]


def write_gallery(gallery: list[dict], out_dir: str | Path,
                  scorer_fn: _PairScorer | None = None) -> None:
    """Write gallery.json and, when pixel access is available, the crop
    images of each listed pair."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "gallery.json").write_text(
        json.dumps(gallery, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    if scorer_fn is None or scorer_fn.embeddings is not None:
        return
    for i, entry in enumerate(gallery):
        for side in ("a", "b"):
            crop = scorer_fn.crop(entry[f"face_{side}"])
            write_image(out / f"pair{i:03d}_{side}.png", crop)


# ---------------------------------------------------------------------------
# CSV / summary emitters

def curves_csv(points: Sequence[tuple[float, float]], header: tuple[str, str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for x, y in points:
        writer.writerow([repr(float(x)), repr(float(y))])
    return buf.getvalue()


_REPORT_COLUMNS = ("MD", "MS", "FD", "FS", "FMD", "FMS", "All")


def accuracy_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    present = [c for c in _REPORT_COLUMNS if c in report.relation_accuracy]
    writer.writerow(present)
    writer.writerow([f"{report.relation_accuracy[c]:.4f}" for c in present])
    return buf.getvalue()


def summary_table(named_reports: Sequence[tuple[str, EvalReport]]) -> tuple[dict, str]:
    """Merge audit reports into one summary: JSON dict + CSV with one row
    per dataset and one column per relation."""
    doc: dict = {"datasets": {}}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["dataset", *_REPORT_COLUMNS, "auc", "eer", "ap"])
    for name, report in named_reports:
        doc["datasets"][name] = {
            "relation_accuracy": report.relation_accuracy,
            "auc": report.auc,
            "eer_rate": report.eer_rate,
            "ap": report.ap,
        }
        row = [name]
        for col in _REPORT_COLUMNS:
            v = report.relation_accuracy.get(col)
            row.append("" if v is None else f"{v:.4f}")
        for v in (report.auc, report.eer_rate, report.ap):
            row.append("" if v is None else f"{v:.4f}")
        writer.writerow(row)
    return doc, buf.getvalue()
