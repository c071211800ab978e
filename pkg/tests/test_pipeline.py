import json
from dataclasses import replace

import numpy as np
import pytest

from fspaudit.dataset_model import (
    DatasetManifest,
    PairExample,
    SplitAssignment,
    TripletExample,
)
from fspaudit.errors import ValidationError
from fspaudit.evaluation import ScoredPair
from fspaudit.features import AugmentConfig, FaceVector, FeatureConfig
from fspaudit.pipeline import (
    accuracy_csv,
    audit_manifest,
    build_fsp_pairs,
    curves_csv,
    evaluate_subset,
    extract_features,
    pairs_in_subset,
    score_pairs,
    summary_table,
    write_gallery,
    _PairScorer,
)
from fspaudit.scorer import ScorerConfig, init_params
from fspaudit.synth_oracle import SynthConfig, generate

FAST_AUG = AugmentConfig(resize_px=32, crop_px=24, tta_views=4)
CUE_DIM = FeatureConfig().dim


@pytest.fixture(scope="module")
def synth(tmp_path_factory):
    base = tmp_path_factory.mktemp("synth")
    config = SynthConfig(n_photos=10, faces_per_photo=(3, 3), image_px=256,
                         face_px=(56, 72), image_format="ppm", seed=2)
    manifest = generate(config, base)
    return manifest, base


def scorer_for(dim):
    cfg = ScorerConfig(input_dim=dim, proj_dim=8, hidden_dims=(8, 4), seed=0)
    return init_params(cfg)


def wide_split(manifest):
    """A split with at least two photos in every subset (a 70/10/20 split
    of ten photos leaves validation with one photo, which cannot host
    cross-photo negatives)."""
    ids = manifest.photo_ids()
    names = ["train"] * 6 + ["validation"] * 2 + ["test"] * 2
    return SplitAssignment(dict(zip(ids, names)))


# ---------------------------------------------------------------------------
# feature extraction

def test_extract_features_covers_all_faces(synth):
    manifest, base = synth
    vectors = extract_features(manifest, base, augment=FAST_AUG)
    assert set(vectors) == {f.face_id for p in manifest.photos for f in p.faces}
    assert all(v.dim == CUE_DIM for v in vectors.values())
    again = extract_features(manifest, base, augment=FAST_AUG)
    for fid in vectors:
        assert vectors[fid].values.tobytes() == again[fid].values.tobytes()


def test_extract_features_views(synth):
    manifest, base = synth
    center = extract_features(manifest, base, view="center", augment=FAST_AUG)
    raw = extract_features(manifest, base, view="raw", augment=FAST_AUG)
    rand = extract_features(manifest, base, view="random", augment=FAST_AUG)
    # center views are all resized to the same area; raw views are not
    areas_center = {v.values[-1] for v in center.values()}
    areas_raw = {v.values[-1] for v in raw.values()}
    assert len(areas_center) == 1
    assert len(areas_raw) > 1
    assert any(rand[f].values.tobytes() != center[f].values.tobytes()
               for f in center)
    with pytest.raises(ValidationError, match="view"):
        extract_features(manifest, base, view="mirror")


# ---------------------------------------------------------------------------
# pair building and evaluation plumbing

def test_build_fsp_pairs_balanced(synth):
    manifest, _ = synth
    split = wide_split(manifest)
    built = build_fsp_pairs(manifest, split, seed=0)
    pos = [p for p in built.pairs if p.label == "positive"]
    neg = [p for p in built.pairs if p.label == "negative"]
    assert len(pos) == len(neg)
    assert len(pos) == 10 * 3  # ten photos with three faces each
    assert built.photos == manifest.photos


def test_pairs_in_subset(synth):
    manifest, _ = synth
    split = wide_split(manifest)
    built = build_fsp_pairs(manifest, split, seed=0)
    sizes = {s: len(pairs_in_subset(built, split, s))
             for s in ("train", "validation", "test")}
    assert sum(sizes.values()) == len(built.pairs)
    counts = split.counts()
    for s in sizes:
        assert sizes[s] == counts[s] * 3 * 2


def test_pairs_in_subset_rejects_straddlers(synth):
    manifest, _ = synth
    ids = manifest.photo_ids()
    split = SplitAssignment({p: ("train" if p != ids[-1] else "test")
                             for p in ids})
    faces_train = manifest.photos[0].faces
    faces_test = manifest.photos[-1].faces
    bad = DatasetManifest(photos=manifest.photos, pairs=(
        PairExample(faces_train[0].face_id, faces_test[0].face_id, "negative"),))
    with pytest.raises(ValidationError, match="straddles"):
        pairs_in_subset(bad, split, "train")


def test_score_and_evaluate_subset(synth):
    manifest, base = synth
    split = wide_split(manifest)
    built = build_fsp_pairs(manifest, split, seed=0)
    vectors = extract_features(manifest, base, augment=FAST_AUG)
    params = scorer_for(CUE_DIM)
    train_pairs = pairs_in_subset(built, split, "train")
    scored = score_pairs(params, train_pairs, vectors)
    assert len(scored) == len(train_pairs)
    assert all(0.0 < sp.score < 1.0 for sp in scored)
    report = evaluate_subset(built, split, "train", params, vectors, folds=2)
    assert set(report.relation_accuracy) == {"All"}
    assert report.auc is not None
    with pytest.raises(ValidationError, match="no feature vector"):
        score_pairs(params, train_pairs, {})


# ---------------------------------------------------------------------------
# kinship-style audits

def rel_of(i):
    return ("FD", "MS")[i % 2]


def make_folded_kinship(manifest):
    """Pairs with provided negatives, relations and folds (2 per relation)."""
    faces = [f.face_id for p in manifest.photos for f in p.faces]
    pairs = []
    for i in range(12):
        rel = rel_of(i)
        fold = i % 2 + 1
        pairs.append(PairExample(faces[2 * i], faces[2 * i + 1], "positive",
                                 relation=rel, fold=fold))
        pairs.append(PairExample(faces[2 * i], faces[-1 - i], "negative",
                                 relation=rel, fold=fold))
    return DatasetManifest(photos=manifest.photos, pairs=tuple(pairs))


def test_audit_pairs_with_given_negatives(synth):
    manifest, base = synth
    kin = make_folded_kinship(manifest)
    params = scorer_for(CUE_DIM)
    report, gallery = audit_manifest(kin, params, base_dir=base,
                                     folds=2, seed=0, augment=FAST_AUG)
    assert set(report.relation_accuracy) == {"MS", "FD", "All"}
    assert report.versions == []
    assert report.n_positive == 12 and report.n_negative == 12
    assert gallery and len(gallery) <= 10
    scores = [e["score"] for e in gallery]
    assert scores == sorted(scores, reverse=True)
    for entry in gallery:
        assert {"face_a", "face_b", "score", "label", "relation",
                "image_a", "image_b"} <= set(entry)


def roled_photos(manifest, roles):
    out = []
    for photo in manifest.photos:
        faces = tuple(replace(f, role=roles[j % len(roles)])
                      for j, f in enumerate(photo.faces))
        out.append(replace(photo, faces=faces))
    return tuple(out)


def test_audit_positive_pairs_gets_substitution_versions(synth):
    manifest, base = synth
    photos = roled_photos(manifest, ("father", "son", "son"))
    pairs = tuple(PairExample(p.faces[0].face_id, p.faces[1].face_id,
                              "positive", relation="FS")
                  for p in photos)
    kin = DatasetManifest(photos=photos, pairs=pairs)
    params = scorer_for(CUE_DIM)
    report, _ = audit_manifest(kin, params, base_dir=base, folds=2,
                               neg_versions=3, seed=0, augment=FAST_AUG)
    assert report.versions == [0, 1, 2]
    assert set(report.relation_accuracy) == {"FS", "All"}
    for accs in report.relation_accuracy_by_version.values():
        assert len(accs) == 3
    assert report.n_positive == 10 and report.n_negative == 10


def test_audit_positive_triplets_gets_child_swaps(synth):
    manifest, base = synth
    photos = roled_photos(manifest, ("father", "mother", "son"))
    triplets = []
    for i, photo in enumerate(photos):
        gender = ("son", "daughter")[i % 2]
        triplets.append(TripletExample(photo.faces[0].face_id,
                                       photo.faces[1].face_id,
                                       photo.faces[2].face_id,
                                       "positive", gender))
    kin = DatasetManifest(photos=photos, triplets=tuple(triplets))
    params = scorer_for(CUE_DIM)
    report, gallery = audit_manifest(kin, params, base_dir=base, folds=2,
                                     neg_versions=2, seed=0, augment=FAST_AUG)
    assert set(report.relation_accuracy) == {"FMD", "FMS", "All"}
    assert report.versions == [0, 1]
    assert gallery == []  # triplets do not enter the pair gallery


def test_audit_embeddings_mode(synth):
    manifest, _ = synth
    kin = make_folded_kinship(manifest)
    rng = np.random.default_rng(0)
    emb = {f.face_id: FaceVector(f.face_id, rng.normal(size=8))
           for p in manifest.photos for f in p.faces}
    params = scorer_for(8)
    report, gallery = audit_manifest(kin, params, embeddings=emb, folds=2)
    assert set(report.relation_accuracy) == {"MS", "FD", "All"}
    missing = dict(emb)
    missing.pop(kin.pairs[0].face_a)
    with pytest.raises(ValidationError, match="no embedding"):
        audit_manifest(kin, params, embeddings=missing, folds=2)


def test_audit_validation(synth):
    manifest, base = synth
    params = scorer_for(CUE_DIM)
    with pytest.raises(ValidationError, match="neither pairs nor triplets"):
        audit_manifest(DatasetManifest(photos=manifest.photos), params,
                       base_dir=base)
    kin = make_folded_kinship(manifest)
    with pytest.raises(ValidationError, match="manifest directory"):
        audit_manifest(kin, params)
    with pytest.raises(ValidationError, match="neg_versions"):
        audit_manifest(kin, params, base_dir=base, neg_versions=0)


def test_write_gallery(tmp_path, synth):
    manifest, base = synth
    kin = make_folded_kinship(manifest)
    params = scorer_for(CUE_DIM)
    scorer_fn = _PairScorer(params, kin, base, None, 0.0, FAST_AUG, None)
    report, gallery = audit_manifest(kin, params, base_dir=base, folds=2,
                                     augment=FAST_AUG)
    out = tmp_path / "gallery"
    write_gallery(gallery, out, scorer_fn)
    doc = json.loads((out / "gallery.json").read_text())
    assert len(doc) == len(gallery)
    pngs = sorted(p.name for p in out.glob("*.png"))
    assert len(pngs) == 2 * len(gallery)
    assert pngs[0] == "pair000_a.png"
    # embeddings mode writes no crops
    out2 = tmp_path / "gallery2"
    rng = np.random.default_rng(0)
    emb = {f.face_id: FaceVector(f.face_id, rng.normal(size=8))
           for p in manifest.photos for f in p.faces}
    scorer_emb = _PairScorer(scorer_for(8), kin, None, emb, 0.0)
    write_gallery(gallery, out2, scorer_emb)
    assert not list(out2.glob("*.png"))


# ---------------------------------------------------------------------------
# emitters

def test_curves_csv():
    text = curves_csv([(0.0, 0.0), (0.5, 0.75), (1.0, 1.0)], ("fpr", "tpr"))
    lines = text.strip().split("\n")
    assert lines[0] == "fpr,tpr"
    assert lines[1] == "0.0,0.0"
    assert lines[2] == "0.5,0.75"
    assert float(lines[3].split(",")[1]) == 1.0


def test_accuracy_csv(synth):
    manifest, base = synth
    kin = make_folded_kinship(manifest)
    report, _ = audit_manifest(kin, scorer_for(CUE_DIM), base_dir=base,
                               folds=2, augment=FAST_AUG)
    text = accuracy_csv(report)
    lines = text.strip().split("\n")
    assert lines[0] == "MS,FD,All"
    cells = lines[1].split(",")
    assert len(cells) == 3
    for cell in cells:
        assert 0.0 <= float(cell) <= 1.0
        assert len(cell.split(".")[1]) == 4


def test_summary_table(synth):
    manifest, base = synth
    kin = make_folded_kinship(manifest)
    report, _ = audit_manifest(kin, scorer_for(CUE_DIM), base_dir=base,
                               folds=2, augment=FAST_AUG)
    doc, csv_text = summary_table([("kinface-style", report)])
    assert "kinface-style" in doc["datasets"]
    assert doc["datasets"]["kinface-style"]["auc"] == report.auc
    lines = csv_text.strip().split("\n")
    assert lines[0] == "dataset,MD,MS,FD,FS,FMD,FMS,All,auc,eer,ap"
    row = lines[1].split(",")
    assert row[0] == "kinface-style"
    assert row[1] == ""  # MD absent
    assert row[7] != ""  # All present
