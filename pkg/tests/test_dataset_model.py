import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fspaudit.dataset_model import (
    DatasetManifest,
    FaceRecord,
    PairExample,
    PhotoRecord,
    SplitAssignment,
    TripletExample,
    filter_usable_photos,
    load_manifest,
    load_split,
    manifest_from_dict,
    manifest_to_dict,
    save_manifest,
    save_split,
    split_photos,
    subset_faces,
    validate_manifest,
)
from fspaudit.errors import ValidationError

from helpers import make_manifest, make_photo


def two_photo_manifest() -> DatasetManifest:
    return make_manifest([2, 3])


# ---------------------------------------------------------------------------
# validation

def test_valid_manifest_passes():
    validate_manifest(two_photo_manifest())


def test_duplicate_photo_id_rejected():
    p = make_photo("p", 2)
    with pytest.raises(ValidationError, match="duplicate photo_id"):
        validate_manifest(DatasetManifest(photos=(p, p)))


def test_duplicate_face_id_rejected():
    a = make_photo("a", 2, prefix="x")
    b = make_photo("b", 2, prefix="x")
    with pytest.raises(ValidationError, match="duplicate face_id"):
        validate_manifest(DatasetManifest(photos=(a, b)))


def test_bbox_must_fit_photo():
    face = FaceRecord("f", (90, 0, 20, 20))
    photo = PhotoRecord("p", "p.png", 100, 100, (face,))
    with pytest.raises(ValidationError, match="exceeds photo bounds"):
        validate_manifest(DatasetManifest(photos=(photo,)))


def test_bbox_size_positive():
    face = FaceRecord("f", (0, 0, 0, 20))
    photo = PhotoRecord("p", "p.png", 100, 100, (face,))
    with pytest.raises(ValidationError, match="non-positive bbox"):
        validate_manifest(DatasetManifest(photos=(photo,)))


def test_pair_faces_must_resolve():
    m = DatasetManifest(photos=two_photo_manifest().photos,
                        pairs=(PairExample("nope", "p000000_f0", "positive"),))
    with pytest.raises(ValidationError, match="unknown face_id 'nope'"):
        validate_manifest(m)


def test_pair_members_distinct():
    m = DatasetManifest(photos=two_photo_manifest().photos,
                        pairs=(PairExample("p000000_f0", "p000000_f0", "positive"),))
    with pytest.raises(ValidationError, match="identical members"):
        validate_manifest(m)


def test_pair_label_checked():
    m = DatasetManifest(photos=two_photo_manifest().photos,
                        pairs=(PairExample("p000000_f0", "p000000_f1", "maybe"),))
    with pytest.raises(ValidationError, match="bad label"):
        validate_manifest(m)


def test_triplet_members_distinct():
    base = two_photo_manifest()
    trip = TripletExample("p000001_f0", "p000001_f0", "p000001_f2",
                          "positive", "son")
    with pytest.raises(ValidationError, match="repeated members"):
        validate_manifest(DatasetManifest(photos=base.photos, triplets=(trip,)))


def test_triplet_child_gender_checked():
    base = two_photo_manifest()
    trip = TripletExample("p000001_f0", "p000001_f1", "p000001_f2",
                          "positive", "boy")
    with pytest.raises(ValidationError, match="child_gender"):
        validate_manifest(DatasetManifest(photos=base.photos, triplets=(trip,)))


def test_face_lookup():
    m = two_photo_manifest()
    assert m.face("p000001_f2").face_id == "p000001_f2"
    assert m.photo_of("p000001_f2").photo_id == "p000001"
    with pytest.raises(ValidationError, match="unknown face_id"):
        m.face("ghost")


# ---------------------------------------------------------------------------
# JSON round trip

def test_manifest_round_trip(tmp_path):
    m = DatasetManifest(
        photos=two_photo_manifest().photos,
        pairs=(PairExample("p000000_f0", "p000000_f1", "positive",
                           relation="FD", fold=3),),
        triplets=(TripletExample("p000001_f0", "p000001_f1", "p000001_f2",
                                 "positive", "daughter"),),
        metadata={"source": "unit-test"})
    path = tmp_path / "m.json"
    save_manifest(m, path)
    again = load_manifest(path)
    assert again == m


def test_manifest_json_is_deterministic(tmp_path):
    m = two_photo_manifest()
    save_manifest(m, tmp_path / "a.json")
    save_manifest(m, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_load_manifest_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ValidationError, match="invalid JSON"):
        load_manifest(path)


def test_load_manifest_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_manifest(tmp_path / "absent.json")


def test_missing_key_named():
    doc = {"photos": [{"photo_id": "p", "width": 10, "height": 10}]}
    with pytest.raises(ValidationError, match="image_path"):
        manifest_from_dict(doc)


def test_bbox_must_be_integers():
    doc = manifest_to_dict(two_photo_manifest())
    doc["photos"][0]["faces"][0]["bbox"] = [0, 0, 59.5, 60]
    with pytest.raises(ValidationError, match="four integers"):
        manifest_from_dict(doc)


# ---------------------------------------------------------------------------
# filtering

def test_filter_drops_small_faces_then_small_photos():
    photos = (
        PhotoRecord("a", "a.png", 500, 500, (
            FaceRecord("a0", (0, 0, 50, 50)),
            FaceRecord("a1", (100, 0, 49, 50)),   # too narrow
            FaceRecord("a2", (200, 0, 80, 80)),
        )),
        PhotoRecord("b", "b.png", 500, 500, (
            FaceRecord("b0", (0, 0, 200, 200)),
            FaceRecord("b1", (300, 0, 30, 30)),   # too small -> photo dies
        )),
    )
    m = DatasetManifest(photos=photos)
    out = filter_usable_photos(m)
    assert [p.photo_id for p in out.photos] == ["a"]
    assert [f.face_id for f in out.photos[0].faces] == ["a0", "a2"]


def test_filter_drops_dangling_pairs_and_triplets():
    photos = (
        PhotoRecord("a", "a.png", 500, 500, (
            FaceRecord("a0", (0, 0, 60, 60)),
            FaceRecord("a1", (100, 0, 60, 60)),
            FaceRecord("a2", (200, 0, 30, 30)),
        )),
        PhotoRecord("b", "b.png", 500, 500, (
            FaceRecord("b0", (0, 0, 60, 60)),
            FaceRecord("b1", (100, 0, 60, 60)),
            FaceRecord("b2", (200, 0, 60, 60)),
        )),
    )
    m = DatasetManifest(
        photos=photos,
        pairs=(PairExample("a0", "a1", "positive"),
               PairExample("a0", "a2", "positive")),
        triplets=(TripletExample("b0", "b1", "b2", "positive", "son"),
                  TripletExample("a0", "a1", "a2", "positive", "son")))
    out = filter_usable_photos(m)
    assert len(out.pairs) == 1 and out.pairs[0].face_b == "a1"
    assert len(out.triplets) == 1 and out.triplets[0].father == "b0"
    validate_manifest(out)


def test_filter_threshold_is_inclusive():
    m = make_manifest([2], face_px=50)
    assert len(filter_usable_photos(m, min_face_px=50).photos) == 1
    assert len(filter_usable_photos(m, min_face_px=51).photos) == 0


# ---------------------------------------------------------------------------
# splitting

def test_split_empty_manifest_rejected():
    with pytest.raises(ValidationError, match="empty"):
        split_photos(DatasetManifest(photos=()))


def test_split_ratio_validation():
    m = two_photo_manifest()
    with pytest.raises(ValidationError, match="sum to 1"):
        split_photos(m, ratios=(0.7, 0.2, 0.2))
    with pytest.raises(ValidationError, match="positive"):
        split_photos(m, ratios=(1.0, 0.0, 0.0))


def test_split_single_photo_goes_to_train():
    m = make_manifest([2])
    split = split_photos(m, seed=5)
    assert split.counts() == {"train": 1, "validation": 0, "test": 0}


def test_split_counts_largest_remainder():
    m = make_manifest([2] * 100)
    assert split_photos(m).counts() == {"train": 70, "validation": 10, "test": 20}


def test_split_counts_published_photo_total():
    # 24,827 photos at 0.7/0.1/0.2 -> the published 17,379/2,483/4,965.
    from fspaudit.dataset_model import _largest_remainder_counts
    assert _largest_remainder_counts(24827, (0.7, 0.1, 0.2)) == [17379, 2483, 4965]


def test_split_depends_only_on_photo_id_set():
    sizes = [2, 3, 4, 2, 5, 2, 3, 2, 2, 4]
    m1 = make_manifest(sizes)
    m2 = DatasetManifest(photos=tuple(reversed(m1.photos)))
    s1 = split_photos(m1, seed=9)
    s2 = split_photos(m2, seed=9)
    assert dict(s1.assignment) == dict(s2.assignment)


def test_split_deterministic_and_seed_sensitive():
    m = make_manifest([2] * 40)
    a = split_photos(m, seed=1)
    b = split_photos(m, seed=1)
    c = split_photos(m, seed=2)
    assert dict(a.assignment) == dict(b.assignment)
    assert dict(a.assignment) != dict(c.assignment)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 200), seed=st.integers(0, 2**32 - 1))
def test_split_partition_property(n, seed):
    m = make_manifest([2] * n)
    split = split_photos(m, seed=seed)
    assert set(split.assignment) == {p.photo_id for p in m.photos}
    counts = split.counts()
    assert sum(counts.values()) == n
    # largest-remainder rounding only ever shifts a subset by < 1 photo
    for name, ratio in zip(("train", "validation", "test"), (0.7, 0.1, 0.2)):
        assert abs(counts[name] - n * ratio) < 1.0


def test_split_round_trip(tmp_path):
    m = make_manifest([2] * 10)
    split = split_photos(m, seed=3)
    save_split(split, tmp_path / "split.json")
    again = load_split(tmp_path / "split.json")
    assert dict(again.assignment) == dict(split.assignment)


def test_load_split_rejects_unknown_subset(tmp_path):
    path = tmp_path / "split.json"
    path.write_text(json.dumps({"assignment": {"p": "holdout"}}), encoding="utf-8")
    with pytest.raises(ValidationError, match="unknown subset"):
        load_split(path)


def test_subset_faces():
    m = make_manifest([2, 3])
    split = SplitAssignment({"p000000": "train", "p000001": "test"})
    assert subset_faces(m, split, "test") == [
        "p000001_f0", "p000001_f1", "p000001_f2"]
    with pytest.raises(ValidationError, match="no split assignment"):
        split.of("ghost")
