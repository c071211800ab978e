"""Builders for labelled face-pair and triplet example sets.

Positives for the same-photo task are all unordered face pairs within a
photo; negatives are made by swapping one member for a face from a
different photo of the same subset, keeping the class sizes equal.  The
``build_*`` helpers mirror how the common kinship benchmarks package
their evaluation sets (provided folds, substitution negatives from other
positive pairs, same-gender child swaps for triplets).
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .dataset_model import (
    CHILD_ROLES,
    PARENT_ROLES,
    SUBSETS,
    DatasetManifest,
    PairExample,
    SplitAssignment,
    TripletExample,
)
from .errors import ValidationError

_MAX_DRAWS = 1000


def enumerate_positive_pairs(manifest: DatasetManifest,
                             split: SplitAssignment | None = None,
                             subset: str | None = None) -> list[PairExample]:
    """All within-photo face pairs, labelled positive.

    Order is deterministic: photos by ``photo_id`` (lexicographic), faces
    within a photo by ``face_id``, pairs in upper-triangle order.  A photo
    with n faces contributes n*(n-1)/2 pairs.  When ``split``/``subset``
    are given only photos of that subset are enumerated.
    """
    if (split is None) != (subset is None):
        raise ValidationError("split and subset must be given together")
    wanted = split.subset(subset) if split is not None else None
    pairs: list[PairExample] = []
    for photo in sorted(manifest.photos, key=lambda p: p.photo_id):
        if wanted is not None and photo.photo_id not in wanted:
            continue
        ids = sorted(f.face_id for f in photo.faces)
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                pairs.append(PairExample(ids[i], ids[j], "positive"))
    return pairs


def generate_negative_pairs(positives: Sequence[PairExample],
                            manifest: DatasetManifest,
                            split: SplitAssignment,
                            seed: int = 0) -> list[PairExample]:
    """One negative per positive: a random member (fair coin) is replaced by
    a face drawn uniformly from the other photos of the same subset.

    Draws are vectorized per subset with rejection of same-photo candidates;
    the output keeps the order of ``positives``.  Raises ValidationError if
    a subset holding positives has faces from fewer than two photos.
    """
    pools: dict[str, tuple[list[str], np.ndarray]] = {}
    for name in SUBSETS:
        ids = []
        photo_idx = []
        for photo in manifest.photos:
            if split.assignment.get(photo.photo_id) != name:
                continue
            for face in photo.faces:
                ids.append(face.face_id)
                photo_idx.append(photo.photo_id)
        pools[name] = (ids, np.array(photo_idx, dtype=object))

    by_subset: dict[str, list[int]] = {name: [] for name in SUBSETS}
    for k, pair in enumerate(positives):
        by_subset[split.of(manifest.photo_of(pair.face_a).photo_id)].append(k)

    rng = np.random.default_rng(seed)
    out: list[PairExample | None] = [None] * len(positives)
    for name in SUBSETS:
        index = by_subset[name]
        if not index:
            continue
        pool_ids, pool_photos = pools[name]
        if len(set(pool_photos)) < 2:
            raise ValidationError(
                f"subset {name!r} has faces from fewer than two photos; "
                "cannot build cross-photo negatives")
        n = len(index)
        pair_photos = np.array(
            [manifest.photo_of(positives[k].face_a).photo_id for k in index],
            dtype=object)
        sides = rng.integers(0, 2, size=n)
        draws = rng.integers(0, len(pool_ids), size=n)
        bad = pool_photos[draws] == pair_photos
        while bad.any():
            draws[bad] = rng.integers(0, len(pool_ids), size=int(bad.sum()))
            bad = pool_photos[draws] == pair_photos
        for pos, k in enumerate(index):
            pair = positives[k]
            repl = pool_ids[draws[pos]]
            if sides[pos] == 0:
                out[k] = PairExample(repl, pair.face_b, "negative")
            else:
                out[k] = PairExample(pair.face_a, repl, "negative")
    return [p for p in out if p is not None]


def build_kinfacew_testset(manifest: DatasetManifest) -> list[PairExample]:
    """Validate and return a benchmark pair list that ships its own negatives
    and five published cross-validation folds.

    Every pair must carry a parent-child relation tag and a fold in 1..5,
    and both labels must be present.
    """
    if not manifest.pairs:
        raise ValidationError("manifest has no pairs")
    for pair in manifest.pairs:
        where = f"pair ({pair.face_a!r}, {pair.face_b!r})"
        if pair.relation not in ("MD", "MS", "FD", "FS"):
            raise ValidationError(f"{where}: missing or unexpected relation "
                                  f"{pair.relation!r}")
        if pair.fold is None or not 1 <= pair.fold <= 5:
            raise ValidationError(f"{where}: fold must be in 1..5, got {pair.fold!r}")
    labels = {p.label for p in manifest.pairs}
    if labels != {"positive", "negative"}:
        raise ValidationError(f"expected both labels, found {sorted(labels)}")
    return list(manifest.pairs)


def _pair_roles(pair: PairExample, manifest: DatasetManifest) -> tuple[str, str]:
    """Return (parent_id, child_id) for a parent-child positive pair."""
    roles = []
    for fid in (pair.face_a, pair.face_b):
        role = manifest.face(fid).role
        if role in PARENT_ROLES:
            roles.append("parent")
        elif role in CHILD_ROLES:
            roles.append("child")
        else:
            raise ValidationError(
                f"pair ({pair.face_a!r}, {pair.face_b!r}): face {fid!r} has "
                f"role {role!r}, need a parent or child role")
    if sorted(roles) != ["child", "parent"]:
        raise ValidationError(
            f"pair ({pair.face_a!r}, {pair.face_b!r}): need exactly one parent "
            f"and one child, got {roles}")
    if roles[0] == "parent":
        return pair.face_a, pair.face_b
    return pair.face_b, pair.face_a


def build_substitution_negatives(positives: Sequence[PairExample],
                                 manifest: DatasetManifest,
                                 versions: int = 5,
                                 seed: int = 0) -> list[list[PairExample]]:
    """Negative sets built by swapping one member of each positive for the
    same-role face of a *different* positive pair.

    For every version v a fresh stream ``default_rng([seed, v])`` decides,
    per positive, whether the parent or the child is replaced (fair coin)
    and which other pair donates the replacement.  Draws that reproduce an
    existing positive are rejected and retried.  Returns ``versions`` lists,
    each the same length as ``positives``; a negative inherits the relation
    tag of the positive it was derived from.
    """
    if versions < 1:
        raise ValidationError(f"versions must be >= 1, got {versions}")
    n = len(positives)
    if n < 2:
        raise ValidationError("need at least two positives to substitute across pairs")
    parent_child = [_pair_roles(p, manifest) for p in positives]
    positive_keys = {frozenset((p.face_a, p.face_b)) for p in positives}

    out: list[list[PairExample]] = []
    for version in range(versions):
        rng = np.random.default_rng([seed, version])
        negatives: list[PairExample] = []
        for i, pair in enumerate(positives):
            parent_i, child_i = parent_child[i]
            for attempt in range(_MAX_DRAWS):
                swap_parent = bool(rng.integers(0, 2))
                j = int(rng.integers(0, n - 1))
                if j >= i:
                    j += 1
                if swap_parent:
                    a, b = parent_child[j][0], child_i
                else:
                    a, b = parent_i, parent_child[j][1]
                if a != b and frozenset((a, b)) not in positive_keys:
                    break
            else:
                raise ValidationError(
                    f"could not build a substitution negative for pair "
                    f"({pair.face_a!r}, {pair.face_b!r})")
            # keep the parent in whichever slot it occupied in the positive
            if manifest.face(pair.face_a).role in PARENT_ROLES:
                face_a, face_b = a, b
            else:
                face_a, face_b = b, a
            negatives.append(PairExample(face_a, face_b, "negative",
                                         relation=pair.relation))
        out.append(negatives)
    return out


def build_tskin_negatives(triplets: Sequence[TripletExample],
                          seed: int = 0, version: int = 0) -> list[TripletExample]:
    """One negative triplet per positive: same parents, child replaced by the
    child of another triplet with the same gender.

    Strata (one per child gender, processed in sorted gender order with the
    stream ``default_rng([seed, version, stratum_index])``) need at least
    two members.  ``version`` selects independent negative-set draws.
    Output keeps the order of the positive triplets.
    """
    positives = [(k, t) for k, t in enumerate(triplets) if t.label == "positive"]
    if not positives:
        raise ValidationError("no positive triplets")
    genders = sorted({t.child_gender for _, t in positives})
    out: dict[int, TripletExample] = {}
    for gi, gender in enumerate(genders):
        stratum = [(k, t) for k, t in positives if t.child_gender == gender]
        if len(stratum) < 2:
            raise ValidationError(
                f"child-gender stratum {gender!r} has {len(stratum)} triplet(s); "
                "need at least two to swap children")
        rng = np.random.default_rng([seed, version, gi])
        for i, (k, trip) in enumerate(stratum):
            for attempt in range(_MAX_DRAWS):
                j = int(rng.integers(0, len(stratum) - 1))
                if j >= i:
                    j += 1
                child = stratum[j][1].child
                if child not in (trip.father, trip.mother, trip.child):
                    break
            else:
                raise ValidationError(
                    f"could not swap a child for triplet "
                    f"({trip.father!r}, {trip.mother!r}, {trip.child!r})")
            out[k] = TripletExample(trip.father, trip.mother, child,
                                    "negative", gender)
    return [out[k] for k, _ in positives]


def triplet_to_pairs(triplet: TripletExample) -> tuple[PairExample, PairExample]:
    """Split a triplet into its father-child and mother-child pairs.

    Relations follow the child's gender (son -> FS/MS, daughter -> FD/MD);
    both pairs inherit the triplet's label.
    """
    if triplet.child_gender == "son":
        rel_f, rel_m = "FS", "MS"
    elif triplet.child_gender == "daughter":
        rel_f, rel_m = "FD", "MD"
    else:
        raise ValidationError(f"bad child_gender {triplet.child_gender!r}")
    return (PairExample(triplet.father, triplet.child, triplet.label, relation=rel_f),
            PairExample(triplet.mother, triplet.child, triplet.label, relation=rel_m))
