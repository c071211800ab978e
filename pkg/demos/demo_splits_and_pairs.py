"""
Photo-level splits and balanced pair sets
=========================================

Face-pair benchmarks leak when one photograph contributes faces to both
the train and the test side.  The split here assigns whole photos to
subsets, and the pair builders only ever combine faces within a subset.
"""

import tempfile
from collections import Counter
from pathlib import Path

from fspaudit.synth_oracle import SynthConfig, generate
from fspaudit.dataset_model import filter_usable_photos, split_photos
from fspaudit.pair_factory import (enumerate_positive_pairs,
                                   generate_negative_pairs)

root = Path(tempfile.mkdtemp(prefix="fspaudit_demo_"))
manifest = generate(SynthConfig(n_photos=40, faces_per_photo=(2, 4),
                                image_px=256, seed=11, face_px=(56, 72),
                                image_format="ppm"), root)

### 1. drop photos that cannot form a pair ###
manifest = filter_usable_photos(manifest, min_face_px=50)
print(f"usable photos: {len(manifest.photos)}")

### 2. split photos (not faces!) 70/10/20 ###
split = split_photos(manifest, seed=0)
print(f"split counts:  {split.counts()}")

### 3. positives = every within-photo face pair ###
positives = []
for subset in ("train", "validation", "test"):
    subset_pos = enumerate_positive_pairs(manifest, split, subset)
    positives.extend(subset_pos)
    print(f"  {subset:<11} {len(subset_pos):3d} positive pairs")

# sanity: the count is forced by the face counts alone
expected = sum(len(p.faces) * (len(p.faces) - 1) // 2 for p in manifest.photos)
print(f"sum n(n-1)/2 over photos = {expected} "
      f"({'matches' if expected == len(positives) else 'MISMATCH'})")

### 4. one negative per positive, built by swapping one slot ###
negatives = generate_negative_pairs(positives, manifest, split, seed=0)
print(f"\nnegatives: {len(negatives)} (balanced against "
      f"{len(positives)} positives)")

# every negative crosses photos but stays inside one subset
cross_photo = same_subset = 0
for neg in negatives:
    pa = manifest.photo_of(neg.face_a).photo_id
    pb = manifest.photo_of(neg.face_b).photo_id
    cross_photo += pa != pb
    same_subset += split.of(pa) == split.of(pb)
print(f"cross-photo negatives:  {cross_photo}/{len(negatives)}")
print(f"subset-pure negatives:  {same_subset}/{len(negatives)}")

# which subset do the negatives live in?
by_subset = Counter(split.of(manifest.photo_of(n.face_a).photo_id)
                    for n in negatives)
print(f"negatives per subset:   {dict(by_subset)}")
print("\nno face pair ever crosses a subset boundary, so a scorer can "
      "never train on a test photograph")
