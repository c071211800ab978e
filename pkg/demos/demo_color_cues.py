"""
What the cue features see
=========================

The built-in per-face descriptor is 32 hand-designed numbers: CIELAB
channel means and spreads, 8-bin histograms of a*, b* and L*, mean edge
energy, and the log crop area.  This script extracts them on two
datasets -- one with no shared-photo color cast, one with a strong cast
-- and shows where the same-photo signal shows up.
"""

import tempfile
from pathlib import Path

import numpy as np

from fspaudit.synth_oracle import SynthConfig, generate
from fspaudit.pipeline import extract_features
from fspaudit.features import FeatureConfig, feature_names, take_features


def within_vs_cross(manifest, vectors, names):
    """Mean feature-space distance for same-photo and cross-photo face
    pairs, restricted to the named features."""
    sub = take_features(vectors, names)
    within, cross = [], []
    photos = list(manifest.photos)
    for i, photo in enumerate(photos):
        ids = [f.face_id for f in photo.faces]
        for a in range(len(ids)):
            for b in range(a + 1, len(ids)):
                within.append(np.linalg.norm(sub[ids[a]].values
                                             - sub[ids[b]].values))
        other = photos[(i + 1) % len(photos)].faces[0].face_id
        cross.append(np.linalg.norm(sub[ids[0]].values - sub[other].values))
    return float(np.mean(within)), float(np.mean(cross))


print(f"feature layout ({FeatureConfig().dim} dims):")
print("  " + ", ".join(feature_names()[:8]) + ", ...")

groups = {
    "chrominance means (a*, b*)": ["a_mean", "b_mean"],
    "lightness stats": ["l_mean", "l_std"],
    "edge energy + area": ["lap_abs_mean", "log2_area"],
}

for cue in (0.0, 0.9):
    root = Path(tempfile.mkdtemp(prefix="fspaudit_demo_"))
    manifest = generate(SynthConfig(n_photos=30, faces_per_photo=(2, 3),
                                    image_px=256, cue_strength=cue, seed=5,
                                    face_px=(56, 72), image_format="ppm"),
                        root)
    vectors = extract_features(manifest, root)
    print(f"\ncue_strength = {cue}")
    for label, names in groups.items():
        w, c = within_vs_cross(manifest, vectors, names)
        ratio = c / w if w else float("inf")
        print(f"  {label:<28} within={w:7.3f}  cross={c:7.3f}  "
          f"cross/within={ratio:5.2f}")

print("\nwith the cue on, same-photo faces sit much closer in chrominance "
      "space than\ncross-photo faces -- that gap, not anything about the "
      "faces themselves, is\nwhat a pair scorer can exploit")
