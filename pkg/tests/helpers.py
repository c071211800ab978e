"""Shared builders for test manifests, plus a finite-difference gradient
checker for the pair scorer."""

from __future__ import annotations

import math

import numpy as np

from fspaudit.dataset_model import (
    DatasetManifest,
    FaceRecord,
    PhotoRecord,
    SplitAssignment,
)
from fspaudit.scorer import ScorerParams, backward, forward

FACE_PX = 60
_GRID_COLS = 10
_STEP = 80


def make_photo(photo_id: str, n_faces: int, face_px: int = FACE_PX,
               prefix: str | None = None) -> PhotoRecord:
    """A photo with ``n_faces`` valid non-overlapping face boxes."""
    prefix = photo_id if prefix is None else prefix
    rows = (n_faces + _GRID_COLS - 1) // _GRID_COLS
    width = _GRID_COLS * _STEP
    height = max(rows * _STEP, _STEP)
    faces = tuple(
        FaceRecord(
            face_id=f"{prefix}_f{i}",
            bbox=((i % _GRID_COLS) * _STEP, (i // _GRID_COLS) * _STEP,
                  face_px, face_px))
        for i in range(n_faces))
    return PhotoRecord(photo_id=photo_id, image_path=f"{photo_id}.png",
                       width=width, height=height, faces=faces)


def make_manifest(sizes: list[int], face_px: int = FACE_PX,
                  id_prefix: str = "p") -> DatasetManifest:
    """A manifest of len(sizes) photos whose i-th photo has sizes[i] faces."""
    photos = tuple(make_photo(f"{id_prefix}{k:06d}", n, face_px)
                   for k, n in enumerate(sizes))
    return DatasetManifest(photos=photos)


def all_in(manifest: DatasetManifest, subset: str = "train") -> SplitAssignment:
    return SplitAssignment({p.photo_id: subset for p in manifest.photos})


def sizes_from_multiset(multiset: dict[int, int]) -> list[int]:
    """Expand {photo_size: count} into an explicit size list."""
    sizes: list[int] = []
    for size, count in sorted(multiset.items()):
        sizes.extend([size] * count)
    return sizes


# ---------------------------------------------------------------------------
# gradient checking

def pair_loss(params: ScorerParams, va, vb, label: str,
              mask=None, dropout_p: float = 0.0) -> float:
    """-ln p(label) for one pair, recomputed from scratch (used as the
    scalar function whose finite differences we compare gradients to)."""
    p_same, p_diff = forward(params, va, vb, mask, dropout_p)
    return -math.log(p_same if label == "positive" else p_diff)


def max_fd_rel_err(params: ScorerParams, va, vb, label: str,
                   mask=None, dropout_p: float = 0.0,
                   h: float = 1e-6) -> float:
    """Worst relative disagreement between the analytic gradient and a
    central finite difference, over every coordinate of every array."""
    grads = backward(params, va, vb, label, mask, dropout_p)
    worst = 0.0
    for name, arr in params.arrays().items():
        g = getattr(grads, name)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + h
            up = pair_loss(params, va, vb, label, mask, dropout_p)
            arr[idx] = orig - h
            down = pair_loss(params, va, vb, label, mask, dropout_p)
            arr[idx] = orig
            fd = (up - down) / (2.0 * h)
            denom = max(1e-8, abs(fd) + abs(g[idx]))
            worst = max(worst, abs(fd - g[idx]) / denom)
    return worst
