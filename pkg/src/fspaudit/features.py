"""Per-face feature extraction and the image plumbing it needs.

Images are 8-bit RGB, decoded from PNG (via Pillow) or binary PPM (P6,
parsed here so truncation errors are explicit).  Colour statistics are
computed in CIELAB under D65: the white point is taken as the row sums of
the sRGB->XYZ matrix, which makes every grey pixel map to a* = b* = 0 and
(255,255,255) map to exactly L* = 100.

The cue feature vector deliberately contains no identity information --
only photo-level printing/scanning correlates: Lab channel moments, Lab
histograms, a sharpness proxy and the log2 crop area.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from PIL import Image

from .errors import FormatError, ValidationError

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"

# sRGB -> XYZ (D65), IEC 61966-2-1 primaries at double precision.
_SRGB_TO_XYZ = np.array([
    [0.41239079926595934, 0.35758433938387796, 0.18048078840183429],
    [0.21263900587151027, 0.71516867876775593, 0.07219231536073371],
    [0.01933081871559182, 0.11919477979462598, 0.95053215224966058],
])
# White point = matrix row sums (see module docstring).
_WHITE = (
    _SRGB_TO_XYZ[0, 0] + _SRGB_TO_XYZ[0, 1] + _SRGB_TO_XYZ[0, 2],
    _SRGB_TO_XYZ[1, 0] + _SRGB_TO_XYZ[1, 1] + _SRGB_TO_XYZ[1, 2],
    _SRGB_TO_XYZ[2, 0] + _SRGB_TO_XYZ[2, 1] + _SRGB_TO_XYZ[2, 2],
)
_XYZ_TO_SRGB = np.linalg.inv(_SRGB_TO_XYZ)
_DELTA = 6.0 / 29.0


# ---------------------------------------------------------------------------
# image IO

def _decode_ppm(data: bytes) -> np.ndarray:
    pos = 0

    def next_token() -> bytes:
        nonlocal pos
        while pos < len(data):
            c = data[pos:pos + 1]
            if c == b"#":
                while pos < len(data) and data[pos:pos + 1] not in (b"\r", b"\n"):
                    pos += 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("ppm: truncated header")
        return data[start:pos]

    if next_token() != b"P6":
        raise FormatError("ppm: not a P6 file")
    try:
        width = int(next_token())
        height = int(next_token())
        maxval = int(next_token())
    except ValueError as exc:
        raise FormatError(f"ppm: bad header field ({exc})") from None
    if width <= 0 or height <= 0:
        raise FormatError(f"ppm: bad dimensions {width}x{height}")
    if maxval != 255:
        raise FormatError(f"ppm: only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    need = width * height * 3
    raw = data[pos:pos + need]
    if len(raw) < need:
        raise FormatError(
            f"ppm: truncated pixel data, expected {need} bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3).copy()


def decode_image(path: str | Path) -> np.ndarray:
    """Decode a PNG or binary-PPM file to an HxWx3 uint8 array.

    Malformed content raises FormatError; a missing/unreadable file raises
    the underlying OSError.
    """
    data = Path(path).read_bytes()
    if data[:2] == b"P6":
        return _decode_ppm(data)
    if data[:8] == _PNG_MAGIC:
        try:
            with Image.open(io.BytesIO(data)) as img:
                img.load()
                rgb = img.convert("RGB")
                return np.asarray(rgb, dtype=np.uint8)
        except (OSError, SyntaxError, ValueError) as exc:
            raise FormatError(f"png: cannot decode {path} ({exc})") from exc
    raise FormatError(f"{path}: unrecognized image format (need PNG or P6 PPM)")


def write_image(path: str | Path, image: np.ndarray) -> None:
    """Write an HxWx3 uint8 array as PNG or binary PPM, chosen by suffix."""
    image = np.asarray(image)
    if image.dtype != np.uint8 or image.ndim != 3 or image.shape[2] != 3:
        raise ValidationError(f"expected HxWx3 uint8 image, got "
                              f"{image.dtype} {image.shape}")
    path = Path(path)
    if path.suffix.lower() == ".png":
        Image.fromarray(image).save(path, format="PNG")
    elif path.suffix.lower() == ".ppm":
        h, w = image.shape[:2]
        header = f"P6\n{w} {h}\n255\n".encode("ascii")
        path.write_bytes(header + np.ascontiguousarray(image).tobytes())
    else:
        raise ValidationError(f"unsupported image suffix {path.suffix!r}")


# ---------------------------------------------------------------------------
# cropping

def crop_face(image: np.ndarray, bbox: Sequence[int],
              expansion: float = 0.0) -> np.ndarray:
    """Cut out a face box, optionally grown by ``expansion`` about its centre.

    The grown box has size round(w*(1+expansion)) x round(h*(1+expansion))
    and origin floor(x - expansion*w/2), floor(y - expansion*h/2), then is
    clipped to the image, so faces near a border lose the part that falls
    outside.  ``expansion=0`` returns exactly the bbox pixels.
    """
    if expansion < 0:
        raise ValidationError(f"expansion must be >= 0, got {expansion}")
    x, y, w, h = (int(v) for v in bbox)
    if w <= 0 or h <= 0:
        raise ValidationError(f"bad bbox size {w}x{h}")
    img_h, img_w = image.shape[:2]
    if x < 0 or y < 0 or x + w > img_w or y + h > img_h:
        raise ValidationError(f"bbox {(x, y, w, h)} outside image {img_w}x{img_h}")
    new_w = int(round(w * (1.0 + expansion)))
    new_h = int(round(h * (1.0 + expansion)))
    x0 = math.floor(x - expansion * w / 2.0)
    y0 = math.floor(y - expansion * h / 2.0)
    xa, ya = max(0, x0), max(0, y0)
    xb, yb = min(img_w, x0 + new_w), min(img_h, y0 + new_h)
    return image[ya:yb, xa:xb]


@dataclass(frozen=True)
class CropExpansion:
    """The set of crop growth factors an audit sweeps over (0 = tight box)."""

    scale_set: tuple[float, ...] = (0.0, 0.15)

    def __post_init__(self):
        if not self.scale_set:
            raise ValidationError("scale_set must not be empty")
        for s in self.scale_set:
            if s < 0:
                raise ValidationError(f"crop scale must be >= 0, got {s}")


# ---------------------------------------------------------------------------
# colour conversion

def rgb_to_lab(rgb) -> np.ndarray:
    """sRGB (0..255) to CIELAB, vectorized over any (..., 3) array."""
    arr = np.asarray(rgb, dtype=np.float64)
    if arr.shape[-1] != 3:
        raise ValidationError(f"expected trailing dimension 3, got {arr.shape}")
    c = arr / 255.0
    lin = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    r, g, b = lin[..., 0], lin[..., 1], lin[..., 2]
    # Explicit left-to-right sums so grey inputs hit the white point exactly.
    m = _SRGB_TO_XYZ
    tx = (m[0, 0] * r + m[0, 1] * g + m[0, 2] * b) / _WHITE[0]
    ty = (m[1, 0] * r + m[1, 1] * g + m[1, 2] * b) / _WHITE[1]
    tz = (m[2, 0] * r + m[2, 1] * g + m[2, 2] * b) / _WHITE[2]

    def f(t):
        return np.where(t > _DELTA ** 3, np.cbrt(t),
                        t / (3.0 * _DELTA ** 2) + 4.0 / 29.0)

    fx, fy, fz = f(tx), f(ty), f(tz)
    out = np.empty(arr.shape, dtype=np.float64)
    out[..., 0] = 116.0 * fy - 16.0
    out[..., 1] = 500.0 * (fx - fy)
    out[..., 2] = 200.0 * (fy - fz)
    return out


def lab_to_rgb(lab) -> np.ndarray:
    """CIELAB back to sRGB in 0..255 (float64, clipped but not rounded)."""
    arr = np.asarray(lab, dtype=np.float64)
    if arr.shape[-1] != 3:
        raise ValidationError(f"expected trailing dimension 3, got {arr.shape}")
    L, a, b = arr[..., 0], arr[..., 1], arr[..., 2]
    fy = (L + 16.0) / 116.0
    fx = fy + a / 500.0
    fz = fy - b / 200.0

    def finv(f):
        return np.where(f > _DELTA, f ** 3, 3.0 * _DELTA ** 2 * (f - 4.0 / 29.0))

    x = finv(fx) * _WHITE[0]
    y = finv(fy) * _WHITE[1]
    z = finv(fz) * _WHITE[2]
    m = _XYZ_TO_SRGB
    lin = np.stack([
        m[0, 0] * x + m[0, 1] * y + m[0, 2] * z,
        m[1, 0] * x + m[1, 1] * y + m[1, 2] * z,
        m[2, 0] * x + m[2, 1] * y + m[2, 2] * z,
    ], axis=-1)
    lin = np.clip(lin, 0.0, None)
    c = np.where(lin <= 0.0031308, 12.92 * lin,
                 1.055 * lin ** (1.0 / 2.4) - 0.055)
    return np.clip(c, 0.0, 1.0) * 255.0


# ---------------------------------------------------------------------------
# face vectors

@dataclass(frozen=True, eq=False)
class FaceVector:
    """A per-face feature vector plus where it came from."""

    face_id: str
    values: np.ndarray
    source: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size == 0:
            raise ValidationError(
                f"face {self.face_id!r}: values must be a non-empty 1-D vector")
        if not np.all(np.isfinite(values)):
            raise ValidationError(f"face {self.face_id!r}: non-finite values")

    @property
    def dim(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class FeatureConfig:
    """Shape of the cue feature vector (defaults give dim 32)."""

    hist_bins: int = 8
    ab_range: tuple[float, float] = (-60.0, 60.0)
    l_range: tuple[float, float] = (0.0, 100.0)

    def __post_init__(self):
        if self.hist_bins < 1:
            raise ValidationError(f"hist_bins must be >= 1, got {self.hist_bins}")
        for lo, hi in (self.ab_range, self.l_range):
            if not lo < hi:
                raise ValidationError(f"bad histogram range ({lo}, {hi})")

    @property
    def dim(self) -> int:
        return 6 + 3 * self.hist_bins + 2


def feature_names(config: FeatureConfig = FeatureConfig()) -> list[str]:
    names = ["l_mean", "a_mean", "b_mean", "l_std", "a_std", "b_std"]
    for channel in ("a", "b", "l"):
        names += [f"{channel}_hist_{i}" for i in range(config.hist_bins)]
    names += ["lap_abs_mean", "log2_area"]
    return names


def _hist(values: np.ndarray, bins: int, lo: float, hi: float) -> np.ndarray:
    counts, _ = np.histogram(np.clip(values, lo, hi), bins=bins, range=(lo, hi))
    return counts / values.size


def cue_features(crop: np.ndarray, config: FeatureConfig = FeatureConfig(),
                 face_id: str = "") -> FaceVector:
    """Photo-level colour/sharpness statistics of one face crop.

    Layout: Lab channel means (3), Lab channel population stds (3), a*
    histogram, b* histogram (both clipped to ``ab_range``), L* histogram
    over ``l_range`` (each normalized to sum 1), mean absolute interior
    Laplacian of L* (0 when the crop is thinner than 3 px), log2 pixel
    count.
    """
    crop = np.asarray(crop)
    if crop.ndim != 3 or crop.shape[2] != 3 or crop.shape[0] < 1 or crop.shape[1] < 1:
        raise ValidationError(f"expected non-empty HxWx3 crop, got {crop.shape}")
    lab = rgb_to_lab(crop)
    L, a, b = lab[..., 0], lab[..., 1], lab[..., 2]
    parts = [
        L.mean(), a.mean(), b.mean(),
        L.std(), a.std(), b.std(),
    ]
    lo, hi = config.ab_range
    parts.extend(_hist(a.ravel(), config.hist_bins, lo, hi))
    parts.extend(_hist(b.ravel(), config.hist_bins, lo, hi))
    parts.extend(_hist(L.ravel(), config.hist_bins, *config.l_range))
    if min(L.shape) >= 3:
        lap = (L[1:-1, 2:] + L[1:-1, :-2] + L[2:, 1:-1] + L[:-2, 1:-1]
               - 4.0 * L[1:-1, 1:-1])
        parts.append(np.abs(lap).mean())
    else:
        parts.append(0.0)
    parts.append(math.log2(L.size))
    return FaceVector(face_id=face_id, values=np.array(parts, dtype=np.float64),
                      source="cue_features")


def take_features(vectors: Mapping[str, FaceVector], wanted: Sequence[str],
                  config: FeatureConfig = FeatureConfig()) -> dict[str, FaceVector]:
    """Restrict every vector to the named cue features (e.g. chrominance-only
    ablations)."""
    names = feature_names(config)
    try:
        idx = [names.index(n) for n in wanted]
    except ValueError:
        missing = [n for n in wanted if n not in names]
        raise ValidationError(f"unknown feature names {missing}") from None
    return {fid: FaceVector(fid, v.values[idx], source=v.source)
            for fid, v in vectors.items()}


# ---------------------------------------------------------------------------
# embedding files
#
# Text format, one vector per line:
#     FSPE1 <dim>
#     <face_id> <v1> <v2> ... <vdim>
# Floats are written with repr(), i.e. shortest round-trip form, so
# save -> load is bit-exact.

def load_embeddings(path: str | Path) -> dict[str, FaceVector]:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if not lines or not lines[0].strip():
        raise FormatError(f"{path}: empty embeddings file")
    header = lines[0].split()
    if len(header) != 2 or header[0] != "FSPE1":
        raise FormatError(f"{path}: bad header {lines[0]!r} (expected 'FSPE1 <dim>')")
    try:
        dim = int(header[1])
    except ValueError:
        raise FormatError(f"{path}: bad dimension {header[1]!r}") from None
    if dim < 1:
        raise FormatError(f"{path}: dimension must be >= 1, got {dim}")
    out: dict[str, FaceVector] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        face_id = parts[0]
        if len(parts) - 1 != dim:
            raise FormatError(
                f"{path}:{lineno}: face {face_id!r} has {len(parts) - 1} "
                f"values, header says {dim}")
        if face_id in out:
            raise FormatError(f"{path}:{lineno}: duplicate face_id {face_id!r}")
        try:
            values = np.array([float(p) for p in parts[1:]], dtype=np.float64)
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: bad float ({exc})") from None
        if not np.all(np.isfinite(values)):
            raise FormatError(f"{path}:{lineno}: non-finite value for {face_id!r}")
        out[face_id] = FaceVector(face_id=face_id, values=values,
                                  source="embeddings")
    return out


def save_embeddings(vectors: Mapping[str, FaceVector] | Iterable[FaceVector],
                    path: str | Path) -> None:
    if isinstance(vectors, Mapping):
        items = list(vectors.values())
    else:
        items = list(vectors)
    if not items:
        raise ValidationError("no vectors to save")
    dim = items[0].dim
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"FSPE1 {dim}\n")
        for vec in items:
            if vec.dim != dim:
                raise ValidationError(
                    f"face {vec.face_id!r}: dim {vec.dim} != {dim}")
            if not vec.face_id or any(c.isspace() for c in vec.face_id):
                raise ValidationError(f"unusable face_id {vec.face_id!r}")
            fh.write(vec.face_id + " "
                     + " ".join(repr(float(v)) for v in vec.values) + "\n")


# ---------------------------------------------------------------------------
# augmentation

@dataclass(frozen=True)
class AugmentConfig:
    """Resize-then-crop recipe.

    Faces are first resized (bilinear) to ``resize_px`` square, then cropped
    to ``crop_px``.  ``tta_views`` must be even: the deterministic view list
    is centre, top-left, top-right, bottom-left, bottom-right crops, each
    with and without horizontal flip, truncated to ``tta_views`` entries.
    """

    resize_px: int = 256
    crop_px: int = 224
    tta_views: int = 10

    def __post_init__(self):
        if not 0 < self.crop_px <= self.resize_px:
            raise ValidationError(
                f"need 0 < crop_px <= resize_px, got {self.crop_px}/{self.resize_px}")
        if self.tta_views % 2 != 0 or not 2 <= self.tta_views <= 10:
            raise ValidationError(
                f"tta_views must be even and in 2..10, got {self.tta_views}")


def _resize(image: np.ndarray, px: int) -> np.ndarray:
    img = Image.fromarray(np.ascontiguousarray(image))
    return np.asarray(img.resize((px, px), Image.BILINEAR))


def augment_views(crop: np.ndarray, config: AugmentConfig = AugmentConfig(),
                  mode: str = "tta", seed=0) -> list[np.ndarray]:
    """Produce model-input views of one face crop.

    ``mode="tta"`` returns the deterministic evaluation views (see
    AugmentConfig).  ``mode="train"`` returns a single random crop with a
    random flip, driven by ``default_rng(seed)`` (x offset, then y offset,
    then flip coin).
    """
    crop = np.asarray(crop)
    if crop.ndim != 3 or crop.shape[2] != 3 or min(crop.shape[:2]) < 1:
        raise ValidationError(f"expected non-empty HxWx3 crop, got {crop.shape}")
    resized = _resize(crop, config.resize_px)
    c = config.crop_px
    m = config.resize_px - c
    if mode == "tta":
        offsets = [(m // 2, m // 2), (0, 0), (m, 0), (0, m), (m, m)]
        views: list[np.ndarray] = []
        for ox, oy in offsets[:config.tta_views // 2]:
            v = resized[oy:oy + c, ox:ox + c]
            views.append(v)
            views.append(v[:, ::-1])
        return views
    if mode == "train":
        rng = np.random.default_rng(seed)
        ox = int(rng.integers(0, m + 1))
        oy = int(rng.integers(0, m + 1))
        v = resized[oy:oy + c, ox:ox + c]
        if rng.integers(0, 2):
            v = v[:, ::-1]
        return [v]
    raise ValidationError(f"unknown augmentation mode {mode!r}")
