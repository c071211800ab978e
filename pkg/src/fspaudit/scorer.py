"""A small fully connected pair classifier over per-face vectors.

Both faces go through a projection layer (shared by default), the ReLU
outputs are concatenated in (a, b) order and passed through two more
hidden ReLU layers to a 2-way softmax; class 1 is "same photo".  Dropout
sits between the two hidden layers.  Everything is float64 numpy with a
hand-written backward pass, trained by minibatch SGD with a stepped
learning-rate schedule and AUC-based early stopping.

Feature standardization (on by default) is an implementation detail of
``train``: the train-set mean/std affine map is folded back into the
projection weights of the returned params, which therefore always operate
on raw feature vectors.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, fields as dataclass_fields
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dataset_model import PairExample
from .errors import FormatError, ValidationError
from .evaluation import auc_scores
from .features import AugmentConfig, FaceVector, FeatureConfig, augment_views, cue_features

_IMPROVE_EPS = 1e-4


@dataclass(frozen=True)
class ScorerConfig:
    input_dim: int
    proj_dim: int = 512
    hidden_dims: tuple[int, int] = (1024, 256)
    dropout_p: float = 0.1
    lr0: float = 0.1
    lr_factor: float = 0.5
    lr_epoch_step: int = 5
    max_epochs: int = 30
    patience: int = 3
    seed: int = 0
    batch_size: int = 64
    shared_projection: bool = True
    standardize: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))
        if len(self.hidden_dims) != 2:
            raise ValidationError(f"hidden_dims must be (h1, h2), got {self.hidden_dims}")
        for name in ("input_dim", "proj_dim"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if any(h < 1 for h in self.hidden_dims):
            raise ValidationError(f"hidden dims must be >= 1, got {self.hidden_dims}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValidationError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.lr0 <= 0:
            raise ValidationError(f"lr0 must be > 0, got {self.lr0}")
        if not 0.0 < self.lr_factor <= 1.0:
            raise ValidationError(f"lr_factor must be in (0, 1], got {self.lr_factor}")
        for name in ("lr_epoch_step", "max_epochs", "patience", "batch_size"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")


@dataclass
class ScorerParams:
    """Weights; ``proj2_*`` are None when the projection is shared."""

    proj_w: np.ndarray
    proj_b: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    proj2_w: np.ndarray | None = None
    proj2_b: np.ndarray | None = None

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for f in dataclass_fields(self):
            v = getattr(self, f.name)
            if v is not None:
                out[f.name] = v
        return out

    def copy(self) -> "ScorerParams":
        kw = {name: arr.copy() for name, arr in self.arrays().items()}
        return ScorerParams(**kw)


def _expected_shapes(config: ScorerConfig) -> dict[str, tuple[int, ...]]:
    h1, h2 = config.hidden_dims
    shapes = {
        "proj_w": (config.proj_dim, config.input_dim),
        "proj_b": (config.proj_dim,),
        "w1": (h1, 2 * config.proj_dim),
        "b1": (h1,),
        "w2": (h2, h1),
        "b2": (h2,),
        "w3": (2, h2),
        "b3": (2,),
    }
    if not config.shared_projection:
        shapes["proj2_w"] = shapes["proj_w"]
        shapes["proj2_b"] = shapes["proj_b"]
    return shapes


def check_params(params: ScorerParams, config: ScorerConfig) -> None:
    shapes = _expected_shapes(config)
    arrays = params.arrays()
    if set(arrays) != set(shapes):
        raise ValidationError(
            f"params fields {sorted(arrays)} do not match config "
            f"(expected {sorted(shapes)})")
    for name, arr in arrays.items():
        if arr.shape != shapes[name]:
            raise ValidationError(
                f"param {name}: shape {arr.shape}, expected {shapes[name]}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"param {name}: non-finite entries")


def init_params(config: ScorerConfig) -> ScorerParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.

    Weight matrices are drawn in a fixed order (proj, proj2 if unshared,
    w1, w2, w3) from ``default_rng(config.seed)``.
    """
    rng = np.random.default_rng(config.seed)

    def draw(out_dim, in_dim):
        bound = 1.0 / math.sqrt(in_dim)
        return rng.uniform(-bound, bound, size=(out_dim, in_dim))

    h1, h2 = config.hidden_dims
    proj_w = draw(config.proj_dim, config.input_dim)
    proj2_w = proj2_b = None
    if not config.shared_projection:
        proj2_w = draw(config.proj_dim, config.input_dim)
        proj2_b = np.zeros(config.proj_dim)
    return ScorerParams(
        proj_w=proj_w,
        proj_b=np.zeros(config.proj_dim),
        w1=draw(h1, 2 * config.proj_dim),
        b1=np.zeros(h1),
        w2=draw(h2, h1),
        b2=np.zeros(h2),
        w3=draw(2, h2),
        b3=np.zeros(2),
        proj2_w=proj2_w,
        proj2_b=proj2_b,
    )


# ---------------------------------------------------------------------------
# forward / backward

def _as_matrix(v, input_dim: int) -> np.ndarray:
    arr = np.asarray(getattr(v, "values", v), dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != input_dim:
        raise ValidationError(
            f"vector dimension {arr.shape[-1]} does not match scorer input "
            f"dimension {input_dim}")
    return arr


def _forward_batch(params: ScorerParams, xa: np.ndarray, xb: np.ndarray,
                   mask: np.ndarray | None, dropout_p: float):
    wb = params.proj2_w if params.proj2_w is not None else params.proj_w
    bb = params.proj2_b if params.proj2_b is not None else params.proj_b
    pa_pre = xa @ params.proj_w.T + params.proj_b
    pb_pre = xb @ wb.T + bb
    pa = np.maximum(pa_pre, 0.0)
    pb = np.maximum(pb_pre, 0.0)
    z = np.concatenate([pa, pb], axis=1)
    h1_pre = z @ params.w1.T + params.b1
    h1 = np.maximum(h1_pre, 0.0)
    if mask is not None:
        h1d = h1 * mask / (1.0 - dropout_p)
    else:
        h1d = h1
    h2_pre = h1d @ params.w2.T + params.b2
    h2 = np.maximum(h2_pre, 0.0)
    logits = h2 @ params.w3.T + params.b3
    cache = (xa, xb, pa_pre, pb_pre, z, h1_pre, h1d, h2_pre, h2, mask, dropout_p)
    return logits, cache


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _label_index(label) -> int:
    if isinstance(label, str):
        if label == "positive":
            return 1
        if label == "negative":
            return 0
        raise ValidationError(f"bad label {label!r}")
    if label in (0, 1):
        return int(label)
    raise ValidationError(f"bad label {label!r}")


def forward(params: ScorerParams, va, vb, dropout_mask: np.ndarray | None = None,
            dropout_p: float = 0.0) -> tuple[float, float]:
    """Run one pair through the net; returns (p_same, p_diff).

    ``dropout_mask`` is a 0/1 vector over the first hidden layer; when
    given, kept activations are scaled by 1/(1-dropout_p) as at train time.
    """
    input_dim = params.proj_w.shape[1]
    xa = _as_matrix(va, input_dim)
    xb = _as_matrix(vb, input_dim)
    mask = None
    if dropout_mask is not None:
        mask = np.asarray(dropout_mask, dtype=np.float64).reshape(1, -1)
    logits, _ = _forward_batch(params, xa, xb, mask, dropout_p)
    probs = _softmax(logits)[0]
    return float(probs[1]), float(probs[0])


def loss(logits, label) -> float:
    """Cross entropy -ln(softmax(logits)[label]) via log-sum-exp.

    Takes the two pre-softmax logits, so extreme values stay finite.
    ``label`` is "positive"/"negative" (or the class index 0/1).
    """
    z = np.asarray(logits, dtype=np.float64).reshape(-1)
    if z.size != 2:
        raise ValidationError(f"expected two logits, got {z.size}")
    idx = _label_index(label)
    m = float(z.max())
    lse = m + math.log(float(np.exp(z - m).sum()))
    return lse - float(z[idx])


def _loss_batch(logits: np.ndarray, y: np.ndarray) -> np.ndarray:
    m = logits.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
    return lse - logits[np.arange(len(y)), y]


def _backward_batch(params: ScorerParams, logits: np.ndarray, cache,
                    y: np.ndarray) -> ScorerParams:
    """Gradient of the mean cross-entropy loss over the batch."""
    xa, xb, pa_pre, pb_pre, z, h1_pre, h1d, h2_pre, h2, mask, p = cache
    n = len(y)
    probs = _softmax(logits)
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    dw3 = dlogits.T @ h2
    db3 = dlogits.sum(axis=0)
    dh2 = dlogits @ params.w3
    dh2_pre = dh2 * (h2_pre > 0)
    dw2 = dh2_pre.T @ h1d
    db2 = dh2_pre.sum(axis=0)
    dh1d = dh2_pre @ params.w2
    if mask is not None:
        dh1 = dh1d * mask / (1.0 - p)
    else:
        dh1 = dh1d
    dh1_pre = dh1 * (h1_pre > 0)
    dw1 = dh1_pre.T @ z
    db1 = dh1_pre.sum(axis=0)
    dz = dh1_pre @ params.w1
    proj_dim = params.proj_w.shape[0]
    dpa_pre = dz[:, :proj_dim] * (pa_pre > 0)
    dpb_pre = dz[:, proj_dim:] * (pb_pre > 0)
    if params.proj2_w is None:
        dproj_w = dpa_pre.T @ xa + dpb_pre.T @ xb
        dproj_b = dpa_pre.sum(axis=0) + dpb_pre.sum(axis=0)
        dproj2_w = dproj2_b = None
    else:
        dproj_w = dpa_pre.T @ xa
        dproj_b = dpa_pre.sum(axis=0)
        dproj2_w = dpb_pre.T @ xb
        dproj2_b = dpb_pre.sum(axis=0)
    return ScorerParams(proj_w=dproj_w, proj_b=dproj_b, w1=dw1, b1=db1,
                        w2=dw2, b2=db2, w3=dw3, b3=db3,
                        proj2_w=dproj2_w, proj2_b=dproj2_b)


def backward(params: ScorerParams, va, vb, label,
             dropout_mask: np.ndarray | None = None,
             dropout_p: float = 0.0) -> ScorerParams:
    """Exact gradient of loss(forward(...)) for one pair, given a fixed
    dropout mask.  Returned object has the same field shapes as params."""
    input_dim = params.proj_w.shape[1]
    xa = _as_matrix(va, input_dim)
    xb = _as_matrix(vb, input_dim)
    mask = None
    if dropout_mask is not None:
        mask = np.asarray(dropout_mask, dtype=np.float64).reshape(1, -1)
    logits, cache = _forward_batch(params, xa, xb, mask, dropout_p)
    y = np.array([_label_index(label)])
    return _backward_batch(params, logits, cache, y)


def lr_at(epoch: int, config: ScorerConfig) -> float:
    """lr0 * lr_factor ** floor(epoch / lr_epoch_step)."""
    if epoch < 0:
        raise ValidationError(f"epoch must be >= 0, got {epoch}")
    return config.lr0 * config.lr_factor ** (epoch // config.lr_epoch_step)


# ---------------------------------------------------------------------------
# training

@dataclass(frozen=True)
class EpochStats:
    epoch: int
    lr: float
    train_loss: float
    val_auc: float


@dataclass
class TrainLog:
    epochs: list[EpochStats] = field(default_factory=list)
    stop_reason: str = ""
    best_epoch: int = -1
    best_val_auc: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "epochs": [
                {"epoch": e.epoch, "lr": e.lr, "train_loss": e.train_loss,
                 "val_auc": e.val_auc}
                for e in self.epochs],
            "stop_reason": self.stop_reason,
            "best_epoch": self.best_epoch,
            "best_val_auc": self.best_val_auc,
        }


def _assemble(pairs: Sequence[PairExample], vectors: Mapping[str, FaceVector],
              input_dim: int):
    xa = np.empty((len(pairs), input_dim))
    xb = np.empty((len(pairs), input_dim))
    y = np.empty(len(pairs), dtype=np.int64)
    for i, pair in enumerate(pairs):
        for j, fid in enumerate((pair.face_a, pair.face_b)):
            vec = vectors.get(fid)
            if vec is None:
                raise ValidationError(f"no feature vector for face {fid!r}")
            if vec.dim != input_dim:
                raise ValidationError(
                    f"face {fid!r}: vector dim {vec.dim} != input_dim {input_dim}")
            (xa if j == 0 else xb)[i] = vec.values
        y[i] = _label_index(pair.label)
    return xa, xb, y


def _step(params: ScorerParams, grads: ScorerParams, lr: float) -> ScorerParams:
    kw = {}
    for name, arr in params.arrays().items():
        kw[name] = arr - lr * getattr(grads, name)
    return ScorerParams(**kw)


def _score_batch(params: ScorerParams, xa: np.ndarray, xb: np.ndarray) -> np.ndarray:
    logits, _ = _forward_batch(params, xa, xb, None, 0.0)
    return _softmax(logits)[:, 1]


def _fold_standardization(params: ScorerParams, mu: np.ndarray,
                          sd: np.ndarray) -> ScorerParams:
    """Rewrite the projection so raw inputs behave like standardized ones:
    W' = W/sd, b' = b - W @ (mu/sd)."""
    out = params.copy()
    out.proj_b = params.proj_b - params.proj_w @ (mu / sd)
    out.proj_w = params.proj_w / sd
    if params.proj2_w is not None:
        out.proj2_b = params.proj2_b - params.proj2_w @ (mu / sd)
        out.proj2_w = params.proj2_w / sd
    return out


def train(config: ScorerConfig, train_pairs: Sequence[PairExample],
          val_pairs: Sequence[PairExample],
          vectors: Mapping[str, FaceVector]) -> tuple[ScorerParams, TrainLog]:
    """Minibatch SGD with per-epoch shuffling and dropout between the two
    hidden layers; stops on max_epochs or when validation AUC fails to
    improve by more than 1e-4 for ``patience`` consecutive epochs.

    Returns the parameters of the best validation epoch (earliest on ties)
    and the per-epoch log.  The shuffle/dropout stream is
    ``default_rng([config.seed, 1])``; initialization uses init_params.
    """
    if not train_pairs:
        raise ValidationError("empty train set")
    if not val_pairs:
        raise ValidationError("empty validation set")
    xa, xb, y = _assemble(train_pairs, vectors, config.input_dim)
    vxa, vxb, vy = _assemble(val_pairs, vectors, config.input_dim)
    n_pos = int(y.sum())
    if n_pos != len(y) - n_pos:
        warnings.warn(f"train set is unbalanced: {n_pos} positives vs "
                      f"{len(y) - n_pos} negatives", stacklevel=2)

    mu = sd = None
    if config.standardize:
        rows = np.vstack([xa, xb])
        mu = rows.mean(axis=0)
        sd = rows.std(axis=0)
        sd = np.where(sd < 1e-8, 1.0, sd)
        xa = (xa - mu) / sd
        xb = (xb - mu) / sd
        vxa = (vxa - mu) / sd
        vxb = (vxb - mu) / sd

    params = init_params(config)
    rng = np.random.default_rng([config.seed, 1])
    h1 = config.hidden_dims[0]
    p = config.dropout_p
    n = len(y)

    log = TrainLog()
    best_auc: float | None = None
    best_params = params
    streak = 0
    stop_reason = f"reached max_epochs ({config.max_epochs})"
    for epoch in range(config.max_epochs):
        lr = lr_at(epoch, config)
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            bxa, bxb, by = xa[idx], xb[idx], y[idx]
            mask = None
            if p > 0.0:
                mask = (rng.random((len(idx), h1)) >= p).astype(np.float64)
            logits, cache = _forward_batch(params, bxa, bxb, mask, p)
            loss_sum += float(_loss_batch(logits, by).sum())
            grads = _backward_batch(params, logits, cache, by)
            params = _step(params, grads, lr)
        val_auc = float(auc_scores(_score_batch(params, vxa, vxb), vy))
        log.epochs.append(EpochStats(epoch=epoch, lr=lr,
                                     train_loss=loss_sum / n, val_auc=val_auc))
        significant = best_auc is None or val_auc > best_auc + _IMPROVE_EPS
        if best_auc is None or val_auc > best_auc:
            best_auc = val_auc
            best_params = params
            log.best_epoch = epoch
        streak = 0 if significant else streak + 1
        if streak >= config.patience:
            stop_reason = (f"validation AUC did not improve by more than "
                           f"{_IMPROVE_EPS} for {config.patience} epoch(s)")
            break
    log.stop_reason = stop_reason
    log.best_val_auc = best_auc if best_auc is not None else float("nan")
    if config.standardize:
        best_params = _fold_standardization(best_params, mu, sd)
    else:
        best_params = best_params.copy()
    return best_params, log


# ---------------------------------------------------------------------------
# scoring

def score_pair(params: ScorerParams, va, vb) -> float:
    """Eval-mode probability that the two faces come from the same photo."""
    return forward(params, va, vb)[0]


def score_pair_tta(params: ScorerParams, crop_a: np.ndarray, crop_b: np.ndarray,
                   augment_config: AugmentConfig | None = None,
                   feature_config: FeatureConfig | None = None) -> float:
    """Average score over the deterministic augmentation views.

    View i of face a is paired with view i of face b, and the mean of the
    per-view scores is computed in exact rational arithmetic (so ten equal
    scores average to exactly that score).
    """
    augment_config = augment_config or AugmentConfig()
    feature_config = feature_config or FeatureConfig()
    views_a = augment_views(crop_a, augment_config, mode="tta")
    views_b = augment_views(crop_b, augment_config, mode="tta")
    scores = [
        score_pair(params,
                   cue_features(a, feature_config).values,
                   cue_features(b, feature_config).values)
        for a, b in zip(views_a, views_b)]
    return float(sum(Fraction(s) for s in scores) / len(scores))


# ---------------------------------------------------------------------------
# params file (.fspw): JSON with a config echo and nested weight lists

def save_params(params: ScorerParams, config: ScorerConfig,
                path: str | Path) -> None:
    check_params(params, config)
    doc = {
        "format": "fspw1",
        "config": {
            "input_dim": config.input_dim,
            "proj_dim": config.proj_dim,
            "hidden_dims": list(config.hidden_dims),
            "dropout_p": config.dropout_p,
            "lr0": config.lr0,
            "lr_factor": config.lr_factor,
            "lr_epoch_step": config.lr_epoch_step,
            "max_epochs": config.max_epochs,
            "patience": config.patience,
            "seed": config.seed,
            "batch_size": config.batch_size,
            "shared_projection": config.shared_projection,
            "standardize": config.standardize,
        },
        "weights": {name: arr.tolist() for name, arr in params.arrays().items()},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n",
                          encoding="utf-8")


def load_params(path: str | Path) -> tuple[ScorerParams, ScorerConfig]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"params file {path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != "fspw1":
        raise FormatError(f"params file {path}: not an fspw1 document")
    cfg = doc.get("config", {})
    try:
        config = ScorerConfig(**{k: tuple(v) if k == "hidden_dims" else v
                                 for k, v in cfg.items()})
    except (TypeError, ValidationError) as exc:
        raise FormatError(f"params file {path}: bad config ({exc})") from exc
    weights = doc.get("weights", {})
    kw = {}
    for name in _expected_shapes(config):
        if name not in weights:
            raise FormatError(f"params file {path}: missing weight {name!r}")
        kw[name] = np.array(weights[name], dtype=np.float64)
    params = ScorerParams(**kw)
    try:
        check_params(params, config)
    except ValidationError as exc:
        raise FormatError(f"params file {path}: {exc}") from exc
    return params, config
