"""Verification metrics over scored face pairs.

Every metric here reduces to integer counting: scores are only ever
*compared*, never summed, and each reported rate is a single division of
two Python integers (or an exact ``fractions`` computation for AP and CV
means).  The float results are therefore the correctly rounded values of
the underlying rationals, which is what the brute-force oracle tests
demand.

Conventions: the decision rule is ``score >= threshold -> positive``;
ties in a threshold search resolve to the lowest threshold; candidate
thresholds are -inf, the midpoints of consecutive distinct scores, and
+inf.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .dataset_model import PairExample, TripletExample
from .errors import ValidationError

#: Above this many points pr_ap falls back from exact rationals to float64.
_EXACT_AP_LIMIT = 65536

#: Relation columns in report order.
RELATION_ORDER = ("MD", "MS", "FD", "FS", "FMD", "FMS")


@dataclass(frozen=True, slots=True)
class ScoredPair:
    """A pair plus its model score; ``version`` tags which negative-set
    draw a record belongs to (None = shared across versions)."""

    pair: PairExample
    score: float
    version: int | None = None


@dataclass(frozen=True, slots=True)
class ScoredTriplet:
    triplet: TripletExample
    score: float
    version: int | None = None


class EerResult(NamedTuple):
    rate: float
    threshold: float


class PrResult(NamedTuple):
    points: list[tuple[float, float]]
    ap: float


class CvAccuracy(NamedTuple):
    mean: float
    fold_accuracies: list[float]
    fold_thresholds: list[float]


def triplet_score(father_child_score: float, mother_child_score: float) -> float:
    """Max rule: a child matches a couple if it matches either parent."""
    return max(father_child_score, mother_child_score)


# ---------------------------------------------------------------------------
# tallies

def _label_int(label: str) -> int:
    return 1 if label == "positive" else 0


def _check_scores(scores: np.ndarray) -> None:
    if scores.size == 0:
        raise ValidationError("empty score set")
    if not np.all(np.isfinite(scores)):
        raise ValidationError("scores must be finite")


def _group(scores: np.ndarray, labels: np.ndarray):
    """Ascending distinct scores with per-group positive/negative counts."""
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    y = labels[order]
    uniq, start = np.unique(s, return_index=True)
    pos = np.add.reduceat(y, start)
    tot = np.diff(np.append(start, len(s)))
    return uniq, pos.astype(np.int64), (tot - pos).astype(np.int64)


def auc_scores(scores, labels) -> float:
    """ROC AUC with ties counted half, from raw score/label arrays.

    Equal to the Mann-Whitney statistic: (concordant + ties/2) / (P*N),
    evaluated as one integer division.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    _check_scores(scores)
    _, gpos, gneg = _group(scores, labels)
    p = int(gpos.sum())
    n = int(gneg.sum())
    if p == 0 or n == 0:
        raise ValidationError("need both positive and negative scores")
    cum_neg_below = np.cumsum(gneg) - gneg
    concordant = int((gpos * cum_neg_below).sum())
    ties = int((gpos * gneg).sum())
    return (2 * concordant + ties) / (2 * p * n)


def _pair_arrays(scored: Sequence[ScoredPair]):
    scores = np.array([sp.score for sp in scored], dtype=np.float64)
    labels = np.array([_label_int(sp.pair.label) for sp in scored], dtype=np.int64)
    return scores, labels


def roc_auc(scored: Sequence[ScoredPair]) -> float:
    scores, labels = _pair_arrays(scored)
    return auc_scores(scores, labels)


def _candidates(uniq: np.ndarray) -> list[float]:
    mids = [(uniq[i] + uniq[i + 1]) / 2.0 for i in range(len(uniq) - 1)]
    return [-math.inf] + mids + [math.inf]


def eer(scored: Sequence[ScoredPair]) -> EerResult:
    """Equal error rate: sweep candidate thresholds, pick the one minimizing
    |FPR - FNR| (ties -> lowest threshold), report (FPR+FNR)/2 there.

    The argmin comparison is done on cross-multiplied integers, so float
    rounding can never flip it.
    """
    scores, labels = _pair_arrays(scored)
    _check_scores(scores)
    uniq, gpos, gneg = _group(scores, labels)
    p = int(gpos.sum())
    n = int(gneg.sum())
    if p == 0 or n == 0:
        raise ValidationError("need both positive and negative scores")
    cands = _candidates(uniq)
    best_i = None
    best_gap = None
    c = 0  # negatives strictly below the candidate
    d = 0  # positives strictly below the candidate
    for i in range(len(cands)):
        gap = abs((n - c) * p - d * n)  # |FPR - FNR| * (N*P)
        if best_gap is None or gap < best_gap:
            best_gap = gap
            best_i = i
            best_c, best_d = c, d
        if i < len(uniq):
            c += int(gneg[i])
            d += int(gpos[i])
    rate = ((n - best_c) * p + best_d * n) / (2 * n * p)
    return EerResult(rate=rate, threshold=cands[best_i])


def roc_points(scored: Sequence[ScoredPair]) -> list[tuple[float, float]]:
    """(FPR, TPR) at every candidate threshold, from (0,0) to (1,1)."""
    scores, labels = _pair_arrays(scored)
    _check_scores(scores)
    uniq, gpos, gneg = _group(scores, labels)
    p = int(gpos.sum())
    n = int(gneg.sum())
    if p == 0 or n == 0:
        raise ValidationError("need both positive and negative scores")
    pts = []
    c = 0
    d = 0
    for i in range(len(uniq) + 1):
        pts.append(((n - c) / n, (p - d) / p))
        if i < len(uniq):
            c += int(gneg[i])
            d += int(gpos[i])
    pts.reverse()
    return pts


def pr_ap(scored: Sequence[ScoredPair]) -> PrResult:
    """Precision-recall points plus step-interpolated average precision.

    AP = sum over distinct descending scores of (R_k - R_{k-1}) * P_k.  Up
    to 65,536 points the sum is taken over exact rationals and rounded once
    at the end; beyond that it falls back to float64 accumulation.
    """
    scores, labels = _pair_arrays(scored)
    _check_scores(scores)
    uniq, gpos, gneg = _group(scores, labels)
    p = int(gpos.sum())
    if p == 0:
        raise ValidationError("need at least one positive")
    points = [(0.0, 1.0)]
    exact = len(scored) <= _EXACT_AP_LIMIT
    ap_frac = Fraction(0)
    ap_float = 0.0
    tp = 0
    pp = 0
    for i in range(len(uniq) - 1, -1, -1):  # descending scores
        prev_tp = tp
        tp += int(gpos[i])
        pp += int(gpos[i]) + int(gneg[i])
        points.append((tp / p, tp / pp))
        if exact:
            ap_frac += Fraction((tp - prev_tp) * tp, p * pp)
        else:
            ap_float += (tp - prev_tp) / p * (tp / pp)
    return PrResult(points=points, ap=float(ap_frac) if exact else ap_float)


# ---------------------------------------------------------------------------
# thresholded accuracy

def _best_train_threshold(scores: np.ndarray, labels: np.ndarray) -> float:
    """Threshold maximizing accuracy on the given scores (ties -> lowest)."""
    uniq, gpos, gneg = _group(scores, labels)
    p = int(gpos.sum())
    cands = _candidates(uniq)
    best_t = None
    best_correct = -1
    c = 0
    d = 0
    for i in range(len(cands)):
        correct = (p - d) + c  # true positives + true negatives
        if correct > best_correct:
            best_correct = correct
            best_t = cands[i]
        if i < len(uniq):
            c += int(gneg[i])
            d += int(gpos[i])
    return best_t


def cv_threshold_accuracy(scored: Sequence[ScoredPair], folds: int = 5,
                          seed: int = 0,
                          fold_source: str = "shuffle") -> CvAccuracy:
    """Cross-validated accuracy of the best single threshold.

    Folds are stratified random partitions (``fold_source="shuffle"``,
    seeded) or the published fold tags carried by the pairs
    (``fold_source="given"``).  Each fold's threshold maximizes accuracy on
    the other folds and is applied untouched to the held-out fold.  The
    mean is the exact rational mean of the fold accuracies.
    """
    if folds < 2:
        raise ValidationError(f"folds must be >= 2, got {folds}")
    scores, labels = _pair_arrays(scored)
    _check_scores(scores)
    if fold_source == "shuffle":
        pos_idx = np.flatnonzero(labels == 1)
        neg_idx = np.flatnonzero(labels == 0)
        if len(pos_idx) < folds or len(neg_idx) < folds:
            raise ValidationError(
                f"need >= {folds} members per class, got {len(pos_idx)} "
                f"positives / {len(neg_idx)} negatives")
        rng = np.random.default_rng(seed)
        fold_members = [np.concatenate(chunks) for chunks in zip(
            np.array_split(rng.permutation(pos_idx), folds),
            np.array_split(rng.permutation(neg_idx), folds))]
    elif fold_source == "given":
        tags = [sp.pair.fold for sp in scored]
        if any(t is None for t in tags):
            raise ValidationError("fold_source='given' but some pairs have no fold")
        distinct = sorted(set(tags))
        if len(distinct) != folds:
            raise ValidationError(
                f"pairs carry {len(distinct)} distinct folds, expected {folds}")
        fold_members = [np.flatnonzero(np.array([t == tag for t in tags]))
                        for tag in distinct]
    else:
        raise ValidationError(f"unknown fold_source {fold_source!r}")

    exact_accs: list[Fraction] = []
    thresholds: list[float] = []
    for members in fold_members:
        test_mask = np.zeros(len(scored), dtype=bool)
        test_mask[members] = True
        tr_s, tr_y = scores[~test_mask], labels[~test_mask]
        te_s, te_y = scores[test_mask], labels[test_mask]
        if tr_y.sum() == 0 or tr_y.sum() == len(tr_y):
            raise ValidationError("a training fold has a single class")
        if len(te_s) == 0:
            raise ValidationError("an empty test fold")
        t = _best_train_threshold(tr_s, tr_y)
        predicted_pos = te_s >= t
        correct = int((predicted_pos == (te_y == 1)).sum())
        exact_accs.append(Fraction(correct, len(te_s)))
        thresholds.append(t)
    mean = float(sum(exact_accs, Fraction(0)) / folds)
    return CvAccuracy(mean=mean, fold_accuracies=[float(a) for a in exact_accs],
                      fold_thresholds=thresholds)


# ---------------------------------------------------------------------------
# per-relation report

@dataclass
class EvalReport:
    """Aggregated audit result: global ranking metrics plus per-relation
    cross-validated accuracies (mean over negative-set versions)."""

    n_positive: int = 0
    n_negative: int = 0
    versions: list[int] = field(default_factory=list)
    auc: float | None = None
    eer_rate: float | None = None
    eer_threshold: float | None = None
    ap: float | None = None
    relation_accuracy: dict[str, float] = field(default_factory=dict)
    relation_accuracy_by_version: dict[str, list[float]] = field(default_factory=dict)
    roc: list[tuple[float, float]] | None = None
    pr: list[tuple[float, float]] | None = None
    warnings: list[str] = field(default_factory=list)


class _Record(NamedTuple):
    score: float
    label: str
    relation: str | None
    version: int | None


def _normalize(scored: Iterable[ScoredPair | ScoredTriplet]) -> list[_Record]:
    records = []
    for item in scored:
        if isinstance(item, ScoredPair):
            records.append(_Record(item.score, item.pair.label,
                                   item.pair.relation, item.version))
        elif isinstance(item, ScoredTriplet):
            relation = "FMS" if item.triplet.child_gender == "son" else "FMD"
            records.append(_Record(item.score, item.triplet.label,
                                   relation, item.version))
        else:
            raise ValidationError(f"cannot score a {type(item).__name__}")
    return records


def _as_scored_pairs(records: list[_Record]) -> list[ScoredPair]:
    # Rebuild minimal ScoredPair shells so the metric helpers apply; ids are
    # irrelevant to the metrics.
    return [ScoredPair(PairExample(f"r{i}a", f"r{i}b", r.label, relation=r.relation),
                       r.score) for i, r in enumerate(records)]


def relation_breakdown(scored: Sequence[ScoredPair | ScoredTriplet],
                       folds: int = 5, seed: int = 0) -> EvalReport:
    """Build an EvalReport from a mixed pair/triplet scored set.

    Triplets contribute FMD/FMS rows; pair relations contribute their own
    rows; records with no relation only count toward "All".  With multiple
    negative-set versions, version-tagged records are evaluated per version
    (unversioned records are shared) and scalar metrics are averaged;
    ROC/PR curves come from the first version.  Subsets too small or
    single-class to evaluate are skipped with a warning.
    """
    records = _normalize(scored)
    if not records:
        raise ValidationError("nothing to evaluate")
    tags = sorted({r.version for r in records if r.version is not None})
    views = tags if tags else [None]

    report = EvalReport(versions=[v for v in views if v is not None])
    per_metric: dict[str, list[float]] = {"auc": [], "eer": [], "eer_t": [], "ap": []}
    acc_by_rel: dict[str, list[float]] = {}
    skipped: set[str] = set()

    relations = [r for r in RELATION_ORDER
                 if any(rec.relation == r for rec in records)]

    for view_i, v in enumerate(views):
        view = [r for r in records if r.version is None or r.version == v]
        pairs_all = _as_scored_pairs(view)
        if view_i == 0:
            report.n_positive = sum(1 for r in view if r.label == "positive")
            report.n_negative = len(view) - report.n_positive
        try:
            per_metric["auc"].append(roc_auc(pairs_all))
            rate, thr = eer(pairs_all)
            per_metric["eer"].append(rate)
            per_metric["eer_t"].append(thr)
            per_metric["ap"].append(pr_ap(pairs_all).ap)
            if view_i == 0:
                report.roc = roc_points(pairs_all)
                report.pr = pr_ap(pairs_all).points
        except ValidationError as exc:
            report.warnings.append(f"version {v}: global metrics skipped ({exc})")
        for rel in relations + ["All"]:
            if rel in skipped:
                continue
            subset = (pairs_all if rel == "All"
                      else [sp for sp in pairs_all if sp.pair.relation == rel])
            try:
                cv = cv_threshold_accuracy(subset, folds=folds, seed=seed)
            except ValidationError as exc:
                skipped.add(rel)
                acc_by_rel.pop(rel, None)
                report.warnings.append(f"relation {rel} skipped ({exc})")
                continue
            acc_by_rel.setdefault(rel, []).append(cv.mean)

    for key, values in per_metric.items():
        if len(values) == len(views):
            mean = float(sum(Fraction(x) for x in values) / len(values))
            if key == "auc":
                report.auc = mean
            elif key == "eer":
                report.eer_rate = mean
            elif key == "eer_t":
                report.eer_threshold = mean
            else:
                report.ap = mean
    for rel in relations + ["All"]:
        if rel in acc_by_rel and len(acc_by_rel[rel]) == len(views):
            report.relation_accuracy[rel] = float(
                sum(Fraction(x) for x in acc_by_rel[rel]) / len(views))
            report.relation_accuracy_by_version[rel] = acc_by_rel[rel]
    # "All" must be present whenever any relation row is.
    if report.relation_accuracy and "All" not in report.relation_accuracy:
        raise AssertionError("relation rows without an All row")
    return report


# ---------------------------------------------------------------------------
# report serialization

def _enc_float(v: float | None):
    if v is None:
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _dec_float(v):
    if v is None:
        return None
    if isinstance(v, str):
        return float(v)
    return float(v)


def report_to_dict(report: EvalReport) -> dict:
    return {
        "n_positive": report.n_positive,
        "n_negative": report.n_negative,
        "versions": report.versions,
        "auc": report.auc,
        "eer_rate": report.eer_rate,
        "eer_threshold": _enc_float(report.eer_threshold),
        "ap": report.ap,
        "relation_accuracy": report.relation_accuracy,
        "relation_accuracy_by_version": report.relation_accuracy_by_version,
        "roc": [[f, t] for f, t in report.roc] if report.roc is not None else None,
        "pr": [[r, p] for r, p in report.pr] if report.pr is not None else None,
        "warnings": report.warnings,
    }


def report_from_dict(doc: dict) -> EvalReport:
    return EvalReport(
        n_positive=doc.get("n_positive", 0),
        n_negative=doc.get("n_negative", 0),
        versions=list(doc.get("versions", [])),
        auc=doc.get("auc"),
        eer_rate=doc.get("eer_rate"),
        eer_threshold=_dec_float(doc.get("eer_threshold")),
        ap=doc.get("ap"),
        relation_accuracy=dict(doc.get("relation_accuracy", {})),
        relation_accuracy_by_version={
            k: list(v) for k, v in doc.get("relation_accuracy_by_version", {}).items()},
        roc=[(f, t) for f, t in doc["roc"]] if doc.get("roc") is not None else None,
        pr=[(r, p) for r, p in doc["pr"]] if doc.get("pr") is not None else None,
        warnings=list(doc.get("warnings", [])),
    )


def save_report(report: EvalReport, path: str | Path) -> None:
    text = json.dumps(report_to_dict(report), sort_keys=True, indent=1)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_report(path: str | Path) -> EvalReport:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"report {path}: invalid JSON ({exc})") from exc
    return report_from_dict(doc)
