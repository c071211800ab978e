"""Command-line entry point.

Stages mirror the library pipeline: synth -> split -> pairs -> features ->
train -> eval, plus audit (kinship-style manifests) and report (summary
table).  Every artifact is a file and every subcommand is deterministic
given its inputs and --seed.  Exit codes: 0 success, 1 validation error,
2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .dataset_model import (
    filter_usable_photos,
    load_manifest,
    load_split,
    save_manifest,
    save_split,
    split_photos,
)
from .errors import ValidationError
from .evaluation import load_report, save_report
from .features import AugmentConfig, load_embeddings, save_embeddings
from .pipeline import (
    accuracy_csv,
    audit_manifest,
    build_fsp_pairs,
    curves_csv,
    evaluate_subset,
    extract_features,
    pairs_in_subset,
    summary_table,
    write_gallery,
    _PairScorer,
)
from .scorer import ScorerConfig, load_params, save_params, train
from .synth_oracle import SynthConfig, generate


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _floats(text: str, n: int, what: str) -> tuple[float, ...]:
    parts = text.split(",")
    if len(parts) != n:
        raise argparse.ArgumentTypeError(f"{what} needs {n} comma-separated values")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad {what} value {text!r}") from None


def _ints(text: str, n: int, what: str) -> tuple[int, ...]:
    parts = text.split(",")
    if len(parts) != n:
        raise argparse.ArgumentTypeError(f"{what} needs {n} comma-separated values")
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad {what} value {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fspaudit",
                     description="Audit face-pair datasets for the "
                                 "from-same-photo shortcut signal.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("synth", help="generate a synthetic group-photo dataset")
    p.add_argument("--photos", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cue", type=float, default=0.7,
                   help="shared-cue strength in [0,1]")
    p.add_argument("--noise", type=float, default=2.0)
    p.add_argument("--faces", type=lambda s: _ints(s, 2, "--faces"),
                   default=(2, 5), help="min,max faces per photo")
    p.add_argument("--image-px", type=int, default=512)
    p.add_argument("--format", choices=("png", "ppm"), default="png")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="assign photos to train/validation/test")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="split JSON path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", type=lambda s: _floats(s, 3, "--split"),
                   default=(0.7, 0.1, 0.2), help="train,val,test ratios")
    p.add_argument("--min-face-px", type=int, default=50)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("pairs", help="build balanced same-photo pair sets")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split-file", required=True)
    p.add_argument("--out", required=True, help="output manifest with pairs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-face-px", type=int, default=50)
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("features", help="extract cue features (or ingest "
                                        "external embeddings) to FSPE1")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="FSPE1 output path")
    p.add_argument("--embeddings", help="ingest this FSPE1 file instead of "
                                        "extracting cue features")
    p.add_argument("--expansion", type=float, default=0.0)
    p.add_argument("--view", choices=("center", "random", "raw"),
                   default="center")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train the pair scorer")
    p.add_argument("--manifest", required=True, help="manifest with pairs")
    p.add_argument("--split-file", required=True)
    p.add_argument("--features", required=True, help="FSPE1 feature file")
    p.add_argument("--out", required=True, help=".fspw params output path")
    p.add_argument("--log", help="training-log JSON path "
                                 "(default: OUT with .log.json)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--max-epochs", type=int, default=30)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--proj-dim", type=int, default=512)
    p.add_argument("--hidden", type=lambda s: _ints(s, 2, "--hidden"),
                   default=(1024, 256), help="h1,h2 hidden sizes")
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--lr0", type=float, default=0.1)
    p.add_argument("--lr-factor", type=float, default=0.5)
    p.add_argument("--lr-step", type=int, default=5)
    p.add_argument("--unshared-projection", action="store_true")
    p.add_argument("--no-standardize", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate the scorer on a pair subset")
    p.add_argument("--manifest", required=True, help="manifest with pairs")
    p.add_argument("--split-file", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--params", required=True, help=".fspw params path")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--subset", choices=("train", "validation", "test"),
                   default="test")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("audit", help="score a kinship-style manifest and "
                                     "report per-relation accuracies")
    p.add_argument("--manifest", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--embeddings", help="FSPE1 file; switches to external-"
                                        "embedding mode (no TTA)")
    p.add_argument("--expansion", type=float, default=0.0)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--neg-versions", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("report", help="merge audit/eval reports into a "
                                      "summary table")
    p.add_argument("inputs", nargs="+", metavar="NAME=REPORT.json or REPORT.json")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_report)
    return parser


def cmd_synth(args) -> int:
    config = SynthConfig(n_photos=args.photos, faces_per_photo=tuple(args.faces),
                         image_px=args.image_px, cue_strength=args.cue,
                         noise_sigma=args.noise, seed=args.seed,
                         image_format=args.format)
    manifest = generate(config, args.out)
    n_faces = sum(len(p.faces) for p in manifest.photos)
    print(f"wrote {len(manifest.photos)} photos / {n_faces} faces to {args.out}")
    return 0


def cmd_split(args) -> int:
    manifest = filter_usable_photos(load_manifest(args.manifest),
                                    min_face_px=args.min_face_px)
    split = split_photos(manifest, ratios=tuple(args.split), seed=args.seed)
    save_split(split, _outfile(args.out))
    counts = split.counts()
    print(f"wrote {args.out}: " + " ".join(f"{k}={v}" for k, v in counts.items()))
    return 0


def cmd_pairs(args) -> int:
    manifest = filter_usable_photos(load_manifest(args.manifest),
                                    min_face_px=args.min_face_px)
    split = load_split(args.split_file)
    with_pairs = build_fsp_pairs(manifest, split, seed=args.seed)
    save_manifest(with_pairs, _outfile(args.out))
    n_pos = sum(1 for p in with_pairs.pairs if p.label == "positive")
    print(f"wrote {args.out}: {n_pos} positives + "
          f"{len(with_pairs.pairs) - n_pos} negatives")
    return 0


def cmd_features(args) -> int:
    manifest = load_manifest(args.manifest)
    if args.embeddings:
        vectors = load_embeddings(args.embeddings)
        missing = [f for f in manifest.face_ids if f not in vectors]
        if missing:
            raise ValidationError(
                f"embeddings file lacks {len(missing)} manifest faces "
                f"(first: {missing[0]!r})")
        vectors = {fid: vectors[fid] for fid in manifest.face_ids}
    else:
        vectors = extract_features(manifest, Path(args.manifest).parent,
                                   expansion=args.expansion, view=args.view,
                                   seed=args.seed)
    save_embeddings(vectors, _outfile(args.out))
    dim = next(iter(vectors.values())).dim
    print(f"wrote {args.out}: {len(vectors)} vectors of dim {dim}")
    return 0


def cmd_train(args) -> int:
    manifest = load_manifest(args.manifest)
    split = load_split(args.split_file)
    vectors = load_embeddings(args.features)
    dim = next(iter(vectors.values())).dim
    config = ScorerConfig(
        input_dim=dim, proj_dim=args.proj_dim, hidden_dims=tuple(args.hidden),
        dropout_p=args.dropout, lr0=args.lr0, lr_factor=args.lr_factor,
        lr_epoch_step=args.lr_step, max_epochs=args.max_epochs,
        patience=args.patience, seed=args.seed, batch_size=args.batch,
        shared_projection=not args.unshared_projection,
        standardize=not args.no_standardize)
    train_pairs = pairs_in_subset(manifest, split, "train")
    val_pairs = pairs_in_subset(manifest, split, "validation")
    params, log = train(config, train_pairs, val_pairs, vectors)
    save_params(params, config, _outfile(args.out))
    log_path = args.log or str(Path(args.out).with_suffix(".log.json"))
    _outfile(log_path).write_text(
        json.dumps(log.to_dict(), sort_keys=True, indent=1) + "\n",
        encoding="utf-8")
    print(f"wrote {args.out} (best epoch {log.best_epoch}, "
          f"val AUC {log.best_val_auc:.4f}, {log.stop_reason})")
    return 0


def cmd_eval(args) -> int:
    manifest = load_manifest(args.manifest)
    split = load_split(args.split_file)
    vectors = load_embeddings(args.features)
    params, _ = load_params(args.params)
    report = evaluate_subset(manifest, split, args.subset, params, vectors,
                             folds=args.folds, seed=args.seed)
    _write_report_files(report, _outfile(args.out))
    print(f"wrote {args.out}: AUC {_fmt(report.auc)} "
          f"EER {_fmt(report.eer_rate)} AP {_fmt(report.ap)}")
    return 0


def _fmt(v) -> str:
    return "n/a" if v is None else f"{v:.4f}"


def _outfile(path) -> Path:
    """File outputs land wherever the user pointed, including fresh dirs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _write_report_files(report, out_json: Path) -> None:
    save_report(report, out_json)
    stem = out_json.parent / out_json.stem
    if report.roc is not None:
        Path(f"{stem}_roc.csv").write_text(
            curves_csv(report.roc, ("fpr", "tpr")), encoding="utf-8")
    if report.pr is not None:
        Path(f"{stem}_pr.csv").write_text(
            curves_csv(report.pr, ("recall", "precision")), encoding="utf-8")


def cmd_audit(args) -> int:
    manifest = load_manifest(args.manifest)
    params, _ = load_params(args.params)
    embeddings = load_embeddings(args.embeddings) if args.embeddings else None
    report, gallery = audit_manifest(
        manifest, params, base_dir=Path(args.manifest).parent,
        embeddings=embeddings, expansion=args.expansion, folds=args.folds,
        neg_versions=args.neg_versions, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_report_files(report, out / "report.json")
    (out / "accuracy.csv").write_text(accuracy_csv(report), encoding="utf-8")
    scorer_fn = _PairScorer(params, manifest, Path(args.manifest).parent,
                            embeddings, args.expansion)
    write_gallery(gallery, out / "gallery", scorer_fn)
    cols = ", ".join(f"{k}={v:.3f}" for k, v in report.relation_accuracy.items())
    print(f"wrote {out}: {cols if cols else 'no relation rows'}")
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def cmd_report(args) -> int:
    named = []
    for item in args.inputs:
        if "=" in item:
            name, path = item.split("=", 1)
        else:
            name, path = Path(item).stem, item
        named.append((name, load_report(path)))
    doc, csv_text = summary_table(named)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(
        json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    (out / "summary.csv").write_text(csv_text, encoding="utf-8")
    print(f"wrote {out / 'summary.json'} and {out / 'summary.csv'} "
          f"({len(named)} dataset(s))")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_help(sys.stderr)
        return 1
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
