"""fspaudit: measure the from-same-photo shortcut signal in face-pair data.

Face-pair datasets whose positives are cropped from shared photographs
carry a photographic side channel (tone, lighting, blur, resolution) that
a classifier can exploit instead of facial similarity.  This package
builds the same-photo prediction task from a photo manifest, trains a
small scorer on deliberately identity-free colour cues, and reports how
much of a benchmark's protocol that shortcut alone can solve.
"""

from .dataset_model import (
    DatasetManifest,
    FaceRecord,
    PairExample,
    PhotoRecord,
    SplitAssignment,
    TripletExample,
    filter_usable_photos,
    load_manifest,
    save_manifest,
    split_photos,
)
from .errors import FormatError, ValidationError
from .evaluation import (
    CvAccuracy,
    EvalReport,
    ScoredPair,
    ScoredTriplet,
    cv_threshold_accuracy,
    eer,
    pr_ap,
    relation_breakdown,
    roc_auc,
    triplet_score,
)
from .features import (
    AugmentConfig,
    CropExpansion,
    FaceVector,
    FeatureConfig,
    augment_views,
    crop_face,
    cue_features,
    decode_image,
    lab_to_rgb,
    load_embeddings,
    rgb_to_lab,
    save_embeddings,
)
from .pair_factory import (
    build_kinfacew_testset,
    build_substitution_negatives,
    build_tskin_negatives,
    enumerate_positive_pairs,
    generate_negative_pairs,
    triplet_to_pairs,
)
from .scorer import (
    ScorerConfig,
    ScorerParams,
    TrainLog,
    backward,
    forward,
    init_params,
    load_params,
    lr_at,
    save_params,
    score_pair,
    score_pair_tta,
    train,
)
from .synth_oracle import SynthConfig, generate

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
