"""Body-part fidgety-movement detection, late fusion and overlay rendering from 2D poses."""
from .classify import EnsembleConfig, Metrics, compute_metrics, loso_folds
from .features import FusedFeature, HistogramConfig, SegmentationScheme, extract_features, hojd2d, hojo2d
from .fusion import BodyPartScore, ScoreVector, part_scores, predict_video, train_late_fusion
from .skeleton import PARTS, FMLabel, Part, PoseSequence, SkeletonTopology, default_topology, normalize_sequence

__version__ = "0.1.0"
