"""Post-processing for frame-wise helmet-violation detections.

Stages: tracking, track-based label correction, contextual virtual boxes,
weighted box fusion, and mAP@50 evaluation under a top-k-per-frame cap.
"""

__version__ = "0.1.0"

from .core import BoundingBox, Detection, FrameSet, Origin, iou, scale_box
from .tracker import Tracker, TrackerConfig, run_video
from .adaptive_labeling import RefineConfig, refine_video, track_stats
from .contextual_expander import ExpanderConfig, cap_top_k, expand_frame
from .fusion import FusionConfig, fuse_frame
from .evaluation import GroundTruth, evaluate

__all__ = [
    "BoundingBox", "Detection", "FrameSet", "Origin", "iou", "scale_box",
    "Tracker", "TrackerConfig", "run_video",
    "RefineConfig", "refine_video", "track_stats",
    "ExpanderConfig", "cap_top_k", "expand_frame",
    "FusionConfig", "fuse_frame",
    "GroundTruth", "evaluate",
]
