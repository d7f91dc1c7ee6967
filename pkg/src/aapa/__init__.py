"""Action-aware perceptual anchoring: object permanence from detections and agent actions."""

from aapa.geometry import BoundingBox, ObjectClass, Detection, iou, l2_center
from aapa.attachment import (
    ActionEvent,
    AttachDetachRegistry,
    AttachmentHierarchy,
    AttachmentError,
    apply_action,
    hierarchy_timeline,
    highest_anchored_ancestor,
)
from aapa.alignment import AlignmentConfig, AlignmentResult, align, solve_assignment
from aapa.anchoring import Anchor, AnchoringConfig, Tracker, WorldState, step

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "ObjectClass",
    "Detection",
    "iou",
    "l2_center",
    "ActionEvent",
    "AttachDetachRegistry",
    "AttachmentHierarchy",
    "AttachmentError",
    "apply_action",
    "hierarchy_timeline",
    "highest_anchored_ancestor",
    "AlignmentConfig",
    "AlignmentResult",
    "align",
    "solve_assignment",
    "Anchor",
    "AnchoringConfig",
    "Tracker",
    "WorldState",
    "step",
]
