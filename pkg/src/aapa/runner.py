"""Running a tracker variant over one scenario and scoring it."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from aapa.alignment import AlignmentConfig
from aapa.anchoring import AnchoringConfig, Tracker, WorldState
from aapa.attachment import ActionEvent, AttachDetachRegistry
from aapa.errors import StreamError
from aapa.evaluation import EvalReport, evaluate, first_detection_frame
from aapa.geometry import BoundingBox, Detection
from aapa.records import format_predictions
from aapa.simulator import NO_PARENT, FrameAnnotation, ScenarioScript


def variant_name(model: str, tau: float) -> str:
    """``("aapa", 6500) -> "AAPA-6k5"``, ``("pa", 3000) -> "PA-3k"``."""
    if float(tau).is_integer():
        k, rest = divmod(int(tau), 1000)
        suffix = f"{k}k" + (str(rest).rjust(3, "0").rstrip("0") if rest else "") if k else str(rest)
    else:
        suffix = repr(float(tau))
    return f"{model.upper()}-{suffix}"


def make_config(model: str, tau: float = 6500.0, appear: int = 3, disappear: int = 5,
                occlusion_overlap: float = 0.4) -> AnchoringConfig:
    if model not in ("pa", "aapa"):
        raise ValueError(f"unknown model {model!r}")
    return AnchoringConfig(
        alignment=AlignmentConfig(tau=tau),
        appear_threshold=appear,
        disappear_threshold=disappear,
        occlusion_overlap=occlusion_overlap,
        action_aware=model == "aapa",
    )


@dataclass
class ScenarioRun:
    predictions: list[str]
    target_boxes: list[BoundingBox | None]
    target_ids: list[str | None]
    report: EvalReport
    states: list[WorldState] = field(default_factory=list)
    matched_counts: list[int] = field(default_factory=list)


def check_alignment(stream: Sequence, annotations: Sequence[FrameAnnotation]) -> None:
    if len(stream) != len(annotations):
        raise StreamError(f"detection stream has {len(stream)} frames, annotations have {len(annotations)}")
    for t, ann in enumerate(annotations):
        if ann.frame != t:
            raise StreamError("annotation frames are not contiguous", t)


def detector_actions(script: ScenarioScript, actions: Sequence[ActionEvent]) -> list[ActionEvent]:
    """Rename scripted object ids to the class labels a detector-fed tracker knows."""
    labels = {o.id: o.object_class.label for o in script.objects}
    return [ActionEvent(a.frame, a.verb, labels.get(a.child, a.child), labels.get(a.parent, a.parent))
            for a in actions if a.parent != NO_PARENT]


def run_scenario(
    script: ScenarioScript,
    annotations: Sequence[FrameAnnotation],
    stream: Sequence[Sequence[Detection]],
    cfg: AnchoringConfig,
    registry: AttachDetachRegistry | None = None,
    model_name: str = "",
    noise: str = "",
    keep_states: bool = False,
) -> ScenarioRun:
    """Track the whole stream; the actions of frame ``t-1`` are fed at step ``t``."""
    check_alignment(stream, annotations)
    registry = registry or script.registry
    target_label = script.classes[script.target].label
    by_frame: dict[int, list[ActionEvent]] = {}
    for a in detector_actions(script, script.actions):
        by_frame.setdefault(a.frame, []).append(a)

    tracker = Tracker(cfg, registry)
    lines = [f"# frames {len(stream)}"]
    boxes: list[BoundingBox | None] = []
    ids: list[str | None] = []
    states = []
    matched_counts = []
    current: str | None = None
    for t, dets in enumerate(stream):
        state = tracker.step(dets, by_frame.get(t - 1, []))
        lines.extend(format_predictions(t, state.anchors.values()))
        if current not in state.anchors:
            hit = state.find(target_label)
            current = hit.id if hit is not None else None
        boxes.append(state.anchors[current].box if current is not None else None)
        ids.append(current)
        matched_counts.append(len(state.matched))
        if keep_states:
            states.append(state)

    truth = [a.boxes[script.target] for a in annotations]
    labels = [a.label for a in annotations]
    start = first_detection_frame(stream, target_label)
    report = evaluate(boxes, truth, labels, start, model=model_name, tau=cfg.alignment.tau, noise=noise)
    return ScenarioRun(lines, boxes, ids, report, states, matched_counts)
