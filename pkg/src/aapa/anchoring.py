"""The per-frame anchoring cycle.

Each step folds the previous step's actions into the attachment hierarchy,
aligns the new detections against maintained anchors, reasons about the anchors
that were not aligned (attachment-follow, then occlusion, then plain missing)
and promotes persistent unmatched detections to new symbols.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

from aapa.alignment import AlignmentConfig, align
from aapa.attachment import (
    EMPTY,
    LACATER_REGISTRY,
    ActionEvent,
    AttachDetachRegistry,
    AttachmentHierarchy,
    apply_action,
    highest_anchored_ancestor,
)
from aapa.errors import StreamError
from aapa.geometry import BoundingBox, Detection, ObjectClass, coverage

log = logging.getLogger(__name__)

Offset = tuple[float, float]


class Status(str, Enum):
    VISIBLE = "visible"
    OCCLUDED = "occluded"
    ATTACHED = "attached-follow"
    MISSING = "missing"

    def __str__(self) -> str:
        return self.value


@dataclass
class Anchor:
    id: str
    object_class: ObjectClass
    box: BoundingBox
    status: Status = Status.VISIBLE
    missing_count: int = 0
    seen_count: int = 1
    created_frame: int = 0
    last_seen_frame: int = 0


@dataclass
class Candidate:
    object_class: ObjectClass
    box: BoundingBox
    streak: int = 1
    first_frame: int = 0


@dataclass(frozen=True)
class AnchoringConfig:
    alignment: AlignmentConfig = field(default_factory=AlignmentConfig)
    appear_threshold: int = 3
    disappear_threshold: int = 5
    occlusion_overlap: float = 0.4
    action_aware: bool = True

    def __post_init__(self):
        if self.appear_threshold < 1 or self.disappear_threshold < 1:
            raise ValueError("appear/disappear thresholds must be >= 1")
        if not 0.0 <= self.occlusion_overlap <= 1.0:
            raise ValueError("occlusion_overlap must lie in [0, 1]")


@dataclass
class WorldState:
    frame: int = -1
    anchors: dict[str, Anchor] = field(default_factory=dict)
    hierarchy: AttachmentHierarchy = EMPTY
    # child -> (child center - parent center) for each current edge
    offsets: dict[str, Offset] = field(default_factory=dict)
    candidates: list[Candidate] = field(default_factory=list)
    next_id: int = 0
    matched: list[tuple[str, int]] = field(default_factory=list)

    def copy(self) -> "WorldState":
        return WorldState(
            frame=self.frame,
            anchors={k: replace(a) for k, a in self.anchors.items()},
            hierarchy=self.hierarchy,
            offsets=dict(self.offsets),
            candidates=[replace(c) for c in self.candidates],
            next_id=self.next_id,
            matched=list(self.matched),
        )

    def find(self, object_class: ObjectClass | str) -> Anchor | None:
        """Oldest anchor of the given class (or class label)."""
        label = object_class if isinstance(object_class, str) else object_class.label
        for a in self.anchors.values():
            if a.object_class.label == label:
                return a
        return None


@dataclass(frozen=True)
class Disposition:
    status: Status | None  # None: drop the anchor
    box: BoundingBox
    missing_count: int


def _center_offset(child: BoundingBox, parent: BoundingBox) -> Offset:
    (cx, cy), (px, py) = child.center, parent.center
    return (cx - px, cy - py)


def follow_parent(child: Anchor, parent: Anchor, offset: Offset) -> BoundingBox:
    """Child box re-centered at ``parent center + offset``; size is kept."""
    if parent.box.is_absent:
        raise ValueError(f"parent not localizable: {parent.id}")
    px, py = parent.box.center
    return child.box.moved_to(px + offset[0], py + offset[1])


def _resolve(state: WorldState, symbol: str) -> str:
    """Map an action symbol onto an anchor id (by id, then class label); else keep it pending."""
    if symbol in state.anchors:
        return symbol
    hit = state.find(symbol)
    return hit.id if hit is not None else symbol


def _record_missing_offsets(state: WorldState) -> None:
    for child, parent in state.hierarchy.edges:
        if child in state.offsets:
            continue
        if child in state.anchors and parent in state.anchors:
            state.offsets[child] = _center_offset(state.anchors[child].box, state.anchors[parent].box)


def _chain_offset(state: WorldState, node: str, ancestor: str) -> Offset:
    dx = dy = 0.0
    cur = node
    while cur != ancestor:
        parent = state.hierarchy.parent_of(cur)
        off = state.offsets.get(cur)
        if off is None and cur in state.anchors and parent in state.anchors:
            off = _center_offset(state.anchors[cur].box, state.anchors[parent].box)
        ox, oy = off if off is not None else (0.0, 0.0)
        dx, dy = dx + ox, dy + oy
        cur = parent
    return (dx, dy)


def hypothesis_reason(lost: Iterable[str], state: WorldState, cfg: AnchoringConfig) -> dict[str, Disposition]:
    """Decide what happens to each anchor that was not aligned this frame.

    ``state`` must already hold this frame's matched anchors as visible. Lost
    anchors are handled parents-first so a followed parent can carry its own
    children. Anchors that stay in the world (followed, occluded, or missing
    below the drop threshold) count as anchored for their descendants.
    """
    h = state.hierarchy
    order = sorted(lost, key=lambda i: (h.depth(i), list(state.anchors).index(i)))
    visible = [a for a in state.anchors.values() if a.status is Status.VISIBLE and a.last_seen_frame == state.frame]
    anchored = {a.id for a in visible}
    boxes = {a.id: a.box for a in state.anchors.values()}
    out: dict[str, Disposition] = {}

    for aid in order:
        anchor = state.anchors[aid]
        ancestor = highest_anchored_ancestor(h, aid, anchored) if cfg.action_aware else None
        if ancestor is not None and ancestor in state.anchors:
            parent = replace(state.anchors[ancestor], box=boxes[ancestor])
            box = follow_parent(anchor, parent, _chain_offset(state, aid, ancestor))
            out[aid] = Disposition(Status.ATTACHED, box, 0)
        elif any(coverage(anchor.box, v.box) >= cfg.occlusion_overlap for v in visible):
            out[aid] = Disposition(Status.OCCLUDED, anchor.box, 0)
        else:
            misses = anchor.missing_count + 1
            if misses >= cfg.disappear_threshold:
                out[aid] = Disposition(None, anchor.box, misses)
                continue
            out[aid] = Disposition(Status.MISSING, anchor.box, misses)
        boxes[aid] = out[aid].box
        anchored.add(aid)
    return out


def step(
    state: WorldState,
    detections: Sequence[Detection],
    actions: Sequence[ActionEvent] = (),
    reg: AttachDetachRegistry = LACATER_REGISTRY,
    cfg: AnchoringConfig = AnchoringConfig(),
) -> WorldState:
    """Advance the world state by one frame. ``state`` is not modified."""
    frame = state.frame + 1
    for d in detections:
        if d.frame != frame:
            raise StreamError(f"detection belongs to frame {d.frame}", frame)
    new = state.copy()
    new.frame = frame

    # (1) actions of the previous cycle
    if cfg.action_aware:
        for a in actions:
            ev = ActionEvent(a.frame, a.verb, _resolve(new, a.child), _resolve(new, a.parent))
            new.hierarchy = apply_action(new.hierarchy, ev, reg)
        new.offsets = {c: o for c, o in new.offsets.items() if new.hierarchy.parent_of(c) is not None}
        _record_missing_offsets(new)

    # (2) alignment
    anchors = list(new.anchors.values())
    result = align(anchors, detections, cfg.alignment)
    new.matched = list(result.matched)
    for aid, j in result.matched:
        a = new.anchors[aid]
        a.box = detections[j].box
        a.object_class = detections[j].object_class
        a.status = Status.VISIBLE
        a.missing_count = 0
        a.seen_count += 1
        a.last_seen_frame = frame
    if cfg.action_aware:
        seen = {aid for aid, _ in result.matched}
        for child, parent in new.hierarchy.edges:
            if child in seen and parent in seen:
                new.offsets[child] = _center_offset(new.anchors[child].box, new.anchors[parent].box)

    # (3) hypothesis reasoning over lost anchors
    for aid, disp in hypothesis_reason(result.lost, new, cfg).items():
        if disp.status is None:
            log.debug("frame %d: dropping %s after %d misses", frame, aid, disp.missing_count)
            del new.anchors[aid]
            new.hierarchy = new.hierarchy.without_node(aid)
            new.offsets = {c: o for c, o in new.offsets.items() if new.hierarchy.parent_of(c) is not None}
            continue
        a = new.anchors[aid]
        a.status, a.box, a.missing_count = disp.status, disp.box, disp.missing_count

    # (4) candidates from unmatched detections
    leftovers = [detections[j] for j in result.unmatched_detections]
    cand = align(new.candidates, leftovers, cfg.alignment)
    survivors = []
    for ci, j in cand.matched:
        c = new.candidates[ci]
        survivors.append(Candidate(leftovers[j].object_class, leftovers[j].box, c.streak + 1, c.first_frame))
    for j in cand.unmatched_detections:
        survivors.append(Candidate(leftovers[j].object_class, leftovers[j].box, 1, frame))
    survivors.sort(key=lambda c: (c.first_frame, c.box.x, c.box.y, c.object_class.label))
    new.candidates = []
    for c in survivors:
        if c.streak >= cfg.appear_threshold:
            _promote(new, c, frame, cfg)
        else:
            new.candidates.append(c)
    return new


def _promote(state: WorldState, c: Candidate, frame: int, cfg: AnchoringConfig) -> None:
    aid = f"p{state.next_id}"
    state.next_id += 1
    state.anchors[aid] = Anchor(aid, c.object_class, c.box, Status.VISIBLE, 0, c.streak, frame, frame)
    if cfg.action_aware and c.object_class.label in state.hierarchy.nodes():
        state.hierarchy = state.hierarchy.renamed(c.object_class.label, aid)
        if c.object_class.label in state.offsets:
            state.offsets[aid] = state.offsets.pop(c.object_class.label)
        _record_missing_offsets(state)


class Tracker:
    """Stateful convenience wrapper around :func:`step` for one stream."""

    def __init__(self, cfg: AnchoringConfig | None = None, registry: AttachDetachRegistry = LACATER_REGISTRY):
        self.cfg = cfg or AnchoringConfig()
        self.registry = registry
        self.state = WorldState()

    def step(self, detections: Sequence[Detection], actions: Sequence[ActionEvent] = ()) -> WorldState:
        self.state = step(self.state, detections, actions, self.registry, self.cfg)
        return self.state

    def run(self, frames: Iterable[Sequence[Detection]], actions_by_frame: dict[int, list[ActionEvent]] | None = None):
        """Yield the state after every frame; actions of frame ``t-1`` feed step ``t``."""
        actions_by_frame = actions_by_frame or {}
        for detections in frames:
            yield self.step(detections, actions_by_frame.get(self.state.frame, []))
