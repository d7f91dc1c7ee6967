"""Synthetic snitch-localization scenarios with containment and carrying.

Scenes are 2-D: each object has a keyframed center/size trajectory and a
static depth (larger is nearer the camera). Contained objects move rigidly with
their container while the contain edge holds, which is how carrying arises.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from aapa.attachment import (
    ActionEvent,
    AttachDetachRegistry,
    AttachmentHierarchy,
    hierarchy_timeline,
)
from aapa.geometry import BoundingBox, Detection, ObjectClass, coverage

FRAME_SIZE = (320, 240)
NO_PARENT = "-"  # second argument of single-object actions (slide, rotate)

VISIBLE, OCCLUDED, CONTAINED, CARRIED = "visible", "occluded", "contained", "carried"
TASK_LABELS = (VISIBLE, OCCLUDED, CONTAINED, CARRIED)
TEMPLATES = (VISIBLE, OCCLUDED, CONTAINED, CARRIED)

SNITCH_CLASS = ObjectClass("snitch", "small", "metal", "gold")
SHAPES = ("cube", "cylinder", "sphere")
SIZES = {"small": 18.0, "medium": 26.0, "large": 36.0}
MATERIALS = ("metal", "rubber")
COLORS = ("red", "blue", "green", "yellow", "gray", "brown", "purple", "cyan")

OCCLUDED_COVERAGE = 0.7


@dataclass(frozen=True)
class Keyframe:
    frame: int
    cx: float
    cy: float
    w: float
    h: float


@dataclass
class ObjectSpec:
    id: str
    object_class: ObjectClass
    keyframes: list[Keyframe]
    depth: float = 0.0

    def state_at(self, frames: np.ndarray) -> np.ndarray:
        """(len(frames), 4) array of cx, cy, w, h by linear interpolation."""
        kf = sorted(self.keyframes, key=lambda k: k.frame)
        xs = [k.frame for k in kf]
        cols = [[k.cx for k in kf], [k.cy for k in kf], [k.w for k in kf], [k.h for k in kf]]
        return np.stack([np.interp(frames, xs, c) for c in cols], axis=1)


@dataclass
class ScenarioScript:
    objects: list[ObjectSpec]
    actions: list[ActionEvent]
    target: str
    n_frames: int = 300
    frame_size: tuple[int, int] = FRAME_SIZE
    registry_pairs: tuple[tuple[str, str], ...] = (("contain", "pick&place"),)
    # False when keyframes already contain carried motion (imported data).
    carry: bool = True
    template: str = VISIBLE
    seed: int = 0

    @property
    def registry(self) -> AttachDetachRegistry:
        return AttachDetachRegistry(self.registry_pairs)

    @property
    def classes(self) -> dict[str, ObjectClass]:
        return {o.id: o.object_class for o in self.objects}

    def validate(self) -> None:
        snitches = [o for o in self.objects if o.object_class.shape == "snitch"]
        if len(snitches) != 1 or snitches[0].id != self.target:
            raise ValueError("a script needs exactly one snitch, and it must be the target")
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate object ids")
        labels = [o.object_class.label for o in self.objects]
        if len(set(labels)) != len(labels):
            raise ValueError("object classes must be unique within a scene")

    def to_dict(self) -> dict:
        return {
            "n_frames": self.n_frames,
            "frame_size": list(self.frame_size),
            "target": self.target,
            "template": self.template,
            "seed": self.seed,
            "carry": self.carry,
            "registry": [list(p) for p in self.registry_pairs],
            "objects": [
                {
                    "id": o.id,
                    "class": o.object_class.label,
                    "depth": o.depth,
                    "keyframes": [[k.frame, k.cx, k.cy, k.w, k.h] for k in o.keyframes],
                }
                for o in self.objects
            ],
            "actions": [[a.frame, a.verb, a.child, a.parent] for a in self.actions],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioScript":
        return cls(
            objects=[
                ObjectSpec(
                    o["id"],
                    ObjectClass.parse(o["class"]),
                    [Keyframe(int(k[0]), *map(float, k[1:])) for k in o["keyframes"]],
                    float(o.get("depth", 0.0)),
                )
                for o in d["objects"]
            ],
            actions=[ActionEvent(int(a[0]), a[1], a[2], a[3]) for a in d.get("actions", [])],
            target=d["target"],
            n_frames=int(d["n_frames"]),
            frame_size=tuple(d.get("frame_size", FRAME_SIZE)),
            registry_pairs=tuple(tuple(p) for p in d.get("registry", [("contain", "pick&place")])),
            carry=bool(d.get("carry", True)),
            template=d.get("template", VISIBLE),
            seed=int(d.get("seed", 0)),
        )

    def save(self, path: Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path: Path) -> "ScenarioScript":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class FrameAnnotation:
    frame: int
    boxes: dict[str, BoundingBox]
    label: str
    classes: dict[str, ObjectClass] = field(default_factory=dict)
    depths: dict[str, float] = field(default_factory=dict)
    contained: frozenset[str] = frozenset()


@dataclass(frozen=True)
class NoiseProfile:
    name: str = "pp"
    flicker_probability: float = 0.0
    burst_min: int = 1
    burst_max: int = 1
    jitter: float = 0.0
    misclassification_probability: float = 0.0
    hide_occluded: bool = False
    seed: int = 0
    # per-object flicker probability overrides
    object_flicker: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        probs = [self.flicker_probability, self.misclassification_probability, *(p for _, p in self.object_flicker)]
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError("probabilities must lie in [0, 1]")
        if not 1 <= self.burst_min <= self.burst_max:
            raise ValueError("need 1 <= burst_min <= burst_max")
        if self.jitter < 0:
            raise ValueError("jitter must be nonnegative")


PROFILES = {
    "pp": NoiseProfile("pp"),
    "flicker": NoiseProfile("flicker", flicker_probability=0.02, burst_min=1, burst_max=4),
    "od": NoiseProfile("od", flicker_probability=0.02, burst_min=1, burst_max=4, jitter=1.0,
                       misclassification_probability=0.005, hide_occluded=True),
    "occlusion": NoiseProfile("occlusion", hide_occluded=True),
}


@dataclass(frozen=True)
class GeneratorParams:
    n_frames: int = 300
    frame_size: tuple[int, int] = FRAME_SIZE
    min_objects: int = 5
    max_objects: int = 15
    template: str = CARRIED
    max_actions: int | None = None  # 0 forces a static, visible-only scene

    def __post_init__(self):
        if not 5 <= self.min_objects <= self.max_objects <= 15:
            raise ValueError("object counts must satisfy 5 <= min <= max <= 15")
        if self.template not in TEMPLATES:
            raise ValueError(f"unknown template {self.template!r}")
        if self.n_frames < 60:
            raise ValueError("scenarios need at least 60 frames")


# --------------------------------------------------------------------------- generation


class _Builder:
    def __init__(self, params: GeneratorParams, rng: np.random.Generator):
        self.p = params
        self.rng = rng
        self.W, self.H = params.frame_size
        self.objects: list[ObjectSpec] = []
        self.actions: list[ActionEvent] = []
        self.taken: list[BoundingBox] = []

    def place(self, size: float, margin: float = 4.0, tries: int = 400) -> tuple[float, float]:
        half = size / 2 + margin
        for _ in range(tries):
            cx = float(self.rng.uniform(half, self.W - half))
            cy = float(self.rng.uniform(half, self.H - half))
            box = BoundingBox.from_center(cx, cy, size, size)
            if all(coverage(box, t) == 0 and coverage(t, box) == 0 for t in self.taken):
                self.taken.append(box)
                return round(cx, 2), round(cy, 2)
        cx = float(self.rng.uniform(half, self.W - half))
        cy = float(self.rng.uniform(half, self.H - half))
        return round(cx, 2), round(cy, 2)

    def point(self, size: float) -> tuple[float, float]:
        half = size / 2 + 4
        return (round(float(self.rng.uniform(half, self.W - half)), 2),
                round(float(self.rng.uniform(half, self.H - half)), 2))

    def add(self, oid: str, cls: ObjectClass, size: float, depth: float, at: tuple[float, float]) -> ObjectSpec:
        spec = ObjectSpec(oid, cls, [Keyframe(0, at[0], at[1], size, size)], depth)
        self.objects.append(spec)
        return spec

    def scaled(self, frames: int) -> int:
        """Duration tuned for 300-frame scenes, scaled to the actual length."""
        return max(1, round(frames * self.p.n_frames / 300))

    def span(self, lo: int, hi: int) -> int:
        return self.scaled(int(self.rng.integers(lo, hi)))

    def slide(self, obj: ObjectSpec, start: int, end: int, dest: tuple[float, float], verb: str = "slide"):
        end = min(end, self.p.n_frames - 1)
        if start >= end:
            return
        last = obj.keyframes[-1]
        obj.keyframes.append(Keyframe(start, last.cx, last.cy, last.w, last.h))
        obj.keyframes.append(Keyframe(end, dest[0], dest[1], last.w, last.h))
        self.actions.append(ActionEvent(start, verb, obj.id, NO_PARENT))

    def position(self, obj: ObjectSpec) -> tuple[float, float]:
        k = obj.keyframes[-1]
        return (k.cx, k.cy)


def _unique_classes(rng: np.random.Generator, n: int) -> list[ObjectClass]:
    pool = [ObjectClass(s, z, m, c) for s in SHAPES for z in SIZES for m in MATERIALS for c in COLORS]
    idx = rng.choice(len(pool), size=n, replace=False)
    return [pool[i] for i in idx]


def generate_scenario(params: GeneratorParams = GeneratorParams(), seed: int = 0) -> ScenarioScript:
    """Deterministic scene for ``seed``.

    Templates stress one regime each: ``visible`` (free motion), ``occluded``
    (the snitch slides behind a large occluder), ``contained`` (a cone covers
    the snitch and rests) and ``carried`` (a cone covers the snitch, slides
    away with it, and is finally lifted off).
    """
    rng = np.random.default_rng(seed)
    b = _Builder(params, rng)
    n = params.n_frames
    static = params.max_actions == 0
    template = VISIBLE if static else params.template
    n_objects = int(rng.integers(params.min_objects, params.max_objects + 1))

    snitch_size = float(rng.uniform(15.0, 20.0))
    snitch = b.add("snitch", SNITCH_CLASS, snitch_size, 1.0, b.place(snitch_size))
    special: list[ObjectSpec] = []
    if template in (CONTAINED, CARRIED):
        size = float(rng.uniform(38.0, 44.0))
        color = COLORS[int(rng.integers(len(COLORS)))]
        special.append(b.add("cone0", ObjectClass("inverted-cone", "large", "rubber", color), size, 3.0, b.place(size)))
    elif template == OCCLUDED:
        size = float(rng.uniform(46.0, 56.0))
        color = COLORS[int(rng.integers(len(COLORS)))]
        special.append(b.add("occluder0", ObjectClass("cylinder", "xlarge", "metal", color), size, 3.0, b.place(size)))

    classes = _unique_classes(rng, n_objects - 1 - len(special))
    distractors = []
    for i, cls in enumerate(classes):
        size = SIZES[cls.size] + float(rng.uniform(-2.0, 2.0))
        distractors.append(b.add(f"{cls.shape}{i}", cls, size, float(rng.uniform(0.0, 2.0)), b.place(size)))

    if not static:
        _script_template(b, template, snitch, special, n)
        for d in distractors:
            t = int(rng.integers(5, n // 3))
            for _ in range(int(rng.integers(0, 3))):
                dur = int(rng.integers(25, 60))
                if t + dur >= n - 1:
                    break
                b.slide(d, t, t + dur, b.point(d.keyframes[0].w))
                t += dur + int(rng.integers(5, 40))
            if rng.random() < 0.3:
                b.actions.append(ActionEvent(int(rng.integers(0, n)), "rotate", d.id, NO_PARENT))

    b.actions.sort(key=lambda a: a.frame)
    script = ScenarioScript(
        objects=b.objects, actions=b.actions, target="snitch", n_frames=n,
        frame_size=params.frame_size, template=template, seed=seed,
    )
    script.validate()
    return script


def _script_template(b: _Builder, template: str, snitch: ObjectSpec, special: list[ObjectSpec], n: int) -> None:
    rng = b.rng
    s_size = snitch.keyframes[0].w
    t = b.span(5, 20)
    if template == VISIBLE:
        while t < n - b.scaled(40):
            dur = b.span(25, 50)
            b.slide(snitch, t, t + dur, b.point(s_size))
            t += dur + b.span(10, 50)
        return

    if template == OCCLUDED:
        occ = special[0]
        ox, oy = b.position(occ)
        start = b.position(snitch)
        # approach, pass behind, and either stop there or come out the far side
        side = -1.0 if start[0] > ox else 1.0
        entry = (ox - side * (occ.keyframes[0].w / 2 + s_size), oy)
        leg = b.scaled(30)
        b.slide(snitch, t, t + leg, _clip(b, entry, s_size))
        t += leg + b.scaled(5)
        exit_x = ox + side * (occ.keyframes[0].w / 2 + s_size) if rng.random() < 0.5 else ox
        b.slide(snitch, t, t + leg, _clip(b, (exit_x, oy), s_size))
        t += leg + b.span(20, 60)
        if t < n - b.scaled(40):
            b.slide(snitch, t, t + leg, b.point(s_size))
        return

    cone = special[0]
    dur = b.span(20, 35)
    b.slide(snitch, t, t + dur, b.point(s_size))
    t += dur + b.span(5, 15)
    sx, sy = b.position(snitch)
    dur = b.span(20, 35)
    b.slide(cone, t, t + dur, (sx, sy), verb="pick&place")
    t += dur + 1
    b.actions.append(ActionEvent(t, "contain", "snitch", cone.id))
    t += b.span(10, 25)
    if template == CARRIED:
        for _ in range(int(rng.integers(1, 3))):
            dur = b.span(25, 45)
            if t + dur > n - b.scaled(60):
                break
            b.slide(cone, t, t + dur, b.point(cone.keyframes[0].w))
            t += dur + b.span(8, 20)
    else:
        t += b.span(40, 80)
    if t < n - b.scaled(40):
        # lift the cone off: detach, then move it away
        b.actions.append(ActionEvent(t, "pick&place", "snitch", cone.id))
        b.slide(cone, t, t + b.scaled(25), b.point(cone.keyframes[0].w), verb="pick&place")


def _clip(b: _Builder, p: tuple[float, float], size: float) -> tuple[float, float]:
    half = size / 2 + 4
    return (round(min(max(p[0], half), b.W - half), 2), round(min(max(p[1], half), b.H - half), 2))


# --------------------------------------------------------------------------- ground truth


def _trajectories(script: ScenarioScript, timeline: Sequence[AttachmentHierarchy]) -> dict[str, np.ndarray]:
    frames = np.arange(script.n_frames)
    own = {o.id: o.state_at(frames) for o in script.objects}
    if not script.carry:
        return own
    pos = {k: v.copy() for k, v in own.items()}
    disp = {k: np.zeros(2) for k in own}
    for t in range(1, script.n_frames):
        h, prev = timeline[t], timeline[t - 1]
        for oid in sorted(own, key=lambda i: (h.depth(i), i)):
            parent = h.parent_of(oid)
            if parent is not None and parent in pos and prev.parent_of(oid) == parent:
                disp[oid] = disp[oid] + (pos[parent][t, :2] - pos[parent][t - 1, :2])
            pos[oid][t, :2] = own[oid][t, :2] + disp[oid]
    return pos


def _label(script: ScenarioScript, t: int, h: AttachmentHierarchy, pos: dict[str, np.ndarray],
           boxes: dict[str, BoundingBox], depths: dict[str, float]) -> str:
    target = script.target
    parent = h.parent_of(target)
    if parent is not None:
        moved = t > 0 and parent in pos and not np.array_equal(pos[parent][t, :2], pos[parent][t - 1, :2])
        return CARRIED if moved else CONTAINED
    tbox = boxes[target]
    for oid, box in boxes.items():
        if oid != target and depths[oid] > depths[target] and coverage(tbox, box) >= OCCLUDED_COVERAGE:
            return OCCLUDED
    return VISIBLE


def render_ground_truth(script: ScenarioScript) -> list[FrameAnnotation]:
    timeline = hierarchy_timeline(_sorted_actions(script.actions), script.registry, script.n_frames)
    pos = _trajectories(script, timeline)
    classes = script.classes
    depths = {o.id: o.depth for o in script.objects}
    out = []
    for t in range(script.n_frames):
        boxes = {}
        for o in script.objects:
            cx, cy, w, h = pos[o.id][t]
            boxes[o.id] = BoundingBox.from_center(float(cx), float(cy), float(w), float(h))
        h = timeline[t]
        contained = frozenset(c for c, _ in h.edges if c in boxes)
        out.append(FrameAnnotation(t, boxes, _label(script, t, h, pos, boxes, depths), classes, depths, contained))
    return out


def label_frames(script: ScenarioScript) -> list[str]:
    return [a.label for a in render_ground_truth(script)]


def _sorted_actions(actions: Sequence[ActionEvent]) -> list[ActionEvent]:
    return sorted(actions, key=lambda a: a.frame)


# --------------------------------------------------------------------------- detector noise


def hidden_by_occlusion(ann: FrameAnnotation, oid: str) -> bool:
    box = ann.boxes[oid]
    d = ann.depths.get(oid, 0.0)
    return any(
        other != oid and ann.depths.get(other, 0.0) > d and coverage(box, ob) >= OCCLUDED_COVERAGE
        for other, ob in ann.boxes.items()
    )


def degrade(annotations: Sequence[FrameAnnotation], profile: NoiseProfile = PROFILES["pp"]) -> list[list[Detection]]:
    """Per-frame detections produced from ground truth by a simulated detector.

    Contained objects are never emitted. Every object-frame consumes the same
    number of random draws, so a stream depends only on the profile and seed.
    Flicker bursts are separated by at least one emitted frame.
    """
    rng = np.random.default_rng(profile.seed)
    overrides = dict(profile.object_flicker)
    remaining: dict[str, int] = {}
    cooldown: dict[str, bool] = {}
    stream = []
    for ann in annotations:
        vocab = sorted({c.label for c in ann.classes.values()})
        dets = []
        for oid, box in ann.boxes.items():
            u_flicker, u_burst, u_mis, u_pick = rng.random(4)
            noise = rng.normal(0.0, 1.0, 4)
            p = overrides.get(oid, profile.flicker_probability)
            if remaining.get(oid, 0) > 0:
                remaining[oid] -= 1
                cooldown[oid] = remaining[oid] == 0
                dropped = True
            elif p >= 1.0 or (not cooldown.get(oid, False) and u_flicker < p):
                length = profile.burst_min + int(u_burst * (profile.burst_max - profile.burst_min + 1))
                remaining[oid] = min(length, profile.burst_max) - 1
                cooldown[oid] = remaining[oid] == 0 and p < 1.0
                dropped = True
            else:
                cooldown[oid] = False
                dropped = False
            if dropped or oid in ann.contained:
                continue
            if profile.hide_occluded and hidden_by_occlusion(ann, oid):
                continue
            if profile.jitter > 0:
                x, y, w, h = (np.asarray(box.as_tuple()) + profile.jitter * noise).tolist()
                box = BoundingBox(x, y, max(w, 1.0), max(h, 1.0))
            cls = ann.classes.get(oid) or ObjectClass(oid)
            if u_mis < profile.misclassification_probability and len(vocab) > 1:
                others = [v for v in vocab if v != cls.label]
                cls = ObjectClass.parse(others[int(u_pick * len(others)) % len(others)])
            dets.append(Detection(cls, box, ann.frame))
        stream.append(dets)
    return stream


# --------------------------------------------------------------------------- LA-CATER import


def import_lacater(path: Path) -> tuple[ScenarioScript, list[FrameAnnotation]]:
    """Read one LA-CATER-style annotation file into a script and annotations.

    Expected JSON layout::

        {"n_frames": 300,
         "objects": [{"instance": "Cone_0", "shape": "cone", "size": "large",
                      "material": "rubber", "color": "green",
                      "boxes": [[frame, x, y, w, h], ...]}, ...],
         "movements": {"Cone_0": [["_contain", "Spl_0", start, end],
                                  ["_pick_place", null, start, end], ...]},
         "target": "Spl_0",                  # optional
         "labels": ["visible", ...]}         # optional, one per frame

    ``_contain`` by X over Y becomes ``contain`` attaching Y to X at the end
    frame; a later ``_pick_place`` of X detaches everything X holds at its
    start frame. Other movements are kept as single-object actions.
    """
    data = json.loads(Path(path).read_text())
    n = int(data["n_frames"])
    objects = []
    shape_map = {"cone": "inverted-cone", "spl": "snitch"}
    for o in data["objects"]:
        shape = shape_map.get(o["shape"], o["shape"])
        cls = ObjectClass(shape, o.get("size", ""), o.get("material", ""), o.get("color", ""))
        kfs = [Keyframe(int(f), x + w / 2, y + h / 2, w, h) for f, x, y, w, h in o["boxes"]]
        objects.append(ObjectSpec(o["instance"], cls, kfs, 0.0))
    target = data.get("target") or next(o.id for o in objects if o.object_class.shape == "snitch")
    for o in objects:
        if o.id == target:
            o.depth = -1.0

    events = []
    for actor, moves in data.get("movements", {}).items():
        for verb, other, start, end in moves:
            events.append((int(start), int(end), verb, actor, other))
    events.sort(key=lambda e: (e[0], e[1]))
    actions: list[ActionEvent] = []
    holding: dict[str, list[str]] = {}
    for start, end, verb, actor, other in events:
        if verb == "_contain" and other:
            actions.append(ActionEvent(end, "contain", other, actor))
            holding.setdefault(actor, []).append(other)
        elif verb == "_pick_place":
            for child in holding.pop(actor, []):
                actions.append(ActionEvent(start, "pick&place", child, actor))
            actions.append(ActionEvent(start, "pick&place", actor, NO_PARENT))
        else:
            actions.append(ActionEvent(start, verb.lstrip("_"), actor, NO_PARENT))
    actions.sort(key=lambda a: a.frame)
    script = ScenarioScript(objects, actions, target, n, carry=False, template="lacater")
    anns = render_ground_truth(script)
    labels = data.get("labels")
    if labels:
        if len(labels) != n:
            raise ValueError(f"{path}: {len(labels)} labels for {n} frames")
        anns = [replace(a, label=lab) for a, lab in zip(anns, labels)]
    return script, anns


def center_speed(script: ScenarioScript) -> float:
    """Largest per-frame center displacement of any object (pixels)."""
    anns = render_ground_truth(script)
    best = 0.0
    for a, b in zip(anns, anns[1:]):
        for oid in a.boxes:
            (x0, y0), (x1, y1) = a.boxes[oid].center, b.boxes[oid].center
            best = max(best, math.hypot(x1 - x0, y1 - y0))
    return best
