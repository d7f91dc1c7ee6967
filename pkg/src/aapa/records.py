"""Plain-text record formats.

All files are whitespace-separated, one record per line; blank lines and lines
starting with ``#`` are ignored.

    detections   frame class x y w h
    actions      frame verb child parent         (parent "-" for single-object verbs)
    annotations  frame id class x y w h depth contained task_label
    predictions  frame symbol class x y w h status
    registry     attach_verb detach_verb
    config       key = value

Detection and prediction files start with ``# frames N`` so trailing frames
without records survive a round trip.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

from aapa.attachment import ActionEvent, AttachDetachRegistry
from aapa.errors import StreamError
from aapa.geometry import BoundingBox, Detection, ObjectClass
from aapa.simulator import FrameAnnotation


def _num(x: float) -> str:
    return repr(float(x))


def _rows(path: Path, width: int) -> Iterable[tuple[int, list[str]]]:
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != width:
            raise StreamError(f"{path}:{lineno}: expected {width} fields, got {len(parts)}")
        yield lineno, parts


def _header_frames(path: Path) -> int | None:
    for raw in Path(path).read_text().splitlines():
        parts = raw.split()
        if len(parts) == 3 and parts[0] == "#" and parts[1] == "frames":
            return int(parts[2])
        if raw.strip() and not raw.startswith("#"):
            break
    return None


def _frame(path, lineno, token: str) -> int:
    try:
        t = int(token)
    except ValueError:
        raise StreamError(f"{path}:{lineno}: bad frame index {token!r}") from None
    if t < 0:
        raise StreamError(f"{path}:{lineno}: negative frame index", t)
    return t


def _box(path, lineno, frame, fields) -> BoundingBox:
    try:
        return BoundingBox(*(float(v) for v in fields))
    except ValueError as exc:
        raise StreamError(f"{path}:{lineno}: {exc}", frame) from None


# --------------------------------------------------------------------------- detections


def write_detections(path: Path, stream: Sequence[Sequence[Detection]]) -> None:
    lines = [f"# frames {len(stream)}"]
    for t, dets in enumerate(stream):
        for d in dets:
            b = d.box
            lines.append(f"{t} {d.object_class.label} {_num(b.x)} {_num(b.y)} {_num(b.w)} {_num(b.h)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_detections(path: Path, n_frames: int | None = None) -> list[list[Detection]]:
    header = _header_frames(path)
    if n_frames is not None and header is not None and header != n_frames:
        raise StreamError(f"{path}: stream has {header} frames, expected {n_frames}")
    n = n_frames if n_frames is not None else header
    rows = []
    for lineno, parts in _rows(path, 6):
        t = _frame(path, lineno, parts[0])
        try:
            cls = ObjectClass.parse(parts[1])
            rows.append((t, Detection(cls, _box(path, lineno, t, parts[2:]), t)))
        except ValueError as exc:
            raise StreamError(f"{path}:{lineno}: {exc}", t) from None
    if n is None:
        n = max((t for t, _ in rows), default=-1) + 1
    stream: list[list[Detection]] = [[] for _ in range(n)]
    for t, d in rows:
        if t >= n:
            raise StreamError(f"{path}: record beyond last frame {n - 1}", t)
        stream[t].append(d)
    return stream


# --------------------------------------------------------------------------- actions


def write_actions(path: Path, actions: Sequence[ActionEvent]) -> None:
    lines = [f"{a.frame} {a.verb} {a.child} {a.parent}" for a in actions]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_actions(path: Path) -> list[ActionEvent]:
    out = []
    for lineno, (f, verb, child, parent) in _rows(path, 4):
        t = _frame(path, lineno, f)
        try:
            out.append(ActionEvent(t, verb, child, parent))
        except ValueError as exc:
            raise StreamError(f"{path}:{lineno}: {exc}", t) from None
    if any(b.frame < a.frame for a, b in zip(out, out[1:])):
        raise StreamError(f"{path}: actions are not sorted by frame")
    return out


# --------------------------------------------------------------------------- annotations


def write_annotations(path: Path, annotations: Sequence[FrameAnnotation]) -> None:
    lines = []
    for a in annotations:
        for oid, b in a.boxes.items():
            lines.append(
                f"{a.frame} {oid} {a.classes[oid].label} {_num(b.x)} {_num(b.y)} {_num(b.w)} {_num(b.h)} "
                f"{_num(a.depths.get(oid, 0.0))} {int(oid in a.contained)} {a.label}"
            )
    Path(path).write_text("\n".join(lines) + "\n")


def read_annotations(path: Path) -> list[FrameAnnotation]:
    frames: dict[int, FrameAnnotation] = {}
    classes: dict[str, ObjectClass] = {}
    depths: dict[str, float] = {}
    for lineno, parts in _rows(path, 10):
        t = _frame(path, lineno, parts[0])
        oid, label = parts[1], parts[9]
        classes[oid] = ObjectClass.parse(parts[2])
        depths[oid] = float(parts[7])
        ann = frames.setdefault(t, FrameAnnotation(t, {}, label, classes, depths, frozenset()))
        if ann.label != label:
            raise StreamError(f"{path}:{lineno}: conflicting task labels", t)
        ann.boxes[oid] = _box(path, lineno, t, parts[3:7])
        if parts[8] == "1":
            ann.contained = ann.contained | {oid}
    n = max(frames, default=-1) + 1
    missing = [t for t in range(n) if t not in frames]
    if missing:
        raise StreamError(f"{path}: no annotation rows", missing[0])
    return [frames[t] for t in range(n)]


# --------------------------------------------------------------------------- predictions


def format_predictions(frame: int, anchors) -> list[str]:
    return [
        f"{frame} {a.id} {a.object_class.label} {_num(a.box.x)} {_num(a.box.y)} {_num(a.box.w)} {_num(a.box.h)} {a.status}"
        for a in anchors
    ]


def read_predictions(path: Path) -> list[list[tuple[str, str, BoundingBox, str]]]:
    n = _header_frames(path)
    rows = []
    for lineno, parts in _rows(path, 8):
        t = _frame(path, lineno, parts[0])
        rows.append((t, (parts[1], parts[2], _box(path, lineno, t, parts[3:7]), parts[7])))
    if n is None:
        n = max((t for t, _ in rows), default=-1) + 1
    out: list[list] = [[] for _ in range(n)]
    for t, rec in rows:
        out[t].append(rec)
    return out


# --------------------------------------------------------------------------- registry and config


def read_registry(path: Path) -> AttachDetachRegistry:
    return AttachDetachRegistry([(a, d) for _, (a, d) in _rows(path, 2)])


def write_registry(path: Path, reg: AttachDetachRegistry) -> None:
    Path(path).write_text("".join(f"{a} {d}\n" for a, d in sorted(reg.pairs)))


def read_config(path: Path) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise StreamError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("_", "-")] = value
    return out
