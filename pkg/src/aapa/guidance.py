"""Explicit attention guidance for a neural tracker: tracking vector and weight matrix."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from aapa.attachment import AttachmentHierarchy
from aapa.simulator import VISIBLE, FrameAnnotation


@dataclass(frozen=True)
class TrackingVector:
    entries: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, t: int) -> str:
        return self.entries[t]


@dataclass(frozen=True)
class GuidanceMatrix:
    values: np.ndarray
    normalized: bool

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def build_tracking_vector(
    annotations: Sequence[FrameAnnotation], timeline: Sequence[AttachmentHierarchy], target: str
) -> TrackingVector:
    """Per frame, the object to attend to.

    The target itself while visible; otherwise the root of its attachment chain
    (the target again if it is hidden but unattached).
    """
    if len(annotations) != len(timeline):
        raise ValueError(f"{len(annotations)} annotations but {len(timeline)} hierarchy frames")
    entries = []
    for ann, h in zip(annotations, timeline):
        entries.append(target if ann.label == VISIBLE else h.root(target))
    return TrackingVector(tuple(entries))


def column_mapping(annotations: Sequence[FrameAnnotation]) -> dict[str, int]:
    """Object ids to columns in order of first appearance."""
    cols: dict[str, int] = {}
    for ann in annotations:
        for oid in ann.boxes:
            cols.setdefault(oid, len(cols))
    return cols


def build_weight_matrix(
    v: TrackingVector,
    K: int,
    w: float,
    normalize: bool = False,
    columns: Mapping[str, int] | None = None,
) -> GuidanceMatrix:
    """Ones everywhere except ``w`` at the tracked object's column in each row.

    With ``normalize`` each row goes through a softmax.
    """
    if w <= 0:
        raise ValueError("w must be positive")
    if columns is None:
        columns = {}
        for oid in v.entries:
            columns.setdefault(oid, len(columns))
    W = np.ones((len(v), K))
    for t, oid in enumerate(v.entries):
        col = columns.get(oid)
        if col is None:
            raise KeyError(f"frame {t}: object {oid!r} has no column")
        if not 0 <= col < K:
            raise ValueError(f"frame {t}: column {col} of {oid!r} outside K={K}")
        W[t, col] = w
    if normalize:
        e = np.exp(W - W.max(axis=1, keepdims=True))
        W = e / e.sum(axis=1, keepdims=True)
    return GuidanceMatrix(W, normalize)


def write_vector(path: Path, v: TrackingVector) -> None:
    Path(path).write_text("".join(f"{e}\n" for e in v.entries))


def write_matrix(path: Path, m: GuidanceMatrix) -> None:
    Path(path).write_text("".join(" ".join(repr(float(x)) for x in row) + "\n" for row in m.values))


def read_matrix(path: Path) -> np.ndarray:
    return np.array([[float(x) for x in line.split()] for line in Path(path).read_text().splitlines() if line.strip()])
