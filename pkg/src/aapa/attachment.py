"""Attachment hierarchies built from attach/detach agent actions.

An edge ``(child, parent)`` means the child is physically bound to move with
the parent. A child has at most one parent and the edges form a forest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Sequence


class AttachmentError(ValueError):
    """An action would violate the hierarchy invariants."""

    def __init__(self, message: str, frame: int | None = None):
        self.frame = frame
        if frame is not None:
            message = f"frame {frame}: {message}"
        super().__init__(message)


class ChildAlreadyAttached(AttachmentError):
    pass


class CycleRejected(AttachmentError):
    pass


@dataclass(frozen=True)
class ActionEvent:
    """``verb`` applied at ``frame`` with normalized child/parent roles.

    Written notation often varies argument order per verb (``pick-up(hand, obj)``
    attaches ``obj`` to ``hand``); records here always carry the child first.
    """

    frame: int
    verb: str
    child: str
    parent: str

    def __post_init__(self):
        if self.child == self.parent:
            raise ValueError(f"frame {self.frame}: action {self.verb} on a single symbol {self.child!r}")


@dataclass(frozen=True)
class AttachDetachRegistry:
    pairs: frozenset[tuple[str, str]]

    def __init__(self, pairs: Iterable[tuple[str, str]]):
        pairs = frozenset((str(a), str(d)) for a, d in pairs)
        attach = [a for a, _ in pairs]
        detach = [d for _, d in pairs]
        verbs = attach + detach
        dupes = sorted({v for v in verbs if verbs.count(v) > 1})
        if dupes:
            raise ValueError(f"verbs used in more than one role: {dupes}")
        object.__setattr__(self, "pairs", pairs)

    @cached_property
    def attach_verbs(self) -> frozenset[str]:
        return frozenset(a for a, _ in self.pairs)

    @cached_property
    def detach_verbs(self) -> frozenset[str]:
        return frozenset(d for _, d in self.pairs)

    def is_attach(self, verb: str) -> bool:
        return verb in self.attach_verbs

    def is_detach(self, verb: str) -> bool:
        return verb in self.detach_verbs


# Registries used in the experiments: synthetic containment and the gearbox domain.
LACATER_REGISTRY = AttachDetachRegistry([("contain", "pick&place")])
GEARBOX_REGISTRY = AttachDetachRegistry(
    [("pick-up", "place-down"), ("screw-in", "unscrew"), ("insert", "take-out")]
)


@dataclass(frozen=True)
class AttachmentHierarchy:
    edges: frozenset[tuple[str, str]] = field(default_factory=frozenset)

    @cached_property
    def _parent(self) -> dict[str, str]:
        return dict(self.edges)

    def parent_of(self, node: str) -> str | None:
        return self._parent.get(node)

    def children_of(self, node: str) -> list[str]:
        return sorted(c for c, p in self.edges if p == node)

    def ancestors(self, node: str) -> list[str]:
        """Nearest first."""
        chain = []
        cur = self._parent.get(node)
        while cur is not None:
            chain.append(cur)
            cur = self._parent.get(cur)
        return chain

    def root(self, node: str) -> str:
        anc = self.ancestors(node)
        return anc[-1] if anc else node

    def depth(self, node: str) -> int:
        return len(self.ancestors(node))

    def descendants(self, node: str) -> set[str]:
        out: set[str] = set()
        stack = [node]
        while stack:
            for child in self.children_of(stack.pop()):
                if child not in out:
                    out.add(child)
                    stack.append(child)
        return out

    def nodes(self) -> set[str]:
        return {n for edge in self.edges for n in edge}

    def with_edge(self, child: str, parent: str) -> "AttachmentHierarchy":
        return AttachmentHierarchy(self.edges | {(child, parent)})

    def without_edge(self, child: str, parent: str) -> "AttachmentHierarchy":
        return AttachmentHierarchy(self.edges - {(child, parent)})

    def without_node(self, node: str) -> "AttachmentHierarchy":
        return AttachmentHierarchy(frozenset(e for e in self.edges if node not in e))

    def renamed(self, old: str, new: str) -> "AttachmentHierarchy":
        swap = {old: new}
        return AttachmentHierarchy(frozenset((swap.get(c, c), swap.get(p, p)) for c, p in self.edges))

    def __contains__(self, edge) -> bool:
        return edge in self.edges

    def __iter__(self) -> Iterator[tuple[str, str]]:
        return iter(sorted(self.edges))

    def __len__(self) -> int:
        return len(self.edges)


EMPTY = AttachmentHierarchy()


def apply_action(
    h: AttachmentHierarchy, e: ActionEvent, reg: AttachDetachRegistry
) -> AttachmentHierarchy:
    """Fold one action into the hierarchy.

    Attach verbs add ``(child, parent)``; detach verbs remove exactly that edge
    if present; any other verb leaves ``h`` unchanged.
    """
    c, p = e.child, e.parent
    if reg.is_attach(e.verb):
        current = h.parent_of(c)
        if current == p:
            return h
        if current is not None:
            raise ChildAlreadyAttached(
                f"child already attached: {c!r} has parent {current!r}, cannot attach to {p!r}", e.frame
            )
        if p in h.descendants(c):
            raise CycleRejected(f"cycle rejected: {p!r} is a descendant of {c!r}", e.frame)
        return h.with_edge(c, p)
    if reg.is_detach(e.verb) and (c, p) in h:
        return h.without_edge(c, p)
    return h


def hierarchy_timeline(
    actions: Sequence[ActionEvent], reg: AttachDetachRegistry, n_frames: int
) -> list[AttachmentHierarchy]:
    """Hierarchy in force at each frame ``0 .. n_frames-1``.

    An action at frame ``t`` takes effect at ``t``; same-frame actions apply in
    input order.
    """
    prev = -1
    for a in actions:
        if a.frame < prev:
            raise AttachmentError("actions not sorted by frame", a.frame)
        if not 0 <= a.frame < n_frames:
            raise AttachmentError(f"action outside [0, {n_frames})", a.frame)
        prev = a.frame

    timeline = []
    h = EMPTY
    i = 0
    for t in range(n_frames):
        while i < len(actions) and actions[i].frame == t:
            h = apply_action(h, actions[i], reg)
            i += 1
        timeline.append(h)
    return timeline


def highest_anchored_ancestor(
    h: AttachmentHierarchy, obj: str, anchored: set[str] | frozenset[str]
) -> str | None:
    """Walk child -> parent from ``obj`` and return the first anchored ancestor."""
    cur = h.parent_of(obj)
    while cur is not None:
        if cur in anchored:
            return cur
        cur = h.parent_of(cur)
    return None
