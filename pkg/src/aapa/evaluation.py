"""Scoring of target predictions: mean IoU and mean center distance per task category."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

from aapa.geometry import BoundingBox, iou, l2_center

CATEGORIES = ("visible", "occluded", "contained", "carried", "overall")


def _mean_sem(values: Sequence[float]) -> tuple[float, float]:
    n = len(values)
    if n == 0:
        return math.nan, math.nan
    mean = math.fsum(values) / n
    if n < 2:
        return mean, math.nan
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var) / math.sqrt(n)


@dataclass
class CategoryScores:
    """Raw per-frame values, kept so reports merge exactly."""

    iou: list[float] = field(default_factory=list)
    l2: list[float] = field(default_factory=list)
    missing: int = 0

    @property
    def frame_count(self) -> int:
        return len(self.iou)

    @property
    def mean_iou(self) -> float:
        return _mean_sem(self.iou)[0]

    @property
    def sem_iou(self) -> float:
        return _mean_sem(self.iou)[1]

    @property
    def mean_l2(self) -> float:
        return _mean_sem(self.l2)[0]

    @property
    def sem_l2(self) -> float:
        return _mean_sem(self.l2)[1]

    def summary(self) -> dict:
        return {
            "frames": self.frame_count,
            "mean_iou": _num(self.mean_iou),
            "sem_iou": _num(self.sem_iou),
            "mean_l2": _num(self.mean_l2),
            "sem_l2": _num(self.sem_l2),
            "l2_frames": len(self.l2),
            "missing": self.missing,
        }


def _num(x: float):
    return None if math.isnan(x) else x


@dataclass
class EvalReport:
    model: str = ""
    tau: float | None = None
    noise: str = ""
    seed: int | None = None
    scores: dict[str, CategoryScores] = field(default_factory=lambda: {c: CategoryScores() for c in CATEGORIES})

    def __getitem__(self, category: str) -> CategoryScores:
        return self.scores[category]

    def merge(self, other: "EvalReport") -> "EvalReport":
        out = EvalReport(self.model or other.model, self.tau, self.noise, self.seed)
        for c in CATEGORIES:
            a, b = self.scores[c], other.scores[c]
            out.scores[c] = CategoryScores(a.iou + b.iou, a.l2 + b.l2, a.missing + b.missing)
        return out

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "tau": self.tau,
            "noise": self.noise,
            "seed": self.seed,
            "categories": {c: self.scores[c].summary() for c in CATEGORIES},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [f"# model={self.model} tau={self.tau} noise={self.noise} seed={self.seed}",
                 f"{'category':<10} {'frames':>6} {'mIoU':>8} {'semIoU':>8} {'mL2':>8} {'semL2':>8} {'missing':>7}"]
        for c in CATEGORIES:
            s = self.scores[c]
            lines.append(f"{c:<10} {s.frame_count:>6} {_fmt(s.mean_iou)} {_fmt(s.sem_iou)} "
                         f"{_fmt(s.mean_l2)} {_fmt(s.sem_l2)} {s.missing:>7}")
        return "\n".join(lines) + "\n"


def _fmt(x: float) -> str:
    return f"{'nan':>8}" if x is None or math.isnan(x) else f"{x:8.4f}"


def evaluate(
    predictions: Sequence[BoundingBox | None],
    truth: Sequence[BoundingBox],
    labels: Sequence[str],
    start_frame: int = 0,
    **meta,
) -> EvalReport:
    """Score per-frame target predictions against ground-truth target boxes.

    Frames before ``start_frame`` (first detection of the target) are ignored.
    A frame without a prediction scores IoU 0 and is counted as missing
    instead of contributing a distance.
    """
    if not len(predictions) == len(truth) == len(labels):
        raise ValueError(f"length mismatch: {len(predictions)} predictions, {len(truth)} truths, {len(labels)} labels")
    report = EvalReport(**meta)
    if start_frame is None:
        return report
    for t in range(max(start_frame, 0), len(truth)):
        label = labels[t]
        if label not in report.scores or label == "overall":
            raise ValueError(f"frame {t}: unknown task label {label!r}")
        pred = predictions[t]
        for cat in (label, "overall"):
            s = report.scores[cat]
            if pred is None or pred.is_absent:
                s.iou.append(0.0)
                s.missing += 1
            else:
                s.iou.append(iou(pred, truth[t]))
                s.l2.append(l2_center(pred, truth[t]))
    return report


def first_detection_frame(stream, target_label: str) -> int | None:
    """Index of the first frame whose detections include the target class."""
    for t, dets in enumerate(stream):
        if any(d.object_class.label == target_label for d in dets):
            return t
    return None


@dataclass
class Comparison:
    rows: list[dict]

    def to_json(self) -> str:
        return json.dumps({"rows": self.rows}, indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        cats = CATEGORIES
        out = []
        for metric, scale, title in (("iou", 100.0, "mIoU +-SEM"), ("l2", 1.0, "mL2 +-SEM")):
            out.append(f"{title:<20}" + "".join(f"{c.capitalize():>18}" for c in cats))
            for r in self.rows:
                cells = []
                for c in cats:
                    s = r["categories"][c]
                    m, e = s[f"mean_{metric}"], s[f"sem_{metric}"]
                    if m is None:
                        cells.append(f"{'-':>18}")
                    else:
                        err = "nan" if e is None else f"{e * scale:.2f}"
                        cells.append(f"{m * scale:>10.2f} +-{err:<5}")
                name = f"{r['model']}/{r['noise']}" if r["noise"] else r["model"]
                out.append((f"{name:<20}" + "".join(cells)).rstrip())
            out.append("")
        return "\n".join(out)


def compare(reports: Sequence[EvalReport | dict]) -> Comparison:
    """Tabulate reports keyed by model name and category, sorted by model then noise."""
    rows = []
    for r in reports:
        d = r.to_dict() if isinstance(r, EvalReport) else r
        rows.append({"model": d["model"], "noise": d.get("noise", ""), "tau": d.get("tau"),
                     "categories": d["categories"]})
    rows.sort(key=lambda r: (r["model"], r["noise"] or ""))
    return Comparison(rows)
