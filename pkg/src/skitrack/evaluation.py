"""Long-term tracking evaluation: confidence-swept precision, recall, F1.

For a threshold theta, precision is the mean overlap of predictions whose
confidence is at least theta, recall is the overlap total divided by the
number of target-present frames, and F1 combines the two. Frames whose
ground truth marks the target absent are excluded from both numerators and
denominators. The reported operating point theta* maximizes F1 over all
distinct observed confidences plus zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import DISCIPLINES
from .geometry import BBox, iou

DISCIPLINE_LABELS = {"AL": "Alpine", "JP": "Jumping", "FS": "Freestyle"}


@dataclass(frozen=True)
class FramePrediction:
    """Tracker output for one frame."""

    bbox: BBox
    confidence: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence outside [0, 1]: {self.confidence}")


@dataclass(frozen=True)
class SweepResult:
    """Curves over the swept thresholds plus the F1-optimal point."""

    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    best_f1: float
    best_precision: float
    best_recall: float
    best_threshold: float


def score_frames(
    predictions: Sequence[FramePrediction], gt: Sequence[BBox | None]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pair predictions with ground truth frame by frame, returning
    per-frame IoU, confidence, and target-present arrays."""
    if len(predictions) != len(gt):
        raise ValueError(
            f"{len(predictions)} predictions for {len(gt)} ground-truth frames"
        )
    n = len(gt)
    ious = np.zeros(n, dtype=np.float64)
    confs = np.zeros(n, dtype=np.float64)
    present = np.zeros(n, dtype=bool)
    for i, (pred, box) in enumerate(zip(predictions, gt)):
        confs[i] = pred.confidence
        if box is not None:
            present[i] = True
            ious[i] = iou(pred.bbox, box)
    return ious, confs, present


def sweep(ious: np.ndarray, confs: np.ndarray, present: np.ndarray) -> SweepResult:
    """Sweep F1 over distinct present-frame confidences plus zero.

    Precision sums accumulate from the most confident prediction downward.
    Runs in O(n log n); absent-frame entries are ignored entirely.
    """
    n_present = int(np.count_nonzero(present))
    if n_present == 0:
        raise ValueError("no target-present frames to evaluate")
    pi = np.asarray(ious, dtype=np.float64)[present]
    pc = np.asarray(confs, dtype=np.float64)[present]

    order = np.argsort(-pc, kind="stable")
    cum = np.cumsum(pi[order])
    c_desc = pc[order]

    thresholds = np.unique(pc)[::-1]
    if thresholds[-1] != 0.0:
        thresholds = np.concatenate([thresholds, [0.0]])
    # Number of predictions at or above each threshold; descending order
    # makes this a searchsorted over the negated confidences.
    ks = np.searchsorted(-c_desc, -thresholds, side="right")
    precision = cum[ks - 1] / ks
    recall = cum[ks - 1] / n_present
    denom = precision + recall
    f1 = np.zeros_like(denom)
    np.divide(2.0 * precision * recall, denom, out=f1, where=denom > 0.0)

    # Ties on F1 resolve to the smallest threshold, the most inclusive
    # operating point. Thresholds are sorted descending, so scan from the end.
    best_idx = len(f1) - 1 - int(np.argmax(f1[::-1]))
    return SweepResult(
        thresholds=thresholds,
        precision=precision,
        recall=recall,
        f1=f1,
        best_f1=float(f1[best_idx]),
        best_precision=float(precision[best_idx]),
        best_recall=float(recall[best_idx]),
        best_threshold=float(thresholds[best_idx]),
    )


def evaluate_sequence(
    predictions: Sequence[FramePrediction], gt: Sequence[BBox | None]
) -> SweepResult:
    ious, confs, present = score_frames(predictions, gt)
    return sweep(ious, confs, present)


@dataclass(frozen=True)
class SequenceEval:
    """Scored frames of one sequence, tagged for aggregation."""

    sequence_id: str
    discipline: str
    ious: np.ndarray
    confidences: np.ndarray
    present: np.ndarray

    def __post_init__(self) -> None:
        if self.discipline not in DISCIPLINES:
            raise ValueError(f"unknown discipline tag: {self.discipline!r}")


@dataclass(frozen=True)
class MetricRow:
    """F1/precision/recall at the F1-optimal threshold of one pool."""

    f1: float
    precision: float
    recall: float
    threshold: float
    frames: int


@dataclass(frozen=True)
class EvalReport:
    overall: MetricRow
    per_discipline: dict[str, MetricRow]
    per_sequence: dict[str, MetricRow]
    sequence_disciplines: dict[str, str]


def _pool(evals: Sequence[SequenceEval]) -> MetricRow:
    ious = np.concatenate([e.ious for e in evals])
    confs = np.concatenate([e.confidences for e in evals])
    present = np.concatenate([e.present for e in evals])
    result = sweep(ious, confs, present)
    return MetricRow(
        f1=result.best_f1,
        precision=result.best_precision,
        recall=result.best_recall,
        threshold=result.best_threshold,
        frames=int(present.shape[0]),
    )


def evaluate_frames(
    sequence_id: str,
    discipline: str,
    predictions: Sequence[FramePrediction],
    gt: Sequence[BBox | None],
) -> SequenceEval:
    ious, confs, present = score_frames(predictions, gt)
    return SequenceEval(
        sequence_id=sequence_id,
        discipline=discipline,
        ious=ious,
        confidences=confs,
        present=present,
    )


def aggregate_report(evals: Sequence[SequenceEval]) -> EvalReport:
    """Pool frames overall and per discipline; sequences keep their own sweep.

    Pooling concatenates frames before sweeping, so long sequences weigh
    more than short ones, matching frame-level metric definitions.
    """
    if not evals:
        raise ValueError("no sequences to aggregate")
    ids = [e.sequence_id for e in evals]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate sequence ids in evaluation input")

    per_sequence = {e.sequence_id: _pool([e]) for e in evals}
    by_discipline: dict[str, list[SequenceEval]] = {}
    for e in evals:
        by_discipline.setdefault(e.discipline, []).append(e)
    per_discipline = {
        tag: _pool(group) for tag, group in sorted(by_discipline.items())
    }
    return EvalReport(
        overall=_pool(evals),
        per_discipline=per_discipline,
        per_sequence=per_sequence,
        sequence_disciplines={e.sequence_id: e.discipline for e in evals},
    )


def _row_dict(row: MetricRow) -> dict:
    return {
        "f1": row.f1,
        "precision": row.precision,
        "recall": row.recall,
        "threshold": row.threshold,
        "frames": row.frames,
    }


def report_to_dict(report: EvalReport) -> dict:
    return {
        "overall": _row_dict(report.overall),
        "per_discipline": {
            tag: _row_dict(row) for tag, row in sorted(report.per_discipline.items())
        },
        "per_sequence": {
            seq: {
                "discipline": report.sequence_disciplines[seq],
                **_row_dict(row),
            }
            for seq, row in sorted(report.per_sequence.items())
        },
    }


def render_table(report: EvalReport) -> str:
    """Render the overall and per-discipline rows as a fixed-width table."""
    rows: list[tuple[str, MetricRow]] = [("All", report.overall)]
    for tag in sorted(report.per_discipline):
        rows.append((DISCIPLINE_LABELS[tag], report.per_discipline[tag]))

    lines = [f"{'Group':<12}{'Metric':<12}{'Value':>8}"]
    for name, row in rows:
        lines.append(f"{name:<12}{'F1-score':<12}{row.f1:>8.3f}")
        lines.append(f"{'':<12}{'Precision':<12}{row.precision:>8.3f}")
        lines.append(f"{'':<12}{'Recall':<12}{row.recall:>8.3f}")
    return "\n".join(lines) + "\n"
