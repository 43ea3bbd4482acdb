"""Sequence records, dataset manifests, and discipline-balanced sampling.

Ground-truth files hold one ``x,y,w,h`` line per frame; a line of
``NaN,NaN,NaN,NaN`` marks a frame where the target is absent. A manifest is
a JSON file listing the sequences of a dataset together with their
discipline tags and ground-truth paths.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .geometry import BBox, FrameDims

DISCIPLINES = ("AL", "JP", "FS")

DEFAULT_SPLIT_FRACTIONS = (0.54, 0.06, 0.40)


@dataclass(frozen=True)
class SequenceRecord:
    """One annotated sequence: identity, discipline, geometry, ground truth."""

    sequence_id: str
    discipline: str
    frame_dims: FrameDims
    gt: list[BBox | None] = field(compare=False)
    frame_source: str = ""

    def __post_init__(self) -> None:
        if not self.sequence_id:
            raise ValueError("sequence_id must not be empty")
        if self.discipline not in DISCIPLINES:
            raise ValueError(f"unknown discipline tag: {self.discipline!r}")
        if not self.gt:
            raise ValueError(f"{self.sequence_id}: ground truth must not be empty")

    @property
    def frame_count(self) -> int:
        return len(self.gt)


def compute_sampling_weights(frame_counts: Mapping[str, int]) -> dict[str, float]:
    """Inverse-frequency weights: w_i = max(counts) / counts[i].

    The largest discipline gets weight 1.0 and smaller ones proportionally
    more, so a weighted sampler draws disciplines at equal expected rates.
    """
    if not frame_counts:
        raise ValueError("no disciplines to weight")
    for name, count in frame_counts.items():
        if count <= 0:
            raise ValueError(f"discipline {name!r} has no frames")
    top = max(frame_counts.values())
    return {name: top / count for name, count in frame_counts.items()}


def frame_counts_by_discipline(records: Sequence[SequenceRecord]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for rec in records:
        counts[rec.discipline] = counts.get(rec.discipline, 0) + rec.frame_count
    return counts


def _largest_remainder(n: int, fractions: Sequence[float]) -> list[int]:
    """Apportion n items to fractions, off by at most one item anywhere."""
    exact = [n * f for f in fractions]
    counts = [math.floor(v) for v in exact]
    short = n - sum(counts)
    order = sorted(
        range(len(fractions)), key=lambda i: (exact[i] - counts[i], -i), reverse=True
    )
    for i in order[:short]:
        counts[i] += 1
    return counts


def split_dataset(
    records: Sequence[SequenceRecord],
    fractions: Sequence[float] = DEFAULT_SPLIT_FRACTIONS,
    seed: int = 0,
) -> tuple[list[SequenceRecord], ...]:
    """Split whole sequences into partitions, stratified by discipline.

    Every discipline present is represented in each partition with a
    nonzero fraction, and within each discipline, partition shares match the
    requested fractions to within one sequence. Raises ValueError if some
    discipline has fewer sequences than there are nonzero fractions.
    """
    if not records:
        raise ValueError("no sequences to split")
    if any(f < 0 for f in fractions):
        raise ValueError("fractions must be >= 0")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    nonzero = sum(1 for f in fractions if f > 0)

    groups: dict[str, list[SequenceRecord]] = {}
    for rec in records:
        groups.setdefault(rec.discipline, []).append(rec)

    rng = np.random.default_rng(seed)
    parts: tuple[list[SequenceRecord], ...] = tuple([] for _ in fractions)
    for discipline in sorted(groups):
        group = groups[discipline]
        if len(group) < nonzero:
            raise ValueError(
                f"discipline {discipline!r} has {len(group)} sequences, "
                f"fewer than the {nonzero} nonzero partitions"
            )
        order = rng.permutation(len(group))
        shuffled = [group[i] for i in order]
        counts = _largest_remainder(len(group), fractions)
        # Guarantee representation: move one sequence from the largest
        # allocation into any nonzero partition that came up empty.
        for i, f in enumerate(fractions):
            if f > 0 and counts[i] == 0:
                donor = max(range(len(counts)), key=lambda j: counts[j])
                counts[donor] -= 1
                counts[i] += 1
        start = 0
        for part, count in zip(parts, counts):
            part.extend(shuffled[start : start + count])
            start += count
    return parts


def weighted_sampler(
    records: Sequence[SequenceRecord],
    weights: Mapping[str, float],
    batch_size: int,
    seed: int,
) -> Iterator[list[str]]:
    """Yield endless batches of sequence ids, drawn with replacement with
    probability proportional to each sequence's discipline weight."""
    if not records:
        raise ValueError("no sequences to sample")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    try:
        raw = np.array([weights[rec.discipline] for rec in records], dtype=np.float64)
    except KeyError as exc:
        raise ValueError(f"missing weight for discipline {exc.args[0]!r}") from exc
    if np.any(raw <= 0) or not np.all(np.isfinite(raw)):
        raise ValueError("weights must be positive and finite")
    prob = raw / raw.sum()
    ids = [rec.sequence_id for rec in records]
    rng = np.random.default_rng(seed)
    while True:
        picks = rng.choice(len(ids), size=batch_size, replace=True, p=prob)
        yield [ids[i] for i in picks]


def load_groundtruth(path: str | Path) -> list[BBox | None]:
    """Parse a ground-truth file; NaN rows mark target-absent frames."""
    path = Path(path)
    boxes: list[BBox | None] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            if all(math.isnan(v) for v in vals):
                boxes.append(None)
                continue
            if any(math.isnan(v) for v in vals):
                raise ValueError(f"{path}:{lineno}: mixed NaN and numeric fields")
            try:
                boxes.append(BBox(*vals))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return boxes


def save_groundtruth(path: str | Path, boxes: Sequence[BBox | None]) -> None:
    lines = []
    for box in boxes:
        if box is None:
            lines.append("NaN,NaN,NaN,NaN")
        else:
            # float() strips numpy scalars; repr keeps full precision
            lines.append(",".join(repr(float(v)) for v in box.as_tuple()))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_manifest(path: str | Path, records: Sequence[SequenceRecord], gt_dir: str = "gt") -> None:
    """Write a manifest plus one ground-truth file per sequence.

    Ground-truth files land in ``gt_dir`` next to the manifest and are
    referenced by relative path.
    """
    path = Path(path)
    gt_root = path.parent / gt_dir
    gt_root.mkdir(parents=True, exist_ok=True)
    entries = []
    for rec in records:
        gt_rel = f"{gt_dir}/{rec.sequence_id}.txt"
        save_groundtruth(path.parent / gt_rel, rec.gt)
        entries.append(
            {
                "id": rec.sequence_id,
                "discipline": rec.discipline,
                "frames": rec.frame_count,
                "width": rec.frame_dims.width,
                "height": rec.frame_dims.height,
                "gt": gt_rel,
                "source": rec.frame_source,
            }
        )
    doc = {"sequences": entries}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_manifest(path: str | Path) -> list[SequenceRecord]:
    """Read a manifest and its ground-truth files back into records."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"{path}: unreadable manifest: {exc}") from exc
    entries = doc.get("sequences") if isinstance(doc, dict) else None
    if not isinstance(entries, list):
        raise ValueError(f"{path}: manifest must hold a 'sequences' list")
    records = []
    seen: set[str] = set()
    for entry in entries:
        try:
            seq_id = entry["id"]
            gt = load_groundtruth(path.parent / entry["gt"])
            if len(gt) != entry["frames"]:
                raise ValueError(
                    f"{seq_id}: manifest says {entry['frames']} frames, "
                    f"ground truth has {len(gt)}"
                )
            record = SequenceRecord(
                sequence_id=seq_id,
                discipline=entry["discipline"],
                frame_dims=FrameDims(entry["width"], entry["height"]),
                gt=gt,
                frame_source=entry.get("source", ""),
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"{path}: malformed manifest entry: {exc}") from exc
        if seq_id in seen:
            raise ValueError(f"{path}: duplicate sequence id {seq_id!r}")
        seen.add(seq_id)
        records.append(record)
    return records
