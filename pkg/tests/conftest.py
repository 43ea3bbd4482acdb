"""Shared test helpers: a fully programmable stub localizer."""

from __future__ import annotations

from skitrack.geometry import BBox, global_to_local
from skitrack.localizer import Localizer, LocalizerResult


class FrameTraceBackend(Localizer):
    """Stub backend driven by per-frame confidence and box schedules.

    Frame handles are integer indices. ``confs[t]`` is the confidence for
    the first localize call on frame t; ``retry_confs[t]`` (when given)
    answers the second call on the same frame. Boxes are global; they are
    mapped into whatever crop the tracker asks about, so the stub never
    constrains the tracker's crop choices. Every call is recorded.
    """

    def __init__(self, confs, boxes=None, retry_confs=None, retry_boxes=None,
                 default_box=BBox(600.0, 300.0, 40.0, 40.0)):
        self.confs = list(confs)
        self.boxes = list(boxes) if boxes is not None else None
        self.retry_confs = dict(retry_confs or {})
        self.retry_boxes = dict(retry_boxes or {})
        self.default_box = default_box
        self.calls: list[tuple] = []
        self._localize_count: dict[int, int] = {}

    def _box_for(self, frame: int, is_retry: bool) -> BBox:
        if is_retry and frame in self.retry_boxes:
            return self.retry_boxes[frame]
        if self.boxes is not None:
            return self.boxes[frame]
        return self.default_box

    def extract_template(self, crop, frame):
        self.calls.append(("extract", frame, crop))
        return f"tpl@{frame}"

    def localize(self, initial_template, dynamic_template, search_crop, frame):
        nth = self._localize_count.get(frame, 0)
        self._localize_count[frame] = nth + 1
        self.calls.append(("localize", frame, search_crop))
        is_retry = nth > 0
        if is_retry and frame in self.retry_confs:
            conf = self.retry_confs[frame]
        else:
            conf = self.confs[frame]
        box = self._box_for(frame, is_retry)
        return LocalizerResult(global_to_local(box, search_crop), conf)

    def localize_calls(self, frame: int) -> int:
        return self._localize_count.get(frame, 0)

    def crops_for(self, frame: int, kind: str = "localize"):
        return [c for k, f, c in self.calls if k == kind and f == frame]
