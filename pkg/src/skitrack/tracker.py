"""Per-sequence tracking state machine.

Each frame is processed in a fixed order: search-region localization, an
optional wide-area reattempt when the result looks lost (low confidence or an
implausibly small box), then the dynamic-template update policy (periodic
refresh plus the incremental any-frame rule). The previous prediction always
advances to the latest result, which is exactly the drift the reattempt
exists to repair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any, Iterable

from .geometry import (
    BBox,
    CropSpec,
    DegenerateBoxError,
    FrameDims,
    clip_to_frame,
    intersection_area,
    local_to_global,
    make_crop,
)
from .localizer import Localizer, LocalizerError, LocalizerResult, LocalizerUnavailable

UPDATE_NONE = "none"
UPDATE_BASE = "base"
UPDATE_ITU = "itu"

DEFAULT_SEARCH_FACTOR = 5.0


@dataclass(frozen=True)
class TrackerConfig:
    """Inference hyperparameters; defaults are the tuned production values."""

    search_factor: float = DEFAULT_SEARCH_FACTOR
    search_size: int = 320
    template_factor: float = 2.0
    template_size: int = 128
    update_interval: int = 200
    conf_threshold: float = 0.50
    itu_conf_threshold: float = 0.55
    itu_min_gap: int = 100
    reattempt_conf_threshold: float = 0.14
    reattempt_area_threshold: float = 105.0
    reattempt_frame_coverage: float = 0.60
    reattempt_enabled: bool = True
    itu_enabled: bool = True

    def __post_init__(self) -> None:
        if not (0.0 <= self.reattempt_conf_threshold <= self.conf_threshold
                <= self.itu_conf_threshold <= 1.0):
            raise ValueError(
                "thresholds must satisfy 0 <= reattempt < base <= itu <= 1, got "
                f"{self.reattempt_conf_threshold}/{self.conf_threshold}/{self.itu_conf_threshold}"
            )
        if self.update_interval < 1 or self.itu_min_gap < 1:
            raise ValueError("update intervals must be >= 1")
        if not 0.0 < self.reattempt_frame_coverage <= 1.0:
            raise ValueError("reattempt_frame_coverage must be in (0, 1]")
        if self.search_factor <= 0 or self.template_factor <= 0:
            raise ValueError("crop factors must be > 0")
        if self.search_size < 1 or self.template_size < 1:
            raise ValueError("crop sizes must be >= 1")
        if self.reattempt_area_threshold < 0:
            raise ValueError("reattempt_area_threshold must be >= 0")


@dataclass(frozen=True)
class TemplateRef:
    """A template crop plus whatever the backend made of it."""

    source_frame: int
    crop: CropSpec
    payload: Any


@dataclass(frozen=True)
class TrackerState:
    initial_template: TemplateRef
    dynamic_template: TemplateRef
    prev_bbox: BBox
    last_update_frame: int
    frame_index: int
    config: TrackerConfig


@dataclass(frozen=True)
class StepOutput:
    """Per-frame telemetry: the clipped prediction plus what the step did."""

    bbox: BBox
    confidence: float
    reattempted: bool
    template_updated: bool
    update_cause: str


class SequenceError(RuntimeError):
    """A step failed mid-sequence; carries the failing frame index."""

    def __init__(self, frame_index: int, cause: Exception) -> None:
        super().__init__(f"tracking failed at frame {frame_index}: {cause}")
        self.frame_index = frame_index


def reattempt_factor(
    prev_bbox: BBox,
    frame: FrameDims,
    coverage: float,
    floor: float = DEFAULT_SEARCH_FACTOR,
) -> float:
    """Search factor for a recovery pass covering ``coverage`` of the frame.

    The target crop side is sqrt(coverage * W * H), capped at the shorter
    frame side so the square still fits, and the factor never drops below the
    normal search factor: a reattempt expands the search, it never shrinks it.
    """
    if prev_bbox.area <= 0:
        raise DegenerateBoxError("degenerate reference box")
    target_side = min(
        math.sqrt(coverage * frame.width * frame.height),
        float(min(frame.width, frame.height)),
    )
    return max(target_side / math.sqrt(prev_bbox.w * prev_bbox.h), floor)


def _crop_reference(bbox: BBox) -> BBox:
    # Crops need positive area; a fully-clipped prediction keeps its center
    # and gets minimal 1 px dims, leaving recovery to the reattempt trigger.
    if bbox.w >= 1.0 and bbox.h >= 1.0:
        return bbox
    w = max(bbox.w, 1.0)
    h = max(bbox.h, 1.0)
    return BBox(bbox.cx - w / 2, bbox.cy - h / 2, w, h)


def _call_backend(backend: Localizer, fn, *args) -> Any:
    try:
        return fn(*args)
    except LocalizerError:
        raise
    except Exception as exc:
        raise LocalizerUnavailable(f"localizer unavailable: {exc}") from exc


def init(
    frame: Any,
    dims: FrameDims,
    gt_bbox: BBox,
    config: TrackerConfig,
    backend: Localizer,
) -> TrackerState:
    """Initialize both templates from the ground-truth box of frame 0."""
    frame_box = BBox(0.0, 0.0, float(dims.width), float(dims.height))
    if gt_bbox.area <= 0 or intersection_area(gt_bbox, frame_box) <= 0:
        raise ValueError(f"invalid initialization box: {gt_bbox}")
    crop = make_crop(gt_bbox, config.template_factor, config.template_size, dims)
    payload = _call_backend(backend, backend.extract_template, crop, frame)
    return TrackerState(
        initial_template=TemplateRef(0, crop, payload),
        dynamic_template=TemplateRef(0, crop, payload),
        prev_bbox=gt_bbox,
        last_update_frame=0,
        frame_index=0,
        config=config,
    )


def step(
    state: TrackerState,
    frame: Any,
    dims: FrameDims,
    backend: Localizer,
) -> tuple[TrackerState, StepOutput]:
    """Track one frame; returns the advanced state and per-frame telemetry.

    On backend failure the exception propagates and the caller's state is
    untouched (states are immutable).
    """
    cfg = state.config
    t = state.frame_index + 1
    ref = _crop_reference(state.prev_bbox)

    crop = make_crop(ref, cfg.search_factor, cfg.search_size, dims)
    result: LocalizerResult = _call_backend(
        backend, backend.localize, state.initial_template, state.dynamic_template, crop, frame
    )
    bbox = clip_to_frame(local_to_global(result.bbox_local, crop), dims)
    conf = result.confidence

    reattempted = False
    if cfg.reattempt_enabled and (
        conf < cfg.reattempt_conf_threshold or bbox.area <= cfg.reattempt_area_threshold
    ):
        reattempted = True
        factor = reattempt_factor(ref, dims, cfg.reattempt_frame_coverage, cfg.search_factor)
        wide_crop = make_crop(ref, factor, cfg.search_size, dims)
        retry: LocalizerResult = _call_backend(
            backend, backend.localize, state.initial_template, state.dynamic_template, wide_crop, frame
        )
        # Accept the wide-area result only when it is more confident than the
        # first attempt, so a bad wide-crop detection cannot overwrite a good
        # small-box one.
        if retry.confidence > conf:
            bbox = clip_to_frame(local_to_global(retry.bbox_local, wide_crop), dims)
            conf = retry.confidence

    base_due = t % cfg.update_interval == 0 and conf > cfg.conf_threshold
    itu_due = (
        cfg.itu_enabled
        and conf > cfg.itu_conf_threshold
        and t - state.last_update_frame >= cfg.itu_min_gap
    )
    dynamic = state.dynamic_template
    last_update = state.last_update_frame
    if base_due or itu_due:
        template_crop = make_crop(
            _crop_reference(bbox), cfg.template_factor, cfg.template_size, dims
        )
        payload = _call_backend(backend, backend.extract_template, template_crop, frame)
        dynamic = TemplateRef(t, template_crop, payload)
        last_update = t

    new_state = replace(
        state,
        dynamic_template=dynamic,
        prev_bbox=bbox,
        last_update_frame=last_update,
        frame_index=t,
    )
    output = StepOutput(
        bbox=bbox,
        confidence=float(conf),
        reattempted=bool(reattempted),
        template_updated=bool(base_due or itu_due),
        update_cause=UPDATE_BASE if base_due else (UPDATE_ITU if itu_due else UPDATE_NONE),
    )
    return new_state, output


def run_sequence(
    frames: Iterable[Any],
    dims: FrameDims,
    gt_first: BBox,
    config: TrackerConfig,
    backend: Localizer,
) -> list[StepOutput]:
    """Init on the first frame, step through the rest.

    Emits one StepOutput per frame from index 1; deterministic given a
    deterministic backend.
    """
    it = iter(frames)
    try:
        first = next(it)
    except StopIteration:
        raise ValueError("empty frame source") from None
    state = init(first, dims, gt_first, config, backend)
    outputs: list[StepOutput] = []
    for index, frame in enumerate(it, start=1):
        try:
            state, out = step(state, frame, dims, backend)
        except Exception as exc:
            raise SequenceError(index, exc) from exc
        outputs.append(out)
    return outputs
