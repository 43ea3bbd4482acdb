"""Independent reference implementations used to cross-check the package.

Everything here is written straight from the definitions with plain loops
and no reuse of the production control flow, so agreement is meaningful.
"""

from __future__ import annotations

import math

from skitrack.geometry import BBox, CropSpec, FrameDims
from skitrack.localizer import Localizer
from skitrack.tracker import StepOutput, TemplateRef, TrackerConfig

MIN_SIDE = 2.0


def straight_line_tracker(
    frames,
    dims: FrameDims,
    gt_first: BBox,
    config: TrackerConfig,
    backend: Localizer,
) -> list[StepOutput]:
    """Unmodified pipeline: search, localize, clip, periodic template update.

    No reattempt, no incremental update. The reference box for a crop keeps
    its center and floors its dims at 1 px, the same degenerate-box rule the
    pipeline documents.
    """
    frames = list(frames)

    def reference(box: BBox) -> BBox:
        if box.w >= 1.0 and box.h >= 1.0:
            return box
        w = max(box.w, 1.0)
        h = max(box.h, 1.0)
        return BBox(box.cx - w / 2, box.cy - h / 2, w, h)

    def square_crop(box: BBox, factor: float, out_size: int) -> CropSpec:
        side = max(factor * math.sqrt(box.w * box.h), MIN_SIDE)
        return CropSpec(box.x + box.w / 2, box.y + box.h / 2, side, out_size, dims)

    def to_global(local: BBox, crop: CropSpec) -> BBox:
        scale = crop.out_size / crop.side
        ox = crop.center_x - crop.side / 2
        oy = crop.center_y - crop.side / 2
        return BBox(ox + local.x / scale, oy + local.y / scale, local.w / scale, local.h / scale)

    def clip(box: BBox) -> BBox:
        x1 = min(max(box.x, 0.0), float(dims.width))
        y1 = min(max(box.y, 0.0), float(dims.height))
        x2 = min(max(box.x2, 0.0), float(dims.width))
        y2 = min(max(box.y2, 0.0), float(dims.height))
        return BBox(x1, y1, x2 - x1, y2 - y1)

    tcrop = square_crop(gt_first, config.template_factor, config.template_size)
    payload = backend.extract_template(tcrop, frames[0])
    init_t = TemplateRef(0, tcrop, payload)
    dyn_t = TemplateRef(0, tcrop, payload)

    prev = gt_first
    outputs: list[StepOutput] = []
    for t in range(1, len(frames)):
        crop = square_crop(reference(prev), config.search_factor, config.search_size)
        result = backend.localize(init_t, dyn_t, crop, frames[t])
        bbox = clip(to_global(result.bbox_local, crop))
        conf = result.confidence

        updated = t % config.update_interval == 0 and conf > config.conf_threshold
        if updated:
            new_crop = square_crop(
                reference(bbox), config.template_factor, config.template_size
            )
            dyn_t = TemplateRef(t, new_crop, backend.extract_template(new_crop, frames[t]))

        prev = bbox
        outputs.append(
            StepOutput(
                bbox=bbox,
                confidence=conf,
                reattempted=False,
                template_updated=updated,
                update_cause="base" if updated else "none",
            )
        )
    return outputs


def brute_force_sweep(ious, confs, present) -> tuple[float, float]:
    """Best F1 and its threshold by exhaustive enumeration.

    Thresholds are every observed confidence plus zero. Per threshold, the
    precision numerator accumulates from the most confident prediction
    downward, the same summation order the sweep definition uses, so
    agreement is exact rather than within float noise.
    """
    n = len(ious)
    present_idx = [i for i in range(n) if present[i]]
    if not present_idx:
        raise ValueError("no target-present frames")
    thresholds = sorted(set(list(confs) + [0.0]))
    best_f1 = -1.0
    best_theta = 0.0
    for theta in thresholds:
        chosen = [i for i in present_idx if confs[i] >= theta]
        chosen.sort(key=lambda i: -confs[i])
        total = 0.0
        for i in chosen:
            total += ious[i]
        precision = total / len(chosen) if chosen else 0.0
        recall = total / len(present_idx)
        denom = precision + recall
        f1 = 2.0 * precision * recall / denom if denom > 0 else 0.0
        # Strict > keeps the smallest threshold on ties, scanning ascending.
        if f1 > best_f1:
            best_f1 = f1
            best_theta = theta
    return best_f1, best_theta


def f1_at_threshold(ious, confs, present, theta: float) -> float:
    """F1 for one fixed threshold, by the same sequential summation order."""
    present_idx = [i for i in range(len(ious)) if present[i]]
    chosen = [i for i in present_idx if confs[i] >= theta]
    chosen.sort(key=lambda i: -confs[i])
    total = 0.0
    for i in chosen:
        total += ious[i]
    precision = total / len(chosen) if chosen else 0.0
    recall = total / len(present_idx) if present_idx else 0.0
    denom = precision + recall
    return 2.0 * precision * recall / denom if denom > 0 else 0.0


def echo_track_oracle(
    gt_first: BBox, dims: FrameDims, n_frames: int, config: TrackerConfig
) -> list[BBox]:
    """Predicted boxes when every reply is the echo constant.

    The echo reply is a box centered on the search crop with sides a quarter
    of the crop side; each frame's crop is centered on the previous clipped
    prediction. Plain float arithmetic, no tracker code.
    """
    boxes = []
    prev = gt_first
    for _ in range(1, n_frames):
        w = max(prev.w, 1.0)
        h = max(prev.h, 1.0)
        cx = prev.x + prev.w / 2
        cy = prev.y + prev.h / 2
        side = max(config.search_factor * math.sqrt(w * h), MIN_SIDE)
        bw = 0.25 * side
        x1 = min(max(cx - bw / 2, 0.0), float(dims.width))
        y1 = min(max(cy - bw / 2, 0.0), float(dims.height))
        x2 = min(max(cx + bw / 2, 0.0), float(dims.width))
        y2 = min(max(cy + bw / 2, 0.0), float(dims.height))
        prev = BBox(x1, y1, x2 - x1, y2 - y1)
        boxes.append(prev)
    return boxes
