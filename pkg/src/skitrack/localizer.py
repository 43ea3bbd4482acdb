"""Pluggable target localization: the seam where a model (or a script) sits.

A localizer receives two templates plus a search crop and answers with a box
in crop-local coordinates and a confidence. The scripted backend here answers
from a hidden ground-truth world and never touches pixels; the wire-protocol
client for an external model process lives in :mod:`skitrack.wire`.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Sequence

import numpy as np

from .geometry import BBox, CropSpec, global_to_local, intersection_area

if TYPE_CHECKING:
    from .tracker import TemplateRef


class LocalizerError(RuntimeError):
    """Base class for localization backend failures."""


class LocalizerUnavailable(LocalizerError):
    """The backend cannot be reached (process down, timeout, dead pipe)."""


class ProtocolViolation(LocalizerError):
    """The backend answered, but the reply breaks the wire contract."""


@dataclass(frozen=True)
class LocalizerResult:
    """A predicted box in search-crop output coordinates plus a confidence.

    The box may exceed crop bounds; clipping is the caller's job.
    """

    bbox_local: BBox
    confidence: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


class Localizer(ABC):
    """Backend interface used by the tracking state machine."""

    @abstractmethod
    def extract_template(self, crop: CropSpec, frame: Any) -> Any:
        """Materialize an opaque template payload for a crop of a frame."""

    @abstractmethod
    def localize(
        self,
        initial_template: "TemplateRef",
        dynamic_template: "TemplateRef",
        search_crop: CropSpec,
        frame: Any,
    ) -> LocalizerResult:
        """Locate the target within the search crop."""


@dataclass(frozen=True)
class ScriptedWorld:
    """Hidden per-frame ground truth driving the deterministic test backend.

    ``gt[i]`` is the true target box on frame ``i``; ``visible[i]`` is False
    inside occlusion windows. ``sigma_rel`` scales localization noise relative
    to target size; identical (world, crop) inputs always produce identical
    backend outputs.
    """

    gt: Sequence[BBox]
    visible: Sequence[bool]
    sigma_rel: float
    seed: int

    def __post_init__(self) -> None:
        if len(self.gt) != len(self.visible):
            raise ValueError("gt and visibility schedules differ in length")
        if self.sigma_rel < 0:
            raise ValueError("sigma_rel must be >= 0")


def _f64_bits(value: float) -> int:
    return int(np.float64(value).view(np.uint64))


class ScriptedLocalizer(Localizer):
    """Deterministic pixel-free backend answering from a ScriptedWorld.

    Frame handles are frame indices. When the true target center lies inside
    the search crop and the target is visible, the answer is the ground-truth
    box (in crop coordinates) plus seeded Gaussian noise, with confidence
    ``base_conf + containment_gain * containment`` where containment is the
    fraction of ground-truth area inside the crop. Otherwise the answer is a
    junk box with confidence drawn uniformly below ``low_conf_bound``.

    The default constants are chosen so the found/lost cases fall cleanly on
    opposite sides of the tracker's confidence thresholds; all of them are
    harness parameters, not claims about any real model.
    """

    def __init__(
        self,
        world: ScriptedWorld,
        base_conf: float = 0.6,
        containment_gain: float = 0.35,
        low_conf_bound: float = 0.14,
    ) -> None:
        if not 0 <= base_conf <= 1 or not 0 <= base_conf + containment_gain <= 1:
            raise ValueError("confidence model must stay within [0, 1]")
        if not 0 < low_conf_bound <= 1:
            raise ValueError("low_conf_bound must be in (0, 1]")
        self.world = world
        self.base_conf = base_conf
        self.containment_gain = containment_gain
        self.low_conf_bound = low_conf_bound

    def extract_template(self, crop: CropSpec, frame: Any) -> Any:
        return None  # templates carry no information for a scripted world

    def localize(
        self,
        initial_template: "TemplateRef",
        dynamic_template: "TemplateRef",
        search_crop: CropSpec,
        frame: Any,
    ) -> LocalizerResult:
        idx = int(frame)
        if not 0 <= idx < len(self.world.gt):
            raise LocalizerUnavailable(f"frame index {idx} outside scripted world")
        gt = self.world.gt[idx]
        rng = self._call_rng(idx, search_crop)
        crop_box = search_crop.as_bbox()
        center_inside = (
            crop_box.x <= gt.cx <= crop_box.x2 and crop_box.y <= gt.cy <= crop_box.y2
        )
        if center_inside and self.world.visible[idx]:
            return self._found(gt, search_crop, rng)
        return self._lost(search_crop, rng)

    def _found(self, gt: BBox, crop: CropSpec, rng: np.random.Generator) -> LocalizerResult:
        containment = intersection_area(gt, crop.as_bbox()) / gt.area
        conf = self.base_conf + self.containment_gain * containment
        local = global_to_local(gt, crop)
        if self.world.sigma_rel > 0:
            sigma = self.world.sigma_rel * math.sqrt(local.w * local.h)
            dx, dy, dw, dh = rng.normal(0.0, sigma, size=4)
            local = BBox(local.x + dx, local.y + dy, max(local.w + dw, 0.0), max(local.h + dh, 0.0))
        return LocalizerResult(local, min(conf, 1.0))

    def _lost(self, crop: CropSpec, rng: np.random.Generator) -> LocalizerResult:
        conf = float(rng.uniform(0.0, self.low_conf_bound))
        out = float(crop.out_size)
        hi = max(2.0, 0.05 * out)
        w = float(rng.uniform(1.0, hi))
        h = float(rng.uniform(1.0, hi))
        x = float(rng.uniform(0.0, max(out - w, 0.0)))
        y = float(rng.uniform(0.0, max(out - h, 0.0)))
        return LocalizerResult(BBox(x, y, w, h), conf)

    def _call_rng(self, frame_idx: int, crop: CropSpec) -> np.random.Generator:
        # Keyed per (world, frame, crop) so repeated identical calls agree
        # exactly and a reattempt over a different crop redraws fresh noise.
        return np.random.default_rng(
            [
                self.world.seed & 0x7FFFFFFFFFFFFFFF,
                frame_idx,
                _f64_bits(crop.center_x),
                _f64_bits(crop.center_y),
                _f64_bits(crop.side),
                crop.out_size,
            ]
        )
