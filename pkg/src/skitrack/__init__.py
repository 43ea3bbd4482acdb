"""Model-agnostic single-object tracking pipeline with lost-target recovery,
incremental template refresh, dataset balancing, and long-term evaluation."""

from .geometry import BBox, CropSpec, DegenerateBoxError, FrameDims, iou, make_crop
from .localizer import (
    Localizer,
    LocalizerError,
    LocalizerResult,
    LocalizerUnavailable,
    ProtocolViolation,
    ScriptedLocalizer,
    ScriptedWorld,
)
from .tracker import (
    SequenceError,
    StepOutput,
    TemplateRef,
    TrackerConfig,
    TrackerState,
    init,
    run_sequence,
    step,
)
from .wire import ExternalLocalizer

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "CropSpec",
    "DegenerateBoxError",
    "ExternalLocalizer",
    "FrameDims",
    "Localizer",
    "LocalizerError",
    "LocalizerResult",
    "LocalizerUnavailable",
    "ProtocolViolation",
    "ScriptedLocalizer",
    "ScriptedWorld",
    "SequenceError",
    "StepOutput",
    "TemplateRef",
    "TrackerConfig",
    "TrackerState",
    "init",
    "run_sequence",
    "step",
    "iou",
    "make_crop",
    "__version__",
]
