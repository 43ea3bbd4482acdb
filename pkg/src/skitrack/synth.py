"""Synthetic scenario scripts and world generation for tracker stress tests.

A scenario script is a compact, JSON-serializable description of one
synthetic sequence: frame geometry, a piecewise-linear motion path for the
target, and a list of timed events (camera switches, occlusions, scale
jumps). ``generate_world`` expands a script into dense per-frame ground
truth plus visibility flags, ready to drive a scripted localizer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import SequenceRecord
from .geometry import BBox, FrameDims
from .localizer import ScriptedWorld

EVENT_KINDS = ("camera_switch", "occlusion", "scale_jump")

DEFAULT_FRAME_DIMS = FrameDims(1280, 720)
DEFAULT_LENGTH = 300
DEFAULT_SIGMA_REL = 0.01

SUITE_FAMILIES = ("cs", "occ", "sc", "mix")

# Discipline tags assigned to generated scenarios so per-discipline report
# rows stay meaningful on synthetic runs.
FAMILY_DISCIPLINE = {"cs": "AL", "occ": "FS", "sc": "JP", "mix": "AL"}


class InfeasibleScriptError(ValueError):
    """Raised when a script would push the target fully outside the frame."""


@dataclass(frozen=True)
class Event:
    """One timed perturbation of the sequence.

    ``camera_switch`` displaces the target center from ``frame`` onward by
    ``(dx_mult, dy_mult)`` measured in multiples of sqrt(target area) at the
    switch frame. ``occlusion`` marks frames [frame, end_frame] as not
    visible. ``scale_jump`` multiplies target area by ``scale ** 2`` and
    skews the aspect ratio by ``aspect`` from ``frame`` onward.
    """

    kind: str
    frame: int
    end_frame: int | None = None
    dx_mult: float = 0.0
    dy_mult: float = 0.0
    scale: float = 1.0
    aspect: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind: {self.kind!r}")
        if self.frame < 1:
            raise ValueError("event frame must be >= 1")
        if self.kind == "occlusion":
            if self.end_frame is None or self.end_frame < self.frame:
                raise ValueError("occlusion requires end_frame >= frame")
        if self.kind == "scale_jump" and (self.scale <= 0 or self.aspect <= 0):
            raise ValueError("scale_jump multipliers must be positive")


@dataclass(frozen=True)
class MotionSpec:
    """Piecewise-linear target motion.

    ``waypoints`` holds (frame, cx, cy) triples and ``sizes`` holds
    (frame, w, h) triples; both are interpolated linearly per frame and held
    constant beyond their last entry. Frames must be non-negative and
    strictly increasing within each list.
    """

    waypoints: tuple[tuple[float, float, float], ...]
    sizes: tuple[tuple[float, float, float], ...]

    def __post_init__(self) -> None:
        for name, rows in (("waypoints", self.waypoints), ("sizes", self.sizes)):
            if not rows:
                raise ValueError(f"{name} must not be empty")
            frames = [row[0] for row in rows]
            if frames[0] < 0:
                raise ValueError(f"{name} frames must be >= 0")
            if any(b <= a for a, b in zip(frames, frames[1:])):
                raise ValueError(f"{name} frames must be strictly increasing")
        if any(w <= 0 or h <= 0 for _, w, h in self.sizes):
            raise ValueError("target sizes must be positive")

    def sample(self, length: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Return per-frame (cx, cy, w, h) arrays of shape (length,)."""
        t = np.arange(length, dtype=np.float64)
        wf = np.array([row[0] for row in self.waypoints], dtype=np.float64)
        cx = np.interp(t, wf, [row[1] for row in self.waypoints])
        cy = np.interp(t, wf, [row[2] for row in self.waypoints])
        sf = np.array([row[0] for row in self.sizes], dtype=np.float64)
        w = np.interp(t, sf, [row[1] for row in self.sizes])
        h = np.interp(t, sf, [row[2] for row in self.sizes])
        return cx, cy, w, h


@dataclass(frozen=True)
class ScenarioScript:
    """Complete description of one synthetic sequence."""

    scenario_id: str
    frame_dims: FrameDims
    length: int
    motion: MotionSpec
    events: tuple[Event, ...] = ()
    sigma_rel: float = DEFAULT_SIGMA_REL
    seed: int = 0
    discipline: str = "AL"

    def __post_init__(self) -> None:
        if self.length < 2:
            raise ValueError("scripts need at least two frames")
        if self.sigma_rel < 0:
            raise ValueError("sigma_rel must be >= 0")
        frames = [ev.frame for ev in self.events]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError("event frames must be strictly increasing")
        for ev in self.events:
            last = ev.end_frame if ev.kind == "occlusion" else ev.frame
            if last >= self.length:
                raise ValueError("event extends past the end of the script")


def generate_world(script: ScenarioScript) -> tuple[ScriptedWorld, SequenceRecord]:
    """Expand a script into a scripted world plus its sequence record.

    Raises InfeasibleScriptError if any frame leaves the target without
    overlap with the image bounds.
    """
    n = script.length
    dims = script.frame_dims
    cx, cy, w, h = script.motion.sample(n)
    visible = np.ones(n, dtype=bool)

    # Events are strictly increasing in frame, so applying them in order is
    # chronological; sqrt-area displacements see all earlier scale jumps.
    for ev in script.events:
        if ev.kind == "scale_jump":
            w[ev.frame :] *= ev.scale * ev.aspect
            h[ev.frame :] *= ev.scale / ev.aspect
        elif ev.kind == "camera_switch":
            unit = math.sqrt(w[ev.frame] * h[ev.frame])
            cx[ev.frame :] += ev.dx_mult * unit
            cy[ev.frame :] += ev.dy_mult * unit
        else:
            visible[ev.frame : ev.end_frame + 1] = False

    gt: list[BBox | None] = []
    for i in range(n):
        box = BBox(cx[i] - w[i] / 2.0, cy[i] - h[i] / 2.0, w[i], h[i])
        if (
            box.x2 <= 0.0
            or box.y2 <= 0.0
            or box.x >= dims.width
            or box.y >= dims.height
        ):
            raise InfeasibleScriptError(
                f"{script.scenario_id}: target leaves the frame at index {i}"
            )
        gt.append(box)

    world = ScriptedWorld(
        gt=tuple(gt),
        visible=tuple(bool(v) for v in visible),
        sigma_rel=script.sigma_rel,
        seed=script.seed,
    )
    record = SequenceRecord(
        sequence_id=script.scenario_id,
        discipline=script.discipline,
        frame_dims=dims,
        gt=gt,
        frame_source=f"synth:{script.scenario_id}",
    )
    return world, record


def cs1_script(seed: int = 20_000, sigma_rel: float = DEFAULT_SIGMA_REL) -> ScenarioScript:
    """Canonical camera-switch fixture: a 40x40 target moving linearly on a
    1280x720 frame, displaced by 8 sqrt-area units (320 px) at frame 150."""
    return ScenarioScript(
        scenario_id="CS-1",
        frame_dims=DEFAULT_FRAME_DIMS,
        length=DEFAULT_LENGTH,
        motion=MotionSpec(
            waypoints=((0.0, 200.0, 300.0), (299.0, 499.0, 375.0)),
            sizes=((0.0, 40.0, 40.0),),
        ),
        events=(Event(kind="camera_switch", frame=150, dx_mult=8.0),),
        sigma_rel=sigma_rel,
        seed=seed,
        discipline="AL",
    )


def _linear_motion(rng: np.random.Generator) -> tuple[MotionSpec, float]:
    """Draw a gentle linear path and a square-root target size.

    Positions are bounded so that any suite event (jump up to 450 px along
    +x, scale growth up to x4) keeps the target inside a 1280x720 frame.
    """
    unit = float(rng.uniform(30.0, 45.0))
    aspect = float(rng.uniform(0.8, 1.25))
    w0 = unit * aspect
    h0 = unit / aspect
    x0 = float(rng.uniform(150.0, 250.0))
    y0 = float(rng.uniform(250.0, 400.0))
    vx = float(rng.uniform(0.3, 1.2))
    vy = float(rng.uniform(-0.5, 0.5))
    last = DEFAULT_LENGTH - 1
    motion = MotionSpec(
        waypoints=((0.0, x0, y0), (float(last), x0 + vx * last, y0 + vy * last)),
        sizes=((0.0, w0, h0),),
    )
    return motion, unit


def _suite_seed(seed: int, family: str, index: int) -> int:
    mix = np.random.default_rng([seed, SUITE_FAMILIES.index(family), index])
    return int(mix.integers(0, 2**31 - 1))


def scenario_suite(
    seed: int,
    variants_per_family: int = 100,
    families: tuple[str, ...] = SUITE_FAMILIES,
    cs_multiple_range: tuple[float, float] = (3.0, 10.0),
) -> list[ScenarioScript]:
    """Generate the deterministic benchmark suite for one master seed.

    Families: ``cs`` (camera switches, displacement drawn from
    ``cs_multiple_range`` in sqrt-area multiples along +x), ``occ``
    (10 to 60 frame occlusion windows), ``sc`` (scale jumps x0.25 to x4),
    ``mix`` (one of each, mild). Scripts are feasible by construction.
    """
    unknown = [f for f in families if f not in SUITE_FAMILIES]
    if unknown:
        raise ValueError(f"unknown scenario families: {unknown}")
    if variants_per_family < 1:
        raise ValueError("variants_per_family must be >= 1")

    scripts: list[ScenarioScript] = []
    for family in families:
        for i in range(1, variants_per_family + 1):
            rng = np.random.default_rng([seed, SUITE_FAMILIES.index(family), i])
            motion, unit = _linear_motion(rng)
            events: list[Event] = []
            if family == "cs":
                lo, hi = cs_multiple_range
                events.append(
                    Event(
                        kind="camera_switch",
                        frame=int(rng.integers(120, 181)),
                        dx_mult=float(rng.uniform(lo, hi)),
                    )
                )
            elif family == "occ":
                start = int(rng.integers(100, 181))
                events.append(
                    Event(
                        kind="occlusion",
                        frame=start,
                        end_frame=start + int(rng.integers(10, 61)),
                    )
                )
            elif family == "sc":
                events.append(
                    Event(
                        kind="scale_jump",
                        frame=int(rng.integers(100, 201)),
                        scale=float(np.exp(rng.uniform(math.log(0.25), math.log(4.0)))),
                        aspect=float(np.exp(rng.uniform(math.log(0.7), math.log(1.4)))),
                    )
                )
            else:
                occ_start = int(rng.integers(60, 81))
                events.append(
                    Event(
                        kind="occlusion",
                        frame=occ_start,
                        end_frame=occ_start + int(rng.integers(10, 21)),
                    )
                )
                events.append(
                    Event(
                        kind="camera_switch",
                        frame=int(rng.integers(130, 171)),
                        dx_mult=float(rng.uniform(3.0, 6.0)),
                    )
                )
                events.append(
                    Event(
                        kind="scale_jump",
                        frame=int(rng.integers(200, 241)),
                        scale=float(np.exp(rng.uniform(math.log(0.5), math.log(2.0)))),
                        aspect=1.0,
                    )
                )
            scripts.append(
                ScenarioScript(
                    scenario_id=f"{family.upper()}-{i:03d}",
                    frame_dims=DEFAULT_FRAME_DIMS,
                    length=DEFAULT_LENGTH,
                    motion=motion,
                    events=tuple(events),
                    sigma_rel=DEFAULT_SIGMA_REL,
                    seed=_suite_seed(seed, family, i),
                    discipline=FAMILY_DISCIPLINE[family],
                )
            )
    return scripts


def script_to_dict(script: ScenarioScript) -> dict:
    events = []
    for ev in script.events:
        entry: dict = {"kind": ev.kind, "frame": ev.frame}
        if ev.kind == "occlusion":
            entry["end_frame"] = ev.end_frame
        elif ev.kind == "camera_switch":
            entry["dx_mult"] = ev.dx_mult
            entry["dy_mult"] = ev.dy_mult
        else:
            entry["scale"] = ev.scale
            entry["aspect"] = ev.aspect
        events.append(entry)
    return {
        "scenario_id": script.scenario_id,
        "discipline": script.discipline,
        "frame_width": script.frame_dims.width,
        "frame_height": script.frame_dims.height,
        "length": script.length,
        "seed": script.seed,
        "sigma_rel": script.sigma_rel,
        "motion": {
            "waypoints": [list(row) for row in script.motion.waypoints],
            "sizes": [list(row) for row in script.motion.sizes],
        },
        "events": events,
    }


def script_from_dict(data: dict) -> ScenarioScript:
    try:
        motion = MotionSpec(
            waypoints=tuple(tuple(row) for row in data["motion"]["waypoints"]),
            sizes=tuple(tuple(row) for row in data["motion"]["sizes"]),
        )
        events = tuple(Event(**entry) for entry in data["events"])
        return ScenarioScript(
            scenario_id=data["scenario_id"],
            frame_dims=FrameDims(data["frame_width"], data["frame_height"]),
            length=data["length"],
            motion=motion,
            events=events,
            sigma_rel=data["sigma_rel"],
            seed=data["seed"],
            discipline=data["discipline"],
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed scenario script: {exc}") from exc


def save_script(path: str | Path, script: ScenarioScript) -> None:
    text = json.dumps(script_to_dict(script), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_script(path: str | Path) -> ScenarioScript:
    return script_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
