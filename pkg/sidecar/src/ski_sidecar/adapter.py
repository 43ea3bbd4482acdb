"""Localizer backends and their configuration.

Echo mode answers every request with a fixed, documented constant so
integration tests run without any model weights. Model mode loads a
self-describing checkpoint and runs template correlation plus the
checkpoint's own score head; it never guesses undeclared details.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import cv2
import numpy as np

from .protocol import RequestError

ECHO_BBOX = (0.5, 0.5, 0.25, 0.25)
ECHO_SCORE = 0.9

# Score head hidden-layer widths; checkpoints must declare the same shape.
DEFAULT_SCORE_HEAD = (512, 512, 256)

MODES = ("echo", "model")


class AdapterError(Exception):
    """Bad configuration or unusable weights; refuses to start."""


@dataclass(frozen=True)
class AdapterConfig:
    """Start-up settings for the sidecar process.

    Exactly one transport must be chosen (a TCP listen endpoint or stdio).
    Echo mode must not be given weights; model mode requires them. The
    score-head descriptor is configuration metadata used to vet checkpoints,
    never to build an untrained head.
    """

    mode: str = "echo"
    weights: str | None = None
    listen: str | None = None
    stdio: bool = False
    score_head: tuple[int, ...] = field(default=DEFAULT_SCORE_HEAD)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise AdapterError(f"unknown mode {self.mode!r}; pick one of {MODES}")
        if self.mode == "echo" and self.weights is not None:
            raise AdapterError("echo mode takes no weights")
        if self.mode == "model" and self.weights is None:
            raise AdapterError("model mode requires --weights")
        if (self.listen is None) == (not self.stdio):
            raise AdapterError("pick exactly one of --listen or --stdio")
        if not self.score_head or any(
            not isinstance(n, int) or n < 1 for n in self.score_head
        ):
            raise AdapterError(f"bad score-head sizes {self.score_head!r}")


class EchoLocalizer:
    """Fixed-reply backend: bbox (0.5, 0.5, 0.25, 0.25), score 0.9.

    Stateless and deterministic by construction; requests are validated by
    the server but their content never influences the reply.
    """

    name = "ski-sidecar-echo"

    def localize(
        self, init_template: np.ndarray, dyn_template: np.ndarray, search: np.ndarray
    ) -> tuple[tuple[float, float, float, float], float]:
        return ECHO_BBOX, ECHO_SCORE


_ACTIVATIONS = {
    "identity": lambda x: x,
    "relu": lambda x: np.maximum(x, 0.0),
    "tanh": np.tanh,
    "sigmoid": lambda x: 1.0 / (1.0 + np.exp(-x)),
}


class ModelLocalizer:
    """Correlation search plus the checkpoint's scalar score head.

    The dynamic template is matched over the search patch with normalized
    cross-correlation; the best window becomes the prediction. The target is
    assumed to fill the central half of the template window (templates are
    conventionally cropped at twice the target extent). The score head runs
    the checkpoint's declared layers and activations over a pooled
    correlation descriptor.
    """

    name = "ski-sidecar-model"

    TEMPLATE_FILL = 0.5

    def __init__(
        self,
        layers: list[tuple[np.ndarray, np.ndarray]],
        activations: list[str],
        feature_dim: int,
    ) -> None:
        self._layers = layers
        self._activations = activations
        self._feature_dim = feature_dim

    def localize(
        self, init_template: np.ndarray, dyn_template: np.ndarray, search: np.ndarray
    ) -> tuple[tuple[float, float, float, float], float]:
        th, tw = dyn_template.shape[:2]
        sh, sw = search.shape[:2]
        if th > sh or tw > sw:
            raise RequestError("dynamic template larger than the search region")
        tpl = cv2.cvtColor(dyn_template, cv2.COLOR_RGB2GRAY)
        img = cv2.cvtColor(search, cv2.COLOR_RGB2GRAY)
        corr = cv2.matchTemplate(img, tpl, cv2.TM_CCOEFF_NORMED)
        # flat patches make the normalized correlation undefined
        corr = np.nan_to_num(corr, nan=0.0, posinf=0.0, neginf=0.0)
        _, _, _, (px, py) = cv2.minMaxLoc(corr)

        cx = (px + tw / 2.0) / sw
        cy = (py + th / 2.0) / sh
        w = self.TEMPLATE_FILL * tw / sw
        h = self.TEMPLATE_FILL * th / sh
        bbox = (
            min(max(cx, 0.0), 1.0),
            min(max(cy, 0.0), 1.0),
            min(w, 1.0),
            min(h, 1.0),
        )

        flat = np.sort(corr.ravel())[::-1].astype(np.float64)
        features = np.zeros(self._feature_dim)
        features[: min(self._feature_dim, flat.size)] = flat[: self._feature_dim]
        out = features
        for (weight, bias), act in zip(self._layers, self._activations):
            out = _ACTIVATIONS[act](out @ weight + bias)
        score = float(out[0])
        if not np.isfinite(score):
            score = 0.0
        return bbox, min(max(score, 0.0), 1.0)


def load_checkpoint(path: str, expected_head: tuple[int, ...]) -> ModelLocalizer:
    """Load an .npz checkpoint that fully describes its own score head.

    The archive must carry a ``meta`` JSON entry declaring the head's hidden
    sizes (matching the configured descriptor), one activation per layer,
    and the feature recipe. Undeclared or unrecognized details are refused
    rather than guessed.
    """
    try:
        archive = np.load(path)
    except (OSError, ValueError) as exc:
        raise AdapterError(f"cannot read weights {path}: {exc}") from exc
    if "meta" not in archive:
        raise AdapterError(f"{path}: checkpoint has no meta entry")
    try:
        meta = json.loads(str(archive["meta"]))
    except json.JSONDecodeError as exc:
        raise AdapterError(f"{path}: meta entry is not valid JSON") from exc

    declared = tuple(meta.get("score_head", ()))
    if declared != tuple(expected_head):
        raise AdapterError(
            f"{path}: checkpoint score head {declared} does not match "
            f"configured {tuple(expected_head)}"
        )
    if meta.get("feature") != "correlation-pool":
        raise AdapterError(
            f"{path}: unsupported feature recipe {meta.get('feature')!r}"
        )
    activations = meta.get("activations")
    n_layers = len(declared) + 1  # hidden layers plus the scalar output layer
    if not isinstance(activations, list) or len(activations) != n_layers:
        raise AdapterError(
            f"{path}: checkpoint must declare {n_layers} activations, one per layer"
        )
    unknown = [a for a in activations if a not in _ACTIVATIONS]
    if unknown:
        raise AdapterError(f"{path}: unrecognized activations {unknown}")

    widths = list(declared) + [1]
    layers: list[tuple[np.ndarray, np.ndarray]] = []
    prev: int | None = None
    for i, width in enumerate(widths):
        w_key, b_key = f"W{i}", f"b{i}"
        if w_key not in archive or b_key not in archive:
            raise AdapterError(f"{path}: missing arrays {w_key}/{b_key}")
        weight = np.asarray(archive[w_key], dtype=np.float64)
        bias = np.asarray(archive[b_key], dtype=np.float64)
        if weight.ndim != 2 or weight.shape[1] != width or bias.shape != (width,):
            raise AdapterError(
                f"{path}: layer {i} arrays have shapes {weight.shape}/{bias.shape}, "
                f"expected (*, {width})/({width},)"
            )
        if prev is not None and weight.shape[0] != prev:
            raise AdapterError(
                f"{path}: layer {i} input width {weight.shape[0]} != previous output {prev}"
            )
        prev = width
        layers.append((weight, bias))
    return ModelLocalizer(layers, list(activations), layers[0][0].shape[0])


def build_localizer(config: AdapterConfig):
    if config.mode == "echo":
        return EchoLocalizer()
    return load_checkpoint(config.weights, config.score_head)
