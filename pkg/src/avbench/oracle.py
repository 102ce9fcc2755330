"""In-process oracle segmenter: plays the segmentation server's role
using ground-truth label images, with configurable imperfections that
mimic a zero-shot model (confidence spread, dropped instances, eroded
mask borders).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .protocol import (
    InstanceMask,
    ProtocolError,
    SegmentationRequest,
    SegmentationResponse,
    rle_encode,
)
from .scene import CLASS_BY_NAME, CLASS_CODES, SemanticClass

# Prompts a grower might type, mapped onto scene classes.
PROMPT_ALIASES = {
    "fruit": SemanticClass.FRUIT,
    "tomato": SemanticClass.FRUIT,
    "mature tomato": SemanticClass.FRUIT,
    "apple": SemanticClass.FRUIT,
    "green apple": SemanticClass.FRUIT,
    "grape": SemanticClass.FRUIT,
    "berry": SemanticClass.FRUIT,
    "leaf": SemanticClass.LEAF,
    "leaves": SemanticClass.LEAF,
    "branch": SemanticClass.BRANCH,
    "trunk": SemanticClass.TRUNK,
    "pot": SemanticClass.POT,
}


@dataclass(frozen=True)
class OracleNoiseConfig:
    confidence_range: tuple[float, float] = (1.0, 1.0)
    instance_dropout_p: float = 0.0
    erosion_radius: int = 0
    seed: int = 0

    def __post_init__(self):
        c_min, c_max = self.confidence_range
        if not (0.0 < c_min <= c_max <= 1.0):
            raise ValueError("confidence_range must satisfy 0 < c_min <= c_max <= 1")
        if not (0.0 <= self.instance_dropout_p <= 1.0):
            raise ValueError("instance_dropout_p must be in [0,1]")
        if self.erosion_radius < 0:
            raise ValueError("erosion_radius must be >= 0")


EXACT_ORACLE = OracleNoiseConfig()

_EIGHT_CONN = np.ones((3, 3), dtype=int)


def resolve_prompt(prompt: str) -> SemanticClass | None:
    p = prompt.strip().lower()
    return PROMPT_ALIASES.get(p) or CLASS_BY_NAME.get(p)


def oracle_segment(req: SegmentationRequest, noise: OracleNoiseConfig) -> SegmentationResponse:
    """One InstanceMask per 8-connected component of the prompted class.

    Deterministic per (noise.seed, image_id): the same request replayed
    with the same config yields a byte-identical response.
    """
    t0 = time.perf_counter()
    if req.payload_kind != "labels":
        raise ProtocolError(f"oracle expects label payloads, got {req.payload_kind!r}")
    expected = req.width * req.height
    if len(req.label_payload) != expected:
        raise ProtocolError(
            f"label payload has {len(req.label_payload)} bytes, expected {expected}"
        )
    label = np.frombuffer(req.label_payload, dtype=np.uint8).reshape(req.height, req.width)
    if label.max(initial=0) >= len(CLASS_CODES):
        raise ProtocolError("label payload contains unknown class codes")

    target = resolve_prompt(req.prompt)
    if target is None:
        return SegmentationResponse(req.image_id, masks=[], warning="unknown_prompt")

    rng = np.random.default_rng([noise.seed & 0x7FFFFFFFFFFFFFFF, req.image_id & 0x7FFFFFFFFFFFFFFF])
    binary = label == CLASS_CODES[target]
    comp, n_comp = ndimage.label(binary, structure=_EIGHT_CONN)

    masks: list[InstanceMask] = []
    c_min, c_max = noise.confidence_range
    for inst in range(1, n_comp + 1):
        m = comp == inst
        conf = float(rng.uniform(c_min, c_max))
        dropped = rng.random() < noise.instance_dropout_p
        if noise.erosion_radius > 0:
            size = 2 * noise.erosion_radius + 1
            m = ndimage.binary_erosion(m, structure=np.ones((size, size), dtype=bool))
        if dropped or not m.any():
            continue
        if conf < req.box_threshold:
            continue
        masks.append(
            InstanceMask(
                cls=target.value,
                confidence=conf,
                instance_id=inst,
                rle=rle_encode(m, req.width, req.height),
            )
        )
    ms = int((time.perf_counter() - t0) * 1000)
    return SegmentationResponse(req.image_id, masks=masks, server_time_ms=ms)
