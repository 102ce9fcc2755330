"""Segmentation backends.

The real backend chains an open-vocabulary detector (YOLO-World) with a
promptable segmenter (SAM family): detect boxes for the prompt, feed each
box to the segmenter, return one mask per instance. When the model stack
is not importable or loadable the server degrades to a stub that answers
every request with zero masks and a `backend: stub` flag, keeping the
wire contract alive for protocol-level consumers.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass

import numpy as np

from .protocol import Mask, Request, Response, rle_encode


@dataclass
class BackendConfig:
    detector: str = "yolov8s-worldv2.pt"
    segmenter: str = "sam2_b.pt"
    device: str = "cpu"
    box_threshold: float = 0.25
    text_threshold: float = 0.25

    def __post_init__(self):
        for name in ("box_threshold", "text_threshold"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0,1]")


class StubBackend:
    """Answers every request with zero masks; used when models are missing."""

    name = "stub"

    def segment(self, req: Request) -> Response:
        return Response(image_id=req.image_id, masks=[], backend="stub")


class YoloWorldSamBackend:
    """Detector + segmenter composition over raw RGB payloads."""

    name = "yolo-world-sam"

    def __init__(self, cfg: BackendConfig):
        from ultralytics import SAM, YOLOWorld  # deferred: heavy import

        self.cfg = cfg
        self.detector = YOLOWorld(cfg.detector)
        self.segmenter = SAM(cfg.segmenter)

    def segment(self, req: Request) -> Response:
        if req.payload_kind != "rgb":
            return Response(image_id=req.image_id, masks=[],
                            warning="expected rgb payload", backend=self.name)
        expected = req.width * req.height * 3
        if len(req.payload) != expected:
            return Response(image_id=req.image_id, masks=[],
                            warning=f"payload has {len(req.payload)} bytes, expected {expected}",
                            backend=self.name)
        img = np.frombuffer(req.payload, dtype=np.uint8).reshape(req.height, req.width, 3)
        box_thr = req.box_threshold or self.cfg.box_threshold
        self.detector.set_classes([req.prompt])
        det = self.detector.predict(img, conf=box_thr, device=self.cfg.device, verbose=False)[0]
        masks: list[Mask] = []
        if det.boxes is None or len(det.boxes) == 0:
            return Response(image_id=req.image_id, masks=[], backend=self.name)
        boxes = det.boxes.xyxy.cpu().numpy()
        confs = det.boxes.conf.cpu().numpy()
        seg = self.segmenter.predict(
            img, bboxes=boxes, device=self.cfg.device, verbose=False
        )[0]
        for idx, (conf, m) in enumerate(zip(confs, seg.masks.data.cpu().numpy()), start=1):
            bits = m.astype(bool)
            if bits.shape != (req.height, req.width):
                continue
            masks.append(
                Mask(cls=req.prompt, confidence=float(conf), instance_id=idx,
                     rle=rle_encode(bits))
            )
        return Response(image_id=req.image_id, masks=masks, backend=self.name)


def load_backend(cfg: BackendConfig, force_stub: bool = False):
    if force_stub:
        return StubBackend()
    try:
        return YoloWorldSamBackend(cfg)
    except Exception as e:  # missing deps, missing weights, no GPU, ...
        print(f"zsl-adapter: model backend unavailable ({e!r}); serving stub responses",
              file=sys.stderr)
        return StubBackend()
