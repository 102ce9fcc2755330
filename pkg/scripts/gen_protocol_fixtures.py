"""Write the golden wire-protocol fixtures (length-prefixed frames).

Ten frames: six requests covering both payload kinds and threshold
variants, four responses covering masks, empty results, warnings, and
the stub backend flag. Committed as binary files; the golden tests only
read them, so any encoding drift shows up as a byte mismatch.
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

import numpy as np

from avbench.protocol import (
    InstanceMask,
    SegmentationRequest,
    SegmentationResponse,
    encode_request,
    encode_response,
    frame_bytes,
    rle_encode,
)
from avbench.scene import CLASS_CODES, SemanticClass

OUT = os.path.join(os.path.dirname(__file__), "..", "tests", "fixtures", "protocol")

FRUIT = CLASS_CODES[SemanticClass.FRUIT]
LEAF = CLASS_CODES[SemanticClass.LEAF]


def label_image(w, h, seed):
    rng = np.random.default_rng(seed)
    img = np.zeros((h, w), dtype=np.uint8)
    for _ in range(3):
        x, y = rng.integers(0, w - 4), rng.integers(0, h - 4)
        img[y : y + rng.integers(2, 5), x : x + rng.integers(2, 5)] = FRUIT
    img[0, :] = LEAF
    return img


def main():
    os.makedirs(OUT, exist_ok=True)
    frames = {}

    img = label_image(16, 12, 1)
    frames["req_labels_basic"] = encode_request(
        SegmentationRequest(1, 16, 12, img.tobytes(), "fruit", 0.0, 0.0)
    )
    frames["req_labels_thresholds"] = encode_request(
        SegmentationRequest(2, 16, 12, img.tobytes(), "tomato", 0.35, 0.6)
    )
    img2 = label_image(24, 18, 2)
    frames["req_labels_large"] = encode_request(
        SegmentationRequest(3, 24, 18, img2.tobytes(), "fruit", 0.1, 0.1)
    )
    frames["req_labels_unknown_prompt"] = encode_request(
        SegmentationRequest(4, 16, 12, img.tobytes(), "tractor", 0.0, 0.0)
    )
    rgb = np.random.default_rng(3).integers(0, 256, size=(8, 10, 3), dtype=np.uint8)
    frames["req_rgb_payload"] = encode_request(
        SegmentationRequest(5, 10, 8, rgb.tobytes(), "apple", 0.25, 0.25, payload_kind="rgb")
    )
    frames["req_labels_empty_scene"] = encode_request(
        SegmentationRequest(6, 8, 6, bytes(48), "fruit", 0.0, 0.0)
    )

    mask = np.zeros((12, 16), dtype=bool)
    mask[2:6, 3:9] = True
    frames["resp_one_mask"] = encode_response(
        SegmentationResponse(
            1,
            masks=[InstanceMask("fruit", 0.875, 1, rle_encode(mask, 16, 12))],
            server_time_ms=0,
        )
    )
    mask2 = np.zeros((12, 16), dtype=bool)
    mask2[8:11, 10:15] = True
    frames["resp_two_masks"] = encode_response(
        SegmentationResponse(
            2,
            masks=[
                InstanceMask("fruit", 0.75, 1, rle_encode(mask, 16, 12)),
                InstanceMask("fruit", 0.5, 2, rle_encode(mask2, 16, 12)),
            ],
            server_time_ms=0,
        )
    )
    frames["resp_empty_warning"] = encode_response(
        SegmentationResponse(4, masks=[], server_time_ms=0, warning="unknown_prompt")
    )
    frames["resp_stub_backend"] = encode_response(
        SegmentationResponse(5, masks=[], server_time_ms=0, backend="stub")
    )

    for name, payload in frames.items():
        path = os.path.join(OUT, f"{name}.bin")
        with open(path, "wb") as f:
            f.write(frame_bytes(payload))
        print(f"{path}: {len(payload) + 4} bytes")
    assert len(frames) == 10


if __name__ == "__main__":
    main()
