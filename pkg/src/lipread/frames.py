"""Clip decoding and temporal standardization for the direct pipelines.

Clips live on disk either as video files or as frame directories (zero-padded
5-digit image names plus a small sidecar describing fps). All decoders emit
RGB float32 frames in [0,1] at 300x300, letterboxed when the source aspect
ratio differs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import cv2
import numpy as np

from .errors import DecodeError

FRAME_SIZE = 300
TARGET_FRAMES = 20
SIDECAR_NAME = "clip.json"
FRAME_PATTERN = "{:05d}.png"


@dataclass(frozen=True)
class FrameSequence:
    """Decoded clip: (T, 300, 300, 3) RGB float32 in [0,1]."""

    data: np.ndarray
    fps: float
    clip_id: str

    def __post_init__(self):
        d = self.data
        if d.ndim != 4 or d.shape[1:] != (FRAME_SIZE, FRAME_SIZE, 3):
            raise DecodeError(f"bad frame tensor shape {d.shape} for clip {self.clip_id}")
        if d.shape[0] < 1:
            raise DecodeError(f"clip has no frames: {self.clip_id}")

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]


def standard_indices(length: int, target: int = TARGET_FRAMES) -> np.ndarray:
    """Frame indices that standardize a length-T sequence to `target` frames.

    Longer sequences are center-cropped (drop floor((T-target)/2) leading
    frames), shorter ones repeat the last frame. Shared by the frame and
    landmark pipelines so both select identical frames.
    """
    if length < 1:
        raise ValueError("sequence length must be >= 1")
    if target < 1:
        raise ValueError("target length must be >= 1")
    if length >= target:
        start = (length - target) // 2
        return np.arange(start, start + target)
    idx = np.arange(target)
    idx[length:] = length - 1
    return idx


def standardize_frames(seq: FrameSequence, target: int = TARGET_FRAMES) -> FrameSequence:
    """Exactly `target` frames: center temporal crop or last-frame repetition."""
    idx = standard_indices(seq.num_frames, target)
    return replace(seq, data=seq.data[idx])


def letterbox(image: np.ndarray, size: int = FRAME_SIZE) -> np.ndarray:
    """Aspect-preserving resize onto a size x size black canvas."""
    h, w = image.shape[:2]
    if h == size and w == size:
        return image
    scale = size / max(h, w)
    new_w = max(1, round(w * scale))
    new_h = max(1, round(h * scale))
    interp = cv2.INTER_AREA if scale < 1 else cv2.INTER_LINEAR
    resized = cv2.resize(image, (new_w, new_h), interpolation=interp)
    canvas = np.zeros((size, size, 3), dtype=image.dtype)
    y0 = (size - new_h) // 2
    x0 = (size - new_w) // 2
    canvas[y0 : y0 + new_h, x0 : x0 + new_w] = resized
    return canvas


def _to_unit_rgb(frames_u8: list[np.ndarray]) -> np.ndarray:
    stack = np.stack(frames_u8).astype(np.float32)
    stack /= 255.0
    return stack


def _decode_video(path: Path, clip_id: str) -> FrameSequence:
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise DecodeError(f"cannot open video: {path}")
    fps = cap.get(cv2.CAP_PROP_FPS) or 0.0
    frames = []
    try:
        while True:
            ok, bgr = cap.read()
            if not ok:
                break
            rgb = cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)
            frames.append(letterbox(rgb))
    finally:
        cap.release()
    if not frames:
        raise DecodeError(f"video has no decodable frames: {path}")
    return FrameSequence(data=_to_unit_rgb(frames), fps=float(fps) or 20.0, clip_id=clip_id)


def _decode_frame_dir(path: Path, clip_id: str) -> FrameSequence:
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
    if not files:
        raise DecodeError(f"frame directory has no images: {path}")
    fps = 20.0
    sidecar = path / SIDECAR_NAME
    if sidecar.exists():
        try:
            fps = float(json.loads(sidecar.read_text())["fps"])
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise DecodeError(f"bad sidecar in {path}: {exc}") from exc
    frames = []
    for f in files:
        bgr = cv2.imread(str(f), cv2.IMREAD_COLOR)
        if bgr is None:
            raise DecodeError(f"cannot decode image: {f}")
        frames.append(letterbox(cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)))
    return FrameSequence(data=_to_unit_rgb(frames), fps=fps, clip_id=clip_id)


def decode_clip(path, clip_id: str | None = None) -> FrameSequence:
    """Decode a video file or frame directory into a FrameSequence."""
    path = Path(path)
    if clip_id is None:
        clip_id = path.stem if path.is_file() else path.name
    if path.is_dir():
        return _decode_frame_dir(path, clip_id)
    if path.is_file():
        return _decode_video(path, clip_id)
    raise DecodeError(f"clip path does not exist: {path}")


def write_frame_dir(seq: FrameSequence, out_dir) -> Path:
    """Write a clip as a lossless frame directory with an fps sidecar.

    decode_clip on the result reproduces `seq.data` bit-exactly (the encoder
    quantizes to 8-bit, so bit-exactness holds for sequences that were decoded
    from 8-bit sources).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(seq.data):
        u8 = np.clip(np.rint(frame * 255.0), 0, 255).astype(np.uint8)
        bgr = cv2.cvtColor(u8, cv2.COLOR_RGB2BGR)
        if not cv2.imwrite(str(out_dir / FRAME_PATTERN.format(i)), bgr):
            raise DecodeError(f"cannot write frame {i} to {out_dir}")
    sidecar = {"clip_id": seq.clip_id, "fps": seq.fps, "num_frames": seq.num_frames}
    (out_dir / SIDECAR_NAME).write_text(json.dumps(sidecar, sort_keys=True) + "\n")
    return out_dir


def write_video(seq: FrameSequence, out_path) -> Path:
    """Write a clip as a lossless FFV1 video."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fourcc = cv2.VideoWriter_fourcc(*"FFV1")
    writer = cv2.VideoWriter(str(out_path), fourcc, seq.fps, (FRAME_SIZE, FRAME_SIZE))
    if not writer.isOpened():
        raise DecodeError(f"cannot open video writer: {out_path}")
    try:
        for frame in seq.data:
            u8 = np.clip(np.rint(frame * 255.0), 0, 255).astype(np.uint8)
            writer.write(cv2.cvtColor(u8, cv2.COLOR_RGB2BGR))
    finally:
        writer.release()
    return out_path
