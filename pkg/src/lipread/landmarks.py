"""Mouth-landmark feature pipeline for the indirect method.

Per frame, a 68-point detector output is reduced to the 20-point mouth
region (indices 48..67). Frames where detection fails are carried as invalid
and repaired by interpolation before temporal standardization. The final
tensor is (frame, point, coord) with per-frame centroid removed and the
whole-sequence RMS point radius scaled to 1, which cancels translation and
uniform scale.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import AllFramesInvalid, DegenerateGeometry, InvalidSpec
from .frames import TARGET_FRAMES, FrameSequence, standard_indices

MOUTH_POINT_INDICES = tuple(range(48, 68))
NUM_MOUTH_POINTS = len(MOUTH_POINT_INDICES)
NORMALIZATION = "per-frame-centroid,sequence-rms-scale"
CACHE_TAG = "lipread-landmarks"


@dataclass(frozen=True)
class LandmarkFrame:
    """Mouth points of one frame; points are meaningless when not valid."""

    points: np.ndarray  # (20, 2) float64
    valid: bool
    point_indices: tuple[int, ...] = MOUTH_POINT_INDICES

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.shape != (NUM_MOUTH_POINTS, 2):
            raise InvalidSpec(f"landmark frame must be (20, 2), got {pts.shape}")
        if self.valid and not np.all(np.isfinite(pts)):
            raise InvalidSpec("valid landmark frame has non-finite coordinates")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class LandmarkSequence:
    frames: tuple[LandmarkFrame, ...]
    fps: float
    clip_id: str

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if not any(f.valid for f in self.frames):
            raise AllFramesInvalid(f"no valid landmark frame in {self.clip_id}")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def all_valid(self) -> bool:
        return all(f.valid for f in self.frames)

    def pack(self) -> np.ndarray:
        """(T, 20, 2) array; requires every frame valid."""
        if not self.all_valid:
            raise InvalidSpec("cannot pack a sequence with invalid frames")
        return np.stack([f.points for f in self.frames])

    @classmethod
    def unpack(cls, data: np.ndarray, fps: float, clip_id: str) -> "LandmarkSequence":
        frames = tuple(LandmarkFrame(points=p, valid=True) for p in np.asarray(data))
        return cls(frames=frames, fps=fps, clip_id=clip_id)


@dataclass(frozen=True)
class LipTensor:
    """Normalized (20, 20, 2) landmark tensor."""

    data: np.ndarray
    normalization: str = NORMALIZATION
    clip_id: str = ""

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.shape != (TARGET_FRAMES, NUM_MOUTH_POINTS, 2):
            raise InvalidSpec(f"lip tensor must be (20, 20, 2), got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise InvalidSpec("lip tensor has non-finite values")
        object.__setattr__(self, "data", d)


def extract_landmarks(clip: FrameSequence, detector) -> LandmarkSequence:
    """Run the detector per frame and keep the mouth subset.

    Detector misses become invalid frames; a clip with no valid frame at all
    raises AllFramesInvalid.
    """
    frames = []
    for frame in clip.data:
        layout = detector.detect(frame)
        if layout is None:
            frames.append(
                LandmarkFrame(points=np.zeros((NUM_MOUTH_POINTS, 2)), valid=False)
            )
        else:
            layout = np.asarray(layout, dtype=np.float64)
            frames.append(LandmarkFrame(points=layout[48:68], valid=True))
    return LandmarkSequence(frames=tuple(frames), fps=clip.fps, clip_id=clip.clip_id)


def repair_invalid(seq: LandmarkSequence) -> LandmarkSequence:
    """Fill invalid frames by linear interpolation between valid neighbors.

    Invalid runs before the first (after the last) valid frame copy the
    nearest valid frame.
    """
    if seq.all_valid:
        return seq
    valid_idx = np.array([i for i, f in enumerate(seq.frames) if f.valid])
    points = np.stack([f.points for f in seq.frames])
    t = np.arange(len(seq))
    valid_pts = points[valid_idx]  # (V, 20, 2)
    flat = valid_pts.reshape(valid_idx.shape[0], -1)
    repaired = np.empty((len(seq), flat.shape[1]))
    for c in range(flat.shape[1]):
        repaired[:, c] = np.interp(t, valid_idx, flat[:, c])
    frames = tuple(
        LandmarkFrame(points=p, valid=True)
        for p in repaired.reshape(len(seq), NUM_MOUTH_POINTS, 2)
    )
    return replace(seq, frames=frames)


def standardize_length(seq: LandmarkSequence, target: int = TARGET_FRAMES) -> LandmarkSequence:
    """Repair invalid frames, then emit exactly `target` frames.

    Uses the same index rule as the frame standardizer: center crop when
    longer, last-frame repetition when shorter.
    """
    seq = repair_invalid(seq)
    idx = standard_indices(len(seq), target)
    return replace(seq, frames=tuple(seq.frames[i] for i in idx))


def normalize(seq: LandmarkSequence) -> LipTensor:
    """Centroid-center each frame, scale the sequence to unit RMS radius."""
    if len(seq) != TARGET_FRAMES or not seq.all_valid:
        raise InvalidSpec("normalize expects a standardized all-valid sequence")
    data = seq.pack()
    centered = data - data.mean(axis=1, keepdims=True)
    scale = float(np.sqrt(np.mean(np.sum(centered**2, axis=2))))
    if scale < 1e-9:
        raise DegenerateGeometry(f"all landmark points coincide in {seq.clip_id}")
    return LipTensor(data=centered / scale, clip_id=seq.clip_id)


def clip_to_tensor(clip: FrameSequence, detector) -> LipTensor:
    """Full indirect feature pipeline for one decoded clip."""
    return normalize(standardize_length(extract_landmarks(clip, detector)))


def save_landmark_cache(seq: LandmarkSequence, path) -> None:
    """Text cache: header lines, then one line per frame (40 numbers with 6
    fractional digits, or `invalid`)."""
    path = Path(path)
    lines = [
        f"# {CACHE_TAG} v1",
        f"# clip_id: {seq.clip_id}",
        f"# fps: {seq.fps!r}",
        f"# point_indices: {seq.frames[0].point_indices[0]}..{seq.frames[0].point_indices[-1]}",
    ]
    for f in seq.frames:
        if not f.valid:
            lines.append("invalid")
        else:
            lines.append(" ".join(f"{v:.6f}" for v in f.points.ravel()))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def load_landmark_cache(path) -> LandmarkSequence:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith(f"# {CACHE_TAG} "):
        raise InvalidSpec(f"not a landmark cache: {path}")
    header = {}
    body_start = 0
    for i, ln in enumerate(lines):
        if not ln.startswith("#"):
            body_start = i
            break
        if ":" in ln:
            key, _, value = ln[1:].partition(":")
            header[key.strip()] = value.strip()
    else:
        body_start = len(lines)
    frames = []
    for ln in lines[body_start:]:
        if ln == "invalid":
            frames.append(LandmarkFrame(points=np.zeros((NUM_MOUTH_POINTS, 2)), valid=False))
        else:
            vals = np.array([float(v) for v in ln.split()], dtype=np.float64)
            if vals.shape[0] != NUM_MOUTH_POINTS * 2:
                raise InvalidSpec(f"bad cache line in {path}: {ln[:40]}...")
            frames.append(LandmarkFrame(points=vals.reshape(NUM_MOUTH_POINTS, 2), valid=True))
    return LandmarkSequence(
        frames=tuple(frames),
        fps=float(header.get("fps", "20.0")),
        clip_id=header.get("clip_id", path.stem),
    )
