"""Synthetic talking-face corpus generator.

Each class is a distinct moving-ellipse mouth motif on a fixed face-like
canvas. Class identity is carried twice over:

  * in normalized landmark shape (aspect ratio, tilt, opening amplitude and
    frequency), which survives the landmark pipeline's translation and scale
    removal, so the indirect method can separate classes;
  * in mouth position and size on the canvas, which the pixel pipelines see
    directly, so the direct methods have an easier task.

Rendering is deterministic per seed and noise-free (flat colors compress
well), with per-clip jitter on phase, center, size, amplitude, frequency,
tilt and brightness.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import cv2
import numpy as np

from .frames import FRAME_SIZE, FrameSequence, write_frame_dir
from .manifest import ClipManifest, ClipRecord
from .vocab import WordVocabulary

FPS = 20.0
PARAMS_NAME = "params.json"

# Mouth landmark convention: 12 points on the outer lip line, 8 on the inner,
# inner radii at a fixed fraction of the outer. Matches the 20-point mouth
# subset of the 68-point facial layout in count.
OUTER_POINTS = 12
INNER_POINTS = 8
INNER_SCALE = 0.55

# Flat palette, chosen so the lip and mouth-interior windows stay disjoint
# from skin, eyes and background under +-10% brightness scaling.
COLOR_BG = (40, 40, 48)
COLOR_SKIN = (205, 170, 148)
COLOR_EYE = (70, 90, 110)
COLOR_NOSE = (120, 90, 70)
COLOR_LIP = (172, 66, 62)
COLOR_MOUTH = (58, 18, 22)

FACE_CENTER = (150, 145)
FACE_AXES = (95, 120)
MOUTH_BASE = (150.0, 210.0)


@dataclass(frozen=True)
class MouthMotif:
    """Per-class base parameters of the mouth ellipse animation."""

    dx: float  # mouth center offset from MOUTH_BASE, pixels
    dy: float
    half_w: float  # outer semi-axis along the mouth line
    aspect: float  # closed-mouth half-height as a fraction of half_w
    open_amp: float  # opening adds open_amp * openness to the aspect
    freq: float  # opening cycles per 20 frames
    tilt_deg: float  # constant in-plane rotation


# Aspect and opening amplitude keep the mouth wider than tall under
# worst-case jitter (aspect + 0.03 + 1.15 * open_amp < 0.9), so the fitted
# major axis always lies along the mouth line.
BASE_MOTIFS = (
    MouthMotif(dx=-18, dy=6, half_w=34, aspect=0.25, open_amp=0.50, freq=1.0, tilt_deg=0.0),
    MouthMotif(dx=18, dy=6, half_w=26, aspect=0.45, open_amp=0.25, freq=2.0, tilt_deg=0.0),
    MouthMotif(dx=0, dy=14, half_w=30, aspect=0.30, open_amp=0.45, freq=1.5, tilt_deg=15.0),
    MouthMotif(dx=0, dy=-6, half_w=38, aspect=0.30, open_amp=0.45, freq=3.0, tilt_deg=-15.0),
    MouthMotif(dx=-14, dy=-10, half_w=24, aspect=0.55, open_amp=0.25, freq=1.0, tilt_deg=30.0),
    MouthMotif(dx=14, dy=-10, half_w=32, aspect=0.72, open_amp=0.12, freq=2.5, tilt_deg=0.0),
    MouthMotif(dx=0, dy=0, half_w=28, aspect=0.40, open_amp=0.30, freq=0.5, tilt_deg=-30.0),
)


def motif_for_class(class_id: int) -> MouthMotif:
    base = BASE_MOTIFS[class_id % len(BASE_MOTIFS)]
    wrap = class_id // len(BASE_MOTIFS)
    if wrap == 0:
        return base
    # Extra classes reuse the cycle with a deterministic tilt/frequency shift.
    return MouthMotif(
        dx=base.dx,
        dy=base.dy,
        half_w=base.half_w,
        aspect=base.aspect,
        open_amp=base.open_amp,
        freq=base.freq * (1.2 ** wrap),
        tilt_deg=base.tilt_deg + 7.0 * wrap,
    )


@dataclass(frozen=True)
class ClipParams:
    """Everything needed to re-render a clip and its ground-truth landmarks."""

    word: str
    class_id: int
    participant_id: str
    cx: float
    cy: float
    half_w: float
    aspect: float
    open_amp: float
    freq: float
    phase: float
    tilt_deg: float
    brightness: float
    num_frames: int
    fps: float = FPS

    def openness(self, t: int) -> float:
        return 0.5 - 0.5 * math.cos(2.0 * math.pi * self.freq * t / 20.0 + self.phase)

    def ellipse_at(self, t: int) -> tuple[float, float, float, float, float]:
        """(cx, cy, half_w, half_h, tilt_deg) of the outer lip ellipse at frame t."""
        half_h = self.half_w * (self.aspect + self.open_amp * self.openness(t))
        return (self.cx, self.cy, self.half_w, half_h, self.tilt_deg)

    def landmarks_at(self, t: int) -> np.ndarray:
        cx, cy, w, h, tilt = self.ellipse_at(t)
        return mouth_landmarks(cx, cy, w, h, tilt)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "ClipParams":
        return cls(**obj)


def mouth_landmarks(cx: float, cy: float, w: float, h: float, tilt_deg: float) -> np.ndarray:
    """Ground-truth (20, 2) mouth points: outer ring then inner ring.

    Points sit on the ellipse at evenly spaced parameter angles starting from
    the +x axis, rotated by the tilt, in image coordinates (y down).
    """
    tilt = math.radians(tilt_deg)
    c, s = math.cos(tilt), math.sin(tilt)
    pts = np.empty((OUTER_POINTS + INNER_POINTS, 2), dtype=np.float64)
    for j in range(OUTER_POINTS):
        a = 2.0 * math.pi * j / OUTER_POINTS
        x, y = w * math.cos(a), h * math.sin(a)
        pts[j] = (cx + c * x - s * y, cy + s * x + c * y)
    for j in range(INNER_POINTS):
        a = 2.0 * math.pi * j / INNER_POINTS
        x, y = INNER_SCALE * w * math.cos(a), INNER_SCALE * h * math.sin(a)
        pts[OUTER_POINTS + j] = (cx + c * x - s * y, cy + s * x + c * y)
    return pts


def _fixed_point(value: float, shift: int = 4) -> int:
    return int(round(value * (1 << shift)))


def _draw_ellipse(canvas, cx, cy, ax, ay, tilt_deg, color, shift=4):
    cv2.ellipse(
        canvas,
        (_fixed_point(cx, shift), _fixed_point(cy, shift)),
        (_fixed_point(ax, shift), _fixed_point(ay, shift)),
        tilt_deg,
        0,
        360,
        color,
        thickness=-1,
        lineType=cv2.LINE_8,
        shift=shift,
    )


def render_frame(params: ClipParams, t: int) -> np.ndarray:
    """One 300x300 RGB uint8 frame of the clip."""
    canvas = np.empty((FRAME_SIZE, FRAME_SIZE, 3), dtype=np.uint8)
    canvas[:] = COLOR_BG
    _draw_ellipse(canvas, FACE_CENTER[0], FACE_CENTER[1], FACE_AXES[0], FACE_AXES[1], 0.0, COLOR_SKIN)
    for ex in (FACE_CENTER[0] - 38, FACE_CENTER[0] + 38):
        _draw_ellipse(canvas, ex, 105.0, 13.0, 7.0, 0.0, COLOR_EYE)
    cv2.line(canvas, (150, 150), (150, 175), COLOR_NOSE, 3)
    cx, cy, w, h, tilt = params.ellipse_at(t)
    _draw_ellipse(canvas, cx, cy, w, h, tilt, COLOR_LIP)
    _draw_ellipse(canvas, cx, cy, INNER_SCALE * w, INNER_SCALE * h, tilt, COLOR_MOUTH)
    if params.brightness != 1.0:
        canvas = np.clip(np.rint(canvas.astype(np.float64) * params.brightness), 0, 255).astype(np.uint8)
    return canvas


def render_clip(params: ClipParams, clip_id: str) -> FrameSequence:
    frames = np.stack([render_frame(params, t) for t in range(params.num_frames)])
    return FrameSequence(data=frames.astype(np.float32) / 255.0, fps=params.fps, clip_id=clip_id)


def sample_clip_params(
    word: str,
    class_id: int,
    participant_id: str,
    rng: np.random.Generator,
    num_frames: int | None = None,
) -> ClipParams:
    """Per-clip jitter around the class motif."""
    m = motif_for_class(class_id)
    if num_frames is None:
        num_frames = int(rng.integers(15, 31))
    return ClipParams(
        word=word,
        class_id=class_id,
        participant_id=participant_id,
        cx=MOUTH_BASE[0] + m.dx + rng.uniform(-4.0, 4.0),
        cy=MOUTH_BASE[1] + m.dy + rng.uniform(-4.0, 4.0),
        half_w=m.half_w * rng.uniform(0.9, 1.1),
        aspect=m.aspect + rng.uniform(-0.03, 0.03),
        open_amp=m.open_amp * rng.uniform(0.85, 1.15),
        freq=m.freq * rng.uniform(0.9, 1.1),
        phase=rng.uniform(0.0, 2.0 * math.pi),
        tilt_deg=m.tilt_deg + rng.uniform(-4.0, 4.0),
        brightness=rng.uniform(0.92, 1.08),
        num_frames=num_frames,
    )


def _participant_for(rep: int, clips_per_class: int) -> str:
    per_participant = max(1, math.ceil(clips_per_class / 7))
    return f"p{rep // per_participant + 1:02d}"


def generate_synthetic_corpus(
    vocab: WordVocabulary,
    clips_per_class: int,
    seed: int,
    out_dir,
) -> ClipManifest:
    """Render the corpus tree and write its manifest.

    Layout: ``out_dir/<word>/<clip_id>/`` frame directories, each with a
    ``params.json`` ground-truth sidecar, plus ``out_dir/manifest.jsonl``.
    Re-running with the same arguments reproduces every byte.
    """
    if clips_per_class < 1:
        raise ValueError("clips_per_class must be >= 1")
    out_dir = Path(out_dir)
    records = []
    for word in vocab:
        class_id = vocab.id_of(word)
        for rep in range(clips_per_class):
            rng = np.random.default_rng([seed, class_id, rep])
            participant = _participant_for(rep, clips_per_class)
            clip_id = f"{word}_{participant}_{rep:03d}"
            params = sample_clip_params(word, class_id, participant, rng)
            seq = render_clip(params, clip_id)
            clip_dir = out_dir / word / clip_id
            write_frame_dir(seq, clip_dir)
            (clip_dir / PARAMS_NAME).write_text(
                json.dumps(params.to_json(), sort_keys=True) + "\n"
            )
            records.append(
                ClipRecord(
                    clip_id=clip_id,
                    path=f"{word}/{clip_id}",
                    label=word,
                    participant_id=participant,
                    frame_count=params.num_frames,
                    fps=params.fps,
                )
            )
    manifest = ClipManifest(records=tuple(records), vocab=vocab, seed=seed, root=str(out_dir))
    manifest.save(out_dir / "manifest.jsonl")
    return manifest


def load_clip_params(clip_dir) -> ClipParams:
    return ClipParams.from_json(json.loads((Path(clip_dir) / PARAMS_NAME).read_text()))


def make_scripted_stream(
    words,
    vocab: WordVocabulary,
    seconds_each: float = 2.0,
    gap_seconds: float = 1.0,
    seed: int = 0,
    fps: float = FPS,
):
    """Frames for a scripted utterance sequence, plus its schedule.

    Returns (frames, schedule): frames is a (T, 300, 300, 3) float32 array,
    schedule a list of (word, start_frame, end_frame) half-open intervals.
    Gap frames repeat the previous frame exactly, so motion energy is zero
    between utterances.
    """
    word_frames = int(round(seconds_each * fps))
    gap_frames = int(round(gap_seconds * fps))
    rng = np.random.default_rng(seed)
    chunks = []
    schedule = []
    cursor = 0

    def push_gap(frame):
        nonlocal cursor
        if gap_frames:
            chunks.append(np.repeat(frame[None], gap_frames, axis=0))
            cursor += gap_frames

    neutral = None
    for word in words:
        class_id = vocab.id_of(word)
        params = sample_clip_params(word, class_id, "live", rng, num_frames=word_frames)
        clip = np.stack([render_frame(params, t) for t in range(word_frames)])
        if neutral is None:
            neutral = clip[0]
        push_gap(neutral)
        schedule.append((word, cursor, cursor + word_frames))
        chunks.append(clip)
        cursor += word_frames
        neutral = clip[-1]
    push_gap(neutral)
    frames = np.concatenate(chunks).astype(np.float32) / 255.0
    return frames, schedule
