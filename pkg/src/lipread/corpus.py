"""Dataset construction: segmentation, face cropping, scanning, building.

Input layout for the builder: ``input/<word>/<recording>`` where each
recording holds one or more utterances of that word separated by stillness.
Output: ``output/<word>/<clip_id>/`` frame directories plus a manifest.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from pathlib import Path

import cv2
import numpy as np

from .errors import EmptyCorpus, NoFaceDetected, SegmentationError
from .frames import FRAME_SIZE, FrameSequence, decode_clip, write_frame_dir
from .manifest import ClipManifest, ClipRecord
from .vocab import WordVocabulary

VIDEO_SUFFIXES = (".avi", ".mp4", ".mov", ".mkv")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
MAX_BOX_REUSE = 5
_PARTICIPANT_RE = re.compile(r"(?:^|[_\-])(p\d+)(?:[_\-]|$)", re.IGNORECASE)


def motion_energy(frames: np.ndarray) -> np.ndarray:
    """Mean absolute pixel difference between consecutive frames, length T-1."""
    d = np.abs(np.diff(frames.astype(np.float32), axis=0))
    return d.mean(axis=(1, 2, 3))


def segment_recording(
    seq: FrameSequence, word_count: int, gap: float = 1.0
) -> list[tuple[int, int]]:
    """Half-open (start_frame, end_frame) boundaries of the word utterances.

    Motion energy is thresholded at its median; quiet runs lasting at least
    gap/2 seconds separate bursts (shorter dips inside an utterance do not
    split it). Extra bursts are merged across the shortest separators; too
    few bursts mean the recording does not match the declared protocol.
    """
    if word_count < 1:
        raise ValueError("word_count must be >= 1")
    if gap <= 0:
        raise ValueError("gap must be > 0")
    t_total = seq.num_frames
    if word_count == 1:
        return [(0, t_total)]
    motion = motion_energy(seq.data)
    threshold = float(np.median(motion))
    quiet = motion <= threshold
    min_sep = max(1, math.ceil(gap / 2.0 * seq.fps))

    # Maximal quiet runs long enough to count as separators.
    separators = []
    i = 0
    n = motion.shape[0]
    while i < n:
        if quiet[i]:
            j = i
            while j < n and quiet[j]:
                j += 1
            if j - i >= min_sep:
                separators.append((i, j))
            i = j
        else:
            i += 1

    # Bursts are the index ranges between separators that contain activity.
    bursts = []
    prev_end = 0
    for s, e in separators + [(n, n)]:
        if s > prev_end and np.any(~quiet[prev_end:s]):
            bursts.append([prev_end, s])
        prev_end = e
    if len(bursts) < word_count:
        raise SegmentationError(
            f"found {len(bursts)} motion bursts, need {word_count}"
        )
    while len(bursts) > word_count:
        # Merge across the narrowest separator: least likely a true gap.
        gaps = [bursts[k + 1][0] - bursts[k][1] for k in range(len(bursts) - 1)]
        k = int(np.argmin(gaps))
        bursts[k][1] = bursts[k + 1][1]
        del bursts[k + 1]
    # Motion index i spans frames i..i+1, so a burst [a, b) covers a..b+1.
    return [(a, min(b + 1, t_total)) for a, b in bursts]


def crop_to_box(frame: np.ndarray, box: tuple[int, int, int, int]) -> np.ndarray:
    """Square crop around a box, replicate-padded at edges, resized to 300."""
    x, y, w, h = box
    side = max(w, h)
    cx = x + w / 2.0
    cy = y + h / 2.0
    x0 = int(round(cx - side / 2.0))
    y0 = int(round(cy - side / 2.0))
    fh, fw = frame.shape[:2]
    pad_left = max(0, -x0)
    pad_top = max(0, -y0)
    pad_right = max(0, x0 + side - fw)
    pad_bottom = max(0, y0 + side - fh)
    if pad_left or pad_top or pad_right or pad_bottom:
        frame = cv2.copyMakeBorder(
            frame, pad_top, pad_bottom, pad_left, pad_right, cv2.BORDER_REPLICATE
        )
        x0 += pad_left
        y0 += pad_top
    crop = frame[y0 : y0 + side, x0 : x0 + side]
    if side == FRAME_SIZE:
        return crop.copy()
    interp = cv2.INTER_AREA if side > FRAME_SIZE else cv2.INTER_LINEAR
    return cv2.resize(crop, (FRAME_SIZE, FRAME_SIZE), interpolation=interp)


def crop_face(frame: np.ndarray, detector) -> np.ndarray:
    """300x300 crop centered on the detected face."""
    box = detector.detect(frame)
    if box is None:
        raise NoFaceDetected("no face in frame")
    return crop_to_box(frame, box)


def crop_face_sequence(seq: FrameSequence, detector) -> FrameSequence:
    """Per-frame face crops with short-gap box reuse.

    Detector misses reuse the last good box for up to 5 consecutive frames;
    longer runs raise. Frames before the first detection are dropped (nothing
    to reuse yet), with the same 5-frame patience.
    """
    out = []
    last_box = None
    misses = 0
    for frame in seq.data:
        box = detector.detect(frame)
        if box is None:
            misses += 1
            if misses > MAX_BOX_REUSE:
                raise NoFaceDetected(
                    f"detector failed on {misses} consecutive frames in {seq.clip_id}"
                )
            if last_box is None:
                continue
            box = last_box
        else:
            misses = 0
            last_box = box
        out.append(crop_to_box(frame, box))
    if not out:
        raise NoFaceDetected(f"no face in any frame of {seq.clip_id}")
    return FrameSequence(data=np.stack(out), fps=seq.fps, clip_id=seq.clip_id)


def participant_from_name(name: str) -> str | None:
    m = _PARTICIPANT_RE.search(name)
    return m.group(1).lower() if m else None


def _probe_clip(path: Path) -> tuple[int, float] | None:
    """(frame_count, fps) from a clip header, or None if unreadable."""
    if path.is_dir():
        count = sum(1 for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if count == 0:
            return None
        fps = 20.0
        sidecar = path / "clip.json"
        if sidecar.exists():
            try:
                fps = float(json.loads(sidecar.read_text())["fps"])
            except (ValueError, KeyError, json.JSONDecodeError):
                return None
        return count, fps
    cap = cv2.VideoCapture(str(path))
    try:
        if not cap.isOpened():
            return None
        count = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
        fps = float(cap.get(cv2.CAP_PROP_FPS)) or 20.0
    finally:
        cap.release()
    if count < 1:
        return None
    return count, fps


def scan_class_directories(root, probe: bool = True) -> ClipManifest:
    """Manifest from a ``root/<class>/<clip>`` tree.

    Clips are video files or frame directories; labels come from the class
    directory names. Unreadable clips are excluded and listed in the
    manifest warnings.
    """
    root = Path(root)
    if not root.is_dir():
        raise EmptyCorpus(f"not a directory: {root}")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise EmptyCorpus(f"no class directories under {root}")
    vocab = WordVocabulary(tuple(d.name for d in class_dirs))

    found = []  # (stem, label, relpath, clip_path)
    for class_dir in class_dirs:
        for entry in sorted(class_dir.iterdir()):
            is_clip = entry.is_dir() or entry.suffix.lower() in VIDEO_SUFFIXES
            if not is_clip:
                continue
            found.append((entry.stem, class_dir.name, f"{class_dir.name}/{entry.name}", entry))

    stem_counts = Counter(stem for stem, _, _, _ in found)
    records = []
    warnings = []
    for stem, label, rel, path in found:
        # Stems are the natural ids; collisions across classes get prefixed.
        clip_id = stem if stem_counts[stem] == 1 else f"{label}_{stem}"
        frame_count = None
        fps = None
        if probe:
            probed = _probe_clip(path)
            if probed is None:
                warnings.append(f"unreadable clip excluded: {rel}")
                continue
            frame_count, fps = probed
        records.append(
            ClipRecord(
                clip_id=clip_id,
                path=rel,
                label=label,
                participant_id=participant_from_name(stem),
                frame_count=frame_count,
                fps=fps,
            )
        )
    if not records:
        raise EmptyCorpus(f"no readable clips under {root}")
    return ClipManifest(
        records=tuple(records),
        vocab=vocab,
        warnings=tuple(warnings),
        root=str(root),
    )


def build_dataset(
    input_root,
    output_root,
    reps: int = 1,
    gap: float = 1.0,
    face_detector=None,
    fps_default: float = 20.0,
) -> ClipManifest:
    """Segment, face-crop and store every recording under input_root.

    Each ``input/<word>/<recording>`` is split into ``reps`` single-word
    clips, face-cropped to 300x300, and written as a frame directory under
    ``output/<word>/``. Returns the saved manifest.
    """
    from .detectors import SyntheticFaceDetector

    input_root = Path(input_root)
    output_root = Path(output_root)
    if face_detector is None:
        face_detector = SyntheticFaceDetector()
    class_dirs = sorted(p for p in input_root.iterdir() if p.is_dir()) if input_root.is_dir() else []
    if not class_dirs:
        raise EmptyCorpus(f"no class directories under {input_root}")
    vocab = WordVocabulary(tuple(d.name for d in class_dirs))

    records = []
    warnings = []
    for class_dir in class_dirs:
        word = class_dir.name
        entries = sorted(
            p
            for p in class_dir.iterdir()
            if p.is_dir() or p.suffix.lower() in VIDEO_SUFFIXES
        )
        for entry in entries:
            seq = decode_clip(entry)
            participant = participant_from_name(entry.stem)
            try:
                bounds = segment_recording(seq, reps, gap)
            except SegmentationError as exc:
                warnings.append(f"skipped {word}/{entry.name}: {exc}")
                continue
            for k, (s, e) in enumerate(bounds):
                clip_id = f"{word}_{entry.stem}_{k:03d}" if reps > 1 else f"{word}_{entry.stem}"
                part = FrameSequence(data=seq.data[s:e], fps=seq.fps or fps_default, clip_id=clip_id)
                cropped = crop_face_sequence(part, face_detector)
                clip_dir = output_root / word / clip_id
                write_frame_dir(cropped, clip_dir)
                records.append(
                    ClipRecord(
                        clip_id=clip_id,
                        path=f"{word}/{clip_id}",
                        label=word,
                        participant_id=participant,
                        frame_count=cropped.num_frames,
                        fps=cropped.fps,
                    )
                )
    if not records:
        raise EmptyCorpus(f"no clips produced from {input_root}")
    manifest = ClipManifest(
        records=tuple(records), vocab=vocab, warnings=tuple(warnings), root=str(output_root)
    )
    output_root.mkdir(parents=True, exist_ok=True)
    manifest.save(output_root / "manifest.jsonl")
    return manifest
