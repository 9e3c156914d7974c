"""Feature pipelines: decode manifest clips into model-ready arrays.

Two feature families feed the classifiers. The landmark pipeline turns a
clip into a normalized (20, 20, 2) mouth-trajectory tensor; the stem
pipeline turns it into 20 pooled 30x30 frames. Both can cache per-clip
results under a directory so repeated training runs skip decoding.

Training granularity differs by method: direct_cnn learns from individual
frames (clip labels broadcast to every frame), the other methods from whole
clips. `samples` yields training units, `clips` yields one row per clip for
clip-level evaluation.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .detectors import SyntheticLandmarkDetector
from .errors import EmptySplit
from .frames import FrameSequence, decode_clip, standardize_frames
from .kernels import avgpool_forward
from .landmarks import (
    clip_to_tensor,
    extract_landmarks,
    load_landmark_cache,
    normalize,
    save_landmark_cache,
    standardize_length,
)
from .manifest import ClipManifest, ClipRecord
from .nn.architectures import DIRECT_SIDE, STEM_POOL
from .vocab import encode_labels


def _safe_name(clip_id: str) -> str:
    return clip_id.replace("/", "_").replace("\\", "_")


class LandmarkPipeline:
    """Clip -> normalized mouth-landmark tensor (20, 20, 2) float64."""

    method = "indirect_cnn"
    sample_shape = (20, 20, 2)

    def __init__(self, detector=None, cache_dir=None):
        self.detector = detector or SyntheticLandmarkDetector()
        self.cache_dir = Path(cache_dir) / "landmarks" if cache_dir else None

    def clip_features(self, seq: FrameSequence) -> np.ndarray:
        return clip_to_tensor(seq, self.detector).data

    def load_clip(self, manifest: ClipManifest, record: ClipRecord) -> np.ndarray:
        if self.cache_dir is not None:
            cache = self.cache_dir / f"{_safe_name(record.clip_id)}.lmk"
            if cache.exists():
                raw = load_landmark_cache(cache)
            else:
                raw = extract_landmarks(
                    decode_clip(manifest.resolve_path(record), record.clip_id),
                    self.detector,
                )
                self.cache_dir.mkdir(parents=True, exist_ok=True)
                save_landmark_cache(raw, cache)
            return normalize(standardize_length(raw)).data
        seq = decode_clip(manifest.resolve_path(record), record.clip_id)
        return self.clip_features(seq)

    def _stack(self, manifest, records):
        xs = np.stack([self.load_clip(manifest, r) for r in records])
        return xs.astype(np.float64)

    def clips(self, manifest: ClipManifest, split: str | None = None):
        records = _records(manifest, split)
        x = self._stack(manifest, records)
        y = encode_labels([r.label for r in records], manifest.vocab)
        return x, y

    samples = clips  # one training sample per clip


class StemPipeline:
    """Clip -> 20 stem-pooled frames (20, 30, 30, 3) float32."""

    sample_shape = (DIRECT_SIDE, DIRECT_SIDE, 3)

    def __init__(self, method: str = "direct_lstm", cache_dir=None):
        if method not in ("direct_cnn", "direct_lstm"):
            raise ValueError(f"stem pipeline serves direct methods, not {method!r}")
        self.method = method
        self.cache_dir = Path(cache_dir) / "stem" if cache_dir else None

    def clip_features(self, seq: FrameSequence) -> np.ndarray:
        frames = standardize_frames(seq).data.astype(np.float64)
        return avgpool_forward(frames, STEM_POOL).astype(np.float32)

    def load_clip(self, manifest: ClipManifest, record: ClipRecord) -> np.ndarray:
        if self.cache_dir is not None:
            cache = self.cache_dir / f"{_safe_name(record.clip_id)}.npy"
            if cache.exists():
                return np.load(cache)
            feats = self.clip_features(
                decode_clip(manifest.resolve_path(record), record.clip_id)
            )
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            np.save(cache, feats)
            return feats
        return self.clip_features(
            decode_clip(manifest.resolve_path(record), record.clip_id)
        )

    def clips(self, manifest: ClipManifest, split: str | None = None):
        records = _records(manifest, split)
        x = np.stack([self.load_clip(manifest, r) for r in records])
        y = encode_labels([r.label for r in records], manifest.vocab)
        return x, y

    def samples(self, manifest: ClipManifest, split: str | None = None):
        x, y = self.clips(manifest, split)
        if self.method == "direct_lstm":
            return x, y
        t = x.shape[1]
        frames = x.reshape(x.shape[0] * t, *x.shape[2:])
        return frames, np.repeat(y, t)


def _records(manifest: ClipManifest, split: str | None):
    records = manifest.subset(split).records if split else manifest.records
    if not records:
        raise EmptySplit(f"no records in split {split!r}")
    return records


def make_pipeline(method: str, detector=None, cache_dir=None):
    if method == "indirect_cnn":
        return LandmarkPipeline(detector=detector, cache_dir=cache_dir)
    return StemPipeline(method=method, cache_dir=cache_dir)
