"""Classifier contracts: model specs, prediction, checkpoints.

Three methods: indirect_cnn classifies normalized landmark tensors through a
small image backbone (mobile, vgg or resnet flavor); direct_cnn classifies
single frames and aggregates a clip by mean softmax; direct_lstm classifies
the whole 20-frame sequence through a time-distributed encoder and an LSTM.

Direct models apply a parameter-free 10x10 average-pool stem (300 -> 30 per
side) before their networks; `preprocess` exposes it so training can cache
stem outputs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import CHECKPOINT_FORMAT_VERSION, TOOL_ID
from .errors import CorruptCheckpoint, InvalidSpec, MissingCheckpoint, ShapeMismatch
from .frames import TARGET_FRAMES, FrameSequence, standardize_frames
from .kernels import avgpool_forward
from .landmarks import LipTensor
from .nn.architectures import DIRECT_SIDE, INDIRECT_BACKBONES, STEM_POOL, build_network
from .nn.network import Sequential, softmax
from .vocab import WordVocabulary

METHODS = ("indirect_cnn", "direct_cnn", "direct_lstm")

_DEFAULT_SHAPES = {
    "indirect_cnn": (20, 20, 2),
    "direct_cnn": (300, 300, 3),
    "direct_lstm": (20, 300, 300, 3),
}


@dataclass(frozen=True)
class ModelSpec:
    method: str
    num_classes: int
    backbone: str | None = None
    input_shape: tuple = ()
    hyperparams: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidSpec(f"unknown method: {self.method!r}")
        if self.num_classes < 2:
            raise InvalidSpec("num_classes must be >= 2")
        if self.method == "indirect_cnn":
            if self.backbone not in INDIRECT_BACKBONES:
                raise InvalidSpec(
                    f"indirect_cnn needs backbone in {INDIRECT_BACKBONES}, got {self.backbone!r}"
                )
        elif self.backbone is not None:
            raise InvalidSpec(f"{self.method} takes no backbone")
        shape = tuple(self.input_shape) or _DEFAULT_SHAPES[self.method]
        if shape != _DEFAULT_SHAPES[self.method]:
            raise InvalidSpec(
                f"{self.method} input shape must be {_DEFAULT_SHAPES[self.method]}, got {shape}"
            )
        object.__setattr__(self, "input_shape", shape)
        object.__setattr__(self, "hyperparams", dict(self.hyperparams))

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "num_classes": self.num_classes,
            "backbone": self.backbone,
            "input_shape": list(self.input_shape),
            "hyperparams": self.hyperparams,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ModelSpec":
        return cls(
            method=obj["method"],
            num_classes=obj["num_classes"],
            backbone=obj.get("backbone"),
            input_shape=tuple(obj.get("input_shape", ())),
            hyperparams=obj.get("hyperparams", {}),
        )


@dataclass(frozen=True)
class Prediction:
    label: str
    class_id: int
    confidence: float
    distribution: np.ndarray


@dataclass
class TrainedModel:
    spec: ModelSpec
    network: Sequential
    vocab: WordVocabulary
    fingerprint: dict = field(default_factory=dict)

    def preprocess(self, frames: np.ndarray) -> np.ndarray:
        """Stem for direct methods: 10x10 average pool over each frame."""
        if self.spec.method == "indirect_cnn":
            return frames
        x = np.asarray(frames, dtype=np.float64)
        squeeze = x.ndim == 3
        if squeeze:
            x = x[None]
        if x.shape[1:] != (300, 300, 3):
            raise ShapeMismatch(f"stem expects (*, 300, 300, 3), got {x.shape}")
        y = avgpool_forward(x, STEM_POOL)
        return y[0] if squeeze else y

    def forward(self, batch: np.ndarray, train: bool = False) -> np.ndarray:
        return self.network.forward(np.asarray(batch, dtype=np.float64), train=train)

    def _distribution(self, features) -> np.ndarray:
        method = self.spec.method
        if method == "indirect_cnn":
            if isinstance(features, LipTensor):
                data = features.data
            else:
                data = np.asarray(features, dtype=np.float64)
            if data.shape != (20, 20, 2):
                raise ShapeMismatch(f"indirect features must be (20, 20, 2), got {data.shape}")
            return softmax(self.forward(data[None]))[0]

        if isinstance(features, FrameSequence):
            seq = standardize_frames(features)
            frames = seq.data.astype(np.float64)
        else:
            frames = np.asarray(features, dtype=np.float64)
        if frames.ndim != 4 or frames.shape[0] != TARGET_FRAMES:
            raise ShapeMismatch(
                f"direct features must be ({TARGET_FRAMES}, H, W, 3), got {frames.shape}"
            )
        if frames.shape[1:] == (300, 300, 3):
            frames = self.preprocess(frames)
        elif frames.shape[1:] != (DIRECT_SIDE, DIRECT_SIDE, 3):
            raise ShapeMismatch(f"unexpected frame shape {frames.shape}")
        if method == "direct_cnn":
            per_frame = softmax(self.forward(frames))
            return per_frame.mean(axis=0)
        return softmax(self.forward(frames[None]))[0]

    def clip_probs(self, clips: np.ndarray, chunk: int = 512) -> np.ndarray:
        """Distributions for a stack of already-preprocessed clips.

        indirect_cnn: (M, 20, 20, 2); direct methods: (M, 20, 30, 30, 3),
        with direct_cnn averaging its per-frame softmax within each clip.
        """
        clips = np.asarray(clips)
        method = self.spec.method
        if method == "direct_cnn":
            if clips.ndim != 5:
                raise ShapeMismatch(f"expected clip stack, got {clips.shape}")
            m, t = clips.shape[:2]
            flat = clips.reshape(m * t, *clips.shape[2:])
            probs = self._forward_probs(flat, chunk)
            return probs.reshape(m, t, -1).mean(axis=1)
        return self._forward_probs(clips, chunk)

    def _forward_probs(self, batch: np.ndarray, chunk: int) -> np.ndarray:
        parts = [
            softmax(self.forward(batch[i : i + chunk].astype(np.float64)))
            for i in range(0, len(batch), chunk)
        ]
        return np.concatenate(parts, axis=0)

    def predict_clip(self, features) -> Prediction:
        dist = self._distribution(features)
        class_id = int(np.argmax(dist))
        return Prediction(
            label=self.vocab.word_of(class_id),
            class_id=class_id,
            confidence=float(dist[class_id]),
            distribution=dist,
        )


def build_model(spec: ModelSpec, vocab: WordVocabulary, seed: int = 0) -> TrainedModel:
    if len(vocab) != spec.num_classes:
        raise InvalidSpec(
            f"vocab size {len(vocab)} != num_classes {spec.num_classes}"
        )
    network = build_network(spec.method, spec.backbone, spec.num_classes, spec.hyperparams)
    network.initialize(seed)
    return TrainedModel(
        spec=spec,
        network=network,
        vocab=vocab,
        fingerprint={"init_seed": seed, "trained": False},
    )


def _weights_bytes(path: Path) -> bytes:
    return path.read_bytes()


def save_model(model: TrainedModel, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    weights_path = out_dir / "weights.npz"
    np.savez(weights_path, **model.network.state_dict())
    meta = {
        "format": "lipread-checkpoint",
        "version": CHECKPOINT_FORMAT_VERSION,
        "created_with": TOOL_ID,
        "spec": model.spec.to_json(),
        "vocab": model.vocab.to_list(),
        "fingerprint": model.fingerprint,
        "weights_sha256": hashlib.sha256(_weights_bytes(weights_path)).hexdigest(),
    }
    (out_dir / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out_dir


def load_model(model_dir) -> TrainedModel:
    model_dir = Path(model_dir)
    meta_path = model_dir / "metadata.json"
    weights_path = model_dir / "weights.npz"
    if not meta_path.exists() or not weights_path.exists():
        raise MissingCheckpoint(f"no checkpoint at {model_dir}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise CorruptCheckpoint(f"unreadable metadata: {exc}") from exc
    if meta.get("format") != "lipread-checkpoint":
        raise CorruptCheckpoint(f"not a checkpoint: {model_dir}")
    if meta.get("version") != CHECKPOINT_FORMAT_VERSION:
        raise CorruptCheckpoint(f"unsupported checkpoint version: {meta.get('version')}")
    digest = hashlib.sha256(_weights_bytes(weights_path)).hexdigest()
    if digest != meta.get("weights_sha256"):
        raise CorruptCheckpoint(f"weights hash mismatch in {model_dir}")
    spec = ModelSpec.from_json(meta["spec"])
    vocab = WordVocabulary(tuple(meta["vocab"]))
    network = build_network(spec.method, spec.backbone, spec.num_classes, spec.hyperparams)
    try:
        with np.load(weights_path) as blob:
            network.load_state_dict({k: blob[k] for k in blob.files})
    except (ValueError, OSError, ShapeMismatch) as exc:
        raise CorruptCheckpoint(f"cannot restore weights: {exc}") from exc
    return TrainedModel(
        spec=spec, network=network, vocab=vocab, fingerprint=meta.get("fingerprint", {})
    )
