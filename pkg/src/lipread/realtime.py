"""Live recognition: sliding window over a frame stream, command dispatch.

A rolling buffer holds per-frame features for the most recent `window`
frames (memory stays bounded no matter how long the stream runs). Every
`stride` new frames a prediction runs on the newest full window; words at or
above the confidence threshold dispatch their bound robot action unless the
same word fired within the cooldown. Frames that fall out of the buffer
without ever being inside an evaluated window are counted as drops.

Timing for cooldowns uses stream time (frame index / fps) so replayed
streams behave identically run to run; per-event latency is wall-clock.
"""

from __future__ import annotations

import json
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .detectors import SyntheticLandmarkDetector
from .errors import (
    AllFramesInvalid,
    DegenerateGeometry,
    InvalidSpec,
    RobotUnavailable,
    SourceClosed,
)
from .frames import FRAME_SIZE, TARGET_FRAMES, letterbox, standard_indices
from .kernels import avgpool_forward
from .landmarks import (
    NUM_MOUTH_POINTS,
    LandmarkFrame,
    LandmarkSequence,
    normalize,
    standardize_length,
)
from .models import TrainedModel
from .nn.architectures import STEM_POOL
from .synth import FPS as SYNTH_FPS
from .synth import make_scripted_stream
from .vocab import WordVocabulary


@dataclass(frozen=True)
class WindowConfig:
    window: int = TARGET_FRAMES
    stride: int = 5
    confidence_threshold: float = 0.7
    cooldown: float = 1.0

    def __post_init__(self):
        if self.window < 1:
            raise InvalidSpec("window must be >= 1")
        if not 1 <= self.stride <= self.window:
            raise InvalidSpec("stride must satisfy 1 <= stride <= window")
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise InvalidSpec("confidence threshold must be in [0, 1]")
        if self.cooldown < 0:
            raise InvalidSpec("cooldown must be >= 0")


@dataclass(frozen=True)
class CommandBinding:
    word: str
    action: str
    requires_object: bool = False


DEFAULT_ACTIONS = {
    "salam": "greet",
    "bro": "go",
    "bia": "come",
    "khodahafez": "farewell",
    "surena": "attend",
    "begir": "take",
    "benevis": "write",
}


def default_bindings(vocab: WordVocabulary) -> dict[str, CommandBinding]:
    bindings = {}
    for word in vocab.to_list():
        action = DEFAULT_ACTIONS.get(word, word)
        bindings[word] = CommandBinding(
            word=word, action=action, requires_object=(word == "begir")
        )
    return bindings


def load_bindings(path, vocab: WordVocabulary) -> dict[str, CommandBinding]:
    entries = json.loads(Path(path).read_text())
    bindings = {
        e["word"]: CommandBinding(
            word=e["word"],
            action=e["action"],
            requires_object=bool(e.get("requires_object", False)),
        )
        for e in entries
    }
    missing = set(vocab.to_list()) - set(bindings)
    extra = set(bindings) - set(vocab.to_list())
    if missing or extra:
        raise InvalidSpec(
            f"bindings must cover the vocabulary exactly; "
            f"missing={sorted(missing)} extra={sorted(extra)}"
        )
    return bindings


def save_bindings(bindings: dict[str, CommandBinding], path) -> None:
    payload = [
        {"word": b.word, "action": b.action, "requires_object": b.requires_object}
        for _, b in sorted(bindings.items())
    ]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


@dataclass(frozen=True)
class DispatchEvent:
    timestamp: float  # stream seconds
    word: str
    confidence: float
    action: str
    object_label: str | None
    delivered: bool
    latency: float  # wall seconds, window-complete to dispatch decision
    drops: int  # cumulative dropped frames at dispatch time

    def to_json(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "word": self.word,
            "confidence": self.confidence,
            "action": self.action,
            "object": self.object_label,
            "delivered": self.delivered,
            "latency": self.latency,
            "drops": self.drops,
        }


@dataclass
class LiveLog:
    events: list = field(default_factory=list)
    frames_seen: int = 0
    frames_dropped: int = 0
    windows_evaluated: int = 0
    windows_skipped: int = 0  # windows with no usable face geometry
    wall_time: float = 0.0

    @property
    def windows_per_second(self) -> float:
        return self.windows_evaluated / self.wall_time if self.wall_time > 0 else 0.0


def write_event_log(log: LiveLog, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for event in log.events:
            fh.write(json.dumps(event.to_json(), sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------- robots


class MockRobot:
    """Records dispatched actions; can be switched into a failure mode."""

    def __init__(self, available: bool = True):
        self.available = available
        self.calls: list[tuple[str, str | None, float]] = []

    def dispatch(self, action: str, object_label: str | None = None) -> str:
        if not self.available:
            return "unavailable"
        self.calls.append((action, object_label, time.perf_counter()))
        return "ack"


def mock_robot(available: bool = True) -> MockRobot:
    return MockRobot(available=available)


class SocketRobotClient:
    """Sends one JSON line per command to a TCP endpoint; any transport
    problem reports the robot as unavailable rather than killing the loop."""

    def __init__(self, host: str, port: int, timeout: float = 1.0):
        self.host = host
        self.port = port
        self.timeout = timeout

    def dispatch(self, action: str, object_label: str | None = None) -> str:
        import socket

        payload = json.dumps({"action": action, "object": object_label}) + "\n"
        try:
            with socket.create_connection(
                (self.host, self.port), timeout=self.timeout
            ) as conn:
                conn.sendall(payload.encode())
                reply = conn.recv(64).decode().strip()
            return "ack" if reply == "ack" else "unavailable"
        except OSError:
            return "unavailable"


class StubObjectDetector:
    """Object-detector interface stand-in returning a configured label."""

    def __init__(self, label: str | None = "object"):
        self.label = label

    def detect(self, frame) -> str | None:
        return self.label


# ---------------------------------------------------------------- sources


class ArrayFrameSource:
    """Replays an in-memory frame stack; `chunk` frames arrive per drain so
    tests can simulate capture outpacing inference."""

    def __init__(self, frames: np.ndarray, fps: float = SYNTH_FPS, chunk: int = 1):
        if chunk < 1:
            raise InvalidSpec("chunk must be >= 1")
        self.frames = np.asarray(frames)
        self.fps = float(fps)
        self.chunk = chunk
        self._next = 0

    def read_batch(self) -> list[np.ndarray]:
        if self._next >= len(self.frames):
            raise SourceClosed("stream exhausted")
        stop = min(self._next + self.chunk, len(self.frames))
        batch = [self.frames[i] for i in range(self._next, stop)]
        self._next = stop
        return batch

    def close(self) -> None:
        self._next = len(self.frames)


class CaptureSource:
    """cv2.VideoCapture wrapper for camera indices and video files."""

    def __init__(self, target, fps_default: float = SYNTH_FPS):
        self.cap = cv2.VideoCapture(target)
        if not self.cap.isOpened():
            raise SourceClosed(f"cannot open source {target!r}")
        fps = self.cap.get(cv2.CAP_PROP_FPS)
        self.fps = float(fps) if fps and fps > 0 else fps_default
        self._closed = False

    def read_batch(self) -> list[np.ndarray]:
        if self._closed:
            raise SourceClosed("capture closed")
        ok, frame_bgr = self.cap.read()
        if not ok:
            self.close()
            raise SourceClosed("capture ended")
        rgb = cv2.cvtColor(frame_bgr, cv2.COLOR_BGR2RGB)
        frame = letterbox(rgb.astype(np.float32) / 255.0, FRAME_SIZE)
        return [frame]

    def close(self) -> None:
        if not self._closed:
            self.cap.release()
            self._closed = True


def make_source(spec: str, seed: int = 0, fps_default: float = SYNTH_FPS):
    """Builds a frame source from 'synth:word,word', 'file:PATH', or
    'camera:N'."""
    kind, _, arg = spec.partition(":")
    if kind == "synth":
        words = [w for w in arg.split(",") if w] or ["bia", "begir"]
        frames, _ = make_scripted_stream(words, WordVocabulary.default(), seed=seed)
        return ArrayFrameSource(frames, fps=SYNTH_FPS)
    if kind == "file":
        if not arg:
            raise InvalidSpec("file source needs a path: file:PATH")
        return CaptureSource(arg, fps_default=fps_default)
    if kind == "camera":
        return CaptureSource(int(arg or 0), fps_default=fps_default)
    raise InvalidSpec(f"unknown source {spec!r}; use synth:, file:, or camera:")


# ---------------------------------------------------------------- features


class _StemFeatures:
    """Per-frame 10x10 average pooling for the direct methods."""

    def per_frame(self, frame: np.ndarray):
        pooled = avgpool_forward(
            frame[None].astype(np.float64), STEM_POOL
        )[0]
        return pooled.astype(np.float32)

    def window_features(self, feats: list, fps: float) -> np.ndarray:
        stack = np.stack(feats)
        idx = standard_indices(len(stack), TARGET_FRAMES)
        return stack[idx].astype(np.float64)


class _LandmarkFeatures:
    """Per-frame mouth-landmark detection for the indirect method."""

    def __init__(self, detector=None):
        self.detector = detector or SyntheticLandmarkDetector()

    def per_frame(self, frame: np.ndarray):
        layout = self.detector.detect(frame)
        if layout is None:
            return LandmarkFrame(points=np.zeros((NUM_MOUTH_POINTS, 2)), valid=False)
        return LandmarkFrame(points=np.asarray(layout, dtype=np.float64)[48:68], valid=True)

    def window_features(self, feats: list, fps: float):
        seq = LandmarkSequence(frames=tuple(feats), fps=fps, clip_id="live")
        return normalize(standardize_length(seq)).data


def _features_for(model: TrainedModel, landmark_detector):
    if model.spec.method == "indirect_cnn":
        return _LandmarkFeatures(detector=landmark_detector)
    return _StemFeatures()


# ---------------------------------------------------------------- loop


def run_live(
    source,
    model: TrainedModel,
    cfg: WindowConfig,
    bindings: dict[str, CommandBinding],
    robot,
    detector=None,
    landmark_detector=None,
    max_windows: int | None = None,
) -> LiveLog:
    vocab_words = set(model.vocab.to_list())
    if set(bindings) != vocab_words:
        raise InvalidSpec("bindings must cover the model vocabulary exactly")

    extractor = _features_for(model, landmark_detector)
    buffer: deque = deque(maxlen=cfg.window)
    log = LiveLog()
    covered_up_to = -1
    since_infer = 0
    last_fired: dict[str, float] = {}
    fps = getattr(source, "fps", SYNTH_FPS)
    started = time.perf_counter()

    while True:
        try:
            batch = source.read_batch()
        except SourceClosed:
            break
        for frame in batch:
            seq_no = log.frames_seen
            if len(buffer) == buffer.maxlen and seq_no - cfg.window > covered_up_to:
                log.frames_dropped += 1  # evicted before any window used it
            buffer.append(extractor.per_frame(frame))
            log.frames_seen += 1
            since_infer += 1

        if len(buffer) < cfg.window or since_infer < cfg.stride:
            continue
        since_infer = 0
        tick = time.perf_counter()
        newest = log.frames_seen - 1
        stream_t = newest / fps
        covered_up_to = newest
        try:
            features = extractor.window_features(list(buffer), fps)
            pred = model.predict_clip(features)
        except (AllFramesInvalid, DegenerateGeometry):
            log.windows_skipped += 1
            continue
        log.windows_evaluated += 1
        if pred.confidence >= cfg.confidence_threshold:
            word = pred.label
            fired_at = last_fired.get(word)
            if fired_at is None or stream_t - fired_at >= cfg.cooldown:
                binding = bindings[word]
                object_label = None
                if binding.requires_object and detector is not None:
                    object_label = detector.detect(batch[-1] if batch else None)
                try:
                    status = robot.dispatch(binding.action, object_label)
                except RobotUnavailable:
                    status = "unavailable"
                log.events.append(
                    DispatchEvent(
                        timestamp=stream_t,
                        word=word,
                        confidence=float(pred.confidence),
                        action=binding.action,
                        object_label=object_label,
                        delivered=status == "ack",
                        latency=time.perf_counter() - tick,
                        drops=log.frames_dropped,
                    )
                )
                last_fired[word] = stream_t
        if max_windows is not None and log.windows_evaluated >= max_windows:
            break

    log.wall_time = time.perf_counter() - started
    return log
