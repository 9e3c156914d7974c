"""Pluggable face and landmark detectors.

Detectors are looked up by registry name or by a ``module:attr`` dotted path,
so external detector implementations can be used without touching this
package. The synthetic detectors are matched to the synthetic renderer's
palette and geometry; the Haar face detector handles real camera frames via
the classifier files bundled with OpenCV.

A landmark detector maps a frame to a full 68-point layout (or None on
failure); callers select the mouth subset. A face detector maps a frame to
one (x, y, w, h) box or None.
"""

from __future__ import annotations

import importlib
import math

import cv2
import numpy as np

from .errors import InvalidSpec
from .synth import FACE_AXES, FACE_CENTER, mouth_landmarks

NUM_LANDMARKS = 68
MOUTH_SLICE = slice(48, 68)

# Color windows sized for the renderer palette under +-10% brightness.
_LIP_LO, _LIP_HI = (145, 45, 42), (200, 88, 82)
_MOUTH_LO, _MOUTH_HI = (45, 8, 12), (75, 32, 40)
_SKIN_LO, _SKIN_HI = (180, 148, 128), (230, 192, 168)


def _as_u8_rgb(frame: np.ndarray) -> np.ndarray:
    if frame.dtype == np.uint8:
        return frame
    return np.clip(np.rint(np.asarray(frame, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def _static_face_points() -> np.ndarray:
    """Deterministic non-mouth landmarks (indices 0..47) on the canvas face."""
    cx, cy = FACE_CENTER
    ax, ay = FACE_AXES
    pts = np.empty((48, 2), dtype=np.float64)
    for j in range(17):  # jaw line along the lower face oval
        a = math.pi * (1.0 - j / 16.0)  # 180deg -> 0deg through the bottom
        pts[j] = (cx - ax * math.cos(a), cy + ay * math.sin(a))
    for j in range(5):  # brows
        pts[17 + j] = (cx - 58 + 10 * j, cy - 55)
        pts[22 + j] = (cx + 18 + 10 * j, cy - 55)
    for j in range(4):  # nose bridge
        pts[27 + j] = (cx, cy + 5 + 8 * j)
    for j in range(5):  # nostril line
        pts[31 + j] = (cx - 10 + 5 * j, cy + 32)
    for j in range(6):  # eyes
        a = 2.0 * math.pi * j / 6.0
        pts[36 + j] = (cx - 38 + 13 * math.cos(a), cy - 40 + 7 * math.sin(a))
        pts[42 + j] = (cx + 38 + 13 * math.cos(a), cy - 40 + 7 * math.sin(a))
    return pts


class SyntheticLandmarkDetector:
    """Moment fit of the rendered mouth ellipse.

    The union of the lip and mouth-interior color masks is the filled outer
    ellipse; its centroid and second moments recover center, semi-axes and
    tilt (for a filled ellipse the covariance eigenvalues are a^2/4, b^2/4).
    Stateless and shareable across workers.
    """

    min_area = 100.0

    def __init__(self):
        self._static = _static_face_points()

    def detect(self, frame: np.ndarray) -> np.ndarray | None:
        rgb = _as_u8_rgb(frame)
        mask = cv2.inRange(rgb, _LIP_LO, _LIP_HI) | cv2.inRange(rgb, _MOUTH_LO, _MOUTH_HI)
        m = cv2.moments(mask, binaryImage=True)
        if m["m00"] < self.min_area:
            return None
        cx = m["m10"] / m["m00"]
        cy = m["m01"] / m["m00"]
        cov = np.array(
            [[m["mu20"], m["mu11"]], [m["mu11"], m["mu02"]]], dtype=np.float64
        ) / m["m00"]
        evals, evecs = np.linalg.eigh(cov)
        if evals[0] <= 0.0:
            return None
        b = 2.0 * math.sqrt(evals[0])
        a = 2.0 * math.sqrt(evals[1])
        v = evecs[:, 1]
        if v[0] < 0 or (v[0] == 0 and v[1] < 0):
            v = -v
        tilt = math.degrees(math.atan2(v[1], v[0]))
        out = np.empty((NUM_LANDMARKS, 2), dtype=np.float64)
        out[:48] = self._static
        out[MOUTH_SLICE] = mouth_landmarks(cx, cy, a, b, tilt)
        return out


class StubLandmarkDetector:
    """Constant layout; for throughput tests and wiring checks."""

    def __init__(self):
        out = np.empty((NUM_LANDMARKS, 2), dtype=np.float64)
        out[:48] = _static_face_points()
        out[MOUTH_SLICE] = mouth_landmarks(150.0, 210.0, 30.0, 12.0, 0.0)
        self._layout = out

    def detect(self, frame: np.ndarray) -> np.ndarray | None:
        return self._layout.copy()


class SyntheticFaceDetector:
    """Bounding box of skin- and mouth-colored pixels."""

    min_area = 400.0

    def detect(self, frame: np.ndarray) -> tuple[int, int, int, int] | None:
        rgb = _as_u8_rgb(frame)
        mask = (
            cv2.inRange(rgb, _SKIN_LO, _SKIN_HI)
            | cv2.inRange(rgb, _LIP_LO, _LIP_HI)
            | cv2.inRange(rgb, _MOUTH_LO, _MOUTH_HI)
        )
        if int(np.count_nonzero(mask)) < self.min_area:
            return None
        x, y, w, h = cv2.boundingRect(mask)
        return (x, y, w, h)


class HaarFaceDetector:
    """Frontal-face cascade from the classifier files bundled with OpenCV."""

    def __init__(self):
        path = cv2.data.haarcascades + "haarcascade_frontalface_default.xml"
        self._cascade = cv2.CascadeClassifier(path)
        if self._cascade.empty():
            raise InvalidSpec(f"cannot load face cascade: {path}")

    def detect(self, frame: np.ndarray) -> tuple[int, int, int, int] | None:
        gray = cv2.cvtColor(_as_u8_rgb(frame), cv2.COLOR_RGB2GRAY)
        boxes = self._cascade.detectMultiScale(gray, scaleFactor=1.1, minNeighbors=4)
        if len(boxes) == 0:
            return None
        x, y, w, h = max(boxes, key=lambda b: b[2] * b[3])
        return (int(x), int(y), int(w), int(h))


class FixedBoxFaceDetector:
    """Always the same box; for tests and known-geometry sources."""

    def __init__(self, box: tuple[int, int, int, int]):
        self.box = tuple(int(v) for v in box)

    def detect(self, frame: np.ndarray) -> tuple[int, int, int, int] | None:
        return self.box


FACE_DETECTORS = {
    "synthetic": SyntheticFaceDetector,
    "haar": HaarFaceDetector,
}

LANDMARK_DETECTORS = {
    "synthetic": SyntheticLandmarkDetector,
    "stub": StubLandmarkDetector,
}


def _load_dotted(name: str):
    mod_name, _, attr = name.partition(":")
    if not attr:
        raise InvalidSpec(f"unknown detector: {name!r}")
    try:
        factory = getattr(importlib.import_module(mod_name), attr)
    except (ImportError, AttributeError) as exc:
        raise InvalidSpec(f"cannot load detector {name!r}: {exc}") from exc
    return factory()


def get_face_detector(name: str):
    if name in FACE_DETECTORS:
        return FACE_DETECTORS[name]()
    return _load_dotted(name)


def get_landmark_detector(name: str):
    if name in LANDMARK_DETECTORS:
        return LANDMARK_DETECTORS[name]()
    return _load_dotted(name)
