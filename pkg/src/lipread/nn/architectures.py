"""Network definitions for the three methods.

Direct models run behind a parameter-free 10x10 average-pool stem
(300 -> 30 per side) applied by the model wrapper, so the networks here see
30x30 inputs; the landmark networks see the (20, 20, 2) tensor as a
two-channel image. `width_mult` in the hyperparams scales channel counts,
which the gradient checks use to build toy-width variants.
"""

from __future__ import annotations

from .layers import (
    Conv2D,
    Dense,
    DepthwiseConv2D,
    Dropout,
    Flatten,
    GlobalAvgPool,
    LSTM,
    MaxPool2D,
    ReLU,
    Residual,
    TimeDistributed,
)
from .network import Sequential

STEM_POOL = 10  # 300x300 -> 30x30, no parameters
DIRECT_SIDE = 30

INDIRECT_BACKBONES = ("mobile", "vgg", "resnet")


def _ch(base: int, mult: float) -> int:
    return max(2, int(round(base * mult)))


def build_direct_cnn(num_classes: int, hp: dict) -> Sequential:
    m = hp.get("width_mult", 1.0)
    drop = hp.get("dropout", 0.5)
    c1, c2, c3 = _ch(16, m), _ch(32, m), _ch(64, m)
    # 30 -> 15 -> 7 -> 3
    return Sequential(
        [
            Conv2D(3, c1),
            ReLU(),
            MaxPool2D(2),
            Conv2D(c1, c2),
            ReLU(),
            MaxPool2D(2),
            Conv2D(c2, c3),
            ReLU(),
            MaxPool2D(2),
            Flatten(),
            Dropout(drop),
            Dense(3 * 3 * c3, num_classes),
        ]
    )


def build_direct_lstm(num_classes: int, hp: dict) -> Sequential:
    m = hp.get("width_mult", 1.0)
    hidden = _ch(hp.get("lstm_hidden", 128), m)
    dense = _ch(hp.get("dense_units", 64), m)
    e1, e2 = _ch(8, m), _ch(16, m)
    encoder = Sequential(
        [
            Conv2D(3, e1),
            ReLU(),
            MaxPool2D(2),
            Conv2D(e1, e2),
            ReLU(),
            MaxPool2D(2),
            Flatten(),
        ]
    )
    feat = 7 * 7 * e2
    return Sequential(
        [
            TimeDistributed(encoder),
            LSTM(feat, hidden),
            Dense(hidden, dense),
            ReLU(),
            Dense(dense, num_classes),
        ]
    )


def build_indirect_mobile(num_classes: int, hp: dict) -> Sequential:
    m = hp.get("width_mult", 1.0)
    c1, c2, c3 = _ch(16, m), _ch(32, m), _ch(64, m)
    # 20 -> 10 via pool; depthwise-separable blocks as in the mobile family
    return Sequential(
        [
            Conv2D(2, c1),
            ReLU(),
            DepthwiseConv2D(c1),
            ReLU(),
            Conv2D(c1, c2, kernel=1),
            ReLU(),
            MaxPool2D(2),
            DepthwiseConv2D(c2),
            ReLU(),
            Conv2D(c2, c3, kernel=1),
            ReLU(),
            GlobalAvgPool(),
            Dense(c3, num_classes),
        ]
    )


def build_indirect_vgg(num_classes: int, hp: dict) -> Sequential:
    m = hp.get("width_mult", 1.0)
    drop = hp.get("dropout", 0.5)
    c1, c2 = _ch(16, m), _ch(32, m)
    dense = _ch(64, m)
    # stacked 3x3 conv pairs, 20 -> 10 -> 5
    return Sequential(
        [
            Conv2D(2, c1),
            ReLU(),
            Conv2D(c1, c1),
            ReLU(),
            MaxPool2D(2),
            Conv2D(c1, c2),
            ReLU(),
            Conv2D(c2, c2),
            ReLU(),
            MaxPool2D(2),
            Flatten(),
            Dense(5 * 5 * c2, dense),
            ReLU(),
            Dropout(drop),
            Dense(dense, num_classes),
        ]
    )


def build_indirect_resnet(num_classes: int, hp: dict) -> Sequential:
    m = hp.get("width_mult", 1.0)
    c1, c2 = _ch(16, m), _ch(32, m)
    return Sequential(
        [
            Conv2D(2, c1),
            ReLU(),
            Residual(Sequential([Conv2D(c1, c1), ReLU(), Conv2D(c1, c1)])),
            ReLU(),
            MaxPool2D(2),
            Conv2D(c1, c2),
            ReLU(),
            Residual(Sequential([Conv2D(c2, c2), ReLU(), Conv2D(c2, c2)])),
            ReLU(),
            GlobalAvgPool(),
            Dense(c2, num_classes),
        ]
    )


def build_network(method: str, backbone: str | None, num_classes: int, hp: dict) -> Sequential:
    if method == "direct_cnn":
        return build_direct_cnn(num_classes, hp)
    if method == "direct_lstm":
        return build_direct_lstm(num_classes, hp)
    if method == "indirect_cnn":
        builders = {
            "mobile": build_indirect_mobile,
            "vgg": build_indirect_vgg,
            "resnet": build_indirect_resnet,
        }
        return builders[backbone](num_classes, hp)
    raise ValueError(f"unknown method: {method!r}")
