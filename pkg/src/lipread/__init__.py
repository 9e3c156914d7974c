"""Visual word recognition toolkit.

Builds word-clip corpora from raw recordings, extracts mouth-landmark and
raw-frame features, trains three classifier families (landmark CNN, per-frame
CNN, convolutional LSTM), evaluates them, and runs a sliding-window live
recognizer that dispatches recognized words to a robot command client.
"""

__version__ = "0.1.0"

MANIFEST_FORMAT_VERSION = 1
CHECKPOINT_FORMAT_VERSION = 1
LANDMARK_CACHE_FORMAT_VERSION = 1

TOOL_ID = f"lipread {__version__}"
