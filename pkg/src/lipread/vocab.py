"""Word vocabulary: stable bijection between words and class ids."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyVocabulary

DEFAULT_WORDS = (
    "salam",
    "bro",
    "bia",
    "khodahafez",
    "surena",
    "begir",
    "benevis",
)


@dataclass(frozen=True)
class WordVocabulary:
    """Immutable word list with lexicographic id assignment.

    Ids are assigned by sorted order of the unique words, so the mapping
    depends only on the set of words, never on insertion order.
    """

    words: tuple[str, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.words:
            raise EmptyVocabulary("vocabulary must contain at least one word")
        ordered = tuple(sorted(set(self.words)))
        object.__setattr__(self, "words", ordered)
        object.__setattr__(self, "_index", {w: i for i, w in enumerate(ordered)})

    @classmethod
    def default(cls) -> "WordVocabulary":
        return cls(DEFAULT_WORDS)

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def __iter__(self):
        return iter(self.words)

    def id_of(self, word: str) -> int:
        try:
            return self._index[word]
        except KeyError:
            raise KeyError(f"word not in vocabulary: {word!r}") from None

    def word_of(self, class_id: int) -> str:
        if not 0 <= class_id < len(self.words):
            raise KeyError(f"class id out of range: {class_id}")
        return self.words[class_id]

    def to_list(self) -> list[str]:
        return list(self.words)


def encode_labels(words, vocab: WordVocabulary) -> np.ndarray:
    """Map an iterable of words to an int64 id vector."""
    return np.array([vocab.id_of(w) for w in words], dtype=np.int64)


def one_hot(ids: np.ndarray, num_classes: int) -> np.ndarray:
    """Dense one-hot rows for integer class ids."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= num_classes):
        raise ValueError("class id out of range for one-hot encoding")
    out = np.zeros((ids.shape[0], num_classes), dtype=np.float64)
    out[np.arange(ids.shape[0]), ids] = 1.0
    return out
