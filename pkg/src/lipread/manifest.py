"""Clip manifest: line-delimited catalog of word clips.

File layout: first line is a header object (format tag, version, vocab, seed,
warnings), every following line is one clip record. Records are kept sorted by
clip_id and no timestamps are stored, so rebuilding an unchanged corpus yields
a byte-identical file.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import MANIFEST_FORMAT_VERSION
from .errors import EmptyCorpus, InvalidSpec
from .vocab import WordVocabulary

FORMAT_TAG = "lipread-manifest"


@dataclass(frozen=True)
class ClipRecord:
    """One word clip on disk."""

    clip_id: str
    path: str
    label: str
    participant_id: str | None = None
    frame_count: int | None = None
    fps: float | None = None
    split: str | None = None

    def to_json(self) -> dict:
        out = {"clip_id": self.clip_id, "path": self.path, "label": self.label}
        for key in ("participant_id", "frame_count", "fps", "split"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ClipRecord":
        return cls(
            clip_id=obj["clip_id"],
            path=obj["path"],
            label=obj["label"],
            participant_id=obj.get("participant_id"),
            frame_count=obj.get("frame_count"),
            fps=obj.get("fps"),
            split=obj.get("split"),
        )


@dataclass(frozen=True)
class ClipManifest:
    """Immutable collection of clip records plus provenance metadata."""

    records: tuple[ClipRecord, ...]
    vocab: WordVocabulary
    seed: int | None = None
    warnings: tuple[str, ...] = ()
    root: str | None = None
    _by_id: dict[str, ClipRecord] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ordered = tuple(sorted(self.records, key=lambda r: r.clip_id))
        by_id = {}
        for rec in ordered:
            if rec.clip_id in by_id:
                raise InvalidSpec(f"duplicate clip_id: {rec.clip_id}")
            if rec.label not in self.vocab:
                raise InvalidSpec(f"label not in vocabulary: {rec.label!r}")
            by_id[rec.clip_id] = rec
        object.__setattr__(self, "records", ordered)
        object.__setattr__(self, "warnings", tuple(self.warnings))
        object.__setattr__(self, "_by_id", by_id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, clip_id: str) -> ClipRecord:
        return self._by_id[clip_id]

    def class_counts(self) -> dict[str, int]:
        counts = Counter(r.label for r in self.records)
        return {w: counts.get(w, 0) for w in self.vocab}

    def subset(self, split: str) -> "ClipManifest":
        """Records whose split field equals `split`; vocab and seed carried over."""
        kept = tuple(r for r in self.records if r.split == split)
        return replace(self, records=kept)

    def with_records(self, records) -> "ClipManifest":
        return replace(self, records=tuple(records))

    def resolve_path(self, rec: ClipRecord) -> Path:
        p = Path(rec.path)
        if p.is_absolute() or self.root is None:
            return p
        return Path(self.root) / p

    def save(self, path) -> None:
        path = Path(path)
        header = {
            "format": FORMAT_TAG,
            "version": MANIFEST_FORMAT_VERSION,
            "vocab": self.vocab.to_list(),
            "seed": self.seed,
            "warnings": list(self.warnings),
        }
        lines = [json.dumps(header, sort_keys=True)]
        lines.extend(json.dumps(r.to_json(), sort_keys=True) for r in self.records)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ClipManifest":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise EmptyCorpus(f"cannot read manifest: {path}: {exc}") from exc
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise EmptyCorpus(f"manifest is empty: {path}")
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise InvalidSpec(f"bad manifest header: {exc}") from exc
        if header.get("format") != FORMAT_TAG:
            raise InvalidSpec(f"not a manifest file: {path}")
        if header.get("version") != MANIFEST_FORMAT_VERSION:
            raise InvalidSpec(f"unsupported manifest version: {header.get('version')}")
        vocab = WordVocabulary(tuple(header["vocab"]))
        records = tuple(ClipRecord.from_json(json.loads(ln)) for ln in lines[1:])
        return cls(
            records=records,
            vocab=vocab,
            seed=header.get("seed"),
            warnings=tuple(header.get("warnings", ())),
            root=str(path.parent),
        )
