"""Corpus loading, preprocessing, segmentation, and commingling.

A corpus is described by a JSON manifest listing text files. Texts are
lowercased, stripped of punctuation, tokenized on whitespace, cut into
units of exactly ``unit_length`` words, and two unit sequences can be
interleaved ("commingled") into a single document with known per-unit
source labels.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    DegenerateInputError,
    DuplicateIdError,
    InsufficientTokensError,
    ManifestError,
    MissingFileError,
    UnitLengthMismatchError,
)


@dataclass
class RawText:
    id: str
    author: str
    genre_tags: list[str]
    body: str


@dataclass
class TokenStream:
    tokens: list[str]
    source_id: str

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class UnitSequence:
    """Ordered units of exactly ``unit_length`` tokens each."""

    units: list[list[str]]
    unit_length: int
    origin: list[str]  # per-unit source id

    def __len__(self) -> int:
        return len(self.units)


@dataclass
class ComminglingRecord:
    """Replay record: where each run of the second text was inserted."""

    seed: int
    lam: float
    insertion_positions: list[int]
    run_lengths: list[int]

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "lambda": self.lam,
            "insertion_positions": self.insertion_positions,
            "run_lengths": self.run_lengths,
        }


@dataclass
class CommingledDocument:
    units: UnitSequence
    truth: np.ndarray  # 0 = first source, 1 = second source
    seed: int
    lam: float
    record: ComminglingRecord = field(repr=False)


def load_corpus(manifest_path: str | Path) -> list[RawText]:
    """Load all texts listed in a JSON manifest.

    The manifest is a JSON array of {id, author, genre_tags, file}
    entries; ``file`` paths are resolved relative to the manifest.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise MissingFileError(f"manifest not found: {manifest_path}")
    try:
        entries = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(entries, list):
        raise ManifestError("manifest must be a JSON array")

    texts: list[RawText] = []
    seen: set[str] = set()
    for entry in entries:
        if not isinstance(entry, dict) or "id" not in entry or "file" not in entry:
            raise ManifestError(f"malformed manifest entry: {entry!r}")
        text_id = str(entry["id"])
        if text_id in seen:
            raise DuplicateIdError(f"duplicate text id: {text_id}")
        seen.add(text_id)
        file_path = manifest_path.parent / entry["file"]
        if not file_path.exists():
            raise MissingFileError(f"text file not found: {file_path}")
        texts.append(
            RawText(
                id=text_id,
                author=str(entry.get("author", "")),
                genre_tags=[str(t) for t in entry.get("genre_tags", [])],
                body=file_path.read_text(encoding="utf-8"),
            )
        )
    return texts


@lru_cache(maxsize=None)
def _is_punctuation(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def _strip_punctuation(text: str) -> str:
    table = {ord(ch): " " for ch in set(text) if _is_punctuation(ch)}
    return text.translate(table)


def preprocess(raw: RawText, entity_lexicon: Optional[Iterable[str]] = None) -> TokenStream:
    """Lowercase, strip punctuation, tokenize, and optionally drop entities.

    Every character in a Unicode punctuation category becomes a space;
    digits are kept. Tokens exactly matching an entry of
    ``entity_lexicon`` (case-insensitive) are removed.
    """
    tokens = _strip_punctuation(raw.body.lower()).split()
    if entity_lexicon is not None:
        lexicon = {e.lower() for e in entity_lexicon}
        tokens = [t for t in tokens if t not in lexicon]
    if not tokens:
        raise DegenerateInputError(f"no tokens left after preprocessing {raw.id!r}")
    return TokenStream(tokens=tokens, source_id=raw.id)


def read_entity_lexicon(path: str | Path) -> set[str]:
    """Read an entity lexicon: one lowercase token per line."""
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"entity lexicon not found: {path}")
    return {line.strip().lower() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()}


def segment(tokens: TokenStream, unit_length: int) -> UnitSequence:
    """Cut a token stream into units of exactly ``unit_length`` tokens.

    The trailing partial unit is dropped.
    """
    if unit_length < 1:
        raise UnitLengthMismatchError(f"unit_length must be positive, got {unit_length}")
    n_units = len(tokens.tokens) // unit_length
    if n_units == 0:
        raise InsufficientTokensError(
            f"{tokens.source_id!r} has {len(tokens.tokens)} tokens, fewer than unit_length={unit_length}"
        )
    units = [tokens.tokens[i * unit_length : (i + 1) * unit_length] for i in range(n_units)]
    return UnitSequence(units=units, unit_length=unit_length, origin=[tokens.source_id] * n_units)


def _truncated_poisson(rng: np.random.Generator, lam: float) -> int:
    """Poisson(lam) conditioned on being >= 1, by redrawing zeros."""
    while True:
        k = int(rng.poisson(lam))
        if k >= 1:
            return k


def commingle(
    a: UnitSequence,
    b: UnitSequence,
    lam: float = 3.0,
    seed: int = 0,
) -> CommingledDocument:
    """Interleave ``b``'s units into ``a`` in contiguous in-order runs.

    Run lengths are i.i.d. Poisson(lam) truncated to >= 1 (the final run
    is clipped to the remaining units). Each run is inserted at a
    uniformly chosen slot of the growing document among the slots that
    preserve the relative order of both sources. The returned truth
    labels mark units from ``b`` with 1.
    """
    if len(a) == 0 or len(b) == 0:
        raise DegenerateInputError("both unit sequences must be non-empty")
    if a.unit_length != b.unit_length:
        raise UnitLengthMismatchError(
            f"unit_length mismatch: {a.unit_length} vs {b.unit_length}"
        )
    rng = np.random.default_rng(seed)

    run_lengths: list[int] = []
    remaining = len(b)
    while remaining > 0:
        k = min(_truncated_poisson(rng, lam), remaining)
        run_lengths.append(k)
        remaining -= k

    doc: list[tuple[list[str], str, int]] = [
        (unit, src, 0) for unit, src in zip(a.units, a.origin)
    ]
    positions: list[int] = []
    cursor = 0  # next unit of b to place
    min_slot = 0  # earliest slot that keeps b's runs in order
    for k in run_lengths:
        slot = int(rng.integers(min_slot, len(doc) + 1))
        run = [
            (b.units[cursor + j], b.origin[cursor + j], 1) for j in range(k)
        ]
        doc[slot:slot] = run
        positions.append(slot)
        cursor += k
        min_slot = slot + k

    units = UnitSequence(
        units=[u for u, _, _ in doc],
        unit_length=a.unit_length,
        origin=[src for _, src, _ in doc],
    )
    truth = np.array([lbl for _, _, lbl in doc], dtype=np.int64)
    record = ComminglingRecord(
        seed=seed, lam=lam, insertion_positions=positions, run_lengths=run_lengths
    )
    return CommingledDocument(units=units, truth=truth, seed=seed, lam=lam, record=record)
