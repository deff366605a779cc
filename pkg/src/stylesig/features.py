"""Feature extraction and weighting.

Units are embedded as word n-gram or character k-mer count vectors over
the top-f most frequent features of the commingled document, optionally
reweighted with tf-idf or column-wise Z-scores (a Delta-style
standardization). Externally computed embeddings enter through a simple
line-oriented interchange format.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import UnitSequence
from .errors import ConfigError, DegenerateInputError, MatrixFormatError

WORD_NGRAM = "word_ngram"
CHAR_KMER = "char_kmer"

_ORDER_RANGE = {WORD_NGRAM: (1, 4), CHAR_KMER: (1, 6)}


@dataclass(frozen=True)
class FeatureSpec:
    mode: str  # word_ngram | char_kmer
    order: int
    size: int  # number of features to keep (f)

    def __post_init__(self):
        if self.mode not in _ORDER_RANGE:
            raise ConfigError(f"unknown feature mode: {self.mode!r}")
        lo, hi = _ORDER_RANGE[self.mode]
        if not lo <= self.order <= hi:
            raise ConfigError(
                f"{self.mode} order must be in [{lo}, {hi}], got {self.order}"
            )
        if self.size < 1:
            raise ConfigError(f"feature count must be >= 1, got {self.size}")


@dataclass
class Vocabulary:
    features: list[str]
    spec: FeatureSpec
    truncated: bool = False  # fewer distinct features than requested

    def __len__(self) -> int:
        return len(self.features)


@dataclass
class FeatureMatrix:
    values: np.ndarray  # m x f
    kind: str  # count | tfidf | zscore | external
    unit_length: int | None = None
    source: str = ""
    feature_names: list[str] | None = field(default=None, repr=False)

    @property
    def m(self) -> int:
        return int(self.values.shape[0])

    @property
    def f(self) -> int:
        return int(self.values.shape[1])


def extract_features(unit: Sequence[str], spec: FeatureSpec) -> Counter:
    """Multiset of features occurring in one unit.

    Word mode yields the ell-n+1 contiguous token n-grams joined by
    single spaces. Char mode joins the unit's tokens with single spaces
    and yields every contiguous k-character substring (k-mers may span
    the joining space).
    """
    if not unit:
        raise DegenerateInputError("cannot extract features from an empty unit")
    n = spec.order
    if spec.mode == WORD_NGRAM:
        return Counter(
            " ".join(unit[i : i + n]) for i in range(len(unit) - n + 1)
        )
    text = " ".join(unit)
    return Counter(text[i : i + n] for i in range(len(text) - n + 1))


def build_vocabulary(units: UnitSequence, spec: FeatureSpec) -> Vocabulary:
    """Top-f features by total frequency over all units of the document.

    Ties are broken lexicographically; if fewer than f distinct features
    occur, the vocabulary is truncated and flagged.
    """
    totals: Counter = Counter()
    for unit in units.units:
        totals.update(extract_features(unit, spec))
    if not totals:
        raise DegenerateInputError("no features occur in any unit")
    ranked = sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))
    features = [feat for feat, _ in ranked[: spec.size]]
    return Vocabulary(features=features, spec=spec, truncated=len(features) < spec.size)


def count_matrix(units: UnitSequence, vocab: Vocabulary) -> FeatureMatrix:
    """Per-unit occurrence counts of the vocabulary features."""
    if len(vocab) == 0:
        raise ConfigError("vocabulary is empty")
    index = {feat: j for j, feat in enumerate(vocab.features)}
    values = np.zeros((len(units), len(vocab)), dtype=np.float64)
    for i, unit in enumerate(units.units):
        for feat, c in extract_features(unit, vocab.spec).items():
            j = index.get(feat)
            if j is not None:
                values[i, j] = c
    return FeatureMatrix(
        values=values,
        kind="count",
        unit_length=units.unit_length,
        feature_names=list(vocab.features),
    )


def tfidf(counts: FeatureMatrix) -> FeatureMatrix:
    """Smoothed tf-idf with row-wise L2 normalization.

    values[i][j] = c_ij * (ln((1+m)/(1+df_j)) + 1), then each row is
    scaled to unit L2 norm (all-zero rows stay zero).
    """
    if counts.kind != "count":
        raise ConfigError(f"tfidf expects a count matrix, got kind={counts.kind!r}")
    c = counts.values
    m = c.shape[0]
    df = (c > 0).sum(axis=0)
    idf = np.log((1.0 + m) / (1.0 + df)) + 1.0
    values = c * idf
    norms = np.linalg.norm(values, axis=1)
    nonzero = norms > 0
    values[nonzero] = values[nonzero] / norms[nonzero, None]
    return FeatureMatrix(
        values=values,
        kind="tfidf",
        unit_length=counts.unit_length,
        feature_names=counts.feature_names,
    )


def zscore(counts: FeatureMatrix) -> FeatureMatrix:
    """Column-wise standardization with population standard deviation.

    Constant columns (sigma = 0) become all-zero.
    """
    if counts.kind != "count":
        raise ConfigError(f"zscore expects a count matrix, got kind={counts.kind!r}")
    c = counts.values
    if c.shape[0] < 2:
        raise DegenerateInputError("zscore requires at least 2 units")
    mu = c.mean(axis=0)
    sigma = c.std(axis=0)  # population std
    values = np.zeros_like(c)
    ok = sigma > 0
    values[:, ok] = (c[:, ok] - mu[ok]) / sigma[ok]
    return FeatureMatrix(
        values=values,
        kind="zscore",
        unit_length=counts.unit_length,
        feature_names=counts.feature_names,
    )


def write_matrix(matrix: FeatureMatrix, path: str | Path) -> None:
    """Write the interchange format: a JSON header line, then m rows of
    f tab-separated decimal floats."""
    values = matrix.values
    if not np.all(np.isfinite(values)):
        raise MatrixFormatError("matrix contains non-finite values")
    header = {
        "m": int(values.shape[0]),
        "f": int(values.shape[1]),
        "kind": matrix.kind,
        "unit_length": matrix.unit_length,
        "source": matrix.source,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for row in values:
            fh.write("\t".join(repr(float(v)) for v in row) + "\n")


def read_matrix(path: str | Path) -> FeatureMatrix:
    """Read a matrix in the interchange format, validating the header."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise MatrixFormatError(f"bad matrix header: {exc}") from exc
        for key in ("m", "f", "kind"):
            if key not in header:
                raise MatrixFormatError(f"matrix header missing {key!r}")
        m, f = int(header["m"]), int(header["f"])
        rows = []
        for line_no, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != f:
                raise MatrixFormatError(
                    f"line {line_no}: expected {f} values, got {len(parts)}"
                )
            try:
                row = [float(p) for p in parts]
            except ValueError as exc:
                raise MatrixFormatError(f"line {line_no}: {exc}") from exc
            if not all(math.isfinite(v) for v in row):
                raise MatrixFormatError(f"line {line_no}: non-finite value")
            rows.append(row)
    if len(rows) != m:
        raise MatrixFormatError(f"expected {m} rows, got {len(rows)}")
    values = np.array(rows, dtype=np.float64).reshape(m, f)
    return FeatureMatrix(
        values=values,
        kind=str(header["kind"]),
        unit_length=header.get("unit_length"),
        source=str(header.get("source", "")),
    )
