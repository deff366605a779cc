"""Experiment orchestration.

For each grid cell (feature mode, order n, unit length, feature count)
the commingled document is embedded, repeatedly subsampled, classified,
and every batch classification is tested against the autocovariance
null model. Batch p-values are FDR-adjusted and summarized per cell.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import classifiers, features, nullmodel
from .corpus import CommingledDocument, TokenStream, commingle, segment
from .errors import (
    ConfigError,
    DegenerateClusteringError,
    DegenerateGeometryError,
    InsufficientTokensError,
)

EMBEDDINGS = ("tfidf", "zscore", "external")
CLASSIFIERS = ("kmeans", "gi", "cosine")
FDR_SCOPES = ("cell", "global")

#: PSD repairs larger than this are surfaced via CellResult.repair_flag.
REPAIR_FLAG_THRESHOLD = 1e-8


def derive_seed(*parts) -> int:
    """Deterministic 63-bit seed from a canonical key; independent of
    evaluation order and process."""
    key = "|".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "big") >> 1


@dataclass
class ExperimentConfig:
    pair: tuple[str, str]
    embedding: str = "tfidf"
    classifier: str = "kmeans"
    mode: str = features.WORD_NGRAM
    n_values: list[int] = field(default_factory=lambda: [1])
    unit_lengths: list[int] = field(default_factory=lambda: [100])
    f_values: list[int] = field(default_factory=lambda: [300])
    c: float = 0.2
    batches: int = 100
    null_draws: int = 1000
    lam: float = 3.0
    master_seed: int = 0
    genre_differs: Optional[bool] = None
    manifest: Optional[str] = None
    entities: Optional[str] = None
    external_files: dict[int, str] = field(default_factory=dict)
    fdr_scope: str = "cell"
    gi_rounds: int = 100
    gi_subsample_ratio: float = 0.3

    def validate(self) -> None:
        if self.embedding not in EMBEDDINGS:
            raise ConfigError(f"unknown embedding: {self.embedding!r}")
        if self.classifier not in CLASSIFIERS:
            raise ConfigError(f"unknown classifier: {self.classifier!r}")
        if self.fdr_scope not in FDR_SCOPES:
            raise ConfigError(f"unknown fdr_scope: {self.fdr_scope!r}")
        if not self.unit_lengths:
            raise ConfigError("unit_lengths must be non-empty")
        if not self.f_values and self.embedding != "external":
            raise ConfigError("f_values must be non-empty")
        if not 0.0 < self.c <= 1.0:
            raise ConfigError(f"c must be in (0, 1], got {self.c}")
        if self.batches < 1 or self.null_draws < 1:
            raise ConfigError("batches and null_draws must be >= 1")
        if self.lam <= 0:
            raise ConfigError("lambda must be positive")
        if self.embedding == "external":
            missing = [l for l in self.unit_lengths if l not in self.external_files]
            if missing:
                raise ConfigError(
                    f"external embedding requires files for unit lengths {missing}"
                )
        else:
            if self.mode not in (features.WORD_NGRAM, features.CHAR_KMER):
                raise ConfigError(f"unknown feature mode: {self.mode!r}")

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read experiment config {path}: {exc}") from exc
        if not isinstance(raw, dict) or "pair" not in raw:
            raise ConfigError("experiment config must be a JSON object with a 'pair'")
        cfg = cls(
            pair=tuple(raw["pair"]),
            embedding=raw.get("embedding", "tfidf"),
            classifier=raw.get("classifier", "kmeans"),
            mode=raw.get("mode", features.WORD_NGRAM),
            n_values=list(raw.get("n_values", [1])),
            unit_lengths=list(raw.get("unit_lengths", [100])),
            f_values=list(raw.get("f_values", [300])),
            c=float(raw.get("c", 0.2)),
            batches=int(raw.get("batches", 100)),
            null_draws=int(raw.get("null_draws", 1000)),
            lam=float(raw.get("lambda", 3.0)),
            master_seed=int(raw.get("master_seed", 0)),
            genre_differs=raw.get("genre_differs"),
            manifest=raw.get("manifest"),
            entities=raw.get("entities"),
            external_files={int(k): v for k, v in raw.get("external_files", {}).items()},
            fdr_scope=raw.get("fdr_scope", "cell"),
            gi_rounds=int(raw.get("gi_rounds", 100)),
            gi_subsample_ratio=float(raw.get("gi_subsample_ratio", 0.3)),
        )
        cfg.validate()
        return cfg


@dataclass
class CellResult:
    mean_mcc_norm: Optional[float]
    mean_p_fdr: Optional[float]
    wilson_hi_max: Optional[float]
    significant: bool
    batch_count: int
    repair_flag: bool
    skipped: bool = False
    skip_reason: str = ""


@dataclass
class SignificanceMap:
    pair_id: str
    cells: dict[tuple[str, int, int, int], CellResult]  # (mode, n, ell, f)
    config: Optional[ExperimentConfig] = None


@dataclass
class OutcomeRecord:
    pair_id: str
    truth_same_author: bool
    genre_differs: Optional[bool]
    binary_positive: bool
    total_positive_rate: float
    n_cells: int
    n_skipped: int
    n_significant: int

    def to_json(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "truth_same_author": self.truth_same_author,
            "genre_differs": self.genre_differs,
            "binary_positive": self.binary_positive,
            "total_positive_rate": self.total_positive_rate,
            "n_cells": self.n_cells,
            "n_skipped": self.n_skipped,
            "n_significant": self.n_significant,
        }


class _SkipCell(Exception):
    """Internal control flow: mark the cell skipped, not failed."""


def subsample_units(truth: np.ndarray, c: float, seed: int) -> np.ndarray:
    """Draw round(c * min(m0, m1)) unit indices per source, without
    replacement, and return their union sorted ascending (preserving the
    sequence's autocorrelation structure)."""
    if not 0.0 < c <= 1.0:
        raise ConfigError(f"c must be in (0, 1], got {c}")
    truth = np.asarray(truth, dtype=np.int64)
    idx0 = np.flatnonzero(truth == 0)
    idx1 = np.flatnonzero(truth == 1)
    k = int(round(c * min(len(idx0), len(idx1))))
    if 2 * k < 4:
        raise _SkipCell(f"subsample of {2 * k} units is below the minimum of 4")
    rng = np.random.default_rng(seed)
    chosen0 = rng.choice(idx0, size=k, replace=False)
    chosen1 = rng.choice(idx1, size=k, replace=False)
    return np.sort(np.concatenate([chosen0, chosen1]))


def split_train_test(truth: np.ndarray, c: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-source training draw of round(c * min(m0, m1)) units; all
    remaining units form the test set. Both index sets are ascending."""
    train = subsample_units(truth, c, seed)
    mask = np.ones(len(truth), dtype=bool)
    mask[train] = False
    test = np.flatnonzero(mask)
    if len(test) < 4:
        raise _SkipCell(f"test set of {len(test)} units is below the minimum of 4")
    return train, test


def _classify_batch(
    x: np.ndarray,
    truth: np.ndarray,
    config: ExperimentConfig,
    cell_tag: str,
    batch: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Run one batch: subsample/split, classify, return (labels, ref)."""
    sub_seed = derive_seed(config.master_seed, cell_tag, batch, "subsample")
    if config.classifier == "kmeans":
        idx = subsample_units(truth, config.c, sub_seed)
        labels = classifiers.two_means(
            x[idx], derive_seed(config.master_seed, cell_tag, batch, "kmeans")
        )
        return labels, truth[idx]
    train_idx, test_idx = split_train_test(truth, config.c, sub_seed)
    train_y = truth[train_idx]
    if not (np.any(train_y == 0) and np.any(train_y == 1)):
        raise _SkipCell("training split lacks one of the labels")
    if config.classifier == "gi":
        labels = classifiers.gi_classify(
            x[train_idx],
            train_y,
            x[test_idx],
            rounds=config.gi_rounds,
            subsample_ratio=config.gi_subsample_ratio,
            seed=derive_seed(config.master_seed, cell_tag, batch, "gi"),
        )
    else:
        labels = classifiers.cosine_classify(x[train_idx], train_y, x[test_idx])
    return labels, truth[test_idx]


@dataclass
class _RawCell:
    """Per-batch statistics of one cell, before FDR finalization."""

    scores: np.ndarray
    p_values: np.ndarray
    wilson_hi: np.ndarray
    max_repair: float


def run_cell_raw(
    x: np.ndarray,
    truth: np.ndarray,
    config: ExperimentConfig,
    cell_tag: str,
) -> _RawCell:
    """All batches of one cell: classify, score, and test each batch."""
    scores, ps, whi = [], [], []
    max_repair = 0.0
    for batch in range(config.batches):
        labels, ref = _classify_batch(x, truth, config, cell_tag, batch)
        model = nullmodel.autocovariance(labels)
        sampler = nullmodel.make_sampler(nullmodel.toeplitz_matrix(model), model.mean)
        max_repair = max(max_repair, sampler.repair_log)
        result = nullmodel.p_value(
            labels,
            ref,
            sampler,
            n_draws=config.null_draws,
            seed=derive_seed(config.master_seed, cell_tag, batch, "null"),
        )
        scores.append(result.observed_mcc_norm)
        ps.append(result.p_value)
        whi.append(result.wilson_hi)
    return _RawCell(
        scores=np.array(scores),
        p_values=np.array(ps),
        wilson_hi=np.array(whi),
        max_repair=max_repair,
    )


def _finalize(raw: _RawCell, adjusted_p: np.ndarray) -> CellResult:
    mean_p = float(np.mean(adjusted_p))
    return CellResult(
        mean_mcc_norm=float(np.mean(raw.scores)),
        mean_p_fdr=mean_p,
        wilson_hi_max=float(np.max(raw.wilson_hi)),
        significant=mean_p < 0.05,
        batch_count=len(raw.scores),
        repair_flag=raw.max_repair > REPAIR_FLAG_THRESHOLD,
    )


def _skipped(reason: str) -> CellResult:
    return CellResult(
        mean_mcc_norm=None,
        mean_p_fdr=None,
        wilson_hi_max=None,
        significant=False,
        batch_count=0,
        repair_flag=False,
        skipped=True,
        skip_reason=reason,
    )


def run_cell(
    doc: CommingledDocument,
    matrix,
    config: ExperimentConfig,
    cell_key: tuple[str, int, int, int],
) -> CellResult:
    """One cell end to end, with per-cell BH-FDR over its batch p-values."""
    x = matrix.values if isinstance(matrix, features.FeatureMatrix) else np.asarray(matrix)
    tag = "|".join(str(p) for p in cell_key)
    try:
        raw = run_cell_raw(x, doc.truth, config, tag)
    except (_SkipCell, DegenerateClusteringError, DegenerateGeometryError) as exc:
        return _skipped(str(exc))
    return _finalize(raw, nullmodel.bh_fdr(raw.p_values))


def _build_document(
    stream_a: TokenStream,
    stream_b: TokenStream,
    unit_length: int,
    config: ExperimentConfig,
) -> CommingledDocument:
    ua = segment(stream_a, unit_length)
    ub = segment(stream_b, unit_length)
    return commingle(
        ua, ub, lam=config.lam, seed=derive_seed(config.master_seed, "commingle", unit_length)
    )


def _cell_matrices(
    doc: CommingledDocument,
    config: ExperimentConfig,
    unit_length: int,
) -> list[tuple[tuple[str, int, int, int], features.FeatureMatrix]]:
    """Embedded matrices for every (n, f) cell at one unit length."""
    out = []
    if config.embedding == "external":
        matrix = features.read_matrix(config.external_files[unit_length])
        if matrix.m != len(doc.units):
            raise ConfigError(
                f"external matrix for unit_length={unit_length} has {matrix.m} rows, "
                f"expected {len(doc.units)}"
            )
        out.append((("external", 0, unit_length, matrix.f), matrix))
        return out
    f_max = max(config.f_values)
    for n in config.n_values:
        spec = features.FeatureSpec(mode=config.mode, order=n, size=f_max)
        vocab = features.build_vocabulary(doc.units, spec)
        counts = features.count_matrix(doc.units, vocab)
        for f in sorted(set(config.f_values)):
            # the top-f features are a prefix of the top-f_max ranking
            sliced = features.FeatureMatrix(
                values=counts.values[:, :f],
                kind="count",
                unit_length=unit_length,
                feature_names=(counts.feature_names or [])[:f],
            )
            weighted = (
                features.tfidf(sliced) if config.embedding == "tfidf" else features.zscore(sliced)
            )
            out.append(((config.mode, n, unit_length, f), weighted))
    return out


def run_grid(
    stream_a: TokenStream,
    stream_b: TokenStream,
    config: ExperimentConfig,
    threads: int = 1,
) -> SignificanceMap:
    """All cells of the configured grid for one commingled pair.

    Cell seeds derive from the master seed and the canonical cell key,
    so results are independent of evaluation order and thread count.
    """
    config.validate()
    pair_id = f"{config.pair[0]}+{config.pair[1]}"
    cells: dict[tuple[str, int, int, int], CellResult] = {}
    work: list[tuple[tuple[str, int, int, int], CommingledDocument, features.FeatureMatrix]] = []

    for unit_length in config.unit_lengths:
        try:
            doc = _build_document(stream_a, stream_b, unit_length, config)
            for key, matrix in _cell_matrices(doc, config, unit_length):
                work.append((key, doc, matrix))
        except InsufficientTokensError as exc:
            for n in config.n_values if config.embedding != "external" else [0]:
                for f in config.f_values if config.embedding != "external" else [0]:
                    mode = config.mode if config.embedding != "external" else "external"
                    cells[(mode, n, unit_length, f)] = _skipped(str(exc))

    if config.fdr_scope == "cell":
        def job(item):
            key, doc, matrix = item
            return key, run_cell(doc, matrix, config, key)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                for key, result in pool.map(job, work):
                    cells[key] = result
        else:
            for key, result in map(job, work):
                cells[key] = result
    else:
        # global scope: BH over the pooled batch p-values of all cells
        raws: dict[tuple[str, int, int, int], _RawCell] = {}

        def raw_job(item):
            key, doc, matrix = item
            tag = "|".join(str(p) for p in key)
            x = matrix.values
            try:
                return key, run_cell_raw(x, doc.truth, config, tag), None
            except (_SkipCell, DegenerateClusteringError, DegenerateGeometryError) as exc:
                return key, None, str(exc)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(raw_job, work))
        else:
            results = list(map(raw_job, work))
        for key, raw, reason in results:
            if raw is None:
                cells[key] = _skipped(reason)
            else:
                raws[key] = raw
        if raws:
            ordered_keys = sorted(raws)
            pooled = np.concatenate([raws[k].p_values for k in ordered_keys])
            adjusted = nullmodel.bh_fdr(pooled)
            offset = 0
            for k in ordered_keys:
                n = len(raws[k].p_values)
                cells[k] = _finalize(raws[k], adjusted[offset : offset + n])
                offset += n

    return SignificanceMap(pair_id=pair_id, cells=cells, config=config)


def outcome(sig_map: SignificanceMap, truth_same_author: bool) -> OutcomeRecord:
    """Per-pair outcome: any-cell binary flag and the fraction of
    non-skipped cells that are significant."""
    active = [c for c in sig_map.cells.values() if not c.skipped]
    n_sig = sum(1 for c in active if c.significant)
    genre = sig_map.config.genre_differs if sig_map.config else None
    return OutcomeRecord(
        pair_id=sig_map.pair_id,
        truth_same_author=truth_same_author,
        genre_differs=genre,
        binary_positive=n_sig > 0,
        total_positive_rate=(n_sig / len(active)) if active else 0.0,
        n_cells=len(sig_map.cells),
        n_skipped=len(sig_map.cells) - len(active),
        n_significant=n_sig,
    )
