"""Command-line entry point.

Commands: preprocess, commingle, embed, run, report. All randomness
flows from the configured master seed; exit codes are 0 (ok), 2 (config
error), 3 (data error), 4 (internal error).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

from . import __version__, corpus, experiments, features, report
from .errors import ConfigError, DataError, MissingFileError, StylesigError


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_run_manifest(out_dir: Path, config_path: str, master_seed: int, outputs: list[Path]) -> None:
    manifest = {
        "config": str(config_path),
        "master_seed": master_seed,
        "tool_version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "outputs": {p.name: _sha256(p) for p in outputs},
    }
    (out_dir / "run_manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )


def _load_streams(cfg: experiments.ExperimentConfig) -> tuple[corpus.TokenStream, corpus.TokenStream, bool]:
    """Preprocess the configured pair; returns the two token streams and
    whether the two texts share an author."""
    if cfg.manifest is None:
        raise ConfigError("experiment config must name a corpus manifest")
    texts = {t.id: t for t in corpus.load_corpus(cfg.manifest)}
    lexicon = _load_lexicon(cfg.entities)
    streams = []
    authors = []
    for text_id in cfg.pair:
        if text_id not in texts:
            raise ConfigError(f"pair id {text_id!r} not in manifest")
        streams.append(corpus.preprocess(texts[text_id], lexicon))
        authors.append(texts[text_id].author)
    return streams[0], streams[1], authors[0] == authors[1]


def _load_lexicon(entities_path):
    """An entity file named but absent is a configuration mistake."""
    if not entities_path:
        return None
    if not Path(entities_path).exists():
        raise ConfigError(f"entity lexicon not found: {entities_path}")
    return corpus.read_entity_lexicon(entities_path)


def cmd_preprocess(args) -> int:
    texts = corpus.load_corpus(args.manifest)
    lexicon = _load_lexicon(args.entities)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for text in texts:
        stream = corpus.preprocess(text, lexicon)
        (out_dir / f"{text.id}.tokens").write_text(
            "\n".join(stream.tokens) + "\n", encoding="utf-8"
        )
    print(f"wrote {len(texts)} token streams to {out_dir}")
    return 0


def _read_tokens(path: str) -> corpus.TokenStream:
    p = Path(path)
    if not p.exists():
        raise MissingFileError(f"token file not found: {p}")
    tokens = p.read_text(encoding="utf-8").split()
    if not tokens:
        raise DataError(f"token file is empty: {p}")
    return corpus.TokenStream(tokens=tokens, source_id=p.stem)


def cmd_commingle(args) -> int:
    stream_a = _read_tokens(args.a)
    stream_b = _read_tokens(args.b)
    doc = corpus.commingle(
        corpus.segment(stream_a, args.unit_length),
        corpus.segment(stream_b, args.unit_length),
        lam=args.lam,
        seed=args.seed,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc_path = out_dir / "document.json"
    doc_path.write_text(
        json.dumps(
            {
                "unit_length": doc.units.unit_length,
                "units": doc.units.units,
                "origin": doc.units.origin,
                "truth": doc.truth.tolist(),
                "seed": doc.seed,
                "lambda": doc.lam,
            }
        )
        + "\n",
        encoding="utf-8",
    )
    (out_dir / "commingling_record.json").write_text(
        json.dumps(doc.record.to_json()) + "\n", encoding="utf-8"
    )
    print(f"wrote {len(doc.units)} units to {doc_path}")
    return 0


def cmd_embed(args) -> int:
    raw = json.loads(Path(args.document).read_text(encoding="utf-8"))
    units = corpus.UnitSequence(
        units=raw["units"], unit_length=raw["unit_length"], origin=raw["origin"]
    )
    spec = features.FeatureSpec(mode=args.mode, order=args.order, size=args.features)
    vocab = features.build_vocabulary(units, spec)
    matrix = features.count_matrix(units, vocab)
    if args.weighting == "tfidf":
        matrix = features.tfidf(matrix)
    elif args.weighting == "zscore":
        matrix = features.zscore(matrix)
    matrix.source = f"stylesig embed {args.mode} n={args.order} f={args.features}"
    features.write_matrix(matrix, args.out)
    print(f"wrote {matrix.m}x{matrix.f} {matrix.kind} matrix to {args.out}")
    return 0


def cmd_run(args) -> int:
    config_path = Path(args.config)
    cfg = experiments.ExperimentConfig.from_json(config_path)
    if args.seed is not None:
        cfg.master_seed = args.seed
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    stream_a, stream_b, same_author = _load_streams(cfg)
    sig_map = experiments.run_grid(stream_a, stream_b, cfg, threads=args.threads)
    outcome = experiments.outcome(sig_map, truth_same_author=same_author)

    csv_path = out_dir / "significance.csv"
    report.write_significance_csv(sig_map, csv_path)
    heatmap_path = out_dir / "heatmap.png"
    report.render_heatmap(sig_map, heatmap_path)
    outcome_path = out_dir / "outcome.json"
    outcome_path.write_text(json.dumps(outcome.to_json(), indent=2) + "\n", encoding="utf-8")
    _write_run_manifest(out_dir, str(config_path), cfg.master_seed,
                        [csv_path, heatmap_path, outcome_path])
    n_sig = outcome.n_significant
    print(f"{sig_map.pair_id}: {n_sig}/{outcome.n_cells - outcome.n_skipped} significant cells "
          f"({outcome.n_skipped} skipped); binary_positive={outcome.binary_positive}")
    return 0


def cmd_report(args) -> int:
    outcome_files = sorted(
        path for in_dir in args.indirs for path in Path(in_dir).rglob("outcome.json")
    )
    if not outcome_files:
        raise DataError(f"no outcome.json files under {args.indirs}")
    annotations = {}
    if args.genre_annotations:
        annotations = json.loads(Path(args.genre_annotations).read_text(encoding="utf-8"))
    outcomes = []
    for path in outcome_files:
        raw = json.loads(path.read_text(encoding="utf-8"))
        genre = raw.get("genre_differs")
        if raw["pair_id"] in annotations:
            genre = bool(annotations[raw["pair_id"]])
        outcomes.append(
            experiments.OutcomeRecord(
                pair_id=raw["pair_id"],
                truth_same_author=raw["truth_same_author"],
                genre_differs=genre,
                binary_positive=raw["binary_positive"],
                total_positive_rate=raw["total_positive_rate"],
                n_cells=raw["n_cells"],
                n_skipped=raw["n_skipped"],
                n_significant=raw["n_significant"],
            )
        )
    summary = report.confusion_summary(outcomes, bracketed=not args.no_bracketed)
    table = report.format_confusion_table(summary)
    print(table)
    if args.out:
        Path(args.out).write_text(
            json.dumps(summary.to_json(), indent=2) + "\n", encoding="utf-8"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stylesig",
        description="Stylometric classification with a sequential-correlation significance test",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="tokenize every text of a corpus manifest")
    p.add_argument("manifest")
    p.add_argument("--entities", help="entity lexicon file (one token per line)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("commingle", help="interleave two token streams into one document")
    p.add_argument("--a", required=True, help="first token file")
    p.add_argument("--b", required=True, help="second token file")
    p.add_argument("--unit-length", type=int, required=True, dest="unit_length")
    p.add_argument("--lambda", type=float, default=3.0, dest="lam")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_commingle)

    p = sub.add_parser("embed", help="embed a commingled document as a feature matrix")
    p.add_argument("document", help="document.json from the commingle command")
    p.add_argument("--mode", choices=[features.WORD_NGRAM, features.CHAR_KMER],
                   default=features.WORD_NGRAM)
    p.add_argument("--order", type=int, default=1)
    p.add_argument("--features", type=int, default=300)
    p.add_argument("--weighting", choices=["count", "tfidf", "zscore"], default="tfidf")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("run", help="run the full experiment grid for one pair")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config master seed")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="aggregate run outcomes into confusion tables")
    p.add_argument("indirs", nargs="+", help="run output directories")
    p.add_argument("--genre-annotations", help="JSON map pair_id -> genre_differs")
    p.add_argument("--no-bracketed", action="store_true",
                   help="skip the genre-adjusted bracketed rates")
    p.add_argument("--out", help="write the summary JSON here")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StylesigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
