import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stylesig import corpus
from stylesig.errors import (
    DegenerateInputError,
    DuplicateIdError,
    InsufficientTokensError,
    ManifestError,
    MissingFileError,
    UnitLengthMismatchError,
)


def write_manifest(tmp_path, entries):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(entries), encoding="utf-8")
    return path


class TestLoadCorpus:
    def test_two_entries(self, tmp_path):
        (tmp_path / "a.txt").write_text("alpha text", encoding="utf-8")
        (tmp_path / "b.txt").write_text("beta text", encoding="utf-8")
        path = write_manifest(
            tmp_path,
            [
                {"id": "a", "author": "A", "genre_tags": ["novel"], "file": "a.txt"},
                {"id": "b", "author": "B", "genre_tags": [], "file": "b.txt"},
            ],
        )
        texts = corpus.load_corpus(path)
        assert [t.id for t in texts] == ["a", "b"]
        assert texts[0].body == "alpha text"
        assert texts[0].genre_tags == ["novel"]

    def test_duplicate_id(self, tmp_path):
        (tmp_path / "a.txt").write_text("x", encoding="utf-8")
        path = write_manifest(
            tmp_path,
            [{"id": "a", "file": "a.txt"}, {"id": "a", "file": "a.txt"}],
        )
        with pytest.raises(DuplicateIdError):
            corpus.load_corpus(path)

    def test_missing_file(self, tmp_path):
        path = write_manifest(tmp_path, [{"id": "a", "file": "absent.txt"}])
        with pytest.raises(MissingFileError):
            corpus.load_corpus(path)

    def test_malformed_manifest(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text("not json at all", encoding="utf-8")
        with pytest.raises(ManifestError):
            corpus.load_corpus(path)

    def test_manifest_not_a_list(self, tmp_path):
        path = write_manifest(tmp_path, {"id": "a"})
        with pytest.raises(ManifestError):
            corpus.load_corpus(path)


class TestPreprocess:
    def test_lowercase_and_punctuation(self):
        raw = corpus.RawText(id="t", author="", genre_tags=[], body="It was the best of times!")
        assert corpus.preprocess(raw).tokens == ["it", "was", "the", "best", "of", "times"]

    def test_entity_lexicon(self):
        raw = corpus.RawText(id="t", author="", genre_tags=[], body="Harry met Ron.")
        assert corpus.preprocess(raw, {"harry", "ron"}).tokens == ["met"]

    def test_only_punctuation_degenerate(self):
        raw = corpus.RawText(id="t", author="", genre_tags=[], body="?!.,")
        with pytest.raises(DegenerateInputError):
            corpus.preprocess(raw)

    def test_digits_kept(self):
        raw = corpus.RawText(id="t", author="", genre_tags=[], body="in 1815 Chapter 2")
        assert corpus.preprocess(raw).tokens == ["in", "1815", "chapter", "2"]

    def test_unicode_punctuation(self):
        raw = corpus.RawText(id="t", author="", genre_tags=[], body="“Hello” — she said…")
        assert corpus.preprocess(raw).tokens == ["hello", "she", "said"]

    @given(st.text(min_size=1, max_size=200))
    @settings(max_examples=200)
    def test_idempotent_at_token_level(self, body):
        raw = corpus.RawText(id="t", author="", genre_tags=[], body=body)
        try:
            once = corpus.preprocess(raw)
        except DegenerateInputError:
            return
        again = corpus.preprocess(
            corpus.RawText(id="t", author="", genre_tags=[], body=" ".join(once.tokens))
        )
        assert again.tokens == once.tokens


class TestSegment:
    def test_floor_division(self):
        stream = corpus.TokenStream(tokens=["w"] * 2500, source_id="s")
        seq = corpus.segment(stream, 1000)
        assert len(seq) == 2
        assert all(len(u) == 1000 for u in seq.units)

    def test_exact_fit(self):
        stream = corpus.TokenStream(tokens=["w"] * 1000, source_id="s")
        assert len(corpus.segment(stream, 1000)) == 1

    def test_insufficient(self):
        stream = corpus.TokenStream(tokens=["w"] * 999, source_id="s")
        with pytest.raises(InsufficientTokensError):
            corpus.segment(stream, 1000)

    def test_order_preserved(self):
        stream = corpus.TokenStream(tokens=[str(i) for i in range(9)], source_id="s")
        seq = corpus.segment(stream, 3)
        assert seq.units == [["0", "1", "2"], ["3", "4", "5"], ["6", "7", "8"]]


def make_units(source_id, count, unit_length=2):
    tokens = [f"{source_id}{i}" for i in range(count * unit_length)]
    return corpus.segment(corpus.TokenStream(tokens=tokens, source_id=source_id), unit_length)


class TestCommingle:
    def test_unit_conservation_and_labels(self):
        a, b = make_units("a", 10), make_units("b", 6)
        doc = corpus.commingle(a, b, seed=42)
        assert len(doc.units) == 16
        assert int(np.sum(doc.truth == 0)) == 10
        assert int(np.sum(doc.truth == 1)) == 6
        combined = {tuple(u) for u in doc.units.units}
        assert combined == {tuple(u) for u in a.units} | {tuple(u) for u in b.units}

    def test_order_preservation(self):
        a, b = make_units("a", 10), make_units("b", 6)
        doc = corpus.commingle(a, b, seed=7)
        from_b = [u for u, t in zip(doc.units.units, doc.truth) if t == 1]
        assert from_b == b.units
        from_a = [u for u, t in zip(doc.units.units, doc.truth) if t == 0]
        assert from_a == a.units

    def test_determinism(self):
        a, b = make_units("a", 10), make_units("b", 6)
        d1 = corpus.commingle(a, b, seed=99)
        d2 = corpus.commingle(a, b, seed=99)
        assert d1.units.units == d2.units.units
        assert np.array_equal(d1.truth, d2.truth)
        assert d1.record.insertion_positions == d2.record.insertion_positions

    def test_unit_length_mismatch(self):
        with pytest.raises(UnitLengthMismatchError):
            corpus.commingle(make_units("a", 3, 2), make_units("b", 3, 3), seed=0)

    def test_run_length_mean_matches_truncated_poisson(self):
        # oracle: direct simulation of Poisson(3) truncated to >= 1
        rng = np.random.default_rng(123)
        draws = rng.poisson(3.0, size=200_000)
        oracle_mean = draws[draws >= 1].mean()
        assert 3.1 < oracle_mean < 3.2

        a, b = make_units("a", 50, 1), make_units("b", 600, 1)
        doc = corpus.commingle(a, b, lam=3.0, seed=5)
        mean_run = np.mean(doc.record.run_lengths)
        assert 2.6 <= mean_run <= 3.4
        assert sum(doc.record.run_lengths) == 600

    def test_replay_record_positions(self):
        a, b = make_units("a", 8), make_units("b", 5)
        doc = corpus.commingle(a, b, seed=11)
        # replaying the record reconstructs the same truth sequence
        truth = [0] * len(a)
        for pos, k in zip(doc.record.insertion_positions, doc.record.run_lengths):
            truth[pos:pos] = [1] * k
        assert truth == doc.truth.tolist()
