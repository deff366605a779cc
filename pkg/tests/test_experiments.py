import json

import numpy as np
import pytest

from stylesig import corpus, experiments, features
from stylesig.errors import ConfigError


def make_stream(prefix, n_tokens, vocab_size=30, seed=0):
    rng = np.random.default_rng(seed)
    tokens = [f"{prefix}{i}" for i in rng.integers(0, vocab_size, size=n_tokens)]
    return corpus.TokenStream(tokens=tokens, source_id=prefix)


def make_doc(m0=30, m1=30, unit_length=5, seed=0):
    a = corpus.segment(make_stream("a", m0 * unit_length, seed=1), unit_length)
    b = corpus.segment(make_stream("b", m1 * unit_length, seed=2), unit_length)
    return corpus.commingle(a, b, seed=seed)


class TestDeriveSeed:
    def test_deterministic(self):
        assert experiments.derive_seed(1, "x", 2) == experiments.derive_seed(1, "x", 2)

    def test_sensitive_to_every_part(self):
        base = experiments.derive_seed(1, "x", 2)
        assert experiments.derive_seed(2, "x", 2) != base
        assert experiments.derive_seed(1, "y", 2) != base
        assert experiments.derive_seed(1, "x", 3) != base

    def test_fits_in_63_bits(self):
        for parts in [(0,), ("a", "b"), (1, 2, 3, 4)]:
            s = experiments.derive_seed(*parts)
            assert 0 <= s < 2**63


class TestSubsample:
    def test_count_rule(self):
        # 100 units of source 0, 60 of source 1, c = 0.2 -> 12 per source
        truth = np.array([0] * 100 + [1] * 60)
        idx = experiments.subsample_units(truth, 0.2, seed=0)
        assert len(idx) == 24
        assert int(np.sum(truth[idx] == 0)) == 12
        assert int(np.sum(truth[idx] == 1)) == 12

    def test_sorted_ascending_no_repeats(self):
        truth = np.array([0, 1] * 40)
        idx = experiments.subsample_units(truth, 0.5, seed=3)
        assert np.all(np.diff(idx) > 0)

    def test_c_one_takes_min_count_from_each(self):
        truth = np.array([0] * 10 + [1] * 7)
        idx = experiments.subsample_units(truth, 1.0, seed=1)
        assert int(np.sum(truth[idx] == 0)) == 7
        assert int(np.sum(truth[idx] == 1)) == 7

    def test_determinism(self):
        truth = np.array([0, 1] * 50)
        a = experiments.subsample_units(truth, 0.3, seed=9)
        b = experiments.subsample_units(truth, 0.3, seed=9)
        assert np.array_equal(a, b)

    def test_invalid_c(self):
        with pytest.raises(ConfigError):
            experiments.subsample_units(np.array([0, 1] * 10), 0.0, seed=0)


class TestSplitTrainTest:
    def test_disjoint_and_sorted(self):
        truth = np.array([0] * 50 + [1] * 50)
        train, test = experiments.split_train_test(truth, 0.2, seed=4)
        assert len(set(train.tolist()) & set(test.tolist())) == 0
        assert len(train) + len(test) == 100
        assert np.all(np.diff(train) > 0)
        assert np.all(np.diff(test) > 0)

    def test_train_balanced(self):
        truth = np.array([0] * 40 + [1] * 25)
        train, _ = experiments.split_train_test(truth, 0.4, seed=5)
        assert int(np.sum(truth[train] == 0)) == 10
        assert int(np.sum(truth[train] == 1)) == 10


def base_config(**overrides):
    kwargs = dict(
        pair=("a", "b"),
        embedding="tfidf",
        classifier="kmeans",
        n_values=[1],
        unit_lengths=[5],
        f_values=[20],
        c=0.5,
        batches=5,
        null_draws=50,
        master_seed=7,
    )
    kwargs.update(overrides)
    return experiments.ExperimentConfig(**kwargs)


class TestConfig:
    def test_validate_rejects_unknowns(self):
        with pytest.raises(ConfigError):
            base_config(embedding="pca").validate()
        with pytest.raises(ConfigError):
            base_config(classifier="svm").validate()
        with pytest.raises(ConfigError):
            base_config(fdr_scope="bonferroni").validate()
        with pytest.raises(ConfigError):
            base_config(c=1.5).validate()
        with pytest.raises(ConfigError):
            base_config(lam=0.0).validate()

    def test_external_requires_files(self):
        cfg = base_config(embedding="external", unit_lengths=[5, 10],
                          external_files={5: "x.tsv"})
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_from_json_round_trip(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({
            "pair": ["a", "b"],
            "classifier": "gi",
            "n_values": [1, 2],
            "unit_lengths": [50],
            "f_values": [100, 300],
            "lambda": 2.5,
            "master_seed": 11,
        }), encoding="utf-8")
        cfg = experiments.ExperimentConfig.from_json(path)
        assert cfg.pair == ("a", "b")
        assert cfg.classifier == "gi"
        assert cfg.lam == 2.5
        assert cfg.f_values == [100, 300]

    def test_from_json_malformed(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{", encoding="utf-8")
        with pytest.raises(ConfigError):
            experiments.ExperimentConfig.from_json(path)


def disjoint_vocab_doc(m_each=40, unit_length=5, seed=0):
    """Two sources with no shared words: trivially separable."""
    a_tokens = [f"a{i % 8}" for i in range(m_each * unit_length)]
    b_tokens = [f"b{i % 8}" for i in range(m_each * unit_length)]
    a = corpus.segment(corpus.TokenStream(tokens=a_tokens, source_id="a"), unit_length)
    b = corpus.segment(corpus.TokenStream(tokens=b_tokens, source_id="b"), unit_length)
    return corpus.commingle(a, b, seed=seed)


class TestRunCell:
    def test_disjoint_vocab_is_significant(self):
        doc = disjoint_vocab_doc()
        cfg = base_config(f_values=[16], batches=10, null_draws=200)
        spec = features.FeatureSpec(features.WORD_NGRAM, 1, 16)
        vocab = features.build_vocabulary(doc.units, spec)
        matrix = features.tfidf(features.count_matrix(doc.units, vocab))
        result = experiments.run_cell(doc, matrix, cfg, (features.WORD_NGRAM, 1, 5, 16))
        assert not result.skipped
        assert result.mean_mcc_norm >= 95.0
        assert result.significant
        assert result.batch_count == 10

    def test_single_batch_fdr_is_identity(self):
        doc = disjoint_vocab_doc()
        cfg = base_config(f_values=[16], batches=1, null_draws=100)
        spec = features.FeatureSpec(features.WORD_NGRAM, 1, 16)
        vocab = features.build_vocabulary(doc.units, spec)
        matrix = features.tfidf(features.count_matrix(doc.units, vocab))
        key = (features.WORD_NGRAM, 1, 5, 16)
        result = experiments.run_cell(doc, matrix, cfg, key)
        raw = experiments.run_cell_raw(matrix.values, doc.truth, cfg, "|".join(map(str, key)))
        assert result.mean_p_fdr == raw.p_values[0]

    def test_tiny_subsample_skipped(self):
        doc = make_doc(m0=6, m1=6)
        cfg = base_config(c=0.2)  # round(0.2 * 6) = 1 per source -> 2 < 4
        spec = features.FeatureSpec(features.WORD_NGRAM, 1, 10)
        vocab = features.build_vocabulary(doc.units, spec)
        matrix = features.tfidf(features.count_matrix(doc.units, vocab))
        result = experiments.run_cell(doc, matrix, cfg, (features.WORD_NGRAM, 1, 5, 10))
        assert result.skipped
        assert result.mean_p_fdr is None
        assert not result.significant


class TestRunGrid:
    def make_streams(self, n_tokens=400):
        a = corpus.TokenStream(
            tokens=[f"a{i % 12}" for i in range(n_tokens)], source_id="a")
        b = corpus.TokenStream(
            tokens=[f"b{i % 12}" for i in range(n_tokens)], source_id="b")
        return a, b

    def test_cell_count(self):
        a, b = self.make_streams()
        cfg = base_config(n_values=[1, 2], unit_lengths=[4, 8], f_values=[10, 20],
                          batches=2, null_draws=20)
        sig = experiments.run_grid(a, b, cfg)
        assert len(sig.cells) == 8
        assert sig.pair_id == "a+b"

    def test_cell_results_independent_of_grid_composition(self):
        a, b = self.make_streams()
        cfg_full = base_config(n_values=[1], unit_lengths=[4, 8], f_values=[10, 20],
                               batches=3, null_draws=30)
        cfg_single = base_config(n_values=[1], unit_lengths=[8], f_values=[20],
                                 batches=3, null_draws=30)
        sig_full = experiments.run_grid(a, b, cfg_full)
        sig_single = experiments.run_grid(a, b, cfg_single)
        key = (features.WORD_NGRAM, 1, 8, 20)
        assert sig_full.cells[key] == sig_single.cells[key]

    def test_thread_count_invariance(self):
        a, b = self.make_streams()
        cfg = base_config(n_values=[1], unit_lengths=[4, 8], f_values=[10, 20],
                          batches=3, null_draws=30)
        sig1 = experiments.run_grid(a, b, cfg, threads=1)
        sig4 = experiments.run_grid(a, b, cfg, threads=4)
        assert sig1.cells == sig4.cells

    def test_insufficient_tokens_marks_cells_skipped(self):
        a, b = self.make_streams(n_tokens=50)
        cfg = base_config(unit_lengths=[5, 100], f_values=[10], batches=2,
                          null_draws=20)
        sig = experiments.run_grid(a, b, cfg)
        assert sig.cells[(features.WORD_NGRAM, 1, 100, 10)].skipped
        assert not sig.cells[(features.WORD_NGRAM, 1, 5, 10)].skipped

    def test_global_fdr_scope_runs(self):
        a, b = self.make_streams()
        cfg = base_config(unit_lengths=[4], f_values=[10, 20], batches=3,
                          null_draws=30, fdr_scope="global")
        sig = experiments.run_grid(a, b, cfg)
        assert all(not c.skipped for c in sig.cells.values())
        # pooled adjustment can only raise p-values relative to raw
        cfg_cell = base_config(unit_lengths=[4], f_values=[10, 20], batches=3,
                               null_draws=30, fdr_scope="cell")
        sig_cell = experiments.run_grid(a, b, cfg_cell)
        for key in sig.cells:
            assert sig.cells[key].mean_mcc_norm == sig_cell.cells[key].mean_mcc_norm

    def test_external_embedding(self, tmp_path):
        a, b = self.make_streams()
        doc = experiments._build_document(a, b, 4, base_config(unit_lengths=[4]))
        rng = np.random.default_rng(0)
        values = rng.standard_normal((len(doc.units), 6))
        values[doc.truth == 1] += 8.0
        path = tmp_path / "ext.tsv"
        features.write_matrix(
            features.FeatureMatrix(values=values, kind="external", unit_length=4), path)
        cfg = base_config(embedding="external", unit_lengths=[4],
                          external_files={4: str(path)}, batches=3, null_draws=50)
        sig = experiments.run_grid(a, b, cfg)
        (key,) = sig.cells
        assert key == ("external", 0, 4, 6)
        assert sig.cells[key].mean_mcc_norm == 100.0

    def test_external_row_count_mismatch(self, tmp_path):
        a, b = self.make_streams()
        path = tmp_path / "ext.tsv"
        features.write_matrix(
            features.FeatureMatrix(values=np.ones((3, 2)), kind="external"), path)
        cfg = base_config(embedding="external", unit_lengths=[4],
                          external_files={4: str(path)})
        with pytest.raises(ConfigError):
            experiments.run_grid(a, b, cfg)


class TestOutcome:
    def make_map(self, flags, skipped=0):
        cells = {}
        for i, sig in enumerate(flags):
            cells[(features.WORD_NGRAM, 1, 5, i)] = experiments.CellResult(
                mean_mcc_norm=90.0, mean_p_fdr=0.01 if sig else 0.5,
                wilson_hi_max=0.1, significant=sig, batch_count=3, repair_flag=False)
        for j in range(skipped):
            cells[(features.WORD_NGRAM, 1, 5, 100 + j)] = experiments._skipped("too small")
        return experiments.SignificanceMap(pair_id="a+b", cells=cells)

    def test_binary_and_rate(self):
        out = experiments.outcome(self.make_map([True, False, False, True]),
                                  truth_same_author=False)
        assert out.binary_positive
        assert out.total_positive_rate == 0.5
        assert out.n_significant == 2

    def test_skipped_excluded_from_rate(self):
        out = experiments.outcome(self.make_map([True, False], skipped=2),
                                  truth_same_author=True)
        assert out.n_cells == 4
        assert out.n_skipped == 2
        assert out.total_positive_rate == 0.5

    def test_all_skipped(self):
        out = experiments.outcome(self.make_map([], skipped=3), truth_same_author=True)
        assert not out.binary_positive
        assert out.total_positive_rate == 0.0
