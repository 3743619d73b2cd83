import math

import numpy as np
import pytest

from tracedensity.channels import random_model
from tracedensity.corpus import Vocabulary, corpus_from_tokens
from tracedensity.exceptions import (
    ConstraintError,
    LikelihoodError,
    SamplingError,
    UndefinedConditionalError,
    ValidationError,
)
from tracedensity.model import (
    Density,
    Dictionary,
    TraceDensityModel,
    conditional_next,
    constraint_residuals,
    log_likelihood,
    marginal_sum,
    normalization_sum,
    phrase_matrix,
    sample_phrase,
    trace_density,
    trivial_model,
)

from conftest import all_phrases, make_trivial, make_vocab


class TestTypes:
    def test_density_rejects_non_hermitian(self):
        with pytest.raises(ValidationError):
            Density(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_density_rejects_negative(self):
        with pytest.raises(ValidationError):
            Density(np.diag([1.0, -0.5]))

    def test_density_rejects_nan(self):
        with pytest.raises(ValidationError):
            Density(np.array([[np.nan, 0.0], [0.0, 1.0]]))

    def test_density_accepts_rounding_level_negativity(self):
        Density(np.diag([1.0, -1e-12]))

    def test_dictionary_shape_checked(self):
        with pytest.raises(ValidationError):
            Dictionary(np.zeros((2, 2, 3), dtype=complex))

    def test_dictionary_stack_round_trip(self):
        mats = np.arange(12, dtype=float).reshape(3, 2, 2).astype(complex)
        d = Dictionary(mats)
        assert np.array_equal(Dictionary.from_stack(d.stack(), 3).mats, mats)

    def test_model_requires_unit_trace_pairing(self):
        v = Vocabulary(("a", "b"))
        eye = np.eye(2)
        mats = np.stack([eye, eye]).astype(complex) / np.sqrt(2)
        with pytest.raises(ValidationError):
            TraceDensityModel(v, Dictionary(mats), Density(eye), Density(eye))

    def test_model_requires_matching_vocab_size(self):
        v = Vocabulary(("a",))
        mats = np.stack([np.eye(2), np.eye(2)]).astype(complex) / np.sqrt(2)
        with pytest.raises(ValidationError):
            TraceDensityModel(v, Dictionary(mats), Density(np.eye(2)), Density(np.eye(2) / 2))

    def test_cached_residuals_match_recomputation(self, e_model):
        res = constraint_residuals(e_model)
        assert abs(res.left - e_model.residuals.left) <= 1e-12
        assert abs(res.right - e_model.residuals.right) <= 1e-12
        assert abs(res.trace - e_model.residuals.trace) <= 1e-12


class TestPhraseMatrix:
    def test_trivial_scalar_product(self, trivial22):
        sm = phrase_matrix(trivial22, [0, 1, 0])
        full = sm.materialize()
        expected = np.eye(2) * 2.0 ** (-1.5)
        assert np.allclose(full, expected, atol=1e-15)

    def test_zero_product(self, e_model):
        sm = phrase_matrix(e_model, [1, 0])  # E12 @ E11 = 0
        assert not sm.matrix.any()

    def test_single_word_is_exact(self, trivial22):
        sm = phrase_matrix(trivial22, [1])
        assert sm.exponent == 0
        assert np.array_equal(sm.matrix, trivial22.dictionary.mats[1])

    def test_empty_phrase_is_identity(self, trivial22):
        sm = phrase_matrix(trivial22, [])
        assert sm.exponent == 0
        assert np.array_equal(sm.matrix, np.eye(2))

    def test_norm_stays_in_band(self):
        # growing matrices force rescaling; the represented product is exact
        v = make_vocab(1)
        mats = (3.0 * np.eye(2, dtype=complex))[None, :, :]
        m = TraceDensityModel(
            v, Dictionary(mats), Density(np.eye(2)), Density(np.eye(2) / 2)
        )
        sm = phrase_matrix(m, [0] * 40)
        nrm = np.linalg.norm(sm.matrix)
        assert 0.5 <= nrm <= 2.0
        # 3^40 * I has Frobenius norm sqrt(2) * 3^40
        assert math.log2(nrm) + sm.exponent == pytest.approx(
            0.5 + 40 * math.log2(3.0), rel=1e-12
        )

    def test_id_out_of_range(self, trivial22):
        with pytest.raises(ValueError):
            phrase_matrix(trivial22, [0, 7])


class TestTraceDensity:
    def test_trivial_is_uniform(self, trivial22):
        assert trace_density(trivial22, [0]).value == pytest.approx(0.5, abs=1e-12)
        assert trace_density(trivial22, [0, 1]).value == pytest.approx(0.25, abs=1e-12)
        for k in range(1, 5):
            for x in all_phrases(2, k, min_len=k):
                assert trace_density(trivial22, x).value == pytest.approx(
                    2.0**-k, abs=1e-12
                )

    def test_empty_phrase_is_one(self, trivial22):
        assert trace_density(trivial22, []).value == pytest.approx(1.0, abs=1e-12)

    def test_e_model_values(self, e_model):
        assert trace_density(e_model, [0]).value == pytest.approx(1.0, abs=1e-14)
        assert trace_density(e_model, [1]).value == 0.0
        assert trace_density(e_model, [0, 1]).value == 0.0

    def test_nonnegative_on_random_models(self):
        for seed in range(6):
            n = 2 + seed % 3
            d = 2 + (seed // 2) % 3
            m = random_model(make_vocab(n), d, seed=seed)
            for x in all_phrases(n, 3):
                assert trace_density(m, x).value >= -1e-14

    def test_log_value_matches_value(self, trivial22):
        td = trace_density(trivial22, [0, 0, 1])
        assert math.exp(td.log_value) == pytest.approx(td.value, rel=1e-12)
        assert td.sign == 1

    def test_underflow_safety_long_phrase(self, trivial22):
        k = 10**5
        td = trace_density(trivial22, [0] * k)
        assert td.value == 0.0  # genuinely underflows as a plain float
        assert td.log_value == pytest.approx(-k * math.log(2.0), rel=1e-6)


class TestConstraintResiduals:
    def test_trivial_exact(self, trivial22):
        res = constraint_residuals(trivial22)
        assert res.left <= 1e-15
        assert res.right <= 1e-15
        assert res.trace <= 1e-15

    def test_e_model_exact(self, e_model):
        res = constraint_residuals(e_model)
        assert res.left <= 1e-15
        assert res.right <= 1e-15
        assert res.trace <= 1e-15

    def test_doubled_dictionary_residual(self, trivial22):
        doubled = TraceDensityModel(
            trivial22.vocab,
            Dictionary(2.0 * trivial22.dictionary.mats),
            trivial22.p_left,
            trivial22.p_right,
        )
        res = constraint_residuals(doubled)
        # sum_i (2 M_i) P_R (2 M_i)^* = 4 P_R, so the defect is 3 ||P_R||_F
        expected = 3.0 * np.linalg.norm(trivial22.p_right.matrix)
        assert res.right == pytest.approx(expected, rel=1e-12)


class TestConditionalNext:
    def test_trivial_uniform(self, trivial22):
        for prefix in [(), (0,), (1, 0, 1)]:
            p = conditional_next(trivial22, prefix)
            assert np.allclose(p, [0.5, 0.5], atol=1e-12)

    def test_e_model_prefix_w1(self, e_model):
        assert np.allclose(conditional_next(e_model, [0]), [1.0, 0.0], atol=1e-14)

    def test_e_model_prefix_w2_undefined(self, e_model):
        with pytest.raises(UndefinedConditionalError):
            conditional_next(e_model, [1])

    def test_sums_to_one_on_random_models(self):
        for seed in range(5):
            m = random_model(make_vocab(3), 3, seed=seed)
            for prefix in [(), (0,), (2, 1), (0, 1, 2)]:
                assert conditional_next(m, prefix).sum() == pytest.approx(
                    1.0, abs=1e-10
                )


class TestSamplePhrase:
    def test_e_model_deterministic(self, e_model):
        for seed in (0, 1, 12345):
            assert sample_phrase(e_model, 3, seed) == (0, 0, 0)

    def test_reproducible(self, trivial22):
        assert sample_phrase(trivial22, 8, seed=42) == sample_phrase(
            trivial22, 8, seed=42
        )

    def test_uniform_statistics(self, trivial22):
        draws = 10_000
        counts = np.zeros(2)
        for s in range(draws):
            counts[sample_phrase(trivial22, 1, seed=s)[0]] += 1
        freq = counts / draws
        sigma = math.sqrt(0.5 * 0.5 / draws)
        assert abs(freq[0] - 0.5) <= 5 * sigma

    def test_length_zero_rejected(self, trivial22):
        with pytest.raises(ValueError):
            sample_phrase(trivial22, 0, seed=0)

    def test_requires_constraints(self, trivial22):
        bad = TraceDensityModel(
            trivial22.vocab,
            Dictionary(1.5 * trivial22.dictionary.mats),
            trivial22.p_left,
            trivial22.p_right,
        )
        with pytest.raises(ConstraintError):
            sample_phrase(bad, 3, seed=0)


class TestLogLikelihood:
    def test_trivial_gives_log_n(self, trivial22):
        v = trivial22.vocab
        c = corpus_from_tokens(["w1", "w2", "w1", "w1", "w2"], v)
        for k in (1, 2, 3):
            r = log_likelihood(trivial22, c, k)
            assert r.mean_log_q == pytest.approx(-k * math.log(2.0), rel=1e-12)
            assert r.perplexity == pytest.approx(2.0, abs=1e-12)
            assert r.windows == len(c) - k + 1

    def test_deterministic_corpus_perplexity_one(self, e_model):
        c = corpus_from_tokens(["w1", "w1", "w1"], e_model.vocab)
        r = log_likelihood(e_model, c, 2)
        assert r.mean_log_q == pytest.approx(0.0, abs=1e-14)
        assert r.perplexity == pytest.approx(1.0, abs=1e-14)

    def test_zero_probability_window_raises(self, e_model):
        c = corpus_from_tokens(["w1", "w2", "w1"], e_model.vocab)
        with pytest.raises(LikelihoodError, match="w2"):
            log_likelihood(e_model, c, 2)

    def test_long_window_evaluates(self, trivial22):
        ids = np.zeros(5000, dtype=np.int64)
        c = corpus_from_tokens(["w1"] * 5000, trivial22.vocab)
        r = log_likelihood(trivial22, c, len(ids))
        assert r.mean_log_q == pytest.approx(-5000 * math.log(2.0), rel=1e-9)


class TestNormalizationAndMarginals:
    def test_normalization_random_models(self):
        for seed in range(5):
            n, d = 2 + seed % 3, 2 + seed % 2
            m = random_model(make_vocab(n), d, seed=seed)
            for k in (1, 2, 3):
                assert normalization_sum(m, k) == pytest.approx(1.0, abs=1e-9)

    def test_marginal_consistency_random_models(self):
        for seed in range(3):
            m = random_model(make_vocab(3), 2, seed=seed)
            for x in [(0,), (2, 1)]:
                qx = trace_density(m, x).value
                for kl_pad in [(0, 1), (1, 0), (1, 1), (2, 0), (0, 2), (2, 2)]:
                    s = marginal_sum(m, x, *kl_pad)
                    assert s == pytest.approx(qx, abs=1e-9)

    def test_translation_invariance(self):
        # sum_i q(w_i . x) = sum_i q(x . w_i) = q(x)
        m = random_model(make_vocab(4), 3, seed=9)
        for x in all_phrases(4, 2):
            qx = trace_density(m, x).value
            left = sum(trace_density(m, (i, *x)).value for i in range(4))
            right = sum(trace_density(m, (*x, i)).value for i in range(4))
            assert left == pytest.approx(qx, abs=1e-10)
            assert right == pytest.approx(qx, abs=1e-10)

    def test_enumeration_matches_per_phrase_sum(self):
        # the vectorized enumeration agrees with summing trace_density calls
        m = random_model(make_vocab(3), 2, seed=4)
        brute = sum(trace_density(m, x).value for x in all_phrases(3, 2, min_len=2))
        assert normalization_sum(m, 2) == pytest.approx(brute, rel=1e-12)


class TestTrivialModelConstructor:
    def test_any_dimension_satisfies_constraints(self):
        for n, d in [(2, 2), (3, 5), (5, 3)]:
            m = make_trivial(n, d)
            res = m.residuals
            assert max(res.left, res.right, res.trace) <= 1e-12
            assert trace_density(m, [0, 0]).value == pytest.approx(
                n**-2, abs=1e-12
            )
