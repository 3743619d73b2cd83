import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracedensity.corpus import (
    Corpus,
    IngestOptions,
    Vocabulary,
    build_vocab,
    corpus_from_text,
    corpus_from_tokens,
    empirical_dist,
    extract_phrases,
    tokenize,
)
from tracedensity.exceptions import IngestionError


class TestTokenize:
    def test_whitespace_split_lowercase(self):
        assert tokenize("A b a") == ["a", "b", "a"]

    def test_empty_input(self):
        assert tokenize("") == []

    def test_punct_split(self):
        assert tokenize("a, b") == ["a", ",", "b"]

    def test_punct_kept_when_disabled(self):
        opts = IngestOptions(split_punct=False)
        assert tokenize("a, b", opts) == ["a,", "b"]

    def test_case_kept_when_disabled(self):
        opts = IngestOptions(lowercase=False)
        assert tokenize("A b", opts) == ["A", "b"]

    def test_interior_punct(self):
        assert tokenize("don't stop!") == ["don", "'", "t", "stop", "!"]

    def test_deterministic(self):
        text = "One, two; THREE... four"
        assert tokenize(text) == tokenize(text)

    @given(st.text(max_size=200))
    @settings(max_examples=200, deadline=None)
    def test_join_then_retokenize_is_idempotent(self, text):
        tokens = tokenize(text)
        assert tokenize(" ".join(tokens)) == tokens


class TestVocabulary:
    def test_ids_are_first_occurrence_stable(self):
        v = Vocabulary(("a", "b", "c"))
        assert [v.id_of(w) for w in "abc"] == [0, 1, 2]
        assert v.size == 3

    def test_rejects_duplicates(self):
        with pytest.raises(IngestionError):
            Vocabulary(("a", "a"))

    def test_rejects_empty_word(self):
        with pytest.raises(IngestionError):
            Vocabulary(("a", ""))

    def test_rejects_empty_vocab(self):
        with pytest.raises(IngestionError):
            Vocabulary(())

    def test_unknown_token_lookup(self):
        v = Vocabulary(("a", "<unk>"), unknown_token="<unk>")
        assert v.id_of("zzz") == 1

    def test_missing_word_without_unknown(self):
        v = Vocabulary(("a", "b"))
        with pytest.raises(ValueError):
            v.id_of("zzz")


class TestBuildVocab:
    def test_distinct_in_order(self):
        v = build_vocab(["a", "b", "a"], min_count=0)
        assert v.words == ("a", "b")
        assert v.unknown_token is None

    def test_min_count_filter(self):
        v = build_vocab(["a", "b", "a"], min_count=2)
        assert v.words == ("a", "<unk>")
        assert v.unknown_token == "<unk>"
        assert v.id_of("b") == 1

    def test_empty_tokens_error(self):
        with pytest.raises(IngestionError):
            build_vocab([], min_count=0)

    def test_all_excluded_error(self):
        with pytest.raises(IngestionError):
            build_vocab(["a", "b"], min_count=5)


class TestCorpus:
    def test_encodes_against_vocab(self):
        v = build_vocab(["a", "b", "a"])
        c = corpus_from_tokens(["a", "b", "a"], v)
        assert list(c.token_ids) == [0, 1, 0]
        assert len(c) == 3

    def test_rejects_out_of_range_ids(self):
        v = Vocabulary(("a", "b"))
        with pytest.raises(IngestionError):
            Corpus(np.array([0, 5]), v)

    def test_rejects_empty(self):
        v = Vocabulary(("a",))
        with pytest.raises(IngestionError):
            Corpus(np.array([], dtype=np.int64), v)

    def test_from_text_pipeline(self):
        c = corpus_from_text("A b, a")
        assert c.vocab.words == ("a", "b", ",")
        assert list(c.token_ids) == [0, 1, 2, 0]


class TestExtractPhrases:
    def _corpus(self, letters):
        v = Vocabulary(tuple(sorted(set(letters))))
        return corpus_from_tokens(list(letters), v)

    def test_bigram_windows(self):
        c = self._corpus("ababa")
        t = extract_phrases(c, 2)
        assert t.positions == 4
        assert t.counts == {(0, 1): 2, (1, 0): 2}

    def test_whole_corpus_window(self):
        c = self._corpus("ababa")
        t = extract_phrases(c, 5)
        assert t.positions == 1
        assert t.counts == {(0, 1, 0, 1, 0): 1}

    def test_k_longer_than_corpus(self):
        c = self._corpus("a")
        with pytest.raises(ValueError):
            extract_phrases(c, 2)

    def test_counts_sum_to_positions(self):
        c = self._corpus("abcabcbbac")
        for k in range(1, 6):
            t = extract_phrases(c, k)
            assert sum(t.counts.values()) == t.positions == len(c) - k + 1

    @given(
        st.lists(st.sampled_from("abc"), min_size=2, max_size=30),
        st.integers(min_value=1, max_value=4),
    )
    @settings(max_examples=100, deadline=None)
    def test_self_concatenation_doubles_interior_counts(self, letters, k):
        # Doubling the corpus doubles every window count except for the k-1
        # fresh windows spanning the seam; check that bookkeeping exactly.
        if k > len(letters):
            return
        v = Vocabulary(("a", "b", "c"))
        single = corpus_from_tokens(letters, v)
        double = corpus_from_tokens(letters + letters, v)
        t1 = extract_phrases(single, k)
        t2 = extract_phrases(double, k)
        ids = list(single.token_ids)
        seam = ids + ids
        m = len(ids)
        seam_windows = [
            tuple(seam[s : s + k]) for s in range(m - k + 1, m)
        ]
        for phrase in set(t2.counts) | set(t1.counts):
            expected = 2 * t1.counts.get(phrase, 0) + seam_windows.count(phrase)
            assert t2.counts.get(phrase, 0) == expected


class TestEmpiricalDist:
    def test_bigram_probabilities(self):
        v = Vocabulary(("a", "b"))
        c = corpus_from_tokens(list("ababa"), v)
        d = empirical_dist(extract_phrases(c, 2))
        assert d.probs[(0, 1)] == pytest.approx(0.5, abs=1e-15)
        assert d.probs[(1, 0)] == pytest.approx(0.5, abs=1e-15)

    def test_unigram_probabilities(self):
        v = Vocabulary(("a", "b"))
        c = corpus_from_tokens(list("aabab"), v)
        d = empirical_dist(extract_phrases(c, 1))
        assert d.probs[(0,)] == pytest.approx(0.6, abs=1e-15)
        assert d.probs[(1,)] == pytest.approx(0.4, abs=1e-15)

    def test_single_phrase_table(self):
        v = Vocabulary(("a",))
        c = corpus_from_tokens(["a", "a"], v)
        d = empirical_dist(extract_phrases(c, 2))
        assert d.probs == {(0, 0): 1.0}

    @given(
        st.lists(st.sampled_from("abcd"), min_size=1, max_size=40),
        st.integers(min_value=1, max_value=5),
    )
    @settings(max_examples=150, deadline=None)
    def test_probabilities_sum_to_one(self, letters, k):
        if k > len(letters):
            return
        v = Vocabulary(("a", "b", "c", "d"))
        c = corpus_from_tokens(letters, v)
        d = empirical_dist(extract_phrases(c, k))
        assert abs(sum(d.probs.values()) - 1.0) <= 1e-12
