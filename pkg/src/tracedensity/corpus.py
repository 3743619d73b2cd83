"""Corpus ingestion and graded phrase statistics.

A corpus is a sequence of word ids over a fixed vocabulary.  For each phrase
length ``k`` the corpus yields a table of sliding-window counts and the
empirical distribution over length-``k`` phrases, which is what a
trace-density model is trained to match.

Word ids are 0-based: valid ids for a vocabulary of size ``n`` are
``0 .. n-1``.
"""

from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import IngestionError

UNKNOWN_TOKEN = "<unk>"


@dataclass(frozen=True)
class IngestOptions:
    """Options controlling text ingestion.

    lowercase: fold tokens to lower case.
    split_punct: split punctuation characters into their own tokens.
    min_count: tokens seen fewer times are mapped to the unknown token.
    """

    lowercase: bool = True
    split_punct: bool = True
    min_count: int = 1


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str, options: IngestOptions = IngestOptions()) -> list[str]:
    """Split text into tokens.

    Tokens are maximal whitespace-free runs; with ``split_punct`` every
    punctuation character becomes its own token, and with ``lowercase`` the
    result is case-folded.  Deterministic: equal inputs give equal outputs,
    and re-tokenizing ``" ".join(tokens)`` reproduces ``tokens``.
    """
    if not isinstance(text, str):
        raise IngestionError("text must be a str of valid UTF-8")
    if options.lowercase:
        text = text.lower()
    tokens: list[str] = []
    for run in text.split():
        if not options.split_punct:
            tokens.append(run)
            continue
        buf: list[str] = []
        for ch in run:
            if _is_punct(ch):
                if buf:
                    tokens.append("".join(buf))
                    buf = []
                tokens.append(ch)
            else:
                buf.append(ch)
        if buf:
            tokens.append("".join(buf))
    return tokens


@dataclass(frozen=True)
class Vocabulary:
    """Ordered inventory of distinct tokens.

    ``words[i]`` is the token with id ``i``; ids are stable for the lifetime
    of the vocabulary.  ``unknown_token``, when set, must itself be one of
    the words and is the target for out-of-vocabulary tokens.
    """

    words: tuple[str, ...]
    unknown_token: str | None = None
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(self.words))
        if len(self.words) < 1:
            raise IngestionError("vocabulary must contain at least one word")
        if any(not w for w in self.words):
            raise IngestionError("vocabulary words must be non-empty")
        index = {w: i for i, w in enumerate(self.words)}
        if len(index) != len(self.words):
            raise IngestionError("vocabulary words must be distinct")
        if self.unknown_token is not None and self.unknown_token not in index:
            raise IngestionError("unknown_token must be one of the words")
        object.__setattr__(self, "_index", index)

    @property
    def size(self) -> int:
        return len(self.words)

    def id_of(self, word: str) -> int:
        """Id of ``word``, falling back to the unknown token if configured."""
        i = self._index.get(word)
        if i is not None:
            return i
        if self.unknown_token is not None:
            return self._index[self.unknown_token]
        raise ValueError(f"word {word!r} not in vocabulary")

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def encode(self, tokens: Iterable[str]) -> np.ndarray:
        return np.array([self.id_of(t) for t in tokens], dtype=np.int64)


def build_vocab(tokens: Sequence[str], min_count: int = 1) -> Vocabulary:
    """Build a vocabulary of tokens with count >= min_count, in
    first-occurrence order.

    If any token falls below the threshold, the unknown token is appended
    and the excluded tokens map to it.
    """
    if len(tokens) == 0:
        raise IngestionError("cannot build a vocabulary from an empty token sequence")
    counts = Counter(tokens)
    kept: list[str] = []
    seen: set[str] = set()
    excluded = False
    for tok in tokens:
        if tok in seen:
            continue
        seen.add(tok)
        if counts[tok] >= min_count:
            kept.append(tok)
        else:
            excluded = True
    if not kept:
        raise IngestionError(
            f"min_count={min_count} excludes every token in the corpus"
        )
    if excluded:
        if UNKNOWN_TOKEN not in kept:
            kept.append(UNKNOWN_TOKEN)
        return Vocabulary(tuple(kept), unknown_token=UNKNOWN_TOKEN)
    return Vocabulary(tuple(kept))


@dataclass(frozen=True)
class Corpus:
    """A corpus as a word-id sequence over a vocabulary."""

    token_ids: np.ndarray
    vocab: Vocabulary

    def __post_init__(self):
        ids = np.ascontiguousarray(self.token_ids, dtype=np.int64)
        if ids.ndim != 1 or ids.size < 1:
            raise IngestionError("corpus must be a non-empty 1-d id sequence")
        if ids.min() < 0 or ids.max() >= self.vocab.size:
            raise IngestionError("corpus contains ids outside the vocabulary")
        ids.setflags(write=False)
        object.__setattr__(self, "token_ids", ids)

    def __len__(self) -> int:
        return int(self.token_ids.size)


def corpus_from_tokens(tokens: Sequence[str], vocab: Vocabulary) -> Corpus:
    """Encode tokens against an existing vocabulary."""
    if len(tokens) == 0:
        raise IngestionError("empty token sequence")
    try:
        ids = vocab.encode(tokens)
    except ValueError as exc:
        raise IngestionError(str(exc)) from exc
    return Corpus(ids, vocab)


def corpus_from_text(
    text: str, options: IngestOptions = IngestOptions()
) -> Corpus:
    """Tokenize text, build the vocabulary, and encode in one step."""
    tokens = tokenize(text, options)
    vocab = build_vocab(tokens, min_count=options.min_count)
    return corpus_from_tokens(tokens, vocab)


def corpus_from_file(
    path, options: IngestOptions = IngestOptions(), vocab: Vocabulary | None = None
) -> Corpus:
    """Read a UTF-8 text file as a corpus.

    With ``vocab`` the file is encoded against the existing vocabulary
    (out-of-vocabulary tokens map to its unknown token, if any); otherwise a
    fresh vocabulary is built.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except UnicodeDecodeError as exc:
        raise IngestionError(f"{path}: not valid UTF-8: {exc}") from exc
    except OSError as exc:
        raise IngestionError(f"{path}: {exc}") from exc
    if vocab is None:
        return corpus_from_text(text, options)
    return corpus_from_tokens(tokenize(text, options), vocab)


@dataclass(frozen=True)
class PhraseTable:
    """Sliding-window counts of all length-``k`` phrases in a corpus.

    ``positions`` is the number of windows (corpus length - k + 1) and
    always equals the sum of the counts.
    """

    k: int
    counts: Mapping[tuple[int, ...], int]
    positions: int

    def __post_init__(self):
        if any(len(key) != self.k for key in self.counts):
            raise ValueError("all phrase keys must have length k")
        if sum(self.counts.values()) != self.positions:
            raise ValueError("counts must sum to the number of window positions")


@dataclass(frozen=True)
class EmpiricalDist:
    """Empirical probability of each length-``k`` phrase in a corpus."""

    k: int
    probs: Mapping[tuple[int, ...], float]

    def __post_init__(self):
        total = sum(self.probs.values())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {total}, not 1")


def extract_phrases(corpus: Corpus, k: int) -> PhraseTable:
    """Count every length-``k`` window of adjacent words in the corpus."""
    m = len(corpus)
    if k < 1:
        raise ValueError("phrase length k must be >= 1")
    if k > m:
        raise ValueError(f"phrase length k={k} exceeds corpus length {m}")
    ids = corpus.token_ids
    counts: Counter[tuple[int, ...]] = Counter()
    for start in range(m - k + 1):
        counts[tuple(int(i) for i in ids[start : start + k])] += 1
    return PhraseTable(k=k, counts=dict(counts), positions=m - k + 1)


def empirical_dist(table: PhraseTable) -> EmpiricalDist:
    """Normalize window counts by the number of window positions."""
    probs = {phrase: c / table.positions for phrase, c in table.counts.items()}
    return EmpiricalDist(k=table.k, probs=probs)
