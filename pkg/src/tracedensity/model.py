"""Trace-density models and phrase probability evaluation.

A model assigns each vocabulary word ``w_i`` a ``d x d`` complex matrix
``M_i`` (the dictionary) and carries two positive semi-definite boundary
densities ``P_L``, ``P_R`` with ``tr(P_L P_R) = 1``.  The probability of a
phrase ``x = w_{i_1} ... w_{i_k}`` is the trace density

    q(x) = tr(P_L (M_{i_1} ... M_{i_k}) P_R (M_{i_1} ... M_{i_k})^*).

Matrix products are carried with a base-2 scale exponent so that phrases of
length 10^6 evaluate without floating-point underflow.

When the dictionary and densities satisfy the two cubic constraints

    sum_i M_i P_R M_i^* = P_R      (right density constraint)
    sum_i M_i^* P_L M_i = P_L      (left density constraint)

the trace density is a properly normalized, marginal-consistent family of
distributions: the length-k densities sum to one and padding a phrase on
either side and summing out the padding recovers the phrase's own density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import Corpus, PhraseTable, Vocabulary, extract_phrases
from .exceptions import (
    ConstraintError,
    LikelihoodError,
    SamplingError,
    UndefinedConditionalError,
    ValidationError,
)

# Tolerances are calibrated for double precision at bond dimension <= 64.
HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-10
TRACE_PAIRING_TOL = 1e-9

_LN2 = math.log(2.0)
_MIN_POSITIVE_Q = 1e-300


def _as_complex_matrix(a, name: str) -> np.ndarray:
    m = np.ascontiguousarray(a, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"{name} must be a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m.view(np.float64))):
        raise ValidationError(f"{name} has non-finite entries")
    return m


@dataclass(frozen=True)
class Density:
    """A Hermitian positive semi-definite matrix (not necessarily unit trace)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = _as_complex_matrix(self.matrix, "density")
        scale = max(1.0, float(np.linalg.norm(m)))
        herm_defect = float(np.linalg.norm(m - m.conj().T))
        if herm_defect > HERMITIAN_TOL * scale:
            raise ValidationError(
                f"density is not Hermitian: defect {herm_defect:.3e}"
            )
        lam_min = float(np.linalg.eigvalsh((m + m.conj().T) / 2.0).min())
        if lam_min < -PSD_TOL * scale:
            raise ValidationError(
                f"density is not positive semi-definite: min eigenvalue {lam_min:.3e}"
            )
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def d(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class Dictionary:
    """One ``d x d`` complex matrix per vocabulary word, as an (n, d, d) array."""

    mats: np.ndarray

    def __post_init__(self):
        m = np.ascontiguousarray(self.mats, dtype=np.complex128)
        if m.ndim != 3 or m.shape[1] != m.shape[2]:
            raise ValidationError(
                f"dictionary must have shape (n, d, d), got {m.shape}"
            )
        if m.shape[0] < 1:
            raise ValidationError("dictionary must contain at least one matrix")
        if not np.all(np.isfinite(m.view(np.float64))):
            raise ValidationError("dictionary has non-finite entries")
        m.setflags(write=False)
        object.__setattr__(self, "mats", m)

    @property
    def n(self) -> int:
        return self.mats.shape[0]

    @property
    def d(self) -> int:
        return self.mats.shape[1]

    def stack(self) -> np.ndarray:
        """The (n*d, d) vertical stack [M_1; M_2; ...; M_n]."""
        return self.mats.reshape(self.n * self.d, self.d)

    @classmethod
    def from_stack(cls, stack: np.ndarray, n: int) -> "Dictionary":
        stack = np.asarray(stack, dtype=np.complex128)
        d = stack.shape[1]
        return cls(stack.reshape(n, d, d))


def _right_channel_raw(mats: np.ndarray, a: np.ndarray) -> np.ndarray:
    """sum_i M_i A M_i^*"""
    return np.einsum("iab,bc,idc->ad", mats, a, mats.conj(), optimize=True)


def _left_channel_raw(mats: np.ndarray, a: np.ndarray) -> np.ndarray:
    """sum_i M_i^* A M_i"""
    return np.einsum("iba,bc,icd->ad", mats.conj(), a, mats, optimize=True)


@dataclass(frozen=True)
class ConstraintResiduals:
    """Frobenius residuals of the two density constraints plus the trace pairing."""

    left: float
    right: float
    trace: float


def _residuals_raw(
    mats: np.ndarray, p_left: np.ndarray, p_right: np.ndarray
) -> ConstraintResiduals:
    right = float(np.linalg.norm(_right_channel_raw(mats, p_right) - p_right))
    left = float(np.linalg.norm(_left_channel_raw(mats, p_left) - p_left))
    trace = abs(float(np.einsum("ab,ba->", p_left, p_right).real) - 1.0)
    return ConstraintResiduals(left=left, right=right, trace=trace)


@dataclass(frozen=True)
class TraceDensityModel:
    """Vocabulary + dictionary + boundary densities, validated eagerly.

    Construction requires ``|tr(P_L P_R) - 1| <= 1e-9`` and caches the
    left/right constraint residuals; residual magnitudes beyond that are the
    caller's to judge, so slightly violated constraints (as arise mid-training)
    still evaluate.
    """

    vocab: Vocabulary
    dictionary: Dictionary
    p_left: Density
    p_right: Density
    residuals: ConstraintResiduals = field(init=False)

    def __post_init__(self):
        n, d = self.dictionary.n, self.dictionary.d
        if self.vocab.size != n:
            raise ValidationError(
                f"vocabulary size {self.vocab.size} != dictionary size {n}"
            )
        if self.p_left.d != d or self.p_right.d != d:
            raise ValidationError("density dimensions do not match the dictionary")
        res = _residuals_raw(
            self.dictionary.mats, self.p_left.matrix, self.p_right.matrix
        )
        if res.trace > TRACE_PAIRING_TOL:
            raise ValidationError(
                f"tr(P_L P_R) deviates from 1 by {res.trace:.3e}"
            )
        object.__setattr__(self, "residuals", res)

    @property
    def n(self) -> int:
        return self.dictionary.n

    @property
    def d(self) -> int:
        return self.dictionary.d


def constraint_residuals(model: TraceDensityModel) -> ConstraintResiduals:
    """Recompute the left/right/trace constraint residuals from scratch."""
    return _residuals_raw(
        model.dictionary.mats, model.p_left.matrix, model.p_right.matrix
    )


def trivial_model(vocab: Vocabulary, d: int) -> TraceDensityModel:
    """The uniform model: M_i = I/sqrt(n), P_L = I, P_R = I/d.

    Satisfies both density constraints exactly and assigns every length-k
    phrase the probability n^-k.
    """
    if d < 1:
        raise ValueError("bond dimension must be >= 1")
    n = vocab.size
    eye = np.eye(d, dtype=np.complex128)
    mats = np.repeat(eye[None, :, :] / math.sqrt(n), n, axis=0)
    return TraceDensityModel(
        vocab=vocab,
        dictionary=Dictionary(mats),
        p_left=Density(eye),
        p_right=Density(eye / d),
    )


# ----------------------------------------------------------------------
# Scaled phrase products
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ScaledMatrix:
    """A matrix with a base-2 scale: the represented value is matrix * 2**exponent."""

    matrix: np.ndarray
    exponent: int

    def materialize(self) -> np.ndarray:
        """The unscaled matrix; may under/overflow for extreme exponents."""
        re = np.ldexp(self.matrix.real, self.exponent)
        im = np.ldexp(self.matrix.imag, self.exponent)
        return re + 1j * im


def _check_ids(ids, n: int) -> np.ndarray:
    arr = np.asarray(ids, dtype=np.int64).ravel()
    if arr.size and (arr.min() < 0 or arr.max() >= n):
        raise ValueError(f"word id out of range 0..{n - 1}")
    return arr


def _rescale(b: np.ndarray, e: int) -> tuple[np.ndarray, int]:
    """Pull the Frobenius norm of ``b`` back into [1/2, 2], adjusting ``e``."""
    nrm = float(np.linalg.norm(b))
    if nrm == 0.0:
        return b, e
    if 0.5 <= nrm <= 2.0:
        return b, e
    shift = int(round(math.log2(nrm)))
    return b * (2.0 ** -shift), e + shift


def _scaled_product(mats: np.ndarray, ids: np.ndarray) -> tuple[np.ndarray, int]:
    d = mats.shape[1]
    b = np.eye(d, dtype=np.complex128)
    e = 0
    for i in ids:
        b = b @ mats[i]
        b, e = _rescale(b, e)
        if not b.any():
            break  # exact zero product; every extension stays zero
    return b, e


def phrase_matrix(model: TraceDensityModel, phrase: Sequence[int]) -> ScaledMatrix:
    """The matrix product M_{i_1} ... M_{i_k} as ``B * 2**e``.

    ``B`` is kept with Frobenius norm in [1/2, 2] by periodic power-of-two
    rescaling (exact in floating point), so arbitrarily long phrases neither
    underflow nor overflow.  The empty phrase gives (identity, 0).
    """
    ids = _check_ids(phrase, model.n)
    b, e = _scaled_product(model.dictionary.mats, ids)
    return ScaledMatrix(matrix=b, exponent=e)


def _pairing_trace(p_left: np.ndarray, b: np.ndarray, p_right: np.ndarray) -> float:
    """tr(P_L B P_R B^*), real by Hermiticity of the densities."""
    return float(
        np.einsum("ab,bc,cd,ad->", p_left, b, p_right, b.conj(), optimize=True).real
    )


@dataclass(frozen=True)
class TraceDensity:
    """A trace-density value with an underflow-safe log form.

    ``value`` is the plain float (0.0 if it underflows), ``log_value`` is
    ``log q`` (-inf when the computed trace is not positive), and ``sign`` is
    the sign of the computed trace before any clamping, so rounding-level
    negatives are observable.
    """

    value: float
    log_value: float
    sign: int

    def __float__(self) -> float:
        return self.value


def _trace_density_from_scaled(
    p_left: np.ndarray, b: np.ndarray, e: int, p_right: np.ndarray
) -> TraceDensity:
    t = _pairing_trace(p_left, b, p_right)
    if t > 0.0:
        log_value = math.log(t) + 2.0 * e * _LN2
    else:
        log_value = -math.inf
    try:
        value = math.ldexp(t, 2 * e)
    except OverflowError:
        value = math.copysign(math.inf, t)
    return TraceDensity(value=value, log_value=log_value, sign=int(np.sign(t)))


def trace_density(model: TraceDensityModel, phrase: Sequence[int]) -> TraceDensity:
    """The probability q(x) = tr(P_L M_x P_R M_x^*) of a phrase.

    Nonnegative for valid models (of the order of rounding error below zero at
    worst); the empty phrase has q = tr(P_L P_R) = 1.  Computed through the
    scaled product, so phrases of length up to at least 10^6 are safe.
    """
    ids = _check_ids(phrase, model.n)
    b, e = _scaled_product(model.dictionary.mats, ids)
    return _trace_density_from_scaled(
        model.p_left.matrix, b, e, model.p_right.matrix
    )


# ----------------------------------------------------------------------
# Conditionals, sampling, likelihood
# ----------------------------------------------------------------------

def _next_word_weights(
    model: TraceDensityModel, b: np.ndarray
) -> tuple[np.ndarray, float]:
    """Per-word trace densities of prefix-product ``b`` extended by one word,
    plus the prefix's own trace, all in ``b``'s scale (the scale cancels in
    the conditional ratio)."""
    p_left = model.p_left.matrix
    p_right = model.p_right.matrix
    denom = _pairing_trace(p_left, b, p_right)
    ext = b @ model.dictionary.mats  # (n, d, d), ext[i] = B @ M_i
    nums = np.einsum(
        "ab,ibc,cd,iad->i", p_left, ext, p_right, ext.conj(), optimize=True
    ).real
    return nums, denom


def conditional_next(
    model: TraceDensityModel, prefix: Sequence[int] = ()
) -> np.ndarray:
    """Next-word distribution p_i = q(prefix . w_i) / q(prefix).

    Sums to one (within round-off) whenever the right density constraint
    holds; requires q(prefix) > 0.  The empty prefix gives the length-1
    marginals (q(w_1), ..., q(w_n)).
    """
    ids = _check_ids(prefix, model.n)
    b, _ = _scaled_product(model.dictionary.mats, ids)
    nums, denom = _next_word_weights(model, b)
    if denom <= 0.0:
        raise UndefinedConditionalError(
            f"prefix {tuple(int(i) for i in ids)} has zero probability"
        )
    return nums / denom


def sample_phrase(
    model: TraceDensityModel, length: int, seed: int
) -> tuple[int, ...]:
    """Draw a phrase of the given length autoregressively.

    Deterministic given the seed.  Requires the model's constraint residuals
    to be at most 1e-8 so the conditionals are genuine distributions.
    """
    if length < 1:
        raise ValueError("sample length must be >= 1")
    res = model.residuals
    if max(res.left, res.right, res.trace) > 1e-8:
        raise ConstraintError(
            "sampling requires constraint residuals <= 1e-8, got "
            f"left={res.left:.3e} right={res.right:.3e} trace={res.trace:.3e}"
        )
    rng = np.random.default_rng(seed)
    mats = model.dictionary.mats
    b = np.eye(model.d, dtype=np.complex128)
    ids: list[int] = []
    for _ in range(length):
        nums, denom = _next_word_weights(model, b)
        if denom <= 0.0:
            raise SamplingError(f"prefix {tuple(ids)} has zero probability")
        probs = np.clip(nums / denom, 0.0, None)
        total = probs.sum()
        if total <= 0.0:
            raise SamplingError(f"no admissible next word after prefix {tuple(ids)}")
        u = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
        idx = min(idx, model.n - 1)
        ids.append(idx)
        b, _ = _rescale(b @ mats[idx], 0)
    return tuple(ids)


@dataclass(frozen=True)
class LikelihoodResult:
    mean_log_q: float
    perplexity: float
    windows: int


def _phrase_label(model: TraceDensityModel, phrase: tuple[int, ...]) -> str:
    if len(phrase) <= 12:
        return " ".join(model.vocab.words[i] for i in phrase)
    head = " ".join(model.vocab.words[i] for i in phrase[:10])
    return f"{head} ... (+{len(phrase) - 10} more words)"


def _likelihood_from_table(
    model: TraceDensityModel, table: PhraseTable
) -> LikelihoodResult:
    mats = model.dictionary.mats
    p_left, p_right = model.p_left.matrix, model.p_right.matrix
    total = 0.0
    for phrase, count in table.counts.items():
        b, e = _scaled_product(mats, np.asarray(phrase, dtype=np.int64))
        t = _pairing_trace(p_left, b, p_right)
        # Zero-detection happens on the rescaled trace, which stays O(1) for
        # any phrase with genuinely nonzero probability however long it is;
        # the materialized q may legitimately underflow for long windows.
        if not t >= _MIN_POSITIVE_Q:
            raise LikelihoodError(
                f"window '{_phrase_label(model, phrase)}' has zero probability "
                f"(scaled trace {t:.3e})"
            )
        total += count * (math.log(t) + 2.0 * e * _LN2)
    mean = total / table.positions
    try:
        perplexity = math.exp(-mean / table.k)
    except OverflowError:
        perplexity = math.inf
    return LikelihoodResult(
        mean_log_q=mean,
        perplexity=perplexity,
        windows=table.positions,
    )


def log_likelihood(
    model: TraceDensityModel, corpus: Corpus, k: int
) -> LikelihoodResult:
    """Mean log q over all length-k windows of the corpus, with the
    per-word perplexity exp(-mean log q / k).

    Windows with probability below 1e-300 raise a LikelihoodError naming the
    offending window.
    """
    if corpus.vocab.size != model.n:
        raise ValueError("corpus vocabulary size does not match the model")
    return _likelihood_from_table(model, extract_phrases(corpus, k))


# ----------------------------------------------------------------------
# Exhaustive enumeration (small n^k only)
# ----------------------------------------------------------------------

def all_phrase_products(dictionary: Dictionary, k: int) -> np.ndarray:
    """Products M_{i_1}...M_{i_k} for every length-k id sequence.

    Returns an (n^k, d, d) array ordered lexicographically by
    (i_1, ..., i_k); k = 0 gives the single identity.  Memory grows as n^k,
    so callers should gate on n^k before asking.
    """
    if k < 0:
        raise ValueError("phrase length must be >= 0")
    d = dictionary.d
    prods = np.eye(d, dtype=np.complex128)[None, :, :]
    for _ in range(k):
        prods = np.einsum(
            "pab,ibc->piac", prods, dictionary.mats, optimize=True
        ).reshape(-1, d, d)
    return prods


def _batch_trace_densities(
    p_left: np.ndarray, prods: np.ndarray, p_right: np.ndarray
) -> np.ndarray:
    return np.einsum(
        "ab,pbc,cd,pad->p", p_left, prods, p_right, prods.conj(), optimize=True
    ).real


def normalization_sum(model: TraceDensityModel, k: int) -> float:
    """sum over all n^k length-k phrases of q(x); equals 1 under the right
    density constraint."""
    prods = all_phrase_products(model.dictionary, k)
    return float(
        _batch_trace_densities(model.p_left.matrix, prods, model.p_right.matrix).sum()
    )


def marginal_sum(
    model: TraceDensityModel, phrase: Sequence[int], pad_left: int, pad_right: int
) -> float:
    """sum over all padders x' (length pad_left) and x'' (length pad_right)
    of q(x' . phrase . x''), by full enumeration.

    Equals q(phrase) under both density constraints.
    """
    ids = _check_ids(phrase, model.n)
    d = model.d
    mid = np.eye(d, dtype=np.complex128)
    for i in ids:
        mid = mid @ model.dictionary.mats[i]
    left = all_phrase_products(model.dictionary, pad_left)
    right = all_phrase_products(model.dictionary, pad_right)
    t = np.einsum("pab,bc,qcd->pqad", left, mid, right, optimize=True)
    t = t.reshape(-1, d, d)
    return float(
        _batch_trace_densities(model.p_left.matrix, t, model.p_right.matrix).sum()
    )
