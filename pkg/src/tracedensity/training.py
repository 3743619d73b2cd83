"""Constrained maximum-likelihood training.

The dictionary is optimized by Riemannian gradient descent on the manifold
of isometric dictionaries (the left density constraint in the P_L = I
gauge), with the right density re-solved as a channel fixed point after
every dictionary update and held constant inside the gradient.  Keeping
both constraints satisfied at every visited model means the normalization
and marginal-consistency identities hold throughout training, at the price
of a small, disclosed bias in the gradient.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .corpus import Corpus, extract_phrases
from .exceptions import (
    ConstraintError,
    FixedPointError,
    LikelihoodError,
    ProjectionError,
    StepError,
    TrainingError,
)
from .model import (
    Density,
    Dictionary,
    TraceDensityModel,
    _likelihood_from_table,
    _pairing_trace,
    _rescale,
    trace_density,
)
from .channels import _polar_factor, random_isometric_dictionary, solve_right_density

KL_ENUMERATION_CAP = 10**6
NLL_MONOTONE_TOL = 1e-6


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the constrained likelihood ascent.

    ``min_count`` belongs to corpus ingestion and is carried here so one
    config object describes a whole training run.
    """

    d: int = 4
    k: int = 3
    epochs: int = 50
    learning_rate: float = 0.1
    batch_size: int = 1024
    seed: int = 0
    fp_tol: float = 1e-10
    fp_max_iter: int = 10_000
    min_count: int = 1

    def __post_init__(self):
        if self.d < 1 or self.k < 1 or self.batch_size < 1 or self.fp_max_iter < 1:
            raise ValueError("d, k, batch_size, fp_max_iter must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate <= 0.0 or self.fp_tol <= 0.0:
            raise ValueError("learning_rate and fp_tol must be positive")
        if self.min_count < 0:
            raise ValueError("min_count must be >= 0")

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "k": self.k,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "fp_tol": self.fp_tol,
            "fp_max_iter": self.fp_max_iter,
            "min_count": self.min_count,
        }


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    nll: float
    perplexity: float
    left_residual: float
    right_residual: float
    fp_iterations: int
    learning_rate: float
    rejected_steps: int
    nll_increased: bool

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "nll": self.nll,
            "perplexity": self.perplexity,
            "left_residual": self.left_residual,
            "right_residual": self.right_residual,
            "fp_iterations": self.fp_iterations,
            "learning_rate": self.learning_rate,
            "rejected_steps": self.rejected_steps,
            "nll_increased": self.nll_increased,
        }


@dataclass(frozen=True)
class TrainReport:
    """Per-epoch diagnostics of a training run.

    ``best_epoch`` identifies the model returned by ``train`` (0 means the
    initialization, which only happens for epochs=0 runs or when no epoch
    improved on it).
    """

    records: tuple[EpochRecord, ...]
    best_epoch: int
    init_nll: float

    def to_dict(self) -> dict:
        return {
            "epochs": [r.to_dict() for r in self.records],
            "best_epoch": self.best_epoch,
            "init_nll": self.init_nll,
            "note": (
                "gradients treat the right density as constant; it is "
                "re-solved as the channel fixed point after every step"
            ),
        }


# ----------------------------------------------------------------------
# Gradient of the mean negative log trace-density
# ----------------------------------------------------------------------

def _gradient_from_counts(
    mats: np.ndarray,
    p_left: np.ndarray,
    p_right: np.ndarray,
    counts: Mapping[tuple[int, ...], int],
    label: str = "phrase",
) -> np.ndarray:
    """Wirtinger gradient d/d(conj M) of the weighted mean of -log q."""
    n, d, _ = mats.shape
    grad = np.zeros((n, d, d), dtype=np.complex128)
    total = sum(counts.values())
    if total == 0:
        return grad
    for phrase, weight in counts.items():
        k = len(phrase)
        # prefix[j] = scaled product of the first j words, suffix[j] of words j..k-1
        prefix = [(np.eye(d, dtype=np.complex128), 0)]
        for i in phrase:
            b, e = prefix[-1]
            prefix.append(_rescale(b @ mats[i], e))
        suffix = [(np.eye(d, dtype=np.complex128), 0)] * (k + 1)
        for j in range(k - 1, -1, -1):
            b, e = suffix[j + 1]
            suffix[j] = _rescale(mats[phrase[j]] @ b, e)
        b_full, e_full = prefix[k]
        t = _pairing_trace(p_left, b_full, p_right)
        if not t >= 1e-300:  # zero-detection on the rescaled trace
            raise LikelihoodError(
                f"{label} {phrase[:12]} has zero probability (scaled trace {t:.3e})"
            )
        mid = p_left @ b_full @ p_right
        for j in range(k):
            b_l, e_l = prefix[j]
            b_r, e_r = suffix[j + 1]
            slot = b_l.conj().T @ mid @ b_r.conj().T
            scale = math.ldexp(weight / t, e_l + e_r - e_full)
            grad[phrase[j]] -= slot * scale
    return grad / total


def nll_gradient(
    model: TraceDensityModel, batch: Sequence[Sequence[int]]
) -> np.ndarray:
    """Euclidean gradient of the batch-mean of -log q with respect to the
    conjugated dictionary entries, shaped like the dictionary (n, d, d).

    For each phrase and each slot j, the block of word i_j receives
    -(L_j^* P_L A P_R R_j^*) / q, where L_j and R_j are the products before
    and after the slot and A is the full product; everything is carried in
    the same base-2 scaling as the phrase products, so long phrases are
    safe.  The boundary densities are treated as constants.
    """
    counts = Counter(tuple(int(i) for i in phrase) for phrase in batch)
    for phrase in counts:
        if any(i < 0 or i >= model.n for i in phrase):
            raise ValueError(f"word id out of range 0..{model.n - 1}")
    return _gradient_from_counts(
        model.dictionary.mats,
        model.p_left.matrix,
        model.p_right.matrix,
        counts,
        label="batch phrase",
    )


def riemannian_step(dictionary: Dictionary, grad: np.ndarray, lr: float) -> Dictionary:
    """One descent step along the isometry manifold.

    Projects the gradient onto the tangent space at the dictionary's stack V
    (G_t = G - V (V^*G + G^*V)/2), takes the Euclidean step V - lr * G_t and
    retracts back with the polar decomposition, so the output satisfies
    sum_i M_i^* M_i = I to round-off.
    """
    n, d = dictionary.n, dictionary.d
    grad = np.asarray(grad, dtype=np.complex128)
    if grad.shape == (n, d, d):
        g = grad.reshape(n * d, d)
    elif grad.shape == (n * d, d):
        g = grad
    else:
        raise ValueError(f"gradient shape {grad.shape} does not match dictionary")
    v = dictionary.stack()
    iso_defect = float(np.linalg.norm(v.conj().T @ v - np.eye(d)))
    if iso_defect > 1e-10:
        raise ConstraintError(
            f"dictionary is not isometric (defect {iso_defect:.3e})"
        )
    sym = (v.conj().T @ g + g.conj().T @ v) / 2.0
    g_t = g - v @ sym
    try:
        stepped = _polar_factor(v - lr * g_t)
    except ProjectionError as exc:
        raise StepError(f"retraction failed: {exc}; reduce the learning rate") from exc
    return Dictionary.from_stack(stepped, n)


# ----------------------------------------------------------------------
# Training loop
# ----------------------------------------------------------------------

def _batch_counters(
    ids: np.ndarray, k: int, batch_size: int
) -> list[Counter[tuple[int, ...]]]:
    windows = [
        tuple(int(x) for x in ids[s : s + k]) for s in range(len(ids) - k + 1)
    ]
    return [
        Counter(windows[i : i + batch_size])
        for i in range(0, len(windows), batch_size)
    ]


def train(corpus: Corpus, config: TrainConfig) -> tuple[TraceDensityModel, TrainReport]:
    """Fit a trace-density model to the corpus by constrained likelihood ascent.

    Starts from a seeded random isometric dictionary with P_L = I, sweeps the
    corpus windows in deterministic order, and per batch: re-solves the right
    density (warm-started), computes the gradient with the right density held
    constant, and takes one Riemannian step.  Batches whose gradient is
    undefined (a zero-probability window) or whose retraction fails are
    rejected and the learning rate is halved for the rest of that epoch.
    Returns the epoch-best model by training NLL together with the report.
    """
    m = len(corpus)
    if config.k > m:
        raise ValueError(f"corpus has no window of length k={config.k}")
    vocab = corpus.vocab

    dictionary = random_isometric_dictionary(vocab.size, config.d, config.seed)
    p_left = Density(np.eye(config.d, dtype=np.complex128))
    table = extract_phrases(corpus, config.k)
    batches = _batch_counters(corpus.token_ids, config.k, config.batch_size)

    records: list[EpochRecord] = []

    def fail(message: str) -> TrainingError:
        return TrainingError(
            message, report=TrainReport(tuple(records), best_epoch=0, init_nll=math.nan)
        )

    fp_fail_streak = 0

    def solve(mats: np.ndarray, warm: np.ndarray | None) -> tuple[np.ndarray, int]:
        nonlocal fp_fail_streak
        try:
            result = solve_right_density(
                Dictionary(mats), p_left,
                tol=config.fp_tol, max_iter=config.fp_max_iter, init=warm,
            )
            fp_fail_streak = 0
            return np.asarray(result.density.matrix), result.iterations
        except FixedPointError as exc:
            fp_fail_streak += 1
            if fp_fail_streak >= 3 or exc.best is None:
                raise fail(
                    f"fixed-point solve failed {fp_fail_streak} time(s) in a row: {exc}"
                ) from exc
            return exc.best, exc.iterations or config.fp_max_iter

    mats = dictionary.mats
    p_right, _ = solve(mats, None)

    def snapshot(pr: np.ndarray) -> TraceDensityModel:
        return TraceDensityModel(
            vocab=vocab,
            dictionary=Dictionary(mats),
            p_left=p_left,
            p_right=Density(pr),
        )

    def corpus_nll(model: TraceDensityModel) -> tuple[float, float]:
        try:
            like = _likelihood_from_table(model, table)
        except LikelihoodError:
            return math.inf, math.inf
        return -like.mean_log_q, like.perplexity

    init_model = snapshot(p_right)
    init_nll, _ = corpus_nll(init_model)
    best_nll, best_epoch = init_nll, 0
    best_state = (mats, p_right)
    prev_nll = init_nll

    for epoch in range(1, config.epochs + 1):
        lr = config.learning_rate
        rejected = 0
        fp_iters = 0
        for batch in batches:
            p_right, iters = solve(mats, p_right)
            fp_iters += iters
            try:
                grad = _gradient_from_counts(
                    mats, p_left.matrix, p_right, batch, label="training window"
                )
                mats = riemannian_step(Dictionary(mats), grad, lr).mats
            except (LikelihoodError, StepError):
                rejected += 1
                lr /= 2.0
                continue
        p_right, iters = solve(mats, p_right)
        fp_iters += iters
        epoch_model = snapshot(p_right)
        nll, ppl = corpus_nll(epoch_model)
        records.append(
            EpochRecord(
                epoch=epoch,
                nll=nll,
                perplexity=ppl,
                left_residual=epoch_model.residuals.left,
                right_residual=epoch_model.residuals.right,
                fp_iterations=fp_iters,
                learning_rate=lr,
                rejected_steps=rejected,
                nll_increased=bool(nll > prev_nll + NLL_MONOTONE_TOL),
            )
        )
        prev_nll = nll
        if nll < best_nll:
            best_nll, best_epoch = nll, epoch
            best_state = (mats, p_right)

    if config.epochs > 0 and not math.isfinite(best_nll):
        raise TrainingError(
            "no epoch produced a finite training likelihood",
            report=TrainReport(tuple(records), best_epoch=0, init_nll=init_nll),
        )

    mats, p_right = best_state
    final_model = snapshot(p_right)
    report = TrainReport(
        records=tuple(records), best_epoch=best_epoch, init_nll=init_nll
    )
    return final_model, report


# ----------------------------------------------------------------------
# Evaluation
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class EvalReport:
    """Held-out quality of a model at one phrase length.

    ``kl`` is the divergence of the model from the corpus's empirical
    length-k distribution; it is only computed when n^k is small enough to
    enumerate (else None).
    """

    k: int
    windows: int
    cross_entropy: float
    perplexity: float
    kl: float | None

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "windows": self.windows,
            "cross_entropy": self.cross_entropy,
            "perplexity": self.perplexity,
            "kl": self.kl,
        }


def evaluate(model: TraceDensityModel, corpus: Corpus, k: int) -> EvalReport:
    """Cross-entropy per word (nats), perplexity, and KL(empirical || model).

    Cross-entropy is -mean log q / k over all length-k windows.  The KL term
    sums empirical * log(empirical / q) over observed phrases and is skipped
    when n^k exceeds the enumeration cap.
    """
    if corpus.vocab.size != model.n:
        raise ValueError("corpus vocabulary size does not match the model")
    table = extract_phrases(corpus, k)
    like = _likelihood_from_table(model, table)
    cross_entropy = -like.mean_log_q / k

    kl: float | None = None
    if model.n**k <= KL_ENUMERATION_CAP:
        kl = 0.0
        for phrase, count in table.counts.items():
            p_hat = count / table.positions
            q = trace_density(model, phrase)
            kl += p_hat * (math.log(p_hat) - q.log_value)
    return EvalReport(
        k=k,
        windows=table.positions,
        cross_entropy=cross_entropy,
        perplexity=like.perplexity,
        kl=kl,
    )
