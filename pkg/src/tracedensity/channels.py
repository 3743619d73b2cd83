"""Transfer channels of a dictionary and the operations built on them.

The dictionary's matrices act as the Kraus family of a completely positive
map: the right channel sends A to sum_i M_i A M_i^*, the left channel to
sum_i M_i^* A M_i.  The two density constraints say exactly that P_R and P_L
are fixed points of these maps.  This module finds the right fixed point by
normalized power iteration, projects dictionaries onto the isometric
solution set of the left constraint (P_L = I gauge), draws random isometric
dictionaries, and applies gauge transformations that leave every trace
density unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Vocabulary
from .exceptions import ConstraintError, FixedPointError, ProjectionError
from .model import (
    Density,
    Dictionary,
    TraceDensityModel,
    _left_channel_raw,
    _right_channel_raw,
)

DEFAULT_FP_TOL = 1e-10
DEFAULT_FP_MAX_ITER = 10_000

# Left-constraint residual allowed before the fixed-point solve is meaningless.
LEFT_PRECONDITION_TOL = 1e-8


def _check_dim(dictionary: Dictionary, a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    d = dictionary.d
    if a.shape != (d, d):
        raise ValueError(f"matrix shape {a.shape} does not match dimension {d}")
    return a


def apply_right_channel(dictionary: Dictionary, a: np.ndarray) -> np.ndarray:
    """sum_i M_i A M_i^*; preserves Hermiticity and positive semi-definiteness."""
    return _right_channel_raw(dictionary.mats, _check_dim(dictionary, a))


def apply_left_channel(dictionary: Dictionary, a: np.ndarray) -> np.ndarray:
    """sum_i M_i^* A M_i, the adjoint of the right channel."""
    return _left_channel_raw(dictionary.mats, _check_dim(dictionary, a))


@dataclass(frozen=True)
class FixedPointResult:
    """Outcome of the right-density solve.

    ``residual`` is the Frobenius norm of channel(density) - density, and
    ``eigvalue_estimate`` is tr(P_L * channel(density)) before normalization
    (equal to 1 whenever the left constraint holds exactly).
    """

    density: Density
    iterations: int
    residual: float
    eigvalue_estimate: float


def _hermitize(a: np.ndarray) -> np.ndarray:
    return (a + a.conj().T) / 2.0


def solve_right_density(
    dictionary: Dictionary,
    p_left: Density,
    tol: float = DEFAULT_FP_TOL,
    max_iter: int = DEFAULT_FP_MAX_ITER,
    init: np.ndarray | None = None,
) -> FixedPointResult:
    """Find P >= 0 with tr(P_L P) = 1 and sum_i M_i P M_i^* = P.

    The right channel maps the convex set {A >= 0 : tr(P_L A) = 1} to itself
    whenever the dictionary satisfies the left constraint with P_L, so a
    fixed point always exists.  This routine locates it by power iteration
    normalized against P_L, re-Hermitizing each iterate; it converges when
    the peripheral eigenvalue 1 of the channel is simple and reports
    non-convergence (with the best iterate) when it is not.

    ``init`` warm-starts the iteration, e.g. with the previous solution
    during training; the default start is I / tr(P_L).
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    mats = dictionary.mats
    d = dictionary.d
    pl = p_left.matrix
    left_res = float(np.linalg.norm(_left_channel_raw(mats, pl) - pl))
    if left_res > LEFT_PRECONDITION_TOL:
        raise ConstraintError(
            f"left density constraint residual {left_res:.3e} exceeds "
            f"{LEFT_PRECONDITION_TOL:.0e}; no right fixed point is guaranteed"
        )

    if init is None:
        a = np.eye(d, dtype=np.complex128)
    else:
        a = _hermitize(np.asarray(init, dtype=np.complex128))
    pairing = float(np.einsum("ab,ba->", pl, a).real)
    if pairing <= 0.0:
        raise FixedPointError("initial iterate has non-positive pairing with P_L")
    a = a / pairing

    channel_a = _right_channel_raw(mats, a)
    best: np.ndarray | None = None
    best_res = np.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        candidate = _hermitize(channel_a)
        pairing = float(np.einsum("ab,ba->", pl, candidate).real)
        if pairing <= 0.0:
            raise FixedPointError(
                "channel iterate lost positivity against P_L "
                f"(pairing {pairing:.3e}); the channel is degenerate",
                best=best,
                residual=best_res,
                iterations=iterations,
            )
        a = candidate / pairing
        channel_a = _right_channel_raw(mats, a)
        residual = float(np.linalg.norm(channel_a - a))
        if residual < best_res:
            best, best_res = a, residual
        if residual <= tol:
            return FixedPointResult(
                density=Density(a),
                iterations=iterations,
                residual=residual,
                eigvalue_estimate=float(np.einsum("ab,ba->", pl, channel_a).real),
            )
    raise FixedPointError(
        f"no fixed point to residual {tol:.1e} in {max_iter} iterations "
        f"(best residual {best_res:.3e}); the channel's peripheral spectrum "
        "is likely degenerate",
        best=best,
        residual=best_res,
        iterations=iterations,
    )


def _polar_factor(stack: np.ndarray) -> np.ndarray:
    """Unitary polar factor of a tall full-column-rank matrix via SVD."""
    u, s, vh = np.linalg.svd(stack, full_matrices=False)
    if s[0] == 0.0 or s[-1] <= s[0] * max(stack.shape) * np.finfo(np.float64).eps:
        raise ProjectionError(
            f"stack is rank deficient (singular values {s[0]:.3e} .. {s[-1]:.3e})"
        )
    return u @ vh


def project_isometry(dictionary: Dictionary) -> Dictionary:
    """Nearest isometric dictionary in Frobenius norm.

    Replaces the (n*d, d) stack by its unitary polar factor, so the result
    satisfies sum_i M_i^* M_i = I (the left constraint in the P_L = I gauge)
    and an already-isometric dictionary is returned unchanged.
    """
    return Dictionary.from_stack(_polar_factor(dictionary.stack()), dictionary.n)


def random_isometric_dictionary(n: int, d: int, seed: int) -> Dictionary:
    """A uniformly random point on the isometry manifold {V : V^* V = I}.

    Standard complex Gaussian entries followed by the polar projection;
    deterministic given the seed.
    """
    if d < 1 or n < 1:
        raise ValueError("need n >= 1 and d >= 1")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n * d, d)) + 1j * rng.standard_normal((n * d, d))
    return Dictionary.from_stack(_polar_factor(z), n)


def random_model(
    vocab: Vocabulary,
    d: int,
    seed: int,
    tol: float = DEFAULT_FP_TOL,
    max_iter: int = DEFAULT_FP_MAX_ITER,
) -> TraceDensityModel:
    """Random isometric dictionary with P_L = I and the solved right density."""
    dictionary = random_isometric_dictionary(vocab.size, d, seed)
    p_left = Density(np.eye(d, dtype=np.complex128))
    result = solve_right_density(dictionary, p_left, tol=tol, max_iter=max_iter)
    return TraceDensityModel(
        vocab=vocab, dictionary=dictionary, p_left=p_left, p_right=result.density
    )


def gauge_transform(model: TraceDensityModel, g: np.ndarray) -> TraceDensityModel:
    """Conjugate the model by an invertible matrix g, leaving q unchanged.

    M_i -> g M_i g^-1, P_R -> g P_R g^*, P_L -> g^-* P_L g^-1.  Every trace
    density is invariant (exactly, in exact arithmetic); a unitary g with
    P_L = I keeps P_L = I.
    """
    g = np.asarray(g, dtype=np.complex128)
    d = model.d
    if g.shape != (d, d):
        raise ValueError(f"gauge must be {d}x{d}, got {g.shape}")
    u, s, vh = np.linalg.svd(g)
    if s[0] == 0.0 or s[-1] <= s[0] * d * np.finfo(np.float64).eps:
        raise ValueError("gauge matrix is singular")
    g_inv = (vh.conj().T * (1.0 / s)) @ u.conj().T
    mats = np.einsum("ab,ibc,cd->iad", g, model.dictionary.mats, g_inv, optimize=True)
    p_right = _hermitize(g @ model.p_right.matrix @ g.conj().T)
    p_left = _hermitize(g_inv.conj().T @ model.p_left.matrix @ g_inv)
    return TraceDensityModel(
        vocab=model.vocab,
        dictionary=Dictionary(mats),
        p_left=Density(p_left),
        p_right=Density(p_right),
    )
