"""Trace-density language models.

Each vocabulary word carries a d x d complex matrix; a phrase's probability
is tr(P_L M_x P_R M_x^*) for the product M_x of its word matrices and a
pair of boundary densities.  Two cubic constraints (the left and right
density constraints) make these numbers proper, marginal-consistent
probability distributions, and training is likelihood ascent restricted to
the constraint manifold.
"""

from .corpus import (
    Corpus,
    EmpiricalDist,
    IngestOptions,
    PhraseTable,
    Vocabulary,
    build_vocab,
    corpus_from_file,
    corpus_from_text,
    corpus_from_tokens,
    empirical_dist,
    extract_phrases,
    tokenize,
)
from .model import (
    ConstraintResiduals,
    Density,
    Dictionary,
    LikelihoodResult,
    ScaledMatrix,
    TraceDensity,
    TraceDensityModel,
    all_phrase_products,
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
from .channels import (
    FixedPointResult,
    apply_left_channel,
    apply_right_channel,
    gauge_transform,
    project_isometry,
    random_isometric_dictionary,
    random_model,
    solve_right_density,
)
from .training import (
    EpochRecord,
    EvalReport,
    TrainConfig,
    TrainReport,
    evaluate,
    nll_gradient,
    riemannian_step,
    train,
)
from .serialize import load_model, model_from_dict, model_to_dict, save_model
from . import exceptions

__version__ = "0.1.0"

__all__ = [
    "Corpus",
    "EmpiricalDist",
    "IngestOptions",
    "PhraseTable",
    "Vocabulary",
    "build_vocab",
    "corpus_from_file",
    "corpus_from_text",
    "corpus_from_tokens",
    "empirical_dist",
    "extract_phrases",
    "tokenize",
    "ConstraintResiduals",
    "Density",
    "Dictionary",
    "LikelihoodResult",
    "ScaledMatrix",
    "TraceDensity",
    "TraceDensityModel",
    "all_phrase_products",
    "conditional_next",
    "constraint_residuals",
    "log_likelihood",
    "marginal_sum",
    "normalization_sum",
    "phrase_matrix",
    "sample_phrase",
    "trace_density",
    "trivial_model",
    "FixedPointResult",
    "apply_left_channel",
    "apply_right_channel",
    "gauge_transform",
    "project_isometry",
    "random_isometric_dictionary",
    "random_model",
    "solve_right_density",
    "EpochRecord",
    "EvalReport",
    "TrainConfig",
    "TrainReport",
    "evaluate",
    "nll_gradient",
    "riemannian_step",
    "train",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "save_model",
    "exceptions",
    "__version__",
]
