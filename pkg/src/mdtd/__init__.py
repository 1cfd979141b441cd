"""Multi-dictionary tensor decomposition.

Sparse dictionary-coded CPD factorization of 3-way tensors with ADMM
optimization, dense and sparse missing-value imputation, and
core-consistency rank estimation.
"""

from .dictionaries import (
    Dictionary,
    Graph,
    gft_dictionary,
    identity_dictionary,
    precompute_gram_evd,
    ramanujan_dictionary,
    spline_dictionary,
)
from .estimator import MDTD
from .rank import RankScanResult, core_consistency, estimate_rank, fit_core
from .solver import (
    FitReport,
    MdtdModel,
    SolverConfig,
    solve,
    update_d_dense,
    update_d_sparse,
)
from .synth import GroundTruth, SynthConfig, generate, make_mask, make_missing_idx, sbm_graph
from .tensors import (
    SparseTensor3,
    fit,
    fold,
    khatri_rao,
    kr_gram,
    mse,
    nnz,
    reconstruct,
    reconstruct_at,
    sse,
    unfold,
)

__version__ = "0.1.0"

__all__ = [
    "Dictionary",
    "FitReport",
    "Graph",
    "GroundTruth",
    "MDTD",
    "MdtdModel",
    "RankScanResult",
    "SolverConfig",
    "SparseTensor3",
    "SynthConfig",
    "core_consistency",
    "estimate_rank",
    "fit",
    "fit_core",
    "fold",
    "generate",
    "gft_dictionary",
    "identity_dictionary",
    "khatri_rao",
    "kr_gram",
    "make_mask",
    "make_missing_idx",
    "mse",
    "nnz",
    "precompute_gram_evd",
    "ramanujan_dictionary",
    "reconstruct",
    "reconstruct_at",
    "sbm_graph",
    "solve",
    "spline_dictionary",
    "sse",
    "unfold",
    "update_d_dense",
    "update_d_sparse",
]
