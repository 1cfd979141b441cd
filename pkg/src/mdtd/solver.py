"""ADMM solver for multi-dictionary sparse-coded tensor decomposition.

Minimizes ``0.5 * ||mask * (x - [[phi1 y1, phi2 y2, phi3 y3]])||_F^2 +
sum_i lam_i ||y_i||_1`` by splitting each encoding into a proxy ``z_i``
(soft-thresholded), a dual ``gamma_i``, and an imputation tensor ``d``
that carries current estimates of unobserved cells.

Scale handling: after every per-mode update the new encoding is
max-normalized column-wise and the removed magnitudes are folded into a
running scale vector ``s``; when a mode is refit, ``s`` rides along on one
of the two fixed factors so the implied reconstruction
``[[s * f1, f2, f3]]`` is preserved by normalization.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .dictionaries import Dictionary, precompute_gram_evd
from .tensors import (
    SparseTensor3,
    khatri_rao,
    kr_gram,
    mttkrp_sparse,
    nnz,
    reconstruct,
    reconstruct_at,
    sse,
    unfold,
)

IMPUTE_MODES = ("none", "dense", "sparse")
SCALE_FLOOR = 1e-12


@dataclass
class SolverConfig:
    """Hyperparameters of one solve call.

    ``lam`` weighs the l1 penalty per mode, ``rho`` the ADMM coupling per
    mode, ``lambda_d`` the pull of observed values on the imputation
    tensor, and ``epsilon`` the objective-change stopping threshold.
    """

    lam: tuple[float, float, float] = (0.1, 0.1, 0.1)
    rho: tuple[float, float, float] = (1.0, 1.0, 1.0)
    lambda_d: float = 1.0
    epsilon: float = 1e-4
    max_iters: int = 500
    impute_mode: str = "none"
    seed: int = 0

    def __post_init__(self):
        self.lam = tuple(float(v) for v in np.broadcast_to(self.lam, (3,)))
        self.rho = tuple(float(v) for v in np.broadcast_to(self.rho, (3,)))
        if any(v < 0 for v in self.lam):
            raise ValueError("lam entries must be >= 0")
        if any(v <= 0 for v in self.rho):
            raise ValueError("rho entries must be > 0")
        if self.lambda_d <= 0:
            raise ValueError("lambda_d must be > 0")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.impute_mode not in IMPUTE_MODES:
            raise ValueError(f"impute_mode must be one of {IMPUTE_MODES}")


@dataclass
class MdtdModel:
    """Fitted state: per-mode encodings, proxies, duals, and the scale.

    ``y`` holds the max-normalized encodings the updates iterate on; ``z``
    the soft-thresholded (exactly sparse) proxies that constitute the
    reported model; ``s`` the per-component scale applied once at
    reconstruction.
    """

    y: list[np.ndarray] = field(repr=False)
    z: list[np.ndarray] = field(repr=False)
    gamma: list[np.ndarray] = field(repr=False)
    s: np.ndarray = field(repr=False)
    dicts: list[Dictionary]
    rank: int

    def factors(self, source: str = "z") -> list[np.ndarray]:
        """Dictionary-expanded factors ``phi_i @ m_i`` (scale not applied)."""
        coding = {"y": self.y, "z": self.z}[source]
        return [d.atoms @ m for d, m in zip(self.dicts, coding)]

    def reconstruction(self, source: str = "z") -> np.ndarray:
        f1, f2, f3 = self.factors(source)
        return reconstruct(f1, f2, f3, self.s)

    def reconstruct_entries(self, idx, source: str = "z") -> np.ndarray:
        f1, f2, f3 = self.factors(source)
        return reconstruct_at(f1, f2, f3, self.s, idx)

    def num_nonzeros(self) -> int:
        """Model size: nonzeros of the sparse encodings plus the scale."""
        return sum(nnz(zi, tol=0.0) for zi in self.z) + self.rank


@dataclass
class FitReport:
    objective: list[float]
    fit_trace: list[float]
    n_iter: int
    converged: bool
    sse: float
    nnz: int
    fit: float
    seconds: float


def update_z(y: np.ndarray, gamma: np.ndarray, lam: float, rho: float) -> np.ndarray:
    """Soft-threshold ``y - gamma / rho`` at ``lam / rho`` (exact zeros)."""
    h = y - gamma / rho
    return np.sign(h) * np.maximum(np.abs(h) - lam / rho, 0.0)


def update_dual(gamma, z, y, rho) -> np.ndarray:
    return gamma + rho * (z - y)


def normalize_factors(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Divide each column by its max magnitude; return (normalized, scales).

    Scales are clamped below at ``1e-12`` so all-zero columns pass through
    unchanged.
    """
    s = np.maximum(np.max(np.abs(y), axis=0), SCALE_FLOOR)
    return y / s, s


def _mttkrp_unfolded(d_unfold, phi, a, b) -> np.ndarray:
    """``phi.T @ d_unfold.T @ khatri_rao(b, a)`` in the cheaper order.

    The tensor-side product goes first in the usual low-rank case
    (rank <= atom count), otherwise the dictionary side.
    """
    if a.shape[1] <= phi.shape[1]:
        return phi.T @ (d_unfold.T @ khatri_rao(b, a))
    return (phi.T @ d_unfold.T) @ khatri_rao(b, a)


def _solve_y_orthogonal_core(c, gram, rho) -> np.ndarray:
    m = gram + rho * np.eye(gram.shape[0])
    try:
        cho = scipy.linalg.cho_factor(m)
    except scipy.linalg.LinAlgError as exc:
        raise RuntimeError(
            "factor-update system not positive definite (rho too small or "
            f"non-finite input): {exc}"
        ) from exc
    return scipy.linalg.cho_solve(cho, c.T).T


def _solve_y_general_core(c, gram, gram_eigvecs, gram_eigvals, rho) -> np.ndarray:
    try:
        p_v, e_v = scipy.linalg.eigh(gram)
    except scipy.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigendecomposition of factor Gram failed: {exc}") from exc
    p_v = np.maximum(p_v, 0.0)
    denom = gram_eigvals[:, None] * p_v[None, :] + rho
    core = (gram_eigvecs.T @ c @ e_v) / denom
    return gram_eigvecs @ core @ e_v.T


def update_y_orthogonal(d_unfold, phi, a, b, z, gamma, rho) -> np.ndarray:
    """Closed-form encoding update for an orthonormal dictionary.

    Solves ``y (gram + rho I) = phi.T d.T (b (.) a) + rho z - gamma`` via a
    Cholesky factorization of the k-by-k system.
    """
    c = _mttkrp_unfolded(d_unfold, phi, a, b) + rho * z - gamma
    return _solve_y_orthogonal_core(c, kr_gram(a, b), rho)


def update_y_general(d_unfold, dictionary: Dictionary, a, b, z, gamma, rho) -> np.ndarray:
    """Encoding update through the dictionary-Gram eigendecomposition.

    Exactly solves ``phi.T phi y gram + rho y = c`` using the precomputed
    eigenpairs of ``phi.T phi`` and a fresh eigendecomposition of the
    k-by-k factor Gram.
    """
    if dictionary.gram_eigvals is None:
        raise ValueError("dictionary has no Gram eigendecomposition; "
                         "run precompute_gram_evd first")
    phi = dictionary.atoms
    c = _mttkrp_unfolded(d_unfold, phi, a, b) + rho * z - gamma
    return _solve_y_general_core(
        c, kr_gram(a, b), dictionary.gram_eigvecs, dictionary.gram_eigvals, rho
    )


def update_d_dense(recon, x, mask, lambda_d) -> np.ndarray:
    """Imputation-tensor update: blend of reconstruction and observations.

    Observed cells get ``(recon + lambda_d * x) / (1 + lambda_d)``; missing
    cells get the reconstruction.
    """
    if lambda_d <= 0:
        raise ValueError("lambda_d must be > 0")
    recon = np.asarray(recon, float)
    x = np.asarray(x, float)
    mask = np.asarray(mask, float)
    if not (recon.shape == x.shape == mask.shape):
        raise ValueError(
            f"shape mismatch: recon {recon.shape}, x {x.shape}, mask {mask.shape}"
        )
    return (recon + lambda_d * mask * x) / (1.0 + lambda_d * mask)


def update_d_sparse(model: MdtdModel, x: SparseTensor3, missing_idx) -> SparseTensor3:
    """Sparse imputation: keep observed entries, fill only missing cells.

    Observed entries are copied bit-exactly; exactly ``len(missing_idx)``
    entries are appended with the model reconstruction evaluated at those
    cells only.
    """
    missing_idx = np.asarray(missing_idx, dtype=np.intp).reshape(-1, 3)
    if missing_idx.shape[0] == 0:
        return x
    _check_missing_disjoint(x, missing_idx)
    vals = model.reconstruct_entries(missing_idx, source="y")
    return x.with_entries(missing_idx, vals, strict=False)


def _check_missing_disjoint(x: SparseTensor3, missing_idx):
    dims = np.array(x.shape)
    if missing_idx.size and (missing_idx.min() < 0 or (missing_idx >= dims).any()):
        raise ValueError("missing index out of range")
    flat_obs = np.ravel_multi_index(x.subs.T, x.shape)
    flat_mis = np.ravel_multi_index(missing_idx.T, x.shape)
    if np.unique(flat_mis).size != flat_mis.size:
        raise ValueError("duplicate missing indices")
    if np.intersect1d(flat_obs, flat_mis).size:
        raise ValueError("missing indices overlap observed entries")


def objective_value(model: MdtdModel, x, mask=None, cfg: SolverConfig | None = None) -> float:
    """Masked data-fit plus l1 penalty, evaluated on the live encodings."""
    lam = cfg.lam if cfg is not None else (0.0, 0.0, 0.0)
    if isinstance(x, SparseTensor3):
        missing = np.zeros((0, 3), dtype=np.intp) if mask is None else mask
        data_sse = _sse_observed_sparse(x, missing, model.factors("y"), model.s)
    else:
        data_sse = sse(x, model.reconstruction(source="y"), mask)
    l1 = sum(l * np.abs(yi).sum() for l, yi in zip(lam, model.y))
    return 0.5 * data_sse + l1


def _sse_observed_sparse(x: SparseTensor3, missing_idx, factors, s) -> float:
    """``sum over observed cells of (x - recon)^2`` without densifying.

    Observed cells are every cell not in ``missing_idx``; absent
    coordinates count as observed zeros.  Uses the factor-Gram identity
    for the model norm and per-entry evaluation for the cross term.
    """
    f1, f2, f3 = factors
    f1s = f1 * s
    model_norm_sq = float(((f1s.T @ f1s) * (f2.T @ f2) * (f3.T @ f3)).sum())
    cross = float(np.dot(x.vals, reconstruct_at(f1, f2, f3, s, x.subs))) if x.nnz else 0.0
    total = x.norm_sq() - 2.0 * cross + model_norm_sq
    if len(missing_idx):
        r_miss = reconstruct_at(f1, f2, f3, s, missing_idx)
        total -= float(np.dot(r_miss, r_miss))
    return max(total, 0.0)


def _validate_inputs(x, dicts, rank, mask, cfg):
    if len(dicts) != 3:
        raise ValueError("exactly three dictionaries are required")
    dims = x.shape
    for m, d in enumerate(dicts):
        if d.mode_dim != dims[m]:
            raise ValueError(
                f"dictionary for mode {m + 1} has {d.mode_dim} rows, "
                f"tensor dim is {dims[m]}"
            )
    if rank < 1:
        raise ValueError("rank must be >= 1")
    if isinstance(x, SparseTensor3):
        if cfg.impute_mode == "dense":
            raise ValueError("dense imputation needs a dense input tensor")
        if mask is not None:
            mask = np.asarray(mask, dtype=np.intp).reshape(-1, 3)
            _check_missing_disjoint(x, mask)
    else:
        if cfg.impute_mode == "sparse":
            raise ValueError("sparse imputation needs a SparseTensor3 input")
        if mask is not None:
            mask = np.asarray(mask, float)
            if mask.shape != dims:
                raise ValueError(f"mask shape {mask.shape} does not match {dims}")
            if not np.isin(mask, (0.0, 1.0)).all():
                raise ValueError("mask must be zero-one valued")
    return mask


def solve(x, dicts, rank, cfg: SolverConfig, mask=None) -> tuple[MdtdModel, FitReport]:
    """Run the ADMM loop until the objective change drops below epsilon.

    Parameters
    ----------
    x : ndarray or SparseTensor3
        Input tensor.
    dicts : sequence of 3 Dictionary
        Per-mode dictionaries; row counts must match the tensor dims.
    rank : int
        Number of components.
    cfg : SolverConfig
    mask : optional
        For dense input: zero-one array, 1 = observed.  For sparse input:
        (m, 3) array of zero-based missing cell indices; all other cells
        count as observed (zeros if absent).

    Returns
    -------
    (MdtdModel, FitReport)
    """
    start = time.perf_counter()
    mask = _validate_inputs(x, dicts, rank, mask, cfg)
    sparse_input = isinstance(x, SparseTensor3)
    dicts = [precompute_gram_evd(d) if not d.orthonormal else d for d in dicts]

    rng = np.random.default_rng(cfg.seed)
    y = [rng.uniform(size=(d.num_atoms, rank)) for d in dicts]
    z = [yi.copy() for yi in y]
    gamma = [np.zeros((d.num_atoms, rank)) for d in dicts]
    s = np.ones(rank)
    model = MdtdModel(y=y, z=z, gamma=gamma, s=s, dicts=list(dicts), rank=rank)

    impute = cfg.impute_mode
    if sparse_input:
        missing = mask if mask is not None else np.zeros((0, 3), dtype=np.intp)
        imputed_vals = np.zeros(len(missing))
        obs_norm_sq = x.norm_sq()
    else:
        d_tensor = np.array(x, dtype=float)
        if impute == "none":
            d_unfolds = [unfold(d_tensor, m) for m in (1, 2, 3)]
        obs_norm_sq = sse(x, np.zeros_like(d_tensor), mask)

    trace: list[float] = []
    fit_trace: list[float] = []
    converged = False
    n_iter = 0

    for it in range(1, cfg.max_iters + 1):
        n_iter = it
        for i in range(3):
            j, l = [m for m in range(3) if m != i]
            a = dicts[j].atoms @ (model.y[j] * model.s)
            b = dicts[l].atoms @ model.y[l]
            gram = kr_gram(a, b)
            if not np.isfinite(gram).all() or np.abs(gram).max() > 1e150:
                raise RuntimeError(
                    f"objective diverged (scale overflow) at iteration {it}: "
                    "the l1 weight is too large for the data scale (dual "
                    "runaway); reduce lambda or increase rho"
                )
            if sparse_input:
                w = _mttkrp_sparse_imputed(x, missing, imputed_vals, a, b, i + 1)
                c = dicts[i].atoms.T @ w + cfg.rho[i] * model.z[i] - model.gamma[i]
            else:
                d_unf = d_unfolds[i] if impute == "none" else unfold(d_tensor, i + 1)
                c = (
                    _mttkrp_unfolded(d_unf, dicts[i].atoms, a, b)
                    + cfg.rho[i] * model.z[i]
                    - model.gamma[i]
                )
            try:
                if dicts[i].orthonormal:
                    y_new = _solve_y_orthogonal_core(c, gram, cfg.rho[i])
                else:
                    y_new = _solve_y_general_core(
                        c, gram, dicts[i].gram_eigvecs, dicts[i].gram_eigvals, cfg.rho[i]
                    )
            except (ValueError, RuntimeError) as exc:
                raise RuntimeError(
                    f"factor update failed at iteration {it}, mode {i + 1}: {exc}"
                ) from exc
            y_new, s_i = normalize_factors(y_new)
            model.y[i] = y_new
            model.s = model.s * s_i
            model.z[i] = update_z(y_new, model.gamma[i], cfg.lam[i], cfg.rho[i])
            model.gamma[i] = update_dual(model.gamma[i], model.z[i], y_new, cfg.rho[i])

        if sparse_input:
            if impute == "sparse" and len(missing):
                imputed_vals = model.reconstruct_entries(missing, source="y")
            data_sse = _sse_observed_sparse(x, missing, model.factors("y"), model.s)
        else:
            recon = model.reconstruction(source="y")
            if impute == "dense":
                d_tensor = update_d_dense(
                    recon, x, mask if mask is not None else np.ones_like(recon), cfg.lambda_d
                )
            data_sse = sse(x, recon, mask)

        f = 0.5 * data_sse + sum(
            l * np.abs(yi).sum() for l, yi in zip(cfg.lam, model.y)
        )
        if not np.isfinite(f):
            raise RuntimeError(f"objective diverged (non-finite) at iteration {it}")
        trace.append(float(f))
        fit_trace.append(
            float(1.0 - np.sqrt(data_sse / obs_norm_sq)) if obs_norm_sq > 0 else 1.0
        )
        if it >= 2 and abs(trace[-1] - trace[-2]) <= cfg.epsilon:
            converged = True
            break

    if sparse_input:
        final_sse = _sse_observed_sparse(x, missing, model.factors("z"), model.s)
    else:
        final_sse = sse(x, model.reconstruction(source="z"), mask)
    final_fit = 1.0 - np.sqrt(final_sse / obs_norm_sq) if obs_norm_sq > 0 else 1.0
    report = FitReport(
        objective=trace,
        fit_trace=fit_trace,
        n_iter=n_iter,
        converged=converged,
        sse=float(final_sse),
        nnz=model.num_nonzeros(),
        fit=float(final_fit),
        seconds=time.perf_counter() - start,
    )
    return model, report


def _mttkrp_sparse_imputed(x: SparseTensor3, missing, imputed_vals, a, b, mode):
    """MTTKRP over the union of observed entries and imputed cells."""
    out = mttkrp_sparse(x, a, b, mode)
    if len(missing) and imputed_vals.size:
        axis = mode - 1
        rest = [ax for ax in range(3) if ax != axis]
        rows = missing[:, axis]
        contrib = imputed_vals[:, None] * a[missing[:, rest[0]]] * b[missing[:, rest[1]]]
        for r in range(a.shape[1]):
            out[:, r] += np.bincount(rows, weights=contrib[:, r], minlength=x.shape[axis])
    return out
