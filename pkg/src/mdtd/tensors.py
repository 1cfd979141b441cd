"""Dense and sparse 3-way tensor containers and multilinear kernels.

Conventions used throughout the package (fixed here, tested in
``tests/test_tensors.py``):

* A dense 3-way tensor is a ``numpy`` array of shape ``(I, J, T)``.
* ``unfold(x, m)`` stacks the slices that fix mode ``m``; among the two
  remaining modes the earlier one varies fastest, so the mode-1 unfolding
  has shape ``(J*T, I)`` with row index ``j + J*t``.
* ``khatri_rao(b, a)`` is the column-wise Kronecker product with ``a``'s
  row index varying fastest.  Under these two conventions
  ``unfold(reconstruct(a, b, c, s), 1) == khatri_rao(c, b) @ (s * a).T``
  and analogously for the other modes.
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass, field

import numpy as np

MODES = (1, 2, 3)


def _check_mode(mode):
    if mode not in MODES:
        raise ValueError(f"mode must be 1, 2 or 3, got {mode!r}")


def unfold(x: np.ndarray, mode: int) -> np.ndarray:
    """Matricize a dense 3-way tensor along one mode.

    Parameters
    ----------
    x : ndarray, shape (I, J, T)
    mode : int
        Mode in {1, 2, 3} whose index becomes the column index.

    Returns
    -------
    ndarray
        Matrix of shape (product of remaining dims, dims[mode-1]); column
        ``i`` is the vectorized slice fixing the mode index at ``i``, with
        the earlier remaining mode varying fastest.
    """
    x = np.asarray(x)
    if x.ndim != 3:
        raise ValueError(f"expected a 3-way tensor, got ndim={x.ndim}")
    _check_mode(mode)
    axis = mode - 1
    rest = [a for a in range(3) if a != axis]
    return x.transpose(rest + [axis]).reshape(-1, x.shape[axis], order="F")


def fold(m: np.ndarray, mode: int, dims: tuple[int, int, int]) -> np.ndarray:
    """Inverse of :func:`unfold`: rebuild the tensor of shape ``dims``."""
    m = np.asarray(m)
    _check_mode(mode)
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d <= 0 for d in dims):
        raise ValueError(f"dims must be 3 positive integers, got {dims}")
    axis = mode - 1
    rest = [a for a in range(3) if a != axis]
    expect = (dims[rest[0]] * dims[rest[1]], dims[axis])
    if m.shape != expect:
        raise ValueError(
            f"matrix shape {m.shape} does not match mode-{mode} unfolding "
            f"of dims {dims} (expected {expect})"
        )
    cube = m.reshape(dims[rest[0]], dims[rest[1]], dims[axis], order="F")
    inv = np.argsort(rest + [axis])
    return cube.transpose(inv)


def khatri_rao(b: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product ``b (.) a`` with ``a`` varying fastest.

    Column ``r`` of the result is ``kron(b[:, r], a[:, r])``; row index is
    ``ra + rows(a) * rb``.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(
            f"column counts must match, got shapes {a.shape} and {b.shape}"
        )
    return (b[:, None, :] * a[None, :, :]).reshape(a.shape[0] * b.shape[0], a.shape[1])


def kr_gram(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gram matrix of a Khatri-Rao product without materializing it.

    Returns ``(B.T @ B) * (A.T @ A)``, which equals
    ``khatri_rao(b, a).T @ khatri_rao(b, a)``.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(
            f"column counts must match, got shapes {a.shape} and {b.shape}"
        )
    return (b.T @ b) * (a.T @ a)


def _check_factors(a, b, c, s):
    k = a.shape[1]
    if b.shape[1] != k or c.shape[1] != k:
        raise ValueError(
            f"factor column counts differ: {a.shape[1]}, {b.shape[1]}, {c.shape[1]}"
        )
    if s.shape != (k,):
        raise ValueError(f"scale vector must have length {k}, got shape {s.shape}")


def reconstruct(a, b, c, s) -> np.ndarray:
    """Dense tensor of the rank-k model ``sum_r s_r * a_r o b_r o c_r``.

    Parameters
    ----------
    a, b, c : ndarray
        Factor matrices of shapes (I, k), (J, k), (T, k).
    s : ndarray, shape (k,)
        Per-component scale.
    """
    a, b, c = np.asarray(a, float), np.asarray(b, float), np.asarray(c, float)
    s = np.asarray(s, float)
    _check_factors(a, b, c, s)
    m1 = khatri_rao(c, b) @ (s * a).T
    return fold(m1, 1, (a.shape[0], b.shape[0], c.shape[0]))


def reconstruct_at(a, b, c, s, idx) -> np.ndarray:
    """Model values at selected cells only; cost O(len(idx) * k).

    Parameters
    ----------
    idx : ndarray, shape (n, 3)
        Zero-based (i, j, t) triples.

    Returns
    -------
    ndarray, shape (n,)
    """
    a, b, c = np.asarray(a, float), np.asarray(b, float), np.asarray(c, float)
    s = np.asarray(s, float)
    _check_factors(a, b, c, s)
    idx = np.asarray(idx, dtype=np.intp).reshape(-1, 3)
    if idx.shape[0] == 0:
        return np.zeros(0)
    dims = (a.shape[0], b.shape[0], c.shape[0])
    if idx.min() < 0 or (idx >= np.array(dims)).any():
        raise ValueError("index out of range for factor row counts")
    return (a[idx[:, 0]] * b[idx[:, 1]] * c[idx[:, 2]]) @ s


def sse(x: np.ndarray, y: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Sum of squared differences, optionally restricted to observed cells."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    d = x - y
    if mask is not None:
        mask = np.asarray(mask)
        if mask.shape != x.shape:
            raise ValueError(f"mask shape {mask.shape} does not match {x.shape}")
        d = d * mask
    return float(np.dot(d.ravel(), d.ravel()))


def mse(x, y, mask=None) -> float:
    """Mean squared difference over the observed cells."""
    n = np.asarray(x).size if mask is None else int(np.count_nonzero(mask))
    if n == 0:
        raise ZeroDivisionError("mask selects no cells")
    return sse(x, y, mask) / n


def nnz(m: np.ndarray, tol: float = 0.0) -> int:
    """Number of entries with magnitude strictly above ``tol``."""
    if tol < 0:
        raise ValueError("tol must be >= 0")
    return int(np.count_nonzero(np.abs(np.asarray(m)) > tol))


def fit(x: np.ndarray, recon: np.ndarray) -> float:
    """Fit score ``1 - ||x - recon||_F / ||x||_F``."""
    x = np.asarray(x, float)
    recon = np.asarray(recon, float)
    if x.shape != recon.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {recon.shape}")
    norm_x = np.linalg.norm(x)
    if norm_x == 0:
        raise ZeroDivisionError("fit undefined for an all-zero reference tensor")
    return 1.0 - np.linalg.norm(x - recon) / norm_x


@dataclass
class SparseTensor3:
    """3-way tensor in coordinate (COO) form.

    ``subs`` holds zero-based (i, j, t) rows sorted lexicographically with
    no duplicates; ``vals`` are the matching nonzero values.  The on-disk
    text format is 1-based (see :mod:`mdtd.io`).  ``strict=False`` admits
    explicit zero values (imputed cells may evaluate to exactly zero).
    """

    shape: tuple[int, int, int]
    subs: np.ndarray = field(repr=False)
    vals: np.ndarray = field(repr=False)
    strict: InitVar[bool] = True

    def __post_init__(self, strict):
        self.shape = tuple(int(d) for d in self.shape)
        if len(self.shape) != 3 or any(d <= 0 for d in self.shape):
            raise ValueError(f"shape must be 3 positive integers, got {self.shape}")
        subs = np.asarray(self.subs, dtype=np.intp).reshape(-1, 3)
        vals = np.asarray(self.vals, dtype=float).ravel()
        if subs.shape[0] != vals.shape[0]:
            raise ValueError("subs and vals length mismatch")
        if subs.size:
            if subs.min() < 0 or (subs >= np.array(self.shape)).any():
                raise ValueError("entry index out of range")
        if strict and np.any(vals == 0.0):
            raise ValueError("explicit zero entries are not allowed")
        order = np.lexsort((subs[:, 2], subs[:, 1], subs[:, 0]))
        subs = subs[order]
        vals = vals[order]
        if subs.shape[0] > 1 and (np.diff(subs, axis=0) == 0).all(axis=1).any():
            raise ValueError("duplicate (i, j, t) entries")
        self.subs = subs
        self.vals = vals

    @property
    def nnz(self) -> int:
        return self.vals.shape[0]

    @classmethod
    def from_dense(cls, x: np.ndarray) -> "SparseTensor3":
        x = np.asarray(x, float)
        if x.ndim != 3:
            raise ValueError(f"expected a 3-way tensor, got ndim={x.ndim}")
        subs = np.argwhere(x != 0.0)
        return cls(x.shape, subs, x[subs[:, 0], subs[:, 1], subs[:, 2]])

    def to_dense(self) -> np.ndarray:
        x = np.zeros(self.shape)
        x[self.subs[:, 0], self.subs[:, 1], self.subs[:, 2]] = self.vals
        return x

    def norm_sq(self) -> float:
        return float(np.dot(self.vals, self.vals))

    def with_entries(self, subs, vals, strict: bool = True) -> "SparseTensor3":
        """New tensor with extra entries appended (indices must be new)."""
        subs = np.asarray(subs, dtype=np.intp).reshape(-1, 3)
        vals = np.asarray(vals, dtype=float).ravel()
        return SparseTensor3(
            self.shape,
            np.vstack([self.subs, subs]),
            np.concatenate([self.vals, vals]),
            strict=strict,
        )


def mttkrp_dense(x: np.ndarray, a: np.ndarray, b: np.ndarray, mode: int) -> np.ndarray:
    """``unfold(x, mode).T @ khatri_rao(b, a)`` for a dense tensor.

    ``a`` is the factor of the earlier remaining mode and ``b`` of the
    later one, matching the row order of :func:`unfold`.
    """
    return unfold(x, mode).T @ khatri_rao(b, a)


def mttkrp_sparse(x: SparseTensor3, a: np.ndarray, b: np.ndarray, mode: int) -> np.ndarray:
    """Matricized-tensor-times-Khatri-Rao for a COO tensor.

    Accumulates ``out[m, r] += v * a[p, r] * b[q, r]`` over the nonzeros,
    where ``m`` is the mode-``mode`` index of each entry and ``(p, q)`` the
    remaining indices in ascending mode order; the Khatri-Rao factor is
    never materialized.
    """
    _check_mode(mode)
    axis = mode - 1
    rest = [ax for ax in range(3) if ax != axis]
    n_out = x.shape[axis]
    k = a.shape[1]
    out = np.zeros((n_out, k))
    if x.nnz == 0:
        return out
    rows = x.subs[:, axis]
    contrib = x.vals[:, None] * a[x.subs[:, rest[0]]] * b[x.subs[:, rest[1]]]
    for r in range(k):
        out[:, r] = np.bincount(rows, weights=contrib[:, r], minlength=n_out)
    return out
