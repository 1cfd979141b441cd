"""Fixed analytical coding dictionaries and their Gram eigendecompositions.

A dictionary is a matrix whose columns (atoms) encode one tensor mode as
``phi @ y``.  Four constructions are provided: graph Fourier (Laplacian
eigenvectors), Ramanujan periodic, B-spline, and identity.  Non-orthonormal
dictionaries additionally carry the symmetric eigendecomposition of
``phi.T @ phi`` that the solver's general update path needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gcd

import numpy as np
import scipy.linalg
from scipy.interpolate import BSpline

ORTHO_TOL = 1e-8


@dataclass
class Graph:
    """Weighted undirected graph as an edge list.

    Edges are (u, v, w) rows with zero-based endpoints, positive weights,
    no self-loops; each undirected edge is stored once with u < v.
    """

    n: int
    edges: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.n = int(self.n)
        if self.n < 1:
            raise ValueError("graph needs at least one node")
        edges = np.asarray(self.edges, dtype=float).reshape(-1, 3)
        if edges.size:
            u, v, w = edges[:, 0], edges[:, 1], edges[:, 2]
            if not np.all(u == np.floor(u)) or not np.all(v == np.floor(v)):
                raise ValueError("edge endpoints must be integers")
            if (u < 0).any() or (v < 0).any() or (u >= self.n).any() or (v >= self.n).any():
                raise ValueError("edge endpoint out of range")
            if (u == v).any():
                raise ValueError("self-loops are not allowed")
            if (w <= 0).any():
                raise ValueError("edge weights must be positive")
            lo = np.minimum(u, v)
            hi = np.maximum(u, v)
            edges = np.column_stack([lo, hi, w])
            order = np.lexsort((edges[:, 1], edges[:, 0]))
            edges = edges[order]
            pairs = edges[:, :2]
            if pairs.shape[0] > 1 and (np.diff(pairs, axis=0) == 0).all(axis=1).any():
                raise ValueError("duplicate edges")
        self.edges = edges

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    def adjacency(self) -> np.ndarray:
        w = np.zeros((self.n, self.n))
        if self.edges.size:
            u = self.edges[:, 0].astype(int)
            v = self.edges[:, 1].astype(int)
            w[u, v] = self.edges[:, 2]
            w[v, u] = self.edges[:, 2]
        return w

    def laplacian(self, normalized: bool = False) -> np.ndarray:
        w = self.adjacency()
        deg = w.sum(axis=1)
        lap = np.diag(deg) - w
        if normalized:
            with np.errstate(divide="ignore"):
                inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.maximum(deg, 1e-300)), 0.0)
            lap = inv_sqrt[:, None] * lap * inv_sqrt[None, :]
        return lap


@dataclass
class Dictionary:
    """Fixed coding dictionary for one tensor mode.

    ``atoms`` has shape (mode dim, atom count).  ``gram_eigvecs`` and
    ``gram_eigvals`` hold the eigendecomposition of ``atoms.T @ atoms``
    once :func:`precompute_gram_evd` has run (orthonormal dictionaries
    skip it).  ``spec`` is the parseable construction string used when a
    model referencing this dictionary is saved.
    """

    atoms: np.ndarray = field(repr=False)
    kind: str = "custom"
    orthonormal: bool = False
    gram_eigvecs: np.ndarray | None = field(default=None, repr=False)
    gram_eigvals: np.ndarray | None = field(default=None, repr=False)
    spec: str | None = None

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=float)
        if self.atoms.ndim != 2 or min(self.atoms.shape) < 1:
            raise ValueError("atoms must be a nonempty 2-d matrix")

    @property
    def num_atoms(self) -> int:
        return self.atoms.shape[1]

    @property
    def mode_dim(self) -> int:
        return self.atoms.shape[0]


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    out = vectors.copy()
    for c in range(out.shape[1]):
        col = out[:, c]
        lead = int(np.argmax(np.abs(col)))
        if col[lead] < 0:
            out[:, c] = -col
    return out


def _sort_tied_clusters(eigvals: np.ndarray, vectors: np.ndarray, tol: float = 1e-10):
    """Order eigenpairs ascending; within ties, lexicographic on vectors."""
    order = np.argsort(eigvals, kind="stable")
    eigvals = eigvals[order]
    vectors = vectors[:, order]
    start = 0
    for stop in range(1, len(eigvals) + 1):
        if stop == len(eigvals) or eigvals[stop] - eigvals[start] > tol:
            if stop - start > 1:
                cluster = sorted(
                    range(start, stop), key=lambda c: tuple(vectors[:, c])
                )
                vectors[:, start:stop] = vectors[:, cluster]
                eigvals[start:stop] = eigvals[cluster]
            start = stop
    return eigvals, vectors


def gft_dictionary(
    g: Graph, num_atoms: int | None = None, normalized: bool = False
) -> Dictionary:
    """Graph Fourier dictionary: smallest-eigenvalue Laplacian eigenvectors.

    Parameters
    ----------
    g : Graph
    num_atoms : int, optional
        How many eigenvectors to keep (default: all ``g.n``).
    normalized : bool
        Use the symmetric normalized Laplacian instead of ``D - W``.
    """
    if num_atoms is None:
        num_atoms = g.n
    if not 1 <= num_atoms <= g.n:
        raise ValueError(f"num_atoms must be in [1, {g.n}], got {num_atoms}")
    if g.num_edges == 0:
        atoms = np.eye(g.n)[:, :num_atoms]
    else:
        eigvals, vectors = scipy.linalg.eigh(g.laplacian(normalized=normalized))
        vectors = _fix_signs(vectors)
        eigvals, vectors = _sort_tied_clusters(eigvals, vectors)
        atoms = vectors[:, :num_atoms]
    return Dictionary(atoms, kind="gft", orthonormal=True)


def euler_phi(q: int) -> int:
    return sum(1 for a in range(1, q + 1) if gcd(a, q) == 1)


def ramanujan_sum(q: int) -> np.ndarray:
    """The length-q Ramanujan sum sequence c_q(0..q-1)."""
    n = np.arange(q)
    acc = np.zeros(q, dtype=complex)
    for a in range(1, q + 1):
        if gcd(a, q) == 1:
            acc += np.exp(2j * np.pi * a * n / q)
    return np.real(acc)


def ramanujan_dictionary(t_len: int, max_period: int) -> Dictionary:
    """Periodicity dictionary stacking one subspace basis per period.

    For each period q <= max_period the basis holds the phi(q) circulant
    shifts of the Ramanujan sum c_q, tiled to ``t_len`` samples; every
    atom is exactly q-periodic.  Columns are unit-normalized.  Atoms of
    different periods are not orthogonal in general.
    """
    if max_period < 1 or t_len < max_period:
        raise ValueError(
            f"need t_len >= max_period >= 1, got t_len={t_len}, max_period={max_period}"
        )
    blocks = []
    for q in range(1, max_period + 1):
        base = ramanujan_sum(q)
        block = np.column_stack([np.roll(base, j) for j in range(euler_phi(q))])
        reps = -(-t_len // q)
        blocks.append(np.tile(block, (reps, 1))[:t_len])
    atoms = np.hstack(blocks)
    atoms = atoms / np.linalg.norm(atoms, axis=0)
    return Dictionary(atoms, kind="ramanujan", spec=f"ram:{max_period}")


def spline_dictionary(t_len: int, num_knots: int, degree: int = 3) -> Dictionary:
    """B-spline basis over evenly spaced knots on [1, t_len].

    The clamped knot vector repeats each endpoint ``degree + 1`` times, so
    the ``num_knots + degree - 1`` basis functions form a partition of
    unity over the whole interval before normalization.  Columns are
    unit-normalized at the integer sample points.
    """
    if t_len < 2:
        raise ValueError("t_len must be at least 2")
    if degree < 1:
        raise ValueError("degree must be at least 1")
    if num_knots < 2:
        raise ValueError("need at least 2 knots")
    sites = np.linspace(1.0, float(t_len), num_knots)
    knots = np.r_[[sites[0]] * degree, sites, [sites[-1]] * degree]
    x = np.arange(1, t_len + 1, dtype=float)
    atoms = BSpline.design_matrix(x, knots, degree).toarray()
    atoms = atoms / np.linalg.norm(atoms, axis=0)
    return Dictionary(atoms, kind="spline", spec=f"spline:{num_knots}:{degree}")


def identity_dictionary(n: int) -> Dictionary:
    """Trivial dictionary for modes without side information."""
    if n < 1:
        raise ValueError("n must be positive")
    return Dictionary(np.eye(n), kind="identity", orthonormal=True, spec="id")


def precompute_gram_evd(d: Dictionary) -> Dictionary:
    """Attach the eigendecomposition of the dictionary Gram matrix.

    No-op for orthonormal dictionaries (the solver takes the direct path
    there).  Eigenvalues are clamped at zero; the stored factors satisfy
    ``atoms.T @ atoms ~= eigvecs @ diag(eigvals) @ eigvecs.T``.
    """
    if d.orthonormal or d.gram_eigvals is not None:
        return d
    gram = d.atoms.T @ d.atoms
    try:
        eigvals, eigvecs = scipy.linalg.eigh(gram)
    except scipy.linalg.LinAlgError as exc:
        raise RuntimeError(
            f"Gram eigendecomposition failed for {d.kind} dictionary "
            f"({d.mode_dim}x{d.num_atoms}): {exc}"
        ) from exc
    d.gram_eigvals = np.maximum(eigvals, 0.0)
    d.gram_eigvecs = eigvecs
    return d


def is_orthonormal(atoms: np.ndarray, tol: float = ORTHO_TOL) -> bool:
    gram = atoms.T @ atoms
    return float(np.max(np.abs(gram - np.eye(atoms.shape[1])))) < tol
