"""Synthetic benchmark generation: SBM graphs, dictionary-coded ground
truth tensors with Gaussian noise at a target SNR, and missing-value
masks."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .dictionaries import (
    Dictionary,
    Graph,
    gft_dictionary,
    ramanujan_dictionary,
)
from .tensors import SparseTensor3, reconstruct


@dataclass
class SynthConfig:
    """Generator settings; defaults mirror the standard benchmark
    (200x300x400 tensor, two graph dictionaries of 50 and 30 atoms, a
    max-period-10 periodicity dictionary, rank 10, 75% nonzero loadings,
    20 dB SNR)."""

    dims: tuple[int, int, int] = (200, 300, 400)
    atoms: tuple[int, int] = (50, 30)
    max_period: int = 10
    rank: int = 10
    nonzero_fraction: float = 0.75
    snr_db: float | None = 20.0
    communities: int = 5
    seed: int = 0

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.atoms = tuple(int(a) for a in self.atoms)
        if len(self.dims) != 3 or any(d < 1 for d in self.dims):
            raise ValueError("dims must be 3 positive integers")
        if len(self.atoms) != 2 or any(a < 1 for a in self.atoms):
            raise ValueError("atoms must be 2 positive integers")
        if self.atoms[0] > self.dims[0] or self.atoms[1] > self.dims[1]:
            raise ValueError("atom counts cannot exceed the graph mode dims")
        if not 1 <= self.max_period <= self.dims[2]:
            raise ValueError("max_period must be in [1, T]")
        if self.rank < 1:
            raise ValueError("rank must be positive")
        if not 0.0 < self.nonzero_fraction <= 1.0:
            raise ValueError("nonzero_fraction must be in (0, 1]")
        if self.communities < 1:
            raise ValueError("communities must be positive")


@dataclass
class GroundTruth:
    """Everything the generator produced, for oracle-style evaluation."""

    config: SynthConfig
    graphs: list[Graph]
    dicts: list[Dictionary]
    encodings: list[np.ndarray] = field(repr=False)
    noiseless: np.ndarray = field(repr=False)
    noisy: np.ndarray = field(repr=False)
    noise_std: float = 0.0

    @property
    def rank(self) -> int:
        return self.config.rank


def _community_sizes(n: int, communities: int) -> list[int]:
    base, extra = divmod(n, communities)
    return [base + (1 if c < extra else 0) for c in range(communities)]


def _sample_pairs(pairs: np.ndarray, count: int, rng, label: str) -> np.ndarray:
    if count > len(pairs):
        warnings.warn(
            f"{label}: wanted {count} edges but only {len(pairs)} pairs are "
            "available; using all of them",
            RuntimeWarning,
        )
        count = len(pairs)
    if count == 0:
        return pairs[:0]
    take = rng.choice(len(pairs), size=count, replace=False)
    return pairs[take]


def sbm_graph(n: int, communities: int, seed) -> Graph:
    """Stochastic block model with half-dense communities.

    Every community of size c gets exactly ``round(0.5 * c * (c-1) / 2)``
    distinct internal edges and the same number of distinct external edges
    (communities draw in order; an edge already drawn toward an earlier
    community is not drawn twice).  All weights are 1.
    """
    if communities > n:
        raise ValueError("more communities than nodes")
    rng = np.random.default_rng(seed)
    sizes = _community_sizes(n, communities)
    bounds = np.cumsum([0] + sizes)
    edges: list[tuple[int, int]] = []
    used: set[tuple[int, int]] = set()
    for c in range(communities):
        members = np.arange(bounds[c], bounds[c + 1])
        size = len(members)
        target = round(0.5 * size * (size - 1) / 2)
        iu, iv = np.triu_indices(size, k=1)
        internal = np.column_stack([members[iu], members[iv]])
        for u, v in _sample_pairs(internal, target, rng, f"community {c} internal"):
            edges.append((u, v))
        others = np.concatenate([np.arange(0, bounds[c]), np.arange(bounds[c + 1], n)])
        if len(others) == 0:
            continue
        cross = np.column_stack(
            [np.repeat(members, len(others)), np.tile(others, size)]
        )
        lo = np.minimum(cross[:, 0], cross[:, 1])
        hi = np.maximum(cross[:, 0], cross[:, 1])
        cross = np.unique(np.column_stack([lo, hi]), axis=0)
        if used:
            fresh = np.array([(u, v) not in used for u, v in map(tuple, cross)])
            cross = cross[fresh]
        chosen = _sample_pairs(cross, target, rng, f"community {c} external")
        for u, v in chosen:
            edges.append((u, v))
            used.add((u, v))
    edge_arr = np.array([(u, v, 1.0) for u, v in edges]) if edges else np.zeros((0, 3))
    return Graph(n, edge_arr)


def sparse_encodings(dicts, rank, fraction, rng) -> list[np.ndarray]:
    """Per-mode encodings with a fixed support fraction per column,
    uniform [0, 1] values."""
    out = []
    for d in dicts:
        p = d.num_atoms
        count = max(1, round(fraction * p))
        y = np.zeros((p, rank))
        for col in range(rank):
            support = rng.choice(p, size=count, replace=False)
            y[support, col] = rng.uniform(size=count)
        out.append(y)
    return out


def generate(cfg: SynthConfig) -> GroundTruth:
    """Build graphs, dictionaries, sparse ground-truth encodings, and the
    noiseless/noisy tensors."""
    rng = np.random.default_rng(cfg.seed)
    graph_seeds = rng.integers(0, 2**63, size=2)
    graphs = [
        sbm_graph(cfg.dims[0], cfg.communities, graph_seeds[0]),
        sbm_graph(cfg.dims[1], cfg.communities, graph_seeds[1]),
    ]
    dicts = [
        gft_dictionary(graphs[0], num_atoms=cfg.atoms[0]),
        gft_dictionary(graphs[1], num_atoms=cfg.atoms[1]),
        ramanujan_dictionary(cfg.dims[2], cfg.max_period),
    ]
    encodings = sparse_encodings(dicts, cfg.rank, cfg.nonzero_fraction, rng)
    noiseless = reconstruct(
        *[d.atoms @ y for d, y in zip(dicts, encodings)], np.ones(cfg.rank)
    )
    if cfg.snr_db is None:
        noisy = noiseless.copy()
        noise_std = 0.0
    else:
        signal_power = float(np.mean(noiseless**2))
        noise_std = float(np.sqrt(signal_power / 10.0 ** (cfg.snr_db / 10.0)))
        noisy = noiseless + rng.normal(scale=noise_std, size=noiseless.shape)
    return GroundTruth(
        config=cfg,
        graphs=graphs,
        dicts=dicts,
        encodings=encodings,
        noiseless=noiseless,
        noisy=noisy,
        noise_std=noise_std,
    )


def make_mask(dims, missing_fraction: float, seed) -> np.ndarray:
    """Zero-one observation mask with exactly round(fraction * cells)
    uniformly chosen zeros."""
    if not 0.0 <= missing_fraction < 1.0:
        raise ValueError("missing_fraction must be in [0, 1)")
    dims = tuple(int(d) for d in dims)
    total = int(np.prod(dims))
    n_missing = round(missing_fraction * total)
    mask = np.ones(total)
    if n_missing:
        rng = np.random.default_rng(seed)
        mask[rng.choice(total, size=n_missing, replace=False)] = 0.0
    return mask.reshape(dims)


def make_missing_idx(x: SparseTensor3, count: int, seed) -> np.ndarray:
    """Uniformly sampled cells that are absent from ``x``, as (m, 3) rows."""
    total = int(np.prod(x.shape))
    available = total - x.nnz
    if count < 0 or count > available:
        raise ValueError(f"count must be in [0, {available}], got {count}")
    rng = np.random.default_rng(seed)
    observed = np.ravel_multi_index(x.subs.T, x.shape) if x.nnz else np.zeros(0, int)
    chosen: list[np.ndarray] = []
    seen = observed
    need = count
    while need > 0:
        draw = rng.choice(total, size=min(total, int(need * 1.5) + 16), replace=False)
        draw = draw[~np.isin(draw, seen)][:need]
        chosen.append(draw)
        seen = np.concatenate([seen, draw])
        need = count - sum(len(c) for c in chosen)
    flat = np.concatenate(chosen) if chosen else np.zeros(0, int)
    return np.column_stack(np.unravel_index(flat, x.shape))
