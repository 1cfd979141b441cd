"""Text file formats and the versioned model dump.

All on-disk indices are 1-based:

* tensor:  header ``dims I J T``, then one ``i j t value`` line per entry
  (dense tensors simply list every cell);
* missing-cell set / mask: header ``dims I J T``, then ``i j t`` lines
  naming the missing cells;
* graph:   header ``nodes n``, then ``u v w`` lines;
* model:   JSON document with the sparse encodings, scale, and the
  dictionary construction specs needed to rebuild the reconstruction.

Dictionary spec strings: ``gft:<graphfile>[:atoms]``, ``ram:<max_period>``,
``spline:<knots>[:degree]``, ``id``.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .dictionaries import (
    Dictionary,
    Graph,
    gft_dictionary,
    identity_dictionary,
    ramanujan_dictionary,
    spline_dictionary,
)
from .solver import MdtdModel
from .tensors import SparseTensor3

MODEL_FORMAT = "mdtd-model"
MODEL_VERSION = 1


def _fmt(v: float) -> str:
    return repr(float(v))


def write_tensor(path, x, dense: bool = False) -> None:
    """Write a tensor in the entry-list text format.

    ``dense=True`` lists every cell (including zeros); otherwise only the
    nonzeros are written.
    """
    if isinstance(x, SparseTensor3):
        shape, subs, vals = x.shape, x.subs, x.vals
        if dense:
            x = x.to_dense()
    if not isinstance(x, SparseTensor3):
        x = np.asarray(x, float)
        shape = x.shape
        if dense:
            subs = np.argwhere(np.ones(shape, dtype=bool))
        else:
            subs = np.argwhere(x != 0.0)
        vals = x[subs[:, 0], subs[:, 1], subs[:, 2]]
    lines = [f"dims {shape[0]} {shape[1]} {shape[2]}"]
    lines.extend(
        f"{i + 1} {j + 1} {t + 1} {_fmt(v)}"
        for (i, j, t), v in zip(subs, vals)
    )
    Path(path).write_text("\n".join(lines) + "\n")


def _read_header(lines, path, keyword, n_fields):
    if not lines:
        raise ValueError(f"{path}: empty file")
    head = lines[0].split()
    if len(head) != n_fields + 1 or head[0] != keyword:
        raise ValueError(
            f"{path}: expected header '{keyword} " + " ".join(["<int>"] * n_fields) + "'"
        )
    return [int(v) for v in head[1:]]


def read_tensor(path) -> SparseTensor3:
    """Parse the entry-list format; explicit zeros are dropped."""
    lines = Path(path).read_text().strip().splitlines()
    dims = _read_header(lines, path, "dims", 3)
    subs, vals = [], []
    for ln, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 4:
            raise ValueError(f"{path}:{ln}: expected 'i j t value'")
        i, j, t = (int(p) - 1 for p in parts[:3])
        v = float(parts[3])
        if v != 0.0:
            subs.append((i, j, t))
            vals.append(v)
    return SparseTensor3(tuple(dims), np.array(subs).reshape(-1, 3), np.array(vals))


def write_missing(path, dims, missing_idx) -> None:
    missing_idx = np.asarray(missing_idx, dtype=np.intp).reshape(-1, 3)
    lines = [f"dims {dims[0]} {dims[1]} {dims[2]}"]
    lines.extend(f"{i + 1} {j + 1} {t + 1}" for i, j, t in missing_idx)
    Path(path).write_text("\n".join(lines) + "\n")


def read_missing(path) -> tuple[tuple[int, int, int], np.ndarray]:
    """Read a missing-cell file; returns (dims, zero-based index rows)."""
    lines = Path(path).read_text().strip().splitlines()
    dims = tuple(_read_header(lines, path, "dims", 3))
    idx = []
    for ln, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 3:
            raise ValueError(f"{path}:{ln}: expected 'i j t'")
        idx.append(tuple(int(p) - 1 for p in parts))
    out = np.array(idx, dtype=np.intp).reshape(-1, 3)
    if out.size and (out.min() < 0 or (out >= np.array(dims)).any()):
        raise ValueError(f"{path}: missing index out of range")
    return dims, out


def missing_to_mask(dims, missing_idx) -> np.ndarray:
    mask = np.ones(dims)
    if len(missing_idx):
        mask[missing_idx[:, 0], missing_idx[:, 1], missing_idx[:, 2]] = 0.0
    return mask


def write_graph(path, g: Graph) -> None:
    lines = [f"nodes {g.n}"]
    lines.extend(
        f"{int(u) + 1} {int(v) + 1} {_fmt(w)}" for u, v, w in g.edges
    )
    Path(path).write_text("\n".join(lines) + "\n")


def read_graph(path) -> Graph:
    lines = Path(path).read_text().strip().splitlines()
    (n,) = _read_header(lines, path, "nodes", 1)
    edges = []
    for ln, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 3:
            raise ValueError(f"{path}:{ln}: expected 'u v w'")
        edges.append((int(parts[0]) - 1, int(parts[1]) - 1, float(parts[2])))
    return Graph(n, np.array(edges).reshape(-1, 3))


def parse_dictionary_spec(spec: str, mode_dim: int, base_dir=None) -> Dictionary:
    """Build a dictionary from its construction string for one mode."""
    parts = spec.split(":")
    kind = parts[0]
    if kind == "id":
        if len(parts) != 1:
            raise ValueError(f"bad dictionary spec {spec!r}")
        d = identity_dictionary(mode_dim)
    elif kind == "ram":
        if len(parts) != 2:
            raise ValueError(f"bad dictionary spec {spec!r}")
        d = ramanujan_dictionary(mode_dim, int(parts[1]))
    elif kind == "spline":
        if len(parts) not in (2, 3):
            raise ValueError(f"bad dictionary spec {spec!r}")
        degree = int(parts[2]) if len(parts) == 3 else 3
        d = spline_dictionary(mode_dim, int(parts[1]), degree)
    elif kind == "gft":
        if len(parts) < 2:
            raise ValueError(f"bad dictionary spec {spec!r}")
        num_atoms = None
        file_parts = parts[1:]
        if len(file_parts) > 1 and file_parts[-1].isdigit():
            num_atoms = int(file_parts[-1])
            file_parts = file_parts[:-1]
        graph_path = Path(":".join(file_parts))
        if base_dir is not None and not graph_path.is_absolute():
            candidate = Path(base_dir) / graph_path
            if candidate.exists():
                graph_path = candidate
        g = read_graph(graph_path)
        if g.n != mode_dim:
            raise ValueError(
                f"graph {graph_path} has {g.n} nodes, mode dim is {mode_dim}"
            )
        d = gft_dictionary(g, num_atoms=num_atoms)
    else:
        raise ValueError(f"unknown dictionary kind {kind!r} in {spec!r}")
    d.spec = spec
    return d


def _matrix_triplets(m: np.ndarray):
    rows, cols = np.nonzero(m)
    return [
        [int(r) + 1, int(c) + 1, float(m[r, c])] for r, c in zip(rows, cols)
    ]


def save_model(path, model: MdtdModel, dims) -> None:
    """Serialize the sparse model (encodings z, scale, dictionary specs)."""
    specs = []
    for i, d in enumerate(model.dicts):
        if d.spec is None:
            raise ValueError(
                f"dictionary for mode {i + 1} has no construction spec; "
                "models built from ad-hoc dictionaries cannot be saved"
            )
        specs.append(d.spec)
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "dims": [int(d) for d in dims],
        "rank": model.rank,
        "scale": [float(v) for v in model.s],
        "dictionaries": specs,
        "encodings": [_matrix_triplets(z) for z in model.z],
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_model(path) -> tuple[MdtdModel, tuple[int, int, int]]:
    """Rebuild a saved model; reconstruction matches the saved state."""
    path = Path(path)
    doc = json.loads(path.read_text())
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a model file")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {doc.get('version')}")
    dims = tuple(doc["dims"])
    rank = int(doc["rank"])
    dicts = [
        parse_dictionary_spec(spec, dim, base_dir=path.parent)
        for spec, dim in zip(doc["dictionaries"], dims)
    ]
    z = []
    for d, trips in zip(dicts, doc["encodings"]):
        m = np.zeros((d.num_atoms, rank))
        for r, c, v in trips:
            m[r - 1, c - 1] = v
        z.append(m)
    model = MdtdModel(
        y=[m.copy() for m in z],
        z=z,
        gamma=[np.zeros_like(m) for m in z],
        s=np.array(doc["scale"], float),
        dicts=dicts,
        rank=rank,
    )
    return model, dims


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
