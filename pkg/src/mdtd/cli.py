"""Command-line interface: gen, decompose, impute, rank, bench.

Every run writes a JSON manifest (resolved settings, input hashes, wall
time, metric summary) next to its outputs.  CSV outputs contain only
deterministic columns so reruns with the same seed are byte-identical;
timing lives in the manifest.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import io as mio
from .rank import estimate_rank
from .solver import MdtdModel, SolverConfig, solve
from .synth import SynthConfig, generate
from .tensors import SparseTensor3

DICT_SPEC_HELP = "gft:<graphfile>[:atoms], ram:<max_period>, spline:<knots>[:degree], id"


def _parse_floats(text, n=None):
    vals = [float(v) for v in str(text).split(",")]
    if n is not None:
        if len(vals) == 1:
            vals = vals * n
        if len(vals) != n:
            raise ValueError(f"expected {n} comma-separated values, got {text!r}")
    return vals


def _parse_ints(text, n=None):
    vals = [int(v) for v in str(text).split(",")]
    if n is not None and len(vals) != n:
        raise ValueError(f"expected {n} comma-separated integers, got {text!r}")
    return vals


def load_config_file(path) -> dict:
    """key=value lines; '#' starts a comment."""
    out = {}
    for ln, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{ln}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _resolve(args, config: dict, key: str, default, cast=str):
    """Flag wins over config file; config wins over the default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in config:
        return cast(config[key])
    return default


def _write_csv(path, header: list[str], rows: list[list]) -> None:
    def cell(v):
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        if isinstance(v, np.integer):
            return str(int(v))
        return str(v)

    lines = [",".join(header)]
    lines.extend(",".join(cell(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")


def _hash_inputs(paths) -> dict:
    return {str(p): mio.sha256_file(p) for p in paths if p and Path(p).exists()}


def _manifest(out_dir, command, settings, inputs, outputs, wall_time, metrics):
    payload = {
        "command": command,
        "settings": settings,
        "input_hashes": _hash_inputs(inputs),
        "outputs": [str(o) for o in outputs],
        "wall_time_s": wall_time,
        "metrics": metrics,
    }
    path = Path(out_dir) / "manifest.json"
    mio.write_manifest(path, payload)
    return path


def _solver_config(args, config, impute_mode="none") -> SolverConfig:
    return SolverConfig(
        lam=tuple(_parse_floats(_resolve(args, config, "lam", "0.1"), 3)),
        rho=tuple(_parse_floats(_resolve(args, config, "rho", "1.0"), 3)),
        lambda_d=float(_resolve(args, config, "lambda_d", 1.0, float)),
        epsilon=float(_resolve(args, config, "eps", 1e-4, float)),
        max_iters=int(_resolve(args, config, "max_iters", 500, int)),
        impute_mode=impute_mode,
        seed=int(_resolve(args, config, "seed", 0, int)),
    )


def _load_dictionaries(spec_text, dims, base_dir):
    specs = str(spec_text).split(",")
    if len(specs) != 3:
        raise ValueError("--dict needs 3 comma-separated specs: " + DICT_SPEC_HELP)
    return [
        mio.parse_dictionary_spec(s.strip(), dims[m], base_dir=base_dir)
        for m, s in enumerate(specs)
    ]


def cmd_gen(args) -> int:
    start = time.perf_counter()
    config = load_config_file(args.config) if args.config else {}
    snr = None if args.noiseless else float(_resolve(args, config, "snr", 20.0, float))
    cfg = SynthConfig(
        dims=tuple(_parse_ints(_resolve(args, config, "dims", "200,300,400"), 3)),
        atoms=tuple(_parse_ints(_resolve(args, config, "atoms", "50,30"), 2)),
        max_period=int(_resolve(args, config, "max_period", 10, int)),
        rank=int(_resolve(args, config, "rank", 10, int)),
        nonzero_fraction=float(_resolve(args, config, "nonzero_frac", 0.75, float)),
        snr_db=snr,
        communities=int(_resolve(args, config, "communities", 5, int)),
        seed=int(_resolve(args, config, "seed", 0, int)),
    )
    gt = generate(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    graph_paths = [out / "graph1.txt", out / "graph2.txt"]
    for p, g in zip(graph_paths, gt.graphs):
        mio.write_graph(p, g)
    tensor_path = out / "tensor.txt"
    mio.write_tensor(tensor_path, gt.noisy)
    noiseless_path = out / "tensor_noiseless.txt"
    mio.write_tensor(noiseless_path, gt.noiseless)

    dict_specs = [
        f"gft:graph1.txt:{cfg.atoms[0]}",
        f"gft:graph2.txt:{cfg.atoms[1]}",
        f"ram:{cfg.max_period}",
    ]
    for d, spec in zip(gt.dicts, dict_specs):
        d.spec = spec
    truth_model = MdtdModel(
        y=[y.copy() for y in gt.encodings],
        z=[y.copy() for y in gt.encodings],
        gamma=[np.zeros_like(y) for y in gt.encodings],
        s=np.ones(cfg.rank),
        dicts=gt.dicts,
        rank=cfg.rank,
    )
    truth_path = out / "truth.json"
    mio.save_model(truth_path, truth_model, cfg.dims)

    outputs = graph_paths + [tensor_path, noiseless_path, truth_path]
    metrics = {
        "noise_std": gt.noise_std,
        "noise_variance": gt.noise_std**2,
        "snr_db": snr,
        "signal_norm_sq": float((gt.noiseless**2).sum()),
    }
    settings = {
        "dims": list(cfg.dims),
        "atoms": list(cfg.atoms),
        "max_period": cfg.max_period,
        "rank": cfg.rank,
        "nonzero_fraction": cfg.nonzero_fraction,
        "snr_db": snr,
        "communities": cfg.communities,
        "seed": cfg.seed,
        "dictionaries": dict_specs,
    }
    _manifest(out, "gen", settings, [args.config], outputs,
              time.perf_counter() - start, metrics)
    print(f"gen: wrote {tensor_path} dims={cfg.dims} rank={cfg.rank}")
    return 0


def _decompose_once(x, dicts, rank, cfg):
    model, report = solve(x, dicts, rank, cfg)
    return model, report


def cmd_decompose(args) -> int:
    start = time.perf_counter()
    config = load_config_file(args.config) if args.config else {}
    x = mio.read_tensor(args.tensor)
    base_dir = Path(args.tensor).parent
    dicts = _load_dictionaries(
        _resolve(args, config, "dict", "id,id,id"), x.shape, base_dir
    )
    rank = int(_resolve(args, config, "rank", 10, int))
    cfg = _solver_config(args, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    timings = []
    outputs = []
    if args.sweep_lambda:
        header = ["lambda", "sse", "nnz", "fit", "iters"]
        for lam in _parse_floats(args.sweep_lambda):
            cfg_l = SolverConfig(
                lam=(lam, lam, lam), rho=cfg.rho, lambda_d=cfg.lambda_d,
                epsilon=cfg.epsilon, max_iters=cfg.max_iters,
                impute_mode="none", seed=cfg.seed,
            )
            _, report = _decompose_once(x, dicts, rank, cfg_l)
            rows.append([lam, report.sse, report.nnz, report.fit, report.n_iter])
            timings.append({"lambda": lam, "seconds": report.seconds})
    else:
        header = ["sse", "nnz", "fit", "iters"]
        model, report = _decompose_once(x, dicts, rank, cfg)
        rows.append([report.sse, report.nnz, report.fit, report.n_iter])
        timings.append({"seconds": report.seconds})
        model_path = out / "model.json"
        mio.save_model(model_path, model, x.shape)
        outputs.append(model_path)

    metrics_path = out / "metrics.csv"
    _write_csv(metrics_path, header, rows)
    outputs.append(metrics_path)
    settings = {
        "tensor": str(args.tensor),
        "dict": [d.spec for d in dicts],
        "rank": rank,
        "lam": list(cfg.lam),
        "rho": list(cfg.rho),
        "lambda_d": cfg.lambda_d,
        "eps": cfg.epsilon,
        "max_iters": cfg.max_iters,
        "seed": cfg.seed,
        "sweep_lambda": args.sweep_lambda,
    }
    _manifest(out, "decompose", settings, [args.tensor, args.config], outputs,
              time.perf_counter() - start, {"rows": rows, "timings": timings})
    print(f"decompose: {len(rows)} run(s), metrics in {metrics_path}")
    return 0


def cmd_impute(args) -> int:
    start = time.perf_counter()
    config = load_config_file(args.config) if args.config else {}
    x_sparse = mio.read_tensor(args.tensor)
    dims, missing = mio.read_missing(args.missing)
    if tuple(dims) != tuple(x_sparse.shape):
        raise ValueError(
            f"missing-file dims {dims} do not match tensor dims {x_sparse.shape}"
        )
    base_dir = Path(args.tensor).parent
    dicts = _load_dictionaries(
        _resolve(args, config, "dict", "id,id,id"), x_sparse.shape, base_dir
    )
    rank = int(_resolve(args, config, "rank", 10, int))
    mode = args.mode
    cfg = _solver_config(args, config, impute_mode=mode)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if mode == "dense":
        x_dense = x_sparse.to_dense()
        # observed values at missing cells must not leak into the fit
        x_dense[missing[:, 0], missing[:, 1], missing[:, 2]] = 0.0
        mask = mio.missing_to_mask(dims, missing)
        model, report = solve(x_dense, dicts, rank, cfg, mask=mask)
    else:
        flat_obs = np.ravel_multi_index(x_sparse.subs.T, x_sparse.shape)
        flat_mis = np.ravel_multi_index(missing.T, x_sparse.shape)
        keep = ~np.isin(flat_obs, flat_mis)
        x_holdout = SparseTensor3(
            x_sparse.shape, x_sparse.subs[keep], x_sparse.vals[keep]
        )
        model, report = solve(x_holdout, dicts, rank, cfg, mask=missing)

    imputed = model.reconstruct_entries(missing, source="y") if len(missing) else np.zeros(0)
    imputed_path = out / "imputed.txt"
    imputed_tensor = SparseTensor3(dims, missing, imputed, strict=False)
    mio.write_tensor(imputed_path, imputed_tensor)

    metrics: dict = {"n_missing": int(len(missing)), "iters": report.n_iter}
    rows = [[int(len(missing)), report.n_iter]]
    header = ["n_missing", "iters"]
    if args.truth:
        truth = mio.read_tensor(args.truth).to_dense()
        truth_vals = truth[missing[:, 0], missing[:, 1], missing[:, 2]]
        err = float(np.mean((truth_vals - imputed) ** 2)) if len(missing) else 0.0
        metrics["mse"] = err
        header = ["mse", "n_missing", "iters"]
        rows = [[err, int(len(missing)), report.n_iter]]
    metrics_path = out / "metrics.csv"
    _write_csv(metrics_path, header, rows)

    settings = {
        "tensor": str(args.tensor),
        "missing": str(args.missing),
        "mode": mode,
        "dict": [d.spec for d in dicts],
        "rank": rank,
        "lam": list(cfg.lam),
        "lambda_d": cfg.lambda_d,
        "eps": cfg.epsilon,
        "max_iters": cfg.max_iters,
        "seed": cfg.seed,
        "truth": str(args.truth) if args.truth else None,
    }
    metrics["seconds"] = report.seconds
    _manifest(out, "impute", settings,
              [args.tensor, args.missing, args.truth, args.config],
              [imputed_path, metrics_path],
              time.perf_counter() - start, metrics)
    print(f"impute: {len(missing)} cells -> {imputed_path}")
    return 0


def cmd_rank(args) -> int:
    start = time.perf_counter()
    config = load_config_file(args.config) if args.config else {}
    x = mio.read_tensor(args.tensor)
    base_dir = Path(args.tensor).parent
    dicts = _load_dictionaries(
        _resolve(args, config, "dict", "id,id,id"), x.shape, base_dir
    )
    lo, hi = (int(v) for v in str(args.range).split(":"))
    cfg = _solver_config(args, config)
    result = estimate_rank(x.to_dense(), dicts, range(lo, hi + 1), cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ranks_path = out / "ranks.csv"
    _write_csv(
        ranks_path,
        ["rank", "score", "sse", "nnz"],
        [
            [r, sc, ss, nz]
            for r, sc, ss, nz in zip(result.ranks, result.scores, result.sses, result.nnzs)
        ],
    )
    settings = {
        "tensor": str(args.tensor),
        "dict": [d.spec for d in dicts],
        "range": [lo, hi],
        "lam": list(cfg.lam),
        "eps": cfg.epsilon,
        "max_iters": cfg.max_iters,
        "seed": cfg.seed,
    }
    metrics = {
        "chosen_rank": result.chosen,
        "seconds_per_rank": dict(zip(map(str, result.ranks), result.seconds)),
    }
    _manifest(out, "rank", settings, [args.tensor, args.config],
              [ranks_path], time.perf_counter() - start, metrics)
    print(f"rank: chosen {result.chosen} (scores in {ranks_path})")
    return 0


def cmd_bench(args) -> int:
    start = time.perf_counter()
    config = load_config_file(args.config) if args.config else {}
    base_dims = _parse_ints(_resolve(args, config, "dims", "50,60,80"), 3)
    values = _parse_ints(args.values)
    vary = args.vary
    rank = int(_resolve(args, config, "rank", 5, int))
    atoms = _parse_ints(_resolve(args, config, "atoms", "15,10"), 2)
    max_period = int(_resolve(args, config, "max_period", 5, int))
    cfg = _solver_config(args, config)

    rows = []
    timing = []
    for v in values:
        dims = list(base_dims)
        dims[0 if vary == "nodes" else 2] = v
        syn = SynthConfig(
            dims=tuple(dims), atoms=tuple(atoms), max_period=max_period,
            rank=rank, seed=cfg.seed,
        )
        gt = generate(syn)
        t0 = time.perf_counter()
        _, report = solve(gt.noisy, gt.dicts, rank, cfg)
        seconds = time.perf_counter() - t0
        gigabytes = float(np.prod(dims)) * 8.0 / 1e9
        rows.append([v, gigabytes, report.n_iter])
        timing.append(
            {"size": v, "gigabytes": gigabytes, "seconds": seconds, "iters": report.n_iter}
        )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bench_path = out / "bench.csv"
    _write_csv(bench_path, ["nodes_or_T", "gigabytes", "iters"], rows)
    settings = {
        "vary": vary,
        "values": values,
        "dims": base_dims,
        "rank": rank,
        "atoms": atoms,
        "max_period": max_period,
        "lam": list(cfg.lam),
        "eps": cfg.epsilon,
        "max_iters": cfg.max_iters,
        "seed": cfg.seed,
    }
    _manifest(out, "bench", settings, [args.config], [bench_path],
              time.perf_counter() - start, {"grid": timing})
    print(f"bench: {len(rows)} point(s), sizes in {bench_path}, timing in manifest")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mdtd",
        description="Multi-dictionary tensor decomposition toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key=value config file (flags win)")
        p.add_argument("--seed", type=int, help="random seed (default 0)")
        p.add_argument("--out", required=True, help="output directory")

    def add_solver_flags(p):
        p.add_argument("--lambda", dest="lam", help="l1 weight(s), e.g. 0.1 or l1,l2,l3")
        p.add_argument("--rho", help="ADMM coupling(s), e.g. 1.0 or r1,r2,r3")
        p.add_argument("--lambda-d", dest="lambda_d", type=float,
                       help="observation pull for imputation (default 1.0)")
        p.add_argument("--eps", type=float, help="objective-change stop (default 1e-4)")
        p.add_argument("--max-iters", dest="max_iters", type=int,
                       help="iteration cap (default 500)")

    p = sub.add_parser("gen", help="generate a synthetic benchmark dataset")
    add_common(p)
    p.add_argument("--dims", help="I,J,T (default 200,300,400)")
    p.add_argument("--atoms", help="graph dictionary atom counts a1,a2 (default 50,30)")
    p.add_argument("--max-period", dest="max_period", type=int)
    p.add_argument("--rank", type=int)
    p.add_argument("--nonzero-frac", dest="nonzero_frac", type=float)
    p.add_argument("--snr", type=float, help="SNR in dB (default 20)")
    p.add_argument("--noiseless", action="store_true", help="disable noise")
    p.add_argument("--communities", type=int)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("decompose", help="fit a decomposition, optionally sweep lambda")
    add_common(p)
    p.add_argument("--tensor", required=True)
    p.add_argument("--dict", help="3 comma-separated specs: " + DICT_SPEC_HELP)
    p.add_argument("--rank", type=int)
    add_solver_flags(p)
    p.add_argument("--sweep-lambda", dest="sweep_lambda",
                   help="comma-separated lambda grid; one CSV row per value")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("impute", help="fill missing cells")
    add_common(p)
    p.add_argument("--tensor", required=True)
    p.add_argument("--missing", required=True, help="missing-cell file (dims + i j t lines)")
    p.add_argument("--mode", choices=("dense", "sparse"), default="dense")
    p.add_argument("--dict")
    p.add_argument("--rank", type=int)
    add_solver_flags(p)
    p.add_argument("--truth", help="tensor file with held-out values for MSE")
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("rank", help="estimate tensor rank by core consistency")
    add_common(p)
    p.add_argument("--tensor", required=True)
    p.add_argument("--dict")
    p.add_argument("--range", required=True, help="lo:hi candidate ranks, inclusive")
    add_solver_flags(p)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("bench", help="time solves over a synthetic size grid")
    add_common(p)
    p.add_argument("--vary", choices=("nodes", "time"), default="time")
    p.add_argument("--values", required=True, help="comma-separated sizes")
    p.add_argument("--dims", help="base I,J,T (default 50,60,80)")
    p.add_argument("--rank", type=int)
    p.add_argument("--atoms")
    p.add_argument("--max-period", dest="max_period", type=int)
    add_solver_flags(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface module errors as clean nonzero exits
        print(f"mdtd {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
