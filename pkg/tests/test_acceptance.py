"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Criterion 5's full-dims smoke run is opt-in (MDTD_RUN_SLOW=1) since it
takes minutes; everything else runs at desk scale.
"""

import json
import os
import time
import warnings

import numpy as np
import pytest

from mdtd.cli import main as cli_main
from mdtd.dictionaries import Dictionary, identity_dictionary, precompute_gram_evd
from mdtd.io import read_missing, read_tensor, write_missing
from mdtd.rank import estimate_rank
from mdtd.solver import (
    MdtdModel,
    SolverConfig,
    solve,
    update_d_dense,
    update_d_sparse,
    update_y_general,
    update_y_orthogonal,
)
from mdtd.synth import SynthConfig, generate, make_mask
from mdtd.tensors import (
    SparseTensor3,
    fold,
    khatri_rao,
    kr_gram,
    reconstruct,
    unfold,
)

from als_reference import cpd_als

DESK = dict(dims=(50, 60, 80), atoms=(15, 10), max_period=5, rank=5)


def report(num, name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"[criterion {num}] {name}: {status}" + (f" ({detail})" if detail else ""))
    assert ok, f"criterion {num} ({name}): {detail}"


@pytest.fixture(scope="module")
def desk_noisy():
    return generate(SynthConfig(**DESK, seed=0))


@pytest.fixture(scope="module")
def desk_noiseless():
    return generate(SynthConfig(**DESK, snr_db=None, seed=0))


def test_criterion_1_kernel_oracles():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    ok = True
    detail = []
    for _ in range(20):
        dims = tuple(rng.integers(2, 7, size=3))
        x = rng.standard_normal(dims)
        for mode in (1, 2, 3):
            if not np.array_equal(fold(unfold(x, mode), mode, dims), x):
                ok, detail = False, ["fold/unfold round-trip broke"]
        k = int(rng.integers(1, 5))
        a = rng.standard_normal((dims[0], k))
        b = rng.standard_normal((dims[1], k))
        c = rng.standard_normal((dims[2], k))
        kr = khatri_rao(b, a)
        gram_err = np.max(np.abs(kr.T @ kr - kr_gram(a, b)))
        if gram_err >= 1e-10:
            ok, detail = False, [f"KR gram err {gram_err:.2e}"]
        s = rng.standard_normal(k)
        recon = reconstruct(a, b, c, s)
        brute = np.zeros(dims)
        for p in range(dims[0]):
            for q in range(dims[1]):
                for t in range(dims[2]):
                    brute[p, q, t] = np.sum(s * a[p] * b[q] * c[t])
        recon_err = np.max(np.abs(recon - brute))
        if recon_err >= 1e-12:
            ok, detail = False, [f"reconstruct err {recon_err:.2e}"]
    elapsed = time.perf_counter() - start
    if elapsed >= 5.0:
        ok, detail = False, [f"took {elapsed:.1f}s"]
    report(1, "kernel oracle suite", ok, detail[0] if detail else f"{elapsed:.2f}s")


def test_criterion_2_y_update_correctness():
    rng = np.random.default_rng(1)
    worst_match, worst_resid = 0.0, 0.0
    for trial in range(20):
        m = int(rng.integers(4, 31))
        p = int(rng.integers(2, min(m, 20) + 1))
        k = int(rng.integers(1, 6))
        orthogonal = trial % 2 == 0
        if orthogonal:
            phi = np.linalg.qr(rng.standard_normal((m, m)))[0][:, :p]
        else:
            phi = rng.standard_normal((m, p))
        mj, ml = int(rng.integers(3, 9)), int(rng.integers(3, 9))
        d_unfold = rng.standard_normal((mj * ml, m))
        a = rng.standard_normal((mj, k))
        b = rng.standard_normal((ml, k))
        z = rng.standard_normal((p, k))
        gamma = rng.standard_normal((p, k))
        rho = float(rng.uniform(0.3, 2.0))
        if orthogonal:
            y = update_y_orthogonal(d_unfold, phi, a, b, z, gamma, rho)
        else:
            dct = precompute_gram_evd(Dictionary(phi))
            y = update_y_general(d_unfold, dct, a, b, z, gamma, rho)
        gram = kr_gram(a, b)
        c = phi.T @ d_unfold.T @ khatri_rao(b, a) + rho * z - gamma
        lhs = np.kron(gram.T, phi.T @ phi) + rho * np.eye(p * k)
        y_ref = np.linalg.solve(lhs, c.reshape(-1, order="F")).reshape(p, k, order="F")
        worst_match = max(worst_match, float(np.max(np.abs(y - y_ref))))
        resid = phi.T @ phi @ y @ gram + rho * y - c
        worst_resid = max(worst_resid, float(np.max(np.abs(resid))))
    ok = worst_match < 1e-8 and worst_resid < 1e-8
    report(2, "closed-form factor updates", ok,
           f"match {worst_match:.2e}, stationarity {worst_resid:.2e}")


def test_criterion_3_admm_feasibility_convergence(desk_noisy):
    start = time.perf_counter()
    cfg = SolverConfig(lam=(0.01,) * 3, epsilon=1e-4, max_iters=500, seed=1)
    model, rep = solve(desk_noisy.noisy, desk_noisy.dicts, DESK["rank"], cfg)
    elapsed = time.perf_counter() - start
    gap = max(float(np.max(np.abs(z - y))) for z, y in zip(model.z, model.y))
    ok = rep.converged and rep.n_iter <= 500 and gap < 1e-3 and elapsed < 60.0
    report(3, "ADMM feasibility and convergence", ok,
           f"{rep.n_iter} iters, |z-y| {gap:.2e}, {elapsed:.1f}s")


def test_criterion_4_cpd_reduction():
    worst = 0.0
    for seed in (41, 42, 43):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((6, 7, 8))
        dicts = [identity_dictionary(d) for d in x.shape]
        cfg = SolverConfig(lam=(0.0,) * 3, epsilon=1e-10, max_iters=2000, seed=seed)
        _, rep = solve(x, dicts, 3, cfg)
        _, als_sse = cpd_als(x, 3, seed=seed, n_iter=2000)
        worst = max(worst, rep.sse / als_sse)
    ok = worst <= 1.05
    report(4, "CPD-reduction equivalence", ok, f"worst sse ratio {worst:.4f}")


def test_criterion_5_model_size_advantage(desk_noiseless):
    # matched SSE read as "no more than 10% worse than the identity run"
    gt = desk_noiseless
    cfg = SolverConfig(lam=(0.0,) * 3, epsilon=1e-4, max_iters=500, seed=1)
    id_dicts = [identity_dictionary(d) for d in DESK["dims"]]
    _, rep_id = solve(gt.noiseless, id_dicts, DESK["rank"], cfg)
    _, rep_ggr = solve(gt.noiseless, gt.dicts, DESK["rank"], cfg)
    sse_ok = rep_ggr.sse <= 1.1 * rep_id.sse
    nnz_ok = rep_ggr.nnz <= 0.5 * rep_id.nnz
    report(5, "model-size advantage (desk scale)", sse_ok and nnz_ok,
           f"sse {rep_ggr.sse:.3g} vs {rep_id.sse:.3g}, "
           f"nnz {rep_ggr.nnz} vs {rep_id.nnz}")


@pytest.mark.slow
@pytest.mark.skipif(os.environ.get("MDTD_RUN_SLOW") != "1",
                    reason="full-dims smoke runs minutes; set MDTD_RUN_SLOW=1")
def test_criterion_5_full_scale_smoke():
    # loose check against the published synthetic row (SSE 500 / NNZ 1045);
    # SSE is generator-scale dependent, so the bound is one-sided
    gt = generate(SynthConfig(seed=0))
    best_sse, best_nnz = np.inf, None
    for lam in (0.0001, 0.001):
        _, rep = solve(
            gt.noisy, gt.dicts, 10,
            SolverConfig(lam=(lam,) * 3, epsilon=1e-4, max_iters=500, seed=1),
        )
        if rep.sse < best_sse:
            best_sse, best_nnz = rep.sse, rep.nnz
    ok = best_sse <= 2 * 500.0 and best_nnz < 5000
    report(5, "full-scale smoke (Table-like row)", ok,
           f"sse {best_sse:.1f}, nnz {best_nnz}")


def test_criterion_6_imputation(desk_noisy):
    gt = desk_noisy
    # (a) dense and sparse D-updates agree on imputed cells for one model state
    rng = np.random.default_rng(2)
    dims = (12, 10, 14)
    dicts = [identity_dictionary(d) for d in dims]
    y = [rng.uniform(size=(d, 3)) for d in dims]
    model = MdtdModel(y=y, z=[v.copy() for v in y],
                      gamma=[np.zeros((d, 3)) for d in dims],
                      s=rng.uniform(0.5, 2.0, size=3), dicts=dicts, rank=3)
    dense_full = rng.standard_normal(dims)
    dense_full[rng.random(dims) < 0.7] = 0.0
    x_sp = SparseTensor3.from_dense(dense_full)
    empty_cells = np.argwhere(dense_full == 0.0)
    missing = empty_cells[rng.choice(len(empty_cells), size=100, replace=False)]
    mask = np.ones(dims)
    mask[missing[:, 0], missing[:, 1], missing[:, 2]] = 0.0
    recon = model.reconstruction("y")
    d_dense = update_d_dense(recon, dense_full, mask, lambda_d=1.0)
    d_sparse = update_d_sparse(model, x_sp, missing)
    sp_dense = d_sparse.to_dense()
    agree = np.max(np.abs(
        sp_dense[missing[:, 0], missing[:, 1], missing[:, 2]]
        - d_dense[missing[:, 0], missing[:, 1], missing[:, 2]]
    ))
    observed_exact = np.array_equal(
        sp_dense[x_sp.subs[:, 0], x_sp.subs[:, 1], x_sp.subs[:, 2]], x_sp.vals
    )
    count_ok = d_sparse.nnz == x_sp.nnz + len(missing)

    # (b) desk-scale dense imputation at 30% missing
    mask30 = make_mask(DESK["dims"], 0.30, seed=3)
    cfg = SolverConfig(lam=(0.001,) * 3, epsilon=1e-6, max_iters=500,
                       impute_mode="dense", seed=4)
    model_i, _ = solve(gt.noisy * mask30, gt.dicts, DESK["rank"], cfg, mask=mask30)
    recon_i = model_i.reconstruction("y")
    held = mask30 == 0
    mse_missing = float(np.mean((gt.noisy[held] - recon_i[held]) ** 2))
    noise_var = gt.noise_std**2
    mse_ok = mse_missing <= 2.0 * noise_var

    ok = agree < 1e-12 and observed_exact and count_ok and mse_ok
    report(6, "imputation consistency and quality", ok,
           f"path agreement {agree:.1e}, observed exact {observed_exact}, "
           f"mse/noise {mse_missing / noise_var:.2f}")


def test_criterion_7_rank_estimation():
    start = time.perf_counter()
    errs = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for seed in range(5):
            gt = generate(SynthConfig(**DESK, snr_db=None, seed=seed))
            res = estimate_rank(
                gt.noiseless, gt.dicts, range(1, 11),
                SolverConfig(lam=(0.001,) * 3, epsilon=1e-5, max_iters=300, seed=seed),
            )
            errs.append(abs(res.chosen - 5))
    elapsed = time.perf_counter() - start
    ok = float(np.mean(errs)) <= 1.0 and elapsed < 600.0
    report(7, "rank estimation", ok,
           f"mean |chosen-5| {np.mean(errs):.1f}, {elapsed:.0f}s")


def _run_all_commands(base, seed="17"):
    data = base / "data"
    rc = cli_main([
        "gen", "--out", str(data), "--dims", "18,20,24", "--atoms", "7,6",
        "--max-period", "4", "--rank", "3", "--seed", seed,
    ])
    assert rc == 0
    x = read_tensor(data / "tensor.txt")
    rng = np.random.default_rng(0)
    flat = rng.choice(int(np.prod(x.shape)), size=120, replace=False)
    idx = np.column_stack(np.unravel_index(flat, x.shape))
    write_missing(data / "missing.txt", x.shape, idx)
    ggr = "gft:graph1.txt:7,gft:graph2.txt:6,ram:4"
    cmds = {
        "decompose": [
            "decompose", "--tensor", str(data / "tensor.txt"), "--dict", ggr,
            "--rank", "3", "--lambda", "0.01", "--eps", "1e-5",
            "--max-iters", "100", "--seed", seed, "--out", str(base / "dec"),
        ],
        "impute": [
            "impute", "--tensor", str(data / "tensor.txt"),
            "--missing", str(data / "missing.txt"), "--mode", "sparse",
            "--dict", ggr, "--rank", "3", "--lambda", "0.001",
            "--eps", "1e-5", "--max-iters", "80", "--seed", seed,
            "--truth", str(data / "tensor.txt"), "--out", str(base / "imp"),
        ],
        "rank": [
            "rank", "--tensor", str(data / "tensor.txt"), "--dict", ggr,
            "--range", "2:4", "--lambda", "0.001", "--eps", "1e-4",
            "--max-iters", "80", "--seed", seed, "--out", str(base / "rnk"),
        ],
        "bench": [
            "bench", "--vary", "time", "--values", "16,24",
            "--dims", "12,14,16", "--atoms", "5,4", "--max-period", "3",
            "--rank", "2", "--max-iters", "40", "--seed", seed,
            "--out", str(base / "bn"),
        ],
    }
    for cmd, argv in cmds.items():
        assert cli_main(argv) == 0, cmd


def test_criterion_8_cli_determinism(tmp_path):
    for sub in ("run1", "run2"):
        _run_all_commands(tmp_path / sub)
    mismatches = []
    run1 = sorted((tmp_path / "run1").rglob("*"))
    for p1 in run1:
        if p1.is_dir() or p1.name == "manifest.json":  # manifests carry wall time
            continue
        p2 = tmp_path / "run2" / p1.relative_to(tmp_path / "run1")
        if p1.read_bytes() != p2.read_bytes():
            mismatches.append(str(p1.relative_to(tmp_path / "run1")))
    csvs = [p for p in run1 if p.suffix == ".csv"]
    ok = not mismatches and len(csvs) >= 4
    report(8, "CLI determinism (byte-identical reruns)", ok,
           f"{len(csvs)} csv files compared" + (f"; diffs: {mismatches}" if mismatches else ""))


def test_criterion_9_convergence_profile(desk_noisy):
    gt = desk_noisy
    cfg = SolverConfig(lam=(0.01,) * 3, epsilon=1e-4, max_iters=500, seed=1)
    _, rep_ggr = solve(gt.noisy, gt.dicts, DESK["rank"], cfg)
    id_dicts = [identity_dictionary(d) for d in DESK["dims"]]
    cfg_id = SolverConfig(lam=(0.0,) * 3, epsilon=1e-4, max_iters=500, seed=1)
    _, rep_id = solve(gt.noisy, id_dicts, DESK["rank"], cfg_id)
    drops = np.diff(np.array(rep_ggr.fit_trace)) if len(rep_ggr.fit_trace) > 1 else np.zeros(1)
    monotone_ok = float(drops.min()) >= -1e-3
    fit_diff = abs(rep_ggr.fit - rep_id.fit)
    size_ok = rep_ggr.nnz < 0.5 * rep_id.nnz and fit_diff < 0.01
    ok = monotone_ok and size_ok
    report(9, "convergence profile and final size", ok,
           f"worst fit drop {drops.min():.1e}, fit diff {fit_diff:.4f}, "
           f"nnz {rep_ggr.nnz} vs {rep_id.nnz}")
