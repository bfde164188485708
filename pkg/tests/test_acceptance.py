"""End-to-end acceptance battery.

Each test verifies one numbered claim about the toolkit and prints a
single CRITERION nn PASS/FAIL line, so a verbose run reads as a
checklist. The encode sweeps shared by the first three criteria run
once per session and are cached at module level; the group-penalty
sweep is timed against its runtime budget when first computed.

Support measurements come in two flavors. Common-support percentages
use the diagnostic default threshold (1e-8 times the largest
magnitude). Sparsity trends use an absolute threshold of 1e-8
instead: a weight high enough to drive the whole solution to zero
leaves nothing but rounding dust (largest magnitude around 1e-18),
and a relative cut would count that dust as active sites.
"""

import functools
import time
from collections import namedtuple
from contextlib import contextmanager
from dataclasses import replace

import numpy as np
import pytest
from click.testing import CliRunner

from conftest import synth_counterpart, synth_photo
from cssa import (CdlOptions, DictionarySet, FusionConfig, ProxWeights,
                  Regularizer, SolverOptions, TrainingBatch, dict_update,
                  edge_intensity, encode, entropy, fuse_coeffs_maxabs,
                  fuse_multifocus, fuse_nir_vl_ycbcr, init_dictionary, learn,
                  lowpass_decompose, objective, pad_filter, project_l1_ball,
                  prox_l1_l2, prox_l2, prox_linf, psnr, reconstruct,
                  rgb_to_ycbcr, save_dict, save_image, shrink,
                  sparsity_ratio, spatial_frequency, ssim, support_overlap,
                  tikhonov_lowpass, y_update)
from cssa.cli import main
from oracles import dense_y_update, prox_oracle

LAMBDA_GRID = (0.001, 0.01, 0.05, 0.1, 0.5)
GAMMA1_LADDER = (0.0, 0.001, 0.01)
GAMMA2 = 0.01
CROP_OFFSETS = ((0, 0), (0, 96), (96, 0), (96, 96), (32, 32))
ABS_ZERO_TOL = 1e-8


_CAPTURE = None


@pytest.fixture(autouse=True)
def _capture_manager(request):
    # emit the checklist lines past pytest's output capture
    global _CAPTURE
    _CAPTURE = request.config.pluginmanager.getplugin("capturemanager")
    yield


def _emit(line):
    if _CAPTURE is None:
        print(line, flush=True)
        return
    with _CAPTURE.global_and_fixture_disabled():
        print(line, flush=True)


@contextmanager
def criterion(num, label):
    try:
        yield
    except BaseException:
        _emit(f"CRITERION {num:02d} FAIL {label}")
        raise
    _emit(f"CRITERION {num:02d} PASS {label}")


@functools.lru_cache(maxsize=1)
def _dicts():
    return DictionarySet((init_dictionary(8, 8, seed=11),
                          init_dictionary(8, 8, seed=12)))


@functools.lru_cache(maxsize=1)
def _pairs():
    """20 correlated random pairs plus 5 highpass image crop pairs,
    all 64x64, stacked (2, 64, 64) each."""
    rng = np.random.default_rng(92)
    pairs = []
    for _ in range(20):
        shared = rng.standard_normal((64, 64))
        a = 0.2 * (shared + 0.25 * rng.standard_normal((64, 64)))
        b = 0.2 * (0.9 * shared + 0.25 * rng.standard_normal((64, 64)))
        pairs.append(np.stack([a, b]))
    base = synth_photo()
    cpart = synth_counterpart(base)
    for y, x in CROP_OFFSETS:
        a = lowpass_decompose(base[y:y + 64, x:x + 64]).high
        b = lowpass_decompose(cpart[y:y + 64, x:x + 64]).high
        pairs.append(np.stack([a, b]))
    return pairs


_Cell = namedtuple("Cell", "common union sparsity error")
_SWEEPS = {}
_SWEEP_SECONDS = {}

_REG_MAKERS = {
    "l1": Regularizer.l1,
    "l21": Regularizer.l21,
    "linf1": Regularizer.linf1,
    "l1l21": lambda g1: Regularizer.l1_l21(g1, GAMMA2),
}


def _measure(X, diag):
    rel_tol = 1e-8 * np.abs(X).max()
    union = int(np.count_nonzero(np.any(np.abs(X) > rel_tol, axis=0)))
    return _Cell(support_overlap(X) if union else None, union,
                 sparsity_ratio(X, zero_tol=ABS_ZERO_TOL),
                 diag.approx_error)


def _sweep(structure, weights):
    """Per-pair encode statistics at each weight, computed once."""
    fresh = [w for w in weights if (structure, w) not in _SWEEPS]
    if fresh:
        pairs = _pairs()
        dicts = _dicts()
        make = _REG_MAKERS[structure]
        t0 = time.time()
        for w in fresh:
            _SWEEPS[(structure, w)] = [
                _measure(*encode(p, dicts, make(w))) for p in pairs
            ]
        _SWEEP_SECONDS[structure] = (_SWEEP_SECONDS.get(structure, 0.0)
                                     + time.time() - t0)
    return [_SWEEPS[(structure, w)] for w in weights]


def test_criterion_01_group_penalty_gives_identical_supports():
    with criterion(1, "group encodes share one support across signals"):
        grid = _sweep("l21", LAMBDA_GRID)
        checked = 0
        for cells in grid:
            for cell in cells:
                if cell.union:
                    assert cell.common == 100.0
                    checked += 1
        # only the strongest weight empties any cell, so nearly the
        # whole grid exercises the guarantee
        assert checked >= 100
        assert _SWEEP_SECONDS["l21"] < 120.0


def test_criterion_02_structures_order_support_overlap():
    with criterion(2, "support overlap ranks elementwise < combined < group"):
        l21 = _sweep("l21", LAMBDA_GRID)
        l1 = _sweep("l1", LAMBDA_GRID)
        for cells1, cells21 in zip(l1, l21):
            for c1, c21 in zip(cells1, cells21):
                if c1.union and c21.union:
                    assert c1.common < c21.common
        ladder = _sweep("l1l21", GAMMA1_LADDER)
        l1_ref = _sweep("l1", (0.01,))[0]
        for i in range(len(_pairs())):
            top, mid, bot = ladder[0][i], ladder[1][i], ladder[2][i]
            # without an elementwise term the combined penalty is a
            # pure group penalty, so overlap starts at 100 and drops
            # as the elementwise weight grows, yet stays above an
            # unstructured encode of equal elementwise weight
            assert top.common == 100.0
            assert 100.0 > mid.common > bot.common
            assert bot.common > l1_ref[i].common


def test_criterion_03_weight_sweep_trades_sparsity_for_error():
    with criterion(3, "sparsity falls and error rises along the grid"):
        for structure in ("l1", "l21", "linf1"):
            grid = _sweep(structure, LAMBDA_GRID)
            for lo, hi in zip(grid, grid[1:]):
                for a, b in zip(lo, hi):
                    assert b.sparsity <= a.sparsity + 1e-9
                    assert b.error >= a.error - 1e-9


def test_criterion_04_prox_outputs_match_numeric_oracle():
    with criterion(4, "prox operators agree with a convex solver"):
        rng = np.random.default_rng(123)
        worst_moreau = 0.0
        for _ in range(1000):
            n = int(rng.integers(1, 6))
            a = rng.normal(0.0, rng.uniform(0.3, 3.0), n)
            tau = float(rng.uniform(0.1, 2.0))
            kappa = float(rng.uniform(0.1, 2.0))
            assert np.allclose(shrink(a, tau),
                               prox_oracle("l1", a, tau), atol=1e-5)
            assert np.allclose(prox_l2(a, tau),
                               prox_oracle("l2", a, tau), atol=1e-5)
            assert np.allclose(prox_linf(a, tau),
                               prox_oracle("linf", a, tau), atol=1e-5)
            assert np.allclose(prox_l1_l2(a, ProxWeights(tau, kappa)),
                               prox_oracle("l1l2", a, tau, kappa), atol=1e-5)
            gap = prox_linf(a, tau) + tau * project_l1_ball(a / tau, 1.0) - a
            worst_moreau = max(worst_moreau, float(np.max(np.abs(gap))))
        assert worst_moreau <= 1e-12


def test_criterion_05_frequency_solve_matches_dense_oracle():
    with criterion(5, "frequency-domain ridge solve is exact"):
        rng = np.random.default_rng(55)
        for _ in range(50):
            h, w = (int(v) for v in rng.integers(3, 9, 2))
            k = int(rng.integers(1, 4))
            q = int(rng.integers(2, min(h, w) + 1))
            filters = rng.standard_normal((k, q, q))
            s = rng.standard_normal((h, w))
            Z = rng.standard_normal((k, h, w))
            rho = float(rng.uniform(0.5, 20.0))
            spectra = np.stack([np.fft.fft2(pad_filter(f, h, w))
                                for f in filters])
            fast = y_update(s, Z, spectra, rho)
            assert np.allclose(fast, dense_y_update(s, Z, filters, rho),
                               atol=1e-8)


def test_criterion_06_admm_converges_to_reference_objective():
    with criterion(6, "residuals converge and match a long reference run"):
        dicts = _dicts()
        rng = np.random.default_rng(31)
        planted = np.zeros((2, 8, 64, 64))
        sites = rng.integers(0, [8, 64, 64], size=(40, 3))
        for k, i, j in sites:
            for n in range(2):
                planted[n, k, i, j] = (rng.uniform(0.5, 1.5)
                                       * rng.choice([-1.0, 1.0]))
        signals = np.stack([reconstruct(planted[n][None], dicts[n])[0]
                            for n in range(2)])
        signals += 0.002 * rng.standard_normal(signals.shape)

        reg = Regularizer.l21(0.05)
        opts = SolverOptions(rho=10.0, record_history=True)
        X, diag = encode(signals, dicts, reg, opts)
        threshold = opts.tol_primal * np.sqrt(X.size)
        assert diag.iterations < opts.max_iter
        assert diag.primal_residuals[-1] <= threshold
        assert diag.dual_residuals[-1] <= threshold

        ref_opts = SolverOptions(rho=10.0, max_iter=2000,
                                 tol_primal=1e-7, tol_dual=1e-7)
        X_ref, _ = encode(signals, dicts, reg, ref_opts)
        final = objective(signals, X, dicts, reg)
        reference = objective(signals, X_ref, dicts, reg)
        assert abs(final - reference) <= 0.01 * reference


def test_criterion_07_dictionary_learning_descends_feasibly():
    with criterion(7, "learned filters stay feasible and descend"):
        base = synth_photo()
        cpart = synth_counterpart(base)
        samples = np.stack([
            np.stack([base[y:y + 64, x:x + 64], cpart[y:y + 64, x:x + 64]])
            for y, x in CROP_OFFSETS[:4]
        ])
        batch = TrainingBatch(samples)
        opts = CdlOptions(num_filters=8, filter_size=8, outer_iters=20,
                          sparse_reg=Regularizer.l21(0.01),
                          sparse_opts=SolverOptions(rho=10.0, max_iter=100),
                          seed=7)
        result = learn(batch, opts)

        for m in range(2):
            for f in result.dictionaries[m].filters:
                assert np.linalg.norm(f) <= 1.0 + 1e-12
        obj = result.objectives
        assert len(obj) == opts.outer_iters
        for before, after in zip(obj, obj[1:]):
            assert after <= before * 1.01

        # with the codes fixed the filter update decouples, so one
        # alternation of the coupled problem must equal one joint
        # encode followed by independent per-signal filter updates
        joint = learn(batch, replace(opts, outer_iters=1))
        highs = samples - np.stack([
            [tikhonov_lowpass(plane, opts.lowpass_reg) for plane in pair]
            for pair in samples
        ])
        init = DictionarySet(tuple(
            init_dictionary(8, 8, seed=opts.seed + m) for m in range(2)))
        coeffs = np.stack([
            encode(highs[t], init, opts.sparse_reg, opts.sparse_opts)[0]
            for t in range(len(highs))
        ])
        for m in range(2):
            manual = dict_update(highs[:, m], coeffs[:, m], 8,
                                 rho=opts.dict_rho,
                                 iterations=opts.dict_inner_iters,
                                 init=init[m])
            assert np.array_equal(joint.dictionaries[m].filters,
                                  manual.filters)


def test_criterion_08_fusion_partition_and_degenerations():
    with criterion(8, "fusion partition, chroma, and symmetric limits"):
        dicts = _dicts()
        rng = np.random.default_rng(88)
        for _ in range(3):
            mask = rng.random((2, 6, 16, 16)) < 0.5
            Xv, Xn = rng.standard_normal((2, 6, 16, 16)) * mask
            merged = fuse_coeffs_maxabs(Xv, Xn)
            assert not np.any((merged.Fv != 0) & (merged.Fn != 0))
            assert np.array_equal(np.abs(merged.Fv + merged.Fn),
                                  np.maximum(np.abs(Xv), np.abs(Xn)))
        X, _ = encode(_pairs()[20], dicts, Regularizer.l1_l21(0.001, GAMMA2))
        merged = fuse_coeffs_maxabs(X[0], X[1])
        assert not np.any((merged.Fv != 0) & (merged.Fn != 0))
        assert np.array_equal(np.abs(merged.Fv + merged.Fn),
                              np.maximum(np.abs(X[0]), np.abs(X[1])))

        base = synth_photo()
        cpart = synth_counterpart(base)
        a = base[32:96, 32:96]
        b = cpart[32:96, 32:96]
        tint = rng.uniform(-0.1, 0.1, a.shape + (3,))
        vl = np.clip(a[..., None] + tint, 0.0, 1.0)
        out = fuse_nir_vl_ycbcr(vl, b, dicts)
        split = rgb_to_ycbcr(vl)
        assert np.array_equal(out.cb, split.cb)
        assert np.array_equal(out.cr, split.cr)

        # identical inputs collapse to one signal whose group weight
        # shrinks by 1/sqrt(2)
        cfg = FusionConfig.nir_vl()
        bands = lowpass_decompose(a, cfg.lowpass_reg)
        sym = fuse_nir_vl_ycbcr(np.repeat(a[..., None], 3, axis=-1), a,
                                DictionarySet((dicts[0], dicts[0])), cfg)
        g1, g2 = cfg.regularizer.gamma1, cfg.regularizer.gamma2
        Xs, _ = encode([bands.high], dicts[0],
                       Regularizer.l1_l21(g1, g2 / np.sqrt(2.0)), cfg.solver)
        assert np.allclose(sym.y, bands.low + reconstruct(Xs, dicts[0])[0],
                           atol=1e-8)

        mf_cfg = FusionConfig.multifocus()
        fused = fuse_multifocus([a, a], dicts[0], mf_cfg)
        lam = mf_cfg.regularizer.lam
        Xm, _ = encode([bands.high], dicts[0],
                       Regularizer.l21(lam / np.sqrt(2.0)), mf_cfg.solver)
        expected = np.clip(bands.low + reconstruct(Xm, dicts[0])[0], 0.0, 1.0)
        assert np.allclose(fused, expected, atol=1e-8)

        for plane in (a, b, base[0:64, 96:160]):
            parts = lowpass_decompose(plane)
            assert np.max(np.abs(parts.low + parts.high - plane)) <= 1e-12


def test_criterion_09_metric_reference_values():
    with criterion(9, "quality metrics hit their reference values"):
        assert entropy(np.full((8, 8), 0.4)) == 0.0
        half = np.zeros((4, 4))
        half[:, 2:] = 1.0
        assert entropy(half) == pytest.approx(1.0, abs=1e-12)
        levels = (np.arange(256.0) / 255.0).reshape(16, 16)
        assert entropy(levels) == pytest.approx(8.0, abs=1e-12)

        p = np.random.default_rng(3).uniform(0, 1, (16, 16))
        assert ssim(p, p) == pytest.approx(1.0, abs=1e-12)

        yy, xx = np.mgrid[0:8, 0:8]
        checker = ((yy + xx) % 2).astype(np.float64)
        assert spatial_frequency(checker) == pytest.approx(np.sqrt(2.0),
                                                           abs=1e-12)

        ramp = np.tile(np.arange(8.0), (8, 1))
        assert edge_intensity(ramp) == pytest.approx(8.0, abs=1e-12)

        a = np.zeros((16, 16))
        b = np.full((16, 16), 1.0 / 255.0)
        assert psnr(a, b) == pytest.approx(48.1308, abs=1e-3)


def test_criterion_10_cli_determinism_and_throughput(tmp_path):
    with criterion(10, "commands are bitwise repeatable and fast enough"):
        runner = CliRunner()
        base = synth_photo()
        cpart = synth_counterpart(base)
        a, b = base[:32, :32], cpart[:32, :32]
        vl32 = np.clip(np.stack([a, 0.9 * a + 0.05, 0.8 * a + 0.1],
                                axis=-1), 0, 1)
        save_image(a, str(tmp_path / "a.png"))
        save_image(b, str(tmp_path / "b.png"))
        save_image(vl32, str(tmp_path / "vl.png"))
        save_dict(DictionarySet((init_dictionary(3, 4, seed=21),
                                 init_dictionary(3, 4, seed=22))),
                  str(tmp_path / "pair.bin"))
        save_dict(init_dictionary(3, 4, seed=23),
                  str(tmp_path / "single.bin"))

        def run_twice(args, outputs):
            rounds = []
            for tag in ("one", "two"):
                sub = tmp_path / tag
                sub.mkdir(exist_ok=True)
                cmd = [arg.replace("@", str(sub)) for arg in args]
                res = runner.invoke(main, cmd)
                assert res.exit_code == 0, res.output + res.stderr
                rounds.append([(sub / name).read_bytes()
                               for name in outputs])
            assert rounds[0] == rounds[1]

        run_twice(["report-table1", str(tmp_path / "a.png"),
                   str(tmp_path / "b.png"),
                   "--dict", str(tmp_path / "pair.bin"),
                   "--out", "@/table.csv", "--lambda-grid", "0.01,0.05"],
                  ["table.csv"])
        run_twice(["fuse-nirvl", str(tmp_path / "vl.png"),
                   str(tmp_path / "b.png"),
                   "--dict", str(tmp_path / "pair.bin"),
                   "--out", "@/fused.png"],
                  ["fused.png", "fused.png.metrics.csv"])
        run_twice(["fuse-mf", str(tmp_path / "a.png"),
                   str(tmp_path / "b.png"),
                   "--dict", str(tmp_path / "single.bin"),
                   "--out", "@/mf.png"],
                  ["mf.png", "mf.png.metrics.csv"])

        big = synth_photo(size=256)
        big_c = synth_counterpart(big)
        vl = np.clip(np.stack([big, 0.9 * big + 0.05, 0.8 * big + 0.1],
                              axis=-1), 0, 1)
        save_image(vl, str(tmp_path / "vl256.png"))
        save_image(big_c, str(tmp_path / "nir256.png"))
        save_dict(DictionarySet((init_dictionary(32, 8, seed=11),
                                 init_dictionary(32, 8, seed=12))),
                  str(tmp_path / "wide.bin"))
        t0 = time.time()
        res = runner.invoke(main, ["fuse-nirvl", str(tmp_path / "vl256.png"),
                                   str(tmp_path / "nir256.png"),
                                   "--dict", str(tmp_path / "wide.bin"),
                                   "--out", str(tmp_path / "fused256.png")])
        elapsed = time.time() - t0
        assert res.exit_code == 0, res.output + res.stderr
        assert (tmp_path / "fused256.png").stat().st_size > 0
        assert elapsed < 60.0
