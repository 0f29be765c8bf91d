"""Acceptance gate: one test per criterion, each printing a pass line.

The statistical criteria compare aggregated bit-error counts with one-sided
binomial z-tests at the 95% level; SNR crossings are located by log-linear
interpolation between bracketing grid points.  Heavy sweeps fan out over
two worker processes, which cannot change any result because every trial
draws from counter-derived substreams.
"""

import time

import numpy as np
import pytest

from smsim import channel as ch
from smsim import modem
from smsim.cli import main as cli_main
from smsim.config import SimConfig
from smsim.detectors import detect_gsp
from smsim.harness import run_sweep, run_trial
from smsim.numerics import hermitian_sqrt, ls_solve

WORKERS = 2

# Desk-scaled comparison system used by criteria 4-7.
DESK = dict(M=32, M_RF=12, K=4, n_t=4, P=4, Q=8, rho_bs=0.5, rho_us=0.0,
            ae_scheme="direct", phi=1)

Z_95 = 1.6449  # one-sided 95% normal quantile


def ber_separated(err_lo, bits_lo, err_hi, bits_hi):
    """True if the low rate is below the high rate at 95% binomial
    confidence (one-sided two-proportion z-test)."""
    p_lo, p_hi = err_lo / bits_lo, err_hi / bits_hi
    pooled = (err_lo + err_hi) / (bits_lo + bits_hi)
    se = np.sqrt(pooled * (1 - pooled) * (1 / bits_lo + 1 / bits_hi))
    return se > 0 and (p_hi - p_lo) / se > Z_95


def not_worse(err_a, bits_a, err_b, bits_b):
    """True unless rate a exceeds rate b at 95% binomial confidence."""
    return not ber_separated(err_b, bits_b, err_a, bits_a)


def snr_at_target(snrs, bers, target):
    """SNR where the BER curve crosses the target, interpolating
    log-linearly between the bracketing grid points."""
    for i in range(len(snrs) - 1):
        if bers[i] >= target >= bers[i + 1] and bers[i + 1] > 0:
            span = np.log10(bers[i + 1]) - np.log10(bers[i])
            frac = (np.log10(target) - np.log10(bers[i])) / span
            return snrs[i] + frac * (snrs[i + 1] - snrs[i])
    raise AssertionError(f"target {target} not bracketed by the grid")


def single_point(config):
    """Run a one-SNR sweep and index the records by detector."""
    assert len(config.snr_grid_db) == 1
    return {r.detector: r for r in run_sweep(config, workers=WORKERS)}


def test_criterion_01_circulant_oracle_equivalence():
    """Convolutional channel path vs materialized block-circulant matrix."""
    start = time.time()
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(100):
        K = int(rng.integers(1, 5))
        Q = int(rng.integers(2, 17))
        P = int(rng.integers(1, min(Q, 8) + 1))
        n_t = int(2 ** rng.integers(0, 3))
        M_RF = int(rng.integers(1, 17))
        M = M_RF + int(rng.integers(0, 17))
        chan = ch.generate_channel(K, M, n_t, P, ch.CorrelationSpec(0.5, 0.2), rng)
        sel = ch.select_aes(M, M_RF, "continuous", 1)
        eff = ch.effective_channel(chan, sel)
        x = rng.standard_normal(K * n_t * Q) + 1j * rng.standard_normal(K * n_t * Q)
        y_conv = ch.apply_cpsc_channel(eff, x, 0.0)
        y_mat = ch.block_circulant_matrix(eff, Q) @ x
        worst = max(worst, float(np.linalg.norm(y_conv - y_mat)
                                 / np.linalg.norm(y_mat)))
    elapsed = time.time() - start
    assert worst < 1e-10
    assert elapsed < 30
    print(f"\n[PASS] criterion 1 (circulant oracle): worst rel err {worst:.2e} "
          f"over 100 configs, {elapsed:.1f}s")


def test_criterion_02_mod_convention():
    """Index-wrap table plus exhaustive check against a shift oracle."""
    table = {(5, 4): 1, (4, 4): 4, (0, 4): 4, (-1, 4): 3}
    for (x, y), want in table.items():
        assert ch.cyclic_index(x, y) == want
    for x in range(-20, 21):
        for y in range(1, 9):
            w = x
            while w < 1:
                w += y
            while w > y:
                w -= y
            assert ch.cyclic_index(x, y) == w
    print("\n[PASS] criterion 2 (mod convention): table and exhaustive scan")


def test_criterion_03_snr_calibration():
    """Measured receive SNR within 0.1 dB of target on the full-scale
    antenna configuration at 1e4 realizations."""
    start = time.time()
    K, M, M_RF, n_t, P, Q, target_db = 8, 64, 18, 4, 8, 8, 10.0
    const = modem.build_constellation(64)
    sel = ch.select_aes(M, M_RF, "direct", 1)
    corr = ch.CorrelationSpec(0.5, 0.0)
    sigma2 = ch.calibrate_noise(target_db, K)
    rng = np.random.default_rng(103)
    n_bits = modem.payload_bit_count(K, Q, 1, n_t, 64)
    sig = noise = 0.0
    for _ in range(10_000):
        bits = rng.integers(0, 2, n_bits, dtype=np.uint8)
        frame = modem.assemble_group(bits, K, Q, 1, n_t, const)
        x = modem.aggregate_blocks(frame, const)[0]
        eff = ch.effective_channel(
            ch.generate_channel(K, M, n_t, P, corr, rng), sel)
        sig += np.sum(np.abs(ch.apply_cpsc_channel(eff, x, 0.0)) ** 2)
        w = rng.standard_normal(M_RF * Q) + 1j * rng.standard_normal(M_RF * Q)
        noise += np.sum(np.abs(w) ** 2) * sigma2 / 2
    measured = 10 * np.log10(sig / noise)
    elapsed = time.time() - start
    assert abs(measured - target_db) < 0.1
    assert elapsed < 60
    print(f"\n[PASS] criterion 3 (SNR calibration): {measured:.3f} dB vs "
          f"{target_db} dB target, {elapsed:.0f}s")


def test_criterion_04_noiseless_exactness():
    """GSP exact on >= 99% of 500 instances at 60 dB, for J=1 and J=2."""
    start = time.time()
    rates = {}
    for J in (1, 2):
        cfg = SimConfig(L=4, J=J, detectors=("gsp",), snr_grid_db=(60.0,),
                        trials=1, seed=104, **DESK)
        exact = sum(run_trial(cfg, t).counts["gsp"] == (0, 0) for t in range(500))
        rates[J] = exact / 500
        assert exact >= 495, f"J={J}: only {exact}/500 exact"
    elapsed = time.time() - start
    assert elapsed < 120
    print(f"\n[PASS] criterion 4 (noiseless exactness): J=1 {rates[1]:.1%}, "
          f"J=2 {rates[2]:.1%}, {elapsed:.0f}s")


def _scan_mid_snr():
    """SNR point where GSP(J=1) total BER sits inside [1e-3, 1e-1]."""
    cfg = SimConfig(L=64, J=1, detectors=("gsp",),
                    snr_grid_db=(10.0, 13.0, 16.0, 19.0, 22.0),
                    trials=500, seed=1050, **DESK)
    records = run_sweep(cfg, workers=WORKERS)
    candidates = [r for r in records if 2e-3 <= r.ber <= 5e-2]
    assert candidates, f"no mid-SNR point found: {[(r.snr_db, r.ber) for r in records]}"
    return min(candidates, key=lambda r: abs(np.log10(r.ber) + 2)).snr_db


def test_criterion_05_detector_ordering():
    """BER(GSP,J=2) < BER(GSP,J=1) < BER(SP) < BER(MMSE) at a mid SNR,
    each separation at 95% binomial confidence, >= 2e4 trials."""
    start = time.time()
    snr = _scan_mid_snr()
    trials = 20_000
    j1 = single_point(SimConfig(L=64, J=1, detectors=("gsp", "sp", "mmse"),
                                snr_grid_db=(snr,), trials=trials, seed=105,
                                **DESK))
    j2 = single_point(SimConfig(L=64, J=2, detectors=("gsp",),
                                snr_grid_db=(snr,), trials=trials, seed=205,
                                **DESK))
    gsp2, gsp1, sp, mmse = j2["gsp"], j1["gsp"], j1["sp"], j1["mmse"]
    assert 1e-3 <= gsp1.ber <= 1e-1, f"mid SNR missed: {gsp1.ber:.3e}"
    for lo, hi in ((gsp2, gsp1), (gsp1, sp), (sp, mmse)):
        assert ber_separated(lo.total_bit_errors, lo.total_bits,
                             hi.total_bit_errors, hi.total_bits), (
            f"{lo.detector}(J={'2' if lo is gsp2 else '1'}) {lo.ber:.3e} not "
            f"separated below {hi.detector} {hi.ber:.3e}")
    elapsed = time.time() - start
    assert elapsed < 1800
    print(f"\n[PASS] criterion 5 (detector ordering) at {snr:g} dB: "
          f"gsp J=2 {gsp2.ber:.3e} < gsp J=1 {gsp1.ber:.3e} < "
          f"sp {sp.ber:.3e} < mmse {mmse.ber:.3e}, {elapsed:.0f}s")


def test_criterion_06_ae_selection_ordering():
    """Direct selection beats continuous and random at 95% confidence, and
    BER is non-decreasing in the BS correlation for direct selection."""
    start = time.time()
    snr, trials = 16.0, 20_000

    def arm(scheme, rho, seed):
        cfg = SimConfig(M=32, M_RF=12, K=4, n_t=4, P=4, Q=8, L=64, J=2,
                        rho_bs=rho, rho_us=0.0, ae_scheme=scheme, phi=1,
                        detectors=("gsp",), snr_grid_db=(snr,),
                        trials=trials, seed=seed)
        return single_point(cfg)["gsp"]

    direct = arm("direct", 0.5, 106)
    continuous = arm("continuous", 0.5, 206)
    randomized = arm("random", 0.5, 306)
    for other, label in ((continuous, "continuous"), (randomized, "random")):
        assert ber_separated(direct.total_bit_errors, direct.total_bits,
                             other.total_bit_errors, other.total_bits), (
            f"direct {direct.ber:.3e} not separated below {label} {other.ber:.3e}")

    rho_bers = [arm("direct", rho, 406 + i).ber
                for i, rho in enumerate((0.0, 0.5, 0.8))]
    assert rho_bers[0] <= rho_bers[1] <= rho_bers[2], (
        f"BER not monotone in rho_bs: {rho_bers}")
    elapsed = time.time() - start
    assert elapsed < 1800
    print(f"\n[PASS] criterion 6 (AE selection) at {snr:g} dB: "
          f"direct {direct.ber:.3e} < continuous {continuous.ber:.3e}, "
          f"random {randomized.ber:.3e}; rho_bs 0/0.5/0.8 -> "
          f"{rho_bers[0]:.3e}/{rho_bers[1]:.3e}/{rho_bers[2]:.3e}, {elapsed:.0f}s")


def test_criterion_07_oracle_gap():
    """SNR at which GSP(J=2) total BER reaches 1e-2 is within 1 dB of the
    SNR at which the genie-aided detector's signal BER reaches 1e-2."""
    start = time.time()
    grid = (12.0, 14.0, 16.0, 18.0, 20.0, 22.0)
    cfg = SimConfig(L=64, J=2, detectors=("gsp", "oracle"), snr_grid_db=grid,
                    trials=6000, seed=107, **DESK)
    records = run_sweep(cfg, workers=WORKERS)
    gsp_total = [r.ber for r in records if r.detector == "gsp"]
    oracle_signal = [r.signal_ber for r in records if r.detector == "oracle"]
    snr_gsp = snr_at_target(grid, gsp_total, 1e-2)
    snr_oracle = snr_at_target(grid, oracle_signal, 1e-2)
    gap = abs(snr_gsp - snr_oracle)
    elapsed = time.time() - start
    assert gap <= 1.0, f"oracle gap {gap:.2f} dB"
    assert elapsed < 2700
    print(f"\n[PASS] criterion 7 (oracle gap): gsp crosses 1e-2 at "
          f"{snr_gsp:.2f} dB, oracle at {snr_oracle:.2f} dB, gap {gap:.2f} dB, "
          f"{elapsed:.0f}s")


def test_criterion_08_ml_dominance():
    """Exhaustive search is never significantly worse than GSP, nor GSP
    worse than SP, on tiny instances; noiseless exhaustive search is exact."""
    start = time.time()
    cfg = SimConfig(M=8, M_RF=4, K=2, n_t=2, L=2, P=1, Q=1, J=1,
                    detectors=("ml", "gsp", "sp"),
                    snr_grid_db=(0.0, 4.0, 8.0, 12.0, 16.0),
                    trials=5000, seed=108)
    by_snr = {}
    for r in run_sweep(cfg, workers=WORKERS):
        by_snr.setdefault(r.snr_db, {})[r.detector] = r
    for snr, recs in sorted(by_snr.items()):
        ml, gsp, sp = recs["ml"], recs["gsp"], recs["sp"]
        assert not_worse(ml.total_bit_errors, ml.total_bits,
                         gsp.total_bit_errors, gsp.total_bits), (
            f"ML {ml.ber:.3e} worse than GSP {gsp.ber:.3e} at {snr} dB")
        assert not_worse(gsp.total_bit_errors, gsp.total_bits,
                         sp.total_bit_errors, sp.total_bits), (
            f"GSP {gsp.ber:.3e} worse than SP {sp.ber:.3e} at {snr} dB")

    noiseless = SimConfig(M=8, M_RF=4, K=2, n_t=2, L=2, P=1, Q=1, J=1,
                          detectors=("ml",), snr_grid_db=(60.0,),
                          trials=1, seed=208)
    for t in range(200):
        assert run_trial(noiseless, t).counts["ml"] == (0, 0)
    elapsed = time.time() - start
    assert elapsed < 300
    ml_curve = [f"{by_snr[s]['ml'].ber:.1e}" for s in sorted(by_snr)]
    print(f"\n[PASS] criterion 8 (ML dominance): ml <= gsp <= sp at "
          f"{sorted(by_snr)} dB (ml: {ml_curve}), noiseless exact, {elapsed:.0f}s")


def test_criterion_09_numerics_properties():
    """Square-root multiply-back below 1e-10 on 50 correlation matrices and
    least-squares residual orthogonality below 1e-9 on 100 tall systems."""
    rng = np.random.default_rng(109)
    worst_sqrt = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 65))
        r = ch.exp_correlation_matrix(n, float(rng.uniform(0.0, 0.95)))
        s = hermitian_sqrt(r)
        worst_sqrt = max(worst_sqrt, float(
            np.linalg.norm(s @ s.conj().T - r) / np.linalg.norm(r)))
    assert worst_sqrt < 1e-10

    worst_ls = 0.0
    for _ in range(100):
        m = int(rng.integers(4, 80))
        n = int(rng.integers(1, m // 2 + 1))
        a = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
        b = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        x = ls_solve(a, b)
        worst_ls = max(worst_ls, float(
            np.linalg.norm(a.conj().T @ (b - a @ x)) / np.linalg.norm(b)))
    assert worst_ls < 1e-9
    print(f"\n[PASS] criterion 9 (numerics): sqrt {worst_sqrt:.2e}, "
          f"LS orthogonality {worst_ls:.2e}")


CONFIG_TEXT = """\
M = 16
M_RF = 8
K = 2
n_t = 2
L = 4
P = 2
Q = 4
J = 2
rho_bs = 0.3
rho_us = 0.0
ae_scheme = direct
phi = 1
detectors = gsp,sp,mmse
snr_grid_db = 6,18
trials = 40
seed = 310
channel_redraw = per-block
"""


def test_criterion_10_reproducibility(tmp_path):
    """Identical CLI runs give byte-identical CSV; halving the trial count
    reproduces the per-trial outcomes of the first half."""
    cfg_path = tmp_path / "repro.cfg"
    cfg_path.write_text(CONFIG_TEXT)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli_main(["run", "--config", str(cfg_path), "--out", str(a)]) == 0
    assert cli_main(["run", "--config", str(cfg_path), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()

    full = SimConfig(M=16, M_RF=8, K=2, n_t=2, L=4, P=2, Q=4, J=2,
                     rho_bs=0.3, detectors=("gsp", "sp", "mmse"),
                     snr_grid_db=(6.0, 18.0), trials=40, seed=310)
    half = SimConfig(M=16, M_RF=8, K=2, n_t=2, L=4, P=2, Q=4, J=2,
                     rho_bs=0.3, detectors=("gsp", "sp", "mmse"),
                     snr_grid_db=(6.0, 18.0), trials=20, seed=310)
    for snr_index in range(2):
        full_outcomes = [run_trial(full, t, snr_index).counts for t in range(20)]
        half_outcomes = [run_trial(half, t, snr_index).counts for t in range(20)]
        assert full_outcomes == half_outcomes
    print("\n[PASS] criterion 10 (reproducibility): byte-identical CSV and "
          "matching trial prefix")


def test_criterion_11_complexity_trend():
    """GSP wall time per block grows no faster than (Q*K)^3.3 across
    Q*K in {8, 16, 32, 64}."""
    start = time.time()
    rng = np.random.default_rng(111)
    K, n_t, L, M_RF, M, P = 2, 2, 4, 8, 16, 2
    const = modem.build_constellation(L)
    sizes = (4, 8, 16, 32)  # Q values; Q*K = 8..64
    reps = {4: 60, 8: 40, 16: 24, 32: 12}
    medians = []
    for Q in sizes:
        sel = ch.select_aes(M, M_RF, "direct", 1)
        instances = []
        n_bits = modem.payload_bit_count(K, Q, 1, n_t, L)
        for _ in range(reps[Q]):
            bits = rng.integers(0, 2, n_bits, dtype=np.uint8)
            frame = modem.assemble_group(bits, K, Q, 1, n_t, const)
            x = modem.aggregate_blocks(frame, const)[0]
            chan = ch.generate_channel(K, M, n_t, P, ch.CorrelationSpec(), rng)
            eff = ch.effective_channel(chan, sel)
            sigma2 = ch.calibrate_noise(12.0, K)
            y = ch.apply_cpsc_channel(eff, x, sigma2, rng)
            instances.append((y, ch.block_circulant_matrix(eff, Q)))
        times = []
        for y, h in instances:
            t0 = time.perf_counter()
            detect_gsp([y], [h], K, Q, n_t, const)
            times.append(time.perf_counter() - t0)
        medians.append(float(np.median(times)))
    qk = np.array(sizes, dtype=float) * K
    slope = np.polyfit(np.log(qk), np.log(medians), 1)[0]
    elapsed = time.time() - start
    assert slope <= 3.3, f"log-log slope {slope:.2f}"
    assert elapsed < 600
    times_ms = ", ".join(f"{m * 1e3:.2f}" for m in medians)
    print(f"\n[PASS] criterion 11 (complexity): median times [{times_ms}] ms "
          f"for Q*K {list(qk.astype(int))}, slope {slope:.2f}, {elapsed:.0f}s")
