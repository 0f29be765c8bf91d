"""Built-in invariant suite behind ``smsim selftest``.

Each check is a quick, self-contained verification of one structural
invariant of the simulator: the index-wrap convention, constellation
normalization and labeling, bit-mapping round trips, equivalence of the
convolutional and materialized channel paths, the frequency-domain
block-diagonalization of the noiseless system, the numerics kernels, SNR
calibration, noiseless detector exactness, and end-to-end reproducibility.
``--full`` adds slower statistical orderings at reduced trial counts; the
test suite runs the same criteria at their full sizes.
"""

import os
import tempfile

import numpy as np

from . import channel as ch
from . import detectors as det
from . import modem
from .config import SimConfig
from .harness import derive_rng, emit_csv, run_sweep, run_trial
from .numerics import hermitian_sqrt, ls_solve


def _check_mod_convention():
    table = {(5, 4): 1, (4, 4): 4, (0, 4): 4, (-1, 4): 3}
    for (x, y), want in table.items():
        if ch.cyclic_index(x, y) != want:
            return False, f"cyclic_index({x},{y}) != {want}"
    for x in range(-20, 21):
        for y in range(1, 9):
            want = x % y if x % y else y  # brute-force wrap into [1, y]
            if ch.cyclic_index(x, y) != want:
                return False, f"cyclic_index({x},{y}) != {want}"
    return True, "table and exhaustive scan match"


def _check_constellations():
    for order in modem.SUPPORTED_ORDERS:
        c = modem.build_constellation(order)
        energy = np.mean(np.abs(c.points) ** 2)
        if abs(energy - 1.0) > 1e-12:
            return False, f"L={order}: mean energy {energy}"
        if len(set(c.bit_labels)) != order:
            return False, f"L={order}: duplicate labels"
        if order > 2:
            # axis neighbours must differ in exactly one label bit
            pts = c.points
            step = np.min(np.abs(np.diff(np.unique(pts.real))))
            for i in range(order):
                for j in range(order):
                    d = pts[i] - pts[j]
                    if (abs(d.imag) < 1e-12 and abs(abs(d.real) - step) < 1e-9) or (
                        abs(d.real) < 1e-12 and abs(abs(d.imag) - step) < 1e-9
                    ):
                        ham = sum(a != b for a, b in
                                  zip(c.bit_labels[i], c.bit_labels[j]))
                        if ham != 1:
                            return False, f"L={order}: non-Gray neighbours {i},{j}"
    return True, "unit energy and per-axis Gray labels"


def _check_bit_roundtrip():
    for n_t, L in ((4, 4), (8, 2)):
        c = modem.build_constellation(L)
        bits = n_t.bit_length() - 1 + c.bits_per_symbol
        for value in range(1 << bits):
            s = format(value, f"0{bits}b")
            if modem.sm_demap(modem.sm_map(s, n_t, c), n_t, c) != s:
                return False, f"round trip failed for {s} (n_t={n_t}, L={L})"
    return True, "exhaustive map/demap round trips"


def _random_effective(rng, K, Q, P, n_t, M_RF):
    m = max(M_RF + 2, M_RF)
    chan = ch.generate_channel(K, m, n_t, P, ch.CorrelationSpec(0.3, 0.2), rng)
    sel = ch.select_aes(m, M_RF, "continuous", 1)
    return ch.effective_channel(chan, sel)


def _check_circulant_equivalence(cases=25, tol=1e-10, rng_seed=7):
    rng = np.random.default_rng(rng_seed)
    worst = 0.0
    for _ in range(cases):
        K = int(rng.integers(1, 5))
        Q = int(rng.integers(2, 17))
        P = int(rng.integers(1, min(Q, 8) + 1))
        n_t = int(2 ** rng.integers(0, 3))
        M_RF = int(rng.integers(1, 17))
        eff = _random_effective(rng, K, Q, P, n_t, M_RF)
        x = rng.standard_normal(K * n_t * Q) + 1j * rng.standard_normal(K * n_t * Q)
        y_conv = ch.apply_cpsc_channel(eff, x, 0.0)
        y_mat = ch.block_circulant_matrix(eff, Q) @ x
        worst = max(worst, np.linalg.norm(y_conv - y_mat) / np.linalg.norm(y_mat))
    return worst < tol, f"worst relative error {worst:.3e} over {cases} cases"


def _check_fft_diagonalization(tol=1e-9):
    rng = np.random.default_rng(11)
    K, Q, P, n_t, M_RF = 2, 8, 3, 2, 5
    eff = _random_effective(rng, K, Q, P, n_t, M_RF)
    h = ch.block_circulant_matrix(eff, Q)
    f = np.fft.fft(np.eye(Q)) / np.sqrt(Q)
    t = np.kron(f, np.eye(M_RF)) @ h @ np.kron(f.conj().T, np.eye(K * n_t))
    bins = np.fft.fft(np.vstack([eff.taps, np.zeros(
        (Q - P, M_RF, K * n_t), dtype=complex)]), axis=0)
    leak = t.copy()
    for b in range(Q):
        blk = t[b * M_RF:(b + 1) * M_RF, b * K * n_t:(b + 1) * K * n_t]
        if np.abs(blk - bins[b]).max() > tol * np.abs(bins).max():
            return False, f"bin {b} does not match the tap DFT"
        leak[b * M_RF:(b + 1) * M_RF, b * K * n_t:(b + 1) * K * n_t] = 0
    rel = np.linalg.norm(leak) / np.linalg.norm(h)
    return rel < tol, f"cross-bin leakage {rel:.3e}"


def _check_numerics():
    rng = np.random.default_rng(3)
    for _ in range(10):
        n = int(rng.integers(2, 33))
        r = ch.exp_correlation_matrix(n, float(rng.uniform(0, 0.95)))
        s = hermitian_sqrt(r)
        err = np.linalg.norm(s @ s.conj().T - r) / np.linalg.norm(r)
        if err > 1e-10:
            return False, f"sqrt multiply-back error {err:.3e}"
    for _ in range(20):
        m = int(rng.integers(6, 40))
        n = int(rng.integers(1, m // 2 + 1))
        a = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
        b = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        x = ls_solve(a, b)
        ortho = np.linalg.norm(a.conj().T @ (b - a @ x))
        if ortho > 1e-9 * np.linalg.norm(b):
            return False, f"residual not orthogonal: {ortho:.3e}"
    return True, "sqrt multiply-back and LS orthogonality hold"


def _check_snr_calibration(realizations=10_000, tol_db=0.1):
    cfg = SimConfig(M=16, M_RF=8, K=2, n_t=2, L=4, P=2, Q=4, J=1,
                    rho_bs=0.4, rho_us=0.2, snr_grid_db=(6.0,), trials=1)
    const = modem.build_constellation(cfg.L)
    corr = ch.CorrelationSpec(cfg.rho_bs, cfg.rho_us)
    sel = ch.select_aes(cfg.M, cfg.M_RF, cfg.ae_scheme, cfg.phi)
    sigma2 = ch.calibrate_noise(cfg.snr_grid_db[0], cfg.K)
    rng = np.random.default_rng(2024)
    sig = noise = 0.0
    n_bits = modem.payload_bit_count(cfg.K, cfg.Q, cfg.J, cfg.n_t, cfg.L)
    for _ in range(realizations):
        bits = rng.integers(0, 2, size=n_bits, dtype=np.uint8)
        frame = modem.assemble_group(bits, cfg.K, cfg.Q, cfg.J, cfg.n_t, const)
        x = modem.aggregate_blocks(frame, const)[0]
        eff = ch.effective_channel(
            ch.generate_channel(cfg.K, cfg.M, cfg.n_t, cfg.P, corr, rng), sel)
        sig += np.sum(np.abs(ch.apply_cpsc_channel(eff, x, 0.0)) ** 2)
        w = (rng.standard_normal(cfg.M_RF * cfg.Q)
             + 1j * rng.standard_normal(cfg.M_RF * cfg.Q)) * np.sqrt(sigma2 / 2)
        noise += np.sum(np.abs(w) ** 2)
    measured_db = 10 * np.log10(sig / noise)
    err = abs(measured_db - cfg.snr_grid_db[0])
    return err < tol_db, f"measured {measured_db:.3f} dB vs target 6 dB"


def _noiseless_config(J):
    return SimConfig(M=32, M_RF=12, K=4, n_t=4, L=4, P=4, Q=8, J=J,
                     rho_bs=0.5, snr_grid_db=(60.0,), detectors=("gsp",))


def _check_noiseless_exactness(instances=100, need=0.97):
    for J in (1, 2):
        cfg = _noiseless_config(J)
        exact = 0
        for trial in range(instances):
            outcome = run_trial(cfg, trial)
            sp, sig = outcome.counts["gsp"]
            exact += (sp == 0 and sig == 0)
        if exact / instances < need:
            return False, f"J={J}: only {exact}/{instances} exact"
    return True, f"J=1 and J=2 exact on >= {need:.0%} of {instances} instances"


def _check_gsp_structure():
    rng = np.random.default_rng(5)
    const = modem.build_constellation(4)
    for _ in range(20):
        K, Q, n_t, M_RF = 2, 4, 2, 6
        eff = _random_effective(rng, K, Q, 2, n_t, M_RF)
        h = ch.block_circulant_matrix(eff, Q)
        bits = rng.integers(0, 2, modem.payload_bit_count(K, Q, 1, n_t, 4),
                            dtype=np.uint8)
        frame = modem.assemble_group(bits, K, Q, 1, n_t, const)
        x = modem.aggregate_blocks(frame, const)[0]
        y = h @ x + 0.05 * (rng.standard_normal(h.shape[0])
                            + 1j * rng.standard_normal(h.shape[0]))
        log = []
        result = det.detect_gsp([y], [h], K, Q, n_t, const, state_log=log)
        if result.iterations > max(Q, 2):
            return False, "iteration cap exceeded"
        for state in log:
            segs = state.support // n_t
            if not np.array_equal(segs, np.arange(K * Q)):
                return False, "support missing a segment"
            recon = y - h[:, state.support] @ state.final_estimate[0]
            if np.linalg.norm(recon - state.residuals[0]) > 1e-9 * np.linalg.norm(y):
                return False, "residual inconsistent with LS estimate"
    return True, "per-segment supports, residual identity, iteration cap"


def _check_reproducibility():
    cfg = SimConfig(M=16, M_RF=8, K=2, n_t=2, L=4, P=2, Q=4, J=2,
                    detectors=("gsp", "mmse", "sp"), snr_grid_db=(5.0, 15.0),
                    trials=6, seed=99)
    with tempfile.TemporaryDirectory() as tmp:
        p1, p2 = os.path.join(tmp, "a.csv"), os.path.join(tmp, "b.csv")
        emit_csv(run_sweep(cfg), p1)
        emit_csv(run_sweep(cfg), p2)
        with open(p1, "rb") as f1, open(p2, "rb") as f2:
            if f1.read() != f2.read():
                return False, "rerun produced different CSV bytes"
    first = [run_trial(cfg, t) for t in range(3)]
    again = [run_trial(cfg, t) for t in range(3)]
    for a, b in zip(first, again):
        if a.counts != b.counts:
            return False, "per-trial outcomes not reproducible"
    return True, "byte-identical CSV and reproducible trial prefix"


def _check_ml_tiny():
    cfg = SimConfig(M=8, M_RF=4, K=2, n_t=2, L=2, P=1, Q=1, J=1,
                    detectors=("ml", "gsp"), snr_grid_db=(60.0,), trials=40)
    for trial in range(cfg.trials):
        outcome = run_trial(cfg, trial)
        if outcome.counts["ml"] != (0, 0):
            return False, f"noiseless ML erred on trial {trial}"
    return True, "noiseless exhaustive search exact on 40 tiny instances"


def _check_ordering_quick(trials=3000, snr_db=16.0):
    base = dict(M=32, M_RF=12, K=4, n_t=4, L=64, P=4, Q=8,
                rho_bs=0.5, snr_grid_db=(snr_db,), trials=trials, seed=7)
    rec1 = {r.detector: r for r in run_sweep(
        SimConfig(J=1, detectors=("gsp", "sp", "mmse"), **base), workers=2)}
    rec2 = {r.detector: r for r in run_sweep(
        SimConfig(J=2, detectors=("gsp",), **base), workers=2)}
    bers = (rec2["gsp"].ber, rec1["gsp"].ber, rec1["sp"].ber, rec1["mmse"].ber)
    ok = bers[0] < bers[1] < bers[2] < bers[3]
    return ok, ("BER gsp(J=2)=%.3g < gsp(J=1)=%.3g < sp=%.3g < mmse=%.3g" % bers
                if ok else "ordering violated: %s" % (bers,))


def run_selftest(full=False, stream=None):
    """Run the invariant checks; returns 0 if all pass."""
    import sys
    stream = stream or sys.stdout
    checks = [
        ("mod-convention", _check_mod_convention),
        ("constellations", _check_constellations),
        ("bit-roundtrip", _check_bit_roundtrip),
        ("circulant-equivalence", _check_circulant_equivalence),
        ("fft-diagonalization", _check_fft_diagonalization),
        ("numerics-kernels", _check_numerics),
        ("snr-calibration", _check_snr_calibration),
        ("noiseless-exactness", _check_noiseless_exactness),
        ("gsp-structure", _check_gsp_structure),
        ("ml-tiny", _check_ml_tiny),
        ("reproducibility", _check_reproducibility),
    ]
    if full:
        checks.append(("detector-ordering", _check_ordering_quick))
    failures = 0
    for name, fn in checks:
        ok, detail = fn()
        failures += not ok
        stream.write(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}\n")
    stream.write(f"{len(checks) - failures}/{len(checks)} checks passed\n")
    return 0 if failures == 0 else 1
