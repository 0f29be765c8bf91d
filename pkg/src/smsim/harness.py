"""Seeded Monte Carlo experiment runner.

Every trial is a pure function of (seed, snr_index, trial_index): the
payload, channel, antenna selection, and noise draws each come from their
own counter-derived substream, so trials can run in any order or in
parallel without perturbing results, and rerunning a prefix of the trial
range reproduces it exactly.  All detectors configured for a trial observe
the same received blocks and channel matrices, which makes the BER
comparisons paired.
"""

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import (
    CorrelationSpec,
    apply_cpsc_channel,
    block_circulant_matrix,
    calibrate_noise,
    effective_channel,
    generate_channel,
    select_aes,
)
from .detectors import (
    DetectionResult,
    SupportSet,
    detect_gsp,
    detect_ml,
    detect_mmse,
    detect_oracle_ls,
    detect_sp_classical,
)
from .modem import (
    aggregate_blocks,
    assemble_group,
    build_constellation,
    payload_bit_count,
    _int_log2,
)

_POPCOUNT8 = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)

_STREAM_TAGS = {"payload": 0, "channel": 1, "noise": 2, "selection": 3}

CSV_HEADER = (
    "snr_db,detector,trials,total_bits,spatial_bit_errors,signal_bit_errors,"
    "total_bit_errors,ber,spatial_ber,signal_ber,seed"
)


def derive_rng(seed, snr_index, trial_index, purpose):
    """Counter-based substream: one generator per (SNR, trial, purpose)."""
    key = (snr_index, trial_index, _STREAM_TAGS[purpose])
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


@dataclass
class TrialOutcome:
    """Per-detector error counts for one group transmission."""

    trial_index: int
    snr_db: float
    counts: dict = field(default_factory=dict)      # name -> (spatial, signal)
    skipped: dict = field(default_factory=dict)     # name -> reason
    diagnostics: dict = field(default_factory=dict)  # name -> dict


@dataclass
class BerRecord:
    """Aggregated error accounting for one (SNR, detector) cell."""

    snr_db: float
    detector: str
    trials: int
    total_bits: int
    spatial_bit_errors: int
    signal_bit_errors: int
    total_bit_errors: int
    ber: float
    spatial_ber: float
    signal_ber: float
    seed: int
    note: str = ""  # skip reason; diagnostics only, not serialized


def count_bit_errors(tx, rx, n_t, constellation):
    """Bit errors of a detection against the transmitted frame.

    Spatial errors are the Hamming distance between the transmitted and
    detected antenna labels, counted once per (user, slot) for the group;
    signal errors compare the point labels per (block, user, slot).  The
    point labels are the binary index expansions, so Hamming distance is a
    popcount of the XORed indices.
    """
    if rx.antennas.shape != tx.antennas.shape:
        raise ValueError("antenna decision shape does not match the frame")
    if rx.point_indices.shape != tx.point_indices.shape:
        raise ValueError("point decision shape does not match the frame")
    spatial = int(_POPCOUNT8[np.bitwise_xor(tx.antennas - 1, rx.antennas - 1)].sum())
    signal = int(_POPCOUNT8[np.bitwise_xor(tx.point_indices, rx.point_indices)].sum())
    return spatial, signal


def _vote_antennas(block_antennas):
    """Majority vote across blocks, lowest antenna index on ties."""
    stacked = np.stack(block_antennas)  # (J, Q, K)
    J, Q, K = stacked.shape
    if J == 1:
        return stacked[0]
    voted = np.empty((Q, K), dtype=np.int64)
    for q in range(Q):
        for k in range(K):
            counts = np.bincount(stacked[:, q, k])
            voted[q, k] = int(np.argmax(counts))
    return voted


def _merge_blockwise(results, n_t):
    """Combine per-block detections of a non-group detector into one group
    decision: antennas by majority vote, points taken per block."""
    antennas = _vote_antennas([r.antennas for r in results])
    points = np.concatenate([r.point_indices for r in results], axis=0)
    return DetectionResult(
        antennas=antennas,
        point_indices=points,
        support=SupportSet.from_antennas(antennas, n_t),
        iterations=max(r.iterations for r in results),
        residual_norms=np.concatenate(
            [r.residual_norms.reshape(-1) for r in results]
        ).reshape(1, -1),
        rank_deficient=any(r.rank_deficient for r in results),
        union_restricted=any(r.union_restricted for r in results),
    )


def _run_detector(name, ys, hs, noise_variance, true_support, cfg, constellation):
    K, Q, n_t = cfg.K, cfg.Q, cfg.n_t
    if name == "gsp":
        return detect_gsp(ys, hs, K, Q, n_t, constellation)
    if name == "ml":
        return detect_ml(ys, hs, K, Q, n_t, constellation)
    if name == "oracle":
        return detect_oracle_ls(ys, hs, true_support, constellation)
    if name == "sp":
        per_block = [
            detect_sp_classical(y, h, K * Q, K, Q, n_t, constellation)
            for y, h in zip(ys, hs)
        ]
        return _merge_blockwise(per_block, n_t)
    if name == "mmse":
        per_block = [
            detect_mmse(y, h, noise_variance, K, Q, n_t, constellation)
            for y, h in zip(ys, hs)
        ]
        return _merge_blockwise(per_block, n_t)
    raise ValueError(f"unknown detector {name!r}")


def run_trial(config, trial_index, snr_index=0):
    """Run one group transmission and every configured detector on it.

    Deterministic in (config.seed, snr_index, trial_index).  Detectors whose
    preconditions the configuration violates are skipped with the reason
    recorded in the outcome.
    """
    cfg = config
    snr_db = cfg.snr_grid_db[snr_index]
    constellation = build_constellation(cfg.L)
    corr = CorrelationSpec(rho_bs=cfg.rho_bs, rho_us=cfg.rho_us)

    payload_rng = derive_rng(cfg.seed, snr_index, trial_index, "payload")
    bits = payload_rng.integers(
        0, 2, size=payload_bit_count(cfg.K, cfg.Q, cfg.J, cfg.n_t, cfg.L),
        dtype=np.uint8,
    )
    frame = assemble_group(bits, cfg.K, cfg.Q, cfg.J, cfg.n_t, constellation)
    x_blocks = aggregate_blocks(frame, constellation)

    selection_rng = derive_rng(cfg.seed, snr_index, trial_index, "selection")
    selection = select_aes(cfg.M, cfg.M_RF, cfg.ae_scheme, cfg.phi, selection_rng)

    channel_rng = derive_rng(cfg.seed, snr_index, trial_index, "channel")
    if cfg.channel_redraw == "per-block":
        channels = [
            generate_channel(cfg.K, cfg.M, cfg.n_t, cfg.P, corr, channel_rng)
            for _ in range(cfg.J)
        ]
    else:
        shared = generate_channel(cfg.K, cfg.M, cfg.n_t, cfg.P, corr, channel_rng)
        channels = [shared] * cfg.J
    effs = [effective_channel(ch, selection) for ch in channels]

    noise_variance = calibrate_noise(snr_db, cfg.K)
    noise_rng = derive_rng(cfg.seed, snr_index, trial_index, "noise")
    ys = [
        apply_cpsc_channel(eff, x_blocks[j], noise_variance, noise_rng)
        for j, eff in enumerate(effs)
    ]
    hs = [block_circulant_matrix(eff, cfg.Q) for eff in effs]
    true_support = SupportSet.from_antennas(frame.antennas, cfg.n_t)

    outcome = TrialOutcome(trial_index=trial_index, snr_db=snr_db)
    for name in cfg.detectors:
        try:
            result = _run_detector(
                name, ys, hs, noise_variance, true_support, cfg, constellation
            )
        except ValueError as exc:
            outcome.skipped[name] = str(exc)
            continue
        outcome.counts[name] = count_bit_errors(frame, result, cfg.n_t, constellation)
        outcome.diagnostics[name] = {
            "iterations": result.iterations,
            "rank_deficient": result.rank_deficient,
            "union_restricted": result.union_restricted,
        }
    return outcome


def _aggregate_chunk(config, snr_index, start, stop):
    """Sum trial outcomes over a trial range (worker entry point)."""
    counts = {name: [0, 0, 0] for name in config.detectors}  # spatial, signal, n_ok
    reasons = {}
    for trial in range(start, stop):
        outcome = run_trial(config, trial, snr_index)
        for name, (sp, sig) in outcome.counts.items():
            counts[name][0] += sp
            counts[name][1] += sig
            counts[name][2] += 1
        for name, reason in outcome.skipped.items():
            reasons.setdefault(name, reason)
    return counts, reasons


def run_sweep(config, workers=1):
    """Run the configured trials for every SNR point and aggregate.

    Returns one BerRecord per (SNR, detector), sorted by SNR then detector
    name.  Trials may be fanned out over a process pool; the counter-based
    seeding makes the aggregate independent of scheduling.
    """
    spatial_per_trial = config.K * config.Q * _int_log2(config.n_t, "n_t")
    signal_per_trial = config.J * config.K * config.Q * _int_log2(config.L, "L")
    bits_per_trial = spatial_per_trial + signal_per_trial

    records = []
    for snr_index, snr_db in enumerate(config.snr_grid_db):
        totals = {name: [0, 0, 0] for name in config.detectors}
        reasons = {}
        if workers > 1 and config.trials > 1:
            bounds = np.linspace(0, config.trials, workers * 4 + 1, dtype=int)
            jobs = [
                (config, snr_index, int(a), int(b))
                for a, b in zip(bounds[:-1], bounds[1:]) if b > a
            ]
            with ProcessPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(_aggregate_chunk, *zip(*jobs)))
        else:
            parts = [_aggregate_chunk(config, snr_index, 0, config.trials)]
        for counts, part_reasons in parts:
            for name in config.detectors:
                for i in range(3):
                    totals[name][i] += counts[name][i]
            for name, reason in part_reasons.items():
                reasons.setdefault(name, reason)

        for name in config.detectors:
            spatial, signal, n_ok = totals[name]
            total_bits = n_ok * bits_per_trial
            spatial_bits = n_ok * spatial_per_trial
            signal_bits = n_ok * signal_per_trial
            records.append(BerRecord(
                snr_db=snr_db,
                detector=name,
                trials=n_ok,
                total_bits=total_bits,
                spatial_bit_errors=spatial,
                signal_bit_errors=signal,
                total_bit_errors=spatial + signal,
                ber=(spatial + signal) / total_bits if total_bits else 0.0,
                spatial_ber=spatial / spatial_bits if spatial_bits else 0.0,
                signal_ber=signal / signal_bits if signal_bits else 0.0,
                seed=config.seed,
                note=reasons.get(name, ""),
            ))
    records.sort(key=lambda r: (r.snr_db, r.detector))
    return records


def emit_csv(records, destination):
    """Write records as CSV: fixed header, rows sorted by (snr, detector),
    floats printed with 10 significant digits."""
    if not records:
        raise ValueError("no records to write")
    rows = sorted(records, key=lambda r: (r.snr_db, r.detector))
    with open(destination, "w", encoding="utf-8", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in rows:
            fh.write(
                f"{r.snr_db:.10g},{r.detector},{r.trials},{r.total_bits},"
                f"{r.spatial_bit_errors},{r.signal_bit_errors},{r.total_bit_errors},"
                f"{r.ber:.10g},{r.spatial_ber:.10g},{r.signal_ber:.10g},{r.seed}\n"
            )


def read_csv(path):
    """Read an emitted CSV back into a list of BerRecord."""
    records = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(BerRecord(
                snr_db=float(row["snr_db"]),
                detector=row["detector"],
                trials=int(row["trials"]),
                total_bits=int(row["total_bits"]),
                spatial_bit_errors=int(row["spatial_bit_errors"]),
                signal_bit_errors=int(row["signal_bit_errors"]),
                total_bit_errors=int(row["total_bit_errors"]),
                ber=float(row["ber"]),
                spatial_ber=float(row["spatial_ber"]),
                signal_ber=float(row["signal_ber"]),
                seed=int(row["seed"]),
            ))
    return records
