"""Multi-user detectors sharing one decision-output contract.

The aggregate SM vector of one CPSC block has exactly one nonzero in every
length-n_t segment (one segment per user/slot pair), and the J blocks of a
transmission group share the segment supports.  The group subspace pursuit
detector exploits both structures: candidate supports are picked per
segment rather than globally, and correlation / pruning energies are summed
over the J blocks.  Classical subspace pursuit, a regularized linear
detector, an exhaustive search, and a genie-aided least-squares detector
are provided as baselines.

Column indices are 0-based: segment s = q*K + k owns columns
[s*n_t, (s+1)*n_t), and antenna a (1-based) of that segment is column
s*n_t + a - 1.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .numerics import RANK_TOL, RankDeficiencyError, ls_solve

_ML_CHUNK = 4096


def quantize_symbol(rough, constellation):
    """Index of the constellation point closest to a rough estimate.

    Ties break toward the lowest point index.
    """
    return int(np.argmin(np.abs(constellation.points - rough)))


def _quantize(rough, constellation):
    """Vectorized nearest-point quantization, lowest index on ties."""
    rough = np.asarray(rough)
    dist = np.abs(rough[..., None] - constellation.points)
    return np.argmin(dist, axis=-1)


@dataclass(frozen=True)
class SupportSet:
    """One active column per (user, slot) segment.

    ``columns`` holds the K*Q sorted 0-based global column indices; sortedness
    plus one-per-segment makes entry s the column of segment s = q*K + k.
    """

    K: int
    Q: int
    n_t: int
    columns: np.ndarray

    def __post_init__(self):
        cols = np.asarray(self.columns)
        n_seg = self.K * self.Q
        if cols.shape != (n_seg,):
            raise ValueError(f"support must have {n_seg} entries, got {cols.shape}")
        if not np.array_equal(cols // self.n_t, np.arange(n_seg)):
            raise ValueError("support must hold exactly one column per segment")

    @classmethod
    def from_antennas(cls, antennas, n_t):
        """Build from a (Q, K) array of 1-based antenna indices."""
        antennas = np.asarray(antennas)
        Q, K = antennas.shape
        seg_base = np.arange(Q * K) * n_t
        cols = seg_base + (antennas.reshape(-1) - 1)
        return cls(K=K, Q=Q, n_t=n_t, columns=cols.astype(np.int64))

    def antennas(self):
        """(Q, K) array of 1-based antenna indices."""
        return (self.columns % self.n_t + 1).reshape(self.Q, self.K)


@dataclass
class DetectionResult:
    """Hard decisions plus diagnostics for one detected group.

    ``antennas`` is (Q, K) with 1-based indices shared by all blocks;
    ``point_indices`` is (J, Q, K); ``residual_norms`` records the per-block
    residual after each iteration of the detector that produced the result.
    """

    antennas: np.ndarray
    point_indices: np.ndarray
    support: SupportSet
    iterations: int
    residual_norms: np.ndarray
    rank_deficient: bool = False
    union_restricted: bool = False


@dataclass
class GspState:
    """Working state of one group-subspace-pursuit iteration (diagnostic)."""

    t: int
    support_prev: np.ndarray | None
    support: np.ndarray
    correlation: np.ndarray
    union_estimate: np.ndarray
    final_estimate: np.ndarray
    residuals: np.ndarray


def _ls_on_support(h, y, cols):
    """Least squares on the given columns with a deterministic fallback.

    A rank-deficient selection (numerically dependent columns) is resolved
    by keeping a maximal independent subset scanning columns in ascending
    index order; dropped columns get zero coefficients.
    """
    cols = np.asarray(cols)
    sub = h[:, cols]
    try:
        return ls_solve(sub, y), False
    except RankDeficiencyError:
        pass
    coef = np.zeros(cols.size, dtype=complex)
    basis = []
    kept = []
    for i in range(cols.size):
        v = sub[:, i].astype(complex)
        scale = np.linalg.norm(v)
        for u in basis:
            v = v - (u.conj() @ v) * u
        norm = np.linalg.norm(v)
        if norm > RANK_TOL * max(scale, 1.0):
            basis.append(v / norm)
            kept.append(i)
    try:
        coef[kept] = ls_solve(sub[:, kept], y)
    except RankDeficiencyError:
        coef[kept] = np.linalg.lstsq(sub[:, kept], y, rcond=None)[0]
    return coef, True


def _validate_blocks(ys, hs, K, Q, n_t):
    if len(ys) != len(hs) or len(ys) < 1:
        raise ValueError("need the same non-zero number of blocks and channels")
    n = K * Q * n_t
    m = ys[0].shape[0]
    for y, h in zip(ys, hs):
        if y.shape != (m,) or h.shape != (m, n):
            raise ValueError(
                f"block dimensions disagree: y {y.shape}, H {h.shape}, "
                f"expected ({m},) and ({m}, {n})"
            )
    return m, n


def _collapse_union(union, energy, n_t):
    """Keep, per segment, the single union candidate with the largest
    correlation energy (lowest column index on ties)."""
    union = np.asarray(union)
    winners = {}
    for col in union:
        seg = col // n_t
        best = winners.get(seg)
        if best is None or energy[col] > energy[best]:
            winners[seg] = col
    return np.array(sorted(winners.values()), dtype=np.int64)


def detect_gsp(ys, hs, K, Q, n_t, constellation, state_log=None):
    """Group subspace pursuit over J jointly transmitted blocks.

    Per iteration: correlate each block's residual against each segment's
    columns, pick per segment the entry with the largest energy summed over
    blocks, solve least squares per block on the union of the previous
    support and these candidates, prune back to one column per segment by
    summed least-squares energy, re-solve on the pruned support, and update
    the residuals.  Iteration stops when the support repeats or the budget
    (the block length, but at least two passes) is spent.  An iteration is
    allowed to increase the residual, so the decisions are taken from the
    iterate with the smallest total residual norm, the same roll-back
    semantics classical subspace pursuit uses.  Final symbols are the
    nearest-point quantizations of that iterate's least-squares estimates.

    Pass a list as ``state_log`` to capture per-iteration state snapshots.
    """
    ys = [np.asarray(y, dtype=complex) for y in ys]
    hs = [np.asarray(h, dtype=complex) for h in hs]
    m, n = _validate_blocks(ys, hs, K, Q, n_t)
    J = len(ys)
    n_seg = K * Q
    if n_seg > m:
        raise ValueError(
            f"support size K*Q={n_seg} exceeds measurement length {m}; "
            "the final least squares would be under-determined"
        )

    seg_base = np.arange(n_seg) * n_t
    residuals = np.stack(ys)
    omega_prev = None
    residual_trace = []
    rank_deficient = False
    union_restricted = False
    best = None  # (total residual energy, omega_ants, omega, c)
    # Support stability can only be observed from the second iteration on,
    # so the iteration budget is the block length but never less than two.
    max_iterations = max(Q, 2)
    t = 1

    while True:
        corr = np.stack([hs[j].conj().T @ residuals[j] for j in range(J)])
        energy = np.sum(np.abs(corr) ** 2, axis=0)
        tau = np.argmax(energy.reshape(n_seg, n_t), axis=1)
        gamma = seg_base + tau

        union = gamma if omega_prev is None else np.union1d(omega_prev, gamma)
        if union.size > m:
            union = _collapse_union(union, energy, n_t)
            union_restricted = True

        b = np.zeros((J, n), dtype=complex)
        for j in range(J):
            coef, flag = _ls_on_support(hs[j], ys[j], union)
            b[j, union] = coef
            rank_deficient |= flag
        b_energy = np.sum(np.abs(b) ** 2, axis=0)
        omega_ants = np.argmax(b_energy.reshape(n_seg, n_t), axis=1)
        omega = seg_base + omega_ants

        c = np.zeros((J, n_seg), dtype=complex)
        for j in range(J):
            coef, flag = _ls_on_support(hs[j], ys[j], omega)
            c[j] = coef
            rank_deficient |= flag
            residuals[j] = ys[j] - hs[j][:, omega] @ coef
        residual_trace.append(np.linalg.norm(residuals, axis=1))
        energy_left = float(np.sum(np.abs(residuals) ** 2))
        if best is None or energy_left < best[0]:
            best = (energy_left, omega_ants, omega, c)

        if state_log is not None:
            state_log.append(GspState(
                t=t,
                support_prev=None if omega_prev is None else omega_prev.copy(),
                support=omega.copy(),
                correlation=corr,
                union_estimate=b,
                final_estimate=c.copy(),
                residuals=residuals.copy(),
            ))

        stable = omega_prev is not None and np.array_equal(omega, omega_prev)
        if stable or t >= max_iterations:
            break
        omega_prev = omega
        t += 1

    _, omega_ants, omega, c = best
    antennas = (omega_ants + 1).reshape(Q, K)
    points = _quantize(c, constellation).reshape(J, Q, K)
    return DetectionResult(
        antennas=antennas,
        point_indices=points,
        support=SupportSet(K=K, Q=Q, n_t=n_t, columns=omega),
        iterations=t,
        residual_norms=np.array(residual_trace),
        rank_deficient=rank_deficient,
        union_restricted=union_restricted,
    )


def _top_k(magnitudes, k):
    """Indices of the k largest magnitudes, lowest index first on ties."""
    order = np.argsort(-magnitudes, kind="stable")
    return order[:k]


def detect_sp_classical(y, h, sparsity, K, Q, n_t, constellation):
    """Classical subspace pursuit on a single block.

    Support candidates are the globally largest correlation entries with no
    per-segment structure; iteration rolls back and stops once the residual
    stops shrinking.  The recovered support is then mapped to SM decisions:
    in each segment the largest-magnitude coefficient wins, and segments
    the pursuit left empty fall back to the largest final correlation.
    """
    y = np.asarray(y, dtype=complex)
    h = np.asarray(h, dtype=complex)
    m, n = _validate_blocks([y], [h], K, Q, n_t)
    if sparsity > m:
        raise ValueError(f"sparsity {sparsity} exceeds measurement length {m}")

    rank_deficient = False
    corr = h.conj().T @ y
    support = np.sort(_top_k(np.abs(corr), sparsity))
    coef, flag = _ls_on_support(h, y, support)
    rank_deficient |= flag
    resid = y - h[:, support] @ coef
    trace = [np.linalg.norm(resid)]

    for _ in range(max(sparsity, 1)):
        corr = h.conj().T @ resid
        cand = _top_k(np.abs(corr), sparsity)
        union = np.union1d(support, cand)
        if union.size > m:
            keep = _top_k(np.abs(corr[union]), m)
            union = np.sort(union[keep])
        b, flag = _ls_on_support(h, y, union)
        rank_deficient |= flag
        new_support = np.sort(union[_top_k(np.abs(b), sparsity)])
        new_coef, flag = _ls_on_support(h, y, new_support)
        rank_deficient |= flag
        new_resid = y - h[:, new_support] @ new_coef
        if np.linalg.norm(new_resid) >= np.linalg.norm(resid):
            break
        support, coef, resid = new_support, new_coef, new_resid
        trace.append(np.linalg.norm(resid))

    final_corr = h.conj().T @ resid
    n_seg = K * Q
    seg_base = np.arange(n_seg) * n_t
    antennas = np.empty(n_seg, dtype=np.int64)
    rough = np.empty(n_seg, dtype=complex)
    seg_of = support // n_t
    for seg in range(n_seg):
        members = np.nonzero(seg_of == seg)[0]
        if members.size:
            win = members[np.argmax(np.abs(coef[members]))]
            antennas[seg] = support[win] - seg_base[seg] + 1
            rough[seg] = coef[win]
        else:
            offset = int(np.argmax(np.abs(final_corr[seg_base[seg]:seg_base[seg] + n_t])))
            antennas[seg] = offset + 1
            rough[seg] = 0.0

    antennas = antennas.reshape(Q, K)
    points = _quantize(rough, constellation).reshape(1, Q, K)
    return DetectionResult(
        antennas=antennas,
        point_indices=points,
        support=SupportSet.from_antennas(antennas, n_t),
        iterations=len(trace),
        residual_norms=np.array(trace).reshape(-1, 1),
        rank_deficient=rank_deficient,
    )


def mmse_estimate(y, h, noise_variance):
    """Regularized linear estimate h^H (h h^H + sigma^2 I)^{-1} y."""
    if noise_variance <= 0:
        raise ValueError("MMSE requires a positive noise variance")
    y = np.asarray(y, dtype=complex)
    h = np.asarray(h, dtype=complex)
    gram = h @ h.conj().T
    gram[np.diag_indices(h.shape[0])] += noise_variance
    return h.conj().T @ np.linalg.solve(gram, y)


def detect_mmse(y, h, noise_variance, K, Q, n_t, constellation):
    """Linear MMSE estimate followed by per-segment SM decisions.

    In each segment the largest-magnitude entry of the estimate selects the
    antenna (lowest index on ties) and is quantized to the nearest
    constellation point.
    """
    y = np.asarray(y, dtype=complex)
    h = np.asarray(h, dtype=complex)
    m, n = _validate_blocks([y], [h], K, Q, n_t)
    xhat = mmse_estimate(y, h, noise_variance)

    n_seg = K * Q
    per_seg = xhat.reshape(n_seg, n_t)
    offsets = np.argmax(np.abs(per_seg), axis=1)
    rough = per_seg[np.arange(n_seg), offsets]
    antennas = (offsets + 1).reshape(Q, K)
    points = _quantize(rough, constellation).reshape(1, Q, K)
    resid = np.linalg.norm(y - h @ xhat)
    return DetectionResult(
        antennas=antennas,
        point_indices=points,
        support=SupportSet.from_antennas(antennas, n_t),
        iterations=1,
        residual_norms=np.array([[resid]]),
    )


def ml_search_size(K, Q, n_t, L):
    """Number of per-block hypotheses the exhaustive detector enumerates."""
    return (n_t * L) ** (K * Q)


def detect_ml(ys, hs, K, Q, n_t, constellation, search_limit=10 ** 6):
    """Exhaustive minimum-distance detection over all SM hypotheses.

    Enumerates every assignment of one antenna and one constellation point
    per (user, slot); with J > 1 the antenna hypotheses are shared across
    blocks (matching the joint transmission) while points are optimized per
    block.  Rejected when the per-block search set exceeds ``search_limit``.
    """
    size = ml_search_size(K, Q, n_t, constellation.order)
    if size > search_limit:
        raise ValueError(
            f"ML search set size {size} exceeds the guard of {search_limit}"
        )
    ys = [np.asarray(y, dtype=complex) for y in ys]
    hs = [np.asarray(h, dtype=complex) for h in hs]
    _validate_blocks(ys, hs, K, Q, n_t)
    J = len(ys)
    n_seg = K * Q
    L = constellation.order
    seg_base = np.arange(n_seg) * n_t

    point_combos = np.array(
        list(itertools.product(range(L), repeat=n_seg)), dtype=np.int64
    )
    symbol_matrix = constellation.points[point_combos]  # (L**n_seg, n_seg)

    best_cost = np.inf
    best_antennas = None
    best_points = None
    for combo in itertools.product(range(n_t), repeat=n_seg):
        cols = seg_base + np.array(combo)
        cost = 0.0
        picks = np.empty(J, dtype=np.int64)
        for j in range(J):
            sub = hs[j][:, cols]
            best_j = np.inf
            for start in range(0, symbol_matrix.shape[0], _ML_CHUNK):
                chunk = symbol_matrix[start:start + _ML_CHUNK]
                resid = ys[j][None, :] - chunk @ sub.T
                costs = np.sum(np.abs(resid) ** 2, axis=1)
                idx = int(np.argmin(costs))
                if costs[idx] < best_j:
                    best_j = costs[idx]
                    picks[j] = start + idx
            cost += best_j
        if cost < best_cost:
            best_cost = cost
            best_antennas = np.array(combo) + 1
            best_points = point_combos[picks]

    antennas = best_antennas.reshape(Q, K)
    points = best_points.reshape(J, Q, K)
    return DetectionResult(
        antennas=antennas,
        point_indices=points,
        support=SupportSet.from_antennas(antennas, n_t),
        iterations=1,
        residual_norms=np.array([[np.sqrt(best_cost)]]),
    )


def detect_oracle_ls(ys, hs, true_support, constellation):
    """Genie-aided detection: least squares per block on the true support.

    Antenna decisions are taken from the provided support, so only the
    constellation decisions can err; this lower-bounds every detector's
    signal-constellation error rate.
    """
    ys = [np.asarray(y, dtype=complex) for y in ys]
    hs = [np.asarray(h, dtype=complex) for h in hs]
    K, Q, n_t = true_support.K, true_support.Q, true_support.n_t
    _validate_blocks(ys, hs, K, Q, n_t)
    J = len(ys)
    cols = true_support.columns

    rank_deficient = False
    c = np.empty((J, cols.size), dtype=complex)
    norms = np.empty(J)
    for j in range(J):
        coef, flag = _ls_on_support(hs[j], ys[j], cols)
        rank_deficient |= flag
        c[j] = coef
        norms[j] = np.linalg.norm(ys[j] - hs[j][:, cols] @ coef)

    points = _quantize(c, constellation).reshape(J, Q, K)
    return DetectionResult(
        antennas=true_support.antennas(),
        point_indices=points,
        support=true_support,
        iterations=1,
        residual_norms=norms.reshape(1, -1),
        rank_deficient=rank_deficient,
    )
