"""Bit-to-SM-symbol mapping, signal constellations, and group framing.

An SM symbol carries information in two parts: the index of the single
active transmit antenna (natural-binary mapped from the leading bits) and
an L-ary constellation point (Gray-labeled) sent from that antenna.  A
transmission group stacks J consecutive CPSC blocks that share one antenna
decision per (user, slot); only the constellation points change from block
to block, which is what gives the aggregate signals their common support.

Bit strings are most-significant-bit-first.  Antenna indices are 1-based
throughout; constellation point indices and array axes are 0-based.
"""

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

SUPPORTED_ORDERS = (2, 4, 16, 64, 256)


def _int_log2(n, name):
    if n < 1 or (n & (n - 1)) != 0:
        raise ValueError(f"{name} must be a positive power of two, got {n}")
    return n.bit_length() - 1


def _as_bits(bits):
    """Normalize a bit payload ('0'/'1' string, separators allowed) or an
    integer sequence to a uint8 array."""
    if isinstance(bits, str):
        cleaned = bits.replace("|", "").replace("_", "").replace(" ", "")
        if cleaned.strip("01"):
            raise ValueError(f"bit string contains non-bit characters: {bits!r}")
        return np.frombuffer(cleaned.encode(), dtype=np.uint8) - ord("0")
    arr = np.asarray(bits)
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError("bit payload must contain only 0s and 1s")
    return arr.astype(np.uint8)


def _bits_to_int(bits):
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return value


def _gray_decode(g):
    b = 0
    while g:
        b ^= g
        g >>= 1
    return b


@dataclass(frozen=True)
class SignalConstellation:
    """Unit-average-energy constellation with per-point bit labels.

    ``points[i]`` is the symbol whose bit label is ``bit_labels[i]``, and the
    labels are simply the binary expansion of the index, so mapping bits to a
    point is direct integer indexing.
    """

    order: int
    points: np.ndarray
    bit_labels: tuple

    @property
    def bits_per_symbol(self):
        return self.order.bit_length() - 1


def _gray_pam_levels(bits):
    """PAM levels indexed by Gray code, most positive level at code 0."""
    n = 1 << bits
    levels = np.empty(n)
    for code in range(n):
        rank = _gray_decode(code)
        levels[code] = (n - 1) - 2 * rank
    return levels


@lru_cache(maxsize=None)
def build_constellation(order):
    """Build the L-ary constellation for L in {2, 4, 16, 64, 256}.

    BPSK is {+1, -1}; the square QAM orders use per-axis Gray labeling with
    the first half of each label selecting the I level and the second half
    the Q level.  Average symbol energy is normalized to 1.
    """
    if order not in SUPPORTED_ORDERS:
        raise ValueError(
            f"unsupported constellation order {order}; supported: {SUPPORTED_ORDERS}"
        )
    bits = _int_log2(order, "order")
    if order == 2:
        raw = np.array([1.0 + 0j, -1.0 + 0j])
    else:
        half = bits // 2
        axis = _gray_pam_levels(half)
        i_code, q_code = np.divmod(np.arange(order), 1 << half)
        raw = axis[i_code] + 1j * axis[q_code]
    points = raw / np.sqrt(np.mean(np.abs(raw) ** 2))
    points.setflags(write=False)
    labels = tuple(format(i, f"0{bits}b") for i in range(order))
    return SignalConstellation(order=order, points=points, bit_labels=labels)


@dataclass(frozen=True)
class SmSymbol:
    """One user's transmission in one slot: active antenna + point index."""

    antenna: int
    point_index: int


def sm_map(bits, n_t, constellation):
    """Map log2(n_t) + log2(L) bits to an SM symbol.

    The leading log2(n_t) bits give the active antenna as 1 + their
    natural-binary value; the remaining bits select the Gray-labeled point.
    """
    bits = _as_bits(bits)
    spatial_bits = _int_log2(n_t, "n_t")
    expected = spatial_bits + constellation.bits_per_symbol
    if bits.size != expected:
        raise ValueError(f"expected {expected} bits, got {bits.size}")
    antenna = 1 + _bits_to_int(bits[:spatial_bits])
    point_index = _bits_to_int(bits[spatial_bits:])
    return SmSymbol(antenna=antenna, point_index=point_index)


def sm_demap(symbol, n_t, constellation):
    """Exact inverse of sm_map; returns the bit string."""
    spatial_bits = _int_log2(n_t, "n_t")
    if not 1 <= symbol.antenna <= n_t:
        raise ValueError(f"antenna {symbol.antenna} out of range [1, {n_t}]")
    if not 0 <= symbol.point_index < constellation.order:
        raise ValueError(
            f"point index {symbol.point_index} out of range [0, {constellation.order})"
        )
    spatial = format(symbol.antenna - 1, f"0{spatial_bits}b") if spatial_bits else ""
    return spatial + constellation.bit_labels[symbol.point_index]


def payload_bit_count(K, Q, J, n_t, L):
    """Bits carried by one transmission group."""
    return K * Q * _int_log2(n_t, "n_t") + J * K * Q * _int_log2(L, "L")


@dataclass(frozen=True)
class GroupFrame:
    """K users x Q slots x J CPSC blocks of SM symbols with shared supports.

    ``antennas`` has shape (Q, K) with 1-based antenna indices shared by all
    J blocks; ``point_indices`` has shape (J, Q, K).  ``source_bits`` is the
    exact payload the frame encodes.
    """

    K: int
    Q: int
    J: int
    n_t: int
    antennas: np.ndarray
    point_indices: np.ndarray
    source_bits: np.ndarray

    def __post_init__(self):
        if self.antennas.shape != (self.Q, self.K):
            raise ValueError("antennas must have shape (Q, K)")
        if self.point_indices.shape != (self.J, self.Q, self.K):
            raise ValueError("point_indices must have shape (J, Q, K)")
        if self.antennas.min() < 1 or self.antennas.max() > self.n_t:
            raise ValueError("antenna index out of range")

    def symbol(self, j, q, k):
        """The SM symbol of block j, slot q, user k (0-based indices)."""
        return SmSymbol(
            antenna=int(self.antennas[q, k]),
            point_index=int(self.point_indices[j, q, k]),
        )


def assemble_group(bits, K, Q, J, n_t, constellation):
    """Frame a payload into a transmission group.

    Payload layout: first the spatial bits, one log2(n_t) chunk per (slot,
    user) pair with the slot index varying slowest; then the signal bits,
    one log2(L) chunk per (block, slot, user) with the block index slowest.
    The spatial chunks are consumed once and replicated across all J blocks.
    """
    bits = _as_bits(bits)
    spatial_bits = _int_log2(n_t, "n_t")
    point_bits = constellation.bits_per_symbol
    expected = payload_bit_count(K, Q, J, n_t, constellation.order)
    if bits.size != expected:
        raise ValueError(f"payload must have {expected} bits, got {bits.size}")

    n_spatial = K * Q * spatial_bits
    if spatial_bits:
        weights = 1 << np.arange(spatial_bits - 1, -1, -1)
        antennas = 1 + bits[:n_spatial].reshape(Q, K, spatial_bits) @ weights
    else:
        antennas = np.ones((Q, K), dtype=np.int64)
    weights = 1 << np.arange(point_bits - 1, -1, -1)
    point_indices = bits[n_spatial:].reshape(J, Q, K, point_bits) @ weights

    return GroupFrame(
        K=K, Q=Q, J=J, n_t=n_t,
        antennas=antennas.astype(np.int64),
        point_indices=point_indices.astype(np.int64),
        source_bits=bits,
    )


def aggregate_blocks(frame, constellation):
    """Stack a frame into its J aggregate SM vectors.

    Returns a (J, K*n_t*Q) complex array; within each block, slot q occupies
    entries [q*K*n_t, (q+1)*K*n_t) and user k the n_t-wide segment inside it,
    matching the column layout of the effective channel matrix.  Each segment
    has exactly one nonzero entry.
    """
    J, Q, K, n_t = frame.J, frame.Q, frame.K, frame.n_t
    x = np.zeros((J, Q, K, n_t), dtype=complex)
    j_idx, q_idx, k_idx = np.indices((J, Q, K))
    x[j_idx, q_idx, k_idx, frame.antennas[None, :, :] - 1] = (
        constellation.points[frame.point_indices]
    )
    return x.reshape(J, Q * K * n_t)


def throughput_bpcu(K, n_t, L, J):
    """Per-user and overall uplink throughput in bits per channel use.

    Spatial bits are sent once per group of J blocks, so they amortize as
    log2(n_t)/J; signal bits contribute log2(L) in every block.
    """
    spatial_bits = _int_log2(n_t, "n_t")
    point_bits = _int_log2(L, "L")
    if J < 1:
        raise ValueError("J must be >= 1")
    per_user = Fraction(point_bits) + Fraction(spatial_bits, J)
    return per_user, K * per_user
