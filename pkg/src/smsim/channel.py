"""Correlated multipath Rayleigh channel, receive-AE selection, and the
post-CP circular-convolution link.

The channel between each user and the base station is a P-tap Rayleigh
fading channel with Kronecker (exponential) correlation at both ends and a
uniform power-delay profile: each tap is scaled by 1/sqrt(P) so the total
average power per transmit/receive element pair is 1, which keeps the SNR
calibration closed-form.  The base station observes only the M_RF antenna
rows picked by the AE-selection scheme, and cyclic-prefix transmission
turns the multipath into a circular convolution over the Q slots of a
block, equivalently a block-circulant channel matrix.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .numerics import hermitian_sqrt

AE_SCHEMES = ("direct", "continuous", "random")


def cyclic_index(x, y):
    """Wrap an integer into [1, y]: the remainder of x modulo y, with a
    zero remainder mapped to y itself."""
    if y <= 0:
        raise ValueError(f"modulus must be a positive integer, got {y}")
    r = x % y
    return r if r != 0 else y


def exp_correlation_matrix(n, rho):
    """n x n exponential correlation matrix with entries rho^|m - n|."""
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"correlation coefficient must be in [0, 1), got {rho}")
    idx = np.arange(n)
    return rho ** np.abs(idx[:, None] - idx[None, :]).astype(float)


@lru_cache(maxsize=None)
def _correlation_sqrt(n, rho):
    return hermitian_sqrt(exp_correlation_matrix(n, rho))


@dataclass(frozen=True)
class CorrelationSpec:
    """Exponential correlation coefficients at the BS and user sides."""

    rho_bs: float = 0.0
    rho_us: float = 0.0

    def __post_init__(self):
        for name, rho in (("rho_bs", self.rho_bs), ("rho_us", self.rho_us)):
            if not 0.0 <= rho < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {rho}")


@dataclass(frozen=True)
class MultipathChannel:
    """Per-user, per-tap channel matrices; ``taps`` has shape (K, P, M, n_t)."""

    K: int
    M: int
    n_t: int
    P: int
    taps: np.ndarray


def generate_channel(K, M, n_t, P, spec, rng):
    """Draw one multipath channel realization.

    Each tap is (1/sqrt(P)) * R_bs^(1/2) G R_us^(1/2) with G having i.i.d.
    zero-mean unit-variance complex Gaussian entries; taps are independent
    across users, delays, and calls.
    """
    if min(K, M, n_t, P) < 1:
        raise ValueError("all channel dimensions must be positive")
    g = rng.standard_normal((K, P, M, n_t)) + 1j * rng.standard_normal((K, P, M, n_t))
    g *= np.sqrt(0.5)
    r_bs = _correlation_sqrt(M, spec.rho_bs)
    r_us = _correlation_sqrt(n_t, spec.rho_us)
    taps = (r_bs @ g @ r_us) / np.sqrt(P)
    return MultipathChannel(K=K, M=M, n_t=n_t, P=P, taps=taps)


@dataclass(frozen=True)
class AESelection:
    """The M_RF receive antennas observed by the BS, as 1-based indices."""

    theta: np.ndarray
    scheme: str
    phi: int

    def __post_init__(self):
        if len(np.unique(self.theta)) != len(self.theta):
            raise ValueError("selected antenna indices must be distinct")


def select_aes(M, M_RF, scheme, phi=1, rng=None):
    """Choose the observed receive antennas.

    direct      evenly strided indices {phi + m*floor(M/M_RF)}, maximizing
                the minimum spacing on a uniform linear array;
                requires 1 <= phi <= floor(M/M_RF) - 1
    continuous  the contiguous run {phi, ..., phi + M_RF - 1};
                requires 1 <= phi <= M - M_RF + 1
    random      M_RF distinct indices drawn uniformly (rng required)
    """
    if not 1 <= M_RF <= M:
        raise ValueError(f"need 1 <= M_RF <= M, got M_RF={M_RF}, M={M}")
    if scheme == "direct":
        stride = M // M_RF
        if not 1 <= phi <= stride - 1:
            raise ValueError(
                f"direct selection needs 1 <= phi <= {stride - 1}, got phi={phi}"
            )
        theta = phi + stride * np.arange(M_RF)
    elif scheme == "continuous":
        if not 1 <= phi <= M - M_RF + 1:
            raise ValueError(
                f"continuous selection needs 1 <= phi <= {M - M_RF + 1}, got phi={phi}"
            )
        theta = phi + np.arange(M_RF)
    elif scheme == "random":
        if rng is None:
            raise ValueError("random selection requires a random generator")
        theta = np.sort(rng.choice(M, size=M_RF, replace=False)) + 1
        phi = 0
    else:
        raise ValueError(f"unknown AE-selection scheme {scheme!r}; use {AE_SCHEMES}")
    return AESelection(theta=theta.astype(np.int64), scheme=scheme, phi=phi)


@dataclass(frozen=True)
class EffectiveChannel:
    """Row-selected channel for one CPSC block.

    ``taps`` has shape (P, M_RF, K*n_t); tap p stacks the K users' selected
    rows side by side, user k occupying columns [k*n_t, (k+1)*n_t).
    """

    K: int
    n_t: int
    M_RF: int
    P: int
    taps: np.ndarray


def effective_channel(channel, selection):
    """Restrict a multipath channel to the selected receive-antenna rows."""
    rows = np.asarray(selection.theta) - 1
    picked = channel.taps[:, :, rows, :]            # (K, P, M_RF, n_t)
    taps = picked.transpose(1, 2, 0, 3).reshape(
        channel.P, len(rows), channel.K * channel.n_t
    )
    return EffectiveChannel(
        K=channel.K, n_t=channel.n_t, M_RF=len(rows), P=channel.P, taps=taps.copy()
    )


@lru_cache(maxsize=None)
def _circular_source_slots(Q, P):
    """0-based source-slot index per (delay, output slot) for the circular
    convolution, derived from the 1-based wrap convention."""
    src = np.empty((P, Q), dtype=np.int64)
    for p in range(P):
        for q in range(1, Q + 1):
            src[p, q - 1] = cyclic_index(q - p, Q) - 1
    return src


def apply_cpsc_channel(eff, x, noise_variance, rng=None):
    """Propagate one block's aggregate SM vector through the channel.

    ``x`` stacks the Q slot vectors (length K*n_t each).  The output slot q
    collects sum_p taps[p] @ x[slot wrapped(q - p)] plus complex Gaussian
    noise of variance ``noise_variance`` per sample (half per real
    dimension); the result stacks the Q received slot vectors.
    """
    if noise_variance < 0:
        raise ValueError("noise variance must be non-negative")
    n_cols = eff.K * eff.n_t
    x = np.asarray(x, dtype=complex)
    if x.ndim != 1 or x.size % n_cols:
        raise ValueError(
            f"aggregate vector length {x.size} is not a multiple of K*n_t={n_cols}"
        )
    Q = x.size // n_cols
    if eff.P > Q:
        raise ValueError(f"delay spread P={eff.P} exceeds block length Q={Q}")

    slots = x.reshape(Q, n_cols)
    src = _circular_source_slots(Q, eff.P)
    y = np.zeros((Q, eff.M_RF), dtype=complex)
    for p in range(eff.P):
        y += slots[src[p]] @ eff.taps[p].T
    if noise_variance > 0:
        if rng is None:
            raise ValueError("noise_variance > 0 requires a random generator")
        w = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
        y += np.sqrt(noise_variance / 2.0) * w
    return y.reshape(-1)


def block_circulant_matrix(eff, Q):
    """Materialize the full block-circulant channel matrix.

    Returns the (M_RF*Q, K*n_t*Q) matrix whose block row q, block column q'
    holds tap (q - q') mod Q when that delay is within the spread, so that
    multiplying the stacked aggregate vector reproduces apply_cpsc_channel
    without noise.  This is also the sensing matrix the detectors work on.
    """
    if eff.P > Q:
        raise ValueError(f"delay spread P={eff.P} exceeds block length Q={Q}")
    m, n = eff.M_RF, eff.K * eff.n_t
    h = np.zeros((Q * m, Q * n), dtype=complex)
    for p in range(eff.P):
        for q in range(Q):
            q_src = (q - p) % Q
            h[q * m:(q + 1) * m, q_src * n:(q_src + 1) * n] = eff.taps[p]
    return h


def calibrate_noise(snr_db, K):
    """Noise variance per complex sample hitting a target receive SNR.

    With a unit-energy constellation and unit per-link channel power the
    expected received signal energy is M_RF*Q*K against noise energy
    M_RF*Q*sigma_w^2, so sigma_w^2 = K / 10^(snr_db/10).
    """
    return K / 10.0 ** (snr_db / 10.0)
