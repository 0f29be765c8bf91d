"""Complex linear-algebra kernels used by the detectors.

Least squares is computed through a QR factorization rather than normal
equations: union supports in the greedy detectors can reach 2*K*Q columns,
where conditioning of the explicit Gram matrix would be the binding
constraint.  Rank deficiency is reported as an error instead of silently
returning a minimum-norm solution, because in the detectors it signals a
degenerate support that callers resolve with their own tie-break rules.
"""

import numpy as np
from scipy.linalg import solve_triangular

# Fixed module tolerances (test-pinned).
RANK_TOL = 1e-10       # smallest/largest |R_ii| ratio below this -> deficient
HERMITIAN_TOL = 1e-12  # max elementwise asymmetry allowed in hermitian_sqrt
PSD_CLAMP = 1e-12      # eigenvalues above -PSD_CLAMP*scale are clamped to 0


class RankDeficiencyError(np.linalg.LinAlgError):
    """Raised when a least-squares matrix is numerically rank deficient."""


def _validate_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite entries")
    return a


def ls_solve(a, b):
    """Solve min_x ||b - a x||_2 for a tall, full-column-rank complex matrix.

    Parameters
    ----------
    a : (m, n) array_like, m >= n
    b : (m,) array_like

    Returns
    -------
    x : (n,) ndarray such that a^H (b - a x) ~ 0.

    Raises
    ------
    RankDeficiencyError
        If the smallest QR pivot magnitude falls below RANK_TOL times the
        largest.  Callers decide the fallback.
    """
    a = _validate_matrix(a, "a")
    b = np.asarray(b, dtype=complex)
    m, n = a.shape
    if b.shape != (m,):
        raise ValueError(f"b must have shape ({m},), got {b.shape}")
    if m < n:
        raise ValueError(f"system is under-determined: {m} rows < {n} columns")
    if n == 0:
        return np.zeros(0, dtype=complex)

    q, r = np.linalg.qr(a)
    diag = np.abs(np.diag(r))
    if diag.min() < RANK_TOL * max(diag.max(), RANK_TOL):
        raise RankDeficiencyError(
            f"rank-deficient least squares: |R| diagonal range "
            f"[{diag.min():.3e}, {diag.max():.3e}]"
        )
    return solve_triangular(r, q.conj().T @ b, lower=False)


def hermitian_sqrt(r):
    """Hermitian PSD square root: returns Hermitian s with s @ s^H = r.

    Computed by eigendecomposition so that the factor is itself Hermitian
    (a Cholesky factor would not be).  Eigenvalues within -PSD_CLAMP of zero
    are clamped to zero; anything more negative is rejected.
    """
    r = _validate_matrix(r, "r")
    n, n2 = r.shape
    if n != n2:
        raise ValueError(f"matrix must be square, got shape {r.shape}")
    scale = max(1.0, float(np.abs(r).max()))
    if np.abs(r - r.conj().T).max() > HERMITIAN_TOL * scale:
        raise ValueError("matrix is not Hermitian within tolerance")

    w, v = np.linalg.eigh(r)
    if w.min() < -PSD_CLAMP * scale:
        raise ValueError(f"matrix is not PSD: smallest eigenvalue {w.min():.3e}")
    w = np.maximum(w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T
