"""Complete elliptic integral of the first kind K and its log-singularity bound.

K enters the in-plane potential of a razor-thin axisymmetric density via the
kernel argument xi = 2*sqrt(r*s)/(r+s), which tends to 1 (and K diverges
logarithmically) as the two radii coincide.  K is evaluated with the
arithmetic-geometric mean iteration, K = pi / (2*AGM(1, sqrt(1-xi^2))),
which converges quadratically.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError

__all__ = ["elliptic_k", "kbound_check"]



def elliptic_k(xi):
    """K(xi) = int_0^{pi/2} dphi / sqrt(1 - xi^2 sin^2 phi) for 0 <= xi < 1.

    Accepts scalars or arrays.  Raises on xi outside [0, 1); the coincident
    radius limit xi -> 1 must be handled by the caller (K diverges there).
    """
    x = np.asarray(xi, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InputError("elliptic_k: non-finite modulus")
    if np.any(x < 0.0) or np.any(x >= 1.0):
        raise InputError("elliptic_k: modulus must lie in [0, 1)")
    a = np.ones_like(x)
    # 1 - xi^2 factored to preserve precision for xi near 1
    b = np.sqrt((1.0 - x) * (1.0 + x))
    # quadratic convergence; 12 sweeps reach machine precision from any
    # admissible modulus and the iteration is stationary once a == b
    for _ in range(12):
        a, b = 0.5 * (a + b), np.sqrt(a * b)
    out = np.pi / (2.0 * a)
    if np.isscalar(xi) or np.ndim(xi) == 0:
        return float(out)
    return out


def kbound_check(xi_grid, C):
    """Check K(xi) <= C * (1 - ln(1 - xi)) over a grid of moduli.

    Returns a dict with the worst ratio, where it occurs, and a pass flag.
    """
    if C <= 0:
        raise InputError("kbound_check: C must be positive")
    xi = np.asarray(xi_grid, dtype=float)
    k = np.atleast_1d(elliptic_k(xi))
    denom = 1.0 - np.log1p(-np.atleast_1d(xi))
    ratio = k / denom
    imax = int(np.argmax(ratio))
    return {
        "max_ratio": float(ratio[imax]),
        "argmax_xi": float(np.atleast_1d(xi)[imax]),
        "C": float(C),
        "passes": bool(ratio[imax] <= C),
    }
