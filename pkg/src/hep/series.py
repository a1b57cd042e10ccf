"""Power series sum_m z^m a_m whose coefficient ratios follow a known tail.

The coefficients a_m are proportional to tau_m = prod_{k<=m} 1/g_k, so for
m >= tail.start the ratio a_{m+1}/a_m is 1/c (geometric tail) or
(m+1)/(m+1+b) (harmonic tail).  Geometric remainders and harmonic remainders at
z = 1 are summed in closed form; for a harmonic tail with z < 1 the head is
extended until the remainder is bracketed to within ``tol``.
"""
from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.special import logsumexp

from .errors import DivergenceError
from .potential import Tail

DEFAULT_TOL = 1e-14
MAX_TERMS = 1 << 25


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def moment_brackets(log_coef, tail: Tail, z: float, max_terms: int = MAX_TERMS):
    """Yield successively tighter log-brackets ((lo0, hi0), (lo1, hi1)) of
    S0 = sum z^m a_m and S1 = sum m z^m a_m, ending once they are exact or
    ``max_terms`` terms have been summed.

    ``log_coef`` maps an integer array m to log a_m.  A bracket (inf, inf)
    marks a divergent first moment.
    """
    if z < 0:
        raise ValueError("fugacity must be nonnegative")
    if z == 0:
        a0 = float(log_coef(np.array([0]))[0])
        yield (a0, a0), (-math.inf, -math.inf)
        return
    zc = tail.g_limit
    if z > zc:
        raise DivergenceError(f"series diverges at z={z} > z_c={zc}", z_c=zc)
    logz = math.log(z)
    M = max(tail.start, 1)

    def head(lo: int, hi: int):
        m = np.arange(lo, hi)
        lt = log_coef(m) + m * logz
        h0 = logsumexp(lt)
        h1 = logsumexp(lt[m > 0] + np.log(m[m > 0])) if hi > 1 else -math.inf
        return float(h0), float(h1)

    s0, s1 = head(0, M)
    a_M = float(log_coef(np.array([M]))[0])
    logt_M = a_M + M * logz

    if tail.kind == "geometric":
        if z >= tail.c:
            raise DivergenceError(
                f"series diverges at z={z}: geometric tail with z_c={tail.c}", z_c=tail.c)
        q = z / tail.c
        t0 = float(np.logaddexp(s0, logt_M - math.log1p(-q)))
        t1 = float(np.logaddexp(s1, logt_M + math.log(M / (1 - q) + q / (1 - q) ** 2)))
        yield (t0, t0), (t1, t1)
        return

    b = tail.b
    if z == 1.0:
        if b <= 1:
            raise DivergenceError(
                f"series diverges at z=z_c=1: harmonic tail g_k = 1 + b/k needs b > 1, got b={b}",
                z_c=1.0)
        t0 = float(np.logaddexp(s0, _harmonic_tail(M, b, 0, a_M)))
        t1 = float(np.logaddexp(s1, _harmonic_tail(M, b, 1, a_M)))
        yield (t0, t0), (t1, t1)
        return

    chunk = 4096
    while True:
        out = []
        for k, s in ((0, s0), (1, s1)):
            lo, hi = _tail_interval(M, b, z, logt_M, a_M, k)
            out.append((float(np.logaddexp(s, lo)), float(np.logaddexp(s, hi))))
        yield tuple(out)
        if M >= max_terms:
            return
        nxt = min(M + chunk, max_terms)
        c0, c1 = head(M, nxt)
        s0 = float(np.logaddexp(s0, c0))
        s1 = float(np.logaddexp(s1, c1))
        M = nxt
        a_M = float(log_coef(np.array([M]))[0])
        logt_M = a_M + M * logz
        chunk = min(chunk * 2, 1 << 20)


def _log_mid(lo: float, hi: float) -> tuple[float, float]:
    """(log midpoint, log relative half-width) of a log-bracket."""
    if hi == lo:
        return lo, -math.inf
    if hi == math.inf:
        return math.inf, math.inf
    mid = float(np.logaddexp(lo, hi)) - math.log(2)
    return mid, hi + math.log1p(-math.exp(lo - hi)) - math.log(2) - mid


def log_moments(log_coef, tail: Tail, z: float, tol: float = DEFAULT_TOL,
                max_terms: int = MAX_TERMS) -> tuple[float, float]:
    """Return (log S0, log S1) with S0 = sum z^m a_m and S1 = sum m z^m a_m.

    ``log_coef`` maps an integer array m to log a_m.  S1 may be +inf (returned
    as log S1 = inf) where S0 converges but the first moment does not.  Each
    remainder is estimated by the midpoint of its bracket and summation stops
    once both relative half-widths are below ``tol``.
    """
    logtol = math.log(tol)
    for (b0, b1) in moment_brackets(log_coef, tail, z, max_terms):
        m0, e0 = _log_mid(*b0)
        m1, e1 = _log_mid(*b1)
        if e0 <= logtol and e1 <= logtol:
            return m0, m1
    warnings.warn(
        f"series at z={z} not converged to tol={tol} after {max_terms} terms; "
        f"relative remainder bound {math.exp(max(e0, e1)):.3g}", RuntimeWarning)
    return m0, m1


def compare_ratio(log_coef, tail: Tail, z: float, target: float, tol: float = DEFAULT_TOL,
                  max_terms: int = MAX_TERMS) -> int:
    """Sign of S1/S0 - target, refining the series only until the sign is certain
    (or the ratio is pinned to relative ``tol``, when its midpoint decides)."""
    for (b0, b1) in moment_brackets(log_coef, tail, z, max_terms):
        if b1[0] == math.inf:
            return 1
        lo = b1[0] - b0[1]
        hi = b1[1] - b0[0]
        lt = math.log(target) if target > 0 else -math.inf
        if lo > lt:
            return 1
        if hi < lt:
            return -1
        if hi - lo <= tol:
            break
    mid = 0.5 * (lo + hi)
    return (mid > lt) - (mid < lt)


def _harmonic_tail(M: int, b: float, k: int, log_a_M: float) -> float:
    """log sum_{m>=M} m^k a_m at z = 1 for a harmonic tail; inf where it diverges.

    With D_m = Q(m)(m+b)a_m and a_{m+1}/a_m = (m+1)/(m+1+b), D_m - D_{m+1} =
    a_m [Q(m)(m+b) - Q(m+1)(m+1)], so choosing Q to make that bracket m^k
    telescopes the sum to D_M.
    """
    if b <= k + 1:
        return math.inf
    if k == 0:
        q = 1 / (b - 1)
    elif k == 1:
        q = M / (b - 2) + 1 / ((b - 2) * (b - 1))
    else:
        g = 1 / (b - 3)
        a = 3 * g / (b - 2)
        q = g * M * M + a * M + (g + a) / (b - 1)
    return log_a_M + math.log((M + b) * q)


def _tail_interval(M: int, b: float, z: float, logt_M: float, a_M: float, k: int):
    """(log lo, log hi) bracketing sum_{m>=M} m^k z^m a_m for a harmonic tail, 0 < z < 1.

    Upper bounds: the z = 1 closed form and a geometric majorant.  Lower bound:
    since 1 - z^m <= m (1 - z), the sum is at least T_k(1) - (1 - z) T_{k+1}(1).
    """
    lm = math.log(M) if k else 0.0
    r = (M + 1) / (M + 1 + b) if k == 0 else (M + 1) ** 2 / (M * (M + 1 + b))
    q = z * max(1.0, r)
    hi = logt_M + lm - _log(1 - q) if q < 1 else math.inf
    at_one = _harmonic_tail(M, b, k, a_M)
    hi = min(hi, at_one)
    lo = -math.inf
    nxt = _harmonic_tail(M, b, k + 1, a_M)
    if nxt < math.inf and at_one < math.inf:
        diff = math.log1p(-z) + nxt
        if diff < at_one:
            lo = at_one + math.log1p(-math.exp(diff - at_one))
    return min(lo, hi), hi


def estimate_limit_ratio(g: np.ndarray) -> float:
    """Ratio-test estimate of lim g_k with one Richardson step.

    Assumes g_k = c + a/k + O(1/k^2); then 2 g_{2k} - g_k = c + O(1/k^2).
    ``g`` is indexed from k = 0 (g[0] unused).
    """
    K = (len(g) - 1) // 2
    if K < 1:
        raise ValueError("need at least g_1 and g_2")
    return float(2 * g[2 * K] - g[K])
