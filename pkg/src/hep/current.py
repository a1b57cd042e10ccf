"""Stationary currents: exact finite-size values and the current-density relation.

On T_L the TAHEP current is j+_{L,N} = w (N/L) Ztilde_{N,K-1} / Ztilde_{N,K}
with K = L - N.  In the thermodynamic limit it becomes w rho phi(1/rho - 1)
above the critical density and the straight line w rho u_c below it, where phi
inverts r(u) = u d/du ln F(u) and F(u) = sum_k u^k y_{k+1}.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSpaceError, DivergenceError, RangeError
from .measures import canonical_measure, zrp_log_partition_row, zrp_log_partition_table
from .potential import PotentialSpec, check_bounded_rates, rates_from_potential
from .series import DEFAULT_TOL, compare_ratio, estimate_limit_ratio, log_moments

PHI_TOL = 1e-12


# -- finite size -------------------------------------------------------------------

def _check_range(L: int, N: int) -> bool:
    """True if the current is an exact zero (empty, full or single-site torus)."""
    if L < 1 or N < 0 or N > L:
        raise DegenerateSpaceError(f"no HEP with N={N} particles on T_{L}")
    return N == 0 or N == L or L == 1


def stationary_current_finite(L: int, N: int, spec: PotentialSpec) -> float:
    """TAHEP stationary current j+_{L,N} on T_L."""
    if _check_range(L, N):
        return 0.0
    K = L - N
    row = zrp_log_partition_row(N, K, spec)
    return spec.w * (N / L) * math.exp(row[K - 1] - row[K])


def ahep_current(L: int, N: int, spec: PotentialSpec) -> float:
    """(r - l) j+_{L,N}."""
    return (spec.r - spec.l) * stationary_current_finite(L, N, spec)


def finite_current_grid(L_max: int, spec: PotentialSpec) -> np.ndarray:
    """j+_{L,N} for all 1 <= L <= L_max, 0 <= N <= L, as an (L_max+1, L_max+1) array."""
    table = zrp_log_partition_table(L_max, L_max, spec)
    out = np.zeros((L_max + 1, L_max + 1))
    for L in range(2, L_max + 1):
        N = np.arange(1, L)
        K = L - N
        out[L, 1:L] = spec.w * (N / L) * np.exp(table[N, K - 1] - table[N, K])
    return out


def current_by_enumeration(L: int, N: int, spec: PotentialSpec) -> float:
    """(1/L) sum_x sum_n w_n <h_{x,n}> under the exactly enumerated canonical measure."""
    if _check_range(L, N):
        return 0.0
    meas = canonical_measure(L, N, spec)
    gaps = (np.roll(meas.states, -1, axis=1) - meas.states - 1) % L
    w = rates_from_potential(spec, L - 1)
    return float(meas.probabilities @ w[gaps].sum(axis=1)) / L


# -- the series F and its log-derivative ------------------------------------------------

def _log_coef_F(spec: PotentialSpec):
    return lambda k: spec.log_y(np.asarray(k) + 1)


def series_F(u: float, spec: PotentialSpec, tol: float = DEFAULT_TOL) -> float:
    """F(u) = sum_{k>=0} u^k y_{k+1}."""
    if u <= 0:
        if u == 0:
            return float(spec.y(1))
        raise RangeError("F is evaluated on u >= 0")
    return math.exp(log_moments(_log_coef_F(spec), spec.tail, u, tol)[0])


def series_r(u: float, spec: PotentialSpec, tol: float = DEFAULT_TOL) -> float:
    """r(u) = u F'(u)/F(u); +inf where the first moment diverges."""
    if u == 0:
        return 0.0
    s0, s1 = log_moments(_log_coef_F(spec), spec.tail, u, tol)
    return math.exp(s1 - s0) if s1 < math.inf else math.inf


def radius_of_convergence(spec: PotentialSpec, depth: int | None = None) -> tuple[float, float]:
    """(exact u_c from the tail form, Richardson ratio-test estimate at finite depth)."""
    depth = spec.depth if depth is None else depth
    k = np.arange(2 * depth + 1)
    ly = spec.log_y(k + 1)
    g = np.concatenate([[np.nan], np.exp(ly[:-1] - ly[1:])[1:]])
    return spec.z_c, estimate_limit_ratio(g)


def r_at_critical(spec: PotentialSpec, tol: float = DEFAULT_TOL) -> float:
    """r(u_c), +inf when F or its derivative diverges there."""
    try:
        return series_r(spec.z_c, spec, tol)
    except DivergenceError:
        return math.inf


def critical_density(spec: PotentialSpec, tol: float = DEFAULT_TOL) -> float:
    """rho_c = 1 / (1 + r(u_c))."""
    return 1.0 / (1.0 + r_at_critical(spec, tol))


def phi(target: float, spec: PotentialSpec, tol: float = DEFAULT_TOL, xtol: float = PHI_TOL,
        r_c: float | None = None) -> float:
    """Inverse of the increasing map r on [0, u_c], by bisection.

    Each step only needs the sign of r(mid) - target, so the series is summed
    just far enough to settle it.
    """
    u_c = spec.z_c
    if target < 0:
        raise RangeError(f"r(u) >= 0, cannot invert target {target}")
    if target == 0:
        return 0.0
    r_c = r_at_critical(spec, tol) if r_c is None else r_c
    if target > r_c:
        raise RangeError(f"target r={target} exceeds r(u_c)={r_c} (u_c={u_c})")
    if target == r_c:
        return u_c
    lo, hi = 0.0, u_c
    while hi - lo > xtol * u_c:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if compare_ratio(_log_coef_F(spec), spec.tail, mid, target, tol) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True, eq=False)
class CurrentCurve:
    spec: PotentialSpec
    u_c: float
    u_c_estimate: float
    rho_c: float
    rho: np.ndarray
    j: np.ndarray
    u: np.ndarray
    branch: tuple[str, ...]

    def samples(self):
        return list(zip(self.rho.tolist(), self.j.tolist()))

    @property
    def plateau_slope(self) -> float:
        """w phi(1/rho_c - 1) = w u_c when rho_c > 0."""
        return self.spec.w * self.u_c if self.rho_c > 0 else float("nan")


def current_density_relation(spec: PotentialSpec, grid, tol: float = DEFAULT_TOL) -> CurrentCurve:
    """Thermodynamic current j+(rho) on a density grid in [0, 1]."""
    check_bounded_rates(spec)
    grid = np.asarray(grid, dtype=float)
    if np.any((grid < 0) | (grid > 1)):
        raise RangeError("densities must lie in [0, 1]")
    u_c, u_est = radius_of_convergence(spec)
    r_c = r_at_critical(spec, tol)
    rho_c = 1.0 / (1.0 + r_c)
    u_plateau = u_c
    j = np.empty_like(grid)
    u = np.empty_like(grid)
    branch = []
    for i, rho in enumerate(grid):
        if rho >= rho_c:
            branch.append("supercritical-density")
            if rho == 0:
                u[i] = u_c
            elif rho == 1:
                u[i] = 0.0
            else:
                u[i] = phi(1.0 / rho - 1.0, spec, tol, r_c=r_c)
        else:
            branch.append("linear-plateau")
            u[i] = u_plateau
        j[i] = spec.w * rho * u[i]
    return CurrentCurve(spec, u_c, u_est, rho_c, grid, j, u, tuple(branch))


def potential_digest(spec: PotentialSpec) -> str:
    blob = json.dumps(spec.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_curve_csv(path, curve: CurrentCurve) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# u_c={curve.u_c!r} rho_c={curve.rho_c!r} "
                 f"potential_digest={potential_digest(curve.spec)}\n")
        wr = csv.writer(fh)
        wr.writerow(["rho", "j", "branch", "u"])
        for rho, j, b, u in zip(curve.rho, curve.j, curve.branch, curve.u):
            wr.writerow([repr(float(rho)), repr(float(j)), b, repr(float(u))])
