"""Headway measures on the torus and the zero-range measures behind them.

Partition functions go through the ZRP identity

    Z^can_{L,N} = (L/N) y_1^N Ztilde^can_{N, L-N},

where Ztilde^can_{N,K} sums prod tau_{n_i} over the ways of putting K empty
sites into N headways.  Ztilde is built by a log-domain convolution DP.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .errors import DivergenceError, InvalidConfigurationError
from .lattice import (CoordinateConfiguration, TorusConfiguration, canonical_states,
                      coords_from_occupation)
from .potential import PotentialSpec
from .series import DEFAULT_TOL, log_moments

_ROW_BLOCK = 512


@dataclass(frozen=True, eq=False)
class MeasureTable:
    """An exactly enumerated measure.  ``space`` is "canonical", "grand_canonical"
    or "zrp_canonical"; ``params`` holds (L, N), (L, z) or (N, K)."""

    space: str
    params: dict
    log_weights: np.ndarray
    log_partition: float
    states: np.ndarray | None = None

    @property
    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_weights - self.log_partition)

    def __len__(self) -> int:
        return len(self.log_weights)


# -- log-domain convolution --------------------------------------------------

def log_convolve(a: np.ndarray, b: np.ndarray, K: int) -> np.ndarray:
    """c_k = log sum_{m<=k} exp(a_m + b_{k-m}) for k = 0..K."""
    a = np.asarray(a, dtype=float)[: K + 1]
    b = np.asarray(b, dtype=float)[: K + 1]
    out = np.empty(K + 1)
    j = np.arange(K + 1)
    for lo in range(0, K + 1, _ROW_BLOCK):
        k = np.arange(lo, min(lo + _ROW_BLOCK, K + 1))
        d = k[:, None] - j[None, :]
        valid = (d >= 0) & (j[None, :] < len(a)) & (d < len(b))
        terms = np.full(d.shape, -np.inf)
        jj = np.broadcast_to(j, d.shape)[valid]
        terms[valid] = a[jj] + b[d[valid]]
        out[lo: lo + len(k)] = logsumexp(terms, axis=1)
    return out


def _delta_row(K: int) -> np.ndarray:
    row = np.full(K + 1, -np.inf)
    row[0] = 0.0
    return row


@lru_cache(maxsize=32)
def zrp_log_partition_table(n_max: int, k_max: int, spec: PotentialSpec) -> np.ndarray:
    """log Ztilde^can_{n,k} for 0 <= n <= n_max, 0 <= k <= k_max.

    Row 0 is the empty lattice (1 at k = 0).  Read-only, cached.
    """
    logtau = spec.log_tau(np.arange(k_max + 1))
    table = np.empty((n_max + 1, k_max + 1))
    table[0] = _delta_row(k_max)
    for n in range(1, n_max + 1):
        table[n] = log_convolve(table[n - 1], logtau, k_max)
    table.setflags(write=False)
    return table


@lru_cache(maxsize=64)
def zrp_log_partition_row(N: int, K: int, spec: PotentialSpec) -> np.ndarray:
    """log Ztilde^can_{N,k} for k = 0..K, by binary powering of the convolution."""
    if N < 0 or K < 0:
        raise InvalidConfigurationError("need N >= 0 and K >= 0")
    result = _delta_row(K)
    base = spec.log_tau(np.arange(K + 1))
    n = N
    while n:
        if n & 1:
            result = log_convolve(result, base, K)
        n >>= 1
        if n:
            base = log_convolve(base, base, K)
    result.setflags(write=False)
    return result


def zrp_canonical_partition(N: int, K: int, spec: PotentialSpec) -> float:
    """log Ztilde^can_{N,K}: N sites, K particles."""
    if N < 1 or K < 0:
        raise InvalidConfigurationError(f"need N >= 1 and K >= 0, got N={N}, K={K}")
    return float(zrp_log_partition_row(N, K, spec)[K])


# -- headway measures on the torus -------------------------------------------

def _as_coords(cfg) -> CoordinateConfiguration:
    if isinstance(cfg, TorusConfiguration):
        return coords_from_occupation(cfg)
    if cfg.L is None:
        raise InvalidConfigurationError("torus measures need a torus configuration")
    return cfg


def _headway_matrix(states: np.ndarray, L: int) -> np.ndarray:
    nxt = np.roll(states, -1, axis=1)
    return (nxt - states - 1) % L


def boltzmann_weight(cfg, spec: PotentialSpec) -> float:
    """log of prod_i y_{n_i + 1}; 0 for the empty lattice."""
    c = _as_coords(cfg)
    if c.N == 0:
        return 0.0
    x = np.asarray(c.positions)
    n = _headway_matrix(x[None, :], c.L)[0]
    return float(np.sum(spec.log_y(n + 1)))


def canonical_partition(L: int, N: int, spec: PotentialSpec) -> float:
    """log Z^can_{L,N} via the ZRP identity."""
    if not 0 <= N <= L:
        raise InvalidConfigurationError(f"need 0 <= N <= L, got L={L}, N={N}")
    if N == 0:
        return 0.0
    ly1 = float(spec.log_y(1))
    return math.log(L / N) + N * ly1 + zrp_canonical_partition(N, L - N, spec)


def canonical_measure(L: int, N: int, spec: PotentialSpec) -> MeasureTable:
    """Enumerate the canonical headway measure over all C(L,N) states (lexicographic)."""
    if not 0 <= N <= L:
        raise InvalidConfigurationError(f"need 0 <= N <= L, got L={L}, N={N}")
    states = canonical_states(L, N)
    if N == 0:
        lw = np.zeros(1)
    else:
        lw = spec.log_y(_headway_matrix(states, L) + 1).sum(axis=1)
    return MeasureTable("canonical", {"L": L, "N": N}, lw, float(logsumexp(lw)), states)


def canonical_probability(cfg, spec: PotentialSpec) -> float:
    c = _as_coords(cfg)
    return math.exp(boltzmann_weight(c, spec) - canonical_partition(c.L, c.N, spec))


def canonical_partition_all(L: int, spec: PotentialSpec) -> np.ndarray:
    """log Z^can_{L,N} for N = 0..L from a single DP table."""
    table = zrp_log_partition_table(L, L, spec)
    out = np.empty(L + 1)
    out[0] = 0.0
    ly1 = float(spec.log_y(1))
    for N in range(1, L + 1):
        out[N] = math.log(L / N) + N * ly1 + table[N, L - N]
    return out


def grand_canonical_weights(L: int, z: float, spec: PotentialSpec) -> np.ndarray:
    """gamma_N = z^N Z^can_{L,N} / Z^gc for N = 0..L."""
    lg = _gc_log_terms(L, z, spec)
    return np.exp(lg - logsumexp(lg))


def _gc_log_terms(L: int, z: float, spec: PotentialSpec) -> np.ndarray:
    if z < 0:
        raise InvalidConfigurationError("fugacity must be nonnegative")
    lz = np.log(z) if z > 0 else -np.inf
    N = np.arange(L + 1)
    with np.errstate(invalid="ignore"):
        terms = np.where(N == 0, 0.0, N * lz) + canonical_partition_all(L, spec)
    return terms


def grand_canonical_partition(L: int, z: float, spec: PotentialSpec) -> float:
    """log sum_N z^N Z^can_{L,N}."""
    return float(logsumexp(_gc_log_terms(L, z, spec)))


def grand_canonical_probability(cfg, z: float, spec: PotentialSpec) -> float:
    c = _as_coords(cfg)
    lz = c.N * math.log(z) if c.N else 0.0
    return math.exp(lz + boltzmann_weight(c, spec) - grand_canonical_partition(c.L, z, spec))


def grand_canonical_measure(L: int, z: float, spec: PotentialSpec) -> MeasureTable:
    """Enumerate all 2^L states, ordered by particle number then lexicographically.

    ``states`` is an (2^L, L) occupation matrix.
    """
    blocks_lw, blocks_occ = [], []
    lz = math.log(z) if z > 0 else -math.inf
    for N in range(L + 1):
        can = canonical_measure(L, N, spec)
        occ = np.zeros((len(can), L), dtype=np.int8)
        if N:
            np.put_along_axis(occ, can.states, 1, axis=1)
        blocks_occ.append(occ)
        blocks_lw.append(can.log_weights + (N * lz if N else 0.0))
    lw = np.concatenate(blocks_lw)
    return MeasureTable("grand_canonical", {"L": L, "z": z}, lw, float(logsumexp(lw)),
                        np.concatenate(blocks_occ))


# -- zero-range measures -------------------------------------------------------

def zrp_canonical_measure(N: int, K: int, spec: PotentialSpec) -> MeasureTable:
    """Enumerate the ZRP canonical measure on N sites with K particles."""
    states = _compositions(N, K)
    lw = spec.log_tau(states).sum(axis=1)
    return MeasureTable("zrp_canonical", {"N": N, "K": K}, lw, float(logsumexp(lw)), states)


def _compositions(N: int, K: int) -> np.ndarray:
    """All (k_0..k_{N-1}) with sum K, via stars and bars."""
    rows = []
    for bars in itertools.combinations(range(N + K - 1), N - 1):
        edges = (-1,) + bars + (N + K - 1,)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(N)])
    return np.asarray(rows, dtype=np.int64).reshape(-1, N)


def zrp_canonical_marginal(N: int, K: int, values, spec: PotentialSpec) -> float:
    """Probability that m given sites hold ``values`` under the ZRP canonical measure."""
    values = np.asarray(values, dtype=np.int64)
    m = len(values)
    if m > N or np.any(values < 0):
        raise InvalidConfigurationError("need at most N nonnegative values")
    s = int(values.sum())
    if s > K:
        return 0.0
    rest = 0.0 if m == N and s == K else (-math.inf if m == N else
                                           float(zrp_log_partition_row(N - m, K, spec)[K - s]))
    lp = float(spec.log_tau(values).sum()) + rest - zrp_canonical_partition(N, K, spec)
    return math.exp(lp)


def zrp_one_site_marginal(N: int, K: int, spec: PotentialSpec) -> np.ndarray:
    """P(k_0 = k) for k = 0..K under the ZRP canonical measure."""
    rest = zrp_log_partition_row(N - 1, K, spec)[::-1]
    lp = spec.log_tau(np.arange(K + 1)) + rest - zrp_canonical_partition(N, K, spec)
    return np.exp(lp)


def zrp_log_moments(z: float, spec: PotentialSpec, tol: float = DEFAULT_TOL):
    return log_moments(spec.log_tau, spec.tail, z, tol)


def zrp_psi(z: float, spec: PotentialSpec, tol: float = DEFAULT_TOL) -> float:
    """Psi(z) = sum_m z^m tau_m."""
    return math.exp(zrp_log_moments(z, spec, tol)[0])


def zrp_nu(z: float, k, spec: PotentialSpec, tol: float = DEFAULT_TOL):
    """One-site grand-canonical marginal nu_z(k) = z^k tau_k / Psi(z)."""
    k = np.asarray(k, dtype=np.int64)
    lpsi = zrp_log_moments(z, spec, tol)[0]
    lz = math.log(z) if z > 0 else -np.inf
    with np.errstate(invalid="ignore"):
        lzk = np.where(k == 0, 0.0, k * lz)
    out = np.exp(lzk + spec.log_tau(k) - lpsi)
    return out[()] if out.ndim == 0 else out


def zrp_density(z: float, spec: PotentialSpec, tol: float = DEFAULT_TOL) -> float:
    """rho(z) = sum_k k z^k tau_k / Psi(z); +inf at z_c if the mean diverges."""
    if z == 0:
        return 0.0
    s0, s1 = zrp_log_moments(z, spec, tol)
    return math.exp(s1 - s0) if s1 < math.inf else math.inf


def zrp_critical_density(spec: PotentialSpec, tol: float = DEFAULT_TOL) -> float:
    """rho_c = rho(z_c), or +inf when Psi or its mean diverges at z_c."""
    try:
        return zrp_density(spec.z_c, spec, tol)
    except DivergenceError:
        return math.inf


def zrp_fugacity(rho: float, spec: PotentialSpec, tol: float = DEFAULT_TOL,
                 xtol: float = 1e-14) -> float:
    """Inverse of rho(z) on [0, rho_c); z_c on the plateau rho >= rho_c."""
    if rho < 0:
        raise InvalidConfigurationError("density must be nonnegative")
    if rho == 0:
        return 0.0
    zc = spec.z_c
    if rho >= zrp_critical_density(spec, tol):
        return zc
    # rho(z) is increasing; bracket below z_c
    hi = zc * (1 - 1e-3)
    while zrp_density(hi, spec, tol) < rho:
        hi = zc - (zc - hi) * 1e-2
        if zc - hi <= zc * 1e-15:
            return zc
    return brentq(lambda z: zrp_density(z, spec, tol) - rho, 0.0, hi, xtol=xtol * zc,
                  rtol=4 * np.finfo(float).eps)


@dataclass
class ZrpEnsembleData:
    spec: PotentialSpec
    tol: float = DEFAULT_TOL
    z_c: float = field(init=False)
    rho_c: float = field(init=False)

    def __post_init__(self):
        self.z_c = self.spec.z_c
        self.rho_c = zrp_critical_density(self.spec, self.tol)

    def tau(self, m) -> np.ndarray:
        return np.exp(self.spec.log_tau(m))

    def psi(self, z: float) -> float:
        return zrp_psi(z, self.spec, self.tol)

    def nu(self, z: float, k):
        return zrp_nu(z, k, self.spec, self.tol)

    def rho_of_z(self, z: float) -> float:
        return zrp_density(z, self.spec, self.tol)

    def z_of_rho(self, rho: float) -> float:
        return zrp_fugacity(rho, self.spec, self.tol)


# -- exact sampling ------------------------------------------------------------

def sample_canonical(L: int, N: int, spec: PotentialSpec, rng: np.random.Generator
                     ) -> CoordinateConfiguration:
    """Exact draw from the canonical headway measure on T_L.

    Headways follow the ZRP canonical law on N sites with L-N particles
    (sequentially from the DP table); the first particle is then placed
    uniformly, which supplies the L/N factor in Z^can.
    """
    if not 0 <= N <= L:
        raise InvalidConfigurationError(f"need 0 <= N <= L, got L={L}, N={N}")
    if N == 0:
        return CoordinateConfiguration((), L)
    K = L - N
    table = zrp_log_partition_table(N, K, spec)
    logtau = spec.log_tau(np.arange(K + 1))
    gaps = np.empty(N, dtype=np.int64)
    left = K
    for i in range(N):
        sites = N - i
        k = np.arange(left + 1)
        lp = logtau[k] + table[sites - 1, left - k] - table[sites, left]
        p = np.exp(lp)
        gaps[i] = rng.choice(left + 1, p=p / p.sum())
        left -= gaps[i]
    start = int(rng.integers(L))
    pos = start + np.concatenate([[0], np.cumsum(gaps[:-1] + 1)])
    return CoordinateConfiguration(tuple(sorted(int(v) for v in pos % L)), L)


# -- CSV emitters ---------------------------------------------------------------

def write_partition_csv(path, L_values, spec: PotentialSpec) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["L", "N", "logZ"])
        for L in L_values:
            for N, lz in enumerate(canonical_partition_all(L, spec)):
                wr.writerow([L, N, repr(float(lz))])


def write_marginal_csv(path, k: np.ndarray, nu: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["k", "nu"])
        for kk, p in zip(k, nu):
            wr.writerow([int(kk), repr(float(p))])
