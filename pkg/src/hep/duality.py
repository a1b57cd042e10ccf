"""Reverse duality between the TAHEP on Z and a single leftward random walk.

A domain measure pins the leftmost particle at x* and draws the N-1 gaps
independently from p(n) = tau_n / Z, tau_n = prod_{k<=n} 1/g_k.  Under the
TAHEP (rightmost particle at rate w) such a measure stays a mixture of domain
measures whose pin performs a Poisson walk of rate w.  This module checks the
matrix identity R Q = Qtilde^T R exactly on a finite window and the resulting
random-walk law by Monte Carlo.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .errors import DivergenceError, InvalidConfigurationError, RangeError
from .generator import build_tahep_line_generator
from .lattice import CoordinateConfiguration, canonical_states
from .potential import PotentialSpec
from .series import DEFAULT_TOL, log_moments
from .simulator import replica_rng, simulate_line_batch

TABLE_TAIL = 1e-14
TABLE_CAP = 1 << 20
BATCH = 25_000


def duality_partition(spec: PotentialSpec, tol: float = DEFAULT_TOL) -> float:
    """log Z with Z = sum_{n>=0} prod_{k<=n} 1/g_k."""
    tail = spec.tail
    try:
        return log_moments(spec.log_tau, tail, 1.0, tol)[0]
    except DivergenceError as exc:
        if tail.kind == "harmonic":
            msg = f"domain partition function diverges: g_k = 1 + b/k needs b > 1, got b={tail.b}"
        else:
            msg = (f"domain partition function diverges: geometric tail g_k -> {tail.c} "
                   f"needs lim g_k > 1")
        raise DivergenceError(msg, z_c=exc.z_c) from exc


@dataclass(frozen=True, eq=False)
class DomainMeasure:
    spec: PotentialSpec
    x_star: int = 0
    N: int = 1
    log_Z: float = field(init=False)
    gap_cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.N < 1:
            raise InvalidConfigurationError("a domain needs at least one particle")
        object.__setattr__(self, "log_Z", duality_partition(self.spec))
        M = max(self.spec.tail.start, 64)
        while self.log_survival(M) > math.log(TABLE_TAIL) and M < TABLE_CAP:
            M = min(2 * M, TABLE_CAP)
        pmf = np.exp(self.spec.log_tau(np.arange(M)) - self.log_Z)
        object.__setattr__(self, "gap_cdf", np.cumsum(pmf))

    @property
    def Z(self) -> float:
        return math.exp(self.log_Z)

    def gap_pmf(self, n) -> np.ndarray:
        return np.exp(self.spec.log_tau(np.asarray(n)) - self.log_Z)

    def log_survival(self, m: int) -> float:
        """log P(gap >= m), exact for m at or beyond the start of the tail form."""
        tail = self.spec.tail
        m = int(m)
        if m < tail.start:
            head = self.gap_pmf(np.arange(m, tail.start)).sum()
            return math.log(head + math.exp(self.log_survival(tail.start)))
        lt = float(self.spec.log_tau(m))
        if tail.kind == "geometric":
            return lt - math.log1p(-1.0 / tail.c) - self.log_Z
        return lt + math.log((m + tail.b) / (tail.b - 1)) - self.log_Z

    def _tail_quantile(self, u: float) -> int:
        """Smallest m >= len(table) with P(gap <= m) >= u, by closed-form survival."""
        target = math.log1p(-u) if u < 1 else -math.inf
        lo = len(self.gap_cdf)  # survival(lo) > target by construction
        tail = self.spec.tail
        if tail.kind == "geometric":
            step = math.log(tail.c)
            k = math.ceil((self.log_survival(lo) - target) / step)
            m = lo + max(k, 1) - 1
            while self.log_survival(m + 1) > target:
                m += 1
            return m
        hi = 2 * lo
        while self.log_survival(hi) > target:
            hi *= 2
        # survival(m+1) <= target locates m
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.log_survival(mid) > target:
                lo = mid
            else:
                hi = mid
        return hi - 1

    def sample_gaps(self, size, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(size)
        gaps = np.searchsorted(self.gap_cdf, u, side="right")
        beyond = gaps >= len(self.gap_cdf)
        if np.any(beyond):
            gaps[beyond] = [self._tail_quantile(v) for v in u[beyond]]
        return gaps.astype(np.int64)

    def sample_positions(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """(count, N) array of positions drawn from the domain measure."""
        gaps = self.sample_gaps((count, self.N - 1), rng)
        steps = np.concatenate([np.zeros((count, 1), dtype=np.int64), gaps + 1], axis=1)
        return self.x_star + np.cumsum(steps, axis=1)

    def sample(self, rng: np.random.Generator) -> CoordinateConfiguration:
        return CoordinateConfiguration(tuple(int(v) for v in self.sample_positions(1, rng)[0]))


def domain_measure_weight(dm: DomainMeasure, x: int, cfg: CoordinateConfiguration) -> float:
    """R(x, cfg) = delta_{x_1, x} prod_i p(gap_i)."""
    if x > dm.x_star:
        raise RangeError(f"the duality function is defined for x <= x* = {dm.x_star}")
    pos = cfg.positions
    if not pos or pos[0] != x:
        return 0.0
    gaps = np.diff(pos) - 1
    return float(np.exp(np.sum(dm.spec.log_tau(gaps)) - len(gaps) * dm.log_Z))


def rw_transition(t: float, w: float, y: int, x: int) -> float:
    """Probability that the leftward walk goes from y to x in time t."""
    if t < 0:
        raise RangeError("time must be nonnegative")
    k = y - x
    if k < 0:
        return 0.0
    if t == 0:
        return float(k == 0)
    return float(stats.poisson.pmf(k, w * t))


# -- exact intertwining -----------------------------------------------------------

def _window(window) -> tuple[int, int]:
    if isinstance(window, (int, np.integer)):
        return 0, int(window) - 1
    a, b = window
    return int(a), int(b)


def duality_matrix(N: int, window, spec: PotentialSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(R, walk sites, configurations) with R[x - a, s] = R(x, states[s])."""
    a, b = _window(window)
    log_Z = duality_partition(spec)
    states = canonical_states(b - a + 1, N, offset=a)
    sites = np.arange(a, b + 1)
    gaps = np.diff(states, axis=1) - 1
    lw = spec.log_tau(gaps).sum(axis=1) - (N - 1) * log_Z if N > 1 else np.zeros(len(states))
    R = np.zeros((len(sites), len(states)))
    R[states[:, 0] - a, np.arange(len(states))] = np.exp(lw)
    return R, sites, states


def intertwining_residual(N: int, window, spec: PotentialSpec, return_matrices: bool = False):
    """max |(R Q - Qtilde^T R)_{x, y}| over interior entries.

    Interior: the walk site satisfies x < b (so x + 1 is still a walk state),
    and the configuration has y_1 > a and y_N < b (every transition into and
    out of it stays in the window).
    """
    a, b = _window(window)
    gen = build_tahep_line_generator(N, (a, b), spec)
    R, sites, states = duality_matrix(N, (a, b), spec)
    RQ = (gen.Q.T @ R.T).T
    w = spec.w
    QtR = -w * R
    QtR[:-1] += w * R[1:]
    rows = sites < b
    cols = (states[:, 0] > a) & (states[:, -1] < b)
    if not rows.any() or not cols.any():
        raise InvalidConfigurationError(f"window [{a}, {b}] leaves no interior entries for N={N}")
    diff = np.abs(RQ - QtR)[np.ix_(rows, cols)]
    res = float(diff.max())
    if return_matrices:
        return res, {"R": R, "RQ": RQ, "QtR": QtR, "rows": rows, "cols": cols, "states": states}
    return res


def row_sums_of_duality(N: int, spec: PotentialSpec, x: int = 0, width: int | None = None) -> float:
    """sum_cfg R(x, cfg) over configurations with all gaps below the DomainMeasure table size."""
    dm = DomainMeasure(spec, x, N)
    if width is None:
        return float(dm.gap_cdf[-1] ** (N - 1))
    p = dm.gap_pmf(np.arange(width)).sum()
    return float(p ** (N - 1))


# -- Monte Carlo check of the random-walking domain ---------------------------------

@dataclass
class DomainWalkReport:
    N: int
    t: float
    w: float
    replicas: int
    seed: int
    leftmost_tv: float
    leftmost_chi2_p: float
    gap_tv: float
    gap_chi2_p: float
    mean_displacement: float
    mean_displacement_se: float
    expected_displacement: float
    displacement_z: float
    leftmost_gap_correlation: float
    correlation_se: float
    leftmost_counts: list = field(default_factory=list)
    leftmost_pmf: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def write_json(self, path, extra: dict | None = None) -> None:
        d = self.to_dict()
        if extra:
            d.update(extra)
        with open(path, "w") as fh:
            json.dump(d, fh, indent=2)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["displacement", "empirical", "poisson_pmf"])
            n = sum(self.leftmost_counts)
            for k, (c, p) in enumerate(zip(self.leftmost_counts, self.leftmost_pmf)):
                wr.writerow([k, repr(c / n), repr(p)])


def _tv_against(counts: np.ndarray, pmf: np.ndarray) -> float:
    """TV between an empirical histogram and a law given on the same support plus its tail."""
    emp = counts / counts.sum()
    return 0.5 * (float(np.abs(emp - pmf).sum()) + max(0.0, 1.0 - float(pmf.sum())))


def _chi2_pvalue(counts: np.ndarray, pmf: np.ndarray, min_expected: float = 5.0) -> float:
    """Pearson chi-square; adjacent bins are merged left to right until each expects
    at least ``min_expected``, and the mass beyond the support joins the last bin."""
    n = float(counts.sum())
    expected = pmf * n
    obs, exp = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(counts, expected):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            obs.append(acc_o)
            exp.append(acc_e)
            acc_o = acc_e = 0.0
    rest_e = acc_e + max(n - float(expected.sum()), 0.0)
    if not exp:
        return 1.0
    obs[-1] += acc_o
    exp[-1] += rest_e
    if len(exp) < 2:
        return 1.0
    obs, exp = np.array(obs), np.array(exp)
    return float(stats.chi2.sf(np.sum((obs - exp) ** 2 / exp), len(exp) - 1))


def domain_walk_check(dm: DomainMeasure, t: float, replicas: int, seed: int = 0) -> DomainWalkReport:
    """Simulate the TAHEP from the domain measure and compare with the Poisson mixture."""
    if t < 0 or replicas < 1:
        raise InvalidConfigurationError("need t >= 0 and replicas >= 1")
    w, N = dm.spec.w, dm.N
    finals = []
    for chunk, start in enumerate(range(0, replicas, BATCH)):
        rng = replica_rng(seed, chunk)
        count = min(BATCH, replicas - start)
        x0 = dm.sample_positions(count, rng)
        finals.append(simulate_line_batch(dm.spec, x0, t, rng))
    x = np.concatenate(finals)
    disp = x[:, 0] - dm.x_star
    counts = np.bincount(disp)
    pois = stats.poisson.pmf(np.arange(len(counts)), w * t) if t > 0 else \
        np.eye(1, len(counts))[0]
    left_tv = _tv_against(counts, pois)
    left_p = _chi2_pvalue(counts, pois) if t > 0 else 1.0
    if N > 1:
        gaps = (np.diff(x, axis=1) - 1).ravel()
        gcounts = np.bincount(gaps)
        gpmf = dm.gap_pmf(np.arange(len(gcounts)))
        gap_tv = _tv_against(gcounts, gpmf)
        gap_p = _chi2_pvalue(gcounts, gpmf)
        first_gap = x[:, 1] - x[:, 0] - 1
        corr = float(np.corrcoef(disp, first_gap)[0, 1]) if t > 0 else 0.0
    else:
        gap_tv, gap_p, corr = 0.0, 1.0, 0.0
    mean = float(disp.mean())
    se = float(disp.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else float("nan")
    z = (mean - w * t) / se if se and se > 0 else 0.0
    return DomainWalkReport(
        N=N, t=t, w=w, replicas=replicas, seed=seed, leftmost_tv=left_tv,
        leftmost_chi2_p=left_p, gap_tv=gap_tv, gap_chi2_p=gap_p,
        mean_displacement=mean, mean_displacement_se=se, expected_displacement=w * t,
        displacement_z=float(z), leftmost_gap_correlation=corr,
        correlation_se=1.0 / math.sqrt(max(replicas - 3, 1)),
        leftmost_counts=counts.tolist(), leftmost_pmf=pois.tolist())
