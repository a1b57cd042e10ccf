"""Exact intensity matrices, stationary solves and the invariance probes.

States are N-subsets of sites in lexicographic order (the order of
:func:`hep.lattice.canonical_states`), so row i of a generator corresponds to
row i of the matching :class:`hep.measures.MeasureTable`.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from .errors import DegenerateSpaceError, InvalidConfigurationError, ReducibleChainError
from .lattice import canonical_states
from .measures import MeasureTable
from .potential import PotentialSpec, rates_from_potential

POWER_METHOD_THRESHOLD = 100_000


@dataclass(frozen=True, eq=False)
class IntensityMatrix:
    """Sparse generator.  ``leak[i]`` is the rate at which state i leaves the
    represented space (only nonzero for truncated line generators); the
    diagonal includes it, so rows with leak > 0 sum to -leak."""

    Q: sp.csr_matrix
    states: np.ndarray
    leak: np.ndarray
    space: str
    params: dict

    @property
    def dimension(self) -> int:
        return self.Q.shape[0]

    @property
    def interior(self) -> np.ndarray:
        return self.leak == 0

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.Q.sum(axis=1)).ravel()

    def off_diagonal_counts(self) -> np.ndarray:
        off = self.Q - sp.diags(self.Q.diagonal())
        off.eliminate_zeros()
        return np.diff(off.tocsr().indptr)

    def to_triplets(self, path) -> None:
        """Write ``row col rate`` lines (diagonal included)."""
        coo = self.Q.tocoo()
        with open(path, "w") as fh:
            for i, j, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i} {j} {v!r}\n")


def _codes(states: np.ndarray) -> np.ndarray:
    if states.size and states.max() >= 62:
        raise InvalidConfigurationError("exact generators support at most 62 sites")
    return np.sum(np.left_shift(np.int64(1), states), axis=1)


def _assemble(states, src, dst_states, rate, leak=None, space="", params=None) -> IntensityMatrix:
    """Build Q from candidate moves (src row, destination configuration, rate)."""
    n = len(states)
    codes = _codes(states)
    order = np.argsort(codes)
    sorted_codes = codes[order]
    keep = rate > 0
    src, dst_states, rate = src[keep], dst_states[keep], rate[keep]
    dcodes = _codes(np.sort(dst_states, axis=1)) if len(src) else np.zeros(0, dtype=np.int64)
    pos = np.searchsorted(sorted_codes, dcodes)
    if np.any(pos >= n) or np.any(sorted_codes[np.minimum(pos, n - 1)] != dcodes):
        raise AssertionError("move left the state space")
    dst = order[pos]
    exit_rate = np.bincount(src, weights=rate, minlength=n)
    leak = np.zeros(n) if leak is None else leak
    rows = np.concatenate([src, np.arange(n)])
    cols = np.concatenate([dst, np.arange(n)])
    vals = np.concatenate([rate, -(exit_rate + leak)])
    Q = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    Q.sum_duplicates()
    return IntensityMatrix(Q, states, leak, space, params or {})


def hep_rates(spec: PotentialSpec, n_max: int) -> np.ndarray:
    """[w_0, ..., w_{n_max}] for the given potential."""
    return rates_from_potential(spec, n_max)


def build_hep_generator(L: int, N: int, spec: PotentialSpec, rates=None) -> IntensityMatrix:
    """Generator of the HEP with N particles on T_L.

    ``rates`` overrides the potential-derived [w_0, ..., w_{L-1}] (used by the
    invariance probes); r and l always come from ``spec``.
    """
    if not 1 <= N <= L - 1:
        raise DegenerateSpaceError(f"no dynamics for N={N} on T_{L}: need 1 <= N <= L-1")
    w = hep_rates(spec, L - 1) if rates is None else np.asarray(rates, dtype=float)
    states = canonical_states(L, N)
    C = len(states)
    right_gap = (np.roll(states, -1, axis=1) - states - 1) % L
    left_gap = np.roll(right_gap, 1, axis=1)
    srcs, dsts, rts = [], [], []
    for i in range(N):
        for step, gap, amp in ((1, right_gap, spec.r), (-1, left_gap, spec.l)):
            if amp == 0:
                continue
            moved = states.copy()
            moved[:, i] = (moved[:, i] + step) % L
            srcs.append(np.arange(C))
            dsts.append(moved)
            rts.append(amp * w[gap[:, i]])
    return _assemble(states, np.concatenate(srcs), np.concatenate(dsts),
                     np.concatenate(rts), space="hep_torus", params={"L": L, "N": N})


def build_full_generator(L: int, spec: PotentialSpec) -> IntensityMatrix:
    """Block-diagonal generator over all 2^L states, ordered by N then lexicographically.

    ``states`` is the occupation matrix, matching grand_canonical_measure.
    """
    blocks, occs = [], []
    for N in range(L + 1):
        if 1 <= N <= L - 1:
            g = build_hep_generator(L, N, spec)
            blocks.append(g.Q)
            st = g.states
        else:
            blocks.append(sp.csr_matrix((1, 1)))
            st = canonical_states(L, N)
        occ = np.zeros((len(st), L), dtype=np.int8)
        if N:
            np.put_along_axis(occ, st, 1, axis=1)
        occs.append(occ)
    Q = sp.block_diag(blocks, format="csr")
    return IntensityMatrix(Q, np.concatenate(occs), np.zeros(Q.shape[0]), "hep_torus_gc", {"L": L})


def build_tahep_line_generator(N: int, window, spec: PotentialSpec) -> IntensityMatrix:
    """TAHEP on Z restricted to configurations inside ``window = (a, b)`` (inclusive).

    Particle l < N jumps at w g_{headway}; the rightmost jumps at w.  Jumps of
    the rightmost particle past b are recorded in ``leak``.
    """
    a, b = window
    width = b - a + 1
    if N < 1 or width < N:
        raise InvalidConfigurationError(f"window [{a}, {b}] cannot hold N={N} particles")
    g = np.concatenate([[0.0], np.exp(spec.log_g(np.arange(1, width)))]) if width > 1 else np.zeros(1)
    states = canonical_states(width, N, offset=a)
    C = len(states)
    srcs, dsts, rts = [], [], []
    for i in range(N - 1):
        gap = states[:, i + 1] - states[:, i] - 1
        moved = states.copy()
        moved[:, i] += 1
        srcs.append(np.arange(C))
        dsts.append(moved)
        rts.append(spec.w * g[gap])
    last_inside = states[:, -1] < b
    moved = states[last_inside].copy()
    moved[:, -1] += 1
    srcs.append(np.flatnonzero(last_inside))
    dsts.append(moved)
    rts.append(np.full(int(last_inside.sum()), spec.w))
    leak = np.where(last_inside, 0.0, spec.w)
    gen = _assemble(states - a, np.concatenate(srcs), np.concatenate(dsts) - a,
                     np.concatenate(rts), leak=leak, space="tahep_line",
                     params={"N": N, "window": (a, b)})
    return replace(gen, states=states)


# -- stationary distribution ---------------------------------------------------

def _check_irreducible(Q: sp.csr_matrix) -> None:
    n_comp, _ = connected_components(Q, directed=True, connection="strong")
    if n_comp > 1:
        raise ReducibleChainError(f"chain has {n_comp} communicating classes; no unique stationary law")


def stationary_distribution(gen: IntensityMatrix, tol: float = 1e-14,
                            max_iter: int = 1_000_000) -> MeasureTable:
    """Unique mu with mu Q = 0, sum mu = 1."""
    Q = gen.Q
    n = Q.shape[0]
    _check_irreducible(Q)
    if n == 1:
        mu = np.ones(1)
    elif n <= POWER_METHOD_THRESHOLD:
        A = Q.T.tolil()
        A[n - 1, :] = np.ones(n)
        rhs = np.zeros(n)
        rhs[n - 1] = 1.0
        mu = spsolve(A.tocsc(), rhs)
    else:
        mu = _power_method(Q, tol, max_iter)
    mu = np.clip(mu, 0.0, None)
    mu /= mu.sum()
    with np.errstate(divide="ignore"):
        lw = np.log(mu)
    return MeasureTable("stationary", dict(gen.params), lw, 0.0, gen.states)


def _power_method(Q: sp.csr_matrix, tol: float, max_iter: int) -> np.ndarray:
    lam = 1.05 * float(np.max(-Q.diagonal()))
    P = (sp.identity(Q.shape[0], format="csr") + Q / lam).T.tocsr()
    mu = np.full(Q.shape[0], 1.0 / Q.shape[0])
    for _ in range(max_iter):
        nxt = P @ mu
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - mu)) < tol * np.max(nxt):
            return nxt
        mu = nxt
    return mu


def balance_residual(mu, gen: IntensityMatrix) -> float:
    """max_y |sum_x mu(x) c(x->y) - mu(y) sum_z c(y->z)| = ||mu Q||_inf."""
    p = mu.probabilities if isinstance(mu, MeasureTable) else np.asarray(mu, dtype=float)
    return float(np.max(np.abs(gen.Q.T @ p)))


# -- reflection condition and the invariance probe --------------------------------

def _log_y_table(spec: PotentialSpec, r_max: int) -> np.ndarray:
    return spec.log_y(np.arange(r_max + 1))


def reflection_condition_check(L: int, spec: PotentialSpec, rates=None) -> float:
    """max_r |w_r y_{r+1}/y_r - w_{L-1-r} y_{L-r}/y_{L-r-1}| / scale over 1 <= r <= L-2."""
    if L < 3:
        raise InvalidConfigurationError("the reflection condition needs L >= 3")
    w = hep_rates(spec, L - 1) if rates is None else np.asarray(rates, dtype=float)
    ly = _log_y_table(spec, L)
    r = np.arange(1, L - 1)
    lhs = w[r] * np.exp(ly[r + 1] - ly[r])
    rr = L - 1 - r
    rhs = w[rr] * np.exp(ly[rr + 1] - ly[rr])
    scale = max(float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))), np.finfo(float).tiny)
    return float(np.max(np.abs(lhs - rhs)) / scale)


def invariance_constraint_matrix(L: int, spec: PotentialSpec, n_unknowns: int | None = None,
                                 N: int = 2) -> np.ndarray:
    """Matrix A with A @ (w_1..w_K) = 0 iff the canonical measure balances the TAHEP on T_L.

    Row s is the general balance relation at state s; column k-1 collects the
    coefficient of w_k.  Only r = 1, l = 0 dynamics are used.
    """
    K = L - N if n_unknowns is None else n_unknowns
    if K < L - N:
        raise InvalidConfigurationError("need unknowns for every headway up to L-N")
    states = canonical_states(L, N)
    C = len(states)
    codes = _codes(states)
    index = {int(c): i for i, c in enumerate(codes)}
    gaps = (np.roll(states, -1, axis=1) - states - 1) % L
    ly = spec.log_y(np.arange(L + 1))
    pi = np.exp(ly[gaps + 1].sum(axis=1))
    A = np.zeros((C, K))
    for s in range(C):
        for i in range(N):
            n = gaps[s, i]
            if n == 0:
                continue
            A[s, n - 1] -= pi[s]
            moved = states[s].copy()
            moved[i] = (moved[i] + 1) % L
            t = index[int(np.sum(np.left_shift(np.int64(1), moved)))]
            A[t, n - 1] += pi[s]
    return A


def invariance_solution_space(L_values, spec: PotentialSpec, N: int = 2) -> np.ndarray:
    """Orthonormal basis (columns) of rates w_1..w_K balancing every L in ``L_values``."""
    K = max(L_values) - N
    A = np.vstack([invariance_constraint_matrix(L, spec, K, N) for L in L_values])
    # unknowns beyond L-N for small L are unconstrained there but fixed by larger L
    scale = np.max(np.abs(A), axis=1, keepdims=True)
    A = A / np.where(scale > 0, scale, 1.0)
    return scipy.linalg.null_space(A, rcond=1e-10)


def reflection_symmetric_rates(L0: int, spec: PotentialSpec, factor: float = 2.0,
                               n_max: int | None = None) -> np.ndarray:
    """Rates w_r = a_r w y_r/y_{r+1} with a_1 = a_{L0-2} = factor, other a_r = 1.

    They satisfy the reflection condition at L = L0 but break it at other sizes.
    """
    if L0 < 4:
        raise InvalidConfigurationError("need L0 >= 4 for a nontrivial perturbation")
    n_max = L0 if n_max is None else n_max
    w = hep_rates(spec, n_max).copy()
    for r in {1, L0 - 2}:
        if r <= n_max:
            w[r] *= factor
    return w


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))
