"""Kinetic Monte Carlo for the HEP on a torus and on the integer line.

The single-replica engine keeps one rate per (particle, direction) in a
Fenwick tree; a jump changes two headways and therefore four rates.  Time
averages use exact sojourn weights.  A vectorised engine advances many
independent line replicas at once and is used for distributional checks that
need 10^5 samples.
"""
from __future__ import annotations

import math
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, InvalidConfigurationError
from .lattice import CoordinateConfiguration
from .measures import sample_canonical
from .potential import PotentialSpec

UNIFORM_BATCH = 4096
REBUILD_EVERY = 1 << 16


class FenwickTree:
    """Binary indexed tree over nonnegative weights with O(log n) update and search."""

    def __init__(self, values):
        self.n = len(values)
        self.values = [0.0] * self.n
        self.tree = [0.0] * (self.n + 1)
        self._top = 1 << max(self.n.bit_length() - 1, 0)
        self.rebuild(values)

    def rebuild(self, values=None) -> None:
        if values is not None:
            self.values = [float(v) for v in values]
        t = [0.0] * (self.n + 1)
        for i, v in enumerate(self.values, start=1):
            t[i] += v
            j = i + (i & -i)
            if j <= self.n:
                t[j] += t[i]
        self.tree = t

    def set(self, i: int, value: float) -> None:
        delta = value - self.values[i]
        if delta == 0.0:
            return
        self.values[i] = value
        i += 1
        t = self.tree
        n = self.n
        while i <= n:
            t[i] += delta
            i += i & -i

    def prefix(self, i: int) -> float:
        """Sum of values[0:i]."""
        s = 0.0
        t = self.tree
        while i > 0:
            s += t[i]
            i -= i & -i
        return s

    @property
    def total(self) -> float:
        return self.prefix(self.n)

    def find(self, u: float) -> int:
        """Smallest index i with prefix(i+1) > u."""
        pos = 0
        step = self._top
        t = self.tree
        while step:
            nxt = pos + step
            if nxt <= self.n and t[nxt] <= u:
                pos = nxt
                u -= t[nxt]
            step >>= 1
        return min(pos, self.n - 1)


@dataclass(frozen=True)
class Torus:
    L: int
    N: int

    def __post_init__(self):
        if not 0 <= self.N <= self.L:
            raise InvalidConfigurationError(f"need 0 <= N <= L, got L={self.L}, N={self.N}")


@dataclass(frozen=True)
class Line:
    N: int
    x_star: int = 0

    def __post_init__(self):
        if self.N < 1:
            raise InvalidConfigurationError("line simulations need at least one particle")


OBSERVABLES = frozenset({"current", "headway_hist", "leftmost", "snapshots", "occupation"})


@dataclass(frozen=True)
class SimulationConfig:
    spec: PotentialSpec
    geometry: Torus | Line
    t_end: float
    seed: int = 0
    replicas: int = 1
    observables: frozenset = frozenset({"current", "headway_hist"})
    snapshot_times: tuple[float, ...] = ()
    t_burn: float | None = None

    def __post_init__(self):
        if not self.t_end > 0:
            raise InvalidConfigurationError("t_end must be positive")
        if self.replicas < 1:
            raise InvalidConfigurationError("need at least one replica")
        unknown = set(self.observables) - OBSERVABLES
        if unknown:
            raise InvalidConfigurationError(f"unknown observables {sorted(unknown)}")
        object.__setattr__(self, "observables", frozenset(self.observables))
        object.__setattr__(self, "snapshot_times", tuple(sorted(float(s) for s in self.snapshot_times)))
        if self.t_burn is not None and not 0 <= self.t_burn < self.t_end:
            raise InvalidConfigurationError("need 0 <= t_burn < t_end")

    @property
    def burn_in(self) -> float:
        return 0.1 * self.t_end if self.t_burn is None else self.t_burn

    def to_dict(self) -> dict:
        g = self.geometry
        geo = {"kind": "torus", "L": g.L, "N": g.N} if isinstance(g, Torus) else \
              {"kind": "line", "N": g.N, "x_star": g.x_star}
        return {"spec": self.spec.to_dict(), "geometry": geo, "t_end": self.t_end,
                "seed": self.seed, "replicas": self.replicas,
                "observables": sorted(self.observables),
                "snapshot_times": list(self.snapshot_times), "t_burn": self.burn_in}


@dataclass
class SampleStats:
    """Observables of one replica (or a merge of several)."""

    right_jumps: int = 0
    left_jumps: int = 0
    events: int = 0
    measured_time: float = 0.0
    t_end: float = 0.0
    t_burn: float = 0.0
    L: int | None = None
    N: int = 0
    headway_time: np.ndarray = field(default_factory=lambda: np.zeros(0))
    leftmost_initial: list = field(default_factory=list)
    leftmost_final: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    occupation: dict = field(default_factory=dict)
    final_positions: tuple = ()
    halted: bool = False
    replicas: int = 1

    @property
    def net_crossings(self) -> int:
        return self.right_jumps - self.left_jumps


def _rate_lookup(spec: PotentialSpec, n_max: int) -> list[float]:
    w = spec.w * np.exp(spec.log_g(np.arange(n_max + 1)))
    return [float(v) for v in w]


def _initial_positions(cfg: SimulationConfig, init, rng) -> list[int]:
    geo = cfg.geometry
    if callable(init):
        init = init(rng)
    if init is None:
        if isinstance(geo, Torus):
            init = sample_canonical(geo.L, geo.N, cfg.spec, rng)
        elif geo.N == 1:
            init = CoordinateConfiguration((geo.x_star,))
        else:
            from .duality import DomainMeasure
            try:
                init = DomainMeasure(cfg.spec, geo.x_star, geo.N).sample(rng)
            except DivergenceError:
                # no normalisable domain measure: start from a packed block
                init = CoordinateConfiguration(tuple(range(geo.x_star, geo.x_star + geo.N)))
    if not isinstance(init, CoordinateConfiguration):
        init = CoordinateConfiguration(tuple(sorted(int(v) for v in init)),
                                       geo.L if isinstance(geo, Torus) else None)
    if init.N != geo.N:
        raise InvalidConfigurationError(f"initial configuration has {init.N} particles, expected {geo.N}")
    if isinstance(geo, Torus) and init.L != geo.L:
        raise InvalidConfigurationError("initial configuration lives on a different torus")
    if isinstance(geo, Line) and init.L is not None:
        raise InvalidConfigurationError("line simulations need a line configuration")
    return list(init.positions)


def replica_rng(seed: int, replica: int) -> np.random.Generator:
    """Counter-based Philox stream for one replica.

    The 128-bit key holds (seed, seed XOR replica): the XOR word separates
    replicas and the seed word keeps streams of different seeds apart.
    """
    mask = 2**64 - 1
    seed, replica = int(seed) & mask, int(replica) & mask
    return np.random.Generator(np.random.Philox(key=(seed << 64) | (seed ^ replica)))


def simulate(cfg: SimulationConfig, init=None, replica: int = 0) -> SampleStats:
    """One exact trajectory up to ``cfg.t_end``.

    ``init`` is a CoordinateConfiguration, a sequence of positions, a callable
    taking the replica RNG, or None (draw from the invariant measure on the
    torus, from the domain measure on the line, or a packed block on the line
    when the domain measure is not normalisable).
    """
    rng = replica_rng(cfg.seed, replica)
    spec, geo = cfg.spec, cfg.geometry
    x = _initial_positions(cfg, init, rng)
    N = len(x)
    torus = isinstance(geo, Torus)
    L = geo.L if torus else None
    t_end, t_burn = cfg.t_end, cfg.burn_in
    obs = cfg.observables
    stats = SampleStats(t_end=t_end, t_burn=t_burn, L=L, N=N,
                        measured_time=t_end - t_burn)
    if N:
        stats.leftmost_initial.append(min(x))
    if N == 0:
        stats.halted = True
        stats.headway_time = np.zeros(0)
        return stats

    r_amp, l_amp, w_inf = spec.r, spec.l, spec.w
    table = _rate_lookup(spec, L if torus else 256)

    def W(n):
        nonlocal table
        if n is None:
            return w_inf
        if n >= len(table):
            table = _rate_lookup(spec, 2 * n)
        return table[n]

    if torus:
        h = [(x[(i + 1) % N] - x[i] - 1) % L for i in range(N)]
    else:
        h = [x[i + 1] - x[i] - 1 for i in range(N - 1)] + [None]

    def left_h(i):
        if torus:
            return h[i - 1]
        return h[i - 1] if i > 0 else None

    rates = [0.0] * (2 * N)
    for i in range(N):
        rates[2 * i] = r_amp * W(h[i])
        rates[2 * i + 1] = l_amp * W(left_h(i))
    tree = FenwickTree(rates)

    track_hist = "headway_hist" in obs
    n_hist = (L if torus else 256)
    count = [0] * n_hist
    acc = [0.0] * n_hist
    last = [t_burn] * n_hist
    finite = h if torus else h[:-1]
    for n in finite:
        count[n] += 1

    def touch(n, t):
        nonlocal count, acc, last, n_hist
        if n >= n_hist:
            grow = 2 * n - n_hist + 1
            count += [0] * grow
            acc += [0.0] * grow
            last += [t_burn] * grow
            n_hist = len(count)
        if t > last[n]:
            acc[n] += count[n] * (t - last[n])
            last[n] = t

    track_occ = "occupation" in obs and torus
    occ = defaultdict(float)
    state_since = t_burn
    snaps = list(cfg.snapshot_times) if "snapshots" in obs else []
    snap_i = 0

    def literal():
        if torus:
            o = ["0"] * L
            for p in x:
                o[p] = "1"
            return "".join(o)
        return ",".join(str(p) for p in x)

    def state_key():
        return tuple(sorted(x))

    u_buf = rng.random(UNIFORM_BATCH)
    u_i = 0
    t = 0.0
    events = right = left = 0
    since_rebuild = 0
    while True:
        R = tree.total
        if R <= 0.0:
            stats.halted = True
            break
        if u_i + 2 > UNIFORM_BATCH:
            u_buf = rng.random(UNIFORM_BATCH)
            u_i = 0
        u1 = u_buf[u_i]
        u2 = u_buf[u_i + 1]
        u_i += 2
        t_next = t - math.log1p(-u1) / R
        while snap_i < len(snaps) and snaps[snap_i] < min(t_next, t_end):
            stats.snapshots.append((snaps[snap_i], literal()))
            snap_i += 1
        if t_next >= t_end:
            break
        if track_occ and t_next > t_burn:
            occ[state_key()] += t_next - max(state_since, t_burn)
            state_since = t_next
        t = t_next
        k = tree.find(u2 * R)
        while tree.values[k] <= 0.0:
            # round-off landed on a zero-rate slot
            k = tree.find(rng.random() * tree.total)
        i, is_left = divmod(k, 2)
        im = (i - 1) % N if torus else i - 1
        ip = (i + 1) % N if torus else i + 1
        old_a = h[i]
        old_b = h[im] if im >= 0 else None
        if is_left:
            x[i] = (x[i] - 1) % L if torus else x[i] - 1
            new_a = None if old_a is None else old_a + 1
            new_b = None if old_b is None else old_b - 1
        else:
            x[i] = (x[i] + 1) % L if torus else x[i] + 1
            new_a = None if old_a is None else old_a - 1
            new_b = None if old_b is None else old_b + 1
        if im == i:
            # a lone particle on the torus keeps headway L-1
            new_a, new_b = old_a, old_b
        elif track_hist:
            for n in (old_a, old_b, new_a, new_b):
                if n is not None:
                    touch(n, t)
            if old_a is not None:
                count[old_a] -= 1
                count[new_a] += 1
            if old_b is not None:
                count[old_b] -= 1
                count[new_b] += 1
        h[i] = new_a
        if im >= 0:
            h[im] = new_b
        # four rates depend on the two changed headways
        tree.set(2 * i, r_amp * W(h[i]))
        tree.set(2 * i + 1, l_amp * W(left_h(i)))
        if ip < N:
            tree.set(2 * ip + 1, l_amp * W(left_h(ip)))
        if im >= 0:
            tree.set(2 * im, r_amp * W(h[im]))
        events += 1
        if t > t_burn:
            if is_left:
                left += 1
            else:
                right += 1
        since_rebuild += 1
        if since_rebuild >= REBUILD_EVERY:
            tree.rebuild()
            since_rebuild = 0

    while snap_i < len(snaps) and snaps[snap_i] <= t_end:
        stats.snapshots.append((snaps[snap_i], literal()))
        snap_i += 1
    if track_hist:
        for n in range(n_hist):
            touch(n, t_end)
        stats.headway_time = np.asarray(acc)
    else:
        stats.headway_time = np.zeros(0)
    if track_occ:
        occ[state_key()] += t_end - max(state_since, t_burn)
        stats.occupation = dict(occ)
    stats.right_jumps, stats.left_jumps, stats.events = right, left, events
    stats.leftmost_final.append(min(x))
    stats.final_positions = tuple(sorted(x)) if torus else tuple(x)
    return stats


def _worker(args):
    cfg, init, i = args
    return simulate(cfg, init, i)


def run_replicas(cfg: SimulationConfig, init=None, workers: int | None = None) -> list[SampleStats]:
    """Independent replicas 0..replicas-1.  ``workers`` defaults to $HEP_THREADS or 1."""
    if workers is None:
        workers = int(os.environ.get("HEP_THREADS", "1"))
    jobs = [(cfg, init, i) for i in range(cfg.replicas)]
    if workers <= 1 or cfg.replicas == 1:
        return [_worker(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_worker, jobs))


# -- estimators ------------------------------------------------------------------

def empirical_current(stats: SampleStats) -> float:
    """Net bond crossings per bond per unit time after burn-in."""
    if stats.L is None:
        raise InvalidConfigurationError("the empirical current is defined on the torus")
    if stats.N == 0 or stats.measured_time <= 0:
        return 0.0
    return stats.net_crossings / (stats.L * stats.measured_time)


def headway_histogram(stats: SampleStats) -> np.ndarray:
    """Time-averaged fraction of (finite-headway) particles with headway n."""
    if stats.N == 0:
        return np.zeros(0)
    finite = stats.N if stats.L is not None else stats.N - 1
    if finite == 0 or stats.measured_time <= 0:
        return np.zeros(len(stats.headway_time))
    return stats.headway_time / (finite * stats.measured_time * stats.replicas)


def merge_stats(items) -> SampleStats:
    """Associative merge of replica statistics."""
    items = list(items)
    if not items:
        raise ValueError("nothing to merge")
    out = SampleStats(t_end=items[0].t_end, t_burn=items[0].t_burn, L=items[0].L,
                      N=items[0].N, measured_time=items[0].measured_time, replicas=0)
    size = max(len(s.headway_time) for s in items)
    hist = np.zeros(size)
    occ = defaultdict(float)
    for s in items:
        out.right_jumps += s.right_jumps
        out.left_jumps += s.left_jumps
        out.events += s.events
        out.replicas += s.replicas
        hist[: len(s.headway_time)] += s.headway_time
        out.leftmost_initial += s.leftmost_initial
        out.leftmost_final += s.leftmost_final
        out.snapshots += s.snapshots
        for k, v in s.occupation.items():
            occ[k] += v
        out.halted = out.halted or s.halted
    out.headway_time = hist
    out.occupation = dict(occ)
    return out


def summarize(stats_list: list[SampleStats]) -> dict:
    """Mean and standard error of the current and the headway histogram over replicas."""
    n = len(stats_list)
    out = {"replicas": n}
    if stats_list and stats_list[0].L is not None:
        j = np.array([empirical_current(s) for s in stats_list])
        out["current"] = float(j.mean())
        out["current_se"] = float(j.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    hists = [headway_histogram(s) for s in stats_list]
    size = max((len(h) for h in hists), default=0)
    if size:
        H = np.zeros((n, size))
        for i, h in enumerate(hists):
            H[i, : len(h)] = h
        last = int(np.max(np.nonzero(H.sum(axis=0))[0], initial=0)) + 1
        out["headway_hist"] = H.mean(axis=0)[:last].tolist()
        out["headway_hist_se"] = (H.std(axis=0, ddof=1)[:last] / math.sqrt(n)).tolist() if n > 1 else None
    out["events"] = int(sum(s.events for s in stats_list))
    out["halted"] = any(s.halted for s in stats_list)
    return out


# -- vectorised line engine ---------------------------------------------------------

def simulate_line_batch(spec: PotentialSpec, positions: np.ndarray, t_end: float,
                        rng: np.random.Generator) -> np.ndarray:
    """Advance B independent TAHEP replicas on Z to time ``t_end``.

    ``positions`` has shape (B, N), rows strictly increasing.  Particle l < N
    jumps right at w g_{headway}, the rightmost at w.  Returns final positions.
    """
    x = np.array(positions, dtype=np.int64, copy=True)
    B, N = x.shape
    table = spec.w * np.exp(spec.log_g(np.arange(1024)))
    t = np.zeros(B)
    active = np.arange(B)
    while active.size:
        xa = x[active]
        gaps = np.diff(xa, axis=1) - 1
        if gaps.size and gaps.max() >= len(table):
            table = spec.w * np.exp(spec.log_g(np.arange(2 * int(gaps.max()) + 2)))
        rates = np.empty((active.size, N))
        rates[:, : N - 1] = table[gaps]
        rates[:, N - 1] = spec.w
        cum = np.cumsum(rates, axis=1)
        R = cum[:, -1]
        dt = rng.exponential(1.0, active.size) / R
        t_new = t[active] + dt
        go = t_new < t_end
        u = rng.random(active.size) * R
        k = np.minimum((cum <= u[:, None]).sum(axis=1), N - 1)
        rows = active[go]
        x[rows, k[go]] += 1
        t[rows] = t_new[go]
        active = rows
    return x
