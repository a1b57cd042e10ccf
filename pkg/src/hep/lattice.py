"""Exclusion configurations on the torus and on the integer line.

Two presentations are kept side by side: occupation bits (used when
enumerating canonical state spaces) and sorted particle coordinates (used by
the simulator and by everything that works with headways).  Conversions are
explicit.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import HeadwaysUndefinedError, InvalidConfigurationError, InvalidMoveError


class Infinite(enum.Enum):
    """Headway of the rightmost particle on the line."""

    HEADWAY = "inf"

    def __repr__(self) -> str:
        return "INF"


INF = Infinite.HEADWAY


@dataclass(frozen=True)
class TorusConfiguration:
    L: int
    occupation: tuple[int, ...]

    def __post_init__(self):
        if self.L < 1:
            raise InvalidConfigurationError(f"torus size must be positive, got {self.L}")
        occ = tuple(int(v) for v in self.occupation)
        if len(occ) != self.L:
            raise InvalidConfigurationError(
                f"occupation has length {len(occ)}, expected L={self.L}")
        if any(v not in (0, 1) for v in occ):
            raise InvalidConfigurationError("occupation numbers must be 0 or 1")
        object.__setattr__(self, "occupation", occ)

    @property
    def N(self) -> int:
        return sum(self.occupation)

    def __getitem__(self, x: int) -> int:
        return self.occupation[x % self.L]

    def __str__(self) -> str:
        return "".join(str(v) for v in self.occupation)

    def reflected(self) -> TorusConfiguration:
        """Space reflection x -> L-1-x."""
        return TorusConfiguration(self.L, self.occupation[::-1])

    def shifted(self, k: int = 1) -> TorusConfiguration:
        """Cyclic translation by k sites to the right."""
        k %= self.L
        return TorusConfiguration(self.L, self.occupation[-k:] + self.occupation[:-k] if k else self.occupation)


@dataclass(frozen=True)
class CoordinateConfiguration:
    """Sorted particle positions.  ``L is None`` means the integer line."""

    positions: tuple[int, ...]
    L: int | None = None

    def __post_init__(self):
        pos = tuple(int(p) for p in self.positions)
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise InvalidConfigurationError(f"positions must be strictly increasing: {pos}")
        if self.L is not None:
            if self.L < 1:
                raise InvalidConfigurationError(f"torus size must be positive, got {self.L}")
            if pos and (pos[0] < 0 or pos[-1] > self.L - 1):
                raise InvalidConfigurationError(f"positions {pos} outside [0, {self.L - 1}]")
        object.__setattr__(self, "positions", pos)

    @property
    def N(self) -> int:
        return len(self.positions)

    @property
    def on_torus(self) -> bool:
        return self.L is not None

    def __str__(self) -> str:
        return ",".join(str(p) for p in self.positions)


def coords_from_occupation(cfg: TorusConfiguration) -> CoordinateConfiguration:
    return CoordinateConfiguration(
        tuple(x for x, v in enumerate(cfg.occupation) if v), cfg.L)


def occupation_from_coords(cfg: CoordinateConfiguration) -> TorusConfiguration:
    if cfg.L is None:
        raise InvalidConfigurationError("occupation presentation needs a torus")
    occ = [0] * cfg.L
    for x in cfg.positions:
        occ[x] = 1
    return TorusConfiguration(cfg.L, tuple(occ))


def torus_from_positions(L: int, positions) -> TorusConfiguration:
    """Build a torus configuration from an unsorted list of sites, rejecting duplicates."""
    positions = [int(p) for p in positions]
    if len(set(positions)) != len(positions):
        raise InvalidConfigurationError(f"duplicate positions in {positions}")
    return occupation_from_coords(CoordinateConfiguration(tuple(sorted(positions)), L))


def headways(cfg: CoordinateConfiguration) -> tuple:
    """Numbers of empty sites in front of each particle.

    On the line the last entry is :data:`INF`.
    """
    x = cfg.positions
    N = len(x)
    if N == 0:
        raise HeadwaysUndefinedError("headways are not defined for the empty lattice")
    if cfg.L is None:
        return tuple(x[i + 1] - x[i] - 1 for i in range(N - 1)) + (INF,)
    L = cfg.L
    return tuple((x[(i + 1) % N] - x[i] - 1) % L for i in range(N))


def distances(cfg: CoordinateConfiguration) -> tuple[int, ...]:
    return tuple(n + 1 for n in headways(cfg) if n is not INF)


def headway_at(cfg: TorusConfiguration, x: int) -> int | None:
    """Headway of the particle at site x, or None if x is vacant."""
    L = cfg.L
    if not cfg[x]:
        return None
    for n in range(L):
        if cfg[x + 1 + n]:
            return n
    raise AssertionError("unreachable: the particle at x sees itself after L-1 sites")


def headway_indicator(cfg: TorusConfiguration, x: int, n: int) -> int:
    return int(headway_at(cfg, x) == n)


def is_neighbor(L: int, x: int, y: int) -> bool:
    return (y - x) % L in (1, L - 1)


def apply_swap(cfg: TorusConfiguration, x: int, y: int) -> TorusConfiguration:
    """Exchange the occupation numbers of nearest-neighbour sites x and y."""
    L = cfg.L
    if not is_neighbor(L, x, y):
        raise InvalidMoveError(f"sites {x} and {y} are not nearest neighbours on T_{L}")
    occ = list(cfg.occupation)
    x, y = x % L, y % L
    occ[x], occ[y] = occ[y], occ[x]
    return TorusConfiguration(L, tuple(occ))


def parse_torus(text: str) -> TorusConfiguration:
    """Parse the literal ``"0110..."``."""
    text = text.strip()
    if not text or any(c not in "01" for c in text):
        raise InvalidConfigurationError(f"not a torus literal: {text!r}")
    return TorusConfiguration(len(text), tuple(int(c) for c in text))


def parse_coords(text: str, L: int | None = None) -> CoordinateConfiguration:
    """Parse the literal ``"x1,x2,..."``; the empty string is the empty configuration."""
    text = text.strip()
    try:
        pos = tuple(int(t) for t in text.split(",")) if text else ()
    except ValueError as exc:
        raise InvalidConfigurationError(f"not a coordinate literal: {text!r}") from exc
    return CoordinateConfiguration(pos, L)


# -- canonical state spaces ---------------------------------------------------

def canonical_states(L: int, N: int, offset: int = 0) -> np.ndarray:
    """All N-subsets of {offset, ..., offset+L-1} in lexicographic order, shape (C(L,N), N)."""
    count = math.comb(L, N)
    out = np.empty((count, N), dtype=np.int64)
    for i, c in enumerate(itertools.combinations(range(L), N)):
        out[i] = c
    return out + offset


def rank_state(positions, L: int) -> int:
    """Lexicographic rank of a sorted N-subset of {0..L-1}; inverse of canonical_states."""
    N = len(positions)
    rank = 0
    prev = -1
    for i, p in enumerate(positions):
        for v in range(prev + 1, p):
            rank += math.comb(L - v - 1, N - i - 1)
        prev = p
    return rank
