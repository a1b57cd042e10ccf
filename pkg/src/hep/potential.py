"""Interaction potential, Boltzmann factors, HEP jump rates and ZRP rates.

A :class:`PotentialSpec` is one object with four consistent views::

    J(r)  ->  y_r = exp(-J(r))  ->  w_n = w * y_n / y_{n+1}  and  g_k = y_k / y_{k+1}

Everything is evaluated in the log domain from ``log_y``.  The families carry
an exact description of the asymptotic form of ``g_k`` (its *tail*), which the
series code uses for exact remainders and for the radius of convergence.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import gammaln

from .errors import InfinitePotentialError, InvalidConfigurationError

_STIRLING_FROM = 10.0


def log_gamma_ratio(x, b: float) -> np.ndarray:
    """log Gamma(x + b) - log Gamma(x) for x > 0, x + b > 0.

    Plain gammaln differences cancel badly for large x; beyond x = 10 the
    Stirling series is differenced analytically instead, which keeps the
    result accurate to a few ulps of b log x.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < _STIRLING_FROM
    out[small] = gammaln(x[small] + b) - gammaln(x[small])
    xl = x[~small]
    if xl.size:
        y = xl + b

        def corr(z):
            zi2 = 1.0 / (z * z)
            # Stirling correction through z^-11; the next term is below 1e-15 at z = 10
            c = (1 / 1188 - zi2 * (691 / 360360))
            return (1 / 12 - zi2 * (1 / 360 - zi2 * (1 / 1260 - zi2 * (1 / 1680 - zi2 * c)))) / z

        out[~small] = ((xl + b - 0.5) * np.log1p(b / xl) + b * np.log(xl) - b
                       + (corr(y) - corr(xl)))
    return out


@dataclass(frozen=True)
class Tail:
    """Exact form of g_k for k >= start.

    ``kind == "geometric"``: g_k = c.
    ``kind == "harmonic"``:  g_k = 1 + b/k.
    """

    kind: str
    start: int
    c: float = 1.0
    b: float = 0.0

    @property
    def g_limit(self) -> float:
        return self.c if self.kind == "geometric" else 1.0


@dataclass(frozen=True)
class PotentialSpec:
    family: str                       # "constant" | "bfamily" | "table"
    b: float = 0.0                    # bfamily parameter, or b of a bfamily tail
    J_table: tuple[float, ...] = ()   # J(1), ..., J(m) for tables
    tail_rule: str = "constant"       # "constant" | "linear" | "bfamily"
    w: float = 1.0
    r: float = 1.0
    l: float = 0.0
    depth: int = 4096

    def __post_init__(self):
        if self.family not in ("constant", "bfamily", "table"):
            raise InvalidConfigurationError(f"unknown potential family {self.family!r}")
        if self.w <= 0:
            raise InvalidConfigurationError("time scale w must be positive")
        if self.r < 0 or self.l < 0:
            raise InvalidConfigurationError("asymmetry parameters must be nonnegative")
        if self.family == "bfamily" and self.b <= -1:
            raise InvalidConfigurationError("bfamily needs b > -1 so that g_1 > 0")
        if self.family == "table":
            if not self.J_table:
                raise InvalidConfigurationError("table potential needs at least J(1)")
            if self.tail_rule not in ("constant", "linear", "bfamily"):
                raise InvalidConfigurationError(f"unknown tail rule {self.tail_rule!r}")
            if self.tail_rule == "linear" and len(self.J_table) < 2:
                raise InvalidConfigurationError("linear tail needs J(1) and J(2)")
        object.__setattr__(self, "J_table", tuple(float(v) for v in self.J_table))

    # -- the log_y primitive ------------------------------------------------

    def log_y(self, r) -> np.ndarray:
        """log of the Boltzmann factor y_r; -inf at r = 0 (and where J = +inf)."""
        r = np.asarray(r, dtype=np.int64)
        scalar = r.ndim == 0
        r = np.atleast_1d(r)
        if np.any(r < 0):
            raise ValueError("distances must be nonnegative")
        out = np.full(r.shape, -np.inf)
        pos = r >= 1
        rp = r[pos].astype(float)
        if self.family == "constant":
            vals = np.zeros_like(rp)
        elif self.family == "bfamily":
            vals = gammaln(self.b + 1.0) - log_gamma_ratio(rp, self.b)
        else:
            vals = self._table_log_y(r[pos])
        out[pos] = vals
        return out[0] if scalar else out

    def _table_log_y(self, r: np.ndarray) -> np.ndarray:
        J = np.asarray(self.J_table)
        m = len(J)
        out = np.empty(r.shape)
        inside = r <= m
        out[inside] = -J[r[inside] - 1]
        rr = r[~inside].astype(float)
        if rr.size:
            last = -J[m - 1]
            if self.tail_rule == "constant":
                out[~inside] = last
            elif self.tail_rule == "linear":
                slope = J[m - 1] - J[m - 2]
                out[~inside] = last - (rr - m) * slope
            else:
                b = self.b
                out[~inside] = last - log_gamma_ratio(rr, b) + log_gamma_ratio(float(m), b)
        return out

    # -- derived views --------------------------------------------------------

    def y(self, r) -> np.ndarray:
        return np.exp(self.log_y(r))

    def J(self, r) -> np.ndarray:
        return -self.log_y(r)

    def log_g(self, k) -> np.ndarray:
        """log of the ZRP departure rate g_k = y_k/y_{k+1}; -inf at k = 0."""
        k = np.asarray(k, dtype=np.int64)
        with np.errstate(invalid="ignore"):
            out = self.log_y(k) - self.log_y(k + 1)
        out = np.where(k == 0, -np.inf, out)
        if np.any(np.isnan(out)):
            raise InfinitePotentialError("J(k) = inf at finite k: rates are undefined")
        return out[()] if out.ndim == 0 else out

    def g(self, k) -> np.ndarray:
        return np.exp(self.log_g(k))

    def rate(self, n) -> np.ndarray:
        """HEP jump rate w_n = w * g_n (w_0 = 0)."""
        return self.w * self.g(n)

    def log_tau(self, m) -> np.ndarray:
        """log of tau_m = prod_{k<=m} 1/g_k = y_{m+1}/y_1."""
        m = np.asarray(m, dtype=np.int64)
        return self.log_y(m + 1) - self.log_y(1)

    @property
    def tail(self) -> Tail:
        if self.family == "constant":
            return Tail("geometric", 1, c=1.0)
        if self.family == "bfamily":
            if self.b == 0:
                return Tail("geometric", 1, c=1.0)
            return Tail("harmonic", 1, b=self.b)
        m = len(self.J_table)
        if self.tail_rule == "constant":
            return Tail("geometric", m, c=1.0)
        if self.tail_rule == "linear":
            return Tail("geometric", m - 1, c=math.exp(self.J_table[-1] - self.J_table[-2]))
        if self.b == 0:
            return Tail("geometric", m, c=1.0)
        return Tail("harmonic", m, b=self.b)

    @property
    def z_c(self) -> float:
        """Radius of convergence of sum_m z^m tau_m, i.e. lim g_k."""
        return self.tail.g_limit

    def with_(self, **changes) -> PotentialSpec:
        kw = {f: getattr(self, f) for f in
              ("family", "b", "J_table", "tail_rule", "w", "r", "l", "depth")}
        kw.update(changes)
        return PotentialSpec(**kw)

    def to_dict(self) -> dict:
        d = {"family": self.family, "w": self.w, "r": self.r, "l": self.l, "depth": self.depth}
        if self.family == "bfamily":
            d["b"] = self.b
        if self.family == "table":
            d["J"] = list(self.J_table)
            d["tail"] = self.tail_rule
            if self.tail_rule == "bfamily":
                d["tail_b"] = self.b
        return d


# -- constructors -------------------------------------------------------------

def constant_potential(w: float = 1.0, r: float = 1.0, l: float = 0.0, depth: int = 4096) -> PotentialSpec:
    """J(r) = 0: every rate equals w, the classical exclusion process."""
    return PotentialSpec("constant", w=w, r=r, l=l, depth=depth)


def bfamily_potential(b: float, depth: int = 4096, w: float = 1.0, r: float = 1.0,
                      l: float = 0.0) -> PotentialSpec:
    """Potential whose ZRP rates are exactly g_k = 1 + b/k, with y_1 = 1."""
    if depth < 1:
        raise InvalidConfigurationError("depth must be at least 1")
    return PotentialSpec("bfamily", b=float(b), w=w, r=r, l=l, depth=depth)


def table_potential(J, tail: str = "constant", tail_b: float = 0.0, w: float = 1.0,
                    r: float = 1.0, l: float = 0.0) -> PotentialSpec:
    """Explicit J(1..m); beyond m the potential follows ``tail``.

    ``constant`` keeps J(r) = J(m), ``linear`` continues the last slope and
    ``bfamily`` continues with g_k = 1 + tail_b/k.
    """
    J = tuple(float(v) for v in J)
    return PotentialSpec("table", b=float(tail_b), J_table=J, tail_rule=tail, w=w, r=r, l=l,
                         depth=len(J))


def log_potential(depth: int = 64, w: float = 1.0, r: float = 1.0, l: float = 0.0) -> PotentialSpec:
    """J(r) = ln r, i.e. y_r = 1/r and g_k = (k+1)/k."""
    J = np.log(np.arange(1, depth + 1))
    return table_potential(J, tail="bfamily", tail_b=1.0, w=w, r=r, l=l)


def geometric_potential(c: float, w: float = 1.0, r: float = 1.0, l: float = 0.0) -> PotentialSpec:
    """Linear potential J(r) = (r-1) ln c, so that g_k = c for all k >= 1."""
    return table_potential([0.0, math.log(c)], tail="linear", w=w, r=r, l=l)


def potential_from_dict(d: dict) -> PotentialSpec:
    fam = d.get("family")
    common = {k: float(d[k]) for k in ("w", "r", "l") if k in d}
    if fam == "constant":
        return constant_potential(**common)
    if fam == "bfamily":
        return bfamily_potential(float(d["b"]), depth=int(d.get("depth", 4096)), **common)
    if fam == "table":
        return table_potential(d["J"], tail=d.get("tail", "constant"),
                               tail_b=float(d.get("tail_b", 0.0)), **common)
    raise InvalidConfigurationError(f"unknown potential family {fam!r}")


def load_potential(path) -> PotentialSpec:
    with open(Path(path)) as fh:
        return potential_from_dict(json.load(fh))


# -- the pipeline as free functions ------------------------------------------

def boltzmann_from_potential(J) -> np.ndarray:
    """[y_0, y_1, ..., y_m] from J(1..m); y_0 = 0 encodes exclusion."""
    J = np.asarray(J, dtype=float)
    with np.errstate(over="ignore"):
        return np.concatenate([[0.0], np.exp(-J)])


def rates_from_potential(spec: PotentialSpec, n_max: int | None = None) -> np.ndarray:
    """[w_0, ..., w_{n_max}] with w_0 = 0 and w_n = w y_n / y_{n+1}."""
    n_max = spec.depth if n_max is None else n_max
    ly = spec.log_y(np.arange(1, n_max + 2))
    if np.any(np.isneginf(ly)):
        raise InfinitePotentialError("some y_r vanishes (J(r) = inf) for finite r")
    out = np.zeros(n_max + 1)
    out[1:] = spec.w * np.exp(ly[:-1] - ly[1:])
    return out


def zrp_rates(spec: PotentialSpec, k_max: int | None = None) -> np.ndarray:
    """[g_0, ..., g_{k_max}] with g_0 = 0 and g_k = y_k / y_{k+1}."""
    return rates_from_potential(spec, k_max) / spec.w


def check_bounded_rates(spec: PotentialSpec, n_max: int | None = None, warn: bool = True):
    """Check that {y_n/y_{n+1}} is bounded (the "limited sequence" hypothesis).

    Returns (ok, sup over the checked range).  Geometric and harmonic tails are
    bounded by construction, so only the stored part needs checking.
    """
    n_max = spec.depth if n_max is None else n_max
    g = zrp_rates(spec, n_max)
    sup = float(np.max(g[1:])) if n_max >= 1 else 0.0
    ok = bool(np.all(np.isfinite(g)))
    if not ok and warn:
        warnings.warn("rates y_n/y_{n+1} are not bounded on the stored range", RuntimeWarning)
    return ok, sup


def check_zrp_well_defined(spec: PotentialSpec, k_max: int | None = None) -> bool:
    """sup_k |g_{k+1} - g_k| < inf and g_k > 0 for k >= 1, on the stored range."""
    g = zrp_rates(spec, k_max)
    return bool(np.all(g[1:] > 0) and np.all(np.isfinite(np.diff(g))))
