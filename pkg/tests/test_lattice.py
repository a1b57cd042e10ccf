from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hep.errors import HeadwaysUndefinedError, InvalidConfigurationError, InvalidMoveError
from hep.lattice import (INF, CoordinateConfiguration, TorusConfiguration, apply_swap,
                         canonical_states, coords_from_occupation, headway_at, headway_indicator,
                         headways, occupation_from_coords, parse_coords, parse_torus, rank_state,
                         torus_from_positions)


def torus(bits: str) -> TorusConfiguration:
    return parse_torus(bits)


@st.composite
def torus_configs(draw, max_L=12):
    L = draw(st.integers(1, max_L))
    occ = draw(st.lists(st.integers(0, 1), min_size=L, max_size=L))
    return TorusConfiguration(L, tuple(occ))


def test_coords_from_occupation_examples():
    assert coords_from_occupation(torus("01010")).positions == (1, 3)
    assert coords_from_occupation(torus("0000")).positions == ()
    assert coords_from_occupation(torus("101100")).positions == (0, 2, 3)


def test_occupation_from_coords_examples():
    assert str(occupation_from_coords(CoordinateConfiguration((1, 3), 5))) == "01010"
    assert str(occupation_from_coords(CoordinateConfiguration((), 3))) == "000"
    assert str(occupation_from_coords(CoordinateConfiguration((0, 2, 3), 6))) == "101100"


def test_invalid_coordinates_rejected():
    with pytest.raises(InvalidConfigurationError):
        CoordinateConfiguration((1, 1), 5)
    with pytest.raises(InvalidConfigurationError):
        CoordinateConfiguration((0, 5), 5)
    with pytest.raises(InvalidConfigurationError):
        torus_from_positions(5, [3, 1, 3])
    with pytest.raises(InvalidConfigurationError):
        TorusConfiguration(3, (0, 2, 0))
    with pytest.raises(InvalidConfigurationError):
        TorusConfiguration(3, (0, 1))


def test_headway_examples():
    assert headways(CoordinateConfiguration((1, 3), 5)) == (1, 2)
    assert headways(CoordinateConfiguration((0, 1, 2, 3), 4)) == (0, 0, 0, 0)
    line = headways(CoordinateConfiguration((0, 4, 5)))
    assert line[:2] == (3, 0) and line[2] is INF
    with pytest.raises(HeadwaysUndefinedError):
        headways(CoordinateConfiguration((), 4))


def test_line_headways_match_gap_count():
    rng = np.random.default_rng(3)
    for _ in range(200):
        pos = np.sort(rng.choice(60, size=rng.integers(1, 8), replace=False)) - 20
        h = headways(CoordinateConfiguration(tuple(int(p) for p in pos)))
        for i in range(len(pos) - 1):
            assert h[i] == sum(1 for s in range(pos[i] + 1, pos[i + 1]))
        assert h[-1] is INF


def test_headway_indicator_examples():
    cfg = torus("01010")
    assert headway_indicator(cfg, 1, 1) == 1
    assert headway_indicator(cfg, 3, 2) == 1
    assert headway_indicator(cfg, 1, 2) == 0
    empty = torus("00000")
    assert all(headway_indicator(empty, x, n) == 0 for x in range(5) for n in range(5))


def test_single_particle_headway():
    assert headway_at(torus("00100"), 2) == 4


def test_apply_swap_examples():
    assert str(apply_swap(torus("100"), 0, 1)) == "010"
    assert str(apply_swap(torus("110"), 0, 1)) == "110"
    assert str(apply_swap(torus("1001"), 3, 0)) == "1001"
    assert str(apply_swap(torus("1000"), 0, 3)) == "0001"
    with pytest.raises(InvalidMoveError):
        apply_swap(torus("1000"), 0, 2)


def test_literals_round_trip():
    assert str(parse_torus("0110")) == "0110"
    assert str(parse_coords("1,4,7")) == "1,4,7"
    assert parse_coords("", 5).N == 0
    with pytest.raises(InvalidConfigurationError):
        parse_torus("01a")


def test_reflection_and_shift():
    cfg = torus("110100")
    assert str(cfg.reflected()) == "001011"
    assert str(cfg.shifted(1)) == "011010"
    assert cfg.shifted(6) == cfg


def test_canonical_states_and_rank():
    for L in range(1, 9):
        for N in range(L + 1):
            states = canonical_states(L, N)
            assert len(states) == math.comb(L, N)
            expected = list(itertools.combinations(range(L), N))
            assert [tuple(s) for s in states] == expected
            for i, s in enumerate(states):
                assert rank_state(tuple(s), L) == i


@settings(max_examples=300, deadline=None)
@given(torus_configs())
def test_round_trip(cfg):
    assert occupation_from_coords(coords_from_occupation(cfg)) == cfg


@settings(max_examples=300, deadline=None)
@given(torus_configs())
def test_headway_sum(cfg):
    if cfg.N == 0:
        return
    assert sum(headways(coords_from_occupation(cfg))) == cfg.L - cfg.N


@settings(max_examples=300, deadline=None)
@given(torus_configs())
def test_exactly_one_headway_per_particle(cfg):
    for x in range(cfg.L):
        total = sum(headway_indicator(cfg, x, n) for n in range(cfg.L))
        assert total == cfg[x]


@settings(max_examples=200, deadline=None)
@given(torus_configs(), st.data())
def test_swap_preserves_particle_number(cfg, data):
    if cfg.L < 2:
        return
    x = data.draw(st.integers(0, cfg.L - 1))
    y = (x + data.draw(st.sampled_from([1, -1]))) % cfg.L
    assert apply_swap(cfg, x, y).N == cfg.N
