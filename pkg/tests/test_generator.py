from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.sparse as sp

from hep.errors import DegenerateSpaceError, InvalidConfigurationError, ReducibleChainError
from hep.generator import (IntensityMatrix, balance_residual, build_full_generator,
                           build_hep_generator, build_tahep_line_generator,
                           invariance_solution_space, reflection_condition_check,
                           reflection_symmetric_rates, stationary_distribution, total_variation)
from hep.measures import canonical_measure, grand_canonical_measure
from hep.potential import bfamily_potential, constant_potential, log_potential


def state_index(gen: IntensityMatrix, positions) -> int:
    return int(np.flatnonzero((gen.states == np.asarray(positions)).all(axis=1))[0])


def test_single_particle_rotation():
    gen = build_hep_generator(3, 1, constant_potential(w=1.7))
    Q = gen.Q.toarray()
    expected = 1.7 * (np.roll(np.eye(3), 1, axis=1) - np.eye(3))
    assert np.allclose(Q, expected)
    assert np.allclose(stationary_distribution(gen).probabilities, 1 / 3)


def test_blocked_and_exit_rates():
    gen = build_hep_generator(4, 2, constant_potential())
    Q = gen.Q.toarray()
    i = state_index(gen, (0, 1))
    # the particle at 0 has headway 0: only the particle at 1 moves
    assert Q[i, state_index(gen, (0, 2))] == pytest.approx(1.0)
    assert np.count_nonzero(Q[i]) == 2
    assert -Q[state_index(gen, (0, 2)), state_index(gen, (0, 2))] == pytest.approx(2.0)


def test_degenerate_spaces_rejected():
    for L, N in ((4, 0), (4, 4), (1, 1)):
        with pytest.raises(DegenerateSpaceError):
            build_hep_generator(L, N, constant_potential())


@pytest.mark.parametrize("spec", [log_potential(r=0.7, l=0.3), bfamily_potential(4.0, r=1.0, l=1.0)])
def test_generator_structure(spec):
    for L in range(2, 9):
        for N in range(1, L):
            gen = build_hep_generator(L, N, spec)
            assert gen.dimension == math.comb(L, N)
            assert np.max(np.abs(gen.row_sums())) <= 1e-12
            assert np.all(gen.off_diagonal_counts() <= 2 * N)
            off = gen.Q - sp.diags(gen.Q.diagonal())
            assert off.min() >= 0


def test_uniform_under_constant_rates():
    for L, N in ((5, 2), (7, 3), (8, 5)):
        mu = stationary_distribution(build_hep_generator(L, N, constant_potential(r=0.6, l=0.4)))
        assert np.allclose(mu.probabilities, 1 / math.comb(L, N), atol=1e-13)


def test_stationary_equals_headway_measure():
    spec = log_potential()
    gen = build_hep_generator(6, 3, spec)
    mu = stationary_distribution(gen)
    can = canonical_measure(6, 3, spec)
    assert np.array_equal(mu.states, can.states)
    assert np.max(np.abs(mu.probabilities - can.probabilities)) <= 1e-10
    assert balance_residual(mu, gen) <= 1e-12


def test_balance_residual_examples():
    spec = log_potential()
    gen = build_hep_generator(5, 2, spec)
    uniform = np.full(gen.dimension, 1 / gen.dimension)
    assert balance_residual(uniform, gen) > 1e-3
    point = np.zeros(gen.dimension)
    k = state_index(gen, (0, 2))
    point[k] = 1.0
    assert balance_residual(point, gen) == pytest.approx(-gen.Q[k, k], rel=1e-14)


def test_grand_canonical_measure_is_stationary_for_full_generator():
    spec = bfamily_potential(4.0, r=0.8, l=0.2)
    L = 6
    gen = build_full_generator(L, spec)
    gc = grand_canonical_measure(L, 0.7, spec)
    assert np.array_equal(gen.states, gc.states)
    assert balance_residual(gc, gen) <= 1e-14


def test_reducible_chain_rejected():
    Q = sp.csr_matrix(np.array([[-1.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]))
    gen = IntensityMatrix(Q, np.arange(3)[:, None], np.zeros(3), "test", {})
    with pytest.raises(ReducibleChainError):
        stationary_distribution(gen)


def test_line_generator_examples():
    spec = bfamily_potential(4.0, w=1.5)
    one = build_tahep_line_generator(1, (0, 4), spec)
    Q = one.Q.toarray()
    for x in range(4):
        assert Q[x, x + 1] == pytest.approx(1.5)
    assert one.leak[-1] == pytest.approx(1.5) and np.all(one.leak[:-1] == 0)

    gen = build_tahep_line_generator(2, (0, 5), spec)
    Q = gen.Q.toarray()
    i = state_index(gen, (0, 1))
    assert Q[i, state_index(gen, (0, 2))] == pytest.approx(1.5)
    assert np.count_nonzero(Q[i]) == 2
    j = state_index(gen, (0, 2))
    assert Q[j, state_index(gen, (1, 2))] == pytest.approx(5 * 1.5)
    assert Q[j, state_index(gen, (0, 3))] == pytest.approx(1.5)
    assert np.allclose(gen.row_sums(), -gen.leak)
    with pytest.raises(InvalidConfigurationError):
        build_tahep_line_generator(4, (0, 2), spec)


def test_reflection_check_for_derived_rates():
    for spec in (constant_potential(), log_potential(), bfamily_potential(4.0)):
        for L in range(3, 40):
            assert reflection_condition_check(L, spec) <= 1e-12


def test_perturbed_rates_break_reflection():
    spec = log_potential()
    w = np.concatenate([[0.0], np.exp(spec.log_y(np.arange(1, 8)) - spec.log_y(np.arange(2, 9)))])
    w[1] *= 2
    assert reflection_condition_check(3, spec, rates=w) == 0.0
    assert max(reflection_condition_check(L, spec, rates=w) for L in range(4, 8)) > 0.1


def test_reflection_symmetric_family():
    spec = log_potential()
    L0 = 5
    w = reflection_symmetric_rates(L0, spec, n_max=L0 + 1)
    assert reflection_condition_check(L0, spec, rates=w) <= 1e-14
    assert reflection_condition_check(L0 + 1, spec, rates=w) > 0.1
    mu = stationary_distribution(build_hep_generator(L0, 2, spec, rates=w))
    assert total_variation(mu.probabilities, canonical_measure(L0, 2, spec).probabilities) <= 1e-10
    mu6 = stationary_distribution(build_hep_generator(L0 + 1, 2, spec, rates=w))
    assert total_variation(mu6.probabilities, canonical_measure(L0 + 1, 2, spec).probabilities) > 1e-3


def test_invariance_fixes_rates_up_to_scale():
    spec = bfamily_potential(4.0)
    basis = invariance_solution_space(range(3, 9), spec)
    assert basis.shape[1] == 1
    k = np.arange(1, basis.shape[0] + 1)
    expected = np.exp(spec.log_y(k) - spec.log_y(k + 1))
    v = basis[:, 0] / basis[0, 0] * expected[0]
    assert np.allclose(v, expected, rtol=1e-8)
    assert invariance_solution_space([5], spec).shape[1] == 2
