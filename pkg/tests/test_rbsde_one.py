from __future__ import annotations

import numpy as np
import pytest

from conftest import random_barriers, random_fv
from rbsdelab.bsde import dynamics_residual, solve_bsde
from rbsdelab.errors import InvalidScenarioError
from rbsdelab.generators import linear, trig, zero
from rbsdelab.lattice import (
    BinomialTree,
    TreeFV,
    TreeProcess,
    decision_instants,
    enumerate_stopping_times,
    snell_envelope,
)
from rbsdelab.rbsde_one import minimality_residual_lower, minimality_terms, solve_lower, solve_upper


def test_inactive_lower_barrier_reduces_to_bsde(rng):
    tree = BinomialTree.build(1.0, 8)
    gen = trig(0.5, 0.3, 0.2)
    xi = rng.normal(size=9)
    L = TreeProcess.constant(tree, -1e6)
    sol = solve_lower(tree, xi, gen, None, L)
    plain = solve_bsde(tree, xi, gen)
    assert sol.Y.allclose(plain.Y, 0.0)
    assert sol.K.is_zero()


def test_zero_generator_is_snell_envelope(rng):
    tree = BinomialTree.build(1.0, 6)
    for _ in range(10):
        _, L, _ = random_barriers(rng, tree)
        xi = L.value[-1] + np.abs(rng.normal(size=7))
        G = TreeProcess(tree, L.value[:-1] + [xi], L.post[:-1] + [xi])
        S, _ = snell_envelope(G)
        sol = solve_lower(tree, xi, zero(), None, L)
        assert sol.Y.allclose(S, 1e-13)
        assert sol.K.is_nondecreasing()


def test_time_only_generator_folds_into_v(rng):
    tree = BinomialTree.build(1.0, 4)
    _, L, _ = random_barriers(rng, tree)
    xi = L.value[-1] + 0.3
    c = 0.7
    sol = solve_lower(tree, xi, linear(a0=c), None, L)
    V = TreeFV(tree, [np.full((k + 1, 2), c * tree.dt) for k in range(4)], [np.zeros(k + 1) for k in range(5)])
    folded = solve_lower(tree, xi, zero(), V, L)
    assert sol.Y.allclose(folded.Y, 1e-14)
    # with f = f(t), Y_0 = sup_tau E[V_tau + L_tau 1{tau < T} + xi 1{tau = T}]
    vpaths = V.path_values()
    lpaths = L.path_values()
    gain = lpaths + vpaths
    gain[:, -1] = xi[tree.paths()[:, -1]] + vpaths[:, -1]
    rules = enumerate_stopping_times(tree, decision_instants(tree))
    best = max(gain[np.arange(16), r].mean() for r in rules)
    assert sol.Y.value[0][0] == pytest.approx(best, abs=1e-12)


def test_lower_solution_properties(rng):
    tree = BinomialTree.build(1.0, 10)
    gen = trig(0.5, 0.3, 0.2)
    for _ in range(10):
        xi, L, _ = random_barriers(rng, tree)
        V = random_fv(rng, tree)
        sol = solve_lower(tree, xi, gen, V, L)
        assert L.le(sol.Y)
        assert sol.K.is_nondecreasing()
        assert dynamics_residual(sol.Y, sol.Z, gen, V, sol.K) <= 1e-12
        assert minimality_residual_lower(sol, L, V) <= 1e-12


def test_upper_is_mirror_of_lower(rng):
    tree = BinomialTree.build(1.0, 8)
    gen = trig(0.5, 0.3, 0.2)
    xi, _, U = random_barriers(rng, tree)
    V = random_fv(rng, tree)
    up = solve_upper(tree, xi, gen, V, U)
    assert up.Y.le(U)
    assert up.K.is_nondecreasing()
    assert dynamics_residual(up.Y, up.Z, gen, V, -up.K) <= 1e-12
    assert minimality_terms(up.Y, U, up.K, sign=-1.0) <= 1e-12


def test_minimality_detects_push_off_barrier(rng):
    tree = BinomialTree.build(1.0, 5)
    xi, L, _ = random_barriers(rng, tree)
    sol = solve_lower(tree, xi, zero(), None, L)
    extra = TreeFV(tree, [np.full((k + 1, 2), 0.01) for k in range(5)], [np.zeros(k + 1) for k in range(6)])
    sol.K = sol.K + extra
    assert minimality_residual_lower(sol, L) > 1e-4


def test_constant_shift_invariance(rng):
    tree = BinomialTree.build(1.0, 7)
    gen = trig(0.5, 0.3, 0.2)
    xi, L, _ = random_barriers(rng, tree)
    c = 0.8
    base = solve_lower(tree, xi, gen, None, L)
    shift = TreeProcess.constant(tree, c)
    moved = solve_lower(tree, xi + c, gen, None, L + shift, shift=shift)
    assert moved.Y.allclose(base.Y + shift, 1e-13)
    assert moved.Z.allclose(base.Z, 1e-13)


def test_k_split_into_continuous_and_jump_parts(rng):
    tree = BinomialTree.build(1.0, 6)
    xi, L, _ = random_barriers(rng, tree)
    sol = solve_lower(tree, xi, zero(), None, L)
    assert all(np.all(j == 0) for j in sol.K_star.jump)
    assert all(np.all(f == 0) for f in sol.K_d.flow)
    assert sol.abs_driver_sum().shape == (64,)


def test_terminal_below_barrier_rejected():
    tree = BinomialTree.build(1.0, 2)
    with pytest.raises(InvalidScenarioError):
        solve_lower(tree, -1.0, zero(), None, TreeProcess.constant(tree, 0.0))
