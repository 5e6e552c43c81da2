from __future__ import annotations

import numpy as np
import pytest

from conftest import random_barriers, random_fv
from rbsdelab.bsde import solve_bsde
from rbsdelab.errors import IterationLimitError
from rbsdelab.generators import cubic_monotone, linear, trig, zero
from rbsdelab.lattice import BinomialTree, TreeFV, TreeProcess, snell_envelope
from rbsdelab.rbsde_two import (
    PicardTrace,
    dynkin_enumeration,
    dynkin_oracle,
    dynkin_recursion,
    left_jump_minus,
    left_jump_plus,
    picard_solve,
    right_jump_minus,
    right_jump_plus,
    solve_clamped,
    solve_decoupled,
    subdivision_count,
    verify_solution,
)


def test_far_barriers_give_plain_bsde(rng):
    tree = BinomialTree.build(1.0, 8)
    gen = trig(0.5, 0.3, 0.2)
    xi = rng.normal(size=9)
    sol = solve_clamped(tree, xi, gen, None, TreeProcess.constant(tree, -1e6), TreeProcess.constant(tree, 1e6))
    assert sol.Y.allclose(solve_bsde(tree, xi, gen).Y, 0.0)
    assert sol.R.is_zero()


def test_equal_barriers_force_the_solution(rng):
    tree = BinomialTree.build(1.0, 6)
    _, B, _ = random_barriers(rng, tree)
    sol = solve_clamped(tree, B.value[-1], trig(0.5, 0.3, 0.2), None, B, B)
    assert sol.Y.allclose(B, 0.0)
    report = verify_solution(sol, B.value[-1], trig(0.5, 0.3, 0.2), None, B, B)
    assert report.ok()


def test_clamped_matches_dynkin_game(rng):
    tree = BinomialTree.build(1.0, 3)
    for _ in range(10):
        xi, L, U = random_barriers(rng, tree)
        V = random_fv(rng, tree)
        sol = solve_clamped(tree, xi, zero(), V, L, U)
        assert sol.Y.allclose(dynkin_recursion(tree, xi, L, U, V), 1e-14)
        value = dynkin_oracle(tree, xi, L, U, V, enumerate_rules=True)
        assert sol.Y.value[0][0] == pytest.approx(value, abs=1e-10)
        lo, hi = dynkin_enumeration(tree, xi, L, U, V)
        assert lo == pytest.approx(hi, abs=1e-10)


def test_decoupled_iterates_increase_and_agree(rng):
    tree = BinomialTree.build(1.0, 8)
    gen = linear(0.1, -0.5, 0.0)
    xi, L, U = random_barriers(rng, tree)
    V = random_fv(rng, tree)
    ref = solve_clamped(tree, xi, gen, V, L, U)
    sol, state = solve_decoupled(tree, xi, gen, V, L, U)
    assert state.monotone(tol=1e-12)
    assert sol.Y.allclose(ref.Y, 1e-10)
    assert sol.Z.allclose(ref.Z, 1e-10)
    assert (sol.R - ref.R).max_abs() <= 1e-10


def test_decoupled_rejects_z_dependence(rng):
    tree = BinomialTree.build(1.0, 3)
    xi, L, U = random_barriers(rng, tree)
    with pytest.raises(ValueError):
        solve_decoupled(tree, xi, trig(0.5, 0.3, 0.0), None, L, U)
    with pytest.raises(IterationLimitError):
        solve_decoupled(tree, xi, zero(), None, L, U, max_iter=1, tol=0.0)


def test_subdivision_count():
    assert subdivision_count(0.4, 1.0, 100) == 1
    assert subdivision_count(1.0, 1.0, 100) == 4
    assert subdivision_count(4.0, 1.0, 64) == 64
    assert subdivision_count(4.0, 1.0, 16) == 16


def test_picard_matches_clamped_fixed_point(rng):
    tree = BinomialTree.build(1.0, 8)
    gen = trig(0.5, 0.4, 0.2)
    xi, L, U = random_barriers(rng, tree)
    V = random_fv(rng, tree)
    trace = PicardTrace([])
    sol = picard_solve(tree, xi, gen, V, L, U, trace=trace)
    ref = solve_clamped(tree, xi, gen, V, L, U)
    assert sol.Y.allclose(ref.Y, 1e-10) and sol.Z.allclose(ref.Z, 1e-10)
    # with lam sqrt(T) <= 1/2 the increments contract
    incs = [x for x in trace.increments[0] if x > 1e-12]
    assert all(b <= 0.75 * a for a, b in zip(incs, incs[1:]))
    z = TreeProcess(tree, [v.copy() for v in sol.Z.value])
    assert verify_solution(sol, xi, gen, V, L, U, zgen=z).ok()


def test_picard_decoupled_inner(rng):
    tree = BinomialTree.build(1.0, 6)
    gen = trig(0.5, 0.3, 0.1)
    xi, L, U = random_barriers(rng, tree)
    a = picard_solve(tree, xi, gen, None, L, U, inner="decoupled")
    b = solve_clamped(tree, xi, gen, None, L, U)
    assert a.Y.allclose(b.Y, 1e-9)


def test_subdivision_needed_for_large_lipschitz_constant():
    tree = BinomialTree.build(1.0, 64)
    gen = trig(0.5, 4.0, 0.2)
    L = TreeProcess.constant(tree, -0.7)
    U = TreeProcess.constant(tree, 0.8)
    xi = np.clip(np.sin(2 * tree.walk(64)), -0.7, 0.8)
    sol = picard_solve(tree, xi, gen, None, L, U, max_iter=20)
    assert verify_solution(sol, xi, gen, None, L, U).ok()
    trace = PicardTrace([])
    with pytest.raises(IterationLimitError):
        picard_solve(tree, xi, gen, None, L, U, subdivide=False, max_iter=20, trace=trace)
    # on the whole horizon the increments do not contract
    incs = trace.increments[0]
    assert max(incs[5:]) > 0.5 * incs[0]


def test_verify_flags_tampered_solution(rng):
    tree = BinomialTree.build(1.0, 6)
    gen = trig(0.5, 0.3, 0.2)
    xi, L, U = random_barriers(rng, tree)
    V = random_fv(rng, tree)
    sol = solve_clamped(tree, xi, gen, V, L, U)
    assert verify_solution(sol, xi, gen, V, L, U).ok()
    bumped = TreeFV(tree, [np.full((k + 1, 2), 0.05) for k in range(6)], [np.zeros(k + 1) for k in range(7)])
    sol.Rplus = sol.Rplus + bumped
    report = verify_solution(sol, xi, gen, V, L, U)
    assert not report.ok()
    assert report.jump_identities > 1e-3 and report.dynamics > 1e-3


def test_jump_identity_helpers():
    assert left_jump_plus(0.2, 0.5, 0.0) == pytest.approx(0.3)
    assert left_jump_plus(0.7, 0.5, 0.0) == 0.0
    assert left_jump_minus(0.9, 0.5, 0.1) == pytest.approx(0.5)
    assert right_jump_plus(0.0, 0.4, 0.1) == pytest.approx(0.3)
    assert right_jump_minus(1.0, 0.4, -0.1) == pytest.approx(0.5)


def test_comparison_of_two_barrier_solutions(rng):
    tree = BinomialTree.build(1.0, 8)
    gen1, gen2 = cubic_monotone(1.0, 0.3, 0.0), cubic_monotone(1.0, 0.3, 0.2)
    for _ in range(10):
        xi, L, U = random_barriers(rng, tree)
        lift = TreeProcess(tree, [np.abs(rng.normal(size=k + 1)) * 0.2 for k in range(9)])
        L2, U2 = L.maximum(L + lift), U + lift
        xi2 = np.minimum(xi + 0.1, U2.value[-1])
        y1 = solve_clamped(tree, xi, gen1, None, L, U).Y
        y2 = solve_clamped(tree, xi2, gen2, None, L2, U2).Y
        assert y1.le(y2)


def test_picard_settles_at_once_without_z(rng):
    tree = BinomialTree.build(1.0, 8)
    gen = linear(0.1, -0.5, 0.0)
    xi, L, U = random_barriers(rng, tree)
    trace = PicardTrace([])
    sol = picard_solve(tree, xi, gen, None, L, U, trace=trace)
    assert trace.increments == [[0.0]]
    assert sol.Y.allclose(solve_clamped(tree, xi, gen, None, L, U).Y, 0.0)


def test_picard_geometric_decay_linear_generator(rng):
    tree = BinomialTree.build(1.0, 16)
    gen = linear(0.0, -1.0, 0.5)
    xi, L, U = random_barriers(rng, tree)
    trace = PicardTrace([])
    picard_solve(tree, xi, gen, None, L, U, trace=trace)
    assert len(trace.pieces) == 1
    ratios = [r for r in trace.ratios()[0] if np.isfinite(r)]
    assert ratios and max(ratios[:5]) < 1.0


def test_dynkin_oracle_reductions(rng):
    small = BinomialTree.build(1.0, 3)
    _, B, _ = random_barriers(rng, small)
    assert dynkin_oracle(small, B.value[-1], B, B) == pytest.approx(B.value[0][0], abs=1e-14)
    tree = BinomialTree.build(1.0, 4)
    _, L, _ = random_barriers(rng, tree, right_jumps=False)
    xi = L.value[-1] + 0.2
    far = TreeProcess.constant(tree, 1e9)
    G = TreeProcess(tree, L.value[:-1] + [xi])
    S, _ = snell_envelope(G)
    assert dynkin_oracle(tree, xi, L, far) == pytest.approx(S.value[0][0], abs=1e-10)
