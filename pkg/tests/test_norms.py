from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_barriers, random_fv, random_process
from rbsdelab.generators import trig
from rbsdelab.lattice import (
    BinomialTree,
    TreeFV,
    TreeProcess,
    decision_instants,
    enumerate_stopping_times,
)
from rbsdelab.norms import (
    classD_norm,
    doob_decomposition,
    expectation_over_leaves,
    hp_norm,
    median_witness,
    mokobodzki_check,
    norm_report,
    quadratic_sum,
    sup_moment_check,
    sp_norm,
    total_variation,
    vp_norm,
)


def _walk(tree):
    return TreeProcess(tree, [tree.walk(k) for k in range(tree.steps + 1)])


def test_sp_norm_examples():
    tree = BinomialTree.build(1.0, 4)
    assert sp_norm(TreeProcess.constant(tree, -2.5), 3.0) == pytest.approx(2.5)
    values = [np.full(k + 1, v) for k, v in enumerate([0.1, -0.3, 0.2, 0.0, 0.4])]
    posts = [v + d for v, d in zip(values, [0.0, -0.6, 0.0, 0.0, 0.0])]
    assert sp_norm(TreeProcess(tree, values, posts), 2.0) == pytest.approx(0.9)
    B = _walk(tree)
    paths = tree.paths()
    sup = np.abs(np.stack([tree.walk(k)[paths[:, k]] for k in range(5)], axis=1)).max(axis=1)
    assert sp_norm(B, 2.0) == pytest.approx(np.sqrt(np.mean(sup**2)), abs=1e-15)
    with pytest.raises(ValueError):
        sp_norm(B, 0.5)


def test_hp_norm_examples(rng):
    tree = BinomialTree.build(2.0, 4)
    assert hp_norm(TreeProcess.zeros(tree), 2.0) == 0.0
    assert hp_norm(TreeProcess.constant(tree, 1.0), 2.0) == pytest.approx(np.sqrt(2.0))
    Z = random_process(rng, tree, right_jumps=False)
    paths = tree.paths()
    total = sum(Z.value[k][paths[:, k]] ** 2 * tree.dt for k in range(4))
    assert hp_norm(Z, 1.0) == pytest.approx(np.mean(np.sqrt(total)), abs=1e-14)
    assert hp_norm(Z, 0.5) == pytest.approx(np.mean(total**0.25), abs=1e-14)
    assert np.allclose(quadratic_sum(Z), total)
    with pytest.raises(ValueError):
        hp_norm(Z, 0.0)


def test_vp_norm_counts_flow_and_jumps():
    tree = BinomialTree.build(1.0, 2)
    R = TreeFV(tree, [np.array([[1.0, -1.0]]), np.array([[0.5, 0.5], [-0.5, 0.5]])], [np.array([-2.0]), np.zeros(2), np.zeros(3)])
    assert np.allclose(total_variation(R), [3.5, 3.5, 3.5, 3.5])
    assert vp_norm(R, 2.0) == pytest.approx(3.5)


def test_class_d_examples(rng):
    tree = BinomialTree.build(1.0, 4)
    assert classD_norm(TreeProcess.constant(tree, -1.5)) == pytest.approx(1.5)
    # |B|^2 is a submartingale: stopping at the end is optimal
    sq = TreeProcess(tree, [tree.walk(k) ** 2 for k in range(5)])
    assert classD_norm(sq) == pytest.approx(1.0, abs=1e-14)
    rules = enumerate_stopping_times(tree, decision_instants(tree))
    for _ in range(5):
        X = random_process(rng, tree)
        vals = np.abs(X.path_values())
        best = max(vals[np.arange(16), r].mean() for r in rules)
        assert classD_norm(X) == pytest.approx(best, abs=1e-12)
        assert classD_norm(X) <= sp_norm(X, 1.0) + 1e-15


def test_sup_moment_bound_examples():
    tree = BinomialTree.build(1.0, 6)
    lhs, rhs, ok = sup_moment_check(TreeProcess.constant(tree, 1.0), 0.5)
    assert (lhs, rhs, ok) == (pytest.approx(1.0), pytest.approx(2.0), True)
    assert sup_moment_check(_walk(tree), 0.5)[2]
    assert sup_moment_check(_walk(tree), 0.999)[1] > 100
    with pytest.raises(ValueError):
        sup_moment_check(_walk(tree), 1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10.0))
def test_homogeneity_and_domination(seed, c):
    rng = np.random.default_rng(seed)
    tree = BinomialTree.build(1.0, 5)
    X = random_process(rng, tree)
    cX = X * c
    assert sp_norm(cX, 2.0) == pytest.approx(c * sp_norm(X, 2.0), rel=1e-12)
    assert hp_norm(cX, 2.0) == pytest.approx(c * hp_norm(X, 2.0), rel=1e-12)
    assert classD_norm(cX) == pytest.approx(c * classD_norm(X), rel=1e-12)
    R = random_fv(rng, tree)
    assert vp_norm(R + R, 1.5) == pytest.approx(2 * vp_norm(R, 1.5), rel=1e-12)
    big = abs(X) + TreeProcess.constant(tree, 0.1)
    assert sp_norm(X, 3.0) <= sp_norm(big, 3.0)
    assert classD_norm(X) <= classD_norm(big)


def test_norm_report_non_negative(rng):
    tree = BinomialTree.build(1.0, 4)
    rep = norm_report(random_process(rng, tree), random_process(rng, tree), random_fv(rng, tree), 2.0)
    assert min(rep.sp, rep.hp, rep.vp, rep.classD) >= 0


def test_mokobodzki_witnesses(rng):
    tree = BinomialTree.build(1.0, 5)
    gen = trig(0.5, 0.3, 0.2)
    _, L, U = random_barriers(rng, tree)
    mid = (L + U) * 0.5
    assert mokobodzki_check(mid, L, U, gen).passed
    rep = mokobodzki_check(None, L, U, gen)
    assert rep.passed and rep.driver_moment >= 0
    assert L.le(median_witness(L, U)) and median_witness(L, U).le(U)
    bad = TreeProcess(tree, [v.copy() for v in mid.value], [p.copy() for p in mid.post])
    bad.value[3][2] = L.value[3][2] - 1e-3
    rep = mokobodzki_check(bad, L, U, gen)
    assert not rep.passed and rep.location == (3, 2)


def test_doob_decomposition_reconstructs(rng):
    tree = BinomialTree.build(1.0, 5)
    X = random_process(rng, tree)
    M, A = doob_decomposition(X)
    rebuilt = X.value[0][0] + M.path_values() + A.path_values()
    assert np.abs(rebuilt - X.path_values()).max() <= 1e-12
    for k in range(5):
        assert np.abs(M.flow[k].mean(axis=1)).max() <= 1e-14


def test_leaf_expectation_shape_check():
    tree = BinomialTree.build(1.0, 3)
    assert expectation_over_leaves(tree, np.arange(8.0)) == 3.5
    with pytest.raises(ValueError):
        expectation_over_leaves(tree, np.zeros(4))
