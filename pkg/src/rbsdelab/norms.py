"""Norms of tree processes, computed exactly over the leaf paths.

Every leaf path of an ``N``-step tree has probability ``2**-N``, so each
expectation below is a plain mean over ``2**N`` paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .generators import GeneratorSpec
from .lattice import BinomialTree, TreeFV, TreeProcess, snell_envelope

MOMENT_TOL = 1e-12


def _power_root(x: float, p: float) -> float:
    return float(x ** min(1.0, 1.0 / p))


def running_sup_abs(X: TreeProcess) -> np.ndarray:
    """``sup_k max(|X_k|, |X_k+|)`` on every leaf path."""
    return np.abs(X.path_values()).max(axis=1)


def sp_norm(X: TreeProcess, p: float) -> float:
    """``(E sup |X|^p)^(1 ^ 1/p)`` with the sup taken over values and post-values."""
    if p < 1:
        raise ValueError("sp_norm needs p >= 1; use classD_norm for the stopping-time variant")
    return _power_root(float(np.mean(running_sup_abs(X) ** p)), p)


def quadratic_sum(Z: TreeProcess, gamma: float = 2.0) -> np.ndarray:
    """``sum_k |Z_k|^gamma dt`` over levels ``0..N-1`` on every leaf path."""
    tree = Z.tree
    paths = tree.paths()
    out = np.zeros(paths.shape[0])
    for k in range(tree.steps):
        out += np.abs(Z.value[k][paths[:, k]]) ** gamma * tree.dt
    return out


def hp_norm(Z: TreeProcess, p: float) -> float:
    """``E[(sum Z^2 dt)^(p/2)]^(1 ^ 1/p)``; any ``p > 0``."""
    if p <= 0:
        raise ValueError("hp_norm needs p > 0")
    return _power_root(float(np.mean(quadratic_sum(Z) ** (p / 2.0))), p)


def gamma_error(Za: TreeProcess, Zb: TreeProcess, gamma: float, p: float) -> float:
    """``E(sum |Za - Zb|^gamma dt)^(p/2)``."""
    return float(np.mean(quadratic_sum(Za - Zb, gamma) ** (p / 2.0)))


def total_variation(R: TreeFV) -> np.ndarray:
    """Total variation of ``R`` on every leaf path."""
    tree = R.tree
    paths = tree.paths()
    moves = tree.path_moves()
    out = np.zeros(paths.shape[0])
    for k in range(tree.steps):
        out += np.abs(R.flow[k][paths[:, k], moves[:, k]]) + np.abs(R.jump[k][paths[:, k]])
    return out


def vp_norm(R: TreeFV, p: float) -> float:
    """``(E |R|_T^p)^(1 ^ 1/p)`` with ``|R|_T`` the total variation."""
    if p <= 0:
        raise ValueError("vp_norm needs p > 0")
    return _power_root(float(np.mean(total_variation(R) ** p)), p)


def classD_norm(X: TreeProcess) -> float:
    """``sup_tau E|X_tau|``: the value at 0 of the optimal stopping problem for ``|X|``."""
    S, _ = snell_envelope(abs(X))
    return float(S.value[0][0])


@dataclass
class NormReport:
    sp: float
    hp: float
    vp: float
    classD: float
    p: float


def norm_report(Y: TreeProcess, Z: TreeProcess, R: TreeFV, p: float) -> NormReport:
    return NormReport(sp_norm(Y, max(p, 1.0)), hp_norm(Z, p), vp_norm(R, p), classD_norm(Y), p)


def sup_moment_check(X: TreeProcess, q: float) -> tuple[float, float, bool]:
    """``E sup |X|^q <= |X|_1^q / (1 - q)`` for ``0 < q < 1``."""
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    lhs = float(np.mean(running_sup_abs(X) ** q))
    rhs = classD_norm(X) ** q / (1.0 - q)
    return lhs, rhs, lhs <= rhs + MOMENT_TOL


# name used by the operation catalogue
remark21_check = sup_moment_check


@dataclass
class MokobodzkiReport:
    passed: bool
    location: tuple | None
    sp: float
    driver_moment: float
    martingale: TreeFV
    finite_variation: TreeFV


def doob_decomposition(X: TreeProcess) -> tuple[TreeFV, TreeFV]:
    """``X = X_0 + M + A``: ``M`` has mean-zero edge increments, ``A`` is predictable flow plus right jumps.

    Both parts are path-dependent in general, so both are edge-indexed.
    """
    tree = X.tree
    n = tree.steps
    m_flow = []
    a_flow = []
    for k in range(n):
        child = X.child_values(k)
        drift = 0.5 * (child[:, 0] + child[:, 1]) - X.post[k]
        a_flow.append(np.repeat(drift[:, None], 2, axis=1))
        m_flow.append(child - (X.post[k] + drift)[:, None])
    jump = [p - v for p, v in zip(X.post, X.value)]
    jump[n] = np.zeros(n + 1)
    zeros = [np.zeros(k + 1) for k in range(n + 1)]
    return TreeFV(tree, m_flow, zeros), TreeFV(tree, a_flow, jump)


def median_witness(L: TreeProcess, U: TreeProcess) -> TreeProcess:
    """``median(L, 0, U)``: always between the barriers."""
    return L.maximum(U.minimum(0.0))


def mokobodzki_check(
    X: TreeProcess | None,
    L: TreeProcess,
    U: TreeProcess,
    gen: GeneratorSpec,
    p: float = 2.0,
) -> MokobodzkiReport:
    """Sandwich ``L <= X <= U`` with its decomposition and driver moment.

    With ``X = None`` the median witness is used, which exists for any
    ordered pair of barriers on a finite grid.
    """
    if X is None:
        X = median_witness(L, U)
    tree = X.tree
    location = None
    for k in range(tree.steps + 1):
        for lo, x, hi in ((L.value[k], X.value[k], U.value[k]), (L.post[k], X.post[k], U.post[k])):
            bad = np.nonzero((x < lo) | (x > hi))[0]
            if bad.size and location is None:
                location = (k, int(bad[0]))
    M, A = doob_decomposition(X)
    paths = tree.paths()
    drive = np.zeros(paths.shape[0])
    for k in range(tree.steps):
        fx = gen(tree.times[k], X.post[k], np.zeros(k + 1))
        drive += np.abs(fx[paths[:, k]]) * tree.dt
    return MokobodzkiReport(
        passed=location is None,
        location=location,
        sp=sp_norm(X, max(p, 1.0)),
        driver_moment=float(np.mean(drive**p)),
        martingale=M,
        finite_variation=A,
    )


def expectation_over_leaves(tree: BinomialTree, values: np.ndarray) -> float:
    """Mean of a leaf-indexed variable (each leaf path has probability ``2**-N``)."""
    if values.shape[0] != 2**tree.steps:
        raise ValueError("one value per leaf path expected")
    return float(np.mean(values))
