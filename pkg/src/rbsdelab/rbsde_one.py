"""Reflected equations with a single barrier.

The lower problem keeps ``Y >= L`` by clamping in both slots of every step;
the clamp amount is the increment of the non-decreasing process ``K``.  The
upper problem is solved through the mirror ``(-Y, -Z)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bsde import REFLECT, BarrierSide, Sweep, check_terminal_order, terminal_array
from .generators import GeneratorSpec
from .lattice import BinomialTree, TreeFV, TreeProcess


@dataclass
class OneBarrierSolution:
    Y: TreeProcess
    Z: TreeProcess
    K: TreeFV
    f_values: list

    @property
    def K_star(self) -> TreeFV:
        return self.K.split()[0]

    @property
    def K_d(self) -> TreeFV:
        return self.K.split()[1]

    def abs_driver_sum(self) -> np.ndarray:
        """``sum_k |f(t_k, Y_k, Z_k)| dt`` along every leaf path."""
        tree = self.Y.tree
        paths = tree.paths()
        out = np.zeros(paths.shape[0])
        for k in range(tree.steps):
            out += np.abs(self.f_values[k][paths[:, k]]) * tree.dt
        return out


def solve_lower(
    tree: BinomialTree,
    xi,
    gen: GeneratorSpec,
    V: TreeFV | None,
    L: TreeProcess,
    shift: TreeProcess | None = None,
    zgen=None,
) -> OneBarrierSolution:
    """Solution of the equation reflected upward at ``L``.

    ``shift`` replaces the generator by ``f(t, y - shift, z)``; ``zgen``
    freezes the ``z`` argument level by level.
    """
    check_terminal_order(tree, xi, L=L)
    sweep = Sweep(tree, gen, V, lower=BarrierSide(L, REFLECT), shift=shift)
    sweep.set_terminal(terminal_array(tree, xi))
    sweep.run(zgen=zgen)
    res = sweep.result()
    return OneBarrierSolution(res.Y, res.Z, res.push_lower, res.f_values)


def solve_upper(
    tree: BinomialTree,
    xi,
    gen: GeneratorSpec,
    V: TreeFV | None,
    U: TreeProcess,
) -> OneBarrierSolution:
    """Solution reflected downward at ``U``; ``K`` pushes down."""
    V = V if V is not None else TreeFV.zeros(tree)
    m = solve_lower(tree, -terminal_array(tree, xi), gen.mirror(), -V, -U)
    f_values = [-f for f in m.f_values]
    return OneBarrierSolution(-m.Y, -m.Z, m.K, f_values)


def minimality_residual_lower(sol: OneBarrierSolution, L: TreeProcess, V: TreeFV | None = None) -> float:
    """``sum (Y+ - L+) dK* + sum (Y - L) Delta+K`` over all nodes.

    The flow part pairs the increment over ``(t_k, t_{k+1}]`` with the left
    limits at ``t_{k+1}`` (the post-values at ``t_k``).  Edge increments are
    averaged per node.  Terms are taken in absolute value, so any mass placed
    off the barrier shows up.  ``V`` is accepted for interface symmetry; it
    does not enter the sum.
    """
    return float(minimality_terms(sol.Y, L, sol.K, sign=1.0))


def minimality_terms(Y: TreeProcess, B: TreeProcess, push: TreeFV, sign: float) -> float:
    """Shared minimality sum; ``sign=+1`` for a lower barrier, ``-1`` for an upper one."""
    total = 0.0
    for k in range(Y.steps):
        gap_post = sign * (Y.post[k] - B.post[k])
        gap = sign * (Y.value[k] - B.value[k])
        flow = push.flow[k].mean(axis=1)
        total += float(np.abs(gap_post * flow).sum() + np.abs(gap * push.jump[k]).sum())
    return total
