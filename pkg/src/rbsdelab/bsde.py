"""Backward induction on the tree: plain BSDEs and the shared sweep engine.

One step of the scheme at node ``(k, j)`` has two parts.

Flow slot over ``(t_k, t_{k+1}]``.  On each outgoing edge put
``X = Y_{k+1} + dV*`` and split ``X = a + Z dB`` (two points, one
coefficient).  The post-value ``Y+_k`` solves

    Y+_k = a + f(t_k, Y+_k, Z_k) dt + dR

where ``dR`` is zero for a plain BSDE, a reflection increment when ``Y+_k``
is clamped to a barrier's post-value, or a penalty ``n (Y+_k - L+_k)^- dt``.

Right-jump slot at ``t_k``.  ``Y_k = Y+_k + Delta+V_k`` plus a correction
that puts ``Y_k`` back between the barriers (always for reflection, only on
marked nodes for the penalised schemes).

Every branch therefore satisfies the discrete dynamics

    Y+_k = Y_{k+1} + dV*_edge + f(t_k, Y+_k, Z_k) dt + dR*_k - Z_k dB_edge
    Y_k  = Y+_k + Delta+V_k + Delta+R_k

exactly up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidScenarioError
from .generators import GeneratorSpec, implicit_solve
from .lattice import BinomialTree, TreeFV, TreeProcess

REFLECT = "reflect"
PENALIZE = "penalize"


@dataclass
class BarrierSide:
    """How one barrier acts in a sweep.

    ``mode`` is ``"reflect"`` (clamp in both slots) or ``"penalize"`` (penalty
    ``n`` in the flow slot, clamp in the jump slot only where ``mask`` is true).
    """

    barrier: TreeProcess
    mode: str = REFLECT
    n: float = 0.0
    mask: Sequence[np.ndarray] | None = None

    def __post_init__(self):
        if self.mode not in (REFLECT, PENALIZE):
            raise ValueError(f"unknown barrier mode {self.mode!r}")
        if self.n < 0:
            raise ValueError("penalty level must be non-negative")

    def corrects(self, k: int) -> np.ndarray | bool:
        if self.mode == REFLECT:
            return True
        if self.mask is None:
            return False
        return self.mask[k]


@dataclass
class SweepResult:
    """Output of a sweep: the pair ``(Y, Z)``, both pushes and the driver values.

    ``push_lower`` and ``push_upper`` are non-decreasing; ``f_values[k]`` holds
    ``f(t_k, Y+_k, z_k)`` at every node of level ``k < N``.
    """

    Y: TreeProcess
    Z: TreeProcess
    push_lower: TreeFV
    push_upper: TreeFV
    f_values: list


class Sweep:
    """Mutable backward sweep over a range of levels.

    Levels are processed from ``k_hi - 1`` down to ``k_lo``; level ``k_hi`` must
    already carry values.  This supports solving interval by interval.
    """

    def __init__(
        self,
        tree: BinomialTree,
        gen: GeneratorSpec,
        V: TreeFV | None = None,
        lower: BarrierSide | None = None,
        upper: BarrierSide | None = None,
        shift: TreeProcess | None = None,
    ):
        tree.grid.check_monotonicity(gen.mu)
        n = tree.steps
        self.tree = tree
        self.gen = gen
        self.V = V if V is not None else TreeFV.zeros(tree)
        self.lower = lower
        self.upper = upper
        self.shift = shift
        self.value = [np.zeros(k + 1) for k in range(n + 1)]
        self.post = [np.zeros(k + 1) for k in range(n + 1)]
        self.z = [np.zeros(k + 1) for k in range(n + 1)]
        self.f_values = [np.zeros(k + 1) for k in range(n)]
        self.low_flow = [np.zeros(k + 1) for k in range(n)]
        self.low_jump = [np.zeros(k + 1) for k in range(n + 1)]
        self.up_flow = [np.zeros(k + 1) for k in range(n)]
        self.up_jump = [np.zeros(k + 1) for k in range(n + 1)]

    def set_terminal(self, xi) -> None:
        n = self.tree.steps
        xi = np.broadcast_to(np.asarray(xi, dtype=float), (n + 1,)).copy()
        self.value[n] = xi
        self.post[n] = xi.copy()

    def _generator(self, k: int, zgen: np.ndarray):
        t = self.tree.times[k]
        gen = self.gen
        if self.shift is None:
            def F(y):
                return gen(t, y, zgen)
            f0 = gen(t, np.zeros_like(zgen), zgen) if gen.slope is not None else None
        else:
            s = self.shift.post[k]

            def F(y):
                return gen(t, y - s, zgen)
            f0 = gen(t, -s, zgen) if gen.slope is not None else None
        return F, f0

    def step(self, k: int, zgen: np.ndarray | None = None) -> None:
        """Process level ``k`` (flow slot into ``k + 1``, then the jump slot at ``k``)."""
        tree = self.tree
        dt = tree.dt
        nxt = self.value[k + 1]
        X = np.stack((nxt[:-1], nxt[1:]), axis=1) + self.V.flow[k]
        a = 0.5 * (X[:, 0] + X[:, 1])
        z = (X[:, 1] - X[:, 0]) / (2.0 * tree.sqrt_dt)
        self.z[k] = z
        zg = z if zgen is None else np.asarray(zgen, dtype=float)
        F, f0 = self._generator(k, zg)

        lo, up = self.lower, self.upper
        n_lo = lo.n if lo is not None and lo.mode == PENALIZE else 0.0
        n_up = up.n if up is not None and up.mode == PENALIZE else 0.0
        lo_post = lo.barrier.post[k] if lo is not None else None
        up_post = up.barrier.post[k] if up is not None else None

        y = implicit_solve(a, F, dt, slope=self.gen.slope, f_at_zero=f0,
                           n_lower=n_lo, lower=lo_post, n_upper=n_up, upper=up_post)
        if lo is not None and lo.mode == REFLECT:
            hit = y < lo_post
            y = np.where(hit, lo_post, y)
        else:
            hit = np.zeros(y.shape, dtype=bool)
        if up is not None and up.mode == REFLECT:
            hit_up = y > up_post
            y = np.where(hit_up, up_post, y)
            hit = hit & ~hit_up
        else:
            hit_up = np.zeros(y.shape, dtype=bool)
        push_lo = n_lo * np.maximum(lo_post - y, 0.0) * dt if n_lo > 0 else np.zeros_like(y)
        push_up = n_up * np.maximum(y - up_post, 0.0) * dt if n_up > 0 else np.zeros_like(y)
        fy = F(y)
        if hit.any() or hit_up.any():
            # reflection absorbs what the dynamics cannot explain
            resid = y - a - fy * dt - push_lo + push_up
            push_lo = np.where(hit, push_lo + np.maximum(resid, 0.0), push_lo)
            push_up = np.where(hit_up, push_up + np.maximum(-resid, 0.0), push_up)
        self.post[k] = y
        self.f_values[k] = np.asarray(fy, dtype=float)
        self.low_flow[k] = push_lo
        self.up_flow[k] = push_up

        x = y + self.V.jump[k]
        out = x
        if lo is not None:
            on = lo.corrects(k)
            self.low_jump[k] = np.where(on, np.maximum(lo.barrier.value[k] - x, 0.0), 0.0)
            out = np.where(on, np.maximum(out, lo.barrier.value[k]), out)
        if up is not None:
            on = up.corrects(k)
            self.up_jump[k] = np.where(on, np.maximum(x - up.barrier.value[k], 0.0), 0.0)
            out = np.where(on, np.minimum(out, up.barrier.value[k]), out)
        self.value[k] = out

    def run(self, k_hi: int | None = None, k_lo: int = 0, zgen: Sequence[np.ndarray] | None = None) -> None:
        k_hi = self.tree.steps if k_hi is None else k_hi
        for k in range(k_hi - 1, k_lo - 1, -1):
            self.step(k, None if zgen is None else zgen[k])

    def result(self) -> SweepResult:
        tree = self.tree
        n = tree.steps
        Y = TreeProcess(tree, [v.copy() for v in self.value], [p.copy() for p in self.post])
        Z = TreeProcess(tree, [z.copy() for z in self.z])
        lower = TreeFV(tree, [f.copy() for f in self.low_flow], [j.copy() for j in self.low_jump])
        upper = TreeFV(tree, [f.copy() for f in self.up_flow], [j.copy() for j in self.up_jump])
        assert len(self.f_values) == n
        return SweepResult(Y, Z, lower, upper, [f.copy() for f in self.f_values])


# ---------------------------------------------------------------------------
# plain BSDE


@dataclass
class BsdeSolution:
    Y: TreeProcess
    Z: TreeProcess
    f_values: list


def terminal_array(tree: BinomialTree, xi) -> np.ndarray:
    if isinstance(xi, TreeProcess):
        xi = xi.value[-1]
    return np.broadcast_to(np.asarray(xi, dtype=float), (tree.steps + 1,)).copy()


def solve_bsde(tree: BinomialTree, xi, gen: GeneratorSpec, V: TreeFV | None = None) -> BsdeSolution:
    """Solve ``Y_t = xi + int f(r, Y_r, Z_r) dr + int dV_r - int Z_r dB_r``."""
    sweep = Sweep(tree, gen, V)
    sweep.set_terminal(terminal_array(tree, xi))
    sweep.run()
    res = sweep.result()
    return BsdeSolution(res.Y, res.Z, res.f_values)


def check_terminal_order(tree: BinomialTree, xi, L: TreeProcess | None = None, U: TreeProcess | None = None) -> None:
    """Raise unless ``L_N <= xi <= U_N`` node-wise."""
    xi = terminal_array(tree, xi)
    n = tree.steps
    if L is not None:
        bad = np.nonzero(L.value[n] > xi)[0]
        if bad.size:
            raise InvalidScenarioError(f"lower barrier above terminal value at node ({n}, {bad[0]})", (n, int(bad[0])))
    if U is not None:
        bad = np.nonzero(U.value[n] < xi)[0]
        if bad.size:
            raise InvalidScenarioError(f"upper barrier below terminal value at node ({n}, {bad[0]})", (n, int(bad[0])))


def check_barrier_order(L: TreeProcess, U: TreeProcess) -> None:
    """Raise unless ``L <= U`` on values and post-values."""
    for k in range(L.steps + 1):
        for name, lv, uv in (("value", L.value[k], U.value[k]), ("post-value", L.post[k], U.post[k])):
            bad = np.nonzero(lv > uv)[0]
            if bad.size:
                raise InvalidScenarioError(
                    f"lower barrier exceeds upper barrier ({name}) at node ({k}, {bad[0]})", (k, int(bad[0]))
                )


def dynamics_residual(
    Y: TreeProcess,
    Z: TreeProcess,
    gen: GeneratorSpec,
    V: TreeFV | None = None,
    R: TreeFV | None = None,
    shift: TreeProcess | None = None,
    zgen: TreeProcess | None = None,
) -> float:
    """Largest branch-wise violation of the discrete dynamics (both slots)."""
    tree = Y.tree
    V = V if V is not None else TreeFV.zeros(tree)
    R = R if R is not None else TreeFV.zeros(tree)
    dB = tree.increments()
    worst = 0.0
    for k in range(tree.steps):
        t = tree.times[k]
        yp = Y.post[k]
        zg = Z.value[k] if zgen is None else zgen.value[k]
        arg = yp if shift is None else yp - shift.post[k]
        fy = gen(t, arg, zg)
        nxt = Y.child_values(k)
        rhs = nxt + V.flow[k] + R.flow[k] + (fy * tree.dt)[:, None] - Z.value[k][:, None] * dB[None, :]
        worst = max(worst, float(np.abs(yp[:, None] - rhs).max()))
        jump = Y.value[k] - (yp + V.jump[k] + R.jump[k])
        worst = max(worst, float(np.abs(jump).max()))
    return worst
