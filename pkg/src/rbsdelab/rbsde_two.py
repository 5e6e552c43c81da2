"""Reflected equations with a lower and an upper barrier.

Three routes produce the same solution:

* ``solve_clamped``: direct backward induction, clamping between the barriers
  in both slots of every step;
* ``solve_decoupled``: for z-free generators, the pair of one-barrier problems
  ``Y = Y1 - Y2`` iterated until it stops moving;
* ``picard_solve``: freezes ``z`` in the generator and calls a z-free solver,
  splitting the horizon into short pieces when ``lam * sqrt(T)`` is large.

``dynkin_oracle`` computes the value of the stopping game (``f = 0``) both by a
median recursion and by enumerating every pair of stopping rules.
``verify_solution`` checks dynamics, minimality and the four jump identities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bsde import (
    REFLECT,
    BarrierSide,
    Sweep,
    check_barrier_order,
    check_terminal_order,
    dynamics_residual,
    solve_bsde,
    terminal_array,
)
from .errors import EnumerationBudgetError, IterationLimitError
from .generators import GeneratorSpec, zero
from .lattice import (
    BinomialTree,
    TreeFV,
    TreeProcess,
    cond_expect,
    count_stopping_times,
    decision_instants,
    enumerate_stopping_times,
)
from .rbsde_one import minimality_terms, solve_lower

RESIDUAL_TOL = 1e-10
DYNKIN_BUDGET = 5 * 10**7


@dataclass
class TwoBarrierSolution:
    Y: TreeProcess
    Z: TreeProcess
    Rplus: TreeFV
    Rminus: TreeFV
    f_values: list = field(default_factory=list)
    iterations: int = 0

    @property
    def R(self) -> TreeFV:
        return self.Rplus - self.Rminus


@dataclass
class DecouplingState:
    Y1: list
    Y2: list
    increments: list

    @property
    def n(self) -> int:
        return len(self.Y1) - 1

    def monotone(self, tol: float = 0.0) -> bool:
        """Both iterate sequences non-decreasing node-wise."""
        for seq in (self.Y1, self.Y2):
            for prev, cur in zip(seq, seq[1:]):
                if prev.max_excess(cur) > tol:
                    return False
        return True


def _check_inputs(tree, xi, L, U):
    check_barrier_order(L, U)
    check_terminal_order(tree, xi, L=L, U=U)


def solve_clamped(
    tree: BinomialTree,
    xi,
    gen: GeneratorSpec,
    V: TreeFV | None,
    L: TreeProcess,
    U: TreeProcess,
    zgen=None,
) -> TwoBarrierSolution:
    """Backward induction with ``Y`` clamped between ``L`` and ``U`` in every slot."""
    _check_inputs(tree, xi, L, U)
    sweep = Sweep(tree, gen, V, lower=BarrierSide(L, REFLECT), upper=BarrierSide(U, REFLECT))
    sweep.set_terminal(terminal_array(tree, xi))
    sweep.run(zgen=zgen)
    res = sweep.result()
    return TwoBarrierSolution(res.Y, res.Z, res.push_lower, res.push_upper, res.f_values)


def solve_decoupled(
    tree: BinomialTree,
    xi,
    gen: GeneratorSpec,
    V: TreeFV | None,
    L: TreeProcess,
    U: TreeProcess,
    max_iter: int = 10_000,
    tol: float = 1e-13,
    zgen=None,
) -> tuple[TwoBarrierSolution, DecouplingState]:
    """Iterate the two coupled lower-reflected problems.

    ``Y1`` is reflected at ``L + Y2`` with generator ``f(t, y - Y2, z)``;
    ``Y2`` (zero data) is reflected at ``Y1 - U``.  Both are updated from the
    previous pair.  Requires a z-free generator (``lam == 0``) unless ``zgen``
    freezes the z argument.
    """
    if gen.lam != 0 and zgen is None:
        raise ValueError("the decoupled route needs a generator independent of z")
    _check_inputs(tree, xi, L, U)
    xi = terminal_array(tree, xi)
    V = V if V is not None else TreeFV.zeros(tree)
    f0 = zero()

    base = solve_bsde(tree, xi, gen, V) if zgen is None else None
    if base is None:
        sweep = Sweep(tree, gen, V)
        sweep.set_terminal(xi)
        sweep.run(zgen=zgen)
        r = sweep.result()
        Y1, Z1, K1 = r.Y, r.Z, TreeFV.zeros(tree)
    else:
        Y1, Z1, K1 = base.Y, base.Z, TreeFV.zeros(tree)
    Y2, Z2, K2 = TreeProcess.zeros(tree), TreeProcess.zeros(tree), TreeFV.zeros(tree)
    state = DecouplingState([Y1], [Y2], [])
    sol1 = None
    for it in range(1, max_iter + 1):
        sol1 = solve_lower(tree, xi, gen, V, L + Y2, shift=Y2, zgen=zgen)
        sol2 = solve_lower(tree, 0.0, f0, None, Y1 - U)
        inc = (sol1.Y - Y1).sup_abs() + (sol2.Y - Y2).sup_abs()
        Y1, Z1, K1 = sol1.Y, sol1.Z, sol1.K
        Y2, Z2, K2 = sol2.Y, sol2.Z, sol2.K
        state.Y1.append(Y1)
        state.Y2.append(Y2)
        state.increments.append(inc)
        if inc <= tol * max(1.0, Y1.sup_abs()):
            break
    else:
        raise IterationLimitError(f"decoupling did not settle in {max_iter} iterations", trace=state)

    # the last pair was built from the previous one; at the fixed point they agree
    R = K1 - K2
    Rplus, Rminus = R.jordan()
    sol = TwoBarrierSolution(Y1 - Y2, Z1 - Z2, Rplus, Rminus, sol1.f_values, iterations=it)
    return sol, state


def subdivision_count(lam: float, horizon: float, steps: int) -> int:
    """Pieces ``m`` with ``lam * sqrt(T / m) <= 1/2`` once ``lam * sqrt(T) >= 1``; capped at ``steps``."""
    if lam * math.sqrt(horizon) < 1.0:
        return 1
    m = math.ceil((2.0 * lam) ** 2 * horizon - 1e-12)
    return min(m, steps)


@dataclass
class PicardTrace:
    pieces: list
    increments: list = field(default_factory=list)

    def ratios(self) -> list:
        out = []
        for inc in self.increments:
            out.append([b / a for a, b in zip(inc, inc[1:]) if a > 0])
        return out


def _z_increment_norm(tree: BinomialTree, Za, Zb, k_lo: int, k_hi: int) -> float:
    """``sqrt(E sum (Za - Zb)^2 dt)`` over levels ``k_lo..k_hi-1``."""
    total = 0.0
    for k in range(k_lo, k_hi):
        total += float((tree.probabilities(k) * (Za[k] - Zb[k]) ** 2).sum()) * tree.dt
    return math.sqrt(total)


def picard_solve(
    tree: BinomialTree,
    xi,
    gen: GeneratorSpec,
    V: TreeFV | None,
    L: TreeProcess,
    U: TreeProcess,
    inner: str = "clamped",
    max_iter: int = 200,
    tol: float = 1e-13,
    subdivide: bool = True,
    trace: PicardTrace | None = None,
) -> TwoBarrierSolution:
    """Picard iteration on ``z``: ``f_n(t, y) = f(t, y, Z^{n-1}_t)``.

    Stops when ``sup |dY| + sqrt(E sum dZ^2 dt) <= tol`` on the current piece.
    ``inner`` is ``"clamped"`` or ``"decoupled"``; the decoupled inner solver
    works on the whole horizon only.
    """
    _check_inputs(tree, xi, L, U)
    n = tree.steps
    m = subdivision_count(gen.lam, tree.grid.horizon, n) if subdivide else 1
    if inner not in ("clamped", "decoupled"):
        raise ValueError(f"unknown inner solver {inner!r}")
    if inner == "decoupled" and m > 1:
        raise ValueError("the decoupled inner solver does not support subdivision")
    bounds = sorted({round(i * n / m) for i in range(m + 1)})
    if trace is None:
        trace = PicardTrace(pieces=[])
    trace.pieces = [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]
    zfree = [np.zeros(k + 1) for k in range(n + 1)]

    if inner == "decoupled":
        zcur = [z.copy() for z in zfree]
        prev = None
        incs = []
        for it in range(1, max_iter + 1):
            sol, _ = solve_decoupled(tree, xi, gen, V, L, U, zgen=zcur)
            if prev is not None:
                inc = (sol.Y - prev.Y).sup_abs() + _z_increment_norm(tree, sol.Z.value, prev.Z.value, 0, n)
                incs.append(inc)
                if inc <= tol * max(1.0, sol.Y.sup_abs()):
                    trace.increments.append(incs)
                    sol.iterations = it
                    return sol
            prev = sol
            zcur = [z.copy() for z in sol.Z.value]
        trace.increments.append(incs)
        raise IterationLimitError(f"Picard iteration did not settle in {max_iter} steps", trace=trace)

    sweep = Sweep(tree, gen, V, lower=BarrierSide(L, REFLECT), upper=BarrierSide(U, REFLECT))
    sweep.set_terminal(terminal_array(tree, xi))
    zgen = [z.copy() for z in zfree]
    total_iter = 0
    for k_lo, k_hi in reversed(trace.pieces):
        incs = []
        prev_y = None
        prev_z = None
        for it in range(1, max_iter + 1):
            sweep.run(k_hi, k_lo, zgen=zgen)
            total_iter += 1
            cur_y = [np.concatenate((sweep.value[k], sweep.post[k])) for k in range(k_lo, k_hi)]
            cur_z = [sweep.z[k].copy() for k in range(n + 1)]
            if prev_y is not None:
                dy = max(float(np.abs(a - b).max()) for a, b in zip(cur_y, prev_y))
                dz = _z_increment_norm(tree, cur_z, prev_z, k_lo, k_hi)
                incs.append(dy + dz)
                scale = max(1.0, max(float(np.abs(a).max()) for a in cur_y))
                if dy + dz <= tol * scale:
                    break
            prev_y, prev_z = cur_y, cur_z
            for k in range(k_lo, k_hi):
                zgen[k] = cur_z[k]
        else:
            trace.increments.append(incs)
            raise IterationLimitError(
                f"Picard iteration did not settle in {max_iter} steps on levels {k_lo}..{k_hi}"
                f" (last increment {incs[-1] if incs else float('nan'):.3e})",
                trace=trace,
            )
        trace.increments.append(incs)
    res = sweep.result()
    return TwoBarrierSolution(res.Y, res.Z, res.push_lower, res.push_upper, res.f_values, iterations=total_iter)


# ---------------------------------------------------------------------------
# Dynkin game oracle


def _median(lo, x, hi):
    return np.minimum(np.maximum(x, lo), hi)


def dynkin_recursion(tree: BinomialTree, xi, L: TreeProcess, U: TreeProcess, V: TreeFV | None = None) -> TreeProcess:
    """Value process of the stopping game by the median recursion over both instants of each node."""
    V = V if V is not None else TreeFV.zeros(tree)
    n = tree.steps
    value = [None] * (n + 1)
    post = [None] * (n + 1)
    value[n] = terminal_array(tree, xi)
    post[n] = value[n].copy()
    for k in range(n - 1, -1, -1):
        nxt = np.stack((value[k + 1][:-1], value[k + 1][1:]), axis=1) + V.flow[k]
        post[k] = _median(L.post[k], cond_expect(tree, nxt, k), U.post[k])
        value[k] = _median(L.value[k], post[k] + V.jump[k], U.value[k])
    return TreeProcess(tree, value, post)


def game_instants(tree: BinomialTree, L: TreeProcess, U: TreeProcess, V: TreeFV | None = None) -> list[int]:
    """Decision instants: every ``t_k`` plus ``t_k+`` where some datum jumps right at level ``k``."""
    V = V if V is not None else TreeFV.zeros(tree)
    use_post = []
    for k in range(tree.steps):
        jumps = (
            np.any(L.post[k] != L.value[k])
            or np.any(U.post[k] != U.value[k])
            or np.any(V.jump[k] != 0.0)
        )
        use_post.append(bool(jumps))
    return decision_instants(tree, use_post)


def dynkin_enumeration(
    tree: BinomialTree,
    xi,
    L: TreeProcess,
    U: TreeProcess,
    V: TreeFV | None = None,
    budget: int = DYNKIN_BUDGET,
) -> tuple[float, float]:
    """``(max-min, min-max)`` of the game over all pairs of adapted stopping rules.

    Payoff: ``V_theta + L_tau 1{tau <= sigma, tau < T} + U_sigma 1{sigma < tau}
    + xi 1{tau = sigma = T}`` with ``theta = tau ^ sigma``; ``tau`` belongs to the
    maximiser.
    """
    V = V if V is not None else TreeFV.zeros(tree)
    n = tree.steps
    instants = game_instants(tree, L, U, V)
    count = count_stopping_times(tree, instants)
    leaves = 2**n
    if count * count * leaves > budget:
        raise EnumerationBudgetError(f"{count}^2 stopping-rule pairs on {leaves} leaves exceed budget {budget}")
    rules = enumerate_stopping_times(tree, instants, budget=count)
    lv = L.path_values()
    uv = U.path_values()
    vv = V.path_values()
    xi_path = terminal_array(tree, xi)[tree.paths()[:, -1]]
    leaf = np.arange(leaves)
    end = 2 * n

    lower_all = lv[leaf, rules]
    upper_pay = uv[leaf, rules][None, :, :]
    sig = rules[None, :, :]
    game = np.empty((count, count))
    block = max(1, 2**22 // max(1, count * leaves))
    for start in range(0, count, block):
        tau = rules[start:start + block, None, :]
        theta = np.minimum(tau, sig)
        pay = vv[leaf, theta]
        pay += np.where((tau <= sig) & (tau < end), lower_all[start:start + block, None, :], 0.0)
        pay += np.where(sig < tau, upper_pay, 0.0)
        pay += np.where((tau == end) & (sig == end), xi_path[None, None, :], 0.0)
        # every leaf path has probability 2^-N
        game[start:start + block] = pay.mean(axis=2)
    return float(game.min(axis=1).max()), float(game.max(axis=0).min())


def dynkin_oracle(
    tree: BinomialTree,
    xi,
    L: TreeProcess,
    U: TreeProcess,
    V: TreeFV | None = None,
    enumerate_rules: bool | None = None,
    tol: float = 1e-10,
    budget: int = DYNKIN_BUDGET,
) -> float:
    """Game value at time 0 (generator zero).

    The median recursion is always computed.  For ``N <= 4`` (or when asked)
    the value is also obtained by exhaustive enumeration, and both
    ``max-min = min-max`` and agreement with the recursion are asserted.
    """
    if tree.steps > 12:
        raise ValueError("the Dynkin oracle is limited to N <= 12")
    _check_inputs(tree, xi, L, U)
    value = float(dynkin_recursion(tree, xi, L, U, V).value[0][0])
    if enumerate_rules is None:
        enumerate_rules = tree.steps <= 4
    if enumerate_rules:
        lower, upper = dynkin_enumeration(tree, xi, L, U, V, budget=budget)
        scale = max(1.0, abs(value))
        if abs(lower - upper) > tol * scale:
            raise AssertionError(f"no saddle point: max-min {lower!r} != min-max {upper!r}")
        if abs(lower - value) > tol * scale:
            raise AssertionError(f"enumeration {lower!r} disagrees with recursion {value!r}")
    return value


# ---------------------------------------------------------------------------
# identities and verification


def left_jump_plus(y, l_left, dv):
    """``(y - l_left + dv)^-``: required upward push entering a time."""
    return np.maximum(-(np.asarray(y, dtype=float) - l_left + dv), 0.0)


def left_jump_minus(y, u_left, dv):
    """``(y - u_left + dv)^+``: required downward push entering a time."""
    return np.maximum(np.asarray(y, dtype=float) - u_left + dv, 0.0)


def right_jump_plus(y_post, l, dv):
    """``(y_post - l + dv)^-``: required upward push at a right jump."""
    return np.maximum(-(np.asarray(y_post, dtype=float) - l + dv), 0.0)


def right_jump_minus(y_post, u, dv):
    """``(y_post - u + dv)^+``: required downward push at a right jump."""
    return np.maximum(np.asarray(y_post, dtype=float) - u + dv, 0.0)


@dataclass
class VerificationReport:
    dynamics: float
    minimality_lower: float
    minimality_upper: float
    left_plus: float
    left_minus: float
    right_plus: float
    right_minus: float
    barrier_violation: float
    jordan_overlap: float
    scale: float

    @property
    def jump_identities(self) -> float:
        return max(self.left_plus, self.left_minus, self.right_plus, self.right_minus)

    @property
    def minimality(self) -> float:
        return max(self.minimality_lower, self.minimality_upper)

    def ok(self, tol: float = RESIDUAL_TOL) -> bool:
        worst = max(
            self.dynamics,
            self.minimality,
            self.jump_identities,
            self.barrier_violation,
            self.jordan_overlap,
        )
        return worst <= tol * self.scale

    def as_dict(self) -> dict:
        return {
            "dynamics": self.dynamics,
            "minimality_lower": self.minimality_lower,
            "minimality_upper": self.minimality_upper,
            "left_plus": self.left_plus,
            "left_minus": self.left_minus,
            "right_plus": self.right_plus,
            "right_minus": self.right_minus,
            "barrier_violation": self.barrier_violation,
            "jordan_overlap": self.jordan_overlap,
            "scale": self.scale,
        }


def verify_solution(
    sol: TwoBarrierSolution,
    xi,
    gen: GeneratorSpec,
    V: TreeFV | None,
    L: TreeProcess,
    U: TreeProcess,
    zgen: TreeProcess | None = None,
) -> VerificationReport:
    """Residuals of dynamics, minimality and the jump identities.

    The flow identities compare the push over ``(t_k, t_{k+1}]`` with the
    value the solution would take without it,
    ``Y_{k+1} + dV* + f dt - Z dB`` on each edge, against ``L+_k`` / ``U+_k``.
    The right-jump identities compare ``Delta+R_k`` with
    ``(Y+_k + Delta+V_k - L_k)^-`` and ``(Y+_k + Delta+V_k - U_k)^+``.
    """
    tree = sol.Y.tree
    V = V if V is not None else TreeFV.zeros(tree)
    Y, Z = sol.Y, sol.Z
    scale = max(1.0, Y.sup_abs())
    dyn = dynamics_residual(Y, Z, gen, V, sol.R, zgen=zgen)
    min_lo = minimality_terms(Y, L, sol.Rplus, 1.0)
    min_up = minimality_terms(Y, U, sol.Rminus, -1.0)

    dB = tree.increments()
    lp = lm = rp = rm = 0.0
    for k in range(tree.steps):
        zg = Z.value[k] if zgen is None else zgen.value[k]
        fy = gen(tree.times[k], Y.post[k], zg)
        unpushed = Y.child_values(k) + V.flow[k] + (fy * tree.dt)[:, None] - Z.value[k][:, None] * dB[None, :]
        need_plus = np.maximum(L.post[k][:, None] - unpushed, 0.0)
        need_minus = np.maximum(unpushed - U.post[k][:, None], 0.0)
        lp = max(lp, float(np.abs(sol.Rplus.flow[k] - need_plus).max()))
        lm = max(lm, float(np.abs(sol.Rminus.flow[k] - need_minus).max()))
        rp = max(rp, float(np.abs(sol.Rplus.jump[k] - right_jump_plus(Y.post[k], L.value[k], V.jump[k])).max()))
        rm = max(rm, float(np.abs(sol.Rminus.jump[k] - right_jump_minus(Y.post[k], U.value[k], V.jump[k])).max()))

    barrier = max(Y.max_excess(U), L.max_excess(Y), 0.0)
    overlap = 0.0
    for k in range(tree.steps):
        overlap = max(overlap, float(np.abs(sol.Rplus.flow[k] * sol.Rminus.flow[k]).max()))
        overlap = max(overlap, float(np.abs(sol.Rplus.jump[k] * sol.Rminus.jump[k]).max()))
    return VerificationReport(dyn, min_lo, min_up, lp, lm, rp, rm, barrier, overlap, scale)
