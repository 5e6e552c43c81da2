"""Penalisation schemes for the two-barrier problem.

Three approximations indexed by ``n``:

* ``upper``: penalty ``n (y - L)^-`` in every flow step, upward corrections
  ``(Y+ + Delta+V - L)^-`` at the times of the sigma-array, reflection at ``U``;
* ``lower``: the mirror image (penalty at ``U``, reflection at ``L``);
* ``bsde``: both penalties and both families of corrections, no reflection.

The sigma-array of level ``n`` collects the times after 0 where
``Delta+L < -1/n`` or ``Delta+V < -1/n``, then ``T``; the tau-array uses
``Delta+U > 1/n`` or ``Delta+V > 1/n``.  Node 0 is always corrected, which
puts ``Y_0`` between ``L_0`` and ``U_0``.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bsde import PENALIZE, REFLECT, BarrierSide, Sweep, check_barrier_order, check_terminal_order, terminal_array
from .generators import GeneratorSpec
from .lattice import BinomialTree, TreeFV, TreeProcess
from .norms import gamma_error, sp_norm
from .rbsde_one import minimality_terms
from .rbsde_two import TwoBarrierSolution, solve_clamped

SCHEMES = ("upper", "lower", "bsde")


# ---------------------------------------------------------------------------
# stopping arrays


@dataclass
class StoppingArray:
    """Ordered stopping times ``sigma_1 <= ... <= sigma_k = T`` of one level.

    ``times`` has shape ``(2**N, k)`` and holds grid levels (``N`` means ``T``)
    for every leaf path; ``graph[p, l]`` says whether some time of path ``p``
    equals level ``l``.
    """

    tree: BinomialTree
    level: int
    times: np.ndarray
    truncation: object = None

    @property
    def threshold(self) -> float:
        return 1.0 / self.level

    @property
    def count(self) -> int:
        return self.times.shape[1]

    @property
    def graph(self) -> np.ndarray:
        n = self.tree.steps
        g = np.zeros((self.times.shape[0], n + 1), dtype=bool)
        rows = np.repeat(np.arange(self.times.shape[0]), self.times.shape[1])
        g[rows, self.times.ravel()] = True
        g[:, n] = True
        return g

    def is_markov(self) -> bool:
        try:
            self.node_mask()
        except ValueError:
            return False
        return True

    def node_mask(self, include_origin: bool = True) -> list[np.ndarray]:
        """Per-level node indicator of the graph (levels ``< N``).

        Raises ``ValueError`` when two paths through the same node disagree,
        which can happen with truncated arrays.
        """
        paths = self.tree.paths()
        graph = self.graph
        n = self.tree.steps
        mask = []
        for k in range(n + 1):
            hit = np.zeros(k + 1, dtype=bool)
            miss = np.zeros(k + 1, dtype=bool)
            np.logical_or.at(hit, paths[:, k], graph[:, k])
            np.logical_or.at(miss, paths[:, k], ~graph[:, k])
            if np.any(hit & miss):
                j = int(np.nonzero(hit & miss)[0][0])
                raise ValueError(f"array is not a node set: paths through ({k}, {j}) disagree")
            mask.append(hit)
        mask[n] = np.zeros(n + 1, dtype=bool)
        if include_origin:
            mask[0] = np.ones(1, dtype=bool)
        return mask


def _qualifying(tree: BinomialTree, jumps: list, threshold: float, sign: float) -> np.ndarray:
    """``Q[p, k]``: some jump process has ``sign * jump < -threshold`` at path ``p``, level ``k``."""
    paths = tree.paths()
    n = tree.steps
    q = np.zeros((paths.shape[0], n + 1), dtype=bool)
    for k in range(1, n):
        node = np.zeros(k + 1, dtype=bool)
        for jmp in jumps:
            node |= sign * jmp[k] < -threshold
        q[:, k] = node[paths[:, k]]
    return q


def _ordered_times(q: np.ndarray, n: int) -> np.ndarray:
    """Qualifying levels in increasing order per path, padded with ``n``."""
    width = int(q.sum(axis=1).max()) if q.size else 0
    out = np.full((q.shape[0], width), n, dtype=np.int64)
    for p in range(q.shape[0]):
        lv = np.nonzero(q[p])[0]
        out[p, : lv.size] = lv
    return out


def _build_array(tree, jumps, level, truncation, sign) -> StoppingArray:
    if level < 1:
        raise ValueError("array level must be at least 1")
    n = tree.steps
    leaves = tree.paths().shape[0]
    t_end = np.full((leaves, 1), n, dtype=np.int64)

    def keep_all(m):
        return np.concatenate((_ordered_times(_qualifying(tree, jumps, 1.0 / m, sign), n), t_end), axis=1)

    if truncation is None or truncation == "none":
        return StoppingArray(tree, level, keep_all(level), truncation)
    times = keep_all(1)
    for m in range(1, level):
        tilde = _ordered_times(_qualifying(tree, jumps, 1.0 / (m + 1), sign), n)
        tilde = np.concatenate((tilde, t_end), axis=1)
        if truncation == "rule":
            # smallest j >= 1 with P(sigma~_j < T) <= 1/m
            j = 1
            while j < tilde.shape[1] and np.mean(tilde[:, j - 1] < n) > 1.0 / m:
                j += 1
        elif isinstance(truncation, int) and truncation >= 1:
            j = truncation
        else:
            raise ValueError(f"unknown truncation policy {truncation!r}")
        if tilde.shape[1] < j:
            tilde = np.concatenate((tilde, np.full((leaves, j - tilde.shape[1]), n, dtype=np.int64)), axis=1)
        head = tilde[:, :j]
        tail = np.maximum(tilde[:, j - 1 : j], times)
        times = np.concatenate((head, tail, t_end), axis=1)
    return StoppingArray(tree, level, times, truncation)


def build_sigma_array(L: TreeProcess, V: TreeFV | None, n: int, truncation=None) -> StoppingArray:
    """Times after 0 with ``Delta+L < -1/n`` or ``Delta+V < -1/n``, then ``T``."""
    tree = L.tree
    jumps = [L.right_jumps()] + ([V.jump] if V is not None else [])
    return _build_array(tree, jumps, n, truncation, sign=1.0)


def build_tau_array(U: TreeProcess, V: TreeFV | None, n: int, truncation=None) -> StoppingArray:
    """Times after 0 with ``Delta+U > 1/n`` or ``Delta+V > 1/n``, then ``T``."""
    tree = U.tree
    jumps = [U.right_jumps()] + ([V.jump] if V is not None else [])
    return _build_array(tree, jumps, n, truncation, sign=-1.0)


@dataclass
class MergedGrid:
    tree: BinomialTree
    times: np.ndarray

    @property
    def count(self) -> int:
        return self.times.shape[1]

    @property
    def graph(self) -> np.ndarray:
        n = self.tree.steps
        g = np.zeros((self.times.shape[0], n + 1), dtype=bool)
        rows = np.repeat(np.arange(self.times.shape[0]), self.times.shape[1])
        g[rows, self.times.ravel()] = True
        return g


def merge_gamma(sigma: StoppingArray, tau: StoppingArray) -> MergedGrid:
    """``gamma_m = min(next sigma after gamma_{m-1}, next tau after gamma_{m-1})``, ``m = 1..2k``."""
    if sigma.level != tau.level or sigma.tree != tau.tree:
        raise ValueError("arrays must share the tree and the level")
    n = sigma.tree.steps
    k = max(sigma.count, tau.count)
    m_n = 2 * k
    leaves = sigma.times.shape[0]
    out = np.empty((leaves, m_n), dtype=np.int64)
    prev = np.full(leaves, -1, dtype=np.int64)
    for m in range(m_n):
        s_bar = np.where(sigma.times > prev[:, None], sigma.times, n).min(axis=1)
        t_bar = np.where(tau.times > prev[:, None], tau.times, n).min(axis=1)
        prev = np.minimum(s_bar, t_bar)
        out[:, m] = prev
    return MergedGrid(sigma.tree, out)


def union_identity(sigma: StoppingArray, tau: StoppingArray, gamma: MergedGrid) -> bool:
    """Graphs of sigma and tau together equal the graph of gamma, path by path."""
    return bool(np.array_equal(sigma.graph | tau.graph, gamma.graph))


# ---------------------------------------------------------------------------
# penalised solvers


@dataclass
class PenalizedSolution:
    """``K`` pushes up (penalty or reflection at ``L``), ``A`` pushes down."""

    scheme: str
    n: int
    Y: TreeProcess
    Z: TreeProcess
    K: TreeFV
    A: TreeFV
    f_values: list = field(default_factory=list)


def _prepare(tree, xi, L, U):
    check_barrier_order(L, U)
    check_terminal_order(tree, xi, L=L, U=U)


def _mask(array: StoppingArray | None, n: int):
    if n == 0:
        return None
    return array.node_mask()


def solve_upper_penalized(
    tree: BinomialTree,
    xi,
    gen: GeneratorSpec,
    V: TreeFV | None,
    L: TreeProcess,
    U: TreeProcess,
    n: int,
    sigma: StoppingArray | None = None,
) -> PenalizedSolution:
    """Penalty at ``L`` with corrections on the sigma-array, reflection at ``U``."""
    _prepare(tree, xi, L, U)
    if n > 0 and sigma is None:
        sigma = build_sigma_array(L, V, n)
    lower = BarrierSide(L, PENALIZE, float(n), _mask(sigma, n))
    sweep = Sweep(tree, gen, V, lower=lower, upper=BarrierSide(U, REFLECT))
    sweep.set_terminal(terminal_array(tree, xi))
    sweep.run()
    r = sweep.result()
    return PenalizedSolution("upper", n, r.Y, r.Z, r.push_lower, r.push_upper, r.f_values)


def solve_lower_penalized(
    tree: BinomialTree,
    xi,
    gen: GeneratorSpec,
    V: TreeFV | None,
    L: TreeProcess,
    U: TreeProcess,
    n: int,
    tau: StoppingArray | None = None,
) -> PenalizedSolution:
    """Mirror of :func:`solve_upper_penalized`: penalty at ``U``, reflection at ``L``."""
    V = V if V is not None else TreeFV.zeros(tree)
    if n > 0 and tau is None:
        tau = build_tau_array(U, V, n)
    m = solve_upper_penalized(tree, -terminal_array(tree, xi), gen.mirror(), -V, -U, -L, n, sigma=tau)
    return PenalizedSolution("lower", n, -m.Y, -m.Z, m.A, m.K, [-f for f in m.f_values])


def solve_bsde_penalized(
    tree: BinomialTree,
    xi,
    gen: GeneratorSpec,
    V: TreeFV | None,
    L: TreeProcess,
    U: TreeProcess,
    n: int,
    sigma: StoppingArray | None = None,
    tau: StoppingArray | None = None,
) -> PenalizedSolution:
    """Both penalties; upward corrections on the sigma-array, downward ones on the tau-array."""
    _prepare(tree, xi, L, U)
    if n > 0 and sigma is None:
        sigma = build_sigma_array(L, V, n)
    if n > 0 and tau is None:
        tau = build_tau_array(U, V, n)
    lower = BarrierSide(L, PENALIZE, float(n), _mask(sigma, n))
    upper = BarrierSide(U, PENALIZE, float(n), _mask(tau, n))
    sweep = Sweep(tree, gen, V, lower=lower, upper=upper)
    sweep.set_terminal(terminal_array(tree, xi))
    sweep.run()
    r = sweep.result()
    return PenalizedSolution("bsde", n, r.Y, r.Z, r.push_lower, r.push_upper, r.f_values)


SOLVERS = {
    "upper": solve_upper_penalized,
    "lower": solve_lower_penalized,
    "bsde": solve_bsde_penalized,
}


def solve_penalized(scheme: str, tree, xi, gen, V, L, U, n) -> PenalizedSolution:
    try:
        solver = SOLVERS[scheme]
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}") from None
    return solver(tree, xi, gen, V, L, U, n)


@dataclass
class MonotonicityReport:
    max_violation: float
    location: tuple | None

    @property
    def ok(self) -> bool:
        return self.max_violation <= 0.0


def monotonicity_check_A(sol_n: PenalizedSolution, sol_n1: PenalizedSolution) -> MonotonicityReport:
    """Slot-wise ``dA^n <= dA^{n+1}`` (flow increments and right jumps)."""
    A, B = sol_n.A, sol_n1.A
    worst = -math.inf
    where = None
    for k in range(A.steps):
        d = A.flow[k] - B.flow[k]
        i = np.unravel_index(int(np.argmax(d)), d.shape)
        if d[i] > worst:
            worst, where = float(d[i]), ("flow", k, int(i[0]), int(i[1]))
        d = A.jump[k] - B.jump[k]
        i = int(np.argmax(d))
        if d[i] > worst:
            worst, where = float(d[i]), ("jump", k, i)
    if worst <= 0.0:
        return MonotonicityReport(0.0, None)
    return MonotonicityReport(worst, where)


# ---------------------------------------------------------------------------
# convergence report


@dataclass
class Problem:
    """Materialised data of one two-barrier problem.

    ``left_jumps`` optionally records, per process name (``"L"``, ``"U"``,
    ``"V"``), the genuine left jump at every level; on a grid every increment
    looks like a jump, so these flags cannot be inferred from the data alone.
    """

    tree: BinomialTree
    xi: np.ndarray
    gen: GeneratorSpec
    V: TreeFV
    L: TreeProcess
    U: TreeProcess
    left_jumps: dict = field(default_factory=dict)


@dataclass
class LeftJumpFlags:
    plus_zero: bool
    minus_zero: bool
    max_plus: float
    max_minus: float

    @property
    def both_zero(self) -> bool:
        return self.plus_zero and self.minus_zero


def left_jump_flags(problem: Problem, ref: TwoBarrierSolution, tol: float = 1e-12) -> LeftJumpFlags:
    """Evaluate ``(Y_t - L_{t-} + Delta-V_t)^-`` and ``(Y_t - U_{t-} + Delta-V_t)^+`` at ``t > 0``."""
    tree = problem.tree
    n = tree.steps
    zero = np.zeros(n + 1)
    jl = np.asarray(problem.left_jumps.get("L", zero), dtype=float)
    ju = np.asarray(problem.left_jumps.get("U", zero), dtype=float)
    jv = np.asarray(problem.left_jumps.get("V", zero), dtype=float)
    mp = mm = 0.0
    for k in range(1, n + 1):
        y = ref.Y.value[k]
        mp = max(mp, float(np.maximum(-(y - (problem.L.value[k] - jl[k]) + jv[k]), 0.0).max()))
        mm = max(mm, float(np.maximum(y - (problem.U.value[k] - ju[k]) + jv[k], 0.0).max()))
    scale = max(1.0, ref.Y.sup_abs())
    return LeftJumpFlags(mp <= tol * scale, mm <= tol * scale, mp, mm)


def step_one_residual(sol: PenalizedSolution, L: TreeProcess, U: TreeProcess) -> float:
    """Minimality of ``(Y, Z, K - A)`` against ``L ^ Y`` (or ``L``) and ``U v Y`` (or ``U``)."""
    Y = sol.Y
    lo = L.minimum(Y) if sol.scheme in ("upper", "bsde") else L
    up = U.maximum(Y) if sol.scheme in ("lower", "bsde") else U
    return minimality_terms(Y, lo, sol.K, 1.0) + minimality_terms(Y, up, sol.A, -1.0)


COLUMNS = (
    "scheme",
    "n",
    "sup_err",
    "h_err_g1",
    "h_err_g15",
    "h_err_g2",
    "minimality_residual",
    "sandwich_ok",
    "monotone_ok",
)


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


@dataclass
class ConvergenceTable:
    scheme: str
    rows: list
    flags: LeftJumpFlags | None = None

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]

    def non_increasing(self, name: str) -> bool:
        col = self.column(name)
        return all(b <= a for a, b in zip(col, col[1:]))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(",".join(COLUMNS) + "\n")
        for r in self.rows:
            buf.write(",".join(_fmt(r[c]) for c in COLUMNS) + "\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _level_solutions(problem: Problem, n: int) -> dict:
    args = (problem.tree, problem.xi, problem.gen, problem.V, problem.L, problem.U, n)
    return {s: solve_penalized(s, *args) for s in SCHEMES}


def convergence_report(
    scheme: str,
    n_list,
    problem: Problem,
    p: float = 2.0,
    workers: int = 1,
    reference: TwoBarrierSolution | None = None,
) -> ConvergenceTable:
    """Errors of the penalised solutions against the reflected solution on the same tree.

    ``sandwich_ok`` checks ``Ybar^n <= Y^n <= Yunder^n`` and ``Ybar^n <= Y <= Yunder^n``.
    ``monotone_ok`` compares with the previous row: the upper scheme must
    increase with ``dA`` increasing, the lower scheme decrease with ``dK``
    increasing, the BSDE scheme must not increase its sup error.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    n_list = [int(n) for n in n_list]
    ref = reference or solve_clamped(problem.tree, problem.xi, problem.gen, problem.V, problem.L, problem.U)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            levels = list(pool.map(lambda n: _level_solutions(problem, n), n_list))
    else:
        levels = [_level_solutions(problem, n) for n in n_list]

    rows = []
    prev = None
    for n, sols in zip(n_list, levels):
        sol = sols[scheme]
        diff = sol.Y - ref.Y
        sup_err = sp_norm(diff, max(p, 1.0))
        herr = {g: gamma_error(sol.Z, ref.Z, g, p) for g in (1.0, 1.5, 2.0)}
        up, bs, lo = sols["upper"].Y, sols["bsde"].Y, sols["lower"].Y
        sandwich = up.le(bs) and bs.le(lo) and up.le(ref.Y) and ref.Y.le(lo)
        if prev is None:
            monotone = True
        elif scheme == "upper":
            monotone = prev["sol"].Y.le(sol.Y) and monotonicity_check_A(prev["sol"], sol).ok
        elif scheme == "lower":
            monotone = sol.Y.le(prev["sol"].Y) and _k_monotone(prev["sol"], sol)
        else:
            monotone = sup_err <= prev["sup_err"]
        row = {
            "scheme": scheme,
            "n": n,
            "sup_err": sup_err,
            "h_err_g1": herr[1.0],
            "h_err_g15": herr[1.5],
            "h_err_g2": herr[2.0],
            "minimality_residual": step_one_residual(sol, problem.L, problem.U),
            "sandwich_ok": bool(sandwich),
            "monotone_ok": bool(monotone),
        }
        rows.append(row)
        prev = {"sol": sol, "sup_err": sup_err}
    return ConvergenceTable(scheme, rows, left_jump_flags(problem, ref))


def _k_monotone(a: PenalizedSolution, b: PenalizedSolution) -> bool:
    flipped_a = PenalizedSolution(a.scheme, a.n, a.Y, a.Z, a.A, a.K)
    flipped_b = PenalizedSolution(b.scheme, b.n, b.Y, b.Z, b.A, b.K)
    return monotonicity_check_A(flipped_a, flipped_b).ok
