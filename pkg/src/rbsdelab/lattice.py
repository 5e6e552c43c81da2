"""Recombining binomial tree carrying an exact discrete Brownian filtration.

Node ``(k, j)`` sits at time ``t_k`` after ``j`` up-moves; the walk there is
``B = (2j - k) sqrt(dt)``.  From ``(k, j)`` the walk moves to ``(k+1, j+1)``
or ``(k+1, j)`` with probability 1/2 each, so the increments have mean 0 and
variance ``dt`` exactly.

Adapted processes are :class:`TreeProcess` objects holding a value and a
post-value per node (see :mod:`rbsdelab.grid_paths`).  Finite-variation
processes are :class:`TreeFV` objects holding increments: one per edge for the
cadlag part over ``(t_k, t_{k+1}]`` and one per node for the right jump.
Edge increments may differ between the two children, so integrators that are
only adapted (not predictable) are representable.

Path-level quantities (running suprema, stopping times that look at the
whole history) use the ``2**N`` leaf paths of the underlying non-recombining
tree; ``paths()`` enumerates them with the first move as the most
significant bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import NotAMartingaleError
from .grid_paths import FVPath, RegulatedPath, TimeGrid

MAX_PATH_STEPS = 22
MARTINGALE_TOL = 1e-12


class BinomialTree:
    """Symmetric random walk with steps ``+-sqrt(dt)`` on ``grid``."""

    def __init__(self, grid: TimeGrid):
        self.grid = grid

    @classmethod
    def build(cls, horizon: float, steps: int) -> "BinomialTree":
        return cls(TimeGrid(horizon, steps))

    @property
    def steps(self) -> int:
        return self.grid.steps

    @property
    def dt(self) -> float:
        return self.grid.dt

    @property
    def sqrt_dt(self) -> float:
        return float(np.sqrt(self.grid.dt))

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def walk(self, k: int) -> np.ndarray:
        j = np.arange(k + 1)
        return (2 * j - k) * self.sqrt_dt

    def node_probabilities(self, k: int) -> np.ndarray:
        """P(node (k, j)) = C(k, j) / 2**k."""
        p = np.array([1.0])
        for _ in range(k):
            p = 0.5 * (np.concatenate((p, [0.0])) + np.concatenate(([0.0], p)))
        return p

    @cached_property
    def _probabilities(self) -> list[np.ndarray]:
        return [self.node_probabilities(k) for k in range(self.steps + 1)]

    def probabilities(self, k: int) -> np.ndarray:
        return self._probabilities[k]

    def increments(self) -> np.ndarray:
        """Branch increments of the walk: ``[-sqrt(dt), +sqrt(dt)]`` for (down, up)."""
        return np.array([-self.sqrt_dt, self.sqrt_dt])

    @cached_property
    def _paths(self) -> np.ndarray:
        n = self.steps
        if n > MAX_PATH_STEPS:
            raise ValueError(f"path enumeration limited to N <= {MAX_PATH_STEPS}")
        leaves = np.arange(2**n)
        bits = (leaves[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1
        out = np.zeros((2**n, n + 1), dtype=np.int64)
        out[:, 1:] = np.cumsum(bits, axis=1)
        return out

    def paths(self) -> np.ndarray:
        """Node index ``j`` along every leaf path, shape ``(2**N, N + 1)``."""
        return self._paths

    def path_moves(self) -> np.ndarray:
        """Branch taken at each step (0 down, 1 up), shape ``(2**N, N)``."""
        return np.diff(self.paths(), axis=1)

    def __eq__(self, other):
        return isinstance(other, BinomialTree) and self.grid == other.grid

    def __repr__(self):
        return f"BinomialTree(horizon={self.grid.horizon}, steps={self.steps})"


def _levels(tree: BinomialTree, data, name: str) -> list[np.ndarray]:
    out = [np.array(level, dtype=float).reshape(-1) for level in data]
    if len(out) != tree.steps + 1:
        raise ValueError(f"{name}: expected {tree.steps + 1} levels, got {len(out)}")
    for k, level in enumerate(out):
        if level.size != k + 1:
            raise ValueError(f"{name}: level {k} has {level.size} nodes, expected {k + 1}")
    return out


class TreeProcess:
    """Adapted regulated process: ``value[k][j]`` and ``post[k][j]`` per node."""

    __slots__ = ("tree", "value", "post")

    def __init__(self, tree: BinomialTree, value, post=None):
        self.tree = tree
        self.value = _levels(tree, value, "value")
        if post is None:
            self.post = [v.copy() for v in self.value]
        else:
            self.post = _levels(tree, post, "post")
        if not np.array_equal(self.post[-1], self.value[-1]):
            raise ValueError("post-value at the horizon must equal the terminal value")

    # constructors -----------------------------------------------------------
    @classmethod
    def zeros(cls, tree: BinomialTree) -> "TreeProcess":
        return cls.constant(tree, 0.0)

    @classmethod
    def constant(cls, tree: BinomialTree, c: float) -> "TreeProcess":
        return cls(tree, [np.full(k + 1, float(c)) for k in range(tree.steps + 1)])

    @classmethod
    def from_function(
        cls,
        tree: BinomialTree,
        fn: Callable[[float, np.ndarray], np.ndarray],
        right_jumps: Sequence[np.ndarray] | None = None,
    ) -> "TreeProcess":
        """Values ``fn(t_k, B)`` at the nodes, optionally with right jumps per node."""
        t = tree.times
        value = [np.broadcast_to(fn(t[k], tree.walk(k)), (k + 1,)).astype(float) for k in range(tree.steps + 1)]
        post = [v.copy() for v in value]
        if right_jumps is not None:
            for k in range(tree.steps):
                post[k] = value[k] + np.asarray(right_jumps[k], dtype=float)
        return cls(tree, value, post)

    @classmethod
    def from_path(cls, tree: BinomialTree, path: RegulatedPath) -> "TreeProcess":
        """Deterministic process equal to ``path`` on every node."""
        if path.steps != tree.steps:
            raise ValueError("path and tree have different step counts")
        n = tree.steps
        return cls(
            tree,
            [np.full(k + 1, path.value[k]) for k in range(n + 1)],
            [np.full(k + 1, path.post[k]) for k in range(n + 1)],
        )

    # structure --------------------------------------------------------------
    @property
    def steps(self) -> int:
        return self.tree.steps

    def copy(self) -> "TreeProcess":
        return TreeProcess(self.tree, [v.copy() for v in self.value], [p.copy() for p in self.post])

    def right_jumps(self) -> list[np.ndarray]:
        return [p - v for v, p in zip(self.value, self.post)]

    def left_jumps(self) -> list[np.ndarray]:
        """Left jump on each edge into level k+1, shape ``(k+1, 2)`` (down, up)."""
        return [
            np.stack((self.value[k + 1][:-1], self.value[k + 1][1:]), axis=1) - self.post[k][:, None]
            for k in range(self.steps)
        ]

    def child_values(self, k: int) -> np.ndarray:
        """Values at level k+1 seen from each node of level k, shape ``(k+1, 2)``."""
        nxt = self.value[k + 1]
        return np.stack((nxt[:-1], nxt[1:]), axis=1)

    def is_cadlag(self, tol: float = 0.0) -> bool:
        return all(np.abs(j).max() <= tol for j in self.right_jumps())

    def path_values(self) -> np.ndarray:
        """Interleaved (value, post) along every leaf path, shape ``(2**N, 2N + 1)``."""
        paths = self.tree.paths()
        n = self.steps
        out = np.empty((paths.shape[0], 2 * n + 1))
        for k in range(n + 1):
            out[:, 2 * k] = self.value[k][paths[:, k]]
            if k < n:
                out[:, 2 * k + 1] = self.post[k][paths[:, k]]
        return out

    def sup_abs(self) -> float:
        return float(max(max(np.abs(v).max(), np.abs(p).max()) for v, p in zip(self.value, self.post)))

    # arithmetic -------------------------------------------------------------
    def _combine(self, other, op) -> "TreeProcess":
        if isinstance(other, TreeProcess):
            return TreeProcess(
                self.tree,
                [op(a, b) for a, b in zip(self.value, other.value)],
                [op(a, b) for a, b in zip(self.post, other.post)],
            )
        return TreeProcess(self.tree, [op(a, other) for a in self.value], [op(a, other) for a in self.post])

    def __add__(self, other):
        return self._combine(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, c):
        return self._combine(c, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return TreeProcess(self.tree, [-v for v in self.value], [-p for p in self.post])

    def __abs__(self):
        return TreeProcess(self.tree, [np.abs(v) for v in self.value], [np.abs(p) for p in self.post])

    def maximum(self, other) -> "TreeProcess":
        return self._combine(other, np.maximum)

    def minimum(self, other) -> "TreeProcess":
        return self._combine(other, np.minimum)

    def le(self, other, tol: float = 0.0) -> bool:
        """Node-wise ``self <= other + tol`` on values and post-values."""
        return self.max_excess(other) <= tol

    def max_excess(self, other) -> float:
        """``max(self - other)`` over values and post-values (negative if strictly below)."""
        d = self - other
        return float(max(max(v.max(), p.max()) for v, p in zip(d.value, d.post)))

    def allclose(self, other, atol: float) -> bool:
        return (self - other).sup_abs() <= atol

    def __repr__(self):
        return f"TreeProcess(steps={self.steps}, value0={self.value[0][0]!r})"


class TreeFV:
    """Finite-variation process on the tree, stored by increments.

    ``flow[k]`` has shape ``(k+1, 2)``: increment over ``(t_k, t_{k+1}]`` on the
    down/up edge out of node ``(k, j)``.  ``jump[k]`` has shape ``(k+1,)``:
    right jump at node ``(k, j)``; ``jump[N]`` is zero.
    """

    __slots__ = ("tree", "flow", "jump")

    def __init__(self, tree: BinomialTree, flow, jump):
        self.tree = tree
        n = tree.steps
        flow = [np.array(f, dtype=float) for f in flow]
        jump = [np.array(j, dtype=float).reshape(-1) for j in jump]
        if len(flow) != n or len(jump) != n + 1:
            raise ValueError("TreeFV needs N flow levels and N + 1 jump levels")
        for k in range(n):
            if flow[k].shape == (k + 1,):
                flow[k] = np.repeat(flow[k][:, None], 2, axis=1)
            if flow[k].shape != (k + 1, 2):
                raise ValueError(f"flow level {k} has shape {flow[k].shape}")
        for k in range(n + 1):
            if jump[k].shape != (k + 1,):
                raise ValueError(f"jump level {k} has shape {jump[k].shape}")
        if np.any(jump[n] != 0.0):
            raise ValueError("no right jump at the horizon")
        self.flow = flow
        self.jump = jump

    @classmethod
    def zeros(cls, tree: BinomialTree) -> "TreeFV":
        n = tree.steps
        return cls(tree, [np.zeros((k + 1, 2)) for k in range(n)], [np.zeros(k + 1) for k in range(n + 1)])

    @classmethod
    def from_path(cls, tree: BinomialTree, path: FVPath) -> "TreeFV":
        if path.steps != tree.steps:
            raise ValueError("path and tree have different step counts")
        flow = path.flow_increments()
        jump = path.right_jumps()
        n = tree.steps
        return cls(
            tree,
            [np.full((k + 1, 2), flow[k]) for k in range(n)],
            [np.full(k + 1, jump[k]) for k in range(n + 1)],
        )

    @classmethod
    def from_process(cls, X: TreeProcess) -> "TreeFV":
        """Increments of an adapted process (its value at 0 is dropped)."""
        return cls(X.tree, X.left_jumps(), X.right_jumps())

    @property
    def steps(self) -> int:
        return self.tree.steps

    def __add__(self, other: "TreeFV") -> "TreeFV":
        return TreeFV(self.tree, [a + b for a, b in zip(self.flow, other.flow)], [a + b for a, b in zip(self.jump, other.jump)])

    def __sub__(self, other: "TreeFV") -> "TreeFV":
        return self + (-other)

    def __neg__(self) -> "TreeFV":
        return TreeFV(self.tree, [-f for f in self.flow], [-j for j in self.jump])

    def jordan(self) -> tuple["TreeFV", "TreeFV"]:
        """Slot-wise minimal split into non-decreasing parts."""
        plus = TreeFV(self.tree, [np.maximum(f, 0.0) for f in self.flow], [np.maximum(j, 0.0) for j in self.jump])
        minus = TreeFV(self.tree, [np.maximum(-f, 0.0) for f in self.flow], [np.maximum(-j, 0.0) for j in self.jump])
        return plus, minus

    def split(self) -> tuple["TreeFV", "TreeFV"]:
        """``(cadlag part, right-jump part)``."""
        n = self.steps
        star = TreeFV(self.tree, [f.copy() for f in self.flow], [np.zeros(k + 1) for k in range(n + 1)])
        d = TreeFV(self.tree, [np.zeros((k + 1, 2)) for k in range(n)], [j.copy() for j in self.jump])
        return star, d

    def is_nondecreasing(self) -> bool:
        return all((f >= 0).all() for f in self.flow) and all((j >= 0).all() for j in self.jump)

    def min_increment(self) -> float:
        return float(min(min(f.min() for f in self.flow), min(j.min() for j in self.jump)))

    def max_abs(self) -> float:
        return float(max(max(np.abs(f).max() for f in self.flow), max(np.abs(j).max() for j in self.jump)))

    def is_zero(self, tol: float = 0.0) -> bool:
        return self.max_abs() <= tol

    def path_values(self) -> np.ndarray:
        """Interleaved (value, post) of the accumulated process along every leaf path."""
        paths = self.tree.paths()
        moves = self.tree.path_moves()
        n = self.steps
        out = np.zeros((paths.shape[0], 2 * n + 1))
        acc = np.zeros(paths.shape[0])
        for k in range(n + 1):
            if k > 0:
                acc = acc + self.flow[k - 1][paths[:, k - 1], moves[:, k - 1]]
            out[:, 2 * k] = acc
            acc = acc + self.jump[k][paths[:, k]]
            if k < n:
                out[:, 2 * k + 1] = acc
        return out

    def __repr__(self):
        return f"TreeFV(steps={self.steps}, max_abs={self.max_abs():.3g})"


# ---------------------------------------------------------------------------
# conditional expectation and representation


def cond_expect(tree: BinomialTree, X, k: int) -> np.ndarray:
    """E(X | F_{t_k}) for ``X`` given on level k+1 (``(k+2,)``) or per edge (``(k+1, 2)``)."""
    if not 0 <= k < tree.steps:
        raise ValueError(f"level {k} has no successor on a {tree.steps}-step tree")
    X = np.asarray(X, dtype=float)
    if X.shape == (k + 2,):
        return 0.5 * (X[1:] + X[:-1])
    if X.shape == (k + 1, 2):
        return 0.5 * (X[:, 0] + X[:, 1])
    raise ValueError(f"level mismatch: expected shape ({k + 2},) or ({k + 1}, 2), got {X.shape}")


def expectation(tree: BinomialTree, leaf_values) -> float:
    """E(X) for X on the last level, by iterated conditioning."""
    x = np.asarray(leaf_values, dtype=float)
    for k in range(tree.steps - 1, -1, -1):
        x = cond_expect(tree, x, k)
    return float(x[0])


def represent_step(tree: BinomialTree, X) -> tuple[np.ndarray, np.ndarray]:
    """Split per-edge values ``X`` (shape ``(k+1, 2)``) into ``(E X, z)``.

    On each edge ``X = E X + z * dB`` with ``dB = +-sqrt(dt)``.
    """
    X = np.asarray(X, dtype=float)
    mean = 0.5 * (X[:, 0] + X[:, 1])
    z = (X[:, 1] - X[:, 0]) / (2.0 * tree.sqrt_dt)
    return mean, z


def martingale_representation(M: TreeProcess, tol: float = MARTINGALE_TOL) -> TreeProcess:
    """Integrand ``Z`` with ``M_{k+1} = M_k + Z_k dB_{k+1}`` on every branch.

    Only values are used (a martingale on the grid has no right jumps in the
    sense needed here).  The returned process carries ``Z`` on levels
    ``0..N-1`` and zeros on level N.
    """
    tree = M.tree
    scale = max(1.0, M.sup_abs())
    z_levels = []
    for k in range(tree.steps):
        nxt = M.value[k + 1]
        drift = cond_expect(tree, nxt, k) - M.value[k]
        if np.abs(drift).max() > tol * scale:
            j = int(np.abs(drift).argmax())
            raise NotAMartingaleError(
                f"conditional drift {drift[j]:.3e} at node ({k}, {j}) exceeds {tol:g} x scale"
            )
        z_levels.append((nxt[1:] - nxt[:-1]) / (2.0 * tree.sqrt_dt))
    z_levels.append(np.zeros(tree.steps + 1))
    return TreeProcess(tree, z_levels)


def martingale_from_terminal(tree: BinomialTree, xi) -> TreeProcess:
    """Martingale closure ``M_k = E(xi | F_k)`` by backward conditioning."""
    xi = np.asarray(xi, dtype=float)
    levels = [xi]
    for k in range(tree.steps - 1, -1, -1):
        levels.append(cond_expect(tree, levels[-1], k))
    return TreeProcess(tree, levels[::-1])


# ---------------------------------------------------------------------------
# stopping times


@dataclass
class StoppingTime:
    """Markov stopping rule on the tree.

    ``stop[k][j]`` stops at the time-``t_k`` instant of node ``(k, j)``;
    ``stop_post[k][j]`` stops on ``(t_k, t_{k+1})`` (just after ``t_k``).
    The rule always stops at the horizon.
    """

    tree: BinomialTree
    stop: list
    stop_post: list

    def __post_init__(self):
        n = self.tree.steps
        self.stop = [np.asarray(s, dtype=bool).reshape(k + 1) for k, s in enumerate(self.stop)]
        self.stop_post = [np.asarray(s, dtype=bool).reshape(k + 1) for k, s in enumerate(self.stop_post)]
        if len(self.stop) != n + 1 or len(self.stop_post) != n:
            raise ValueError("stop needs N + 1 levels and stop_post N levels")
        self.stop[n] = np.ones(n + 1, dtype=bool)

    @classmethod
    def at_level(cls, tree: BinomialTree, level: int) -> "StoppingTime":
        n = tree.steps
        stop = [np.full(k + 1, k == level) for k in range(n + 1)]
        return cls(tree, stop, [np.zeros(k + 1, dtype=bool) for k in range(n)])

    def instants(self) -> np.ndarray:
        """Stopping instant per leaf path: ``2k`` for ``t_k``, ``2k + 1`` for ``t_k+``."""
        paths = self.tree.paths()
        n = self.tree.steps
        out = np.full(paths.shape[0], 2 * n, dtype=np.int64)
        done = np.zeros(paths.shape[0], dtype=bool)
        for k in range(n + 1):
            hit = ~done & self.stop[k][paths[:, k]]
            out[hit] = 2 * k
            done |= hit
            if k < n:
                hit = ~done & self.stop_post[k][paths[:, k]]
                out[hit] = 2 * k + 1
                done |= hit
        return out


def evaluate_at_stopping_time(X: TreeProcess, tau) -> np.ndarray:
    """``X_tau`` on every leaf path.

    ``tau`` is a :class:`StoppingTime` or an integer array of instants per
    leaf path (``2k`` = time ``t_k``, ``2k + 1`` = just after ``t_k``).
    """
    instants = tau.instants() if isinstance(tau, StoppingTime) else np.asarray(tau)
    vals = X.path_values()
    return vals[np.arange(vals.shape[0]), instants]


def snell_envelope(G: TreeProcess) -> tuple[TreeProcess, StoppingTime]:
    """Smallest supermartingale above ``G`` and the first time it touches ``G``.

    Both instants of a node are decision points: ``S+_k = max(G+_k, E S_{k+1})``
    and ``S_k = max(G_k, S+_k)``.  For a payoff without right jumps this is
    the usual ``S_k = max(G_k, E S_{k+1})``.
    """
    tree = G.tree
    n = tree.steps
    value = [None] * (n + 1)
    post = [None] * (n + 1)
    value[n] = G.value[n].copy()
    post[n] = value[n].copy()
    stop = [None] * (n + 1)
    stop_post = [None] * n
    stop[n] = np.ones(n + 1, dtype=bool)
    for k in range(n - 1, -1, -1):
        cont = cond_expect(tree, value[k + 1], k)
        post[k] = np.maximum(G.post[k], cont)
        value[k] = np.maximum(G.value[k], post[k])
        stop_post[k] = G.post[k] >= cont
        stop[k] = G.value[k] >= post[k]
    return TreeProcess(tree, value, post), StoppingTime(tree, stop, stop_post)


# ---------------------------------------------------------------------------
# exhaustive enumeration of path-dependent stopping times (oracle support)


def decision_instants(tree: BinomialTree, use_post: Sequence[bool] | None = None) -> list[int]:
    """Ordered list of instants (``2k`` / ``2k + 1``) available to a stopper.

    ``use_post[k]`` says whether the instant just after ``t_k`` is kept; an
    instant can be dropped when no payoff changes across it.
    """
    n = tree.steps
    if use_post is None:
        use_post = [True] * n
    out = []
    for k in range(n + 1):
        out.append(2 * k)
        if k < n and use_post[k]:
            out.append(2 * k + 1)
    return out


def count_stopping_times(tree: BinomialTree, instants: Sequence[int]) -> int:
    """Number of adapted stopping times over ``instants`` on the leaf-path tree."""
    count = 1
    for i in range(len(instants) - 2, -1, -1):
        same_level = instants[i + 1] // 2 == instants[i] // 2
        count = 1 + (count if same_level else count * count)
    return count


def enumerate_stopping_times(tree: BinomialTree, instants: Sequence[int], budget: int = 10**6) -> np.ndarray:
    """All adapted stopping times as rows of leaf-wise instants.

    Returns an integer array of shape ``(count, 2**N)``.  A stopper at an
    instant either stops or moves on; moving to the next level splits the
    history into two sub-trees that choose independently.
    """
    from .errors import EnumerationBudgetError

    total = count_stopping_times(tree, instants)
    if total > budget:
        raise EnumerationBudgetError(f"{total} stopping times exceed budget {budget}")
    n = tree.steps
    m = len(instants)
    memo: dict[int, np.ndarray] = {}
    for i in range(m - 1, -1, -1):
        level = instants[i] // 2
        width = 2 ** (n - level)
        stop_here = np.full((1, width), instants[i], dtype=np.int64)
        if i == m - 1:
            memo[i] = stop_here
            continue
        nxt = memo[i + 1]
        if instants[i + 1] // 2 == level:
            cont = nxt
        else:
            a = np.repeat(nxt, nxt.shape[0], axis=0)
            b = np.tile(nxt, (nxt.shape[0], 1))
            cont = np.concatenate((a, b), axis=1)
        memo[i] = np.concatenate((stop_here, cont), axis=0)
    return memo[0]


def regulated_path_values(X: TreeProcess) -> np.ndarray:
    """Alias of ``X.path_values()`` kept for symmetry with :class:`TreeFV`."""
    return X.path_values()


def deterministic(tree: BinomialTree, path) -> TreeProcess:
    """Lift a :class:`RegulatedPath` (or a plain array of values) onto the tree."""
    if not isinstance(path, RegulatedPath):
        path = RegulatedPath(path)
    return TreeProcess.from_path(tree, path)
