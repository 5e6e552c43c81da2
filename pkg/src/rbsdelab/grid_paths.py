"""Regulated paths on a finite time grid.

A path is stored as two arrays of length ``N + 1``: ``value[k]`` is the value
at ``t_k`` and ``post[k]`` is the value on the open interval
``(t_k, t_{k+1})``.  Between grid times the path is constant, so the left
limit at ``t_k`` is ``post[k - 1]``.  Both one-sided jumps at ``t_k`` are
therefore explicit:

    right jump  = post[k] - value[k]          (0 at k = N)
    left jump   = value[k] - post[k - 1]      (0 at k = 0)

A finite-variation path starts at zero.  Its increments live in two kinds of
slots: the left jump at ``t_{k+1}`` (the cadlag part moving over
``(t_k, t_{k+1}]``) and the right jump at ``t_k``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k * horizon / steps`` on ``[0, horizon]``."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)

    def check_monotonicity(self, mu: float) -> None:
        """Raise unless ``dt * max(0, mu) < 1`` (the implicit step is then well posed)."""
        if self.dt * max(0.0, mu) >= 1.0:
            raise ValueError(
                f"dt*max(0, mu) = {self.dt * max(0.0, mu):.6g} >= 1; refine the grid"
            )


class RegulatedPath:
    """Piecewise-constant regulated path with explicit post-values."""

    __slots__ = ("value", "post")

    def __init__(self, value, post=None):
        value = np.array(value, dtype=float)
        post = value.copy() if post is None else np.array(post, dtype=float)
        if value.ndim != 1 or value.shape != post.shape:
            raise ValueError("value and post must be 1-d arrays of equal length")
        if value.size < 2:
            raise ValueError("a path needs at least two grid times")
        if post[-1] != value[-1]:
            raise ValueError("post-value at the horizon must equal the terminal value")
        self.value = value
        self.post = post

    @property
    def steps(self) -> int:
        return self.value.size - 1

    def right_jumps(self) -> np.ndarray:
        return self.post - self.value

    def left_jumps(self) -> np.ndarray:
        out = np.zeros_like(self.value)
        out[1:] = self.value[1:] - self.post[:-1]
        return out

    def left_limits(self) -> np.ndarray:
        """Left limit at each grid time; at ``t_0`` the value itself."""
        out = self.value.copy()
        out[1:] = self.post[:-1]
        return out

    def __neg__(self):
        return type(self)(-self.value, -self.post)

    def __add__(self, other):
        if isinstance(other, RegulatedPath):
            return RegulatedPath(self.value + other.value, self.post + other.post)
        return RegulatedPath(self.value + other, self.post + other)

    def __sub__(self, other):
        return self + (-other)

    def __eq__(self, other):
        if not isinstance(other, RegulatedPath):
            return NotImplemented
        return np.array_equal(self.value, other.value) and np.array_equal(
            self.post, other.post
        )

    def __repr__(self):
        return f"{type(self).__name__}(value={self.value!r}, post={self.post!r})"


class FVPath(RegulatedPath):
    """Finite-variation path, ``R_0 = 0``."""

    __slots__ = ()

    def __init__(self, value, post=None):
        super().__init__(value, post)
        if self.value[0] != 0.0:
            raise ValueError("a finite-variation path must start at 0")

    @classmethod
    def from_increments(cls, flow, jump) -> "FVPath":
        """Build from left-jump increments ``flow[k]`` (at ``t_{k+1}``) and right jumps ``jump[k]``.

        ``flow`` has length N, ``jump`` length N + 1 with ``jump[N] == 0``.
        """
        flow = np.asarray(flow, dtype=float)
        jump = np.asarray(jump, dtype=float)
        n = flow.size
        if jump.size != n + 1:
            raise ValueError("jump must have one more entry than flow")
        if jump[-1] != 0.0:
            raise ValueError("no right jump at the horizon")
        value = np.zeros(n + 1)
        post = np.zeros(n + 1)
        for k in range(n + 1):
            if k > 0:
                value[k] = post[k - 1] + flow[k - 1]
            post[k] = value[k] + jump[k]
        return cls(value, post)

    def flow_increments(self) -> np.ndarray:
        """Cadlag-part increments, entry k covering ``(t_k, t_{k+1}]``."""
        return self.value[1:] - self.post[:-1]

    def total_variation(self) -> float:
        return float(np.abs(self.flow_increments()).sum() + np.abs(self.right_jumps()).sum())

    def is_nondecreasing(self) -> bool:
        return bool((self.flow_increments() >= 0).all() and (self.right_jumps() >= 0).all())

    def __neg__(self):
        return FVPath(-self.value, -self.post)

    def __add__(self, other):
        if isinstance(other, FVPath):
            return FVPath(self.value + other.value, self.post + other.post)
        return super().__add__(other)


def _check_index(X: RegulatedPath, k: int) -> None:
    if not 0 <= k <= X.steps:
        raise IndexError(f"grid index {k} outside 0..{X.steps}")


def right_jump(X: RegulatedPath, k: int) -> float:
    _check_index(X, k)
    if k == X.steps:
        return 0.0
    return float(X.post[k] - X.value[k])


def left_jump(X: RegulatedPath, k: int) -> float:
    _check_index(X, k)
    if k == 0:
        return 0.0
    return float(X.value[k] - X.post[k - 1])


def cadlag_envelope(X: RegulatedPath) -> RegulatedPath:
    """The cadlag path ``t -> X_{t+}`` (and ``X_T`` at the horizon)."""
    return RegulatedPath(X.post.copy())


def jordan_decompose(R: FVPath) -> tuple[FVPath, FVPath]:
    """Slot-wise minimal split ``R = R_plus - R_minus`` into non-decreasing paths."""
    flow = R.flow_increments()
    jump = R.right_jumps()
    plus = FVPath.from_increments(np.maximum(flow, 0.0), np.maximum(jump, 0.0))
    minus = FVPath.from_increments(np.maximum(-flow, 0.0), np.maximum(-jump, 0.0))
    return plus, minus


def split_cadlag_jump_parts(V: FVPath) -> tuple[FVPath, FVPath]:
    """Return ``(V_star, V_d)`` with ``V_d`` the accumulated right jumps."""
    flow = V.flow_increments()
    jump = V.right_jumps()
    vstar = FVPath.from_increments(flow, np.zeros_like(jump))
    vd = FVPath.from_increments(np.zeros_like(flow), jump)
    return vstar, vd
