"""Generators ``f(t, y, z)`` with their structural constants.

A generator carries a Lipschitz constant in ``z`` (``lam``), a one-sided
Lipschitz (monotonicity) constant in ``y`` (``mu``) and optionally the
sub-linear ``z``-growth data ``(gamma, alpha, g)`` with

    |f(t, y, z) - f(t, y, 0)| <= gamma * (g(t) + |y| + |z|) ** alpha.

Functions must be vectorised: ``t`` is a scalar, ``y`` and ``z`` are arrays.
When ``f`` is affine in ``y`` with a known coefficient, ``slope`` is set and
the implicit step is solved in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import SolverError

ROOT_TOL = 1e-12
# brackets shrink to a few ulps so outer fixed-point loops see no solver jitter
BRACKET_TOL = 1e-15
MAX_ROOT_ITER = 200
ASSUMPTION_TOL = 1e-9

GenFn = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ZGrowth:
    gamma: float
    alpha: float
    g: Callable[[float], float] | float = 0.0

    def __post_init__(self):
        if self.gamma < 0 or not 0 <= self.alpha < 1:
            raise ValueError("need gamma >= 0 and alpha in [0, 1)")

    def bound(self, t: float, y, z):
        g = np.vectorize(self.g)(t) if callable(self.g) else self.g
        base = g + np.abs(y) + np.abs(z)
        return self.gamma * np.power(base, self.alpha)


@dataclass(frozen=True)
class GeneratorSpec:
    f: GenFn
    lam: float = 0.0
    mu: float = 0.0
    zgrowth: ZGrowth | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)
    slope: float | None = None

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be non-negative")

    def __call__(self, t, y, z):
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        return np.broadcast_to(np.asarray(self.f(t, y, z), dtype=float), np.broadcast(y, z).shape)

    @property
    def z_free(self) -> bool:
        return self.lam == 0.0

    def mirror(self) -> "GeneratorSpec":
        """Generator of ``(-Y, -Z)``: ``-f(t, -y, -z)``."""
        f = self.f
        return GeneratorSpec(
            f=lambda t, y, z: -f(t, -y, -z),
            lam=self.lam,
            mu=self.mu,
            zgrowth=self.zgrowth,
            name=f"mirror({self.name})",
            params=dict(self.params),
            slope=self.slope,
        )

    def shifted(self, shift) -> "GeneratorSpec":
        """``f(t, y - shift(t), z)`` for a deterministic shift function."""
        f = self.f
        return GeneratorSpec(
            f=lambda t, y, z: f(t, y - shift(t), z),
            lam=self.lam,
            mu=self.mu,
            zgrowth=self.zgrowth,
            name=f"shifted({self.name})",
            params=dict(self.params),
            slope=self.slope,
        )

    def frozen(self, z_value: float) -> "GeneratorSpec":
        """``f(t, y, z_value)`` as a z-free generator."""
        f = self.f
        return GeneratorSpec(
            f=lambda t, y, z: f(t, y, np.full_like(np.asarray(y, dtype=float), z_value)),
            lam=0.0,
            mu=self.mu,
            name=f"frozen({self.name})",
            params=dict(self.params),
            slope=self.slope,
        )


# ---------------------------------------------------------------------------
# catalogue


def zero() -> GeneratorSpec:
    return GeneratorSpec(lambda t, y, z: np.zeros(np.broadcast(y, z).shape), 0.0, 0.0, name="zero", slope=0.0)


def linear(a0: float = 0.0, ay: float = 0.0, az: float = 0.0) -> GeneratorSpec:
    """``a0 + ay * y + az * z``."""
    return GeneratorSpec(
        lambda t, y, z: a0 + ay * y + az * z,
        lam=abs(az),
        mu=ay,
        zgrowth=ZGrowth(abs(az), 0.5, 0.0) if az == 0 else None,
        name="linear",
        params={"a0": a0, "ay": ay, "az": az},
        slope=ay,
    )


def cubic_monotone(c: float = 1.0, a: float = 0.0, b: float = 0.0) -> GeneratorSpec:
    """``-c y**3 + a z + b`` with ``c >= 0``; monotone with ``mu = 0``."""
    if c < 0:
        raise ValueError("cubic coefficient must be non-negative")
    return GeneratorSpec(
        lambda t, y, z: -c * y**3 + a * z + b,
        lam=abs(a),
        mu=0.0,
        name="cubic",
        params={"c": c, "a": a, "b": b},
    )


def trig(kappa: float = 1.0, a: float = 0.5, b: float = 0.0) -> GeneratorSpec:
    """``-kappa y + a sin(z) + b cos(t)``; bounded z-dependence."""
    return GeneratorSpec(
        lambda t, y, z: -kappa * y + a * np.sin(z) + b * np.cos(t),
        lam=abs(a),
        mu=-kappa,
        zgrowth=ZGrowth(abs(a), 0.0, 0.0),
        name="trig",
        params={"kappa": kappa, "a": a, "b": b},
        slope=-kappa,
    )


CATALOGUE: dict[str, Callable[..., GeneratorSpec]] = {
    "zero": zero,
    "linear": linear,
    "cubic": cubic_monotone,
    "trig": trig,
}


def from_name(name: str, params: dict | None = None) -> GeneratorSpec:
    try:
        factory = CATALOGUE[name]
    except KeyError:
        raise ValueError(f"unknown generator {name!r}; choose from {sorted(CATALOGUE)}") from None
    return factory(**(params or {}))


# ---------------------------------------------------------------------------
# implicit step


def solve_monotone(phi: Callable[[np.ndarray], np.ndarray], guess: np.ndarray, width: np.ndarray) -> np.ndarray:
    """Root of a strictly increasing, vectorised ``phi`` near ``guess``.

    The bracket ``guess +- width`` is doubled until it changes sign; then a
    Newton step (secant slope from the bracket ends) is taken whenever it lands
    inside the bracket, followed by one bisection.
    """
    guess = np.asarray(guess, dtype=float)
    width = np.maximum(np.asarray(width, dtype=float), 1.0)
    lo = guess - width
    hi = guess + width
    for _ in range(MAX_ROOT_ITER):
        flo = phi(lo)
        fhi = phi(hi)
        bad_lo = flo > 0
        bad_hi = fhi < 0
        if not (bad_lo.any() or bad_hi.any()):
            break
        width = np.where(bad_lo | bad_hi, 2 * width, width)
        lo = np.where(bad_lo, lo - width, lo)
        hi = np.where(bad_hi, hi + width, hi)
    else:
        raise SolverError("could not bracket the implicit step; is the generator monotone?")

    for _ in range(MAX_ROOT_ITER):
        # secant step from the bracket ends, then a bisection, so the bracket at least halves
        flo = phi(lo)
        fhi = phi(hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            secant = lo - flo * (hi - lo) / (fhi - flo)
        y = np.where(np.isfinite(secant) & (secant > lo) & (secant < hi), secant, 0.5 * (lo + hi))
        fy = phi(y)
        lo = np.where(fy <= 0, y, lo)
        hi = np.where(fy >= 0, y, hi)
        mid = 0.5 * (lo + hi)
        fm = phi(mid)
        lo = np.where(fm <= 0, mid, lo)
        hi = np.where(fm >= 0, mid, hi)
        tol = np.maximum(BRACKET_TOL, 4 * np.spacing(np.maximum(np.abs(lo), np.abs(hi))))
        if (hi - lo <= tol).all():
            return 0.5 * (lo + hi)
    raise SolverError("implicit step did not converge to 1e-12")


def implicit_solve(
    a,
    f_of_y: Callable[[np.ndarray], np.ndarray],
    dt: float,
    slope: float | None = None,
    f_at_zero=None,
    n_lower: float = 0.0,
    lower=None,
    n_upper: float = 0.0,
    upper=None,
) -> np.ndarray:
    """Solve ``y = a + [F(y) + n_L (y - lower)^- - n_U (y - upper)^+] dt``.

    ``F`` is ``f_of_y``.  When ``slope`` is given, ``F(y) = f_at_zero + slope * y``
    and the piecewise-affine equation is solved in closed form.
    """
    a = np.asarray(a, dtype=float)
    if slope is not None:
        f0 = np.asarray(f_at_zero if f_at_zero is not None else f_of_y(np.zeros_like(a)), dtype=float)
        c = 1.0 - slope * dt
        rhs = a + f0 * dt
        y = rhs / c
        # barrier-referenced forms keep the map monotone in a and n after rounding
        if n_lower > 0:
            lower = np.asarray(lower, dtype=float)
            d = lower * c - rhs
            y = np.where(d > 0, lower - d / (c + n_lower * dt), np.maximum(y, lower))
        if n_upper > 0:
            upper = np.asarray(upper, dtype=float)
            d = rhs - upper * c
            y = np.where(d > 0, upper + d / (c + n_upper * dt), np.minimum(y, upper))
        return y

    def h(y):
        out = f_of_y(y)
        if n_lower > 0:
            out = out + n_lower * np.maximum(lower - y, 0.0)
        if n_upper > 0:
            out = out - n_upper * np.maximum(y - upper, 0.0)
        return out

    def phi(y):
        return y - a - h(y) * dt

    width = np.abs(h(a)) * dt * 2.0
    return solve_monotone(phi, a, width)


def implicit_step(a, z, t: float, dt: float, gen: GeneratorSpec):
    """Unique ``y`` with ``y = a + f(t, y, z) dt``."""
    if dt * max(0.0, gen.mu) >= 1.0:
        raise ValueError("dt * max(0, mu) must be below 1")
    scalar = np.ndim(a) == 0 and np.ndim(z) == 0
    a = np.atleast_1d(np.asarray(a, dtype=float))
    z = np.broadcast_to(np.asarray(z, dtype=float), a.shape)
    y = implicit_solve(a, lambda y: gen(t, y, z), dt, slope=gen.slope)
    return float(y[0]) if scalar else y


# ---------------------------------------------------------------------------
# assumption sampling


@dataclass
class AssumptionReport:
    z_lipschitz_violation: float
    y_monotone_violation: float
    z_growth_violation: float | None
    z_lipschitz_ratio: float
    samples: int

    @property
    def passed(self) -> bool:
        worst = max(self.z_lipschitz_violation, self.y_monotone_violation, self.z_growth_violation or 0.0)
        return worst <= ASSUMPTION_TOL


def verify_assumptions(gen: GeneratorSpec, samples: int = 10_000, seed: int = 0, horizon: float = 1.0, scale: float = 3.0) -> AssumptionReport:
    """Largest sampled excess over the declared z-Lipschitz, y-monotonicity and z-growth bounds."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, horizon, samples)
    y, y2, z, z2 = (scale * rng.standard_normal(samples) for _ in range(4))
    # generators are vectorised in t as well on the sampled tuples
    fz = gen(t, y, z)
    fz2 = gen(t, y, z2)
    fy2 = gen(t, y2, z)

    dz = np.abs(z - z2)
    df = np.abs(fz - fz2)
    lip = float(np.max(df - gen.lam * dz))
    ratio = float(np.max(df / np.where(dz > 0, dz, np.inf)))
    mono = float(np.max((y - y2) * (fz - fy2) - gen.mu * (y - y2) ** 2))
    zv = None
    if gen.zgrowth is not None:
        f0 = gen(t, y, np.zeros_like(z))
        bound = gen.zgrowth.bound(t, y, z)
        zv = float(np.max(np.abs(fz - f0) - bound))
    return AssumptionReport(max(lip, 0.0), max(mono, 0.0), None if zv is None else max(zv, 0.0), ratio, samples)
