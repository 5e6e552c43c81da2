"""Scenario files: schema, validation and materialisation on a tree.

A scenario is a JSON object::

    {
      "T": 1.0, "N": 16, "seed": 0, "p": 2.0,
      "generator": {"name": "trig", "params": {"kappa": 0.5, "a": 0.3}},
      "terminal": {"kind": "sin", "amp": 1.0, "freq": 2.0, "clip": true},
      "L": {"kind": "linear", "a": -0.2, "b": -0.3, "c": 0.6,
            "right_jumps": [{"k": 4, "size": -0.6}], "left_jumps": []},
      "U": {"kind": "constant", "value": 2.0},
      "V": {"drift": 0.05, "vol": 0.0,
            "right_jumps": [{"k": 7, "size": -0.4}], "left_jumps": []}
    }

Walk functions ``g(t, B)`` (``kind``): ``constant`` (value), ``linear``
(``a + b t + c B``), ``sin`` (``amp sin(freq B + phase) + offset``), ``exp``
(``scale exp(c B + b t) + offset``), ``path`` (deterministic ``values`` per
level) and ``random`` (independent normal node values of size ``scale``
drawn from the scenario seed).

A listed left jump of size ``s`` at level ``k`` shifts the process from
``t_k`` on; a right jump at ``k < N`` shifts it from just after ``t_k`` on.
Changing ``N`` (``--steps``) moves each jump to the nearest level of the
new grid.
Missing barriers are replaced by ``-+1e9``.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..bsde import check_barrier_order, check_terminal_order
from ..errors import InvalidScenarioError
from ..generators import CATALOGUE, from_name
from ..lattice import BinomialTree, TreeFV, TreeProcess
from ..penalization import Problem

FAR = 1e9
WALK_KINDS = ("constant", "linear", "sin", "exp", "path", "random")


@dataclass
class Scenario:
    T: float
    N: int
    seed: int = 0
    p: float = 2.0
    generator: dict = field(default_factory=lambda: {"name": "zero", "params": {}})
    terminal: dict = field(default_factory=lambda: {"kind": "constant", "value": 0.0})
    L: dict | None = None
    U: dict | None = None
    V: dict | None = None
    name: str = ""

    # -- (de)serialisation ---------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        problems = _schema_problems(data)
        if problems:
            raise InvalidScenarioError("; ".join(problems), problems)
        return cls(
            T=float(data["T"]),
            N=int(data["N"]),
            seed=int(data.get("seed", 0)),
            p=float(data.get("p", 2.0)),
            generator=copy.deepcopy(data.get("generator", {"name": "zero", "params": {}})),
            terminal=copy.deepcopy(data.get("terminal", {"kind": "constant", "value": 0.0})),
            L=copy.deepcopy(data.get("L")),
            U=copy.deepcopy(data.get("U")),
            V=copy.deepcopy(data.get("V")),
            name=str(data.get("name", "")),
        )

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "T": self.T,
            "N": self.N,
            "seed": self.seed,
            "p": self.p,
            "generator": copy.deepcopy(self.generator),
            "terminal": copy.deepcopy(self.terminal),
        }
        for key in ("L", "U", "V"):
            val = getattr(self, key)
            if val is not None:
                out[key] = copy.deepcopy(val)
        return out

    def with_steps(self, steps: int) -> "Scenario":
        """Same scenario on ``steps`` levels; listed jumps keep their times (levels rounded)."""
        steps = int(steps)
        data = self.to_dict()
        for key in ("L", "U", "V"):
            spec = data.get(key)
            if not spec:
                continue
            for side, lo, hi in (("left_jumps", 1, steps), ("right_jumps", 0, steps - 1)):
                for item in spec.get(side, []):
                    item["k"] = min(max(round(item["k"] * steps / self.N), lo), hi)
        data["N"] = steps
        return Scenario.from_dict(data)

    # -- materialisation ----------------------------------------------------
    def materialize(self) -> Problem:
        tree = BinomialTree.build(self.T, self.N)
        rng = np.random.default_rng(self.seed)
        gen = from_name(self.generator["name"], self.generator.get("params", {}))
        L = _process(tree, self.L, -FAR, rng)
        U = _process(tree, self.U, FAR, rng)
        V = _fv(tree, self.V)
        xi = _terminal(tree, self.terminal, rng, L, U)
        left = {
            "L": _left_jump_levels(tree, self.L),
            "U": _left_jump_levels(tree, self.U),
            "V": _left_jump_levels(tree, self.V),
        }
        check_barrier_order(L, U)
        check_terminal_order(tree, xi, L=L, U=U)
        return Problem(tree, xi, gen, V, L, U, left)


def _schema_problems(data) -> list[str]:
    out = []
    if not isinstance(data, dict):
        return ["scenario must be a JSON object"]
    for key in ("T", "N"):
        if key not in data:
            out.append(f"missing field {key!r}")
    if "T" in data and not (isinstance(data["T"], (int, float)) and data["T"] > 0):
        out.append("T must be a positive number")
    if "N" in data and not (isinstance(data["N"], int) and data["N"] >= 1):
        out.append("N must be a positive integer")
    gen = data.get("generator", {"name": "zero"})
    if not isinstance(gen, dict) or gen.get("name") not in CATALOGUE:
        out.append(f"generator.name must be one of {sorted(CATALOGUE)}")
    for key in ("terminal", "L", "U"):
        spec = data.get(key)
        if spec is None:
            continue
        if not isinstance(spec, dict) or spec.get("kind") not in WALK_KINDS:
            out.append(f"{key}.kind must be one of {list(WALK_KINDS)}")
            continue
        out.extend(_jump_problems(key, spec, data.get("N")))
    if data.get("V") is not None:
        if not isinstance(data["V"], dict):
            out.append("V must be an object")
        else:
            out.extend(_jump_problems("V", data["V"], data.get("N")))
    return out


def _jump_problems(key, spec, n) -> list[str]:
    out = []
    for side in ("left_jumps", "right_jumps"):
        for i, item in enumerate(spec.get(side, [])):
            if not isinstance(item, dict) or "k" not in item or "size" not in item:
                out.append(f"{key}.{side}[{i}] needs fields k and size")
                continue
            k = item["k"]
            hi = n if side == "left_jumps" else (n - 1 if isinstance(n, int) else None)
            lo = 1 if side == "left_jumps" else 0
            if not isinstance(k, int) or (isinstance(hi, int) and not lo <= k <= hi):
                out.append(f"{key}.{side}[{i}].k = {k!r} outside {lo}..{hi}")
    return out


def _walk(tree: BinomialTree, spec: dict, rng) -> list[np.ndarray]:
    kind = spec["kind"]
    times = tree.times
    out = []
    if kind == "random":
        scale = float(spec.get("scale", 1.0))
        return [scale * rng.standard_normal(k + 1) for k in range(tree.steps + 1)]
    for k in range(tree.steps + 1):
        t, b = times[k], tree.walk(k)
        if kind == "constant":
            v = np.full(k + 1, float(spec["value"]))
        elif kind == "linear":
            v = spec.get("a", 0.0) + spec.get("b", 0.0) * t + spec.get("c", 0.0) * b
        elif kind == "sin":
            v = spec.get("amp", 1.0) * np.sin(spec.get("freq", 1.0) * b + spec.get("phase", 0.0)) + spec.get("offset", 0.0)
        elif kind == "exp":
            v = spec.get("scale", 1.0) * np.exp(spec.get("c", 1.0) * b + spec.get("b", 0.0) * t) + spec.get("offset", 0.0)
        elif kind == "path":
            values = spec["values"]
            if len(values) != tree.steps + 1:
                raise InvalidScenarioError(f"path needs {tree.steps + 1} values, got {len(values)}")
            v = np.full(k + 1, float(values[k]))
        else:
            raise InvalidScenarioError(f"unknown kind {kind!r}")
        out.append(np.asarray(v, dtype=float).reshape(k + 1))
    return out


def _shifts(tree: BinomialTree, spec: dict | None) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic value and post shifts per level from the listed jumps."""
    n = tree.steps
    value = np.zeros(n + 1)
    post = np.zeros(n + 1)
    if not spec:
        return value, post
    for item in spec.get("left_jumps", []):
        value[item["k"]:] += item["size"]
        post[item["k"]:] += item["size"]
    for item in spec.get("right_jumps", []):
        post[item["k"]:] += item["size"]
        value[item["k"] + 1:] += item["size"]
    post[n] = value[n]
    return value, post


def _process(tree: BinomialTree, spec: dict | None, default: float, rng) -> TreeProcess:
    if spec is None:
        return TreeProcess.constant(tree, default)
    base = _walk(tree, spec, rng)
    sv, sp = _shifts(tree, spec)
    return TreeProcess(tree, [b + sv[k] for k, b in enumerate(base)], [b + sp[k] for k, b in enumerate(base)])


def _fv(tree: BinomialTree, spec: dict | None) -> TreeFV:
    n = tree.steps
    if not spec:
        return TreeFV.zeros(tree)
    drift = float(spec.get("drift", 0.0))
    vol = float(spec.get("vol", 0.0))
    dB = tree.increments()
    flow = [np.full((k + 1, 2), drift * tree.dt) + vol * dB[None, :] for k in range(n)]
    jump = [np.zeros(k + 1) for k in range(n + 1)]
    for item in spec.get("left_jumps", []):
        flow[item["k"] - 1] = flow[item["k"] - 1] + item["size"]
    for item in spec.get("right_jumps", []):
        jump[item["k"]] = jump[item["k"]] + item["size"]
    return TreeFV(tree, flow, jump)


def _left_jump_levels(tree: BinomialTree, spec: dict | None) -> np.ndarray:
    out = np.zeros(tree.steps + 1)
    for item in (spec or {}).get("left_jumps", []):
        out[item["k"]] += item["size"]
    return out


def _terminal(tree, spec, rng, L, U) -> np.ndarray:
    xi = _walk(tree, spec, rng)[tree.steps]
    if spec.get("clip", False):
        xi = np.minimum(np.maximum(xi, L.value[-1]), U.value[-1])
    return xi


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file (data consistency is checked on a materialised copy)."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidScenarioError(f"{path}: not valid JSON ({exc})") from exc
    scenario = Scenario.from_dict(data)
    scenario.materialize()
    return scenario


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=2, sort_keys=True) + "\n")
