"""Run one command on a scenario and persist the result bundle.

Numbers are written with 17 significant digits.  ``result.json`` and the CSV
tables hold only numerics derived from the scenario, so identical runs give
identical bytes; wall time and version go to ``meta.json``.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..errors import SolverError
from ..norms import classD_norm, hp_norm, mokobodzki_check, sup_moment_check, sp_norm, vp_norm
from ..penalization import SCHEMES, ConvergenceTable, Problem, convergence_report
from ..rbsde_two import TwoBarrierSolution, picard_solve, solve_clamped, solve_decoupled, verify_solution
from .scenario import Scenario

COMMANDS = ("solve", "decouple", "picard", "penalize", "verify", "norms", "sweep")
DEFAULT_N_LIST = (1, 2, 4, 8, 16, 32, 64, 128, 256)


class VerificationFailure(Exception):
    """Raised by the ``verify`` command when a residual exceeds its tolerance."""

    def __init__(self, message: str, bundle: "ResultBundle"):
        super().__init__(message)
        self.bundle = bundle


@dataclass
class ResultBundle:
    command: str
    scenario: dict
    payload: dict
    tables: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def save(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "result.json").write_text(dumps({"command": self.command, "scenario": self.scenario, "payload": self.payload}) + "\n")
        for name, table in self.tables.items():
            table.to_csv(out / f"table_{name}.csv")
        (out / "meta.json").write_text(dumps(self.meta) + "\n")
        return out


def _number(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        return '"' + repr(x) + '"'
    return format(x, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with floats at 17 significant digits and sorted keys."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}"{k}": {dumps(obj[k], indent, _level + 1)}' for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _number(float(obj))
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent, _level)
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _levels(X) -> list:
    return [np.asarray(v).tolist() for v in X]


def _solution_payload(sol: TwoBarrierSolution, problem: Problem) -> dict:
    report = verify_solution(sol, problem.xi, problem.gen, problem.V, problem.L, problem.U)
    return {
        "Y0": float(sol.Y.value[0][0]),
        "Y": {"value": _levels(sol.Y.value), "post": _levels(sol.Y.post)},
        "Z": _levels(sol.Z.value[:-1]),
        "R_plus_total": float(sum(f.sum() for f in sol.Rplus.flow) + sum(j.sum() for j in sol.Rplus.jump)),
        "R_minus_total": float(sum(f.sum() for f in sol.Rminus.flow) + sum(j.sum() for j in sol.Rminus.jump)),
        "R_is_zero": bool(sol.Rplus.is_zero() and sol.Rminus.is_zero()),
        "iterations": sol.iterations,
        "residuals": report.as_dict(),
        "residuals_ok": report.ok(),
    }


def run(
    scenario: Scenario,
    command: str,
    n_list=None,
    scheme: str = "upper",
    p: float | None = None,
    workers: int = 1,
) -> ResultBundle:
    """Execute ``command`` on ``scenario``; raises the solver's errors unchanged."""
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}; choose from {COMMANDS}")
    started = time.perf_counter()
    problem = scenario.materialize()
    p = scenario.p if p is None else float(p)
    n_list = list(DEFAULT_N_LIST if n_list is None else n_list)
    args = (problem.tree, problem.xi, problem.gen, problem.V, problem.L, problem.U)
    tables: dict[str, ConvergenceTable] = {}

    try:
        if command in ("solve", "verify"):
            payload = _solution_payload(solve_clamped(*args), problem)
        elif command == "decouple":
            sol, state = solve_decoupled(*args)
            payload = _solution_payload(sol, problem)
            payload["monotone_iterates"] = state.monotone()
            payload["increments"] = state.increments
        elif command == "picard":
            payload = _solution_payload(picard_solve(*args), problem)
        elif command == "norms":
            sol = solve_clamped(*args)
            witness = mokobodzki_check(None, problem.L, problem.U, problem.gen, p)
            payload = {
                "sp": sp_norm(sol.Y, max(p, 1.0)),
                "hp": hp_norm(sol.Z, p),
                "vp": vp_norm(sol.R, p),
                "classD": classD_norm(sol.Y),
                "sup_moment": {str(q): list(sup_moment_check(sol.Y, q)) for q in (0.25, 0.5, 0.75)},
                "mokobodzki": {
                    "passed": witness.passed,
                    "sp": witness.sp,
                    "driver_moment": witness.driver_moment,
                },
            }
        elif command == "penalize":
            tables[scheme] = convergence_report(scheme, n_list, problem, p, workers=workers)
            payload = _table_payload(tables)
        else:
            reference = solve_clamped(*args)
            if workers > 1:
                with ThreadPoolExecutor(max_workers=min(workers, len(SCHEMES))) as pool:
                    results = list(pool.map(lambda s: convergence_report(s, n_list, problem, p, reference=reference), SCHEMES))
            else:
                results = [convergence_report(s, n_list, problem, p, reference=reference) for s in SCHEMES]
            tables = dict(zip(SCHEMES, results))
            payload = _table_payload(tables)
    except SolverError as exc:
        raise SolverError(f"scenario {scenario.name or '<unnamed>'}: {exc}") from exc

    bundle = ResultBundle(
        command=command,
        scenario=scenario.to_dict(),
        payload=payload,
        tables=tables,
        meta={"version": __version__, "seed": scenario.seed, "wall_time": time.perf_counter() - started},
    )
    if command == "verify" and not payload["residuals_ok"]:
        raise VerificationFailure("residuals above tolerance", bundle)
    return bundle


def _table_payload(tables: dict) -> dict:
    out = {}
    for name, table in tables.items():
        flags = table.flags
        out[name] = {
            "rows": table.rows,
            "left_jump_R_plus_zero": flags.plus_zero,
            "left_jump_R_minus_zero": flags.minus_zero,
        }
    return out
