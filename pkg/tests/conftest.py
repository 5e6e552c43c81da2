from __future__ import annotations

from importlib import resources

import numpy as np
import pytest

from rbsdelab.lattice import BinomialTree, TreeFV, TreeProcess


def scenario_path(name: str):
    return resources.files("rbsdelab") / "scenarios" / f"{name}.json"


def random_barriers(rng, tree: BinomialTree, right_jumps: bool = True, jump_prob: float = 0.5):
    """Ordered random barriers ``L <= U`` (values and post-values) with optional right jumps."""
    n = tree.steps
    centre = [rng.normal(size=k + 1) for k in range(n + 1)]
    width = [np.abs(rng.normal(size=k + 1)) + 0.1 for k in range(n + 1)]
    lv = [c - w for c, w in zip(centre, width)]
    uv = [c + w for c, w in zip(centre, width)]
    if right_jumps:
        lp = [v + rng.normal(size=v.size) * 0.6 * (rng.random() < jump_prob) for v in lv]
        up = [v + rng.normal(size=v.size) * 0.6 * (rng.random() < jump_prob) for v in uv]
        up = [np.maximum(u, l) for u, l in zip(up, lp)]
        lp[n], up[n] = lv[n], uv[n]
    else:
        lp, up = lv, uv
    L = TreeProcess(tree, lv, lp)
    U = TreeProcess(tree, uv, up)
    xi = rng.uniform(lv[n], uv[n])
    return xi, L, U


def random_fv(rng, tree: BinomialTree, scale: float = 0.3, right_jumps: bool = True) -> TreeFV:
    n = tree.steps
    flow = [rng.normal(size=(k + 1, 2)) * scale * np.sqrt(tree.dt) for k in range(n)]
    jump = [rng.normal(size=k + 1) * scale * (k < n) * right_jumps for k in range(n + 1)]
    return TreeFV(tree, flow, jump)


def random_process(rng, tree: BinomialTree, right_jumps: bool = True) -> TreeProcess:
    n = tree.steps
    value = [rng.normal(size=k + 1) for k in range(n + 1)]
    post = [v + rng.normal(size=v.size) * right_jumps for v in value]
    post[n] = value[n]
    return TreeProcess(tree, value, post)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
