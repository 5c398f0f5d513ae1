"""Small instance builders shared by the tests."""
from __future__ import annotations

import itertools
import math
import sys

import numpy as np
import pytest

from mechlab.mrf import instance_from_dict


def build(items, edges=(), kind="additive", feasible_sets=None, clauses=None):
    """Instance from [(alphabet, node_potential)] and [(members, table)]."""
    val = {"kind": kind}
    if feasible_sets is not None:
        val["feasible_sets"] = [list(s) for s in feasible_sets]
    if clauses is not None:
        val["clauses"] = clauses
    doc = {
        "items": [{"name": f"item{k}", "alphabet": [list(x) if isinstance(x, tuple) else x for x in a], "node_potential": list(p)}
                  for k, (a, p) in enumerate(items)],
        "edges": [{"members": list(m), "table": list(t)} for m, t in edges],
        "valuation": val,
    }
    return instance_from_dict(doc)


def pm_j(J, values=(1.0, 2.0), kind="additive"):
    """Two binary items with potential +J when the symbols agree, -J otherwise."""
    return build([(values, (0.0, 0.0)), (values, (0.0, 0.0))],
                 [((0, 1), (J, -J, -J, J))], kind=kind)


def product2(values=(1.0, 2.0), probs=((0.5, 0.5), (0.5, 0.5)), kind="additive"):
    return build([(values, tuple(math.log(p) for p in probs[0])),
                  (values, tuple(math.log(p) for p in probs[1]))], kind=kind)


def brute_pmf(inst):
    """Independent evaluation of the MRF formula by explicit enumeration."""
    sizes = [it.size for it in inst.items]
    weights = []
    for t in itertools.product(*[range(s) for s in sizes]):
        w = sum(inst.items[i].node_potential[t[i]] for i in range(inst.n))
        for e in inst.edges:
            flat = 0
            for j in e.members:
                flat = flat * sizes[j] + t[j]
            w += e.table[flat]
        weights.append(math.exp(w))
    z = sum(weights)
    return np.array([w / z for w in weights])


@pytest.fixture
def pm_half():
    return pm_j(0.5)


def pytest_terminal_summary(terminalreporter):
    acc = sys.modules.get("test_acceptance")
    if acc is not None and acc.RESULTS:
        terminalreporter.section("acceptance criteria")
        for cid in sorted(acc.RESULTS):
            terminalreporter.write_line(acc.RESULTS[cid])
