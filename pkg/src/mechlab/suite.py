"""Seeded random instances and the randomized property run."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .mrf import HyperedgeSpec, ItemSpec, MrfInstance, ValuationSpec, validate
from .valuation import all_subsets

KINDS = ("additive", "unit_demand", "constrained_additive", "xos")


def instance_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def _downward_closed(rng, n):
    """Random downward-closed family: close a few random generator sets."""
    subsets = [S for S in all_subsets(n) if S]
    picks = rng.choice(len(subsets), size=rng.integers(1, len(subsets) + 1), replace=False)
    fam = {()}
    for p in picks:
        S = subsets[p]
        for r in range(len(S) + 1):
            fam.update(itertools.combinations(S, r))
    return tuple(sorted(fam, key=lambda s: (len(s), s)))


def random_instance(seed: int, index: int, n_max: int = 3, alphabet_max: int = 3,
                    psi_max: float = 1.0, kind: str | None = None) -> MrfInstance:
    rng = instance_rng(seed, index)
    n = int(rng.integers(1, n_max + 1))
    sizes = [int(rng.integers(1, alphabet_max + 1)) for _ in range(n)]
    kind = kind or KINDS[int(rng.integers(len(KINDS)))]
    K = int(rng.integers(1, 4)) if kind == "xos" else None
    items = []
    for i, s in enumerate(sizes):
        if kind == "xos":
            alpha = set()
            while len(alpha) < s:
                alpha.add(tuple(np.round(rng.uniform(0.1, 10.0, K), 2).tolist()))
            alpha = tuple(sorted(alpha))
        else:
            alpha = tuple(sorted(set(np.round(rng.uniform(0.1, 10.0, 3 * s), 2).tolist()))[:s])
            while len(alpha) < s:  # rounding collisions are rare; pad deterministically
                alpha = alpha + (alpha[-1] + 0.01,)
        pot = tuple(rng.uniform(-psi_max, psi_max, s).tolist())
        items.append(ItemSpec(f"item{i}", alpha, pot))
    edges = []
    for i, j in itertools.combinations(range(n), 2):
        if rng.random() < 0.7:
            edges.append(HyperedgeSpec((i, j), tuple(rng.uniform(-psi_max, psi_max, sizes[i] * sizes[j]).tolist())))
    if n == 3 and rng.random() < 0.3:
        edges.append(HyperedgeSpec((0, 1, 2), tuple(rng.uniform(-psi_max, psi_max, int(np.prod(sizes))).tolist())))
    fs = _downward_closed(rng, n) if kind == "constrained_additive" else None
    inst = MrfInstance(tuple(items), tuple(edges), ValuationSpec(kind, fs, K),
                       {"generator": "suite", "seed": seed, "index": index})
    validate(inst)
    return inst


@dataclass
class SuiteRecord:
    index: int
    kind: str
    n: int
    types: int
    passed: bool
    failures: list          # failing rows as dicts
    rows: int
    error: str | None = None

    def as_dict(self) -> dict:
        return {"index": self.index, "kind": self.kind, "n": self.n, "types": self.types,
                "pass": self.passed, "rows": self.rows, "failures": self.failures,
                "error": self.error}


def check_instance(seed: int, index: int, n_max: int = 3, alphabet_max: int = 3,
                   psi_max: float = 1.0) -> SuiteRecord:
    from .benchmark import verify_theorems
    from .errors import MechlabError
    inst = random_instance(seed, index, n_max, alphabet_max, psi_max)
    size = int(np.prod(inst.sizes))
    try:
        rep = verify_theorems(inst)
    except MechlabError as exc:
        return SuiteRecord(index, inst.valuation.kind, inst.n, size, False, [], 0,
                           f"{type(exc).__name__}: {exc}")
    return SuiteRecord(index, inst.valuation.kind, inst.n, size, rep.passed,
                       [c.as_dict() for c in rep.failures()], len(rep.rows))


def _check_star(args):
    return check_instance(*args)


def run_suite(seed: int, count: int, n_max: int = 3, alphabet_max: int = 3,
              psi_max: float = 1.0, workers: int = 1) -> list[SuiteRecord]:
    """Verify every theorem row on ``count`` seeded instances, sorted by index.

    Instance i depends only on (seed, i), so sharding across workers does
    not change any result.
    """
    jobs = [(seed, i, n_max, alphabet_max, psi_max) for i in range(count)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_check_star, jobs, chunksize=max(1, count // (4 * workers))))
    else:
        out = [_check_star(j) for j in jobs]
    return sorted(out, key=lambda r: r.index)


def suite_summary(records: list[SuiteRecord]) -> dict:
    kinds: dict = {}
    for r in records:
        kinds[r.kind] = kinds.get(r.kind, 0) + 1
    bad = [r for r in records if not r.passed]
    return {"count": len(records), "passed": len(records) - len(bad), "failed": len(bad),
            "rows_checked": sum(r.rows for r in records), "kinds": dict(sorted(kinds.items())),
            "failing_instances": [r.as_dict() for r in bad]}
