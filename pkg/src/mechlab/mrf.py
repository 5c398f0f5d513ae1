"""MRF instances: parsing, validation, exact joint law and dependence parameters.

The joint law of an instance is enumerated over the full product of the
item alphabets.  Types are stored in lexicographic order with item 0 the
most significant coordinate, so a flat pmf reshapes (C order) into an
n-dimensional table indexed by alphabet positions.
"""
from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ParseError,
    SupportTooLarge,
    ValidationError,
    ZeroProbabilityContext,
)
from .report import Check, VerificationReport, geq, leq

KINDS = ("additive", "unit_demand", "constrained_additive", "xos")
DEFAULT_SUPPORT_CAP = 10**6
ALPHA_FLOOR = 1e-14


def support_cap() -> int:
    raw = os.environ.get("MECHLAB_SUPPORT_CAP")
    if raw is None:
        return DEFAULT_SUPPORT_CAP
    try:
        cap = int(raw)
    except ValueError:
        raise ValidationError(f"not an integer: {raw!r}", "MECHLAB_SUPPORT_CAP")
    if cap <= 0:
        raise ValidationError("must be positive", "MECHLAB_SUPPORT_CAP")
    return cap


@dataclass(frozen=True)
class ItemSpec:
    name: str
    alphabet: tuple
    node_potential: tuple

    @property
    def size(self) -> int:
        return len(self.alphabet)


@dataclass(frozen=True)
class HyperedgeSpec:
    members: tuple
    table: tuple


@dataclass(frozen=True)
class ValuationSpec:
    kind: str
    feasible_sets: tuple | None = None
    clauses: int | None = None

    @property
    def is_xos(self) -> bool:
        return self.kind == "xos"


@dataclass(frozen=True)
class MrfInstance:
    items: tuple
    edges: tuple
    valuation: ValuationSpec
    metadata: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def n(self) -> int:
        return len(self.items)

    @property
    def sizes(self) -> tuple:
        return tuple(it.size for it in self.items)

    def symbol_values(self, i: int) -> np.ndarray:
        """Alphabet of item i as floats: shape (|T_i|,) or (|T_i|, K) for XOS."""
        return np.asarray(self.items[i].alphabet, dtype=float)


# ---------------------------------------------------------------- parsing

def _num(x, where):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ValidationError(f"expected a number, got {x!r}", where)
    x = float(x)
    if not math.isfinite(x):
        raise ValidationError("entries must be finite", where)
    return x


def instance_from_dict(doc) -> MrfInstance:
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object")
    for key in ("items", "valuation"):
        if key not in doc:
            raise ParseError("missing field", key)
    raw_items = doc["items"]
    if not isinstance(raw_items, list) or not raw_items:
        raise ValidationError("must be a non-empty list", "items")
    val = doc["valuation"]
    if not isinstance(val, dict) or "kind" not in val:
        raise ParseError("must be an object with a kind", "valuation")
    kind = val["kind"]
    if kind not in KINDS:
        raise ValidationError(f"unknown kind {kind!r}", "valuation.kind")

    items = []
    for idx, it in enumerate(raw_items):
        where = f"items[{idx}]"
        if not isinstance(it, dict):
            raise ParseError("must be an object", where)
        for key in ("alphabet", "node_potential"):
            if key not in it:
                raise ParseError("missing field", f"{where}.{key}")
        alpha = it["alphabet"]
        pot = it["node_potential"]
        if not isinstance(alpha, list) or not alpha:
            raise ValidationError("alphabet must be a non-empty list", f"{where}.alphabet")
        if not isinstance(pot, list):
            raise ParseError("must be a list", f"{where}.node_potential")
        symbols = []
        for k, s in enumerate(alpha):
            w = f"{where}.alphabet[{k}]"
            if isinstance(s, list):
                symbols.append(tuple(_num(c, w) for c in s))
            else:
                symbols.append(_num(s, w))
        items.append(ItemSpec(
            name=str(it.get("name", f"item{idx}")),
            alphabet=tuple(symbols),
            node_potential=tuple(_num(p, f"{where}.node_potential") for p in pot),
        ))

    edges = []
    for idx, e in enumerate(doc.get("edges", []) or []):
        where = f"edges[{idx}]"
        if not isinstance(e, dict) or "members" not in e or "table" not in e:
            raise ParseError("needs members and table", where)
        mem = e["members"]
        if not isinstance(mem, list) or any(isinstance(m, bool) or not isinstance(m, int) for m in mem):
            raise ValidationError("members must be a list of integers", f"{where}.members")
        if not isinstance(e["table"], list):
            raise ParseError("must be a list", f"{where}.table")
        table = tuple(_num(x, f"{where}.table") for x in e["table"])
        edges.append(HyperedgeSpec(tuple(mem), table))

    fs = val.get("feasible_sets")
    if fs is not None:
        if not isinstance(fs, list) or any(not isinstance(s, list) for s in fs):
            raise ParseError("must be a list of lists", "valuation.feasible_sets")
        for k, s in enumerate(fs):
            if any(isinstance(m, bool) or not isinstance(m, int) for m in s):
                raise ValidationError("entries must be integers", f"valuation.feasible_sets[{k}]")
        fs = tuple(tuple(s) for s in fs)
    clauses = val.get("clauses")
    if clauses is not None and (isinstance(clauses, bool) or not isinstance(clauses, int)):
        raise ValidationError("must be an integer", "valuation.clauses")
    inst = MrfInstance(
        items=tuple(items),
        edges=tuple(edges),
        valuation=ValuationSpec(kind, fs, clauses),
        metadata=dict(doc.get("provenance", {}) or {}),
    )
    validate(inst)
    return inst


def parse_instance(document) -> MrfInstance:
    """Parse instance text (bytes or str) into a validated MrfInstance."""
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"not UTF-8: {exc}")
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}")
    return instance_from_dict(doc)


def load_instance(path) -> MrfInstance:
    with open(path, "rb") as fh:
        return parse_instance(fh.read())


def instance_to_dict(inst: MrfInstance) -> dict:
    items = []
    for it in inst.items:
        alpha = [list(s) if isinstance(s, tuple) else s for s in it.alphabet]
        items.append({"name": it.name, "alphabet": alpha,
                      "node_potential": list(it.node_potential)})
    val = {"kind": inst.valuation.kind}
    if inst.valuation.feasible_sets is not None:
        val["feasible_sets"] = [list(s) for s in inst.valuation.feasible_sets]
    if inst.valuation.clauses is not None:
        val["clauses"] = inst.valuation.clauses
    doc = {
        "items": items,
        "edges": [{"members": list(e.members), "table": list(e.table)} for e in inst.edges],
        "valuation": val,
    }
    if inst.metadata:
        doc["provenance"] = inst.metadata
    return doc


def dumps_instance(inst: MrfInstance) -> str:
    return json.dumps(instance_to_dict(inst), indent=1)


def validate(inst: MrfInstance) -> None:
    n = inst.n
    if n == 0:
        raise ValidationError("must be a non-empty list", "items")
    xos = inst.valuation.is_xos
    clause_count = inst.valuation.clauses
    for idx, it in enumerate(inst.items):
        where = f"items[{idx}]"
        if not it.alphabet:
            raise ValidationError("alphabet must be non-empty", f"{where}.alphabet")
        if len(it.node_potential) != len(it.alphabet):
            raise ValidationError(
                f"has {len(it.node_potential)} entries for {len(it.alphabet)} symbols",
                f"{where}.node_potential")
        if len(set(it.alphabet)) != len(it.alphabet):
            raise ValidationError("symbols must be distinct", f"{where}.alphabet")
        for k, s in enumerate(it.alphabet):
            w = f"{where}.alphabet[{k}]"
            if xos:
                if not isinstance(s, tuple) or not s:
                    raise ValidationError("xos symbols must be non-empty vectors", w)
                if clause_count is None:
                    clause_count = len(s)
                if len(s) != clause_count:
                    raise ValidationError(
                        f"has {len(s)} clauses, expected {clause_count}", w)
                if min(s) < 0:
                    raise ValidationError("clause values must be >= 0", w)
            else:
                if isinstance(s, tuple):
                    raise ValidationError("vector symbols require kind xos", w)
                if s < 0:
                    raise ValidationError("values must be >= 0", w)
    sizes = inst.sizes
    for idx, e in enumerate(inst.edges):
        where = f"edges[{idx}]"
        m = e.members
        if len(m) < 2:
            raise ValidationError("a hyperedge needs at least 2 members", f"{where}.members")
        if any(b <= a for a, b in zip(m, m[1:])):
            raise ValidationError("members must be strictly increasing", f"{where}.members")
        if m[0] < 0 or m[-1] >= n:
            raise ValidationError("member index out of range", f"{where}.members")
        expect = int(np.prod([sizes[j] for j in m]))
        if len(e.table) != expect:
            raise ValidationError(
                f"has {len(e.table)} entries, expected {expect}", f"{where}.table")
    val = inst.valuation
    if val.kind == "constrained_additive":
        if val.feasible_sets is None:
            raise ValidationError("required for constrained_additive", "valuation.feasible_sets")
        family = set()
        for k, s in enumerate(val.feasible_sets):
            w = f"valuation.feasible_sets[{k}]"
            if any(b <= a for a, b in zip(s, s[1:])):
                raise ValidationError("sets must be strictly increasing", w)
            if s and (s[0] < 0 or s[-1] >= n):
                raise ValidationError("item index out of range", w)
            family.add(tuple(s))
        if () not in family:
            raise ValidationError("must contain the empty set", "valuation.feasible_sets")
        for s in family:
            for drop in range(len(s)):
                sub = s[:drop] + s[drop + 1:]
                if sub not in family:
                    raise ValidationError(
                        f"not downward closed: {list(sub)} missing below {list(s)}",
                        "valuation.feasible_sets")
    elif val.feasible_sets is not None:
        raise ValidationError("only allowed for constrained_additive", "valuation.feasible_sets")
    if val.clauses is not None and not xos:
        raise ValidationError("only allowed for xos", "valuation.clauses")
    if xos and val.clauses is not None and val.clauses <= 0:
        raise ValidationError("must be positive", "valuation.clauses")


# ------------------------------------------------------ potentials and law

def _broadcast_shape(sizes, members):
    shape = [1] * len(sizes)
    for j in members:
        shape[j] = sizes[j]
    return shape


def edge_array(inst: MrfInstance, edge: HyperedgeSpec) -> np.ndarray:
    """Edge table as an array broadcastable against the full type table."""
    sizes = inst.sizes
    local = np.asarray(edge.table, dtype=float).reshape([sizes[j] for j in edge.members])
    return local.reshape(_broadcast_shape(sizes, edge.members))


def log_weight_table(inst: MrfInstance) -> np.ndarray:
    sizes = inst.sizes
    total = np.zeros(sizes)
    for i, it in enumerate(inst.items):
        total = total + np.asarray(it.node_potential, dtype=float).reshape(
            _broadcast_shape(sizes, [i]))
    for e in inst.edges:
        total = total + edge_array(inst, e)
    return total


def logsumexp(x: np.ndarray) -> float:
    m = float(np.max(x))
    return m + math.log(float(np.sum(np.exp(x - m))))


@dataclass
class JointDistribution:
    sizes: tuple
    pmf: np.ndarray
    log_partition: float
    values: list
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return len(self.sizes)

    @property
    def size(self) -> int:
        return int(self.pmf.size)

    @property
    def support(self) -> np.ndarray:
        """(|T|, n) alphabet indices in lexicographic order."""
        if "support" not in self._cache:
            grids = np.indices(self.sizes).reshape(self.n, -1).T
            self._cache["support"] = np.ascontiguousarray(grids)
        return self._cache["support"]

    def table(self) -> np.ndarray:
        return self.pmf.reshape(self.sizes)

    def flat_index(self, idx) -> int:
        return int(np.ravel_multi_index(tuple(idx), self.sizes))

    def marginal(self, i: int) -> np.ndarray:
        axes = tuple(a for a in range(self.n) if a != i)
        return self.table().sum(axis=axes)

    def type_values(self) -> np.ndarray:
        """Per-type symbol values: (|T|, n) scalars or (|T|, n, K) clause vectors."""
        if "type_values" not in self._cache:
            sup = self.support
            cols = [self.values[i][sup[:, i]] for i in range(self.n)]
            self._cache["type_values"] = np.stack(cols, axis=1)
        return self._cache["type_values"]

    def conditional_table(self, i: int):
        """Conditionals of item i along axis i of the full table.

        Returns (cond, context_mass): cond has the table's shape and sums to
        one along axis i wherever the context has positive mass (zeros
        elsewhere); context_mass has axis i collapsed to length 1.
        """
        key = ("cond", i)
        if key not in self._cache:
            tab = self.table()
            mass = tab.sum(axis=i, keepdims=True)
            with np.errstate(invalid="ignore", divide="ignore"):
                cond = np.where(mass > 0, tab / np.where(mass > 0, mass, 1.0), 0.0)
            self._cache[key] = (cond, mass)
        return self._cache[key]

    def conditional(self, i: int, context) -> np.ndarray:
        context = tuple(int(c) for c in context)
        if len(context) == self.n:
            context = context[:i] + context[i + 1:]
        if len(context) != self.n - 1:
            raise ValidationError(f"context must have {self.n - 1} entries", "context")
        cond, mass = self.conditional_table(i)
        idx = context[:i] + (slice(None),) + context[i:]
        midx = context[:i] + (0,) + context[i:]
        if mass[midx] <= 0:
            raise ZeroProbabilityContext(f"item {i}, context {context} has probability 0")
        return cond[idx].copy()


def joint_distribution(inst: MrfInstance) -> JointDistribution:
    total = int(np.prod(inst.sizes, dtype=object))
    cap = support_cap()
    if total > cap:
        raise SupportTooLarge(f"support size {total} exceeds cap {cap}")
    logw = log_weight_table(inst)
    logz = logsumexp(logw)
    pmf = np.exp(logw - logz).reshape(-1)
    values = [inst.symbol_values(i) for i in range(inst.n)]
    return JointDistribution(inst.sizes, pmf, logz, values)


# ------------------------------------------------------ dependence params

@dataclass
class DependenceReport:
    beta_matrix: np.ndarray
    beta: float
    weighted_degrees: np.ndarray
    delta: float
    alpha_matrix: np.ndarray
    alpha: float
    note: str = "alpha is a supremum over positive-probability contexts only"

    def as_dict(self) -> dict:
        return {
            "beta_matrix": self.beta_matrix.tolist(),
            "beta": self.beta,
            "weighted_degrees": self.weighted_degrees.tolist(),
            "delta": self.delta,
            "alpha_matrix": self.alpha_matrix.tolist(),
            "alpha": self.alpha,
            "note": self.note,
        }


def _incident_potential_max(inst: MrfInstance, required) -> float:
    """max_x |sum of potentials over edges containing every item in required|."""
    sel = [e for e in inst.edges if all(r in e.members for r in required)]
    if not sel:
        return 0.0
    acc = None
    for e in sel:
        arr = edge_array(inst, e)
        acc = arr if acc is None else acc + arr
    return float(np.max(np.abs(acc)))


def weighted_degrees(inst: MrfInstance) -> np.ndarray:
    return np.array([_incident_potential_max(inst, (i,)) for i in range(inst.n)])


def beta_matrix(inst: MrfInstance) -> np.ndarray:
    n = inst.n
    b = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            b[i, j] = b[j, i] = _incident_potential_max(inst, (i, j))
    return b


def influence_matrix(dist: JointDistribution) -> np.ndarray:
    """alpha[i, j]: worst TV between conditionals of i over contexts differing at j."""
    n = dist.n
    cap = support_cap()
    if n * dist.size > cap:
        raise SupportTooLarge(f"{n}*{dist.size} contexts exceed cap {cap}")
    alpha = np.zeros((n, n))
    for i in range(n):
        cond, mass = dist.conditional_table(i)
        pos = mass > 0
        for j in range(n):
            if j == i or dist.sizes[j] < 2:
                continue
            c = np.moveaxis(cond, j, 0)
            p = np.moveaxis(pos, j, 0)
            # axis i sits at position i (if i < j) or stays at i after the move
            ai = i + 1 if i < j else i
            best = 0.0
            for a in range(dist.sizes[j]):
                diff = 0.5 * np.abs(c[a][None] - c[a + 1:]).sum(axis=ai)
                ok = (p[a][None] & p[a + 1:]).squeeze(axis=ai)
                if ok.any():
                    best = max(best, float(diff[ok].max()))
            alpha[i, j] = min(best, 1.0)
    # identical conditionals can differ by a few ulps after normalization
    alpha[alpha <= ALPHA_FLOOR] = 0.0
    return alpha


def dependence_report(inst: MrfInstance, dist: JointDistribution) -> DependenceReport:
    bm = beta_matrix(inst)
    dg = weighted_degrees(inst)
    am = influence_matrix(dist)
    return DependenceReport(
        beta_matrix=bm,
        beta=float(bm.sum(axis=1).max()) if inst.n else 0.0,
        weighted_degrees=dg,
        delta=float(dg.max()) if inst.n else 0.0,
        alpha_matrix=am,
        alpha=float(am.sum(axis=1).max()) if inst.n else 0.0,
    )


def _symbol_repr(sym):
    return list(sym) if isinstance(sym, tuple) else sym


def conditional_bound_check(inst: MrfInstance, dist: JointDistribution,
                            samples: int = 64, seed: int = 0) -> VerificationReport:
    """Joint-vs-product ratios for item events against exp(+-4 Delta).

    Every singleton pair ({t_i}, {t_-i}) is enumerated; ``samples`` random
    larger event pairs per item are added.
    """
    delta = float(weighted_degrees(inst).max())
    hi, lo = math.exp(4 * delta), math.exp(-4 * delta)
    rng = np.random.default_rng(seed)
    rep = VerificationReport()
    tab = dist.table()
    for i in range(dist.n):
        J = np.moveaxis(tab, i, 0).reshape(dist.sizes[i], -1)
        fi = J.sum(axis=1)
        fr = J.sum(axis=0)
        denom = np.outer(fi, fr)
        ok = denom > 0
        ratio = np.where(ok, J / np.where(ok, denom, 1.0), np.nan)
        worst_hi = np.unravel_index(np.nanargmax(ratio), ratio.shape)
        worst_lo = np.unravel_index(np.nanargmin(ratio), ratio.shape)
        rmax, rmin = float(ratio[worst_hi]), float(ratio[worst_lo])
        rest_shape = [s for k, s in enumerate(dist.sizes) if k != i]
        for _ in range(samples if J.shape[0] > 1 or J.shape[1] > 1 else 0):
            e1 = rng.random(J.shape[0]) < 0.5
            e2 = rng.random(J.shape[1]) < 0.5
            if not e1.any() or not e2.any():
                continue
            d = fi[e1].sum() * fr[e2].sum()
            if d <= 0:
                continue
            r = float(J[np.ix_(e1, e2)].sum() / d)
            rmax, rmin = max(rmax, r), min(rmin, r)

        def where(cell):
            ctx = np.unravel_index(cell[1], rest_shape) if rest_shape else ()
            return (f"t_{i}={_symbol_repr(inst.items[i].alphabet[cell[0]])}, "
                    f"context={[int(c) for c in ctx]}")

        rep.add(leq(f"cond_ratio_upper[{i}]", rmax, hi, abs_tol=0.0, rel_tol=1e-9,
                    note=where(worst_hi)))
        rep.add(geq(f"cond_ratio_lower[{i}]", rmin, lo, abs_tol=0.0, rel_tol=1e-9,
                    note=where(worst_lo)))
    return rep
