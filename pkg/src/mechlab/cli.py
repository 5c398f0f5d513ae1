"""Command-line front end.

Exit codes: 0 success, 1 inequality failures (verify, suite), 2 usage,
3 validation or size caps, 4 numerical failures.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time

import numpy as np

from .errors import MechlabError, StateSpaceTooLarge, ValidationError

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2, 3, 4
REVENUE_KINDS = ("opt", "srev", "brev", "ronen")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _clean(x):
    """JSON-safe copy: numpy to builtins, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# ------------------------------------------------------------- loading

def _read(path: str) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}", "path")


def _load(path: str):
    from .mrf import parse_instance
    raw = _read(path)
    return parse_instance(raw), {"path": path, "sha256": hashlib.sha256(raw).hexdigest()}


# ------------------------------------------------------------ commands

def cmd_params(args):
    from .benchmark import Analysis
    inst, ident = _load(args.instance)
    a = Analysis(inst)
    res = a.dependence.as_dict()
    res["rho_d"] = a.dobrushin.spectral_radius
    try:
        chain = a.chain
    except StateSpaceTooLarge as exc:
        chain = None
        res["gamma_note"] = str(exc)
    if chain is not None:
        res["gamma"] = chain.gap
        res["n_gamma"] = chain.n_gap
    else:
        res.setdefault("gamma_note", "; ".join(a.notes))
        res["gamma"] = None
    return ident, {}, res, None


def cmd_revenue(args):
    from .benchmark import Analysis
    inst, ident = _load(args.instance)
    which = [w.strip() for w in args.which.split(",") if w.strip()]
    bad = [w for w in which if w not in REVENUE_KINDS]
    if bad or not which:
        raise UsageError(f"--which takes a comma list from {','.join(REVENUE_KINDS)}")
    a = Analysis(inst)
    res = {}
    for w in which:
        if w == "opt":
            from .revenue import opt_revenue_lp
            mech, rev = opt_revenue_lp(inst, a.dist)
            res["opt"] = {"revenue": rev}
            if args.mechanism_out:
                _write(args.mechanism_out, json.dumps(_clean(mech.as_dict()), indent=1))
        elif w == "srev":
            res["srev"] = a.srev.as_dict()
            if inst.valuation.kind == "additive":
                res["srev_one_item"] = a.srev1.as_dict()
        elif w == "brev":
            from .revenue import brev
            price, rev = brev(inst, a.dist)
            res["brev"] = {"price": price, "revenue": rev}
        elif w == "ronen":
            if inst.valuation.is_xos:
                raise ValidationError("defined for scalar-valued kinds only", "valuation.kind")
            r = a.ronen
            res["ronen"] = {"revenue": r.revenue,
                            "prices": [p.reshape(-1).tolist() for p in r.prices]}
    return ident, {"which": which}, res, None


def cmd_benchmark(args):
    from .benchmark import Analysis
    from .revenue import Mechanism, incentive_violations, opt_revenue_lp
    inst, ident = _load(args.instance)
    a = Analysis(inst)
    if args.mechanism:
        try:
            doc = json.loads(_read(args.mechanism).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValidationError(f"not a JSON mechanism: {exc}", "mechanism")
        mech = Mechanism.from_dict(doc, a.dist.size)
        source = "file"
    else:
        mech, _ = opt_revenue_lp(inst, a.dist)
        source = "opt"
    ic, ir = incentive_violations(inst, a.dist, mech)
    ca, xo = a.terms(mech)
    res = {"mechanism": source, "revenue": mech.revenue(a.dist),
           "ic_violation": ic, "ir_violation": ir,
           "constrained_additive": ca.as_dict() if ca is not None else None,
           "xos": xo.as_dict()}
    return ident, {"mechanism": args.mechanism}, res, None


def cmd_verify(args):
    from .benchmark import Analysis, verify_theorems
    inst, ident = _load(args.instance)
    a = Analysis(inst)
    rep = verify_theorems(inst, analysis=a)
    res = {"passed": rep.passed, "rows": rep.to_json(), "notes": a.notes}
    return ident, {}, res, rep


def cmd_glauber(args):
    from .mrf import joint_distribution
    from .spectral import glauber_chain, tv_curve
    inst, ident = _load(args.instance)
    if args.horizon < 0:
        raise UsageError("--horizon must be >= 0")
    chain = glauber_chain(joint_distribution(inst))
    curve = tv_curve(chain, args.start, args.horizon)
    res = {"gamma": chain.gap, "n_gamma": chain.n_gap, "states": int(chain.stationary.size),
           "start": args.start, "tv_curve": curve.tolist()}
    return ident, {"horizon": args.horizon, "start": args.start}, res, None


def cmd_tree(args):
    from .tree import kstar_search, sufficient_k, tree_from_instance
    inst, ident = _load(args.instance)
    if not args.eps > 0:
        raise UsageError("--eps must be > 0")
    tree = tree_from_instance(inst, root=args.root)
    ks = kstar_search(tree, args.eps)
    res = ks.as_dict()
    res["tree"] = tree.as_dict()
    res["unit_weights"] = sufficient_k(tree).as_dict()
    res["witness"] = sufficient_k(tree, ks.weights).as_dict()
    res["weights"] = {f"{u},{p}": w for (u, p), w in ks.weights.items()}
    return ident, {"eps": args.eps, "root": args.root}, res, None


def cmd_gen(args):
    from . import generators as g
    from .mrf import load_instance, instance_to_dict
    extra = {}
    if args.which == "mix":
        inst = g.gen_mix(load_instance(_need(args.base, "--base")), args.weight)
        params = {"base": args.base, "weight": args.weight}
    elif args.which == "copies":
        inst = g.gen_copies(args.n, args.beta, args.k, args.eps_scale)
        params = {"n": args.n, "beta": args.beta, "k": args.k, "eps_scale": args.eps_scale}
    elif args.which == "shells":
        seq, inst = g.gen_shells(args.m, args.c_target)
        params = {"m": args.m, "c_target": args.c_target}
        extra["sequence"] = seq.as_dict()
    else:
        inst = g.reduce_3wise(load_instance(_need(args.base, "--base")), args.beta_cap)
        params = {"base": args.base, "beta_cap": args.beta_cap}
    doc = instance_to_dict(inst)
    if args.out:
        _write(args.out, json.dumps(_clean(doc), indent=1))
        res = {"written": args.out, **extra}
        return None, params, res, "written"
    return None, params, {"instance": doc, **extra}, None


def _need(value, flag):
    if value is None:
        raise UsageError(f"{flag} is required")
    return value


def cmd_suite(args):
    from .suite import run_suite, suite_summary
    if args.count < 0 or args.n_max < 1 or args.alphabet_max < 1 or args.psi_max < 0:
        raise UsageError("suite sizes must be positive")
    records = run_suite(args.seed, args.count, args.n_max, args.alphabet_max, args.psi_max,
                        args.workers)
    summ = suite_summary(records)
    params = {"seed": args.seed, "count": args.count, "n_max": args.n_max,
              "alphabet_max": args.alphabet_max, "psi_max": args.psi_max}
    return None, params, summ, "suite"


COMMANDS = {"params": cmd_params, "revenue": cmd_revenue, "benchmark": cmd_benchmark,
            "verify": cmd_verify, "glauber": cmd_glauber, "tree-kstar": cmd_tree,
            "gen": cmd_gen, "suite": cmd_suite}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mechlab", description="Exact revenue and dependence laboratory for MRF buyers.")
    common = _Parser(add_help=False)
    common.add_argument("--human", action="store_true", help="aligned text instead of JSON")
    common.add_argument("--out", help="write the report (or generated instance) to this file")
    common.add_argument("--timing", action="store_true", help="include wall time in the report")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def with_instance(name, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.add_argument("instance", help="instance file (JSON)")
        return sp

    with_instance("params", "dependence parameters")
    sp = with_instance("revenue", "OPT, SRev, BRev and lookahead revenues")
    sp.add_argument("--which", default=",".join(REVENUE_KINDS))
    sp.add_argument("--mechanism-out", help="also write the optimal mechanism here")
    sp = with_instance("benchmark", "Single / Non-Favorite / Tail / Core terms")
    sp.add_argument("--mechanism", help="mechanism file (default: the LP optimum)")
    with_instance("verify", "check every theorem inequality")
    sp = with_instance("glauber", "spectral gap and TV-to-stationarity curve")
    sp.add_argument("--horizon", type=int, default=20)
    sp.add_argument("--start", type=int, default=0)
    sp = with_instance("tree-kstar", "least max row sum over weighted tree metrics")
    sp.add_argument("--eps", type=float, default=1e-6)
    sp.add_argument("--root", type=int, default=0)

    sp = sub.add_parser("gen", parents=[common], help="emit a constructed instance")
    sp.add_argument("which", choices=["mix", "copies", "shells", "3wise"])
    sp.add_argument("--base", help="base instance (mix, 3wise)")
    sp.add_argument("--weight", type=float, default=0.5, help="mix: probability of the base law")
    sp.add_argument("--n", type=int, default=1)
    sp.add_argument("--beta", type=float, default=0.5)
    sp.add_argument("--k", type=int, default=8)
    sp.add_argument("--eps-scale", type=float, default=None)
    sp.add_argument("--m", type=int, default=3)
    sp.add_argument("--c-target", type=float, default=None)
    sp.add_argument("--beta-cap", type=float, default=1.0, help="3wise: largest allowed piece")

    sp = sub.add_parser("suite", parents=[common], help="randomized property run")
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--count", type=int, default=200)
    sp.add_argument("--n-max", type=int, default=3)
    sp.add_argument("--alphabet-max", type=int, default=3)
    sp.add_argument("--psi-max", type=float, default=1.0)
    sp.add_argument("--workers", type=int, default=1)
    return p


# -------------------------------------------------------------- output

def _write(path, text):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    except OSError as exc:
        raise ValidationError(f"cannot write {path}: {exc.strerror}", "out")


def _human(report: dict, rep) -> str:
    lines = [f"command: {report['command']}"]
    if report.get("instance"):
        lines.append(f"instance: {report['instance']['path']} ({report['instance']['sha256'][:12]})")
    if rep is not None:
        lines.append(rep.to_text())
        return "\n".join(lines)

    def walk(prefix, x):
        if isinstance(x, dict):
            for k, v in x.items():
                walk(f"{prefix}.{k}" if prefix else str(k), v)
        elif isinstance(x, list) and x and isinstance(x[0], (dict, list)) and len(x) > 8:
            lines.append(f"{prefix}: [{len(x)} entries]")
        else:
            lines.append(f"{prefix}: {json.dumps(x)}")

    width_start = len(lines)
    walk("", report["result"])
    body = lines[width_start:]
    width = max((len(b.split(": ", 1)[0]) for b in body), default=0)
    lines[width_start:] = [f"{b.split(': ', 1)[0]:<{width}}  {b.split(': ', 1)[1]}" for b in body]
    return "\n".join(lines)


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=stderr)
        return EXIT_USAGE
    except SystemExit as exc:          # --help
        return int(exc.code or 0)
    start = time.perf_counter()
    try:
        ident, params, result, extra = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"mechlab {args.command}: {exc}", file=stderr)
        return EXIT_USAGE
    except MechlabError as exc:
        print(f"mechlab {args.command}: {type(exc).__name__}: {exc}", file=stderr)
        return exc.exit_code
    report = {"command": args.command, "instance": ident, "params": params, "result": result}
    if args.timing:
        report["wall_time"] = time.perf_counter() - start
    report = _clean(report)
    rep = extra if not isinstance(extra, str) else None
    text = _human(report, rep) if args.human else json.dumps(report, indent=1, sort_keys=False)
    if args.out and extra != "written":
        _write(args.out, text)
    else:
        print(text, file=stdout)

    code = EXIT_OK
    if args.command == "verify" and not result["passed"]:
        code = EXIT_FAILED
        failing = [r for r in report["result"]["rows"] if not r["pass"]]
    elif args.command == "suite" and result["failed"]:
        code = EXIT_FAILED
        failing = result["failing_instances"]
    if code == EXIT_FAILED:
        for row in failing:
            print(f"FAIL {json.dumps(_clean(row))}", file=stderr)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
