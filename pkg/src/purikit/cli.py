"""Command-line front end.

Every subcommand prints a JSON report on stdout and a one-line summary on
stderr.  Exit codes: 0 when the check passes, 2 when it fails, 1 on usage
or input errors.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import io
from .assemblages import marginals, random_non_signalling, validate
from .errors import ParseError, PurikitError, SignallingError
from .linalg import DEFAULT_TAU, max_abs
from .objectsets import channel_set, comb_set, measurement_set, state_set
from .purification import (
    purify_instrument_kraus,
    purify_object,
    purify_states,
    verify_dilation,
    verify_purification,
)
from .scenarios import (
    Node,
    Scenario,
    bell_from_scenario,
    direct_correlations,
    eval_bell,
    is_chain,
    loop_scenario,
    random_causal_network,
    random_chain,
    random_diamond,
    random_fork,
    random_loop,
)
from .steering import SteeringFailure, find_unsteerable, verify_unsteerable

DEFAULT_TOL = 1e-9
STEER_TOL = 1e-6


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _load(path, decoder):
    try:
        return decoder(io.load_file(path))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _input_digests(paths):
    return {p: io.digest(io.load_file(p)) for p in paths}


def _write(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(io.canonical_json(obj) + "\n")


# Subcommands return (results, max_deviation, tolerance, input paths).


def cmd_validate(args):
    asm = _load(args.file, io.decode_assemblage)
    tol = args.tol or DEFAULT_TOL
    r = validate(asm, tol)
    offending = [[x, a] for x, a in r.offending]
    results = {
        "valid": r.valid,
        "offending": offending,
        "min_eigenvalues": {f"{x},{a}": m.min_eigenvalue for (x, a), m in r.member_reports.items()},
        "trace_deviation": r.trace_deviation,
    }
    return results, r.max_violation, tol, [args.file]


def cmd_marginals(args):
    asm = _load(args.file, io.decode_assemblage)
    tol = args.tol or DEFAULT_TOL
    r = marginals(asm, tol)
    results = {"non_signalling": r.is_non_signalling, "marginal": io.encode_matrix(r.marginal)}
    return results, r.max_deviation, tol, [args.file]


def cmd_purify(args):
    asm = _load(args.file, io.decode_assemblage)
    tol = args.tol or DEFAULT_TOL
    if asm.object_set.projector.kind == "state":
        p = purify_states(asm, tol, args.tau)
    else:
        p = purify_object(asm, tol, args.tau)
    dev = verify_purification(asm, p)
    comp = p.completeness_deviation()
    enc = io.encode_purification(p)
    if args.out:
        _write(args.out, enc)
    results = {"aux_dim": p.aux_dim, "reconstruction_deviation": dev, "completeness_deviation": comp}
    if not args.out:
        results["purification"] = enc
    return results, max(dev, comp), tol, [args.file]


def cmd_purify_kraus(args):
    asm = _load(args.file, io.decode_assemblage)
    tol = args.tol or DEFAULT_TOL
    d = purify_instrument_kraus(asm, tol, args.tau)
    rec = verify_dilation(asm, d)
    iso = max_abs(d.isometry.conj().T @ d.isometry - np.eye(d.kraus.d_in))
    rel = d.isometry_relation_deviation()
    comp = d.completeness_deviation()
    enc = io.encode_dilation(d)
    if args.out:
        _write(args.out, enc)
    results = {
        "kraus_rank": d.aux_dim,
        "reconstruction_deviation": rec,
        "isometry_deviation": iso,
        "relation_deviation": rel,
        "completeness_deviation": comp,
    }
    if not args.out:
        results["dilation"] = enc
    return results, max(rec, iso, rel, comp), tol, [args.file]


def _builder_name(s):
    if s.network is not None:
        return "process_matrix"
    if is_chain(s):
        return "chain"
    return "dag" if s.acyclic else "loop"


def cmd_compose(args):
    s = _load(args.file, io.decode_scenario)
    tol = args.tol or DEFAULT_TOL
    model = bell_from_scenario(s, tol, args.tau)
    results = {
        "builder": _builder_name(s),
        "parties": list(model.parties),
        "party_dims": list(model.party_layout.dims),
        "pure": model.is_pure,
        "norm_deviation": model.norm_deviation(),
        "completeness_deviation": model.completeness_deviation(),
    }
    dev = max(results["norm_deviation"], results["completeness_deviation"])
    if args.check:
        bell = eval_bell(model, args.jobs)
        direct = direct_correlations(s, args.jobs)
        results["equivalence_deviation"] = bell.max_difference(direct)
        results["correlations"] = io.encode_correlations(bell)
        dev = max(dev, results["equivalence_deviation"])
    if args.out:
        _write(args.out, io.encode_bell_model(model))
    return results, dev, tol, [args.file]


def cmd_eval(args):
    s = _load(args.file, io.decode_scenario)
    tol = args.tol or DEFAULT_TOL
    if args.bell:
        c = eval_bell(bell_from_scenario(s, tol, args.tau), args.jobs)
    else:
        c = direct_correlations(s, args.jobs)
    enc = io.encode_correlations(c)
    if args.out:
        _write(args.out, enc)
    dev = max(c.normalization_deviation(), max(0.0, -c.min_probability()))
    return {"correlations": enc, "signalling_deviation": c.signalling_deviation()}, dev, tol, [args.file]


def _load_correlations(path):
    obj = io.load_file(path)
    if isinstance(obj, dict) and "results" in obj:
        obj = obj["results"].get("correlations", obj)
    return io.decode_correlations(obj)


def cmd_compare(args):
    a = _load_correlations(args.first)
    b = _load_correlations(args.second)
    tol = args.tol or DEFAULT_TOL
    return {"shape": list(a.p.shape)}, a.max_difference(b), tol, [args.first, args.second]


def cmd_steer_verify(args):
    asm = _load(args.assemblage, io.decode_assemblage)
    dec = _load(args.decomposition, io.decode_decomposition)
    tol = args.tol or DEFAULT_TOL
    diag = {}
    dev = verify_unsteerable(asm, dec, diag, tol)
    diag["invalid_objects"] = [list(map(str, lam)) if isinstance(lam, tuple) else str(lam) for lam in diag["invalid_objects"]]
    if diag["invalid_objects"]:
        dev = max(dev, float("inf"))
    return {"diagnostics": diag}, dev, tol, [args.assemblage, args.decomposition]


def cmd_steer_find(args):
    asm = _load(args.file, io.decode_assemblage)
    tol = args.tol or STEER_TOL
    r = find_unsteerable(asm, args.iters, tol, args.restarts, args.seed)
    if isinstance(r, SteeringFailure):
        return {"found": False, "failure": io.encode_failure(r)}, r.residual, tol, [args.file]
    enc = io.encode_decomposition(r)
    if args.out:
        _write(args.out, enc)
    dev = verify_unsteerable(asm, r)
    results = {"found": True, "support_size": len(r.lambda_support)}
    if not args.out:
        results["decomposition"] = enc
    return results, dev, tol, [args.file]


def _random_set(kind, dims):
    if kind == "state":
        (d,) = dims
        return state_set(d)
    if kind in ("channel", "instrument"):
        d_in, d_out = dims
        return channel_set(d_in, d_out)
    if kind == "measurement":
        (d,) = dims
        return measurement_set(d)
    if kind == "comb":
        return comb_set(dims)
    raise UsageError(f"unknown set kind {kind!r}")


def cmd_random(args):
    if args.scenario:
        d = args.dim
        if args.scenario == "chain":
            obj = io.encode_scenario(random_chain(args.parties, args.seed, d, args.settings, args.outcomes))
        elif args.scenario == "fork":
            obj = io.encode_scenario(random_fork(args.seed, d, args.settings, args.outcomes))
        elif args.scenario == "diamond":
            obj = io.encode_scenario(random_diamond(args.seed, d, args.settings, args.outcomes))
        elif args.scenario == "loop":
            obj = io.encode_scenario(loop_scenario(*random_loop(args.seed, d, args.settings, args.outcomes)))
        else:
            spec, parties, _ = random_causal_network(args.seed, d, args.settings, args.outcomes)
            nodes = tuple(Node(name, asm, "transform") for name, asm in parties.items())
            obj = io.encode_scenario(Scenario(nodes, (), spec))
    else:
        if not args.set or not args.dims:
            raise UsageError("random needs --set and --dims, or --scenario")
        objset = _random_set(args.set, args.dims)
        asm = random_non_signalling(objset, args.settings, args.outcomes, args.aux, args.seed)
        obj = io.encode_assemblage(asm)
    results = {"digest": io.digest(obj)}
    if args.out:
        _write(args.out, obj)
        results["out"] = args.out
    else:
        results["object"] = obj
    return results, 0.0, 0.0, []


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="purikit", description="Purification and composition of non-signalling assemblages.")
    parser.add_argument("--tol", type=float, default=None, help="tolerance of the check (default 1e-9; 1e-6 for steer-find)")
    parser.add_argument("--tau", type=float, default=DEFAULT_TAU, help="relative eigenvalue cutoff for supports")
    parser.add_argument("--jobs", type=int, default=1, help="worker threads over setting tuples")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, fn, helptext in (
        ("validate", cmd_validate, "check members and setting sums of an assemblage"),
        ("marginals", cmd_marginals, "compare the per-setting sums of an assemblage"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("file")
        p.set_defaults(func=fn)

    for name, fn in (("purify", cmd_purify), ("purify-kraus", cmd_purify_kraus)):
        p = sub.add_parser(name, help="simultaneous purification" if name == "purify" else "Stinespring dilation")
        p.add_argument("file")
        p.add_argument("--out")
        p.set_defaults(func=fn)

    p = sub.add_parser("compose", help="Bell model of a scenario")
    p.add_argument("file")
    p.add_argument("--check", action="store_true", help="compare against direct evaluation")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("eval", help="correlations of a scenario")
    p.add_argument("file")
    p.add_argument("--bell", action="store_true", help="evaluate through the Bell model")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="largest difference of two correlation files")
    p.add_argument("first")
    p.add_argument("second")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("steer-verify", help="check an unsteerable decomposition")
    p.add_argument("assemblage")
    p.add_argument("decomposition")
    p.set_defaults(func=cmd_steer_verify)

    p = sub.add_parser("steer-find", help="search for an unsteerable decomposition")
    p.add_argument("file")
    p.add_argument("--iters", type=int, default=5000)
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_steer_find)

    p = sub.add_parser("random", help="seeded random assemblage or scenario")
    p.add_argument("--set", choices=["state", "channel", "instrument", "measurement", "comb"])
    p.add_argument("--dims", type=int, nargs="+")
    p.add_argument("--scenario", choices=["chain", "fork", "diamond", "loop", "causal"])
    p.add_argument("--parties", type=int, default=3, help="chain length")
    p.add_argument("--dim", type=int, default=2, help="wire dimension of random scenarios")
    p.add_argument("--settings", type=int, default=2)
    p.add_argument("--outcomes", type=int, default=2)
    p.add_argument("--aux", type=int, default=None)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_random)
    return parser


def report_digest(report: dict) -> str:
    """Digest of a report, ignoring its timing and its own digest."""
    return io.digest({k: v for k, v in report.items() if k not in ("wall_time_ms", "digest")})


def _finite(x):
    return float(x) if x is not None and np.isfinite(x) else None


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    start = time.perf_counter()
    try:
        args = build_parser().parse_args(argv)
        if args.jobs < 1:
            raise UsageError("--jobs must be at least 1")
    except UsageError as exc:
        print(exc, file=stderr)
        return 1
    report = {"command": args.command}
    try:
        results, dev, tol, paths = args.func(args)
        report["inputs"] = _input_digests(paths)
        passed = bool(dev <= tol)
        report.update(results=results, max_deviation=_finite(dev), tolerance=tol, **{"pass": passed})
        code = 0 if passed else 2
    except (ParseError, UsageError) as exc:
        print(f"error: {exc}", file=stderr)
        return 1
    except PurikitError as exc:
        results = {"error": type(exc).__name__, "message": str(exc)}
        dev = None
        if isinstance(exc, SignallingError) and exc.report is not None:
            dev = exc.report.max_deviation
        report.update(results=results, max_deviation=_finite(dev), tolerance=args.tol, **{"pass": False})
        code = 2
    report["wall_time_ms"] = int(round((time.perf_counter() - start) * 1000))
    report["digest"] = report_digest(report)
    print(json.dumps(report, sort_keys=True, indent=2, allow_nan=False), file=stdout)
    status = "PASS" if report["pass"] else "FAIL"
    detail = report["results"].get("message") if "error" in report["results"] else f"max_deviation={report['max_deviation']}"
    print(f"{args.command}: {status} ({detail})", file=stderr)
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
