"""Command-line interface.

Usage: ``siegel-poincare [global flags] <command> [command flags]``; global
flags may also follow the command.  Every flag can come from a flat
``key = value`` config file (``--config``) whose keys are the flag names
without leading dashes; flags on the command line win.

Exit status: 0 success, 1 usage or validation error, 2 truncation tail above
the requested target.  Results go to stdout (or ``--out``) as deterministic
JSON or CSV; the run manifest (config hash, versions, timings) goes to
``--manifest`` or, by default, next to ``--out`` or to stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import platform
import random
import sys
import time
from dataclasses import replace
from typing import Dict, List, Optional, Sequence

import mpmath
import numpy as np

from . import __version__
from .analysis import (
    build_matrix,
    decay_experiment,
    dominance_certificate,
    eigen_inequality_check,
    maass_report,
    petersson_report,
)
from .bessel import (
    STANDARD_GRID_ORDERS,
    STANDARD_GRID_POINTS,
    BesselOrder,
    PrecisionContext,
    bessel_bound,
    bessel_j,
    bessel_j_recurrence,
    bessel_j_series,
)
from .forms import HalfIntegralForm, InvalidFormError
from .kitaoka import TruncationError, TruncationPolicy, WeightContext, fourier_coefficient
from .kloosterman import IntegerMatrix2, SingularMatrixError, bruteforce_kloosterman, h_sum, symplectic_kloosterman

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_TRUNCATION = 2

#: Every default in one place (also documented in the README).
DEFAULTS: Dict[str, object] = {
    "k": 10,
    "bits": 128,
    "workers": 1,
    "format": "json",
    "c-max": 100,
    "s-max": 50,
    "norm-max": 8,
    "bound-radius": None,
    "tail-mode": "envelope",
    "skip-below": 1e-15,
    "tail-target": None,
    "digits": 30,
}


class UsageError(Exception):
    """Invalid command line or configuration (exit status 1)."""


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        # prefix matching would let ``--c`` resolve to ``--config`` or ``--c-max``
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):  # argparse would exit with status 2
        raise UsageError(message)


def _form(text: str) -> HalfIntegralForm:
    try:
        return HalfIntegralForm.parse(text)
    except InvalidFormError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _ints(text: str) -> List[int]:
    try:
        return [int(p) for p in str(text).split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None


def _matrix(text: str) -> IntegerMatrix2:
    try:
        return IntegerMatrix2.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _optional_float(text: str) -> Optional[float]:
    if str(text).lower() in ("none", ""):
        return None
    return float(text)


def _optional_int(text: str) -> Optional[int]:
    if str(text).lower() in ("none", ""):
        return None
    return int(text)


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda key: argparse.SUPPRESS) if suppress else (lambda key: DEFAULTS[key])
    p.add_argument("--k", type=int, default=d("k"), help="weight (even, >= 6)")
    p.add_argument("--bits", type=int, default=d("bits"), help="working precision in bits")
    p.add_argument("--workers", type=int, default=d("workers"), help="worker processes")
    p.add_argument("--out", default=argparse.SUPPRESS if suppress else None, help="output file (default stdout)")
    p.add_argument("--manifest", default=argparse.SUPPRESS if suppress else None, help="manifest file")
    p.add_argument("--format", choices=("json", "csv"), default=d("format"))
    p.add_argument("--config", default=argparse.SUPPRESS if suppress else None, help="key = value config file")
    p.add_argument("--digits", type=int, default=d("digits"), help="significant digits in output")
    p.add_argument("--c-max", dest="c_max", type=int, default=d("c-max"), help="rank-one modulus radius")
    p.add_argument("--s-max", dest="s_max", type=int, default=d("s-max"), help="rank-one value radius")
    p.add_argument("--norm-max", dest="norm_max", type=int, default=d("norm-max"), help="rank-two max-entry radius")
    p.add_argument("--bound-radius", dest="bound_radius", type=_optional_int, default=d("bound-radius"),
                   help="radius up to which rank-two bounds are summed term by term")
    p.add_argument("--tail-mode", dest="tail_mode", choices=("envelope", "doubling"), default=d("tail-mode"))
    p.add_argument("--skip-below", dest="skip_below", type=float, default=d("skip-below"))
    p.add_argument("--tail-target", dest="tail_target", type=_optional_float, default=d("tail-target"),
                   help="fail with exit status 2 when the tail exceeds this")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="siegel-poincare", description="Siegel Poincare series coefficients for Sp4(Z).")
    _global_flags(parser, suppress=False)
    parent = _Parser(add_help=False)
    _global_flags(parent, suppress=True)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    c = sub.add_parser("coefficient", parents=[parent], help="A(P_Q, T) with rank breakdown")
    c.add_argument("--Q", type=_form, required=True)
    c.add_argument("--T", type=_form, required=True)

    for name, helptext in (("matrix", "coefficient matrix on n I_2"), ("certify", "dominance certificate")):
        m = sub.add_parser(name, parents=[parent], help=helptext)
        m.add_argument("--indices", type=_ints, required=True)
        m.add_argument("--normalized", action="store_true", default=(name == "certify"))
        m.add_argument("--plain", dest="normalized", action="store_false")

    m = sub.add_parser("maass", parents=[parent], help="Maass relation residual")
    m.add_argument("--Q", type=_form, required=True)
    m.add_argument("--mnr", type=_ints, required=True, help="m,n,r")

    s = sub.add_parser("symmetry", parents=[parent], help="Petersson symmetry gap")
    s.add_argument("--Q", type=_form, required=True)
    s.add_argument("--T", type=_form, required=True)

    b = sub.add_parser("bounds", parents=[parent], help="Bessel bound sweep or decay table")
    mode = b.add_mutually_exclusive_group(required=True)
    mode.add_argument("--bessel", action="store_true", help="check (c x / l)^l on the standard grid")
    mode.add_argument("--decay", action="store_true", help="|A(P_pI, target) - rank0| over weights")
    b.add_argument("--c", type=float, default=1.4, help="envelope constant")
    b.add_argument("--ks", type=_ints, default=[10, 12, 16, 20])
    b.add_argument("--p", type=int, default=2)
    b.add_argument("--q", type=int, default=2)
    b.add_argument("--target", choices=("qI", "diag", "I"), default="qI")

    e = sub.add_parser("eigencheck", parents=[parent], help="exact smallest-eigenvalue inequality")
    g = e.add_mutually_exclusive_group(required=True)
    g.add_argument("--C", type=_matrix, help="a,b,c,d")
    g.add_argument("--random", type=int, help="number of random matrices")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--range", dest="entry_range", type=int, default=20)

    kl = sub.add_parser("kloosterman", parents=[parent], help="symplectic Kloosterman sum K(Q, T; C)")
    kl.add_argument("--Q", type=_form, required=True)
    kl.add_argument("--T", type=_form, required=True)
    kl.add_argument("--C", type=_matrix, required=True)
    kl.add_argument("--bruteforce", action="store_true", help="also evaluate with the brute-force oracle")

    h = sub.add_parser("hsum", parents=[parent], help="rank-one sum H(P, S; c)")
    h.add_argument("--P", type=_form, required=True)
    h.add_argument("--S", type=_form, required=True)
    h.add_argument("--c", type=int, required=True)
    h.add_argument("--sign", choices=("+", "-"), default="+")

    be = sub.add_parser("bessel", parents=[parent], help="J_l(x)")
    be.add_argument("--l", required=True, help="half-integer order, e.g. 8.5 or 17/2")
    be.add_argument("--x", required=True)
    be.add_argument("--method", choices=("auto", "series", "recurrence"), default="auto")
    return parser


# ---------------------------------------------------------------------------
# configuration


def _read_config(path: str) -> Dict[str, str]:
    out: Dict[str, str] = {}
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path!r}: {exc}") from None
    for no, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{no}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key.lstrip("-")] = value
    return out


def _config_argv(config: Dict[str, str]) -> List[str]:
    argv: List[str] = []
    for key, value in config.items():
        if value.lower() in ("true", "yes", "on"):
            argv.append(f"--{key}")
        elif value.lower() in ("false", "no", "off"):
            continue
        else:
            argv.extend([f"--{key}", value])
    return argv


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    """Parse flags, with the config file (if any) underneath the command line.

    Config entries are inserted right after the command word, ahead of every
    real flag, so that later (command line) occurrences win.
    """
    argv = list(argv)
    pre = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        pos = _command_pos(argv)
        argv = [argv[pos]] + _config_argv(_read_config(known.config)) + argv[:pos] + argv[pos + 1:]
    args = build_parser().parse_args(argv)
    if args.command is None:
        raise UsageError("a command is required")
    _validate(args)
    return args


def _command_pos(argv: Sequence[str]) -> int:
    for i, tok in enumerate(argv):
        if tok in _COMMANDS:
            return i
    raise UsageError("a command is required")


_COMMANDS = ("coefficient", "matrix", "certify", "maass", "symmetry", "bounds", "eigencheck", "kloosterman", "hsum", "bessel")


def _validate(args: argparse.Namespace) -> None:
    if args.k % 2 or args.k < 6:
        raise UsageError(f"--k must be an even integer >= 6, got {args.k}")
    if args.bits < 64:
        raise UsageError("--bits must be at least 64")
    if args.workers < 1:
        raise UsageError("--workers must be positive")
    if args.digits < 1:
        raise UsageError("--digits must be positive")
    if args.c_max < 1 or args.s_max < 1 or args.norm_max < 0:
        raise UsageError("truncation radii must be positive (norm-max may be 0)")
    if args.command == "maass" and len(args.mnr) != 3:
        raise UsageError("--mnr takes three integers m,n,r")
    if args.command in ("matrix", "certify") and not args.indices:
        raise UsageError("--indices must be nonempty")


def _policy(args: argparse.Namespace) -> TruncationPolicy:
    try:
        return TruncationPolicy(
            rank1_c_max=args.c_max,
            rank1_s_max=args.s_max,
            rank2_norm_max=args.norm_max,
            tail_mode=args.tail_mode,
            skip_below=args.skip_below,
            rank2_bound_radius=args.bound_radius,
            tail_target=args.tail_target,
            workers=args.workers,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _config_record(args: argparse.Namespace) -> Dict[str, object]:
    rec = {}
    for key, value in sorted(vars(args).items()):
        if key in ("out", "manifest", "config"):
            continue
        if isinstance(value, (HalfIntegralForm,)):
            value = str(value)
        elif isinstance(value, IntegerMatrix2):
            value = ",".join(str(v) for v in (value.a, value.b, value.c, value.d))
        rec[key] = value
    return rec


# ---------------------------------------------------------------------------
# commands


def _weight(args) -> WeightContext:
    return WeightContext.create(args.k, args.bits)


def _s(x, digits: int) -> str:
    return mpmath.nstr(x, digits, min_fixed=-5, max_fixed=5) if x != 0 else "0"


def cmd_coefficient(args):
    b = fourier_coefficient(args.Q, args.T, _weight(args), _policy(args))
    return b.to_json(args.digits), None


def _matrix_result(args):
    pol = _policy(args)
    if pol.tail_target is not None:
        pol = replace(pol, tail_target=None)
    try:
        M = build_matrix(args.k, args.indices, args.normalized, pol, args.bits)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    worst = max(t for row in M.tails for t in row)
    if args.tail_target is not None and worst > args.tail_target:
        raise TruncationError(f"matrix entry tail {worst:.3e} exceeds target {args.tail_target:.3e}", tail=worst)
    return M


def cmd_matrix(args):
    M = _matrix_result(args)
    return M.to_json(args.digits), M.to_csv(args.digits)


def cmd_certify(args):
    M = _matrix_result(args)
    cert = dominance_certificate(M, args.bits)
    out = cert.to_json()
    out["matrix"] = M.to_json(args.digits)
    rows = [["index", "margin"]] + [[str(i), repr(m)] for i, m in zip(M.indices, cert.per_row_margin)]
    return out, _csv(rows)


def cmd_maass(args):
    m, n, r = args.mnr
    try:
        rep = maass_report(args.k, args.Q, m, n, r, _policy(args), args.bits)
    except InvalidFormError as exc:
        raise UsageError(str(exc)) from None
    out = rep.to_json()
    out["allowed"] = rep.within
    out["holds"] = rep.residual <= rep.within
    return out, None


def cmd_symmetry(args):
    rep = petersson_report(args.k, args.Q, args.T, _policy(args), args.bits)
    out = rep.to_json()
    out["allowed"] = rep.within
    out["holds"] = rep.gap <= rep.within
    return out, None


def cmd_bounds(args):
    if args.bessel:
        try:
            rows = bessel_bound_table(args.c, args.bits)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        header = ["l", "x", "J", "bound", "holds", "abs_le_1"]
        return {"c": args.c, "rows": rows, "all_hold": all(r["holds"] for r in rows)}, _csv(
            [header] + [[str(r[h]) for h in header] for r in rows]
        )
    table = decay_experiment(args.ks, args.p, args.q, args.target, _policy(args))
    rows = [r.to_json() for r in table]
    header = ["k", "target", "entry", "rank0", "deviation", "tail", "certified"]
    return {"p": args.p, "q": args.q, "target": args.target, "rows": rows}, _csv(
        [header] + [[str(r[h]) for h in header] for r in rows]
    )


def bessel_bound_table(c: float, bits: int) -> List[Dict[str, object]]:
    """``|J_l(x)| <= (c x / l)^l`` and ``|J_l(x)| <= 1`` over the standard grid."""
    ctx = PrecisionContext(bits=bits)
    rows = []
    for l in STANDARD_GRID_ORDERS:
        order = BesselOrder.of(l)
        for x in STANDARD_GRID_POINTS:
            J = bessel_j(order, x, ctx)
            with mpmath.workprec(bits):
                bound = bessel_bound(order, x, mpmath.mpf(str(c)), bits)
                rows.append({
                    "l": str(order.l),
                    "x": x,
                    "J": _s(J, 20),
                    "bound": _s(bound, 20),
                    "holds": bool(abs(J) <= bound),
                    "abs_le_1": bool(abs(J) <= 1),
                })
    return rows


def cmd_eigencheck(args):
    if args.C is not None:
        try:
            ok = eigen_inequality_check(args.C)
        except SingularMatrixError as exc:
            raise UsageError(str(exc)) from None
        return {"C": args.C.to_json(), "holds": ok}, _csv([["C", "holds"], [str(args.C.to_json()), str(ok)]])
    rng = random.Random(args.seed)
    R = args.entry_range
    results = []
    while len(results) < args.random:
        C = IntegerMatrix2(*(rng.randint(-R, R) for _ in range(4)))
        if C.det == 0:
            continue
        results.append((C, eigen_inequality_check(C)))
    failures = [C.to_json() for C, ok in results if not ok]
    return {"count": len(results), "seed": args.seed, "range": R, "failures": failures,
            "all_hold": not failures}, _csv([["count", "failures"], [str(len(results)), str(len(failures))]])


def cmd_kloosterman(args):
    try:
        val = symplectic_kloosterman(args.Q, args.T, args.C, args.bits)
    except SingularMatrixError as exc:
        raise UsageError(str(exc)) from None
    out = {"Q": str(args.Q), "T": str(args.T), "C": args.C.to_json(), "value": val.to_json(args.digits)}
    if args.bruteforce:
        brute = bruteforce_kloosterman(args.Q, args.T, args.C, args.bits)
        out["bruteforce"] = brute.to_json(args.digits)
        with mpmath.workprec(args.bits):
            close = abs(brute.value - val.value) <= mpmath.mpf(2) ** (16 - args.bits) * max(1, val.term_count)
        out["agree"] = bool(close and brute.term_count == val.term_count)
    return out, None


def cmd_hsum(args):
    if args.c < 1:
        raise UsageError("--c must be positive")
    sign = 1 if args.sign == "+" else -1
    v = h_sum(args.P, args.S, args.c, sign, args.bits)
    return {"P": str(args.P), "S": str(args.S), "c": args.c, "sign": args.sign,
            "re": _s(v.value.real, args.digits), "im": _s(v.value.imag, args.digits), "terms": v.term_count}, None


def cmd_bessel(args):
    try:
        order = BesselOrder.of(args.l.replace(" ", ""))
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(str(exc)) from None
    ctx = PrecisionContext(bits=args.bits)
    try:
        if args.method == "series":
            v = bessel_j_series(order, args.x, ctx)
        elif args.method == "recurrence":
            v = bessel_j_recurrence(order, args.x, ctx)
        else:
            v = bessel_j(order, args.x, ctx)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return {"l": str(order.l), "x": args.x, "method": args.method, "value": _s(v, args.digits)}, None


HANDLERS = {
    "coefficient": cmd_coefficient,
    "matrix": cmd_matrix,
    "certify": cmd_certify,
    "maass": cmd_maass,
    "symmetry": cmd_symmetry,
    "bounds": cmd_bounds,
    "eigencheck": cmd_eigencheck,
    "kloosterman": cmd_kloosterman,
    "hsum": cmd_hsum,
    "bessel": cmd_bessel,
}


# ---------------------------------------------------------------------------
# output


def _csv(rows: List[List[str]]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _flatten(obj, prefix: str = "") -> List[List[str]]:
    rows: List[List[str]] = []
    if isinstance(obj, dict):
        for k in sorted(obj):
            rows += _flatten(obj[k], f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            rows += _flatten(v, f"{prefix}[{i}]")
    else:
        rows.append([prefix, json.dumps(obj) if not isinstance(obj, str) else obj])
    return rows


def render(payload, csv_text: Optional[str], fmt: str) -> str:
    if fmt == "csv":
        return csv_text if csv_text is not None else _csv([["key", "value"]] + _flatten(payload))
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _manifest(args, status: int, seconds: float) -> Dict[str, object]:
    config = _config_record(args) if args is not None else {}
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return {
        "command": getattr(args, "command", None),
        "config": config,
        "config_hash": hashlib.sha256(blob).hexdigest(),
        "exit_status": status,
        "versions": {
            "siegel_poincare": __version__,
            "python": platform.python_version(),
            "mpmath": mpmath.__version__,
            "numpy": np.__version__,
        },
        "timings": {"wall_seconds": round(seconds, 6)},
        "workers": getattr(args, "workers", None),
    }


def _emit_manifest(args, status: int, seconds: float, stderr) -> None:
    man = json.dumps(_manifest(args, status, seconds), sort_keys=True, default=str)
    path = getattr(args, "manifest", None) or (args.out + ".manifest.json" if getattr(args, "out", None) else None)
    if path:
        with open(path, "w") as fh:
            fh.write(man + "\n")
    else:
        stderr.write(man + "\n")


def main(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    start = time.perf_counter()
    args = None
    try:
        args = parse_args(argv)
        payload, csv_text = HANDLERS[args.command](args)
        status = EXIT_OK
    except UsageError as exc:
        stderr.write(json.dumps({"error": "usage", "message": str(exc)}) + "\n")
        _emit_manifest(args, EXIT_USAGE, time.perf_counter() - start, stderr)
        return EXIT_USAGE
    except (InvalidFormError, SingularMatrixError) as exc:
        stderr.write(json.dumps({"error": "validation", "message": str(exc)}) + "\n")
        _emit_manifest(args, EXIT_USAGE, time.perf_counter() - start, stderr)
        return EXIT_USAGE
    except TruncationError as exc:
        payload = {"error": "truncation", "message": str(exc), "achieved_tail": exc.tail}
        if exc.breakdown is not None:
            payload["breakdown"] = exc.breakdown.to_json(args.digits)
        csv_text = None
        status = EXIT_TRUNCATION
        stderr.write(json.dumps({"error": "truncation", "message": str(exc), "achieved_tail": exc.tail}) + "\n")
    text = render(payload, csv_text, args.format)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    _emit_manifest(args, status, time.perf_counter() - start, stderr)
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
