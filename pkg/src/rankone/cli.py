"""Command-line driver.

Exit status: 0 on success, 1 on usage or input errors, 2 when a computed
quantity disagrees with a closed form it is checked against.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .fileformat import HypersurfaceSpec, SpecError, dump_json, parse_spec, serialize_spec
from .series import exponent_label, format_coeff, format_series, independent_monomials

EXIT_OK, EXIT_USAGE, EXIT_MISMATCH = 0, 1, 2


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ helpers


def _load(args, default_order=None):
    """Series from ``--input`` or a seeded random rank one graph."""
    if args.input:
        try:
            with open(args.input, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read {args.input}: {exc.strerror}") from None
        try:
            spec = parse_spec(text)
        except SpecError as exc:
            raise UsageError(f"{args.input}: {exc}") from None
        F = spec.to_series()
        if args.order is not None and args.order < F.N:
            F = F.with_order(args.order)
        return F, {"source": args.input}
    if args.dimension is None:
        raise UsageError("give --input FILE or --dimension N")
    from .sampling import random_rank1_graph, rng_for
    n = args.dimension
    N = args.order if args.order is not None else (default_order(n) if default_order else n + 3)
    if n < 2 or N < 2:
        raise UsageError("random instances need dimension >= 2 and order >= 2")
    F, _, _ = random_rank1_graph(n, N, rng_for(args.seed, "graph", n, N))
    return F, {"source": "random", "seed": str(args.seed)}


def _need_dimension(args, low=2, high=12):
    if args.dimension is None:
        raise UsageError("--dimension is required")
    if not low <= args.dimension <= high:
        raise UsageError(f"--dimension must be between {low} and {high}")
    return args.dimension


def _checks_block(checks: dict) -> tuple[list, bool]:
    rows, ok = [], True
    for name, (good, got, want) in checks.items():
        ok &= bool(good)
        row = {"check": name, "ok": bool(good)}
        if not good:
            row.update(got=got, expected=want)
        rows.append(row)
    return rows, ok


# ------------------------------------------------------------------ commands


def cmd_rank_check(args):
    from .rank1 import RankOneError, hessian_rank_at_origin, rank1_residuals
    F, meta = _load(args)
    rep = {"command": "rank-check", "dimension": F.n, "truncation_order": F.N, **meta,
           "hessian_rank_at_origin": hessian_rank_at_origin(F)}
    try:
        res = rank1_residuals(F.with_order(F.N))
    except RankOneError as exc:
        rep.update(rank_one=None, note=str(exc))
        return rep, EXIT_OK
    bad = {}
    for (i, j), r in res.items():
        if not r.is_zero():
            low = min(sum(s) for s, _ in r.items())
            bad[f"({i},{j})"] = format_series(r.with_order(low))
    rep["certified_order"] = F.N - 2
    rep["rank_one"] = not bad
    rep["nonzero_residuals"] = bad
    return rep, EXIT_OK


def cmd_complete(args):
    from .rank1 import IndependentJetData, RankOneError, complete_rank1, independent_part
    F, meta = _load(args)
    try:
        G = complete_rank1(IndependentJetData.from_series(independent_part(F)))
    except RankOneError as exc:
        raise UsageError(str(exc)) from None
    spec = HypersurfaceSpec.from_series(G, {"generated_by": "rankone complete"})
    return serialize_spec(spec), EXIT_OK


def cmd_normalize(args):
    from .normalform import fundamental_residual, full_normal_form
    from .rank1 import RankOneError
    F, meta = _load(args, default_order=lambda n: n + 3)
    try:
        rep = full_normal_form(F)
    except RankOneError as exc:
        raise UsageError(str(exc)) from None
    oracle = fundamental_residual(F, rep.normalized, rep.composite).is_zero()
    out = {"command": "normalize", "dimension": F.n, "truncation_order": F.N, **meta,
           "n_H": rep.n_H,
           "transforms": [{"label": t.label, "matrix": t.format()} for t in rep.transform_log],
           "composite": rep.composite.format(),
           "substitution_check": oracle,
           "residual_invariants": {k: format_coeff(v) for k, v in rep.residual_invariants.items()},
           "certified_order": rep.certified_order,
           "notes": rep.notes}
    if rep.template is not None:
        out["template"] = {"ok": rep.template.ok, "checked": rep.template.checked,
                           "mismatches": [{"monomial": list(s), "expected": format_coeff(e),
                                           "found": format_coeff(g)} for s, e, g in rep.template.mismatches]}
    if rep.product_factor:
        out["product"] = rep.product_factor
    if args.output_series:
        with open(args.output_series, "w", encoding="utf-8") as fh:
            fh.write(serialize_spec(HypersurfaceSpec.from_series(rep.normalized)))
    bad = not oracle or (rep.template is not None and not rep.template.ok)
    return out, EXIT_MISMATCH if bad else EXIT_OK


def cmd_symmetry(args):
    from .symmetry import field_symbols, solve_numeric, tangency_system
    F, meta = _load(args, default_order=lambda n: n + 3)
    order = F.N - 1
    sol = solve_numeric(tangency_system(F, field_symbols(F.n), order))
    basis = [", ".join(f"{k}={format_coeff(v)}" for k, v in vec.items()) for vec in sol.basis]
    return {"command": "symmetry", "dimension": F.n, "truncation_order": F.N, **meta,
            "residual_order": order, "dimension_of_solutions": sol.dimension,
            "realizable_T_dimension": sol.realizable_T_dimension,
            "free": sol.free, "basis": basis}, EXIT_OK


def cmd_stabilizer(args):
    from .series import Coeff
    from .symmetry import general_stabilizer_matrix, stabilizer_closed_forms, stabilizer_at_order
    n = _need_dimension(args)
    order = args.order if args.order is not None else n + 1
    st = stabilizer_at_order(n, order)
    rep = {"command": "stabilizer", "dimension": n, "order": order,
           "solved": st.lines(), "matrix": st.matrix_lines()}
    code = EXIT_OK
    if order == n + 1:
        checks = {}
        for k, v in stabilizer_closed_forms(n).items():
            got = st.solved.get(k, Coeff())
            checks[f"{k} closed form"] = (got == v, format_coeff(got), format_coeff(v))
        gm = general_stabilizer_matrix(n)
        checks["general matrix"] = (st.matrix_view == gm, "", "")
        rep["checks"], ok = _checks_block(checks)
        code = EXIT_OK if ok else EXIT_MISMATCH
    return rep, code


def cmd_brackets(args):
    from .symmetry import order_n2_action_brackets
    n = _need_dimension(args)
    rows = []
    for s, c in order_n2_action_brackets(n):
        rows.append(f"{exponent_label('E', s)}: {format_coeff(c)}")
    return {"command": "brackets", "dimension": n,
            "convention": "entry sigma is sigma! times the coefficient of x^sigma in L(-u+F)|_{u=F}",
            "brackets": rows}, EXIT_OK


def cmd_obstruct(args):
    from .symmetry import obstruction_equations
    n = _need_dimension(args, 5)
    res = obstruction_equations(n, strict=False)
    rows, ok = _checks_block(res.checks)
    return {"command": "obstruct", "dimension": n,
            "I": format_coeff(res.eqI), "II": format_coeff(res.eqII),
            "solved": [f"{k} = {format_coeff(v)}" for k, v in res.solved.items()],
            "elimination": [f"{name} from {label}" for name, label, _ in res.log],
            "checks": rows}, EXIT_OK if ok else EXIT_MISMATCH


def _verdict_rows(n: int, seed: int, count: int):
    from .sampling import random_invariants, rng_for
    from .symmetry import nonexistence_verdict
    rows, ok = [], True
    for k in range(count):
        zero = k % 2 == 0
        inv = random_invariants(n, n + 5, rng_for(seed, "verdict", n, k), zero)
        v = nonexistence_verdict(n, inv)
        ok &= v.ok
        rows.append({"instance": k, "branch": v.branch, "relation": format_coeff(v.relation),
                     "lie_dimension": v.lie_dimension,
                     "realizable_T_dimension": v.realizable_T_dimension,
                     "paths_agree": v.agreement, "ok": v.ok})
    return rows, ok


def cmd_verdict(args):
    n = _need_dimension(args, 2)
    if n < 5:
        raise UsageError(f"verdict covers dimensions n >= 5; equations I and II degenerate for n = {n}")
    rows, ok = _verdict_rows(n, args.seed, args.count)
    return {"command": "verdict", "dimension": n, "seed": args.seed, "instances": rows,
            "confirmed": ok}, EXIT_OK if ok else EXIT_MISMATCH


def cmd_prolong(args):
    from .jets import prolongation_on_template
    n = _need_dimension(args, 2, 8)
    kappa = args.order if args.order is not None else n + 2
    if kappa < n + 2:
        raise UsageError(f"--order must be at least {n + 2}")
    vals = prolongation_on_template(n, kappa)
    lower = all(not vals[nu] for nu in vals if sum(nu) <= n + 1)
    rows = [f"{exponent_label('U', s)} = {format_coeff(vals[s])}" for s in independent_monomials(n, n + 2)]
    return {"command": "prolong", "dimension": n, "order": kappa,
            "vanishing_through_order": n + 1 if lower else None,
            "origin_values": rows}, EXIT_OK if lower else EXIT_MISMATCH


def cmd_sweep(args):
    out, ok = [], True
    for n in (5, 6, 7):
        rows, good = _verdict_rows(n, args.seed, args.count)
        ok &= good
        out.append({"dimension": n, "instances": len(rows), "confirmed": good,
                    "max_lie_dimension": max(r["lie_dimension"] for r in rows),
                    "max_realizable_T_dimension": max(r["realizable_T_dimension"] for r in rows),
                    "branches": sorted({r["branch"] for r in rows})})
    return {"command": "sweep", "seed": args.seed, "results": out,
            "confirmed": ok}, EXIT_OK if ok else EXIT_MISMATCH


COMMANDS = {
    "rank-check": (cmd_rank_check, "Hessian rank at the origin and rank one residuals"),
    "complete": (cmd_complete, "rank one completion of the independent coefficients"),
    "normalize": (cmd_normalize, "affine normal form with transform log"),
    "symmetry": (cmd_symmetry, "infinitesimal affine symmetries of a truncated graph"),
    "stabilizer": (cmd_stabilizer, "isotropy fields of the chain jet"),
    "brackets": (cmd_brackets, "action of the stabilizer on order n+2 coefficients"),
    "obstruct": (cmd_obstruct, "equations I and II"),
    "verdict": (cmd_verdict, "non-existence verdict on seeded instances"),
    "prolong": (cmd_prolong, "jet prolongation of the stabilizer field at the origin"),
    "sweep": (cmd_sweep, "verdicts for n = 5, 6, 7"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse would exit with 2, which is reserved for mismatches
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rankone", description="Exact computations for rank one affine hypersurfaces.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_) in COMMANDS.items():
        s = sub.add_parser(name, help=help_)
        s.add_argument("--input", metavar="FILE")
        s.add_argument("--dimension", type=int)
        s.add_argument("--order", type=int)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--symbolic", action="store_true", help="symbolic parameters (default for stabilizer/brackets/obstruct)")
        s.add_argument("--output", metavar="FILE")
        s.add_argument("--format", choices=("json", "text"), default="text")
        if name in ("verdict", "sweep"):
            s.add_argument("--count", type=int, default=20)
        if name == "normalize":
            s.add_argument("--output-series", metavar="FILE")
    return p


def render_text(rep) -> str:
    if isinstance(rep, str):
        return rep
    lines = []

    def emit(key, val, indent):
        pad = "  " * indent
        if isinstance(val, dict):
            lines.append(f"{pad}{key}:")
            for k, v in val.items():
                emit(k, v, indent + 1)
        elif isinstance(val, list):
            lines.append(f"{pad}{key}:")
            for v in val:
                if isinstance(v, dict):
                    lines.append(f"{pad}  - " + "; ".join(f"{k}={_scalar(x)}" for k, x in v.items()))
                else:
                    lines.append(f"{pad}  {_scalar(v)}")
        else:
            lines.append(f"{pad}{key}: {_scalar(val)}")

    for k, v in rep.items():
        emit(k, v, 0)
    return "\n".join(lines) + "\n"


def _scalar(v) -> str:
    if isinstance(v, bool):
        return "yes" if v else "no"
    if v is None:
        return "-"
    if isinstance(v, list):
        return "[" + ", ".join(_scalar(x) for x in v) + "]"
    return str(v)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    fn = COMMANDS[args.command][0]
    try:
        rep, code = fn(args)
    except UsageError as exc:
        print(f"rankone {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if isinstance(rep, str):
        text = rep
    elif args.format == "json":
        text = dump_json(rep)
    else:
        text = render_text(rep)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
