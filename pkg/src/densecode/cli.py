"""Command-line front end: solve, maxn, map, audit."""

from __future__ import annotations

import argparse
import os
import sys

from .kraus import find_kraus_messages, theorem2_audit
from .phasemap import export_diagram, map_diagram, ordered_simplex_grid
from .serialize import dumps
from .spectra import SpectrumError, make_spectrum, mes, product_state
from .theorems import theorem1_audit
from .unitary_solver import SolverConfig, find_messages, max_alphabet

EXIT_FEASIBLE = 0
EXIT_INFEASIBLE = 1
EXIT_ERROR = 2


def _parse_spectrum(text: str, d: int | None):
    if text == "mes":
        if d is None:
            raise SpectrumError("named spectrum 'mes' needs -d")
        return mes(d)
    if text == "corner":
        if d is None:
            raise SpectrumError("named spectrum 'corner' needs -d")
        return product_state(d)
    values = [float(x) for x in text.split(",") if x.strip()]
    spectrum = make_spectrum(values)
    if d is not None and spectrum.d != d:
        raise SpectrumError(f"spectrum has {spectrum.d} entries, expected d={d}")
    return spectrum


def _config_from(args) -> SolverConfig:
    kw = {}
    if args.restarts is not None:
        kw["restarts"] = args.restarts
    if args.seed is not None:
        kw["rng_seed"] = args.seed
    if args.tol is not None:
        kw["feasibility_threshold"] = args.tol
        kw["polish_threshold"] = min(args.tol, SolverConfig().polish_threshold)
    threads = os.environ.get("DENSECODE_THREADS")
    if threads:
        kw["parallelism"] = max(1, int(threads))
    return SolverConfig(**kw)


def _emit(text: str, output: str | None) -> None:
    if output:
        with open(output, "w") as fh:
            fh.write(text)
            fh.write("\n")
    else:
        print(text)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("-d", type=int, default=None, help="local dimension")
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tol", type=float, default=None,
                   help="feasibility threshold on the largest overlap")
    p.add_argument("-o", "--output", default=None, help="write the report here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="densecode",
        description="Feasibility and phase boundaries for deterministic dense coding",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="decide feasibility of N messages")
    _add_common(p_solve)
    p_solve.add_argument("-N", type=int, required=True, help="number of messages")
    p_solve.add_argument("--spectrum", required=True,
                         help="comma-separated values, or 'mes' / 'corner'")
    p_solve.add_argument("--kappa", type=int, default=1,
                         help="Kraus operators per message (1 = unitary)")

    p_maxn = sub.add_parser("maxn", help="largest feasible alphabet")
    _add_common(p_maxn)
    p_maxn.add_argument("--spectrum", required=True)

    p_map = sub.add_parser("map", help="sweep the ordered simplex")
    _add_common(p_map)
    p_map.add_argument("-r", "--resolution", type=int, required=True)
    p_map.add_argument("--format", choices=["csv", "json"], default="csv")

    p_audit = sub.add_parser("audit", help="corner / purity audits")
    _add_common(p_audit)
    p_audit.add_argument("--theorem", type=int, choices=[1, 2], required=True)
    p_audit.add_argument("-m", type=int, default=None,
                         help="number of equal leading coefficients (theorem 1)")
    p_audit.add_argument("-N", type=int, default=None,
                         help="number of messages (theorem 2)")
    p_audit.add_argument("--kappa", type=int, default=2)
    return parser


def cmd_solve(args) -> int:
    spectrum = _parse_spectrum(args.spectrum, args.d)
    cfg = _config_from(args)
    if args.kappa > 1:
        report = find_kraus_messages(spectrum, args.N, args.kappa, cfg)
    else:
        report = find_messages(spectrum, args.N, cfg)
    _emit(report.to_json(), args.output)
    return EXIT_FEASIBLE if report.feasible else EXIT_INFEASIBLE


def cmd_maxn(args) -> int:
    spectrum = _parse_spectrum(args.spectrum, args.d)
    cfg = _config_from(args)
    best_n, reports = max_alphabet(spectrum, cfg)
    if args.output:
        _emit(dumps({
            "kind": "max_alphabet",
            "max_n": best_n,
            "reports": [r.to_json_dict() for r in reports],
        }), args.output)
    print(best_n)
    return EXIT_FEASIBLE


def cmd_map(args) -> int:
    if args.d is None:
        raise SpectrumError("map needs -d")
    cfg = _config_from(args)
    grid = ordered_simplex_grid(args.d, args.resolution)
    diagram = map_diagram(args.d, grid, cfg, resolution=args.resolution)
    path = args.output or f"phase_diagram_d{args.d}.{args.format}"
    export_diagram(diagram, path, args.format)
    counts = {}
    for p in diagram.points:
        counts[p.max_n] = counts.get(p.max_n, 0) + 1
    print(f"wrote {path}: {len(diagram.points)} points, "
          + ", ".join(f"N={n}:{c}" for n, c in sorted(counts.items())))
    return EXIT_FEASIBLE


def cmd_audit(args) -> int:
    cfg = _config_from(args)
    if args.theorem == 1:
        if args.d is None or args.m is None:
            raise ValueError("theorem 1 audit needs -d and -m")
        report = theorem1_audit(args.d, args.m, cfg)
        _emit(dumps(report.to_json_dict()), args.output)
        verdict = "infeasible" if not report.search.feasible else "FEASIBLE (unexpected)"
        print(f"corner d={args.d} m={args.m} N={report.n_messages}: {verdict}, "
              f"floor={report.search.max_abs_overlap}")
        return EXIT_FEASIBLE
    if args.d is None or args.N is None:
        raise ValueError("theorem 2 audit needs -d and -N")
    report = theorem2_audit(args.d, args.N, args.kappa, cfg)
    _emit(dumps(report.to_json_dict()), args.output)
    if report.min_purity is None:
        print(f"bound point d={args.d} N={args.N}: no witness found")
    else:
        print(f"bound point d={args.d} N={args.N}: min purity {report.min_purity:.9f}")
    return EXIT_FEASIBLE


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else 0
    handlers = {"solve": cmd_solve, "maxn": cmd_maxn, "map": cmd_map, "audit": cmd_audit}
    try:
        return handlers[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
