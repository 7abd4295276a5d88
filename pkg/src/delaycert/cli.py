"""Command line interface.

Exit codes: 0 certified (or command succeeded), 1 not certified / check
failed / growth detected, 2 parse or numerical error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .analysis import CERTIFIED, NOT_CERTIFIED, analyze, bisect_margins, format_table
from .certifier import Certificate, CertificateMismatch, verify
from .ddesim import decay_estimate, simulate
from .encoder import EncodingOptions, build_program
from .sdp.sdpa import export_sdpa
from .system import InvalidSystem, SystemTemplate, load_system, builtin_examples

log = logging.getLogger("delaycert")

EXIT_OK, EXIT_NO, EXIT_ERR = 0, 1, 2


def _load(args) -> SystemTemplate:
    if getattr(args, "example", None):
        tmpl = builtin_examples()[args.example]
        return tmpl
    if not args.system:
        raise InvalidSystem("give --system PATH or --example NAME")
    return SystemTemplate.from_system(load_system(args.system))


def _system(args):
    tmpl = _load(args)
    if args.h is not None:
        return tmpl.instantiate(args.h)
    if getattr(args, "example", None):
        return tmpl.instantiate(1.0)
    return load_system(args.system)


def _opts(args) -> EncodingOptions:
    return EncodingOptions(degree=args.degree, mode=args.mode, eps_min=args.eps_min,
                           kernel_degree=args.kernel_degree)


def cmd_analyze(args) -> int:
    sysm = _system(args)
    opts = _opts(args)
    if args.export:
        prob, _ = build_program(sysm, opts)
        export_sdpa(prob, args.export)
        print(f"program written to {args.export}")
    res = analyze(sysm, opts)
    print(f"system: n={sysm.n} delays={list(sysm.delays)}  degree={opts.degree} mode={opts.mode}")
    print(f"solver: {res.solution.status} ({res.solution.iterations} iterations, {res.seconds:.2f} s), "
          f"margin eps={res.epsilon:.4e}")
    if res.report is not None and args.verbose:
        print(res.report.summary())
    if res.status == CERTIFIED:
        print("result: certified exponentially stable")
        if args.out:
            res.certificate.save(args.out)
            print(f"certificate written to {args.out}")
        return EXIT_OK
    if res.status == NOT_CERTIFIED:
        print(f"result: not certified at degree {opts.degree} (this does not show instability)")
        return EXIT_NO
    print(f"result: numerical failure ({res.solution.message})")
    return EXIT_ERR


def cmd_bisect(args) -> int:
    tmpl = _load(args)
    results = []
    for d in args.degree:
        opts = EncodingOptions(degree=d, mode=args.mode, eps_min=args.eps_min, kernel_degree=args.kernel_degree)
        r = bisect_margins(tmpl, opts, args.h_lo, args.h_hi, args.resolution)
        results.append(r)
        if r.found:
            print(f"degree {d}: h_min={r.h_min:.6f} h_max={r.h_max:.6f} ({len(r.probes)} solves)")
        else:
            print(f"degree {d}: {r.message}")
        if r.non_interval:
            print(f"  warning: {r.message}")
    table = format_table(results)
    print(table)
    if args.out:
        Path(args.out).write_text(table + "\n", encoding="utf-8")
    return EXIT_OK if all(r.found for r in results) else EXIT_NO


def cmd_verify(args) -> int:
    cert = Certificate.load(args.certificate)
    sysm = load_system(args.system) if args.system else cert.system
    rep = verify(cert, sysm, tol=args.tol)
    print(rep.summary())
    print("result:", "certificate valid" if rep.passed else "certificate rejected")
    return EXIT_OK if rep.passed else EXIT_NO


def cmd_simulate(args) -> int:
    sysm = _system(args)
    h = sysm.h
    horizon = args.horizon if args.horizon is not None else 20 * h
    step = args.step if args.step is not None else h / 200
    hist = np.asarray(args.history if args.history else [1.0] * sysm.n, dtype=float)
    if hist.shape != (sysm.n,):
        raise InvalidSystem(f"--history needs {sysm.n} values")
    traj = simulate(sysm, hist, horizon, step)
    if args.out:
        traj.to_csv(args.out)
    est = decay_estimate(traj, h=h)
    print(f"simulated to t={traj.final_time:.4g} with step {traj.step:.4g}; decay rate estimate {est.sigma:.4g}")
    if traj.diverged:
        print("trajectory diverged")
    print("growth detected" if est.growing else "decay observed")
    return EXIT_NO if est.growing else EXIT_OK


def cmd_export(args) -> int:
    sysm = _system(args)
    prob, _ = build_program(sysm, _opts(args))
    out = args.out or args.export
    if not out:
        raise InvalidSystem("export-sdp needs --out PATH")
    export_sdpa(prob, out)
    print(f"{prob.A.shape[0]} constraints, {len(prob.blocks)} PSD blocks, {len(prob.free)} free variables -> {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="delaycert", description="Stability certificates for linear delay systems")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, degree_many=False):
        sp.add_argument("--system", help="system description JSON")
        sp.add_argument("--example", choices=sorted(builtin_examples()), help="built-in example system")
        if degree_many:
            sp.add_argument("--degree", type=int, nargs="+", default=[1])
        else:
            sp.add_argument("--degree", type=int, default=1)
        sp.add_argument("--mode", choices=["interval", "global"], default="interval")
        sp.add_argument("--eps-min", type=float, default=1e-6)
        sp.add_argument("--kernel-degree", type=int, default=None)

    a = sub.add_parser("analyze", help="search for a certificate at fixed delays")
    common(a)
    a.add_argument("--h", type=float, default=None, help="rescale delays so the largest equals H")
    a.add_argument("--out", help="write the certificate here")
    a.add_argument("--export", help="also write the SDP in SDPA format")
    a.set_defaults(func=cmd_analyze)

    b = sub.add_parser("bisect", help="search for the certified delay range")
    common(b, degree_many=True)
    b.add_argument("--h-lo", type=float, required=True)
    b.add_argument("--h-hi", type=float, required=True)
    b.add_argument("--resolution", type=float, default=1e-4)
    b.add_argument("--out", help="write the margin table (CSV)")
    b.set_defaults(func=cmd_bisect)

    v = sub.add_parser("verify", help="check a certificate")
    v.add_argument("--certificate", required=True)
    v.add_argument("--system", help="system to check against (defaults to the one stored)")
    v.add_argument("--tol", type=float, default=1e-6)
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("simulate", help="integrate the system from a constant history")
    s.add_argument("--system")
    s.add_argument("--example", choices=sorted(builtin_examples()))
    s.add_argument("--h", type=float, default=None)
    s.add_argument("--horizon", type=float, default=None)
    s.add_argument("--step", type=float, default=None)
    s.add_argument("--history", type=float, nargs="+", default=None)
    s.add_argument("--out", help="CSV trajectory output")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("export-sdp", help="write the SDP in SDPA sparse format")
    common(e)
    e.add_argument("--h", type=float, default=None)
    e.add_argument("--out")
    e.add_argument("--export")
    e.set_defaults(func=cmd_export)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (InvalidSystem, CertificateMismatch, json.JSONDecodeError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
