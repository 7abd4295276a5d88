"""Certification at a fixed delay and delay-margin search by bisection.

Only the certified side is trusted: a point counts as certified when the
recovered certificate passes :func:`~delaycert.certifier.verify`. A point
that is not certified is not a proof of instability.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .certifier import Certificate, VerifyReport, verify
from .encoder import EncodingOptions, build_program, extract_certificate
from .sdp import SdpSolution, solve
from .system import DelaySystem, SystemTemplate

CERTIFIED = "certified"
NOT_CERTIFIED = "not-certified"
NUMERICAL = "numerical-failure"


@dataclass
class AnalysisResult:
    status: str
    epsilon: float
    certificate: Certificate | None
    report: VerifyReport | None
    solution: SdpSolution
    seconds: float

    @property
    def certified(self) -> bool:
        return self.status == CERTIFIED


def analyze(sys: DelaySystem, opts: EncodingOptions | None = None, solver_tol: float = 1e-8,
            verify_tol: float = 1e-6) -> AnalysisResult:
    opts = opts or EncodingOptions()
    t0 = time.perf_counter()
    prob, vmap = build_program(sys, opts)
    sol = solve(prob, tol=solver_tol)
    cert = rep = None
    eps = float(sol.objective) if np.isfinite(sol.objective) else -np.inf
    if sol.status in ("infeasible", "unbounded"):
        status = NOT_CERTIFIED if sol.status == "infeasible" else NUMERICAL
    else:
        cert = extract_certificate(sol, vmap)
        rep = verify(cert, sys, tol=verify_tol)
        if rep.passed:
            status = CERTIFIED
        elif eps < opts.eps_min:
            status = NOT_CERTIFIED
        else:
            status = NUMERICAL
    return AnalysisResult(status, eps, cert, rep, sol, time.perf_counter() - t0)


@dataclass
class Probe:
    h: float
    status: str
    epsilon: float
    seconds: float


@dataclass
class BisectResult:
    degree: int
    h_min: float | None
    h_max: float | None
    lower_bracket: tuple[float, float] | None
    upper_bracket: tuple[float, float] | None
    probes: list[Probe] = field(default_factory=list)
    non_interval: bool = False
    message: str = ""

    @property
    def found(self) -> bool:
        return self.h_max is not None


def bisect_margins(
    tmpl: SystemTemplate,
    opts: EncodingOptions,
    h_lo: float,
    h_hi: float,
    resolution: float = 1e-4,
    interior: int = 8,
) -> BisectResult:
    """Smallest and largest certified ``h`` in ``[h_lo, h_hi]`` to within ``resolution``.

    The range ends, its midpoint and ``interior`` evenly spaced points are
    probed first. If the certified probes do not form one contiguous run the
    result is flagged ``non_interval`` and the search brackets around the
    outermost certified probes.
    """
    if not 0 < h_lo < h_hi:
        raise ValueError("need 0 < h_lo < h_hi")
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    seen: dict[float, Probe] = {}

    def probe(h: float) -> bool:
        if h not in seen:
            r = analyze(tmpl.instantiate(h), opts)
            seen[h] = Probe(h, r.status, r.epsilon, r.seconds)
        return seen[h].status == CERTIFIED

    grid = sorted({h_lo, h_hi, 0.5 * (h_lo + h_hi)} | {h_lo + (h_hi - h_lo) * j / (interior + 1)
                                                    for j in range(1, interior + 1)})
    flags = [probe(h) for h in grid]
    res = BisectResult(opts.degree, None, None, None, None)
    if not any(flags):
        res.probes = [seen[h] for h in sorted(seen)]
        res.message = "no feasible point found"
        return res
    idx = [i for i, f in enumerate(flags) if f]
    first, last = idx[0], idx[-1]
    res.non_interval = (last - first + 1) != len(idx)
    if res.non_interval:
        res.message = "certified probes are not contiguous; the feasible set may not be an interval"

    # lower edge
    if first == 0:
        res.h_min = grid[0]
        res.message = (res.message + "; " if res.message else "") + "lower end of range is certified"
    else:
        a, b = grid[first - 1], grid[first]
        while b - a > resolution:
            mid = 0.5 * (a + b)
            if probe(mid):
                b = mid
            else:
                a = mid
        res.h_min, res.lower_bracket = b, (a, b)
    # upper edge
    if last == len(grid) - 1:
        res.h_max = grid[-1]
        res.message = (res.message + "; " if res.message else "") + "upper end of range is certified"
    else:
        a, b = grid[last], grid[last + 1]
        while b - a > resolution:
            mid = 0.5 * (a + b)
            if probe(mid):
                a = mid
            else:
                b = mid
        res.h_max, res.upper_bracket = a, (a, b)
    res.probes = [seen[h] for h in sorted(seen)]
    return res


def format_table(results: list[BisectResult]) -> str:
    def f(x):
        return "-" if x is None else f"{x:.6f}"

    lines = ["degree,h_min,h_max,solves,non_interval"]
    for r in results:
        lines.append(f"{r.degree},{f(r.h_min)},{f(r.h_max)},{len(r.probes)},{int(r.non_interval)}")
    return "\n".join(lines)
