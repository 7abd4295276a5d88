"""Solver-independent checking of stability certificates.

A certificate stores ``M``, the slacks ``T``, ``U``, the Gram matrices of every
positivity condition and the margin ``eps``. The kernel ``N`` is rebuilt from
its Gram matrix, and ``(D, E)`` is always recomputed from ``(M, N)``; nothing
the solver claims about the derivative is trusted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .lie import LyapCandidate, eval_V, eval_Vdot, lie_map
from .polymat import PiecewisePolyMat, PolyKernel, expand_block, expand_kernel
from .system import DelaySystem, validate_system


class CertificateMismatch(ValueError):
    pass


@dataclass(eq=False)
class Certificate:
    system: DelaySystem
    degree: int
    mode: str
    epsilon: float
    M: PiecewisePolyMat
    T: PiecewisePolyMat
    U: PiecewisePolyMat
    gram: dict[str, dict[str, Any]]
    eps_min: float = 1e-6
    solver_status: str = ""

    @property
    def N(self) -> PolyKernel:
        g = self.gram["N"]
        return expand_kernel(g["Q"], self.system.partition, self.system.n, g["degree"])

    def candidate(self) -> LyapCandidate:
        return LyapCandidate(self.M, self.N)

    # JSON -------------------------------------------------------------------
    def to_json(self) -> dict[str, Any]:
        def gram_json(g):
            out = {k: v for k, v in g.items() if k not in ("Q", "S0", "S1")}
            for key in ("Q",):
                if key in g:
                    out[key] = np.asarray(g[key]).tolist()
            for key in ("S0", "S1"):
                if key in g:
                    out[key] = [np.asarray(q).tolist() for q in g[key]]
            return out

        return {
            "system": self.system.to_dict(),
            "degree": self.degree,
            "mode": self.mode,
            "epsilon": self.epsilon,
            "M": self.M.to_json(),
            "T": self.T.to_json(),
            "U": self.U.to_json(),
            "gram": {name: gram_json(g) for name, g in self.gram.items()},
            "metadata": {
                "system_hash": self.system.fingerprint(),
                "eps_min": self.eps_min,
                "solver_status": self.solver_status,
            },
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> Certificate:
        sysm = validate_system(data["system"])
        part = sysm.partition
        meta = data.get("metadata", {})
        if "system_hash" in meta and meta["system_hash"] != sysm.fingerprint():
            raise CertificateMismatch("certificate system hash does not match its system block")

        def gram_load(g):
            out = dict(g)
            if "Q" in g:
                out["Q"] = np.asarray(g["Q"], dtype=float)
            for key in ("S0", "S1"):
                if key in g:
                    out[key] = [np.asarray(q, dtype=float) for q in g[key]]
            return out

        return cls(
            system=sysm,
            degree=int(data["degree"]),
            mode=str(data["mode"]),
            epsilon=float(data["epsilon"]),
            M=PiecewisePolyMat.from_json(part, data["M"]),
            T=PiecewisePolyMat.from_json(part, data["T"]),
            U=PiecewisePolyMat.from_json(part, data["U"]),
            gram={name: gram_load(g) for name, g in data["gram"].items()},
            eps_min=float(meta.get("eps_min", 1e-6)),
            solver_status=str(meta.get("solver_status", "")),
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path: str | Path) -> Certificate:
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    detail: str = ""


@dataclass
class VerifyReport:
    checks: list[CheckResult] = field(default_factory=list)
    epsilon: float = 0.0
    eps_min: float = 1e-6

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks) and self.epsilon >= self.eps_min

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def summary(self) -> str:
        lines = [f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.value:.3e} {c.detail}".rstrip() for c in self.checks]
        ok = self.epsilon >= self.eps_min
        lines.append(f"{'PASS' if ok else 'FAIL'}  margin eps={self.epsilon:.3e} (floor {self.eps_min:.1e})")
        return "\n".join(lines)


def _psd_check(name: str, Q: np.ndarray, tol: float) -> CheckResult:
    Q = np.asarray(Q, dtype=float)
    asym = float(np.max(np.abs(Q - Q.T), initial=0.0))
    lam = float(np.linalg.eigvalsh(0.5 * (Q + Q.T))[0]) if Q.size else 0.0
    floor = -tol * (1.0 + np.linalg.norm(Q))
    return CheckResult(f"psd {name}", lam >= floor and asym <= tol, lam, f"(floor {floor:.1e})")


def _sigma_residual(g: dict, target: PiecewisePolyMat) -> float:
    """Max coefficient mismatch between a target and its Gram (plus weighted Gram) expansion."""
    part = target.partition
    r = target.rows
    d0, d1 = g["degree"], g.get("weighted_degree")
    top = max(target.degree, 2 * d0, 2 * d1 + 2 if d1 is not None else 0)
    expd = np.zeros((part.k, top + 1, r, r))
    for i, (a, b) in enumerate(part.segments):
        e0 = expand_block(g["S0"][i], r, d0)
        expd[i, : e0.shape[0]] += e0
        if d1 is not None and g.get("S1"):
            e1 = expand_block(g["S1"][i], r, d1)
            w = (-a * b, a + b, -1.0)
            for q in range(3):
                expd[i, q : q + e1.shape[0]] += w[q] * e1
    t = target.padded(top).coef
    return float(np.max(np.abs(t - expd), initial=0.0))


def _shift(part, rows: int, n: int, val: float) -> PiecewisePolyMat:
    m = np.zeros((rows, rows))
    m[np.arange(n), np.arange(n)] = val
    return PiecewisePolyMat.constant(part, m)


def _embed_lead(P: PiecewisePolyMat, rows: int) -> PiecewisePolyMat:
    c = np.zeros((P.k, P.degree + 1, rows, rows))
    m = P.rows
    c[:, :, :m, :m] = P.coef
    return PiecewisePolyMat(P.partition, c)


def verify(cert: Certificate, sys: DelaySystem | None = None, tol: float = 1e-6) -> VerifyReport:
    """Check every condition of the certificate; numeric failures become report entries."""
    sysm = cert.system if sys is None else sys
    if sys is not None and sys != cert.system:
        raise CertificateMismatch("certificate was produced for a different system")
    n, k, h = sysm.n, sysm.k, sysm.h
    part = sysm.partition
    size = (k + 2) * n
    if cert.M.shape != (2 * n, 2 * n) or cert.T.shape != (n, n) or cert.U.shape != ((k + 1) * n,) * 2:
        raise CertificateMismatch("certificate dimensions do not match the system")
    if cert.M.partition != part:
        raise CertificateMismatch("certificate partition does not match the system")
    rep = VerifyReport(epsilon=cert.epsilon, eps_min=cert.eps_min)
    eps = cert.epsilon

    # (a) Gram blocks
    for name, g in cert.gram.items():
        if "Q" in g:
            rep.checks.append(_psd_check(f"{name}.Q", g["Q"], tol))
        for key in ("S0", "S1"):
            for i, Q in enumerate(g.get(key, [])):
                rep.checks.append(_psd_check(f"{name}.{key}[{i}]", Q, tol))

    # structure
    cand = cert.candidate()
    issues = cand.check_structure(tol=1e-12 * (1 + np.max(np.abs(cert.M.coef), initial=0.0)))
    rep.checks.append(CheckResult("structure M symmetric, M_11 constant, N symmetric", not issues, float(len(issues)),
                                  "; ".join(issues)))

    # (b) coefficient matching with recomputed (D, E)
    img = lie_map(cand, sysm)
    targetV = cert.M + _embed_lead(cert.T, 2 * n) - _shift(part, 2 * n, n, eps / h)
    res = _sigma_residual(cert.gram["sigma_V"], targetV)
    rep.checks.append(CheckResult("match sigma_V", res <= tol, res))
    targetD = -img.D + _embed_lead(cert.U, size) - _shift(part, size, n, eps / h)
    res = _sigma_residual(cert.gram["sigma_Vdot"], targetD)
    rep.checks.append(CheckResult("match sigma_Vdot", res <= tol, res))
    gE = cert.gram["E"]
    QE = expand_kernel(gE["Q"], part, n, gE["degree"])
    mE = max(QE.degree, img.E.degree)
    res = float(np.max(np.abs((-img.E).padded(mE).coef - QE.padded(mE).coef), initial=0.0))
    rep.checks.append(CheckResult("match -E kernel", res <= tol, res))

    # (c) zero-mean slacks
    for name, P in (("T", cert.T), ("U", cert.U)):
        val = float(np.max(np.abs(P.integrate()), initial=0.0))
        rep.checks.append(CheckResult(f"integral {name} = 0", val <= tol, val))

    # (d) strictness
    lam = float(np.linalg.eigvalsh(cand.M11)[0])
    rep.checks.append(CheckResult("min eig M_11 >= eps", lam >= eps - tol, lam))
    lam = float(np.linalg.eigvalsh(0.5 * (img.D11 + img.D11.T))[-1])
    rep.checks.append(CheckResult("max eig D_11 <= -eps", lam <= -eps + tol, lam))
    return rep


@dataclass
class SampleReport:
    trials: int
    violations: list[tuple[int, str, float]]

    @property
    def passed(self) -> bool:
        return not self.violations


def random_history(sys: DelaySystem, rng: np.random.Generator, degree: int = 3,
                   zero_at_origin: bool = False) -> PiecewisePolyMat:
    """Random continuous piecewise polynomial history scaled to unit sup-norm."""
    part = sys.partition
    n = sys.n
    coef = rng.normal(size=(part.k, degree + 1, n, 1))
    # make it continuous across breakpoints by adjusting constant terms
    for i in range(1, part.k):
        t = -part.delays[i - 1]
        left = PiecewisePolyMat(part, coef).eval_segment(i, t)
        right = PiecewisePolyMat(part, coef).eval_segment(i - 1, t)
        coef[i, 0] += right - left
    phi = PiecewisePolyMat(part, coef)
    if zero_at_origin:
        coef[:, 0] -= phi.eval(0.0)
        phi = PiecewisePolyMat(part, coef)
    grid = np.linspace(-part.h, 0.0, 201)
    sup = max(np.max(np.abs(phi.eval(t))) for t in grid)
    return PiecewisePolyMat(part, coef / sup) if sup > 0 else phi


def sample_check(cert: Certificate, sys: DelaySystem | None = None, trials: int = 100,
                 tol: float = 1e-6, seed: int = 0) -> SampleReport:
    """Evaluate ``V`` and ``Vdot`` on random histories against the margin bounds."""
    sysm = cert.system if sys is None else sys
    rng = np.random.default_rng(seed)
    cand = cert.candidate()
    img = lie_map(cand, sysm)
    eps = cert.epsilon
    bad = []
    for j in range(trials):
        phi = random_history(sysm, rng, zero_at_origin=(j % 10 == 9))
        x0 = float(np.sum(phi.eval(0.0) ** 2))
        v = eval_V(cand, phi)
        vd = eval_Vdot(img, phi)
        if v < eps * x0 - tol:
            bad.append((j, "V", v - eps * x0))
        if vd > -eps * x0 + tol:
            bad.append((j, "Vdot", vd + eps * x0))
    return SampleReport(trials, bad)
