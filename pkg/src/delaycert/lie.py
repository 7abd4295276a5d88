"""The linear map (M, N) -> (D, E) giving the Lie derivative of a quadratic functional.

The functional is::

    V(phi) = int [phi(0); phi(s)]^T M(s) [phi(0); phi(s)] ds
             + int int phi(s)^T N(s, t) phi(t) ds dt

and its derivative along solutions is the same kind of form in the stacked
vector ``w(s) = [phi(0); phi(-h_1); ...; phi(-h_k); phi(s)]`` with matrix
``D(s)`` and kernel ``E(s, t)``. Block index ``0`` of ``D`` is ``phi(0)``,
``1..k-1`` the interior delays, ``k`` the last delay and ``k+1`` is ``phi(s)``.

Every point-evaluation term that lands in a constant block is divided by
``h`` so that integrating over ``[-h, 0]`` restores it; terms produced by
differentiating ``phi(0)`` under the integral (``A_i^T M_11``) are not.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .polymat import PiecewisePolyMat, PolyKernel
from .system import DelaySystem, SegmentPartition


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LyapCandidate:
    M: PiecewisePolyMat  # 2n x 2n, M_11 constant
    N: PolyKernel  # n x n kernel

    @property
    def n(self) -> int:
        return self.N.n

    @property
    def M11(self) -> np.ndarray:
        return self.M.coef[0, 0, : self.n, : self.n]

    def M12(self) -> PiecewisePolyMat:
        n = self.n
        return self.M.block(slice(0, n), slice(n, 2 * n))

    def M22(self) -> PiecewisePolyMat:
        n = self.n
        return self.M.block(slice(n, 2 * n), slice(n, 2 * n))

    def check_structure(self, tol: float = 1e-12) -> list[str]:
        """Violations of symmetry and of the constant-``M_11`` requirement."""
        n = self.n
        issues = []
        if not self.M.is_symmetric(tol):
            issues.append("M not symmetric")
        if not self.N.is_symmetric(tol):
            issues.append("N(s,t) != N(t,s)^T")
        m11 = self.M.coef[:, :, :n, :n]
        if np.max(np.abs(m11 - m11[0, 0])[:, 0], initial=0.0) > tol or np.max(
            np.abs(m11[:, 1:]), initial=0.0
        ) > tol:
            issues.append("M_11 not constant")
        return issues


@dataclass(frozen=True, eq=False)
class LieImage:
    D: PiecewisePolyMat  # (k+2)n square
    E: PolyKernel
    n: int

    @property
    def k(self) -> int:
        return self.D.rows // self.n - 2

    def block(self, i: int, j: int) -> PiecewisePolyMat:
        n = self.n
        return self.D.block(slice(i * n, (i + 1) * n), slice(j * n, (j + 1) * n))

    @property
    def D11(self) -> np.ndarray:
        """The constant ``phi(0)`` block."""
        return self.D.coef[0, 0, : self.n, : self.n]


def _check(cand: LyapCandidate, sys: DelaySystem) -> None:
    n = sys.n
    if cand.M.shape != (2 * n, 2 * n) or cand.N.n != n:
        raise DimensionMismatch(
            f"candidate sizes M={cand.M.shape}, N={cand.N.n} do not match n={n}"
        )
    if cand.M.partition != sys.partition or cand.N.partition != sys.partition:
        raise DimensionMismatch("candidate partition differs from the system's delays")


def lie_map(cand: LyapCandidate, sys: DelaySystem) -> LieImage:
    """Lie derivative image ``(D, E)`` of ``(M, N)`` for the multi-delay system."""
    _check(cand, sys)
    n, k, h = sys.n, sys.k, sys.h
    A = sys.matrices
    part = sys.partition
    M11 = cand.M11
    M12, M22, N = cand.M12(), cand.M22(), cand.N
    dM12, dM22 = M12.derivative(), M22.derivative()
    deg = max(cand.M.degree, N.degree, 0)
    size = (k + 2) * n
    coef = np.zeros((k, deg + 1, size, size))

    def put_const(bi: int, bj: int, mat: np.ndarray) -> None:
        coef[:, 0, bi * n : (bi + 1) * n, bj * n : (bj + 1) * n] += mat
        if bi != bj:
            coef[:, 0, bj * n : (bj + 1) * n, bi * n : (bi + 1) * n] += mat.T

    def put_poly(bi: int, P: PiecewisePolyMat) -> None:
        # row block bi against the phi(s) column block k+1
        c = P.coef
        j = k + 1
        coef[:, : c.shape[1], bi * n : (bi + 1) * n, j * n : (j + 1) * n] += c
        if bi != j:
            coef[:, : c.shape[1], j * n : (j + 1) * n, bi * n : (bi + 1) * n] += c.swapaxes(2, 3)

    m12_0 = M12.eval(0.0)
    put_const(0, 0, A[0].T @ M11 + M11 @ A[0] + (m12_0 + m12_0.T + M22.eval(0.0)) / h)
    for i in range(1, k):
        put_const(0, i, M11 @ A[i] - M12.jump(i) / h)
        put_const(i, i, -M22.jump(i) / h)
    put_const(0, k, M11 @ A[k] - M12.eval(-h) / h)
    put_const(k, k, -M22.eval(-h) / h)

    put_poly(0, N.at_s(0.0) + M12.lmul(A[0].T) - dM12)
    for i in range(1, k):
        put_poly(i, M12.lmul(A[i].T) - N.jump_s(i))
    put_poly(k, M12.lmul(A[k].T) - N.at_s(-h))
    put_poly(k + 1, -dM22)

    E = -(N.d_ds() + N.d_dt())
    return LieImage(PiecewisePolyMat(part, coef), E, n)


def single_delay_lie_map(cand: LyapCandidate, sys: DelaySystem) -> LieImage:
    """Closed-form single-delay version, written out independently of :func:`lie_map`."""
    if sys.k != 1:
        raise ValueError(f"single_delay_lie_map needs exactly one delay, got k={sys.k}")
    _check(cand, sys)
    n, h = sys.n, sys.h
    A0, A1 = sys.matrices
    M11 = cand.M11
    M12, M22, N = cand.M12(), cand.M22(), cand.N
    part = sys.partition

    # leading 2n x 2n constant block acting on (phi(0), phi(-h))
    top = np.block(
        [
            [A0.T @ M11 + M11 @ A0, M11 @ A1],
            [A1.T @ M11, np.zeros((n, n))],
        ]
    )
    bnd = np.block(
        [
            [M12.eval(0.0) + M12.eval(0.0).T, -M12.eval(-h)],
            [-M12.eval(-h).T, np.zeros((n, n))],
        ]
    )
    diag = np.block(
        [
            [M22.eval(0.0), np.zeros((n, n))],
            [np.zeros((n, n)), -M22.eval(-h)],
        ]
    )
    D11 = top + (bnd + diag) / h
    # 2n x n column multiplying phi(s)
    col_top = M12.lmul(A0.T) - M12.derivative() + N.at_s(0.0)
    col_bot = M12.lmul(A1.T) - N.at_s(-h)
    D22 = -M22.derivative()

    deg = max(col_top.degree, col_bot.degree, D22.degree)
    coef = np.zeros((1, deg + 1, 3 * n, 3 * n))
    coef[0, 0, : 2 * n, : 2 * n] = D11
    col = np.concatenate([col_top.padded(deg).coef, col_bot.padded(deg).coef], axis=2)[0]
    coef[0, :, : 2 * n, 2 * n :] = col
    coef[0, :, 2 * n :, : 2 * n] = col.swapaxes(1, 2)
    coef[0, : D22.degree + 1, 2 * n :, 2 * n :] += D22.coef[0]
    E = -(N.d_ds() + N.d_dt())
    return LieImage(PiecewisePolyMat(part, coef), E, n)


# ---------------------------------------------------------------------------
# functional values


def _stack_constant(part: SegmentPartition, vecs: list[np.ndarray], phi: PiecewisePolyMat) -> PiecewisePolyMat:
    """Piecewise vector ``[v_1; ...; v_m; phi(s)]`` with constant leading entries."""
    head = np.concatenate(vecs).reshape(-1, 1)
    d = phi.degree
    coef = np.zeros((part.k, d + 1, head.shape[0] + phi.rows, 1))
    coef[:, 0, : head.shape[0]] = head
    coef[:, :, head.shape[0] :] = phi.coef
    return PiecewisePolyMat(part, coef)


def _check_phi(phi: PiecewisePolyMat, n: int, part: SegmentPartition) -> None:
    if phi.shape != (n, 1):
        raise DimensionMismatch(f"history must be an {n}x1 piecewise polynomial, got {phi.shape}")
    if phi.partition != part:
        raise DimensionMismatch("history partition differs from the functional's")


def eval_V(cand: LyapCandidate, phi: PiecewisePolyMat) -> float:
    """Exact value of the functional on a piecewise polynomial history."""
    part = cand.M.partition
    _check_phi(phi, cand.n, part)
    w = _stack_constant(part, [phi.eval(0.0)[:, 0]], phi)
    single = w.T.matmul(cand.M.matmul(w)).integrate()[0, 0]
    return float(single + cand.N.double_integral(phi))


def eval_Vdot(img: LieImage, phi: PiecewisePolyMat) -> float:
    """Exact Lie derivative along the flow, from the image ``(D, E)``."""
    part = img.D.partition
    _check_phi(phi, img.n, part)
    pts = [0.0] + [-d for d in part.delays]
    w = _stack_constant(part, [phi.eval(t)[:, 0] for t in pts], phi)
    single = w.T.matmul(img.D.matmul(w)).integrate()[0, 0]
    return float(single + img.E.double_integral(phi))


def functional_quadrature(
    M: PiecewisePolyMat,
    N: PolyKernel,
    phi: Callable[[float], np.ndarray],
    extra_breaks: list[float] | tuple[float, ...] = (),
    nodes: int = 12,
) -> float:
    """Gauss-Legendre value of the functional for an arbitrary history callable.

    The interval is split at the partition breakpoints and at ``extra_breaks``
    so each piece is smooth; for polynomial pieces the rule is exact when
    ``2*nodes - 1`` exceeds the integrand degree.
    """
    part = M.partition
    h = part.h
    n = N.n
    cuts = {0.0, -h, *part.breakpoints}
    cuts.update(b for b in extra_breaks if -h < b < 0.0)
    cuts = sorted(cuts)
    x, wq = np.polynomial.legendre.leggauss(nodes)
    ts, ws, segs = [], [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b - a <= 0:
            continue
        ts.append(0.5 * (b - a) * x + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * wq)
        segs.append(np.full(nodes, part.locate(0.5 * (a + b))))
    t = np.concatenate(ts)
    w = np.concatenate(ws)
    seg = np.concatenate(segs)
    vals = np.array([np.asarray(phi(float(ti)), dtype=float).reshape(n) for ti in t])
    x0 = np.asarray(phi(0.0), dtype=float).reshape(n)

    dm = M.degree
    Pm = t[:, None] ** np.arange(dm + 1)
    Mt = np.einsum("ap,aprc->arc", Pm, M.coef[seg])
    wv = np.concatenate([np.broadcast_to(x0, vals.shape), vals], axis=1)
    single = float(np.einsum("a,ar,arc,ac->", w, wv, Mt, wv))

    dn = N.degree
    Pn = t[:, None] ** np.arange(dn + 1)
    W = np.zeros((part.k, dn + 1, n))
    np.add.at(W, seg, (w[:, None, None] * Pn[:, :, None] * vals[:, None, :]))
    double = float(np.einsum("ipa,ijpqab,jqb->", W, N.coef, W))
    return single + double


def lie_consistency_check(
    cand: LyapCandidate,
    sys: DelaySystem,
    phi: PiecewisePolyMat,
    dt: float | None = None,
    substeps: int = 4,
) -> float:
    """``|(V(x_dt) - V(phi))/dt - Vdot(phi)|`` with ``x_dt`` from simulating the flow.

    The residual is first order in ``dt`` when the image ``(D, E)`` is the true
    Lie derivative; an error in the map shows up as an O(1) residual.
    """
    from .ddesim import simulate

    if dt is None:
        dt = 1e-4 * sys.h
    img = lie_map(cand, sys)
    vdot = eval_Vdot(img, phi)
    v0 = eval_V(cand, phi)
    traj = simulate(sys, phi, horizon=dt, step=dt / substeps, snap=False)

    def shifted(s: float) -> np.ndarray:
        return traj.value(s + dt)

    breaks = [-d - dt for d in sys.delays[:-1]] + [tj - dt for tj in traj.times if 0 <= tj <= dt]
    vr = functional_quadrature(cand.M, cand.N, shifted, breaks)
    return abs((vr - v0) / dt - vdot)
