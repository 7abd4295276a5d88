"""Translate the functional search into an :class:`~delaycert.sdp.SdpProblem`.

Decision variables are the coefficients of ``M``, the zero-mean slacks ``T``
and ``U``, Gram matrices for every pointwise positivity condition, the Gram
matrix of the kernel ``N`` (so ``N`` is positive by construction) and the
margin ``eps``. The derivative image ``(D, E)`` is linear in ``(M, N)`` and is
obtained by applying :func:`~delaycert.lie.lie_map` to unit variables.

Strictness is encoded by shifting the two pointwise targets by
``(eps/h) diag(I, 0)``; integrated over ``[-h, 0]`` this gives
``V(phi) >= eps |phi(0)|^2`` and ``Vdot(phi) <= -eps |phi(0)|^2``. The blocks
``M_11 - eps I`` and ``-D_11 - eps I`` are kept PSD as well.

All Gram traces together are normalized to one, which makes the program
compact and always feasible; certification then asks for ``eps* > 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .lie import LyapCandidate, lie_map
from .polymat import PiecewisePolyMat, PolyKernel, expand_block, expand_kernel
from .sdp import ProblemBuilder, SdpProblem, SdpSolution
from .system import DelaySystem, SegmentPartition

MODES = ("interval", "global")


class DegreeError(ValueError):
    """Raised when a Gram basis cannot represent the target degree."""


@dataclass(frozen=True)
class EncodingOptions:
    """Search options.

    ``degree`` is the monomial basis degree ``d`` of the Gram representations,
    so ``M``, ``T`` and ``U`` are piecewise polynomials of degree ``2d`` and the
    positivity conditions use bases of degree ``d`` (``d - 1`` for the
    interval-weighted part).
    """

    degree: int = 1
    mode: str = "interval"
    eps_min: float = 1e-6
    kernel_degree: int | None = None  # per-variable degree of N; None -> 0
    gram_degree: int | None = None  # overrides the S_0 basis degree
    gram_degree_weighted: int | None = None  # overrides the S_1 basis degree
    normalize: bool = True

    def __post_init__(self) -> None:
        if self.degree < 0:
            raise ValueError("degree must be nonnegative")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.eps_min > 0:
            raise ValueError("eps_min must be positive")
        if self.kernel_degree is not None and self.kernel_degree < 0:
            raise ValueError("kernel degree must be nonnegative")

    @property
    def poly_degree(self) -> int:
        return 2 * self.degree

    @property
    def n_degree(self) -> int:
        return 0 if self.kernel_degree is None else self.kernel_degree


# ---------------------------------------------------------------------------
# affine tensors


class Affine:
    """Tensor ``const + sum_v x_v * lin[v]`` over builder variable ids."""

    def __init__(self, const: np.ndarray, ids: np.ndarray | None = None, lin: np.ndarray | None = None):
        self.const = np.asarray(const, dtype=float)
        if ids is None:
            ids = np.zeros(0, dtype=np.int64)
            lin = np.zeros((0,) + self.const.shape)
        self.ids = np.asarray(ids, dtype=np.int64)
        self.lin = np.asarray(lin, dtype=float)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.const.shape

    @classmethod
    def var(cls, ids: np.ndarray) -> Affine:
        """One variable per distinct nonnegative id; ``-1`` marks a structural zero."""
        ids = np.asarray(ids, dtype=np.int64)
        uniq = np.unique(ids[ids >= 0])
        lin = np.zeros((len(uniq),) + ids.shape)
        flat = lin.reshape(len(uniq), -1)
        fi = ids.ravel()
        where = np.flatnonzero(fi >= 0)
        flat[np.searchsorted(uniq, fi[where]), where] = 1.0
        return cls(np.zeros(ids.shape), uniq, lin)

    @classmethod
    def constant(cls, c: np.ndarray) -> Affine:
        return cls(c)

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> Affine:
        """Apply a linear map to every component."""
        const = np.asarray(fn(self.const), dtype=float)
        lin = np.stack([np.asarray(fn(l), dtype=float) for l in self.lin]) if len(self.ids) else np.zeros(
            (0,) + const.shape
        )
        return Affine(const, self.ids, lin)

    def __add__(self, other: Affine) -> Affine:
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        return Affine(
            self.const + other.const,
            np.concatenate([self.ids, other.ids]),
            np.concatenate([self.lin, other.lin]),
        )

    def __neg__(self) -> Affine:
        return Affine(-self.const, self.ids, -self.lin)

    def __sub__(self, other: Affine) -> Affine:
        return self + (-other)

    def __mul__(self, a: float) -> Affine:
        return Affine(self.const * a, self.ids, self.lin * a)

    __rmul__ = __mul__

    def value(self, x: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        vals = x(self.ids)
        return self.const + np.tensordot(vals, self.lin, axes=(0, 0))


def _pad(a: Affine, axis: int, size: int) -> Affine:
    from .polymat import _pad_axis

    return a.map(lambda c: _pad_axis(c, axis, size))


def _embed(a: Affine, fn_shape: tuple[int, ...], place: Callable[[np.ndarray, np.ndarray], None]) -> Affine:
    def fn(c):
        out = np.zeros(fn_shape)
        place(out, c)
        return out

    return a.map(fn)


def _sym_ids(builder: ProblemBuilder, prefix: str, lead: tuple[int, ...], r: int) -> np.ndarray:
    """Free symmetric-matrix coefficients: ids of shape ``lead + (r, r)``."""
    ids = np.empty(lead + (r, r), dtype=np.int64)
    for pos in np.ndindex(*lead):
        for a in range(r):
            for b in range(a, r):
                vid = builder.free_var(f"{prefix}[{','.join(map(str, pos))};{a},{b}]")
                ids[pos + (a, b)] = ids[pos + (b, a)] = vid
    return ids


# ---------------------------------------------------------------------------
# Gram bookkeeping


@dataclass
class GramSpec:
    """Where a positivity condition's Gram blocks live."""

    name: str
    kind: str  # "one-variable" or "kernel"
    rows: int
    degree: int  # basis degree of S_0 (or of the kernel Gram)
    weighted_degree: int | None = None  # S_1 basis degree, interval mode only
    s0: list[np.ndarray] = field(default_factory=list)  # id matrices per segment
    s1: list[np.ndarray] = field(default_factory=list)
    q: np.ndarray | None = None

    def all_ids(self) -> list[np.ndarray]:
        return self.s0 + self.s1 + ([self.q] if self.q is not None else [])


def interval_weights(part: SegmentPartition) -> np.ndarray:
    """``w_i(t) = (t - a_i)(b_i - t)`` as ascending coefficients, shape ``(k, 3)``."""
    return np.array([[-a * b, a + b, -1.0] for a, b in part.segments])


def gram_degrees(target_degree: int, mode: str, override0: int | None = None,
                 override1: int | None = None) -> tuple[int, int | None]:
    d0 = math.ceil(target_degree / 2) if override0 is None else override0
    if mode == "global":
        d1 = None
    else:
        d1 = math.ceil(target_degree / 2) - 1 if override1 is None else override1
        if d1 is not None and d1 < 0:
            d1 = None
    if 2 * d0 < target_degree and (d1 is None or 2 * d1 + 2 < target_degree):
        raise DegreeError(
            f"Gram basis degree {d0} (weighted {d1}) cannot represent a degree-{target_degree} target"
        )
    return d0, d1


def _expand_one(ids: np.ndarray, r: int, d: int) -> Affine:
    return Affine.var(ids).map(lambda q: expand_block(q, r, d))


def _upper_mask(shape: tuple[int, ...]) -> np.ndarray:
    r = shape[-1]
    return np.broadcast_to(np.triu(np.ones((r, r), dtype=bool)), shape)


def _add_equal_zero(builder: ProblemBuilder, expr: Affine, mask: np.ndarray, key: str) -> None:
    flat_mask = np.asarray(mask).ravel()
    pos = np.flatnonzero(flat_mask)
    lin = expr.lin.reshape(len(expr.ids), flat_mask.size)[:, pos]
    rhs = -expr.const.ravel()[pos]
    # drop rows with no variables and zero right-hand side
    live = np.any(lin != 0, axis=0) | (rhs != 0)
    builder.add_rows(expr.ids, lin[:, live], rhs[live], [f"{key}#{p}" for p in pos[live]])


def encode_sigma(
    builder: ProblemBuilder,
    part: SegmentPartition,
    P: Affine,
    name: str,
    opts: EncodingOptions,
    slack: Affine | None = None,
) -> GramSpec:
    """Require ``P + diag(slack, 0)`` to be piecewise SOS (or SOS plus weighted SOS).

    ``P`` has shape ``(k, d+1, r, r)``; ``slack`` has shape ``(k, d_s+1, m, m)``
    with ``m <= r`` and is constrained to integrate to zero over ``[-h, 0]``.
    """
    k, dp1, r, _ = P.shape
    target = P
    if slack is not None:
        ks, ds1, m, _ = slack.shape
        dd = max(dp1, ds1)
        target = _pad(P, 1, dd)
        sl = _embed(_pad(slack, 1, dd), (k, dd, r, r), lambda out, c: out.__setitem__((slice(None), slice(None), slice(0, m), slice(0, m)), c))
        target = target + sl
        mom = part.moments(ds1 - 1)
        integral = slack.map(lambda c: np.einsum("ip,ipab->ab", mom, c))
        _add_equal_zero(builder, integral, _upper_mask((m, m)), f"{name}:slack-integral")
    dt = target.shape[1] - 1
    d0, d1 = gram_degrees(dt, opts.mode, opts.gram_degree, opts.gram_degree_weighted)
    top = max(dt, 2 * d0, 2 * d1 + 2 if d1 is not None else 0)
    spec = GramSpec(name, "one-variable", r, d0, d1)
    w = interval_weights(part)
    rhs = _pad(target, 1, top + 1)
    for i in range(k):
        q0 = builder.block(f"{name}.S0[{i}]", r * (d0 + 1))
        spec.s0.append(q0)
        e0 = _expand_one(q0, r, d0)

        def put(out, c, i=i):
            out[i, : c.shape[0]] = c

        rhs = rhs - _embed(e0, (k, top + 1, r, r), put)
        if d1 is not None:
            q1 = builder.block(f"{name}.S1[{i}]", r * (d1 + 1))
            spec.s1.append(q1)
            wi = w[i]

            def put_w(out, c, i=i, wi=wi):
                for qd in range(3):
                    out[i, qd : qd + c.shape[0]] += wi[qd] * c

            rhs = rhs - _embed(_expand_one(q1, r, d1), (k, top + 1, r, r), put_w)
    _add_equal_zero(builder, rhs, _upper_mask(rhs.shape), f"{name}:match")
    return spec


def _kernel_unique_mask(k: int, d: int, n: int) -> np.ndarray:
    """One representative per pair related by ``K(s,t) = K(t,s)^T``."""
    idx = np.arange(k * (d + 1) * n).reshape(k, d + 1, n)
    a = idx[:, None, :, None, :, None]
    b = idx[None, :, None, :, None, :]
    return np.broadcast_to(a <= b, (k, k, d + 1, d + 1, n, n)).copy()


def encode_gamma(
    builder: ProblemBuilder,
    part: SegmentPartition,
    K: Affine,
    name: str,
    degree: int | None = None,
) -> GramSpec:
    """Require ``K(s,t) = Z(s)^T Q Z(t)`` with ``Q`` PSD; ``K`` has shape ``(k,k,d+1,d+1,n,n)``."""
    k, _, dk1, _, n, _ = K.shape
    dg = dk1 - 1 if degree is None else degree
    if dg < dk1 - 1:
        raise DegreeError(f"kernel Gram degree {dg} below kernel degree {dk1 - 1}")
    q = builder.block(f"{name}.Q", n * k * (dg + 1))
    spec = GramSpec(name, "kernel", n, dg, q=q)
    expd = Affine.var(q).map(lambda Q: expand_kernel(Q, part, n, dg).coef)
    Kp = K.map(lambda c: PolyKernel(part, c).padded(dg).coef)
    _add_equal_zero(builder, Kp - expd, _kernel_unique_mask(k, dg, n), f"{name}:match")
    return spec


# ---------------------------------------------------------------------------
# full program


@dataclass
class VariableMap:
    system: DelaySystem
    opts: EncodingOptions
    M: np.ndarray
    T: np.ndarray
    U: np.ndarray
    eps: int
    grams: dict[str, GramSpec]
    perm: np.ndarray | None = None

    def values(self, sol: SdpSolution) -> Callable[[np.ndarray], np.ndarray]:
        v = sol.v
        perm = self.perm

        def get(ids: np.ndarray) -> np.ndarray:
            ids = np.asarray(ids)
            out = np.zeros(ids.shape)
            ok = ids >= 0
            out[ok] = v[perm[ids[ok]]]
            return out

        return get


def _probe_lie(
    sysm: DelaySystem,
    Maff: Affine,
    Naff: Affine,
) -> tuple[Affine, Affine]:
    """``(D, E)`` as affine tensors, using linearity of the derivative map."""
    part = sysm.partition

    def image(mc: np.ndarray, nc: np.ndarray):
        img = lie_map(LyapCandidate(PiecewisePolyMat(part, mc), PolyKernel(part, nc)), sysm)
        return img.D.coef, img.E.coef

    D0, E0 = image(Maff.const, Naff.const)
    Dl, El = [], []
    zeroN = np.zeros(Naff.shape)
    zeroM = np.zeros(Maff.shape)
    for l in Maff.lin:
        d, e = image(l, zeroN)
        Dl.append(d)
        El.append(e)
    for l in Naff.lin:
        d, e = image(zeroM, l)
        Dl.append(d)
        El.append(e)
    ids = np.concatenate([Maff.ids, Naff.ids])
    D = Affine(D0, ids, np.stack(Dl) if Dl else np.zeros((0,) + D0.shape))
    E = Affine(E0, ids, np.stack(El) if El else np.zeros((0,) + E0.shape))
    return D, E


def build_program(sys: DelaySystem, opts: EncodingOptions | None = None) -> tuple[SdpProblem, VariableMap]:
    opts = opts or EncodingOptions()
    n, k, h = sys.n, sys.k, sys.h
    part = sys.partition
    d, dn = opts.poly_degree, opts.n_degree
    b = ProblemBuilder()

    # M: symmetric 2n x 2n, with constant M_11 shared across segments
    Mids = np.full((k, d + 1, 2 * n, 2 * n), -1, dtype=np.int64)
    m11 = _sym_ids(b, "M11", (), n)
    Mids[:, 0, :n, :n] = m11
    for i in range(k):
        for p in range(d + 1):
            for a in range(2 * n):
                for c in range(max(a, n), 2 * n):
                    vid = b.free_var(f"M[{i},{p};{a},{c}]")
                    Mids[i, p, a, c] = Mids[i, p, c, a] = vid
    Tids = _sym_ids(b, "T", (k, d + 1), n)
    Uids = _sym_ids(b, "U", (k, d + 1), (k + 1) * n)
    eps = b.free_var("eps")

    qN = b.block("N.Q", n * k * (dn + 1))
    Naff = Affine.var(qN).map(lambda Q: expand_kernel(Q, part, n, dn).coef)
    degL = max(d, dn)
    Maff = _pad(Affine.var(Mids), 1, degL + 1)
    Daff, Eaff = _probe_lie(sys, Maff, Naff)

    eps_aff = Affine(np.zeros(()), np.array([eps]), np.ones((1,)))

    def eps_shift(rows: int) -> Affine:
        # (eps/h) diag(I_n, 0) on the constant power of every segment
        def fn(c):
            out = np.zeros((k, 1, rows, rows))
            out[:, 0, np.arange(n), np.arange(n)] = c / h
            return out

        return _pad(eps_aff.map(fn), 1, 1)

    grams: dict[str, GramSpec] = {}
    PV = Maff - _pad(eps_shift(2 * n), 1, degL + 1)
    grams["sigma_V"] = encode_sigma(b, part, PV, "sigma_V", opts, slack=Affine.var(Tids))
    size = (k + 2) * n
    PD = -Daff - _pad(eps_shift(size), 1, Daff.shape[1])
    grams["sigma_Vdot"] = encode_sigma(b, part, PD, "sigma_Vdot", opts, slack=Affine.var(Uids))
    grams["E"] = encode_gamma(b, part, -Eaff, "E", degree=dn)
    grams["N"] = GramSpec("N", "kernel", n, dn, q=qN)

    # margin blocks: M_11 - eps I and -D_11 - eps I
    eyeeps = eps_aff.map(lambda c: c * np.eye(n))
    x1 = b.block("M11_margin", n)
    _add_equal_zero(b, Affine.var(x1) - Affine.var(m11) + eyeeps, _upper_mask((n, n)), "M11_margin")
    x2 = b.block("D11_margin", n)
    D11 = Daff.map(lambda c: c[0, 0, :n, :n])
    _add_equal_zero(b, Affine.var(x2) + D11 + eyeeps, _upper_mask((n, n)), "D11_margin")

    if opts.normalize:
        ids, coefs = [], []
        for g in grams.values():
            for q in g.all_ids():
                dg = np.diag(q)
                ids.extend(dg.tolist())
                coefs.extend([1.0] * len(dg))
        b.add_row(ids, coefs, 1.0, "normalization")

    prob, perm = b.build("eps")
    vmap = VariableMap(sys, opts, Mids, Tids, Uids, eps, grams, perm)
    return prob, vmap


def extract_certificate(sol: SdpSolution, vmap: VariableMap):
    """Concrete certificate from solver values; raises if the solve did not produce a point."""
    from .certifier import Certificate

    if sol.status in ("infeasible", "unbounded"):
        raise ValueError(f"cannot extract a certificate from a {sol.status} solve")
    get = vmap.values(sol)
    sysm = vmap.system
    part = sysm.partition

    def gram_vals(g: GramSpec) -> dict:
        out = {"degree": g.degree, "rows": g.rows}
        if g.kind == "kernel":
            out["Q"] = get(g.q)
        else:
            out["weighted_degree"] = g.weighted_degree
            out["S0"] = [get(q) for q in g.s0]
            out["S1"] = [get(q) for q in g.s1]
        return out

    return Certificate(
        system=sysm,
        degree=vmap.opts.degree,
        mode=vmap.opts.mode,
        epsilon=float(sol.free["eps"]),
        M=PiecewisePolyMat(part, get(vmap.M)),
        T=PiecewisePolyMat(part, get(vmap.T)),
        U=PiecewisePolyMat(part, get(vmap.U)),
        gram={name: gram_vals(g) for name, g in vmap.grams.items()},
        eps_min=vmap.opts.eps_min,
        solver_status=sol.status,
    )
