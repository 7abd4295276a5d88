"""Piecewise polynomial matrices on [-h, 0] and piecewise binary kernels.

Coefficients are stored in the global variable ``t`` (monomial basis, powers
ascending). ``PiecewisePolyMat.coef`` has shape ``(k, d+1, rows, cols)``;
``PolyKernel.coef`` has shape ``(k, k, d+1, d+1, n, n)`` with ``coef[i, j, p, q]``
the coefficient of ``s**p t**q`` on the cell ``S_i x S_j``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .system import SegmentPartition


class PartitionMismatch(ValueError):
    pass


def _powers(t: float, d: int) -> np.ndarray:
    return t ** np.arange(d + 1, dtype=float)


def _pad_axis(a: np.ndarray, axis: int, size: int) -> np.ndarray:
    extra = size - a.shape[axis]
    if extra <= 0:
        return a
    widths = [(0, 0)] * a.ndim
    widths[axis] = (0, extra)
    return np.pad(a, widths)


def _check_same(pa: SegmentPartition, pb: SegmentPartition) -> None:
    if pa != pb:
        raise PartitionMismatch(f"partitions differ: {pa.delays} vs {pb.delays}")


def _segment_deriv(coef: np.ndarray, axis: int) -> np.ndarray:
    d = coef.shape[axis] - 1
    if d == 0:
        return np.zeros_like(coef)
    idx = [slice(None)] * coef.ndim
    idx[axis] = slice(1, None)
    scale_shape = [1] * coef.ndim
    scale_shape[axis] = d
    return coef[tuple(idx)] * np.arange(1, d + 1, dtype=float).reshape(scale_shape)


@dataclass(frozen=True, eq=False)
class PiecewisePolyMat:
    partition: SegmentPartition
    coef: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.coef, dtype=float)
        if c.ndim != 4 or c.shape[0] != self.partition.k:
            raise ValueError(
                f"coef must have shape (k={self.partition.k}, d+1, rows, cols), got {c.shape}"
            )
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite polynomial coefficients")
        object.__setattr__(self, "coef", c)

    # construction -------------------------------------------------------
    @classmethod
    def zeros(cls, part: SegmentPartition, rows: int, cols: int, degree: int = 0) -> PiecewisePolyMat:
        return cls(part, np.zeros((part.k, degree + 1, rows, cols)))

    @classmethod
    def constant(cls, part: SegmentPartition, mat: Any) -> PiecewisePolyMat:
        m = np.atleast_2d(np.asarray(mat, dtype=float))
        return cls(part, np.broadcast_to(m, (part.k, 1) + m.shape).copy())

    @classmethod
    def from_segments(cls, part: SegmentPartition, segs: Sequence[Sequence[Any]]) -> PiecewisePolyMat:
        """``segs[i][p]`` is the matrix coefficient of ``t**p`` on segment ``i``."""
        d = max(len(s) for s in segs) - 1
        mats = [[np.atleast_2d(np.asarray(c, dtype=float)) for c in s] for s in segs]
        r, c = mats[0][0].shape
        coef = np.zeros((part.k, d + 1, r, c))
        for i, s in enumerate(mats):
            for p, m in enumerate(s):
                coef[i, p] = m
        return cls(part, coef)

    # shape ---------------------------------------------------------------
    @property
    def k(self) -> int:
        return self.coef.shape[0]

    @property
    def degree(self) -> int:
        return self.coef.shape[1] - 1

    @property
    def rows(self) -> int:
        return self.coef.shape[2]

    @property
    def cols(self) -> int:
        return self.coef.shape[3]

    @property
    def shape(self) -> tuple[int, int]:
        return self.coef.shape[2], self.coef.shape[3]

    # evaluation ------------------------------------------------------------
    def eval_segment(self, i: int, t: float) -> np.ndarray:
        """Polynomial of segment ``i`` evaluated at ``t`` (also outside the segment)."""
        return np.tensordot(_powers(t, self.degree), self.coef[i], axes=(0, 0))

    def eval(self, t: float) -> np.ndarray:
        return self.eval_segment(self.partition.locate(t), t)

    def __call__(self, t: float) -> np.ndarray:
        return self.eval(t)

    def derivative(self) -> PiecewisePolyMat:
        c = _segment_deriv(self.coef, 1)
        return PiecewisePolyMat(self.partition, c)

    def jump(self, i: int) -> np.ndarray:
        """Right limit minus left limit at the breakpoint ``-h_i`` (``1 <= i <= k-1``)."""
        if not 1 <= i <= self.k - 1:
            raise IndexError(f"breakpoint index {i} out of range 1..{self.k - 1}")
        t = -self.partition.delays[i - 1]
        return self.eval_segment(i - 1, t) - self.eval_segment(i, t)

    def integrate(self) -> np.ndarray:
        mom = self.partition.moments(self.degree)
        return np.einsum("ip,iprc->rc", mom, self.coef)

    # algebra ---------------------------------------------------------------
    def padded(self, degree: int) -> PiecewisePolyMat:
        return PiecewisePolyMat(self.partition, _pad_axis(self.coef, 1, degree + 1))

    def _binary(self, other: PiecewisePolyMat, sign: float) -> PiecewisePolyMat:
        _check_same(self.partition, other.partition)
        d = max(self.degree, other.degree)
        a = _pad_axis(self.coef, 1, d + 1)
        b = _pad_axis(other.coef, 1, d + 1)
        return PiecewisePolyMat(self.partition, a + sign * b)

    def __add__(self, other: PiecewisePolyMat) -> PiecewisePolyMat:
        return self._binary(other, 1.0)

    def __sub__(self, other: PiecewisePolyMat) -> PiecewisePolyMat:
        return self._binary(other, -1.0)

    def __neg__(self) -> PiecewisePolyMat:
        return PiecewisePolyMat(self.partition, -self.coef)

    def __mul__(self, alpha: float) -> PiecewisePolyMat:
        return PiecewisePolyMat(self.partition, self.coef * float(alpha))

    __rmul__ = __mul__

    @property
    def T(self) -> PiecewisePolyMat:
        return PiecewisePolyMat(self.partition, self.coef.swapaxes(2, 3))

    def lmul(self, a: np.ndarray) -> PiecewisePolyMat:
        """Constant matrix times polynomial, ``A @ P(t)``."""
        return PiecewisePolyMat(self.partition, np.einsum("ij,kpjl->kpil", a, self.coef))

    def rmul(self, a: np.ndarray) -> PiecewisePolyMat:
        """``P(t) @ A``."""
        return PiecewisePolyMat(self.partition, np.einsum("kpij,jl->kpil", self.coef, a))

    def matmul(self, other: PiecewisePolyMat) -> PiecewisePolyMat:
        """Pointwise product ``P(t) @ Q(t)``; degrees add."""
        _check_same(self.partition, other.partition)
        da, db = self.degree, other.degree
        out = np.zeros((self.k, da + db + 1, self.rows, other.cols))
        for p in range(da + 1):
            out[:, p : p + db + 1] += np.einsum("kij,kqjl->kqil", self.coef[:, p], other.coef)
        return PiecewisePolyMat(self.partition, out)

    def mul_weights(self, weights: np.ndarray) -> PiecewisePolyMat:
        """Multiply segment ``i`` by the scalar polynomial ``weights[i]`` (ascending powers)."""
        w = np.asarray(weights, dtype=float)
        dw = w.shape[1] - 1
        out = np.zeros((self.k, self.degree + dw + 1, self.rows, self.cols))
        for q in range(dw + 1):
            out[:, q : q + self.degree + 1] += w[:, q, None, None, None] * self.coef
        return PiecewisePolyMat(self.partition, out)

    def block(self, rows: slice, cols: slice) -> PiecewisePolyMat:
        return PiecewisePolyMat(self.partition, self.coef[:, :, rows, cols])

    def is_symmetric(self, tol: float = 0.0) -> bool:
        return self.rows == self.cols and bool(
            np.max(np.abs(self.coef - self.coef.swapaxes(2, 3)), initial=0.0) <= tol
        )

    def trimmed(self, tol: float = 0.0) -> PiecewisePolyMat:
        """Drop trailing powers whose coefficients are all within ``tol`` of zero."""
        d = self.degree
        while d > 0 and np.max(np.abs(self.coef[:, d])) <= tol:
            d -= 1
        return PiecewisePolyMat(self.partition, self.coef[:, : d + 1])

    # serialization ------------------------------------------------------------
    def to_json(self) -> dict[str, Any]:
        return {"rows": self.rows, "cols": self.cols, "degree": self.degree, "coef": self.coef.tolist()}

    @classmethod
    def from_json(cls, part: SegmentPartition, data: dict[str, Any]) -> PiecewisePolyMat:
        coef = np.asarray(data["coef"], dtype=float)
        expect = (part.k, data["degree"] + 1, data["rows"], data["cols"])
        if coef.shape != expect:
            raise ValueError(f"coefficient array shape {coef.shape} != {expect}")
        return cls(part, coef)


@dataclass(frozen=True, eq=False)
class PolyKernel:
    partition: SegmentPartition
    coef: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.coef, dtype=float)
        k = self.partition.k
        if c.ndim != 6 or c.shape[:2] != (k, k) or c.shape[2] != c.shape[3]:
            raise ValueError(f"kernel coef must have shape (k, k, d+1, d+1, n, n), got {c.shape}")
        object.__setattr__(self, "coef", c)

    @classmethod
    def zeros(cls, part: SegmentPartition, n: int, degree: int = 0) -> PolyKernel:
        return cls(part, np.zeros((part.k, part.k, degree + 1, degree + 1, n, n)))

    @classmethod
    def constant(cls, part: SegmentPartition, mat: Any) -> PolyKernel:
        m = np.atleast_2d(np.asarray(mat, dtype=float))
        k = part.k
        return cls(part, np.broadcast_to(m, (k, k, 1, 1) + m.shape).copy())

    @property
    def k(self) -> int:
        return self.coef.shape[0]

    @property
    def degree(self) -> int:
        return self.coef.shape[2] - 1

    @property
    def n(self) -> int:
        return self.coef.shape[4]

    def eval_cell(self, i: int, j: int, s: float, t: float) -> np.ndarray:
        ps, pt = _powers(s, self.degree), _powers(t, self.degree)
        return np.einsum("p,q,pqab->ab", ps, pt, self.coef[i, j])

    def eval(self, s: float, t: float) -> np.ndarray:
        part = self.partition
        return self.eval_cell(part.locate(s), part.locate(t), s, t)

    def d_ds(self) -> PolyKernel:
        return PolyKernel(self.partition, _pad_axis(_segment_deriv(self.coef, 2), 2, self.degree + 1))

    def d_dt(self) -> PolyKernel:
        return PolyKernel(self.partition, _pad_axis(_segment_deriv(self.coef, 3), 3, self.degree + 1))

    def at_s_segment(self, i: int, s: float) -> PiecewisePolyMat:
        """``t -> N(s, t)`` using the polynomial of s-segment ``i``."""
        ps = _powers(s, self.degree)
        return PiecewisePolyMat(self.partition, np.einsum("p,jpqab->jqab", ps, self.coef[i]))

    def at_s(self, s: float) -> PiecewisePolyMat:
        return self.at_s_segment(self.partition.locate(s), s)

    def jump_s(self, i: int) -> PiecewisePolyMat:
        """``t -> N(-h_i^+, t) - N(-h_i^-, t)`` for breakpoint ``1 <= i <= k-1``."""
        if not 1 <= i <= self.k - 1:
            raise IndexError(f"breakpoint index {i} out of range 1..{self.k - 1}")
        s = -self.partition.delays[i - 1]
        return self.at_s_segment(i - 1, s) - self.at_s_segment(i, s)

    def transposed(self) -> PolyKernel:
        """The kernel ``(s, t) -> N(t, s)^T``."""
        return PolyKernel(self.partition, self.coef.transpose(1, 0, 3, 2, 5, 4))

    def is_symmetric(self, tol: float = 0.0) -> bool:
        return bool(np.max(np.abs(self.coef - self.transposed().coef), initial=0.0) <= tol)

    def padded(self, degree: int) -> PolyKernel:
        return PolyKernel(self.partition, _pad_axis(_pad_axis(self.coef, 2, degree + 1), 3, degree + 1))

    def _binary(self, other: PolyKernel, sign: float) -> PolyKernel:
        _check_same(self.partition, other.partition)
        d = max(self.degree, other.degree)
        return PolyKernel(self.partition, self.padded(d).coef + sign * other.padded(d).coef)

    def __add__(self, other: PolyKernel) -> PolyKernel:
        return self._binary(other, 1.0)

    def __sub__(self, other: PolyKernel) -> PolyKernel:
        return self._binary(other, -1.0)

    def __neg__(self) -> PolyKernel:
        return PolyKernel(self.partition, -self.coef)

    def __mul__(self, alpha: float) -> PolyKernel:
        return PolyKernel(self.partition, self.coef * float(alpha))

    __rmul__ = __mul__

    def double_integral(self, phi: PiecewisePolyMat) -> float:
        """Exact ``int int phi(s)^T N(s,t) phi(t) ds dt`` for a piecewise polynomial ``phi``."""
        _check_same(self.partition, phi.partition)
        d, dp = self.degree, phi.degree
        mom = self.partition.moments(d + dp)
        # I[i, p, u] = integral over S_i of t^(p+u)
        idx = np.arange(d + 1)[:, None] + np.arange(dp + 1)[None, :]
        mom_pu = mom[:, idx]
        v = phi.coef[..., 0]  # (k, dp+1, n)
        # w[i, p, a] = integral over S_i of t^p phi_a(t)
        w = np.einsum("ipu,iua->ipa", mom_pu, v)
        return float(np.einsum("ipa,ijpqab,jqb->", w, self.coef, w))


@dataclass(frozen=True)
class MonomialBasis:
    """``Z_{n,d}(t) = g(t) (x) I_n (x) z(t)`` with ``z = (1, t, ..., t^d)``.

    Row index of ``Z`` is ``i*n*(d+1) + a*(d+1) + p`` for segment ``i``,
    component ``a`` and power ``p``.
    """

    n: int
    d: int
    partition: SegmentPartition

    @property
    def size(self) -> int:
        return self.n * self.partition.k * (self.d + 1)

    @property
    def block_size(self) -> int:
        return self.n * (self.d + 1)

    def Z(self, t: float) -> np.ndarray:
        i = self.partition.locate(t)
        out = np.zeros((self.partition.k, self.n, self.d + 1, self.n))
        z = _powers(t, self.d)
        for a in range(self.n):
            out[i, a, :, a] = z
        return out.reshape(self.size, self.n)


@dataclass(frozen=True, eq=False)
class GramForm:
    """Gram representation; ``blocks`` (one per segment) or one full ``Q``."""

    basis: MonomialBasis
    blocks: tuple[np.ndarray, ...] | None = None
    Q: np.ndarray | None = None

    def __post_init__(self) -> None:
        if (self.blocks is None) == (self.Q is None):
            raise ValueError("give exactly one of blocks (one-variable) or Q (kernel)")
        if self.blocks is not None:
            bs = self.basis.block_size
            blocks = tuple(np.asarray(b, dtype=float) for b in self.blocks)
            if len(blocks) != self.basis.partition.k or any(b.shape != (bs, bs) for b in blocks):
                raise ValueError(f"need {self.basis.partition.k} blocks of size {bs}")
            object.__setattr__(self, "blocks", blocks)
        else:
            Q = np.asarray(self.Q, dtype=float)
            if Q.shape != (self.basis.size, self.basis.size):
                raise ValueError(f"Q must be {self.basis.size}x{self.basis.size}, got {Q.shape}")
            object.__setattr__(self, "Q", Q)

    def min_eigenvalue(self) -> float:
        mats = self.blocks if self.blocks is not None else (self.Q,)
        return min(float(np.linalg.eigvalsh(0.5 * (m + m.T))[0]) for m in mats)

    def expand(self) -> PiecewisePolyMat | PolyKernel:
        b = self.basis
        if self.blocks is not None:
            return expand_blocks(self.blocks, b.partition, b.n, b.d)
        return expand_kernel(self.Q, b.partition, b.n, b.d)


def expand_block(Q: np.ndarray, n: int, d: int) -> np.ndarray:
    """Coefficients ``(2d+1, n, n)`` of ``(I_n (x) z)^T Q (I_n (x) z)``."""
    q = np.asarray(Q, dtype=float).reshape(n, d + 1, n, d + 1)
    out = np.zeros((2 * d + 1, n, n))
    for p in range(d + 1):
        out[p : p + d + 1] += q[:, p, :, :].transpose(2, 0, 1)
    return out


def expand_blocks(blocks: Sequence[np.ndarray], part: SegmentPartition, n: int, d: int) -> PiecewisePolyMat:
    return PiecewisePolyMat(part, np.stack([expand_block(Q, n, d) for Q in blocks]))


def expand_kernel(Q: np.ndarray, part: SegmentPartition, n: int, d: int) -> PolyKernel:
    k = part.k
    q = np.asarray(Q, dtype=float).reshape(k, n, d + 1, k, n, d + 1)
    return PolyKernel(part, q.transpose(0, 3, 2, 5, 1, 4).copy())


def gram_expand(G: GramForm, kind: str | None = None) -> PiecewisePolyMat | PolyKernel:
    """Expand a Gram form; ``kind`` ('one-variable' or 'kernel') is checked if given."""
    if kind is not None:
        want = "one-variable" if G.blocks is not None else "kernel"
        if kind != want:
            raise ValueError(f"Gram form is {want}, requested {kind}")
    return G.expand()


def coeff_residual(a: PiecewisePolyMat | PolyKernel, b: PiecewisePolyMat | PolyKernel) -> float:
    """Max absolute coefficient difference; missing powers count as zero."""
    if type(a) is not type(b):
        raise TypeError("cannot compare a one-variable polynomial with a kernel")
    _check_same(a.partition, b.partition)
    d = max(a.degree, b.degree)
    ca, cb = a.padded(d).coef, b.padded(d).coef
    if ca.shape != cb.shape:
        raise ValueError(f"shape mismatch {ca.shape} vs {cb.shape}")
    return float(np.max(np.abs(ca - cb), initial=0.0))
