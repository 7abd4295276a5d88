"""Equality-constrained block-PSD programs.

The decision vector lists, for each PSD block in order, its upper triangle
row by row (``(0,0), (0,1), ..., (0,n-1), (1,1), ...``), followed by the free
scalar variables. Constraints are ``A v = b``; the objective maximizes one
designated free variable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.sparse as sp


class MalformedProblem(ValueError):
    pass


def tri_count(n: int) -> int:
    return n * (n + 1) // 2


def tri_index(n: int) -> np.ndarray:
    """Symmetric ``n x n`` matrix of positions within the upper-triangle vector."""
    idx = np.empty((n, n), dtype=np.int64)
    pos = 0
    for i in range(n):
        for j in range(i, n):
            idx[i, j] = idx[j, i] = pos
            pos += 1
    return idx


def sym_from_tri(vec: np.ndarray, n: int) -> np.ndarray:
    return np.asarray(vec, dtype=float)[tri_index(n)]


def tri_from_sym(mat: np.ndarray) -> np.ndarray:
    n = mat.shape[0]
    iu = np.triu_indices(n)
    return np.asarray(mat, dtype=float)[iu]


@dataclass
class SdpProblem:
    blocks: list[tuple[str, int]]
    free: list[str]
    A: sp.csr_matrix
    b: np.ndarray
    objective: str | None = None
    row_keys: list[str] | None = None

    def __post_init__(self) -> None:
        self.A = sp.csr_matrix(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float).ravel()
        if not self.blocks and not self.free:
            raise MalformedProblem("problem has no variables")
        names = [n for n, _ in self.blocks] + list(self.free)
        if len(set(names)) != len(names):
            raise MalformedProblem("duplicate variable or block names")
        if any(s < 1 for _, s in self.blocks):
            raise MalformedProblem("PSD block sizes must be positive")
        if self.A.shape != (len(self.b), self.nvar):
            raise MalformedProblem(f"constraint matrix {self.A.shape} vs {len(self.b)} rows x {self.nvar} vars")
        if not (np.all(np.isfinite(self.A.data)) and np.all(np.isfinite(self.b))):
            raise MalformedProblem("non-finite constraint data")
        if self.objective is not None and self.objective not in self.free:
            raise MalformedProblem(f"objective {self.objective!r} is not a free variable")

    @property
    def block_offsets(self) -> list[int]:
        out, pos = [], 0
        for _, s in self.blocks:
            out.append(pos)
            pos += tri_count(s)
        return out

    @property
    def n_block_vars(self) -> int:
        return sum(tri_count(s) for _, s in self.blocks)

    @property
    def nvar(self) -> int:
        return self.n_block_vars + len(self.free)

    @property
    def objective_index(self) -> int | None:
        if self.objective is None:
            return None
        return self.n_block_vars + self.free.index(self.objective)

    def unpack(self, v: np.ndarray) -> tuple[dict[str, np.ndarray], dict[str, float]]:
        v = np.asarray(v, dtype=float)
        blocks = {}
        for (name, s), off in zip(self.blocks, self.block_offsets):
            blocks[name] = sym_from_tri(v[off : off + tri_count(s)], s)
        base = self.n_block_vars
        free = {name: float(v[base + i]) for i, name in enumerate(self.free)}
        return blocks, free

    def pack(self, blocks: dict[str, np.ndarray], free: dict[str, float]) -> np.ndarray:
        parts = [tri_from_sym(blocks[name]) for name, _ in self.blocks]
        parts.append(np.array([free[name] for name in self.free], dtype=float))
        return np.concatenate(parts)

    def equality_residual(self, v: np.ndarray) -> float:
        if self.A.shape[0] == 0:
            return 0.0
        return float(np.max(np.abs(self.A @ v - self.b)))

    def min_block_eigenvalues(self, v: np.ndarray) -> dict[str, float]:
        blocks, _ = self.unpack(v)
        return {k: float(np.linalg.eigvalsh(m)[0]) for k, m in blocks.items()}

    def scaled_rows(self, factor: float) -> SdpProblem:
        return SdpProblem(self.blocks, self.free, self.A * factor, self.b * factor, self.objective, self.row_keys)


@dataclass
class SdpSolution:
    status: str  # optimal | infeasible | unbounded | numerical-failure
    v: np.ndarray
    blocks: dict[str, np.ndarray]
    free: dict[str, float]
    objective: float
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    message: str = ""
    equality_residual: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def make_solution(p: SdpProblem, status: str, v: np.ndarray, *, pres=np.nan, dres=np.nan,
                  gap=np.nan, iterations=0, message="") -> SdpSolution:
    blocks, free = p.unpack(v)
    return SdpSolution(
        status=status,
        v=np.asarray(v, dtype=float),
        blocks=blocks,
        free=free,
        objective=free[p.objective] if p.objective is not None else 0.0,
        primal_residual=float(pres),
        dual_residual=float(dres),
        gap=float(gap),
        iterations=iterations,
        message=message,
        equality_residual=p.equality_residual(v),
    )


@dataclass
class ProblemBuilder:
    """Accumulates variables and linear rows; variable ids are internal until :meth:`build`."""

    _blocks: list[tuple[str, int, int]] = field(default_factory=list)  # name, size, first id
    _free: list[tuple[str, int]] = field(default_factory=list)
    _nid: int = 0
    _rows: list[np.ndarray] = field(default_factory=list)
    _cols: list[np.ndarray] = field(default_factory=list)
    _vals: list[np.ndarray] = field(default_factory=list)
    _rhs: list[float] = field(default_factory=list)
    _keys: list[str] = field(default_factory=list)

    def block(self, name: str, size: int) -> np.ndarray:
        """Declare a PSD block; returns the symmetric matrix of its variable ids."""
        first = self._nid
        self._blocks.append((name, size, first))
        self._nid += tri_count(size)
        return first + tri_index(size)

    def free_var(self, name: str) -> int:
        self._free.append((name, self._nid))
        self._nid += 1
        return self._nid - 1

    def free_array(self, prefix: str, shape: tuple[int, ...]) -> np.ndarray:
        ids = np.empty(shape, dtype=np.int64)
        for pos in np.ndindex(*shape):
            ids[pos] = self.free_var(prefix + "[" + ",".join(map(str, pos)) + "]")
        return ids

    @property
    def nid(self) -> int:
        return self._nid

    def add_row(self, ids: Iterable[int], coefs: Iterable[float], rhs: float, key: str = "") -> None:
        ids = np.asarray(list(ids), dtype=np.int64)
        coefs = np.asarray(list(coefs), dtype=float)
        n = len(self._rhs)
        self._rows.append(np.full(len(ids), n, dtype=np.int64))
        self._cols.append(ids)
        self._vals.append(coefs)
        self._rhs.append(float(rhs))
        self._keys.append(key)

    def add_rows(self, ids: np.ndarray, lin: np.ndarray, rhs: np.ndarray, keys: list[str]) -> None:
        """Rows ``lin[:, r] . x[ids] = rhs[r]`` for each column ``r`` of ``lin`` (shape ``(len(ids), R)``)."""
        ids = np.asarray(ids, dtype=np.int64)
        lin = np.asarray(lin, dtype=float)
        if lin.ndim != 2:
            lin = lin.reshape(len(ids), -1)
        base = len(self._rhs)
        nz_var, nz_row = np.nonzero(lin)
        self._rows.append(base + nz_row)
        self._cols.append(ids[nz_var])
        self._vals.append(lin[nz_var, nz_row])
        self._rhs.extend(np.asarray(rhs, dtype=float).ravel().tolist())
        self._keys.extend(keys)

    def build(self, objective: str | None = None) -> tuple[SdpProblem, np.ndarray]:
        """Return the problem and ``perm`` mapping internal ids to column indices."""
        perm = np.empty(self._nid, dtype=np.int64)
        pos = 0
        for _, size, first in self._blocks:
            cnt = tri_count(size)
            perm[first : first + cnt] = np.arange(pos, pos + cnt)
            pos += cnt
        for _, vid in self._free:
            perm[vid] = pos
            pos += 1
        m = len(self._rhs)
        if self._rows:
            rows = np.concatenate(self._rows)
            cols = perm[np.concatenate(self._cols)]
            vals = np.concatenate(self._vals)
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
        A = sp.coo_matrix((vals, (rows, cols)), shape=(m, self._nid)).tocsr()
        A.sum_duplicates()
        A.eliminate_zeros()
        prob = SdpProblem(
            blocks=[(n, s) for n, s, _ in self._blocks],
            free=[n for n, _ in self._free],
            A=A,
            b=np.array(self._rhs),
            objective=objective,
            row_keys=list(self._keys),
        )
        return prob, perm
