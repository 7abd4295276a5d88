"""SDPA sparse format (``.dat-s``) export and solution exchange.

The problem is written in SDPA's dual form: the variable ``Y`` is block
diagonal with one block per PSD block of the problem plus, when free
variables exist, a final diagonal block holding the pairs ``f+ >= 0``,
``f- >= 0`` with ``f = f+ - f-``. Equality row ``i`` becomes ``<F_i, Y> = c_i``
and the objective ``maximize <F_0, Y>`` picks out the objective variable.
Off-diagonal coefficients are halved because ``<F, Y>`` counts both triangle
entries. Names and the objective sense go to a JSON sidecar
``<path>.json``; the ``.dat-s`` file itself carries no comments.

Solutions are plain text with one number per line: each PSD block's upper
triangle row by row, blocks in order, then the free variables.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .problem import MalformedProblem, SdpProblem, SdpSolution, make_solution, tri_count


class SdpaParseError(ValueError):
    pass


class StructureMismatch(ValueError):
    pass


def _fmt(x: float) -> str:
    return format(float(x) + 0.0, ".17g")


def _entry_maps(p: SdpProblem):
    """Per column: (block number, i, j, scale) in SDPA numbering (1-based)."""
    out = []
    for bno, ((_, s), off) in enumerate(zip(p.blocks, p.block_offsets), start=1):
        for i in range(s):
            for j in range(i, s):
                out.append((bno, i + 1, j + 1, 1.0 if i == j else 0.5))
    return out


def export_sdpa(p: SdpProblem, path: str | Path) -> None:
    if p.nvar == 0 or (p.A.shape[0] == 0 and not p.blocks):
        raise MalformedProblem("cannot export an empty problem")
    path = Path(path)
    emap = _entry_maps(p)
    nb = len(p.blocks)
    nfree = len(p.free)
    lp = nb + 1
    struct = [s for _, s in p.blocks] + ([-2 * nfree] if nfree else [])
    lines = [str(p.A.shape[0]), str(len(struct)), " ".join(map(str, struct)),
             " ".join(_fmt(c) for c in p.b) if len(p.b) else ""]
    obj = p.objective_index
    if obj is not None:
        f = obj - p.n_block_vars
        lines.append(f"0 {lp} {2 * f + 1} {2 * f + 1} {_fmt(1.0)}")
        lines.append(f"0 {lp} {2 * f + 2} {2 * f + 2} {_fmt(-1.0)}")
    A = p.A.tocsr()
    for r in range(A.shape[0]):
        start, end = A.indptr[r], A.indptr[r + 1]
        for col, val in zip(A.indices[start:end], A.data[start:end]):
            if col < p.n_block_vars:
                bno, i, j, sc = emap[col]
                lines.append(f"{r + 1} {bno} {i} {j} {_fmt(val * sc)}")
            else:
                f = col - p.n_block_vars
                lines.append(f"{r + 1} {lp} {2 * f + 1} {2 * f + 1} {_fmt(val)}")
                lines.append(f"{r + 1} {lp} {2 * f + 2} {2 * f + 2} {_fmt(-val)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    side = {
        "sense": "maximize <F0, Y> subject to <Fi, Y> = ci, Y >= 0",
        "blocks": [[n, s] for n, s in p.blocks],
        "free": list(p.free),
        "free_split": "last block is diagonal: (f+, f-) per free variable, f = f+ - f-",
        "objective": p.objective,
        "solution_format": "one value per line: block upper triangles row-major, then free variables",
    }
    Path(str(path) + ".json").write_text(json.dumps(side, indent=1), encoding="utf-8")


def read_sdpa(path: str | Path) -> tuple[int, list[int], np.ndarray, list[tuple[int, int, int, int, float]]]:
    """Parse a ``.dat-s`` file into (m, block structure, c, entries)."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if not ln.startswith(('"', "*"))]
    toks_lines = [ln.replace(",", " ").replace("{", " ").replace("}", " ").replace("(", " ").replace(")", " ")
                  for ln in lines]
    try:
        m = int(toks_lines[0].split()[0])
        nblk = int(toks_lines[1].split()[0])
        struct = [int(float(x)) for x in toks_lines[2].split()[:nblk]]
        if len(struct) != nblk:
            raise SdpaParseError("block structure line too short")
        rest = toks_lines[3:]
        cvals: list[float] = []
        k = 0
        while len(cvals) < m:
            cvals.extend(float(x) for x in rest[k].split())
            k += 1
        if m == 0 and rest and rest[0] == "":
            k = 1
        c = np.array(cvals[:m])
        entries = []
        for ln in rest[k:]:
            if not ln:
                continue
            parts = ln.split()
            if len(parts) != 5:
                raise SdpaParseError(f"bad entry line {ln!r}")
            entries.append((int(parts[0]), int(parts[1]), int(parts[2]), int(parts[3]), float(parts[4])))
    except (IndexError, ValueError) as exc:
        raise SdpaParseError(f"cannot parse {path}: {exc}") from None
    for mat, blk, i, j, _ in entries:
        if not (0 <= mat <= m and 1 <= blk <= nblk and 1 <= i <= abs(struct[blk - 1]) and 1 <= j <= abs(struct[blk - 1])):
            raise SdpaParseError(f"entry ({mat}, {blk}, {i}, {j}) outside declared structure")
    return m, struct, c, entries


def import_sdpa(path: str | Path) -> SdpProblem:
    """Rebuild an :class:`SdpProblem` from a file written by :func:`export_sdpa`."""
    m, struct, c, entries = read_sdpa(path)
    side_path = Path(str(path) + ".json")
    if side_path.exists():
        side = json.loads(side_path.read_text(encoding="utf-8"))
        blocks = [(n, int(s)) for n, s in side["blocks"]]
        free = list(side["free"])
        objective = side["objective"]
    else:
        blocks = [(f"B{j + 1}", s) for j, s in enumerate(struct) if s > 0]
        nfree = -struct[-1] // 2 if struct and struct[-1] < 0 else 0
        free = [f"f{j}" for j in range(nfree)]
        objective = None
    dummy = SdpProblem(blocks, free, sp.csr_matrix((0, sum(tri_count(s) for _, s in blocks) + len(free))),
                       np.zeros(0), None)
    offs = dummy.block_offsets
    nbv = dummy.n_block_vars
    if [s for _, s in blocks] + ([-2 * len(free)] if free else []) != list(struct):
        raise StructureMismatch("block structure in file disagrees with sidecar")
    rows, cols, vals = [], [], []
    lp = len(blocks) + 1
    for mat, blk, i, j, val in entries:
        if mat == 0:
            continue
        if blk == lp:
            if i != j:
                raise SdpaParseError("off-diagonal entry in the free-variable block")
            if i % 2 == 0:
                continue  # f- half mirrors f+
            rows.append(mat - 1)
            cols.append(nbv + (i - 1) // 2)
            vals.append(val)
        else:
            a, b = min(i, j) - 1, max(i, j) - 1
            s = blocks[blk - 1][1]
            col = offs[blk - 1] + a * s - a * (a - 1) // 2 + (b - a)
            rows.append(mat - 1)
            cols.append(col)
            vals.append(val if a == b else 2.0 * val)
    A = sp.coo_matrix((vals, (rows, cols)), shape=(m, dummy.nvar)).tocsr()
    return SdpProblem(blocks, free, A, c, objective)


def write_solution(sol: SdpSolution, path: str | Path) -> None:
    Path(path).write_text("\n".join(_fmt(x) for x in sol.v) + "\n", encoding="utf-8")


def import_solution(path: str | Path, p: SdpProblem, feas_tol: float = 1e-6) -> SdpSolution:
    """Load solver values and recompute every residual locally."""
    try:
        vals = [float(x) for x in Path(path).read_text(encoding="utf-8").split()]
    except ValueError as exc:
        raise SdpaParseError(f"cannot parse solution file {path}: {exc}") from None
    if len(vals) != p.nvar:
        raise StructureMismatch(f"solution has {len(vals)} values, problem has {p.nvar} variables")
    v = np.array(vals)
    if not np.all(np.isfinite(v)):
        raise SdpaParseError("solution contains non-finite values")
    eq = p.equality_residual(v)
    eigs = p.min_block_eigenvalues(v) if p.blocks else {}
    blocks, _ = p.unpack(v)
    worst = min((lam / (1.0 + np.linalg.norm(blocks[k])) for k, lam in eigs.items()), default=0.0)
    ok = eq <= feas_tol * (1 + np.max(np.abs(p.b), initial=0.0)) and worst >= -feas_tol
    return make_solution(p, "optimal" if ok else "numerical-failure", v, pres=eq, dres=np.nan,
                         gap=np.nan, message="imported; residuals recomputed locally")
