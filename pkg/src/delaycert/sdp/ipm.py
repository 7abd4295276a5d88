"""Primal-dual interior-point solver for :class:`SdpProblem`.

The equalities are eliminated first, ``v = v0 + G y`` with orthonormal ``G``,
which turns the program into a linear matrix inequality

    maximize c^T y   subject to   F_0 + sum_i y_i F_i  >= 0   (block diagonal).

Before iterating, diagonal entries of a block that are identically zero
force their whole row to zero; those rows become extra equalities and the
reduction repeats. This removes the structurally singular faces that
coefficient matching in Gram representations creates, so the interior
point method works on a program that usually has a strict interior.

The LMI is solved as the dual of a standard-form SDP with the HKM search
direction and Mehrotra's predictor-corrector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .problem import SdpProblem, SdpSolution, make_solution, tri_count


@dataclass
class _Reduced:
    v0: np.ndarray
    G: np.ndarray  # nvar x m
    c: np.ndarray  # objective in y
    c0: float
    F0: list[np.ndarray]
    F: list[np.ndarray]  # per block (m, nb, nb)


class _Infeasible(Exception):
    pass


class _Unbounded(Exception):
    pass


def _particular(A: np.ndarray, b: np.ndarray, rtol: float) -> tuple[np.ndarray, np.ndarray]:
    """Least-norm solution and orthonormal null-space basis of ``A x = b``."""
    m, n = A.shape
    if m == 0:
        return np.zeros(n), np.eye(n)
    U, s, Vt = np.linalg.svd(A, full_matrices=True)
    thr = rtol * max(s[0] if s.size else 0.0, 1.0)
    r = int(np.sum(s > thr))
    x = Vt[:r].T @ ((U[:, :r].T @ b) / s[:r])
    res = np.max(np.abs(A @ x - b), initial=0.0)
    if res > 1e-8 * (1.0 + np.max(np.abs(b), initial=0.0)):
        raise _Infeasible(f"linear equalities inconsistent (residual {res:.3g})")
    return x, Vt[r:].T.copy()


def _reduce(p: SdpProblem, zero_tol: float = 1e-9) -> tuple[_Reduced, list[np.ndarray]]:
    A = p.A.toarray()
    v0, G = _particular(A, p.b, 1e-11)
    offs = p.block_offsets
    sizes = [s for _, s in p.blocks]
    keep = [np.arange(s) for s in sizes]
    tri = [np.triu_indices(s) for s in sizes]
    # var index of entry (a, b) of block j
    pos = []
    for j, s in enumerate(sizes):
        idx = np.empty((s, s), dtype=np.int64)
        idx[tri[j]] = offs[j] + np.arange(tri_count(s))
        idx[(tri[j][1], tri[j][0])] = offs[j] + np.arange(tri_count(s))
        pos.append(idx)
    cvec = np.zeros(p.nvar)
    if p.objective_index is not None:
        cvec[p.objective_index] = 1.0
    active = list(range(len(sizes)))

    for _ in range(10 * (sum(sizes) + 1)):
        # restrict y to directions that move some active block entry
        rows = np.concatenate(
            [pos[j][np.ix_(keep[j], keep[j])][np.triu_indices(len(keep[j]))] for j in active]
        ) if active else np.zeros(0, dtype=np.int64)
        if G.shape[1] > 0 and rows.size:
            P = G[rows]
            _, s, Vt = np.linalg.svd(P, full_matrices=True)
            r = int(np.sum(s > 1e-10 * max(1.0, s[0] if s.size else 0.0)))
            W, Wp = Vt[:r].T, Vt[r:].T
        else:
            W, Wp = np.zeros((G.shape[1], 0)), np.eye(G.shape[1])
        cz = G.T @ cvec
        if Wp.shape[1] and np.linalg.norm(Wp.T @ cz) > 1e-9:
            raise _Unbounded("objective can grow without touching any PSD block")
        G = G @ W

        new_rows, new_rhs = [], []
        still = []
        for j in active:
            kj = keep[j]
            sub = pos[j][np.ix_(kj, kj)]
            gdiag = G[np.diag(sub)]
            fdiag = v0[np.diag(sub)]
            fixed = np.linalg.norm(gdiag, axis=1) <= zero_tol
            bad = fixed & (fdiag < -zero_tol)
            if np.any(bad):
                raise _Infeasible(f"block {p.blocks[j][0]!r} has a diagonal entry fixed at {fdiag[bad][0]:.3g} < 0")
            dead = fixed & (np.abs(fdiag) <= zero_tol)
            if np.any(dead):
                for a in np.flatnonzero(dead):
                    for b_ in range(len(kj)):
                        vid = sub[a, b_]
                        new_rows.append(G[vid])
                        new_rhs.append(-v0[vid])
                keep[j] = kj[~dead]
                kj = keep[j]
                if kj.size == 0:
                    continue
                sub = pos[j][np.ix_(kj, kj)]
            # block fully constant: check and drop it
            ent = sub[np.triu_indices(len(kj))]
            if np.all(np.linalg.norm(G[ent], axis=1) <= zero_tol):
                lam = np.linalg.eigvalsh(v0[sub])[0]
                if lam < -zero_tol * (1 + np.linalg.norm(v0[sub])):
                    raise _Infeasible(f"block {p.blocks[j][0]!r} is fixed and indefinite (min eig {lam:.3g})")
                continue
            still.append(j)
        active = still
        if not new_rows:
            break
        E = np.array(new_rows)
        e = np.array(new_rhs)
        y0, K = _particular(E, e, 1e-11)
        v0 = v0 + G @ y0
        G = G @ K

    F0, F = [], []
    for j in active:
        kj = keep[j]
        sub = pos[j][np.ix_(kj, kj)]
        F0.append(v0[sub])
        F.append(np.moveaxis(G[sub], 2, 0).copy())
    c = G.T @ cvec
    red = _Reduced(v0=v0, G=G, c=c, c0=float(cvec @ v0), F0=F0, F=F)
    return red, F0


def _steplen(X: np.ndarray, dX: np.ndarray) -> float:
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    Li = sla.solve_triangular(L, np.eye(len(X)), lower=True)
    lam = np.linalg.eigvalsh(Li @ dX @ Li.T)[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _cholesky_regularized(M: np.ndarray):
    """Cholesky factor, adding a growing diagonal shift if ``M`` is numerically singular."""
    try:
        return sla.cho_factor(M, lower=True)
    except (np.linalg.LinAlgError, sla.LinAlgError):
        pass
    scale = max(float(np.max(np.abs(np.diag(M)), initial=0.0)), 1e-300)
    for k in range(14, 5, -2):
        try:
            return sla.cho_factor(M + (scale * 10.0**-k) * np.eye(len(M)), lower=True)
        except (np.linalg.LinAlgError, sla.LinAlgError):
            continue
    raise np.linalg.LinAlgError("Schur complement not positive definite")


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.swapaxes(-1, -2))


def _solve_lmi(C: list[np.ndarray], Ab: list[np.ndarray], b: np.ndarray, tol: float, max_iter: int):
    """Standard-form pair: min <C,X> s.t. A(X)=b, X>=0 / max b^T y s.t. C - A^T y = S >= 0."""
    m = len(b)
    ntot = sum(len(c) for c in C)
    normC = np.sqrt(sum(np.sum(c * c) for c in C))
    normb = np.linalg.norm(b)
    Aflat = [a.reshape(m, -1) for a in Ab]

    def Aop(X):
        return sum(af @ x.ravel() for af, x in zip(Aflat, X))

    def ATop(y):
        return [np.tensordot(y, a, axes=(0, 0)) for a in Ab]

    # SDPT3-style scaled identity start
    X, S = [], []
    for c, a in zip(C, Ab):
        nb = len(c)
        na = np.linalg.norm(a.reshape(m, -1), axis=1)
        xi = max(10.0, np.sqrt(nb), np.max(np.sqrt(nb) * (1 + np.abs(b)) / (1 + na), initial=0.0))
        eta = max(10.0, np.sqrt(nb), np.linalg.norm(c), np.max(na, initial=0.0))
        X.append(xi * np.eye(nb))
        S.append(eta * np.eye(nb))
    y = np.zeros(m)
    info = {"status": "numerical-failure", "iterations": 0, "pres": np.inf, "dres": np.inf, "gap": np.inf,
            "message": "iteration limit reached"}
    best = None

    for it in range(max_iter + 1):
        ATy = ATop(y)
        Rp = b - Aop(X)
        Rd = [c - s - aty for c, s, aty in zip(C, S, ATy)]
        pobj = sum(np.sum(c * x) for c, x in zip(C, X))
        dobj = float(b @ y)
        mu = sum(np.sum(x * s) for x, s in zip(X, S)) / ntot
        pres = np.linalg.norm(Rp) / (1 + normb)
        dres = np.sqrt(sum(np.sum(r * r) for r in Rd)) / (1 + normC)
        gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        info.update(iterations=it, pres=pres, dres=dres, gap=gap)
        score = max(pres, dres, gap)
        if best is None or score < best[0]:
            best = (score, [x.copy() for x in X], y.copy(), [s.copy() for s in S], pres, dres, gap)
        if pres < tol and dres < tol and gap < tol:
            info.update(status="optimal", message="converged")
            return y, X, S, info
        # primal improving ray: A(X) ~ 0, <C,X> < 0 certifies the LMI is empty
        if pobj < 0:
            ax = np.linalg.norm(Aop(X))
            xn = np.sqrt(sum(np.sum(x * x) for x in X))
            if ax / abs(pobj) < tol and abs(pobj) / (1 + xn) > tol:
                info.update(status="infeasible", message="primal improving ray found")
                return y, X, S, info
        if dobj > (1 + normC) / tol and dres < tol:
            info.update(status="unbounded", message="objective unbounded above")
            return y, X, S, info
        if it == max_iter:
            break

        try:
            Sinv = []
            for s in S:
                Ls = np.linalg.cholesky(s)
                Li = sla.solve_triangular(Ls, np.eye(len(s)), lower=True)
                Sinv.append(Li.T @ Li)
            Msch = np.zeros((m, m))
            for a, af, x, si in zip(Ab, Aflat, X, Sinv):
                T = np.matmul(np.matmul(x, a), si)  # X A_j S^-1
                Msch += af @ T.reshape(m, -1).T
            Msch = 0.5 * (Msch + Msch.T)
            Lm = _cholesky_regularized(Msch)
        except (np.linalg.LinAlgError, sla.LinAlgError):
            info.update(message=f"Schur complement not positive definite at iteration {it}")
            break

        def direction(Rc):
            rhs = Rp - Aop([rc - x @ rd @ si for rc, x, rd, si in zip(Rc, X, Rd, Sinv)])
            dy = sla.cho_solve(Lm, rhs)
            ATdy = ATop(dy)
            dS = [rd - atd for rd, atd in zip(Rd, ATdy)]
            dX = [_sym(rc - x @ ds @ si) for rc, x, ds, si in zip(Rc, X, dS, Sinv)]
            return dX, dy, dS

        def steps(dX, dS):
            ap = min([_steplen(x, d) for x, d in zip(X, dX)] + [np.inf])
            ad = min([_steplen(s, d) for s, d in zip(S, dS)] + [np.inf])
            return ap, ad

        dXa, dya, dSa = direction([-x for x in X])
        ap, ad = steps(dXa, dSa)
        ap, ad = min(1.0, ap), min(1.0, ad)
        mu_aff = sum(np.sum((x + ap * dx) * (s + ad * ds)) for x, dx, s, ds in zip(X, dXa, S, dSa)) / ntot
        sigma = min(1.0, (max(mu_aff, 0.0) / mu) ** 3)
        Rc = [sigma * mu * si - x - dx @ ds @ si for si, x, dx, ds in zip(Sinv, X, dXa, dSa)]
        dX, dy, dS = direction(Rc)
        ap, ad = steps(dX, dS)
        ap, ad = min(1.0, 0.95 * ap), min(1.0, 0.95 * ad)
        if ap < 1e-12 and ad < 1e-12:
            info.update(message=f"step length collapsed at iteration {it}")
            break
        X = [x + ap * d for x, d in zip(X, dX)]
        S = [s + ad * d for s, d in zip(S, dS)]
        y = y + ad * dy

    _, X, y, S, pres, dres, gap = best
    info.update(pres=pres, dres=dres, gap=gap)
    return y, X, S, info


def solve(p: SdpProblem, tol: float = 1e-8, max_iter: int = 200) -> SdpSolution:
    """Maximize the objective variable of ``p`` subject to its equalities and PSD blocks.

    Returned blocks are evaluated from the elimination parametrization, so the
    equalities hold to round-off even when the iteration stops early. Status
    is one of ``optimal``, ``infeasible``, ``unbounded``, ``numerical-failure``.
    """
    nan_v = np.full(p.nvar, np.nan)
    try:
        red, _ = _reduce(p)
    except _Infeasible as exc:
        return make_solution(p, "infeasible", np.nan_to_num(nan_v), message=str(exc))
    except _Unbounded as exc:
        return make_solution(p, "unbounded", np.nan_to_num(nan_v), message=str(exc))

    m = red.G.shape[1]
    if m == 0 or not red.F:
        return make_solution(p, "optimal", red.v0, pres=0.0, dres=0.0, gap=0.0,
                             message="fixed by equalities")
    C = red.F0
    Ab = [-f for f in red.F]
    y, X, S, info = _solve_lmi(C, Ab, red.c, tol, max_iter)
    v = red.v0 + red.G @ y
    return make_solution(p, info["status"], v, pres=info["pres"], dres=info["dres"], gap=info["gap"],
                         iterations=info["iterations"], message=info["message"])
