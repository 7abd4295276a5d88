"""Fixed-step RK4 integration of linear delay systems and decay-rate estimation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .polymat import PiecewisePolyMat
from .system import DelaySystem

DIVERGENCE_NORM = 1e12


def _as_history(phi, n: int) -> Callable[[float], np.ndarray]:
    if isinstance(phi, PiecewisePolyMat):
        if phi.shape != (n, 1):
            raise ValueError(f"history must be {n}x1, got {phi.shape}")
        return lambda t: phi.eval(t)[:, 0]
    if callable(phi):
        return lambda t: np.asarray(phi(t), dtype=float).reshape(n)
    const = np.asarray(phi, dtype=float).reshape(n)
    return lambda t: const


@dataclass
class Trajectory:
    """Solution on the grid ``times`` (starting at 0) plus the initial history.

    Between grid points the state is a cubic Hermite interpolant built from the
    stored states and right-hand sides, which is C^1 on ``(0, T]``.
    """

    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    step: float
    history: Callable[[float], np.ndarray]
    diverged: bool = False

    @property
    def final_time(self) -> float:
        return float(self.times[-1])

    def value(self, t: float, last: int | None = None) -> np.ndarray:
        """State at ``t``; ``last`` caps the usable grid index during integration."""
        if t <= 0.0:
            return self.history(t)
        top = len(self.times) - 1 if last is None else last
        g = t / self.step
        j = int(math.floor(g))
        if j >= top:
            j = top - 1
            if j < 0:
                return self.states[0].copy()
        th = g - j
        if th == 0.0:
            return self.states[j].copy()
        th2, th3 = th * th, th * th * th
        dt = self.step
        return (
            (2 * th3 - 3 * th2 + 1) * self.states[j]
            + (th3 - 2 * th2 + th) * dt * self.derivs[j]
            + (-2 * th3 + 3 * th2) * self.states[j + 1]
            + (th3 - th2) * dt * self.derivs[j + 1]
        )

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)

    def to_csv(self, path: str | Path) -> None:
        n = self.states.shape[1]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{i + 1}" for i in range(n)])
            for t, x in zip(self.times, self.states):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in x])


def simulate(
    sys: DelaySystem,
    phi,
    horizon: float,
    step: float,
    snap: bool = True,
) -> Trajectory:
    """Integrate ``x' = sum A_i x(t - h_i)`` from history ``phi`` up to ``horizon``.

    With ``snap`` the step is shrunk to ``h / ceil(h / step)`` so the largest
    delay falls on the grid. Delays off the grid are read from the interpolant.
    The step must not exceed the smallest delay, since the scheme is explicit.
    Growth past ``1e12`` in norm stops the run and sets ``diverged``.
    """
    if horizon <= 0 or step <= 0:
        raise ValueError("horizon and step must be positive")
    h1 = sys.delays[0]
    if snap:
        m = max(1, math.ceil(sys.h / step - 1e-9))
        step = sys.h / m
    if step > h1 * (1 + 1e-12):
        raise ValueError(
            f"step {step:g} exceeds the smallest delay {h1:g}; "
            f"use step <= {h1:g}, for example h/{math.ceil(sys.h / h1)}"
        )
    n = sys.n
    A = sys.matrices
    delays = (0.0,) + sys.delays
    hist = _as_history(phi, n)
    nsteps = max(1, math.ceil(horizon / step - 1e-9))
    times = step * np.arange(nsteps + 1)
    X = np.zeros((nsteps + 1, n))
    F = np.zeros((nsteps + 1, n))
    traj = Trajectory(times, X, F, step, hist)
    X[0] = hist(0.0)

    def rhs(t: float, x: np.ndarray, cur: int) -> np.ndarray:
        out = A[0] @ x
        for Ai, d in zip(A[1:], delays[1:]):
            out = out + Ai @ traj.value(t - d, last=cur)
        return out

    F[0] = rhs(0.0, X[0], 0)
    last = nsteps
    for j in range(nsteps):
        t, x = times[j], X[j]
        # delayed lookups never pass t_j because step <= h_1
        k1 = F[j]
        k2 = rhs(t + step / 2, x + step / 2 * k1, j)
        k3 = rhs(t + step / 2, x + step / 2 * k2, j)
        k4 = rhs(t + step, x + step * k3, j)
        X[j + 1] = x + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        F[j + 1] = rhs(times[j + 1], X[j + 1], j)
        if not np.all(np.isfinite(X[j + 1])) or np.linalg.norm(X[j + 1]) > DIVERGENCE_NORM:
            last = j + 1
            traj.diverged = True
            break
    traj.times, traj.states, traj.derivs = times[: last + 1], X[: last + 1], F[: last + 1]
    return traj


@dataclass(frozen=True)
class DecayEstimate:
    sigma: float  # estimated decay rate, ||x(t)|| ~ exp(-sigma t)
    growing: bool


def decay_estimate(traj: Trajectory, h: float | None = None, window: float | None = None) -> DecayEstimate:
    """Fit ``log ||x||`` against ``t`` over the trailing part of the run.

    When the norm oscillates the fit uses its local maxima so the envelope is
    measured rather than the oscillation. ``growing`` means the fitted slope
    is above ``1e-3``. An identically zero run has infinite decay rate.
    """
    T = traj.final_time
    if h is not None and not traj.diverged and T < 5 * h * (1 - 1e-9):
        raise ValueError(f"horizon {T:g} shorter than 5h = {5 * h:g}; decay fit unreliable")
    r = traj.norms()
    t = traj.times
    if traj.diverged:
        finite = np.isfinite(r) & (r > 0)
        if finite.sum() >= 2:
            slope = np.polyfit(t[finite], np.log(r[finite]), 1)[0]
        else:
            slope = math.inf
        return DecayEstimate(-float(slope), True)
    if not np.any(r > 0):
        return DecayEstimate(math.inf, False)
    if window is None:
        window = 0.5 * T
    sel = t >= T - window
    tw, rw = t[sel], r[sel]
    pos = rw > 1e-300
    if pos.sum() < 2:
        return DecayEstimate(math.inf, False)
    peaks = np.flatnonzero((rw[1:-1] >= rw[:-2]) & (rw[1:-1] > rw[2:]) & pos[1:-1]) + 1
    if len(peaks) >= 3:
        tw, rw = tw[peaks], rw[peaks]
    else:
        tw, rw = tw[pos], rw[pos]
    slope = float(np.polyfit(tw, np.log(rw), 1)[0])
    return DecayEstimate(-slope, slope > 1e-3)
