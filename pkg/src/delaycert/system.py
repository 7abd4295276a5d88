"""Linear time-delay systems and the segment partition of [-h, 0].

A system is ``x'(t) = sum_i A_i x(t - h_i)`` with ``h_0 = 0`` implicit, so
``matrices[0]`` is the undelayed matrix and ``delays`` holds ``h_1 < ... < h_k``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np


class InvalidSystem(ValueError):
    """Raised for malformed system descriptions."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SegmentPartition:
    """Segments ``S_1 = [-h_1, 0]`` and ``S_i = [-h_i, -h_{i-1})`` for ``i >= 2``.

    Segment 0 (Python index) touches zero; the list runs right to left over
    ``[-h, 0]``. A breakpoint ``-h_i`` belongs to the segment on its right.
    """

    delays: tuple[float, ...]

    @property
    def k(self) -> int:
        return len(self.delays)

    @property
    def h(self) -> float:
        return self.delays[-1]

    @property
    def segments(self) -> list[tuple[float, float]]:
        """``(lower, upper)`` endpoints per segment, ``lower = -h_i``."""
        ends = (0.0,) + self.delays
        return [(-ends[i + 1], -ends[i]) for i in range(self.k)]

    @property
    def breakpoints(self) -> list[float]:
        return [-d for d in self.delays[:-1]]

    def locate(self, t: float) -> int:
        """Index of the segment containing ``t`` (right-continuous convention)."""
        if t > 0.0 or t < -self.h:
            raise ValueError(f"t={t} outside [-{self.h}, 0]")
        for i, d in enumerate(self.delays):
            if t >= -d:
                return i
        return self.k - 1  # pragma: no cover  (t == -h handled above)

    def moments(self, max_power: int) -> np.ndarray:
        """``m[i, p] = integral of t**p over segment i`` for ``p <= max_power``."""
        p = np.arange(max_power + 1)
        out = np.empty((self.k, max_power + 1))
        for i, (a, b) in enumerate(self.segments):
            out[i] = (b ** (p + 1) - a ** (p + 1)) / (p + 1)
        return out


@dataclass(frozen=True, eq=False)
class DelaySystem:
    n: int
    delays: tuple[float, ...]
    matrices: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "delays", tuple(float(d) for d in self.delays))
        object.__setattr__(self, "matrices", tuple(_frozen(m) for m in self.matrices))

    @property
    def k(self) -> int:
        return len(self.delays)

    @property
    def h(self) -> float:
        return self.delays[-1]

    @property
    def partition(self) -> SegmentPartition:
        return SegmentPartition(self.delays)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "delays": list(self.delays),
            "A": [m.tolist() for m in self.matrices],
        }

    def fingerprint(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DelaySystem):
            return NotImplemented
        return (
            self.n == other.n
            and self.delays == other.delays
            and all(np.array_equal(a, b) for a, b in zip(self.matrices, other.matrices))
        )

    def __hash__(self) -> int:
        return hash(self.fingerprint())

    def __repr__(self) -> str:
        return f"DelaySystem(n={self.n}, delays={list(self.delays)})"


def validate_system(raw: dict[str, Any] | DelaySystem) -> DelaySystem:
    """Check a raw description (``n``, ``delays``, ``A``) and build a system."""
    if isinstance(raw, DelaySystem):
        raw = raw.to_dict()
    try:
        n = raw["n"]
        delays = list(raw["delays"])
        mats = list(raw["A"])
    except (KeyError, TypeError) as exc:
        raise InvalidSystem(f"system description needs 'n', 'delays' and 'A': {exc}") from None
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 1:
        raise InvalidSystem(f"n must be a positive integer, got {n!r}")
    if len(delays) == 0:
        raise InvalidSystem(
            "no delays given (k=0); for an undelayed system use ordinary Lyapunov analysis"
        )
    try:
        d = np.asarray(delays, dtype=float)
    except (TypeError, ValueError):
        raise InvalidSystem(f"delays must be numbers, got {delays!r}") from None
    if d.ndim != 1 or not np.all(np.isfinite(d)):
        raise InvalidSystem("delays must be a flat list of finite numbers")
    if d[0] <= 0:
        raise InvalidSystem("delays must be positive")
    if np.any(np.diff(d) <= 0):
        raise InvalidSystem(f"delays not strictly increasing: {delays}")
    if len(mats) != len(d) + 1:
        raise InvalidSystem(f"expected {len(d) + 1} matrices A_0..A_k, got {len(mats)}")
    out = []
    for i, m in enumerate(mats):
        try:
            a = np.asarray(m, dtype=float)
        except (TypeError, ValueError):
            raise InvalidSystem(f"A_{i} is not numeric") from None
        if a.ndim == 0 and n == 1:
            a = a.reshape(1, 1)
        elif a.ndim == 1 and n == 1 and a.size == 1:
            a = a.reshape(1, 1)
        if a.shape != (n, n):
            raise InvalidSystem(f"A_{i} has shape {a.shape}, expected ({n}, {n})")
        if not np.all(np.isfinite(a)):
            raise InvalidSystem(f"A_{i} has non-finite entries")
        out.append(a)
    return DelaySystem(int(n), tuple(float(x) for x in d), tuple(out))


def load_system(path: str | Path) -> DelaySystem:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return validate_system(raw)


def partition(sys: DelaySystem) -> SegmentPartition:
    return sys.partition


@dataclass(frozen=True, eq=False)
class SystemTemplate:
    """A system whose delays are fixed fractions ``f_1 < ... < f_k = 1`` of ``h``."""

    n: int
    fractions: tuple[float, ...]
    matrices: tuple[np.ndarray, ...]
    h_range: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        f = tuple(float(x) for x in self.fractions)
        if not f or abs(f[-1] - 1.0) > 1e-15 or f[0] <= 0 or any(b <= a for a, b in zip(f, f[1:])):
            raise InvalidSystem(f"fractions must increase strictly to 1, got {list(f)}")
        object.__setattr__(self, "fractions", f)
        object.__setattr__(self, "matrices", tuple(_frozen(m) for m in self.matrices))
        # validate shapes once through the regular path
        validate_system({"n": self.n, "delays": list(f), "A": [m.tolist() for m in self.matrices]})

    @classmethod
    def from_system(cls, sys: DelaySystem, h_range: tuple[float, float] | None = None) -> SystemTemplate:
        fr = [d / sys.h for d in sys.delays]
        fr[-1] = 1.0
        return cls(sys.n, tuple(fr), sys.matrices, h_range)

    def instantiate(self, h: float) -> DelaySystem:
        if not h > 0:
            raise InvalidSystem(f"h must be positive, got {h}")
        delays = [f * h for f in self.fractions]
        delays[-1] = float(h)
        return DelaySystem(self.n, tuple(delays), self.matrices)


def instantiate(tmpl: SystemTemplate, h: float) -> DelaySystem:
    return tmpl.instantiate(h)


def builtin_examples() -> dict[str, SystemTemplate]:
    """Templates for the three worked systems (scalar, single delay, two delays)."""
    return {
        "scalar": SystemTemplate(1, (1.0,), (np.zeros((1, 1)), -np.ones((1, 1)))),
        "single": SystemTemplate(
            2,
            (1.0,),
            (np.array([[0.0, 1.0], [-2.0, 0.1]]), np.array([[0.0, 0.0], [1.0, 0.0]])),
        ),
        "double": SystemTemplate(
            2,
            (0.5, 1.0),
            (
                np.array([[0.0, 1.0], [-1.0, 0.1]]),
                np.array([[0.0, 0.0], [-1.0, 0.0]]),
                np.array([[0.0, 0.0], [1.0, 0.0]]),
            ),
        ),
    }
