import numpy as np

from delaycert.lie import LyapCandidate
from delaycert.polymat import PiecewisePolyMat, PolyKernel
from delaycert.system import validate_system


def random_system(rng, n=2, k=1, h=1.0):
    fr = np.sort(rng.uniform(0.1, 0.9, size=k - 1))
    delays = [float(f * h) for f in fr] + [h]
    mats = [rng.normal(size=(n, n)).tolist() for _ in range(k + 1)]
    return validate_system({"n": n, "delays": delays, "A": mats})


def random_candidate(rng, sys, degree=2, kernel_degree=1):
    n, part = sys.n, sys.partition
    c = rng.normal(size=(part.k, degree + 1, 2 * n, 2 * n))
    c = 0.5 * (c + c.swapaxes(2, 3))
    m11 = rng.normal(size=(n, n))
    c[:, :, :n, :n] = 0.0
    c[:, 0, :n, :n] = m11 + m11.T
    K = rng.normal(size=(part.k, part.k, kernel_degree + 1, kernel_degree + 1, n, n))
    K = 0.5 * (K + K.transpose(1, 0, 3, 2, 5, 4))
    return LyapCandidate(PiecewisePolyMat(part, c), PolyKernel(part, K))


ACCEPTANCE = []


def record(criterion, ok, detail):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE.append(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
