import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delaycert.ddesim import decay_estimate, simulate
from delaycert.system import validate_system


def scalar(a0, a1, h=1.0):
    return validate_system({"n": 1, "delays": [h], "A": [[a0], [a1]]})


def test_method_of_steps_values():
    # xdot = -x(t-1), x = 1 on [-1, 0]: x = 1 - t on [0, 1], then x(2) = -1/2
    traj = simulate(scalar(0.0, -1.0), 1.0, horizon=2.0, step=0.01)
    assert traj.value(1.0)[0] == pytest.approx(0.0, abs=1e-12)
    assert traj.value(2.0)[0] == pytest.approx(-0.5, abs=1e-12)
    assert traj.value(0.5)[0] == pytest.approx(0.5, abs=1e-12)


def test_ode_limit_is_exponential():
    traj = simulate(scalar(-1.0, 0.0), 1.0, horizon=3.0, step=0.01)
    np.testing.assert_allclose(traj.states[:, 0], np.exp(-traj.times), rtol=1e-9)


def test_fourth_order_convergence():
    sys = scalar(-0.3, -1.0)
    hist = lambda t: np.array([math.cos(3 * t)])
    x = [simulate(sys, hist, horizon=3.0, step=1 / m).value(3.0)[0] for m in (10, 20, 40)]
    ratio = abs(x[0] - x[1]) / abs(x[1] - x[2])
    assert 12 < ratio < 20


def test_history_is_reproduced():
    sys = validate_system({"n": 2, "delays": [0.4, 1.0], "A": [np.eye(2).tolist()] * 3})
    hist = lambda t: np.array([math.sin(t), t * t])
    traj = simulate(sys, hist, horizon=1.0, step=0.05)
    for t in (-1.0, -0.4, -0.05, 0.0):
        np.testing.assert_array_equal(traj.value(t), hist(t))


def test_step_larger_than_smallest_delay_rejected():
    sys = validate_system({"n": 1, "delays": [0.1, 1.0], "A": [0, 0, 0]})
    with pytest.raises(ValueError, match="smallest delay"):
        simulate(sys, 1.0, horizon=1.0, step=0.5)
    with pytest.raises(ValueError):
        simulate(sys, 1.0, horizon=-1.0, step=0.01)


def test_step_snaps_to_delay():
    traj = simulate(scalar(0.0, -1.0, h=1.0), 1.0, horizon=1.0, step=0.3)
    assert traj.step == pytest.approx(0.25)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
def test_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    sys = validate_system({"n": 2, "delays": [0.3, 1.0], "A": rng.normal(size=(3, 2, 2)).tolist()})
    c1, c2 = rng.normal(size=2), rng.normal(size=2)
    p1 = lambda t: c1 * math.cos(t)
    p2 = lambda t: c2 * (1 + t)
    both = lambda t: a * p1(t) + b * p2(t)
    x1, x2, x12 = (simulate(sys, p, horizon=2.0, step=0.02).states for p in (p1, p2, both))
    np.testing.assert_allclose(x12, a * x1 + b * x2, atol=1e-9 * (1 + np.abs(x12).max()))


def test_flow_property():
    sys = validate_system({"n": 1, "delays": [0.5, 1.0], "A": [[-0.2], [-0.7], [0.3]]})
    full = simulate(sys, 1.0, horizon=4.0, step=0.01)
    tau = 2.0
    restart = simulate(sys, lambda s: full.value(tau + s), horizon=2.0, step=0.01)
    for t in (0.5, 1.0, 2.0):
        assert restart.value(t)[0] == pytest.approx(full.value(tau + t)[0], abs=1e-8)


def test_decay_rate_of_scalar_ode():
    traj = simulate(scalar(-1.0, 0.0), 1.0, horizon=20.0, step=0.01)
    est = decay_estimate(traj, h=1.0)
    assert est.sigma == pytest.approx(1.0, rel=1e-3) and not est.growing


def test_delay_margin_of_negative_feedback():
    # xdot = -x(t-h) is stable exactly for h < pi/2
    for h, grows in ((1.4, False), (1.75, True)):
        traj = simulate(scalar(0.0, -1.0, h=h), 1.0, horizon=40 * h, step=h / 200)
        assert decay_estimate(traj, h=h).growing is grows


def test_divergence_is_flagged():
    traj = simulate(scalar(5.0, 0.0), 1.0, horizon=20.0, step=0.01)
    assert traj.diverged and traj.final_time < 20.0
    assert decay_estimate(traj).growing


def test_zero_history_and_short_horizon():
    traj = simulate(scalar(0.0, -1.0), 0.0, horizon=10.0, step=0.1)
    assert decay_estimate(traj).sigma == math.inf
    with pytest.raises(ValueError):
        decay_estimate(simulate(scalar(0.0, -1.0), 1.0, horizon=2.0, step=0.1), h=1.0)


def test_csv_output(tmp_path):
    traj = simulate(validate_system({"n": 2, "delays": [1.0], "A": [[[0, 1], [-1, 0]], [[0, 0], [0, 0]]]}),
                    [1.0, 0.0], horizon=1.0, step=0.25)
    path = tmp_path / "x.csv"
    traj.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x1,x2" and len(lines) == len(traj.times) + 1
    assert float(lines[-1].split(",")[1]) == pytest.approx(math.cos(1.0), abs=1e-4)
