import numpy as np
import pytest

from delaycert.analysis import CERTIFIED, NOT_CERTIFIED, analyze
from delaycert.encoder import (
    Affine,
    DegreeError,
    EncodingOptions,
    build_program,
    encode_gamma,
    encode_sigma,
    extract_certificate,
    gram_degrees,
    interval_weights,
)
from delaycert.sdp import ProblemBuilder, solve
from delaycert.system import SegmentPartition, builtin_examples, validate_system

P1 = SegmentPartition((1.0,))


def sigma_status(coef, mode="interval"):
    b = ProblemBuilder()
    encode_sigma(b, P1, Affine.constant(coef), "P", EncodingOptions(mode=mode))
    return solve(b.build()[0]).status


def gamma_solution(coef, degree):
    b = ProblemBuilder()
    spec = encode_gamma(b, P1, Affine.constant(coef), "K", degree)
    p, perm = b.build()
    return solve(p), spec, perm


def test_constant_identity_is_sos():
    for mode in ("interval", "global"):
        assert sigma_status(np.eye(2)[None, None], mode) == "optimal"
        assert sigma_status(-np.eye(2)[None, None], mode) == "infeasible"


def test_interval_weight_is_the_segment_multiplier():
    # on [-1, 0] the weight is -s(s+1)
    np.testing.assert_allclose(interval_weights(P1)[0], [0.0, -1.0, -1.0])
    w = interval_weights(SegmentPartition((0.5, 1.0)))
    s = -0.7
    assert w[1] @ [1, s, s * s] == pytest.approx((s + 1.0) * (-0.5 - s))


def test_only_interval_mode_certifies_a_polynomial_negative_off_the_segment():
    # -t(t+1) + 0.01 is positive on [-1, 0] but not globally
    coef = np.array([0.01, -1.0, -1.0])[None, :, None, None]
    assert sigma_status(coef, "interval") == "optimal"
    assert sigma_status(coef, "global") != "optimal"


def test_scalar_example_structure():
    # degree 1 on one segment: quadratic target, S0 on (1, t), S1 a constant
    b = ProblemBuilder()
    spec = encode_sigma(b, P1, Affine.constant(np.ones((1, 3, 2, 2))), "M", EncodingOptions(degree=1))
    assert (spec.degree, spec.weighted_degree) == (1, 0)
    assert [q.shape for q in spec.s0] == [(4, 4)] and [q.shape for q in spec.s1] == [(2, 2)]


def test_gram_degree_rules():
    assert gram_degrees(4, "interval") == (2, 1)
    assert gram_degrees(4, "global") == (2, None)
    assert gram_degrees(0, "interval") == (0, None)
    with pytest.raises(DegreeError):
        gram_degrees(4, "global", override0=1)


def test_constant_kernel_gram():
    sol, spec, perm = gamma_solution(np.full((1, 1, 1, 1, 1, 1), 9.08), 0)
    assert sol.status == "optimal"
    assert sol.v[perm[spec.q[0, 0]]] == pytest.approx(9.08)


def test_product_kernel_is_rank_one():
    c = np.zeros((1, 1, 2, 2, 1, 1))
    c[0, 0, 1, 1] = 1.0  # s*t
    sol, spec, perm = gamma_solution(c, 1)
    Q = sol.v[perm[spec.q]]
    assert sol.status == "optimal"
    np.testing.assert_allclose(Q, np.diag([0.0, 1.0]), atol=1e-9)


def test_linear_kernel_is_not_positive():
    c = np.zeros((1, 1, 2, 2, 1, 1))
    c[0, 0, 1, 0] = c[0, 0, 0, 1] = 1.0  # s + t
    assert gamma_solution(c, 1)[0].status == "infeasible"
    with pytest.raises(DegreeError):
        gamma_solution(c, 0)


def test_certificate_degrees_follow_basis_degree():
    sysm = builtin_examples()["single"].instantiate(1.0)
    prob, vmap = build_program(sysm, EncodingOptions(degree=2))
    cert = extract_certificate(solve(prob), vmap)
    assert cert.M.degree == 4 and cert.T.degree == 4 and cert.U.degree == 4
    assert cert.M.shape == (4, 4) and cert.U.shape == (4, 4)  # slack on the (k+1)n leading block
    assert sorted(perm for perm in vmap.perm) == list(range(prob.nvar))


def test_scalar_example_is_certified():
    res = analyze(builtin_examples()["scalar"].instantiate(1.0), EncodingOptions(degree=1))
    assert res.status == CERTIFIED and res.epsilon > 1e-6
    assert np.linalg.eigvalsh(res.certificate.M.coef[0, 0, :1, :1])[0] > 0


def test_single_delay_example_at_unit_delay():
    assert analyze(builtin_examples()["single"].instantiate(1.0), EncodingOptions(degree=1)).status == CERTIFIED


@pytest.mark.parametrize("d", [1, 2, 3])
def test_positive_feedback_is_not_certified(d):
    # xdot = x(t-1) has a real characteristic root near 0.567
    sysm = validate_system({"n": 1, "delays": [1.0], "A": [[0.0], [1.0]]})
    res = analyze(sysm, EncodingOptions(degree=d))
    assert res.status == NOT_CERTIFIED and res.epsilon < 1e-6


def test_monotone_in_degree():
    sysm = builtin_examples()["single"].instantiate(1.5)
    eps = [analyze(sysm, EncodingOptions(degree=d)).epsilon for d in (1, 2, 3)]
    assert all(e > 1e-6 for e in eps)


@pytest.mark.parametrize("d", [0, 1, 2])
def test_zero_system_regression(d):
    # all A_i = 0 is marginally stable; the margin comes out at zero
    sysm = validate_system({"n": 1, "delays": [1.0], "A": [[0.0], [0.0]]})
    res = analyze(sysm, EncodingOptions(degree=d))
    assert res.status == NOT_CERTIFIED
    assert abs(res.epsilon) < 1e-6


def test_extract_rejects_infeasible_solution():
    sysm = builtin_examples()["scalar"].instantiate(1.0)
    prob, vmap = build_program(sysm, EncodingOptions(degree=1))
    sol = solve(prob)
    sol.status = "infeasible"
    with pytest.raises(ValueError):
        extract_certificate(sol, vmap)


def test_options_validation():
    with pytest.raises(ValueError):
        EncodingOptions(degree=-1)
    with pytest.raises(ValueError):
        EncodingOptions(mode="bogus")
    with pytest.raises(ValueError):
        EncodingOptions(eps_min=0.0)
