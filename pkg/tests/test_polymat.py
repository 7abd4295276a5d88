import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from delaycert.polymat import (
    GramForm,
    MonomialBasis,
    PartitionMismatch,
    PiecewisePolyMat,
    PolyKernel,
    coeff_residual,
    expand_block,
    gram_expand,
)
from delaycert.system import SegmentPartition

P1 = SegmentPartition((1.0,))
P2 = SegmentPartition((0.5, 1.0))
P3 = SegmentPartition((0.2, 0.7, 1.0))


def rand_poly(rng, part, d, r, c):
    return PiecewisePolyMat(part, rng.normal(size=(part.k, d + 1, r, c)))


def test_eval_and_integrate_scalar():
    p = PiecewisePolyMat.from_segments(P1, [[0.0, 1.0, 1.0]])  # t + t^2
    assert p.eval(-0.5)[0, 0] == pytest.approx(-0.25)
    assert p.integrate()[0, 0] == pytest.approx(-0.5 + 1 / 3)


def test_jump_uses_right_minus_left():
    p = PiecewisePolyMat.from_segments(P2, [[[[1.0]]], [[[3.0]]]])
    assert p.jump(1)[0, 0] == pytest.approx(1.0 - 3.0)
    assert p.eval(-0.5)[0, 0] == 1.0
    with pytest.raises(IndexError):
        p.jump(2)


def test_partition_mismatch():
    with pytest.raises(PartitionMismatch):
        PiecewisePolyMat.zeros(P1, 1, 1) + PiecewisePolyMat.zeros(P2, 1, 1)


def test_product_and_derivative_pointwise():
    rng = np.random.default_rng(3)
    a, b = rand_poly(rng, P3, 2, 2, 3), rand_poly(rng, P3, 3, 3, 2)
    prod = a.matmul(b)
    der = a.derivative()
    eps = 1e-6
    for t in (-0.95, -0.5, -0.1, 0.0):
        np.testing.assert_allclose(prod.eval(t), a.eval(t) @ b.eval(t), atol=1e-10)
        if t < 0:
            fd = (a.eval(t + eps) - a.eval(t - eps)) / (2 * eps)
            np.testing.assert_allclose(der.eval(t), fd, atol=1e-6)


def test_integrate_against_quadrature():
    rng = np.random.default_rng(4)
    p = rand_poly(rng, P3, 4, 1, 1)
    total = sum(quad(lambda t, i=i: p.eval_segment(i, t)[0, 0], a, b)[0] for i, (a, b) in enumerate(P3.segments))
    assert p.integrate()[0, 0] == pytest.approx(total, rel=1e-12)


def test_mul_weights_matches_pointwise():
    rng = np.random.default_rng(5)
    p = rand_poly(rng, P2, 2, 2, 2)
    w = np.array([[1.0, 2.0, -1.0], [0.5, 0.0, 3.0]])
    q = p.mul_weights(w)
    for i, t in ((0, -0.3), (1, -0.8)):
        wt = w[i, 0] + w[i, 1] * t + w[i, 2] * t * t
        np.testing.assert_allclose(q.eval_segment(i, t), wt * p.eval_segment(i, t), atol=1e-12)


def test_json_roundtrip():
    rng = np.random.default_rng(6)
    p = rand_poly(rng, P2, 3, 2, 2)
    q = PiecewisePolyMat.from_json(P2, p.to_json())
    assert coeff_residual(p, q) == 0.0


def test_kernel_double_integral_against_quadrature():
    rng = np.random.default_rng(7)
    K = PolyKernel(P2, rng.normal(size=(2, 2, 3, 3, 2, 2)))
    phi = rand_poly(rng, P2, 2, 2, 1)
    x, w = np.polynomial.legendre.leggauss(10)
    nodes, weights = [], []
    for a, b in P2.segments:
        nodes.extend(0.5 * (b - a) * x + 0.5 * (a + b))
        weights.extend(0.5 * (b - a) * w)
    total = 0.0
    for s, ws in zip(nodes, weights):
        for t, wt in zip(nodes, weights):
            total += ws * wt * float(phi.eval(s)[:, 0] @ K.eval(s, t) @ phi.eval(t)[:, 0])
    assert K.double_integral(phi) == pytest.approx(total, rel=1e-10)


def test_kernel_partial_derivatives():
    rng = np.random.default_rng(8)
    K = PolyKernel(P1, rng.normal(size=(1, 1, 3, 3, 1, 1)))
    s, t, e = -0.3, -0.7, 1e-6
    fd_s = (K.eval(s + e, t) - K.eval(s - e, t)) / (2 * e)
    fd_t = (K.eval(s, t + e) - K.eval(s, t - e)) / (2 * e)
    np.testing.assert_allclose(K.d_ds().eval(s, t), fd_s, atol=1e-6)
    np.testing.assert_allclose(K.d_dt().eval(s, t), fd_t, atol=1e-6)


def test_gram_expansion_examples():
    # z = (1, t), Q = [[1, 0], [0, 1]] expands to 1 + t^2
    c = expand_block(np.eye(2), 1, 1)[:, 0, 0]
    np.testing.assert_allclose(c, [1.0, 0.0, 1.0])
    # the kernel s*t comes from Q = diag(0, 1)
    basis = MonomialBasis(1, 1, P1)
    K = gram_expand(GramForm(basis, Q=np.diag([0.0, 1.0])), "kernel")
    assert K.eval(-0.5, -0.25)[0, 0] == pytest.approx(0.125)
    with pytest.raises(ValueError):
        gram_expand(GramForm(basis, Q=np.eye(2)), "one-variable")


def test_gram_expansion_matches_basis():
    rng = np.random.default_rng(9)
    basis = MonomialBasis(2, 2, P2)
    blocks = []
    for _ in range(2):
        L = rng.normal(size=(basis.block_size, basis.block_size))
        blocks.append(L @ L.T)
    G = GramForm(basis, blocks=blocks)
    P = G.expand()
    Q = np.zeros((basis.size, basis.size))
    bs = basis.block_size
    for i, B in enumerate(blocks):
        Q[i * bs : (i + 1) * bs, i * bs : (i + 1) * bs] = B
    for t in (-0.9, -0.5, -0.2, 0.0):
        Z = basis.Z(t)
        np.testing.assert_allclose(P.eval(t), Z.T @ Q @ Z, atol=1e-10)
    assert G.min_eigenvalue() >= -1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 3), st.integers(1, 3), st.integers(0, 2 ** 31 - 1))
def test_psd_gram_gives_psd_matrix_pointwise(d, n, seed):
    rng = np.random.default_rng(seed)
    basis = MonomialBasis(n, d, P3)
    blocks = []
    for _ in range(3):
        L = rng.normal(size=(basis.block_size, basis.block_size))
        blocks.append(L @ L.T)
    P = GramForm(basis, blocks=blocks).expand()
    for t in np.linspace(-1.0, 0.0, 13):
        assert np.linalg.eigvalsh(P.eval(t))[0] >= -1e-9 * (1 + np.abs(P.coef).max())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_psd_kernel_gram_gives_nonnegative_form(seed):
    rng = np.random.default_rng(seed)
    basis = MonomialBasis(1, 2, P2)
    L = rng.normal(size=(basis.size, basis.size))
    K = GramForm(basis, Q=L @ L.T).expand()
    phi = rand_poly(rng, P2, 3, 1, 1)
    assert K.double_integral(phi) >= -1e-10
    assert K.is_symmetric(1e-12)
