import copy
import json

import numpy as np
import pytest

from delaycert.analysis import analyze
from delaycert.certifier import Certificate, CertificateMismatch, random_history, sample_check, verify
from delaycert.encoder import EncodingOptions
from delaycert.polymat import PiecewisePolyMat
from delaycert.system import builtin_examples


@pytest.fixture(scope="module")
def cert():
    res = analyze(builtin_examples()["single"].instantiate(1.0), EncodingOptions(degree=1))
    assert res.certified
    return res.certificate


def test_fresh_certificate_passes(cert):
    rep = verify(cert)
    assert rep.passed, rep.summary()
    assert "FAIL" not in rep.summary()


def test_json_round_trip(cert, tmp_path):
    path = tmp_path / "c.json"
    cert.save(path)
    back = Certificate.load(path)
    assert back.system == cert.system and back.epsilon == cert.epsilon
    np.testing.assert_array_equal(back.M.coef, cert.M.coef)
    assert verify(back).passed


def test_tampered_system_hash_rejected(cert, tmp_path):
    data = cert.to_json()
    data["system"]["A"][0][0][0] += 1e-3
    with pytest.raises(CertificateMismatch):
        Certificate.from_json(json.loads(json.dumps(data)))


def test_other_system_rejected(cert):
    with pytest.raises(CertificateMismatch):
        verify(cert, builtin_examples()["single"].instantiate(1.1))
    with pytest.raises(CertificateMismatch):
        verify(cert, builtin_examples()["scalar"].instantiate(1.0))


@pytest.mark.parametrize("which", ["sigma_V", "sigma_Vdot", "E", "N"])
def test_gram_corruption_fails(cert, which):
    bad = copy.deepcopy(cert)
    g = bad.gram[which]
    Q = g["Q"] if "Q" in g else g["S0"][0]
    i = Q.shape[0] - 1
    Q[0, i] += 1e-4
    if i:
        Q[i, 0] += 1e-4
    assert not verify(bad).passed


def test_slack_corruption_fails(cert):
    bad = copy.deepcopy(cert)
    bad.T.coef[0, 0] += 1e-3
    rep = verify(bad)
    names = {c.name for c in rep.failures()}
    assert "integral T = 0" in names and "match sigma_V" in names


def test_margin_below_floor_fails(cert):
    weak = copy.deepcopy(cert)
    weak.eps_min = 10 * cert.epsilon
    assert not verify(weak).passed


def test_tolerance_is_monotone(cert):
    bad = copy.deepcopy(cert)
    bad.gram["sigma_V"]["S0"][0][0, 0] += 1e-5
    results = [verify(bad, tol=t).passed for t in (1e-7, 1e-6, 1e-5, 1e-4, 1e-3)]
    assert results == sorted(results)


def test_sample_check_on_valid_certificate(cert):
    assert sample_check(cert, trials=100).passed


def test_sample_check_flags_zero_functional(cert):
    zero = copy.deepcopy(cert)
    zero.M = PiecewisePolyMat(cert.M.partition, np.zeros_like(cert.M.coef))
    zero.gram["N"]["Q"] = np.zeros_like(cert.gram["N"]["Q"])
    rep = sample_check(zero, trials=20)
    assert any(kind == "V" for _, kind, _ in rep.violations)


def test_random_history_properties():
    sysm = builtin_examples()["double"].instantiate(1.0)
    rng = np.random.default_rng(0)
    for _ in range(10):
        phi = random_history(sysm, rng)
        grid = np.linspace(-1.0, 0.0, 201)
        assert max(np.abs(phi.eval(t)).max() for t in grid) == pytest.approx(1.0)
        # continuous across the interior breakpoint
        np.testing.assert_allclose(phi.eval_segment(0, -0.5), phi.eval_segment(1, -0.5), atol=1e-12)
    phi = random_history(sysm, rng, zero_at_origin=True)
    np.testing.assert_allclose(phi.eval(0.0), 0.0, atol=1e-14)


def test_sample_check_agrees_with_verify():
    # 1000 (certificate, history) pairs: verify-accepted certificates never violate sampled bounds
    cases = (("scalar", 1.0), ("single", 0.5), ("single", 1.5), ("double", 0.5), ("double", 1.0))
    for name, h in cases:
        res = analyze(builtin_examples()[name].instantiate(h), EncodingOptions(degree=1))
        assert verify(res.certificate).passed
        assert sample_check(res.certificate, trials=200, seed=1).passed
