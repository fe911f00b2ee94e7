import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsicert import eigen
from lsicert.coupling import (
    CouplingError,
    CouplingMatrix,
    build_coupling,
    certify_lsi,
    certify_spectral_gap,
    load_coupling,
    lsi_constant,
    mean_field_bound_check,
    spectrum,
)

from .conftest import random_symmetric


def test_mean_field_builder():
    m = build_coupling("mean-field", n_sites=3, strength=0.7)
    assert np.all(np.diag(m.entries) == 0)
    assert np.all(m.entries[~np.eye(3, dtype=bool)] == 0.7)


def test_periodic_lattice_builder():
    m = build_coupling("ferromagnet-lattice", dims=(4,), weight=-1.5).entries
    for x in range(4):
        for y in range(4):
            expected = -1.5 if (y - x) % 4 in (1, 3) else 0.0
            assert m[x, y] == expected


def test_open_lattice_2d_degrees():
    m = build_coupling("ferromagnet-lattice", dims=(3, 3), weight=-1.0, periodic=False).entries
    degrees = (m != 0).sum(axis=1)
    assert sorted(degrees.tolist()) == [2, 2, 2, 2, 3, 3, 3, 3, 4]


def test_sk_builder_deterministic_in_seed():
    a = build_coupling("sk-goe", n_sites=20, beta=0.2, seed=5).entries
    b = build_coupling("sk-goe", n_sites=20, beta=0.2, seed=5).entries
    c = build_coupling("sk-goe", n_sites=20, beta=0.2, seed=6).entries
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert np.array_equal(a, a.T)


def test_file_round_trip(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"n": 2, "rows": [[0, 0.4], [0.4, 0]]}))
    m = load_coupling(p)
    assert m.size == 2 and m.entries[0, 1] == 0.4 and m.kind == "file"


def test_file_rejects_asymmetry(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"n": 2, "rows": [[0, 0.4], [0.4000000001, 0]]}))
    with pytest.raises(CouplingError, match="not symmetric"):
        load_coupling(p)


def test_file_parse_error_has_location(tmp_path):
    p = tmp_path / "m.json"
    p.write_text('{"n": 2,\n "rows": [[0, 1], [1, 0]')
    with pytest.raises(CouplingError, match=r"m.json:\d+:\d+"):
        load_coupling(p)


@pytest.mark.parametrize(
    "kind, params",
    [("mean-field", {"n_sites": 0, "strength": 1.0}), ("ferromagnet-lattice", {"dims": (0,), "weight": 1.0}), ("mean-field", {})],
)
def test_invalid_parameters(kind, params):
    with pytest.raises(CouplingError):
        build_coupling(kind, **params)


def test_non_finite_rejected():
    with pytest.raises(CouplingError):
        CouplingMatrix(np.array([[0.0, np.nan], [np.nan, 0.0]]))


def test_spectrum_two_by_two():
    s = spectrum(np.array([[0.0, 0.3], [0.3, 0.0]]))
    assert s.lambda_min == pytest.approx(-0.3, abs=1e-14)
    assert s.lambda_max == pytest.approx(0.3, abs=1e-14)


def test_spectrum_zero():
    s = spectrum(np.zeros((5, 5)))
    assert s.lambda_min == s.lambda_max == 0.0


def test_spectrum_mean_field():
    a = 0.25
    s = spectrum(build_coupling("mean-field", n_sites=3, strength=a))
    np.testing.assert_allclose(s.eigenvalues, [-a, -a, 2 * a], atol=1e-14)
    brute = eigen.bisection_eigenvalues(np.array([[0, a, a], [a, 0, a], [a, a, 0]]))
    np.testing.assert_allclose(s.eigenvalues, brute, atol=1e-10)


@pytest.mark.parametrize("gamma", [4.0, 1.7])
def test_certify_zero_matrix(gamma):
    cert = certify_lsi(np.zeros((3, 3)), 1, gamma)
    assert cert.certified and cert.certified_constant == 2 / gamma


def test_certify_span_08():
    cert = certify_lsi(np.array([[0, 0.4], [0.4, 0]]), 1, 4.0)
    assert cert.certified
    assert cert.effective_norm == pytest.approx(0.8, abs=1e-14)
    assert cert.certified_constant == pytest.approx(0.5 * 9, rel=1e-12)
    assert cert.shift == pytest.approx(-0.4, abs=1e-14)


def test_certify_fails_with_margin():
    cert = certify_lsi(np.array([[0, 0.6], [0.6, 0]]), 1, 4.0)
    assert cert.status == "failed-spectral-condition"
    assert cert.failure_margin == pytest.approx(0.2, abs=1e-14)
    assert cert.certified_constant is None


def test_certify_input_validation():
    with pytest.raises(ValueError):
        certify_lsi(np.zeros((2, 2)), 1, 0.0)
    with pytest.raises(ValueError):
        certify_lsi(np.zeros((2, 2)), 0, 4.0)


def test_spectral_gap_certificate():
    g = 2.5
    assert certify_spectral_gap(np.zeros((2, 2)), 1, g).certified_lsi_rate == pytest.approx(g)
    c = certify_spectral_gap(np.array([[0, 0.4], [0.4, 0]]), 1, g)
    assert c.kind == "spectral-gap" and c.certified_lsi_rate == pytest.approx(g / 9, rel=1e-12)
    assert not certify_spectral_gap(np.array([[0, 0.5], [0.5, 0]]), 1, g).certified


def test_mean_field_bound_examples():
    r = mean_field_bound_check(build_coupling("mean-field", n_sites=3, strength=0.3), 1)
    assert r.row_sup_norm == pytest.approx(0.6) and r.implies_condition
    m = np.array([[0, 0.6], [0.6, 0]])
    r = mean_field_bound_check(m, 1)
    assert r.implies_condition and not certify_lsi(m, 1, 4.0).certified
    assert mean_field_bound_check(np.zeros((2, 2)), 1).row_sup_norm == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.floats(-50, 50), st.integers(0, 2**32 - 1))
def test_span_invariant_under_shift(n, t, seed):
    a = random_symmetric(np.random.default_rng(seed), n)
    s0 = spectrum(a)
    s1 = spectrum(a + t * np.eye(n))
    assert s1.span == pytest.approx(s0.span, rel=1e-9, abs=1e-9 * (1 + abs(t)))


def test_constant_monotone_and_divergent():
    for n in (1, 2, 3):
        grid = np.linspace(0, n, 200, endpoint=False)
        consts = [lsi_constant(c, n, 4.0) for c in grid]
        assert np.all(np.diff(consts) > 0)
        assert consts[0] == 0.5
        assert lsi_constant(n * (1 - 1e-9), n, 4.0) > 1e8


def test_certificate_boundary_exact():
    for c in (0.5, 0.999, 1.0, 1.001):
        cert = certify_lsi(np.diag([0.0, c]), 1, 4.0)
        assert cert.certified == (cert.effective_norm < 1)


def test_gershgorin_zero_diagonal_psd_is_zero():
    # trace 0 and PSD force M = 0, where both sides vanish
    assert spectrum(np.zeros((3, 3))).lambda_max <= mean_field_bound_check(np.zeros((3, 3)), 1).row_sup_norm


def test_gershgorin_on_psd_with_diagonal(rng):
    for _ in range(30):
        n = int(rng.integers(2, 9))
        x = rng.normal(size=(n, n))
        a = x @ x.T
        assert spectrum(a).lambda_max <= mean_field_bound_check(a, 1).row_sup_norm + 1e-10


def test_certificate_json_schema():
    jsonschema = pytest.importorskip("jsonschema")
    from importlib.resources import files

    schema = json.loads(files("lsicert").joinpath("schemas/certificate.schema.json").read_text())
    for m in (np.array([[0, 0.4], [0.4, 0]]), np.array([[0, 0.6], [0.6, 0]])):
        jsonschema.validate(certify_lsi(m, 1, 4.0).to_dict(), schema)
