import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from einorb.ale_library import eguchi_hanson_profile, o4_basis, scaling_deformation
from einorb.cone_geometry import (QuadraticJet, Z2, curvature_from_jet, einstein_curvature,
                                  jet_from_curvature, make_group, random_einstein_jet, right_mult)
from einorb.obstruction_engine import (LAMBDA_TOL, bulk_term, det_rplus_test, divergence_free,
                                       gauge_transfer_check, jet_l2_norm, lambda_hat_integrals,
                                       lambda_integrals, left_mult_matrix, normalized_basis,
                                       o1_leading, orientation_scan, space_form_jet,
                                       spaceform_obstruction)
from einorb.sphere_harmonics import InvarianceError

VOL = 2 * math.pi ** 2


def random_quadratic_T(rng):
    T = rng.normal(size=(4, 4, 4, 4))
    T = T + T.transpose(1, 0, 2, 3)
    return T + T.transpose(0, 1, 3, 2)


# ------------------------------------------------------------------ lambda values

def test_zero_and_flat_jets():
    assert np.all(lambda_integrals(QuadraticJet(np.zeros((4, 4, 4, 4))), None, Z2()) == 0)
    flat = jet_from_curvature(einstein_curvature(0.0))
    assert np.abs(lambda_integrals(flat, None, Z2())).max() == 0


@pytest.mark.parametrize("sign", ["spherical", "hyperbolic"])
def test_space_form_against_oracle(sign):
    J = space_form_jet(sign)
    lam = lambda_integrals(J, None, Z2())
    ref = [oracles.lambda_oracle(J, f, 2) for f in o4_basis().fields]
    np.testing.assert_allclose(lam, ref, atol=1e-10)
    # unit O4_1 is the o_1 leading term with b = 1/4: +-8 b |S^3| / 2 = +-|S^3|
    s = 1 if sign == "spherical" else -1
    assert abs(lam[0] - s * VOL) < 1e-10


@pytest.mark.parametrize("b", [0.0, 0.5, 1.0, 3.0])
def test_spaceform_closed_form(b):
    for sign, s in (("hyperbolic", -1), ("spherical", 1)):
        lam = lambda_integrals(space_form_jet(sign), o1_leading(b), Z2())[0]
        ref = oracles.lambda_oracle(space_form_jet(sign), o1_leading(b)[0], 2)
        assert abs(lam - ref) < 1e-9 * (1 + abs(ref))
        assert abs(lam - spaceform_obstruction(b, sign)) < 1e-9 * (1 + abs(lam))
        assert abs(spaceform_obstruction(b, sign) - s * 8 * b * VOL / 2) < 1e-12 * (1 + b)
    if b == 1.0:
        assert abs(abs(spaceform_obstruction(1.0, "hyperbolic", group_order=1)) - 8 * VOL) < 1e-12


def test_spaceform_rejects_negative_b():
    with pytest.raises(ValueError):
        spaceform_obstruction(-1.0)


def test_spaceform_with_computed_eh_b():
    b = scaling_deformation(eguchi_hanson_profile(1.0)).b
    lam = lambda_integrals(space_form_jet("hyperbolic"), o1_leading(b), Z2())[0]
    assert abs(lam - spaceform_obstruction(0.5, "hyperbolic")) < 0.01 * abs(lam)


def test_random_jets_against_oracle():
    rng = np.random.default_rng(11)
    for _ in range(5):
        J = QuadraticJet(random_quadratic_T(rng))
        lam = lambda_integrals(J)
        ref = [oracles.lambda_oracle(J, f) for f in o4_basis().fields]
        np.testing.assert_allclose(lam, ref, atol=1e-8 * (1 + np.abs(ref).max()))


@given(st.integers(0, 10 ** 6), st.floats(-5, 5), st.floats(-5, 5))
@settings(max_examples=20)
def test_linearity(seed, s, t):
    rng = np.random.default_rng(seed)
    A, B = random_quadratic_T(rng), random_quadratic_T(rng)
    la, lb = lambda_integrals(QuadraticJet(A)), lambda_integrals(QuadraticJet(B))
    lab = lambda_integrals(QuadraticJet(s * A + t * B))
    assert np.abs(lab - (s * la + t * lb)).max() < 1e-10 * (1 + np.abs(la).max() + np.abs(lb).max()) * (1 + abs(s) + abs(t))


@pytest.mark.parametrize("s", [2.0, 10.0])
def test_scale(s):
    J, _ = random_einstein_jet(np.random.default_rng(3))
    l1 = lambda_integrals(J, None, Z2())
    ls = lambda_integrals(J.scaled(s), None, Z2())
    assert np.abs(ls - s * l1).max() < 1e-12 * s * (1 + np.abs(l1).max())


def test_right_multiplication_invariance():
    # right multiplication by a unit quaternion preserves the basis
    rng = np.random.default_rng(4)
    J, _ = random_einstein_jet(rng)
    B = normalized_basis()
    ref = lambda_integrals(J, B, Z2())
    for _ in range(4):
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        lam = lambda_integrals(J.pulled_back(right_mult(q)), B, Z2())
        assert np.abs(lam - ref).max() < 1e-10


def test_pulling_back_both_sides():
    rng = np.random.default_rng(5)
    J = QuadraticJet(random_quadratic_T(rng))
    Q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    fs = o4_basis().fields
    moved = [lambda P, f=f: np.einsum("ai,nab,bj->nij", Q, f(P @ Q.T), Q) for f in fs]
    assert np.abs(lambda_integrals(J.pulled_back(Q), moved) - lambda_integrals(J, fs)).max() < 1e-9


def test_left_multiplication_moves_lambda():
    rng = np.random.default_rng(6)
    J, _ = random_einstein_jet(rng)
    B = normalized_basis()
    n0 = np.linalg.norm(lambda_integrals(J, B, Z2()))
    # (1 + i)/sqrt(2) would fix the basis direction; take a generic one
    q = np.array([0.8, 0.1, -0.5, 0.3])
    q /= np.linalg.norm(q)
    n1 = np.linalg.norm(lambda_integrals(J.pulled_back(left_mult_matrix(q)), B, Z2()))
    assert abs(n1 - n0) > 1e-3


def test_non_invariant_jet_raises():
    T = np.zeros((4, 4, 4, 4))
    T[0, 0, 0, 0] = 1.0
    G = make_group("U2-family", d=1, n=3, m=1)
    with pytest.raises(InvarianceError):
        lambda_integrals(QuadraticJet(T), None, G)


# ------------------------------------------------------------------ lambda hat and gauge transfer

def test_gauge_transfer_random_jets():
    rng = np.random.default_rng(8)
    for i in range(20):
        J, _ = random_einstein_jet(rng, rank_deficient=(i % 2 == 0))
        gt = gauge_transfer_check(J, None, Z2())
        assert gt.discrepancy <= 1e-8 * (1 + np.abs(gt.lam).max())
        assert divergence_free(gt.H2hat)


def test_gauge_transfer_div_free_jet_needs_no_gauge():
    # the zero jet needs no gauge; a divergence-free jet is returned unchanged
    J = jet_from_curvature(einstein_curvature(0.0))
    gt = gauge_transfer_check(J)
    assert gt.V_residual == 0
    T = np.zeros((4, 4, 4, 4))
    T[0, 1, 2, 3] = T[1, 0, 2, 3] = T[0, 1, 3, 2] = T[1, 0, 3, 2] = 1.0
    J = QuadraticJet(T)
    assert divergence_free(J)
    gt = gauge_transfer_check(J)
    assert np.abs(gt.H2hat.T - T).max() < 1e-12


def test_lambda_hat_requires_div_free():
    J, _ = random_einstein_jet(np.random.default_rng(9), lam=2.0)
    assert not divergence_free(J)
    with pytest.raises(ValueError, match="divergence-free"):
        lambda_hat_integrals(J)


def test_lambda_hat_boundary_only_for_zero_O():
    J = gauge_transfer_check(random_einstein_jet(np.random.default_rng(10))[0]).H2hat
    a = lambda_hat_integrals(J, None)
    b = lambda_hat_integrals(J, np.zeros((4, 4)))
    assert np.array_equal(a, b)
    assert np.abs(a - lambda_integrals(J)).max() < 1e-10


# ------------------------------------------------------------------ bulk term

def test_bulk_identity_against_closed_form():
    for R0 in (2.0, 3.0):
        v = bulk_term(np.eye(4), R0=R0)
        ref = oracles.eh_bulk_identity(1.0, R0)
        assert abs(v[0] - ref) < 1e-7 * abs(ref)
        assert v[1] == 0 and v[2] == 0


def test_bulk_traceless_vanishes_exactly():
    rng = np.random.default_rng(12)
    A = rng.normal(size=(4, 4))
    A = A + A.T
    A -= np.trace(A) / 4 * np.eye(4)
    assert np.all(bulk_term(A) == 0)


def test_bulk_decay_in_R0():
    v2, v4 = bulk_term(np.eye(4), R0=2.0)[0], bulk_term(np.eye(4), R0=4.0)[0]
    # integrand ~ a^8 r^-9 beyond the cutoff, so the integral scales like R0^-8
    assert abs(math.log2(v2 / v4) - 8) < 0.05


def test_bulk_truncation_converges():
    full = bulk_term(np.eye(4))[0]
    v10, v20 = [bulk_term(np.eye(4), r_max=r)[0] for r in (10.0, 20.0)]
    d10, d20 = full - v10, full - v20
    assert d10 > 0 and d20 > 0
    # integrand ~ a^8 r^-9 at large r, so the tail falls like r_max^-8
    assert 230 < d10 / d20 < 280
    rich = v20 + (v20 - v10) / 255
    assert abs(rich - full) < 1e-9 * full


# ------------------------------------------------------------------ curvature test

def test_det_round_sphere_and_flat():
    dp, dm, d = det_rplus_test(einstein_curvature(3.0))
    assert abs(dp - 1) < 1e-12 and abs(dm - 1) < 1e-12 and abs(d - 1) < 1e-12
    assert det_rplus_test(einstein_curvature(0.0)) == (0.0, 0.0, 0.0)


def test_det_rank_deficient():
    rng = np.random.default_rng(13)
    for _ in range(10):
        _, R = random_einstein_jet(rng, rank_deficient=True)
        assert abs(det_rplus_test(R)[0]) < 1e-12


@given(st.integers(0, 10 ** 6))
@settings(max_examples=25)
def test_det_factorizes_and_traces(seed):
    rng = np.random.default_rng(seed)
    J, R = random_einstein_jet(rng)
    Rj = curvature_from_jet(J)
    dp, dm, d = det_rplus_test(Rj)
    assert abs(d - dp * dm) < 1e-9 * (1 + abs(d))
    assert abs(np.trace(Rj.Rplus) - Rj.scal / 4) < 1e-9
    assert abs(np.trace(Rj.Rminus) - Rj.scal / 4) < 1e-9
    assert np.abs(Rj.matrix() - R.matrix()).max() < 1e-9


# ------------------------------------------------------------------ orientation scan

def test_scan_flat_and_zero():
    rep = orientation_scan(QuadraticJet(np.zeros((4, 4, 4, 4))), None, Z2(), n_grid=200)
    assert rep.verdict == "unobstructed-at-tolerance" and rep.agrees


@pytest.mark.parametrize("sign", ["spherical", "hyperbolic"])
def test_scan_space_forms_obstructed(sign):
    rep = orientation_scan(space_form_jet(sign), None, Z2(), n_grid=500)
    assert rep.verdict == "obstructed"
    assert not rep.predicate and rep.agrees
    # lambda_1 is orientation independent for the round jet
    assert rep.best_max_lambda > 0.1


def test_scan_rank_deficient_unobstructed():
    rng = np.random.default_rng(14)
    J, R = random_einstein_jet(rng, rank_deficient=True)
    rep = orientation_scan(J, None, Z2(), n_grid=2000)
    assert rep.predicate
    assert rep.verdict == "unobstructed-at-tolerance"
    assert rep.best_max_lambda <= LAMBDA_TOL
    assert rep.agrees


@given(st.integers(0, 10 ** 6), st.booleans())
@settings(max_examples=6)
def test_scan_verdict_matches_predicate(seed, deficient):
    J, _ = random_einstein_jet(np.random.default_rng(seed), rank_deficient=deficient)
    rep = orientation_scan(J, None, Z2(), n_grid=500)
    assert rep.agrees
    assert (rep.verdict == "obstructed") == (not deficient)


def test_scan_reflection():
    rng = np.random.default_rng(15)
    J, R = random_einstein_jet(rng)
    # make R- rank deficient instead by reversing orientation
    Jr = J.pulled_back(np.diag([1.0, 1.0, 1.0, -1.0]))
    Jd, _ = random_einstein_jet(rng, rank_deficient=True)
    Jd = Jd.pulled_back(np.diag([1.0, 1.0, 1.0, -1.0]))
    plain = orientation_scan(Jd, None, Z2(), n_grid=500)
    refl = orientation_scan(Jd, None, Z2(), n_grid=500, reflection=True)
    assert plain.verdict == "obstructed"
    assert refl.verdict == "unobstructed-at-tolerance" and refl.agrees
    assert refl.reflected["predicate"]
    assert orientation_scan(Jr, None, Z2(), n_grid=300, reflection=True).verdict == "obstructed"


def test_scan_csv(tmp_path):
    J, _ = random_einstein_jet(np.random.default_rng(16))
    rep = orientation_scan(J, None, Z2(), n_grid=50, keep_grid=True)
    p = tmp_path / "scan.csv"
    rep.to_csv(p, header="seed=16")
    lines = p.read_text().splitlines()
    assert lines[0] == "# seed=16"
    rows = list(csv.reader(lines[1:]))
    assert rows[0] == ["ux", "uy", "uz", "lambda1", "lambda2", "lambda3"]
    assert len(rows) == 51
    assert abs(jet_l2_norm(J)) > 0
