import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from einorb.ale_library import O4_FRAME, o4_basis
from einorb.cone_geometry import Z2, make_group
from einorb.sphere_harmonics import (
    InvarianceError, build_quadrature, decompose, invariant_harmonic_basis, l2_norm_sq,
    monomial_integral, reconstruct, sphere_laplacian_fd,
)

VOL = 2 * math.pi ** 2


@pytest.mark.parametrize("deg", [0, 2, 7, 11, 20])
def test_quadrature_weight_sum(deg):
    Q = build_quadrature(deg)
    assert abs(Q.weights.sum() - VOL) < 1e-12
    assert np.all(Q.weights > 0)
    assert np.allclose(np.linalg.norm(Q.nodes, axis=1), 1, atol=1e-14)


def test_quadrature_second_moments():
    Q = build_quadrature(2)
    M = np.einsum("n,ni,nj->ij", Q.weights, Q.nodes, Q.nodes)
    assert np.abs(M - VOL / 4 * np.eye(4)).max() < 1e-12


def test_quadrature_degree_11_monomials():
    Q = build_quadrature(11)
    for d in range(12):
        for e in itertools.product(range(d + 1), repeat=4):
            if sum(e) != d:
                continue
            got = Q.weights @ np.prod(Q.nodes ** np.array(e), axis=1)
            ref = oracles.sphere_monomial_integral(e)
            assert abs(got - ref) < 1e-12, e
            assert abs(monomial_integral(e) - ref) < 1e-13


def test_quadrature_cap():
    with pytest.raises(ValueError):
        build_quadrature(41)


@given(st.integers(0, 16), st.integers(0, 10 ** 6))
def test_quadrature_exact_random_polynomial(deg, seed):
    # random polynomial of degree <= deg against the closed-form oracle
    rng = np.random.default_rng(seed)
    Q = build_quadrature(deg)
    exps = [e for e in itertools.product(range(deg + 1), repeat=4) if sum(e) <= deg]
    pick = [exps[i] for i in rng.choice(len(exps), size=min(6, len(exps)), replace=False)]
    c = rng.normal(size=len(pick))
    got = sum(ci * (Q.weights @ np.prod(Q.nodes ** np.array(e), axis=1)) for ci, e in zip(c, pick))
    ref = sum(ci * oracles.sphere_monomial_integral(e) for ci, e in zip(c, pick))
    assert abs(got - ref) < 1e-11


def test_basis_examples():
    assert len(invariant_harmonic_basis(Z2(), 1)) == 0
    assert len(invariant_harmonic_basis(make_group("trivial"), 2)) == 9
    B0 = invariant_harmonic_basis(Z2(), 0)
    assert len(B0) == 1
    v = B0(np.eye(4))[:, 0]
    assert np.allclose(np.abs(v), 1 / math.sqrt(VOL), atol=1e-13)


def _romberg_laplacian(f, P, h=8e-3):
    L = [sphere_laplacian_fd(f, P, h / 2 ** j) for j in range(3)]
    L1 = [(4 * L[j + 1] - L[j]) / 3 for j in range(2)]
    return (16 * L1[1] - L1[0]) / 15


@pytest.mark.parametrize("label,kw", [("trivial", {}), ("cyclic-SU2", {"n": 3}),
                                      ("binary-dihedral", {"n": 2}), ("U2-family", {"d": 1, "n": 3, "m": 1})])
@pytest.mark.parametrize("k", [0, 1, 2, 3, 4, 6])
def test_basis_orthonormal_invariant_eigen(label, kw, k):
    G = make_group(label, **kw)
    B = invariant_harmonic_basis(G, k)
    if len(B) == 0:
        return
    Q = build_quadrature(2 * k + 2)
    Y = B(Q.nodes)
    assert np.abs(Y.T @ (Q.weights[:, None] * Y) - np.eye(len(B))).max() < 1e-10
    for g in G.matrices():
        assert np.abs(B(Q.nodes @ g.T) - Y).max() < 1e-10
    # Laplace eigenvalue k(k+2) under the Richardson-refined FD Laplacian
    rng = np.random.default_rng(k)
    P = rng.normal(size=(40, 4))
    P /= np.linalg.norm(P, axis=1)[:, None]
    for i in range(len(B)):
        f = lambda X, i=i: B(X)[:, i]
        lap = _romberg_laplacian(f, P)
        res = lap + k * (k + 2) * f(P)
        assert math.sqrt(VOL * np.mean(res ** 2)) <= 1e-8


def test_eigenvalue_fd_refinement():
    # the FD residual is pure discretization error: it drops by 4 when h halves
    G = make_group("trivial")
    B = invariant_harmonic_basis(G, 3)
    P = np.random.default_rng(0).normal(size=(30, 4))
    P /= np.linalg.norm(P, axis=1)[:, None]
    f = lambda X: B(X)[:, 2]
    r1 = np.abs(sphere_laplacian_fd(f, P, 4e-3) + 15 * f(P)).max()
    r2 = np.abs(sphere_laplacian_fd(f, P, 2e-3) + 15 * f(P)).max()
    assert 3.0 < r1 / r2 < 5.0
    # Richardson-extrapolated residual is at the 1e-8 level
    lap = (4 * sphere_laplacian_fd(f, P, 2e-3) - sphere_laplacian_fd(f, P, 4e-3)) / 3
    assert math.sqrt(VOL * np.mean((lap + 15 * f(P)) ** 2)) < 1e-8


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_dimension_counts_cyclic(n):
    G = make_group("cyclic-SU2", n=n)
    dims = [len(invariant_harmonic_basis(G, k)) for k in range(13)]
    # exact count for right multiplication by a cyclic group of order n:
    # harmonics of degree k split as (k+1) copies of the spin-k/2 rep; the
    # e^{i m a} weights m = -k, -k+2, ..., k, invariant iff n | m
    ref = [(k + 1) * sum(1 for m in range(-k, k + 1, 2) if m % n == 0) for k in range(13)]
    assert dims == ref
    tot = sum(dims)
    full = sum((k + 1) ** 2 for k in range(13))
    assert abs(tot / full - 1 / n) < 0.15 / n


def test_decompose_constant_tensor():
    A = np.diag([1.0, 2.0, -0.5, 0.3])
    A[0, 1] = A[1, 0] = 0.7
    mc = decompose(lambda P: np.broadcast_to(A, (len(P), 4, 4)), Z2(), 6)
    for (c, k, i), v in mc.values.items():
        if k > 0:
            assert abs(v) < 1e-12
    assert abs(mc.energy() - l2_norm_sq(lambda P: np.broadcast_to(A, (len(P), 4, 4)))) < 1e-10


def test_decompose_single_harmonic():
    G = make_group("cyclic-SU2", n=3)
    B = invariant_harmonic_basis(G, 3)
    mc = decompose(lambda P: B(P)[:, 1], G, 6)
    for key, v in mc.values.items():
        assert abs(v - (1.0 if key == ("s", 3, 1) else 0.0)) < 1e-12


def test_decompose_non_invariant_rejected():
    with pytest.raises(InvarianceError, match="worst element"):
        decompose(lambda P: P[:, 0], Z2(), 4)


def _o4_quadratic_forms(M):
    """Q_ij with O(x)_ij = x^T Q_ij x on S^3, from the coframe rows L_a x."""
    L = []
    for a in range(4):
        # coframe rows are linear in x on S^3: recover the matrix
        La = np.zeros((4, 4))
        for j in range(4):
            e = np.zeros(4)
            e[j] = 1
            La[:, j] = oracles.quat_coframe(e)[a]
        L.append(La)
    Q = np.einsum("ab,aik,bjl->ijkl", M, np.array(L), np.array(L))
    return 0.5 * (Q + Q.transpose(0, 1, 3, 2))


def test_o4_k_profile():
    M = np.array(O4_FRAME["O1"], dtype=float)
    O1 = o4_basis().fields[0]
    Q = _o4_quadratic_forms(M)
    P = np.random.default_rng(1).normal(size=(5, 4))
    P /= np.linalg.norm(P, axis=1)[:, None]
    assert np.abs(np.einsum("ijkl,nk,nl->nij", Q, P, P) - O1(P)).max() < 1e-12
    e0 = e2 = 0.0
    for i in range(4):
        for j in range(i, 4):
            tr = np.trace(Q[i, j])
            A0 = Q[i, j] - tr / 4 * np.eye(4)
            e0 += (tr / 4) ** 2 * VOL
            e2 += VOL / 12 * np.trace(A0 @ A0)
    prof = decompose(O1, Z2(), 6).k_profile()
    assert abs(prof.get(0, 0) - e0) < 1e-10
    assert abs(prof.get(2, 0) - e2) < 1e-10
    assert all(abs(prof.get(k, 0)) < 1e-20 for k in (1, 3, 4, 5, 6))


@given(st.integers(0, 10 ** 6))
def test_decompose_reconstruct_identity(seed):
    rng = np.random.default_rng(seed)
    G = make_group("cyclic-SU2", n=int(rng.integers(2, 5)))
    k_max = 4
    coeffs = {}
    for k in range(k_max + 1):
        B = invariant_harmonic_basis(G, k)
        for i in range(len(B)):
            coeffs[("s", k, i)] = float(rng.normal())
    from einorb.sphere_harmonics import ModeCoefficients
    mc = ModeCoefficients(coeffs, k_max)
    back = decompose(lambda P: reconstruct(mc, G, P, kind="scalar"), G, k_max)
    for key, v in coeffs.items():
        assert abs(back.values[key] - v) < 1e-10


def test_parseval_tensor():
    # band-limited invariant tensor: O4 basis fields restricted to S^3
    for f in o4_basis().fields:
        mc = decompose(f, Z2(), 4)
        assert abs(mc.energy() - l2_norm_sq(f)) < 1e-10


def test_mode_csv(tmp_path):
    mc = decompose(lambda P: np.ones(len(P)), Z2(), 2)
    p = tmp_path / "m.csv"
    mc.to_csv(p, header="h")
    lines = p.read_text().splitlines()
    assert lines[0] == "# h" and lines[1] == "component,k,index,value"
