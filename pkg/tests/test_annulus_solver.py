import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from einorb.annulus_solver import (
    AnnulusProblem, decouple, dirichlet_extend, fd_dirichlet_extend, fd_laplacian,
    relative_l2_error, solve_modes, verify_decoupling_estimates,
)
from einorb.cone_geometry import Z2, make_group
from einorb.sphere_harmonics import ModeCoefficients, UPPER, invariant_harmonic_basis, reconstruct


def unit(P):
    return P / np.linalg.norm(P, axis=1)[:, None]


def random_modes(rng, G, k_max, scale=1.0):
    Gc = make_group("cyclic-SU2", n=2) if G.order > 1 else G
    vals = {}
    for k in range(k_max + 1):
        m = len(invariant_harmonic_basis(Gc, k))
        for i in range(m):
            for (a, b) in UPPER:
                vals[("h%d%d" % (a, b), k, i)] = float(rng.normal()) * scale / (1 + k)
    return ModeCoefficients(vals, k_max)


def band_limited(rng, G, k_max):
    mc = random_modes(rng, G, k_max)
    return lambda P: reconstruct(mc, G, unit(P))


def harmonic_field(rng, G, k_max):
    """sum_k (r^k A_k + r^(-2-k) B_k) Y_k, an exactly harmonic band-limited field."""
    A, B = random_modes(rng, G, k_max), random_modes(rng, G, k_max)

    def f(P):
        P = np.atleast_2d(P)
        r = np.linalg.norm(P, axis=1)
        U = unit(P)
        out = np.zeros((len(P), 4, 4))
        for k in range(k_max + 1):
            sub = lambda mc: ModeCoefficients({key: v for key, v in mc.values.items() if key[1] == k}, k_max)
            out += r[:, None, None] ** k * reconstruct(sub(A), G, U)
            out += r[:, None, None] ** (-2.0 - k) * reconstruct(sub(B), G, U)
        return out
    return f


def test_constant_data():
    A = np.diag([1.0, -1.0, 2.0, 0.5])
    c = lambda P: np.broadcast_to(A, (len(P), 4, 4))
    ext = dirichlet_extend(AnnulusProblem(0.2, Z2(), c, c, 4))
    assert np.abs(ext.minus[0]).max() < 1e-13
    P = np.random.default_rng(0).normal(size=(10, 4))
    assert np.abs(ext(P) - A).max() < 1e-12


def test_k0_closed_form():
    e = 0.1
    A, B = np.array([1.3, -0.4]), np.array([0.2, 2.0])
    Hp, Hm = solve_modes(A, B, e, 0)
    assert np.abs(Hp - (B - e ** 4 * A) / (1 - e ** 4)).max() <= 1e-12
    assert np.abs(Hm - (A - B) / (1 - e ** 4)).max() <= 1e-12
    # the two traces are reproduced: (e r)^0 Hp + (r/e)^-2 Hm at r = e, 1/e
    assert np.allclose(Hp + Hm, A, atol=1e-14)
    assert np.allclose(Hp + e ** 4 * Hm, B, atol=1e-14)


def test_bad_eps():
    c = lambda P: np.zeros((len(P), 4, 4))
    for e in (1.0, 1.5, 0.7):
        with pytest.raises(ValueError):
            dirichlet_extend(AnnulusProblem(e, Z2(), c, c, 2))


def test_truncation_warning():
    rng = np.random.default_rng(1)
    f = band_limited(rng, Z2(), 6)
    with pytest.warns(UserWarning, match="truncation"):
        dirichlet_extend(AnnulusProblem(0.2, Z2(), f, f, 2))


@given(st.integers(0, 10 ** 6), st.sampled_from([0.2, 0.1, 0.05]))
def test_harmonic_reproduction(seed, e):
    rng = np.random.default_rng(seed)
    f = harmonic_field(rng, Z2(), 4)
    ext = dirichlet_extend(AnnulusProblem(e, Z2(), f, f, 4))
    r = np.exp(rng.uniform(np.log(e), -np.log(e), 20))
    P = unit(rng.normal(size=(20, 4))) * r[:, None]
    ref = f(P)
    assert np.abs(ext(P) - ref).max() <= 1e-10 * (1 + np.abs(ref).max())


def _dense_fd_mode(a, b, e, k, n):
    """Independent 2nd-order FD in r (uniform grid) for u'' + 3u'/r - k(k+2)u/r^2 = 0."""
    r = np.linspace(e, 1 / e, n)
    h = r[1] - r[0]
    m = n - 2
    A = np.zeros((m, m))
    rhs = np.zeros(m)
    for i in range(m):
        ri = r[i + 1]
        lo, di, up = 1 / h ** 2 - 1.5 / (h * ri), -2 / h ** 2 - k * (k + 2) / ri ** 2, 1 / h ** 2 + 1.5 / (h * ri)
        A[i, i] = di
        if i > 0:
            A[i, i - 1] = lo
        else:
            rhs[i] -= lo * a
        if i < m - 1:
            A[i, i + 1] = up
        else:
            rhs[i] -= up * b
    return r, np.concatenate([[a], np.linalg.solve(A, rhs), [b]])


@pytest.mark.parametrize("k", [0, 1, 2, 4])
def test_mode_profile_vs_independent_fd(k):
    e = 0.2
    a, b = 1.0, -0.7
    Hp, Hm = solve_modes(np.array([a]), np.array([b]), e, k)
    r, u = _dense_fd_mode(a, b, e, k, 4001)
    exact = (e * r) ** k * Hp[0] + (r / e) ** (-2.0 - k) * Hm[0]
    assert np.abs(u - exact).max() < 1e-3


@pytest.mark.parametrize("e", [0.2, 0.1])
def test_fd_oracle_agreement(e):
    rng = np.random.default_rng(7)
    fi, fo = band_limited(rng, Z2(), 4), band_limited(rng, Z2(), 4)
    prob = AnnulusProblem(e, Z2(), fi, fo, 4)
    ext = dirichlet_extend(prob)
    r, Q, S = fd_dirichlet_extend(prob, n_shells=128)
    assert relative_l2_error(ext, r, Q, S) <= 1e-3
    # and the FD error is second order: more shells shrink it
    r2, Q2, S2 = fd_dirichlet_extend(prob, n_shells=256)
    assert relative_l2_error(ext, r2, Q2, S2) < 0.35 * relative_l2_error(ext, r, Q, S)


def test_extension_is_harmonic():
    rng = np.random.default_rng(3)
    fi, fo = band_limited(rng, Z2(), 4), band_limited(rng, Z2(), 4)
    ext = dirichlet_extend(AnnulusProblem(0.2, Z2(), fi, fo, 4))
    P = unit(rng.normal(size=(10, 4))) * rng.uniform(0.5, 2, size=(10, 1))
    # the FD Laplacian error is O(step^2); one Richardson step removes it
    lap = (4 * fd_laplacian(ext, P, step=1e-3) - fd_laplacian(ext, P, step=2e-3)) / 3
    assert np.abs(lap).max() <= 1e-6


def test_maximum_principle_trace():
    rng = np.random.default_rng(5)
    for _ in range(50):
        fi, fo = band_limited(rng, Z2(), 2), band_limited(rng, Z2(), 2)
        e = float(rng.choice([0.2, 0.3]))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ext = dirichlet_extend(AnnulusProblem(e, Z2(), fi, fo, 2))
        U = unit(rng.normal(size=(400, 4)))
        bd = max(np.abs(np.trace(fi(e * U), axis1=1, axis2=2)).max(),
                 np.abs(np.trace(fo(U / e), axis1=1, axis2=2)).max())
        rr = np.exp(rng.uniform(np.log(e), -np.log(e), 400))
        inner = np.abs(np.trace(ext(U * rr[:, None]), axis1=1, axis2=2)).max()
        assert inner <= bd * (1 + 1e-2)


def test_decouple_constant():
    C = np.diag([1.0, 2.0, -3.0, 0.5])
    h = lambda P: np.broadcast_to(C, (len(np.atleast_2d(P)), 4, 4))
    d = decouple(h, 0.5, 0.2, Z2(), k_max=2)
    assert np.abs(d.H0 - C).max() < 1e-12
    P = np.random.default_rng(0).normal(size=(6, 4))
    assert np.abs(d.H_star(P)).max() < 1e-12
    assert d.norms["remainder_sup"] < 1e-12


def test_decouple_inverse_square():
    C = np.diag([1.0, 2.0, -3.0, 0.5])
    D = np.zeros((4, 4))
    D[0, 1] = D[1, 0] = 0.7
    D[2, 2] = -1.0

    def h(P):
        P = np.atleast_2d(P)
        r2 = np.sum(P * P, axis=1)
        return C[None] + D[None] / r2[:, None, None]
    d = decouple(h, 0.5, 0.1, Z2(), k_max=2)
    assert d.norms["remainder_sup"] <= 1e-8
    assert np.abs(d.H0 - C).max() < 1e-10
    P = np.random.default_rng(0).normal(size=(6, 4))
    r2 = np.sum(P * P, axis=1)
    assert np.abs(d.H_star(P) - D[None] / r2[:, None, None]).max() < 1e-10


def test_decouple_kernel_case():
    # harmonic, boundary-matched and vanishing at the anchor: nothing left over
    rng = np.random.default_rng(2)
    f = harmonic_field(rng, Z2(), 2)
    x0 = np.array([1.0, 0.0, 0.0, 0.0])
    v0 = f(x0[None])[0]
    h = lambda P: f(P) - v0[None]
    d = decouple(h, 0.5, 0.2, Z2(), x0=x0, k_max=2)
    assert np.abs(d.c0).max() < 1e-10
    assert d.norms["remainder_sup"] < 1e-8
    assert np.abs(d.remainder(x0[None])).max() < 1e-10


def test_decouple_boundary_conditions():
    # h - H0 - H_star vanishes at x0 and on S(eps), constant on S(1/eps)
    rng = np.random.default_rng(4)
    g = band_limited(rng, Z2(), 2)
    h = lambda P: g(P) * np.linalg.norm(P, axis=1)[:, None, None] ** 0.3
    e = 0.2
    d = decouple(h, 0.5, e, Z2(), k_max=4)
    U = unit(rng.normal(size=(30, 4)))
    assert np.abs(d.remainder(np.array([[1.0, 0, 0, 0]]))).max() < 1e-9
    # only band-limited up to k_max: the boundary trace is matched up to truncation
    assert np.abs(d.remainder(e * U)).max() < 1e-9
    out = d.remainder(U / e)
    assert np.abs(out - out[0]).max() < 1e-9


def test_decoupling_constants_stable():
    rng = np.random.default_rng(8)
    C = np.diag([1.0, -1.0, 0.5, -0.5])
    fam = []
    for _ in range(3):
        g = band_limited(rng, Z2(), 2)
        fam.append((lambda P, g=g: C[None] + 0.1 * g(P) * np.linalg.norm(P, axis=1)[:, None, None] ** 0.5, None))
    res = verify_decoupling_estimates(fam, 0.5, Z2(), eps_list=(0.2, 0.1, 0.05), k_max=4, n_shells=48)
    c = [res[e]["C_harm"] for e in (0.2, 0.1, 0.05)]
    assert all(np.isfinite(c)) and all(v > 0 for v in c)
    assert max(c) / min(c) <= 3
    p = [res[e]["C_proj"] for e in (0.2, 0.1, 0.05)]
    assert all(np.isfinite(p)) and max(p) / min(p) <= 3


def test_decoupling_kernel_family_guard():
    # P_e h = 0: the second ratio is not formed and the remainder is tiny
    C = np.diag([1.0, -1.0, 0.5, -0.5])
    fam = [(lambda P: np.broadcast_to(C, (len(np.atleast_2d(P)), 4, 4)), lambda P: np.zeros((len(P), 4, 4)))]
    res = verify_decoupling_estimates(fam, 0.5, Z2(), eps_list=(0.2,), k_max=2, n_shells=32)
    assert res[0.2]["C_proj"] == 0.0
    assert res[0.2]["max_remainder"] <= 1e-8
