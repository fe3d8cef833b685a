"""Harmonic extension of 2-tensors on flat annuli A(eps, 1/eps) and the
constant / decaying decoupling of a tensor on such an annulus.

A harmonic 2-tensor on R^4 minus the origin is a sum of r^k H_k and
r^(-2-k) H_k, with H_k of degree k on the unit sphere; the extension is
solved mode by mode from the two boundary traces.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .sphere_harmonics import (UPPER, build_quadrature, component_group, decompose,
                               invariant_harmonic_basis, QUAD_CAP)

EPS_E = 0.5
TAIL_TOL = 1e-8


@dataclass
class AnnulusProblem:
    eps: float
    G: object
    inner: object    # callable, points on S(eps) -> (n, 4, 4)
    outer: object    # callable, points on S(1/eps) -> (n, 4, 4)
    k_max: int = 12

    def validate(self):
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1), got %r" % self.eps)
        if self.eps >= EPS_E:
            raise ValueError("eps = %g is not below the admissibility threshold %g" % (self.eps, EPS_E))


def _flat_modes(mc, Gc, k_max):
    """ModeCoefficients -> {k: array (m_k, 10)} in UPPER component order."""
    out = {}
    for k in range(k_max + 1):
        m = len(invariant_harmonic_basis(Gc, k))
        if m == 0:
            continue
        A = np.zeros((m, len(UPPER)))
        for c, (i, j) in enumerate(UPPER):
            for n in range(m):
                A[n, c] = mc.values.get(("h%d%d" % (i, j), k, n), 0.0)
        out[k] = A
    return out


def _to_sym(flat):
    out = np.zeros(flat.shape[:-1] + (4, 4))
    for c, (i, j) in enumerate(UPPER):
        out[..., i, j] = flat[..., c]
        out[..., j, i] = flat[..., c]
    return out


@dataclass
class HarmonicExtension:
    eps: float
    Gc: object
    plus: dict       # k -> (m_k, 10)
    minus: dict
    tail_residual: float = 0.0     # relative L^2 boundary mismatch
    inner_modes: dict = field(default_factory=dict)
    outer_modes: dict = field(default_factory=dict)

    def mode_table(self):
        rows = []
        for k in sorted(set(self.plus) | set(self.minus)):
            for n in range(self.plus[k].shape[0]):
                for c, (i, j) in enumerate(UPPER):
                    rows.append((k, n, "h%d%d" % (i, j), self.plus[k][n, c], self.minus[k][n, c]))
        return rows

    def __call__(self, P, drop_constant=False):
        P = np.atleast_2d(P)
        r = np.linalg.norm(P, axis=1)
        U = P / r[:, None]
        acc = np.zeros((len(P), len(UPPER)))
        e = self.eps
        for k in self.plus:
            Y = invariant_harmonic_basis(self.Gc, k)(U)
            a = (e * r) ** k
            b = (r / e) ** (-2.0 - k)
            Ap = self.plus[k]
            if drop_constant and k == 0:
                Ap = 0 * Ap
            acc += (Y * a[:, None]) @ Ap + (Y * b[:, None]) @ self.minus[k]
        return _to_sym(acc)


def solve_modes(Hin, Hout, eps, k):
    """Closed-form mode system: returns (H+, H-) from the traces at eps and 1/eps."""
    den = 1.0 - eps ** (4 + 4 * k)
    Hp = (Hout - eps ** (4 + 2 * k) * Hin) / den
    Hm = (Hin - eps ** (2 * k) * Hout) / den
    return Hp, Hm


def dirichlet_extend(problem, quad=None):
    problem.validate()
    G, e, K = problem.G, problem.eps, problem.k_max
    Gc = component_group(G)
    Q = quad or build_quadrature(min(2 * K + 8, QUAD_CAP))
    mi = decompose(problem.inner, G, K, radius=e, quad=Q)
    mo = decompose(problem.outer, G, K, radius=1.0 / e, quad=Q)
    Ai, Ao = _flat_modes(mi, Gc, K), _flat_modes(mo, Gc, K)
    plus, minus = {}, {}
    for k in Ai:
        plus[k], minus[k] = solve_modes(Ai[k], Ao[k], e, k)
    ext = HarmonicExtension(e, Gc, plus, minus, 0.0, Ai, Ao)
    # truncation check on both boundary spheres
    res = 0.0
    for rad, data in ((e, problem.inner), (1.0 / e, problem.outer)):
        P = rad * Q.nodes
        v = np.asarray(data(P))
        d = v - ext(P)
        num = Q.weights @ np.sum(d * d, axis=(1, 2))
        den = Q.weights @ np.sum(v * v, axis=(1, 2))
        res = max(res, float(np.sqrt(num / den)) if den > 0 else float(np.sqrt(num)))
    ext.tail_residual = res
    if res > TAIL_TOL:
        warnings.warn("k_max = %d truncation leaves boundary residual %.3e" % (K, res))
    return ext


# ------------------------------------------------------------------ FD oracle

def fd_mode_profile(Hin, Hout, eps, k, n_shells=128):
    """Second-order FD solve of u'' + 3u'/r - k(k+2)u/r^2 = 0 on [eps, 1/eps].

    Works in s = ln r with v = r u, where the equation is v'' = (k+1)^2 v.
    Returns (r grid, u values (n_shells, ...)).
    """
    s = np.linspace(np.log(eps), -np.log(eps), n_shells)
    h = s[1] - s[0]
    n = n_shells - 2
    kap2 = (k + 1) ** 2
    ab = np.zeros((3, n))
    ab[0, 1:] = 1.0
    ab[1, :] = -2.0 - kap2 * h * h
    ab[2, :-1] = 1.0
    Hin = np.asarray(Hin, dtype=float)
    Hout = np.asarray(Hout, dtype=float)
    va, vb = eps * Hin, Hout / eps
    rhs = np.zeros((n,) + Hin.shape)
    rhs[0] -= va
    rhs[-1] -= vb
    v_in = solve_banded((1, 1), ab, rhs.reshape(n, -1)).reshape(rhs.shape)
    v = np.concatenate([va[None], v_in, vb[None]], axis=0)
    r = np.exp(s)
    return r, v / r.reshape((-1,) + (1,) * Hin.ndim)


def fd_dirichlet_extend(problem, n_shells=128, quad=None):
    """Independent grid solution: FD in the radius, spectral on the sphere.

    Returns (r grid, quadrature rule, field samples of shape (n_shells, n_nodes, 4, 4)).
    """
    problem.validate()
    G, e, K = problem.G, problem.eps, problem.k_max
    Gc = component_group(G)
    Q = quad or build_quadrature(min(2 * K + 8, QUAD_CAP))
    mi = _flat_modes(decompose(problem.inner, G, K, radius=e, quad=Q), Gc, K)
    mo = _flat_modes(decompose(problem.outer, G, K, radius=1 / e, quad=Q), Gc, K)
    acc = None
    r = None
    for k in mi:
        r, u = fd_mode_profile(mi[k], mo[k], e, k, n_shells)    # (n_shells, m_k, 10)
        Y = invariant_harmonic_basis(Gc, k)(Q.nodes)           # (n_nodes, m_k)
        part = np.einsum("nm,smc->snc", Y, u)
        acc = part if acc is None else acc + part
    return r, Q, _to_sym(acc)


def relative_l2_error(ext, r, Q, samples):
    """Relative L^2(annulus) distance between a field and grid samples."""
    s = np.log(r)
    num = np.zeros(len(r))
    den = np.zeros(len(r))
    for n, rad in enumerate(r):
        v = ext(rad * Q.nodes)
        d = v - samples[n]
        num[n] = Q.weights @ np.sum(d * d, axis=(1, 2)) * rad ** 4
        den[n] = Q.weights @ np.sum(samples[n] ** 2, axis=(1, 2)) * rad ** 4
    return float(np.sqrt(np.trapezoid(num, s) / np.trapezoid(den, s)))


# ------------------------------------------------------------------ decoupling

def weight(r, eps, beta):
    """eta(r) = max((eps/r)^beta, (eps r)^beta) on A(eps, 1/eps)."""
    return np.maximum((eps / r) ** beta, (eps * r) ** beta)


def annulus_grid(eps, n_shells=96, lo=None, hi=None, degree=12):
    lo = eps if lo is None else lo
    hi = 1.0 / eps if hi is None else hi
    r = np.exp(np.linspace(np.log(lo), np.log(hi), n_shells))
    Q = build_quadrature(degree)
    P = (r[:, None, None] * Q.nodes[None]).reshape(-1, 4)
    R = np.repeat(r, len(Q.nodes))
    return P, R


def weighted_sup(field_vals, R, eps, beta, rpow=0):
    """(sup |s| R^rpow / eta, plain sup |s|)."""
    nrm = np.linalg.norm(field_vals, axis=(1, 2)) * R ** rpow
    return float(np.max(nrm / weight(R, eps, beta))), float(np.max(np.linalg.norm(field_vals, axis=(1, 2))))


def fd_laplacian(h, P, step=1e-4):
    """Componentwise Euclidean Laplacian of a tensor field by central differences."""
    P = np.atleast_2d(P)
    r = np.linalg.norm(P, axis=1)
    hs = step * np.maximum(r, 1e-12)
    base = np.asarray(h(P))
    out = -8.0 * base
    for i in range(4):
        E = np.zeros_like(P)
        E[:, i] = hs
        out = out + np.asarray(h(P + E)) + np.asarray(h(P - E))
    return out / (hs ** 2).reshape((-1,) + (1,) * (base.ndim - 1))


def P_e(h, P, exact=None):
    """P_e h = 1/2 nabla^* nabla h = -1/2 Laplacian on the flat annulus."""
    if exact is not None:
        return np.asarray(exact(P))
    return -0.5 * fd_laplacian(h, P)


@dataclass
class DecoupledSolution:
    H0: np.ndarray
    H_star: object
    remainder: object
    c0: np.ndarray
    norms: dict


def default_anchor():
    return np.array([1.0, 0.0, 0.0, 0.0])


def decouple(h, beta, eps, G, x0=None, k_max=8, n_shells=96, Ph=None):
    """Split h on A(eps, 1/eps) into a constant H0, a harmonic H_star and a remainder.

    h - H0 - H_star vanishes at x0 and on S(eps) and is constant on S(1/eps).
    """
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    x0 = default_anchor() if x0 is None else np.asarray(x0, dtype=float)
    prob = AnnulusProblem(eps, G, h, h, k_max)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ext = dirichlet_extend(prob)
    c0 = np.asarray(h(x0[None]))[0] - ext(x0[None])[0]
    a = c0 / (1 - eps ** 2)
    H0 = _to_sym(ext.plus[0][0][None])[0] * invariant_harmonic_basis(ext.Gc, 0)(x0[None])[0, 0] + a

    def H_star(P):
        P = np.atleast_2d(P)
        r2 = np.sum(P * P, axis=1)
        return ext(P, drop_constant=True) - (eps ** 2 / (1 - eps ** 2)) * c0[None] / r2[:, None, None]

    def remainder(P):
        return np.asarray(h(P)) - H0[None] - H_star(P)

    P, R = annulus_grid(eps, n_shells)
    Pi, Ri = annulus_grid(eps, n_shells, 2 * eps, 0.5 / eps)
    hv = np.asarray(h(P))
    norms = {}
    norms["H_star_C01"], norms["H_star_sup"] = weighted_sup(H_star(Pi), Ri, eps, 1.0)
    norms["h_minus_H0_C0b"], norms["h_minus_H0_sup"] = weighted_sup(hv - H0[None], R, eps, beta)
    norms["remainder_C0b"], norms["remainder_sup"] = weighted_sup(remainder(Pi), Ri, eps, beta)
    pv = P_e(h, P, Ph)
    norms["Ph_r2C0b"], norms["Ph_sup"] = weighted_sup(pv, R, eps, beta, rpow=2)
    norms["tail_residual"] = ext.tail_residual
    return DecoupledSolution(H0, H_star, remainder, c0, norms)


def verify_decoupling_estimates(family, beta, G, eps_list=(0.2, 0.1, 0.05), k_max=6, n_shells=64):
    """Measured constants of the two annulus estimates over a family of tensors.

    `family` is a list of (h, Ph) with Ph a callable for P_e h or None (FD).
    Returns {eps: {"C_harm": ..., "C_proj": ..., "max_remainder": ...}}.
    """
    out = {}
    for eps in eps_list:
        c1, c2, rem = 0.0, 0.0, 0.0
        for h, Ph in family:
            d = decouple(h, beta, eps, G, k_max=k_max, n_shells=n_shells, Ph=Ph)
            n = d.norms
            if n["h_minus_H0_C0b"] > 0:
                c1 = max(c1, n["H_star_C01"] / n["h_minus_H0_C0b"])
            if n["Ph_r2C0b"] > 1e-12:
                c2 = max(c2, n["remainder_C0b"] / n["Ph_r2C0b"])
            rem = max(rem, n["remainder_sup"])
        out[eps] = {"C_harm": c1, "C_proj": c2, "max_remainder": rem}
    return out
