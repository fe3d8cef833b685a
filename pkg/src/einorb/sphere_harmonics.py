"""Quadrature and Gamma-invariant harmonic analysis on S^3."""
import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import polyalg as pa
from .cone_geometry import GroupAction, harmonic_basis_polys, make_group

VOL_S3 = 2 * math.pi ** 2
QUAD_CAP = 40
K_CAP = 16


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    degree: int


@lru_cache(maxsize=32)
def build_quadrature(degree):
    """Product rule in Hopf coordinates, exact for polynomials of degree <= `degree`.

    x = cos(e) cos(a), y = cos(e) sin(a), z = sin(e) cos(b), t = sin(e) sin(b),
    and with u = sin(e)^2 the volume form is du da db / 2.  Angles use the
    trapezoid rule, u uses Gauss-Legendre.
    """
    if degree > QUAD_CAP:
        raise ValueError("quadrature degree %d above cap %d" % (degree, QUAD_CAP))
    degree = max(int(degree), 0)
    na = degree + 1
    nu = degree // 4 + 1
    a = 2 * np.pi * np.arange(na) / na
    xg, wg = np.polynomial.legendre.leggauss(nu)
    u = 0.5 * (xg + 1)
    wu = 0.5 * wg
    U, A, B = np.meshgrid(u, a, a, indexing="ij")
    W = np.broadcast_to(wu[:, None, None], U.shape) * (2 * np.pi / na) ** 2 * 0.5
    c, s = np.sqrt(1 - U), np.sqrt(U)
    P = np.stack([c * np.cos(A), c * np.sin(A), s * np.cos(B), s * np.sin(B)], axis=-1)
    return QuadratureRule(P.reshape(-1, 4), W.ravel().copy(), degree)


def monomial_integral(e):
    """Closed form of the integral of x^a y^b z^c t^d over S^3."""
    if any(v % 2 for v in e):
        return 0.0
    b = [(v + 1) / 2 for v in e]
    return 2 * math.prod(math.gamma(v) for v in b) / math.gamma(sum(b))


@dataclass
class HarmonicBasis:
    k: int
    coeffs: np.ndarray   # (m, n_raw): combinations of the raw exact harmonics
    raw: list

    def __len__(self):
        return self.coeffs.shape[0]

    def raw_values(self, P):
        mons, C = _raw_matrix(self.k)
        return pa.monomial_matrix(P, mons) @ C

    def __call__(self, P):
        """Values (n_points, m) at points of S^3 (homogeneous extension of degree k)."""
        P = np.atleast_2d(P)
        return self.raw_values(P) @ self.coeffs.T


@lru_cache(maxsize=256)
def _raw_harmonics(k):
    return tuple(harmonic_basis_polys(k))


@lru_cache(maxsize=256)
def _raw_matrix(k):
    return pa.polys_to_matrix(list(_raw_harmonics(k)), k)


def _raw_values(k, P):
    mons, C = _raw_matrix(k)
    return pa.monomial_matrix(P, mons) @ C


def _group_key(G):
    return (G.label, G.order, G.generators)


_BASIS_CACHE = {}


def invariant_harmonic_basis(G, k):
    """L^2(S^3)-orthonormal basis of G-invariant harmonic polynomials of degree k."""
    if k > K_CAP:
        raise ValueError("k above cap %d" % K_CAP)
    key = (_group_key(G), k)
    if key in _BASIS_CACHE:
        return _BASIS_CACHE[key]
    raw = list(_raw_harmonics(k))
    Q = build_quadrature(min(2 * k + 2, QUAD_CAP))
    V = _raw_values(k, Q.nodes)
    mats = G.matrices() if G.order > 1 else [np.eye(4)]
    Vavg = np.zeros_like(V)
    for g in mats:
        Pg = Q.nodes @ np.asarray(g).T
        Vavg += _raw_values(k, Pg)
    Vavg /= len(mats)
    # averaged functions as combinations of raw harmonics
    A, *_ = np.linalg.lstsq(V, Vavg, rcond=None)
    # orthonormalize the range of A in the quadrature inner product
    Wsq = np.sqrt(Q.weights)[:, None]
    M = Wsq * (V @ A)
    Uu, s, Vt = np.linalg.svd(M, full_matrices=False)
    ref = np.linalg.norm(Wsq * V, 2) if V.size else 1.0
    keep = s > 1e-8 * ref
    C = (A @ Vt[keep].T / s[keep]).T
    basis = HarmonicBasis(k, C, raw)
    _BASIS_CACHE[key] = basis
    return basis


def sphere_laplacian_fd(f, P, h=1e-3):
    """Laplace-Beltrami on S^3 by central differences of the degree-0 extension."""
    P = np.atleast_2d(P)

    def F(Y):
        return f(Y / np.linalg.norm(Y, axis=1)[:, None])
    out = -2 * 4 * F(P)
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        out = out + F(P + e) + F(P - e)
    return out / h ** 2


@dataclass
class ModeCoefficients:
    values: dict     # (component, k, index) -> coefficient
    k_max: int
    radius: float = 1.0

    def energy(self):
        return sum(v * v for v in self.values.values())

    def k_profile(self):
        prof = {}
        for (c, k, i), v in self.values.items():
            prof[k] = prof.get(k, 0.0) + v * v
        return prof

    def to_csv(self, path, header=None):
        with open(path, "w", newline="") as fh:
            if header:
                fh.write("# %s\n" % header)
            w = csv.writer(fh)
            w.writerow(["component", "k", "index", "value"])
            for (c, k, i), v in sorted(self.values.items()):
                w.writerow([c, k, i, repr(float(v))])


class InvarianceError(ValueError):
    pass


UPPER = [(i, j) for i in range(4) for j in range(i, 4)]


def _components(vals):
    """Split sampled data into named scalar components (upper triangle for sym2)."""
    vals = np.asarray(vals)
    if vals.ndim == 1:
        return {"s": vals}
    if vals.ndim == 2:
        return {"w%d" % i: vals[:, i] for i in range(vals.shape[1])}
    return {"h%d%d" % (i, j): vals[:, i, j] for (i, j) in UPPER}


def _check_invariance(data, G, tol, radius):
    rng = np.random.default_rng(11)
    P = rng.normal(size=(12, 4))
    P = radius * P / np.linalg.norm(P, axis=1)[:, None]
    base = np.asarray(data(P))
    worst, worst_g = 0.0, None
    for g in G.matrices():
        v = np.asarray(data(P @ g.T))
        if base.ndim == 2:
            v = v @ g
        elif base.ndim == 3:
            v = np.einsum("ia,nij,jb->nab", g, v, g)
        err = float(np.max(np.abs(v - base)))
        if err > worst:
            worst, worst_g = err, g
    if worst > tol * (1 + float(np.max(np.abs(base)))):
        raise InvarianceError("data is not invariant: worst element\n%s\nerror %.3e"
                              % (np.round(worst_g, 6), worst))


def component_group(G):
    """Group used for Cartesian components: the central part of G (elements +-I)."""
    if G.order > 1 and any(np.allclose(np.array(g), -np.eye(4)) for g in G.elements):
        return make_group("cyclic-SU2", n=2)
    return make_group("trivial")


def decompose(data, G, k_max, radius=1.0, quad=None, tol=1e-8, check=True):
    """Spherical-harmonic coefficients of data on the sphere of the given radius.

    `data` is a callable P -> values (scalar, covector or sym2 per point).
    Scalars use the G-invariant basis; tensor components are expanded in the
    harmonics invariant under the central part of G, since a G-invariant
    tensor need not have G-invariant Cartesian components.
    """
    if check:
        _check_invariance(data, G, 1e-8, radius)
    Q = quad or build_quadrature(min(2 * k_max + 8, QUAD_CAP))
    vals = np.asarray(data(radius * Q.nodes))
    comps = _components(vals)
    scalar = vals.ndim == 1
    Gc = G if scalar else component_group(G)
    out = {}
    for k in range(k_max + 1):
        B = invariant_harmonic_basis(Gc, k)
        if len(B) == 0:
            continue
        Y = B(Q.nodes)
        for name, f in comps.items():
            c = (Q.weights * f) @ Y
            for i, v in enumerate(c):
                out[(name, k, i)] = float(v)
    return ModeCoefficients(out, k_max, radius)


def reconstruct(coeffs, G, P, kind="sym2"):
    """Evaluate a band-limited expansion at points of the unit sphere."""
    P = np.atleast_2d(P)
    Gc = G if kind == "scalar" else component_group(G)
    by = {}
    for (name, k, i), v in coeffs.values.items():
        by.setdefault(name, {}).setdefault(k, {})[i] = v
    comps = {}
    for name, ks in by.items():
        acc = np.zeros(len(P))
        for k, d in ks.items():
            Y = invariant_harmonic_basis(Gc, k)(P)
            for i, v in d.items():
                acc += v * Y[:, i]
        comps[name] = acc
    if kind == "scalar":
        return comps.get("s", np.zeros(len(P)))
    if kind == "covector":
        return np.stack([comps.get("w%d" % i, np.zeros(len(P))) for i in range(4)], axis=1)
    out = np.zeros((len(P), 4, 4))
    for (i, j) in UPPER:
        v = comps.get("h%d%d" % (i, j), np.zeros(len(P)))
        out[:, i, j] = v
        out[:, j, i] = v
    return out


def l2_norm_sq(data, radius=1.0, degree=24):
    Q = build_quadrature(degree)
    vals = np.asarray(data(radius * Q.nodes))
    comps = _components(vals)
    return sum(float(Q.weights @ (f * f)) for f in comps.values())
