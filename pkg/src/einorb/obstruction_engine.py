"""Obstruction integrals of a quadratic jet against the r^-4 deformation basis,
the curvature test on the self-dual block and the orientation scan."""
import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import least_squares

from . import polyalg as pa
from .ale_library import O4_FRAME, VOL_S3, eguchi_hanson_profile, o4_basis
from .cone_geometry import (CurvatureOperator, QuadraticJet, curvature_from_jet, quat_mul,
                            unit_frame)
from .sphere_harmonics import InvarianceError, build_quadrature

LAMBDA_TOL = 1e-6
QUAD_DEGREE = 8       # integrands are polynomials of degree 4 on S^3


def _basis_callables(basis):
    if basis is None:
        basis = o4_basis()
    if hasattr(basis, "fields"):
        return [f for f in basis.fields]
    return list(basis)


def _check_jet_invariant(jet, G, tol=1e-10):
    if G is None or G.order == 1:
        return
    T = np.asarray(jet.T, dtype=float)
    scale = 1 + np.abs(T).max()
    for g in G.matrices():
        d = np.abs(jet.pulled_back(g).T - T).max()
        if d > tol * scale:
            raise InvarianceError("jet is not invariant under\n%s\n(defect %.3e)" % (np.round(g, 6), d))


def _jet_pieces(T, X):
    """H, B_e H at points X for one or more tensors T (shape (..., 4, 4, 4, 4))."""
    H = np.einsum("...ijkl,nk,nl->...nij", T, X, X)
    div = -(np.einsum("...ijil,nl->...nj", T, X) + np.einsum("...ijli,nl->...nj", T, X))
    dtr = np.einsum("...iijl,nl->...nj", T, X) + np.einsum("...iilj,nl->...nj", T, X)
    return H, div, dtr


class LambdaFunctional:
    """lambda(T) as a precomputed linear map on the 256 entries of T.

    lambda_j = -(1/|G|) int_{S^3} (3 <H, O_j> + O_j(c1 delta H + c2 d tr H, x)) .
    With (c1, c2) = (1, 1/2) this is the Bianchi form B_e = delta + 1/2 d tr.
    """

    def __init__(self, basis=None, group_order=1, degree=QUAD_DEGREE, c_div=1.0, c_tr=0.5):
        self.fields = _basis_callables(basis)
        Q = build_quadrature(degree)
        X, w = Q.nodes, Q.weights
        O = np.stack([f(X) for f in self.fields])          # (m, n, 4, 4)
        v = np.einsum("mnjk,nk->mnj", O, X)                 # O(., x)
        eye = np.eye(256).reshape(256, 4, 4, 4, 4)
        H, div, dtr = _jet_pieces(eye, X)
        BH = c_div * div + c_tr * dtr
        I1 = 3 * np.einsum("bnij,mnij->bmn", H, O)
        I2 = np.einsum("bnj,mnj->bmn", BH, v)
        self.L = -(np.einsum("bmn,n->mb", I1 + I2, w)) / group_order
        self.group_order = group_order

    def __call__(self, T):
        T = np.asarray(T, dtype=float)
        return np.tensordot(T.reshape(T.shape[:-4] + (256,)), self.L, axes=([-1], [1]))


def lambda_integrals(H2, basis=None, G=None, degree=QUAD_DEGREE, check=True):
    if check:
        _check_jet_invariant(H2, G)
    order = 1 if G is None else G.order
    return LambdaFunctional(basis, order, degree)(H2.T)


def jet_l2_norm(H2, degree=QUAD_DEGREE):
    """RMS norm of H2 over the unit sphere."""
    Q = build_quadrature(degree)
    H = H2(Q.nodes)
    return math.sqrt(float(Q.weights @ np.einsum("nij,nij->n", H, H)) / VOL_S3)


def normalized_basis(basis=None, degree=QUAD_DEGREE):
    """Basis rescaled to unit L^2(S^3) norm, ordered by label."""
    fs = _basis_callables(basis)
    Q = build_quadrature(degree)
    out = []
    for f in fs:
        n = math.sqrt(float(Q.weights @ np.einsum("nij,nij->n", f(Q.nodes), f(Q.nodes))))
        out.append(lambda P, f=f, n=n: f(P) / n)
    return out


# ------------------------------------------------------------------ lambda hat

def divergence_free(jet, tol=1e-10):
    T = np.asarray(jet.T, dtype=float)
    # delta H is linear: coefficients -sum_i (T_ijil + T_ijli)
    c = -(np.einsum("ijil->jl", T) + np.einsum("ijli->jl", T))
    return float(np.abs(c).max()) <= tol * (1 + np.abs(T).max())


def _cutoff(r, R0):
    s = np.clip((r - R0) / R0, 0.0, 1.0)
    return s * s * (3 - 2 * s)


def bulk_term(O_o, model=None, a=1.0, R0=None, r_max=np.inf, degree=QUAD_DEGREE):
    """int_N chi <O_o, o_i> dvol on Eguchi-Hanson.

    O_o is a constant 2-tensor in the asymptotic chart x = r * theta, cut off by
    chi (0 for r < R0, 1 for r > 2 R0).  o_i is the L^2 kernel element of the
    model whose leading term is O4_i; in the model's orthonormal frame it has
    the constant matrix O4_FRAME_i times r^-4.
    """
    m = model or eguchi_hanson_profile(a)
    a = m.r_min
    R0 = 2 * a if R0 is None else R0
    O_o = np.asarray(O_o, dtype=float)
    Q = build_quadrature(degree)
    F = unit_frame(Q.nodes)                 # (n, 4, 4): rows are the unit coframe at x
    # sphere integral of O_o(e_a, e_b); independent of r since O_o is constant
    S = np.einsum("n,nai,ij,nbj->ab", Q.weights, F, O_o, F)
    mats = [np.array(O4_FRAME[k], dtype=float) for k in ("O1", "O2", "O3")]
    scale = 1 + np.abs(S).max()

    def dev(r):
        (A, _, _), fs = m.eval(np.array([r]))
        D = np.array([A[0]] + [fs[k][0][0] / r for k in range(3)])
        return 1.0 / np.outer(D, D) - 1.0

    def dens(r, SM):
        # O_o(E_a, E_b) with E_a the unit vectors of the model metric; the flat
        # pairing sum(SM) vanishes for traceless O4 and is dropped
        ang = float(np.sum(SM * dev(r)))
        return _cutoff(r, R0) * ang * m.volume_density(np.array([r]))[0] / r ** 4

    out = []
    for i in range(3):
        SM = S * mats[i]
        if np.abs(SM).max() <= 1e-12 * scale:
            out.append(0.0)      # the pairing vanishes identically on every sphere
            continue
        v, lo, small = 0.0, R0, 0
        # doubling segments; stop once two in a row add below the noise floor
        while lo < r_max and small < 2 and lo < 1e12 * R0:
            hi = min(2 * lo, r_max)
            # the r^-4 parts of the frame deviation cancel against O4 and leave
            # r^-8: about 1e-8 relative rounding noise, hence epsrel 1e-9
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", IntegrationWarning)
                dv = quad(dens, lo, hi, args=(SM,), epsabs=1e-10 * abs(v), epsrel=1e-9, limit=200)[0]
            v += dv
            small = small + 1 if abs(dv) <= 1e-12 * abs(v) else 0
            lo = hi
        out.append(v / m.group_order)
    return np.array(out)


def lambda_hat_integrals(H2hat, O_o=None, basis=None, G=None, model=None, trace_factor=0.5,
                         degree=QUAD_DEGREE, **bulk_kw):
    """Boundary term with the trace-gradient coupling plus the bulk pairing with O_o.

    For a divergence-free jet B_e H = (1/2) d tr H, so trace_factor = 1/2
    reproduces lambda_integrals exactly.
    """
    if not divergence_free(H2hat):
        raise ValueError("lambda_hat needs a divergence-free jet (delta_e H2 != 0)")
    order = 1 if G is None else G.order
    Lf = LambdaFunctional(basis, order, degree, c_div=0.0, c_tr=trace_factor)
    boundary = Lf(H2hat.T)
    if O_o is None or not np.any(O_o):
        return boundary
    return boundary + bulk_term(O_o, model=model, **bulk_kw)


# ------------------------------------------------------------------ gauge transfer

def _cubic_vector_basis():
    mons = pa.monomials(3)
    out = []
    for c in range(4):
        for e in mons:
            w = [pa.RPoly(0) for _ in range(4)]
            w[c] = pa.RPoly(pa.Poly({e: 1}))
            out.append(w)
    return out


_GT_CACHE = {}


def _gauge_system():
    if "A" not in _GT_CACHE:
        lin = pa.monomials(1)
        cols = []
        for w in _cubic_vector_basis():
            dd = pa.delta(pa.sym_grad(w))
            cols.append([float(dd[j].num.c.get(e, 0)) for j in range(4) for e in lin])
        _GT_CACHE["A"] = np.array(cols).T
    return _GT_CACHE["A"]


def _quadratic_T(h):
    """QuadraticJet tensor of a sym2 field with homogeneous quadratic entries."""
    T = np.zeros((4, 4, 4, 4))
    for i in range(4):
        for j in range(4):
            for e, v in h[i][j].num.c.items():
                idx = [k for k in range(4) for _ in range(e[k])]
                k, l = idx
                if k == l:
                    T[i, j, k, l] += float(v)
                else:
                    T[i, j, k, l] += float(v) / 2
                    T[i, j, l, k] += float(v) / 2
    return T


@dataclass
class GaugeTransfer:
    lam: np.ndarray
    lam_hat: np.ndarray
    discrepancy: float
    V_residual: float
    H2hat: QuadraticJet


def gauge_transfer_check(H2, basis=None, G=None, tol=1e-9):
    """Solve delta delta^* V = -delta H2 for a cubic V and compare lambda(H2) with lambda_hat(H2 + delta^* V)."""
    A = _gauge_system()
    lin = pa.monomials(1)
    dH = pa.delta(H2.field())
    rhs = -np.array([float(dH[j].num.c.get(e, 0)) for j in range(4) for e in lin])
    coef, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    res = float(np.abs(A @ coef - rhs).max()) if rhs.size else 0.0
    if res > tol * (1 + np.abs(rhs).max()):
        raise ValueError("no polynomial V solves delta delta^* V = -delta H2 (residual %.3e); "
                         "the jet is outside the Einstein-compatible class" % res)
    mons = pa.monomials(3)
    V = [pa.RPoly(0) for _ in range(4)]
    n = 0
    for c in range(4):
        for e in mons:
            if coef[n] != 0:
                V[c] = V[c] + pa.RPoly(pa.Poly({e: float(coef[n])}))
            n += 1
    Th = np.asarray(H2.T, dtype=float) + _quadratic_T(pa.sym_grad(V))
    Hhat = QuadraticJet(Th, H2.Lambda)
    lam = lambda_integrals(H2, basis, G)
    lam_hat = lambda_hat_integrals(Hhat, None, basis, G)
    return GaugeTransfer(lam, lam_hat, float(np.abs(lam - lam_hat).max()), res, Hhat)


# ------------------------------------------------------------------ curvature test

def det_rplus_test(R):
    M = R.matrix()
    return float(np.linalg.det(R.Rplus)), float(np.linalg.det(R.Rminus)), float(np.linalg.det(M))


# ------------------------------------------------------------------ orientation scan

def fibonacci_sphere(n):
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    phi = math.pi * (1 + 5 ** 0.5) * i
    s = np.sqrt(1 - z * z)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


def left_mult_matrix(q):
    return np.array([quat_mul(q, e) for e in np.eye(4)]).T


def rotation_to(u):
    """Unit quaternion q with q i q^-1 = u, as the matrix of x -> q x."""
    u = np.asarray(u, dtype=float)
    u = u / np.linalg.norm(u)
    e1 = np.array([1.0, 0.0, 0.0])
    axis = np.cross(e1, u)
    s = np.linalg.norm(axis)
    c = float(np.clip(u[0], -1, 1))
    if s < 1e-15:
        axis = np.array([0.0, 0.0, 1.0]) if c < 0 else np.array([1.0, 0.0, 0.0])
        th = 0.0 if c > 0 else math.pi
    else:
        axis = axis / s
        th = math.atan2(s, c)
    q = np.concatenate([[math.cos(th / 2)], math.sin(th / 2) * axis])
    return left_mult_matrix(q)


def _rotate_T(T, Gs):
    """Pull back T by each matrix in Gs: G^T H(Gx) G."""
    out = np.einsum("ijkl,nia->najkl", T, Gs)
    out = np.einsum("najkl,njb->nabkl", out, Gs)
    out = np.einsum("nabkl,nkc->nabcl", out, Gs)
    return np.einsum("nabcl,nld->nabcd", out, Gs)


def _angles(u):
    return np.array([math.acos(np.clip(u[2], -1, 1)), math.atan2(u[1], u[0])])


def _unit(ang):
    th, ph = ang
    return np.array([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])


@dataclass
class ObstructionReport:
    lam: np.ndarray                  # lambda at the reference orientation
    det_Rplus: float
    det_Rminus: float
    orientation: str
    verdict: str                     # "obstructed" | "unobstructed-at-tolerance"
    best_max_lambda: float
    best_direction: np.ndarray
    tolerances: dict
    predicate: bool                  # det R+ = 0 within tolerance (det R- if reflected best)
    agrees: bool
    reflected: dict = field(default_factory=dict)
    grid: np.ndarray = None          # (n, 6): u, lambda

    def to_csv(self, path, header=None):
        with open(path, "w", newline="") as fh:
            if header:
                fh.write("# %s\n" % header)
            w = csv.writer(fh)
            w.writerow(["ux", "uy", "uz", "lambda1", "lambda2", "lambda3"])
            if self.grid is not None:
                for row in self.grid:
                    w.writerow([repr(float(v)) for v in row])


def _scan_one(T, Lf, n_grid, tol):
    U = fibonacci_sphere(n_grid)
    Gs = np.array([rotation_to(u) for u in U])
    vals = Lf(_rotate_T(T, Gs))
    mx = np.abs(vals).max(axis=1)
    k = int(np.argmin(mx))

    def resid(ang):
        return Lf(_rotate_T(T, rotation_to(_unit(ang))[None])[0])

    best_u, best = U[k], float(mx[k])
    starts = np.argsort(mx)[:3]
    for s in starts:
        sol = least_squares(resid, _angles(U[s]), xtol=1e-15, ftol=1e-15, gtol=1e-15)
        val = float(np.abs(resid(sol.x)).max())
        if val < best:
            best, best_u = val, _unit(sol.x)
    return best, best_u, np.hstack([U, vals])


def orientation_scan(H2, basis=None, G=None, n_grid=10000, reflection=False, tol=LAMBDA_TOL,
                     det_tol=LAMBDA_TOL, keep_grid=False):
    """Scan lambda(phi^* H2) over phi in SO(4)/U(2) (a 2-sphere of complex structures).

    H2 is normalized to unit RMS on S^3 and the basis to unit L^2 norm.
    """
    _check_jet_invariant(H2, G)
    nrm = jet_l2_norm(H2)
    order = 1 if G is None else G.order
    Lf = LambdaFunctional(normalized_basis(basis), order)
    R = curvature_from_jet(H2)
    if nrm == 0:
        z = np.zeros(3)
        grid = np.hstack([fibonacci_sphere(n_grid), np.zeros((n_grid, 3))]) if keep_grid else None
        return ObstructionReport(z, 0.0, 0.0, "S2 net", "unobstructed-at-tolerance", 0.0,
                                 np.array([1.0, 0, 0]), {"lambda": tol, "det": det_tol}, True, True,
                                 grid=grid)
    T = np.asarray(H2.T, dtype=float) / nrm
    lam0 = Lf(T)
    best, u, grid = _scan_one(T, Lf, n_grid, tol)
    dp, dm, _ = det_rplus_test(CurvatureOperator(R.Rplus / nrm, R.Rminus / nrm, R.ric0 / nrm))
    verdict_ok = best <= tol
    pred = abs(dp) <= det_tol
    refl = {}
    if reflection:
        S = np.diag([1.0, 1.0, 1.0, -1.0])
        Tr = _rotate_T(T, S[None])[0]
        best_r, u_r, _ = _scan_one(Tr, Lf, n_grid, tol)
        refl = {"best_max_lambda": best_r, "direction": u_r, "predicate": abs(dm) <= det_tol,
                "unobstructed": best_r <= tol}
        verdict_ok = verdict_ok or best_r <= tol
        pred = pred or abs(dm) <= det_tol
    return ObstructionReport(
        lam0, dp, dm, "Fibonacci S2 net (%d) + least-squares polish%s" % (n_grid, ", reflected" if reflection else ""),
        "unobstructed-at-tolerance" if verdict_ok else "obstructed", best, u,
        {"lambda": tol, "det": det_tol}, pred, pred == verdict_ok, refl, grid if keep_grid else None)


# ------------------------------------------------------------------ space forms

def spaceform_obstruction(b, sign="hyperbolic", group_order=2):
    """lambda_1 of the space-form jet against the o_1 leading term 8b/rho^4 dr^2 + ...

    For H2 = -+(rho^4/3) sum alpha_i^2 the integrand reduces to +-O(d_rho, d_rho),
    so the value is -8b |S^3/G| (hyperbolic) or +8b |S^3/G| (spherical).
    """
    if b < 0:
        raise ValueError("b must be nonnegative")
    s = {"hyperbolic": -1.0, "spherical": 1.0}[sign]
    return s * 8 * b * VOL_S3 / group_order


def space_form_jet(sign="spherical"):
    """-+(1/3)(|x|^2 delta - x x^T), the normal-coordinate jet of curvature +-1."""
    T = np.zeros((4, 4, 4, 4))
    for i in range(4):
        for k in range(4):
            T[i, i, k, k] += 1.0
        for j in range(4):
            T[i, j, i, j] += -0.5
            T[i, j, j, i] += -0.5
    s = -1.0 if sign == "spherical" else 1.0
    return QuadraticJet(s * T / 3.0, 3.0 if sign == "spherical" else -3.0)


def o1_leading(b):
    """Leading term of the scaling deformation: 4b O4_1, i.e. 8b/rho^4 on (d_rho, d_rho)."""
    f = o4_basis().fields[0]
    return [lambda P: 4 * b * f(P)]
