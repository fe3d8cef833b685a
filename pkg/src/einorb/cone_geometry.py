"""Exact algebra on flat cones R^4/Gamma.

Coordinates are (x, y, z, t), identified with the quaternion x + yi + zj + tk.
Groups in SU(2) act by right multiplication, which preserves the self-dual
forms dx^dy + dz^dt, dx^dz - dy^dt, dx^dt + dy^dz and the left-invariant
coframe alpha_1, alpha_2, alpha_3 below.
"""
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import polyalg as pa
from .polyalg import NV, RHO2, X, Poly, RPoly

ORTH_TOL = 1e-12
INV_TOL = 1e-10
DEGREE_CAP = 12


class GroupError(ValueError):
    pass


class StrictnessError(ValueError):
    pass


# --------------------------------------------------------------- groups

def quat_mul(p, q):
    a1, b1, c1, d1 = p
    a2, b2, c2, d2 = q
    return np.array([
        a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
        a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
        a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
        a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
    ])


def right_mult(q):
    """Matrix of p -> p q."""
    E = np.eye(4)
    return np.stack([quat_mul(E[i], q) for i in range(4)], axis=1)


def _complex_diag(a, b):
    """Real 4x4 matrix of (z1, z2) -> (e^{ia} z1, e^{ib} z2), z1 = x+iy, z2 = z+it."""
    G = np.zeros((4, 4))
    G[0, 0] = G[1, 1] = math.cos(a)
    G[1, 0], G[0, 1] = math.sin(a), -math.sin(a)
    G[2, 2] = G[3, 3] = math.cos(b)
    G[3, 2], G[2, 3] = math.sin(b), -math.sin(b)
    return G


def _clean(G):
    G = np.array(G, dtype=float)
    R = np.round(G)
    G[np.abs(G - R) < 1e-14] = R[np.abs(G - R) < 1e-14]
    return G


@dataclass(frozen=True)
class GroupAction:
    generators: tuple
    order: int
    label: str
    elements: tuple = field(repr=False, default=())

    def matrices(self):
        return [np.array(g) for g in self.elements]

    def exact_generators(self):
        """Generators as Fraction matrices when all entries are integers, else floats."""
        out = []
        for g in self.generators:
            A = np.array(g)
            if np.all(A == np.round(A)):
                out.append([[Fraction(int(v)) for v in row] for row in A])
            else:
                out.append([[float(v) for v in row] for row in A])
        return out

    def in_su2(self, tol=1e-10):
        """True iff every generator preserves dz1^dz2 (and the Kaehler form)."""
        return all(preserves_sd_forms(np.array(g), tol) for g in self.generators)


def sd_forms():
    def e(a, b):
        M = np.zeros((4, 4))
        M[a, b], M[b, a] = 1, -1
        return M
    return [e(0, 1) + e(2, 3), e(0, 2) - e(1, 3), e(0, 3) + e(1, 2)]


def preserves_sd_forms(G, tol=1e-10):
    return all(np.abs(G.T @ W @ G - W).max() < tol for W in sd_forms())


def _close(gens, cap=20000):
    elems = [np.eye(4)]
    keys = {tuple(np.round(np.eye(4), 8).ravel())}
    frontier = [np.eye(4)]
    while frontier:
        nxt = []
        for A in frontier:
            for g in gens:
                B = _clean(g @ A)
                k = tuple(np.round(B, 8).ravel() + 0.0)
                if k not in keys:
                    keys.add(k)
                    elems.append(B)
                    nxt.append(B)
        frontier = nxt
        if len(elems) > cap:
            raise GroupError("group closure exceeded %d elements" % cap)
    return elems


def fixed_vector(G, tol=1e-9):
    """Unit vector v with Gv = v, or None."""
    u, s, vt = np.linalg.svd(G - np.eye(4))
    if s[-1] < tol:
        return vt[-1]
    return None


def make_group(label, **params):
    """Build a finite subgroup of O(4) acting freely on S^3.

    labels: trivial, cyclic-SU2 (n), binary-dihedral (n), binary-tetrahedral,
    binary-octahedral, binary-icosahedral, U2-family (d, n, m),
    cyclic-plane (n, a rotation in the xy-plane only) and custom (generators).
    """
    if label == "trivial":
        gens = [np.eye(4)]
        tag = "trivial"
    elif label == "cyclic-SU2":
        n = int(params.get("n", 0))
        if n < 2:
            raise GroupError("cyclic-SU2 needs n >= 2")
        a = 2 * math.pi / n
        gens = [_clean(_complex_diag(a, -a))]
        tag = "cyclic-SU2(%d)" % n
    elif label == "U2-family":
        d, n, m = int(params.get("d", 0)), int(params.get("n", 0)), int(params.get("m", 0))
        if d < 1 or n < 2 or math.gcd(n, m) != 1:
            raise GroupError("U2-family needs d >= 1, n >= 2, gcd(n, m) = 1")
        N = d * n * n
        a = 2 * math.pi / N
        gens = [_clean(_complex_diag(a, a * (d * n * m - 1)))]
        tag = "U2-family(%d,%d,%d)" % (d, n, m)
    elif label == "binary-dihedral":
        n = int(params.get("n", 0))
        if n < 2:
            raise GroupError("binary-dihedral needs n >= 2")
        a = math.pi / n
        gens = [_clean(right_mult([math.cos(a), math.sin(a), 0, 0])), _clean(right_mult([0, 0, 1, 0]))]
        tag = "binary-dihedral(%d)" % n
    elif label == "binary-tetrahedral":
        gens = [_clean(right_mult([.5, .5, .5, .5])), _clean(right_mult([0, 1, 0, 0]))]
        tag = label
    elif label == "binary-octahedral":
        s = 1 / math.sqrt(2)
        gens = [_clean(right_mult([s, s, 0, 0])), _clean(right_mult([.5, .5, .5, .5]))]
        tag = label
    elif label == "binary-icosahedral":
        phi = (1 + math.sqrt(5)) / 2
        gens = [_clean(right_mult([.5, .5, .5, .5])), _clean(right_mult([phi / 2, 0.5 / phi, 0.5, 0]))]
        tag = label
    elif label == "cyclic-plane":
        n = int(params.get("n", 2))
        a = 2 * math.pi / n
        gens = [_clean(_complex_diag(a, 0.0))]
        tag = "cyclic-plane(%d)" % n
    elif label == "custom":
        gens = [np.array(g, dtype=float) for g in params["generators"]]
        tag = params.get("name", "custom")
    else:
        raise GroupError("unknown group label %r" % label)

    for g in gens:
        if np.abs(g.T @ g - np.eye(4)).max() > ORTH_TOL:
            raise GroupError("generator is not orthogonal:\n%s" % g)
    elems = _close(gens)
    for g in elems:
        if np.abs(g - np.eye(4)).max() < 1e-9:
            continue
        v = fixed_vector(g)
        if v is not None:
            raise GroupError("action is not free: element\n%s\nfixes the unit vector %s"
                             % (np.round(g, 6), np.round(v, 6)))
    if label == "trivial":
        gens = []
    return GroupAction(tuple(tuple(map(tuple, g)) for g in gens), len(elems), tag,
                       tuple(tuple(map(tuple, g)) for g in elems))


def Z2():
    return make_group("cyclic-SU2", n=2)


# --------------------------------------------------------------- coframe

def coframe(P):
    """(d rho, alpha_1, alpha_2, alpha_3) at points P, as Cartesian covectors.

    alpha_2 carries the sign (x dz - z dx + t dy - y dt)/rho^2 so that
    {d rho, rho alpha_i} is orthonormal.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    x, y, z, t = P.T
    r2 = x * x + y * y + z * z + t * t
    r = np.sqrt(r2)
    drho = P / r[:, None]
    a1 = np.stack([-y, x, -t, z], axis=1) / r2[:, None]
    a2 = np.stack([-z, t, x, -y], axis=1) / r2[:, None]
    a3 = np.stack([-t, -z, y, x], axis=1) / r2[:, None]
    return np.stack([drho, a1, a2, a3], axis=1)


def unit_frame(P):
    """Orthonormal frame rows (d rho, rho alpha_1, rho alpha_2, rho alpha_3)."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    F = coframe(P)
    r = np.linalg.norm(P, axis=1)
    F[:, 1:] *= r[:, None, None]
    return F


# numerators of rho * alpha_i * rho (degree one polynomials)
ALPHA_NUM = [
    [-X[1], X[0], -X[3], X[2]],
    [-X[2], X[3], X[0], -X[1]],
    [-X[3], -X[2], X[1], X[0]],
]


def _outer(u, v):
    """Symmetric product (u v + v u)/2 of covectors given as lists of Poly."""
    return [[(u[i] * v[j] + u[j] * v[i]) * Fraction(1, 2) for j in range(NV)] for i in range(NV)]


def frame_sym2(coef):
    """Sym2 field sum_ab coef[a][b] e^a e^b in the frame (d rho, rho alpha_i), times rho^0.

    Returns an RPoly field with denominator rho^2; entries of coef are numbers.
    """
    E = [list(X)] + ALPHA_NUM
    h = pa.zero_sym2()
    for a in range(NV):
        for b in range(NV):
            c = coef[a][b]
            if c == 0:
                continue
            o = _outer(E[a], E[b])
            for i in range(NV):
                for j in range(NV):
                    h[i][j] = h[i][j] + RPoly(o[i][j] * c, 1)
    return h


def g_e():
    return pa.sym2([[1 if i == j else 0 for j in range(NV)] for i in range(NV)])


def rho2_g():
    return pa.sym2([[RHO2 if i == j else 0 for j in range(NV)] for i in range(NV)])


def rho2_drho2():
    return pa.sym2([[X[i] * X[j] for j in range(NV)] for i in range(NV)])


def rho4_alpha2():
    """rho^4 (alpha_1^2 + alpha_2^2 + alpha_3^2) = rho^2 g_e - rho^2 d rho^2."""
    return pa.sym2_add(rho2_g(), rho2_drho2(), -1)


# --------------------------------------------------------------- tensor fields

@dataclass
class HomogeneousTensorField:
    degree: int
    kind: str
    rep: object

    def __call__(self, P):
        if self.kind == "scalar":
            return self.rep(P)
        if self.kind == "covector":
            return pa.eval_covec(self.rep, P)
        return pa.eval_sym2(self.rep, P)

    def check_degree(self, rng=None, n=8, tol=1e-9):
        rng = rng or np.random.default_rng(0)
        P = rng.normal(size=(n, 4))
        s = rng.uniform(0.5, 3.0, size=n)
        a = self(P * s[:, None])
        b = self(P)
        shape = (n,) + (1,) * (np.ndim(a) - 1)
        ref = s.reshape(shape) ** self.degree * b
        return float(np.max(np.abs(a - ref))) <= tol * (1 + float(np.max(np.abs(ref))))

    def is_invariant(self, G, rng=None, n=8, tol=INV_TOL):
        rng = rng or np.random.default_rng(1)
        P = rng.normal(size=(n, 4))
        base = self(P)
        for g in G.matrices():
            v = self(P @ g.T)
            if self.kind == "covector":
                v = v @ g
            elif self.kind == "sym2":
                v = np.einsum("ia,nij,jb->nab", g, v, g)
            if np.max(np.abs(v - base)) > tol * (1 + np.max(np.abs(base))):
                return False
        return True


def bianchi_apply(h):
    """B_e h = delta_e h + 1/2 d tr h.  Accepts a raw RPoly matrix or a field."""
    if isinstance(h, HomogeneousTensorField):
        return HomogeneousTensorField(h.degree - 1, "covector", pa.bianchi(h.rep))
    return pa.bianchi(h)


# --------------------------------------------------------------- jets and curvature

def lambda2_basis():
    """Orthonormal basis of 2-forms as antisymmetric matrices, self-dual block first.

    Normalized by <A, B> = 1/2 sum A_ab B_ab.
    """
    def e(a, b):
        M = np.zeros((4, 4))
        M[a, b], M[b, a] = 1, -1
        return M
    s = 1 / math.sqrt(2)
    return np.array([
        s * (e(0, 1) + e(2, 3)), s * (e(0, 2) - e(1, 3)), s * (e(0, 3) + e(1, 2)),
        s * (e(0, 1) - e(2, 3)), s * (e(0, 2) + e(1, 3)), s * (e(0, 3) - e(1, 2)),
    ])


@dataclass
class CurvatureOperator:
    Rplus: np.ndarray
    Rminus: np.ndarray
    ric0: np.ndarray
    orientation: int = 1

    @property
    def scal(self):
        return 2.0 * (np.trace(self.Rplus) + np.trace(self.Rminus))

    def matrix(self):
        return np.block([[self.Rplus, self.ric0], [self.ric0.T, self.Rminus]])

    @staticmethod
    def from_matrix(M, orientation=1):
        M = np.asarray(M, dtype=float)
        return CurvatureOperator(M[:3, :3].copy(), M[3:, 3:].copy(), M[:3, 3:].copy(), orientation)

    def tensor(self):
        """R_abcd with R_abab the sectional curvature of the (a, b) plane."""
        E = lambda2_basis()
        return np.einsum("IJ,Iab,Jcd->abcd", self.matrix(), E, E)

    def reversed(self):
        """Same tensor seen with the opposite orientation (x -> diag(1,1,1,-1) x)."""
        S = np.diag([1.0, 1.0, 1.0, -1.0])
        R = np.einsum("abcd,ai,bj,ck,dl->ijkl", self.tensor(), S, S, S, S)
        out = curvature_from_tensor(R)
        out.orientation = -self.orientation
        return out

    def ricci(self):
        R = self.tensor()
        return np.einsum("abad->bd", R)


def curvature_from_tensor(R):
    E = lambda2_basis()
    M = 0.25 * np.einsum("abcd,Iab,Jcd->IJ", R, E, E)
    return CurvatureOperator.from_matrix(0.5 * (M + M.T))


def einstein_curvature(lam, Wp=None, Wm=None):
    """R+ = (lam/3) I + W+, R- = (lam/3) I + W-, no mixed block.  Ric = lam g."""
    Wp = np.zeros((3, 3)) if Wp is None else np.asarray(Wp, dtype=float)
    Wm = np.zeros((3, 3)) if Wm is None else np.asarray(Wm, dtype=float)
    I = np.eye(3)
    return CurvatureOperator(lam / 3 * I + Wp, lam / 3 * I + Wm, np.zeros((3, 3)))


def random_traceless(rng, scale=1.0):
    A = rng.normal(size=(3, 3)) * scale
    A = 0.5 * (A + A.T)
    return A - np.trace(A) / 3 * np.eye(3)


@dataclass
class QuadraticJet:
    """H2_ij(x) = T[i,j,k,l] x^k x^l."""
    T: np.ndarray
    Lambda: float = 0.0

    def field(self, exact=False):
        h = pa.zero_sym2()
        for i in range(NV):
            for j in range(i, NV):
                c = {}
                for k in range(NV):
                    for l in range(NV):
                        v = self.T[i, j, k, l]
                        if v != 0:
                            e = [0, 0, 0, 0]
                            e[k] += 1
                            e[l] += 1
                            e = tuple(e)
                            v = Fraction(v).limit_denominator(10 ** 6) if exact else float(v)
                            c[e] = c.get(e, 0) + v
                h[i][j] = h[j][i] = RPoly(Poly(c), 0)
        return h

    def __call__(self, P):
        P = np.atleast_2d(P)
        return np.einsum("ijkl,nk,nl->nij", self.T, P, P)

    def scaled(self, s):
        return QuadraticJet(self.T * s, self.Lambda * s)

    def pulled_back(self, G):
        """Jet of G^* g: H'(x) = G^T H(Gx) G."""
        G = np.asarray(G)
        return QuadraticJet(np.einsum("ia,jb,ijkl,kc,ld->abcd", G, G, self.T, G, G), self.Lambda)


def jet_from_curvature(R, Lam=None, strict=True, tol=1e-9):
    """Normal-coordinate quadratic term g_ij = delta_ij - 1/3 R_ikjl x^k x^l."""
    if isinstance(R, CurvatureOperator):
        Rt = R.tensor()
        C = R
    else:
        Rt = np.asarray(R, dtype=float)
        C = curvature_from_tensor(Rt)
    ric = np.einsum("abad->bd", Rt)
    lam = np.trace(ric) / 4 if Lam is None else Lam
    if strict:
        ric0 = ric - lam * np.eye(4)
        err = np.abs(ric0).max()
        if err > tol:
            raise StrictnessError("curvature is not Einstein with constant %g: |Ric0| = %.3e "
                                  "(mixed block norm %.3e)" % (lam, err, np.abs(C.ric0).max()))
    T = -(1.0 / 3.0) * 0.5 * (np.einsum("ikjl->ijkl", Rt) + np.einsum("iljk->ijkl", Rt))
    return QuadraticJet(T, float(lam))


def _jet_map():
    """Linear map from the 21 upper entries of the 6x6 operator to flattened T."""
    E = lambda2_basis()
    cols = []
    idx = [(I, J) for I in range(6) for J in range(I, 6)]
    for I, J in idx:
        M = np.zeros((6, 6))
        M[I, J] = M[J, I] = 1.0
        Rt = np.einsum("IJ,Iab,Jcd->abcd", M, E, E)
        T = -(1.0 / 3.0) * 0.5 * (np.einsum("ikjl->ijkl", Rt) + np.einsum("iljk->ijkl", Rt))
        cols.append(T.ravel())
    return np.array(cols).T, idx


def curvature_from_jet(jet):
    """Inverse of jet_from_curvature on algebraic curvature tensors (least squares)."""
    A, idx = _jet_map()
    # first Bianchi: tr R+ = tr R-, enforced by a heavily weighted row
    b_row = np.zeros(len(idx))
    for n, (I, J) in enumerate(idx):
        if I == J:
            b_row[n] = 1.0 if I < 3 else -1.0
    A2 = np.vstack([A, 1e3 * b_row])
    rhs = np.concatenate([np.asarray(jet.T, dtype=float).ravel(), [0.0]])
    c, *_ = np.linalg.lstsq(A2, rhs, rcond=None)
    M = np.zeros((6, 6))
    for n, (I, J) in enumerate(idx):
        M[I, J] = M[J, I] = c[n]
    return CurvatureOperator.from_matrix(M)


def random_einstein_jet(rng, lam=None, rank_deficient=False, scale=1.0):
    lam = rng.uniform(-3, 3) if lam is None else lam
    Wp = random_traceless(rng, scale)
    Wm = random_traceless(rng, scale)
    if rank_deficient:
        # shift W+ so that R+ has an exact zero eigenvalue
        w, V = np.linalg.eigh(lam / 3 * np.eye(3) + Wp)
        k = int(rng.integers(0, 3))
        w = w.copy()
        w[k] = 0.0
        Rp = V @ np.diag(w) @ V.T
        t = np.trace(Rp)
        # keep the trace at lam so that the operator stays Einstein
        w2 = w + (lam - t) / 2.0 * np.array([0.0 if i == k else 1.0 for i in range(3)])
        Rp = V @ np.diag(w2) @ V.T
        Wp = Rp - lam / 3 * np.eye(3)
    R = einstein_curvature(lam, Wp, Wm)
    return jet_from_curvature(R, lam), R


def linearized_ricci_check(jet):
    """sup over the unit sphere of |d_e Ric(H2) - Lambda g_e| (exact polynomial algebra)."""
    h = jet.field()
    L = pa.lin_ricci(h)
    best = 0.0
    P = np.vstack([np.eye(4), np.random.default_rng(5).normal(size=(16, 4))])
    P /= np.linalg.norm(P, axis=1)[:, None]
    vals = pa.eval_sym2(L, P) - jet.Lambda * np.eye(4)[None]
    best = float(np.max(np.linalg.norm(vals, axis=(1, 2))))
    return best


# --------------------------------------------------------------- enumeration

def _rational_space(deg, kind):
    """Basis of homogeneous fields P/|x|^(2m) of degree deg, as lists of RPoly components.

    m = 0 for deg >= 0 and m = -deg otherwise, which contains every
    biharmonic homogeneous field of that degree.
    """
    m = 0 if deg >= 0 else -deg
    mons = pa.monomials(deg + 2 * m)
    ncomp = 4 if kind == "covector" else 10
    basis = []
    for c in range(ncomp):
        for e in mons:
            f = [RPoly(0) for _ in range(ncomp)]
            f[c] = RPoly(Poly({e: 1}), m)
            basis.append(f)
    return basis, m


def _flatten(fields, n, deg):
    mons = pa.monomials(deg + 2 * n)
    return [pa.coeff_vector(f, n, deg, mons) for f in fields]


def _generator_constraints(G, basis_fields, kind, m, deg):
    """Rows (L_g - I) c = 0 for each generator, on the coefficient space."""
    rows = []
    gens = G.exact_generators()
    if not gens:
        return rows
    for g in gens:
        diffs = []
        for f in basis_fields:
            if kind == "covector":
                pb = pa.pullback_covec(f, g)
                d = [pb[i] - f[i] for i in range(4)]
            else:
                h = _sym_from_flat(f)
                pb = pa.pullback(h, g)
                d = _flat_from_sym([[pb[i][j] - h[i][j] for j in range(4)] for i in range(4)])
            diffs.append(d)
        vecs = _flatten(diffs, m, deg)
        rows.extend(np.array(vecs, dtype=object).T.tolist())
    return rows


_UPPER = [(i, j) for i in range(4) for j in range(i, 4)]


def _sym_from_flat(f):
    h = pa.zero_sym2()
    for n, (i, j) in enumerate(_UPPER):
        h[i][j] = h[j][i] = f[n]
    return h


def _flat_from_sym(h):
    return [h[i][j] for (i, j) in _UPPER]


def _nullity(rows, ncols):
    r, exact = pa.rank(rows, ncols)
    return ncols - r, exact


def kernel_dimension_deltadelta(G, deg):
    """dim of Gamma-invariant homogeneous degree-deg 1-forms with delta delta^* w = 0."""
    basis, m = _rational_space(deg, "covector")
    rows = _generator_constraints(G, basis, "covector", m, deg)
    images = [pa.delta(pa.sym_grad(w)) for w in basis]
    img = _flatten(images, m + 2, deg - 2)
    rows.extend(np.array(img, dtype=object).T.tolist())
    return _nullity(rows, len(basis))


def mode_catalog(window, k_max):
    """A priori growth rates from the three 1-form families on the cone.

    a_j - 1 = -1 +/- (1+j), j >= 1;  b_j - 1 = -2 +/- (1+j);  b_j + 1 = +/-(1+j), j >= 0.
    """
    lo, hi = window
    vals = set()
    for j in range(0, k_max + 1):
        cand = [-2 + (1 + j), -2 - (1 + j), (1 + j), -(1 + j)]
        if j >= 1:
            cand += [-1 + (1 + j), -1 - (1 + j)]
        for v in cand:
            if lo <= v <= hi:
                vals.add(v)
    return sorted(vals)


@dataclass
class ExceptionalValues:
    values: dict
    catalog: list
    flagged_endpoints: list
    exact: bool

    def as_set(self):
        return set(self.values)


def exceptional_values_vector(G, window, k_max=10):
    """Brute-force exceptional values of delta delta^* on R^4/G inside an open window.

    Every homogeneous kernel element has biharmonic components H_k |x|^s with
    s in {0, 2, -2k-2, -2k}, so rates are integers and each integer rate is
    tested on the full space of degree-gamma rational fields P/|x|^(2m).
    """
    lo, hi = window
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo >= hi:
        raise ValueError("window must be a bounded interval")
    if k_max < 3:
        raise ValueError("k_max must be >= 3")
    cat = mode_catalog((lo, hi), k_max)
    values, flagged, exact_all = {}, [], True
    for gamma in range(math.ceil(lo), math.floor(hi) + 1):
        if abs(gamma) > k_max + 2:
            continue
        dim, exact = kernel_dimension_deltadelta(G, gamma)
        exact_all &= exact
        if dim == 0:
            continue
        if gamma == lo or gamma == hi:
            flagged.append((gamma, dim))
        else:
            values[gamma] = dim
    return ExceptionalValues(values, cat, flagged, exact_all)


def harmonic_basis_polys(k):
    """Exact basis of harmonic homogeneous polynomials of degree k (as Poly)."""
    if k < 0:
        return []
    mons = pa.monomials(k)
    if k < 2:
        return [Poly({e: 1}) for e in mons]
    from sympy import QQ
    from sympy.polys.matrices import DomainMatrix
    out_mons = pa.monomials(k - 2)
    rows = []
    for e in mons:
        lap = pa.laplacian(RPoly(Poly({e: 1}))).num
        rows.append([lap.c.get(o, 0) for o in out_mons])
    A = DomainMatrix([[QQ(int(rows[c][r])) for c in range(len(mons))] for r in range(len(out_mons))],
                     (len(out_mons), len(mons)), QQ)
    ns = A.nullspace().to_Matrix()
    out = []
    for r in range(ns.rows):
        c = {}
        for n, e in enumerate(mons):
            v = ns[r, n]
            if v != 0:
                c[e] = Fraction(int(v.p), int(v.q))
        out.append(Poly(c))
    return out


def harmonic_sym2_dimensions(G, degree, filters=("traceless", "divergence-free")):
    """dim of G-invariant sym2 fields with harmonic homogeneous entries of the given degree.

    Negative degrees use the Kelvin transform H_k / |x|^(2k+2), degree -2-k.
    """
    if abs(degree) > DEGREE_CAP:
        raise ValueError("|degree| above cap %d" % DEGREE_CAP)
    if degree >= 0:
        k, n = degree, 0
    else:
        k, n = -2 - degree, -1 - degree
        if k < 0:
            return 0
    harm = harmonic_basis_polys(k)
    basis = []
    for c in range(10):
        for p in harm:
            f = [RPoly(0) for _ in range(10)]
            f[c] = RPoly(p, n)
            basis.append(f)
    if not basis:
        return 0
    rows = _generator_constraints(G, basis, "sym2", n, degree)
    filters = set(filters or ())
    if "traceless" in filters:
        trs = [[pa.trace(_sym_from_flat(f))] for f in basis]
        rows.extend(np.array(_flatten(trs, n, degree), dtype=object).T.tolist())
    if "divergence-free" in filters:
        dv = [pa.delta(_sym_from_flat(f)) for f in basis]
        rows.extend(np.array(_flatten(dv, n + 1, degree - 1), dtype=object).T.tolist())
    dim, _ = _nullity(rows, len(basis))
    return dim
