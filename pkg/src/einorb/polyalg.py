"""Small exact polynomial algebra on R^4.

Fields on the cone are stored as rational functions P / |x|^(2n) with P a
polynomial in (x, y, z, t).  Coefficients may be ints, Fractions or floats;
the operations never round, so integer inputs stay exact.
"""
from fractions import Fraction
from itertools import product

import numpy as np

NV = 4


def _key(e):
    return tuple(int(v) for v in e)


class Poly:
    __slots__ = ("c",)

    def __init__(self, c=None):
        self.c = {}
        if c:
            for e, v in c.items():
                if v != 0:
                    self.c[_key(e)] = v

    @staticmethod
    def const(v):
        return Poly({(0, 0, 0, 0): v})

    @staticmethod
    def var(i):
        e = [0] * NV
        e[i] = 1
        return Poly({tuple(e): 1})

    def copy(self):
        p = Poly()
        p.c = dict(self.c)
        return p

    def is_zero(self, tol=0):
        return all(abs(v) <= tol for v in self.c.values())

    def degrees(self):
        return {sum(e) for e in self.c}

    def __add__(self, o):
        if not isinstance(o, Poly):
            o = Poly.const(o)
        r = dict(self.c)
        for e, v in o.c.items():
            w = r.get(e, 0) + v
            if w == 0:
                r.pop(e, None)
            else:
                r[e] = w
        p = Poly()
        p.c = r
        return p

    __radd__ = __add__

    def __neg__(self):
        p = Poly()
        p.c = {e: -v for e, v in self.c.items()}
        return p

    def __sub__(self, o):
        return self + (-o)

    def __rsub__(self, o):
        return (-self) + o

    def __mul__(self, o):
        if not isinstance(o, Poly):
            if o == 0:
                return Poly()
            p = Poly()
            p.c = {e: v * o for e, v in self.c.items()}
            return p
        r = {}
        for e1, v1 in self.c.items():
            for e2, v2 in o.c.items():
                e = (e1[0] + e2[0], e1[1] + e2[1], e1[2] + e2[2], e1[3] + e2[3])
                r[e] = r.get(e, 0) + v1 * v2
        return Poly(r)

    __rmul__ = __mul__

    def __pow__(self, n):
        out = Poly.const(1)
        for _ in range(n):
            out = out * self
        return out

    def diff(self, i):
        r = {}
        for e, v in self.c.items():
            if e[i]:
                f = list(e)
                f[i] -= 1
                r[tuple(f)] = v * e[i]
        return Poly(r)

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros(X.shape[0])
        for e, v in self.c.items():
            term = float(v) * np.ones(X.shape[0])
            for i in range(NV):
                if e[i]:
                    term = term * X[:, i] ** e[i]
            out += term
        return out

    def __repr__(self):
        return "Poly(%r)" % self.c


RHO2 = Poly({(2, 0, 0, 0): 1, (0, 2, 0, 0): 1, (0, 0, 2, 0): 1, (0, 0, 0, 2): 1})
X = [Poly.var(i) for i in range(NV)]


def monomials(d):
    """Exponent tuples of total degree d in four variables."""
    return [e for e in product(range(d + 1), repeat=NV) if sum(e) == d]


class RPoly:
    """num / |x|^(2n)."""
    __slots__ = ("num", "n")

    def __init__(self, num, n=0):
        if not isinstance(num, Poly):
            num = Poly.const(num)
        self.num = num
        self.n = n

    def _lift(self, n):
        if n == self.n:
            return self.num
        return self.num * RHO2 ** (n - self.n)

    def __add__(self, o):
        if not isinstance(o, RPoly):
            o = RPoly(o)
        n = max(self.n, o.n)
        return RPoly(self._lift(n) + o._lift(n), n)

    __radd__ = __add__

    def __neg__(self):
        return RPoly(-self.num, self.n)

    def __sub__(self, o):
        return self + (-o)

    def __mul__(self, o):
        if isinstance(o, RPoly):
            return RPoly(self.num * o.num, self.n + o.n)
        if isinstance(o, Poly):
            return RPoly(self.num * o, self.n)
        return RPoly(self.num * o, self.n)

    __rmul__ = __mul__

    def diff(self, i):
        if self.n == 0:
            return RPoly(self.num.diff(i), 0)
        top = RHO2 * self.num.diff(i) - X[i] * self.num * (2 * self.n)
        return RPoly(top, self.n + 1)

    def is_zero(self, tol=0):
        return self.num.is_zero(tol)

    def degree(self):
        ds = self.num.degrees()
        if not ds:
            return None
        if len(ds) > 1:
            raise ValueError("not homogeneous")
        return ds.pop() - 2 * self.n

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        r2 = np.sum(X * X, axis=1)
        return self.num(X) / r2 ** self.n

    def __repr__(self):
        return "RPoly(%r / rho^%d)" % (self.num, 2 * self.n)


def as_r(v):
    if isinstance(v, RPoly):
        return v
    return RPoly(v)


def zero_sym2():
    return [[RPoly(0) for _ in range(NV)] for _ in range(NV)]


def sym2(entries):
    """Build a symmetric field from a 4x4 nested list, reading the upper triangle."""
    h = zero_sym2()
    for i in range(NV):
        for j in range(i, NV):
            h[i][j] = h[j][i] = as_r(entries[i][j])
    return h


def sym2_add(a, b, s=1):
    return [[a[i][j] + b[i][j] * s for j in range(NV)] for i in range(NV)]


def sym2_scale(a, s):
    return [[a[i][j] * s for j in range(NV)] for i in range(NV)]


def covec_add(a, b, s=1):
    return [a[i] + b[i] * s for i in range(NV)]


def trace(h):
    out = RPoly(0)
    for i in range(NV):
        out = out + h[i][i]
    return out


def grad(f):
    return [f.diff(i) for i in range(NV)]


def delta(h):
    """(delta h)_j = -d_i h_ij."""
    out = []
    for j in range(NV):
        s = RPoly(0)
        for i in range(NV):
            s = s + h[i][j].diff(i)
        out.append(-s)
    return out


def delta1(w):
    """Codifferential of a 1-form, -div w."""
    s = RPoly(0)
    for i in range(NV):
        s = s + w[i].diff(i)
    return -s


def bianchi(h):
    """B h = delta h + 1/2 d tr h."""
    dh = delta(h)
    dt = grad(trace(h))
    return [dh[j] + dt[j] * Fraction(1, 2) for j in range(NV)]


def sym_grad(w):
    """delta^* w = symmetrized derivative."""
    h = zero_sym2()
    for i in range(NV):
        for j in range(i, NV):
            h[i][j] = h[j][i] = (w[j].diff(i) + w[i].diff(j)) * Fraction(1, 2)
    return h


def laplacian(f):
    s = RPoly(0)
    for i in range(NV):
        s = s + f.diff(i).diff(i)
    return s


def hessian(f):
    g = grad(f)
    return [[g[j].diff(i) for j in range(NV)] for i in range(NV)]


def lin_ricci(h):
    """Linearized Ricci at the flat metric: 1/2 nabla^*nabla h - delta^*delta h - 1/2 Hess tr h."""
    dd = sym_grad(delta(h))
    H = hessian(trace(h))
    out = zero_sym2()
    half = Fraction(1, 2)
    for i in range(NV):
        for j in range(i, NV):
            v = -laplacian(h[i][j]) * half - dd[i][j] - H[i][j] * half
            out[i][j] = out[j][i] = v
    return out


def _subst(G):
    return [sum((X[j] * G[i][j] for j in range(NV) if G[i][j] != 0), Poly()) for i in range(NV)]


def compose(p, G, sub=None):
    """p(Gx) for an RPoly p; |Gx| = |x| is assumed (G orthogonal)."""
    sub = sub or _subst(G)
    out = Poly()
    for e, v in p.num.c.items():
        term = Poly.const(v)
        for i in range(NV):
            if e[i]:
                term = term * sub[i] ** e[i]
        out = out + term
    return RPoly(out, p.n)


def pullback(h, G):
    """(G^* h)(x) = G^T h(Gx) G for an orthogonal G (rational or float entries)."""
    sub = _subst(G)
    hc = [[compose(h[i][j], G, sub) for j in range(NV)] for i in range(NV)]
    out = zero_sym2()
    for a in range(NV):
        for b in range(a, NV):
            s = RPoly(0)
            for i in range(NV):
                for j in range(NV):
                    if G[i][a] != 0 and G[j][b] != 0:
                        s = s + hc[i][j] * (G[i][a] * G[j][b])
            out[a][b] = out[b][a] = s
    return out


def pullback_covec(w, G):
    """(G^* w)(x) = G^T w(Gx)."""
    sub = _subst(G)
    wc = [compose(w[i], G, sub) for i in range(NV)]
    out = []
    for a in range(NV):
        s = RPoly(0)
        for i in range(NV):
            if G[i][a] != 0:
                s = s + wc[i] * G[i][a]
        out.append(s)
    return out


def eval_sym2(h, P):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    out = np.zeros((P.shape[0], NV, NV))
    for i in range(NV):
        for j in range(i, NV):
            v = h[i][j](P)
            out[:, i, j] = v
            out[:, j, i] = v
    return out


def eval_covec(w, P):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    return np.stack([w[i](P) for i in range(NV)], axis=1)


def field_is_zero(f, tol=0):
    if isinstance(f, RPoly):
        return f.is_zero(tol)
    return all(field_is_zero(v, tol) for v in f)


def coeff_vector(fields, n, deg, basis=None):
    """Flatten numerators (lifted to the common denominator |x|^(2n)) into a vector.

    `fields` is a flat list of RPoly, all homogeneous of degree `deg`.
    """
    mons = basis if basis is not None else monomials(deg + 2 * n)
    out = []
    for f in fields:
        num = f._lift(n) if f.n <= n else None
        if num is None:
            raise ValueError("denominator exceeds target")
        out.extend(num.c.get(m, 0) for m in mons)
    return out


def _is_exact(v):
    return isinstance(v, (int, Fraction))


def rank(rows, ncols, tol=1e-9):
    """Rank of a matrix given as a list of rows.

    Exact over Q when every entry is an int or Fraction, otherwise an SVD
    rank with a relative cutoff.  Returns (rank, exact_flag).
    """
    if not rows:
        return 0, True
    if all(_is_exact(v) for r in rows for v in r):
        from sympy import QQ
        from sympy.polys.matrices import DomainMatrix
        M = DomainMatrix([[QQ(int(Fraction(v).numerator), int(Fraction(v).denominator)) for v in r]
                          for r in rows], (len(rows), ncols), QQ)
        return M.rank(), True
    A = np.array([[float(v) for v in r] for r in rows])
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0, False
    return int(np.sum(s > tol * s[0])), False


def monomial_matrix(P, mons):
    """Values of the monomials `mons` at points P, shape (len(P), len(mons))."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    E = np.asarray(mons, dtype=int).reshape(-1, NV)
    dmax = int(E.max()) if E.size else 0
    pw = np.ones((NV, dmax + 1, P.shape[0]))
    for i in range(NV):
        for d in range(1, dmax + 1):
            pw[i, d] = pw[i, d - 1] * P[:, i]
    out = pw[0, E[:, 0]] * pw[1, E[:, 1]] * pw[2, E[:, 2]] * pw[3, E[:, 3]]
    return out.T


def polys_to_matrix(polys, deg):
    """Coefficient matrix (n_mon, len(polys)) over the degree-`deg` monomials."""
    mons = monomials(deg)
    idx = {m: n for n, m in enumerate(mons)}
    C = np.zeros((len(mons), len(polys)))
    for j, p in enumerate(polys):
        for e, v in p.c.items():
            C[idx[e], j] = float(v)
    return mons, C
