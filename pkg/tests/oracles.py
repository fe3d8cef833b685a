"""Independent reference computations used by the tests.

Nothing here imports einorb: the metrics are written directly in Cartesian
coordinates and curvature is obtained by nested central differences.
"""
import math

import numpy as np


def quat_coframe(x):
    """Rows (d rho, rho a1, rho a2, rho a3) at a point x of R^4 (unit covectors)."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x)
    X, Y, Z, T = x
    return np.array([
        [X, Y, Z, T],
        [-Y, X, -T, Z],
        [-Z, T, X, -Y],
        [-T, -Z, Y, X],
    ]) / r


def radial_metric(A, f1, f2, f3):
    """Cartesian metric A(r)^2 dr^2 + sum f_i(r)^2 alpha_i^2 (alpha_i = unit covector / r)."""
    def g(x):
        r = np.linalg.norm(x)
        F = quat_coframe(x)
        c = np.array([A(r) ** 2, (f1(r) / r) ** 2, (f2(r) / r) ** 2, (f3(r) / r) ** 2])
        return np.einsum("a,ai,aj->ij", c, F, F)
    return g


def eh_metric(a=1.0):
    B = lambda r: math.sqrt(1 - (a / r) ** 4)
    return radial_metric(lambda r: 1 / B(r), lambda r: r * B(r), lambda r: r, lambda r: r)


def christoffel(g, x, h=1e-4):
    x = np.asarray(x, dtype=float)
    dg = np.zeros((4, 4, 4))   # dg[k, i, j] = d_k g_ij
    for k in range(4):
        e = np.zeros(4)
        e[k] = h
        dg[k] = (g(x + e) - g(x - e)) / (2 * h)
    gi = np.linalg.inv(g(x))
    low = 0.5 * (np.einsum("jli->lij", dg) + np.einsum("ilj->lij", dg) - dg)   # Gamma_{l, ij}
    return np.einsum("kl,lij->kij", gi, low)


def riemann(g, x, h=1e-3, hc=1e-4):
    """R^a_{bcd} by central differences of the Christoffel symbols."""
    x = np.asarray(x, dtype=float)
    G = christoffel(g, x, hc)
    dG = np.zeros((4, 4, 4, 4))   # dG[c, a, b, d] = d_c Gamma^a_bd
    for c in range(4):
        e = np.zeros(4)
        e[c] = h
        dG[c] = (christoffel(g, x + e, hc) - christoffel(g, x - e, hc)) / (2 * h)
    R = (np.einsum("cabd->abcd", dG) - np.einsum("dabc->abcd", dG)
         + np.einsum("ace,ebd->abcd", G, G) - np.einsum("ade,ebc->abcd", G, G))
    return R


def ricci(g, x, **kw):
    return np.einsum("abad->bd", riemann(g, x, **kw))


def kretschmann(g, x, **kw):
    R = riemann(g, x, **kw)
    gm = g(np.asarray(x, dtype=float))
    gi = np.linalg.inv(gm)
    Rl = np.einsum("ae,ebcd->abcd", gm, R)
    Ru = np.einsum("abcd,bf,cg,dh->afgh", R, gi, gi, gi)
    return float(np.einsum("abcd,abcd->", Rl, Ru))


# closed forms

def eh_kretschmann(a, r):
    """|Rm|^2 of Eguchi-Hanson: 384 a^8 / r^12 (checked against the FD engine in the tests)."""
    return 384 * a ** 8 / r ** 12


def eh_chi():
    """(1/32 pi^2) int |Rm|^2 over EH: 384 a^8 * pi^2 * int_a^inf r^-9 dr / (32 pi^2) = 3/2."""
    return 384 * math.pi ** 2 / 8 / (32 * math.pi ** 2)


def eh_b(a):
    """b of the scaling deformation on EH.

    The radial equation (r^3 B^2 u')' = 8 r^3 with regularity at the bolt gives
    u' = 2r, so u = r^2.  The chart r = rho + a^4/(4 rho^3) puts g - g_e in the
    traceless divergence-free O1 form, and u = rho^2 + a^4/(2 rho^2) + O(rho^-6).
    """
    return a ** 4 / 2


def eh_volume_b(a):
    """-4 (volume deficit) / |S^3/Z2| in the exhaustion by level sets of mean curvature 3/rho.

    On EH, H = 3B/r + 2a^4/(r^5 B) = 3/r + a^4/(2 r^5) + ..., so rho = 3/H has
    rho^4 = r^4 - 2a^4/3 + ...; the enclosed volume is (r^4 - a^4)/4 per unit
    link volume, giving the deficit -a^4/12.
    """
    return a ** 4 / 3


def sphere_monomial_integral(e):
    """int_{S^3} x^e via the Gaussian trick: int_R4 x^e exp(-|x|^2) = Gamma(|e|/2+2)/2 * int_S3 x^e."""
    if any(v % 2 for v in e):
        return 0.0
    gauss = 1.0
    for v in e:
        gauss *= math.gamma((v + 1) / 2)
    return gauss / (0.5 * math.gamma(sum(e) / 2 + 2))


def quadratic_root(a, sign):
    """Root of a + x + sign x^2 = 0 closest to zero."""
    roots = np.roots([sign, 1.0, a])
    roots = roots[np.isreal(roots)].real
    return float(roots[np.argmin(np.abs(roots))])


def sphere_integrate(f, n=12):
    """int_{S^3} f by Gauss-Legendre in u = sin^2(e) and uniform angles (Hopf coordinates)."""
    xg, wg = np.polynomial.legendre.leggauss(n)
    u, wu = 0.5 * (xg + 1), 0.25 * wg          # du/2 for the measure du da db / 2
    ang = 2 * np.pi * np.arange(2 * n) / (2 * n)
    U, A, B = np.meshgrid(u, ang, ang, indexing="ij")
    W = wu[:, None, None] * (2 * np.pi / (2 * n)) ** 2 * np.ones_like(U)
    c, s = np.sqrt(1 - U), np.sqrt(U)
    P = np.stack([c * np.cos(A), c * np.sin(A), s * np.cos(B), s * np.sin(B)], axis=-1).reshape(-1, 4)
    return np.tensordot(W.ravel(), f(P), axes=(0, 0))


def bianchi_fd(H, P, h=1e-4):
    """(delta H + 1/2 d tr H)(P) by central differences (exact for quadratic H)."""
    out = np.zeros((len(P), 4))
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        dH = (H(P + e) - H(P - e)) / (2 * h)         # d_i H
        out -= dH[:, i, :]
        out[:, i] += 0.5 * np.trace(dH, axis1=1, axis2=2)
    return out


def lambda_oracle(H, O, group_order=1):
    """-(1/|G|) int_{S^3} (3 <H, O> + O(B_e H, x))."""
    def f(P):
        BH = bianchi_fd(H, P)
        OP = O(P)
        return 3 * np.einsum("nij,nij->n", H(P), OP) + np.einsum("ni,nij,nj->n", BH, OP, P)
    return -sphere_integrate(f) / group_order


def eh_bulk_identity(a=1.0, R0=None):
    """Bulk pairing of O_o = identity with o_1 on EH, closed-form integrand.

    The sphere integral of O_o(e_a, e_b) is (tr O_o / 4)|S^3| delta_ab; with
    the frame scalings (1/B, B, 1, 1) the O4_1 pairing leaves
    2 |S^3| ((B^2 - 1) + (1/B^2 - 1)) = 2 |S^3| a^8 / (r^4 (r^4 - a^4)),
    times the volume density r^3, r^-4 and 1/|Z2|.
    """
    from scipy.integrate import quad
    R0 = 2 * a if R0 is None else R0

    def chi(r):
        s = min(max((r - R0) / R0, 0.0), 1.0)
        return s * s * (3 - 2 * s)

    f = lambda r: chi(r) * a ** 8 / (r ** 5 * (r ** 4 - a ** 4))
    v = quad(f, R0, 2 * R0, epsabs=0, epsrel=1e-13)[0] + quad(f, 2 * R0, np.inf, epsabs=0, epsrel=1e-13)[0]
    return 2 * math.pi ** 2 * v
