"""Radial gluing experiments: naive desingularization of S^4/Z2 by scaled
Eguchi-Hanson metrics, weighted residual norms, pinching, the sin-warp and
a quantified fixed-point solver."""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .ale_library import (VOL_S3, Profile, RadialMetric, eguchi_hanson_profile, ricci_sup,
                          round_profile, warped_curvature)

EPS0 = math.pi / 8      # gluing admissibility: t < EPS0^4


# ------------------------------------------------------------------ cutoff

def psi(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1, built from exp(-1/s).  Returns (v, v', v'')."""
    s = np.asarray(s, dtype=float)
    v = np.where(s >= 1, 1.0, 0.0)
    d1 = np.zeros_like(s)
    d2 = np.zeros_like(s)
    m = (s > 0) & (s < 1)
    if np.any(m):
        x = s[m]
        g = 1 / (1 - x) - 1 / x
        g1 = 1 / (1 - x) ** 2 + 1 / x ** 2
        g2 = 2 / (1 - x) ** 3 - 2 / x ** 3
        sig = 0.5 * (1 + np.tanh(g / 2))        # logistic, overflow-safe
        ds = sig * (1 - sig)
        v[m] = sig
        d1[m] = ds * g1
        d2[m] = ds * (1 - 2 * sig) * g1 ** 2 + ds * g2
    return v, d1, d2


def _cutoff_constants(n=200001):
    s = np.linspace(0, 1, n)
    _, d1, d2 = psi(s)
    return {0: 1.0, 1: float(np.abs(d1).max()), 2: float(np.abs(d2).max())}


CUTOFF_C = _cutoff_constants()


def blend(p, q, chi):
    """Profile sqrt(chi p^2 + (1 - chi) q^2); exactly p where chi = 1 and q where chi = 0."""
    def f(r):
        c, c1, c2 = chi(r)
        pv, p1, p2 = p(r)
        qv, q1, q2 = q(r)
        S = c * pv ** 2 + (1 - c) * qv ** 2
        S1 = c1 * (pv ** 2 - qv ** 2) + 2 * c * pv * p1 + 2 * (1 - c) * qv * q1
        S2 = (c2 * (pv ** 2 - qv ** 2) + 4 * c1 * (pv * p1 - qv * q1)
              + 2 * c * (p1 ** 2 + pv * p2) + 2 * (1 - c) * (q1 ** 2 + qv * q2))
        v = np.sqrt(S)
        d1 = S1 / (2 * v)
        d2 = (S2 / 2 - d1 ** 2) / v
        one, zero = c == 1, c == 0
        v = np.where(one, pv, np.where(zero, qv, v))
        d1 = np.where(one, p1, np.where(zero, q1, d1))
        d2 = np.where(one, p2, np.where(zero, q2, d2))
        return v, d1, d2
    return Profile(f, "blend")


# ------------------------------------------------------------------ gluing

@dataclass
class GluedRadialMetric:
    metric: RadialMetric        # on (bolt, r_half]; mirror-symmetric about r_half when n_poles = 2
    orbifold: RadialMetric
    ale: RadialMetric
    t: float
    zone: tuple                 # (t^1/4, 2 t^1/4)
    n_poles: int
    ale_ricci_flat: bool
    r_half: float
    Lam: float                  # Einstein constant of the orbifold

    def chi(self, r):
        return psi(np.asarray(r, dtype=float) / self.zone[0] - 1.0)

    def region(self, r):
        """0 = pure scaled ALE, 1 = gluing zone, 2 = pure orbifold."""
        r = np.asarray(r, dtype=float)
        return np.where(r <= self.zone[0], 0, np.where(r >= self.zone[1], 2, 1))


def check_cutoff_bounds(z0, n=2001):
    """|d^k chi| <= C_k 2^k / r^k on the zone [z0, 2 z0], the r_D^-k form of the cutoff bounds."""
    r = np.linspace(z0, 2 * z0, n)
    _, d1, d2 = psi(r / z0 - 1.0)
    for k, d in ((1, d1 / z0), (2, d2 / z0 ** 2)):
        if np.any(np.abs(d) * r ** k > CUTOFF_C[k] * 2 ** k * (1 + 1e-9)):
            raise RuntimeError("cutoff derivative bound fails for k=%d" % k)
    return True


def scaled_ale(ale, t):
    s = math.sqrt(t)
    A = ale.A.scaled(1.0, s)
    f = tuple(fi.scaled(s, s) for fi in ale.f)
    return RadialMetric(A, f, ale.r_min * s, ale.r_max * s if np.isfinite(ale.r_max) else np.inf,
                        "%s scaled by t=%g" % (ale.name, t), ale.group_order)


def build_gluing(orbifold=None, ale=None, t=1e-3, n_poles=2):
    """chi(r / t^1/4) g_o + (1 - chi) t g_b on squared components, in the common radial chart."""
    orbifold = orbifold or round_profile()
    ale = ale or eguchi_hanson_profile(1.0)
    if not 0 < t < EPS0 ** 4:
        raise ValueError("gluing scale t=%g is not admissible (need 0 < t < %.4g)" % (t, EPS0 ** 4))
    ale_t = scaled_ale(ale, t)
    z0 = t ** 0.25
    zone = (z0, 2 * z0)
    chi = Profile(lambda r: psi(r / z0 - 1.0), "chi")
    A = blend(orbifold.A, ale_t.A, chi)
    f = tuple(blend(po, pa_, chi) for po, pa_ in zip(orbifold.f, ale_t.f))
    r_half = 0.5 * (orbifold.r_min + orbifold.r_max) if np.isfinite(orbifold.r_max) else 1.0
    m = RadialMetric(A, f, ale_t.r_min, r_half, "glued t=%g" % t, orbifold.group_order)
    flat = ale.r_min <= 0 or ale.name == "flat"
    rf = flat or ricci_sup(ale, ale.r_min * np.geomspace(1.01, 50, 40)) <= 1e-9
    check_cutoff_bounds(z0)
    Lam = float(warped_curvature(orbifold, np.array([0.5 * r_half])).ric[0, 0, 0])
    if abs(Lam) < 1e-12:
        Lam = 0.0
    return GluedRadialMetric(m, orbifold, ale, t, zone, n_poles, rf, r_half, Lam)


def gluing_grid(g, n_shells=512, lo_factor=1e-3):
    """Log-uniform shells from just above the bolt (or 0.1 t^1/2) to the middle of the orbifold."""
    lo = max(g.metric.r_min * (1 + lo_factor), 0.1 * math.sqrt(g.t))
    return np.geomspace(lo, g.r_half, n_shells)


def residual_frame(g, r, Lam=None, ale_exact=True):
    """Ric - Lam g in the orthonormal frame, shape (n, 4, 4).

    Where g^D is exactly t g_b the Ricci tensor is that of the Ricci-flat model,
    so the residual there is -Lam * identity.  Direct evaluation loses about
    1e-16 / t in that region (cancellation among curvature terms of size 1/t).
    """
    Lam = g.Lam if Lam is None else Lam
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.empty((len(r), 4, 4))
    reg = g.region(r)
    exact = (reg == 0) & ale_exact & g.ale_ricci_flat
    out[exact] = -Lam * np.eye(4)
    rest = ~exact
    if np.any(rest):
        rep = warped_curvature(g.metric, r[rest])
        out[rest] = rep.ric - Lam * np.eye(4)
    return out


def residual_norm(g, r, Lam=None, ale_exact=True):
    E = residual_frame(g, r, Lam, ale_exact)
    return np.sqrt(np.einsum("nab,nab->n", E, E))


def metric_deviation(g, r):
    """|g^D - g_e| in the flat frame (componentwise on the diagonal profile)."""
    (A, _, _), fs = g.metric.eval(np.asarray(r, dtype=float))
    dev = [A ** 2 - 1] + [fi[0] ** 2 / np.asarray(r) ** 2 - 1 for fi in fs]
    return np.sqrt(sum(d ** 2 for d in dev))


def matched_asymptotics(t_list=(1e-2, 1e-3, 1e-4, 1e-5, 1e-6), n=256, orbifold=None, ale=None):
    """sup over the gluing zone of |g^D - g_e| for each t."""
    out = []
    for t in t_list:
        g = build_gluing(orbifold, ale, t)
        r = np.linspace(g.zone[0], g.zone[1], n)
        out.append((t, float(metric_deviation(g, r).max())))
    return out


# ------------------------------------------------------------------ weighted norms

@dataclass
class WeightedNormSpec:
    k: int = 0
    alpha: float = 0.5
    beta: float = 0.5
    mode: str = "desing"        # "orbifold" (r_o), "ale" (r_b), "desing" (r_D)
    rpow: float = 0.0           # extra r^rpow factor, 2 for the r_D^-2 C^alpha_beta space
    holder: bool = True
    ball: float = 0.5           # Hoelder pairs within r/ball-fraction of each point

    def __post_init__(self):
        if self.k != 0:
            raise ValueError("only k = 0 plus the Hoelder seminorm is implemented")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")


def weight_radius(r, spec, t=1.0):
    r = np.asarray(r, dtype=float)
    if spec.mode == "ale":
        return r / math.sqrt(t)
    return r


def tensor_norm(E, l=2, scale=1.0):
    """|s|_{g/scale} for frame components E of an l-covariant tensor of g: scale^(l/2) |s|_g."""
    return scale ** (l / 2) * np.sqrt(np.einsum("nab,nab->n", E, E))


def weighted_norm(values, r, spec, t=1.0):
    """sup w^(rpow - beta)|s| + sampled Hoelder seminorm of w^(rpow + alpha - beta) s.

    values: array (n,) of pointwise norms, or (n, 4, 4) frame components.
    Returns dict with the C0 part, the Hoelder part and the total.  The
    Hoelder part is a max over sampled pairs, so it is a lower bound.
    """
    r = np.asarray(r, dtype=float)
    V = np.asarray(values, dtype=float)
    mag = V if V.ndim == 1 else np.sqrt(np.einsum("nab,nab->n", V, V))
    w = weight_radius(r, spec, t)
    with np.errstate(divide="ignore", invalid="ignore"):
        wt = np.where(w > 0, w ** (spec.rpow - spec.beta), np.inf if spec.rpow < spec.beta else 0.0)
    prod = np.where(mag == 0, 0.0, wt * mag)
    c0 = float(np.max(prod))
    if not np.isfinite(c0):
        return {"C0": math.inf, "holder": math.inf, "total": math.inf}
    hold = 0.0
    if spec.holder:
        flat = V.reshape(len(r), -1)
        npairs = 0
        for i in range(len(r)):
            j = np.nonzero((r > r[i]) & (r <= r[i] * (1 + spec.ball)))[0]
            if j.size == 0:
                continue
            d = r[j] - r[i]
            diff = np.sqrt(np.sum((flat[j] - flat[i]) ** 2, axis=1))
            q = w[i] ** (spec.rpow + spec.alpha - spec.beta) * diff / d ** spec.alpha
            hold = max(hold, float(q.max()))
            npairs += j.size
        if npairs == 0:
            raise ValueError("Hoelder seminorm under-resolved: no sample pairs inside the balls")
    return {"C0": c0, "holder": hold, "total": c0 + hold}


# ------------------------------------------------------------------ residual scaling

@dataclass
class ScalingStudy:
    beta: float
    table: list                  # rows: t, C0, holder, total, total_fine
    exponent: float
    exponent_fine: float
    drift: float
    bound: float                 # (2 - beta)/4
    passed: bool


def _fit_slope(ts, vals):
    x, y = np.log(np.asarray(ts)), np.log(np.asarray(vals))
    return float(np.polyfit(x, y, 1)[0])


def residual_scaling_study(t_list=(1e-2, 1e-3, 1e-4, 1e-5), beta=0.5, n_shells=512, alpha=0.5,
                           orbifold=None, ale=None):
    spec = WeightedNormSpec(0, alpha, beta, "desing", rpow=2.0)
    rows = []
    for t in t_list:
        g = build_gluing(orbifold, ale, t)
        vals = []
        for n in (n_shells, 2 * n_shells):
            r = gluing_grid(g, n)
            vals.append(weighted_norm(residual_frame(g, r), r, spec))
        rows.append((t, vals[0]["C0"], vals[0]["holder"], vals[0]["total"], vals[1]["total"]))
    tot = [row[3] for row in rows]
    if max(tot) <= 1e-12:         # nothing to fit: the glued metric is Einstein to rounding
        return ScalingStudy(beta, rows, math.inf, math.inf, 0.0, (2 - beta) / 4, True)
    order = np.argsort([row[0] for row in rows])
    srt = np.array(tot)[order]
    if np.any(np.diff(srt) <= 0):
        raise ValueError("weighted residual is not monotone in t; refine the grid (n_shells=%d)" % (2 * n_shells))
    e = _fit_slope([row[0] for row in rows], tot)
    ef = _fit_slope([row[0] for row in rows], [row[4] for row in rows])
    bound = (2 - beta) / 4
    return ScalingStudy(beta, rows, e, ef, abs(e - ef), bound, e >= bound - 0.05 and abs(e - ef) < 0.01)


# ------------------------------------------------------------------ pinching

def _gl(a, b, n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


@dataclass
class PinchingStudy:
    table: list                  # rows: t, p, Lp, Lp_err, sup
    sup_band: tuple
    decreasing: bool
    final_below: bool
    passed: bool


def lp_residual(g, p, n_gl=200):
    """||Ric - 3g||_{L^p} over the whole glued manifold (both poles), with a quadrature error estimate."""
    link = VOL_S3 / g.metric.group_order
    bolt, z0, z1 = g.metric.r_min, g.zone[0], g.zone[1]
    out = []
    for n in (n_gl, 2 * n_gl):
        tot = 0.0
        # pure ALE region: |E| = 6 when the model is Ricci-flat
        for a, b in ((bolt, z0), (z0, z1), (z1, g.r_half)):
            if b <= a:
                continue
            # log substitution resolves the bolt and the orbifold side
            x, w = _gl(math.log(a), math.log(b), n)
            r = np.exp(x)
            E = residual_norm(g, r)
            tot += float(np.sum(w * r * E ** p * g.metric.volume_density(r)))
        out.append((g.n_poles * link * tot) ** (1.0 / p))
    return out[1], abs(out[1] - out[0])


def pinching_study(t_list=(1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12, 1e-14), p_list=(1, 2, 4),
                   n_shells=512, orbifold=None, ale=None):
    rows = []
    sups = []
    for t in t_list:
        g = build_gluing(orbifold, ale, t)
        r = gluing_grid(g, n_shells)
        sup = float(residual_norm(g, r).max())
        sups.append(sup)
        for p in p_list:
            lp, err = lp_residual(g, p)
            rows.append((t, p, lp, err, sup))
    dec = True
    final = True
    for p in p_list:
        seq = [row[2] for row in rows if row[1] == p]
        dec = dec and all(b < a for a, b in zip(seq[:-1], seq[1:]))
        final = final and seq[-1] < 1e-2
    band = (min(sups), max(sups))
    ok = dec and final and band[0] > 0 and band[1] / band[0] < 10
    return PinchingStudy(rows, band, dec, final, ok)


# ------------------------------------------------------------------ sin warp

def log_cutoff(eps, b):
    """chi = 1 on [0, eps], 0 on [b eps, inf), interpolating in log r."""
    L = math.log(b)

    def f(r):
        r = np.asarray(r, dtype=float)
        s = np.log(np.maximum(r, 1e-300) / eps) / L
        v, d1, d2 = psi(s)
        ds = 1 / (r * L)
        dds = -1 / (r * r * L)
        return 1 - v, -d1 * ds, -(d2 * ds ** 2 + d1 * dds)
    return Profile(f, "log-cutoff")


def sinc_parts(x):
    """(1 - S, S', S'') for S(x) = sin(x)/x, by series for small |x|."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 0.1
    xs = np.where(small, x, 0.1)
    xl = np.where(small, 1.0, x)
    x2 = xs * xs
    om_s = x2 / 6 - x2 ** 2 / 120 + x2 ** 3 / 5040 - x2 ** 4 / 362880
    d1_s = xs * (-1 / 3 + x2 / 30 - x2 ** 2 / 840 + x2 ** 3 / 45360)
    d2_s = -1 / 3 + x2 / 10 - x2 ** 2 / 168 + x2 ** 3 / 6480
    sn, cs = np.sin(xl), np.cos(xl)
    om_l = 1 - sn / xl
    d1_l = (xl * cs - sn) / xl ** 2
    d2_l = ((2 - xl ** 2) * sn - 2 * xl * cs) / xl ** 3
    return (np.where(small, om_s, om_l), np.where(small, d1_s, d1_l), np.where(small, d2_s, d2_l))


def _sin_warp_parts(eps, b, r):
    """f = r S(g) with g = k r, k = 1 + chi; returns f, f', f''/f and 1 - f'."""
    r = np.asarray(r, dtype=float)
    k, k1, k2 = log_cutoff(eps, b)(r)
    k = 1 + k
    g1, g2 = k1 * r + k, k2 * r + 2 * k1
    om, S1, S2 = sinc_parts(k * r)
    S = 1 - om
    f = r * S
    d1 = S + r * S1 * g1
    d2 = 2 * S1 * g1 + r * (S2 * g1 ** 2 + S1 * g2)
    one_minus = om - r * S1 * g1
    # S1 / r is bounded: S1(g) = g * (...) for small g
    ratio = (2 * S1 * g1 / r + S2 * g1 ** 2 + S1 * g2) / S
    return f, d1, d2, ratio, one_minus


def sin_warp_profile(eps, b):
    """f = sin((1+chi) r) / (1+chi): the radius-1/2 sphere near r = 0, the unit sphere past b eps."""
    def f(r):
        v, d1, d2, _, _ = _sin_warp_parts(eps, b, r)
        return v, d1, d2
    return Profile(f, "sin-warp")


def sin_warp_sectional(eps, b, r):
    """Radial -f''/f and tangential (1 - f'^2)/f^2 curvatures of dr^2 + f^2 g_S3.

    Both are evaluated from f = r S(k r) with S = sin(x)/x, which keeps full
    relative accuracy as r -> 0 and through the logarithmic transition.
    """
    f, d1, d2, ratio, om = _sin_warp_parts(eps, b, r)
    return -ratio, om * (2 - om) / f ** 2


@dataclass
class SinWarpReport:
    metric: RadialMetric
    r: np.ndarray
    radial: np.ndarray
    tangential: np.ndarray
    inner: tuple                 # (min, max) sectional on chi = 1
    transition: tuple
    outer: tuple
    C_measured: float            # (1 - min transition sectional) * log b, clipped at 0


def sin_warp_metric(eps, b, n=4000, group_order=2):
    if b <= 1 or eps <= 0:
        raise ValueError("need eps > 0 and b > 1")
    if b * eps > 0.5:
        warnings.warn("b*eps = %.3g is not small; the warp leaves the near-pole regime" % (b * eps))
    f = sin_warp_profile(eps, b)
    m = RadialMetric(Profile.const(1.0), (f, f, f), 0.0, math.pi, "sin-warp(eps=%g, b=%g)" % (eps, b), group_order)
    r = np.concatenate([np.geomspace(eps * 1e-2, b * eps * 1.5, n), np.linspace(b * eps * 1.5, 3.0, n // 4)[1:]])
    rad, tan = sin_warp_sectional(eps, b, r)
    smin, smax = np.minimum(rad, tan), np.maximum(rad, tan)

    def band(mask):
        return (float(smin[mask].min()), float(smax[mask].max())) if np.any(mask) else (math.nan, math.nan)
    inner = band(r <= eps)
    trans = band((r > eps) & (r < b * eps))
    outer = band(r >= b * eps)
    C = max(0.0, (1 - trans[0]) * math.log(b))
    return SinWarpReport(m, r, rad, tan, inner, trans, outer, C)


# ------------------------------------------------------------------ fixed point

class Refusal(Exception):
    def __init__(self, record):
        super().__init__(record["reason"])
        self.record = record


@dataclass
class FixedPointProblem:
    phi: object                  # x -> Phi(x)
    dphi0_inv: object            # v -> (d_0 Phi)^-1 v
    c: float
    q: float
    r0: float = math.inf
    norm: object = None
    dim: int = 1

    def nrm(self, x):
        if self.norm is not None:
            return float(self.norm(x))
        return float(np.linalg.norm(np.atleast_1d(x)))


@dataclass
class Certificate:
    r: float
    q: float
    c: float
    phi0: float
    iterations: int
    residual: float
    uniqueness_radius: float
    multistart_spread: float = None


def certified_radius(problem):
    return float(min(problem.r0, 1.0 / (2 * problem.q * problem.c)))


def admissibility(problem):
    r = certified_radius(problem)
    phi0 = problem.nrm(problem.phi(np.zeros(problem.dim)))
    ok = phi0 <= r / (2 * problem.c)
    return ok, r, phi0


def picard_solve(problem, target=1e-13, max_iter=200, multistart=8, seed=0):
    """Chord iteration x <- x - (d_0 Phi)^-1 Phi(x) inside the certified ball."""
    ok, r, phi0 = admissibility(problem)
    if not ok:
        raise Refusal({"reason": "inadmissible: ||Phi(0)|| = %.6g > r/(2c) = %.6g" % (phi0, r / (2 * problem.c)),
                       "phi0": phi0, "r": r, "c": problem.c, "q": problem.q, "r0": problem.r0})

    def run(x):
        x = np.array(x, dtype=float).reshape(problem.dim)
        for it in range(max_iter):
            F = problem.phi(x)
            res = problem.nrm(F)
            if res <= target:
                return x, it, res
            x = x - np.asarray(problem.dphi0_inv(F)).reshape(problem.dim)
            if problem.nrm(x) > r * (1 + 1e-12):
                raise RuntimeError("iterate left the certified ball: the constants c, q are wrong")
        raise RuntimeError("no convergence in %d iterations" % max_iter)

    x, it, res = run(np.zeros(problem.dim))
    spread = 0.0
    if multistart:
        rng = np.random.default_rng(seed)
        for _ in range(multistart):
            v = rng.normal(size=problem.dim)
            v *= rng.uniform(0, 0.99) * r / problem.nrm(v)
            y, _, _ = run(v)
            spread = max(spread, problem.nrm(y - x))
    return x, Certificate(r, problem.q, problem.c, phi0, it, res, r, spread)


def quadratic_benchmark(a=0.1, sign=-1.0):
    """Phi(x) = a + x + sign x^2: d_0 Phi = 1 (c = 1), quadratic constant q = 1."""
    return FixedPointProblem(lambda x: a + x + sign * x * x, lambda v: v, c=1.0, q=1.0, r0=math.inf, dim=1)


def quadratic_root(a=0.1, sign=-1.0):
    """Closed-form root of a + x + sign x^2 nearest to 0."""
    return (-1 + math.sqrt(1 - 4 * sign * a)) / (2 * sign)


# mode-truncated gluing system: conformal factor e^(2w) with w = sum c_n cos(2 n r)

@dataclass
class GluingSystem:
    problem: FixedPointProblem
    glued: GluedRadialMetric
    n_modes: int
    nodes: np.ndarray
    weights: np.ndarray


def _radial_quadrature(g, n=64):
    segs = [(g.metric.r_min, g.zone[0]), (g.zone[0], g.zone[1]), (g.zone[1], g.r_half)]
    xs, ws = [], []
    for a, b in segs:
        x, w = _gl(math.log(a), math.log(b), n)
        xs.append(np.exp(x))
        ws.append(w * np.exp(x))
    return np.concatenate(xs), np.concatenate(ws)


def gluing_system(t=1e-6, n_modes=6, orbifold=None, ale=None, q_samples=20, seed=0):
    """Galerkin projection of scal(e^(2w) g^D) - 4 Lam onto cos(2 n r), n < n_modes.

    scal(e^(2w) g) = e^(-2w) (scal - 6 Lap w - 6 |dw|^2) in dimension 4.
    The modes are symmetric under r -> pi - r, which removes the conformal
    kernel cos r of the round metric.
    """
    if n_modes > 50:
        raise ValueError("mode truncation is capped at dimension 50")
    g = build_gluing(orbifold, ale, t)
    r, w = _radial_quadrature(g)
    m = g.metric
    (A, A1, _), fs = m.eval(r)
    P = fs[0][0] * fs[1][0] * fs[2][0]
    dP = (fs[0][1] * fs[1][0] * fs[2][0] + fs[0][0] * fs[1][1] * fs[2][0] + fs[0][0] * fs[1][0] * fs[2][1])
    V = A * P
    dV = A1 * P + A * dP
    scal = np.trace(residual_frame(g, r), axis1=1, axis2=2) + 4 * g.Lam
    ns = np.arange(n_modes)
    B = np.cos(2 * np.outer(r, ns))
    B1 = -2 * ns * np.sin(2 * np.outer(r, ns))
    B2 = -4 * ns ** 2 * B
    W = g.n_poles * (VOL_S3 / m.group_order) * w * V
    # orthonormalize the modes in L^2(g^D)
    G = (B * W[:, None]).T @ B
    L = np.linalg.cholesky(G)
    Li = np.linalg.inv(L)
    B, B1, B2 = B @ Li.T, B1 @ Li.T, B2 @ Li.T

    def lap(u1, u2):
        # (1/V) (V u' / A^2)'
        a, a1, lv = (A, A1, dV / V) if u1.ndim == 1 else (A[:, None], A1[:, None], (dV / V)[:, None])
        return u2 / a ** 2 - 2 * u1 * a1 / a ** 3 + u1 * lv / a ** 2

    def phi(c):
        u1, u2 = B1 @ c, B2 @ c
        wv = B @ c
        s = np.exp(-2 * wv) * (scal - 6 * lap(u1, u2) - 6 * (u1 / A) ** 2) - 4 * g.Lam
        return (B * W[:, None]).T @ s

    J = (B * W[:, None]).T @ (-2 * scal[:, None] * B - 6 * lap(B1, B2))
    Jinv = np.linalg.inv(J)
    c = float(np.linalg.norm(Jinv, 2))
    # quadratic constant from sampled second differences, with a safety factor of 2
    rng = np.random.default_rng(seed)
    qs = []
    for _ in range(q_samples):
        x = rng.normal(size=n_modes)
        y = rng.normal(size=n_modes)
        s = rng.uniform(0.01, 0.2)
        x *= s / np.linalg.norm(x)
        y *= s / np.linalg.norm(y)
        num = np.linalg.norm(phi(x) - phi(y) - J @ (x - y))
        qs.append(num / (np.linalg.norm(x - y) * (np.linalg.norm(x) + np.linalg.norm(y))))
    q = 2 * float(max(qs))
    prob = FixedPointProblem(phi, lambda v: Jinv @ v, c=c, q=q, r0=0.2, dim=n_modes)
    return GluingSystem(prob, g, n_modes, r, w)
