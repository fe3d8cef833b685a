"""Command-line front end.

    einorb obstruction     --config run.yaml --out results/
    einorb hitchin-thorpe  --config tree.yaml --out results/
    einorb study           --config study.yaml --out results/
    einorb catalog         --config cat.yaml --out results/

Exit codes: 0 success (unobstructed for `obstruction`), 1 obstructed or a
refused fixed-point problem, 2 malformed input or an unresolved computation.
"""
import argparse
import csv
import hashlib
import io
import json
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import yaml

from . import __version__

COMMANDS = ("obstruction", "hitchin-thorpe", "study", "catalog")
STUDIES = ("annulus", "residual-scaling", "pinching", "sin-warp", "picard")


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ config schema

def _num(lo=-math.inf, hi=math.inf, integer=False, open_lo=False):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return "expected a number"
        if integer and int(v) != v:
            return "expected an integer"
        if v < lo or v > hi or (open_lo and v == lo):
            return "out of range %s%g, %g]" % ("(" if open_lo else "[", lo, hi)
        return None
    return check


def _numlist(lo=-math.inf, hi=math.inf, open_lo=False, min_len=1):
    chk = _num(lo, hi, open_lo=open_lo)

    def check(v):
        if not isinstance(v, list) or len(v) < min_len:
            return "expected a list of at least %d numbers" % min_len
        for x in v:
            e = chk(x)
            if e:
                return "entry %r: %s" % (x, e)
        return None
    return check


def _choice(*opts):
    def check(v):
        return None if v in opts else "expected one of %s" % (", ".join(map(str, opts)))
    return check


def _anything(v):
    return None


def _boolean(v):
    return None if isinstance(v, bool) else "expected true or false"


SCHEMA = {
    "obstruction": {
        "jet": _anything, "group": _anything, "basis": _choice("o4"), "n_grid": _num(100, 10 ** 6, True),
        "tol": _num(0, 1, open_lo=True), "reflection": _boolean,
    },
    "hitchin-thorpe": {
        "preset": _choice("k3", "s4z2-aligned", "s4z2-opposite"), "tree": _anything, "catalog": _anything,
    },
    "catalog": {"catalog": _anything, "verify": _boolean},
    "study": {
        "study": _choice(*STUDIES),
        # annulus
        "eps": _num(0, 0.5, open_lo=True), "k_max": _num(0, 24, True), "fd_shells": _num(16, 4096, True),
        "group": _anything,
        # gluing studies
        "t_list": _numlist(0, 1, open_lo=True), "betas": _numlist(0, 1, open_lo=True),
        "p_list": _numlist(1, 1e6), "n_shells": _num(512, 10 ** 5, True), "alpha": _num(0, 1, open_lo=True),
        # sin warp
        "log_b": _numlist(0, 200, open_lo=True), "sin_eps": _num(0, 1, open_lo=True),
        # picard
        "a": _num(-10, 10), "sign": _choice(-1, 1), "c": _num(0, math.inf, open_lo=True),
        "q": _num(0, math.inf, open_lo=True), "r0": _anything, "t": _num(0, 1, open_lo=True),
        "n_modes": _num(1, 50, True), "target": _num(0, 1, open_lo=True), "multistart": _num(0, 1000, True),
        "system": _choice("scalar", "gluing"),
    },
}

STUDY_KEYS = {
    "annulus": {"eps", "k_max", "fd_shells", "group"},
    "residual-scaling": {"t_list", "betas", "n_shells", "alpha"},
    "pinching": {"t_list", "p_list", "n_shells"},
    "sin-warp": {"log_b", "sin_eps"},
    "picard": {"system", "a", "sign", "c", "q", "r0", "t", "n_modes", "target", "multistart"},
}


def _line_of(text, key):
    if not text:
        return None
    m = re.search(r"^\s*-?\s*%s\s*:" % re.escape(str(key)), text, re.M)
    return text[:m.start()].count("\n") + 1 if m else None


def _where(text, key):
    ln = _line_of(text, key)
    return ("line %d, field '%s'" % (ln, key)) if ln else ("field '%s'" % key)


def load_config(path):
    """Parse and validate a YAML run config. Returns (config dict, raw text)."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError("cannot read config %s: %s" % (path, e))
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = "line %d" % (mark.line + 1) if mark is not None else "unknown line"
        raise ConfigError("YAML syntax error at %s: %s" % (where, getattr(e, "problem", e)))
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping with a 'command' field")
    validate_config(cfg, text)
    return cfg, text


def validate_config(cfg, text=""):
    cmd = cfg.get("command")
    if cmd not in COMMANDS:
        raise ConfigError("%s: unknown command %r (expected one of %s)"
                          % (_where(text, "command"), cmd, ", ".join(COMMANDS)))
    schema = SCHEMA[cmd]
    for key, val in cfg.items():
        if key == "command":
            continue
        if key not in schema:
            raise ConfigError("%s: unknown key for command %s" % (_where(text, key), cmd))
        err = schema[key](val)
        if err:
            raise ConfigError("%s: %s" % (_where(text, key), err))
    if cmd == "study":
        st = cfg.get("study")
        if st is None:
            raise ConfigError("field 'study' is required (one of %s)" % ", ".join(STUDIES))
        extra = set(cfg) - {"command", "study"} - STUDY_KEYS[st]
        if extra:
            k = sorted(extra)[0]
            raise ConfigError("%s: not a parameter of study %s" % (_where(text, k), st))
    if cmd == "hitchin-thorpe" and ("preset" in cfg) == ("tree" in cfg):
        raise ConfigError("give exactly one of 'preset' or 'tree'")
    return cfg


def config_hash(cfg, seed):
    blob = json.dumps({"config": cfg, "seed": seed}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


# ------------------------------------------------------------------ output

class Output:
    def __init__(self, out_dir, cfg, seed, threads):
        self.dir = out_dir
        self.hash = config_hash(cfg, seed)
        self.files = []
        self.meta = {"command": cfg["command"], "config_hash": self.hash, "tool": "einorb",
                     "tool_version": __version__, "seed": seed, "threads": threads}
        os.makedirs(out_dir, exist_ok=True)

    def header(self):
        return "config_hash=%s tool=einorb %s" % (self.hash, __version__)

    def csv(self, name, columns, rows, comments=()):
        buf = io.StringIO()
        buf.write("# %s\n" % self.header())
        for c in comments:
            buf.write("# %s\n" % c)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        self._write(name, buf.getvalue())

    def _write(self, name, text):
        with open(os.path.join(self.dir, name), "w", newline="") as fh:
            fh.write(text)
        self.files.append(name)

    def manifest(self, **extra):
        self.meta.update(extra)
        self.meta["files"] = ",".join(self.files)
        lines = ["%s=%s" % (k, _fmt(v)) for k, v in self.meta.items()]
        with open(os.path.join(self.dir, "manifest.txt"), "w") as fh:
            fh.write("\n".join(lines) + "\n")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


# ------------------------------------------------------------------ commands

def _group(spec):
    from .topology_checker import group_from_spec
    if spec is None:
        from .cone_geometry import Z2
        return Z2()
    if not isinstance(spec, dict) or "label" not in spec:
        raise ConfigError("field 'group': expected a mapping with a 'label'")
    return group_from_spec(spec)


def _jet(spec, rng):
    from .cone_geometry import QuadraticJet, einstein_curvature, jet_from_curvature, random_einstein_jet
    from .obstruction_engine import space_form_jet
    if spec in (None, "flat"):
        return QuadraticJet(np.zeros((4, 4, 4, 4)), 0.0)
    if spec == "sphere":
        return space_form_jet("spherical")
    if spec == "hyperbolic":
        return space_form_jet("hyperbolic")
    if spec == "random":
        return random_einstein_jet(rng)[0]
    if spec == "rank-deficient":
        return random_einstein_jet(rng, rank_deficient=True)[0]
    if isinstance(spec, dict):
        bad = set(spec) - {"Lambda", "Wplus", "Wminus"}
        if bad:
            raise ConfigError("field 'jet': unknown keys %s" % sorted(bad))
        lam = spec.get("Lambda", 0.0)
        try:
            Wp = np.array(spec.get("Wplus", np.zeros((3, 3))), dtype=float)
            Wm = np.array(spec.get("Wminus", np.zeros((3, 3))), dtype=float)
        except (TypeError, ValueError):
            raise ConfigError("field 'jet': Wplus/Wminus must be 3x3 numeric matrices")
        for nm, W in (("Wplus", Wp), ("Wminus", Wm)):
            if W.shape != (3, 3) or np.abs(W - W.T).max() > 1e-12 or abs(np.trace(W)) > 1e-12:
                raise ConfigError("field 'jet': %s must be a symmetric traceless 3x3 matrix" % nm)
        return jet_from_curvature(einstein_curvature(float(lam), Wp, Wm), float(lam))
    raise ConfigError("field 'jet': expected flat, sphere, hyperbolic, random, rank-deficient "
                      "or a mapping {Lambda, Wplus, Wminus}")


def cmd_obstruction(cfg, out, rng, threads):
    from .obstruction_engine import orientation_scan
    G = _group(cfg.get("group"))
    jet = _jet(cfg.get("jet"), rng)
    rep = orientation_scan(jet, None, G, n_grid=int(cfg.get("n_grid", 10000)),
                           reflection=bool(cfg.get("reflection", False)), tol=float(cfg.get("tol", 1e-6)),
                           keep_grid=True)
    rows = [("verdict", rep.verdict), ("best_max_lambda", rep.best_max_lambda),
            ("best_direction", " ".join(repr(float(x)) for x in rep.best_direction)),
            ("lambda_reference", " ".join(repr(float(x)) for x in rep.lam)),
            ("det_Rplus", rep.det_Rplus), ("det_Rminus", rep.det_Rminus),
            ("det_Rplus_zero", rep.predicate), ("predicate_agrees", rep.agrees),
            ("tol_lambda", rep.tolerances["lambda"]), ("tol_det", rep.tolerances["det"]),
            ("orientation_search", rep.orientation)]
    out.csv("obstruction_report.csv", ["quantity", "value"], rows)
    grid = rep.grid if rep.grid is not None else np.zeros((0, 6))
    out.csv("orientation_grid.csv", ["ux", "uy", "uz", "lambda1", "lambda2", "lambda3"], grid.tolist())
    out.manifest(verdict=rep.verdict, group=G.label)
    return 0 if rep.verdict == "unobstructed-at-tolerance" else 1


def cmd_hitchin_thorpe(cfg, out, rng, threads):
    from .topology_checker import (dof_report, ht_verdict, k3_tree, load_catalog, s4z2_tree,
                                   spin_applicability, tree_from_config)
    preset = cfg.get("preset")
    if preset == "k3":
        tree, spin = k3_tree(), True
    elif preset == "s4z2-aligned":
        tree, spin = s4z2_tree((1, 1)), False
    elif preset == "s4z2-opposite":
        tree, spin = s4z2_tree((1, -1)), False
    else:
        tc = cfg["tree"]
        if not isinstance(tc, dict):
            raise ConfigError("field 'tree': expected a mapping")
        cat = load_catalog(cfg.get("catalog")) if cfg.get("catalog") else None
        tree = tree_from_config(tc, cat)
        spin = bool(tc.get("spin", tree.root.spin))
    v = ht_verdict(tree)
    rows = list(v.rows()) + [("DOF", dof_report(tree))]
    out.csv("hitchin_thorpe.csv", ["quantity", "value"], rows)
    spin_pts = set(spin_applicability(tree, spin))
    attached = {n.point: n.name for n in tree.nodes if n.parent == "root"}
    prow = []
    for p, G in tree.root.points.items():
        flag = (v.obstruction_flag and p in attached) or p in spin_pts
        prow.append((p, G.label, attached.get(p, ""), G.in_su2(), flag))
    out.csv("points.csv", ["point", "group", "node", "in_SU2", "det_R_zero_required"], prow)
    out.manifest(verdict=v.verdict, chi=v.chi, tau=v.tau, slack=v.slack)
    return 0


def cmd_catalog(cfg, out, rng, threads):
    from .topology_checker import load_catalog, verify_catalog_entry
    cat = load_catalog(cfg.get("catalog"))
    rows = [(n, p.role, p.chi, p.tau, p.kahler, p.spin, p.n_deformations, len(p.points),
             p.group.label if p.group else "", p.provenance) for n, p in cat.items()]
    out.csv("catalog.csv", ["name", "role", "chi", "tau", "kahler", "spin", "dof", "n_points",
                            "group_at_infinity", "provenance"], rows)
    extra = {}
    if cfg.get("verify", False) and "EH" in cat:
        from .ale_library import eguchi_hanson_profile, gauss_bonnet_chi, signature_tau
        m = eguchi_hanson_profile(1.0)
        chi, tau = gauss_bonnet_chi(m), signature_tau(m)
        verify_catalog_entry(cat["EH"], chi, tau)
        extra = {"EH_chi_computed": chi, "EH_tau_computed": tau, "EH_verified": True}
    out.manifest(n_pieces=len(cat), **extra)
    return 0


def _study_annulus(cfg, out, rng, threads):
    from .annulus_solver import AnnulusProblem, dirichlet_extend, fd_dirichlet_extend, relative_l2_error
    from .cone_geometry import random_einstein_jet
    G = _group(cfg.get("group"))
    eps = float(cfg.get("eps", 0.2))
    K = int(cfg.get("k_max", 8))
    jin = random_einstein_jet(rng)[0]
    jout = random_einstein_jet(rng)[0]
    c_in = rng.normal(size=(4, 4))
    c_in = c_in + c_in.T

    def inner(P):
        return jin(P) + c_in[None]

    def outer(P):
        return jout(P) * eps ** 2

    prob = AnnulusProblem(eps, G, inner, outer, K)
    ext = dirichlet_extend(prob)
    r, Q, samp = fd_dirichlet_extend(prob, int(cfg.get("fd_shells", 128)))
    err = relative_l2_error(ext, r, Q, samp)
    out.csv("annulus_modes.csv", ["k", "n", "component", "H_plus", "H_minus"], ext.mode_table(),
            comments=("relative L2 error vs finite differences = %r" % err,))
    out.manifest(study="annulus", eps=eps, k_max=K, fd_relative_l2=err, tail_residual=ext.tail_residual,
                 grid_converged=err <= 1e-3)
    return 0


def _study_residual(cfg, out, rng, threads):
    from .gluing_lab import residual_scaling_study
    t_list = cfg.get("t_list", [1e-2, 1e-3, 1e-4, 1e-5])
    if max(t_list) / min(t_list) < 1e3 - 1e-9:
        raise ConfigError("field 't_list': must span at least 3 decades")
    betas = cfg.get("betas", [0.25, 0.5])
    n = int(cfg.get("n_shells", 512))
    alpha = float(cfg.get("alpha", 0.5))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        res = list(ex.map(lambda b: residual_scaling_study(t_list, b, n, alpha), betas))
    rows = []
    for st in res:
        for t, c0, h, tot, fine in st.table:
            rows.append((t, st.beta, tot, abs(fine - tot), c0, h))
    comments = ["fit beta=%r exponent=%r bound=%r drift=%r pass=%s"
                % (st.beta, st.exponent, st.bound, st.drift, "true" if st.passed else "false") for st in res]
    out.csv("residual_scaling.csv", ["t", "beta", "norm", "error_bar", "C0_part", "holder_part"], rows,
            comments=comments)
    out.manifest(study="residual-scaling", grid_converged=all(st.drift < 0.01 for st in res),
                 passed=all(st.passed for st in res),
                 exponents=" ".join(repr(st.exponent) for st in res))
    return 0


def _study_pinching(cfg, out, rng, threads):
    from .gluing_lab import pinching_study
    t_list = cfg.get("t_list", [1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12, 1e-14])
    if any(b >= a for a, b in zip(t_list[:-1], t_list[1:])):
        raise ConfigError("field 't_list': must be strictly decreasing")
    p_list = cfg.get("p_list", [1, 2, 4])
    ps = pinching_study(t_list, p_list, int(cfg.get("n_shells", 512)))
    rows = [(t, p, lp, err, sup) for t, p, lp, err, sup in ps.table]
    out.csv("pinching.csv", ["t", "p", "norm", "error_bar", "sup"], rows,
            comments=("sup band = [%r, %r]" % ps.sup_band,))
    out.manifest(study="pinching", decreasing=ps.decreasing, final_below_threshold=ps.final_below, passed=ps.passed,
                 grid_converged=max(r[3] for r in ps.table) < 1e-6 * max(1.0, max(r[2] for r in ps.table)))
    return 0


def _study_sinwarp(cfg, out, rng, threads):
    from .gluing_lab import sin_warp_metric
    eps = float(cfg.get("sin_eps", 1e-30))
    rows = []
    for L in cfg.get("log_b", [5, 10, 20, 40]):
        rep = sin_warp_metric(eps, math.exp(L))
        rows.append((L, rep.inner[0], rep.inner[1], rep.transition[0], rep.transition[1],
                     rep.outer[0], rep.outer[1], rep.C_measured))
    out.csv("sin_warp.csv", ["log_b", "inner_min", "inner_max", "transition_min", "transition_max",
                             "outer_min", "outer_max", "C_measured"], rows)
    out.manifest(study="sin-warp", eps=eps)
    return 0


def _study_picard(cfg, out, rng, threads):
    from .gluing_lab import FixedPointProblem, Refusal, gluing_system, picard_solve
    system = cfg.get("system", "scalar")
    if system == "scalar":
        a, sign = float(cfg.get("a", 0.1)), float(cfg.get("sign", -1))
        r0 = cfg.get("r0", "inf")
        try:
            r0 = float(r0)
        except (TypeError, ValueError):
            raise ConfigError("field 'r0': expected a number or inf")
        prob = FixedPointProblem(lambda x: a + x + sign * x * x, lambda v: v, float(cfg.get("c", 1.0)),
                                 float(cfg.get("q", 1.0)), r0, dim=1)
    else:
        prob = gluing_system(float(cfg.get("t", 1e-6)), int(cfg.get("n_modes", 6)), seed=int(rng.integers(2 ** 31))).problem
    try:
        x, cert = picard_solve(prob, target=float(cfg.get("target", 1e-13)),
                               multistart=int(cfg.get("multistart", 8)), seed=int(rng.integers(2 ** 31)))
    except Refusal as e:
        rec = e.record
        out.csv("picard.csv", ["quantity", "value"], [("status", "refused")] + sorted(rec.items()))
        out.manifest(study="picard", system=system, status="refused")
        return 1
    rows = [("status", "converged"), ("r", cert.r), ("q", cert.q), ("c", cert.c), ("phi0", cert.phi0),
            ("iterations", cert.iterations), ("residual", cert.residual),
            ("uniqueness_radius", cert.uniqueness_radius), ("multistart_spread", cert.multistart_spread)]
    rows += [("x%d" % i, v) for i, v in enumerate(np.atleast_1d(x))]
    out.csv("picard.csv", ["quantity", "value"], rows)
    out.manifest(study="picard", system=system, status="converged")
    return 0


STUDY_FUNCS = {"annulus": _study_annulus, "residual-scaling": _study_residual, "pinching": _study_pinching,
               "sin-warp": _study_sinwarp, "picard": _study_picard}


def cmd_study(cfg, out, rng, threads):
    return STUDY_FUNCS[cfg["study"]](cfg, out, rng, threads)


DISPATCH = {"obstruction": cmd_obstruction, "hitchin-thorpe": cmd_hitchin_thorpe, "study": cmd_study,
            "catalog": cmd_catalog}


def run(cfg, out_dir, seed=0, threads=1, text=""):
    validate_config(cfg, text)
    out = Output(out_dir, cfg, seed, threads)
    rng = np.random.default_rng(seed)
    return DISPATCH[cfg["command"]](cfg, out, rng, threads)


def build_parser():
    p = argparse.ArgumentParser(prog="einorb", description=__doc__.split("\n")[0])
    p.add_argument("command", nargs="?", choices=COMMANDS,
                   help="overrides the config's 'command' field when given")
    p.add_argument("--config", required=True, help="YAML run config")
    p.add_argument("--out", default="einorb_out", help="output directory")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized inputs (u64)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for parameter sweeps")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    from .cone_geometry import GroupError, StrictnessError
    from .sphere_harmonics import InvarianceError
    from .topology_checker import InconsistentPieceError, TreeError
    try:
        cfg, text = load_config(args.config)
        if args.command and args.command != cfg["command"]:
            raise ConfigError("command %r on the command line disagrees with config command %r"
                              % (args.command, cfg["command"]))
        return run(cfg, args.out, args.seed, args.threads, text)
    except (ConfigError, TreeError, InconsistentPieceError, GroupError, StrictnessError, InvarianceError) as e:
        print("error: %s" % e, file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as e:
        print("error: %s" % e, file=sys.stderr)
        if "refine" in str(e) or "resolved" in str(e):
            print("hint: increase n_shells or the quadrature degree", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
