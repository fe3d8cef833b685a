"""Hitchin-Thorpe bookkeeping on desingularization trees."""
import csv
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources

import numpy as np
import yaml

from .cone_geometry import GroupAction, make_group


class TreeError(ValueError):
    pass


class InconsistentPieceError(ValueError):
    pass


def _frac(v):
    if isinstance(v, Fraction):
        return v
    if isinstance(v, float):
        f = Fraction(v).limit_denominator(10 ** 6)
        if abs(float(f) - v) > 1e-12:
            raise TreeError("value %r is not a short rational" % v)
        return f
    return Fraction(str(v))


def group_from_spec(spec):
    if isinstance(spec, GroupAction):
        return spec
    spec = dict(spec)
    label = spec.pop("label")
    return make_group(label, **spec)


def same_group(G, H, tol=1e-8):
    """Equal as subgroups of O(4) (same element set)."""
    if G.order != H.order:
        return False
    A = [np.array(g) for g in G.elements]
    for h in H.elements:
        h = np.array(h)
        if not any(np.abs(h - a).max() < tol for a in A):
            return False
    return True


@dataclass
class TopPiece:
    name: str
    role: str                     # "orbifold-root" | "ALE-node"
    chi: Fraction
    tau: Fraction
    group: GroupAction = None     # group at infinity, ALE nodes
    points: dict = field(default_factory=dict)   # singular point id -> GroupAction
    kahler: bool = False
    spin: bool = False
    n_deformations: int = 0
    provenance: str = ""

    def __post_init__(self):
        self.chi = _frac(self.chi)
        self.tau = _frac(self.tau)
        if self.role not in ("orbifold-root", "ALE-node"):
            raise TreeError("unknown role %r for %s" % (self.role, self.name))
        if self.role == "ALE-node" and self.group is None:
            raise TreeError("ALE node %s needs a group at infinity" % self.name)
        slack = 2 * self.chi - 3 * abs(self.tau)
        if slack < 0:
            raise InconsistentPieceError("%s violates 2chi >= 3|tau| (chi=%s, tau=%s)"
                                         % (self.name, self.chi, self.tau))
        if self.kahler and slack != 0:
            raise InconsistentPieceError("%s is flagged Kaehler but 2chi - 3|tau| = %s" % (self.name, slack))

    @property
    def slack(self):
        return 2 * self.chi - 3 * abs(self.tau)


@dataclass
class TreeNode:
    name: str
    piece: TopPiece
    parent: str          # "root" or the name of another node
    point: str
    scale: float
    orientation: int     # +1 or -1


@dataclass
class DesingTree:
    root: TopPiece
    nodes: list = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def _piece(self, name):
        if name == "root":
            return self.root
        for n in self.nodes:
            if n.name == name:
                return n.piece
        raise TreeError("unknown parent %r" % name)

    def validate(self):
        used = set()
        names = set()
        for n in self.nodes:
            if n.name in names or n.name == "root":
                raise TreeError("duplicate node name %r" % n.name)
            names.add(n.name)
            if n.orientation not in (1, -1):
                raise TreeError("orientation of %s must be +1 or -1" % n.name)
            if not 0 < n.scale < 1:
                raise TreeError("relative scale of %s must lie in (0, 1)" % n.name)
            parent = self._piece(n.parent)
            if n.point not in parent.points:
                raise TreeError("%s has no singular point %r" % (parent.name, n.point))
            key = (n.parent, n.point)
            if key in used:
                raise TreeError("singular point %r of %s is used twice" % (n.point, parent.name))
            used.add(key)
            Gp = parent.points[n.point]
            if not same_group(Gp, n.piece.group):
                raise TreeError("group mismatch at %s:%s: point has %s, node %s has %s at infinity"
                                % (parent.name, n.point, Gp.label, n.name, n.piece.group.label))
        self._depths()

    def _depths(self):
        by = {n.name: n for n in self.nodes}
        for n in self.nodes:
            seen = set()
            p = n
            while p.parent != "root":
                if p.name in seen:
                    raise TreeError("cycle through %s" % p.name)
                seen.add(p.name)
                p = by[p.parent]

    def absolute_scales(self):
        """T_j = product of relative scales along the path to the root."""
        by = {n.name: n for n in self.nodes}
        out = {}
        for n in self.nodes:
            T, p = n.scale, n
            while p.parent != "root":
                p = by[p.parent]
                T *= p.scale
            out[n.name] = T
        return out

    def free_points(self):
        used = {(n.parent, n.point) for n in self.nodes}
        out = [("root", p) for p in self.root.points if ("root", p) not in used]
        for n in self.nodes:
            out += [(n.name, p) for p in n.piece.points if (n.name, p) not in used]
        return out


def aggregate(tree):
    chi = tree.root.chi
    tau = tree.root.tau
    for n in tree.nodes:
        chi += n.piece.chi
        tau += n.orientation * n.piece.tau
    if not tree.free_points() and (chi.denominator != 1 or tau.denominator != 1):
        raise TreeError("smooth result with non-integral chi=%s tau=%s" % (chi, tau))
    return chi, tau


@dataclass
class HTVerdict:
    verdict: str          # "equality" | "strict-increase"
    chi: Fraction
    tau: Fraction
    slack: Fraction
    root_slack: Fraction
    obstruction_flag: bool
    diagnosis: str

    def rows(self):
        return [("chi", self.chi), ("tau", self.tau), ("slack 2chi-3|tau|", self.slack),
                ("root slack", self.root_slack), ("verdict", self.verdict),
                ("det R = 0 required", self.obstruction_flag), ("diagnosis", self.diagnosis)]

    def to_csv(self, path, header=None):
        with open(path, "w", newline="") as fh:
            if header:
                fh.write("# %s\n" % header)
            w = csv.writer(fh)
            w.writerow(["quantity", "value"])
            for k, v in self.rows():
                w.writerow([k, str(v)])


def _aligned(tree):
    signs = {int(np.sign(n.orientation * n.piece.tau)) for n in tree.nodes if n.piece.tau != 0}
    if tree.root.tau != 0:
        signs.add(int(np.sign(tree.root.tau)))
    return len(signs) <= 1


def ht_verdict(tree):
    chi, tau = aggregate(tree)
    slack = 2 * chi - 3 * abs(tau)
    root_slack = 2 * tree.root.chi - 3 * abs(tree.root.tau)
    if slack < root_slack:
        raise InconsistentPieceError("slack decreased from %s to %s: inconsistent piece data" % (root_slack, slack))
    kahler = all(n.piece.kahler for n in tree.nodes)
    aligned = _aligned(tree)
    if slack == root_slack:
        if not (kahler and aligned):
            raise InconsistentPieceError("equality reached without Kaehler, aligned nodes")
        return HTVerdict("equality", chi, tau, slack, root_slack, True,
                         "all nodes Kaehler Ricci-flat ALE in the same orientation")
    why = []
    if not kahler:
        why.append("non-Kaehler node(s): " + ", ".join(n.name for n in tree.nodes if not n.piece.kahler))
    if not aligned:
        why.append("orientations disagree")
    return HTVerdict("strict-increase", chi, tau, slack, root_slack, False, "; ".join(why))


def dof_report(tree):
    return tree.root.n_deformations + sum(n.piece.n_deformations for n in tree.nodes)


def spin_applicability(tree, spin):
    """Root singular points where det R = 0 is forced on a spin manifold (groups inside SU(2))."""
    if not spin:
        return []
    return [p for p, G in tree.root.points.items() if G.in_su2()]


# ------------------------------------------------------------------ catalog and config

def _piece_from_dict(name, d):
    d = dict(d)
    points = {}
    pts = d.pop("points", {}) or {}
    if isinstance(pts, dict) and "count" in pts:
        G = group_from_spec(pts["group"])
        points = {"p%d" % (i + 1): G for i in range(int(pts["count"]))}
    else:
        points = {str(k): group_from_spec(v) for k, v in pts.items()}
    grp = d.pop("group", None)
    allowed = {"role", "chi", "tau", "kahler", "spin", "n_deformations", "provenance"}
    bad = set(d) - allowed
    if bad:
        raise TreeError("unknown keys for piece %s: %s" % (name, sorted(bad)))
    return TopPiece(name, d["role"], d["chi"], d["tau"], group_from_spec(grp) if grp else None,
                    points, bool(d.get("kahler", False)), bool(d.get("spin", False)),
                    int(d.get("n_deformations", 0)), d.get("provenance", ""))


def load_catalog(path=None):
    if path is None:
        text = resources.files("einorb").joinpath("data/catalog.yaml").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    raw = yaml.safe_load(text) or {}
    return {name: _piece_from_dict(name, d) for name, d in raw.get("pieces", {}).items()}


def verify_catalog_entry(piece, computed_chi, computed_tau, tol=1e-6):
    """Computed invariants override entries; a conflict is a hard error."""
    if abs(float(piece.chi) - computed_chi) > tol or abs(float(piece.tau) - computed_tau) > tol:
        raise InconsistentPieceError("catalog entry %s (chi=%s, tau=%s) conflicts with computed (%.8f, %.8f)"
                                     % (piece.name, piece.chi, piece.tau, computed_chi, computed_tau))
    return True


def tree_from_config(cfg, catalog=None):
    """cfg: {root: name, pieces: {...optional extra pieces...}, nodes: [{name, piece, parent, point, scale, orientation}]}."""
    catalog = dict(catalog or load_catalog())
    for name, d in (cfg.get("pieces") or {}).items():
        catalog[name] = _piece_from_dict(name, d)
    bad = set(cfg) - {"root", "pieces", "nodes", "spin"}
    if bad:
        raise TreeError("unknown tree keys: %s" % sorted(bad))
    if cfg.get("root") not in catalog:
        raise TreeError("unknown root piece %r" % cfg.get("root"))
    nodes = []
    for i, nd in enumerate(cfg.get("nodes") or []):
        extra = set(nd) - {"name", "piece", "parent", "point", "scale", "orientation"}
        if extra:
            raise TreeError("node %d: unknown keys %s" % (i, sorted(extra)))
        if nd.get("piece") not in catalog:
            raise TreeError("node %d: unknown piece %r" % (i, nd.get("piece")))
        o = nd.get("orientation", "+")
        o = {"+": 1, "-": -1, 1: 1, -1: -1}.get(o)
        if o is None:
            raise TreeError("node %d: orientation must be + or -" % i)
        nodes.append(TreeNode(str(nd.get("name", "n%d" % (i + 1))), catalog[nd["piece"]],
                              str(nd.get("parent", "root")), str(nd["point"]), float(nd.get("scale", 0.01)), o))
    return DesingTree(catalog[cfg["root"]], nodes)


def k3_tree(orientation=1):
    cat = load_catalog()
    nodes = [TreeNode("eh%d" % (i + 1), cat["EH"], "root", "p%d" % (i + 1), 1e-2, orientation) for i in range(16)]
    return DesingTree(cat["T4/Z2"], nodes)


def s4z2_tree(orientations=(1, 1)):
    cat = load_catalog()
    nodes = [TreeNode("eh%d" % (i + 1), cat["EH"], "root", "p%d" % (i + 1), 1e-2, o)
             for i, o in enumerate(orientations)]
    return DesingTree(cat["S4/Z2"], nodes)
