"""Straight polyhedral domains: strata, tangent cones, chains and the lowest local energy.

Faces are vertex-index polygons; the boundary orientation is made outward
on load.  For a straight polyhedron the tangent cone at a point is the
translate of the domain's local model, so all local data come from the
incident faces.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .cone_spectra import ConeConfig, PolyhedralCone, cone_energy
from .model_problems import TAG_I, TAG_II, full_space_energy, half_space_energy
from .wedge_spectra import WedgeConfig, WedgeModel, wedge_energy

SNAP = 1e-9


class DomainError(ValueError):
    """Invalid polyhedral complex; the message names the violated invariant."""


@dataclass
class PolyhedralDomain:
    vertices: np.ndarray
    faces: list
    normals: np.ndarray = None
    edges: list = None          # (i, j) with i < j
    edge_faces: list = None     # (face a, face b) per edge
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.faces = [list(map(int, f)) for f in self.faces]
        self._validate()

    # -- construction -------------------------------------------------------
    @classmethod
    def from_json(cls, data):
        if isinstance(data, str):
            with open(data) as fh:
                data = json.load(fh)
        try:
            return cls(vertices=data["vertices"], faces=data["faces"])
        except KeyError as exc:
            raise DomainError(f"domain file lacks the key {exc}") from None

    def to_json(self):
        return {"vertices": self.vertices.tolist(), "faces": self.faces}

    @property
    def diameter(self):
        V = self.vertices
        return float(np.max(np.linalg.norm(V[:, None] - V[None], axis=2)))

    def _validate(self):
        V, F = self.vertices, self.faces
        if V.ndim != 2 or V.shape[1] != 3 or len(V) < 4:
            raise DomainError("vertices: need at least four points in R^3")
        if len(F) < 4:
            raise DomainError("faces: need at least four faces")
        for f in F:
            if len(f) < 3 or len(set(f)) != len(f) or min(f) < 0 or max(f) >= len(V):
                raise DomainError(f"face {f}: needs at least three distinct valid vertex indices")
        scale = max(1.0, self.diameter)
        normals = []
        for k, f in enumerate(F):
            P = V[f]
            # Newell normal
            n = np.cross(P, np.roll(P, -1, axis=0)).sum(axis=0)
            if np.linalg.norm(n) == 0:
                raise DomainError(f"face {k}: degenerate polygon")
            n = n / np.linalg.norm(n)
            if np.max(np.abs((P - P.mean(axis=0)) @ n)) > 1e-12 * scale:
                raise DomainError(f"face {k}: polygon not planar to 1e-12")
            normals.append(n)
        uses = {}
        for k, f in enumerate(F):
            for a, b in zip(f, f[1:] + f[:1]):
                uses.setdefault((min(a, b), max(a, b)), []).append((k, (a, b)))
        for e, u in uses.items():
            if len(u) != 2:
                raise DomainError(f"edge {e}: has {len(u)} adjacent faces instead of two")
            if u[0][1] == u[1][1]:
                raise DomainError(f"edge {e}: adjacent faces have inconsistent orientation")
        nv = len({i for f in F for i in f})
        if nv != len(V):
            raise DomainError("vertices: some vertices belong to no face")
        chi = len(V) - len(uses) + len(F)
        if chi != 2:
            raise DomainError(f"Euler relation V - E + F = 2 fails (got {chi})")
        vol = sum(np.linalg.det(V[[f[0], f[i], f[i + 1]]]) for f in F for i in range(1, len(f) - 1))
        self.flags = {"closed": True, "orientable": True, "reoriented": bool(vol < 0)}
        if vol < 0:
            self.faces = F = [f[::-1] for f in F]
            normals = [-n for n in normals]
        self.normals = np.array(normals)
        self.edges = sorted(uses)
        self.edge_faces = [tuple(sorted(k for k, _ in uses[e])) for e in self.edges]
        self.volume = abs(vol) / 6

    # -- geometry -------------------------------------------------------------
    def winding(self, x):
        """Generalized winding number of points x (n, 3) with respect to the boundary."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        total = np.zeros(len(x))
        V = self.vertices
        for f in self.faces:
            for i in range(1, len(f) - 1):
                a, b, c = V[f[0]] - x, V[f[i]] - x, V[f[i + 1]] - x
                la, lb, lc = (np.linalg.norm(v, axis=1) for v in (a, b, c))
                num = np.einsum("ij,ij->i", a, np.cross(b, c))
                den = (la * lb * lc + np.einsum("ij,ij->i", a, b) * lc
                       + np.einsum("ij,ij->i", a, c) * lb + np.einsum("ij,ij->i", b, c) * la)
                total += 2 * np.arctan2(num, den)
        return total / (4 * math.pi)

    @property
    def convex(self):
        V = self.vertices
        return all(np.all((V - V[f[0]]) @ n <= 1e-9 * max(1.0, self.diameter))
                   for f, n in zip(self.faces, self.normals))

    def inside_fast(self, x):
        """Closed-domain membership: half-space tests when convex, winding number otherwise."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if not self.convex:
            return self.winding(x) > 0.5
        V = self.vertices
        ok = np.ones(len(x), dtype=bool)
        for f, n in zip(self.faces, self.normals):
            ok &= (x - V[f[0]]) @ n <= 1e-12
        return ok

    def contains(self, x, tol=SNAP):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        inside = self.winding(x) > 0.5
        if tol > 0 and not inside.all():
            for k in np.flatnonzero(~inside):
                try:
                    self.locate(x[k])
                    inside[k] = True
                except DomainError:
                    pass
        return inside

    def _face_frame(self, k):
        n = self.normals[k]
        P = self.vertices[self.faces[k]]
        t1 = P[1] - P[0]
        t1 = t1 / np.linalg.norm(t1)
        t2 = np.cross(n, t1)
        return P[0], t1, t2

    def in_face(self, k, x, tol=SNAP):
        """x on the closed polygon of face k (within tol of its plane)."""
        x = np.asarray(x, dtype=float)
        o, t1, t2 = self._face_frame(k)
        if abs((x - o) @ self.normals[k]) > tol:
            return False
        P = self.vertices[self.faces[k]] - o
        poly = np.stack([P @ t1, P @ t2], axis=1)
        p = np.array([(x - o) @ t1, (x - o) @ t2])
        inside = False
        for a, b in zip(poly, np.roll(poly, -1, axis=0)):
            if (a[1] > p[1]) != (b[1] > p[1]):
                xc = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
                if p[0] < xc:
                    inside = not inside
        if inside:
            return True
        return any(_seg_dist(p, a, b) <= tol for a, b in zip(poly, np.roll(poly, -1, axis=0)))

    def locate(self, x, tol=SNAP):
        """Stratum (kind, id) of the point x, snapping within tol."""
        x = np.asarray(x, dtype=float)
        dv = np.linalg.norm(self.vertices - x, axis=1)
        if dv.min() <= tol:
            return ("vertex", int(np.argmin(dv)))
        for k, (i, j) in enumerate(self.edges):
            if _seg_dist(x, self.vertices[i], self.vertices[j]) <= tol:
                return ("edge", k)
        for k in range(len(self.faces)):
            if self.in_face(k, x, tol):
                return ("face", k)
        if self.winding(x[None])[0] > 0.5:
            return ("interior", 0)
        raise DomainError(f"point {x.tolist()} lies outside the closed domain")

    def incident_faces(self, v):
        return [k for k, f in enumerate(self.faces) if v in f]

    def incident_edges(self, v):
        return [k for k, e in enumerate(self.edges) if v in e]

    # -- local models ---------------------------------------------------------
    def edge_wedge(self, k):
        """(opening, frame rows (edge, bisector, edge x bisector)) of the tangent wedge along edge k."""
        i, j = self.edges[k]
        e = self.vertices[j] - self.vertices[i]
        e = e / np.linalg.norm(e)
        ts = []
        for f in self.edge_faces[k]:
            face = self.faces[f]
            a = face.index(i)
            forward = face[(a + 1) % len(face)] == j
            t = np.cross(self.normals[f], e if forward else -e)
            ts.append(t / np.linalg.norm(t))
        t1, t2 = ts
        n1 = self.normals[self.edge_faces[k][0]]
        a0 = math.acos(max(-1.0, min(1.0, t1 @ t2)))
        alpha = a0 if (-n1) @ t2 > 0 else 2 * math.pi - a0
        # orient the edge so that positive rotation about it carries t1 to t2
        for ee in (e, -e):
            rot = math.cos(alpha) * t1 + math.sin(alpha) * np.cross(ee, t1)
            if np.linalg.norm(rot - t2) < 1e-8:
                break
        bis = math.cos(alpha / 2) * t1 + math.sin(alpha / 2) * np.cross(ee, t1)
        return alpha, np.vstack([ee, bis, np.cross(ee, bis)])

    def vertex_cone(self, v):
        """Tangent cone at vertex v as a PolyhedralCone (edge directions chained around v).

        A face whose corner at v opens wider than pi gets an extra in-plane
        direction, so that every section side is shorter than pi.
        """
        arcs = {}
        x = self.vertices[v]
        for k in self.incident_faces(v):
            f = self.faces[k]
            a = f.index(v)
            p, n = f[a - 1], f[(a + 1) % len(f)]
            dp = (self.vertices[p] - x) / np.linalg.norm(self.vertices[p] - x)
            dn = (self.vertices[n] - x) / np.linalg.norm(self.vertices[n] - x)
            turn = np.cross(dp, dn) @ self.normals[k]
            mid = None
            if turn > 1e-12:
                mid = -(dp + dn) / np.linalg.norm(dp + dn)
            elif abs(turn) <= 1e-12 and dp @ dn < 0:
                mid = np.cross(dp, self.normals[k])
            arcs[p] = (n, mid)
        start = next(iter(arcs))
        dirs, cur, seen = [], start, []
        for _ in range(len(arcs)):
            seen.append(cur)
            dirs.append(self.vertices[cur] - x)
            nxt, mid = arcs[cur]
            if mid is not None:
                dirs.append(mid)
            cur = nxt
        if cur != start or len(set(seen)) != len(arcs):
            raise DomainError(f"vertex {v}: incident faces do not form a single fan")
        return PolyhedralCone(np.array(dirs), orient="given", allow_flat=True)

    def tangent_cone(self, x, tol=SNAP):
        kind, k = self.locate(x, tol)
        if kind == "interior":
            return TangentCone("R3")
        if kind == "face":
            return TangentCone("half-space", normal=-self.normals[k])
        if kind == "edge":
            alpha, frame = self.edge_wedge(k)
            return TangentCone("wedge", alpha=alpha, frame=frame)
        return TangentCone("cone", cone=self.vertex_cone(k))


def _seg_dist(p, a, b):
    ab = b - a
    t = np.clip((p - a) @ ab / (ab @ ab), 0.0, 1.0)
    return float(np.linalg.norm(p - a - t * ab))


@dataclass
class TangentCone:
    kind: str   # R3, half-space, wedge, cone
    normal: np.ndarray | None = None      # inward, for half-spaces
    alpha: float | None = None
    frame: np.ndarray | None = None
    cone: PolyhedralCone | None = None


# ---------------------------------------------------------------------------
# standard shapes


def cube(a=1.0):
    V = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
                  [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]], dtype=float) * a
    F = [[0, 3, 2, 1], [4, 5, 6, 7], [0, 1, 5, 4], [1, 2, 6, 5], [2, 3, 7, 6], [3, 0, 4, 7]]
    return PolyhedralDomain(V, F)


def tetrahedron():
    V = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    F = [[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]]
    return PolyhedralDomain(V, F)


def prism(height=1.0):
    V = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0],
                  [0, 0, height], [1, 0, height], [0, 1, height]], dtype=float)
    F = [[0, 2, 1], [3, 4, 5], [0, 1, 4, 3], [1, 2, 5, 4], [2, 0, 3, 5]]
    return PolyhedralDomain(V, F)


# ---------------------------------------------------------------------------
# strata and chains

D0 = {"interior": 0, "face": 1, "edge": 2, "vertex": 3}


@dataclass
class Stratum:
    kind: str
    id: int
    d0: int
    carrier: tuple
    incidence: tuple = ()

    @property
    def key(self):
        return f"{self.kind}{self.id}"


def build_strata(dom: PolyhedralDomain):
    out = [Stratum("interior", 0, 0, (), tuple(range(len(dom.faces))))]
    out += [Stratum("face", k, 1, tuple(f), tuple(i for i, ef in enumerate(dom.edge_faces) if k in ef))
            for k, f in enumerate(dom.faces)]
    out += [Stratum("edge", k, 2, e, dom.edge_faces[k]) for k, e in enumerate(dom.edges)]
    out += [Stratum("vertex", v, 3, (v,), tuple(dom.incident_edges(v)))
            for v in range(len(dom.vertices))]
    return out


def stratum_points(dom: PolyhedralDomain, s: Stratum, n=32):
    """Sample points of the relatively open stratum (spacing about size/n)."""
    V = dom.vertices
    if s.kind == "vertex":
        return V[[s.id]]
    if s.kind == "edge":
        i, j = s.carrier
        t = (np.arange(n) + 0.5) / n
        return V[i] + t[:, None] * (V[j] - V[i])
    if s.kind == "face":
        o, t1, t2 = dom._face_frame(s.id)
        P = V[list(s.carrier)] - o
        c1, c2 = P @ t1, P @ t2
        d = max(np.ptp(c1), np.ptp(c2)) / n
        g1, g2 = np.meshgrid(np.arange(c1.min() + d / 2, c1.max(), d),
                             np.arange(c2.min() + d / 2, c2.max(), d), indexing="ij")
        pts = o + g1.ravel()[:, None] * t1 + g2.ravel()[:, None] * t2
        keep = [dom.in_face(s.id, p) and dom.locate(p) == ("face", s.id) for p in pts]
        return pts[np.array(keep, dtype=bool)]
    lo, hi = V.min(axis=0), V.max(axis=0)
    d = (hi - lo).max() / n
    axes = [np.arange(lo[a] + d / 2, hi[a], d) for a in range(3)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 3)
    return pts[dom.winding(pts) > 0.5]


@dataclass
class SingularChainClass:
    origin: np.ndarray
    chain: tuple
    cone: TangentCone


def singular_chain_classes(dom: PolyhedralDomain, x):
    x = np.asarray(x, dtype=float)
    tc = dom.tangent_cone(x)
    kind, k = dom.locate(x)
    r3 = SingularChainClass(x, (tuple(x),), TangentCone("R3"))
    if kind == "interior":
        return [r3]
    if kind == "face":
        return [SingularChainClass(x, (tuple(x),), tc),
                SingularChainClass(x, (tuple(x), "interior"), TangentCone("R3"))]
    if kind == "edge":
        out = [SingularChainClass(x, (tuple(x),), tc)]
        for f in dom.edge_faces[k]:
            out.append(SingularChainClass(x, (tuple(x), f"face{f}"),
                                          TangentCone("half-space", normal=-dom.normals[f])))
        out.append(SingularChainClass(x, (tuple(x), "interior"), TangentCone("R3")))
        return out
    out = [SingularChainClass(x, (tuple(x),), tc)]
    for e in dom.incident_edges(k):
        alpha, frame = dom.edge_wedge(e)
        out.append(SingularChainClass(x, (tuple(x), f"edge{e}"),
                                      TangentCone("wedge", alpha=alpha, frame=frame)))
    for f in dom.incident_faces(k):
        out.append(SingularChainClass(x, (tuple(x), f"face{f}"),
                                      TangentCone("half-space", normal=-dom.normals[f])))
    out.append(SingularChainClass(x, (tuple(x), "interior"), TangentCone("R3")))
    return out


# ---------------------------------------------------------------------------
# local energies


@dataclass(frozen=True)
class EnergyConfig:
    wedge: WedgeConfig = WedgeConfig()
    cone: ConeConfig = ConeConfig()
    samples: int = 32
    tol: float = 1e-3


def field_at(B_field, x):
    if hasattr(B_field, "vector"):
        return np.asarray(B_field.vector, dtype=float)
    if callable(B_field):
        return np.asarray(B_field(np.asarray(x, dtype=float)), dtype=float).reshape(3)
    return np.asarray(B_field, dtype=float).reshape(3)


def _gram_key(vectors, B, cyclic=False):
    """Rotation/reflection/flip invariant description of (vectors, B)."""
    V = np.asarray(vectors, dtype=float)
    variants = []
    if cyclic:
        n = len(V)
        for r in (V, V[::-1]):
            variants += [np.roll(r, -s, axis=0) for s in range(n)]
    else:
        variants = [V]
    keys = []
    for W in variants:
        for sgn in (1.0, -1.0):
            M = np.vstack([W, sgn * np.asarray(B)])
            keys.append(tuple(np.round(M @ M.T, 9).ravel().tolist()))
    return min(keys)


class EnergyCache:
    """Memoized model energies keyed by congruence class of (cone, field)."""

    def __init__(self, cfg: EnergyConfig = EnergyConfig()):
        self.cfg = cfg
        self.store = {}

    def _get(self, key, fn):
        if key not in self.store:
            self.store[key] = fn()
        return self.store[key]

    def energy(self, tc: TangentCone, B):
        """(E, tag) of the model operator on the tangent cone with constant field B."""
        B = np.asarray(B, dtype=float)
        b = float(np.linalg.norm(B))
        if b == 0:
            raise ValueError("vanishing field")
        if tc.kind == "R3":
            return full_space_energy(B).E, TAG_I
        if tc.kind == "half-space":
            ge = half_space_energy(B, tc.normal)
            return ge.E, ge.tag
        if tc.kind == "wedge":
            model = WedgeModel(tc.alpha, tuple(tc.frame @ (B / b)))
            key = ("wedge", round(tc.alpha, 9), _gram_key(np.eye(3), model.b))
            we = self._get(key, lambda: wedge_energy(model, self.cfg.wedge, on_edge="limit"))
            return b * we.E, we.tag
        key = ("cone", _gram_key(tc.cone.vertices, B / b, cyclic=True))
        ce = self._get(key, lambda: cone_energy(B / b, tc.cone, self.cfg.cone))
        return b * ce.E, ce.tag

    def cone_result(self, cone, B):
        b = float(np.linalg.norm(B))
        key = ("cone", _gram_key(cone.vertices, np.asarray(B) / b, cyclic=True))
        return self.store.get(key)


def local_energy(B_field, x, cfg: EnergyConfig = EnergyConfig(), dom: PolyhedralDomain = None,
                 cache: EnergyCache | None = None):
    """Lambda(x) = E(B_x, Pi_x) with B frozen at x."""
    if dom is None:
        raise ValueError("local_energy needs the domain")
    B = field_at(B_field, x)
    if np.linalg.norm(B) == 0:
        raise ValueError(f"field vanishes at {np.asarray(x).tolist()}")
    cache = cache or EnergyCache(cfg)
    return cache.energy(dom.tangent_cone(x), B)[0]


def stratum_extension(dom: PolyhedralDomain, t: Stratum, x0, B_field,
                      cfg: EnergyConfig = EnergyConfig(), cache: EnergyCache | None = None):
    """Lambda_t(x0) for x0 on the boundary of the stratum t: the model of t with B frozen at x0."""
    x0 = np.asarray(x0, dtype=float)
    kind, k = dom.locate(x0)
    if D0[kind] <= t.d0:
        raise DomainError(f"point is not on the boundary of {t.key}")
    if t.kind == "edge":
        i, j = t.carrier
        if kind != "vertex" or k not in (i, j):
            raise DomainError(f"{kind}{k} is not an endpoint of {t.key}")
        alpha, frame = dom.edge_wedge(t.id)
        tc = TangentCone("wedge", alpha=alpha, frame=frame)
    elif t.kind == "face":
        on = (kind == "vertex" and k in t.carrier) or (kind == "edge" and t.id in dom.edge_faces[k])
        if not on:
            raise DomainError(f"{kind}{k} is not on the closure of {t.key}")
        tc = TangentCone("half-space", normal=-dom.normals[t.id])
    elif t.kind == "interior":
        tc = TangentCone("R3")
    else:
        raise DomainError("vertices have no boundary")
    B = field_at(B_field, x0)
    cache = cache or EnergyCache(cfg)
    return cache.energy(tc, B)[0]


@dataclass
class LowestEnergy:
    value: float
    stratum: str
    point: np.ndarray
    tag: str
    chain: tuple
    table: list
    meta: dict = field(default_factory=dict)

    def to_csv(self):
        lines = ["stratum_id,kind,Lambda,tag,samples,wedge_step,cone_step"]
        for r in self.table:
            lines.append(f"{r['stratum_id']},{r['kind']},{r['Lambda']:.12g},{r['tag']},"
                         f"{r['samples']},{self.meta['wedge_step']:g},{self.meta['cone_step']:g}")
        return "\n".join(lines) + "\n"


def _is_constant(B_field):
    return hasattr(B_field, "vector") or not callable(B_field)


def lowest_energy(B_field, dom: PolyhedralDomain, cfg: EnergyConfig = EnergyConfig(),
                  cache: EnergyCache | None = None) -> LowestEnergy:
    """min over the closed domain of E(B_x, Pi_x), with the per-stratum table."""
    cache = cache or EnergyCache(cfg)
    strata = build_strata(dom)
    table, best = [], None
    constant = _is_constant(B_field)
    meta = {"wedge_step": cfg.wedge.step, "cone_step": cfg.cone.step, "constant_field": constant}
    for s in strata:
        pts = stratum_points(dom, s, 1 if constant else cfg.samples)
        if s.kind == "interior" and constant:
            pts = pts[:1] if len(pts) else dom.vertices.mean(axis=0, keepdims=True)
        if s.kind == "face" and constant and len(pts) == 0:
            pts = stratum_points(dom, s, 4)[:1]
        vals, tags = [], []
        for p in pts:
            B = field_at(B_field, p)
            if np.linalg.norm(B) == 0:
                raise ValueError(f"field vanishes at {p.tolist()}")
            tc = TangentCone("R3") if s.kind == "interior" else dom.tangent_cone(p)
            E, tag = cache.energy(tc, B)
            vals.append(E)
            tags.append(tag)
        if not constant and s.kind in ("edge", "face"):
            ends = dom.vertices[list(s.carrier)]
            for p in ends:
                vals.append(stratum_extension(dom, s, p, B_field, cfg, cache))
                tags.append("extension")
        k = int(np.argmin(vals))
        row = {"stratum_id": s.key, "kind": s.kind, "Lambda": float(vals[k]), "tag": tags[k],
               "samples": len(pts)}
        table.append(row)
        point = pts[k] if k < len(pts) else dom.vertices[list(s.carrier)][k - len(pts)]
        if best is None or vals[k] < best[0] - 1e-12:
            best = (float(vals[k]), s, point, tags[k])
    value, s, point, tag = best
    if constant:
        vmin = min(r["Lambda"] for r in table if r["kind"] == "vertex")
        meta["vertex_attains_min"] = vmin <= value + cfg.tol
        if not meta["vertex_attains_min"]:
            warnings.warn("constant field: minimum not attained at a vertex within tolerance")
        if s.kind != "vertex" and meta["vertex_attains_min"]:
            vs = [st for st in strata if st.kind == "vertex"]
            row = min((r for r in table if r["kind"] == "vertex"), key=lambda r: r["Lambda"])
            s = next(st for st in vs if st.key == row["stratum_id"])
            point, tag = dom.vertices[s.id], row["tag"]
    else:
        meta["note"] = "grid minimum; continuity of the local energy between samples is assumed"
    argmin = [r["stratum_id"] for r in table if r["Lambda"] <= value + cfg.tol]
    meta["argmin_strata"] = argmin
    return LowestEnergy(value=value, stratum=s.key, point=np.asarray(point), tag=tag,
                        chain=(s.key,), table=table, meta=meta)


__all__ = [
    "DomainError", "EnergyCache", "EnergyConfig", "LowestEnergy", "PolyhedralDomain",
    "SingularChainClass", "Stratum", "TangentCone", "build_strata", "cube", "field_at",
    "local_energy", "lowest_energy", "prism", "singular_chain_classes", "stratum_extension",
    "stratum_points", "tetrahedron",
]
