"""Bounded-overlap coverings of corner domains, partitions of unity and IMS lower bounds.

The explicit one-dimensional, product, annulus and dyadic-cone constructions
work on abstract cells; build_covering assembles a ball covering of a
straight polyhedron with a 2^d-tree whose balls are centred on the lowest
stratum near each cell, so every dilated ball is an identity chart.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .quasimodes_bounds import CHI_SLOPE, chi, chi_d


class CoveringError(ValueError):
    pass


@dataclass(frozen=True)
class CoveringParams:
    K: float
    L: int
    rho_max: float
    kappa: float

    def __post_init__(self):
        if not self.K >= 1:
            raise CoveringError("dilation factor must be at least 1")
        if not 0 < self.kappa <= 1:
            raise CoveringError("radius-floor ratio must lie in (0, 1]")


_CHUNK = 4096


def _pairs(x, centers, radius):
    """Chunks (offset, i, j, |x_i - c_j|) of all pairs within radius."""
    tree = cKDTree(centers)
    for lo in range(0, len(x), _CHUNK):
        sub = cKDTree(x[lo:lo + _CHUNK])
        m = sub.sparse_distance_matrix(tree, radius, output_type="ndarray")
        yield lo, m["i"] + lo, m["j"], m["v"]


@dataclass
class Covering:
    """Centres and radii; cells are balls unless `cell_map` says otherwise.

    For product-type cells, `to_cell` maps points to cell coordinates where
    the cell of (x, r) is the product ball-in-section times interval, tested
    with `cell_member`.
    """

    centers: np.ndarray
    radii: np.ndarray
    rho: float
    params: CoveringParams
    cells: str = "ball"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        if self.centers.shape[0] != len(self.radii) and self.centers.shape[1] == len(self.radii):
            self.centers = self.centers.T
        self.radii = np.asarray(self.radii, dtype=float)

    def __len__(self):
        return len(self.radii)

    @property
    def dim(self):
        return self.centers.shape[1]

    def counts(self, x, dilate=1.0):
        """Number of closed balls B(c, dilate r) containing each point."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(len(x), dtype=int)
        for lo, i, j, d in _pairs(x, self.centers, dilate * self.radii.max() * (1 + 1e-12)):
            hit = d <= dilate * self.radii[j] * (1 + 1e-12)
            out[lo:lo + _CHUNK] += np.bincount(i[hit] - lo, minlength=min(_CHUNK, len(x) - lo))
        return out

    def overlap_bound(self):
        """Max over balls of the number of dilated balls meeting its dilation (bounds any point count)."""
        K, r = self.params.K, self.radii
        best = 0
        for lo, i, j, d in _pairs(self.centers, self.centers, 2 * K * r.max()):
            hit = d < K * (r[i] + r[j])
            best = max(best, int(np.bincount(i[hit] - lo).max()))
        return best

    def to_json(self):
        return {"rho": self.rho, "K": self.params.K, "L": self.params.L,
                "rho_max": self.params.rho_max, "kappa": self.params.kappa, "cells": self.cells,
                "balls": [[*map(float, c), float(r)] for c, r in zip(self.centers, self.radii)],
                "meta": {k: v for k, v in self.meta.items()
                         if isinstance(v, (int, float, str, bool, list))}}

    def dumps(self):
        return json.dumps(self.to_json(), sort_keys=True)


# ---------------------------------------------------------------------------
# explicit constructions


def covering_1d(ell, delta, rho, K) -> Covering:
    """Covering of [0, ell) at a boundary point 0: one ball of radius rho, then radius rho/K."""
    rho_max = min(ell / K, delta)
    if rho > rho_max * (1 + 1e-12):
        raise CoveringError(f"rho={rho} exceeds the admissible rho_max={rho_max}")
    xs, rs = [0.0], [rho]
    J = max(1, math.ceil((ell - rho) * K / (2 * rho) - 0.5))
    while rho + (2 * J - 1) * rho / K >= ell and J > 1:
        J -= 1
    for j in range(1, J + 1):
        xs.append(rho + (2 * j - 1) * rho / K)
        rs.append(rho / K)
    if xs[-1] < ell - rho / K:
        xs.append(rho + 2 * J * rho / K)
        rs.append(rho / K)
    params = CoveringParams(K=K, L=int(math.ceil(K)) + 2, rho_max=rho_max, kappa=1.0 / K)
    return Covering(np.array(xs)[:, None], np.array(rs), rho, params,
                    meta={"interval": [0.0, ell], "delta": delta})


def covering_interval(a, b, rho, K) -> Covering:
    """Closed interval [a, b] with boundary points at both ends: two one-sided coverings merged."""
    half = 0.5 * (b - a)
    c1 = covering_1d(half, half, rho, K)
    x = np.concatenate([a + c1.centers[:, 0], b - c1.centers[:, 0]])
    r = np.concatenate([c1.radii, c1.radii])
    keep = np.ones(len(x), dtype=bool)
    keep[len(c1):] = ~np.isclose(x[len(c1):], a + half) | ~np.isin(
        np.round(x[len(c1):], 12), np.round(x[:len(c1)], 12))
    params = CoveringParams(K=K, L=2 * c1.params.L, rho_max=c1.params.rho_max, kappa=1.0 / K)
    return Covering(x[keep][:, None], r[keep], rho, params, meta={"interval": [a, b]})


def covering_product(base: Covering, extent=1.0) -> Covering:
    """Base cells times equidistant z-points in [-extent, extent] with spacing 2 r_y.

    Cell of (y, z, r): B(y, r) x (z - r, z + r), contained between B(x, r)
    and B(x, sqrt(2) r).
    """
    cs, rs = [], []
    for y, r in zip(base.centers, base.radii):
        n = int(math.floor(extent / r + 1e-12))
        s = extent - n * r
        z = -extent + s + 2 * r * np.arange(n + 1)
        z = z[z <= extent - s + 1e-12]
        cs.append(np.column_stack([np.repeat(y[None], len(z), axis=0), z]))
        rs.append(np.full(len(z), r))
    p = base.params
    params = CoveringParams(K=p.K, L=int(p.L * math.ceil(p.K)), rho_max=p.rho_max, kappa=p.kappa)
    return Covering(np.vstack(cs), np.concatenate(rs), base.rho, params, cells="product",
                    meta={"a": 1.0, "a_prime": math.sqrt(2.0), "extent": extent})


def product_member(cov: Covering, x, dilate=1.0, idx=None):
    """Boolean (n, len(idx)): x in the product cell of the selected elements, dilated about their centres."""
    x = np.atleast_2d(x)
    idx = np.arange(len(cov)) if idx is None else np.atleast_1d(idx)
    c, r = cov.centers[idx], cov.radii[idx] * dilate
    dy = np.linalg.norm(x[:, None, :-1] - c[None, :, :-1], axis=2)
    dz = np.abs(x[:, None, -1] - c[None, :, -1])
    return (dy <= r[None] * (1 + 1e-12)) & (dz <= r[None] * (1 + 1e-12))


def product_counts(cov: Covering, x, dilate=1.0):
    """Number of (dilated) product cells containing each point."""
    x = np.atleast_2d(x)
    tree = cKDTree(cov.centers)
    out = np.zeros(len(x), dtype=int)
    reach = math.sqrt(2.0) * dilate * cov.radii.max() * (1 + 1e-9)
    for i, nb in enumerate(tree.query_ball_point(x, reach)):
        if nb:
            out[i] = int(product_member(cov, x[i], dilate, np.asarray(nb)).sum())
    return out


@dataclass
class SectionChart:
    """Section coordinates y of directions: flat sector (angle) or gnomonic chart of a cone."""

    kind: str                      # "angle" or "gnomonic"
    center: np.ndarray | None = None
    t1: np.ndarray | None = None
    t2: np.ndarray | None = None

    def embed(self, y):
        y = np.atleast_2d(y)
        if self.kind == "angle":
            return np.column_stack([np.cos(y[:, 0]), np.sin(y[:, 0])])
        p = self.center + y[:, :1] * self.t1 + y[:, 1:2] * self.t2
        return p / np.linalg.norm(p, axis=1, keepdims=True)

    def coords(self, u):
        u = np.atleast_2d(u)
        if self.kind == "angle":
            return np.arctan2(u[:, 1], u[:, 0])[:, None]
        w = u @ self.center
        return np.column_stack([(u @ self.t1) / w, (u @ self.t2) / w])


def covering_annulus(section: Covering, chart: SectionChart) -> Covering:
    """Push the product covering of section x (-1, 1) through T(y, z) = 2^z y."""
    prod = covering_product(section, 1.0)
    y, z = prod.centers[:, :-1], prod.centers[:, -1]
    pts = chart.embed(y) * (2.0 ** z)[:, None]
    cov = Covering(pts, prod.radii, section.rho, prod.params, cells="annulus",
                   meta={"a": math.log(2) / 8, "a_prime": 8 * math.sqrt(2) * math.log(2),
                         "product": prod, "chart": chart, "shell": np.zeros(len(z), dtype=int)})
    return cov


def _to_product(cov: Covering, x, scale=1.0):
    x = np.atleast_2d(x) / scale
    nx = np.linalg.norm(x, axis=1)
    ok = nx > 0
    yz = np.full((len(x), cov.meta["product"].dim), np.inf)
    yz[ok, :-1] = cov.meta["chart"].coords(x[ok] / nx[ok, None])
    yz[ok, -1] = np.log2(nx[ok])
    return yz


def annulus_member(cov: Covering, x, dilate=1.0, scale=1.0, idx=None):
    """Membership (n, len(idx)) of points in the T-images of the product cells (scaled by `scale`)."""
    yz = _to_product(cov, x, scale)
    m = product_member(cov.meta["product"], np.where(np.isfinite(yz), yz, 1e300), dilate, idx)
    return m


def annulus_counts(cov: Covering, x, dilate=1.0, scale=1.0):
    yz = _to_product(cov, x, scale)
    fin = np.isfinite(yz).all(axis=1)
    out = np.zeros(len(yz), dtype=int)
    if fin.any():
        out[fin] = product_counts(cov.meta["product"], yz[fin], dilate)
    return out


def annulus_overlap_N(cov: Covering, n=20000, seed=0):
    """Integer N with the annulus overlap count at most N L K on a sample."""
    prod = cov.meta["product"]
    rng = np.random.default_rng(seed)
    lo, hi = prod.centers.min(0), prod.centers.max(0)
    yz = lo + (hi - lo) * rng.random((n, prod.dim))
    cnt = product_counts(prod, yz, prod.params.K).max()
    p = cov.params
    return max(1, int(math.ceil(cnt / (p.L * p.K)))), int(cnt)


def covering_cone(section_builder, chart: SectionChart, rho, rho_max_section=1.0) -> Covering:
    """Dyadic stack of scaled annulus coverings plus the apex ball B(0, rho).

    section_builder(rho_s) returns a section covering at section radius rho_s.
    """
    if not 0 < rho <= 1:
        raise CoveringError("rho must lie in (0, 1]")
    M = int(math.floor(-math.log2(rho) + 1e-12))
    while 2.0 ** (-M - 1) >= rho:
        M += 1
    shells, cs, rs, ms = [], [], [], []
    for m in range(M + 1):
        sec = section_builder(2.0**m * rho_max_section * rho)
        ann = covering_annulus(sec, chart)
        shells.append(ann)
        cs.append(ann.centers * 2.0 ** (-m))
        rs.append(ann.radii * 2.0 ** (-m))
        ms.append(np.full(len(ann), m))
    dim = cs[0].shape[1]
    centers = np.vstack([np.zeros((1, dim))] + cs)
    radii = np.concatenate([[rho]] + rs)
    p = shells[0].params
    N = max(annulus_overlap_N(s)[0] for s in shells)
    L = 3 * N * p.L * int(math.ceil(p.K)) + 1
    kappa = min(p.kappa * rho_max_section, float(radii.min() / rho))
    params = CoveringParams(K=p.K, L=L, rho_max=1.0, kappa=kappa)
    return Covering(centers, radii, rho, params, cells="cone",
                    meta={"M": M, "shells": shells, "N": N,
                          "shell": np.concatenate([[-1]] + ms)})


def cone_counts(cov: Covering, x, dilate=1.0):
    """Number of cone-covering cells (apex ball plus scaled annulus cells) containing each point."""
    x = np.atleast_2d(x)
    out = (np.linalg.norm(x, axis=1) <= dilate * cov.radii[0] * (1 + 1e-12)).astype(int)
    for m, ann in enumerate(cov.meta["shells"]):
        out += annulus_counts(ann, x, dilate, scale=2.0 ** (-m))
    return out


def sector_section(alpha, K):
    """Section builder of the flat sector {0 < phi < alpha}: two-sided interval coverings in the angle."""
    chart = SectionChart("angle")
    rho_max = 0.5 * alpha / K
    return (lambda rs: covering_interval(0.0, alpha, min(rs, rho_max), K)), chart, rho_max


def cone_section(directions, K):
    """Section builder of a convex polyhedral cone through its gnomonic chart (a straight polygon)."""
    D = np.asarray(directions, dtype=float)
    D = D / np.linalg.norm(D, axis=1, keepdims=True)
    c = D.sum(axis=0)
    c = c / np.linalg.norm(c)
    t1 = np.cross(c, D[0])
    t1 = t1 / np.linalg.norm(t1)
    t2 = np.cross(c, t1)
    chart = SectionChart("gnomonic", c, t1, t2)
    P = chart.coords(D)
    feat = polygon_features(P)
    edge = min(np.linalg.norm(P[i] - P[(i + 1) % len(P)]) for i in range(len(P)))
    inr = float(feat.boundary_distance(P.mean(axis=0)[None])[0])
    rho_max = min(edge, 2 * inr) / K

    def build(rs):
        rs = min(rs, rho_max)
        C, R = tree_covering(feat, rs, K)
        cov = Covering(C, R, rs, CoveringParams(K=K, L=1, rho_max=rho_max,
                                                 kappa=float(R.min() / rs)))
        cov.params = CoveringParams(K=K, L=cov.overlap_bound(), rho_max=rho_max,
                                    kappa=cov.params.kappa)
        return cov

    return build, chart, rho_max


# ---------------------------------------------------------------------------
# tree coverings of straight polytopes


class _Features:
    """Vertices, segments and (3D) polygons of a straight polytope boundary."""

    def __init__(self, vertices, segments, polygons=(), normals=(), inside=None):
        self.V = np.asarray(vertices, dtype=float)
        self.S = [tuple(s) for s in segments]
        self.P = [list(p) for p in polygons]
        self.N = np.asarray(normals, dtype=float)
        self.inside = inside
        self.scale = float(np.ptp(self.V, axis=0).max())
        self._frames = []
        for p, n in zip(self.P, self.N):
            o = self.V[p[0]]
            t1 = self.V[p[1]] - o
            t1 = t1 / np.linalg.norm(t1)
            t2 = np.cross(n, t1)
            Q = self.V[p] - o
            self._frames.append((o, t1, t2, np.stack([Q @ t1, Q @ t2], 1)))

    @property
    def n_features(self):
        return len(self.V) + len(self.S) + len(self.P)

    def _seg(self, X, a, b):
        ab = b - a
        t = np.clip((X - a) @ ab / (ab @ ab), 0.0, 1.0)
        q = a + t[:, None] * ab
        return np.linalg.norm(X - q, axis=1), q

    def _poly(self, X, k):
        o, t1, t2, P2 = self._frames[k]
        n = self.N[k]
        d = X - o
        h = d @ n
        p2 = np.stack([d @ t1, d @ t2], 1)
        ins = _point_in_polygon(p2, P2)
        dist = np.where(ins, np.abs(h), np.inf)
        q = X - h[:, None] * n
        poly = self.P[k]
        for a, b in zip(poly, poly[1:] + poly[:1]):
            ds, qs = self._seg(X, self.V[a], self.V[b])
            better = ~ins & (ds < dist)
            dist = np.where(better, ds, dist)
            q = np.where(better[:, None], qs, q)
        return dist, q

    def distances(self, X):
        """(n, n_features) distances and the nearest points per feature class."""
        X = np.atleast_2d(X)
        cols = [np.linalg.norm(X - v, axis=1) for v in self.V]
        near_v = self.V[np.argmin(np.stack(cols, 1), axis=1)] if len(self.V) else None
        best_s, near_s = np.full(len(X), np.inf), X.copy()
        for a, b in self.S:
            d, q = self._seg(X, self.V[a], self.V[b])
            cols.append(d)
            m = d < best_s
            best_s = np.where(m, d, best_s)
            near_s = np.where(m[:, None], q, near_s)
        best_p, near_p = np.full(len(X), np.inf), X.copy()
        for k in range(len(self.P)):
            d, q = self._poly(X, k)
            cols.append(d)
            m = d < best_p
            best_p = np.where(m, d, best_p)
            near_p = np.where(m[:, None], q, near_p)
        return np.stack(cols, 1), near_v, near_s, near_p

    def chart_radius(self, X, tol=None):
        """Distance to the features whose closure does not contain the point."""
        tol = 1e-9 * max(1.0, self.scale) if tol is None else tol
        D = self.distances(X)[0]
        D = np.where(D > tol, D, np.inf)
        return D.min(axis=1)

    def boundary_distance(self, X):
        D = self.distances(X)[0]
        return D[:, len(self.V):].min(axis=1) if D.shape[1] > len(self.V) else D.min(axis=1)


def _point_in_polygon(p, P):
    ins = np.zeros(len(p), dtype=bool)
    for a, b in zip(P, np.roll(P, -1, axis=0)):
        cross = (a[1] > p[:, 1]) != (b[1] > p[:, 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = a[0] + (p[:, 1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
        ins ^= cross & (p[:, 0] < xc)
    return ins


def domain_features(dom) -> _Features:
    return _Features(dom.vertices, dom.edges, dom.faces, dom.normals, inside=dom.inside_fast)


def polygon_features(P) -> _Features:
    """Planar polygon (vertices in order) as a 2D straight polytope."""
    P = np.asarray(P, dtype=float)
    n = len(P)

    def inside(X):
        X = np.atleast_2d(X)
        ins = _point_in_polygon(X, P)
        if not ins.all():
            f = _Features(P, [(i, (i + 1) % n) for i in range(n)])
            ins |= f.boundary_distance(X) <= 1e-12
        return ins

    return _Features(P, [(i, (i + 1) % n) for i in range(n)], inside=inside)


def tree_covering(feat: _Features, rho, K, max_depth=10):
    """Balls covering every cell of a 2^d-tree over the bounding box.

    A cell is accepted with the smallest admissible ball among those centred at
    the nearest vertex, nearest segment point, nearest polygon point or the
    cell centre (when inside): the ball must contain the cell, have radius at
    most rho and K r at most the chart radius of its centre.
    """
    d = feat.V.shape[1]
    lo, hi = feat.V.min(0), feat.V.max(0)
    s0 = 2 * rho / math.sqrt(d)
    n0 = np.maximum(1, np.ceil((hi - lo) / s0).astype(int))
    axes = [lo[a] + s0 * (np.arange(n0[a]) + 0.5) for a in range(d)]
    C = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d)
    s = s0
    corners = np.array(np.meshgrid(*[[-0.5, 0.5]] * d, indexing="ij")).reshape(d, -1).T
    balls_c, balls_r = [], []
    for depth in range(max_depth + 1):
        if len(C) == 0:
            break
        half_diag = s * math.sqrt(d) / 2
        ins = feat.inside(C)
        D, nv, ns, npoly = feat.distances(C)
        bd = D[:, len(feat.V):].min(axis=1)
        keep = ins | (bd <= half_diag * (1 + 1e-9))
        C, ins, nv, ns, npoly = C[keep], ins[keep], nv[keep], ns[keep], npoly[keep]
        cands = [nv, ns] + ([npoly] if feat.P else []) + [C]
        best_r = np.full(len(C), np.inf)
        best_c = np.zeros_like(C)
        for k, P in enumerate(cands):
            r = np.max(np.linalg.norm(C[:, None, :] + s * corners[None] - P[:, None, :], axis=2),
                       axis=1) * (1 + 1e-9)
            ok = np.isfinite(P).all(axis=1) & (r <= rho * (1 + 1e-12))
            if k == len(cands) - 1:
                ok &= ins
            if ok.any():
                cr = np.full(len(C), -np.inf)
                cr[ok] = feat.chart_radius(P[ok])
                ok &= K * r <= cr * (1 - 1e-9)
            better = ok & (r < best_r)
            best_r = np.where(better, r, best_r)
            best_c = np.where(better[:, None], P, best_c)
        acc = np.isfinite(best_r)
        balls_c.append(best_c[acc])
        balls_r.append(best_r[acc])
        rest = C[~acc]
        if depth == max_depth and len(rest):
            raise CoveringError(f"{len(rest)} cells left uncovered at the depth limit")
        s = s / 2
        C = (rest[:, None, :] + s * corners[None] * 1.0).reshape(-1, d) if len(rest) else rest
    centers = np.vstack(balls_c)
    radii = np.concatenate(balls_r)
    return _prune(centers, radii)


def _prune(centers, radii):
    """Merge equal centres (keep the largest radius) and drop balls inside another ball."""
    key = np.round(centers, 10)
    _, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    m = inv.max() + 1
    R = np.full(m, -np.inf)
    np.maximum.at(R, inv, radii)
    Cn = np.zeros((m, centers.shape[1]))
    Cn[inv] = centers
    order = np.argsort(-R)
    Cn, R = Cn[order], R[order]
    tree = cKDTree(Cn)
    alive = np.ones(len(R), dtype=bool)
    for j in range(len(R)):
        if not alive[j]:
            continue
        for k in tree.query_ball_point(Cn[j], R[j]):
            if k != j and alive[k] and np.linalg.norm(Cn[k] - Cn[j]) + R[k] <= R[j] * (1 + 1e-12):
                alive[k] = False
    return Cn[alive], R[alive]


def rho_max_domain(dom, K):
    """Feature-size surrogate: min edge length, twice the min face inradius and the vertex chart radii over K."""
    feat = domain_features(dom)
    V = dom.vertices
    edge = min(np.linalg.norm(V[i] - V[j]) for i, j in dom.edges)
    inr = math.inf
    for k, f in enumerate(dom.faces):
        o, t1, t2, P2 = feat._frames[k]
        cen = P2.mean(axis=0)
        pts = o + cen[0] * t1 + cen[1] * t2
        inr = min(inr, float(min(feat._seg(pts[None], V[a], V[b])[0][0]
                                 for a, b in zip(f, f[1:] + f[:1]))))
    vert = float(feat.chart_radius(V).min())
    return min(edge, 2 * inr, vert) / K


def build_covering(dom, rho, K=2.0, check=True, n_check=50, seed=0) -> Covering:
    rmax = rho_max_domain(dom, K)
    if rho > rmax * (1 + 1e-12):
        raise CoveringError(f"rho={rho} exceeds rho_max={rmax:.6g}")
    feat = domain_features(dom)
    C, R = tree_covering(feat, rho, K)
    kappa = float(R.min() / rho)
    cov = Covering(C, R, rho, CoveringParams(K=K, L=1, rho_max=rmax, kappa=kappa))
    L = cov.overlap_bound()
    cov.params = CoveringParams(K=K, L=L, rho_max=rmax, kappa=kappa)
    cov.meta.update(domain=True, n_balls=len(R))
    if check:
        cov.meta["checks"] = check_covering(cov, dom, n_check, seed)
    return cov


def sample_domain(dom, n=50, seed=0, jitter=True):
    """n^3 grid samples of the bounding box kept inside the closed domain (jittered, seeded)."""
    V = dom.vertices
    lo, hi = V.min(0), V.max(0)
    t = (np.arange(n) + 0.5) / n
    X = np.stack(np.meshgrid(*[lo[a] + t * (hi[a] - lo[a]) for a in range(3)], indexing="ij"),
                 -1).reshape(-1, 3)
    if jitter:
        X = X + (np.random.default_rng(seed).random(X.shape) - 0.5) * (hi - lo) / n
    X = np.vstack([X, V])
    return X[dom.inside_fast(X)]


def _tc_member(tc, d):
    d = np.atleast_2d(d)
    if tc.kind == "R3":
        return np.ones(len(d), dtype=bool)
    if tc.kind == "half-space":
        return d @ tc.normal >= -1e-12
    if tc.kind == "wedge":
        u = d @ tc.frame.T
        ang = np.arctan2(u[:, 2], u[:, 1])
        rad = np.hypot(u[:, 1], u[:, 2])
        return (np.abs(ang) <= tc.alpha / 2 + 1e-9) | (rad <= 1e-12)
    return tc.cone.contains(d)


def check_covering(cov: Covering, dom, n=50, seed=0, n_chart=64, max_balls=400):
    """Sampled checks of covering, chart (identity map-neighbourhood) and overlap properties."""
    X = sample_domain(dom, n, seed)
    cnt = cov.counts(X)
    dil = cov.counts(X, cov.params.K)
    rng = np.random.default_rng(seed + 1)
    idx = np.arange(len(cov))
    if len(idx) > max_balls:
        idx = rng.choice(idx, max_balls, replace=False)
    chart_ok = True
    for j in idx:
        c, r = cov.centers[j], cov.params.K * cov.radii[j] * (1 - 1e-6)
        u = rng.normal(size=(n_chart, 3))
        u = u / np.linalg.norm(u, axis=1, keepdims=True) * (rng.random((n_chart, 1)) ** (1 / 3)) * r
        tc = dom.tangent_cone(c)
        a = dom.inside_fast(c + u)
        b = _tc_member(tc, u)
        if np.any(a != b):
            chart_ok = False
            break
    radii_ok = bool(np.all(cov.radii <= cov.rho * (1 + 1e-9))
                    and np.all(cov.radii >= cov.params.kappa * cov.rho * (1 - 1e-9)))
    return {"samples": int(len(X)), "covered": bool(cnt.min() >= 1),
            "chart": bool(chart_ok), "max_overlap": int(dil.max()),
            "overlap_ok": bool(dil.max() <= cov.params.L), "radii_ok": radii_ok}


# ---------------------------------------------------------------------------
# partition of unity and IMS


@dataclass
class PartitionOfUnity:
    cov: Covering
    C: float = float("nan")

    def _bumps(self, x, chunk=4000):
        x = np.atleast_2d(x)
        tree = cKDTree(self.cov.centers)
        reach = 2 * self.cov.radii.max()
        parts = []
        for a in range(0, len(x), chunk):
            nbs = tree.query_ball_point(x[a:a + chunk], reach)
            lens = np.fromiter(map(len, nbs), dtype=int, count=len(nbs))
            rows = a + np.repeat(np.arange(len(nbs)), lens)
            cols = np.fromiter(itertools.chain.from_iterable(nbs), dtype=int,
                               count=int(lens.sum()))
            d = x[rows] - self.cov.centers[cols]
            nd = np.linalg.norm(d, axis=1)
            r = self.cov.radii[cols]
            m = nd < 2 * r
            parts.append((rows[m], cols[m], d[m], nd[m], r[m]))
        if not parts:
            return np.zeros(0, dtype=int), np.zeros(0, dtype=int), np.zeros(0), \
                np.zeros((0, x.shape[1]))
        rows, cols, d, nd, r = (np.concatenate(p) for p in zip(*parts))
        t = nd / r
        xi = chi(t)
        with np.errstate(invalid="ignore", divide="ignore"):
            gx = np.where(nd[:, None] > 0, (chi_d(t) / r / nd)[:, None] * d, 0.0)
        return rows, cols, xi, gx

    def evaluate(self, x):
        """Sparse (rows, cols, chi, grad chi) at the points x."""
        x = np.atleast_2d(x)
        rows, cols, xi, gx = self._bumps(x)
        S = np.bincount(rows, xi**2, minlength=len(x))
        if np.any(S[np.unique(rows)] < 1 - 1e-12) or len(np.unique(rows)) < len(x):
            raise CoveringError("covering property fails at a sample: sum of bumps below 1")
        gS = np.zeros_like(x)
        np.add.at(gS, rows, 2 * xi[:, None] * gx)
        sq = np.sqrt(S[rows])
        ch = xi / sq
        gch = gx / sq[:, None] - (xi / (2 * S[rows] ** 1.5))[:, None] * gS[rows]
        return rows, cols, ch, gch

    def sum_squares(self, x):
        rows, _, ch, _ = self.evaluate(x)
        return np.bincount(rows, ch**2, minlength=len(np.atleast_2d(x)))

    def gradient_sum(self, x):
        """sum_j |grad chi_j|^2 at the points."""
        rows, _, _, g = self.evaluate(x)
        return np.bincount(rows, np.sum(g**2, axis=1), minlength=len(np.atleast_2d(x)))

    def max_gradient(self, x):
        _, _, _, g = self.evaluate(x)
        return float(np.linalg.norm(g, axis=1).max()) if len(g) else 0.0


def partition_of_unity(cov: Covering, samples=None) -> PartitionOfUnity:
    """chi_j = xi_j / sqrt(sum xi^2) with xi_j = 1 on B(x_j, r_j), 0 outside B(x_j, 2 r_j)."""
    pou = PartitionOfUnity(cov)
    if samples is not None:
        g = pou.max_gradient(samples)
        pou.C = g * cov.rho
    return pou


def bump_gradient_constant(cov: Covering):
    """C_bump (1 + L) / kappa: an a-priori bound of rho |grad chi_j|."""
    return CHI_SLOPE * (1 + cov.params.L) / cov.params.kappa


def ims_identity_error(grid, A, h, f, pou: PartitionOfUnity):
    """Relative gap between q(f) and sum_j q(chi_j f) - h^2 sum_j ||f grad chi_j||^2 on a grid."""
    from .core_numerics import l2_norm2, quadratic_form

    x = grid.active_points()
    rows, cols, ch, g = pou.evaluate(x)
    lhs = quadratic_form(A, h, f, grid)
    total = 0.0
    w = grid.node_mass()
    for j in np.unique(cols):
        m = cols == j
        cj = np.zeros(len(x))
        cj[rows[m]] = ch[m]
        total += quadratic_form(A, h, cj * f, grid)
    gsum = np.bincount(rows, np.sum(g**2, axis=1), minlength=len(x))
    loc = h**2 * float(np.sum(w * gsum * np.abs(f) ** 2))
    rhs = total - loc
    return abs(lhs - rhs) / abs(lhs), lhs, rhs


@dataclass
class LowerBoundReport:
    h: float
    delta: float
    lower: float
    E_script: float
    rho: float
    eta: float
    ims_penalty: float
    linearization_penalty: float
    C_ims: float
    n_cells: int
    kind: str = "ims"
    meta: dict = field(default_factory=dict)

    @property
    def penalty(self):
        return self.h * self.E_script - self.lower

    def to_json(self):
        return {"h": self.h, "delta": self.delta, "lower": self.lower, "E_script": self.E_script,
                "deficit": self.penalty,
                "budget_terms": {"ims": self.ims_penalty, "linearization": self.linearization_penalty,
                                 "eta": self.eta, "C_ims": self.C_ims},
                "rho": self.rho, "n_cells": self.n_cells, "kind": self.kind,
                "meta": {k: v for k, v in self.meta.items()
                         if isinstance(v, (int, float, str, bool, list))}}


def ims_lower_bound(dom, B_field, A, h, delta=3 / 8, K=2.0, rho_scale=None, cfg=None,
                    cache=None, n_samples=40, seed=0, per_cell=True):
    """lambda_h >= min_j [(1 - eta) h E_j - (1/eta - 1) s_j] - h^2 max sum_j |grad chi_j|^2.

    E_j is the local energy at the centre of cell j, s_j the squared sup of the
    linearization remainder of A on B(x_j, 2 r_j); all constants are measured.
    """
    from .domain_model import EnergyCache, EnergyConfig, field_at, lowest_energy
    from .quasimodes_bounds import _linear_part

    cfg = cfg or EnergyConfig()
    cache = cache or EnergyCache(cfg)
    rmax = rho_max_domain(dom, K)
    c = 0.9 * rmax if rho_scale is None else rho_scale
    rho = min(c * h**delta, rmax)
    cov = build_covering(dom, rho, K, check=False)
    pou = partition_of_unity(cov)
    X = sample_domain(dom, n_samples, seed)
    X = np.vstack([X, cov.centers])
    gs = pou.gradient_sum(X)
    ims = h**2 * float(gs.max())
    lowest = lowest_energy(B_field, dom, cfg, cache)
    constant = not callable(B_field) or hasattr(B_field, "vector")
    # linearization remainder sup over each dilated cell
    rng = np.random.default_rng(seed)
    s = np.zeros(len(cov))
    if not (getattr(A, "is_linear", False)):
        for j, (x0, r) in enumerate(zip(cov.centers, cov.radii)):
            a0, J = _linear_part(A, x0)
            u = rng.normal(size=(64, 3))
            u = u / np.linalg.norm(u, axis=1, keepdims=True) * 2 * r
            pts = np.vstack([x0 + u, x0 + 0.5 * u])
            rem = A(pts) - a0 - (pts - x0) @ J.T
            s[j] = float(np.max(np.sum(rem**2, axis=1)))
    eta = 0.0 if not s.any() else min(0.5, h ** (2 * delta - 0.5))
    if per_cell:
        E = np.empty(len(cov))
        for j, x0 in enumerate(cov.centers):
            B = field_at(B_field, x0)
            if np.linalg.norm(B) == 0:
                raise CoveringError("vanishing field at a cell centre")
            E[j] = cache.energy(dom.tangent_cone(x0), B)[0]
    else:
        E = np.full(len(cov), lowest.value)
    lin = (1.0 / eta - 1.0) * s if eta > 0 else np.zeros(len(cov))
    cell = (1 - eta) * h * E - lin
    lower = float(cell.min()) - ims
    return LowerBoundReport(h=h, delta=delta, lower=lower, E_script=lowest.value, rho=rho, eta=eta,
                            ims_penalty=ims, linearization_penalty=float(lin.max()),
                            C_ims=ims / h ** (2 - 2 * delta), n_cells=len(cov),
                            meta={"kappa": cov.params.kappa, "L": cov.params.L,
                                  "min_cell_energy": float(E.min()), "constant_field": constant})


__all__ = [
    "Covering", "CoveringError", "CoveringParams", "LowerBoundReport", "PartitionOfUnity",
    "SectionChart", "annulus_member", "annulus_overlap_N", "build_covering",
    "bump_gradient_constant", "check_covering", "cone_counts", "annulus_counts", "product_counts", "covering_1d", "covering_annulus",
    "covering_cone", "covering_interval", "cone_section", "sector_section", "covering_product", "domain_features",
    "ims_identity_error", "ims_lower_bound", "partition_of_unity", "polygon_features",
    "product_member", "rho_max_domain", "sample_domain", "tree_covering",
]
