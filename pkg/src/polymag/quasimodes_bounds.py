"""Quasimodes built from model generalized eigenvectors, and upper-bound certificates.

A quasimode at x0 is chi_h(x - c) psi_c(x) with psi_c the model ground state
centred at c = x0 + p (p = 0 sitting, p = r0 h^delta tau sliding), moved into
the gauge of the given potential by exact polynomial phases.  Its Rayleigh
quotient bounds the discrete ground energy from above by min-max.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core_numerics import (PotentialField, UnderResolvedWarning, assemble_magnetic_laplacian,
                            l2_norm2, make_grid, quadratic_form, smallest_eigenpair,
                            symmetric_gauge_matrix)
from .model_problems import (TAG_I, TAG_II, table_eigenvector, tilted_half_space_eigenvector,
                             boundary_angle)

# ---------------------------------------------------------------------------
# cutoffs

RAMP_SHOULDER = 0.25


def _ramp(t):
    """C^3 piecewise-polynomial ramp from 0 to 1 on [0, 1] with slope at most 4/3.

    The slope rises with a quintic smoothstep on [0, a], stays flat, and falls
    symmetrically; a = RAMP_SHOULDER.
    """
    a = RAMP_SHOULDER
    m = 1.0 / (1.0 - a)
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)

    def rise(s):
        s = s / a
        return m * a * (s**6 - 3 * s**5 + 2.5 * s**4)

    out = np.where(t <= a, rise(t), m * (a / 2 + (t - a)))
    return np.where(t >= 1 - a, 1.0 - rise(1.0 - t), out)


def _ramp_d(t):
    a = RAMP_SHOULDER
    m = 1.0 / (1.0 - a)
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)

    def drise(s):
        s = s / a
        return m * (6 * s**5 - 15 * s**4 + 10 * s**3)

    out = np.where(t <= a, drise(t), m)
    return np.where(t >= 1 - a, drise(1.0 - t), out)


def chi(r):
    """Radial profile: 1 on [0, 1], 0 on [2, inf), C^3."""
    return 1.0 - _ramp(np.asarray(r, dtype=float) - 1.0)


def chi_d(r):
    return -_ramp_d(np.asarray(r, dtype=float) - 1.0) * ((np.asarray(r) > 1) & (np.asarray(r) < 2))


CHI_SLOPE = 1.0 / (1.0 - RAMP_SHOULDER)


@dataclass(frozen=True)
class CutoffSpec:
    R: float = 0.45
    delta: float = 3 / 8

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("cutoff radius multiplier must be positive")
        if not 0 <= self.delta <= 0.5:
            raise ValueError("decay exponent must lie in [0, 1/2]")


@dataclass
class Cutoff:
    spec: CutoffSpec
    h: float
    scale: float = 1.0

    @property
    def radius(self):
        """Inner radius R h^delta (times the chart scale)."""
        return self.scale * self.spec.R * self.h ** self.spec.delta

    def __call__(self, x, center):
        r = np.linalg.norm(np.atleast_2d(x) - center, axis=1) / self.radius
        return chi(r)

    def gradient(self, x, center):
        d = np.atleast_2d(x) - center
        nr = np.linalg.norm(d, axis=1)
        r = nr / self.radius
        g = chi_d(r) / self.radius
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(nr[:, None] > 0, d / nr[:, None], 0.0)
        return g[:, None] * unit

    @property
    def gradient_bound(self):
        return CHI_SLOPE / self.radius


def build_cutoff(spec: CutoffSpec, h: float, scale: float = 1.0) -> Cutoff:
    if h <= 0:
        raise ValueError("h must be positive")
    return Cutoff(spec, float(h), float(scale))


# ---------------------------------------------------------------------------
# gauges


def symmetric_gauge_potential(B) -> PotentialField:
    """A(x) = B x x / 2, whose curl is B."""
    return PotentialField.linear(symmetric_gauge_matrix(np.asarray(B, dtype=float)))


def gauge_transform(psi, phi, h):
    """exp(-i phi / h) psi: the state for A + grad(phi) matching psi for A.

    psi and phi are callables on points (n, 3), or psi is an array and phi
    an array of the same shape.
    """
    if callable(psi):
        return lambda x: np.exp(-1j * phi(x) / h) * psi(x)
    return np.exp(-1j * np.asarray(phi) / h) * np.asarray(psi)


def translate(psi, d, A: PotentialField, h):
    """x -> exp(-i <A(d) - A(0), x>/h) psi(x - d), for an affine potential A."""
    if not A.is_linear:
        raise ValueError("translation needs an affine potential")
    d = np.asarray(d, dtype=float)
    shift = A(d[None])[0] - A(np.zeros((1, d.size)))[0]
    return lambda x: np.exp(-1j * (np.atleast_2d(x) @ shift) / h) * psi(np.atleast_2d(x) - d)


def flip(psi):
    """Complex conjugation: the state for -A."""
    if callable(psi):
        return lambda x: np.conj(psi(x))
    return np.conj(psi)


@dataclass
class CubicPolynomial:
    """F(u) = u_l^2 (c . u), l zero-based."""

    ell: int
    coef: np.ndarray

    def __call__(self, u):
        u = np.atleast_2d(u)
        return u[:, self.ell] ** 2 * (u @ self.coef)

    def gradient(self, u):
        u = np.atleast_2d(u)
        g = (u[:, self.ell] ** 2)[:, None] * self.coef[None, :]
        g[:, self.ell] += 2 * u[:, self.ell] * (u @ self.coef)
        return g

    @property
    def is_zero(self):
        return not np.any(self.coef)


def gauge_correction_poly(A: PotentialField, ell: int, eps=1e-3) -> CubicPolynomial:
    """Degree-3 F removing the u_l^2 part of A at 0 while keeping the linear part.

    ell is 1-based.  The second derivatives come from central differences,
    exact for polynomial potentials of degree at most 3.
    """
    if ell not in (1, 2, 3):
        raise ValueError("direction index must be 1, 2 or 3")
    l0 = ell - 1
    e = np.zeros((1, 3))
    e[0, l0] = eps
    vals = [np.asarray(A(x), dtype=float)[0] for x in (e, np.zeros((1, 3)), -e)]
    if not all(np.all(np.isfinite(v)) for v in vals):
        raise ValueError("potential not evaluable near 0: Taylor fit impossible")
    a = (vals[0] - 2 * vals[1] + vals[2]) / (2 * eps**2)
    a = np.where(np.abs(a) < 1e-9, 0.0, a)
    coef = a.copy()
    coef[l0] -= 2.0 / 3.0 * a[l0]
    return CubicPolynomial(l0, coef)


# ---------------------------------------------------------------------------
# model states


@dataclass
class ModelState:
    """Model ground state in frame coordinates u = sqrt(b/h) R (x - c).

    G is the model potential for a unit field in u-coordinates, so the
    physical model potential is M0 (x - c) with M0 = b R^T G R.  The first
    3 - k coordinates of u are free, the last k decaying.
    """

    R: np.ndarray
    G: np.ndarray
    phase_coef: np.ndarray
    k: int
    profile: object
    E: float
    b: float
    kind: str
    meta: dict = field(default_factory=dict)

    @property
    def M0(self):
        return self.b * self.R.T @ self.G @ self.R

    def __call__(self, x, center, h):
        u = math.sqrt(self.b / h) * (np.atleast_2d(x) - center) @ self.R.T
        phase = np.exp(1j * (u @ self.phase_coef))
        prof = self.profile(u) if self.k == 3 else self.profile(u[:, 3 - self.k:])
        return phase * prof


def model_state_from_gev(gev, R_tc=None, b=1.0, kind=""):
    """Wrap a unit-field generalized eigenvector whose frame maps model-cone coordinates to u."""
    R = gev.frame if R_tc is None else gev.frame @ R_tc
    return ModelState(R=np.asarray(R, dtype=float), G=np.asarray(gev.potential_matrix, dtype=float),
                      phase_coef=np.asarray(gev.phase_coef, dtype=float), k=gev.k,
                      profile=gev.profile, E=float(gev.energy), b=float(b), kind=kind,
                      meta=dict(gev.meta))


def full_space_state(B):
    B = np.asarray(B, dtype=float)
    b = float(np.linalg.norm(B))
    gev = table_eigenvector((2, 0), B / b)
    return model_state_from_gev(gev, b=b, kind="full-space")


def half_space_state(B, inward_normal):
    B = np.asarray(B, dtype=float)
    b = float(np.linalg.norm(B))
    th = boundary_angle(B, inward_normal)
    if th == 0.0:
        gev = table_eigenvector((1, 1), B / b, normal=inward_normal)
        return model_state_from_gev(gev, b=b, kind="tangent-half-space")
    if th >= math.pi / 2 - 1e-12:
        raise ValueError("normal field: the half-space has no generalized eigenvector (slide inside)")
    gev = tilted_half_space_eigenvector(B / b, inward_normal)
    return model_state_from_gev(gev, b=b, kind="tilted-half-space")


def wedge_state(B, alpha, frame, wcfg=None):
    from .wedge_spectra import WedgeConfig, WedgeModel, wedge_energy

    B = np.asarray(B, dtype=float)
    b = float(np.linalg.norm(B))
    we = wedge_energy(WedgeModel(alpha, tuple(frame @ (B / b))), wcfg or WedgeConfig(),
                      on_edge="limit")
    if we.tag != TAG_I or we.eigenvector is None:
        raise ValueError("wedge is not in case (i): no generalized eigenvector")
    st = model_state_from_gev(we.eigenvector, R_tc=np.asarray(frame), b=b, kind="wedge")
    st.meta["E_model"] = we.E
    return st


def cone_state(B, cone, ccfg=None):
    from .cone_spectra import ConeConfig, cone_energy

    B = np.asarray(B, dtype=float)
    b = float(np.linalg.norm(B))
    ce = cone_energy(B / b, cone, ccfg or ConeConfig())
    if ce.tag != TAG_I or ce.eigenvector is None:
        raise ValueError("cone is not in case (i): no generalized eigenvector")
    st = model_state_from_gev(ce.eigenvector, b=b, kind="cone")
    st.E = ce.ladder[max(ce.ladder)]
    st.meta.update(grid=ce.eigenvector.profile.grid, step=ce.meta["step"],
                   radius=max(ce.ladder))
    return st


# ---------------------------------------------------------------------------
# quasimodes


@dataclass
class QuasimodeSpec:
    kind: str                 # sitting or sliding
    x0: np.ndarray
    chain: tuple
    state: ModelState
    tau: np.ndarray | None = None
    scale: float = 1.0        # chart scale r0: p = r0 h^delta tau

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.kind not in ("sitting", "sliding"):
            raise ValueError("kind must be sitting or sliding")
        if self.kind == "sliding":
            if len(self.chain) != 2:
                raise ValueError("sliding quasimodes need a chain of length 2")
            t = np.asarray(self.tau, dtype=float)
            if abs(np.linalg.norm(t) - 1) > 1e-9:
                raise ValueError("sliding direction must be a unit vector")
            self.tau = t


def _linear_part(A: PotentialField, x0, eps=1e-4):
    """A(x0) and the Jacobian DA(x0) (central differences, exact for quadratics)."""
    x0 = np.asarray(x0, dtype=float)
    a0 = A(x0[None])[0]
    J = np.zeros((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = eps
        J[:, j] = (A((x0 + e)[None])[0] - A((x0 - e)[None])[0]) / (2 * eps)
    return a0, J


@dataclass
class Quasimode:
    """Evaluable quasimode with its gauge data."""

    spec: QuasimodeSpec
    cutoff: Cutoff
    h: float
    A: PotentialField
    center: np.ndarray
    a0: np.ndarray
    S: np.ndarray
    correction: CubicPolynomial | None = None

    def phase(self, x):
        """phi(x)/h of the gauge change from the model potential to A_lin, plus the sliding phase."""
        d = np.atleast_2d(x) - self.spec.x0
        phi = d @ self.a0 + 0.5 * np.einsum("ij,jk,ik->i", d, self.S, d)
        p = self.center - self.spec.x0
        phi = phi + np.atleast_2d(x) @ (self.spec.state.M0 @ p)
        if self.correction is not None:
            u = d @ self.spec.state.R.T
            phi = phi + self.correction(u)
        return phi / self.h

    def __call__(self, x):
        x = np.atleast_2d(x)
        st = self.spec.state
        return (np.exp(-1j * self.phase(x)) * self.cutoff(x, self.center)
                * st(x, self.center, self.h))

    def remainder(self, x):
        """A - A_lin (minus grad F when corrected) at x."""
        x = np.atleast_2d(x)
        d = x - self.spec.x0
        r = self.A(x) - self.a0 - d @ (self.S + self.spec.state.M0).T
        if self.correction is not None:
            u = d @ self.spec.state.R.T
            r = r - self.correction.gradient(u) @ self.spec.state.R
        return r


def _make_quasimode(spec: QuasimodeSpec, cut: CutoffSpec, A: PotentialField, h, correction=False):
    cutoff = build_cutoff(cut, h, spec.scale)
    p = np.zeros(3) if spec.kind == "sitting" else spec.scale * h ** cut.delta * spec.tau
    a0, J = _linear_part(A, spec.x0)
    S = J - spec.state.M0
    asym = np.max(np.abs(S - S.T))
    if asym > 1e-6 * max(1.0, np.max(np.abs(J))):
        raise ValueError(f"model field does not match curl A at x0 (mismatch {asym:.2e})")
    S = 0.5 * (S + S.T)
    qm = Quasimode(spec, cutoff, float(h), A, spec.x0 + p, a0, S)
    if correction:
        R = spec.state.R
        x0 = spec.x0

        def rem_u(u):
            x = x0 + np.atleast_2d(u) @ R
            r = A(x) - a0 - (x - x0) @ J.T
            return r @ R.T

        ell = 1 if spec.state.k < 3 else None
        if ell is None:
            raise ValueError("cone states have no free direction: use the generic certificate")
        qm.correction = gauge_correction_poly(PotentialField(func=rem_u), ell)
    return qm


def sitting_quasimode(x0, state: ModelState, spec: CutoffSpec, h, A: PotentialField,
                      chain=None, scale=1.0, r_map=None):
    qs = QuasimodeSpec("sitting", x0, chain or (tuple(np.asarray(x0, float)),), state, scale=scale)
    if r_map is not None and 2 * scale * spec.R * h ** spec.delta > r_map + 1e-12:
        raise ValueError("R h^delta exceeds map-neighborhood")
    return _make_quasimode(qs, spec, A, h)


def sliding_quasimode(x0, chain, state: ModelState, tau, spec: CutoffSpec, h, A: PotentialField,
                      scale=1.0, r_map=None, R_max=None):
    if R_max is not None and spec.R >= R_max:
        raise ValueError(f"support condition violated: cutoff multiplier must stay below {R_max:.6g}")
    if r_map is not None and scale * h ** spec.delta * (1 + 2 * spec.R) > r_map + 1e-12:
        raise ValueError("R h^delta exceeds map-neighborhood")
    qs = QuasimodeSpec("sliding", x0, chain, state, tau=tau, scale=scale)
    return _make_quasimode(qs, spec, A, h)


# ---------------------------------------------------------------------------
# evaluation grids


def local_grid(inside, center, radius, step, anchor=None, frame=None, n_sub=2):
    """Grid of the box of half-width `radius` around center, nodes on the lattice through anchor."""
    frame = np.eye(3) if frame is None else np.asarray(frame, dtype=float)
    anchor = center if anchor is None else np.asarray(anchor, dtype=float)
    c = (np.asarray(center) - anchor) @ frame
    lo = step * np.floor((c - radius) / step)
    hi = step * np.ceil((c + radius) / step)
    return make_grid(lo, hi, step, inside, frame=frame, origin=anchor, n_sub=n_sub)


def rayleigh(qm: Quasimode, grid, A=None):
    """(RQ, f) of the quasimode sampled on the active nodes of grid, with the potential A (default qm.A)."""
    x = grid.active_points()
    f = qm(x)
    A = qm.A if A is None else A
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnderResolvedWarning)
        q = quadratic_form(A, qm.h, f, grid)
    return q / l2_norm2(f, grid), f


def budget_terms(qm: Quasimode, grid, f):
    x = grid.active_points()
    w = grid.node_mass()
    nf = np.sum(w * np.abs(f) ** 2)
    st = qm.spec.state
    psi = st(x, qm.center, qm.h) * qm.cutoff(x, qm.center)
    g = np.linalg.norm(qm.cutoff.gradient(x, qm.center), axis=1)
    psi0 = st(x, qm.center, qm.h)
    rho = float(np.sum(w * (g * np.abs(psi0)) ** 2) / np.sum(w * np.abs(psi) ** 2))
    rem = qm.remainder(x)
    a = float(math.sqrt(np.sum(w * np.sum(rem**2, axis=1) * np.abs(f) ** 2) / nf))
    return rho, a


# ---------------------------------------------------------------------------
# certificates


@dataclass
class BoundCertificate:
    h: float
    delta: float
    RQ: float
    E_script: float
    kind: str
    chain: tuple
    rho_h: float
    a_h: float
    a_hat_h: float | None = None
    lambda_h: float | None = None
    RQ_same_grid: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def excess(self):
        return self.RQ - self.h * self.E_script

    @property
    def minmax_ok(self):
        if self.lambda_h is None or self.RQ_same_grid is None:
            return None
        return self.lambda_h <= self.RQ_same_grid + 1e-8 * max(1.0, abs(self.lambda_h))

    def to_json(self):
        return {"h": self.h, "delta": self.delta, "RQ": self.RQ, "E_script": self.E_script,
                "excess": self.excess,
                "budget_terms": {"rho_h": self.rho_h, "a_h": self.a_h, "a_hat_h": self.a_hat_h},
                "kind": self.kind, "chain": [str(c) for c in self.chain],
                "lambda_h": self.lambda_h, "RQ_same_grid": self.RQ_same_grid,
                "meta": {k: v for k, v in self.meta.items() if _jsonable(v)}}


def _jsonable(v):
    return isinstance(v, (int, float, str, bool, type(None), list, tuple))


def domain_grid(dom, step, n_sub=None):
    """Grid of the whole domain with Neumann boundary, nodes on the lattice through the first vertex."""
    V = dom.vertices
    lo = step * np.floor((V.min(axis=0) - V[0]) / step)
    hi = step * np.ceil((V.max(axis=0) - V[0]) / step)
    return make_grid(lo, hi, step, dom.inside_fast, origin=V[0], n_sub=n_sub)


def direct_solve(dom, A: PotentialField, h, step=None, tol=1e-8):
    """Discrete ground energy of the semiclassical operator on the domain (step sqrt(h)/6 by default)."""
    step = math.sqrt(h) / 6 if step is None else step
    grid = domain_grid(dom, step)
    op = assemble_magnetic_laplacian(grid, A, h)
    res = smallest_eigenpair(op, tol=tol * max(1.0, h))
    return res, grid, op


def _chain_direction(dom, x0, target, tc):
    """Unit sliding direction and the largest admissible cutoff multiplier for a length-2 chain."""
    kind, k = dom.locate(x0)
    faces_all = dom.incident_faces(k) if kind == "vertex" else (
        list(dom.edge_faces[k]) if kind == "edge" else ([k] if kind == "face" else []))
    if target.startswith("edge"):
        e = int(target[4:])
        i, j = dom.edges[e]
        other = j if i == k else i
        tau = dom.vertices[other] - dom.vertices[k]
        keep = set(dom.edge_faces[e])
    elif target.startswith("face"):
        f = int(target[4:])
        keep = {f}
        if kind == "edge":
            alpha, frame = dom.edge_wedge(k)
            i, j = dom.edges[k]
            ev = dom.vertices[j] - dom.vertices[i]
            tau = np.cross(dom.normals[f], ev)
            mid = dom.vertices[list(dom.faces[f])].mean(axis=0)
            if tau @ (mid - x0) < 0:
                tau = -tau
        else:
            face = dom.faces[f]
            a = face.index(k)
            dp = dom.vertices[face[a - 1]] - x0
            dn = dom.vertices[face[(a + 1) % len(face)]] - x0
            tau = dp / np.linalg.norm(dp) + dn / np.linalg.norm(dn)
    else:
        keep = set()
        if kind == "face":
            tau = -dom.normals[k]
        elif kind == "edge":
            tau = dom.edge_wedge(k)[1][1]
        else:
            tau = tc.cone.vertices.sum(axis=0)
    tau = tau / np.linalg.norm(tau)
    dists = [abs(tau @ dom.normals[f]) for f in faces_all if f not in keep]
    R_max = 0.5 * min(dists) if dists else math.inf
    return tau, R_max


def map_radius(dom, x0):
    """Largest r with B(x0, r) inside the chart of x0: distance to boundary features not touching x0."""
    x0 = np.asarray(x0, dtype=float)
    best = math.inf
    V = dom.vertices
    for v in range(len(V)):
        d = np.linalg.norm(V[v] - x0)
        if d > 1e-9:
            best = min(best, d)
    from .domain_model import _seg_dist
    for (i, j) in dom.edges:
        d = _seg_dist(x0, V[i], V[j])
        if d > 1e-9:
            best = min(best, d)
    for f in range(len(dom.faces)):
        d = _poly_dist(dom, f, x0)
        if d > 1e-9:
            best = min(best, d)
    return best


def _poly_dist(dom, f, x):
    from .domain_model import _seg_dist
    n = dom.normals[f]
    o = dom.vertices[dom.faces[f][0]]
    dz = (x - o) @ n
    proj = x - dz * n
    if dom.in_face(f, proj, 1e-12):
        return abs(dz)
    face = dom.faces[f]
    return min(_seg_dist(x, dom.vertices[a], dom.vertices[b])
               for a, b in zip(face, face[1:] + face[:1]))


def plan_quasimode(dom, B_field, lowest, cfg=None, cache=None):
    """Choose the quasimode at the minimizer: sitting on a case-(i) stratum, else sliding along its chain.

    Returns (kind, x0, chain, state, tau, R_max).
    """
    from .domain_model import EnergyCache, EnergyConfig, field_at, stratum_points, build_strata

    cfg = cfg or EnergyConfig()
    cache = cache or EnergyCache(cfg)
    strata = {s.key: s for s in build_strata(dom)}
    rows = {r["stratum_id"]: r for r in lowest.table}
    cands = [k for k in lowest.meta.get("argmin_strata", [lowest.stratum])]
    # prefer a case-(i) stratum of lowest dimension among the minimizers
    order = sorted(cands, key=lambda s: (rows[s]["tag"] != TAG_I, -strata[s].d0))
    for key in order:
        s = strata[key]
        pts = stratum_points(dom, s, 1 if lowest.meta.get("constant_field") else cfg.samples)
        if s.kind == "interior":
            pts = np.atleast_2d(lowest.point) if lowest.stratum == key else pts
        x0 = pts[np.argmax([map_radius(dom, p) for p in pts])] if len(pts) > 1 else pts[0]
        B = field_at(B_field, x0)
        tc = dom.tangent_cone(x0) if s.kind != "interior" else None
        if rows[key]["tag"] == TAG_I:
            state = _state_for(tc, B, cfg)
            return "sitting", x0, (key,), state, None, math.inf
    # case (ii) everywhere: slide from the reported minimizer along its chain
    x0 = np.asarray(lowest.point, dtype=float)
    B = field_at(B_field, x0)
    tc = dom.tangent_cone(x0)
    target, state = _terminal(dom, x0, tc, B, cfg, cache)
    tau, R_max = _chain_direction(dom, x0, target, tc)
    return "sliding", x0, (lowest.stratum, target), state, tau, R_max


def _state_for(tc, B, cfg):
    if tc is None or tc.kind == "R3":
        return full_space_state(B)
    if tc.kind == "half-space":
        return half_space_state(B, tc.normal)
    if tc.kind == "wedge":
        return wedge_state(B, tc.alpha, tc.frame, cfg.wedge)
    return cone_state(B, tc.cone, cfg.cone)


def _terminal(dom, x0, tc, B, cfg, cache):
    """Sub-structure of the chain below a case-(ii) point and its model state."""
    kind, k = dom.locate(x0)
    from .domain_model import TangentCone
    if tc.kind == "half-space":
        return "interior", full_space_state(B)
    if tc.kind == "wedge":
        best = None
        for f in dom.edge_faces[k]:
            ge = cache.energy(TangentCone("half-space", normal=-dom.normals[f]), B)
            if best is None or ge[0] < best[0]:
                best = (ge[0], f)
        if best[0] < np.linalg.norm(B) - 1e-9:
            return f"face{best[1]}", half_space_state(B, -dom.normals[best[1]])
        return "interior", full_space_state(B)
    best = None
    for e in dom.incident_edges(k):
        alpha, frame = dom.edge_wedge(e)
        E, tag = cache.energy(TangentCone("wedge", alpha=alpha, frame=frame), B)
        if best is None or E < best[0] - 1e-12:
            best = (E, e, tag, alpha, frame)
    E, e, tag, alpha, frame = best
    if tag == TAG_I:
        return f"edge{e}", wedge_state(B, alpha, frame, cfg.wedge)
    bestf = None
    for f in dom.incident_faces(k):
        ge = cache.energy(TangentCone("half-space", normal=-dom.normals[f]), B)
        if bestf is None or ge[0] < bestf[0]:
            bestf = (ge[0], f)
    if bestf[0] < np.linalg.norm(B) - 1e-9:
        return f"face{bestf[1]}", half_space_state(B, -dom.normals[bestf[1]])
    return "interior", full_space_state(B)


def _sobolev_norm(A: PotentialField, dom, n=6, eps=1e-3):
    """max |A| + |DA| + |D^2 A| over a sample of the domain (W^{2,inf} surrogate)."""
    V = dom.vertices
    t = np.linspace(0, 1, n)
    pts = np.stack(np.meshgrid(*[V.min(0)[a] + t * np.ptp(V[:, a]) for a in range(3)],
                               indexing="ij"), -1).reshape(-1, 3)
    m = np.max(np.abs(A(pts)))
    best = 0.0
    for p in pts[:: max(1, len(pts) // 50)]:
        _, J = _linear_part(A, p, eps)
        H = 0.0
        for j in range(3):
            e = np.zeros(3)
            e[j] = eps
            H = max(H, np.max(np.abs(A((p + e)[None]) - 2 * A(p[None]) + A((p - e)[None]))) / eps**2)
        best = max(best, np.max(np.abs(J)) + H)
    return float(m + best)


def certify(qm: Quasimode, dom, E_script, step=None, direct=None, grid_frame=None, anchor=None,
            n_sub=2):
    """Rayleigh quotient of a built quasimode on a local grid, plus the min-max check when a direct solve is given."""
    h = qm.h
    cut = qm.cutoff
    step = min(math.sqrt(h) / 8, cut.radius / 24) if step is None else step
    support = 2 * cut.radius
    inside = dom.inside_fast
    grid = local_grid(inside, qm.center, support, step, anchor=anchor if anchor is not None
                      else qm.spec.x0, frame=grid_frame, n_sub=n_sub)
    RQ, f = rayleigh(qm, grid)
    rho, a = budget_terms(qm, grid, f)
    cert = BoundCertificate(h=h, delta=cut.spec.delta, RQ=float(RQ), E_script=float(E_script),
                            kind=qm.spec.kind, chain=qm.spec.chain, rho_h=rho, a_h=a,
                            meta={"step": step, "nodes": grid.n_active, "R": cut.spec.R,
                                  "model": qm.spec.state.kind})
    if qm.correction is not None:
        cert.a_hat_h = a
    if direct is not None:
        res, dgrid, _ = direct
        cert.lambda_h = float(res.value)
        cert.RQ_same_grid = float(rayleigh(qm, dgrid)[0])
    return cert


def upper_bound_certificate(dom, B_field, A: PotentialField, h, delta=3 / 8, R=None,
                            lowest=None, cfg=None, direct=None, step=None, plan=None,
                            correction=False):
    """Quasimode upper bound lambda_h <= RQ at the minimizer of the local energy."""
    from .domain_model import EnergyCache, EnergyConfig, lowest_energy

    cfg = cfg or EnergyConfig()
    cache = EnergyCache(cfg)
    if lowest is None:
        lowest = lowest_energy(B_field, dom, cfg, cache)
    if plan is None:
        plan = plan_quasimode(dom, B_field, lowest, cfg, cache)
    kind, x0, chain, state, tau, R_max = plan
    r_map = map_radius(dom, x0)
    if R is None:
        lim = r_map / (2 * h**delta) if kind == "sitting" else min(
            R_max, (r_map / h**delta - 1) / 2)
        R = 0.9 * lim
    spec = CutoffSpec(R=R, delta=delta)
    if kind == "sitting":
        qm = sitting_quasimode(x0, state, spec, h, A, chain=chain, r_map=r_map)
    else:
        qm = sliding_quasimode(x0, chain, state, tau, spec, h, A, r_map=r_map, R_max=R_max)
    if correction:
        qm = _make_quasimode(qm.spec, spec, A, h, correction=True)
    cert = certify(qm, dom, lowest.value, step=step, direct=direct)
    cert.meta["budget_shape"] = (1 + _sobolev_norm(A, dom) ** 2) * h ** 1.25
    cert.meta["map_radius"] = r_map
    return cert


def refined_certificate_G2(dom, B_field, A: PotentialField, h, delta=1 / 3, R=None, lowest=None,
                           cfg=None, direct=None, step=None, plan=None):
    """Gauge-corrected certificate for minimizers with a k = 2 model (wedge, tilted half-space, full space)."""
    from .domain_model import EnergyCache, EnergyConfig, lowest_energy

    cfg = cfg or EnergyConfig()
    if lowest is None:
        lowest = lowest_energy(B_field, dom, cfg, EnergyCache(cfg))
    if plan is None:
        plan = plan_quasimode(dom, B_field, lowest, cfg)
    state = plan[3]
    if state.k != 2:
        raise ValueError("not a k = 2 terminal structure: use the generic certificate")
    cert = upper_bound_certificate(dom, B_field, A, h, delta=delta, R=R, lowest=lowest, cfg=cfg,
                                   direct=direct, step=step, plan=plan, correction=True)
    cert.meta["budget_shape"] = (1 + _sobolev_norm(A, dom) ** 2) * h ** (4 / 3)
    return cert


def fitted_exponent(hs, values):
    """Least-squares slope of log|values| against log h."""
    hs = np.asarray(hs, dtype=float)
    v = np.abs(np.asarray(values, dtype=float))
    return float(np.polyfit(np.log(hs), np.log(v), 1)[0])


__all__ = [
    "BoundCertificate", "CHI_SLOPE", "CubicPolynomial", "Cutoff", "CutoffSpec", "ModelState",
    "Quasimode", "QuasimodeSpec", "build_cutoff", "certify", "chi", "chi_d", "cone_state",
    "direct_solve", "domain_grid", "fitted_exponent", "flip", "full_space_state",
    "gauge_correction_poly", "gauge_transform", "half_space_state", "local_grid", "map_radius",
    "plan_quasimode", "rayleigh", "refined_certificate_G2", "sitting_quasimode",
    "sliding_quasimode", "symmetric_gauge_potential", "translate", "upper_bound_certificate",
    "wedge_state",
]
