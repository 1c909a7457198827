"""Wedge ground energies through the fibered sector operators.

Wedge frame: the edge is the x1 axis and the sector S_alpha lies in the
(x2, x3) plane with its bisector along x2, i.e. |arg(x2 + i x3)| <= alpha/2.
For the unit field B = (b1, b2, b3) in this frame the potential
A = (b2 x3 - b3 x2, 0, b1 x2) gives, after a Fourier transform along the
edge, the sector operator (tau + b2 x3 - b3 x2)^2 + D2^2 + (D3 + b1 x2)^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .core_numerics import (PotentialField, SolverError, assemble_magnetic_laplacian, golden_min,
                            make_grid, smallest_eigenpair)
from .model_problems import (TAG_I, TAG_II, TAG_TIE, BracketError, GeneralizedEigenvector,
                             ProfileND, sigma, theta0)

MARGIN = 1e-3


@dataclass(frozen=True)
class WedgeConfig:
    """Truncated sector discretization and tau scan.

    axial_step replaces tau^2-type terms by the lattice dispersion
    (2 - 2 cos(s (tau + A1)))/s^2 of a 3D grid with that spacing along the
    edge; None means the continuum fiber.
    """

    radius: float = 20.0
    step: float = 0.1
    tau_min: float = -6.0
    tau_max: float = 6.0
    tau_step: float = 0.5
    tau_tol: float = 1e-3
    axial_step: float | None = None
    enforce: bool = True

    def __post_init__(self):
        if self.enforce and (self.radius < 20 or self.step > 0.1):
            raise ValueError("sector grid needs radius >= 20 and step <= 0.1")


@dataclass(frozen=True)
class WedgeModel:
    alpha: float
    B: tuple

    def __post_init__(self):
        a = float(self.alpha)
        if not (0 < a < 2 * math.pi):
            raise ValueError("opening must lie in (0, 2 pi)")
        b = np.asarray(self.B, dtype=float).reshape(3)
        nb = np.linalg.norm(b)
        if nb == 0:
            raise ValueError("vanishing field")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "B", tuple((b / nb).tolist()))

    @property
    def b(self):
        return np.asarray(self.B)

    def face_normals(self):
        """Outward unit normals of the faces at +alpha/2 and -alpha/2."""
        h = self.alpha / 2
        return (np.array([0.0, -math.sin(h), math.cos(h)]),
                np.array([0.0, -math.sin(h), -math.cos(h)]))

    def face_angles(self):
        b = self.b
        return tuple(math.asin(min(1.0, abs(b @ n))) for n in self.face_normals())


@dataclass
class BandFunction:
    taus: np.ndarray
    values: np.ndarray
    tau_star: float
    minimum: float

    def to_csv(self):
        lines = ["tau,s"] + [f"{t:.12g},{v:.12g}" for t, v in zip(self.taus, self.values)]
        return "\n".join(lines) + "\n"


@dataclass
class WedgeEnergy:
    E: float
    E_star: float
    tag: str
    tau_star: float | None = None
    band: BandFunction | None = None
    eigenvector: GeneralizedEigenvector | None = None
    chain: tuple = ()
    meta: dict = field(default_factory=dict)


def sector_inside(alpha, eps=1e-12):
    half = alpha / 2

    def inside(x):
        return np.abs(np.arctan2(x[:, 1], x[:, 0])) <= half + eps

    return inside


def sector_grid(alpha, cfg: WedgeConfig):
    """Masked grid of S_alpha truncated at cfg.radius, one face on a grid axis."""
    R, s = cfg.radius, cfg.step
    q = -alpha / 2
    frame = np.array([[math.cos(q), -math.sin(q)], [math.sin(q), math.cos(q)]])
    psi = np.concatenate([np.linspace(0, alpha, 64), [0.0]])
    pts = np.stack([R * np.cos(psi), R * np.sin(psi)], axis=1)
    pts[-1] = 0
    lo = s * np.floor(pts.min(axis=0) / s) - s
    hi = s * np.ceil(pts.max(axis=0) / s) + s
    lo = np.minimum(lo, 0.0)
    return make_grid(lo, hi, s, sector_inside(alpha),
                     truncation=lambda x: np.hypot(x[:, 0], x[:, 1]) < R - 1e-9, frame=frame)


class SectorFiber:
    """tau-family of sector operators sharing one grid and magnetic part."""

    def __init__(self, model: WedgeModel, cfg: WedgeConfig = WedgeConfig()):
        if not (0 < model.alpha < 2 * math.pi):
            raise ValueError("excluded opening")
        self.model, self.cfg = model, cfg
        self.grid = sector_grid(model.alpha, cfg)
        b1 = model.b[0]
        A = PotentialField.linear([[0.0, 0.0], [b1, 0.0]]) if b1 != 0 else None
        self.op = assemble_magnetic_laplacian(self.grid, A, 1.0)
        self.K0 = self.op.K
        x = self.grid.active_points()
        self.A1 = model.b[1] * x[:, 1] - model.b[2] * x[:, 0]
        self._last = None
        self.evaluations = 0

    def potential(self, tau):
        s1 = self.cfg.axial_step
        t = tau + self.A1
        if s1 is None:
            return t * t
        return (2.0 - 2.0 * np.cos(s1 * t)) / s1**2

    def solve(self, tau):
        op = self.op
        K = self.K0 + sp.diags(self.potential(tau) * op.mass)
        work = type(op)(K=K.tocsr(), mass=op.mass, index=op.index, grid=op.grid, h=1.0)
        v0 = None if self._last is None else self._last.vector
        # the fiber operator is nonnegative: a shift below 0 always targets the ground state
        # (a shift near the previous value can lock onto an excited state when s(tau) drops)
        res = smallest_eigenpair(work, sigma=-1e-2, v0=v0)
        self._last = res
        self.evaluations += 1
        return res

    def __call__(self, tau):
        return self.solve(tau).value


@lru_cache(maxsize=256)
def _fiber(model: WedgeModel, cfg: WedgeConfig):
    return SectorFiber(model, cfg)


def sector_fiber_energy(model: WedgeModel, tau: float, cfg: WedgeConfig = WedgeConfig()) -> float:
    """Lowest eigenvalue of the sector operator at Fourier parameter tau."""
    return _fiber(model, cfg)(float(tau))


def sector_energy_2d(alpha: float, cfg: WedgeConfig = WedgeConfig()) -> float:
    """E(1, S_alpha): unit field normal to the sector plane, tau = 0."""
    if not (0 < alpha < 2 * math.pi):
        raise ValueError("excluded opening")
    if alpha == math.pi:
        return theta0()
    return sector_fiber_energy(WedgeModel(alpha, (1.0, 0.0, 0.0)), 0.0, cfg)


def wedge_estar(model: WedgeModel, curve=None) -> float:
    """sigma(min(theta+, theta-)); a SigmaCurve interpolant may be supplied."""
    th = min(model.face_angles())
    if curve is not None:
        return float(curve(th))
    return sigma(th)


def scan_band(model: WedgeModel, cfg: WedgeConfig = WedgeConfig()):
    """Coarse tau scan plus golden refinement around the coarse argmin.

    Returns (BandFunction, on_edge, fiber).
    """
    fib = SectorFiber(model, cfg)
    taus = np.arange(cfg.tau_min, cfg.tau_max + 1e-9, cfg.tau_step)
    # the fiber is even in tau when A1 vanishes
    symmetric = np.allclose(model.b[1:], 0)
    order = np.argsort(np.abs(taus), kind="stable")
    vals = np.full(taus.size, np.nan)
    for k in order:
        if symmetric and taus[k] < 0 and np.any(np.isclose(taus, -taus[k])):
            j = int(np.flatnonzero(np.isclose(taus, -taus[k]))[0])
            if not np.isnan(vals[j]):
                vals[k] = vals[j]
                continue
        vals[k] = fib(taus[k])
    k = int(np.argmin(vals))
    on_edge = k in (0, taus.size - 1)
    if on_edge:
        band = BandFunction(taus, vals, float(taus[k]), float(vals[k]))
        return band, True, fib
    a, b = taus[max(k - 1, 0)], taus[min(k + 1, taus.size - 1)]
    fib._last = None
    t, v, _ = golden_min(fib, a, b, xtol=cfg.tau_tol)
    if v > vals[k]:
        t, v = float(taus[k]), float(vals[k])
    band = BandFunction(taus, vals, float(t), float(v))
    return band, False, fib


def _wedge_eigenvector(model, fib, tau_star):
    res = fib.solve(tau_star)
    b = model.b
    G = np.array([[0.0, -b[2], b[1]], [0.0, 0.0, 0.0], [0.0, b[0], 0.0]])
    prof = ProfileND(fib.grid, res.vector, res.residual)
    return GeneralizedEigenvector((2, 2), 2, np.eye(3), G, np.array([tau_star, 0.0, 0.0]), prof,
                                  res.value, residual=res.residual,
                                  meta={"alpha": model.alpha})


def wedge_energy(model: WedgeModel, cfg: WedgeConfig = WedgeConfig(), on_edge="raise",
                 curve=None, margin=MARGIN) -> WedgeEnergy:
    """E(B, W_alpha) = inf_tau s(tau), with E* and the dichotomy tag.

    on_edge="raise" reports a band minimum on the bracket edge as an error;
    on_edge="limit" reads it as the infimum at infinity, E = E*.
    """
    Es = wedge_estar(model, curve)
    band, edge, fib = scan_band(model, cfg)
    meta = {"alpha": model.alpha, "B": model.B, "face_angles": model.face_angles(),
            "step": cfg.step, "radius": cfg.radius, "fiber_solves": fib.evaluations}
    if edge:
        if on_edge == "raise":
            raise BracketError("tau bracket too small: band minimum on the bracket edge")
        meta["band_edge_value"] = band.minimum
        return WedgeEnergy(E=Es, E_star=Es, tag=TAG_II, band=band, chain=_face_chain(model),
                           meta=meta)
    E = band.minimum
    if _on_plateau(band, margin):
        # a flat stretch of the band around its minimum is a state sliding
        # along a face: the infimum is approached at infinity
        meta["plateau_value"] = E
        return WedgeEnergy(E=Es, E_star=Es, tag=TAG_II, band=band, chain=_face_chain(model),
                           meta=meta)
    if E < Es - margin:
        gev = _wedge_eigenvector(model, fib, band.tau_star)
        meta["tail_ratio"] = _tail(fib.grid, gev.profile.values, cfg.radius / 2)
        return WedgeEnergy(E=E, E_star=Es, tag=TAG_I, tau_star=band.tau_star, band=band,
                           eigenvector=gev, chain=("wedge",), meta=meta)
    if abs(E - Es) < margin:
        return WedgeEnergy(E=min(E, Es), E_star=Es, tag=TAG_TIE, tau_star=band.tau_star,
                           band=band, chain=("wedge",), meta=meta)
    # interior minimum above E*: the sampled band has not reached its
    # infimum; by the dichotomy the energy is the limit E*
    meta["interior_minimum_above_estar"] = E
    return WedgeEnergy(E=Es, E_star=Es, tag=TAG_II, band=band, chain=_face_chain(model),
                       meta=meta)


def _on_plateau(band, margin, width=2.0):
    """True when the coarse band stays within margin/2 of its minimum over a tau-window of `width`."""
    near = band.values <= band.minimum + margin / 2
    run = best = 0
    for flag in near:
        run = run + 1 if flag else 0
        best = max(best, run)
    dt = band.taus[1] - band.taus[0] if band.taus.size > 1 else np.inf
    return (best - 1) * dt >= width


def _tail(grid, values, radius):
    x = grid.active_points()
    w = grid.node_mass() * np.abs(values) ** 2
    return float(math.sqrt(w[np.hypot(x[:, 0], x[:, 1]) > radius].sum() / w.sum()))


def _face_chain(model):
    tp, tm = model.face_angles()
    face = "face+" if tp <= tm else "face-"
    th = min(tp, tm)
    chain = ("wedge", face)
    if abs(th - math.pi / 2) < 1e-12:
        chain = chain + ("R3",)
    return chain


def classify_wedge(model: WedgeModel, cfg: WedgeConfig = WedgeConfig(), curve=None,
                   margin=MARGIN) -> dict:
    """Dichotomy report: case (i) with tau*, profile and decay, or (ii) with the face chain."""
    we = wedge_energy(model, cfg, on_edge="limit", curve=curve, margin=margin)
    rep = {"tag": we.tag, "E": we.E, "E_star": we.E_star, "chain": list(we.chain),
           "alpha": model.alpha, "theta": list(model.face_angles())}
    if we.tag == TAG_I:
        rep.update(tau_star=we.tau_star, tail_ratio=we.meta.get("tail_ratio"),
                   eigenvector=we.eigenvector, k=2)
    elif we.tag == TAG_TIE:
        rep["note"] = "indeterminate at tolerance"
    rep["result"] = we
    return rep


__all__ = [
    "BandFunction", "MARGIN", "SectorFiber", "WedgeConfig", "WedgeEnergy", "WedgeModel",
    "classify_wedge", "scan_band", "sector_energy_2d", "sector_fiber_energy", "sector_grid",
    "wedge_energy", "wedge_estar",
]
