"""Full-space and half-space model energies, the de Gennes family and Table-1 eigenvectors."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator, RegularGridInterpolator

from .core_numerics import (ConstantField, PotentialField, SolverError, assemble_magnetic_laplacian,
                            golden_min, make_grid, smallest_eigenpair, tridiagonal_smallest)

TAG_I, TAG_II, TAG_TIE = "i", "ii", "indeterminate"


class BracketError(RuntimeError):
    pass


class ProfileMissing(LookupError):
    pass


@dataclass(frozen=True)
class FiberConfig:
    """Half-line discretization for the de Gennes operator."""

    zmax: float = 15.0
    step: float = 5e-3

    def __post_init__(self):
        if self.zmax < 15 or self.step > 5e-3:
            raise ValueError("de Gennes grid needs zmax >= 15 and step <= 5e-3")


@dataclass(frozen=True)
class SigmaConfig:
    """Half-plane box [-L, L] x [0, L] around the ground state."""

    L: float = 20.0
    step: float = 0.1
    depth_max: float = 80.0

    def __post_init__(self):
        if self.L < 20 or self.step > 0.1:
            raise ValueError("half-plane box needs L >= 20 and step <= 0.1")


@dataclass
class GroundEnergy:
    E: float
    E_star: float
    tag: str
    k: int | None = None
    tau_star: float | None = None
    chain: tuple = ()
    eigenvector: object = None
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# de Gennes operator


def de_gennes_tridiagonal(tau, cfg: FiberConfig = FiberConfig()):
    """Symmetrized matrix of -d^2/dz^2 + (tau + z)^2 on (0, zmax).

    Neumann at 0 (half-cell mass), Dirichlet at zmax.  Same discrete form as
    assemble_magnetic_laplacian on the corresponding 1D grid.
    """
    n = int(round(cfg.zmax / cfg.step))
    s = cfg.zmax / n
    z = s * np.arange(n)
    diag = 2.0 / s**2 + (tau + z) ** 2
    off = np.full(n - 1, -1.0 / s**2)
    off[0] = -math.sqrt(2.0) / s**2
    return z, diag, off


def de_gennes_mu(tau: float, cfg: FiberConfig = FiberConfig()) -> float:
    """Lowest eigenvalue mu(tau) of the de Gennes operator."""
    _, d, e = de_gennes_tridiagonal(tau, cfg)
    return tridiagonal_smallest(d, e)


@dataclass
class DeGennesResult:
    theta0: float
    tau_star: float
    z: np.ndarray
    phi: np.ndarray
    zmax: float
    step: float
    evaluations: int

    def tail_ratio(self):
        w = np.full(self.z.size, self.step)
        w[0] = self.step / 2
        tail = self.z >= self.zmax / 2
        return math.sqrt(np.sum(w[tail] * self.phi[tail] ** 2) / np.sum(w * self.phi**2))


def de_gennes_profile(tau, cfg: FiberConfig = FiberConfig()):
    """(z, phi, mu) with phi L2-normalized (trapezoid weight) and positive."""
    z, d, e = de_gennes_tridiagonal(tau, cfg)
    mu, y = tridiagonal_smallest(d, e, vector=True)
    s = z[1] - z[0]
    w = np.full(z.size, s)
    w[0] = s / 2
    phi = y / np.sqrt(w)
    phi = phi / math.sqrt(np.sum(w * phi**2))
    if phi[np.argmax(np.abs(phi))] < 0:
        phi = -phi
    return z, phi, mu


@lru_cache(maxsize=8)
def compute_theta0(cfg: FiberConfig = FiberConfig(), xtol=1e-6) -> DeGennesResult:
    """Minimize mu over tau in [-2, 0] by golden section."""
    f = lambda t: de_gennes_mu(t, cfg)
    tau, val, nev = golden_min(f, -2.0, 0.0, xtol=xtol)
    if not (val < f(-2.0) and val < f(0.0)):
        raise BracketError("mu is not unimodal on [-2, 0]")
    z, phi, mu = de_gennes_profile(tau, cfg)
    return DeGennesResult(theta0=mu, tau_star=tau, z=z, phi=phi, zmax=cfg.zmax,
                          step=cfg.zmax / z.size, evaluations=nev + 2)


def theta0(cfg: FiberConfig = FiberConfig()) -> float:
    return compute_theta0(cfg).theta0


# ---------------------------------------------------------------------------
# half-plane problem sigma(theta)


def reduce_angle(theta):
    theta = float(theta)
    if theta < 0 or theta > math.pi:
        raise ValueError(f"angle {theta} outside [0, pi]")
    return math.pi - theta if theta > math.pi / 2 else theta


def half_plane_grid(theta, cfg: SigmaConfig = SigmaConfig(), depth=None):
    """Grid for the half-plane x3 > 0, centred where the ground state sits.

    The centre x2 = sqrt(Theta0)/sin(theta) is a translation of the
    isospectral family, chosen so that small angles stay inside the box.
    """
    t0 = math.sqrt(theta0())
    c = t0 / math.sin(theta)
    L, s = cfg.L, cfg.step
    depth = L if depth is None else depth
    c = s * round(c / s)
    eps = 1e-9
    return make_grid([c - L, 0.0], [c + L, depth], s, inside=lambda x: x[:, 1] >= -eps,
                     truncation=lambda x: (np.abs(x[:, 0] - c) < L - eps) & (x[:, 1] < depth - eps))


def _sigma_solve(theta, cfg):
    """2D solve with the depth grown until it covers 8 decay lengths 1/sqrt(1 - sigma).

    Near the normal direction the state stretches along the zero line of the
    potential and a box of depth L overestimates sigma.
    """
    ct, st = math.cos(theta), math.sin(theta)
    depth = cfg.L
    while True:
        g = half_plane_grid(theta, cfg, depth)
        op = assemble_magnetic_laplacian(g, None, 1.0,
                                         scalar=lambda x: (ct * x[:, 1] - st * x[:, 0]) ** 2)
        res = smallest_eigenpair(op, sigma=0.5 * theta0())
        if depth >= cfg.depth_max:
            break
        if res.value >= 1.0:
            depth = min(cfg.depth_max, 2 * depth)
            continue
        need = 8.0 / math.sqrt(1.0 - res.value)
        if need <= 1.25 * depth:
            break
        depth = min(cfg.depth_max, cfg.step * math.ceil(need / cfg.step))
    res.meta["depth"] = depth
    return res, g


@lru_cache(maxsize=512)
def _sigma_cached(theta, cfg):
    return _sigma_solve(theta, cfg)[0].value


def sigma(theta: float, cfg: SigmaConfig = SigmaConfig()) -> float:
    """Half-space ground energy for a unit field at angle theta to the boundary."""
    theta = reduce_angle(theta)
    if theta < 1e-12:
        return theta0()
    if abs(theta - math.pi / 2) < 1e-12:
        return 1.0
    return _sigma_cached(round(theta, 14), cfg)


@dataclass
class SigmaCurve:
    thetas: np.ndarray
    values: np.ndarray
    cfg: SigmaConfig = SigmaConfig()

    def __post_init__(self):
        self._interp = PchipInterpolator(self.thetas, self.values)

    def __call__(self, theta):
        th = np.vectorize(reduce_angle)(np.asarray(theta, dtype=float))
        out = self._interp(th)
        return float(out) if np.ndim(out) == 0 else out

    def is_increasing(self):
        return bool(np.all(np.diff(self.values) > 0))

    def to_csv(self):
        lines = ["theta,sigma,L,step"]
        lines += [f"{t:.12g},{v:.12g},{self.cfg.L:g},{self.cfg.step:g}"
                  for t, v in zip(self.thetas, self.values)]
        return "\n".join(lines) + "\n"


def _sigma_worker(args):
    theta, cfg = args
    return sigma(theta, cfg)


@lru_cache(maxsize=4)
def sigma_curve(n=17, cfg: SigmaConfig = SigmaConfig(), workers=1) -> SigmaCurve:
    thetas = np.linspace(0.0, math.pi / 2, n)
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            vals = list(ex.map(_sigma_worker, [(t, cfg) for t in thetas]))
    else:
        vals = [sigma(t, cfg) for t in thetas]
    return SigmaCurve(thetas, np.array(vals), cfg)


def boundary_angle(B, n):
    """Unoriented angle in [0, pi/2] between B and the plane with normal n."""
    B = np.asarray(B, dtype=float)
    n = np.asarray(n, dtype=float)
    nb, nn = np.linalg.norm(B), np.linalg.norm(n)
    if nb == 0:
        raise ValueError("vanishing field")
    if nn == 0 or not np.isfinite(nn):
        raise ValueError("degenerate normal")
    return math.asin(min(1.0, abs(B @ n) / (nb * nn)))


# ---------------------------------------------------------------------------
# generalized eigenvectors


class Profile1D:
    """Sampled half-line profile with an exponential tail beyond the grid."""

    def __init__(self, z, phi):
        self.z = np.asarray(z)
        self.phi = np.asarray(phi)
        k0 = np.searchsorted(self.z, 0.6 * self.z[-1])
        k1 = np.searchsorted(self.z, 0.8 * self.z[-1])
        a, b = abs(self.phi[k0]), abs(self.phi[k1])
        self.tail_rate = math.log(a / b) / (self.z[k1] - self.z[k0]) if a > 0 and b > 0 else 1.0
        self._ref = (self.z[k1], self.phi[k1])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.interp(t, self.z, self.phi)
        far = t > self.z[-1]
        if np.any(far):
            z1, p1 = self._ref
            out = np.where(far, p1 * np.exp(-self.tail_rate * (t - z1)), out)
        return np.where(t < 0, 0.0, out)


class ProfileND:
    """Sampled profile on a (possibly rotated) grid, zero outside the grid box."""

    def __init__(self, grid, values, residual=float("nan")):
        self.grid = grid
        full = grid.to_full(np.asarray(values, dtype=complex))
        self._interp = RegularGridInterpolator(tuple(grid.axes()), full, bounds_error=False,
                                               fill_value=0.0)
        self.residual = residual
        self.values = values

    def __call__(self, z):
        z = np.atleast_2d(z)
        u = (z - self.grid.origin) @ self.grid.frame
        return self._interp(u)


@dataclass
class GeneralizedEigenvector:
    """Psi(x) = exp(i theta(u)) Phi(z) in frame coordinates u = sqrt(b) R x.

    The first 3-k coordinates of u are the free variables y, the last k the
    decaying variables z.  potential_matrix gives the row's linear potential
    for a unit field in u-coordinates.
    """

    row: tuple
    k: int
    frame: np.ndarray
    potential_matrix: np.ndarray
    phase_coef: np.ndarray
    profile: object
    energy: float
    scale: float = 1.0
    residual: float = float("nan")
    meta: dict = field(default_factory=dict)

    def coords(self, x):
        return math.sqrt(self.scale) * np.atleast_2d(x) @ self.frame.T

    def __call__(self, x):
        u = self.coords(x)
        phase = np.exp(1j * (u @ self.phase_coef))
        return phase * self.profile(u[:, 3 - self.k:]) if self.k < 3 else self.profile(u)

    @property
    def Lambda(self):
        return self.scale * self.energy

    def potential(self):
        """Linear potential in physical coordinates for the field of norm `scale`."""
        M = self.scale * self.frame.T @ self.potential_matrix @ self.frame
        return PotentialField.linear(M)

    def field(self):
        return self.potential().curl()


def _frame_from(z_dir, y2_dir=None):
    """Right-handed orthonormal rows (e1, e2, e3) with e3 = z_dir."""
    e3 = np.asarray(z_dir, dtype=float)
    e3 = e3 / np.linalg.norm(e3)
    if y2_dir is None:
        trial = np.eye(3)[np.argmin(np.abs(e3))]
        y2_dir = trial - (trial @ e3) * e3
    e2 = np.asarray(y2_dir, dtype=float) - (np.asarray(y2_dir, dtype=float) @ e3) * e3
    e2 = e2 / np.linalg.norm(e2)
    e1 = np.cross(e2, e3)
    return np.vstack([e1, e2, e3])


def _gaussian_profile(z):
    return np.exp(-np.sum(np.asarray(z) ** 2, axis=1) / 4)


def table_eigenvector(row, B=(1.0, 0.0, 0.0), frame=None, normal=None, profile=None):
    """Instantiate a row of the table of generalized eigenvectors.

    row (2,0): full space, Phi = exp(-|z|^2/4), potential (0, -x3/2, x2/2).
    row (1,1): tangent half-space, theta = -sqrt(Theta0) y1, potential (z, 0, 0).
    row (2,1): tilted half-space; needs a sampled 2D profile.
    rows (2,2) and (3,3): wedge and cone; need sampled profiles.
    """
    row = tuple(row)
    Bv = np.asarray(B, dtype=float)
    b = float(np.linalg.norm(Bv))
    if b == 0:
        raise ValueError("vanishing field")
    if row == (2, 0):
        R = _frame_from(Bv, None) if frame is None else np.asarray(frame)
        # u1 along B: rotate so that the first row is the field direction
        R = np.vstack([R[2], R[0], R[1]]) if frame is None else R
        G = np.array([[0, 0, 0], [0, 0, -0.5], [0, 0.5, 0]])
        prof = _gaussian_profile
        gev = GeneralizedEigenvector(row, 2, R, G, np.zeros(3), prof, 1.0, scale=b)
        gev.profile = lambda z: np.exp(-np.sum(np.asarray(z) ** 2, axis=1) / 4)
        return gev
    if row == (1, 1):
        if normal is None:
            raise ValueError("row (1,1) needs the inward normal")
        n = np.asarray(normal, dtype=float)
        n = n / np.linalg.norm(n)
        if abs(Bv @ n) > 1e-12 * b:
            raise ValueError("row (1,1) needs a tangent field")
        R = _frame_from(n, Bv) if frame is None else np.asarray(frame)
        dg = compute_theta0()
        G = np.array([[0, 0, 1.0], [0, 0, 0], [0, 0, 0]])
        prof = Profile1D(dg.z, dg.phi)
        coef = np.array([dg.tau_star, 0.0, 0.0])
        gev = GeneralizedEigenvector(row, 1, R, G, coef, lambda z: prof(z[:, 0]), dg.theta0,
                                     scale=b, meta={"tau_star": dg.tau_star})
        return gev
    if row in {(2, 1), (2, 2), (3, 3)}:
        if profile is None:
            raise ProfileMissing(f"row {row} needs a sampled profile")
        return profile
    raise ValueError(f"unknown row {row}")


def tilted_half_space_eigenvector(B, normal, cfg: SigmaConfig = SigmaConfig()):
    """Row (2,1): field at angle theta in (0, pi/2) to the boundary.

    Frame: u1 along the tangential part of B, u3 = inward normal; the profile
    lives in (u2, u3) for the potential (cos t u3 - sin t u2, 0, 0).
    """
    Bv = np.asarray(B, dtype=float)
    b = float(np.linalg.norm(Bv))
    n = np.asarray(normal, dtype=float) / np.linalg.norm(normal)
    th = boundary_angle(Bv, n)
    if th <= 0 or th >= math.pi / 2:
        raise ValueError("row (2,1) needs a field neither tangent nor normal")
    # potential (cos t u3 - sin t u2, 0, 0) has curl (0, cos t, sin t); a field
    # pointing out of the half-space is handled by the flip B -> -B, A -> -A,
    # which leaves the real profile unchanged
    sgn = 1.0 if Bv @ n > 0 else -1.0
    Bp = sgn * Bv
    bt = Bp - (Bp @ n) * n
    e2 = bt / np.linalg.norm(bt)
    R = np.vstack([np.cross(e2, n), e2, n])
    res, g = _sigma_solve(th, cfg)
    ct, st = math.cos(th), math.sin(th)
    G = sgn * np.array([[0.0, -st, ct], [0, 0, 0], [0, 0, 0]])
    prof = ProfileND(g, res.vector, res.residual)
    gev = GeneralizedEigenvector((2, 1), 2, R, G, np.zeros(3), prof, res.value, scale=b,
                                 residual=res.residual)
    return gev


def full_space_energy(B) -> GroundEnergy:
    Bv = ConstantField(B).vector if not isinstance(B, ConstantField) else B.vector
    b = float(np.linalg.norm(Bv))
    if b == 0:
        raise ValueError("vanishing field")
    gev = table_eigenvector((2, 0), Bv)
    return GroundEnergy(E=b, E_star=math.inf, tag=TAG_I, k=2, chain=("R3",), eigenvector=gev)


def half_space_energy(B, n, cfg: SigmaConfig = SigmaConfig()) -> GroundEnergy:
    """Ground energy of the half-space {x . n > 0} (n the inward unit normal)."""
    Bv = np.asarray(B.vector if isinstance(B, ConstantField) else B, dtype=float)
    b = float(np.linalg.norm(Bv))
    if b == 0:
        raise ValueError("vanishing field")
    n = np.asarray(n, dtype=float)
    if not np.isfinite(n).all() or abs(np.linalg.norm(n) - 1) > 1e-9:
        raise ValueError("degenerate normal")
    th = boundary_angle(Bv, n)
    if abs(th - math.pi / 2) < 1e-12:
        return GroundEnergy(E=b, E_star=b, tag=TAG_II, k=2, chain=("half-space", "R3"),
                            eigenvector=table_eigenvector((2, 0), Bv), meta={"theta": th})
    if th < 1e-12:
        Bt = Bv - (Bv @ n) * n
        gev = table_eigenvector((1, 1), Bt, normal=n)
        return GroundEnergy(E=b * theta0(), E_star=b, tag=TAG_I, k=1, chain=("half-space",),
                            tau_star=compute_theta0().tau_star, eigenvector=gev,
                            meta={"theta": 0.0})
    return GroundEnergy(E=b * sigma(th, cfg), E_star=b, tag=TAG_I, k=2, chain=("half-space",),
                        meta={"theta": th})


def tail_ratio_nd(grid, values, radius):
    """sqrt of the mass fraction of |values|^2 beyond `radius` from the origin."""
    x = grid.active_points()
    w = grid.node_mass() * np.abs(values) ** 2
    far = np.linalg.norm(x, axis=1) > radius
    return math.sqrt(w[far].sum() / w.sum())


__all__ = [
    "BracketError", "DeGennesResult", "FiberConfig", "GeneralizedEigenvector", "GroundEnergy",
    "ProfileMissing", "SigmaConfig", "SigmaCurve", "SolverError", "TAG_I", "TAG_II", "TAG_TIE",
    "boundary_angle", "compute_theta0", "de_gennes_mu", "de_gennes_profile", "full_space_energy",
    "half_space_energy", "sigma", "sigma_curve", "table_eigenvector", "theta0",
    "tilted_half_space_eigenvector",
]
