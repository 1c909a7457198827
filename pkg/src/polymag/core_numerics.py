"""Link-variable discretization of magnetic Laplacians and small eigensolvers.

The discrete energy of a node function psi is

    q(psi) = sum_edges c_e |exp(i theta_e) psi_j - psi_i|^2 + sum_i V_i M_i |psi_i|^2

with theta_e = A(midpoint) . (x_j - x_i) / h and c_e = h^2 w_e vol / step^2.
The weights w_e and the nodal masses M_i = m_i vol are volume fractions of the
edge and node boxes lying inside the physical domain.  Dropping links that
leave the domain together with these fractional weights gives the natural
(magnetic) Neumann condition; nodes cut off by a truncation surface are
removed, which imposes Dirichlet there.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

INTERIOR, NEUMANN, DIRICHLET, OUTSIDE = 0, 1, 2, -1

MIN_MASS = 1e-2


class SolverError(RuntimeError):
    """Eigensolver did not reach the requested residual."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class UnderResolvedWarning(UserWarning):
    pass


class PotentialError(ValueError):
    pass


# ---------------------------------------------------------------------------
# fields and potentials


class PotentialField:
    """Magnetic potential x -> A(x).

    Linear potentials are stored as a matrix G with A(x) = G x (plus an
    optional constant); anything else is a callable on (n, d) arrays.
    """

    def __init__(self, func=None, matrix=None, offset=None):
        if (func is None) == (matrix is None):
            raise ValueError("give exactly one of func or matrix")
        self.matrix = None if matrix is None else np.asarray(matrix, dtype=float)
        self.offset = None if offset is None else np.asarray(offset, dtype=float)
        self._func = func

    @classmethod
    def linear(cls, matrix, offset=None):
        return cls(matrix=matrix, offset=offset)

    @property
    def is_linear(self):
        return self.matrix is not None

    @property
    def dim(self):
        return None if self.matrix is None else self.matrix.shape[0]

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.matrix is not None:
            out = x @ self.matrix.T
            if self.offset is not None:
                out = out + self.offset
            return out
        return np.asarray(self._func(x), dtype=float)

    def gradient(self):
        """Jacobian dA_i/dx_j (linear potentials only)."""
        if self.matrix is None:
            raise ValueError("gradient only stored for linear potentials")
        return self.matrix.copy()

    def curl(self):
        """Constant curl of a linear 3D potential."""
        G = self.gradient()
        if G.shape != (3, 3):
            raise ValueError("curl needs a 3D potential")
        return np.array([G[2, 1] - G[1, 2], G[0, 2] - G[2, 0], G[1, 0] - G[0, 1]])

    def __neg__(self):
        if self.matrix is not None:
            off = None if self.offset is None else -self.offset
            return PotentialField(matrix=-self.matrix, offset=off)
        f = self._func
        return PotentialField(func=lambda x: -f(x))

    def __add__(self, other):
        if self.is_linear and other.is_linear:
            off = (0 if self.offset is None else self.offset) + (
                0 if other.offset is None else other.offset)
            return PotentialField(matrix=self.matrix + other.matrix,
                                  offset=None if np.isscalar(off) else off)
        return PotentialField(func=lambda x: self(x) + other(x))


class ConstantField:
    """Constant magnetic field B in R^3."""

    def __init__(self, vector):
        v = np.asarray(vector, dtype=float).reshape(3)
        if not np.all(np.isfinite(v)):
            raise ValueError("field must be finite")
        self.vector = v

    @property
    def norm(self):
        return float(np.linalg.norm(self.vector))

    @property
    def direction(self):
        b = self.norm
        if b == 0:
            raise ValueError("vanishing field")
        return self.vector / b

    def __repr__(self):
        return f"ConstantField({self.vector.tolist()})"


def cross_matrix(v):
    """Matrix of x -> v ^ x."""
    v = np.asarray(v, dtype=float)
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def symmetric_gauge_matrix(B):
    """G with curl(G x) = B, namely A(x) = B ^ x / 2."""
    return 0.5 * cross_matrix(np.asarray(B, dtype=float).reshape(3))


@dataclass(frozen=True)
class ConstantMetric:
    G: np.ndarray

    def __post_init__(self):
        G = np.asarray(self.G, dtype=float)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise ValueError("metric must be square")
        if np.max(np.abs(G - G.T)) > 1e-12 * max(1.0, np.max(np.abs(G))):
            raise ValueError("metric is not symmetric")
        if np.min(np.linalg.eigvalsh(G)) <= 0:
            raise ValueError("metric is not positive definite")
        object.__setattr__(self, "G", G)

    @property
    def det(self):
        return float(np.linalg.det(self.G))


# ---------------------------------------------------------------------------
# grids


@dataclass(eq=False)
class Grid:
    """Node lattice on an axis-aligned box in grid coordinates.

    Physical coordinates are origin + frame @ (grid coordinates), with an
    orthonormal frame, so physical lengths equal grid lengths.
    """

    lo: np.ndarray
    step: np.ndarray
    shape: tuple
    mass: np.ndarray
    weights: tuple
    active: np.ndarray
    tag: np.ndarray
    frame: np.ndarray
    origin: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def dim(self):
        return len(self.shape)

    @property
    def vol(self):
        return float(np.prod(self.step))

    @property
    def n_active(self):
        return int(self.active.sum())

    def axes(self):
        return [self.lo[a] + self.step[a] * np.arange(self.shape[a]) for a in range(self.dim)]

    def grid_points(self, flat_index=None):
        idx = np.indices(self.shape).reshape(self.dim, -1).T
        if flat_index is not None:
            idx = idx[flat_index]
        return self.lo + idx * self.step

    def to_physical(self, u):
        return self.origin + np.asarray(u) @ self.frame.T

    def points(self, flat_index=None):
        """Physical coordinates of nodes (all, or the given flat indices)."""
        return self.to_physical(self.grid_points(flat_index))

    def active_index(self):
        return np.flatnonzero(self.active.ravel())

    def active_points(self):
        return self.points(self.active_index())

    def node_mass(self):
        return self.mass.ravel()[self.active_index()] * self.vol

    def to_full(self, values, fill=0.0):
        out = np.full(int(np.prod(self.shape)), fill, dtype=np.asarray(values).dtype)
        out[self.active_index()] = values
        return out.reshape(self.shape)


def _block_sum(arr, n_sub, n_blocks, offset, axis):
    sl = [slice(None)] * arr.ndim
    sl[axis] = slice(offset, offset + n_blocks * n_sub)
    part = arr[tuple(sl)]
    shp = list(part.shape)
    shp[axis:axis + 1] = [n_blocks, n_sub]
    return part.reshape(shp).sum(axis=axis + 1)


def make_grid(lo, hi, step, inside: Callable, truncation: Callable | None = None,
              frame=None, origin=None, n_sub=None, chunk=2_000_000) -> Grid:
    """Build a masked grid on the box [lo, hi] (grid coordinates).

    inside(x) -> bool marks the closed physical domain (Neumann boundary);
    truncation(x) -> bool marks the open region kept after truncation
    (Dirichlet outside).  Both take physical points of shape (n, d).
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    d = lo.size
    step = np.broadcast_to(np.asarray(step, dtype=float), (d,)).copy()
    if np.any(step <= 0):
        raise ValueError("step must be positive")
    shape = tuple(int(round((hi[a] - lo[a]) / step[a])) + 1 for a in range(d))
    step = np.array([(hi[a] - lo[a]) / (shape[a] - 1) if shape[a] > 1 else step[a]
                     for a in range(d)])
    frame = np.eye(d) if frame is None else np.asarray(frame, dtype=float)
    origin = np.zeros(d) if origin is None else np.asarray(origin, dtype=float)
    if n_sub is None:
        n_sub = {1: 16, 2: 8, 3: 4}[d]
    if n_sub % 2:
        raise ValueError("n_sub must be even")

    # cell-centred sub-lattice covering [lo - step/2, hi + step/2]
    sub_axes = [lo[a] - step[a] / 2 + (np.arange(shape[a] * n_sub) + 0.5) * step[a] / n_sub
                for a in range(d)]
    sub_shape = tuple(len(s) for s in sub_axes)
    total = int(np.prod(sub_shape))
    flags = np.empty(total, dtype=bool)
    for start in range(0, total, chunk):
        idx = np.unravel_index(np.arange(start, min(total, start + chunk)), sub_shape)
        u = np.stack([sub_axes[a][idx[a]] for a in range(d)], axis=1)
        flags[start:start + len(u)] = inside(origin + u @ frame.T)
    flags = flags.reshape(sub_shape).astype(np.int32)

    frac = float(n_sub ** d)
    node_sum = flags
    for a in range(d):
        node_sum = _block_sum(node_sum, n_sub, shape[a], 0, a)
    mass = node_sum / frac
    weights = []
    for a in range(d):
        s = flags
        for b in range(d):
            if b == a:
                s = _block_sum(s, n_sub, shape[b] - 1, n_sub // 2, b)
            else:
                s = _block_sum(s, n_sub, shape[b], 0, b)
        weights.append(s / frac)

    u_nodes = np.indices(shape).reshape(d, -1).T * step + lo
    x_nodes = origin + u_nodes @ frame.T
    keep = mass.ravel() >= MIN_MASS
    if truncation is not None:
        trunc = np.asarray(truncation(x_nodes), dtype=bool)
        active = keep & trunc
    else:
        trunc = np.ones_like(keep)
        active = keep
    active = active.reshape(shape)
    tag = np.full(shape, OUTSIDE, dtype=np.int8)
    full = np.ones(shape, dtype=bool)
    for a in range(d):
        w = weights[a]
        sl_lo = [slice(None)] * d
        sl_hi = [slice(None)] * d
        sl_lo[a] = slice(0, shape[a] - 1)
        sl_hi[a] = slice(1, shape[a])
        partial = w < 1
        full[tuple(sl_lo)] &= ~partial
        full[tuple(sl_hi)] &= ~partial
    tag[active & full & (mass >= 1)] = INTERIOR
    tag[active & ~(full & (mass >= 1))] = NEUMANN
    cut = (keep & ~trunc).reshape(shape)
    tag[cut] = DIRICHLET
    g = Grid(lo=lo, step=step, shape=shape, mass=mass, weights=tuple(weights), active=active,
             tag=tag, frame=frame, origin=origin)
    if not active.any():
        raise ValueError("grid mask is empty")
    return g


def box_grid(lo, hi, step, neumann=True, **kw):
    """Plain box with Neumann (or Dirichlet) on every side."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    tol = 1e-12 * (1 + np.max(np.abs(hi - lo)))

    def inside(x):
        return np.all((x >= lo - tol) & (x <= hi + tol), axis=1)

    if neumann:
        return make_grid(lo, hi, step, inside, **kw)

    def trunc(x):
        return np.all((x > lo + tol) & (x < hi - tol), axis=1)

    return make_grid(lo, hi, step, inside, truncation=trunc, **kw)


# ---------------------------------------------------------------------------
# assembly


@dataclass(eq=False)
class HermitianOperator:
    """Stiffness K and diagonal mass M of the discrete form; K psi = lam M psi."""

    K: sp.csr_matrix
    mass: np.ndarray
    index: np.ndarray
    grid: Grid
    h: float
    under_resolved: bool = False

    @property
    def n(self):
        return self.K.shape[0]

    @property
    def matrix(self):
        """Symmetrically scaled matrix M^{-1/2} K M^{-1/2}."""
        s = sp.diags(1.0 / np.sqrt(self.mass))
        H = (s @ self.K @ s).tocsr()
        return H

    def apply(self, psi):
        """Discrete operator M^{-1} K psi."""
        return (self.K @ psi) / self.mass

    def energy(self, psi):
        return float(np.real(np.vdot(psi, self.K @ psi)))

    def norm2(self, psi):
        return float(np.sum(self.mass * np.abs(psi) ** 2))

    def to_coo_text(self):
        C = self.K.tocoo()
        rows = [f"{i} {j} {v.real:.17g} {v.imag:.17g}" for i, j, v in
                zip(C.row, C.col, np.asarray(C.data, dtype=complex))]
        return "\n".join(rows) + "\n"


def _edges(grid: Grid, axis: int):
    """Flat node indices (i, j) and weights for edges along one axis."""
    shape = grid.shape
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    sl_lo = [slice(None)] * grid.dim
    sl_hi = [slice(None)] * grid.dim
    sl_lo[axis] = slice(0, shape[axis] - 1)
    sl_hi[axis] = slice(1, shape[axis])
    i = idx[tuple(sl_lo)].ravel()
    j = idx[tuple(sl_hi)].ravel()
    w = grid.weights[axis].ravel()
    return i, j, w


def link_data(grid: Grid, A: PotentialField | None, h: float):
    """Per-axis edge lists with coupling constants and link phases."""
    act = grid.active.ravel()
    dirich = (grid.tag.ravel() == DIRICHLET)
    out = []
    for a in range(grid.dim):
        i, j, w = _edges(grid, a)
        use = (w > 0) & ((act[i] & (act[j] | dirich[j])) | (act[j] & dirich[i]))
        i, j, w = i[use], j[use], w[use]
        c = h * h * w * grid.vol / grid.step[a] ** 2
        if A is None:
            theta = np.zeros(len(i))
        else:
            xi = grid.points(i)
            xj = grid.points(j)
            Am = A(0.5 * (xi + xj))
            if not np.all(np.isfinite(Am)):
                bad = np.flatnonzero(~np.all(np.isfinite(Am), axis=1))[0]
                raise PotentialError(f"non-finite potential near {0.5 * (xi[bad] + xj[bad])}")
            theta = np.einsum("ij,ij->i", Am, xj - xi) / h
        out.append((i, j, c, theta))
    return out


def assemble_magnetic_laplacian(grid: Grid, A: PotentialField | None, h: float,
                                scalar: Callable | None = None) -> HermitianOperator:
    """Assemble (-ih grad + A)^2 (+ optional scalar potential) on a masked grid."""
    if h <= 0:
        raise ValueError("h must be positive")
    if not grid.active.any():
        raise ValueError("grid mask is empty")
    under = bool(np.max(grid.step) >= math.sqrt(h) / 4)
    if under:
        warnings.warn(f"under-resolved: step {np.max(grid.step):.3g} >= sqrt(h)/4",
                      UnderResolvedWarning, stacklevel=2)
    index = grid.active_index()
    n = len(index)
    pos = np.full(int(np.prod(grid.shape)), -1)
    pos[index] = np.arange(n)
    mass = grid.mass.ravel()[index] * grid.vol
    diag = np.zeros(n)
    rows, cols, vals = [], [], []
    complex_needed = False
    for i, j, c, theta in link_data(grid, A, h):
        pi, pj = pos[i], pos[j]
        both = (pi >= 0) & (pj >= 0)
        np.add.at(diag, pi[pi >= 0], c[pi >= 0])
        np.add.at(diag, pj[pj >= 0], c[pj >= 0])
        if np.any(theta[both] != 0):
            complex_needed = True
        rows.append(pi[both])
        cols.append(pj[both])
        vals.append(-c[both] * np.exp(1j * theta[both]))
    if scalar is not None:
        V = np.asarray(scalar(grid.points(index)), dtype=float)
        if not np.all(np.isfinite(V)):
            raise PotentialError("non-finite scalar potential")
        diag += V * mass
    rows = np.concatenate(rows) if rows else np.zeros(0, int)
    cols = np.concatenate(cols) if cols else np.zeros(0, int)
    vals = np.concatenate(vals) if vals else np.zeros(0, complex)
    if not complex_needed:
        vals = vals.real
    U = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    K = (U + U.conj().T + sp.diags(diag)).tocsr()
    K.sort_indices()
    return HermitianOperator(K=K, mass=mass, index=index, grid=grid, h=h, under_resolved=under)


def quadratic_form(A: PotentialField | None, h: float, psi, grid: Grid, scalar=None) -> float:
    """Edge-by-edge evaluation of the discrete form q_h[A](psi).

    psi holds values on the active nodes (in grid.active_index() order).
    """
    psi = np.asarray(psi)
    if not np.any(psi):
        raise ValueError("empty state")
    index = grid.active_index()
    full = np.zeros(int(np.prod(grid.shape)), dtype=complex)
    full[index] = psi
    total = 0.0
    for i, j, c, theta in link_data(grid, A, h):
        total += float(np.sum(c * np.abs(np.exp(1j * theta) * full[j] - full[i]) ** 2))
    if scalar is not None:
        V = scalar(grid.points(index))
        total += float(np.sum(V * grid.mass.ravel()[index] * grid.vol * np.abs(psi) ** 2))
    return total


def l2_norm2(psi, grid: Grid) -> float:
    return float(np.sum(grid.mass.ravel()[grid.active_index()] * grid.vol * np.abs(psi) ** 2))


def rayleigh_quotient(A, h, psi, grid, scalar=None):
    return quadratic_form(A, h, psi, grid, scalar) / l2_norm2(psi, grid)


def quadratic_form_metric(A: PotentialField | None, h: float, psi, grid: Grid,
                          G: ConstantMetric) -> float:
    """Discrete q_h[A, O, G](psi) = int <G P psi, P psi> |G|^{-1/2} dx, P = -ih grad + A.

    Covariant differences live on edges; the off-diagonal metric entries pair
    the averaged covariant differences of the two axes at each node.  For
    G = identity only the diagonal pairing survives and the edge sum of
    quadratic_form is recovered exactly.
    """
    if not isinstance(G, ConstantMetric):
        G = ConstantMetric(G)
    Gm = G.G
    d = grid.dim
    if Gm.shape != (d, d):
        raise ValueError("metric dimension mismatch")
    psi = np.asarray(psi)
    if not np.any(psi):
        raise ValueError("empty state")
    scale = 1.0 / math.sqrt(G.det)
    index = grid.active_index()
    nn = int(np.prod(grid.shape))
    full = np.zeros(nn, dtype=complex)
    full[index] = psi
    total = 0.0
    # node-centred covariant differences (one-sided averages) per axis,
    # expressed in the gauge of the node i
    Dnode = np.zeros((d, nn), dtype=complex)
    cnt = np.zeros((d, nn))
    for a, (i, j, c, theta) in enumerate(link_data(grid, A, h)):
        diff = (np.exp(1j * theta) * full[j] - full[i]) / grid.step[a]
        total += float(np.sum(c * np.abs(np.exp(1j * theta) * full[j] - full[i]) ** 2)) * Gm[a, a]
        # parallel transport the difference to node j as well
        np.add.at(Dnode[a], i, diff)
        np.add.at(Dnode[a], j, diff * np.exp(-1j * theta))
        np.add.at(cnt[a], i, 1)
        np.add.at(cnt[a], j, 1)
    if d > 1 and np.any(Gm - np.diag(np.diag(Gm))):
        with np.errstate(invalid="ignore", divide="ignore"):
            Dn = np.where(cnt > 0, Dnode / np.maximum(cnt, 1), 0)
        m = grid.mass.ravel() * grid.vol
        for a in range(d):
            for b in range(d):
                if a != b and Gm[a, b] != 0:
                    total += float(np.sum(m * h * h * Gm[a, b] * np.real(Dn[a] * np.conj(Dn[b]))))
    return total * scale


# ---------------------------------------------------------------------------
# eigensolvers


@dataclass
class SpectralResult:
    value: float
    vector: np.ndarray
    residual: float
    iterations: int
    meta: dict = field(default_factory=dict)


def golden_min(f, a, b, xtol=1e-6, fa=None, fb=None):
    """Golden-section search for a minimum of f on [a, b].

    Returns (x, f(x), evaluations).  The search assumes f unimodal; the best
    sampled point is returned.
    """
    inv = (math.sqrt(5) - 1) / 2
    c = b - inv * (b - a)
    d = a + inv * (b - a)
    fc, fd = f(c), f(d)
    nev = 2
    best = min((fc, c), (fd, d))
    while abs(b - a) > xtol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = f(c)
            best = min(best, (fc, c))
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = f(d)
            best = min(best, (fd, d))
        nev += 1
    return best[1], best[0], nev


def real_doubling(H):
    """Real symmetric [[Re, -Im], [Im, Re]] form of a complex Hermitian matrix."""
    H = sp.csr_matrix(H)
    R, I = H.real, H.imag
    return sp.bmat([[R, -I], [I, R]]).tocsr()


def _dense_smallest(H):
    w, v = np.linalg.eigh(H.toarray() if sp.issparse(H) else H)
    return w[0], v[:, 0]


def _lobpcg_smallest(H, tol, v0, maxiter, seed=0):
    import pyamg

    n = H.shape[0]
    shift = float(np.max(np.abs(H.diagonal()))) * 1e-3 + 1e-3
    ml = pyamg.smoothed_aggregation_solver((H + shift * sp.identity(n, format="csr")).tocsr())
    P = ml.aspreconditioner()
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 4))
    if np.iscomplexobj(H.data):
        X = X + 1j * rng.standard_normal((n, 4))
    if v0 is not None:
        X[:, 0] = v0
    vals, vecs, hist = spla.lobpcg(H, X.astype(H.dtype), M=P, largest=False, tol=tol,
                                   maxiter=maxiter, retResidualNormsHistory=True)
    k = int(np.argmin(vals))
    return float(vals[k]), vecs[:, k], len(hist)


def smallest_eigenpair(op: HermitianOperator, tol=1e-8, sigma=None, v0=None,
                       maxiter=2000, doubled=False, method="auto") -> SpectralResult:
    """Smallest eigenpair of K psi = lam M psi.

    Works on M^{-1/2} K M^{-1/2}.  Small problems go to dense LAPACK, 1D/2D
    problems to shift-invert Lanczos with a sparse LU (polished by inverse
    iteration), large 3D problems to LOBPCG with an algebraic multigrid
    preconditioner.  The returned vector is M-normalized.
    """
    if op.n < 1:
        raise ValueError("empty operator")
    H = op.matrix
    if doubled and np.iscomplexobj(H.data):
        H = real_doubling(H)
    n = H.shape[0]
    sq = np.sqrt(op.mass)
    start = None
    if v0 is not None:
        start = np.asarray(v0) * sq
        if doubled and start.size * 2 == n:
            start = np.concatenate([start.real, start.imag])
        start = start.astype(H.dtype)
    if method == "auto":
        if n <= 600:
            method = "dense"
        elif op.grid.dim == 3 and n > 12000:
            method = "lobpcg"
        else:
            method = "shift-invert"
    if method == "dense":
        lam, y = _dense_smallest(H)
        its = 1
    elif method == "lobpcg":
        lam, y, its = _lobpcg_smallest(H, tol * 0.5, start, maxiter)
    else:
        if sigma is None:
            sigma = -1e-2 * max(1.0, op.h)
        shifted = (H - sigma * sp.identity(n, dtype=H.dtype, format="csc")).tocsc()
        lu = spla.splu(shifted)
        OPinv = spla.LinearOperator((n, n), matvec=lu.solve, dtype=H.dtype)
        try:
            vals, vecs = spla.eigsh(H, k=1, sigma=sigma, OPinv=OPinv, which="LM",
                                    v0=start, tol=1e-13, maxiter=maxiter)
        except spla.ArpackNoConvergence as exc:
            raise SolverError("shift-invert iteration did not converge") from exc
        lam, y = float(np.real(vals[0])), vecs[:, 0]
        its = 1
        for its in range(1, 6):
            y = y / np.linalg.norm(y)
            r = np.linalg.norm(H @ y - lam * y)
            if r <= tol:
                break
            z = lu.solve(y)
            y = z / np.linalg.norm(z)
            lam = float(np.real(np.vdot(y, H @ y)))
    y = y / np.linalg.norm(y)
    lam = float(np.real(np.vdot(y, H @ y)))
    res = float(np.linalg.norm(H @ y - lam * y))
    if doubled and y.size == 2 * op.n:
        y = y[:op.n] + 1j * y[op.n:]
        y = y / np.linalg.norm(y)
    if res > tol:
        raise SolverError(f"residual {res:.3g} above tolerance {tol:.3g}", residual=res)
    psi = y / sq
    # fix the global phase: largest-modulus entry real positive
    k = int(np.argmax(np.abs(psi)))
    if np.iscomplexobj(psi):
        psi = psi * np.exp(-1j * np.angle(psi[k]))
    elif psi[k] < 0:
        psi = -psi
    return SpectralResult(value=lam, vector=psi, residual=res, iterations=its,
                          meta={"method": method, "n": op.n})


def tridiagonal_smallest(diag, offdiag, tol=1e-12, vector=False):
    """Smallest eigenvalue of a real symmetric tridiagonal matrix.

    Sturm-sequence bisection (LAPACK stebz) to absolute accuracy tol; with
    vector=True the eigenvector is added by inverse iteration (stein).
    """
    diag = np.asarray(diag, dtype=float)
    offdiag = np.asarray(offdiag, dtype=float)
    if diag.size == 1:
        return (float(diag[0]), np.ones(1)) if vector else float(diag[0])
    if vector:
        w, v = sla.eigh_tridiagonal(diag, offdiag, select="i", select_range=(0, 0),
                                    lapack_driver="stebz", tol=tol)
        return float(w[0]), v[:, 0]
    w = sla.eigh_tridiagonal(diag, offdiag, eigvals_only=True, select="i",
                             select_range=(0, 0), lapack_driver="stebz", tol=tol)
    return float(w[0])


def tridiagonal_from_operator(op: HermitianOperator):
    """Diagonal and off-diagonal of M^{-1/2} K M^{-1/2} for a real 1D operator."""
    H = op.matrix
    if np.iscomplexobj(H.data) and np.any(H.data.imag):
        H = H.copy()
        # a 1D chain is gauge-trivial: take moduli of the couplings
        H.data = np.where(np.abs(H.data.imag) > 0, -np.abs(H.data), H.data.real)
    H = H.real.tocsr()
    return H.diagonal(), H.diagonal(1)
