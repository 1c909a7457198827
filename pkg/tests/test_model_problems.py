import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polymag.core_numerics import assemble_magnetic_laplacian, box_grid, make_grid
from polymag.model_problems import (FiberConfig, GeneralizedEigenvector, ProfileMissing,
                                    boundary_angle, compute_theta0, de_gennes_mu,
                                    de_gennes_profile, full_space_energy, half_space_energy,
                                    sigma, sigma_curve, table_eigenvector,
                                    tilted_half_space_eigenvector)

THETA0 = compute_theta0().theta0
# regression value of the half-plane ground energy at angle pi/4 (2D solve, step 0.1, L = 20)
SIGMA_PI_4 = 0.9599984321782736


def test_mu_at_zero():
    assert abs(de_gennes_mu(0.0) - 1) < 1e-3


def test_mu_at_optimum():
    assert abs(de_gennes_mu(-math.sqrt(THETA0)) - THETA0) < 1e-3


def test_mu_far_left_is_close_to_one():
    # the well sits deep inside the half-line: 1 minus an exponentially small boundary gain
    v = de_gennes_mu(-3.0)
    assert 0.999 < v < 1.0


def test_theta0_result():
    r = compute_theta0()
    assert 0.585 <= r.theta0 <= 0.595
    assert r.tau_star < 0
    assert abs(r.tau_star + math.sqrt(r.theta0)) <= 1e-3
    assert r.tail_ratio() <= 1e-4
    assert abs(de_gennes_mu(r.tau_star) - r.theta0) < 1e-10


def test_theta0_richardson():
    a = compute_theta0(FiberConfig(step=5e-3)).theta0
    b = compute_theta0(FiberConfig(step=2.5e-3)).theta0
    c = compute_theta0(FiberConfig(step=1.25e-3)).theta0
    assert abs(b - c) <= abs(a - b) / 3


def test_fiber_config_guard():
    with pytest.raises(ValueError):
        FiberConfig(zmax=10)


@settings(max_examples=25, deadline=None)
@given(st.floats(-2.0, 0.0))
def test_mu_bounded_below_by_theta0(tau):
    assert de_gennes_mu(tau) >= THETA0 - 1e-12


def test_mu_unimodal_on_bracket():
    taus = np.linspace(-2, 0, 41)
    mu = np.array([de_gennes_mu(t) for t in taus])
    k = int(np.argmin(mu))
    assert 0 < k < len(taus) - 1
    assert np.all(np.diff(mu[:k + 1]) < 0) and np.all(np.diff(mu[k:]) > 0)


def test_profile_is_positive_and_normalized():
    z, phi, mu = de_gennes_profile(compute_theta0().tau_star)
    w = np.full(z.size, z[1] - z[0])
    w[0] /= 2
    assert np.sum(w * phi**2) == pytest.approx(1.0)
    assert phi[0] > 0


def test_sigma_endpoints_and_middle():
    assert sigma(0.0) == THETA0
    assert sigma(math.pi / 2) == 1.0
    s = sigma(math.pi / 4)
    assert THETA0 < s < 1
    assert s == pytest.approx(SIGMA_PI_4, abs=1e-8)


def test_sigma_symmetry_and_rejection():
    assert sigma(3 * math.pi / 4) == pytest.approx(sigma(math.pi / 4))
    with pytest.raises(ValueError):
        sigma(4.0)


def test_sigma_curve_csv():
    c = sigma_curve(5)
    assert c.is_increasing()
    text = c.to_csv()
    assert text.splitlines()[0] == "theta,sigma,L,step"
    assert len(text.splitlines()) == 6
    assert c(0.0) == pytest.approx(THETA0)


@given(st.floats(0, math.pi), st.floats(0, 2 * math.pi))
def test_boundary_angle_range(a, b):
    B = np.array([math.sin(a) * math.cos(b), math.sin(a) * math.sin(b), math.cos(a)])
    th = boundary_angle(B, [0, 0, 1])
    assert 0 <= th <= math.pi / 2 + 1e-12
    assert th == pytest.approx(math.asin(min(1.0, abs(B[2]))), abs=1e-9)


@pytest.mark.parametrize("B,E", [((1, 0, 0), 1.0), ((0, 0, 2), 2.0),
                                 ((1 / math.sqrt(3),) * 3, 1.0)])
def test_full_space(B, E):
    g = full_space_energy(B)
    assert g.E == pytest.approx(E)
    assert g.tag == "i" and g.k == 2 and g.E_star == math.inf


def test_full_space_rejects_zero():
    with pytest.raises(ValueError, match="vanishing"):
        full_space_energy((0, 0, 0))


def test_half_space_tangent():
    g = half_space_energy((1, 0, 0), (0, 0, 1))
    assert g.E == pytest.approx(THETA0) and g.k == 1 and g.tag == "i"
    assert g.eigenvector.phase_coef[0] == pytest.approx(-math.sqrt(THETA0), abs=1e-3)


@pytest.mark.parametrize("b", [1.0, 3.0])
def test_half_space_normal(b):
    g = half_space_energy((0, 0, b), (0, 0, 1))
    assert g.E == pytest.approx(b) and g.tag == "ii"


def test_half_space_scaling_matches_direct_solve():
    th = math.pi / 3
    B = 2.0 * np.array([math.cos(th), 0, math.sin(th)])
    g = half_space_energy(B, (0, 0, 1))
    assert g.E == pytest.approx(2.0 * sigma(th))
    # unscaled 2D problem: field of norm 2 means potential 2 (cos t x3 - sin t x2)
    grid = make_grid([-12, 0], [12, 12], 0.07, lambda x: x[:, 1] >= 0,
                     truncation=lambda x: (np.abs(x[:, 0]) < 12 - 1e-9) & (x[:, 1] < 12 - 1e-9))
    V = lambda x: (2 * (math.cos(th) * x[:, 1] - math.sin(th) * x[:, 0])) ** 2
    from polymag.core_numerics import smallest_eigenpair
    lam = smallest_eigenpair(assemble_magnetic_laplacian(grid, None, 1.0, scalar=V)).value
    assert lam == pytest.approx(g.E, rel=5e-3)


def test_half_space_rejects_bad_normal():
    with pytest.raises(ValueError):
        half_space_energy((1, 0, 0), (0, 0, 2))


def test_table_rows():
    g = table_eigenvector((2, 0), (0, 0, 1))
    assert g.energy == 1.0 and g.k == 2
    assert np.allclose(g.field(), [0, 0, 1])
    h = table_eigenvector((1, 1), (0, 1, 0), normal=(1, 0, 0))
    assert h.energy == pytest.approx(THETA0)
    assert h.phase_coef[0] == pytest.approx(-math.sqrt(THETA0), abs=1e-3)
    assert np.allclose(h.field(), [0, 1, 0])
    with pytest.raises(ProfileMissing, match="profile"):
        table_eigenvector((2, 2))
    with pytest.raises(ValueError):
        table_eigenvector((4, 4))


def residual_3d(gev: GeneralizedEigenvector, grid, interior):
    """Relative sup residual of (-i grad + A)^2 Psi - Lambda Psi on interior nodes."""
    op = assemble_magnetic_laplacian(grid, gev.potential(), 1.0)
    x = grid.active_points()
    psi = gev(x)
    r = op.apply(psi) - gev.Lambda * psi
    m = interior(x)
    return np.max(np.abs(r[m])) / np.max(np.abs(psi))


@pytest.mark.parametrize("B", [(0, 0, 1.0), (0.6, 0, 0.8), (0, 2.0, 0)])
def test_full_space_residual(B):
    gev = table_eigenvector((2, 0), B)
    b = np.linalg.norm(B)
    # first grid axis along B, where the state is constant
    frame = np.linalg.qr(np.column_stack([B, np.eye(3)]))[0][:, :3]
    s = 0.05 / math.sqrt(b)
    g = make_grid([-1, -5, -5], [1, 5, 5], [0.5, s, s], lambda x: np.ones(len(x), bool),
                  frame=frame, n_sub=2)
    u = lambda x: x @ frame
    res = residual_3d(gev, g, lambda x: (np.abs(u(x)[:, 0]) < 0.6)
                      & (np.hypot(u(x)[:, 1], u(x)[:, 2]) < 3))
    assert res <= 1e-3


def test_tangent_half_space_residual():
    gev = table_eigenvector((1, 1), (1, 0, 0), normal=(0, 0, 1))
    # the phase runs along x2 (the free direction orthogonal to the field)
    g = make_grid([-1, -0.2, 0], [1, 0.2, 10], [0.5, 0.01, 0.02], lambda x: x[:, 2] >= 0,
                  truncation=lambda x: (np.abs(x[:, 1]) < 0.2 - 1e-9)
                  & (x[:, 2] < 10 - 1e-9), n_sub=2)
    # the boundary row itself carries the first-order half-cell residual
    res = residual_3d(gev, g, lambda x: (np.abs(x[:, 0]) < 0.6) & (np.abs(x[:, 1]) < 0.1)
                      & (x[:, 2] > 0.01) & (x[:, 2] < 6))
    assert res <= 1e-3


def test_tilted_half_space_eigenvector():
    th = math.pi / 4
    B = (math.cos(th), 0, math.sin(th))
    gev = tilted_half_space_eigenvector(B, (0, 0, 1))
    assert gev.Lambda == pytest.approx(SIGMA_PI_4, abs=1e-6)
    assert np.allclose(gev.field(), B, atol=1e-12)
    gev_out = tilted_half_space_eigenvector((math.cos(th), 0, -math.sin(th)), (0, 0, 1))
    assert np.allclose(gev_out.field(), (math.cos(th), 0, -math.sin(th)), atol=1e-12)
    with pytest.raises(ValueError):
        tilted_half_space_eigenvector((1, 0, 0), (0, 0, 1))


def test_rotated_frame_keeps_rayleigh_quotient():
    from polymag.core_numerics import rayleigh_quotient

    gev = table_eigenvector((2, 0), (0, 0, 1))
    Q = np.array([[0.0, 0, 1], [1, 0, 0], [0, 1, 0]])
    rot = table_eigenvector((2, 0), (0, 0, 1), frame=Q @ gev.frame)
    g = box_grid([-4] * 3, [4] * 3, 0.25, neumann=False, n_sub=2)
    x = g.active_points()
    q1 = rayleigh_quotient(gev.potential(), 1.0, gev(x), g)
    B2 = rot.field()
    q2 = rayleigh_quotient(rot.potential(), 1.0, rot(x), g)
    assert np.linalg.norm(B2) == pytest.approx(1.0)
    assert q1 == pytest.approx(q2, rel=1e-6)
