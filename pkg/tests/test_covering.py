import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polymag.core_numerics import PotentialField, box_grid
from polymag.covering import (Covering, CoveringError, CoveringParams, annulus_counts,
                              annulus_overlap_N, build_covering, bump_gradient_constant,
                              check_covering, cone_counts, cone_section, covering_1d,
                              covering_annulus, covering_cone, covering_interval,
                              covering_product, ims_identity_error, ims_lower_bound,
                              partition_of_unity, product_counts, product_member,
                              rho_max_domain, sample_domain, sector_section)
from polymag.domain_model import cube, tetrahedron
from polymag.quasimodes_bounds import symmetric_gauge_potential


def test_params_guard():
    with pytest.raises(CoveringError):
        CoveringParams(K=0.5, L=1, rho_max=1, kappa=0.5)
    with pytest.raises(CoveringError):
        CoveringParams(K=2, L=1, rho_max=1, kappa=0.0)


def test_covering_1d_explicit_points():
    c = covering_1d(1.0, 0.2, 0.1, 2.0)
    assert c.centers[0, 0] == 0.0 and c.radii[0] == 0.1
    # x_j = rho + (2j - 1) rho / K, r_j = rho / K
    for j in range(1, len(c) - 1):
        assert c.centers[j, 0] == pytest.approx(0.1 + (2 * j - 1) * 0.1 / 2.0, abs=1e-15)
        assert c.radii[j] == 0.05
    assert c.centers[1, 0] == pytest.approx(0.15)
    assert c.params.L == 4


def test_covering_1d_properties():
    c = covering_1d(1.0, 0.2, 0.1, 2.0)
    x = np.linspace(0, 1, 10001)[:-1, None]
    assert c.counts(x).min() >= 1
    assert c.counts(x, c.params.K).max() <= c.params.L


@settings(max_examples=25, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(1.5, 4.0), st.floats(0.05, 1.0))
def test_covering_1d_random(ell, K, frac):
    delta = ell / 2
    rho = frac * min(ell / K, delta)
    c = covering_1d(ell, delta, rho, K)
    x = np.linspace(0, ell, 2001)[:-1, None]
    assert c.counts(x).min() >= 1
    assert c.counts(x, K).max() <= c.params.L
    assert np.all((c.radii >= rho / K - 1e-15) & (c.radii <= rho + 1e-15))


def test_covering_1d_rejects_large_rho():
    with pytest.raises(CoveringError, match="rho_max=0.2"):
        covering_1d(1.0, 0.2, 0.3, 2.0)


def test_interval_covering_both_ends():
    c = covering_interval(0.0, 2.0, 0.2, 2.0)
    x = np.linspace(0, 2, 4001)[:, None]
    assert c.counts(x).min() >= 1
    assert c.counts(x, 2.0).max() <= c.params.L


def test_product_covering_shape_and_overlap():
    base = covering_interval(0.0, 1.0, 0.1, 2.0)
    prod = covering_product(base, 1.0)
    assert prod.params.L == base.params.L * 2
    assert prod.meta["a"] == 1.0 and prod.meta["a_prime"] == pytest.approx(math.sqrt(2))
    rng = np.random.default_rng(0)
    X = np.column_stack([rng.random(10000), rng.uniform(-1, 1, 10000)])
    assert product_counts(prod, X).min() >= 1
    assert product_counts(prod, X, 2.0).max() <= prod.params.L
    # B(x, r) inside the cell inside B(x, sqrt 2 r)
    idx = rng.choice(len(prod), 20, replace=False)
    for j in idx:
        c, r = prod.centers[j], prod.radii[j]
        u = rng.normal(size=(200, 2))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        inner = c + 0.999 * r * u
        assert product_member(prod, inner, idx=j).all()
        outer = c + 1.001 * math.sqrt(2) * r * u
        assert not product_member(prod, outer, idx=j).any()


def test_annulus_covering_of_sector():
    build, chart, rmax = sector_section(math.pi / 2, 2.0)
    ann = covering_annulus(build(0.2), chart)
    assert ann.meta["a"] == pytest.approx(math.log(2) / 8)
    rng = np.random.default_rng(1)
    r = 2.0 ** rng.uniform(-1, 1, 10000)
    ph = rng.uniform(0, math.pi / 2, 10000)
    X = np.column_stack([r * np.cos(ph), r * np.sin(ph)])
    assert annulus_counts(ann, X).min() >= 1
    N, cnt = annulus_overlap_N(ann)
    assert cnt <= N * ann.params.L * ann.params.K


def test_octant_cone_covering():
    build, chart, rmax = cone_section(np.eye(3), 2.0)
    cov = covering_cone(build, chart, 0.1, rmax)
    # 2^-4 < 0.1 <= 2^-3: apex ball plus four dyadic shells
    assert cov.meta["M"] == 3 and len(cov.meta["shells"]) == 4
    assert cov.radii[0] == 0.1 and np.allclose(cov.centers[0], 0)
    assert np.all(cov.radii <= 0.1 + 1e-12)
    assert np.all(cov.radii >= cov.params.kappa * 0.1 * (1 - 1e-9))
    N = cov.meta["N"]
    assert cov.params.L == 3 * N * cov.meta["shells"][0].params.L * 2 + 1
    rng = np.random.default_rng(2)
    u = rng.random((3000, 3))
    u = u / np.linalg.norm(u, axis=1, keepdims=True) * rng.random((3000, 1)) * 0.9
    assert cone_counts(cov, u).min() >= 1
    assert cone_counts(cov, u, 2.0).max() <= cov.params.L
    with pytest.raises(CoveringError):
        covering_cone(build, chart, 1.5, rmax)


def test_rho_max_of_cube():
    assert rho_max_domain(cube(), 2.0) == pytest.approx(0.5)
    with pytest.raises(CoveringError, match="rho_max"):
        build_covering(cube(), 0.6)


@pytest.mark.parametrize("dom,rho", [(cube(), 0.2), (tetrahedron(), 0.1)])
def test_domain_covering_properties(dom, rho):
    cov = build_covering(dom, rho, 2.0, n_check=24)
    chk = cov.meta["checks"]
    assert chk["covered"] and chk["chart"] and chk["overlap_ok"] and chk["radii_ok"]
    assert chk["max_overlap"] <= cov.params.L
    js = json.loads(cov.dumps())
    assert len(js["balls"]) == len(cov) and len(js["balls"][0]) == 4


def test_partition_of_unity_on_cube():
    cov = build_covering(cube(), 0.2, 2.0, check=False)
    X = sample_domain(cube(), 20, seed=3)
    pou = partition_of_unity(cov, X)
    assert np.max(np.abs(pou.sum_squares(X) - 1)) <= 1e-12
    assert pou.C <= bump_gradient_constant(cov)


def test_single_ball_partition_is_one():
    cov = Covering(np.zeros((1, 3)), np.array([1.0]), 1.0, CoveringParams(2.0, 1, 1.0, 1.0))
    X = np.random.default_rng(4).uniform(-0.5, 0.5, (200, 3))
    pou = partition_of_unity(cov)
    rows, cols, ch, g = pou.evaluate(X)
    assert np.all(ch == 1.0) and np.all(g == 0.0)


def test_partition_rejects_uncovered_points():
    cov = Covering(np.zeros((1, 3)), np.array([0.1]), 0.1, CoveringParams(2.0, 1, 1.0, 1.0))
    with pytest.raises(CoveringError, match="covering property"):
        partition_of_unity(cov).evaluate(np.array([[1.0, 0, 0]]))


def test_ims_identity_is_second_order():
    # lattice covering with radii resolved by the grid; the identity gap closes like step^2
    t = np.arange(5) * 0.25
    C = np.stack(np.meshgrid(t, t, t, indexing="ij"), -1).reshape(-1, 3)
    cov = Covering(C, np.full(len(C), 0.22), 0.22, CoveringParams(2.0, 27, 1.0, 1.0))
    pou = partition_of_unity(cov)
    errs = []
    for step in (1 / 20, 1 / 40):
        g = box_grid([0, 0, 0], [1, 1, 1], step)
        x = g.active_points()
        f = np.exp(-np.sum((x - 0.4) ** 2, axis=1) / 0.1) * np.exp(1j * x[:, 0])
        errs.append(ims_identity_error(g, symmetric_gauge_potential([0, 0, 1]), 0.1, f, pou)[0])
    assert errs[1] < 0.05
    assert errs[0] / errs[1] > 3


def test_ims_lower_bound_single_h():
    A = symmetric_gauge_potential([0, 0, 1])
    from polymag.core_numerics import ConstantField
    from polymag.domain_model import EnergyConfig
    from polymag.cone_spectra import ConeConfig
    from polymag.wedge_spectra import WedgeConfig
    w = WedgeConfig(radius=12.0, step=0.2, tau_step=0.5, enforce=False)
    cfg = EnergyConfig(wedge=w, cone=ConeConfig(radii=(6.0, 8.0), step=0.5, wedge=w), samples=4)
    rep = ims_lower_bound(cube(), ConstantField([0, 0, 1]), A, 0.2, cfg=cfg, n_samples=12)
    assert rep.eta == 0.0 and rep.linearization_penalty == 0.0
    assert rep.lower <= 0.2 * rep.E_script
    assert rep.penalty == pytest.approx(0.2 * rep.E_script - rep.lower)
    js = rep.to_json()
    assert set(js["budget_terms"]) == {"ims", "linearization", "eta", "C_ims"}


def test_nonlinear_potential_has_linearization_penalty():
    from polymag.core_numerics import ConstantField  # noqa: F401
    A = PotentialField(func=lambda x: np.column_stack([0.5 * x[:, 2] ** 2, x[:, 0], 0 * x[:, 0]]))
    B = lambda x: np.array([0.0, x[2], 1.0])
    from polymag.domain_model import EnergyConfig
    from polymag.cone_spectra import ConeConfig
    from polymag.wedge_spectra import WedgeConfig
    w = WedgeConfig(radius=12.0, step=0.2, tau_step=0.5, enforce=False)
    cfg = EnergyConfig(wedge=w, cone=ConeConfig(radii=(6.0, 8.0), step=0.5, wedge=w), samples=2)
    rep = ims_lower_bound(cube(), B, A, 0.2, cfg=cfg, n_samples=8, per_cell=False)
    assert rep.eta > 0 and rep.linearization_penalty > 0


def test_check_covering_detects_gap():
    cov = build_covering(cube(), 0.25, 2.0, check=False)
    holed = Covering(cov.centers[1:], cov.radii[1:], cov.rho, cov.params)
    chk = check_covering(holed, cube(), n=20)
    assert not chk["covered"]
