import json
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlsavg import (
    ConfigurationError,
    DomainError,
    Grid,
    NonlinearitySpec,
    Potential,
    assemble_operator,
    eval_F,
    eval_G,
    eval_P,
    eval_field_rhs,
    hp_norm,
    mode_inverse,
    rotate,
)
from nlsavg.fields import dissipative_energy, laplacian_matrix, smoothed_power, smoothed_power_primitive

from conftest import random_modes

DISSIPATIVE_ONLY = NonlinearitySpec(gamma_I=0.0, include_laplacian_dissipation=False)


def quartic(basis, j):
    z = basis.eigenvectors_[j]
    return basis.quadrature_weight_ * np.sum(z**4)


def test_zero_spec_vanishes(cos_basis, rng):
    v = random_modes(rng, 8)
    grid = cos_basis.grid_
    assert np.all(eval_field_rhs(mode_inverse(v, cos_basis), NonlinearitySpec.zero(), grid) == 0)
    assert np.all(eval_P(v, NonlinearitySpec.zero(), cos_basis) == 0)
    assert np.all(eval_F(v, NonlinearitySpec.zero(), cos_basis) == 0)
    G = eval_G(v, NonlinearitySpec.zero(), cos_basis, floor=1e-12)
    assert np.all(G.compressed() == 0)


def test_constant_field():
    grid = Grid(1, 32)
    c = 0.7 - 0.4j
    u = np.full(grid.shape, c)
    out = eval_field_rhs(u, NonlinearitySpec(gamma_R=0.5, gamma_I=2.0), grid)
    np.testing.assert_allclose(out, (-0.5 - 2.0j) * abs(c) ** 2 * c, atol=1e-13)


def test_cos_trig_identity():
    grid = Grid(1, 64)
    x = grid.coordinates()[0]
    out = eval_field_rhs(np.cos(x), NonlinearitySpec(gamma_I=0.0), grid)
    np.testing.assert_allclose(out, -1.75 * np.cos(x) - 0.25 * np.cos(3 * x), atol=1e-13)


def test_laplacian_only_is_linear(cos_basis, rng):
    spec = NonlinearitySpec(gamma_R=0.0, gamma_I=0.0)
    v = random_modes(rng, 8)
    alpha = 1.3 - 0.8j
    np.testing.assert_allclose(eval_P(alpha * v, spec, cos_basis), alpha * eval_P(v, spec, cos_basis), atol=1e-12)


def test_laplacian_matrix_flat_potential(flat_basis):
    # for V = 1 the eigenfunctions are plane waves and Lap = 1 - A_V
    np.testing.assert_allclose(laplacian_matrix(flat_basis), np.diag(1.0 - flat_basis.eigenvalues_), atol=1e-12)


def test_cubic_projection_against_fine_quadrature(flat_basis):
    # independent fine-grid basis for the same operator
    fine = assemble_operator(Potential.constant(Grid(1, 512)), truncation=8)
    z1 = fine.eigenvectors_[0]
    ref = fine.quadrature_weight_ * (fine.eigenvectors_ @ z1**3)
    P = eval_P(np.eye(8)[0], DISSIPATIVE_ONLY, flat_basis)
    np.testing.assert_allclose(np.abs(P), np.abs(ref), atol=1e-12)
    # ground state of V = 1 is constant: int zeta^4 = 1 / (2 pi)
    assert P[0].real == pytest.approx(-1.0 / (2 * np.pi), rel=1e-12)


def test_cubic_projection_nonconstant_potential(cos_basis):
    fine = assemble_operator(Potential.trig(Grid(1, 512), 1.5, [{"k": [1], "cos": 0.5}]), truncation=8)
    ref = fine.quadrature_weight_ * (fine.eigenvectors_ @ fine.eigenvectors_[1] ** 3)
    P = eval_P(np.eye(8)[1], DISSIPATIVE_ONLY, cos_basis)
    # eigenvector signs are canonical, so signed values compare directly;
    # atol reflects the 3e-8 gap of the (7, 8) pair
    np.testing.assert_allclose(P.real, -ref, atol=1e-8)
    np.testing.assert_allclose(P.imag, 0.0, atol=1e-15)


def test_batched_P_matches_loop(cos_basis, cubic_cgl, rng):
    V = random_modes(rng, 8, 5)
    batched = eval_P(V, cubic_cgl, cos_basis)
    for v, row in zip(V, batched):
        np.testing.assert_allclose(eval_P(v, cubic_cgl, cos_basis), row, atol=1e-13)


def test_F_on_zero_state(cos_basis, cubic_cgl):
    assert np.all(eval_F(np.zeros(8), cubic_cgl, cos_basis) == 0)


def test_single_mode_F_independent_of_gamma_I(cos_basis):
    v = np.zeros(8, dtype=complex)
    v[2] = 0.9 + 0.3j
    F = [eval_F(v, NonlinearitySpec(gamma_I=g), cos_basis)[2] for g in (0.0, 1.0, 5.0)]
    assert F[0] == pytest.approx(F[1], abs=1e-14) and F[0] == pytest.approx(F[2], abs=1e-14)
    lap = laplacian_matrix(cos_basis)[2, 2]
    expected = (lap - quartic(cos_basis, 2) * abs(v[2]) ** 2) * abs(v[2]) ** 2
    assert F[0] == pytest.approx(expected, rel=1e-12)


def test_single_mode_G(cos_basis):
    v = np.zeros(8, dtype=complex)
    v[0] = 1.2 * np.exp(0.4j)
    gamma_I = 0.7
    G = eval_G(v, NonlinearitySpec(gamma_R=3.0, gamma_I=gamma_I), cos_basis, floor=1e-10)
    assert G.mask.tolist() == [False] + [True] * 7
    assert G[0] == pytest.approx(-gamma_I * abs(v[0]) ** 2 * quartic(cos_basis, 0), rel=1e-12)


def test_G_floor_must_be_positive(cos_basis, cubic_cgl):
    with pytest.raises(DomainError):
        eval_G(np.ones(8), cubic_cgl, cos_basis, floor=0.0)


def test_spec_validation_and_round_trip():
    with pytest.raises(ConfigurationError):
        NonlinearitySpec(kind="quartic")
    with pytest.raises(ConfigurationError):
        NonlinearitySpec(gamma_R=-1.0)
    with pytest.raises(ConfigurationError):
        NonlinearitySpec(kind="custom")
    spec = NonlinearitySpec(gamma_R=4.0, exp_p=0.5)
    assert NonlinearitySpec.from_dict(spec.to_dict()) == spec
    assert spec.b2 == pytest.approx(4.0 ** (-1.0))
    assert spec.satisfies_cgl_conditions(1)
    assert not NonlinearitySpec(gamma_I=0.0).satisfies_cgl_conditions(1)


def test_custom_plugin_matches_builtin(cos_basis, cubic_cgl, rng):
    def plugin(u, lap_u, grad_u, x):
        r = np.abs(u) ** 2
        return lap_u - r * u - 1j * r * u

    custom = NonlinearitySpec(kind="custom", plugin=plugin)
    v = random_modes(rng, 8)
    np.testing.assert_allclose(eval_P(v, custom, cos_basis), eval_P(v, cubic_cgl, cos_basis), atol=1e-12)


@pytest.mark.parametrize("p", [0.5, 1.5, 2.3])
def test_smoothing_is_c2_at_junction(p):
    r0 = 0.1
    h = 1e-6
    left = r0 - np.array([0.0, h, 2 * h])
    right = r0 + np.array([0.0, h, 2 * h])
    fl, fr = smoothed_power(left, p, r0), smoothed_power(right, p, r0)
    assert fl[0] == pytest.approx(fr[0], rel=1e-12)
    d1l, d1r = (fl[0] - fl[1]) / h, (fr[1] - fr[0]) / h
    assert d1l == pytest.approx(d1r, rel=1e-4)
    d2l = (fl[0] - 2 * fl[1] + fl[2]) / h**2
    d2r = (fr[0] - 2 * fr[1] + fr[2]) / h**2
    assert d2l == pytest.approx(d2r, rel=2e-2)
    assert smoothed_power(np.array([0.0]), p, r0)[0] == 0.0
    np.testing.assert_allclose(smoothed_power(np.array([0.5, 2.0]), p, r0), np.array([0.5, 2.0]) ** p)


@pytest.mark.parametrize("p", [0.5, 1.0, 2.3])
def test_primitive_differentiates_to_power(p):
    r0 = 0.1
    r = np.linspace(0.01, 0.5, 37)
    h = 1e-6
    num = (smoothed_power_primitive(r + h, p, r0) - smoothed_power_primitive(r - h, p, r0)) / (2 * h)
    np.testing.assert_allclose(num, smoothed_power(r, p, r0), rtol=1e-6, atol=1e-10)


@pytest.mark.parametrize("p, r0", [(1.0, 0.0), (0.5, 0.05)])
def test_gradient_of_dissipative_energy(cos_basis, rng, p, r0):
    spec = NonlinearitySpec(gamma_R=1.0, gamma_I=0.0, exp_p=p, smoothing_radius=r0)
    grid = cos_basis.grid_
    u = mode_inverse(0.5 * random_modes(rng, 8), cos_basis)
    grad = -eval_field_rhs(u, NonlinearitySpec(gamma_I=0.0, exp_p=p, smoothing_radius=r0, include_laplacian_dissipation=False), grid)
    for _ in range(3):
        w = mode_inverse(random_modes(rng, 8), cos_basis)
        h = 1e-5
        fd = (dissipative_energy(u + h * w, spec, grid) - dissipative_energy(u - h * w, spec, grid)) / (2 * h)
        exact = grid.inner(grad, w)
        assert fd == pytest.approx(exact, rel=1e-6)


def test_F_local_lipschitz_regression(cos_basis, cubic_cgl):
    with resources.files("nlsavg").joinpath("tolerances.json").open() as fh:
        bound = json.load(fh)["lipschitz_F_unit_h2_ball"]
    rng = np.random.default_rng(7)

    def ball(n):
        v = random_modes(rng, 8, n)
        return v / hp_norm(v, cos_basis, 2)[:, None] * rng.uniform(0, 1, (n, 1))

    v = ball(2000)
    w = v + 1e-3 * ball(2000)
    ratio = np.abs(eval_F(v, cubic_cgl, cos_basis) - eval_F(w, cubic_cgl, cos_basis)).max(axis=1) / hp_norm(v - w, cos_basis, 2)
    assert np.isfinite(ratio).all()
    assert ratio.max() <= bound


def test_angle_derivative_bounded_as_action_vanishes(cos_basis, cubic_cgl):
    rng = np.random.default_rng(8)
    base = 0.1 * random_modes(rng, 8)
    sizes = []
    for s in (1.0, 1e-2, 1e-4, 1e-6):
        v = base.copy()
        v[2] *= s
        th = np.zeros(8)
        th[2] = 1e-5
        d = (eval_F(rotate(v, th), cubic_cgl, cos_basis) - eval_F(rotate(v, -th), cubic_cgl, cos_basis)) / 2e-5
        sizes.append(np.abs(d).max())
    assert np.all(np.isfinite(sizes))
    assert max(sizes) == sizes[0]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=16, max_size=16), st.lists(st.floats(-10, 10), min_size=8, max_size=8))
def test_P_rotation_equivariant_for_flat_linear_part(parts, theta):
    # with V = 1 the Laplacian is diagonal in modes, so the linear part commutes with rotations
    basis = assemble_operator(Potential.constant(Grid(1, 32)), truncation=8)
    spec = NonlinearitySpec(gamma_R=0.0, gamma_I=0.0)
    v = np.array(parts[:8]) + 1j * np.array(parts[8:])
    theta = np.array(theta)
    np.testing.assert_allclose(eval_P(rotate(v, theta), spec, basis), rotate(eval_P(v, spec, basis), theta), atol=1e-11)
