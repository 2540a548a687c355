from __future__ import annotations

import numpy as np
import pytest

from kolmo.app.errors import InvalidParameterError
from kolmo.app.flows import dipole_flow, kolmogorov_flow, shear_flow
from kolmo.app.initial_conditions import random_field
from kolmo.app.operators import apply_J, apply_L, norms, x1_form
from kolmo.app.profiles import Domain, builtin_profile
from kolmo.app.spectral import PNEQ0, inner, make_grid, mode_field, partial_y, project


class TestApplyL:
    @pytest.mark.parametrize(("k", "m"), [(1, 0), (1, 2), (3, -1)])
    def test_bar_acts_diagonally(self, rect_grid, k, m):
        omega = mode_field(rect_grid, k, m)
        lam = (1.5 * k) ** 2 + m**2
        result = apply_L(kolmogorov_flow(1.5), omega)
        np.testing.assert_allclose(result.coeffs, (1.0 - 1.0 / lam) * omega.coeffs, atol=1e-14)

    def test_sin_shear_matches_bar(self, noise):
        flow = shear_flow(builtin_profile("sinY", Domain.torus()))
        np.testing.assert_allclose(
            apply_L(flow, noise).coeffs, apply_L(kolmogorov_flow(1.0), noise).coeffs, atol=1e-12
        )

    def test_bar_kernel_on_square_torus(self, grid):
        anomalous = mode_field(grid, 1, 0) + mode_field(grid, 1, 0, part="sin", amplitude=0.5)
        result = apply_L(kolmogorov_flow(1.0), anomalous)
        assert np.max(np.abs(result.coeffs)) <= 1e-15

    def test_dipole_kernel(self, grid):
        flow = dipole_flow(1.0)
        for k, m in ((1, 0), (0, 1)):
            for part in ("cos", "sin"):
                assert np.max(np.abs(apply_L(flow, mode_field(grid, k, m, part=part)).coeffs)) <= 1e-15

    def test_dipole_rejects_rectangular_torus(self, rect_grid):
        with pytest.raises(InvalidParameterError):
            apply_L(dipole_flow(1.0), mode_field(rect_grid, 1, 0))


class TestApplyJ:
    @pytest.mark.parametrize("flow", [kolmogorov_flow(1.0), dipole_flow(1.0)], ids=["bar", "dipole"])
    def test_skew_symmetry(self, grid, flow):
        f = random_field(grid, seed=1, k0=3.0)
        g = random_field(grid, seed=2, k0=3.0)
        scale = inner(f, f) * 10.0
        assert abs(inner(apply_J(flow, f), g) + inner(f, apply_J(flow, g))) <= 1e-12 * scale

    def test_bar_on_single_mode(self, grid):
        x, y = grid.mesh()
        result = apply_J(kolmogorov_flow(1.0), mode_field(grid, 1, 0))
        # −sin y ∂x cos x = sin y sin x
        np.testing.assert_allclose(result.to_physical(), np.sin(y) * np.sin(x), atol=1e-12)

    def test_dipole_stream_function_is_steady(self, grid):
        psi0 = mode_field(grid, 1, 0) + mode_field(grid, 0, 1)
        assert np.max(np.abs(apply_J(dipole_flow(1.0), psi0).coeffs)) <= 1e-14

    def test_hamiltonian_flow_conserves_energy(self, noise):
        flow = kolmogorov_flow(1.0)
        lw = apply_L(flow, noise)
        assert abs(inner(lw, apply_J(flow, lw))) <= 1e-12 * inner(lw, lw) * 10.0


class TestNorms:
    def test_bar_x1_form_on_mode(self, rect_grid):
        omega = mode_field(rect_grid, 2, 1)
        lam = (1.5 * 2) ** 2 + 1
        assert x1_form(kolmogorov_flow(1.5), omega) == pytest.approx((lam - 1.0) * inner(omega, omega))

    def test_positive_when_stable(self):
        grid = make_grid(2.0, 32, 32)
        omega = project(random_field(grid, seed=3, k0=4.0), PNEQ0)
        bundle = norms(kolmogorov_flow(2.0), omega)
        assert not bundle.indefinite
        assert bundle.x > 0
        assert bundle.x <= bundle.l2

    def test_energy_bounds_above_critical_wavenumber(self):
        alpha = 2.0
        grid = make_grid(alpha, 32, 32)
        omega = project(random_field(grid, seed=8, k0=4.0), PNEQ0)
        bundle = norms(kolmogorov_flow(alpha), omega)
        l2_sq = inner(omega, omega)
        dy = partial_y(omega)
        assert bundle.x**2 >= (1.0 - alpha**-2) * l2_sq
        assert bundle.x1**2 >= min(1.0, alpha**2 - 1.0) * (l2_sq + inner(dy, dy))

    def test_indefinite_form_is_reported(self):
        grid = make_grid(0.5, 32, 32)
        omega = mode_field(grid, 1, 0)
        bundle = norms(kolmogorov_flow(0.5), omega)
        assert bundle.indefinite
        assert np.isnan(bundle.x)
        assert bundle.inner_l == pytest.approx(-3.0 * inner(omega, omega))
