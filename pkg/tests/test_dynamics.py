from __future__ import annotations

import math

import numpy as np
import pytest

from kolmo.app.diagnostics import dissipation_residual
from kolmo.app.dynamics import EvolutionModel, ModelTag, SimState, advection, cfl_limit, evolve, rhs, step
from kolmo.app.errors import CFLViolationError, InvalidParameterError, NumericalAbortError
from kolmo.app.flows import dipole_flow, kolmogorov_flow, shear_flow
from kolmo.app.initial_conditions import random_field
from kolmo.app.operators import apply_J, apply_L
from kolmo.app.profiles import Domain, builtin_profile
from kolmo.app.spectral import (
    P1,
    PNEQ0,
    SpectralField,
    complement,
    dealias,
    inner,
    l2_norm,
    make_grid,
    mode_field,
    project,
    velocity_from_vorticity,
)
from kolmo.app.utils import fit_power_growth


class TestEvolutionModel:
    def test_inviscid_model_rejects_viscosity(self):
        with pytest.raises(InvalidParameterError, match="no viscoso"):
            EvolutionModel(ModelTag.lin_euler_bar, nu=0.1)

    def test_negative_viscosity(self):
        with pytest.raises(InvalidParameterError):
            EvolutionModel(ModelTag.lns_bar, nu=-1.0)

    def test_shear_model_needs_a_flow(self):
        with pytest.raises(InvalidParameterError):
            EvolutionModel(ModelTag.lin_euler_shear)

    def test_base_flow_amplitude(self):
        model = EvolutionModel(ModelTag.lns_bar, nu=0.2)
        assert model.amplitude(5.0) == pytest.approx(math.exp(-1.0))
        assert EvolutionModel(ModelTag.lns_bar, nu=0.2, time_dependent_factor=False).amplitude(5.0) == 1.0


class TestAdvection:
    def test_sin_shear_model_matches_bar(self, noise):
        flow = shear_flow(builtin_profile("sinY", Domain.torus()))
        shear = advection(EvolutionModel(ModelTag.lin_euler_shear, flow=flow), noise, 0.0)
        bar = advection(EvolutionModel(ModelTag.lin_euler_bar), noise, 0.0)
        np.testing.assert_allclose(shear.coeffs, bar.coeffs, atol=1e-12)

    def test_shear_fields_are_steady_for_transport(self, grid):
        omega = mode_field(grid, 0, 3)
        for tag in (ModelTag.nse, ModelTag.lns_bar, ModelTag.lns_approx):
            out = advection(EvolutionModel(tag, nu=0.1), omega, 0.0)
            assert np.max(np.abs(out.coeffs)) <= 1e-14

    def test_rhs_of_shear_mode_is_pure_diffusion(self, grid):
        nu = 0.05
        omega = mode_field(grid, 0, 2)
        derivative = rhs(SimState(omega, 0.3, EvolutionModel(ModelTag.lns_bar, nu=nu)))
        np.testing.assert_allclose(derivative.coeffs, -4.0 * nu * omega.coeffs, atol=1e-14)


class TestEvolve:
    @pytest.mark.parametrize("tag", [ModelTag.lns_bar, ModelTag.nse])
    def test_shear_mode_decays_like_heat(self, grid, tag):
        nu = 0.05
        state = SimState(mode_field(grid, 0, 2), 0.0, EvolutionModel(tag, nu=nu))
        record = evolve(state, 2.0, 0.5, ["l2"], dt=0.01)
        ratio = record.column("l2") / record.column("l2")[0]
        np.testing.assert_allclose(ratio, np.exp(-4.0 * nu * record.time_array), rtol=1e-10)

    def test_sampling_grid(self, noise):
        state = SimState(noise, 0.0, EvolutionModel(ModelTag.lns_bar, nu=0.01))
        record = evolve(state, 1.0, 0.1, ["l2"], dt=0.01)
        assert len(record) == 11
        assert record.times[-1] == pytest.approx(1.0)
        assert record.final_state.time == pytest.approx(1.0)

    def test_inviscid_energy_is_conserved(self):
        grid = make_grid(2.0, 32, 32)
        omega = project(random_field(grid, seed=11, k0=2.0), PNEQ0)
        state = SimState(omega, 0.0, EvolutionModel(ModelTag.lin_euler_bar))
        record = evolve(state, 5.0, 0.5, ["inner_l"], dt=0.01)
        energy = record.column("inner_l")
        assert np.max(np.abs(energy - energy[0])) <= 1e-6 * energy[0]

    def test_dissipation_law(self):
        grid = make_grid(1.5, 32, 32)
        omega = project(random_field(grid, seed=5, k0=2.0), PNEQ0)
        nu = 0.01
        state = SimState(omega, 0.0, EvolutionModel(ModelTag.lns_bar, nu=nu))
        record = evolve(state, 1.0, 0.005, ["dissipation"], dt=0.005)
        residual = dissipation_residual(record, nu)
        assert residual.max_relative <= 5e-3
        snapshots = residual.times.size
        assert snapshots == len(record)

    def test_end_time_must_advance(self, noise):
        state = SimState(noise, 1.0, EvolutionModel(ModelTag.lns_bar, nu=0.01))
        with pytest.raises(InvalidParameterError):
            evolve(state, 1.0, 0.1, ["l2"], dt=0.01)

    def test_cfl_violation(self, noise):
        state = SimState(noise, 0.0, EvolutionModel(ModelTag.lns_bar, nu=0.01))
        with pytest.raises(CFLViolationError):
            step(state, 1.0)

    def test_horizontal_transport_ignores_vertical_resolution(self):
        grid = make_grid(2.0, 4, 2048)
        omega = mode_field(grid, 1, 1)
        bar = SimState(omega, 0.0, EvolutionModel(ModelTag.lin_euler_bar))
        assert cfl_limit(bar.model, omega, 0.0) == pytest.approx(0.4 * grid.dx)
        assert step(bar, 0.05).time == pytest.approx(0.05)
        with pytest.raises(CFLViolationError):
            step(SimState(omega, 0.0, EvolutionModel(ModelTag.nse, nu=0.01)), 0.05)

    def test_non_finite_initial_data_aborts_before_stepping(self, grid):
        coeffs = np.array(mode_field(grid, 1, 1).coeffs)
        coeffs[grid.mode_slot(2, 1)] = np.nan
        state = SimState(SpectralField(grid, coeffs), 0.0, EvolutionModel(ModelTag.lns_bar, nu=0.01))
        with pytest.raises(NumericalAbortError, match="inicial") as excinfo:
            evolve(state, 1.0, 0.1, ["l2"], dt=0.01)
        assert excinfo.value.time == 0.0
        record = excinfo.value.record
        assert record.aborted
        assert record.abort_time == 0.0
        assert len(record) == 0

    def test_unknown_diagnostic(self, noise):
        state = SimState(noise, 0.0, EvolutionModel(ModelTag.lns_bar, nu=0.01))
        with pytest.raises(InvalidParameterError, match="Sondas desconocidas"):
            evolve(state, 1.0, 0.1, ["enstrophy"], dt=0.01)

    def test_kolmogorov_flow_is_the_model_base(self):
        model = EvolutionModel(ModelTag.lns_bar, nu=0.1)
        assert model.base_flow(0.7).kind is kolmogorov_flow(0.7).kind


class TestModelVariants:
    def test_projected_model_keeps_square_torus_data_off_the_kernel(self):
        grid = make_grid(1.0, 32, 32)
        omega = complement(project(random_field(grid, seed=9, k0=3.0), PNEQ0), P1)
        bar = advection(EvolutionModel(ModelTag.lin_euler_bar), omega, 0.0)
        assert l2_norm(project(bar, P1)) > 1e-3
        assert l2_norm(project(advection(EvolutionModel(ModelTag.lin_euler_projected), omega, 0.0), P1)) == 0.0

        state = SimState(omega, 0.0, EvolutionModel(ModelTag.lin_euler_projected))
        record = evolve(state, 5.0, 0.5, ["inner_l"], dt=0.01)
        assert l2_norm(project(record.final_state.omega, P1)) == 0.0
        energy = record.column("inner_l")
        assert np.max(np.abs(energy - energy[0])) <= 1e-6 * energy[0]

    def test_dipole_model_is_the_hamiltonian_pair(self, noise):
        nu, t = 0.1, 0.7
        model = EvolutionModel(ModelTag.lns_dipole, nu=nu)
        flow = dipole_flow(1.0)
        expected = apply_J(flow, apply_L(flow, noise))
        np.testing.assert_allclose(
            advection(model, noise, t).coeffs, math.exp(-nu * t) * expected.coeffs, atol=1e-12
        )

    def test_dipole_stream_function_only_diffuses(self, grid):
        nu = 0.1
        psi0 = mode_field(grid, 1, 0) + mode_field(grid, 0, 1)
        derivative = rhs(SimState(psi0, 0.0, EvolutionModel(ModelTag.lns_dipole, nu=nu)))
        np.testing.assert_allclose(derivative.coeffs, -nu * psi0.coeffs, atol=1e-14)

    def test_euler_conserves_energy_and_enstrophy(self):
        grid = make_grid(1.5, 32, 32)
        omega = project(random_field(grid, seed=21, k0=3.0, amplitude=0.1), PNEQ0)
        state = SimState(omega, 0.0, EvolutionModel(ModelTag.nse, nu=0.0))
        final = evolve(state, 5.0, 1.0, ["l2"], dt=0.01).final_state.omega
        # Vorticidad total: perturbación más la de la barra, −cos y.
        bar = mode_field(grid, 0, 1, amplitude=-1.0)
        before, after = dealias(omega) + bar, final + bar
        for invariant in (
            lambda w: inner(w, w),
            lambda w: velocity_from_vorticity(w).kinetic_energy(),
        ):
            assert invariant(after) == pytest.approx(invariant(before), rel=1e-7)


class TestTimeAccuracy:
    def test_fourth_order_convergence(self):
        grid = make_grid(2.0, 4, 64)
        omega = mode_field(grid, 1, 1) + mode_field(grid, 1, 0, part="sin")
        state = SimState(omega, 0.0, EvolutionModel(ModelTag.lin_euler_bar))

        def _final(dt):
            return evolve(state, 2.0, 1.0, ["l2"], dt=dt).final_state.omega

        reference = _final(0.00625)
        errors = [l2_norm(_final(dt) - reference) for dt in (0.1, 0.05)]
        assert 14.0 <= errors[0] / errors[1] <= 18.0

    def test_gradient_growth_is_at_most_linear(self):
        grid = make_grid(2.0, 4, 1024)
        state = SimState(mode_field(grid, 1, 0), 0.0, EvolutionModel(ModelTag.lin_euler_bar))
        record = evolve(state, 100.0, 0.5, ["h1"], dt=0.05)
        exponent = fit_power_growth(record.time_array, record.column("h1"), t_min=5.0)
        assert 0.8 <= exponent <= 1.1
