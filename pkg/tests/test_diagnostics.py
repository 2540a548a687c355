from __future__ import annotations

import math

import numpy as np
import pytest

from kolmo.app.diagnostics import (
    ProbeContext,
    component_decomposition,
    dissipation_residual,
    enhanced_damping_metric,
    liapunov_ratio,
    rage_average,
    sample_probes,
    time_average,
    validate_probes,
    velocity_damping_average,
    z_norm,
)
from kolmo.app.dynamics import EvolutionModel, ModelTag
from kolmo.app.errors import InvalidParameterError, ProjectionError
from kolmo.app.flows import kolmogorov_flow
from kolmo.app.models import TimeSeriesRecord
from kolmo.app.spectral import inner, mode_field
from kolmo.app.utils import fit_exponential_rate, fit_power_growth


def _record(times, **columns) -> TimeSeriesRecord:
    record = TimeSeriesRecord()
    for index, t in enumerate(times):
        record.append(float(t), {name: float(values[index]) for name, values in columns.items()})
    return record


class TestZNorm:
    def test_single_mode_value(self, grid):
        assert z_norm(mode_field(grid, 1, 0), 1.0, 0.0) == pytest.approx(3.0 * math.pi**2, rel=1e-12)

    def test_shear_modes_do_not_count(self, grid):
        assert z_norm(mode_field(grid, 0, 2), 0.1, 1.0) == 0.0

    def test_needs_viscosity(self, grid):
        with pytest.raises(InvalidParameterError):
            z_norm(mode_field(grid, 1, 0), 0.0, 0.0)


class TestComponents:
    def test_square_torus_split(self, noise):
        split = component_decomposition(noise)
        parts = [split.s1, split.s2, split.n1, split.n2]
        total = parts[0] + parts[1] + parts[2] + parts[3]
        np.testing.assert_allclose(total.coeffs, noise.coeffs, atol=1e-15)
        for i, a in enumerate(parts):
            for b in parts[i + 1 :]:
                assert abs(inner(a, b)) <= 1e-13
        assert split.square

    def test_rectangular_torus_has_no_anomalous_part(self, rect_grid):
        omega = mode_field(rect_grid, 1, 0) + mode_field(rect_grid, 0, 1, part="sin", amplitude=2.0)
        split = component_decomposition(omega)
        assert not split.square
        assert np.max(np.abs(split.n1.coeffs)) == 0.0
        assert split.a2 == pytest.approx(2.0)
        assert split.a1 == pytest.approx(0.0, abs=1e-15)


class TestProbes:
    def test_unknown_diagnostic_name(self):
        with pytest.raises(InvalidParameterError, match="Sondas desconocidas"):
            validate_probes(["l2", "vorticity_max"])

    def test_components_are_flattened(self, noise):
        context = ProbeContext(flow=kolmogorov_flow(1.0))
        values = sample_probes(["components", "l2"], noise, 0.0, context)
        assert {"s1", "s2", "n1", "n2", "a", "b", "e", "a1", "a2", "l2"} <= set(values)
        assert values["e"] == pytest.approx(values["a"] + values["b"])

    def test_rage_size_is_validated(self, grid):
        with pytest.raises(ProjectionError):
            ProbeContext.for_model(EvolutionModel(ModelTag.lns_bar, nu=0.1), grid, rage_n=10_000)

    def test_pn_x_diagnostic_uses_energy_form(self, rect_grid):
        omega = mode_field(rect_grid, 1, 0)
        context = ProbeContext(flow=kolmogorov_flow(1.5), rage_n=2)
        value = sample_probes(["pn_x_sq"], omega, 0.0, context)["pn_x_sq"]
        assert value == pytest.approx((1.0 - 1.0 / 1.5**2) * inner(omega, omega))


class TestTimeAverages:
    def test_constant_average(self):
        times = np.linspace(0.0, 3.0, 31)
        np.testing.assert_allclose(time_average(times, np.full_like(times, 2.5)), 2.5)

    def test_linear_average(self):
        times = np.linspace(0.0, 4.0, 41)
        averages = time_average(times, times)
        np.testing.assert_allclose(averages[1:], times[1:] / 2.0, rtol=1e-12)
        assert averages[0] == 0.0

    def test_velocity_average(self):
        record = _record([0.0, 1.0, 2.0], velocity_sq=[4.0, 2.0, 0.0])
        np.testing.assert_allclose(velocity_damping_average(record), [4.0, 3.0, 2.0])
        with pytest.raises(InvalidParameterError, match="velocity_sq_x1free"):
            velocity_damping_average(record, "velocity_sq_x1free")

    def test_rage_needs_column(self):
        with pytest.raises(InvalidParameterError, match="pn_x_sq"):
            rage_average(_record([0.0, 1.0], l2=[1.0, 1.0]))


class TestDissipationResidual:
    def test_needs_three_samples(self):
        record = _record([0.0, 1.0], diss_inner_l=[1, 1], diss_grad_sq=[1, 1], diss_l2_sq=[1, 1])
        with pytest.raises(InvalidParameterError):
            dissipation_residual(record, 0.1)

    def test_exact_decay_has_no_residual(self):
        # Un único modo con ⟨Lω,ω⟩ = c e^{−2νλt}, ‖∇ω‖² = λ‖ω‖² y ‖ω‖² = e^{−2νλt}.
        nu, lam = 0.1, 4.0
        times = np.linspace(0.0, 1.0, 201)
        l2_sq = np.exp(-2.0 * nu * lam * times)
        record = _record(
            times,
            diss_inner_l=(1.0 - 1.0 / lam) * l2_sq,
            diss_grad_sq=lam * l2_sq,
            diss_l2_sq=l2_sq,
        )
        assert dissipation_residual(record, nu).max_relative <= 1e-4

    def test_snapshot_input(self, grid):
        flow = kolmogorov_flow(1.0)
        omega = mode_field(grid, 2, 1)
        nu = 0.05
        lam = 5.0
        snapshots = [(t, omega * math.exp(-nu * lam * t)) for t in np.linspace(0.0, 1.0, 101)]
        assert dissipation_residual(snapshots, nu, flow=flow).max_relative <= 1e-4
        with pytest.raises(InvalidParameterError):
            dissipation_residual(snapshots, nu)


class TestDampingMetric:
    def _series(self, nonshear):
        times = np.arange(0.0, 11.0)
        return _record(
            times,
            l2=np.full(times.size, 2.0),
            nonshear_l2=nonshear(times),
            nonshear_x1free_l2=0.5 * nonshear(times),
        )

    def test_rectangular_ratio(self):
        report = enhanced_damping_metric(self._series(lambda t: np.exp(-t)), nu=0.1, tau=0.5, square=False)
        assert report.metric == "rectangular"
        assert report.ratio == pytest.approx(math.exp(-5.0))
        assert report.t_final == pytest.approx(5.0)

    def test_square_uses_infimum(self):
        report = enhanced_damping_metric(self._series(lambda t: np.exp(-t)), nu=0.1, tau=0.5, square=True)
        assert report.metric == "square_x1free_infimum"
        assert report.ratio == pytest.approx(0.5 * math.exp(-5.0))
        assert report.infimum_time == pytest.approx(5.0)

    def test_shear_only_data(self):
        report = enhanced_damping_metric(self._series(np.zeros_like), nu=0.1, tau=0.5, square=False)
        assert report.shear_only
        assert report.ratio == pytest.approx(1.0)

    def test_run_too_short(self):
        with pytest.raises(InvalidParameterError, match="antes de"):
            enhanced_damping_metric(self._series(lambda t: np.exp(-t)), nu=0.01, tau=0.5, square=False)


class TestFits:
    def test_liapunov_ratio(self):
        record = _record([0.0, 1.0, 2.0], l2=[1.0, 3.0, 2.0], non_p2_l2=[0.5, 0.1, 0.1])
        assert liapunov_ratio(record) == pytest.approx(6.0)

    def test_exponential_rate(self):
        times = np.linspace(0.0, 10.0, 50)
        rate, r2 = fit_exponential_rate(times, 3.0 * np.exp(-0.7 * times))
        assert rate == pytest.approx(-0.7)
        assert r2 == pytest.approx(1.0)

    def test_power_growth(self):
        times = np.linspace(0.0, 10.0, 50)
        assert fit_power_growth(times, (1.0 + times) ** 1.5) == pytest.approx(1.5)
