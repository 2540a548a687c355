from __future__ import annotations

import numpy as np
import pytest

from kolmo.app.errors import ArtifactMissingError, FlowClassificationError, InvalidParameterError
from kolmo.app.flows import (
    FlowKind,
    dipole_flow,
    find_inflection_values,
    grid_tables,
    kolmogorov_flow,
    shear_flow,
)
from kolmo.app.profiles import Domain, builtin_profile, load_profile_csv, spline_profile
from kolmo.app.spectral import make_grid


class TestKolmogorovFlow:
    @pytest.mark.parametrize(
        ("alpha", "expected"),
        [(1.0, ((1, 0, "cos"), (1, 0, "sin"))), (0.5, ((2, 0, "cos"), (2, 0, "sin"))), (0.7, ())],
    )
    def test_kernel_modes(self, alpha, expected):
        assert kolmogorov_flow(alpha).kernel_modes == expected

    def test_kernel_is_one(self):
        flow = kolmogorov_flow(1.0)
        tables = grid_tables(flow, make_grid(1.0, 16, 16))
        np.testing.assert_allclose(tables["kernel"], 1.0, atol=1e-12)
        assert flow.kind is FlowKind.kolmogorov_bar
        assert flow.u_s == 0.0

    def test_dipole_needs_square_torus(self):
        assert dipole_flow(1.0).kind is FlowKind.dipole
        with pytest.raises(InvalidParameterError):
            dipole_flow(0.5)


class TestShearClassification:
    def test_tanh_channel_is_k_plus(self):
        profile = builtin_profile("tanh", Domain.channel(-5.0, 5.0))
        flow = shear_flow(profile)
        assert flow.kind is FlowKind.shear_k_plus
        assert flow.u_s == pytest.approx(0.0, abs=1e-9)
        assert flow.kernel_values(np.array([0.0]))[0] == pytest.approx(2.0, rel=1e-9)

    def test_sin_profile_on_torus_matches_bar(self):
        flow = shear_flow(builtin_profile("sinY", Domain.torus()))
        assert flow.kind is FlowKind.shear_k_plus
        assert flow.u_s == pytest.approx(0.0, abs=1e-12)
        y = np.linspace(0.1, 6.0, 9)
        np.testing.assert_allclose(flow.kernel_values(y), 1.0, rtol=1e-12)

    def test_parabola_is_class_one(self):
        profile = builtin_profile("parabola", Domain.channel(-1.0, 1.0))
        flow = shear_flow(profile)
        assert flow.kind is FlowKind.shear_no_inflection
        assert flow.u_s > 1.0
        assert np.all(flow.kernel_values(np.linspace(-0.9, 0.9, 7)) > 0)

    def test_class_one_rejects_u_s_in_range(self):
        profile = builtin_profile("parabola", Domain.channel(-1.0, 1.0))
        with pytest.raises(FlowClassificationError, match="U_s"):
            shear_flow(profile, u_s=0.5)

    def test_couette_has_no_kernel(self):
        profile = builtin_profile("couette", Domain.channel(0.0, 1.0))
        with pytest.raises(FlowClassificationError, match="U'' ≡ 0"):
            shear_flow(profile)

    def test_several_inflection_values_need_explicit_u_s(self):
        y = np.linspace(0.0, 2.0 * np.pi, 256, endpoint=False)
        profile = spline_profile(y, np.sin(y) + 0.3 * np.sin(2.0 * y), Domain.torus())
        assert len(find_inflection_values(profile).value_set(tol=1e-4)) == 3
        with pytest.raises(FlowClassificationError, match="U_s"):
            shear_flow(profile)

    def test_unknown_profile(self):
        with pytest.raises(InvalidParameterError, match="desconocido"):
            builtin_profile("poiseuille", Domain.torus())


class TestInflectionPoints:
    def test_sin_profile_has_two_points_one_value(self):
        report = find_inflection_values(builtin_profile("sinY", Domain.torus()))
        ys = sorted(point.y for point in report.points)
        assert ys == pytest.approx([0.0, np.pi], abs=1e-8)
        assert len(report.value_set()) == 1

    def test_tanh_root_is_bisected(self):
        report = find_inflection_values(builtin_profile("tanh", Domain.channel(-3.0, 4.0)))
        assert len(report.points) == 1
        assert report.points[0].y == pytest.approx(0.0, abs=1e-9)


class TestProfileCsv:
    def test_missing_csv(self, tmp_path):
        with pytest.raises(ArtifactMissingError):
            load_profile_csv(tmp_path / "nope.csv", Domain.torus())

    def test_csv_with_header(self, tmp_path):
        y = np.linspace(-4.0, 4.0, 200)
        path = tmp_path / "tanh.csv"
        rows = "\n".join(f"{a:.17g},{b:.17g}" for a, b in zip(y, np.tanh(y)))
        path.write_text("y,U\n" + rows + "\n", encoding="utf-8")
        profile = load_profile_csv(path, Domain.channel(-4.0, 4.0))
        assert profile.name == "tanh"
        assert profile.u(np.array([0.5]))[0] == pytest.approx(np.tanh(0.5), abs=1e-5)


class TestSplineProfile:
    def test_periodic_derivatives(self):
        y = np.linspace(0.0, 2.0 * np.pi, 128, endpoint=False)
        profile = spline_profile(y, np.sin(y), Domain.torus())
        points = np.linspace(0.1, 6.2, 37)
        np.testing.assert_allclose(profile.d2u(points), -np.sin(points), atol=1e-5)
        np.testing.assert_allclose(profile.d3u(points), -np.cos(points), atol=1e-3)
        np.testing.assert_allclose(profile.u(points + 2.0 * np.pi), profile.u(points), atol=1e-12)

    def test_needs_six_samples(self):
        y = np.linspace(0.0, 1.0, 5)
        with pytest.raises(InvalidParameterError, match="6 muestras"):
            spline_profile(y, y**2, Domain.channel(0.0, 1.0))
