"""Polyline curvature and curve-energy quadrature."""

import numpy as np
import pytest

from sosm.errors import DegenerateInputError, ParameterError, SizeError
from sosm.geometry import (Polyline, curve_energy, polyline_curvature,
                           second_difference, weighted_curve_energy)


def circle_polyline(m, radius=1.0, closed=True):
    theta = 2.0 * np.pi * np.arange(m) / m
    points = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
    return Polyline(points=points, closed=closed)


def open_circle_with_linear_times(m, rate):
    """Uniformly spaced open circle; times grow linearly with arc length."""
    line = circle_polyline(m, closed=False)
    return line, rate * np.asarray(line.arclengths)


class TestPolyline:
    def test_needs_two_points(self):
        with pytest.raises(SizeError):
            Polyline(points=[[0.0, 0.0]])

    def test_rejects_coincident_consecutive_points(self):
        with pytest.raises(DegenerateInputError):
            Polyline(points=[[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]])

    def test_arclengths_strictly_increasing_from_zero(self):
        line = Polyline(points=[[0.0, 0.0], [3.0, 4.0], [3.0, 6.0]])
        assert line.arclengths[0] == 0.0
        assert np.array_equal(line.arclengths, [0.0, 5.0, 7.0])


class TestSecondDifference:
    def test_affine_sequence_is_zero(self):
        pts = np.array([[i, 2.0 * i] for i in range(5)])
        assert np.array_equal(second_difference(pts), np.zeros((3, 2)))

    def test_hat_sequence(self):
        # hand application of z[i+1] - 2 z[i] + z[i-1]
        out = second_difference(np.array([[0.0], [1.0], [0.0]]))
        assert np.array_equal(out, [[-2.0]])

    def test_quadratic_sequence(self):
        pts = np.array([[float(i * i)] for i in range(6)])
        assert np.allclose(second_difference(pts), 2.0)

    def test_too_short(self):
        with pytest.raises(SizeError):
            second_difference(np.array([[0.0], [1.0]]))


class TestPolylineCurvature:
    def test_straight_line_any_spacing(self):
        s = np.array([0.0, 0.3, 1.1, 1.2, 3.0])
        direction = np.array([1.0, 2.0, -1.0]) / np.sqrt(6.0)
        line = Polyline(points=np.outer(s, direction))
        assert np.abs(polyline_curvature(line).kappas).max() <= 1e-12

    def test_regular_360gon_radius_2(self):
        # analytic curvature of a circle is 1/r
        profile = polyline_curvature(circle_polyline(360, radius=2.0))
        assert np.abs(profile.kappas - 0.5).max() <= 1e-3
        assert profile.kappas.size == 360  # closed: every vertex

    def test_open_polyline_drops_endpoints(self):
        line = circle_polyline(100, closed=False)
        profile = polyline_curvature(line)
        assert profile.kappas.size == 98
        assert profile.vertex_indices[0] == 1

    def test_two_points_is_size_error(self):
        line = Polyline(points=[[0.0, 0.0], [1.0, 0.0]])
        with pytest.raises(SizeError):
            polyline_curvature(line)

    def test_3d_circle_matches_plane_circle(self):
        theta = 2.0 * np.pi * np.arange(200) / 200
        flat = np.stack([np.cos(theta), np.sin(theta), np.zeros_like(theta)], axis=1)
        profile = polyline_curvature(Polyline(points=flat, closed=True))
        assert np.abs(profile.kappas - 1.0).max() <= 1e-3

    def test_high_dimensional_circle(self):
        # Lagrange-identity branch must agree with the planar value
        theta = 2.0 * np.pi * np.arange(200) / 200
        plane = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        rng = np.random.default_rng(4)
        frame, _ = np.linalg.qr(rng.standard_normal((6, 2)))
        lifted = plane @ frame.T
        profile = polyline_curvature(Polyline(points=lifted, closed=True))
        assert np.abs(profile.kappas - 1.0).max() <= 1e-3


class TestCurveEnergy:
    def test_straight_line_zero(self):
        line = Polyline(points=np.outer(np.linspace(0, 1, 50), [1.0, 1.0]))
        assert curve_energy(line) <= 1e-12

    def test_unit_circle_energy_2pi(self):
        assert curve_energy(circle_polyline(1000)) == pytest.approx(2.0 * np.pi, abs=1e-2)

    def test_radius_2_circle_energy_pi(self):
        assert curve_energy(circle_polyline(1000, radius=2.0)) == pytest.approx(np.pi, abs=1e-2)

    def test_discretization_convergence_order(self):
        # energy errors shrink at order >= 1 as the vertex count doubles
        ms = np.array([50, 100, 200, 400])
        errors = np.array([abs(curve_energy(circle_polyline(m)) - 2.0 * np.pi)
                           for m in ms])
        slope = np.polyfit(np.log(ms), np.log(errors), 1)[0]
        assert -slope >= 1.0

    def test_monotone_subdivision(self):
        # refining the same smooth curve moves energy less than the fitted
        # discretization-error bound
        ms = np.array([50, 100, 200, 400])
        errors = np.array([abs(curve_energy(circle_polyline(m)) - 2.0 * np.pi)
                           for m in ms])
        slope, intercept = np.polyfit(np.log(ms), np.log(errors), 1)
        bound = np.exp(intercept) * 100.0 ** slope
        change = abs(curve_energy(circle_polyline(100)) - curve_energy(circle_polyline(200)))
        assert change <= 1.5 * bound

    def test_rigid_motion_invariance(self):
        rng = np.random.default_rng(8)
        points = rng.standard_normal((40, 3)).cumsum(axis=0)
        line = Polyline(points=points)
        rotation, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        moved = Polyline(points=points @ rotation.T + rng.standard_normal(3))
        k0 = polyline_curvature(line).kappas
        k1 = polyline_curvature(moved).kappas
        scale = np.abs(k0).max()
        assert np.abs(k0 - k1).max() <= 1e-10 * scale
        e0, e1 = curve_energy(line), curve_energy(moved)
        assert abs(e0 - e1) <= 1e-10 * abs(e0)

    def test_scaling_covariance(self):
        rng = np.random.default_rng(9)
        points = rng.standard_normal((30, 2)).cumsum(axis=0)
        base_kappa = polyline_curvature(Polyline(points=points)).kappas
        base_energy = curve_energy(Polyline(points=points))
        for c in (0.5, 2.0, 10.0):
            scaled = Polyline(points=c * points)
            assert np.allclose(polyline_curvature(scaled).kappas,
                               base_kappa / c, rtol=1e-10)
            assert curve_energy(scaled) == pytest.approx(base_energy / c, rel=1e-10)


class TestWeightedCurveEnergy:
    def test_constant_times_equals_unweighted(self):
        line = circle_polyline(64)
        times = np.full(64, 3.5)
        assert weighted_curve_energy(line, times, 1.0) == curve_energy(line)

    def test_straight_line_zero_for_any_times(self):
        line = Polyline(points=np.outer(np.linspace(0, 2, 30), [1.0, 0.0]))
        rng = np.random.default_rng(10)
        assert weighted_curve_energy(line, rng.uniform(0, 5, 30), 0.8) == 0.0

    def test_length_mismatch(self):
        line = circle_polyline(10)
        with pytest.raises(SizeError):
            weighted_curve_energy(line, np.zeros(9), 1.0)

    def test_nonpositive_sigma(self):
        line = circle_polyline(10)
        with pytest.raises(ParameterError):
            weighted_curve_energy(line, np.zeros(10), 0.0)

    def test_taylor_expansion_residual_shrinks(self):
        # E_w should match E - (eps^2 / 2 sigma^2) * integral((t')^2 kappa^2)
        # up to o(eps^2): halving the spacing must cut the residual >= 3.5x
        sigma, rate = 0.7, 1.3

        def residual(m):
            line, times = open_circle_with_linear_times(m, rate)
            energy = curve_energy(line)
            weighted = weighted_curve_energy(line, times, sigma)
            profile = polyline_curvature(line)
            arcs = np.asarray(line.arclengths)
            spacing = arcs[1] - arcs[0]
            # correction integral by numeric quadrature on the same grid
            tprime = np.diff(times) / np.diff(arcs)
            kap_sq = profile.kappas ** 2
            integrand = (tprime[:-1] ** 2) * kap_sq
            correction = np.trapezoid(integrand, arcs[1:-1])
            predicted = energy - spacing ** 2 / (2.0 * sigma ** 2) * correction
            return abs(weighted - predicted), spacing

        coarse, _ = residual(500)
        fine, _ = residual(1000)
        assert coarse / fine >= 3.5
