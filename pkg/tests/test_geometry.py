import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from obdoa.geometry import (GridSpec, build_dictionary,
                            effective_dictionary, make_geometry,
                            steering_derivative, steering_vector, ula)


class TestMakeGeometry:
    def test_sla10_preset(self):
        geom = make_geometry("sla10")
        assert geom.positions == (0, 3, 4, 5, 6, 7, 11, 16, 18, 19)

    def test_sla18_preset(self):
        geom = make_geometry("sla18")
        assert geom.n_elements == 18
        assert geom.positions[:6] == (0, 1, 2, 3, 4, 7)

    def test_ula_preset(self):
        assert make_geometry("ula:4").positions == (0, 1, 2, 3)
        assert make_geometry("ula(4)").positions == (0, 1, 2, 3)

    def test_explicit_list(self):
        geom = make_geometry([0, 2, 5])
        assert geom.n_elements == 3

    def test_explicit_string(self):
        assert make_geometry("0,2,5").positions == (0.0, 2.0, 5.0)

    def test_rejects_non_increasing(self):
        with pytest.raises(ValueError, match="increasing"):
            make_geometry([0, 2, 2])

    def test_rejects_nonzero_first(self):
        with pytest.raises(ValueError, match="must be 0"):
            make_geometry([1, 2, 3])

    def test_rejects_single_element(self):
        with pytest.raises(ValueError, match="at least 2"):
            make_geometry([0])


class TestSteeringVector:
    def test_broadside_is_all_ones(self, sla18):
        assert np.array_equal(steering_vector(sla18, 0.0),
                              np.ones(18, dtype=complex))

    def test_ula2_at_30deg(self):
        a = steering_vector(ula(2), 30.0)
        assert a[0] == 1.0 + 0.0j
        assert a[1] == pytest.approx(1j, abs=1e-12)

    def test_sla10_at_30deg(self, sla10):
        a = steering_vector(sla10, 30.0)
        # position 3 -> exp(j*3*pi/2) = -j
        assert a[1] == pytest.approx(-1j, abs=1e-12)

    def test_unit_modulus(self, sla18):
        a = steering_vector(sla18, 37.3)
        np.testing.assert_allclose(np.abs(a), 1.0, rtol=1e-14)

    def test_angle_bounds(self, sla18):
        with pytest.raises(ValueError):
            steering_vector(sla18, 90.5)

    @given(theta=st.floats(min_value=-90.0, max_value=90.0))
    def test_conjugate_symmetry(self, theta):
        geom = make_geometry("sla10")
        a_pos = steering_vector(geom, theta)
        a_neg = steering_vector(geom, -theta)
        np.testing.assert_allclose(a_neg, np.conj(a_pos), atol=1e-12)


class TestSteeringDerivative:
    def test_endfire_is_zero(self, sla18):
        np.testing.assert_allclose(steering_derivative(sla18, 90.0), 0.0,
                                   atol=1e-12)

    def test_ula2_at_broadside(self):
        b = steering_derivative(ula(2), 0.0)
        assert b[0] == 0.0
        assert b[1] == pytest.approx(1j * math.pi, abs=1e-12)

    def test_first_element_always_zero(self, sla10):
        assert steering_derivative(sla10, 41.0)[0] == 0.0

    def test_modulus(self, sla10):
        theta = 25.0
        b = steering_derivative(sla10, theta)
        expect = math.pi * sla10.position_array() * abs(math.cos(math.radians(theta)))
        np.testing.assert_allclose(np.abs(b), expect, rtol=1e-12)

    @pytest.mark.parametrize("theta", [-55.0, -10.0, 0.0, 20.56, 61.7])
    def test_matches_central_difference(self, sla18, theta):
        h = 1e-6  # radians
        hd = math.degrees(h)
        fd = (steering_vector(sla18, theta + hd)
              - steering_vector(sla18, theta - hd)) / (2 * h)
        b = steering_derivative(sla18, theta)
        assert np.linalg.norm(fd - b) / np.linalg.norm(b) < 1e-6

    @pytest.mark.parametrize("delta_deg", [0.5, 0.25, 0.1])
    def test_first_order_error_quarters_when_halved(self, sla18, delta_deg):
        theta = 14.0
        def err(d):
            approx = (steering_vector(sla18, theta)
                      + steering_derivative(sla18, theta) * math.radians(d))
            return np.linalg.norm(steering_vector(sla18, theta + d) - approx)
        ratio = err(delta_deg) / err(delta_deg / 2)
        assert 3.5 <= ratio <= 4.5


class TestGridSpec:
    def test_default_61_points(self):
        grid = GridSpec(-60, 60, 2)
        assert grid.size == 61
        pts = grid.points()
        assert pts[0] == -60 and pts[-1] == 60

    def test_evaluation_grid_91_points(self):
        assert GridSpec(-90, 90, 2).size == 91

    def test_non_multiple_span(self):
        grid = GridSpec(-60, 60, 7)
        assert grid.size == 18
        assert grid.points()[-1] <= 60

    def test_nearest_index_ties_go_low(self):
        grid = GridSpec(-60, 60, 2)
        assert grid.nearest_index(21.0) == grid.nearest_index(20.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            GridSpec(10, -10, 2)
        with pytest.raises(ValueError):
            GridSpec(-10, 10, 0)


class TestDictionary:
    def test_shape_18x61(self, pair18):
        assert pair18.A.shape == (18, 61)
        assert pair18.B.shape == (18, 61)

    def test_tiny_grid(self):
        pair = build_dictionary(ula(2), GridSpec(-90, 90, 90))
        assert pair.A.shape == (2, 3)
        np.testing.assert_array_equal(pair.A[:, 1], [1, 1])

    def test_columns_match_steering_vector(self, sla10, grid61):
        pair = build_dictionary(sla10, grid61)
        for m in (0, 17, 42, 60):
            np.testing.assert_array_equal(
                pair.A[:, m], steering_vector(sla10, grid61.points()[m]))
            np.testing.assert_array_equal(
                pair.B[:, m], steering_derivative(sla10, grid61.points()[m]))

    def test_first_row_of_A_is_ones_and_B_zero(self, pair18):
        np.testing.assert_array_equal(pair18.A[0], np.ones(61))
        np.testing.assert_array_equal(pair18.B[0], np.zeros(61))

    def test_unit_modulus_entries(self, pair18):
        np.testing.assert_allclose(np.abs(pair18.A), 1.0, rtol=1e-14)

    def test_cached_per_geometry_grid(self, sla18, grid61):
        assert build_dictionary(sla18, grid61) is build_dictionary(sla18, grid61)

    def test_arrays_read_only(self, pair18):
        with pytest.raises(ValueError):
            pair18.A[0, 0] = 0


class TestEffectiveDictionary:
    def test_zero_beta_returns_A_exactly(self, pair18):
        c = effective_dictionary(pair18, np.zeros(61))
        assert c is pair18.A

    def test_single_column_expansion(self):
        pair = build_dictionary(ula(3), GridSpec(0, 4, 8))
        assert pair.n_grid == 1
        c = effective_dictionary(pair, np.array([4.0]))
        expected = pair.A[:, 0] + pair.B[:, 0] * math.radians(4.0)
        np.testing.assert_allclose(c[:, 0], expected, rtol=1e-15)

    def test_random_beta_columnwise(self, pair18, rng):
        beta = rng.uniform(-1, 1, size=61)
        c = effective_dictionary(pair18, beta)
        for m in (3, 30, 59):
            expected = pair18.A[:, m] + pair18.B[:, m] * math.radians(beta[m])
            np.testing.assert_allclose(c[:, m], expected, rtol=0, atol=1e-15)

    def test_rejects_oversized_gap(self, pair18):
        beta = np.zeros(61)
        beta[5] = 1.2
        with pytest.raises(ValueError, match="half a grid interval"):
            effective_dictionary(pair18, beta)

    def test_rejects_wrong_length(self, pair18):
        with pytest.raises(ValueError):
            effective_dictionary(pair18, np.zeros(60))
