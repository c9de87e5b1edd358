import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from phaseminmax.energy import total_energy
from phaseminmax.geometry import ScalarField, TorusDomain, gradient_field, hausdorff_distance
from phaseminmax.minmax import PathInH1
from phaseminmax.sweepout import (
    CapPreconditionError,
    EmptyLevelSetError,
    SweepoutSpec,
    build_sweepout_path,
    cap_paths,
    extract_zero_set,
    far_field_tail,
    level_set_or_empty,
    parallel_area,
    profile_function,
    slice_at,
)

SIGMA = np.sqrt(2) / 3
UNIT2 = TorusDomain((1.0, 1.0), (128, 128))


@pytest.fixture(scope="module")
def unit_spec():
    return SweepoutSpec(UNIT2, 0, 0.5)


@pytest.fixture(scope="module")
def unit_path(unit_spec):
    return build_sweepout_path(unit_spec, 0.05, 0.25, 33)


class TestSlices:
    def test_mid_slice_two_lines(self, unit_spec):
        sl, _ = slice_at(unit_spec, 0.5)
        assert sl.measure == 2.0
        assert sl.dim == 2 and sl.geometry.shape[1:] == (2, 2)
        npt.assert_allclose(np.sum(np.linalg.norm(sl.geometry[:, 1] - sl.geometry[:, 0], axis=-1)), 2.0)

    @pytest.mark.parametrize("t", [0.0, 1.0])
    def test_degenerate_ends(self, unit_spec, t):
        sl, dist = slice_at(unit_spec, t)
        assert sl.measure == 1.0
        if t == 0.0:
            assert dist.values.min() >= 0
        else:
            assert dist.values.max() <= 0

    def test_width(self, unit_spec):
        assert unit_spec.width == 2.0
        assert SweepoutSpec(TorusDomain((1.0, 4.0), (8, 8)), 1).width == 2.0
        assert SweepoutSpec(TorusDomain((1.0, 4.0), (8, 8)), 0).width == 8.0

    @pytest.mark.parametrize("t", [0.1, 0.3, 0.5, 0.77])
    def test_eikonal(self, unit_spec, t):
        _, dist = slice_at(unit_spec, t)
        g = np.abs(gradient_field(dist)[0].values)
        h = UNIT2.spacing[0]
        x = UNIT2.axis_coordinates(0)
        kinks = unit_spec.offsets(t) + [unit_spec.center, (unit_spec.center + 0.5) % 1.0]
        smooth = np.all([np.minimum(np.abs(x - k), 1 - np.abs(x - k)) > 1.5 * h for k in kinks], axis=0)
        npt.assert_allclose(g[smooth], 1.0, atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_hausdorff_continuity(self, t, s):
        spec = SweepoutSpec(TorusDomain((1.0, 1.0), (16, 16)), 0, 0.5)
        a, b = slice_at(spec, t)[0], slice_at(spec, s)[0]
        assert hausdorff_distance(a.point_set(), b.point_set()) <= 0.5 * abs(t - s) + 1e-12

    def test_bad_family(self):
        with pytest.raises(ValueError):
            SweepoutSpec(UNIT2, 0, 0.5, family="sphere")


class TestProfileFunction:
    def test_values_and_far_field(self, unit_spec, well):
        eps, delta = 0.05, 0.25
        v = profile_function(unit_spec, 0.5, eps, delta).values
        assert v.min() > -1 and v.max() < 1
        _, dist = slice_at(unit_spec, 0.5)
        far = dist.values > delta
        npt.assert_array_equal(v[far], float(well.profile(delta / eps)))
        assert 1 - float(well.profile(delta / eps)) < 2 * np.exp(-np.sqrt(2) * delta / eps)

    def test_gamma_on_slice(self, unit_spec):
        v = profile_function(unit_spec, 0.5, 0.05, 0.25)
        x = UNIT2.axis_coordinates(0)
        on = np.isclose(x, 0.25) | np.isclose(x, 0.75)
        npt.assert_allclose(v.values[on], 0.0, atol=1e-15)

    def test_mid_energy_against_quadrature(self, unit_spec, well):
        eps, delta = 0.05, 0.25
        v = profile_function(unit_spec, 0.5, eps, delta)
        dens = lambda s: 0.5 * float(well.profile.derivative(s)) ** 2 + float(well.W(well.profile(s)))
        one_layer = quad(dens, -delta / eps, delta / eps, epsabs=1e-13, limit=200)[0]
        oracle = 2 * one_layer * 1.0
        assert oracle == pytest.approx(4 * SIGMA, rel=1e-4)
        assert total_energy(v, eps) == pytest.approx(oracle, rel=0.05)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.0, 1.0))
    def test_strictly_inside_wells(self, t):
        spec = SweepoutSpec(TorusDomain((1.0, 1.0), (16, 16)), 1, 0.5)
        v = profile_function(spec, t, 0.05, 0.25).values
        assert v.min() > -1 and v.max() < 1

    @pytest.mark.parametrize("delta", [0.0, 0.3])
    def test_delta_range(self, unit_spec, delta):
        with pytest.raises(ValueError):
            profile_function(unit_spec, 0.5, 0.05, delta)


class TestCaps:
    def test_endpoints_and_junction(self, unit_spec):
        caps = cap_paths(unit_spec, 0.05, 0.25, 5)
        npt.assert_array_equal(caps.prefix[0].values, 1.0)
        npt.assert_array_equal(caps.suffix[-1].values, -1.0)
        npt.assert_array_equal(caps.prefix[-1].values, profile_function(unit_spec, 0.0, 0.05, 0.25).values)
        npt.assert_array_equal(caps.suffix[0].values, profile_function(unit_spec, 1.0, 0.05, 0.25).values)

    @pytest.mark.parametrize("which", ["prefix", "suffix"])
    def test_energy_bounded_by_junction(self, unit_spec, which):
        nodes = getattr(cap_paths(unit_spec, 0.05, 0.25, 7), which)
        energies = [total_energy(n, 0.05) for n in nodes]
        junction = energies[-1] if which == "prefix" else energies[0]
        assert max(energies) <= junction + 1e-12

    def test_pointwise_monotone(self, unit_spec):
        caps = cap_paths(unit_spec, 0.05, 0.25, 7)
        for nodes in caps:
            diffs = np.diff(np.stack([n.values for n in nodes]), axis=0)
            assert np.all(diffs <= 0)

    def test_precondition(self):
        class Mixed(SweepoutSpec):
            def signed_distance(self, t):
                return np.sin(2 * np.pi * self.domain.mesh()[0])

        with pytest.raises(CapPreconditionError, match="cap precondition violated"):
            cap_paths(Mixed(UNIT2, 0, 0.5), 0.05, 0.25, 5)


class TestSweepoutPath:
    def test_endpoints(self, unit_path):
        assert isinstance(unit_path, PathInH1)
        npt.assert_array_equal(unit_path.nodes[0].values, -1.0)
        npt.assert_array_equal(unit_path.nodes[-1].values, 1.0)
        assert len(unit_path) == 33

    def test_upper_bound(self, unit_path):
        meta = unit_path.meta
        emax = max(meta["node_energy"])
        assert emax / (2 * SIGMA) <= 2 * 1.05
        assert emax <= meta["upper_bound"]
        assert meta["eta"] <= 2 * UNIT2.spacing[0]
        npt.assert_allclose(meta["node_energy"], unit_path.energies(), rtol=0, atol=0)

    def test_tail_closed_form(self, well):
        # W(tanh(s/sqrt2)) = sech^4(s/sqrt2) / 4 on both sides
        eps, delta = 0.05, 0.25
        s = delta / eps
        exact = 2 * (1 / np.cosh(s / np.sqrt(2))) ** 4 / 4 / eps
        assert far_field_tail(UNIT2, eps, delta, well) == pytest.approx(exact, rel=1e-6)

    def test_slice_measures_follow_family(self, unit_path):
        m = unit_path.meta["slice_measure"]
        assert max(m) == 2.0 and m[0] == m[-1] == 0.0

    def test_three_dimensional(self):
        dom = TorusDomain((1.0, 1.0, 1.0), (24, 24, 24))
        path = build_sweepout_path(SweepoutSpec(dom, 2, 0.5), 0.1, 0.25, 17)
        assert max(path.meta["node_energy"]) <= path.meta["upper_bound"]


class TestExtraction:
    def test_cosine_two_lines(self):
        n = 64
        d = TorusDomain((1.0, 1.0), (n, n))
        sl = extract_zero_set(d.field(lambda x, y: np.cos(2 * np.pi * x)))
        assert sl.measure == pytest.approx(2.0, abs=2 / n)

    def test_two_kink_points(self):
        d = TorusDomain((20.0,), (512,))
        x = d.axis_coordinates(0)
        u = ScalarField(d, -np.tanh((x - 5.1) / 0.3) * np.tanh((x - 15.1) / 0.3))
        sl = extract_zero_set(u)
        assert sl.measure == 2 and len(sl.vertices()) == 2
        npt.assert_allclose(np.sort(sl.vertices()[:, 0]), [5.1, 15.1], atol=1e-3)

    @pytest.mark.parametrize("shift", [(3, 0), (5, 7), (0, 11)])
    def test_translation_invariance(self, shift):
        d = TorusDomain((1.0, 1.0), (48, 48))
        x, y = d.mesh()
        u = np.cos(2 * np.pi * x) + 0.6 * np.sin(2 * np.pi * y) + 0.1
        a = extract_zero_set(ScalarField(d, u)).measure
        b = extract_zero_set(ScalarField(d, np.roll(u, shift, (0, 1)))).measure
        assert b == pytest.approx(a, rel=1e-13)

    def test_circle_length(self):
        n = 128
        d = TorusDomain((1.0, 1.0), (n, n))
        x, y = d.mesh()
        sl = extract_zero_set(ScalarField(d, np.hypot(x - 0.5, y - 0.5) - 0.3))
        assert sl.measure == pytest.approx(2 * np.pi * 0.3, rel=1e-3)

    def test_sphere_area(self):
        n = 48
        d = TorusDomain((1.0, 1.0, 1.0), (n, n, n))
        x, y, z = d.mesh()
        sl = extract_zero_set(ScalarField(d, np.sqrt((x - 0.5) ** 2 + (y - 0.5) ** 2 + (z - 0.5) ** 2) - 0.3))
        assert sl.measure == pytest.approx(4 * np.pi * 0.09, rel=1e-2)

    def test_plane_through_periodic_seam_3d(self):
        n = 16
        d = TorusDomain((1.0, 1.0, 1.0), (n, n, n))
        sl = extract_zero_set(d.field(lambda x, y, z: np.cos(2 * np.pi * z)))
        assert sl.measure == pytest.approx(2.0, rel=1e-12)

    def test_saddle_cells_are_deterministic(self):
        d = TorusDomain((1.0, 1.0), (8, 8))
        i, j = np.indices(d.shape)
        u = np.where((i + j) % 2 == 0, 1.0, -1.0) + 0.1
        a = extract_zero_set(ScalarField(d, u))
        b = extract_zero_set(ScalarField(d, u))
        npt.assert_array_equal(a.geometry, b.geometry)
        assert a.measure > 0

    def test_empty(self):
        d = TorusDomain((1.0, 1.0), (8, 8))
        with pytest.raises(EmptyLevelSetError, match="empty level set"):
            extract_zero_set(d.constant(1.0))
        assert level_set_or_empty(d.constant(1.0), 0.0).empty


class TestParallelArea:
    @pytest.mark.parametrize("delta", [0.0, 0.05, -0.1, 0.2])
    def test_flat(self, unit_spec, delta):
        sl, dist = slice_at(unit_spec, 0.5)
        (row,) = parallel_area(sl.measure, [delta], dist)
        assert abs(row.ratio - 1.0) <= 2 * UNIT2.spacing[0]
        if delta == 0.0:
            assert row.ratio == 1.0

    def test_circle(self):
        n = 256
        d = TorusDomain((1.0, 1.0), (n, n))
        x, y = d.mesh()
        dist = ScalarField(d, np.hypot(x - 0.5, y - 0.5) - 0.2)
        (row,) = parallel_area(2 * np.pi * 0.2, [0.05], dist)
        assert row.ratio == pytest.approx(1.25, abs=2e-3)
