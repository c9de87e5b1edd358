import numpy as np
import numpy.testing as npt
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from phaseminmax.energy import hessian_apply
from phaseminmax.geometry import ScalarField, TorusDomain, inner
from phaseminmax.minmax import SolverParams, c_epsilon
from phaseminmax.spectrum import (
    EmptyMaskError,
    SpectrumReport,
    lowest_eigenpairs,
    smooth_cutoff,
    stability_on_subdomain,
)
from phaseminmax.sweepout import SweepoutSpec, build_sweepout_path


def dense_operator(u: ScalarField, eps: float, well) -> np.ndarray:
    """Materialised second-variation matrix, assembled independently from Kronecker sums."""
    d = u.domain
    lap = None
    for axis, (n, h) in enumerate(zip(d.shape, d.spacing)):
        one = sp.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1], format="lil")
        one[0, n - 1] += 1
        one[n - 1, 0] += 1
        factors = [sp.identity(m) for m in d.shape]
        factors[axis] = one.tocsr() / h**2
        term = factors[0]
        for f in factors[1:]:
            term = sp.kron(term, f)
        lap = term if lap is None else lap + term
    return (-eps * lap + sp.diags(well.ddW(u.values.ravel()) / eps)).toarray()


@pytest.fixture(scope="module")
def circle_saddle():
    dom = TorusDomain((20.0,), (256,))
    path = build_sweepout_path(SweepoutSpec(dom, 0, 10.0), 1.0, 5.0, 33)
    _, cp, _ = c_epsilon([path], 1.0, SolverParams())
    return cp


class TestClosedForms:
    def test_well_constant(self):
        d = TorusDomain((1.0,), (256,))
        rep = lowest_eigenpairs(d.constant(1.0), 0.1, k=4)
        assert rep.eigenvalues[0] == pytest.approx(20.0, rel=1e-10)
        assert rep.morse_index == 0

    def test_saddle_constant(self):
        n, eps = 256, 0.1
        h = 1 / n
        d = TorusDomain((1.0,), (n,))
        rep = lowest_eigenpairs(d.constant(0.0), eps, k=5)
        lam = lambda m: eps * (2 / h**2) * (1 - np.cos(2 * np.pi * m * h)) - 1 / eps
        expected = [lam(0), lam(1), lam(1), lam(2), lam(2)]
        npt.assert_allclose(rep.eigenvalues, expected, rtol=1e-9, atol=1e-9)
        assert rep.eigenvalues[1] == pytest.approx(-6.05, abs=5e-3)
        assert rep.eigenvalues[3] == pytest.approx(5.79, abs=5e-3)
        assert rep.morse_index == 3


class TestAgainstDenseSolver:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_random_field_2d(self, seed, well):
        rng = np.random.default_rng(seed)
        d = TorusDomain((1.0, 1.5), (12, 16))
        u = ScalarField(d, rng.uniform(-1, 1, d.shape))
        rep = lowest_eigenpairs(u, 0.2, k=5, seed=seed)
        exact = np.linalg.eigvalsh(dense_operator(u, 0.2, well))[:5]
        npt.assert_allclose(rep.eigenvalues, exact, rtol=1e-8, atol=1e-8 * abs(exact).max())

    def test_operator_symmetry(self, rng):
        d = TorusDomain((1.0, 1.0), (16, 16))
        u, phi, chi = (ScalarField(d, rng.uniform(-1, 1, d.shape)) for _ in range(3))
        assert inner(phi, hessian_apply(u, 0.1, chi)) == pytest.approx(inner(chi, hessian_apply(u, 0.1, phi)), rel=1e-12)


class TestReport:
    def test_rayleigh_consistency_and_residuals(self, circle_saddle):
        rep = lowest_eigenpairs(circle_saddle.u, 1.0, k=4)
        assert np.all(np.diff(rep.eigenvalues) >= 0)
        for j, lam in enumerate(rep.eigenvalues):
            v = ScalarField(circle_saddle.u.domain, rep.eigenvectors[:, j].reshape(circle_saddle.u.domain.shape))
            rq = inner(v, hessian_apply(circle_saddle.u, 1.0, v)) / inner(v, v)
            assert rq == pytest.approx(lam, rel=1e-8, abs=1e-12)
        assert np.all(rep.residuals <= 1e-6 * (4 / (20 / 256) ** 2 + 2))

    def test_saddle_index_one(self, circle_saddle):
        rep = lowest_eigenpairs(circle_saddle.u, 1.0, k=4)
        assert rep.morse_index == 1
        assert rep.eigenvalues[0] < 0 <= rep.eigenvalues[1] + rep.threshold

    def test_deterministic(self, circle_saddle):
        a = lowest_eigenpairs(circle_saddle.u, 1.0, k=4, seed=5)
        b = lowest_eigenpairs(circle_saddle.u, 1.0, k=4, seed=5)
        npt.assert_array_equal(a.eigenvalues, b.eigenvalues)

    def test_dead_zone_and_threshold(self):
        d = TorusDomain((1.0,), (64,))
        rep = lowest_eigenpairs(d.constant(0.0), 0.1, k=3, threshold=20.0)
        assert rep.morse_index == 0 and rep.dead_zone == [0, 1, 2]

    def test_csv(self):
        d = TorusDomain((1.0,), (64,))
        rep = lowest_eigenpairs(d.constant(1.0), 0.1, k=3)
        assert rep.csv_header() == "lambda_0,lambda_1,lambda_2,index"
        assert rep.csv_row().split(",")[-1] == "0"
        assert isinstance(rep, SpectrumReport)

    @pytest.mark.parametrize("k", [1, 64])
    def test_bad_k(self, k):
        d = TorusDomain((1.0,), (64,))
        with pytest.raises(ValueError):
            lowest_eigenpairs(d.constant(1.0), 0.1, k=k)


class TestSubdomainStability:
    def test_well_positive(self):
        d = TorusDomain((1.0, 1.0), (16, 16))
        mask = np.zeros(d.shape, bool)
        mask[3:9, 2:12] = True
        assert stability_on_subdomain(d.constant(1.0), 0.1, mask) > 0

    def test_matches_principal_submatrix(self, well, rng):
        d = TorusDomain((1.0, 1.0), (12, 12))
        u = ScalarField(d, rng.uniform(-1, 1, d.shape))
        mask = np.zeros(d.shape, bool)
        mask[2:8, 3:10] = True
        A = dense_operator(u, 0.2, well)
        idx = np.flatnonzero(mask.ravel())
        exact = np.linalg.eigvalsh(A[np.ix_(idx, idx)])[0]
        assert stability_on_subdomain(u, 0.2, mask) == pytest.approx(exact, rel=1e-7)

    def test_disjoint_arcs_bound_index(self, circle_saddle):
        d = circle_saddle.u.domain
        x = d.axis_coordinates(0)
        h = d.spacing[0]
        # the arcs are separated by a grid cell so the two localised forms do not couple
        left, right = (x > h) & (x < 10.0 - h), (x > 10.0 + h) & (x < 20.0 - h)
        q = [stability_on_subdomain(circle_saddle.u, 1.0, m) for m in (left, right)]
        threshold = 1e-8 / 1.0
        assert sum(v < -threshold for v in q) <= 1

    def test_arc_with_both_kinks_is_unstable(self, circle_saddle):
        d = circle_saddle.u.domain
        x, h = d.axis_coordinates(0), d.spacing[0]
        assert stability_on_subdomain(circle_saddle.u, 1.0, (x > h) & (x < 20.0 - h)) < -1e-8

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 60), st.integers(4, 60))
    def test_shrinking_mask_never_lowers(self, start, width):
        d = TorusDomain((20.0,), (128,))
        x = d.axis_coordinates(0)
        u = ScalarField(d, -np.tanh((x - 5) / np.sqrt(2)) * np.tanh((x - 15) / np.sqrt(2)))
        big = np.zeros(128, bool)
        big[start:start + width] = True
        small = big.copy()
        small[start:start + width // 2] = False
        assert stability_on_subdomain(u, 1.0, small) >= stability_on_subdomain(u, 1.0, big) - 1e-9

    def test_empty_mask(self):
        d = TorusDomain((1.0,), (16,))
        with pytest.raises(EmptyMaskError, match="empty mask"):
            stability_on_subdomain(d.constant(1.0), 0.1, np.zeros(16, bool))

    def test_cutoff_profile(self):
        mask = np.zeros(64, bool)
        mask[10:40] = True
        chi = smooth_cutoff(mask, (1 / 64,))
        assert np.all(chi[~mask] == 0) and np.all(chi[mask] > 0)
        assert chi[25] == 1.0 and np.all(chi <= 1)
