import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from conftest import random_mixture
from ksliouville.errors import DomainError, SupportOverflowError
from ksliouville.field import (
    DensityField, Grid2D, centroid, dilate, entropy, entropy_bound_check,
    rearrange_radial, second_moment, translate,
)

PI = np.pi
GRID = Grid2D(8.0, 128)


def disk_field(grid, value, radius=1.0, center=(0.0, 0.0)):
    vals = np.where(grid.dist2(center) <= radius ** 2, value, 0.0)
    return DensityField(grid, vals)


def gaussian(grid, beta, center=(0.0, 0.0)):
    return DensityField.gaussians(grid, [beta], [center])


class TestGrid:
    def test_symmetric_centers(self):
        g = Grid2D(3.0, 6)
        assert np.allclose(g.x, -g.x[::-1])
        assert g.h == pytest.approx(1.0)
        assert np.allclose(g.x, [-2.5, -1.5, -0.5, 0.5, 1.5, 2.5])

    @pytest.mark.parametrize("L,N", [(0.0, 16), (-1.0, 16), (1.0, 15), (1.0, 0)])
    def test_invalid(self, L, N):
        with pytest.raises(DomainError):
            Grid2D(L, N)

    def test_mesh_indexing(self):
        g = Grid2D(1.0, 4)
        X, Y = g.mesh
        assert X[0, 3] == X[0, 0] and Y[3, 0] == Y[0, 0]


class TestDensityField:
    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            DensityField(GRID, -np.ones((128, 128)))

    def test_tiny_values_flushed(self):
        vals = np.full((128, 128), 1e-301)
        vals[0, 0] = 1.0
        f = DensityField(GRID, vals)
        assert np.count_nonzero(f.values) == 1

    def test_immutable(self):
        f = gaussian(GRID, 1.0)
        with pytest.raises(ValueError):
            f.values[0, 0, 0] = 1.0

    def test_normalized_mass(self, rng):
        f = random_mixture(GRID, [1.0, 7.5], rng)
        assert np.allclose(f.masses(), [1.0, 7.5], rtol=1e-12)


class TestEntropy:
    def test_gaussian_closed_form(self):
        f = gaussian(Grid2D(8.0, 256), 2 * PI)
        assert entropy(f, 0) == pytest.approx(-2 * PI, abs=1e-3)

    @pytest.mark.parametrize("value,expected", [(1.0, 0.0), (2.0, 2 * PI * np.log(2))])
    def test_disk(self, value, expected):
        f = disk_field(Grid2D(2.0, 512), value)
        # pixelated disk area differs from pi at O(h)
        assert entropy(f, 0) == pytest.approx(expected, abs=2e-2)

    def test_zero_log_zero(self):
        vals = np.zeros((128, 128))
        vals[10, 10] = 1.0
        f = DensityField(GRID, vals)
        assert entropy(f, 0) == 0.0


class TestSecondMoment:
    def test_gaussian(self):
        beta = 3.0
        f = gaussian(GRID, beta)
        assert second_moment(f, 0) == pytest.approx(2 * beta, rel=1e-3)

    def test_bump_about_itself(self):
        vals = np.zeros((128, 128))
        vals[40, 90] = 1.0
        f = DensityField(GRID, vals)
        p = (GRID.x[40], GRID.x[90])
        assert second_moment(f, 0, p) <= GRID.cell_area * f.masses()[0]
        assert np.allclose(centroid(f, 0), p)

    def test_uniform_disk(self):
        f = disk_field(Grid2D(2.0, 512), 1.0)
        beta = f.masses()[0]
        assert second_moment(f, 0) == pytest.approx(beta / 2, rel=1e-2)


class TestEntropyBound:
    def test_gaussian_values(self):
        f = gaussian(Grid2D(10.0, 256), 2 * PI)
        lhs, rhs, ok = entropy_bound_check(f)
        assert ok
        assert lhs == pytest.approx(2 * PI, rel=1e-4)
        expect = -2 * PI + 4 * PI * np.log(2 * PI) + 8 * PI + 2 / np.e
        assert rhs == pytest.approx(expect, rel=1e-4)

    def test_unit_disk(self):
        lhs, rhs, ok = entropy_bound_check(disk_field(GRID, 1.0))
        assert lhs == 0.0 and ok

    @given(st.integers(0, 2 ** 32 - 1), st.integers(1, 3))
    def test_random_fields(self, seed, n):
        rng = np.random.default_rng(seed)
        f = random_mixture(GRID, rng.uniform(0.1, 30, size=n), rng, spread=3)
        assert entropy_bound_check(f)[2]


class TestDilate:
    def test_identity(self):
        f = gaussian(GRID, 2.0)
        assert dilate(f, 1.0) is f

    def test_gaussian_scaling(self):
        beta = 2.0
        f = gaussian(Grid2D(8.0, 256), beta)
        g = dilate(f, 2.0)
        assert second_moment(g, 0) == pytest.approx(beta / 2, rel=1e-2)
        assert entropy(g, 0) - entropy(f, 0) == pytest.approx(2 * beta * np.log(2), rel=1e-2)
        assert g.masses()[0] == pytest.approx(beta, rel=1e-12)

    def test_shrinking_keeps_law(self):
        f = DensityField.gaussians(Grid2D(12.0, 256), [1.0], variance=0.5)
        g = dilate(f, 0.5)
        assert second_moment(g, 0) == pytest.approx(4 * second_moment(f, 0), rel=1e-2)

    def test_overflow(self):
        f = gaussian(GRID, 1.0)
        with pytest.raises(SupportOverflowError):
            dilate(f, 0.2)

    def test_nonpositive_factor(self):
        with pytest.raises(DomainError):
            dilate(gaussian(GRID, 1.0), 0.0)

    @given(st.integers(0, 2 ** 32 - 1), st.sampled_from([0.8, 1.3, 2.0]))
    def test_mass_preserved(self, seed, R):
        rng = np.random.default_rng(seed)
        f = random_mixture(Grid2D(12.0, 128), rng.uniform(0.1, 10, size=2), rng, spread=1.0)
        try:
            g = dilate(f, R)
        except SupportOverflowError:
            assume(False)
        assert np.allclose(g.masses(), f.masses(), rtol=1e-10)
        assert np.all(g.values >= 0)


class TestTranslate:
    def test_zero(self):
        f = gaussian(GRID, 1.0)
        assert np.array_equal(translate(f, (0, 0)).values, f.values)

    def test_grid_aligned_exact(self):
        f = gaussian(GRID, 3.0)
        x0 = (5 * GRID.h, -3 * GRID.h)
        g = translate(f, x0)
        # only the renormalization after ~1e-14 of tail mass leaves the box
        assert entropy(g, 0) == pytest.approx(entropy(f, 0), rel=1e-10)
        assert second_moment(g, 0, x0) == pytest.approx(2 * 3.0, rel=1e-2)
        assert second_moment(g, 0, x0) == pytest.approx(second_moment(f, 0), rel=1e-10)

    def test_off_grid(self):
        f = gaussian(Grid2D(8.0, 256), 3.0)
        g = translate(f, (0.37, -1.11))
        assert entropy(g, 0) == pytest.approx(entropy(f, 0), rel=1e-2)
        assert second_moment(g, 0, (0.37, -1.11)) == pytest.approx(6.0, rel=1e-2)
        assert g.masses()[0] == pytest.approx(3.0, rel=1e-12)

    def test_overflow(self):
        with pytest.raises(SupportOverflowError):
            translate(gaussian(GRID, 1.0), (6.0, 0.0))


class TestRearrange:
    def test_gaussian_fixed_point(self):
        f = gaussian(GRID, 2.0)
        g = rearrange_radial(f)
        assert np.max(np.abs(g.values - f.values)) <= 1e-12 * f.values.max()

    def test_off_center_bump(self):
        f = gaussian(GRID, 2.0, center=(2.0, -1.0))
        g = rearrange_radial(f)
        assert second_moment(g, 0) < second_moment(f, 0)
        assert np.allclose(centroid(g, 0), 0, atol=1e-8)

    def test_annulus_to_disk(self):
        g0 = Grid2D(4.0, 256)
        r2 = g0.r2
        vals = ((r2 >= 1.0) & (r2 <= 4.0)).astype(float)
        f = DensityField(g0, vals)
        g = rearrange_radial(f)
        cells = int(vals.sum())
        assert np.count_nonzero(g.values) == cells
        radius = np.sqrt(cells * g0.cell_area / PI)  # equal area, close to sqrt(3)
        occupied = np.sqrt(r2[g.values[0] > 0])
        assert occupied.max() == pytest.approx(radius, abs=g0.h)
        assert entropy(g, 0) == 0.0

    def test_single_species_selection(self, rng):
        f = random_mixture(GRID, [1.0, 2.0], rng, centers=[(1, 1), (-1, 0)])
        g = rearrange_radial(f, 1)
        assert np.array_equal(g.values[0], f.values[0])
        assert not np.array_equal(g.values[1], f.values[1])

    @given(st.integers(0, 2 ** 32 - 1))
    def test_properties(self, seed):
        rng = np.random.default_rng(seed)
        f = random_mixture(GRID, rng.uniform(0.5, 10, size=1), rng, spread=3)
        g = rearrange_radial(f)
        assert g.masses()[0] == pytest.approx(f.masses()[0], rel=1e-12)
        e0 = entropy(f, 0)
        assert abs(entropy(g, 0) - e0) <= 1e-6 * (1 + abs(e0))
        m0 = second_moment(f, 0)
        assert second_moment(g, 0) <= m0 + 1e-6 * (1 + m0)
        # nonincreasing along |x|
        order = np.argsort(GRID.r2.ravel(), kind="stable")
        assert np.all(np.diff(g.values[0].ravel()[order]) <= 0)
        # idempotent
        assert np.array_equal(rearrange_radial(g).values, g.values)
