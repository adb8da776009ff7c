import math

import numpy as np
import pytest

from unidec.grid import (
    BallSupport,
    CubeSupport,
    Grid,
    SpaceTimeField,
    fourier_forward,
    fourier_inverse,
    lp_norm,
    make_grid,
    random_band_limited,
    read_snapshot,
    read_snapshot_header,
    smooth_plateau,
    write_snapshot,
    zeros,
)


class TestGridValidation:
    def test_defaults(self):
        """Default grid is the desk-scale elliptic n=2 grid."""
        g = make_grid()
        assert (g.n, g.N, g.r, g.Nt) == (2, 128, 3, 64)
        assert g.eps == (1, 1) and g.center == (0, 0)
        assert g.elliptic

    def test_derived_spacings(self):
        """dxi, L, dx and dt follow from r, N, T and Nt."""
        g = make_grid(n=1, N=64, r=3, T=2.0, Nt=8)
        assert g.dxi == 0.125
        assert math.isclose(g.L, 16 * math.pi)
        assert math.isclose(g.dx, g.L / 64)
        assert g.dt == 0.5
        assert g.half_band == 4.0

    def test_non_power_of_two(self):
        """N must be a power of two."""
        with pytest.raises(ValueError, match="power of two"):
            make_grid(N=100)

    def test_small_r(self):
        """r below 2 is rejected."""
        with pytest.raises(ValueError, match="r must be >= 2"):
            make_grid(r=1)

    def test_odd_panels(self):
        """Nt must be even so t=0 is a node."""
        with pytest.raises(ValueError, match="Nt must be an even integer"):
            make_grid(Nt=7)

    def test_bad_signature(self):
        """eps needs n entries of +-1."""
        with pytest.raises(ValueError, match="eps must hold n entries"):
            make_grid(n=2, eps=(1,))
        with pytest.raises(ValueError, match="eps must hold n entries"):
            make_grid(n=2, eps=(1, 2))

    def test_bad_center(self):
        """center needs one entry per axis."""
        with pytest.raises(ValueError, match="center must have n entries"):
            make_grid(n=2, center=(1, 2, 3))

    def test_time_nodes(self):
        """Time nodes are symmetric and contain 0, T/2 and T."""
        g = make_grid(T=4.0, Nt=16)
        assert g.times[g.zero_index] == 0.0
        assert g.times[0] == -4.0 and g.times[-1] == 4.0
        assert g.time_index(2.0) == g.zero_index + 4
        assert math.isclose(g.time_weights.sum(), 8.0)

    def test_time_index_off_grid(self):
        """Non-node times are rejected."""
        with pytest.raises(ValueError, match="not a node"):
            make_grid(T=1.0, Nt=4).time_index(0.3)

    def test_refined_doubles(self):
        """refined() doubles N, T and Nt and keeps dxi."""
        g = make_grid(N=32, T=1.0, Nt=8)
        h = g.refined()
        assert (h.N, h.T, h.Nt, h.dxi) == (64, 2.0, 16, g.dxi)
        assert math.isclose(h.dt, g.dt)

    def test_frequency_nodes_with_center(self):
        """A window centre shifts the frequency nodes by an integer."""
        g = make_grid(n=1, N=16, r=2, center=(5,))
        xi = np.sort(g.xi_axis(0))
        assert xi[0] == 5 - 2.0 and math.isclose(xi[-1], 5 + 2.0 - 0.25)


class TestTransforms:
    def test_round_trip(self, small_grid, rng):
        """Inverse undoes forward to round-off."""
        vals = rng.standard_normal(small_grid.spatial_shape()) + 1j * rng.standard_normal(small_grid.spatial_shape())
        f = SpaceTimeField(small_grid, vals)
        back = fourier_inverse(fourier_forward(f))
        assert np.max(np.abs(back.values - vals)) < 1e-13

    def test_plancherel(self, small_grid, rng):
        """L2 norms agree in both representations with Riemann weights."""
        vals = rng.standard_normal(small_grid.shape("spacetime"))
        f = SpaceTimeField(small_grid, vals, "spacetime")
        assert math.isclose(f.l2_norm(), fourier_forward(f).l2_norm(), rel_tol=1e-12)

    def test_gaussian_transform(self):
        """exp(-|x|^2/2) transforms to exp(-|xi|^2/2) under the unitary convention."""
        g = make_grid(n=1, N=256, r=3)
        x = g.x_axis() - g.L / 2
        f = SpaceTimeField(g, np.exp(-x**2 / 2))
        fh = fourier_forward(f).values
        xi = g.xi_axis(0)
        expected = np.exp(-xi**2 / 2) * np.exp(1j * xi * g.L / 2)
        assert np.max(np.abs(fh - expected)) < 1e-12

    def test_carrier_with_center(self):
        """With a window centre, a plane wave at the centre maps to the zero offset node."""
        g = make_grid(n=1, N=32, r=2, center=(6,))
        x = g.x_axis()
        f = SpaceTimeField(g, np.exp(1j * 6 * x))
        fh = fourier_forward(f).values
        assert np.argmax(np.abs(fh)) == 0
        assert np.sum(np.abs(fh) > 1e-10) == 1

    def test_partial_axis(self, small_grid, rng):
        """Transforming one axis gives a partial representation."""
        f = SpaceTimeField(small_grid, rng.standard_normal(small_grid.spatial_shape()))
        p = fourier_forward(f, [1])
        assert p.rep == "partial" and p.freq_axes == (1,)
        assert math.isclose(p.l2_norm(), f.l2_norm(), rel_tol=1e-12)

    def test_axis_out_of_range(self, small_grid):
        """Axes beyond n are rejected."""
        with pytest.raises(ValueError, match="out of range"):
            fourier_forward(zeros(small_grid), [2])


class TestFields:
    def test_read_only(self, small_grid):
        """Field values cannot be mutated in place."""
        f = zeros(small_grid)
        with pytest.raises(ValueError):
            f.values[0, 0] = 1.0

    def test_shape_check(self, small_grid):
        """Wrong array shapes are rejected."""
        with pytest.raises(ValueError, match="values shape"):
            SpaceTimeField(small_grid, np.zeros((3, 3)))

    def test_arithmetic(self, small_grid, rng):
        """Addition, subtraction and scaling act on values."""
        a = SpaceTimeField(small_grid, rng.standard_normal(small_grid.spatial_shape()))
        b = SpaceTimeField(small_grid, rng.standard_normal(small_grid.spatial_shape()))
        assert np.allclose((a + b - b).values, a.values)
        assert np.allclose((2 * a).values, 2 * a.values)
        assert np.allclose((-a).values, -a.values)

    def test_incompatible(self, small_grid):
        """Fields in different representations do not add."""
        a = zeros(small_grid)
        with pytest.raises(ValueError, match="different grids"):
            a + fourier_forward(a)

    def test_slice(self, small_grid):
        """slice_at returns the spatial slice."""
        f = zeros(small_grid, "spacetime")
        assert f.slice_at(3).kind == "spatial"
        with pytest.raises(ValueError, match="space-time"):
            zeros(small_grid).slice_at(0)


class TestPlateau:
    def test_plateau_values(self):
        """Plateau is 1 inside, 0 outside and monotone between."""
        s = np.linspace(0, 2, 401)
        v = smooth_plateau(s, 0.5, 1.0)
        assert np.all(v[s <= 0.5] == 1.0)
        assert np.all(v[s >= 1.0] == 0.0)
        assert np.all(np.diff(v) <= 0)

    def test_symmetry(self):
        """Plateau depends on |s| only."""
        t = np.linspace(0, 1, 51)
        v = smooth_plateau(np.concatenate([-t[::-1], t]), 0.3, 0.9)
        assert np.array_equal(v, v[::-1])


class TestEnsembles:
    def test_unit_norm(self, small_grid):
        """Draws have unit L2 norm."""
        for profile in ("white", "packet"):
            f = random_band_limited(small_grid, BallSupport(2), 3, profile)
            assert math.isclose(f.l2_norm(), 1.0, rel_tol=1e-12)

    def test_support(self, small_grid):
        """Spectrum vanishes off the support."""
        sup = CubeSupport((1, -1))
        f = random_band_limited(small_grid, sup, 5, "white")
        fh = fourier_forward(f).values
        assert np.max(np.abs(fh[~sup.mask(small_grid)])) < 1e-14

    def test_seeded(self, small_grid):
        """Same seed gives the same field."""
        a = random_band_limited(small_grid, BallSupport(2), 9)
        b = random_band_limited(small_grid, BallSupport(2), 9)
        assert np.array_equal(a.values, b.values)

    def test_refinement_invariant_white(self):
        """White draws depend on absolute frequency, not on N."""
        g1 = make_grid(n=1, N=32, r=2)
        g2 = make_grid(n=1, N=64, r=2)
        a = fourier_forward(random_band_limited(g1, BallSupport(2), 4)).values
        b = fourier_forward(random_band_limited(g2, BallSupport(2), 4)).values
        pick = lambda g, h: h[np.argsort(g.xi_axis(0))][np.abs(np.sort(g.xi_axis(0))) <= 2]
        assert np.allclose(pick(g1, a), pick(g2, b), rtol=1e-12, atol=0)

    def test_support_too_large(self, small_grid):
        """Supports beyond the window are rejected."""
        with pytest.raises(ValueError, match="exceeds the frequency window"):
            random_band_limited(small_grid, BallSupport(10), 0)

    def test_unknown_profile(self, small_grid):
        """Unknown profiles are rejected."""
        with pytest.raises(ValueError, match="unknown profile"):
            random_band_limited(small_grid, BallSupport(2), 0, "pink")


class TestSnapshots:
    def test_round_trip(self, small_grid, tmp_path):
        """Snapshots round-trip to complex64 precision."""
        f = random_band_limited(small_grid, BallSupport(2), 1)
        path = write_snapshot(f, tmp_path / "f.udf")
        head = read_snapshot_header(path)
        assert head == {"n": 2, "N": 32, "Nt": 16, "r": 2, "kind": "spatial", "rep": "physical"}
        g = read_snapshot(path, T=small_grid.T)
        assert g.grid == small_grid
        assert np.max(np.abs(g.values - f.values)) < 1e-6 * np.max(np.abs(f.values))

    def test_bad_magic(self, tmp_path):
        """Foreign files are rejected."""
        p = tmp_path / "bad.udf"
        p.write_bytes(b"XXXX" + bytes(30))
        with pytest.raises(ValueError, match="bad snapshot magic"):
            read_snapshot_header(p)

    def test_truncated(self, small_grid, tmp_path):
        """Short payloads are rejected."""
        path = write_snapshot(zeros(small_grid), tmp_path / "z.udf")
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValueError, match="expected"):
            read_snapshot(path, T=1.0)


class TestLpNorm:
    def test_l2_matches(self, small_grid):
        """lp_norm(2) equals the L2 norm."""
        f = random_band_limited(small_grid, BallSupport(2), 2)
        assert math.isclose(lp_norm(f, 2), f.l2_norm(), rel_tol=1e-12)

    def test_sup(self, small_grid):
        """lp_norm(inf) is the sample maximum."""
        f = random_band_limited(small_grid, BallSupport(2), 2)
        assert lp_norm(f, math.inf) == np.max(np.abs(f.values))

    def test_bad_exponent(self, small_grid):
        """Exponents below 1 are rejected."""
        with pytest.raises(ValueError, match="exponent must be >= 1"):
            lp_norm(zeros(small_grid), 0.5)
