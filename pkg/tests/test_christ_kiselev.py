from fractions import Fraction

import numpy as np
import pytest

from unidec.christ_kiselev import (
    CellField,
    DiscreteKernelOperator,
    DyadicInterval,
    WhitneyPair,
    b1_ratio,
    b2_slack,
    cell_norm,
    check_whitney,
    defect_decay,
    interval_exponent,
    lemma_a2_ratio,
    lemma_a2_sweep,
    level_counts,
    level_function,
    random_cell_field,
    restriction_via_whitney,
    smooth_kernel,
    strip_area,
    uncovered_area,
    well_restriction_condition,
    whitney_decompose,
)
from unidec.grid import BallSupport, random_band_limited
from unidec.propagator import evolve_trajectory


def uniform_field(cells=16, points=8, T=1.0):
    edges = np.linspace(-T, T, cells + 1)
    return CellField(np.full((cells, points, points), 2.0 + 0j), edges, 0.5)


class TestDyadic:
    def test_interval(self):
        """Endpoints and membership of a dyadic interval."""
        I = DyadicInterval(3, 5)
        assert (I.left, I.right, I.length) == (0.625, 0.75, 0.125)
        assert I.contains(0.625) and not I.contains(0.75)

    def test_bad_level(self):
        """Level zero is not allowed."""
        with pytest.raises(ValueError, match="level must be >= 1"):
            DyadicInterval(0, 0)

    def test_bad_offset(self):
        """Offsets must fit the level."""
        with pytest.raises(ValueError, match="outside"):
            DyadicInterval(2, 4)

    def test_pair_lengths(self):
        """Paired intervals have equal length."""
        with pytest.raises(ValueError, match="equal length"):
            WhitneyPair(DyadicInterval(2, 0), DyadicInterval(3, 5))


class TestWhitney:
    def test_depth_one_empty(self):
        """Depth one contributes no square away from the diagonal."""
        assert whitney_decompose(1) == []

    def test_depth_two(self):
        """Depth two gives the three quarter-squares of the first split."""
        pairs = whitney_decompose(2)
        assert sorted((p.I.offset, p.J.offset) for p in pairs) == [(0, 2), (0, 3), (1, 3)]

    def test_counts(self):
        """Level j holds 3(2^(j-1) - 1) squares."""
        counts = level_counts(whitney_decompose(8))
        assert counts == {j: 3 * (2 ** (j - 1) - 1) for j in range(2, 9)}

    @pytest.mark.parametrize("depth", [0, 21, 2.0])
    def test_bad_depth(self, depth):
        """Depths outside 1..20 are rejected."""
        with pytest.raises(ValueError, match="J_max must be an integer"):
            whitney_decompose(depth)

    @pytest.mark.parametrize("depth", [2, 3, 5, 7])
    def test_uncovered_closed_form(self, depth):
        """Uncovered area equals (3 2^J - 2) / (2 4^J) and matches rasterization."""
        expected = Fraction(3 * 2**depth - 2, 2 * 4**depth)
        assert uncovered_area(depth) == expected
        assert strip_area(whitney_decompose(depth), depth) == expected
        assert expected <= Fraction(2, 2**depth)

    def test_check(self):
        """All structural properties hold at depth 8."""
        chk = check_whitney(8)
        assert chk.ok
        assert chk.tiling_defect == 0
        assert chk.as_dict()["depth"] == 8

    def test_gaps(self):
        """Partners are separated by one or two intervals."""
        assert {p.gap for p in whitney_decompose(6)} == {1, 2}


class TestCellField:
    def test_needs_time_axis(self):
        """One-dimensional arrays are rejected."""
        with pytest.raises(ValueError, match="time axis"):
            CellField(np.ones(4), np.arange(5.0), 1.0)

    def test_edges_length(self):
        """Edges must bracket every cell."""
        with pytest.raises(ValueError, match="one more entry"):
            CellField(np.ones((4, 3)), np.arange(4.0), 1.0)

    def test_edges_increasing(self):
        """Edges must increase."""
        with pytest.raises(ValueError, match="strictly increasing"):
            CellField(np.ones((2, 3)), np.array([0.0, 1.0, 1.0]), 1.0)

    def test_from_field(self, small_grid):
        """Panel averages use the grid time nodes as edges."""
        u = evolve_trajectory(random_band_limited(small_grid, BallSupport(2), 0))
        f = CellField.from_field(u)
        assert f.values.shape[0] == small_grid.Nt
        assert np.array_equal(f.t_edges, small_grid.times)

    def test_cell_norm(self):
        """The norm of a constant field is explicit."""
        f = uniform_field()
        # |f| = 2 on [-1, 1] x (4 x 4 box): (2^2 * 2 * 16)^(1/2)
        assert cell_norm(f, (2, 2, 2)) == pytest.approx(np.sqrt(4 * 2 * 16))
        assert cell_norm(f, (2, 2, 2), (0.0, 1.0)) == pytest.approx(np.sqrt(4 * 16))

    def test_exponent_checks(self):
        """Exponents must match the dimension and be finite."""
        f = uniform_field()
        with pytest.raises(ValueError, match="need 3 exponents"):
            cell_norm(f, (2, 2))
        with pytest.raises(ValueError, match="finite and >= 1"):
            cell_norm(f, (2, np.inf, 2))


class TestLevelFunction:
    def test_endpoints(self):
        """F rises from 0 to 1."""
        F = level_function(random_cell_field(1), (4, 2, 2))
        assert F(-5.0) == 0.0
        assert F(5.0) == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.diff(F.on_edges()) >= 0)

    @pytest.mark.parametrize("q", [(2, 2, 2), (4, 2, 2), (3, 2, 4)])
    def test_closed_form(self, q):
        """For a time-constant field F(t) = ((t + T) / 2T)^(q1/q3)."""
        F = level_function(uniform_field(), q)
        for t in (-0.77, -0.1, 0.3, 0.95):
            assert F(t) == pytest.approx(((t + 1) / 2) ** (q[0] / q[2]), rel=1e-10)

    def test_inverse(self):
        """inverse undoes F."""
        F = level_function(random_cell_field(2, floor=0.3), (2, 2, 2))
        for y in (0.1, 0.5, 0.9):
            assert F(F.inverse(y)) == pytest.approx(y, abs=1e-12)

    def test_zero_field(self):
        """A zero field has no level function."""
        f = uniform_field().replace(np.zeros((16, 8, 8)))
        with pytest.raises(ValueError, match="zero field"):
            level_function(f, (2, 2, 2))

    def test_flat_stretch(self):
        """Cells where the field vanishes leave F flat and preimages take the left end."""
        vals = np.zeros((8, 4, 4))
        vals[:3] = 1.0
        vals[6:] = 1.0
        F = level_function(CellField(vals, np.linspace(0, 8, 9), 1.0), (2, 2, 2), jitter=0.0)
        y = F(3.0)
        assert F(5.5) == y
        assert F.inverse(y) == pytest.approx(3.0)


class TestIntervalBound:
    def test_exponent(self):
        """The exponent is the smallest of four ratios."""
        assert interval_exponent((4, 2, 2)) == pytest.approx(0.25)
        assert interval_exponent((2, 2, 2)) == pytest.approx(0.5)

    def test_whole_interval(self):
        """I = [0, 1] gives the normalized norm, 1."""
        F = level_function(random_cell_field(3), (4, 2, 2))
        assert lemma_a2_ratio(F, (0.0, 1.0)) == pytest.approx(1.0, rel=1e-10)

    def test_equal_exponents(self):
        """With q1 = q2 = q3 = 2 the bound holds with constant 1."""
        r = lemma_a2_sweep(samples=10, q=(2, 2, 2), cells=16, points=16)
        assert r.max() <= 1 + 1e-10

    def test_bad_interval(self):
        """Intervals must lie in [0, 1]."""
        F = level_function(random_cell_field(3), (4, 2, 2))
        with pytest.raises(ValueError, match="0 <= a < b <= 1"):
            lemma_a2_ratio(F, (0.5, 0.4))

    def test_three_exponents(self):
        """The bound is for fields over two space axes."""
        f = CellField(np.ones((4, 3)), np.arange(5.0), 1.0)
        with pytest.raises(ValueError, match="two space axes"):
            lemma_a2_ratio(level_function(f, (2, 2)), (0.0, 0.5))


class TestReconstruction:
    def test_zero_kernel(self):
        """K = 0 gives zero on both sides."""
        f = random_cell_field(4, cells=16, points=8)
        op = DiscreteKernelOperator.from_kernel(lambda t, s: 0 * (t - s), f.t_edges)
        rec = restriction_via_whitney(op, f, (2, 2, 2), 6)
        assert rec.defect == 0.0
        assert np.max(np.abs(rec.direct)) == 0.0

    def test_full_equals_sum_of_windows(self):
        """T f is additive over a partition of the time line."""
        f = random_cell_field(5, cells=16, points=8)
        op = DiscreteKernelOperator.from_kernel(smooth_kernel, f.t_edges)
        parts = op.windowed(f, -1.0, 0.13) + op.windowed(f, 0.13, 1.0)
        assert np.allclose(parts, op.full(f), atol=1e-13)

    def test_cell_mismatch(self):
        """Operators act on fields with the same cells."""
        op = DiscreteKernelOperator.from_kernel(smooth_kernel, np.linspace(-1, 1, 9))
        with pytest.raises(ValueError, match="different time cells"):
            op.full(random_cell_field(0, cells=16, points=4))

    def test_defect_decays(self):
        """The reconstruction defect shrinks with depth."""
        d = [v for _, v in defect_decay(depths=(6, 8, 10), cells=32, points=8)]
        assert d[0] > d[1] > d[2]
        assert d[0] / d[2] > 8


class TestConditions:
    def test_cases(self):
        """Spot checks of the four exponent conditions."""
        q = (2, 2, 2)
        assert well_restriction_condition(1, (3, 3, 3), q)
        assert not well_restriction_condition(1, (2, 3, 3), q)
        assert well_restriction_condition(2, (3, 1, 1), q)
        assert well_restriction_condition(3, (3, 3, 3), q)
        assert not well_restriction_condition(4, (3, 3, 2), q)

    def test_anisotropic_bound(self):
        """The bound includes q1 q3 / q2."""
        assert not well_restriction_condition(1, (5, 5, 5), (2, 1, 3))
        assert well_restriction_condition(1, (7, 7, 7), (2, 1, 3))

    def test_bad_case(self):
        """Only cases 1 to 4 exist."""
        with pytest.raises(ValueError, match="case must be 1..4"):
            well_restriction_condition(5, (3, 3, 3), (2, 2, 2))


class TestElementary:
    def test_b1_bounded(self, rng):
        """The first ratio stays below a/b."""
        r = rng.uniform(0.01, 10, 1000)
        s = r * rng.uniform(0, 0.999, 1000)
        for a, b in ((1, 1), (2, 1), (3, 0.5), (1.5, 1.2)):
            assert np.max(b1_ratio(r, s, a, b)) <= a / b + 1e-12

    def test_b1_needs_mvt_constant(self):
        """For a > 2b the ratio exceeds 1 near r = s."""
        assert b1_ratio(np.array([1.0]), np.array([0.999]), 3.0, 1.0)[0] > 1.0

    def test_b1_guard(self):
        """b1 needs a >= b > 0."""
        with pytest.raises(ValueError, match="a >= b > 0"):
            b1_ratio(np.ones(1), np.zeros(1), 1.0, 2.0)

    def test_b2_nonnegative(self, rng):
        """The second slack is non-negative."""
        r = rng.uniform(0.01, 10, 1000)
        s = r * rng.uniform(0, 1, 1000)
        for a, b in ((1, 1), (0.5, 1), (0.3, 2.5)):
            assert np.min(b2_slack(r, s, a, b)) >= -1e-12 * np.max(r**a)

    def test_b2_guard(self):
        """b2 needs 0 < a <= b."""
        with pytest.raises(ValueError, match="0 < a <= b"):
            b2_slack(np.ones(1), np.zeros(1), 2.0, 1.0)
