import numpy as np
import pytest

from unidec.decomp import build_family
from unidec.grid import BallSupport, CubeSupport, SpaceTimeField, fourier_forward, make_grid, random_band_limited
from unidec.norms import modulation_norm
from unidec.solver import (
    THEOREM_REGULARITY,
    NonlinearitySpec,
    SolverConfig,
    eval_nonlinearity,
    normalized_datum,
    picard_solve,
    residual,
    scattering_operator,
    scattering_state,
)

QUARTIC = NonlinearitySpec.dnls1(2, (3, 3), (1, 1))

# the free flow sits outside the small-data regime on purpose
pytestmark = pytest.mark.filterwarnings("ignore:X1 regime:RuntimeWarning")


@pytest.fixture(scope="module")
def family():
    return build_family(make_grid(n=2, N=32, r=2, T=1.0, Nt=32), 2)


def datum(family, delta, seed=0):
    return normalized_datum(family.grid, family, delta, THEOREM_REGULARITY["X1"], seed, ball=1.5)


def plane_wave(grid, a):
    x1, x2 = np.meshgrid(grid.x_axis(), grid.x_axis(), indexing="ij")
    return SpaceTimeField(grid, np.exp(1j * (a[0] * x1 + a[1] * x2)))


class TestNonlinearity:
    def test_exponent_length(self):
        """Exponents need 2n + 2 entries."""
        with pytest.raises(ValueError, match="2n\\+2"):
            NonlinearitySpec(2, {(1, 1): 1.0})

    def test_degree(self):
        """Monomials below the declared order are rejected."""
        with pytest.raises(ValueError, match="degree below"):
            NonlinearitySpec(2, {(1, 1, 0, 0, 0, 0): 1.0}, m=2)

    def test_finite(self):
        """Coefficients must be finite."""
        with pytest.raises(ValueError, match="finite"):
            NonlinearitySpec.power(2, 2, 1, np.nan)

    def test_dnls1_expansion(self):
        """d_i(u^4) expands to 4 u^3 d_i u."""
        assert QUARTIC.monomials == {(3, 0, 1, 0, 0, 0): 4.0, (3, 0, 0, 1, 0, 0): 4.0}
        assert QUARTIC.m == 3 and QUARTIC.degrees == [4]

    def test_dnls1_lengths(self):
        """kappa and lam need one entry per axis."""
        with pytest.raises(ValueError, match="need n entries"):
            NonlinearitySpec.dnls1(2, (3,), (1, 1))

    def test_zero_dropped(self):
        """Zero coefficients are removed."""
        assert NonlinearitySpec.power(2, 2, 1, 0.0).is_zero

    def test_cubic_plane_wave(self, family):
        """|u|^2 u of a unimodular plane wave is the wave itself."""
        u = plane_wave(family.grid, (1.0, -0.5))
        out = eval_nonlinearity(u, NonlinearitySpec.power(2, 2, 1)).to_physical()
        assert np.max(np.abs(out.values - u.values)) < 1e-12

    def test_derivative_plane_wave(self, family):
        """u d_1 u of e^{i a.x} is i a_1 e^{2i a.x}."""
        a = (0.75, 0.25)
        u = plane_wave(family.grid, a)
        spec = NonlinearitySpec(2, {(1, 0, 1, 0, 0, 0): 1.0})
        out = eval_nonlinearity(u, spec).to_physical()
        expected = 1j * a[0] * plane_wave(family.grid, (1.5, 0.5)).values
        assert np.max(np.abs(out.values - expected)) < 1e-12

    def test_no_aliasing(self, family):
        """u^2 of a mode near the band edge leaves the window and is dropped."""
        u = plane_wave(family.grid, (3.0, 0.0))
        out = eval_nonlinearity(u, NonlinearitySpec.power(2, 2, 0))
        assert np.max(np.abs(out.values)) < 1e-12

    def test_centred_window(self):
        """Shifted windows are rejected."""
        g = make_grid(n=2, N=32, r=2, T=1.0, Nt=16, center=(8, 0))
        with pytest.raises(ValueError, match="centred at zero"):
            eval_nonlinearity(random_band_limited(g, CubeSupport((8, 0)), 0), QUARTIC)


class TestConfig:
    @pytest.mark.parametrize(
        "kw, msg",
        [
            ({"delta": 0.0}, "delta must be positive"),
            ({"tol": -1.0}, "tol must be positive"),
            ({"padding": 0}, "padding"),
            ({"max_iter": 0}, "max_iter"),
            ({"norm": "Z"}, "unknown working norm"),
        ],
    )
    def test_validation(self, kw, msg):
        """Bad settings are rejected."""
        with pytest.raises(ValueError, match=msg):
            SolverConfig(QUARTIC, **kw)

    def test_regime_notes(self):
        """A cubic nonlinearity in two dimensions is outside the X1 regime."""
        assert SolverConfig(NonlinearitySpec.power(2, 2, 1)).check_theorem_regime(2)
        assert not SolverConfig(QUARTIC).check_theorem_regime(2)

    @pytest.mark.filterwarnings("error")
    def test_regime_warning(self, family):
        """Solving outside the regime emits a RuntimeWarning."""
        with pytest.warns(RuntimeWarning, match="X1 regime"):
            picard_solve(datum(family, 0.01), SolverConfig(NonlinearitySpec.zero(2)), family)

    def test_regularity(self):
        """Each working norm carries its regularity index."""
        assert SolverConfig(QUARTIC).regularity == 0.5
        assert SolverConfig(QUARTIC, norm="Y").regularity == 2.5


class TestPicard:
    def test_normalized_datum(self, family):
        """The datum has the requested modulation norm."""
        u0 = datum(family, 0.01)
        assert modulation_norm(u0, 0.5, family) == pytest.approx(0.01, rel=1e-12)

    def test_zero_nonlinearity(self, family):
        """Without a nonlinearity the free wave is a fixed point after one step."""
        u0 = datum(family, 0.01)
        sol = picard_solve(u0, SolverConfig(NonlinearitySpec.zero(2)), family)
        assert sol.diagnostics.converged and sol.diagnostics.iterations == 1
        assert np.max(np.abs(sol.duhamel_hat)) == 0.0

    def test_rejects_spacetime_datum(self, family):
        """Data must be spatial."""
        u0 = datum(family, 0.01)
        with pytest.raises(ValueError, match="spatial field"):
            picard_solve(sol_field(family, u0), SolverConfig(QUARTIC), family)

    def test_converges_and_contracts(self, family):
        """Small data converge with ratios well below one."""
        sol = picard_solve(datum(family, 0.05), SolverConfig(QUARTIC), family)
        d = sol.diagnostics
        assert d.converged and d.contracting
        assert all(r < 0.5 for r in d.ratios)

    def test_residual_sensitivity(self, family):
        """A perturbation of the solution raises the residual by orders of magnitude."""
        u0 = datum(family, 0.05)
        cfg = SolverConfig(QUARTIC)
        sol = picard_solve(u0, cfg, family)
        base = residual(sol.field, u0, cfg, family)
        bump = SpaceTimeField(family.grid, sol.hat * (1 + 1e-6), "spacetime", (0, 1))
        assert residual(bump, u0, cfg, family) > 10 * base

    def test_start_independent(self, family):
        """Starting from zero reaches the same fixed point."""
        u0 = datum(family, 0.05)
        cfg = SolverConfig(QUARTIC, max_iter=12)
        a = picard_solve(u0, cfg, family).hat
        b = picard_solve(u0, cfg, family, start="zero").hat
        assert np.max(np.abs(a - b)) < 1e-10 * np.max(np.abs(a))

    def test_quartic_homogeneity(self, family):
        """The Duhamel part scales like delta^4 for small data."""
        cfg = SolverConfig(QUARTIC)
        a = picard_solve(datum(family, 0.01), cfg, family)
        b = picard_solve(datum(family, 0.02), cfg, family)
        ratio = np.linalg.norm(b.duhamel_hat) / np.linalg.norm(a.duhamel_hat)
        assert ratio == pytest.approx(16.0, rel=1e-3)


def sol_field(family, u0):
    t = family.grid.times.reshape(-1, 1, 1)
    hat = np.exp(1j * t * family.grid.dispersion()) * fourier_forward(u0).values[None]
    return SpaceTimeField(family.grid, hat, "spacetime", (0, 1))


class TestScattering:
    def test_free_states(self, family):
        """For zero nonlinearity both asymptotic states equal the datum."""
        u0 = datum(family, 0.01)
        sol = picard_solve(u0, SolverConfig(NonlinearitySpec.zero(2)), family)
        for direction in "+-":
            state, info = scattering_state(sol, direction, family)
            assert np.max(np.abs(state.values - fourier_forward(u0).values)) < 1e-15
            assert all(c == pytest.approx(0.0, abs=1e-16) for c in info["cauchy"])

    def test_direction(self, family):
        """Only '+' and '-' are accepted."""
        sol = picard_solve(datum(family, 0.01), SolverConfig(NonlinearitySpec.zero(2)), family)
        with pytest.raises(ValueError, match="direction"):
            scattering_state(sol, "x")

    def test_needs_convergence(self, family):
        """Unconverged solutions have no scattering state."""
        sol = picard_solve(datum(family, 0.05), SolverConfig(QUARTIC, max_iter=1), family)
        assert not sol.diagnostics.converged
        with pytest.raises(ValueError, match="converged solution"):
            scattering_state(sol, "+")

    def test_operator_free(self, family):
        """The scattering operator of the free flow is the identity."""
        u = datum(family, 0.01)
        plus, sol = scattering_operator(u, SolverConfig(NonlinearitySpec.zero(2)), family)
        assert sol.diagnostics.converged
        assert np.max(np.abs(plus.values - fourier_forward(u).values)) < 1e-15

    def test_operator_composition(self, family):
        """S(-T) u(T) from the Cauchy solve matches the operator applied to u_-."""
        cfg = SolverConfig(QUARTIC, max_iter=12)
        sol = picard_solve(datum(family, 0.05), cfg, family)
        minus, _ = scattering_state(sol, "-")
        plus, _ = scattering_state(sol, "+")
        mapped, _ = scattering_operator(minus, cfg, family)
        err = np.max(np.abs(mapped.values - plus.values))
        assert err < 1e-8 * np.max(np.abs(plus.values))
