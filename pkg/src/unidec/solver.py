"""Picard iteration for small-data derivative Schrodinger equations.

Solves the integral equation ``u = S(t) u0 - i A F(u)`` on the time window
with polynomial nonlinearities in ``(u, conj u, grad u, grad conj u)``.
Iterates are stored as ``u = L + w`` with ``L = S(t) u0`` so successive
differences are formed from the small Duhamel parts only.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Literal, Mapping, Sequence

import numpy as np
import scipy.fft as sfft

from .decomp import DecompFamily
from .grid import Grid, SpaceTimeField, fft_workers, fourier_forward
from .norms import WorkingNormSpec, modulation_norm, working_norm, working_norm_spec
from .propagator import duhamel


class NumericalFailure(RuntimeError):
    """Non-finite values appeared during an iteration."""


# ---------------------------------------------------------------- nonlinearity


@dataclass(frozen=True)
class NonlinearitySpec:
    """Finite polynomial ``sum_beta c_beta z^beta``.

    ``z = (u, conj u, d_1 u, ..., d_n u, d_1 conj u, ..., d_n conj u)``; each
    exponent tuple has length ``2n + 2``.  ``m`` is the declared minimal
    order: every monomial has degree at least ``m + 1``.
    """

    n: int
    monomials: Mapping[tuple[int, ...], complex]
    m: int = 1

    def __post_init__(self) -> None:
        clean = {}
        for beta, c in dict(self.monomials).items():
            beta = tuple(int(b) for b in beta)
            if len(beta) != 2 * self.n + 2 or any(b < 0 for b in beta):
                raise ValueError(f"exponent {beta} must have 2n+2 non-negative entries")
            if sum(beta) < self.m + 1:
                raise ValueError(f"monomial {beta} has degree below m+1={self.m + 1}")
            if not np.isfinite(complex(c)):
                raise ValueError("coefficients must be finite")
            if c != 0:
                clean[beta] = complex(c)
        object.__setattr__(self, "monomials", clean)

    @property
    def degrees(self) -> list[int]:
        return sorted({sum(b) for b in self.monomials})

    @property
    def is_zero(self) -> bool:
        return not self.monomials

    @staticmethod
    def zero(n: int) -> "NonlinearitySpec":
        return NonlinearitySpec(n, {}, 1)

    @staticmethod
    def dnls1(n: int, kappa: Sequence[int], lam: Sequence[complex]) -> "NonlinearitySpec":
        """``sum_i lam_i d_i(u^(kappa_i+1)) = sum_i lam_i (kappa_i+1) u^kappa_i d_i u``."""
        if len(kappa) != n or len(lam) != n:
            raise ValueError("kappa and lam need n entries")
        mono: dict = {}
        for i, (k, l) in enumerate(zip(kappa, lam)):
            beta = [0] * (2 * n + 2)
            beta[0] = int(k)
            beta[2 + i] = 1
            key = tuple(beta)
            mono[key] = mono.get(key, 0) + complex(l) * (k + 1)
        return NonlinearitySpec(n, mono, min(kappa))

    @staticmethod
    def power(n: int, a: int, b: int, coef: complex = 1.0) -> "NonlinearitySpec":
        """``coef * u^a conj(u)^b`` (no derivatives)."""
        beta = [0] * (2 * n + 2)
        beta[0], beta[1] = a, b
        return NonlinearitySpec(n, {tuple(beta): coef}, a + b - 1)

    def describe(self) -> list[dict]:
        return [{"beta": list(b), "coef": [c.real, c.imag]} for b, c in sorted(self.monomials.items())]


def pad_hat(hat: np.ndarray, small: Grid, big: Grid) -> np.ndarray:
    """Embed a spectrum (FFT order) into a larger grid with the same ``dxi``."""
    return _resize(hat, small.n, big.N)


def truncate_hat(hat: np.ndarray, big: Grid, small: Grid) -> np.ndarray:
    return _resize(hat, big.n, small.N)


def _resize(hat: np.ndarray, n: int, target: int) -> np.ndarray:
    """Copy the modes ``m`` in ``[-min/2, min/2)`` between grids of sizes ``src`` and ``target``."""
    off = hat.ndim - n
    src = hat.shape[off]
    if src == target:
        return hat.copy()
    half = min(src, target) // 2
    m = np.arange(-half, half)
    sel_src = np.ix_(*([np.arange(s) for s in hat.shape[:off]] + [m % src] * n))
    out = np.zeros(hat.shape[:off] + (target,) * n, dtype=np.complex128)
    sel_dst = np.ix_(*([np.arange(s) for s in hat.shape[:off]] + [m % target] * n))
    out[sel_dst] = hat[sel_src]
    return out


def _hat_to_phys(hat: np.ndarray, dxi: float, n: int) -> np.ndarray:
    M = hat.shape[-1]
    axes = tuple(range(hat.ndim - n, hat.ndim))
    return sfft.ifftn(hat, axes=axes, norm="ortho", workers=fft_workers()) * (M * dxi**2 / (2 * math.pi)) ** (n / 2)


def _phys_to_hat(vals: np.ndarray, dxi: float, n: int) -> np.ndarray:
    M = vals.shape[-1]
    axes = tuple(range(vals.ndim - n, vals.ndim))
    return sfft.fftn(vals, axes=axes, norm="ortho", workers=fft_workers()) / (M * dxi**2 / (2 * math.pi)) ** (n / 2)


def _pad_factor(degree: int, padding: int) -> int:
    return max(padding, math.ceil((degree + 1) / 2))


def eval_nonlinearity_hat(grid: Grid, uhat: np.ndarray, spec: NonlinearitySpec, padding: int = 2) -> np.ndarray:
    """Spectrum of ``F(u)`` on ``grid`` from the spectrum of ``u`` (spatial or space-time).

    Products are formed on a zero-padded grid (factor ``ceil((deg+1)/2)`` or
    ``padding``, whichever is larger, per monomial group) and truncated back,
    so band-limited inputs give alias-free outputs.
    """
    if any(c != 0 for c in grid.center):
        raise ValueError("nonlinearity evaluation needs a window centred at zero frequency")
    if spec.n != grid.n:
        raise ValueError("nonlinearity dimension does not match the grid")
    n = grid.n
    out = np.zeros(uhat.shape, dtype=np.complex128)
    if spec.is_zero:
        return out
    groups: dict[int, list] = {}
    for beta, c in spec.monomials.items():
        groups.setdefault(_pad_factor(sum(beta), padding), []).append((beta, c))
    spacetime = uhat.ndim == n + 1
    slices = range(uhat.shape[0]) if spacetime else [None]
    xi = grid.xi_mesh()
    for P, monos in groups.items():
        M = P * grid.N
        need_d = sorted({j for beta, _ in monos for j in range(n) if beta[2 + j] or beta[2 + n + j]})
        for s in slices:
            h = uhat[s] if s is not None else uhat
            u = _hat_to_phys(_resize(h, n, M), grid.dxi, n)
            ders = {j: _hat_to_phys(_resize(h * (1j * xi[j]), n, M), grid.dxi, n) for j in need_d}
            acc = np.zeros(u.shape, dtype=np.complex128)
            for beta, c in monos:
                term = np.full(u.shape, c, dtype=np.complex128)
                if beta[0]:
                    term = term * u ** beta[0]
                if beta[1]:
                    term = term * np.conj(u) ** beta[1]
                for j in range(n):
                    if beta[2 + j]:
                        term = term * ders[j] ** beta[2 + j]
                    if beta[2 + n + j]:
                        term = term * np.conj(ders[j]) ** beta[2 + n + j]
                acc += term
            res = _resize(_phys_to_hat(acc, grid.dxi, n), n, grid.N)
            if s is not None:
                out[s] += res
            else:
                out += res
    return out


def eval_nonlinearity(u: SpaceTimeField, spec: NonlinearitySpec, padding: int = 2) -> SpaceTimeField:
    """``F(u)`` as a field in the input's kind, returned in frequency representation."""
    uhat = fourier_forward(u).values
    return SpaceTimeField(u.grid, eval_nonlinearity_hat(u.grid, uhat, spec, padding), u.kind, tuple(range(u.grid.n)))


# ---------------------------------------------------------------- configuration


THEOREM_REGULARITY = {"X": 1.5, "Y": 2.5, "X1": 0.5, "Y1": 1.5}


@dataclass(frozen=True)
class SolverConfig:
    """Picard solver settings.

    ``norm`` names the working norm (X, Y, X1, Y1); ``tol`` is relative to
    the working norm of the current iterate unless ``tol_mode="absolute"``.
    """

    nonlinearity: NonlinearitySpec
    delta: float = 1e-3
    norm: Literal["X", "Y", "X1", "Y1"] = "X1"
    max_iter: int = 8
    tol: float = 1e-12
    tol_mode: Literal["relative", "absolute"] = "relative"
    padding: int = 2

    def __post_init__(self) -> None:
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.padding < 1:
            raise ValueError("padding must be >= 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.norm not in THEOREM_REGULARITY:
            raise ValueError(f"unknown working norm {self.norm!r}")

    @property
    def regularity(self) -> float:
        return THEOREM_REGULARITY[self.norm]

    def working_spec(self, n: int) -> WorkingNormSpec:
        m = self.nonlinearity.m
        if self.norm == "X":
            return working_norm_spec("X", n, max(m, 2.0 + 1e-9) if m <= 2 else m)
        if self.norm == "X1":
            return working_norm_spec("X1", n, m)
        return working_norm_spec(self.norm, n)

    def check_theorem_regime(self, n: int) -> list[str]:
        """Warnings for parameters outside the proven small-data regime."""
        m = self.nonlinearity.m
        notes = []
        if self.norm in ("X", "X1") and not (m > 2 and m > 4 / n and n >= 2):
            notes.append(f"{self.norm} regime needs n>=2, m>2, m>4/n (got n={n}, m={m})")
        if self.norm in ("Y", "Y1") and not (n >= 3 and m == 2):
            notes.append(f"{self.norm} regime needs n>=3 and m=2 (got n={n}, m={m})")
        return notes

    def as_dict(self) -> dict:
        return {
            "nonlinearity": self.nonlinearity.describe(),
            "m": self.nonlinearity.m,
            "delta": self.delta,
            "norm": self.norm,
            "max_iter": self.max_iter,
            "tol": self.tol,
            "tol_mode": self.tol_mode,
            "padding": self.padding,
        }


@dataclass
class SolutionDiagnostics:
    norms: list[float] = field(default_factory=list)
    differences: list[float] = field(default_factory=list)
    ratios: list[float] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    relative_residuals: list[float] = field(default_factory=list)
    residual: float = math.inf
    relative_residual: float = math.inf
    converged: bool = False
    contracting: bool = True
    iterations: int = 0
    message: str = ""
    warnings: list[str] = field(default_factory=list)
    scattering: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "norms": self.norms,
            "differences": self.differences,
            "ratios": self.ratios,
            "residuals": self.residuals,
            "relative_residuals": self.relative_residuals,
            "residual": self.residual,
            "relative_residual": self.relative_residual,
            "converged": self.converged,
            "contracting": self.contracting,
            "iterations": self.iterations,
            "message": self.message,
            "warnings": self.warnings,
            "scattering": self.scattering,
        }


# ---------------------------------------------------------------- Picard iteration


def _covered_mask(family: DecompFamily) -> np.ndarray:
    return np.asarray(family.covered())


def _project(hat: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return hat * mask


def _field(grid: Grid, hat: np.ndarray) -> SpaceTimeField:
    return SpaceTimeField(grid, hat, "spacetime", tuple(range(grid.n)))


def _tmap(grid: Grid, Lhat: np.ndarray, what: np.ndarray, config: SolverConfig, mask: np.ndarray, origin: int | None) -> np.ndarray:
    """Duhamel part of ``T(L + w)``: ``-i A F(L + w)`` (projected onto covered nodes)."""
    F = eval_nonlinearity_hat(grid, Lhat + what, config.nonlinearity, config.padding)
    F = _project(F, mask)
    if not np.all(np.isfinite(F)):
        raise NumericalFailure("non-finite nonlinearity")
    A = duhamel(_field(grid, F), origin_index=origin, rep="frequency").values
    return -1j * A


@dataclass
class Solution:
    grid: Grid
    linear_hat: np.ndarray
    duhamel_hat: np.ndarray
    u0: SpaceTimeField
    config: SolverConfig
    diagnostics: SolutionDiagnostics
    origin_index: int

    @property
    def hat(self) -> np.ndarray:
        return self.linear_hat + self.duhamel_hat

    @property
    def field(self) -> SpaceTimeField:
        return _field(self.grid, self.hat)


def _picard(grid: Grid, Lhat: np.ndarray, config: SolverConfig, family: DecompFamily, origin: int | None, start: Literal["linear", "zero"] = "linear") -> tuple[np.ndarray, SolutionDiagnostics]:
    diag = SolutionDiagnostics()
    diag.warnings = config.check_theorem_regime(grid.n)
    for w in diag.warnings:
        warnings.warn(w, RuntimeWarning, stacklevel=3)
    mask = _covered_mask(family)
    spec = config.working_spec(grid.n)
    what = np.zeros_like(Lhat) if start == "linear" else -Lhat
    streak = 0
    for m in range(config.max_iter):
        new = _tmap(grid, Lhat, what, config, mask, origin)
        if not np.all(np.isfinite(new)):
            raise NumericalFailure(f"non-finite iterate at index {m + 1}")
        unorm = working_norm(_field(grid, Lhat + what), spec, family).value
        diff = working_norm(_field(grid, new - what), spec, family).value if np.any(new != what) else 0.0
        if not (np.isfinite(unorm) and np.isfinite(diff)):
            raise NumericalFailure(f"non-finite norm at iterate {m}")
        diag.norms.append(unorm)
        diag.differences.append(diff)
        diag.residuals.append(diff)
        rel = diff / unorm if unorm > 0 else (0.0 if diff == 0 else math.inf)
        diag.relative_residuals.append(rel)
        if len(diag.differences) >= 2:
            prev = diag.differences[-2]
            ratio = diff / prev if prev > 0 else 0.0
            diag.ratios.append(ratio)
            streak = streak + 1 if ratio >= 1 else 0
        diag.iterations = m + 1
        done = (rel if config.tol_mode == "relative" else diff) <= config.tol
        if done:
            diag.residual, diag.relative_residual = diff, rel
            diag.converged = True
            diag.message = f"converged after {m + 1} applications of the integral map"
            return what, diag
        if streak >= 3:
            diag.contracting = False
            diag.residual, diag.relative_residual = diff, rel
            diag.message = "non-contracting: difference ratio >= 1 for 3 consecutive iterates"
            return what, diag
        what = new
    diag.residual, diag.relative_residual = diag.residuals[-1], diag.relative_residuals[-1]
    diag.message = f"max_iter={config.max_iter} reached"
    return what, diag


def picard_solve(u0: SpaceTimeField, config: SolverConfig, family: DecompFamily, start: Literal["linear", "zero"] = "linear") -> Solution:
    """Iterate ``u -> S(t) u0 - i A F(u)`` from ``S(t) u0`` (or from zero).

    The returned iterate is the last one whose residual ``||u - T u||`` was
    measured; ``diagnostics.residual`` is that value.
    """
    grid = family.grid
    if u0.grid != grid or u0.kind != "spatial":
        raise ValueError("u0 must be a spatial field on the family grid")
    u0hat = fourier_forward(u0).values
    t = grid.times.reshape((-1,) + (1,) * grid.n)
    Lhat = np.exp(1j * t * grid.dispersion()) * u0hat[None]
    what, diag = _picard(grid, Lhat, config, family, None, start)
    return Solution(grid, Lhat, what, u0, config, diag, grid.zero_index)


def residual(u: SpaceTimeField, u0: SpaceTimeField, config: SolverConfig, family: DecompFamily) -> float:
    """``||u - T u||`` in the configured working norm."""
    grid = family.grid
    uhat = fourier_forward(u).values
    u0hat = fourier_forward(u0).values
    t = grid.times.reshape((-1,) + (1,) * grid.n)
    Lhat = np.exp(1j * t * grid.dispersion()) * u0hat[None]
    mask = _covered_mask(family)
    Tw = _tmap(grid, Lhat, uhat - Lhat, config, mask, None)
    return working_norm(_field(grid, uhat - (Lhat + Tw)), config.working_spec(grid.n), family).value


# ---------------------------------------------------------------- scattering


def _state_at(sol: Solution, t: float) -> np.ndarray:
    """``S(-t) u(t)`` as a spectrum."""
    g = sol.grid
    m = g.time_index(t)
    return np.exp(-1j * t * g.dispersion()) * sol.hat[m]


def scattering_state(sol: Solution, direction: Literal["+", "-"], family: DecompFamily | None = None, s: float | None = None) -> tuple[SpaceTimeField, dict]:
    """``u_+ = S(-T) u(T)`` or ``u_- = S(T) u(-T)`` plus window-doubling Cauchy differences.

    Differences are ``||S(-t1)u(t1) - S(-t2)u(t2)||`` in ``M^s_{2,1}`` for
    ``(t1, t2) = (T, T/2)`` and ``(T/2, T/4)`` (signed by ``direction``).
    """
    if direction not in ("+", "-"):
        raise ValueError("direction must be '+' or '-'")
    if not sol.diagnostics.converged:
        raise ValueError("scattering states need a converged solution")
    g = sol.grid
    sign = 1.0 if direction == "+" else -1.0
    s = sol.config.regularity if s is None else s
    nodes = [sign * g.T, sign * g.T / 2, sign * g.T / 4]
    states = []
    for t in nodes:
        try:
            states.append(_state_at(sol, t))
        except ValueError:
            states.append(None)
    state = SpaceTimeField(g, states[0], "spatial", tuple(range(g.n)))
    info: dict = {"direction": direction, "s": s}
    if family is not None:
        info["norm"] = modulation_norm(state, s, family)
        diffs = []
        for a, b in ((0, 1), (1, 2)):
            if states[a] is None or states[b] is None:
                diffs.append(None)
                continue
            d = SpaceTimeField(g, states[a] - states[b], "spatial", tuple(range(g.n)))
            diffs.append(modulation_norm(d, s, family))
        info["cauchy"] = diffs
    return state, info


def scattering_operator(u_minus: SpaceTimeField, config: SolverConfig, family: DecompFamily) -> tuple[SpaceTimeField, Solution]:
    """Map an incoming free state to the outgoing one through the nonlinear flow.

    Solves ``v(t) = S(t) u_- - i int_{-T}^t S(t - tau) F(v) dtau`` by Picard
    iteration and returns ``u_+ = S(-T) v(T)``.
    """
    grid = family.grid
    if u_minus.grid != grid or u_minus.kind != "spatial":
        raise ValueError("u_minus must be a spatial field on the family grid")
    uhat = fourier_forward(u_minus).values
    t = grid.times.reshape((-1,) + (1,) * grid.n)
    Lhat = np.exp(1j * t * grid.dispersion()) * uhat[None]
    what, diag = _picard(grid, Lhat, config, family, 0)
    sol = Solution(grid, Lhat, what, u_minus, config, diag, 0)
    plus = np.exp(-1j * grid.T * grid.dispersion()) * sol.hat[-1]
    return SpaceTimeField(grid, plus, "spatial", tuple(range(grid.n))), sol


def normalized_datum(grid: Grid, family: DecompFamily, delta: float, s: float, seed: int = 0, ball: float = 2.0) -> SpaceTimeField:
    """Packet in ``|xi|_inf <= ball`` rescaled so ``||u0||_{M^s_{2,1}} = delta``."""
    from .grid import BallSupport, random_band_limited

    f = random_band_limited(grid, BallSupport(ball), seed, "packet")
    return f * (delta / modulation_norm(f, s, family))
