"""Frequency-uniform decomposition, dyadic shells and angular projections."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterator, Literal, Sequence

import numpy as np

from .grid import (
    Grid,
    SpaceTimeField,
    fourier_forward,
    fourier_inverse,
    lp_norm,
    smooth_plateau,
)

_CLAMP = 1e-300


def rho(s: np.ndarray) -> np.ndarray:
    """1-D plateau bump: 1 on ``|s| <= 1/2``, 0 on ``|s| >= 1``."""
    return smooth_plateau(s, 0.5, 1.0)


def eta(k: int, xi: np.ndarray) -> np.ndarray:
    """Normalized bump ``rho(xi-k) / sum_l rho(xi-l)`` at absolute positions."""
    xi = np.asarray(xi, dtype=float)
    base = np.floor(xi)
    total = np.zeros_like(xi)
    # only the integers within distance 1 contribute
    for shift in (-1.0, 0.0, 1.0, 2.0):
        total = total + rho(xi - (base + shift))
    out = rho(xi - k) / total
    out[out < _CLAMP] = 0.0
    return out


@dataclass(frozen=True, eq=False)
class DecompFamily:
    """Tensor-product bump family indexed by ``center + {-K..K}^n``."""

    grid: Grid
    K: int
    eta_table: dict = field(repr=False)

    @property
    def n(self) -> int:
        return self.grid.n

    def index_range(self, axis: int) -> range:
        c = self.grid.center[axis]
        return range(c - self.K, c + self.K + 1)

    def indices(self) -> Iterator[tuple[int, ...]]:
        return itertools.product(*(self.index_range(a) for a in range(self.n)))

    def contains(self, k: Sequence[int]) -> bool:
        return len(k) == self.n and all(ki in self.index_range(a) for a, ki in enumerate(k))

    def check_index(self, k: Sequence[int]) -> tuple[int, ...]:
        k = tuple(int(v) for v in k)
        if not self.contains(k):
            raise ValueError(f"box index {k} outside the family range")
        return k

    def factor(self, axis: int, ki: int) -> np.ndarray:
        """eta_{k_i} sampled on one axis (FFT storage order)."""
        return self.eta_table[(axis, ki)]

    def support(self, axis: int, ki: int) -> np.ndarray:
        """Storage indices where eta_{k_i} is non-zero."""
        return np.flatnonzero(self.factor(axis, ki))

    def symbol(self, k: Sequence[int]) -> np.ndarray:
        """Full n-D symbol sigma_k on the frequency grid."""
        k = self.check_index(k)
        out = np.ones((1,) * self.n)
        for axis, ki in enumerate(k):
            shape = [1] * self.n
            shape[axis] = self.grid.N
            out = out * self.factor(axis, ki).reshape(shape)
        return out

    def covered(self) -> np.ndarray:
        """Boolean mask of nodes where the family sums to one by construction."""
        mask = np.ones((1,) * self.n, dtype=bool)
        for axis, xi in enumerate(self.grid.xi_mesh()):
            mask = mask & (np.abs(xi - self.grid.center[axis]) <= self.K + 1e-12)
        return np.broadcast_to(mask, self.grid.spatial_shape())

    def total(self) -> np.ndarray:
        """Sum of all sigma_k on the grid (tensor product of 1-D sums)."""
        out = np.ones((1,) * self.n)
        for axis in range(self.n):
            s = sum(self.factor(axis, ki) for ki in self.index_range(axis))
            shape = [1] * self.n
            shape[axis] = self.grid.N
            out = out * s.reshape(shape)
        return np.broadcast_to(out, self.grid.spatial_shape())

    def lower_bound_on_cubes(self) -> float:
        """Measured ``min sigma_k`` over the closed unit cubes ``|xi-k|_inf <= 1/2``."""
        worst = np.inf
        for axis in range(self.n):
            xi = self.grid.xi_axis(axis)
            for ki in self.index_range(axis):
                on = np.abs(xi - ki) <= 0.5
                if on.any():
                    worst = min(worst, float(self.factor(axis, ki)[on].min()))
        return worst**self.n

    def to_rows(self) -> list[tuple[int, int, float, float]]:
        """Rows ``(k_i, axis, xi, eta)`` over the non-zero samples, for CSV dumps."""
        rows = []
        for axis in range(self.n):
            xi = self.grid.xi_axis(axis)
            order = np.argsort(xi)
            for ki in self.index_range(axis):
                vals = self.factor(axis, ki)
                for j in order:
                    if vals[j] > 0:
                        rows.append((ki, axis, float(xi[j]), float(vals[j])))
        return rows


def build_family(grid: Grid, K: int) -> DecompFamily:
    """Sample the bump family on every axis of ``grid``.

    Raises if the outermost bump (support radius 1 around ``center +- K``)
    does not fit inside the frequency window.
    """
    if K < 0:
        raise ValueError(f"K must be non-negative, got {K}")
    if K + 1 > grid.half_band:
        raise ValueError(
            f"family K={K} overflows the frequency window (half band {grid.half_band:g})"
        )
    table = {}
    for axis in range(grid.n):
        xi = grid.xi_axis(axis)
        c = grid.center[axis]
        for ki in range(c - K, c + K + 1):
            vals = eta(ki, xi)
            vals.flags.writeable = False
            table[(axis, ki)] = vals
    return DecompFamily(grid, K, table)


def _in_rep(result: SpaceTimeField, like: SpaceTimeField) -> SpaceTimeField:
    if like.freq_axes == result.freq_axes:
        return result
    if like.rep == "physical":
        return fourier_inverse(result)
    out = fourier_inverse(result)
    return fourier_forward(out, like.freq_axes)


def apply_multiplier(field: SpaceTimeField, symbol: np.ndarray) -> SpaceTimeField:
    """Apply an n-D frequency symbol, returning the field in its input representation."""
    freq = fourier_forward(field)
    out = freq.replace(freq.values * symbol)
    return _in_rep(out, field)


def apply_box(family: DecompFamily, k: Sequence[int], field: SpaceTimeField) -> SpaceTimeField:
    """``F^-1 sigma_k F`` applied to a spatial or space-time field."""
    if field.grid != family.grid:
        raise ValueError("field and family live on different grids")
    return apply_multiplier(field, family.symbol(k))


def partition_residual(family: DecompFamily, region: Literal["covered", "all"] = "covered", margin: float = 0.0) -> float:
    """Max ``|sum_k sigma_k - 1|`` over covered nodes (optionally shrunk by ``margin``).

    ``region="all"`` evaluates on every node of the window, exposing the
    uncovered edge where the deviation approaches one.
    """
    dev = np.abs(family.total() - 1.0)
    if region == "all":
        return float(dev.max())
    mask = np.ones((1,) * family.n, dtype=bool)
    for axis, xi in enumerate(family.grid.xi_mesh()):
        mask = mask & (np.abs(xi - family.grid.center[axis]) <= family.K - margin + 1e-12)
    mask = np.broadcast_to(mask, dev.shape)
    return float(dev[mask].max()) if mask.any() else 0.0


def box_energy_outside(family: DecompFamily, field: SpaceTimeField) -> float:
    """Fraction of L2 energy on nodes not covered by the family."""
    vals = np.abs(fourier_forward(field).values) ** 2
    cover = family.covered()
    if field.kind == "spacetime":
        cover = cover[None]
    total = vals.sum()
    if total == 0:
        return 0.0
    return float(vals[~np.broadcast_to(cover, vals.shape)].sum() / total)


# ---------------------------------------------------------------- dyadic shells


def dyadic_level(grid: Grid) -> np.ndarray:
    """Shell index per node: 0 for ``|xi| <= 1``, j for ``2^(j-1) < |xi| <= 2^j``."""
    mag = np.sqrt(sum(xi**2 for xi in grid.xi_mesh()))
    mag = np.broadcast_to(mag, grid.spatial_shape())
    level = np.zeros(mag.shape, dtype=int)
    big = mag > 1.0
    level[big] = np.ceil(np.log2(mag[big]) - 1e-12).astype(int)
    return level


# ---------------------------------------------------------------- angular projections


def psi(x: np.ndarray) -> np.ndarray:
    """Bump on ``[0, inf)``: 1 on ``[0, 1]``, 0 on ``[2, inf)``."""
    return smooth_plateau(x, 1.0, 2.0)


@dataclass(frozen=True)
class AngularProjector:
    """Multiplier ``psi_1(xi) = psi(|xi_2| / 2|xi_1|)`` or its complement ``psi_2``.

    On the line ``xi_1 = 0`` the symbol takes its limiting values:
    ``psi_1 = 0`` for ``xi_2 != 0`` and ``psi_1 = 1`` at the origin.
    """

    which: Literal[1, 2]

    def __post_init__(self) -> None:
        if self.which not in (1, 2):
            raise ValueError(f"projector index must be 1 or 2, got {self.which}")

    def symbol(self, grid: Grid) -> np.ndarray:
        if grid.n < 2:
            raise ValueError("angular projections need n >= 2")
        xi = grid.xi_mesh()
        a = np.abs(np.broadcast_to(xi[0], grid.spatial_shape()))
        b = np.abs(np.broadcast_to(xi[1], grid.spatial_shape()))
        psi1 = np.zeros(grid.spatial_shape())
        nz = a > 0
        psi1[nz] = psi(b[nz] / (2.0 * a[nz]))
        psi1[(a == 0) & (b == 0)] = 1.0
        return psi1 if self.which == 1 else 1.0 - psi1


def apply_angular(projector: AngularProjector, field: SpaceTimeField) -> SpaceTimeField:
    return apply_multiplier(field, projector.symbol(field.grid))


# ---------------------------------------------------------------- Bernstein


@dataclass(frozen=True)
class BernsteinResult:
    field: SpaceTimeField
    ratio: float


def bernstein_apply(
    phi: np.ndarray | Callable[[Grid], np.ndarray],
    field: SpaceTimeField,
    r: float = 2.0,
) -> BernsteinResult:
    """Apply the symbol ``phi`` and report ``||phi(D) f||_r / ||f||_r``."""
    symbol = phi(field.grid) if callable(phi) else np.asarray(phi)
    out = fourier_inverse(apply_multiplier(field, symbol))
    base = lp_norm(field, r)
    if base == 0:
        raise ValueError("input field has zero norm")
    return BernsteinResult(out, lp_norm(out, r) / base)


def nikolskii_ratio(field: SpaceTimeField, p: float, q: float) -> float:
    """``||f||_q / ||f||_p`` for a spatial field (``p <= q``)."""
    if p > q:
        raise ValueError(f"need p <= q, got p={p}, q={q}")
    return lp_norm(field, q) / lp_norm(field, p)
