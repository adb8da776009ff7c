"""Free Schrodinger group, Duhamel integrals and one-axis Fourier multipliers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .grid import Grid, SpaceTimeField, fourier_forward, fourier_inverse


def _phase(grid: Grid, t: float) -> np.ndarray:
    return np.exp(1j * t * grid.dispersion())


def free_evolve(field: SpaceTimeField, t: float) -> SpaceTimeField:
    """``S(t) f`` with symbol ``exp(i t sum eps_j xi_j^2)``; output is physical."""
    if field.kind != "spatial":
        raise ValueError("free_evolve takes a spatial field")
    freq = fourier_forward(field)
    return fourier_inverse(freq.replace(freq.values * _phase(field.grid, t)))


def evolve_trajectory(field: SpaceTimeField, rep: Literal["physical", "frequency"] = "physical") -> SpaceTimeField:
    """Space-time field whose slice ``m`` is ``S(t_m) f``."""
    if field.kind != "spatial":
        raise ValueError("evolve_trajectory takes a spatial field")
    g = field.grid
    freq = fourier_forward(field).values
    phi = g.dispersion()
    t = g.times.reshape((-1,) + (1,) * g.n)
    vals = np.exp(1j * t * phi) * freq
    out = SpaceTimeField(g, vals, "spacetime", tuple(range(g.n)))
    return out if rep == "frequency" else fourier_inverse(out)


def _as_freq_spacetime(forcing: SpaceTimeField) -> SpaceTimeField:
    if forcing.kind != "spacetime":
        raise ValueError("Duhamel integrals need a space-time forcing")
    return fourier_forward(forcing)


def duhamel(
    forcing: SpaceTimeField,
    origin_index: int | None = None,
    rep: Literal["physical", "frequency"] = "physical",
) -> SpaceTimeField:
    """``A f(t) = int_{t_0}^t S(t - tau) f(tau) dtau`` on the time grid.

    Uses the exponential trapezoid rule: the free phase is integrated exactly
    across each panel and the forcing by the trapezoid rule.  ``t_0`` is the
    node ``origin_index`` (default: ``t = 0``); nodes before the origin are
    filled by the mirrored backward recursion so the value at the origin is
    exactly zero on both sides.
    """
    g = forcing.grid
    m0 = g.zero_index if origin_index is None else int(origin_index)
    if not 0 <= m0 <= g.Nt:
        raise ValueError(f"origin index {m0} outside the time grid")
    fhat = _as_freq_spacetime(forcing).values
    E = _phase(g, g.dt)
    Einv = np.conj(E)
    half = g.dt / 2
    out = np.zeros(fhat.shape, dtype=np.complex128)
    acc = np.zeros(fhat.shape[1:], dtype=np.complex128)
    for m in range(m0, g.Nt):
        acc = E * acc + half * (E * fhat[m] + fhat[m + 1])
        out[m + 1] = acc
    acc = np.zeros(fhat.shape[1:], dtype=np.complex128)
    for m in range(m0, 0, -1):
        acc = Einv * acc - half * (Einv * fhat[m] + fhat[m - 1])
        out[m - 1] = acc
    res = SpaceTimeField(g, out, "spacetime", tuple(range(g.n)))
    return res if rep == "frequency" else fourier_inverse(res)


def whole_line_integral(forcing: SpaceTimeField) -> SpaceTimeField:
    """``int_{-T}^{T} S(-tau) f(tau) dtau`` by trapezoid weights (spatial output).

    ``S(t)`` applied to the result gives the whole-line Duhamel term
    ``int S(t - tau) f(tau) dtau``.
    """
    g = forcing.grid
    fhat = _as_freq_spacetime(forcing).values
    w = g.time_weights
    phi = g.dispersion()
    acc = np.zeros(fhat.shape[1:], dtype=np.complex128)
    for m, t in enumerate(g.times):
        acc += w[m] * np.exp(-1j * t * phi) * fhat[m]
    return fourier_inverse(SpaceTimeField(g, acc, "spatial", tuple(range(g.n))))


# ---------------------------------------------------------------- multipliers


@dataclass(frozen=True)
class MultiplierSpec:
    """One-axis symbol: ``riesz`` ``|xi_i|^order``, ``antiderivative`` ``(i xi_i)^-1``,
    ``derivative`` ``(i xi_i)^order``, or ``free_phase`` (``t`` in ``order``)."""

    kind: Literal["riesz", "antiderivative", "derivative", "free_phase"]
    axis: int = 0
    order: float = 1.0
    on_zero: Literal["raise", "drop"] = "raise"


@dataclass(frozen=True)
class MultiplierResult:
    field: SpaceTimeField
    flagged: bool


def _axis_xi(grid: Grid, axis: int) -> np.ndarray:
    if not 0 <= axis < grid.n:
        raise ValueError(f"axis {axis} out of range for n={grid.n}")
    shape = [1] * grid.n
    shape[axis] = grid.N
    return grid.xi_axis(axis).reshape(shape)


def _zero_plane_mass(freq: SpaceTimeField, zero: np.ndarray) -> float:
    vals = freq.values
    if freq.kind == "spacetime":
        zero = zero[None]
    return float(np.abs(vals[np.broadcast_to(zero, vals.shape)]).max(initial=0.0))


def _singular(
    field: SpaceTimeField, axis: int, symbol_fn, on_zero: str
) -> MultiplierResult:
    g = field.grid
    xi = _axis_xi(g, axis)
    freq = fourier_forward(field, [axis])
    zero = np.broadcast_to(xi == 0, g.spatial_shape())
    flagged = False
    if zero.any():
        scale = float(np.abs(freq.values).max(initial=0.0))
        mass = _zero_plane_mass(freq, zero)
        if mass > 1e-14 * max(scale, 1e-300):
            if on_zero == "raise":
                raise ValueError(
                    f"negative-order symbol applied to a field with mass on xi_{axis}=0; "
                    "pass on_zero='drop' to map the symbol to 0 there"
                )
            flagged = True
    safe = np.where(xi == 0, 1.0, xi)
    sym = np.where(xi == 0, 0.0, symbol_fn(safe))
    shape = (1,) * (freq.values.ndim - g.n) + sym.shape
    out = freq.replace(freq.values * sym.reshape(shape))
    return MultiplierResult(fourier_inverse(out, [axis]), flagged)


def _regular(field: SpaceTimeField, axis: int, symbol: np.ndarray) -> SpaceTimeField:
    freq = fourier_forward(field, [axis])
    shape = (1,) * (freq.values.ndim - field.grid.n) + symbol.shape
    return fourier_inverse(freq.replace(freq.values * symbol.reshape(shape)), [axis])


def partial_riesz(
    field: SpaceTimeField, axis: int, order: float, on_zero: Literal["raise", "drop"] = "raise"
) -> MultiplierResult:
    """``D^order_{x_axis}``: symbol ``|xi_axis|^order`` on one axis."""
    if order == 0:
        return MultiplierResult(field, False)
    if order > 0:
        xi = _axis_xi(field.grid, axis)
        return MultiplierResult(_regular(field, axis, np.abs(xi) ** order), False)
    return _singular(field, axis, lambda x: np.abs(x) ** order, on_zero)


def partial_antiderivative(
    field: SpaceTimeField, axis: int, on_zero: Literal["raise", "drop"] = "raise"
) -> MultiplierResult:
    """``d^-1_{x_axis}``: symbol ``(i xi_axis)^-1``, zero plane mapped to 0."""
    return _singular(field, axis, lambda x: 1.0 / (1j * x), on_zero)


def partial_derivative(field: SpaceTimeField, axis: int, order: int = 1) -> SpaceTimeField:
    """``d^order_{x_axis}`` spectrally (symbol ``(i xi)^order``)."""
    xi = _axis_xi(field.grid, axis)
    return _regular(field, axis, (1j * xi) ** order)


def apply_spec(field: SpaceTimeField, spec: MultiplierSpec) -> MultiplierResult:
    if spec.kind == "riesz":
        return partial_riesz(field, spec.axis, spec.order, spec.on_zero)
    if spec.kind == "antiderivative":
        return partial_antiderivative(field, spec.axis, spec.on_zero)
    if spec.kind == "derivative":
        return MultiplierResult(partial_derivative(field, spec.axis, int(spec.order)), False)
    if spec.kind == "free_phase":
        return MultiplierResult(free_evolve(field, spec.order), False)
    raise ValueError(f"unknown multiplier kind {spec.kind!r}")
