"""Mixed Lebesgue, modulation, Besov, box-summed and working norms.

Box terms are evaluated on a *box-local* grid: the patch of ``sigma_k F u``
(at most ``2/dxi`` nodes per axis) is re-centred at zero frequency and
transformed on ``M >= 2/dxi`` nodes with the same torus side.  This samples
``|box_k u|`` exactly (the carrier ``exp(i k.x)`` drops out of the modulus)
at a fraction of the cost of a full-grid transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Literal, Sequence, Union

import numpy as np
import scipy.fft as sfft

from .decomp import DecompFamily, box_energy_outside, dyadic_level
from .grid import Grid, SpaceTimeField, fft_workers, fourier_forward, fourier_inverse

Axis = Union[int, str]
TIME = "t"


# ---------------------------------------------------------------- mixed norms


@dataclass(frozen=True)
class MixedNormSpec:
    """Nested Lebesgue norm; ``levels`` run outermost first.

    Each level is ``(axes, p)`` where ``axes`` holds spatial axis numbers or
    ``"t"``.  The innermost level is integrated first.
    """

    levels: tuple[tuple[tuple[Axis, ...], float], ...]
    label: str = ""

    def __post_init__(self) -> None:
        seen: list[Axis] = []
        levels = []
        for axes, p in self.levels:
            p = float(p)
            if not p >= 1:
                raise ValueError(f"exponent must be >= 1, got {p}")
            axes = tuple(axes)
            if not axes:
                raise ValueError("empty level in mixed norm")
            for a in axes:
                if a in seen:
                    raise ValueError(f"axis {a!r} appears twice")
                seen.append(a)
            levels.append((axes, p))
        object.__setattr__(self, "levels", tuple(levels))
        if not self.label:
            object.__setattr__(self, "label", self.describe())

    @property
    def axes(self) -> set:
        return {a for axes, _ in self.levels for a in axes}

    def describe(self) -> str:
        parts = []
        for axes, p in self.levels:
            ps = "inf" if math.isinf(p) else f"{p:g}"
            names = ",".join("t" if a == TIME else f"x{a + 1}" for a in axes)
            parts.append(f"L^{ps}_{{{names}}}")
        return " ".join(parts)

    @staticmethod
    def anisotropic(i: int, p1: float, p2: float, n: int, time: bool = True) -> "MixedNormSpec":
        """``L^p1_{x_i} L^p2_{other x} L^p2_t``."""
        rest = tuple(a for a in range(n) if a != i)
        levels: list = [((i,), p1)]
        if rest:
            levels.append((rest, p2))
        if time:
            levels.append(((TIME,), p2))
        return MixedNormSpec(tuple(levels))

    @staticmethod
    def strichartz(gamma: float, r: float, n: int) -> "MixedNormSpec":
        """``L^gamma_t L^r_x``."""
        return MixedNormSpec((((TIME,), gamma), (tuple(range(n)), r)))

    @staticmethod
    def joint(p: float, n: int, time: bool = True) -> "MixedNormSpec":
        axes = ((TIME,) if time else ()) + tuple(range(n))
        return MixedNormSpec(((axes, p),))

    @staticmethod
    def spatial(p: float, n: int) -> "MixedNormSpec":
        return MixedNormSpec(((tuple(range(n)), p),))


def _reduce(vals: np.ndarray, spec: MixedNormSpec, axis_map: dict, weights: dict) -> float:
    top = float(vals.max(initial=0.0))
    if top == 0.0 or not np.isfinite(top):
        return top
    arr = vals / top
    for axes, p in reversed(spec.levels):
        idx = tuple(axis_map[a] for a in axes)
        if math.isinf(p):
            arr = arr.max(axis=idx, keepdims=True)
            continue
        w = np.ones((1,) * arr.ndim)
        for a in axes:
            wa = weights[a]
            if np.ndim(wa) == 0:
                w = w * wa
            else:
                shape = [1] * arr.ndim
                shape[axis_map[a]] = -1
                w = w * np.asarray(wa).reshape(shape)
        arr = (np.sum(w * arr**p, axis=idx, keepdims=True)) ** (1.0 / p)
    return float(top * arr.reshape(-1)[0])


def mixed_norm_array(
    absvals: np.ndarray,
    spec: MixedNormSpec,
    n: int,
    dx: float,
    time_weights: np.ndarray | None,
) -> float:
    """Evaluate ``spec`` on an array of moduli laid out as ``(t?, x_1, ..., x_n)``."""
    has_time = time_weights is not None
    offset = 1 if has_time else 0
    axis_map: dict = {a: a + offset for a in range(n)}
    weights: dict = {a: dx for a in range(n)}
    if has_time:
        axis_map[TIME] = 0
        weights[TIME] = time_weights
    expected = set(axis_map)
    if spec.axes != expected:
        raise ValueError(f"norm axes {sorted(map(str, spec.axes))} do not match field axes {sorted(map(str, expected))}")
    return _reduce(absvals, spec, axis_map, weights)


def mixed_norm(field: SpaceTimeField, spec: MixedNormSpec) -> float:
    """Mixed norm of a field on its full grid (any representation accepted)."""
    g = field.grid
    vals = np.abs(fourier_inverse(field).values)
    tw = g.time_weights if field.kind == "spacetime" else None
    return mixed_norm_array(vals, spec, g.n, g.dx, tw)


# ---------------------------------------------------------------- box-local evaluation


def _local_points(grid: Grid, oversample: int) -> int:
    patch = int(round(2 / grid.dxi))
    m = 1
    while m < oversample * patch:
        m *= 2
    return min(m, grid.N)


class BoxEvaluator:
    """Box-localized pieces of one field, sampled on box-local grids.

    Args:
        family: Decomposition family.
        field: Spatial or space-time field on ``family.grid``.
        oversample: Local grid has ``M >= oversample * 2/dxi`` nodes (capped at N).
    """

    def __init__(self, family: DecompFamily, field: SpaceTimeField, oversample: int = 4):
        if field.grid != family.grid:
            raise ValueError("field and family live on different grids")
        self.family = family
        self.grid = family.grid
        self.kind = field.kind
        self.freq = fourier_forward(field).values
        self.M = _local_points(self.grid, oversample)
        g = self.grid
        self.dx = g.L / self.M
        self.scale = (self.M * g.dxi**2 / (2 * math.pi)) ** (g.n / 2)
        self.time_weights = g.time_weights if field.kind == "spacetime" else None
        self._offsets = {}
        for axis in range(g.n):
            xi = g.xi_axis(axis)
            for ki in family.index_range(axis):
                idx = family.support(axis, ki)
                m = np.rint((xi[idx] - ki) / g.dxi).astype(int) % self.M
                self._offsets[(axis, ki)] = (idx, m, xi[idx], family.factor(axis, ki)[idx])

    def patch(self, k: Sequence[int]) -> tuple[np.ndarray, list[np.ndarray]]:
        """``sigma_k F u`` restricted to the box support, plus absolute xi per axis."""
        k = self.family.check_index(k)
        vals = self.freq
        off = 1 if self.kind == "spacetime" else 0
        xis = []
        for axis, ki in enumerate(k):
            idx, _, xi, eta = self._offsets[(axis, ki)]
            vals = np.take(vals, idx, axis=axis + off)
            shape = [1] * vals.ndim
            shape[axis + off] = -1
            vals = vals * eta.reshape(shape)
            xis.append(xi)
        return vals, xis

    def energy(self, k: Sequence[int]) -> float:
        """``||box_k u||_2`` (time-integrated for space-time fields)."""
        vals, _ = self.patch(k)
        sq = np.abs(vals) ** 2
        w = self.grid.dxi**self.grid.n
        if self.kind == "spacetime":
            per_t = sq.reshape(sq.shape[0], -1).sum(axis=1) * w
            return float(np.sqrt(np.dot(per_t, self.time_weights)))
        return float(np.sqrt(sq.sum() * w))

    def sup_energy(self, k: Sequence[int]) -> float:
        """``sup_t ||box_k u(t)||_2`` (equals :meth:`energy` for spatial fields)."""
        vals, _ = self.patch(k)
        if self.kind != "spacetime":
            return self.energy(k)
        sq = (np.abs(vals) ** 2).reshape(vals.shape[0], -1).sum(axis=1) * self.grid.dxi**self.grid.n
        return float(np.sqrt(sq.max()))

    def local(
        self,
        k: Sequence[int],
        multiplier: Callable[[list[np.ndarray]], np.ndarray] | None = None,
    ) -> np.ndarray:
        """Complex samples of ``exp(-i k.x) m(D) box_k u`` on the box-local grid."""
        vals, xis = self.patch(k)
        g = self.grid
        off = 1 if self.kind == "spacetime" else 0
        if multiplier is not None:
            mesh = []
            for axis, xi in enumerate(xis):
                shape = [1] * g.n
                shape[axis] = -1
                mesh.append(xi.reshape(shape))
            vals = vals * multiplier(mesh)
        k = self.family.check_index(k)
        full = np.zeros(vals.shape[:off] + (self.M,) * g.n, dtype=np.complex128)
        index = [slice(None)] * off
        for axis, ki in enumerate(k):
            index.append(self._offsets[(axis, ki)][1])
        full[np.ix_(*[np.arange(s) if isinstance(i, slice) else i for s, i in zip(full.shape, index)])] = vals
        axes = tuple(range(off, off + g.n))
        return sfft.ifftn(full, axes=axes, norm="ortho", workers=fft_workers()) * self.scale

    def norm(self, local_values: np.ndarray, spec: MixedNormSpec) -> float:
        return mixed_norm_array(np.abs(local_values), spec, self.grid.n, self.dx, self.time_weights)

    def active(self, tol: float = 0.0) -> list[tuple[int, ...]]:
        """Boxes whose energy exceeds ``tol`` times the largest box energy."""
        energies = {k: self.energy(k) for k in self.family.indices()}
        top = max(energies.values(), default=0.0)
        if top == 0:
            return []
        return [k for k, e in energies.items() if e > tol * top]


def derivative_symbol(axis: int | None, order: int = 1) -> Callable | None:
    if axis is None:
        return None
    return lambda mesh: (1j * mesh[axis]) ** order


def riesz_symbol(axis: int, order: float) -> Callable:
    def sym(mesh):
        x = np.abs(mesh[axis])
        if order < 0:
            return np.where(x == 0, 0.0, np.abs(np.where(x == 0, 1.0, x)) ** order)
        return x**order

    return sym


# ---------------------------------------------------------------- weights and filters


def bracket(k: Sequence[int]) -> float:
    """``<k> = 1 + |k|`` with the Euclidean length."""
    return 1.0 + math.sqrt(sum(v * v for v in k))


@dataclass(frozen=True)
class BoxWeight:
    """``<k>^s`` (``axis=None``) or ``<k_axis>^s``."""

    s: float = 0.0
    axis: int | None = None

    def __call__(self, k: Sequence[int]) -> float:
        if self.axis is None:
            return bracket(k) ** self.s
        return (1.0 + abs(k[self.axis])) ** self.s

    def label(self) -> str:
        if self.s == 0:
            return "1"
        base = "<k>" if self.axis is None else f"<k{self.axis + 1}>"
        return f"{base}^{self.s:g}"


@dataclass(frozen=True)
class BoxFilter:
    """Index restriction.

    ``mode="abs_gt"``: ``|k_axis| > bound``.
    ``mode="kmax"``: ``|k_axis| = max_i |k_i| > bound``.
    """

    axis: int
    bound: int = 4
    mode: Literal["abs_gt", "kmax"] = "abs_gt"

    def __call__(self, k: Sequence[int]) -> bool:
        ka = abs(k[self.axis])
        if self.mode == "abs_gt":
            return ka > self.bound
        return ka > self.bound and ka == max(abs(v) for v in k)

    def label(self) -> str:
        if self.mode == "abs_gt":
            return f"|k{self.axis + 1}|>{self.bound}"
        return f"|k{self.axis + 1}|=kmax>{self.bound}"


# ---------------------------------------------------------------- modulation and Besov


def _check_coverage(family: DecompFamily, field: SpaceTimeField, tol: float = 1e-8) -> None:
    frac = box_energy_outside(family, field)
    if frac > tol:
        raise ValueError(f"field energy outside family coverage ({frac:.3e}) exceeds {tol:g}")


def modulation_norm(
    field: SpaceTimeField,
    s: float,
    family: DecompFamily,
    form: Literal["smooth", "sharp"] = "smooth",
) -> float:
    """``sum_k <k>^s ||box_k f||_2``.

    ``form="sharp"`` replaces ``sigma_k`` by the indicator of the half-open
    unit cube ``Q_k``; the ratio of the two forms is the measured
    equivalence constant.
    """
    if field.kind != "spatial":
        raise ValueError("modulation_norm takes a spatial field")
    _check_coverage(family, field)
    if form == "smooth":
        ev = BoxEvaluator(family, field)
        return float(sum(bracket(k) ** s * ev.energy(k) for k in family.indices()))
    if form != "sharp":
        raise ValueError(f"unknown form {form!r}")
    g = field.grid
    sq = np.abs(fourier_forward(field).values) ** 2 * g.dxi**g.n
    cells = [np.floor(xi + 0.5).astype(int) for xi in g.xi_mesh()]
    cells = [np.broadcast_to(c, g.spatial_shape()).ravel() for c in cells]
    keys = np.stack(cells, axis=1)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    energy = np.bincount(inv.ravel(), weights=sq.ravel(), minlength=len(uniq))
    return float(sum(bracket(k) ** s * math.sqrt(e) for k, e in zip(uniq, energy)))


def besov_norm(field: SpaceTimeField, s: float) -> float:
    """Sharp-shell ``B^s_{2,1}`` norm: ball ``|xi| <= 1`` plus dyadic shells."""
    if field.kind != "spatial":
        raise ValueError("besov_norm takes a spatial field")
    g = field.grid
    sq = np.abs(fourier_forward(field).values) ** 2 * g.dxi**g.n
    level = dyadic_level(g)
    energy = np.bincount(level.ravel(), weights=sq.ravel())
    return float(sum(2.0 ** (s * j) * math.sqrt(e) for j, e in enumerate(energy)))


def sobolev_norm(field: SpaceTimeField, s: float) -> float:
    """``H^s`` norm with weight ``(1 + |xi|^2)^(s/2)``."""
    g = field.grid
    mag2 = sum(xi**2 for xi in g.xi_mesh())
    vals = fourier_forward(field).values * (1 + mag2) ** (s / 2)
    return float(np.sqrt((np.abs(vals) ** 2).sum() * g.dxi**g.n))


# ---------------------------------------------------------------- box sums


def box_sum_norm(
    field: SpaceTimeField,
    weight: BoxWeight,
    inner: MixedNormSpec | Sequence[MixedNormSpec],
    family: DecompFamily,
    restriction: BoxFilter | None = None,
    multiplier: Callable | None = None,
    evaluator: BoxEvaluator | None = None,
) -> float:
    """``sum_k weight(k) ||m(D) box_k f||_inner`` over admitted boxes.

    Several inner specs are summed (the norm of an intersection space).
    Boxes with zero energy contribute exactly zero and are skipped.
    """
    _check_coverage(family, field)
    specs = [inner] if isinstance(inner, MixedNormSpec) else list(inner)
    ev = evaluator or BoxEvaluator(family, field)
    total = 0.0
    for k in family.indices():
        if restriction is not None and not restriction(k):
            continue
        if ev.energy(k) == 0.0:
            continue
        loc = ev.local(k, multiplier)
        total += weight(k) * sum(ev.norm(loc, sp) for sp in specs)
    return total


# ---------------------------------------------------------------- working norms


@dataclass(frozen=True)
class NormComponent:
    """One box-summed term of a working norm."""

    label: str
    weight: BoxWeight
    inner: tuple[MixedNormSpec, ...]
    derivative: int | None = None
    restriction: BoxFilter | None = None
    multiplicity: int = 1


@dataclass(frozen=True)
class WorkingNormSpec:
    name: str
    components: tuple[NormComponent, ...]
    params: dict = field(default_factory=dict)


def _x_like(name: str, n: int, smooth_w: float, max_p: float, max_s: float, stri: tuple, stri_s: float, with_derivs: bool, params: dict) -> WorkingNormSpec:
    comps = []
    derivs = [None] + list(range(n)) if with_derivs else [None]
    for d in derivs:
        dl = "" if d is None else f"d{d + 1} "
        mult = n if (with_derivs and d is None) else 1
        for i in range(n):
            comps.append(
                NormComponent(
                    f"{dl}smooth i={i + 1}",
                    BoxWeight(smooth_w, axis=i),
                    (MixedNormSpec.anisotropic(i, math.inf, 2, n),),
                    d,
                    BoxFilter(i, 4),
                    mult,
                )
            )
        for i in range(n):
            comps.append(
                NormComponent(
                    f"{dl}maximal i={i + 1}",
                    BoxWeight(max_s),
                    (MixedNormSpec.anisotropic(i, max_p, math.inf, n),),
                    d,
                    None,
                    mult,
                )
            )
        comps.append(NormComponent(f"{dl}strichartz", BoxWeight(stri_s), stri, d, None, mult))
    return WorkingNormSpec(name, tuple(comps), params)


def norm_X(n: int, m: float) -> WorkingNormSpec:
    """Working norm for general derivative nonlinearities of minimal degree ``m+1``."""
    stri = (MixedNormSpec.strichartz(math.inf, 2, n), MixedNormSpec.joint(2 + m, n))
    return _x_like("X", n, 1.0, m, 0.5 - 1.0 / m, stri, 0.5, True, {"n": n, "m": m})


def norm_Y(n: int) -> WorkingNormSpec:
    """Working norm for the ``m = 2`` case."""
    stri = (MixedNormSpec.strichartz(math.inf, 2, n), MixedNormSpec.strichartz(3, 6, n))
    return _x_like("Y", n, 2.0, 2, 0.0, stri, 1.5, True, {"n": n})


def norm_X1(n: int, kappa: float) -> WorkingNormSpec:
    """Working norm for ``sum_i lambda_i d_i(u^(kappa_i+1))``."""
    stri = (MixedNormSpec.strichartz(math.inf, 2, n), MixedNormSpec.joint(2 + kappa, n))
    return _x_like("X1", n, 1.0, kappa, 0.5 - 1.0 / kappa, stri, 0.5, False, {"n": n, "kappa": kappa})


def norm_Y1(n: int) -> WorkingNormSpec:
    stri = (MixedNormSpec.strichartz(math.inf, 2, n), MixedNormSpec.strichartz(3, 6, n))
    return _x_like("Y1", n, 2.0, 2, 0.0, stri, 1.5, False, {"n": n})


def working_norm_spec(name: str, n: int, param: float | None = None) -> WorkingNormSpec:
    if name == "X":
        return norm_X(n, param if param is not None else 3)
    if name == "Y":
        return norm_Y(n)
    if name == "X1":
        return norm_X1(n, param if param is not None else 3)
    if name == "Y1":
        return norm_Y1(n)
    raise ValueError(f"unknown working norm {name!r}")


@dataclass(frozen=True)
class WorkingNormResult:
    value: float
    breakdown: dict

    def rows(self) -> list[tuple[str, float]]:
        return list(self.breakdown.items())


def working_norm(field: SpaceTimeField, spec: WorkingNormSpec, family: DecompFamily, evaluator: BoxEvaluator | None = None) -> WorkingNormResult:
    """Sum of all components plus a per-component breakdown.

    Each box is transformed once per derivative variant and shared across
    components.
    """
    if field.kind != "spacetime":
        raise ValueError("working norms take a space-time field")
    _check_coverage(family, field)
    ev = evaluator or BoxEvaluator(family, field)
    parts = {c.label: 0.0 for c in spec.components}
    variants = sorted({c.derivative for c in spec.components}, key=lambda d: -1 if d is None else d)
    for k in family.indices():
        if ev.energy(k) == 0.0:
            continue
        for d in variants:
            loc = None
            for c in spec.components:
                if c.derivative != d or (c.restriction is not None and not c.restriction(k)):
                    continue
                if loc is None:
                    loc = ev.local(k, derivative_symbol(d))
                val = sum(ev.norm(loc, sp) for sp in c.inner)
                parts[c.label] += c.multiplicity * c.weight(k) * val
    return WorkingNormResult(float(sum(parts.values())), parts)
