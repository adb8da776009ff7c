"""Whitney pairs of the triangle ``{x < y}``, level functions and causal splitting.

Space-time data here are *cell fields*: values constant on each time cell
``[t_m, t_{m+1})`` and sampled on a uniform spatial grid with spacing ``dx``
(layout ``(cells, x_1, x_2, ...)``).  On such data every quantity below is
computed exactly, including preimages of the level function, which are
located inside cells by root finding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .grid import SpaceTimeField
from .norms import TIME, MixedNormSpec, mixed_norm_array

MAX_DEPTH = 20


# ---------------------------------------------------------------- dyadic pairs


@dataclass(frozen=True, order=True)
class DyadicInterval:
    """``[a 2^-j, (a+1) 2^-j)`` inside ``[0, 1]``."""

    level: int
    offset: int

    def __post_init__(self) -> None:
        if self.level < 1:
            raise ValueError(f"level must be >= 1, got {self.level}")
        if not 0 <= self.offset < 2**self.level:
            raise ValueError(f"offset {self.offset} outside 0..{2**self.level - 1}")

    @property
    def length(self) -> float:
        return 2.0**-self.level

    @property
    def left(self) -> float:
        return self.offset * self.length

    @property
    def right(self) -> float:
        return (self.offset + 1) * self.length

    def contains(self, y: float) -> bool:
        return self.left <= y < self.right


@dataclass(frozen=True, order=True)
class WhitneyPair:
    """Square ``I x J`` with ``I`` on the horizontal and ``J`` on the vertical axis."""

    I: DyadicInterval
    J: DyadicInterval

    def __post_init__(self) -> None:
        if self.I.level != self.J.level:
            raise ValueError("paired intervals must have equal length")

    @property
    def level(self) -> int:
        return self.I.level

    @property
    def gap(self) -> int:
        """``dist(I, J)`` in units of ``|I|`` (negative when ``J`` is not right of ``I``)."""
        return self.J.offset - self.I.offset - 1

    @property
    def area(self) -> Fraction:
        return Fraction(1, 4**self.level)


def whitney_decompose(J_max: int) -> list[WhitneyPair]:
    """Whitney squares of the triangle with side at least ``2^-J_max``.

    Follows the construction step by step: the retained squares at level
    ``j`` are the squares ``[a, a+1) x [a+1, a+2)`` (in units of ``2^-j``)
    that touch the diagonal.  Each is split into four; the three children
    away from the diagonal are kept as Whitney squares and the corner child
    joins the next set of retained squares, together with the new diagonal
    squares uncovered in the two smaller triangles.
    """
    if not isinstance(J_max, (int, np.integer)) or not 1 <= J_max <= MAX_DEPTH:
        raise ValueError(f"J_max must be an integer in 1..{MAX_DEPTH}, got {J_max!r}")
    pairs: list[WhitneyPair] = []
    retained = [0]  # offsets a of the diagonal squares at the current level
    for level in range(1, J_max):
        nxt = level + 1
        for a in retained:
            for i, j in ((2 * a, 2 * a + 2), (2 * a, 2 * a + 3), (2 * a + 1, 2 * a + 3)):
                pairs.append(WhitneyPair(DyadicInterval(nxt, i), DyadicInterval(nxt, j)))
        retained = list(range(2**nxt - 1))
    return pairs


def level_counts(pairs: Sequence[WhitneyPair]) -> dict[int, int]:
    counts: dict[int, int] = {}
    for p in pairs:
        counts[p.level] = counts.get(p.level, 0) + 1
    return dict(sorted(counts.items()))


def uncovered_area(J_max: int) -> Fraction:
    """Exact area of the triangle left uncovered at depth ``J_max``."""
    covered = sum((p.area for p in whitney_decompose(J_max)), Fraction(0))
    return Fraction(1, 2) - covered


def strip_area(pairs: Sequence[WhitneyPair], J_max: int) -> Fraction:
    """Uncovered area measured independently by rasterizing at level ``J_max``.

    Counts the cells ``[c, c+1) x [r, r+1)`` with ``c < r`` that no square
    covers, plus the half cells cut by the diagonal.
    """
    side = 2**J_max
    hit = np.zeros((side, side), dtype=np.int32)  # [row (y), col (x)]
    for p in pairs:
        s = 2 ** (J_max - p.level)
        hit[p.J.offset * s : (p.J.offset + 1) * s, p.I.offset * s : (p.I.offset + 1) * s] += 1
    rows, cols = np.indices(hit.shape)
    free = int(np.count_nonzero((cols < rows) & (hit == 0)))
    return Fraction(free, side * side) + Fraction(side, 2 * side * side)


@dataclass(frozen=True)
class WhitneyCheck:
    depth: int
    pairs: int
    counts: dict
    property_i: bool
    property_ii: bool
    property_iii: bool
    inside_triangle: bool
    max_partners: int
    uncovered: Fraction
    tiling_defect: Fraction

    @property
    def ok(self) -> bool:
        return self.property_i and self.property_ii and self.property_iii and self.inside_triangle and self.tiling_defect == 0

    def as_dict(self) -> dict:
        return {
            "depth": self.depth,
            "pairs": self.pairs,
            "counts_per_level": {str(k): v for k, v in self.counts.items()},
            "property_i": self.property_i,
            "property_ii": self.property_ii,
            "property_iii": self.property_iii,
            "inside_triangle": self.inside_triangle,
            "max_partners": self.max_partners,
            "uncovered_area": float(self.uncovered),
            "tiling_defect": float(self.tiling_defect),
            "ok": self.ok,
        }


def check_whitney(J_max: int) -> WhitneyCheck:
    """Exact integer checks of properties (i)-(iii) and the area bookkeeping."""
    pairs = whitney_decompose(J_max)
    prop_i = all(p.gap >= 1 for p in pairs)
    inside = all(p.I.right <= p.J.left for p in pairs)
    side = 2**J_max
    hit = np.zeros((side, side), dtype=np.int32)
    for p in pairs:
        s = 2 ** (J_max - p.level)
        hit[p.J.offset * s : (p.J.offset + 1) * s, p.I.offset * s : (p.I.offset + 1) * s] += 1
    prop_ii = int(hit.max(initial=0)) <= 1
    partners: dict[DyadicInterval, int] = {}
    for p in pairs:
        partners[p.J] = partners.get(p.J, 0) + 1
    most = max(partners.values(), default=0)
    unc = uncovered_area(J_max)
    covered = sum((p.area for p in pairs), Fraction(0))
    defect = covered + strip_area(pairs, J_max) - Fraction(1, 2)
    return WhitneyCheck(J_max, len(pairs), level_counts(pairs), prop_i, prop_ii, most <= 2, inside, most, unc, defect)


# ---------------------------------------------------------------- cell fields


@dataclass(frozen=True)
class CellField:
    """Values constant on time cells; ``values`` has layout ``(cells, x_1, ...)``."""

    values: np.ndarray
    t_edges: np.ndarray
    dx: float

    def __post_init__(self) -> None:
        vals = np.asarray(self.values)
        edges = np.asarray(self.t_edges, dtype=float)
        if vals.ndim < 2:
            raise ValueError("cell field needs a time axis and at least one spatial axis")
        if edges.shape != (vals.shape[0] + 1,):
            raise ValueError("t_edges must have one more entry than the number of cells")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("t_edges must be strictly increasing")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "t_edges", edges)

    @property
    def n(self) -> int:
        return self.values.ndim - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.t_edges)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.t_edges[:-1] + self.t_edges[1:])

    def replace(self, values: np.ndarray) -> "CellField":
        return CellField(values, self.t_edges, self.dx)

    @staticmethod
    def from_field(field: SpaceTimeField) -> "CellField":
        """Panel averages of a physical space-time field."""
        if field.kind != "spacetime" or field.freq_axes:
            raise ValueError("need a physical space-time field")
        v = field.values
        g = field.grid
        return CellField(0.5 * (v[:-1] + v[1:]), g.times, g.dx)


def source_spec(q: Sequence[float]) -> MixedNormSpec:
    """``L^{q_1}_{x_1} ... L^{q_n}_{x_n} L^{q_{n+1}}_t`` for exponents ``q``."""
    q = tuple(float(v) for v in q)
    return MixedNormSpec(tuple(((a,), p) for a, p in enumerate(q[:-1])) + (((TIME,), q[-1]),))


def _check_exponents(q: Sequence[float], n: int) -> tuple[float, ...]:
    q = tuple(float(v) for v in q)
    if len(q) != n + 1:
        raise ValueError(f"need {n + 1} exponents, got {len(q)}")
    if any(not (1 <= v < math.inf) for v in q):
        raise ValueError(f"exponents must be finite and >= 1, got {q}")
    return q


def cell_norm(f: CellField, q: Sequence[float], window: tuple[float, float] | None = None) -> float:
    """Mixed norm of ``chi_window(t) f`` (whole line when ``window`` is None)."""
    q = _check_exponents(q, f.n)
    w = f.widths if window is None else _overlap(f.t_edges, *window)
    return mixed_norm_array(np.abs(f.values), source_spec(q), f.n, f.dx, w)


def _spatial_norm(vals: np.ndarray, q: Sequence[float], dx: float) -> float:
    spec = MixedNormSpec(tuple(((a,), p) for a, p in enumerate(q)))
    return mixed_norm_array(vals, spec, len(q), dx, None)


def _overlap(edges: np.ndarray, a: float, b: float) -> np.ndarray:
    """Length of each cell inside ``(a, b)``."""
    lo = np.maximum(edges[:-1], a)
    hi = np.minimum(edges[1:], b)
    return np.clip(hi - lo, 0.0, None)


class LevelFunction:
    """``F(t) = || ( int_{-inf}^t |f|^{q_last} ds )^{1/q_last} ||^{q_1}`` over space.

    The field is rescaled to unit mixed norm, so ``F`` rises from 0 to 1.
    Inside a cell the inner integral is linear in ``t``, so ``F`` is
    continuous and is evaluated exactly at any time.  A relative jitter is
    added to ``|f|`` so that ``F`` keeps rising across cells where the field
    vanishes; where even that underflows, ``inverse`` returns the left end of
    the flat stretch.
    """

    def __init__(self, f: CellField, q: Sequence[float], jitter: float = 1e-12):
        self.q = _check_exponents(q, f.n)
        mag = np.abs(f.values)
        top = float(mag.max(initial=0.0))
        if top == 0.0:
            raise ValueError("level function of a zero field")
        mag = mag + jitter * top
        scale = mixed_norm_array(mag, source_spec(self.q), f.n, f.dx, f.widths)
        self.field = f
        self.scale = scale
        self.mag = mag / scale
        self.power = self.mag ** self.q[-1]
        w = f.widths.reshape((-1,) + (1,) * f.n)
        self.cumulative = np.concatenate([np.zeros((1,) + self.power.shape[1:]), np.cumsum(self.power * w, axis=0)])
        self.edge_values = np.array([self._from_mass(c) for c in self.cumulative])
        self.edge_values[0] = 0.0
        if np.any(np.diff(self.edge_values) < -1e-14):
            raise ValueError("level function is not monotone")
        # cells whose mass underflows leave flat stretches; preimages take their left end
        self.edge_values = np.maximum.accumulate(self.edge_values)

    def _from_mass(self, mass: np.ndarray) -> float:
        inner = mass ** (1.0 / self.q[-1])
        return _spatial_norm(inner, self.q[:-1], self.field.dx) ** self.q[0]

    def __call__(self, t: float) -> float:
        edges = self.field.t_edges
        if t <= edges[0]:
            return 0.0
        if t >= edges[-1]:
            return float(self.edge_values[-1])
        m = int(np.searchsorted(edges, t, side="right")) - 1
        return self._from_mass(self.cumulative[m] + (t - edges[m]) * self.power[m])

    def on_edges(self) -> np.ndarray:
        return self.edge_values.copy()

    def inverse(self, y: float) -> float:
        """Smallest ``t`` with ``F(t) = y`` (``y`` clipped to ``[0, 1]``)."""
        edges = self.field.t_edges
        if y <= 0.0:
            return float(edges[0])
        if y >= self.edge_values[-1]:
            return float(edges[-1])
        first = int(np.searchsorted(self.edge_values, y, side="left"))
        if self.edge_values[first] == y:
            return float(edges[first])
        m = first - 1
        lo, hi = edges[m], edges[m + 1]
        return float(brentq(lambda t: self(t) - y, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps))

    def preimage(self, a: float, b: float) -> tuple[float, float]:
        """Time interval ``F^{-1}([a, b))``."""
        return self.inverse(a), self.inverse(b)


def level_function(f: CellField | SpaceTimeField, q: Sequence[float], jitter: float = 1e-12) -> LevelFunction:
    if isinstance(f, SpaceTimeField):
        f = CellField.from_field(f)
    return LevelFunction(f, q, jitter)


def interval_exponent(q: Sequence[float]) -> float:
    """``min(q_2/(q_1 q_3), 1/q_1, 1/q_2, 1/q_3)`` for three exponents."""
    q1, q2, q3 = (float(v) for v in q)
    return min(q2 / (q1 * q3), 1 / q1, 1 / q2, 1 / q3)


def lemma_a2_ratio(F: LevelFunction, interval: tuple[float, float]) -> float:
    """``||chi_{F^-1(I)} f|| / |I|^e`` for the normalized field behind ``F``."""
    a, b = (float(v) for v in interval)
    if not 0.0 <= a < b <= 1.0:
        raise ValueError(f"interval must satisfy 0 <= a < b <= 1, got ({a}, {b})")
    if len(F.q) != 3:
        raise ValueError("the interval bound is stated for two space axes and time")
    t1, t2 = F.preimage(a, b)
    if t2 <= t1:
        return 0.0
    w = _overlap(F.field.t_edges, t1, t2)
    num = mixed_norm_array(F.mag, source_spec(F.q), F.field.n, F.field.dx, w)
    return num / (b - a) ** interval_exponent(F.q)


# ---------------------------------------------------------------- kernels


@dataclass(frozen=True)
class DiscreteKernelOperator:
    """``T f(t) = int K(t, t') f(t') dt'`` acting pointwise in space.

    ``matrix[m, m']`` is ``K`` at the midpoints of cells ``m`` and ``m'``;
    outputs are sampled at cell midpoints.  The restricted operator keeps
    only ``t' < t`` (lower-triangular mask, half a cell on the diagonal).
    """

    matrix: np.ndarray
    t_edges: np.ndarray

    @staticmethod
    def from_kernel(kernel: Callable[[np.ndarray, np.ndarray], np.ndarray], t_edges: np.ndarray) -> "DiscreteKernelOperator":
        edges = np.asarray(t_edges, dtype=float)
        mid = 0.5 * (edges[:-1] + edges[1:])
        mat = np.asarray(kernel(mid[:, None], mid[None, :]), dtype=complex)
        return DiscreteKernelOperator(np.broadcast_to(mat, (mid.size, mid.size)).copy(), edges)

    @property
    def causal_weights(self) -> np.ndarray:
        w = np.diff(self.t_edges)
        out = np.tril(np.ones_like(self.matrix, dtype=float), -1) * w[None, :]
        out[np.diag_indices_from(out)] = 0.5 * w
        return out

    def _apply(self, weights: np.ndarray, f: CellField) -> np.ndarray:
        if f.values.shape[0] != self.matrix.shape[0]:
            raise ValueError("field and kernel use different time cells")
        flat = f.values.reshape(f.values.shape[0], -1)
        return ((self.matrix * weights) @ flat).reshape(f.values.shape)

    def full(self, f: CellField) -> np.ndarray:
        return self._apply(np.broadcast_to(np.diff(self.t_edges), self.matrix.shape), f)

    def restricted(self, f: CellField) -> np.ndarray:
        return self._apply(self.causal_weights, f)

    def windowed(self, f: CellField, a: float, b: float) -> np.ndarray:
        """``T(chi_{(a, b)} f)`` sampled at the cell midpoints."""
        return self._apply(np.broadcast_to(_overlap(self.t_edges, a, b), self.matrix.shape), f)


@dataclass(frozen=True)
class Reconstruction:
    values: np.ndarray
    direct: np.ndarray
    defect: float
    depth: int


def restriction_via_whitney(
    op: DiscreteKernelOperator,
    f: CellField,
    q: Sequence[float],
    J_max: int,
    p: Sequence[float] | None = None,
    F: LevelFunction | None = None,
) -> Reconstruction:
    """``sum_{I~J} chi_{F^-1(J)} T(chi_{F^-1(I)} f)`` against the causal ``T_re f``.

    The field is normalized as in the level function.  Outputs live at the
    cell midpoints; the defect is measured in the mixed norm with exponents
    ``p`` (default ``q``) and midpoint weights.
    """
    F = level_function(f, q) if F is None else F
    g = f.replace(F.mag * np.exp(1j * np.angle(f.values)))
    pairs = whitney_decompose(J_max)
    partners: dict[DyadicInterval, list[DyadicInterval]] = {}
    for pair in pairs:
        partners.setdefault(pair.J, []).append(pair.I)
    levels = sorted({pair.level for pair in pairs})
    mids = f.midpoints
    y = np.array([F(t) for t in mids])
    cache: dict[DyadicInterval, np.ndarray] = {}
    widths = np.diff(f.t_edges)
    out = np.zeros(f.values.shape, dtype=complex)
    flat = g.values.reshape(g.values.shape[0], -1)
    for m, ym in enumerate(y):
        weights = np.zeros(widths.size)
        for level in levels:
            off = int(math.floor(ym * 2**level))
            if off >= 2**level:
                continue
            for I in partners.get(DyadicInterval(level, off), ()):
                if I not in cache:
                    cache[I] = _overlap(f.t_edges, *F.preimage(I.left, I.right))
                weights = weights + cache[I]
        out[m] = ((op.matrix[m] * weights) @ flat).reshape(f.values.shape[1:])
    direct = op.restricted(g)
    p = tuple(q) if p is None else tuple(p)
    p = _check_exponents(p, f.n)
    defect = mixed_norm_array(np.abs(out - direct), source_spec(p), f.n, f.dx, widths)
    return Reconstruction(out, direct, defect, J_max)


def well_restriction_condition(case: int, p: Sequence[float], q: Sequence[float]) -> bool:
    """Exponent hypotheses of the four restriction statements for ``R^3``."""
    p = tuple(float(v) for v in p)
    q1, q2, q3 = (float(v) for v in q)
    bound = max(q1, q2, q3, q1 * q3 / q2)
    if case in (1, 4):
        return min(p) > bound
    if case == 2:
        return p[0] > bound
    if case == 3:
        return q1 < min(p)
    raise ValueError(f"case must be 1..4, got {case}")


# ---------------------------------------------------------------- elementary inequalities


def b1_ratio(r: np.ndarray, s: np.ndarray, a: float, b: float) -> np.ndarray:
    """``(r^a - s^a) / ((r^b - s^b)(r^(a-b) + s^(a-b)))`` for ``a >= b > 0``, ``s < r``.

    The mean value theorem bounds it by ``a / b``.
    """
    if not a >= b > 0:
        raise ValueError("need a >= b > 0")
    return (r**a - s**a) / ((r**b - s**b) * (r ** (a - b) + s ** (a - b)))


def b2_slack(r: np.ndarray, s: np.ndarray, a: float, b: float) -> np.ndarray:
    """``(r^b - s^b)^(a/b) - (r^a - s^a)``, non-negative for ``0 < a <= b``."""
    if not 0 < a <= b:
        raise ValueError("need 0 < a <= b")
    return (r**b - s**b) ** (a / b) - (r**a - s**a)


# ---------------------------------------------------------------- ensembles


def random_cell_field(
    seed: int, cells: int = 32, points: int = 32, T: float = 1.0, L: float = 8.0, bumps: int = 3, floor: float = 0.0
) -> CellField:
    """Sum of Gaussian space-time bumps sampled at cell midpoints on ``[-T, T] x [-L/2, L/2)^2``.

    ``floor`` adds a time-independent Gaussian profile, which keeps the
    level function's slope bounded below.  The underlying continuous
    function depends only on ``seed``, so grids of different resolution see
    the same field.
    """
    rng = np.random.default_rng(seed)
    edges = np.linspace(-T, T, cells + 1)
    tm = 0.5 * (edges[:-1] + edges[1:])
    dx = L / points
    x = -L / 2 + dx * (np.arange(points) + 0.5)
    t3, x1, x2 = np.meshgrid(tm, x, x, indexing="ij")
    vals = np.zeros(t3.shape, dtype=complex)
    for _ in range(bumps):
        c = rng.uniform([-0.6 * T, -L / 4, -L / 4], [0.6 * T, L / 4, L / 4])
        w = rng.uniform([0.1 * T, 0.4, 0.4], [0.4 * T, 1.2, 1.2])
        amp = rng.normal() + 1j * rng.normal()
        vals += amp * np.exp(-(((t3 - c[0]) / w[0]) ** 2 + ((x1 - c[1]) / w[1]) ** 2 + ((x2 - c[2]) / w[2]) ** 2))
    if floor:
        vals += floor * np.exp(-(x1**2 + x2**2) / 2)
    return CellField(vals, edges, dx)


def smooth_kernel(t: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Reference kernel ``cos(t - s) exp(-(t - s)^2)``."""
    d = t - s
    return np.cos(d) * np.exp(-(d**2))


def lemma_a2_sweep(
    samples: int = 100, q: Sequence[float] = (4, 2, 2), seed: int = 0, cells: int = 32, points: int = 32
) -> np.ndarray:
    """Ratios over random fields and random subintervals of ``[0, 1]``."""
    out = np.empty(samples)
    for i in range(samples):
        f = random_cell_field(seed * 1_000_000 + i, cells, points)
        F = level_function(f, q)
        rng = np.random.default_rng([seed, i, 7])
        a, b = np.sort(rng.uniform(0.0, 1.0, 2))
        out[i] = lemma_a2_ratio(F, (a, b))
    return out


def defect_decay(
    depths: Sequence[int] = (8, 9, 10, 11, 12),
    q: Sequence[float] = (2, 2, 2),
    seed: int = 0,
    cells: int = 64,
    points: int = 16,
    floor: float = 0.3,
) -> list[tuple[int, float]]:
    """Reconstruction defect for the reference kernel at each depth.

    The missing diagonal strip has ``F``-measure of order ``2^-J``; its time
    length is that divided by the slope of ``F``, hence the default floor.
    """
    f = random_cell_field(seed, cells, points, floor=floor)
    op = DiscreteKernelOperator.from_kernel(smooth_kernel, f.t_edges)
    F = level_function(f, q)
    return [(int(d), restriction_via_whitney(op, f, q, int(d), F=F).defect) for d in depths]
