"""Discrete space-time domain, unitary Fourier transforms and test ensembles.

Whole space is modelled by a periodic torus of side ``L = 2*pi/dxi`` with
``N`` nodes per axis, and the time line by the window ``[-T, T]`` sampled at
``Nt + 1`` equispaced nodes (``Nt`` even, so ``t = 0`` is always a node).

Frequency nodes sit at ``xi = c + dxi*m`` with ``m`` in ``[-N/2, N/2)`` where
``c`` is an integer *window centre* (zero by default).  A non-zero centre
lets a modest grid host a single high-frequency box: physical samples then
carry the exact carrier ``exp(i c.x)`` and every multiplier sees the true
absolute frequency.

Frequency samples approximate the continuous unitary transform
``(2*pi)^(-n/2) * integral f(x) exp(-i x.xi) dx``; with Riemann weights
``(L/N)^n`` in space and ``dxi^n`` in frequency the discrete Plancherel
identity is exact.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
import scipy.fft as sfft

Kind = Literal["spatial", "spacetime"]


def fft_workers() -> int:
    """Worker count for FFTs, capped by the ``UNIDEC_THREADS`` variable."""
    raw = os.environ.get("UNIDEC_THREADS", "")
    cap = os.cpu_count() or 1
    if raw.strip():
        try:
            return max(1, min(int(raw), cap))
        except ValueError:
            return 1
    return cap


def _is_power_of_two(value: int) -> bool:
    return value > 0 and (value & (value - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Validated torus-times-window discretization.

    Attributes:
        n: Spatial dimension (1 to 3).
        N: Nodes per spatial axis (power of two).
        r: Frequency refinement; ``dxi = 2**-r``.
        T: Half-width of the time window.
        Nt: Number of time panels (even); there are ``Nt + 1`` time nodes.
        eps: Signature of the principal part, entries in ``{+1, -1}``.
        center: Integer frequency-window centre per axis.
    """

    n: int
    N: int
    r: int
    T: float
    Nt: int
    eps: tuple[int, ...]
    center: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.n not in (1, 2, 3):
            raise ValueError(f"n must be 1, 2 or 3, got {self.n}")
        if not _is_power_of_two(self.N):
            raise ValueError(f"N must be a power of two, got {self.N}")
        if self.r < 2:
            raise ValueError(f"r must be >= 2, got {self.r}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if self.Nt < 2 or self.Nt % 2:
            raise ValueError(f"Nt must be an even integer >= 2, got {self.Nt}")
        eps = tuple(int(e) for e in self.eps)
        if len(eps) != self.n or any(e not in (1, -1) for e in eps):
            raise ValueError(f"eps must hold n entries in {{+1,-1}}, got {self.eps}")
        object.__setattr__(self, "eps", eps)
        center = tuple(int(c) for c in self.center) if self.center else (0,) * self.n
        if len(center) != self.n:
            raise ValueError("center must have n entries")
        object.__setattr__(self, "center", center)

    @property
    def dxi(self) -> float:
        return 2.0 ** (-self.r)

    @property
    def L(self) -> float:
        return 2.0 * math.pi / self.dxi

    @property
    def dx(self) -> float:
        return self.L / self.N

    @property
    def dt(self) -> float:
        return 2.0 * self.T / self.Nt

    @property
    def half_band(self) -> float:
        """Largest |xi_i - c_i| representable on the window."""
        return self.dxi * self.N / 2

    @property
    def elliptic(self) -> bool:
        return all(e == 1 for e in self.eps)

    @property
    def times(self) -> np.ndarray:
        return (np.arange(self.Nt + 1) - self.Nt // 2) * self.dt

    @property
    def zero_index(self) -> int:
        return self.Nt // 2

    def time_index(self, t: float) -> int:
        """Index of the node equal to ``t`` (raises if ``t`` is not a node)."""
        m = round(t / self.dt) + self.zero_index
        if not 0 <= m <= self.Nt or abs(self.times[m] - t) > 1e-9 * max(1.0, self.T):
            raise ValueError(f"t={t} is not a node of the time grid")
        return m

    @property
    def time_weights(self) -> np.ndarray:
        """Trapezoid weights on the time nodes."""
        w = np.full(self.Nt + 1, self.dt)
        w[0] = w[-1] = self.dt / 2
        return w

    def x_axis(self) -> np.ndarray:
        return self.dx * np.arange(self.N)

    def xi_axis(self, axis: int) -> np.ndarray:
        """Absolute frequency nodes of one axis, in FFT storage order."""
        m = sfft.fftfreq(self.N, d=1.0 / self.N)
        return self.center[axis] + self.dxi * m

    def xi_mesh(self) -> list[np.ndarray]:
        """Broadcastable frequency coordinates (one array per spatial axis)."""
        out = []
        for axis in range(self.n):
            shape = [1] * self.n
            shape[axis] = self.N
            out.append(self.xi_axis(axis).reshape(shape))
        return out

    def x_mesh(self) -> list[np.ndarray]:
        out = []
        for axis in range(self.n):
            shape = [1] * self.n
            shape[axis] = self.N
            out.append(self.x_axis().reshape(shape))
        return out

    def dispersion(self) -> np.ndarray:
        """Symbol ``sum_j eps_j xi_j**2`` on the frequency nodes."""
        total = np.zeros((1,) * self.n)
        for e, xi in zip(self.eps, self.xi_mesh()):
            total = total + e * xi**2
        return total

    def spatial_shape(self) -> tuple[int, ...]:
        return (self.N,) * self.n

    def shape(self, kind: Kind) -> tuple[int, ...]:
        if kind == "spatial":
            return self.spatial_shape()
        return (self.Nt + 1,) + self.spatial_shape()

    def with_center(self, center: Sequence[int]) -> "Grid":
        return Grid(self.n, self.N, self.r, self.T, self.Nt, self.eps, tuple(center))

    def refined(self) -> "Grid":
        """Grid with N, Nt and T all doubled (same dxi and centre)."""
        return Grid(self.n, 2 * self.N, self.r, 2 * self.T, 2 * self.Nt, self.eps, self.center)

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "N": self.N,
            "r": self.r,
            "T": self.T,
            "Nt": self.Nt,
            "eps": list(self.eps),
            "center": list(self.center),
        }


def make_grid(
    n: int = 2,
    N: int = 128,
    r: int = 3,
    T: float = 4.0,
    Nt: int = 64,
    eps: Sequence[int] | None = None,
    center: Sequence[int] | None = None,
) -> Grid:
    """Build a validated grid; ``eps`` defaults to the elliptic signature."""
    eps = tuple(eps) if eps is not None else (1,) * n
    return Grid(n, N, r, float(T), Nt, eps, tuple(center) if center is not None else ())


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """Complex samples on a grid.

    ``freq_axes`` lists the spatial axes currently held in frequency
    representation; the empty tuple means physical, all axes means frequency.
    Values are read-only; operations return new fields.
    """

    grid: Grid
    values: np.ndarray
    kind: Kind = "spatial"
    freq_axes: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.complex128, copy=True)
        expected = self.grid.shape(self.kind)
        if values.shape != expected:
            raise ValueError(f"values shape {values.shape} != expected {expected}")
        axes = tuple(sorted(set(int(a) for a in self.freq_axes)))
        if any(a < 0 or a >= self.grid.n for a in axes):
            raise ValueError(f"frequency axes {self.freq_axes} out of range")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "freq_axes", axes)

    @property
    def rep(self) -> str:
        if not self.freq_axes:
            return "physical"
        if len(self.freq_axes) == self.grid.n:
            return "frequency"
        return "partial"

    @property
    def offset(self) -> int:
        """Array-axis offset of spatial axis 0 (1 for space-time fields)."""
        return 1 if self.kind == "spacetime" else 0

    def replace(self, values: np.ndarray, freq_axes: tuple[int, ...] | None = None) -> "SpaceTimeField":
        axes = self.freq_axes if freq_axes is None else freq_axes
        return SpaceTimeField(self.grid, values, self.kind, axes)

    def to_frequency(self) -> "SpaceTimeField":
        return fourier_forward(self)

    def to_physical(self) -> "SpaceTimeField":
        return fourier_inverse(self)

    def l2_norm(self) -> float:
        """L2 norm over all sampled coordinates (time weighted by trapezoid)."""
        g = self.grid
        w_space = g.dxi**g.n if self.rep == "frequency" else g.dx**g.n
        if self.rep == "partial":
            w_space = g.dxi ** len(self.freq_axes) * g.dx ** (g.n - len(self.freq_axes))
        sq = np.abs(self.values) ** 2
        if self.kind == "spacetime":
            spatial_axes = tuple(range(1, g.n + 1))
            per_t = sq.sum(axis=spatial_axes) * w_space
            return float(np.sqrt(np.dot(per_t, g.time_weights)))
        return float(np.sqrt(sq.sum() * w_space))

    def slice_at(self, m: int) -> "SpaceTimeField":
        if self.kind != "spacetime":
            raise ValueError("slice_at needs a space-time field")
        return SpaceTimeField(self.grid, self.values[m], "spatial", self.freq_axes)

    def __add__(self, other: "SpaceTimeField") -> "SpaceTimeField":
        _check_compatible(self, other)
        return self.replace(self.values + other.values)

    def __sub__(self, other: "SpaceTimeField") -> "SpaceTimeField":
        _check_compatible(self, other)
        return self.replace(self.values - other.values)

    def __mul__(self, scalar: complex) -> "SpaceTimeField":
        return self.replace(self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "SpaceTimeField":
        return self.replace(-self.values)


def _check_compatible(a: SpaceTimeField, b: SpaceTimeField) -> None:
    if a.grid != b.grid or a.kind != b.kind or a.freq_axes != b.freq_axes:
        raise ValueError("fields live on different grids or representations")


def zeros(grid: Grid, kind: Kind = "spatial", rep: str = "physical") -> SpaceTimeField:
    axes = tuple(range(grid.n)) if rep == "frequency" else ()
    return SpaceTimeField(grid, np.zeros(grid.shape(kind)), kind, axes)


def _axis_scale(grid: Grid) -> float:
    return math.sqrt(grid.dx / grid.dxi)


def _carrier(grid: Grid, axis: int, sign: int) -> np.ndarray | None:
    c = grid.center[axis]
    if c == 0:
        return None
    return np.exp(sign * 1j * c * grid.x_axis())


def _apply_carrier(values: np.ndarray, grid: Grid, axis: int, array_axis: int, sign: int) -> np.ndarray:
    carrier = _carrier(grid, axis, sign)
    if carrier is None:
        return values
    shape = [1] * values.ndim
    shape[array_axis] = grid.N
    return values * carrier.reshape(shape)


def _resolve_axes(field: SpaceTimeField, axes: Sequence[int] | None) -> tuple[int, ...]:
    if axes is None:
        return tuple(range(field.grid.n))
    axes = tuple(int(a) for a in axes)
    for a in axes:
        if a < 0 or a >= field.grid.n:
            raise ValueError(f"axis {a} out of range for n={field.grid.n}")
    return axes


def fourier_forward(field: SpaceTimeField, axes: Sequence[int] | None = None) -> SpaceTimeField:
    """Unitary transform over the given spatial axes (default: all)."""
    axes = _resolve_axes(field, axes)
    todo = [a for a in axes if a not in field.freq_axes]
    if not todo:
        return field
    g = field.grid
    vals = field.values
    for a in todo:
        vals = _apply_carrier(vals, g, a, a + field.offset, -1)
    arr_axes = [a + field.offset for a in todo]
    out = sfft.fftn(vals, axes=arr_axes, norm="ortho", workers=fft_workers())
    out *= _axis_scale(g) ** len(todo)
    return field.replace(out, tuple(set(field.freq_axes) | set(todo)))


def fourier_inverse(field: SpaceTimeField, axes: Sequence[int] | None = None) -> SpaceTimeField:
    """Inverse of :func:`fourier_forward` over the given axes (default: all)."""
    axes = _resolve_axes(field, axes)
    todo = [a for a in axes if a in field.freq_axes]
    if not todo:
        return field
    g = field.grid
    arr_axes = [a + field.offset for a in todo]
    out = sfft.ifftn(field.values, axes=arr_axes, norm="ortho", workers=fft_workers())
    out /= _axis_scale(g) ** len(todo)
    for a in todo:
        out = _apply_carrier(out, g, a, a + field.offset, +1)
    return field.replace(out, tuple(set(field.freq_axes) - set(todo)))


# ---------------------------------------------------------------- ensembles


def smooth_plateau(s: np.ndarray, inner: float, outer: float) -> np.ndarray:
    """Smooth radial step: 1 for ``|s| <= inner``, 0 for ``|s| >= outer``.

    Built from ``h(x) = exp(-1/x)``; values below 1e-300 are clamped to 0 so
    supports are exact on the grid.
    """
    s = np.abs(np.asarray(s, dtype=float))
    a = np.clip((outer - s) / (outer - inner), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        ha = np.where(a > 0, np.exp(-1.0 / np.where(a > 0, a, 1.0)), 0.0)
        hb = np.where(a < 1, np.exp(-1.0 / np.where(a < 1, 1.0 - a, 1.0)), 0.0)
        out = ha / (ha + hb)
    out = np.where(a >= 1.0, 1.0, out)
    out = np.where(a <= 0.0, 0.0, out)
    out[out < 1e-300] = 0.0
    return out


@dataclass(frozen=True)
class CubeSupport:
    """Nodes with ``|xi_i - k_i| < halfwidth`` on every axis.

    The default half-width 1 matches the support of a tensor box multiplier
    and lies inside the ball ``B(k, sqrt(n))``.
    """

    k: tuple[int, ...]
    halfwidth: float = 1.0

    def mask(self, grid: Grid) -> np.ndarray:
        if len(self.k) != grid.n:
            raise ValueError("cube index has wrong dimension")
        m = np.ones(grid.spatial_shape(), dtype=bool)
        for xi, ki in zip(grid.xi_mesh(), self.k):
            m = m & (np.abs(xi - ki) < self.halfwidth - 1e-12)
        return m

    def window(self, grid: Grid) -> np.ndarray:
        w = np.ones((1,) * grid.n)
        for xi, ki in zip(grid.xi_mesh(), self.k):
            w = w * smooth_plateau((xi - ki) / self.halfwidth, 0.5, 1.0)
        return w

    def fits(self, grid: Grid) -> bool:
        return all(abs(ki - ci) + self.halfwidth <= grid.half_band for ki, ci in zip(self.k, grid.center))

    def label(self) -> str:
        return "cube(" + ",".join(str(v) for v in self.k) + ")"


@dataclass(frozen=True)
class BallSupport:
    """Nodes with ``|xi|_inf <= K``."""

    K: float

    def mask(self, grid: Grid) -> np.ndarray:
        m = np.ones(grid.spatial_shape(), dtype=bool)
        for xi in grid.xi_mesh():
            m = m & (np.abs(xi) <= self.K + 1e-12)
        return m

    def window(self, grid: Grid) -> np.ndarray:
        inner = self.K - 1.0 if self.K >= 2 else self.K / 2
        w = np.ones((1,) * grid.n)
        for xi in grid.xi_mesh():
            w = w * smooth_plateau(xi, inner, self.K)
        return w

    def fits(self, grid: Grid) -> bool:
        return all(abs(c) + self.K < grid.half_band for c in grid.center)

    def label(self) -> str:
        return f"ball({self.K:g})"


Support = CubeSupport | BallSupport


def _support_nodes(grid: Grid, support: Support) -> tuple[np.ndarray, np.ndarray]:
    """Flat indices of supported nodes, ordered by absolute frequency.

    Ordering by absolute frequency (not storage position) makes the random
    draw independent of N, so refined grids see the same function.
    """
    mask = support.mask(grid)
    flat = np.flatnonzero(mask.ravel())
    coords = [np.broadcast_to(xi, grid.spatial_shape()).ravel()[flat] for xi in grid.xi_mesh()]
    order = np.lexsort(tuple(reversed(coords)))
    return flat[order], mask


def random_band_limited(
    grid: Grid,
    support: Support,
    seed: int,
    profile: Literal["white", "packet"] = "white",
    n_bumps: int = 3,
    spread: float = 2.0,
) -> SpaceTimeField:
    """Seeded band-limited spatial field with unit L2 norm.

    ``profile="white"`` draws independent complex Gaussians on every
    supported node.  ``profile="packet"`` draws a few localized bumps
    (random positions within ``[-spread, spread]^n`` and random complex
    amplitudes) shaped by a smooth window vanishing on the support boundary,
    so the field is concentrated near the origin like a whole-space wave
    packet.  Both profiles have exactly zero coefficients off the support.
    """
    if not support.fits(grid):
        raise ValueError(f"support {support.label()} exceeds the frequency window")
    rng = np.random.default_rng(seed)
    flat, mask = _support_nodes(grid, support)
    if flat.size == 0:
        raise ValueError("support contains no frequency nodes")
    coef = np.zeros(grid.spatial_shape(), dtype=np.complex128)
    if profile == "white":
        draws = rng.standard_normal(flat.size) + 1j * rng.standard_normal(flat.size)
        coef.ravel()[flat] = draws
    elif profile == "packet":
        amps = rng.standard_normal(n_bumps) + 1j * rng.standard_normal(n_bumps)
        centres = rng.uniform(-spread, spread, size=(n_bumps, grid.n))
        xi = grid.xi_mesh()
        acc = np.zeros(grid.spatial_shape(), dtype=np.complex128)
        for a, y in zip(amps, centres):
            phase = np.zeros((1,) * grid.n)
            for xa, ya in zip(xi, y):
                phase = phase + xa * ya
            acc = acc + a * np.exp(-1j * phase)
        coef = np.where(mask, acc * support.window(grid), 0.0)
    else:
        raise ValueError(f"unknown profile {profile!r}")
    fld = SpaceTimeField(grid, coef, "spatial", tuple(range(grid.n)))
    norm = fld.l2_norm()
    if norm == 0:
        raise ValueError("support window vanishes on every node")
    return fourier_inverse(fld * (1.0 / norm))


# ---------------------------------------------------------------- snapshots

_MAGIC = b"UDF1"
_HEADER = struct.Struct("<4siiiiBB")
_KINDS = {"spatial": 0, "spacetime": 1}
_REPS = {"physical": 0, "frequency": 1}


def write_snapshot(field: SpaceTimeField, path: str | Path) -> Path:
    """Write a little-endian ``.udf`` snapshot (complex64, t outermost)."""
    if field.rep == "partial":
        field = fourier_inverse(field)
    g = field.grid
    header = _HEADER.pack(_MAGIC, g.n, g.N, g.Nt, g.r, _KINDS[field.kind], _REPS[field.rep])
    path = Path(path)
    data = np.ascontiguousarray(field.values, dtype="<c8")
    with path.open("wb") as fh:
        fh.write(header)
        fh.write(data.tobytes(order="C"))
    return path


def read_snapshot_header(path: str | Path) -> dict:
    with Path(path).open("rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise ValueError("truncated snapshot header")
    magic, n, N, Nt, r, kind, rep = _HEADER.unpack(raw)
    if magic != _MAGIC:
        raise ValueError(f"bad snapshot magic {magic!r}")
    kinds = {v: k for k, v in _KINDS.items()}
    reps = {v: k for k, v in _REPS.items()}
    if kind not in kinds or rep not in reps:
        raise ValueError("bad snapshot kind or representation code")
    return {"n": n, "N": N, "Nt": Nt, "r": r, "kind": kinds[kind], "rep": reps[rep]}


def read_snapshot(
    path: str | Path,
    T: float = 4.0,
    eps: Sequence[int] | None = None,
    center: Sequence[int] | None = None,
) -> SpaceTimeField:
    """Load a snapshot; ``T``, ``eps`` and ``center`` are not stored in the header."""
    head = read_snapshot_header(path)
    grid = make_grid(head["n"], head["N"], head["r"], T, head["Nt"], eps, center)
    count = int(np.prod(grid.shape(head["kind"])))
    with Path(path).open("rb") as fh:
        fh.seek(_HEADER.size)
        data = np.frombuffer(fh.read(), dtype="<c8")
    if data.size != count:
        raise ValueError(f"snapshot holds {data.size} values, expected {count}")
    axes = tuple(range(grid.n)) if head["rep"] == "frequency" else ()
    return SpaceTimeField(grid, data.reshape(grid.shape(head["kind"])).astype(np.complex128), head["kind"], axes)


def lp_norm(field: SpaceTimeField, p: float) -> float:
    """Riemann-weighted L^p norm of a physical spatial field."""
    if p < 1:
        raise ValueError(f"exponent must be >= 1, got {p}")
    if field.kind != "spatial":
        raise ValueError("lp_norm takes a spatial field")
    vals = np.abs(fourier_inverse(field).values)
    if math.isinf(p):
        return float(vals.max())
    top = vals.max()
    if top == 0:
        return 0.0
    w = field.grid.dx**field.grid.n
    return float(top * (np.sum((vals / top) ** p) * w) ** (1.0 / p))
