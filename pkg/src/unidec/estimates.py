"""Executable catalog of linear estimates with ensemble ratio sweeps.

Every entry compares a left-hand pipeline (built from box multipliers,
partial derivatives, Riesz potentials, the free flow and Duhamel integrals)
with a right-hand norm of the datum.  A report holds the raw ratios
``lhs/rhs``, the ratios normalized by the expected power of ``<k>`` and a
log-log fit of the per-box geometric mean against the relevant bracket.

All pipelines run in frequency space and return to physical space only to
evaluate a norm.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Literal, Sequence

import numpy as np
import scipy.fft as sfft
from scipy import stats

from .decomp import AngularProjector, DecompFamily, build_family, eta
from .grid import (
    BallSupport,
    CubeSupport,
    Grid,
    SpaceTimeField,
    fft_workers,
    fourier_forward,
    fourier_inverse,
    make_grid,
    random_band_limited,
)
from .norms import MixedNormSpec, bracket, mixed_norm_array
from .propagator import duhamel

INF = math.inf


# ---------------------------------------------------------------- frequency-space helpers


def _axis_sym(grid: Grid, axis: int, values: np.ndarray) -> np.ndarray:
    shape = [1] * grid.n
    shape[axis] = grid.N
    return values.reshape(shape)


def d_sym(grid: Grid, axis: int, order: int = 1) -> np.ndarray:
    return _axis_sym(grid, axis, (1j * grid.xi_axis(axis)) ** order)


def riesz_sym(grid: Grid, axis: int, order: float) -> np.ndarray:
    xi = np.abs(grid.xi_axis(axis))
    if order >= 0:
        return _axis_sym(grid, axis, xi**order)
    safe = np.where(xi == 0, 1.0, xi)
    return _axis_sym(grid, axis, np.where(xi == 0, 0.0, safe**order))


def inv_d_sym(grid: Grid, axis: int) -> np.ndarray:
    xi = grid.xi_axis(axis)
    safe = np.where(xi == 0, 1.0, xi)
    return _axis_sym(grid, axis, np.where(xi == 0, 0.0, 1.0 / (1j * safe)))


def zero_plane_mass(grid: Grid, fhat: np.ndarray, axis: int) -> bool:
    """True when ``fhat`` has non-negligible mass on the plane ``xi_axis = 0``."""
    xi = grid.xi_axis(axis)
    if not (xi == 0).any():
        return False
    off = fhat.ndim - grid.n
    idx = [slice(None)] * fhat.ndim
    idx[axis + off] = np.flatnonzero(xi == 0)[0]
    top = float(np.abs(fhat).max(initial=0.0))
    return float(np.abs(fhat[tuple(idx)]).max(initial=0.0)) > 1e-12 * max(top, 1e-300)


def to_physical(grid: Grid, fhat: np.ndarray) -> np.ndarray:
    kind = "spacetime" if fhat.ndim == grid.n + 1 else "spatial"
    fld = SpaceTimeField(grid, fhat, kind, tuple(range(grid.n)))
    return fourier_inverse(fld).values


def norm_hat(grid: Grid, fhat: np.ndarray, spec: MixedNormSpec | Sequence[MixedNormSpec]) -> float:
    """Mixed norm (or sum of mixed norms) of the field with spectrum ``fhat``."""
    vals = np.abs(to_physical(grid, fhat))
    tw = grid.time_weights if fhat.ndim == grid.n + 1 else None
    specs = [spec] if isinstance(spec, MixedNormSpec) else list(spec)
    return float(sum(mixed_norm_array(vals, sp, grid.n, grid.dx, tw) for sp in specs))


def l2_hat(grid: Grid, fhat: np.ndarray) -> float:
    return float(np.sqrt((np.abs(fhat) ** 2).sum() * grid.dxi**grid.n))


def trajectory_hat(grid: Grid, u0hat: np.ndarray) -> np.ndarray:
    t = grid.times.reshape((-1,) + (1,) * grid.n)
    return np.exp(1j * t * grid.dispersion()) * u0hat[None]


def duhamel_hat(grid: Grid, fhat: np.ndarray) -> np.ndarray:
    fld = SpaceTimeField(grid, fhat, "spacetime", tuple(range(grid.n)))
    return duhamel(fld, rep="frequency").values


def whole_line_hat(grid: Grid, fhat: np.ndarray) -> np.ndarray:
    """Spectrum of ``int S(-tau) f(tau) dtau`` over the window."""
    w = grid.time_weights.reshape((-1,) + (1,) * grid.n)
    t = grid.times.reshape((-1,) + (1,) * grid.n)
    return np.sum(w * np.exp(-1j * t * grid.dispersion()) * fhat, axis=0)


def maximal_norm_streaming(grid: Grid, u0hat: np.ndarray, axis: int, q: float) -> float:
    """``||S(t) u0||_{L^q_{x_axis} L^inf_{other x} L^inf_t}`` without storing the trajectory."""
    phi = grid.dispersion()
    scale = (grid.dxi**2 / (2 * math.pi)) ** (grid.n / 2) * grid.N**grid.n
    others = tuple(a for a in range(grid.n) if a != axis)
    best = np.zeros(grid.N)
    for t in grid.times:
        vals = sfft.ifftn(np.exp(1j * t * phi) * u0hat, norm="backward", workers=fft_workers())
        mod = np.abs(vals) * scale
        best = np.maximum(best, mod.max(axis=others) if others else mod)
    if math.isinf(q):
        return float(best.max())
    top = best.max()
    if top == 0:
        return 0.0
    return float(top * (np.sum((best / top) ** q) * grid.dx) ** (1 / q))


# ---------------------------------------------------------------- ensembles


def forcing_hat(
    grid: Grid,
    support,
    seed: int,
    terms: int = 3,
    width: float = 0.35,
    centre_spread: float = 0.75,
    freq_spread: float = 2.0,
) -> np.ndarray:
    """Spectrum of ``f(t,x) = sum_j a_j(t) g_j(x)`` with smooth time envelopes.

    ``a_j(t) = exp(-(t-s_j)^2 / 2 width^2) exp(i w_j t)``; the envelopes are
    negligible at the window edges, so refining (N, Nt, T) samples the same
    function.
    """
    rng = np.random.default_rng(seed)
    s = rng.uniform(-centre_spread, centre_spread, terms)
    w = rng.uniform(-freq_spread, freq_spread, terms)
    amp = rng.standard_normal(terms) + 1j * rng.standard_normal(terms)
    t = grid.times
    out = np.zeros(grid.shape("spacetime"), dtype=np.complex128)
    for j in range(terms):
        g = random_band_limited(grid, support, int(rng.integers(2**31)), "packet").to_frequency().values
        a = amp[j] * np.exp(-((t - s[j]) ** 2) / (2 * width**2)) * np.exp(1j * w[j] * t)
        out += a.reshape((-1,) + (1,) * grid.n) * g[None]
    return out


def datum_hat(grid: Grid, support, seed: int, kind: str) -> np.ndarray:
    if kind == "initial":
        return random_band_limited(grid, support, seed, "packet").to_frequency().values
    return forcing_hat(grid, support, seed)


# ---------------------------------------------------------------- catalog


@dataclass(frozen=True)
class EstimateSpec:
    """One inequality: pipeline id, parameters and expected growth in k.

    ``power(k)`` is the factor divided out of each raw ratio; ``fit_axis``
    picks the bracket ``<k_axis>`` (``None``: ``<k>``) used as the fit
    abscissa; ``expected_slope`` is the exponent a fit should recover.
    """

    id: str
    variant: str
    params: dict
    lhs: str
    rhs: str
    datum: Literal["initial", "forcing"]
    localized: bool
    power_label: str
    fit_axis: int | None
    expected_slope: float
    summed: bool = False

    @property
    def name(self) -> str:
        return self.id if not self.variant else f"{self.id}.{self.variant}"

    def power(self, k: Sequence[int]) -> float:
        return _POWERS[self.id](self, tuple(k))


def _dual(p: float) -> float:
    if math.isinf(p):
        return 1.0
    if p == 1:
        return INF
    return p / (p - 1)


def gamma_of(r: float, n: int) -> float:
    """Admissible time exponent ``gamma(r)`` with ``2/gamma = n(1/2 - 1/r)``."""
    val = n * (0.5 - 1.0 / r)
    return INF if val == 0 else 2.0 / val


def _br(k: Sequence[int], axis: int | None) -> float:
    return bracket(k) if axis is None else 1.0 + abs(k[axis])


def _power_max(spec, k):
    return _br(k, spec.params["i"]) ** (1 / spec.params["q"])


def _power_one(spec, k):
    return 1.0


def _power_sm1(spec, k):
    return _br(k, spec.params["i"]) ** 0.5 if spec.variant == "b" else 1.0


def _power_smmax(spec, k):
    return _br(k, spec.params["i"]) ** (0.5 + 1 / spec.params["q"])


def _power_stsm(spec, k):
    i = spec.params["i"]
    v = spec.variant
    if v in ("3", "4", "c4"):
        return _br(k, i) ** 0.5
    if v == "6":
        return _br(k, i) ** (spec.params["alpha"] + 1 / spec.params["q"])
    if v == "c3":
        return _br(k, i) ** (1 / spec.params["q"])
    return 1.0


def _power_int1(spec, k):
    i, q = spec.params["i"], spec.params["q"]
    v = spec.variant
    if v == "2":
        return _br(k, i) ** 0.5 * _br(k, 0) ** (1 / q)
    if v == "2a":
        return _br(k, i) * _br(k, 0) ** (1 / q)
    return 1.0


def _power_kmax1(spec, k):
    kmax = max(abs(v) for v in k)
    return (1.0 + kmax) ** (1 + 1 / spec.params["q"])


_POWERS: dict[str, Callable] = {
    "GSE1": _power_one,
    "GSE2": _power_one,
    "GSE3": _power_one,
    "STRI": _power_one,
    "MAX": _power_max,
    "MAXD": _power_max,
    "SM1": _power_sm1,
    "SMMAX": _power_smmax,
    "STSM": _power_stsm,
    "INT1": _power_int1,
    "INT2": _power_one,
    "KMAX1": _power_kmax1,
    "KMAX2": _power_one,
}

CATALOG = tuple(_POWERS) + ("ORTH",)


def make_spec(id: str, variant: str = "", **params) -> EstimateSpec:
    """Build and validate a catalog entry.

    Common parameters: ``n`` (default 2), ``i`` (distinguished axis, 0-based),
    ``q`` (maximal-function exponent), ``r`` (Strichartz space exponent; the
    time exponent defaults to the admissible ``gamma(r)``, bumped above 2),
    ``sigma`` and ``alpha``.
    """
    n = int(params.setdefault("n", 2))
    i = int(params.setdefault("i", 0))
    if not 0 <= i < n:
        raise ValueError(f"axis i={i} out of range for n={n}")
    if id not in _POWERS:
        raise ValueError(f"unknown estimate id {id!r}")

    def need_q(strict_two: bool = False, allow_inf: bool = True):
        q = float(params.setdefault("q", 4.0))
        if not q > 4.0 / n or q < 2 or (strict_two and q <= 2) or (math.isinf(q) and not allow_inf):
            raise ValueError(f"q={q} outside the validity range for {id} (need q>4/n, q>=2{', q>2' if strict_two else ''})")
        return q

    def need_stri(strict: bool = False):
        r = float(params.setdefault("r", 4.0))
        if not 2 <= r < INF:
            raise ValueError(f"r={r} outside [2, inf)")
        g0 = gamma_of(r, n)
        gamma = float(params.setdefault("gamma", max(g0, 2.0) * (1.0 + 1e-9 if strict else 1.0)))
        if gamma < max(g0, 2.0) or (strict and gamma <= max(g0, 2.0)):
            raise ValueError(f"gamma={gamma} not admissible for r={r} (gamma(r)={g0:g})")
        return gamma, r

    lhs = rhs = ""
    datum = "forcing"
    localized = True
    fit_axis: int | None = i
    slope = 0.0
    summed = False
    label = "1"
    if id == "GSE1":
        lhs, rhs, localized = "||d_i A f||_{L^inf_{x_i} L^2 L^2_t}", "||f||_{L^1_{x_i} L^2 L^2_t}", False
    elif id == "GSE2":
        lhs, rhs, localized, datum = "||D^1/2_i S(t) u0||_{L^inf_{x_i} L^2 L^2_t}", "||u0||_2", False, "initial"
    elif id == "GSE3":
        lhs, rhs, localized = "||d_i A f||_{L^inf_t L^2_x}", "||D^1/2_i f||_{L^1_{x_i} L^2 L^2_t}", False
    elif id == "STRI":
        gamma, r = need_stri()
        params["gamma"] = max(gamma, 2.0)
        variant = variant or "S"
        if variant not in ("S", "A"):
            raise ValueError("STRI variants: S, A")
        localized = False
        if variant == "S":
            datum = "initial"
            lhs, rhs = "sum_k ||box_k S(t) phi||_{L^gamma_t L^p_x}", "||phi||_{M_{2,1}}"
        else:
            lhs, rhs = "sum_k ||box_k A f||_{L^gamma L^p cap L^inf L^2}", "sum_k ||box_k f||_{L^gamma' L^p'}"
    elif id == "MAX":
        q = need_q()
        datum = "initial"
        lhs, rhs = "||box_k S(t) u0||_{L^q_{x_i} L^inf L^inf_t}", "||box_k u0||_2"
        label, slope = f"<k_i>^{1/q:g}", 1 / q
    elif id == "MAXD":
        q = need_q()
        lhs, rhs = "||box_k int S(t-tau) f||_{L^inf_t L^2}", "||box_k f||_{L^q'_{x_i} L^1 L^1_t}"
        label, slope = f"<k_i>^{1/q:g}", 1 / q
    elif id == "SM1":
        variant = variant or "a"
        if variant not in ("a", "b"):
            raise ValueError("SM1 variants: a, b")
        rhs = "||box_k f||_{L^1_{x_i} L^2 L^2_t}"
        if variant == "a":
            lhs = "||box_k A d_i f||_{L^inf_{x_i} L^2 L^2_t}"
        else:
            lhs, label, slope = "||box_k A d_i f||_{L^inf_t L^2_x}", "<k_i>^0.5", 0.5
    elif id == "SMMAX":
        q = need_q(strict_two=True)
        lhs, rhs = "||box_k A d_i f||_{L^q_{x_i} L^inf L^inf_t}", "||box_k f||_{L^1_{x_i} L^2 L^2_t}"
        label, slope = f"<k_i>^{0.5 + 1/q:g}", 0.5 + 1 / q
    elif id == "STSM":
        variant = variant or "1"
        valid = ("1", "2", "3", "4", "6", "c1", "c3", "c4")
        if variant not in valid:
            raise ValueError(f"STSM variants: {', '.join(valid)}")
        if variant in ("1", "2", "3", "4", "6"):
            need_stri(strict=True)
        if variant == "1":
            datum, lhs, rhs = "initial", "||box_k S(t) u0||_{L^gamma_t L^r_x}", "||box_k u0||_2"
        elif variant == "2":
            lhs, rhs = "||box_k A f||_{L^inf L^2 cap L^gamma L^r}", "||box_k f||_{L^gamma' L^r'}"
        elif variant == "3":
            lhs, rhs = "||box_k A d_i f||_{L^gamma L^r}", "||box_k f||_{L^1_{x_i} L^2 L^2_t}"
            label, slope = "<k_i>^0.5", 0.5
        elif variant == "4":
            lhs, rhs = "||box_k A d_i f||_{L^inf_{x_i} L^2 L^2_t}", "||box_k f||_{L^gamma' L^r'}"
            label, slope = "<k_i>^0.5", 0.5
        elif variant == "6":
            q = need_q(allow_inf=False)
            alpha = int(params.setdefault("alpha", 1))
            if alpha not in (0, 1):
                raise ValueError("alpha must be 0 or 1")
            lhs, rhs = "||box_k A d^alpha_i f||_{L^q_{x_i} L^inf L^inf_t}", "||box_k f||_{L^gamma' L^r'}"
            label, slope = f"<k_i>^{alpha + 1/q:g}", alpha + 1 / q
        elif variant == "c1":
            p = float(params.setdefault("p", 4.0))
            if p < 4.0 / n:
                raise ValueError("need p >= 4/n")
            datum, lhs, rhs = "initial", "||box_k S(t) u0||_{L^{2+p}_{t,x} cap L^inf L^2}", "||box_k u0||_2"
            if params.setdefault("l3l6", False):
                lhs = "||box_k S(t) u0||_{L^3_t L^6_x cap L^inf L^2}"
        elif variant == "c3":
            q = need_q(allow_inf=False)
            datum, lhs, rhs = "initial", "||box_k S(t) u0||_{L^q_{x_i} L^inf L^inf_t}", "||box_k u0||_2"
            label, slope = f"<k_i>^{1/q:g}", 1 / q
        elif variant == "c4":
            p = float(params.setdefault("p", 4.0))
            lhs, rhs = "||box_k A f||_{L^inf L^2 cap L^{2+p}_{t,x}}", "||box_k f||_{L^1_{x_i} L^2 L^2_t}"
            label, slope = "<k_i>^0.5", 0.5
            if params.setdefault("l3l6", False):
                lhs = "||box_k A f||_{L^inf L^2 cap L^3_t L^6_x}"
    elif id == "INT1":
        variant = variant or "1"
        if variant not in ("1", "1a", "2", "2a"):
            raise ValueError("INT1 variants: 1, 1a, 2, 2a")
        if i == 0:
            raise ValueError("INT1 needs i >= 2 (0-based axis i >= 1)")
        q = need_q(strict_two=(variant == "2"))
        if variant in ("1a", "2a"):
            g0, r = gamma_of(float(params.setdefault("r", 4.0)), n), float(params["r"])
            gamma = float(params.setdefault("gamma", max(g0, 2.0 + 1e-9)))
            if gamma < g0 or gamma <= 2:
                raise ValueError("gamma must satisfy gamma >= gamma(r), gamma > 2")
        lhs = {
            "1": "||box_k d_i A f||_{L^inf_{x_1} L^2 L^2_t}",
            "1a": "||box_k d_i A f||_{L^inf_{x_1} L^2 L^2_t}",
            "2": "||box_k d_i A f||_{L^q_{x_1} L^inf L^inf_t}",
            "2a": "||box_k d_i A f||_{L^q_{x_1} L^inf L^inf_t}",
        }[variant]
        rhs = {
            "1": "||d_i d^-1_1 box_k f||_{L^1_{x_1} L^2 L^2_t}",
            "1a": "||d_i D^-1/2_1 box_k f||_{L^gamma' L^r'}",
            "2": "||box_k f||_{L^1_{x_i} L^2 L^2_t}",
            "2a": "||box_k f||_{L^gamma' L^r'}",
        }[variant]
        if variant == "2":
            label, slope = f"<k_i>^0.5 <k_1>^{1/q:g}", 0.5
        elif variant == "2a":
            label, slope = f"<k_i> <k_1>^{1/q:g}", 1.0
    elif id == "INT2":
        variant = variant or "P1"
        sigma = float(params.setdefault("sigma", 1.0 if variant == "P2" else 0.0))
        if variant not in ("P1", "P2"):
            raise ValueError("INT2 variants: P1, P2")
        if n < 2:
            raise ValueError("INT2 needs n >= 2")
        if sigma < (1.0 if variant == "P2" else 0.0):
            raise ValueError(f"sigma={sigma} below the validity bound for {variant}")
        localized, summed, fit_axis = False, True, None
        lhs = f"sum_{{|k1|>4}} <k1>^s ||P{variant[1]} box_k d_2 A f||_{{L^inf_{{x_1}} L^2 L^2_t}}"
        rhs = "sum_{|k%s|>4} <k%s>^s ||box_k f||_{L^1_{x_1} L^2 L^2_t}" % (("1", "1") if variant == "P1" else ("2", "2"))
    elif id == "KMAX1":
        q = need_q()
        gamma, r = need_stri(strict=True)
        lhs, rhs = "||box_k d_i A f||_{L^q_{x_1} L^inf L^inf_t}", "||box_k f||_{L^gamma' L^r'}"
        label, slope, fit_axis = f"<kmax>^{1 + 1/q:g}", 1 + 1 / q, None
    elif id == "KMAX2":
        q = need_q(strict_two=True)
        params.setdefault("sigma", 0.0)
        alpha = int(params.setdefault("alpha", 0))
        if not 0 <= alpha < n:
            raise ValueError("alpha axis out of range")
        localized, summed, fit_axis = False, True, None
        lhs = "sum_{|k_a|=kmax>4} <k>^s ||box_k d_i A f||_{L^q_{x_1} L^inf L^inf_t}"
        rhs = "sum_{|k_a|>4} <k_a>^{s+1/2+1/q} ||box_k f||_{L^1_{x_a} L^2 L^2_t}"
    return EstimateSpec(id, variant, dict(params), lhs, rhs, datum, localized, label, fit_axis, slope, summed)


# ---------------------------------------------------------------- pipelines


@dataclass
class Sample:
    lhs: float
    rhs: float
    k: tuple[int, ...] | None
    seed: int
    flagged: bool = False


def _box(family: DecompFamily, k) -> np.ndarray:
    return family.symbol(k)


def _evaluate(spec: EstimateSpec, family: DecompFamily, k, dhat: np.ndarray) -> tuple[float, float, bool]:
    g = family.grid
    n, i = spec.params["n"], spec.params["i"]
    A = MixedNormSpec.anisotropic
    S = MixedNormSpec.strichartz
    sid, v = spec.id, spec.variant
    sig = _box(family, k) if k is not None else 1.0
    p = spec.params
    flagged = False

    if sid == "GSE1":
        a = duhamel_hat(g, dhat) * d_sym(g, i)
        return norm_hat(g, a, A(i, INF, 2, n)), norm_hat(g, dhat, A(i, 1, 2, n)), False
    if sid == "GSE2":
        u = trajectory_hat(g, dhat) * riesz_sym(g, i, 0.5)
        return norm_hat(g, u, A(i, INF, 2, n)), l2_hat(g, dhat), False
    if sid == "GSE3":
        a = duhamel_hat(g, dhat) * d_sym(g, i)
        return norm_hat(g, a, S(INF, 2, n)), norm_hat(g, dhat * riesz_sym(g, i, 0.5), A(i, 1, 2, n)), False
    if sid == "STRI":
        gamma, r = p["gamma"], p["r"]
        if v == "S":
            u = trajectory_hat(g, dhat)
            lhs = sum(norm_hat(g, u * _box(family, kk), S(gamma, r, n)) for kk in _active(family, dhat))
            rhs = sum(l2_hat(g, dhat * _box(family, kk)) for kk in _active(family, dhat))
            return lhs, rhs, False
        a = duhamel_hat(g, dhat)
        act = _active(family, dhat)
        lhs = sum(norm_hat(g, a * _box(family, kk), [S(gamma, r, n), S(INF, 2, n)]) for kk in act)
        rhs = sum(norm_hat(g, dhat * _box(family, kk), S(_dual(gamma), _dual(r), n)) for kk in act)
        return lhs, rhs, False
    if sid == "MAX":
        bk = dhat * sig
        return maximal_norm_streaming(g, bk, i, p["q"]), l2_hat(g, bk), False
    if sid == "MAXD":
        w = whole_line_hat(g, dhat) * sig
        return l2_hat(g, w), norm_hat(g, dhat * sig, A(i, _dual(p["q"]), 1, n)), False
    if sid == "SM1":
        a = duhamel_hat(g, dhat * d_sym(g, i)) * sig
        rhs = norm_hat(g, dhat * sig, A(i, 1, 2, n))
        if v == "a":
            return norm_hat(g, a, A(i, INF, 2, n)), rhs, False
        return norm_hat(g, a, S(INF, 2, n)), rhs, False
    if sid == "SMMAX":
        a = duhamel_hat(g, dhat * d_sym(g, i)) * sig
        return norm_hat(g, a, A(i, p["q"], INF, n)), norm_hat(g, dhat * sig, A(i, 1, 2, n)), False
    if sid == "STSM":
        gamma, r = p.get("gamma"), p.get("r")
        if v == "1":
            u = trajectory_hat(g, dhat) * sig
            return norm_hat(g, u, S(gamma, r, n)), l2_hat(g, dhat * sig), False
        if v == "2":
            a = duhamel_hat(g, dhat) * sig
            return norm_hat(g, a, [S(INF, 2, n), S(gamma, r, n)]), norm_hat(g, dhat * sig, S(_dual(gamma), _dual(r), n)), False
        if v == "3":
            a = duhamel_hat(g, dhat * d_sym(g, i)) * sig
            return norm_hat(g, a, S(gamma, r, n)), norm_hat(g, dhat * sig, A(i, 1, 2, n)), False
        if v == "4":
            a = duhamel_hat(g, dhat * d_sym(g, i)) * sig
            return norm_hat(g, a, A(i, INF, 2, n)), norm_hat(g, dhat * sig, S(_dual(gamma), _dual(r), n)), False
        if v == "6":
            a = duhamel_hat(g, dhat * d_sym(g, i, p["alpha"])) * sig
            return norm_hat(g, a, A(i, p["q"], INF, n)), norm_hat(g, dhat * sig, S(_dual(gamma), _dual(r), n)), False
        if v == "c1":
            u = trajectory_hat(g, dhat) * sig
            second = S(3, 6, n) if p.get("l3l6") else MixedNormSpec.joint(2 + p["p"], n)
            return norm_hat(g, u, [S(INF, 2, n), second]), l2_hat(g, dhat * sig), False
        if v == "c3":
            bk = dhat * sig
            return maximal_norm_streaming(g, bk, i, p["q"]), l2_hat(g, bk), False
        if v == "c4":
            a = duhamel_hat(g, dhat) * sig
            second = S(3, 6, n) if p.get("l3l6") else MixedNormSpec.joint(2 + p["p"], n)
            return norm_hat(g, a, [S(INF, 2, n), second]), norm_hat(g, dhat * sig, A(i, 1, 2, n)), False
    if sid == "INT1":
        a = duhamel_hat(g, dhat) * d_sym(g, i) * sig
        bk = dhat * sig
        if v in ("1", "1a"):
            lhs = norm_hat(g, a, A(0, INF, 2, n))
            flagged = zero_plane_mass(g, bk, 0)
            if v == "1":
                rhs = norm_hat(g, bk * d_sym(g, i) * inv_d_sym(g, 0), A(0, 1, 2, n))
            else:
                gamma, r = p["gamma"], p["r"]
                rhs = norm_hat(g, bk * d_sym(g, i) * riesz_sym(g, 0, -0.5), S(_dual(gamma), _dual(r), n))
            return lhs, rhs, flagged
        lhs = norm_hat(g, a, A(0, p["q"], INF, n))
        if v == "2":
            return lhs, norm_hat(g, bk, A(i, 1, 2, n)), False
        return lhs, norm_hat(g, bk, S(_dual(p["gamma"]), _dual(p["r"]), n)), False
    if sid == "KMAX1":
        a = duhamel_hat(g, dhat) * d_sym(g, i) * sig
        return norm_hat(g, a, A(0, p["q"], INF, n)), norm_hat(g, dhat * sig, S(_dual(p["gamma"]), _dual(p["r"]), n)), False
    if sid == "INT2":
        s = p["sigma"]
        a = duhamel_hat(g, dhat) * d_sym(g, 1)
        proj = AngularProjector(1 if v == "P1" else 2).symbol(g)
        lhs = rhs = 0.0
        for kk in _active(family, dhat, include_neighbours=True):
            if abs(kk[0]) > 4:
                lhs += (1 + abs(kk[0])) ** s * norm_hat(g, a * proj * _box(family, kk), A(0, INF, 2, n))
            ax = 0 if v == "P1" else 1
            if abs(kk[ax]) > 4:
                rhs += (1 + abs(kk[ax])) ** s * norm_hat(g, dhat * _box(family, kk), A(0, 1, 2, n))
        return lhs, rhs, False
    if sid == "KMAX2":
        s, q, al = p["sigma"], p["q"], p["alpha"]
        a = duhamel_hat(g, dhat) * d_sym(g, i)
        lhs = rhs = 0.0
        for kk in _active(family, dhat, include_neighbours=True):
            kmax = max(abs(x) for x in kk)
            if abs(kk[al]) == kmax and kmax > 4:
                lhs += bracket(kk) ** s * norm_hat(g, a * _box(family, kk), A(0, q, INF, n))
            if abs(kk[al]) > 4:
                rhs += (1 + abs(kk[al])) ** (s + 0.5 + 1 / q) * norm_hat(g, dhat * _box(family, kk), A(al, 1, 2, n))
        return lhs, rhs, False
    raise ValueError(f"no pipeline for {spec.name}")


def _active(family: DecompFamily, dhat: np.ndarray, include_neighbours: bool = False) -> list[tuple[int, ...]]:
    """Boxes meeting the spectral support of ``dhat``."""
    g = family.grid
    mag = np.abs(dhat)
    if mag.ndim == g.n + 1:
        mag = mag.max(axis=0)
    top = mag.max(initial=0.0)
    if top == 0:
        return []
    live = mag > 1e-13 * top
    out = []
    for k in family.indices():
        hit = True
        for axis, ki in enumerate(k):
            idx = family.support(axis, ki)
            other = tuple(a for a in range(g.n) if a != axis)
            proj = live.any(axis=other) if other else live
            if not proj[idx].any():
                hit = False
                break
        if hit:
            out.append(k)
    return out


# ---------------------------------------------------------------- reports


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    stderr: float
    intercept: float
    points: int


def fit_scaling(x: Sequence[float], y: Sequence[float]) -> ScalingFit:
    """Least-squares slope of ``log y`` against ``log x`` (at least 4 points)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size:
        raise ValueError("x and y differ in length")
    if x.size < 4:
        raise ValueError(f"fit needs at least 4 points, got {x.size}")
    if np.any(np.diff(x) <= 0):
        raise ValueError("abscissae must be strictly increasing")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    res = stats.linregress(np.log(x), np.log(y))
    return ScalingFit(float(res.slope), float(res.stderr), float(res.intercept), int(x.size))


@dataclass
class EstimateReport:
    spec: EstimateSpec
    samples: list[Sample]
    skipped: int
    seed: int
    grid: dict
    stability: float | None = None
    refined_max: float | None = None
    per_k: dict = field(default_factory=dict)
    fit: ScalingFit | None = None

    @property
    def ratios(self) -> np.ndarray:
        return np.array([s.lhs / s.rhs for s in self.samples])

    @property
    def normalized(self) -> np.ndarray:
        if not self.samples:
            return np.array([])
        return np.array([s.lhs / (s.rhs * (self.spec.power(s.k) if s.k is not None else 1.0)) for s in self.samples])

    @property
    def max_ratio(self) -> float:
        return float(self.normalized.max()) if self.samples else 0.0

    @property
    def mean_ratio(self) -> float:
        return float(self.normalized.mean()) if self.samples else 0.0

    def rows(self) -> list[tuple]:
        out = []
        for s, r in zip(self.samples, self.normalized):
            k = "" if s.k is None else " ".join(str(v) for v in s.k)
            out.append((self.spec.name, k, s.seed, s.lhs / s.rhs, r))
        return out

    def summary(self) -> dict:
        d = {
            "id": self.spec.name,
            "params": {k: (str(v) if isinstance(v, float) and math.isinf(v) else v) for k, v in self.spec.params.items()},
            "lhs": self.spec.lhs,
            "rhs": self.spec.rhs,
            "power": self.spec.power_label,
            "samples": len(self.samples),
            "skipped": self.skipped,
            "seed": self.seed,
            "max_normalized": self.max_ratio,
            "mean_normalized": self.mean_ratio,
            "stability": self.stability,
            "grid": self.grid,
        }
        if self.fit is not None:
            d["slope"] = self.fit.slope
            d["stderr"] = self.fit.stderr
            d["expected_slope"] = self.spec.expected_slope
        if self.per_k:
            d["per_k"] = {" ".join(map(str, k)): v for k, v in self.per_k.items()}
        return d


FamilySource = DecompFamily | Callable[[tuple], DecompFamily]


def sample_seed(seed: int, index: int) -> int:
    return seed * 1_000_000 + index


def _support_for(spec: EstimateSpec, family: DecompFamily, k, ball: float | None):
    if spec.localized:
        return CubeSupport(tuple(k))
    K = ball if ball is not None else max(1, family.K - 1)
    return BallSupport(K)


def _collect(spec, family_of, ks, samples, seed, ball) -> tuple[list[Sample], int]:
    out: list[Sample] = []
    skipped = 0
    idx = 0
    for k in ks:
        fam = family_of(k)
        for _ in range(samples):
            sd = sample_seed(seed, idx)
            idx += 1
            support = _support_for(spec, fam, k, ball)
            dhat = datum_hat(fam.grid, support, sd, spec.datum)
            lhs, rhs, flagged = _evaluate(spec, fam, k, dhat)
            if flagged or not rhs > 0 or not np.isfinite(lhs):
                skipped += 1
                continue
            out.append(Sample(lhs, rhs, None if k is None else tuple(k), sd, flagged))
    return out, skipped


def run_estimate(
    spec: EstimateSpec,
    family: FamilySource,
    samples: int = 50,
    seed: int = 0,
    ks: Sequence[Sequence[int]] | None = None,
    ball: float | None = None,
    refine: bool = False,
) -> EstimateReport:
    """Run ``spec`` on a seeded ensemble.

    Args:
        family: One family for every box, or a callable ``k -> family``
            (for example windowed grids centred on each box).
        ks: Box indices for localized entries (default: the origin box).
        ball: Support radius of the ball ensembles used by global entries.
        refine: Repeat on the grid with (N, Nt, T) doubled and record the
            ratio of the two maxima as the stability factor.
    """
    family_of = family if callable(family) else (lambda k, f=family: f)
    n = spec.params["n"]
    if spec.localized:
        ks = [tuple(k) for k in (ks or [(0,) * n])]
    else:
        ks = [None]
    got, skipped = _collect(spec, family_of, ks, samples, seed, ball)
    first = family_of(ks[0])
    report = EstimateReport(spec, got, skipped, seed, first.grid.as_dict())
    if spec.localized:
        for k in ks:
            vals = [s.lhs / s.rhs for s in got if s.k == k]
            if vals:
                report.per_k[k] = {
                    "geo_mean_ratio": float(np.exp(np.mean(np.log(vals)))),
                    "max_normalized": float(max(v / spec.power(k) for v in vals)),
                }
        keys = [k for k in ks if k in report.per_k]
        if len(keys) >= 4:
            x = [_br(k, spec.fit_axis) for k in keys]
            order = np.argsort(x)
            xs = np.array(x)[order]
            ys = np.array([report.per_k[keys[j]]["geo_mean_ratio"] for j in order])
            if np.all(np.diff(xs) > 0):
                report.fit = fit_scaling(xs, ys)
    if refine:
        def refined_of(k, src=family_of):
            fam = src(k)
            return build_family(fam.grid.refined(), fam.K)

        again, _ = _collect(spec, refined_of, ks, samples, seed, ball)
        if again:
            tmp = EstimateReport(spec, again, 0, seed, {})
            report.refined_max = tmp.max_ratio
            a, b = report.max_ratio, tmp.max_ratio
            report.stability = float(max(a / b, b / a)) if a > 0 and b > 0 else math.inf
    return report


# ---------------------------------------------------------------- box sweeps on windowed grids


def windowed_family(k: Sequence[int], n: int = 2, N: int = 128, r: int = 5, T: float = 0.5, K: int = 1, nt_min: int = 16, eps=None) -> DecompFamily:
    """Family on a grid whose frequency window is centred at box ``k``.

    ``Nt`` is chosen so a packet moving at group speed ``2|k|_inf`` crosses
    at most one spatial cell per time step.
    """
    L = 2 * math.pi * 2**r
    dx = L / N
    speed = 2 * max(1, max(abs(v) for v in k) + 1)
    steps = int(math.ceil(2 * T * speed / dx))
    Nt = max(nt_min, steps + (steps % 2))
    grid = make_grid(n, N, r, T, Nt, eps, tuple(k))
    return build_family(grid, K)


def maximal_sweep(k1_values: Sequence[int] = (8, 16, 32, 64), q: float = 4.0, samples: int = 50, seed: int = 0, n: int = 2, N: int = 128, r: int = 5, T: float = 0.5, k_other: int = 0) -> EstimateReport:
    """MAX entry over ``k = (k1, k_other, 0, ...)`` with a windowed grid per box."""
    spec = make_spec("MAX", n=n, i=0, q=q)
    ks = [(k1, k_other) + (0,) * (n - 2) for k1 in k1_values]
    return run_estimate(spec, lambda k: windowed_family(k, n, N, r, T), samples, seed, ks)


def sharpness_witness(k1: int, q: float = 4.0, family: DecompFamily | None = None, n: int = 2, N: int = 256, r: int = 6, T: float = 1.0) -> float:
    """q-th power of ``||box_k S(t) u0||_{L^q_{x_1} L^inf L^inf_t}`` for the extremal datum.

    The datum has ``F u0 = eta_{k1}(xi_1) eta_0(xi_2) ... eta_0(xi_n)`` and
    ``k = (k1, 0, ..., 0)``.  The window ``[-T, T]`` must contain the
    focusing times ``t = -x_1 / (2 eps_1 k1)`` for ``|x_1| <= c k1``; ``T`` is
    enlarged to at least ``1/2`` when smaller.
    """
    if k1 < 8:
        raise ValueError("sharpness witness needs k1 >= 8")
    k = (k1,) + (0,) * (n - 1)
    if family is None:
        family = windowed_family(k, n, N, r, max(T, 0.5))
    elif family.grid.T < 0.5:
        g = family.grid
        family = build_family(make_grid(g.n, g.N, g.r, 0.5, g.Nt, g.eps, g.center), family.K)
    g = family.grid
    u0 = np.ones((1,) * n)
    for axis, ki in enumerate(k):
        u0 = u0 * _axis_sym(g, axis, eta(ki, g.xi_axis(axis)))
    u0 = np.broadcast_to(u0, g.spatial_shape()) * family.symbol(k)
    return maximal_norm_streaming(g, u0, 0, q) ** q


def derivative_sweep(sigma: float, ki_values: Sequence[int] = (8, 16, 32, 64), axis: int = 0, p1: float = INF, p2: float = 2.0, samples: int = 20, seed: int = 0, n: int = 2, N: int = 64, r: int = 3, T: float = 0.25) -> dict:
    """``||box_k D^sigma_{x_i} u|| / ||box_k u||`` in ``L^p1_{x_i} L^p2 L^p2_t`` with ``u = S(t) u0``.

    Returns per-box geometric means and a fit against ``<k_i>``.
    """
    spec = MixedNormSpec.anisotropic(axis, p1, p2, n)
    geo = []
    idx = 0
    for ki in ki_values:
        k = tuple(ki if a == axis else 0 for a in range(n))
        fam = windowed_family(k, n, N, r, T)
        g = fam.grid
        sig = fam.symbol(k)
        vals = []
        for _ in range(samples):
            u0 = random_band_limited(g, CubeSupport(k), sample_seed(seed, idx), "packet").to_frequency().values
            idx += 1
            u = trajectory_hat(g, u0) * sig
            vals.append(norm_hat(g, u * riesz_sym(g, axis, sigma), spec) / norm_hat(g, u, spec))
        geo.append(float(np.exp(np.mean(np.log(vals)))))
    x = [1.0 + abs(v) for v in ki_values]
    fit = fit_scaling(x, geo)
    return {"sigma": sigma, "k": list(ki_values), "geo_mean": geo, "slope": fit.slope, "stderr": fit.stderr,
            "normalized": [gm / xv**sigma for gm, xv in zip(geo, x)]}


def nikolskii_sweep(ks: Sequence[Sequence[int]] = ((0, 0), (8, 0), (16, 16)), pairs: Sequence[tuple[float, float]] = ((2.0, INF), (1.0, 4.0)), samples: int = 50, seed: int = 0, N: int = 512, r: int = 3) -> dict:
    """Measured constants ``max ||f||_q / ||f||_p`` over packets in ``B(k, sqrt n)``, per box."""
    from .decomp import nikolskii_ratio

    n = len(ks[0])
    grid = make_grid(n, N, r, 1.0, 2)
    out: dict = {}
    for p, q in pairs:
        consts = {}
        for j, k in enumerate(ks):
            vals = []
            for s in range(samples):
                f = random_band_limited(grid, CubeSupport(tuple(k)), sample_seed(seed + 1000 * j, s), "packet")
                vals.append(nikolskii_ratio(f, p, q))
            consts[tuple(k)] = float(max(vals))
        c = list(consts.values())
        out[(p, q)] = {"constants": consts, "spread": max(c) / min(c)}
    return out


# ---------------------------------------------------------------- orthogonality


@functools.lru_cache(maxsize=4096)
def _eta_offsets(shift: int, dxi: float, half: int) -> np.ndarray:
    """``eta_shift`` at ``m*dxi``, ``|m| <= half``.

    ``eta_k(c + o) = eta_{k-c}(o)`` holds bit for bit on dyadic nodes, so
    one table serves every box with the same relative shift.
    """
    out = eta(shift, np.arange(-half, half + 1) * dxi)
    out.flags.writeable = False
    return out


def _local_box_spectrum(rng: np.random.Generator, k: Sequence[int], dxi: float) -> np.ndarray:
    """Random coefficients times ``sigma_k`` on the local offset grid of the box."""
    half = int(round(1 / dxi))
    arr = np.ones((1,) * len(k))
    for axis in range(len(k)):
        shape = [1] * len(k)
        shape[axis] = -1
        arr = arr * _eta_offsets(0, dxi, half).reshape(shape)
    noise = rng.standard_normal(arr.shape) + 1j * rng.standard_normal(arr.shape)
    return arr * noise


@dataclass(frozen=True)
class OrthResult:
    tuples: int
    failures_spec: int
    failures_derived: int
    positives: int
    radius_spec: int
    radius_derived: int
    max_outside: float


def orthogonality_check(n_tuples: int = 10_000, factors: int = 3, n: int = 2, K: int = 8, r: int = 2, seed: int = 0, window: int = 10) -> OrthResult:
    """Check that ``box_k`` of a product of ``factors`` boxes vanishes far from ``sum k^(j)``.

    Products are formed by exact discrete convolution of finitely supported
    spectra, so "vanishes" is tested as exact zero.  The output box index is
    drawn within ``window`` of the sum.  Two radii are checked: the
    catalogue bound ``factors*ceil(sqrt n) + 1`` and the derived bound
    ``factors + 1`` (each box spectrum lies in the open cube of half-side 1).
    """
    from scipy.signal import convolve

    rng = np.random.default_rng(seed)
    dxi = 2.0**-r
    radius_spec = factors * math.ceil(math.sqrt(n)) + 1
    radius_derived = factors + 1
    fail_spec = fail_derived = positives = 0
    worst = 0.0
    for _ in range(n_tuples):
        ks = [tuple(int(v) for v in rng.integers(-K, K + 1, n)) for _ in range(factors)]
        total = tuple(int(sum(c)) for c in zip(*ks))
        k = tuple(int(t + d) for t, d in zip(total, rng.integers(-window, window + 1, n)))
        prod = _local_box_spectrum(rng, ks[0], dxi)
        for kk in ks[1:]:
            prod = convolve(prod, _local_box_spectrum(rng, kk, dxi), method="direct")
        # absolute coordinates of the product spectrum
        half = prod.shape[0] // 2
        sym = np.ones((1,) * n)
        for axis in range(n):
            shape = [1] * n
            shape[axis] = -1
            sym = sym * _eta_offsets(k[axis] - total[axis], dxi, half).reshape(shape)
        out = sym * prod
        mag = float(np.abs(out).max())
        dist = max(abs(a - b) for a, b in zip(k, total))
        if mag > 0:
            positives += 1
        if dist > radius_spec and mag != 0.0:
            fail_spec += 1
        if dist >= radius_derived and mag != 0.0:
            fail_derived += 1
        if dist >= radius_derived:
            worst = max(worst, mag)
    return OrthResult(n_tuples, fail_spec, fail_derived, positives, radius_spec, radius_derived, worst)


def orthogonality_physical(ks: Sequence[Sequence[int]], k: Sequence[int], grid: Grid, family: DecompFamily, seed: int = 0) -> float:
    """``||box_k (prod_j box_{k_j} v_j)||_2`` via padded physical products, for cross-checks."""
    from .solver import pad_hat, truncate_hat

    rng = np.random.default_rng(seed)
    pad = len(ks)
    big = make_grid(grid.n, grid.N * pad, grid.r, grid.T, grid.Nt, grid.eps, grid.center)
    prod = None
    for kk in ks:
        v = random_band_limited(grid, CubeSupport(tuple(kk)), int(rng.integers(2**31)), "white").to_frequency().values
        v = v * family.symbol(kk)
        phys = to_physical(big, pad_hat(v, grid, big))
        prod = phys if prod is None else prod * phys
    fld = SpaceTimeField(big, prod, "spatial")
    hat = truncate_hat(fourier_forward(fld).values, big, grid)
    return l2_hat(grid, hat * family.symbol(k))
