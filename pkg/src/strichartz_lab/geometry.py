"""Discretized torus and waveguide geometries and their spectral calculus.

Conventions, fixed once for the whole package:

* The torus has period 1 per axis; grid points are ``x_j = j/G``.
* Truncated free axes live on the box ``[-L/2, L/2)`` with ``G`` points,
  so the frequency lattice is ``{j/L : j in [-G/2, G/2)}``.
* Fourier transform pairs Fourier-series style against the basis
  ``exp(2*pi*i*x.xi)``:  ``a(xi) = sum_x f(x) exp(-2*pi*i*x.xi) * dx``.
  With that normalization the L2 norm of a field (cell-volume weighted)
  equals the weighted little-l2 norm of its coefficients (Plancherel).
* The flow multiplies coefficients by ``exp(+2*pi*i*t*phi(xi))`` where
  ``phi`` is the dispersion symbol: ``|xi|**theta`` on a pure torus and
  ``|xi_free|**theta + |xi_per|**theta`` on a waveguide.
* Frequency cutoffs at scale N are sharp indicators of ``[-N, N]**d`` on
  a pure torus and the smooth tensor bump ``prod_i eta1(xi_i / N)`` on a
  waveguide.  The Nyquist row ``xi = -G/2`` is always zeroed: it has no
  mirror partner on the lattice and breaks symmetry tests otherwise.

``eta1`` is the standard polynomial-exponential bump, pinned exactly:

    eta1(x) = S(2 - |x|),  S(y) = psi(y) / (psi(y) + psi(1 - y)),
    psi(y)  = exp(-1/y) for y > 0 and 0 otherwise,

which is C-infinity, even, identically 1 on [-1, 1] and supported in
[-2, 2].
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "GeometrySpec",
    "FrequencyLattice",
    "Field",
    "SpectrumField",
    "SpaceTimeField",
    "torus",
    "waveguide",
    "eta1",
    "frequency_lattice",
    "forward_transform",
    "inverse_transform",
    "fractional_symbol",
    "propagate",
    "flow_film",
    "project_leq",
    "littlewood_paley",
]


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GeometrySpec:
    """A discretized torus T^d or truncated waveguide R^n x T^m.

    ``grid_sizes`` lists points per axis; the first ``n_free`` axes are
    truncated free directions (box length ``trunc_length``), the rest are
    period-1 torus directions.
    """

    kind: str                      # "torus" | "waveguide"
    grid_sizes: tuple[int, ...]
    n_free: int = 0
    trunc_length: float = 1.0

    def __post_init__(self):
        if self.kind not in ("torus", "waveguide"):
            raise InvalidInputError(f"unknown geometry kind {self.kind!r}")
        if len(self.grid_sizes) < 1:
            raise InvalidInputError("geometry needs at least one axis")
        if len(self.grid_sizes) > 3:
            raise InvalidInputError("dimensions d > 3 are out of scope")
        for g in self.grid_sizes:
            if g < 4 or not _is_pow2(g):
                raise InvalidInputError(
                    f"grid sizes must be powers of two >= 4, got {g}")
        if self.kind == "torus":
            if self.n_free != 0:
                raise InvalidInputError("torus geometry has no free axes")
        else:
            if not (1 <= self.n_free < len(self.grid_sizes)):
                raise InvalidInputError(
                    "waveguide needs 1 <= n free axes < d")
            if not (self.trunc_length > 0):
                raise InvalidInputError("truncation length must be positive")

    @property
    def dim(self) -> int:
        return len(self.grid_sizes)

    @property
    def n_periodic(self) -> int:
        return self.dim - self.n_free

    def axis_is_free(self, axis: int) -> bool:
        return axis < self.n_free

    @property
    def cell_volume(self) -> float:
        """Volume of one spatial grid cell."""
        v = 1.0
        for ax, g in enumerate(self.grid_sizes):
            length = self.trunc_length if self.axis_is_free(ax) else 1.0
            v *= length / g
        return v

    @property
    def dual_cell(self) -> float:
        """Measure of one frequency-lattice cell (1 on torus axes)."""
        v = 1.0
        for ax in range(self.dim):
            if self.axis_is_free(ax):
                v /= self.trunc_length
        return v

    def axis_coordinates(self, axis: int) -> np.ndarray:
        g = self.grid_sizes[axis]
        if self.axis_is_free(axis):
            L = self.trunc_length
            return -L / 2 + L * np.arange(g) / g
        return np.arange(g) / g

    def axis_frequencies(self, axis: int) -> np.ndarray:
        g = self.grid_sizes[axis]
        k = np.arange(-g // 2, g // 2, dtype=float)
        if self.axis_is_free(axis):
            return k / self.trunc_length
        return k


def torus(grid_sizes) -> GeometrySpec:
    """Torus T^d with the given points per axis (int or tuple)."""
    if np.isscalar(grid_sizes):
        grid_sizes = (int(grid_sizes),)
    return GeometrySpec("torus", tuple(int(g) for g in grid_sizes))


def waveguide(free_sizes, periodic_sizes, trunc_length=1.0) -> GeometrySpec:
    """Waveguide R^n x T^m; free axes first, each truncated to length L."""
    if np.isscalar(free_sizes):
        free_sizes = (int(free_sizes),)
    if np.isscalar(periodic_sizes):
        periodic_sizes = (int(periodic_sizes),)
    sizes = tuple(int(g) for g in free_sizes) + tuple(int(g) for g in periodic_sizes)
    return GeometrySpec("waveguide", sizes, n_free=len(tuple(free_sizes)),
                        trunc_length=float(trunc_length))


@dataclass(frozen=True, eq=False)
class FrequencyLattice:
    """Centered frequency lattice of a geometry, one value array per axis."""

    geometry: GeometrySpec
    axes: tuple[np.ndarray, ...]

    @property
    def size(self) -> int:
        return int(np.prod([len(a) for a in self.axes]))

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes, indexing="ij")


@lru_cache(maxsize=64)
def frequency_lattice(geometry: GeometrySpec) -> FrequencyLattice:
    axes = tuple(geometry.axis_frequencies(ax) for ax in range(geometry.dim))
    for a in axes:
        a.setflags(write=False)
    return FrequencyLattice(geometry, axes)


@dataclass(frozen=True, eq=False)
class Field:
    """Complex grid function on the spatial grid of a geometry."""

    values: np.ndarray
    geometry: GeometrySpec

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.complex128)
        if vals.shape != self.geometry.grid_sizes:
            raise InvalidInputError(
                f"field shape {vals.shape} does not match grid "
                f"{self.geometry.grid_sizes}")
        if not np.all(np.isfinite(vals)):
            raise InvalidInputError("field contains non-finite entries")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def norm_l2(self) -> float:
        """L2(M) norm with the grid cell volume."""
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2)
                             * self.geometry.cell_volume))

    def norm_lq(self, q: float) -> float:
        """Lq(M) norm; q = inf is the grid max (a lower bound on the sup)."""
        a = np.abs(self.values)
        if np.isinf(q):
            return float(a.max())
        if q < 1:
            raise InvalidInputError("Lebesgue exponent must be >= 1")
        return float((np.sum(a ** q) * self.geometry.cell_volume) ** (1.0 / q))


@dataclass(frozen=True, eq=False)
class SpectrumField:
    """Fourier coefficients on the centered frequency lattice."""

    coefficients: np.ndarray
    geometry: GeometrySpec

    def __post_init__(self):
        coef = np.array(self.coefficients, dtype=np.complex128)
        if coef.shape != self.geometry.grid_sizes:
            raise InvalidInputError(
                f"coefficient shape {coef.shape} does not match lattice")
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)

    def norm_l2(self) -> float:
        """Weighted little-l2 norm (dual cell measure on free axes)."""
        return float(np.sqrt(np.sum(np.abs(self.coefficients) ** 2)
                             * self.geometry.dual_cell))


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """A time-sampled family of fields over a uniform time grid."""

    values: np.ndarray           # shape (T, *grid)
    times: np.ndarray            # uniform, strictly increasing, endpoints in
    geometry: GeometrySpec

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.complex128)
        times = np.array(self.times, dtype=float)
        if times.ndim != 1 or len(times) < 2:
            raise InvalidInputError("need at least two time samples")
        dt = np.diff(times)
        if not np.all(dt > 0):
            raise InvalidInputError("times must be strictly increasing")
        if not np.allclose(dt, dt[0], rtol=1e-9, atol=1e-15):
            raise InvalidInputError("time grid must be uniform")
        if vals.shape != (len(times),) + self.geometry.grid_sizes:
            raise InvalidInputError(
                f"frame block shape {vals.shape} does not match "
                f"({len(times)},)+{self.geometry.grid_sizes}")
        if not np.all(np.isfinite(vals)):
            raise InvalidInputError("space-time field has non-finite entries")
        vals.setflags(write=False)
        times.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "times", times)

    @property
    def interval(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def frame(self, i: int) -> Field:
        return Field(self.values[i], self.geometry)


# ---------------------------------------------------------------------------
# smooth bump


def _psi(y: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y, dtype=float)
    pos = y > 0
    with np.errstate(over="ignore"):
        out[pos] = np.exp(-1.0 / y[pos])
    return out


def eta1(x) -> np.ndarray:
    """Pinned C-infinity bump: 1 on [-1,1], supported in [-2,2]."""
    y = 2.0 - np.abs(np.asarray(x, dtype=float))
    a = _psi(y)
    b = _psi(1.0 - y)
    out = np.where(a + b > 0, a / np.where(a + b > 0, a + b, 1.0), 0.0)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# transforms


def _offset_phase(geometry: GeometrySpec) -> np.ndarray | None:
    """(-1)**k factors accounting for the [-L/2, L/2) box origin."""
    if geometry.n_free == 0:
        return None
    phase = np.ones((), dtype=float)
    for ax, g in enumerate(geometry.grid_sizes):
        if geometry.axis_is_free(ax):
            p = np.where(np.arange(-g // 2, g // 2) % 2 == 0, 1.0, -1.0)
        else:
            p = np.ones(g)
        shape = [1] * geometry.dim
        shape[ax] = g
        phase = phase * p.reshape(shape)
    return phase


def forward_transform(f: Field) -> SpectrumField:
    """Fourier coefficients of a field, centered lattice ordering."""
    coef = np.fft.fftshift(np.fft.fftn(f.values)) * f.geometry.cell_volume
    phase = _offset_phase(f.geometry)
    if phase is not None:
        coef = coef * phase
    return SpectrumField(coef, f.geometry)


def inverse_transform(s: SpectrumField) -> Field:
    """Adjoint of :func:`forward_transform`; exact round-trip partner."""
    coef = s.coefficients
    phase = _offset_phase(s.geometry)
    if phase is not None:
        coef = coef * phase
    vals = np.fft.ifftn(np.fft.ifftshift(coef)) / s.geometry.cell_volume
    return Field(vals, s.geometry)


# ---------------------------------------------------------------------------
# symbols, flow, projectors


@lru_cache(maxsize=256)
def _symbol_cached(geometry: GeometrySpec, theta: float) -> np.ndarray:
    lat = frequency_lattice(geometry)
    mesh = lat.mesh()
    if geometry.n_free == 0:
        r2 = sum(m ** 2 for m in mesh)
        sym = r2 ** (theta / 2.0)
    else:
        free2 = sum(mesh[ax] ** 2 for ax in range(geometry.n_free))
        per2 = sum(mesh[ax] ** 2 for ax in range(geometry.n_free, geometry.dim))
        sym = free2 ** (theta / 2.0) + per2 ** (theta / 2.0)
    sym.setflags(write=False)
    return sym


def fractional_symbol(lattice: FrequencyLattice | GeometrySpec,
                      theta: float) -> np.ndarray:
    """Dispersion symbol phi on the lattice: |xi|^theta, split on waveguide."""
    if theta <= 0:
        raise InvalidInputError("dispersion order theta must be positive")
    geom = lattice.geometry if isinstance(lattice, FrequencyLattice) else lattice
    return _symbol_cached(geom, float(theta))


def _frac_product(t: float, sym: np.ndarray) -> np.ndarray:
    """Fractional part of t*sym, accurate to ~1 ulp even for huge products.

    Dekker two-product recovers the exact rounding error of t*sym, so the
    mod-1 reduction does not lose the low bits that the complex exponential
    actually depends on (t*sym can exceed 1e13 at large frequency).
    """
    split = 134217729.0  # 2**27 + 1
    p = t * sym
    th = split * t - (split * t - t)
    tl = t - th
    sh = split * sym - (split * sym - sym)
    sl = sym - sh
    err = ((th * sh - p) + th * sl + tl * sh) + tl * sl
    return np.mod(np.mod(p, 1.0) + err, 1.0)


def propagate(f: Field, t: float, theta: float) -> Field:
    """Apply the flow: multiply coefficients by exp(2*pi*i*t*phi(xi)).

    The phase argument ``t*phi`` is reduced mod 1 (with an exact
    two-product) before scaling by 2*pi; this keeps the group law at
    roundoff level instead of losing a dozen digits inside the complex
    exponential when ``t*phi`` is large.
    """
    if not np.isfinite(t):
        raise InvalidInputError("propagation time must be finite")
    if t == 0.0:
        return f
    sym = fractional_symbol(f.geometry, theta)
    s = forward_transform(f)
    coef = s.coefficients * np.exp(2j * np.pi * _frac_product(t, sym))
    return inverse_transform(SpectrumField(coef, f.geometry))


@lru_cache(maxsize=256)
def _band_multiplier(geometry: GeometrySpec, N: int) -> np.ndarray:
    """Cutoff multiplier at scale N; sharp on torus, smooth on waveguide."""
    mult = np.ones((), dtype=float)
    smooth = geometry.n_free > 0
    for ax in range(geometry.dim):
        xi = geometry.axis_frequencies(ax)
        if smooth:
            m = eta1(xi / N)
        else:
            m = (np.abs(xi) <= N).astype(float)
        m = m.copy()
        m[0] = 0.0  # Nyquist row xi = -G/2 has no mirror partner
        shape = [1] * geometry.dim
        shape[ax] = len(xi)
        mult = mult * m.reshape(shape)
    mult.setflags(write=False)
    return mult


def project_leq(f: Field, N: int) -> Field:
    """Frequency cutoff P_{<=N}."""
    if N < 1 or int(N) != N:
        raise InvalidInputError("cutoff scale N must be a positive integer")
    s = forward_transform(f)
    coef = s.coefficients * _band_multiplier(f.geometry, int(N))
    return inverse_transform(SpectrumField(coef, f.geometry))


def flow_film(f: Field, theta: float, interval, time_pts: int) -> SpaceTimeField:
    """Time-sampled flow of a field over a uniform grid, batched in time."""
    if time_pts < 2:
        raise InvalidInputError("need at least two time samples")
    times = np.linspace(float(interval[0]), float(interval[1]), time_pts)
    sym = fractional_symbol(f.geometry, theta)
    coef = forward_transform(f).coefficients
    frames = np.empty((time_pts,) + f.geometry.grid_sizes, dtype=np.complex128)
    for i, t in enumerate(times):
        phase = np.exp(2j * np.pi * _frac_product(float(t), sym))
        frames[i] = inverse_transform(
            SpectrumField(coef * phase, f.geometry)).values
    return SpaceTimeField(frames, times, f.geometry)


def littlewood_paley(f: Field, k: int) -> Field:
    """Dyadic frequency block at scale 2**k (k = 0 is the lowest block)."""
    if k < 0 or int(k) != k:
        raise InvalidInputError("block index k must be a nonnegative integer")
    k = int(k)
    if k == 0:
        return project_leq(f, 1)
    hi = project_leq(f, 2 ** k)
    lo = project_leq(f, 2 ** (k - 1))
    return Field(hi.values - lo.values, f.geometry)
