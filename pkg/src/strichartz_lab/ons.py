"""Orthonormal families, coefficient sequences, their flowed densities, and
the scaling measurements that probe the family-summed space-time bounds.

The measured object per cell is the ratio

    || sum_j lambda_j |U(t) P_{<=N} f_j|^2 ||_{L^p_t L^q_x}  /  ||lambda||_{l^alpha'}

for a family living on the frequency band [-N, N]^d.  Families are held
as coefficient vectors on the band (orthonormality of the fields is
equivalent to orthonormality of the coefficients), and the density is
assembled frame by frame with batched inverse transforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInputError
from .geometry import (
    GeometrySpec,
    SpaceTimeField,
    _band_multiplier,
    _frac_product,
    _offset_phase,
    fractional_symbol,
    frequency_lattice,
)
from .norms import ScalingFit, SigmaPrediction, classify_pair, fit_scaling, mixed_norm, predict_sigma
from .seeding import derive_cell_seed

__all__ = [
    "OrthonormalFamily",
    "LambdaSequence",
    "OnsConfig",
    "OnsRecord",
    "band_dimension",
    "generate_ons",
    "lambda_family",
    "density_field",
    "ons_estimate_ratio",
    "sweep",
]


def _band_mask(geometry: GeometrySpec, N: int) -> np.ndarray:
    return _band_multiplier(geometry, int(N)) == 1.0


def band_dimension(geometry: GeometrySpec, N: int) -> int:
    """Number of lattice points in the sharp band [-N, N]^d (no Nyquist)."""
    return int(np.count_nonzero(_band_mask(geometry, N)))


@dataclass(frozen=True, eq=False)
class OrthonormalFamily:
    """M orthonormal members, stored as coefficient vectors on the band."""

    coefficients: np.ndarray        # (M, band_dim), weighted-orthonormal
    geometry: GeometrySpec
    band: int                       # N
    provenance: str                 # "fourier-modes" | "random-band(seed)"

    @property
    def size(self) -> int:
        return self.coefficients.shape[0]

    def gram(self) -> np.ndarray:
        w = self.geometry.dual_cell
        return (self.coefficients.conj() @ self.coefficients.T) * w

    def gram_deviation(self) -> float:
        g = self.gram()
        return float(np.linalg.norm(g - np.eye(self.size), ord=2))


@dataclass(frozen=True)
class LambdaSequence:
    """Nonincreasing nonnegative coefficients with their l^alpha' norm."""

    values: np.ndarray
    alpha_prime: float

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if np.any(v < 0):
            raise InvalidInputError("coefficients must be nonnegative")
        if np.any(np.diff(v) > 1e-15):
            raise InvalidInputError("coefficients must be nonincreasing")
        if not self.alpha_prime >= 1:
            raise InvalidInputError("alpha' must be >= 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def norm(self) -> float:
        if self.alpha_prime == math.inf:
            return float(np.max(self.values)) if len(self.values) else 0.0
        return float(np.sum(self.values ** self.alpha_prime)
                     ** (1.0 / self.alpha_prime))


def _band_order(geometry: GeometrySpec, N: int) -> np.ndarray:
    """Deterministic enumeration of band lattice points: by |xi|^2, ties
    broken lexicographically, so mode 0 comes first and conjugate pairs
    adjoin (0, -1, +1, -2, +2, ... on the one-dimensional torus)."""
    mask = _band_mask(geometry, N)
    mesh = frequency_lattice(geometry).mesh()
    pts = np.stack([m[mask] for m in mesh], axis=-1)
    r2 = np.sum(pts ** 2, axis=1)
    keys = tuple(pts[:, ax] for ax in range(pts.shape[1] - 1, -1, -1)) + (r2,)
    return np.lexsort(keys)


def generate_ons(kind: str, M: int, N: int, geometry: GeometrySpec,
                 seed: int = 0) -> OrthonormalFamily:
    """Orthonormal family on the band: lattice modes or a seeded random one."""
    if M < 1:
        raise InvalidInputError("family size must be >= 1")
    dim = band_dimension(geometry, N)
    if M > dim:
        raise InvalidInputError(
            f"family size {M} exceeds band dimension {dim}")
    w = geometry.dual_cell
    if kind == "fourier-modes":
        order = _band_order(geometry, N)
        coef = np.zeros((M, dim), dtype=np.complex128)
        for j in range(M):
            coef[j, order[j]] = 1.0 / math.sqrt(w)
        return OrthonormalFamily(coef, geometry, int(N), "fourier-modes")
    if kind == "random-band":
        rng = np.random.default_rng(seed)
        raw = rng.standard_normal((dim, M)) + 1j * rng.standard_normal((dim, M))
        Q, _ = np.linalg.qr(raw)
        coef = (Q / math.sqrt(w)).T
        return OrthonormalFamily(coef, geometry, int(N),
                                 f"random-band({seed})")
    raise InvalidInputError(f"unknown family kind {kind!r}")


def lambda_family(kind: str, M: int, alpha_prime: float,
                  beta: float = 1.0) -> LambdaSequence:
    """Canonical coefficient sequences, normalized to unit l^alpha' norm."""
    if M < 1:
        raise InvalidInputError("sequence length must be >= 1")
    if kind == "flat":
        vals = np.full(M, M ** (-1.0 / alpha_prime))
    elif kind == "one-hot":
        vals = np.zeros(M)
        vals[0] = 1.0
    elif kind == "power":
        vals = np.arange(1, M + 1, dtype=float) ** (-beta)
        vals /= np.sum(vals ** alpha_prime) ** (1.0 / alpha_prime)
    else:
        raise InvalidInputError(f"unknown coefficient family {kind!r}")
    return LambdaSequence(vals, alpha_prime)


def density_field(family: OrthonormalFamily, lam: LambdaSequence, theta: float,
                  interval, time_pts: int) -> SpaceTimeField:
    """rho(t, x) = sum_j lambda_j |U(t) P_{<=N} f_j(x)|^2, frame by frame.

    Members are synthesized with one batched inverse FFT per time sample;
    linearity in lambda and per-frame mass conservation are exact by
    construction.
    """
    if len(lam.values) != family.size:
        raise InvalidInputError("coefficient count must match family size")
    geom = family.geometry
    mask = _band_mask(geom, family.band)
    idx = (slice(None),) + np.nonzero(mask)
    phi = fractional_symbol(geom, theta)[mask]
    times = np.linspace(float(interval[0]), float(interval[1]), time_pts)
    axes = tuple(range(1, geom.dim + 1))
    offset = _offset_phase(geom)
    spec = np.zeros((family.size,) + geom.grid_sizes, dtype=np.complex128)
    frames = np.empty((time_pts,) + geom.grid_sizes, dtype=float)
    for i, t in enumerate(times):
        spec[idx] = family.coefficients * \
            np.exp(2j * np.pi * _frac_product(float(t), phi))
        work = spec if offset is None else spec * offset[None]
        fields = np.fft.ifftn(np.fft.ifftshift(work, axes=axes),
                              axes=axes) / geom.cell_volume
        frames[i] = np.tensordot(lam.values, np.abs(fields) ** 2, axes=(0, 0))
    return SpaceTimeField(frames, times, geom)


@dataclass(frozen=True)
class OnsConfig:
    """One measurement cell for the family-summed estimate."""

    theta: float
    p: float
    q: float
    N: int
    alpha_prime: float
    estimate: str                       # predict_sigma selector
    geometry: GeometrySpec
    M: int | None = None                # default: full band
    family_kinds: tuple = (("fourier-modes", 1),)
    lambda_kind: str = "flat"
    interval_mode: str = "unit"         # "unit" | "dispersive-window"
    time_pts: int = 33
    seed: int = 0
    admissibility: str | None = None    # expected kind from classify_pair

    def resolved_interval(self) -> tuple[float, float]:
        if self.interval_mode == "unit":
            return (0.0, 1.0)
        if self.interval_mode == "dispersive-window":
            half = 0.5 * float(self.N) ** (1.0 - self.theta)
            return (-half, half)
        raise InvalidInputError(
            f"unknown interval mode {self.interval_mode!r}")


@dataclass(frozen=True)
class OnsRecord:
    """Measured ratio of one cell, with the predicted envelope attached."""

    config: OnsConfig
    applicable: bool
    lhs_norm: float | None = None
    lambda_norm: float | None = None
    best_family: str | None = None
    prediction: SigmaPrediction | None = None
    note: str = ""

    @property
    def ratio(self) -> float | None:
        if self.lhs_norm is None or not self.lambda_norm:
            return None
        return self.lhs_norm / self.lambda_norm


def _prediction_setting(cfg: OnsConfig) -> dict:
    geom = cfg.geometry
    setting = {"estimate": cfg.estimate, "p": cfg.p, "q": cfg.q,
               "theta": cfg.theta, "manifold": geom.kind}
    if geom.kind == "waveguide":
        setting["n"] = geom.n_free
        setting["m"] = geom.n_periodic
    else:
        setting["d"] = geom.dim
    return setting


def ons_estimate_ratio(cfg: OnsConfig) -> OnsRecord:
    """Measure the density norm against the coefficient norm for one cell.

    A pair that fails the configured admissibility identity yields a
    not-applicable record without computing any norm.
    """
    d = cfg.geometry.dim
    if cfg.admissibility is not None:
        pair = classify_pair(d, cfg.p, cfg.q, cfg.theta)
        if cfg.admissibility not in pair.kinds:
            return OnsRecord(cfg, False,
                             note=f"pair is {pair.kinds or 'off every line'}, "
                                  f"needs {cfg.admissibility}")
    prediction = predict_sigma(_prediction_setting(cfg))
    M = cfg.M if cfg.M is not None else band_dimension(cfg.geometry, cfg.N)
    lam = lambda_family(cfg.lambda_kind, M, cfg.alpha_prime)
    interval = cfg.resolved_interval()

    best_norm, best_label = -1.0, ""
    cell = 0
    for kind, count in cfg.family_kinds:
        for rep in range(count):
            seed = derive_cell_seed(cfg.seed, cell)
            cell += 1
            fam = generate_ons(kind, M, cfg.N, cfg.geometry, seed=seed)
            rho = density_field(fam, lam, cfg.theta, interval, cfg.time_pts)
            val = mixed_norm(rho, cfg.p, cfg.q)
            if val > best_norm:
                best_norm, best_label = val, fam.provenance
    return OnsRecord(cfg, True, lhs_norm=best_norm, lambda_norm=lam.norm,
                     best_family=best_label, prediction=prediction)


def sweep(base: OnsConfig, axis: str, values) -> tuple[list[OnsRecord], ScalingFit | None]:
    """Repeat the cell measurement along one axis; fit log-log slope when
    the axis is N or M and every cell applies."""
    if axis not in ("N", "M", "alpha_prime", "theta", "pq"):
        raise InvalidInputError(f"unknown sweep axis {axis!r}")
    records = []
    for i, v in enumerate(values):
        cell_seed = derive_cell_seed(base.seed, i)
        if axis == "pq":
            cfg = replace(base, p=float(v[0]), q=float(v[1]), seed=cell_seed)
        elif axis in ("N", "M"):
            cfg = replace(base, seed=cell_seed, **{axis: int(v)})
        else:
            cfg = replace(base, seed=cell_seed, **{axis: float(v)})
        records.append(ons_estimate_ratio(cfg))
    fit = None
    if axis in ("N", "M") and records and all(r.applicable for r in records):
        pts = [(v, r.ratio) for v, r in zip(values, records)]
        if len(pts) >= 3 and all(p[1] and p[1] > 0 for p in pts):
            fit = fit_scaling(pts)
    return records, fit
