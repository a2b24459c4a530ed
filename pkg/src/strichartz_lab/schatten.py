"""Schatten norms via singular values, the discrete extension/restriction
pair, and the operator-vs-orthonormal-family duality check.

Weighted Hilbert spaces are realized by folding square roots of the
quadrature weights into matrix rows and columns, so plain (unweighted)
SVD computes the weighted-space singular values exactly:

* operators on the spatial grid carry the uniform cell volume and need
  no folding (it cancels);
* the extension matrix maps weighted coefficient vectors to weighted
  space-time samples: rows are scaled by sqrt(trapezoid weight * cell
  volume), columns by sqrt(dual cell measure).

With that convention the adjoint of the extension matrix is literally
the conjugate transpose, and multiplication by a space-time weight W is
the diagonal matrix of its samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CapacityError, InvalidInputError, NumericFailureError
from .geometry import (
    GeometrySpec,
    SpaceTimeField,
    _band_multiplier,
    fractional_symbol,
    frequency_lattice,
)

__all__ = [
    "DiscreteOperator",
    "ExtensionMatrix",
    "DualityReport",
    "MATRIX_CAP",
    "singular_values",
    "schatten_norm",
    "sobolev_schatten_norm",
    "spatial_kernel_operator",
    "build_extension_matrix",
    "duality_check",
]

MATRIX_CAP = 4096 * 4096


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Matrix on a weighted space, weights already folded in."""

    matrix: np.ndarray
    row_space: str = ""
    col_space: str = ""

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.complex128)
        if m.ndim != 2:
            raise InvalidInputError("operator matrix must be 2-d")
        if not np.all(np.isfinite(m)):
            raise InvalidInputError("operator matrix has non-finite entries")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)


def spatial_kernel_operator(kernel: np.ndarray,
                            geometry: GeometrySpec) -> DiscreteOperator:
    """Operator on L2 of the grid from an integral kernel K(x, y)."""
    n = int(np.prod(geometry.grid_sizes))
    K = np.asarray(kernel, dtype=np.complex128).reshape(n, n)
    return DiscreteOperator(K * geometry.cell_volume,
                            row_space="grid", col_space="grid")


def singular_values(A: DiscreteOperator | np.ndarray) -> np.ndarray:
    """Nonincreasing singular values; count = min(rows, cols)."""
    m = A.matrix if isinstance(A, DiscreteOperator) else np.asarray(A)
    try:
        return np.linalg.svd(m, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericFailureError(f"SVD did not converge: {exc}") from exc


def schatten_norm(A, alpha: float) -> float:
    """(sum s_i^alpha)^(1/alpha); alpha = inf is the largest singular value."""
    if not alpha >= 1:
        raise InvalidInputError("Schatten exponent must be >= 1")
    s = singular_values(A)
    if len(s) == 0:
        return 0.0
    if alpha == math.inf:
        return float(s[0])
    return float(np.sum(s ** alpha) ** (1.0 / alpha))


@lru_cache(maxsize=32)
def _bessel_multiplier_matrix(geometry: GeometrySpec, s: float) -> np.ndarray:
    """Dense matrix of the multiplier (1 + |xi|^2)^(s/2) on grid vectors."""
    lat = frequency_lattice(geometry)
    mesh = lat.mesh()
    mult = (1.0 + sum(m ** 2 for m in mesh)) ** (s / 2.0)
    mult = np.fft.ifftshift(mult)
    n = int(np.prod(geometry.grid_sizes))
    axes = tuple(range(1, geometry.dim + 1))
    basis = np.eye(n).reshape((n,) + geometry.grid_sizes)
    out = np.fft.ifftn(mult[None] * np.fft.fftn(basis, axes=axes), axes=axes)
    out = out.reshape(n, n).T  # column j is the image of basis vector j
    out.setflags(write=False)
    return out


def sobolev_schatten_norm(A: DiscreteOperator, alpha: float, s: float,
                          geometry: GeometrySpec) -> float:
    """Schatten norm of the operator conjugated by <D>^s on both sides."""
    n = int(np.prod(geometry.grid_sizes))
    if A.matrix.shape != (n, n):
        raise InvalidInputError(
            "operator must act on the spatial grid of the given geometry")
    if s == 0.0:
        return schatten_norm(A, alpha)
    Ms = _bessel_multiplier_matrix(geometry, s)
    return schatten_norm(DiscreteOperator(Ms @ A.matrix @ Ms), alpha)


# ---------------------------------------------------------------------------
# extension / restriction


@dataclass(frozen=True, eq=False)
class ExtensionMatrix:
    """Folded matrix of the band-limited space-time extension operator.

    Rows run over the (t, x) grid in C order; columns over the lattice
    points of the band [-N, N]^d (Nyquist rows excluded), in C order of
    the centered lattice.
    """

    matrix: np.ndarray            # (T * prod(grid), band)
    xi: np.ndarray                # (band, d) frequencies per column
    phi: np.ndarray               # (band,) symbol values per column
    times: np.ndarray
    geometry: GeometrySpec
    N: int
    theta: float

    @property
    def adjoint(self) -> np.ndarray:
        return self.matrix.conj().T

    @property
    def band_size(self) -> int:
        return self.matrix.shape[1]


def _trapezoid_weights(times: np.ndarray) -> np.ndarray:
    w = np.full(len(times), times[1] - times[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def build_extension_matrix(geometry: GeometrySpec, N: int, interval,
                           time_pts: int, theta: float,
                           cap: int = MATRIX_CAP) -> ExtensionMatrix:
    """Sampled extension operator from band coefficients to space-time."""
    if N < 1 or int(N) != N:
        raise InvalidInputError("band scale N must be a positive integer")
    if time_pts < 2:
        raise InvalidInputError("need at least two time samples")
    t0, t1 = float(interval[0]), float(interval[1])
    if not t1 > t0:
        raise InvalidInputError("empty time interval")
    times = np.linspace(t0, t1, time_pts)

    mask = _band_multiplier(geometry, int(N)) == 1.0
    lat = frequency_lattice(geometry)
    mesh = lat.mesh()
    xi = np.stack([m[mask] for m in mesh], axis=-1)          # (B, d)
    phi = fractional_symbol(geometry, theta)[mask]           # (B,)
    band = xi.shape[0]
    n_space = int(np.prod(geometry.grid_sizes))
    rows = time_pts * n_space
    if rows * band > cap:
        raise CapacityError(
            f"extension matrix {rows} x {band} exceeds cap {cap}")

    coords = [geometry.axis_coordinates(ax) for ax in range(geometry.dim)]
    xmesh = np.meshgrid(*coords, indexing="ij")
    x = np.stack([m.ravel() for m in xmesh], axis=-1)        # (n_space, d)

    # phase[(t,x), b] = x.xi + t*phi(xi)
    space_phase = x @ xi.T                                   # (n_space, B)
    phase = space_phase[None, :, :] + np.multiply.outer(times, phi)[:, None, :]
    mat = np.exp(2j * np.pi * phase).reshape(rows, band)

    w_t = _trapezoid_weights(times)
    row_fac = np.sqrt(np.repeat(w_t, n_space) * geometry.cell_volume)
    col_fac = math.sqrt(geometry.dual_cell)
    mat = row_fac[:, None] * mat * col_fac
    return ExtensionMatrix(mat, xi, phi, times, geometry, int(N), float(theta))


# ---------------------------------------------------------------------------
# duality check


@dataclass(frozen=True)
class DualityReport:
    """Operator-side norm against the best sampled family functional."""

    operator_norm: float          # || W1 E E* W2 ||_{S^alpha}
    max_sampled_ratio: float      # max over samples of functional / ||lambda||
    alpha: float
    alpha_conj: float
    samples: int
    dominance_ok: bool | None     # None unless W1 and W2 coincide


def _conjugate(alpha: float) -> float:
    if alpha == math.inf:
        return 1.0
    if alpha == 1.0:
        return math.inf
    return alpha / (alpha - 1.0)


def _lambda_values(kind: str, M: int, alpha_conj: float,
                   rng: np.random.Generator) -> np.ndarray:
    if kind == "flat":
        lam = np.ones(M)
    elif kind == "one-hot":
        lam = np.zeros(M)
        lam[0] = 1.0
    else:  # power-law decay
        lam = 1.0 / np.arange(1, M + 1, dtype=float)
    if alpha_conj == math.inf:
        return lam / lam.max()
    return lam / np.sum(lam ** alpha_conj) ** (1.0 / alpha_conj)


def _lambda_norm(lam: np.ndarray, alpha_conj: float) -> float:
    if alpha_conj == math.inf:
        return float(np.max(lam))
    return float(np.sum(lam ** alpha_conj) ** (1.0 / alpha_conj))


def duality_check(W1: SpaceTimeField, W2: SpaceTimeField, N: int,
                  alpha: float, geometry: GeometrySpec, sample_count: int,
                  theta: float = 2.0, seed: int = 0) -> DualityReport:
    """Exact Schatten norm of W1 E E* W2 against sampled family functionals.

    Weights act by multiplication on the space-time samples and must be
    real.  For W1 = W2 the sampled side can never beat the operator side
    (trace Hoelder at matrix scale); the report carries that flag.
    """
    if not alpha >= 1:
        raise InvalidInputError("Schatten exponent must be >= 1")
    for W in (W1, W2):
        if W.geometry != geometry:
            raise InvalidInputError("weight geometry mismatch")
        if np.max(np.abs(W.values.imag)) > 1e-10:
            raise InvalidInputError("weights must be real-valued")
    if W1.values.shape != W2.values.shape or \
            not np.array_equal(W1.times, W2.times):
        raise InvalidInputError("weights must share one space-time grid")

    ext = build_extension_matrix(geometry, N, W1.interval, len(W1.times), theta)
    rows = ext.matrix.shape[0]
    if rows * rows > MATRIX_CAP:
        raise CapacityError(
            f"space-time Gram {rows} x {rows} exceeds cap {MATRIX_CAP}")
    w1 = W1.values.real.ravel()
    w2 = W2.values.real.ravel()
    gram = ext.matrix @ ext.adjoint
    op = DiscreteOperator(w1[:, None] * gram * w2[None, :])
    lhs_op = schatten_norm(op, alpha)

    alpha_conj = _conjugate(alpha)
    rng = np.random.default_rng(seed)
    B = ext.band_size
    kinds = ("flat", "power", "one-hot")
    weighted_ext = w1[:, None] * ext.matrix
    best = 0.0
    for i in range(sample_count):
        M = int(rng.integers(1, B + 1))
        raw = rng.standard_normal((B, M)) + 1j * rng.standard_normal((B, M))
        Q, _ = np.linalg.qr(raw)
        lam = _lambda_values(kinds[i % 3], M, alpha_conj, rng)
        images = weighted_ext @ Q                    # (rows, M)
        functional = float(np.sum(lam * np.sum(np.abs(images) ** 2, axis=0)))
        best = max(best, functional / _lambda_norm(lam, alpha_conj))

    same = W1.values is W2.values or np.array_equal(W1.values, W2.values)
    dominance = bool(best <= lhs_op * (1 + 1e-8)) if same else None
    return DualityReport(lhs_op, best, alpha, alpha_conj,
                         sample_count, dominance)
