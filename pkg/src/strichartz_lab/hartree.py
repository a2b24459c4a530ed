"""Finite-rank mean-field dynamics: a structure-preserving split-step
integrator and the integral-equation fixed-point map, plus conservation
diagnostics.

The evolved system couples M orbitals through their weighted density:

    i d/dt u_j = (phi(D) + w * rho) u_j,    rho = sum_k lambda_k |u_k|^2,

equivalently  i d/dt gamma = [phi(D) + w * rho_gamma, gamma]  for the
weighted projector gamma = sum_j lambda_j |u_j><u_j|.

Unit convention: the kinetic multiplier is phi(xi) itself (a lone mode
e^{2 pi i n x} has energy |n|^theta), so the free flight over time t
multiplies coefficients by exp(-i t phi(xi)).  That equals the package
propagator at the rescaled time -t/(2 pi); ``free_flight`` pins the
correspondence.

The fixed-point route iterates

    Phi_1(gamma, rho)(t) = U(t) gamma0 U(-t)
        - i int_0^t U(t-s) [w * rho(s), gamma(s)] U(s-t) ds,

with the time integral by trapezoid on the node grid and the output
re-truncated to its dominant eigendirections (finite rank is the desk
surrogate for the full operator; the discarded mass is reported).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, InvalidInputError, NumericFailureError
from .geometry import (
    Field,
    GeometrySpec,
    SpaceTimeField,
    forward_transform,
    fractional_symbol,
    frequency_lattice,
)
from .norms import mixed_norm
from .schatten import DiscreteOperator, sobolev_schatten_norm

__all__ = [
    "DensityState",
    "PotentialSpec",
    "TrajectoryRecord",
    "OperatorPath",
    "DuhamelIterate",
    "FixedPointResult",
    "convolve_potential",
    "free_flight",
    "split_step",
    "evolve",
    "hartree_energy",
    "duhamel_map",
    "fixed_point_iterate",
]


@dataclass(frozen=True, eq=False)
class DensityState:
    """Weighted orbital family gamma = sum_j lambda_j |u_j><u_j|."""

    members: np.ndarray          # (M, *grid)
    weights: np.ndarray          # (M,) nonnegative, nonincreasing
    geometry: GeometrySpec
    theta: float

    def __post_init__(self):
        m = np.array(self.members, dtype=np.complex128)
        w = np.array(self.weights, dtype=float)
        if m.ndim != self.geometry.dim + 1 or \
                m.shape[1:] != self.geometry.grid_sizes:
            raise InvalidInputError("member block does not match the grid")
        if w.ndim != 1 or len(w) != m.shape[0]:
            raise InvalidInputError("one weight per member required")
        if np.any(w < 0) or np.any(np.diff(w) > 1e-15):
            raise InvalidInputError("weights must be nonnegative nonincreasing")
        if not np.all(np.isfinite(m)):
            raise InvalidInputError("members contain non-finite entries")
        if not self.theta > 0:
            raise InvalidInputError("dispersion order must be positive")
        m.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "members", m)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.members.shape[0]

    def member_mass(self) -> np.ndarray:
        axes = tuple(range(1, self.members.ndim))
        return np.sum(np.abs(self.members) ** 2, axis=axes) \
            * self.geometry.cell_volume

    def gram(self) -> np.ndarray:
        flat = self.members.reshape(self.size, -1)
        return (flat.conj() @ flat.T) * self.geometry.cell_volume

    def density(self) -> np.ndarray:
        return np.tensordot(self.weights, np.abs(self.members) ** 2,
                            axes=(0, 0))

    def to_matrix(self) -> np.ndarray:
        """gamma as a matrix on grid samples (cell volume folded in)."""
        flat = self.members.reshape(self.size, -1)
        return (flat.T * self.weights) @ flat.conj() \
            * self.geometry.cell_volume


@dataclass(frozen=True)
class PotentialSpec:
    """Interaction potential, specified by its real even Fourier multiplier."""

    kind: str                    # yukawa | gaussian | cosine | identity | zero
    a: float = 1.0               # yukawa: (1 + |xi|^2)^(-a)
    sigma_w: float = 1.0         # gaussian width
    k0: int = 1                  # cosine: w(x) = cos(2 pi k0 x_1)
    s: float = 0.5               # Besov reporting metadata
    qprime: float = 2.0

    def __post_init__(self):
        if self.kind not in ("yukawa", "gaussian", "cosine", "identity", "zero"):
            raise InvalidInputError(f"unknown potential kind {self.kind!r}")
        if self.kind == "yukawa" and not self.a > 0:
            raise InvalidInputError("yukawa decay exponent must be positive "
                                    "(use kind='identity' for a = 0)")

    def multiplier(self, geometry: GeometrySpec) -> np.ndarray:
        """w-hat on the centered lattice; real and even by construction."""
        mesh = frequency_lattice(geometry).mesh()
        r2 = sum(m ** 2 for m in mesh)
        if self.kind == "zero":
            return np.zeros(geometry.grid_sizes)
        if self.kind == "identity":
            return np.ones(geometry.grid_sizes)
        if self.kind == "yukawa":
            return (1.0 + r2) ** (-self.a)
        if self.kind == "gaussian":
            return np.exp(-0.5 * (self.sigma_w ** 2) * r2)
        mult = np.zeros(geometry.grid_sizes)
        first = mesh[0]
        rest_zero = np.ones(geometry.grid_sizes, dtype=bool)
        for ax in range(1, geometry.dim):
            rest_zero &= mesh[ax] == 0
        mult[(first == self.k0) & rest_zero] = 0.5
        mult[(first == -self.k0) & rest_zero] = 0.5
        return mult

    def field(self, geometry: GeometrySpec) -> Field:
        from .geometry import SpectrumField, inverse_transform
        w = inverse_transform(SpectrumField(
            self.multiplier(geometry).astype(complex), geometry))
        return Field(w.values.real, geometry)

    def besov_norm(self, geometry: GeometrySpec) -> float:
        from .norms import besov_sup_norm
        return besov_sup_norm(self.field(geometry), self.s, self.qprime)


def convolve_potential(w: PotentialSpec, rho: Field) -> Field:
    """w * rho via the spectral product; input and output are real."""
    if np.max(np.abs(rho.values.imag)) > 1e-10:
        raise InvalidInputError("density must be real-valued")
    geom = rho.geometry
    mult = np.fft.ifftshift(w.multiplier(geom))
    vals = np.fft.ifftn(mult * np.fft.fftn(rho.values.real))
    return Field(vals.real, geom)


# ---------------------------------------------------------------------------
# split-step evolution


def _kinetic_phase(geometry: GeometrySpec, theta: float, dt: float) -> np.ndarray:
    sym = np.fft.ifftshift(fractional_symbol(geometry, theta))
    return np.exp(-1j * dt * sym)


def _conv_multiplier(w: PotentialSpec, geometry: GeometrySpec) -> np.ndarray:
    return np.fft.ifftshift(w.multiplier(geometry))


def free_flight(state: DensityState, t: float) -> DensityState:
    """Uncoupled evolution: coefficients times exp(-i t phi(xi))."""
    axes = tuple(range(1, state.members.ndim))
    phase = _kinetic_phase(state.geometry, state.theta, t)
    out = np.fft.ifftn(phase[None] * np.fft.fftn(state.members, axes=axes),
                       axes=axes)
    return DensityState(out, state.weights, state.geometry, state.theta)


def split_step(state: DensityState, dt: float, w: PotentialSpec) -> DensityState:
    """One Strang step: half kinetic, full potential phase, half kinetic.

    Both sub-steps are unimodular multipliers in their own bases, so each
    member's mass and the family Gram matrix are conserved to roundoff.
    """
    if dt < 0:
        raise InvalidInputError("step size must be nonnegative")
    if dt == 0.0:
        return state
    geom = state.geometry
    axes = tuple(range(1, state.members.ndim))
    half = _kinetic_phase(geom, state.theta, 0.5 * dt)
    wmult = _conv_multiplier(w, geom)
    u = np.fft.ifftn(half[None] * np.fft.fftn(state.members, axes=axes),
                     axes=axes)
    rho = np.tensordot(state.weights, np.abs(u) ** 2, axes=(0, 0))
    pot = np.fft.ifftn(wmult * np.fft.fftn(rho)).real
    u = u * np.exp(-1j * dt * pot)[None]
    u = np.fft.ifftn(half[None] * np.fft.fftn(u, axes=axes), axes=axes)
    return DensityState(u, state.weights, geom, state.theta)


def hartree_energy(state: DensityState, w: PotentialSpec) -> float:
    """E = sum_j lambda_j <u_j, phi(D) u_j> + (1/2) int (w * rho) rho."""
    geom = state.geometry
    sym = fractional_symbol(geom, state.theta)
    kinetic = 0.0
    for j in range(state.size):
        coef = forward_transform(Field(state.members[j], geom)).coefficients
        kinetic += state.weights[j] * float(
            np.sum(sym * np.abs(coef) ** 2) * geom.dual_cell)
    rho = state.density()
    pot_field = convolve_potential(w, Field(rho.astype(complex), geom))
    potential = 0.5 * float(np.sum(pot_field.values.real * rho)
                            * geom.cell_volume)
    return kinetic + potential


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """Per-step diagnostics of a split-step run."""

    times: np.ndarray
    member_mass: np.ndarray       # (steps+1, M)
    gram_deviation: np.ndarray    # operator-norm drift from the initial Gram
    energy: np.ndarray
    rho_norm: np.ndarray          # ||rho(t)||_{L^q}
    q_report: float
    final_state: DensityState

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energy - self.energy[0])))

    @property
    def mass_deviation(self) -> float:
        return float(np.max(np.abs(self.member_mass - self.member_mass[0])))

    @property
    def max_gram_deviation(self) -> float:
        return float(np.max(self.gram_deviation))


def evolve(state: DensityState, T: float, dt: float, w: PotentialSpec,
           q_report: float = 2.0) -> TrajectoryRecord:
    """Split-step trajectory with diagnostics recorded at every step."""
    if not (T > 0 and dt > 0):
        raise InvalidInputError("need positive horizon and step")
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > dt:
        raise InvalidInputError("dt must divide T within one step rounding")
    geom = state.geometry
    M = state.size
    times = dt * np.arange(steps + 1)
    mass = np.empty((steps + 1, M))
    gram_dev = np.empty(steps + 1)
    energy = np.empty(steps + 1)
    rho_norm = np.empty(steps + 1)
    gram0 = state.gram()

    def record(i, st):
        mass[i] = st.member_mass()
        gram_dev[i] = float(np.linalg.norm(st.gram() - gram0, ord=2))
        energy[i] = hartree_energy(st, w)
        rho = st.density()
        if q_report == math.inf:
            rho_norm[i] = float(np.max(rho))
        else:
            rho_norm[i] = float((np.sum(rho ** q_report)
                                 * geom.cell_volume) ** (1.0 / q_report))

    record(0, state)
    current = state
    for i in range(1, steps + 1):
        previous = current
        current = split_step(current, dt, w)
        if not np.all(np.isfinite(current.members)):
            partial = TrajectoryRecord(times[:i], mass[:i], gram_dev[:i],
                                       energy[:i], rho_norm[:i], q_report,
                                       previous)
            raise NumericFailureError(
                f"non-finite state at step {i}", best=partial)
        record(i, current)
    return TrajectoryRecord(times, mass, gram_dev, energy, rho_norm,
                            q_report, current)


# ---------------------------------------------------------------------------
# fixed-point route


@dataclass(frozen=True, eq=False)
class OperatorPath:
    """Hermitian finite-rank operator per time node, eigen-factored.

    ``weights[i]`` are signed eigenvalues (the iteration can leave the
    positive cone), ``members[i]`` the corresponding orthonormal
    eigenvectors as rows over the flattened grid.
    """

    times: np.ndarray
    weights: list                 # i -> (r_i,)
    members: list                 # i -> (r_i, n_space)
    geometry: GeometrySpec
    theta: float
    truncation_mass: np.ndarray   # trace-norm mass discarded per node

    def matrix(self, i: int) -> np.ndarray:
        V = self.members[i]
        return (V.T * self.weights[i]) @ V.conj()

    def density(self, i: int) -> np.ndarray:
        rho = np.sum(self.weights[i][:, None] * np.abs(self.members[i]) ** 2,
                     axis=0) / self.geometry.cell_volume
        return rho.reshape(self.geometry.grid_sizes)

    def density_film(self) -> SpaceTimeField:
        frames = np.stack([self.density(i).real
                           for i in range(len(self.times))])
        return SpaceTimeField(frames, self.times, self.geometry)


def _conjugate_flow(mat: np.ndarray, t: float, geometry: GeometrySpec,
                    theta: float) -> np.ndarray:
    """U(t) mat U(-t) with U(t) = exp(-i t phi(D))."""
    if t == 0.0:
        return mat
    grid = geometry.grid_sizes
    axes = tuple(range(geometry.dim))
    phase = _kinetic_phase(geometry, theta, t)
    n = mat.shape[0]

    def apply_left(X):
        Xg = X.reshape(grid + (n,))
        Yg = np.fft.ifftn(phase[..., None] *
                          np.fft.fftn(Xg, axes=axes), axes=axes)
        return Yg.reshape(n, n)

    return apply_left(apply_left(mat).conj().T).conj().T


def _truncate_hermitian(mat: np.ndarray, rank: int):
    herm = 0.5 * (mat + mat.conj().T)
    vals, vecs = np.linalg.eigh(herm)
    order = np.argsort(-np.abs(vals))
    keep, drop = order[:rank], order[rank:]
    return vals[keep], vecs[:, keep].T, float(np.sum(np.abs(vals[drop])))


def _state_matrix(gamma0: DensityState) -> np.ndarray:
    return gamma0.to_matrix()


def duhamel_map(path: OperatorPath, rho: SpaceTimeField,
                gamma0: DensityState, w: PotentialSpec,
                rank: int) -> tuple[OperatorPath, SpaceTimeField]:
    """One application of the integral-equation map.

    The commutator integrand is rotated to the interaction picture, so a
    single cumulative trapezoid and one flow conjugation per node produce
    every Phi_1(t_i).  Output operators are re-truncated to ``rank``
    eigendirections and the discarded trace-norm mass recorded.
    """
    geom = gamma0.geometry
    theta = gamma0.theta
    n = int(np.prod(geom.grid_sizes))
    if rank > n:
        raise CapacityError(f"rank cap {rank} exceeds grid dimension {n}")
    if path.geometry != geom:
        raise InvalidInputError("operator path and data live on one geometry")
    if not np.array_equal(path.times, rho.times):
        raise InvalidInputError("operator path and density share one grid")
    times = path.times
    nt = len(times)
    h = times[1] - times[0]
    wmult = _conv_multiplier(w, geom)

    gamma0_mat = _state_matrix(gamma0)
    integ = np.zeros_like(gamma0_mat)
    prev_w = None
    new_weights, new_members, new_mass = [], [], []
    rho_out = np.empty((nt,) + geom.grid_sizes)
    for i in range(nt):
        pot = np.fft.ifftn(wmult * np.fft.fftn(rho.values[i].real)).real.ravel()
        g_i = path.matrix(i)
        comm = pot[:, None] * g_i - g_i * pot[None, :]
        w_i = _conjugate_flow(comm, -float(times[i] - times[0]), geom, theta)
        if prev_w is not None:
            integ = integ + 0.5 * h * (prev_w + w_i)
        prev_w = w_i
        phi_mat = _conjugate_flow(gamma0_mat - 1j * integ,
                                  float(times[i] - times[0]), geom, theta)
        vals, vecs, dropped = _truncate_hermitian(phi_mat, rank)
        new_weights.append(vals)
        new_members.append(vecs)
        new_mass.append(dropped)
        rho_out[i] = np.real(np.diagonal(
            (vecs.T * vals) @ vecs.conj())).reshape(geom.grid_sizes) \
            / geom.cell_volume
    out_path = OperatorPath(times, new_weights, new_members, geom, theta,
                            np.array(new_mass))
    return out_path, SpaceTimeField(rho_out, times, geom)


def free_path(gamma0: DensityState, T: float, time_pts: int) -> tuple[OperatorPath, SpaceTimeField]:
    """Flow-conjugated initial operator: the w = 0 solution."""
    geom = gamma0.geometry
    times = np.linspace(0.0, float(T), time_pts)
    weights, members = [], []
    rho = np.empty((time_pts,) + geom.grid_sizes)
    for i, t in enumerate(times):
        st = free_flight(gamma0, float(t))
        weights.append(st.weights.astype(float))
        members.append(st.members.reshape(st.size, -1)
                       * math.sqrt(geom.cell_volume))
        rho[i] = st.density()
    path = OperatorPath(times, weights, members, geom, gamma0.theta,
                        np.zeros(time_pts))
    return path, SpaceTimeField(rho, times, geom)


@dataclass(frozen=True, eq=False)
class DuhamelIterate:
    """One fixed-point iterate with its distance to the previous one."""

    index: int
    path: OperatorPath
    rho: SpaceTimeField
    residual: float               # C0_t Sobolev-Schatten + L^p_t L^q_x
    ratio: float | None           # residual_k / residual_{k-1}


@dataclass(frozen=True, eq=False)
class FixedPointResult:
    iterates: list
    contractive: bool
    diverged: bool
    converged: bool               # residual fell below the numeric floor
    alpha_prime: float
    s: float

    @property
    def final(self) -> DuhamelIterate:
        return self.iterates[-1]


def _xt_distance(pa: OperatorPath, ra: SpaceTimeField, pb: OperatorPath,
                 rb: SpaceTimeField, alpha_prime: float, s: float,
                 p: float, q: float) -> float:
    geom = pa.geometry
    best = 0.0
    for i in range(len(pa.times)):
        diff = DiscreteOperator(pa.matrix(i) - pb.matrix(i))
        best = max(best, sobolev_schatten_norm(diff, alpha_prime, s, geom))
    drho = SpaceTimeField(ra.values - rb.values, ra.times, geom)
    return best + mixed_norm(drho, p, q)


def fixed_point_iterate(gamma0: DensityState, w: PotentialSpec, T: float,
                        K: int, p: float, q: float, s: float | None = None,
                        time_pts: int = 26, rank: int | None = None,
                        converged_floor: float = 1e-13) -> FixedPointResult:
    """Iterate the integral-equation map from the free solution.

    Residuals are measured in the C0_t Sobolev-Schatten + L^p_t L^q_x
    norm with alpha' = 2q/(q+1).  Contraction holds when every recorded
    ratio stays below 1; a residual at or below ``converged_floor`` is
    numerical zero and stops the run (ratios at the roundoff floor carry
    no information).  Three consecutive growing residuals flag
    divergence, reported rather than raised.
    """
    if K < 2:
        raise InvalidInputError("need at least two iterations")
    from .norms import classify_pair
    pair = classify_pair(gamma0.geometry.dim, p, q, gamma0.theta)
    if "density" not in pair.kinds:
        raise InvalidInputError("(p, q) must sit on the density line")
    alpha_prime = 2.0 * q / (q + 1.0)
    if s is None:
        s = 0.5 / p + 0.05       # half the 1/p loss plus margin
    if rank is None:
        rank = 4 * gamma0.size

    path, rho = free_path(gamma0, T, time_pts)
    iterates: list[DuhamelIterate] = []
    residuals: list[float] = []
    grew = 0
    diverged = False
    converged = False
    for k in range(1, K + 1):
        new_path, new_rho = duhamel_map(path, rho, gamma0, w, rank)
        res = _xt_distance(new_path, new_rho, path, rho, alpha_prime, s, p, q)
        ratio = res / residuals[-1] if residuals and residuals[-1] > 0 else None
        iterates.append(DuhamelIterate(k, new_path, new_rho, res, ratio))
        grew = grew + 1 if residuals and res > residuals[-1] else 0
        residuals.append(res)
        path, rho = new_path, new_rho
        if res <= converged_floor:
            converged = True
            break
        if grew >= 3:
            diverged = True
            break
    ratios = [it.ratio for it in iterates
              if it.ratio is not None and it.residual > converged_floor]
    contractive = (not diverged) and all(r < 1 for r in ratios) \
        and (bool(ratios) or converged)
    return FixedPointResult(iterates, contractive, diverged, converged,
                            alpha_prime, s)
