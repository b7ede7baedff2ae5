"""Biosensor-tomography forward model.

A rate-constant map x(ka, kd) over a rectangle Omega produces a sensorgram
y(t, C) over a measurement rectangle Theta through a Fredholm first-kind
integral operator whose kernel is the piecewise association/dissociation
response of first-order binding kinetics with injection start t0, detector
delay dt and injection duration t_inj.

Discretization: normalized indicator (piecewise-constant) bases on uniform
rectangular cells with midpoint quadrature.  The assembled matrix maps cell
values of x to orthonormal-basis coefficients of y:

    A[i, j] = K(t_i, C_i; ka_j, kd_j) * area(omega_j) * sqrt(area(theta_i))

All integrals (assembly and the normalization constant) use the same one
point-per-cell midpoint rule, so assembly is deterministic bit-for-bit.
Quadrature nodes landing exactly on a kernel branch boundary take the left
branch.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from nnireg.errors import (
    DegenerateModelError,
    DimensionMismatchError,
    InvariantViolationError,
)
from nnireg.operators import DenseOperator, apply, operator_distance
from nnireg.seeding import child_rng

__all__ = [
    "Rect",
    "Grid2D",
    "KineticsModel",
    "RateConstantMap",
    "Sensorgram",
    "kernel_eval",
    "assemble_operator",
    "normalize",
    "perturb_timing",
    "perturb_data",
    "phantom",
    "gaussian_mixture_phantom",
    "synth_sensorgram",
    "verify_kernel_perturbation_bound",
    "EXAMPLE_DOMAINS",
]

# quadrature slack absorbed by the timing-perturbation operator bound
TIMING_BOUND_SLACK = 0.05


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle [lo1, hi1] x [lo2, hi2]."""

    lo1: float
    hi1: float
    lo2: float
    hi2: float

    def __post_init__(self):
        vals = (self.lo1, self.hi1, self.lo2, self.hi2)
        if not all(np.isfinite(v) for v in vals):
            raise InvariantViolationError("rectangle bounds must be finite")
        if not (self.lo1 < self.hi1 and self.lo2 < self.hi2):
            raise InvariantViolationError("rectangle needs lo < hi on both axes")

    def as_list(self) -> list[float]:
        return [self.lo1, self.hi1, self.lo2, self.hi2]


@dataclass(frozen=True)
class Grid2D:
    """Uniform nx-by-ny cell partition of a rectangle.

    Cells are ordered row-major with the first axis outer; centroid(i) and
    area(i) describe cell i.  The cells tile the rectangle exactly by
    construction.
    """

    rect: Rect
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise InvariantViolationError("grid needs nx, ny >= 1")

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def cell_area(self) -> float:
        return ((self.rect.hi1 - self.rect.lo1) / self.nx) * (
            (self.rect.hi2 - self.rect.lo2) / self.ny
        )

    def centroids(self) -> np.ndarray:
        """(size, 2) array of cell centers."""
        h1 = (self.rect.hi1 - self.rect.lo1) / self.nx
        h2 = (self.rect.hi2 - self.rect.lo2) / self.ny
        c1 = self.rect.lo1 + h1 * (np.arange(self.nx) + 0.5)
        c2 = self.rect.lo2 + h2 * (np.arange(self.ny) + 0.5)
        g1, g2 = np.meshgrid(c1, c2, indexing="ij")
        return np.column_stack([g1.ravel(), g2.ravel()])

    def areas(self) -> np.ndarray:
        return np.full(self.size, self.cell_area)


@dataclass(frozen=True)
class KineticsModel:
    """Kinetic kernel parameters and domains; normalization is 1 until
    `normalize` rescales the kernel so the assembled operator norm is <= 1/2."""

    omega: Rect
    theta: Rect
    t0: float
    dt: float
    t_inj: float
    normalization: float = 1.0

    def __post_init__(self):
        if not self.t_inj > 0:
            raise InvariantViolationError("t_inj must be > 0")
        if self.dt < 0:
            raise InvariantViolationError("dt must be >= 0")
        if not self.theta.lo2 > 0:
            raise InvariantViolationError("concentration lower bound must be > 0")
        if self.omega.lo1 < 0 or self.omega.lo2 < 0:
            raise InvariantViolationError("rate constants must be >= 0")
        if not self.normalization > 0:
            raise InvariantViolationError("normalization must be > 0")


@dataclass(frozen=True)
class RateConstantMap:
    """Cell values of a rate-constant map over an Omega grid."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.grid.size,):
            raise DimensionMismatchError("values length must equal grid size")
        if not np.all(np.isfinite(v)):
            raise InvariantViolationError("values must be finite")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class Sensorgram:
    """Cell samples of the response surface over a Theta grid."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.grid.size,):
            raise DimensionMismatchError("values length must equal grid size")
        if not np.all(np.isfinite(v)):
            raise InvariantViolationError("values must be finite")
        object.__setattr__(self, "values", v)


def _kernel_raw(t, C, ka, kd, t0, dt_value, t_inj):
    """Piecewise kernel before normalization, broadcasting over arrays."""
    t = np.asarray(t, dtype=np.float64)
    s = kd + ka * C
    safe = np.where(s > 0, s, 1.0)
    coef = np.where(s > 0, ka * C / safe, 0.0)
    assoc = coef * (1.0 - np.exp(-safe * (t - t0)))
    dissoc = (
        coef * (1.0 - np.exp(-safe * t_inj)) * np.exp(-kd * (t - t0 - t_inj))
    )
    return np.where(
        t <= t0 + dt_value,
        0.0,
        np.where(t <= t0 + t_inj + dt_value, assoc, dissoc),
    )


def kernel_eval(m: KineticsModel, t: float, C: float, ka: float, kd: float) -> float:
    """Kernel value at one point, divided by the model's normalization.

    Zero for t <= t0 + dt; the association branch up to t0 + t_inj + dt; the
    dissociation branch beyond.  Branch boundaries take the left branch.
    """
    if not C > 0:
        raise InvariantViolationError("concentration C must be > 0")
    if ka < 0 or kd < 0 or ka + kd <= 0:
        raise InvariantViolationError("need ka, kd >= 0 with ka + kd > 0")
    return float(_kernel_raw(t, C, ka, kd, m.t0, m.dt, m.t_inj)) / m.normalization


def _kernel_matrix(
    m: KineticsModel, model_grid: Grid2D, data_grid: Grid2D, dt_value: float
) -> np.ndarray:
    mc = model_grid.centroids()
    dc = data_grid.centroids()
    k = _kernel_raw(
        dc[:, 0][:, None], dc[:, 1][:, None],
        mc[:, 0][None, :], mc[:, 1][None, :],
        m.t0, dt_value, m.t_inj,
    )
    return k / m.normalization


def assemble_operator(
    m: KineticsModel,
    model_grid: Grid2D,
    data_grid: Grid2D,
    dt_value: float | None = None,
) -> DenseOperator:
    """Assemble the discrete forward operator on the given grids.

    dt_value overrides the detector delay (used for perturbed operators);
    None assembles with the model's own dt.
    """
    dt_value = m.dt if dt_value is None else float(dt_value)
    k = _kernel_matrix(m, model_grid, data_grid, dt_value)
    entries = k * model_grid.areas()[None, :] * np.sqrt(data_grid.areas())[:, None]
    return DenseOperator(entries)


def normalize(m: KineticsModel, model_grid: Grid2D, data_grid: Grid2D) -> KineticsModel:
    """Rescale the kernel by 2 * sqrt(midpoint quadrature of its squared
    integral) so assembled operators have spectral norm <= 1/2 (plus a small
    quadrature slack).

    Composes with any existing normalization, so re-normalizing an already
    normalized model on the same grids is a no-op up to roundoff.
    """
    k = _kernel_matrix(m, model_grid, data_grid, m.dt)
    q = float(
        np.sum(k**2 * model_grid.areas()[None, :] * data_grid.areas()[:, None])
    )
    if q <= 0.0:
        raise DegenerateModelError("kernel vanishes on the quadrature grid")
    return replace(m, normalization=m.normalization * 2.0 * np.sqrt(q))


def perturb_timing(m: KineticsModel, h_prime: float, seed: int) -> float:
    """One multiplicative uniform draw on the detector delay:
    dt_h = (1 + h' (2u - 1)) dt with u ~ U[0,1) from the "timing" stream."""
    if not 0.0 <= h_prime < 1.0 / np.sqrt(8.0):
        raise InvariantViolationError("h_prime must lie in [0, 1/sqrt(8))")
    u = child_rng(seed, "timing").random()
    return (1.0 + h_prime * (2.0 * u - 1.0)) * m.dt


def perturb_data(
    y: Sensorgram, delta_prime: float, seed: int
) -> tuple[Sensorgram, float]:
    """Componentwise multiplicative uniform noise; returns the perturbed
    sensorgram and the realized delta = ||y^d - y||_2."""
    if delta_prime < 0:
        raise InvariantViolationError("delta_prime must be >= 0")
    u = child_rng(seed, "data-noise").random(y.values.shape[0])
    noisy = y.values * (1.0 + delta_prime * (2.0 * u - 1.0))
    delta = float(np.linalg.norm(noisy - y.values))
    return Sensorgram(y.grid, noisy), delta


EXAMPLE_DOMAINS = {
    "example1": Rect(0.0, 3.0, 0.0, 3.0),
    "example2": Rect(0.0, 9.0, 0.0, 2.0),
}


def phantom(example_id: str, grid: Grid2D) -> RateConstantMap:
    """The two reference phantoms: example1 is identically 1 on [0,3]^2;
    example2 is a double Gaussian on [0,9]x[0,2]."""
    example_id = example_id.lower()
    if example_id not in EXAMPLE_DOMAINS:
        raise InvariantViolationError(f"unknown phantom {example_id!r}")
    if grid.rect != EXAMPLE_DOMAINS[example_id]:
        raise InvariantViolationError(
            f"grid rectangle {grid.rect} does not cover the {example_id} domain"
        )
    c = grid.centroids()
    if example_id == "example1":
        vals = np.ones(grid.size)
    else:
        ka, kd = c[:, 0], c[:, 1]
        vals = 0.5 * (
            np.exp(-8.0 * ((ka - 3.0) ** 2 + (kd - 0.5) ** 2))
            + np.exp(-32.0 * ((ka - 6.0) ** 2 + (kd - 1.5) ** 2))
        )
    return RateConstantMap(grid, vals)


def gaussian_mixture_phantom(grid: Grid2D, components) -> RateConstantMap:
    """Sum of isotropic Gaussians; components are (amplitude, ka_center,
    kd_center, width) with value amp * exp(-width * ((ka-c1)^2 + (kd-c2)^2))."""
    c = grid.centroids()
    ka, kd = c[:, 0], c[:, 1]
    vals = np.zeros(grid.size)
    for amp, c1, c2, width in components:
        if amp < 0 or width <= 0:
            raise InvariantViolationError("components need amp >= 0 and width > 0")
        vals += amp * np.exp(-width * ((ka - c1) ** 2 + (kd - c2) ** 2))
    return RateConstantMap(grid, vals)


def synth_sensorgram(
    op: DenseOperator, x: RateConstantMap, data_grid: Grid2D
) -> Sensorgram:
    """y = A x for the assembled operator (data_grid names the row layout)."""
    if op.cols != x.grid.size:
        raise DimensionMismatchError("operator columns must equal model cells")
    if op.rows != data_grid.size:
        raise DimensionMismatchError("operator rows must equal data cells")
    return Sensorgram(data_grid, apply(op, x.values))


def verify_kernel_perturbation_bound(
    m: KineticsModel, dt_h: float, model_grid: Grid2D, data_grid: Grid2D
) -> tuple[float, bool]:
    """Discrete check of the timing-perturbation bound.

    h_bound = sqrt(2) * |dt_h - dt| bounds the continuous operator distance;
    the assembled matrices must satisfy ||A_h - A|| <= h_bound * 1.05, the 5%
    covering midpoint-quadrature error.
    """
    h_bound = float(np.sqrt(2.0) * abs(dt_h - m.dt))
    a = assemble_operator(m, model_grid, data_grid)
    a_h = assemble_operator(m, model_grid, data_grid, dt_value=dt_h)
    dist = operator_distance(a, a_h)
    return h_bound, bool(dist <= h_bound * (1.0 + TIMING_BOUND_SLACK))
