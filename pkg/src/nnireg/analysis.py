"""Verification machinery for the theory behind the solvers.

Spectral filters of the preconditioned fixed-point iteration, source-condition
constructions (power and logarithmic index functions), the qualification
bound, perturbation constants of the resolvent difference, fixed-point
residuals, a brute-force non-negative least-squares oracle (support-set
enumeration), and log-log rate fitting.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from nnireg.errors import (
    DimensionMismatchError,
    InvariantViolationError,
    UnsupportedConfigurationError,
)
from nnireg.operators import (
    DenseOperator,
    Preconditioner,
    apply,
    apply_adjoint,
    gram_model,
    resolvent_solve,
    spectral_norm,
)
from nnireg.seeding import child_rng
from nnireg.solvers import RelaxationSchedule

__all__ = [
    "SpectralDecomposition",
    "SourceSpec",
    "PerturbationBounds",
    "eigendecompose",
    "gk_apply",
    "phi_eval",
    "build_source_problem",
    "qualification_bound_check",
    "perturbation_constants",
    "fixed_point_residual",
    "nnls_bruteforce",
    "rate_fit",
    "relaxation_partial_sup",
]

EIGEN_SIZE_CAP = 256
NNLS_SIZE_CAP = 12


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigensystem of A^T A: descending eigenvalues, orthonormal columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=np.float64)
        u = np.asarray(self.eigenvectors, dtype=np.float64)
        if u.shape != (lam.shape[0], lam.shape[0]):
            raise DimensionMismatchError("eigenvector matrix must be square")
        if np.any(np.diff(lam) > 0):
            raise InvariantViolationError("eigenvalues must be sorted descending")
        if np.linalg.norm(u.T @ u - np.eye(lam.shape[0])) > 1e-10:
            raise InvariantViolationError("eigenvectors must be orthonormal to 1e-10")
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "eigenvectors", u)


@dataclass(frozen=True)
class SourceSpec:
    """Smoothness spec x0 - xdag = phi(A^T A) v with a power or logarithmic
    index function."""

    kind: str  # "holder" | "log"
    exponent: float
    v: np.ndarray

    def __post_init__(self):
        if self.kind not in ("holder", "log"):
            raise InvariantViolationError(f"unknown source kind {self.kind!r}")
        if not self.exponent > 0:
            raise InvariantViolationError("source exponent must be > 0")
        v = np.asarray(self.v, dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise InvariantViolationError("source element must be finite")
        object.__setattr__(self, "v", v)


@dataclass(frozen=True)
class PerturbationBounds:
    """Constants of the resolvent perturbation estimates."""

    c1: float
    c2: float
    h0: float

    def __post_init__(self):
        if not (self.c1 > 0 and self.c2 > 0 and self.h0 > 0):
            raise InvariantViolationError("perturbation constants must be > 0")


def eigendecompose(op: DenseOperator) -> SpectralDecomposition:
    """Full symmetric eigendecomposition of A^T A (descending)."""
    if op.cols > EIGEN_SIZE_CAP:
        raise UnsupportedConfigurationError(
            f"eigendecompose is capped at {EIGEN_SIZE_CAP} columns"
        )
    gram = gram_model(op)
    lam, u = np.linalg.eigh(gram)
    lam, u = lam[::-1].copy(), u[:, ::-1].copy()
    dec = SpectralDecomposition(lam, u)
    recon = (u * lam) @ u.T
    if np.linalg.norm(recon - gram) > 1e-9 * max(np.linalg.norm(gram), 1e-300):
        raise InvariantViolationError("eigendecomposition failed to reconstruct A^T A")
    return dec


def gk_apply(dec: SpectralDecomposition, mu: float, k: int, x: np.ndarray) -> np.ndarray:
    """Apply the iteration filter g_k(lambda) = ((mu-lambda)/(mu+lambda))^k
    through the decomposition."""
    if not mu > 0:
        raise InvariantViolationError("mu must be > 0")
    x = np.asarray(x, dtype=np.float64)
    lam, u = dec.eigenvalues, dec.eigenvectors
    factors = ((mu - lam) / (mu + lam)) ** k
    return u @ (factors * (u.T @ x))


def phi_eval(spec: SourceSpec, lam: float) -> float:
    """Index-function value phi(lam) for lam > 0.

    holder: lam^p.  log: log^{-nu}(1/lam) for lam <= e^{-2nu-1}, continued by
    (2nu+1)^{-nu-1/2} sqrt(2 nu e^{2nu+1} lam + 1) beyond the junction (the
    two branches agree there).
    """
    if not lam > 0:
        raise InvariantViolationError("phi is defined for lambda > 0")
    if spec.kind == "holder":
        return float(lam**spec.exponent)
    nu = spec.exponent
    junction = math.exp(-2.0 * nu - 1.0)
    if lam <= junction:
        return float(math.log(1.0 / lam) ** (-nu))
    return float(
        (2.0 * nu + 1.0) ** (-nu - 0.5)
        * math.sqrt(2.0 * nu * math.exp(2.0 * nu + 1.0) * lam + 1.0)
    )


def build_source_problem(
    dec: SpectralDecomposition, spec: SourceSpec, x0: np.ndarray
) -> tuple[np.ndarray, bool]:
    """xdag = x0 - phi(A^T A) v; valid only when xdag is componentwise >= 0.

    Invalid outputs must not be used in convergence experiments (the theory
    requires xdag in the non-negative cone); they are returned for inspection
    rather than clipped.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if spec.v.shape != x0.shape or x0.shape != dec.eigenvalues.shape:
        raise DimensionMismatchError("x0, v and the decomposition must share length")
    u, lam = dec.eigenvectors, dec.eigenvalues
    phi = np.array([phi_eval(spec, l) if l > 0 else 0.0 for l in lam])
    xdag = x0 - u @ (phi * (u.T @ spec.v))
    return xdag, bool(xdag.min() >= 0)


def qualification_bound_check(p: float, mu: float, k_list) -> bool:
    """Check sup_lam lam^p g_k(lam) <= (p mu / 2)^p k^{-p} on a log grid.

    The grid spans (0, mu], where the filter is non-negative and the proof's
    critical point lies.
    """
    if not (p > 0 and mu > 0):
        raise InvariantViolationError("need p > 0 and mu > 0")
    lam = np.geomspace(mu * 1e-12, mu, 10_000)
    for k in k_list:
        if k < 1:
            raise InvariantViolationError("filter index must be >= 1")
        values = lam**p * ((mu - lam) / (mu + lam)) ** k
        bound = (p * mu / 2.0) ** p * float(k) ** (-p)
        if values.max() > bound * (1.0 + 1e-9):
            return False
    return True


def perturbation_constants(
    a: DenseOperator, g: Preconditioner, probes: int = 20, seed: int = 0
) -> PerturbationBounds:
    """Constants for the resolvent-difference bounds under ||A_h - A|| <= h.

    c1 = 12 ||A|| / ||G + A^T A|| bounds the iteration-matrix difference for
    h <= h0 = min(||A||, ||G + A^T A|| / (3 ||A||)) / 2.  c2 has no displayed
    closed form and is estimated empirically as the largest observed ratio
    ||(G + A_h^T A_h)^{-1} A_h^T - (G + A^T A)^{-1} A^T|| / h over seeded probe
    perturbations; reports should label it as an empirical estimate.
    """
    norm_a = spectral_norm(a)
    if norm_a == 0.0:
        raise InvariantViolationError("operator must be nonzero")
    gram_norm = float(np.linalg.eigvalsh(g.dense() + gram_model(a))[-1])
    c1 = 12.0 * norm_a / gram_norm
    h0 = 0.5 * min(norm_a, gram_norm / (3.0 * norm_a))

    rng = child_rng(seed, "perturbation-probes")
    base = _resolvent_adjoint_matrix(g, a)
    c2 = 0.0
    for i in range(probes):
        direction = rng.standard_normal(a.entries.shape)
        direction /= np.linalg.svd(direction, compute_uv=False)[0]
        h = h0 * float(rng.uniform(0.1, 1.0))
        a_h = DenseOperator(a.entries + h * direction)
        diff = _resolvent_adjoint_matrix(g, a_h) - base
        c2 = max(c2, float(np.linalg.svd(diff, compute_uv=False)[0]) / h)
    return PerturbationBounds(c1=c1, c2=c2, h0=h0)


def _resolvent_adjoint_matrix(g: Preconditioner, op: DenseOperator) -> np.ndarray:
    """(G + A^T A)^{-1} A^T as a dense matrix."""
    cols = []
    eye = np.eye(op.rows)
    for i in range(op.rows):
        cols.append(resolvent_solve(g, op, apply_adjoint(op, eye[i])))
    return np.column_stack(cols)


def fixed_point_residual(z: np.ndarray, p, g: Preconditioner) -> float:
    """||z - T(z)|| for the fixed-point map T of the preconditioned scheme,
    evaluated with the exact pair (A, y) when the problem carries one."""
    op = p.operator_exact if p.operator_exact is not None else p.operator_noisy
    y = p.data_exact if p.data_exact is not None else p.data_noisy
    z = np.asarray(z, dtype=np.float64)
    az = np.abs(z)
    rhs = g.apply(az) - apply_adjoint(op, apply(op, az)) + 2.0 * apply_adjoint(op, y)
    t = resolvent_solve(g, op, rhs)
    return float(np.linalg.norm(z - t))


def nnls_bruteforce(a: DenseOperator, y: np.ndarray, x0: np.ndarray) -> np.ndarray:
    """Non-negative least squares by support-set enumeration (oracle).

    Enumerates all supports S, solves the unconstrained least squares
    restricted to S, and keeps candidates satisfying x >= 0 with the
    first-order conditions r = A^T(Ax - y) >= -1e-10 componentwise and
    <x, r> <= 1e-10.  Among minimal-residual candidates the one closest to x0
    wins, ties broken by lexicographically smallest support.
    """
    n = a.cols
    if n > NNLS_SIZE_CAP:
        raise UnsupportedConfigurationError(
            f"support enumeration is exponential; capped at {NNLS_SIZE_CAP} columns"
        )
    y = np.asarray(y, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    if y.shape != (a.rows,) or x0.shape != (n,):
        raise DimensionMismatchError("inconsistent shapes for the oracle")

    entries = a.entries
    candidates = []
    for size in range(n + 1):
        for support in itertools.combinations(range(n), size):
            x = np.zeros(n)
            if support:
                sub = entries[:, support]
                sol, *_ = np.linalg.lstsq(sub, y, rcond=None)
                x[list(support)] = sol
            if x.min() < 0:
                continue
            r = entries.T @ (entries @ x - y)
            if r.min() < -1e-10 or float(x @ r) > 1e-10:
                continue
            candidates.append((float(np.linalg.norm(entries @ x - y)), support, x))
    if not candidates:
        raise InvariantViolationError("oracle found no first-order point (numerical failure)")
    best_res = min(c[0] for c in candidates)
    tol = 1e-12 * max(1.0, best_res)
    near = [c for c in candidates if c[0] <= best_res + tol]
    near.sort(key=lambda c: (float(np.linalg.norm(c[2] - x0)), c[1]))
    return near[0][2]


def rate_fit(noise_levels, errors) -> float:
    """Least-squares slope of log(error) against log(noise)."""
    noise = np.asarray(noise_levels, dtype=np.float64)
    errs = np.asarray(errors, dtype=np.float64)
    if noise.shape != errs.shape or noise.size < 3:
        raise InvariantViolationError("need at least 3 matched (noise, error) points")
    if noise.min() <= 0 or errs.min() <= 0:
        raise InvariantViolationError("rate fit needs positive noise levels and errors")
    slope, _ = np.polyfit(np.log(noise), np.log(errs), 1)
    return float(slope)


def relaxation_partial_sup(schedule: RelaxationSchedule, k_max: int) -> float:
    """sup over k <= k_max of sum_{i<=k} a_i prod_{j=i..k} (1 - a_j).

    Boundedness of this quantity is the extra condition the anchored scheme's
    discrepancy-stopped convergence needs; evaluated numerically for the
    shipped schedules (for a_k = 1/(k+1) the partial sums increase to 1).
    """
    alphas = schedule.values(k_max)
    if alphas is None:
        return 0.0
    t = 0.0
    sup = 0.0
    for ak in alphas:
        t = (1.0 - ak) * (t + ak)
        sup = max(sup, t)
    return float(sup)
