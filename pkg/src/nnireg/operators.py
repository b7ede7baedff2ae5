"""Dense linear-operator core.

Apply/adjoint/Gram products, spectral norms by power iteration, the
preconditioner catalog, and the two resolvent solves the fixed-point schemes
are built from:

    model space:  (G + A^T A) z = rhs
    data space:   (Gt + A A^T) w = r,   Gt = mu*I for scalar G,
                                        Gt = G for square systems

Symmetric (Cholesky) factorizations are computed once per (preconditioner,
operator) pair and cached by content fingerprint; discretizations here are a
few hundred unknowns at most, so everything is dense.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from nnireg.errors import (
    ConvergenceFailureError,
    DimensionMismatchError,
    InvariantViolationError,
    UnsupportedConfigurationError,
)
from nnireg.seeding import child_rng

__all__ = [
    "DenseOperator",
    "Preconditioner",
    "PowerIterationConfig",
    "apply",
    "apply_adjoint",
    "spectral_norm",
    "operator_distance",
    "gram_model",
    "gram_data",
    "make_preconditioner",
    "resolvent_solve",
    "companion_resolvent_apply",
]

PRECONDITIONER_CATALOG = ("G1", "G2", "G3", "G4", "G5", "G6", "G7", "G8")

# scalar factors for G1..G4, minimum-diagonal factors for G5/G6 (and their
# orthogonal conjugations G7/G8)
_SCALAR_FACTORS = {"G1": 1e-6, "G2": 1e-4, "G3": 1e-3, "G4": 1e-2}
_DIAG_FACTORS = {"G5": 1e-4, "G6": 1e-3, "G7": 1e-4, "G8": 1e-3}


def _fingerprint(*arrays: np.ndarray) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:32]


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class DenseOperator:
    """Discretized forward operator (a dense real matrix).

    Entries must be finite; the array is made read-only so cached Gram
    products and factorizations keyed by content stay valid.
    """

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.shape[0] < 1 or entries.shape[1] < 1:
            raise InvariantViolationError(
                f"operator must be a 2-d matrix with positive dimensions, got shape {entries.shape}"
            )
        if not np.all(np.isfinite(entries)):
            raise InvariantViolationError("operator entries must be finite")
        object.__setattr__(self, "entries", _freeze(entries))
        object.__setattr__(self, "_fp", _fingerprint(self.entries))

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    @property
    def fingerprint(self) -> str:
        return self._fp


@dataclass(frozen=True)
class PowerIterationConfig:
    """Power-iteration controls: relative tolerance, budget, start seed."""

    tolerance: float = 1e-12
    max_iterations: int = 100_000
    seed: int = 0x5EED

    def __post_init__(self):
        if not self.tolerance > 0:
            raise InvariantViolationError("tolerance must be > 0")
        if self.max_iterations < 1:
            raise InvariantViolationError("max_iterations must be >= 1")


@dataclass(frozen=True)
class Preconditioner:
    """The operator G: scalar mu*I, positive diagonal, or SPD matrix.

    `catalog_id` records which catalog entry produced it (empty for explicit
    constructions); it is echoed into experiment reports.
    """

    kind: str  # "scalar" | "diagonal" | "spd"
    dimension: int
    mu: float | None = None
    diagonal: np.ndarray | None = None
    matrix: np.ndarray | None = None
    catalog_id: str = field(default="", compare=False)

    def __post_init__(self):
        if self.dimension < 1:
            raise InvariantViolationError("dimension must be >= 1")
        if self.kind == "scalar":
            if self.mu is None or not self.mu > 0:
                raise InvariantViolationError("scalar preconditioner needs mu > 0")
        elif self.kind == "diagonal":
            d = np.asarray(self.diagonal, dtype=np.float64)
            if d.shape != (self.dimension,):
                raise DimensionMismatchError("diagonal length must equal dimension")
            if not np.all(d > 0):
                raise InvariantViolationError("diagonal entries must be > 0")
            object.__setattr__(self, "diagonal", _freeze(d))
        elif self.kind == "spd":
            m = np.asarray(self.matrix, dtype=np.float64)
            if m.shape != (self.dimension, self.dimension):
                raise DimensionMismatchError("matrix must be dimension x dimension")
            scale = np.max(np.abs(m)) or 1.0
            if np.max(np.abs(m - m.T)) > 1e-12 * scale:
                raise InvariantViolationError("matrix must be symmetric to 1e-12 relative")
            try:
                cho_factor(m, lower=True)
            except np.linalg.LinAlgError as exc:
                raise InvariantViolationError(f"matrix is not positive definite: {exc}") from exc
            object.__setattr__(self, "matrix", _freeze(m))
        else:
            raise InvariantViolationError(f"unknown preconditioner kind {self.kind!r}")
        object.__setattr__(self, "_fp", _fingerprint(self.dense()))

    # -- constructors -------------------------------------------------------

    @classmethod
    def scalar(cls, mu: float, dimension: int) -> "Preconditioner":
        return cls(kind="scalar", dimension=dimension, mu=float(mu))

    @classmethod
    def diag(cls, diagonal) -> "Preconditioner":
        d = np.asarray(diagonal, dtype=np.float64)
        return cls(kind="diagonal", dimension=d.shape[0], diagonal=d)

    @classmethod
    def spd(cls, matrix) -> "Preconditioner":
        m = np.asarray(matrix, dtype=np.float64)
        return cls(kind="spd", dimension=m.shape[0], matrix=m)

    # -- linear algebra helpers ---------------------------------------------

    @property
    def fingerprint(self) -> str:
        return self._fp

    def dense(self) -> np.ndarray:
        if self.kind == "scalar":
            return self.mu * np.eye(self.dimension)
        if self.kind == "diagonal":
            return np.diag(self.diagonal)
        return np.asarray(self.matrix)

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "scalar":
            return self.mu * x
        if self.kind == "diagonal":
            return self.diagonal * x
        return self.matrix @ x

    def norm(self) -> float:
        """Largest eigenvalue of G."""
        if self.kind == "scalar":
            return self.mu
        if self.kind == "diagonal":
            return float(np.max(self.diagonal))
        return float(np.linalg.eigvalsh(self.matrix)[-1])

    def sqrt_norm(self) -> float:
        """||G^{1/2}|| = sqrt of the largest eigenvalue."""
        return float(np.sqrt(self.norm()))

    def sqrt_dense(self) -> np.ndarray:
        """Symmetric square root G^{1/2} as a dense matrix."""
        if self.kind == "scalar":
            return np.sqrt(self.mu) * np.eye(self.dimension)
        if self.kind == "diagonal":
            return np.diag(np.sqrt(self.diagonal))
        w, v = np.linalg.eigh(self.matrix)
        w = np.clip(w, 0.0, None)
        return (v * np.sqrt(w)) @ v.T

    def describe(self) -> dict:
        """JSON-friendly echo of the preconditioner."""
        out = {"kind": self.kind, "dimension": self.dimension}
        if self.catalog_id:
            out["catalog_id"] = self.catalog_id
        if self.kind == "scalar":
            out["mu"] = self.mu
        elif self.kind == "diagonal":
            out["diagonal"] = self.diagonal.tolist()
        else:
            out["matrix_fingerprint"] = self.fingerprint
        return out


# -- factorization caches ----------------------------------------------------
# Keyed by content fingerprints, filled at most once per key in the common
# case; a duplicated fill under concurrency is harmless (same values).

_GRAM_CACHE: dict[tuple, np.ndarray] = {}
_FACTOR_CACHE: dict[tuple, tuple] = {}
_CACHE_LOCK = threading.Lock()


def gram_model(op: DenseOperator) -> np.ndarray:
    """A^T A, cached."""
    key = (op.fingerprint, "model")
    got = _GRAM_CACHE.get(key)
    if got is None:
        a = op.entries
        got = _freeze(a.T @ a)
        with _CACHE_LOCK:
            _GRAM_CACHE.setdefault(key, got)
    return got


def gram_data(op: DenseOperator) -> np.ndarray:
    """A A^T, cached."""
    key = (op.fingerprint, "data")
    got = _GRAM_CACHE.get(key)
    if got is None:
        a = op.entries
        got = _freeze(a @ a.T)
        with _CACHE_LOCK:
            _GRAM_CACHE.setdefault(key, got)
    return got


def model_factorization(g: Preconditioner, op: DenseOperator):
    """Cholesky factorization of (G + A^T A), cached per (G, A)."""
    key = (g.fingerprint, op.fingerprint, "model")
    got = _FACTOR_CACHE.get(key)
    if got is None:
        mat = g.dense() + gram_model(op)
        try:
            got = cho_factor(mat, lower=True)
        except np.linalg.LinAlgError as exc:
            raise InvariantViolationError(
                f"(G + A^T A) is not positive definite: {exc}"
            ) from exc
        with _CACHE_LOCK:
            _FACTOR_CACHE.setdefault(key, got)
    return got


def data_factorization(g: Preconditioner, op: DenseOperator):
    """Cholesky factorization of (Gt + A A^T), cached per (G, A).

    Gt = mu*I for scalar G.  For non-scalar G the discrete identification
    Gt := G requires a square system.
    """
    key = (g.fingerprint, op.fingerprint, "data")
    got = _FACTOR_CACHE.get(key)
    if got is None:
        if g.kind == "scalar":
            mat = g.mu * np.eye(op.rows) + gram_data(op)
        else:
            if op.rows != op.cols:
                raise UnsupportedConfigurationError(
                    "non-scalar G needs a square discrete system "
                    f"(got {op.rows}x{op.cols}); only the scalar data-space "
                    "companion is defined for rectangular operators"
                )
            mat = g.dense() + gram_data(op)
        try:
            got = cho_factor(mat, lower=True)
        except np.linalg.LinAlgError as exc:
            raise InvariantViolationError(
                f"(Gt + A A^T) is not positive definite: {exc}"
            ) from exc
        with _CACHE_LOCK:
            _FACTOR_CACHE.setdefault(key, got)
    return got


# -- operations ---------------------------------------------------------------


def apply(op: DenseOperator, x: np.ndarray) -> np.ndarray:
    """A x."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (op.cols,):
        raise DimensionMismatchError(f"expected vector of length {op.cols}, got {x.shape}")
    return op.entries @ x


def apply_adjoint(op: DenseOperator, y: np.ndarray) -> np.ndarray:
    """A^T y."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (op.rows,):
        raise DimensionMismatchError(f"expected vector of length {op.rows}, got {y.shape}")
    return op.entries.T @ y


def spectral_norm(op: DenseOperator, cfg: PowerIterationConfig | None = None) -> float:
    """Largest singular value of A by power iteration on the smaller Gram.

    Deterministic per cfg.seed.  For a degenerate top singular pair any value
    within tolerance of the top singular value is acceptable (only the norm is
    returned).  An exactly zero matrix has norm 0.
    """
    cfg = cfg or PowerIterationConfig()
    a = op.entries
    if not a.any():
        return 0.0
    b = gram_model(op) if op.cols <= op.rows else gram_data(op)
    rng = child_rng(cfg.seed, "power-start")
    v = rng.standard_normal(b.shape[0])
    lam = 0.0
    for _ in range(cfg.max_iterations):
        w = b @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # start vector fell in the null space; redraw from the same stream
            v = rng.standard_normal(b.shape[0])
            v /= np.linalg.norm(v)
            lam = 0.0
            continue
        v = w / nw
        lam_new = float(v @ (b @ v))
        if abs(lam_new - lam) <= cfg.tolerance * max(abs(lam_new), np.finfo(float).tiny):
            return float(np.sqrt(max(lam_new, 0.0)))
        lam = lam_new
    raise ConvergenceFailureError(
        f"power iteration did not converge within {cfg.max_iterations} iterations",
        last_estimate=float(np.sqrt(max(lam, 0.0))),
    )


def operator_distance(
    a: DenseOperator, b: DenseOperator, cfg: PowerIterationConfig | None = None
) -> float:
    """Spectral norm of (a - b)."""
    if a.entries.shape != b.entries.shape:
        raise DimensionMismatchError(
            f"shape mismatch: {a.entries.shape} vs {b.entries.shape}"
        )
    diff = a.entries - b.entries
    if not diff.any():
        return 0.0
    return spectral_norm(DenseOperator(diff), cfg)


def make_preconditioner(
    spec: "str | Preconditioner", n: int, lambda_max: float, seed: int = 0
) -> Preconditioner:
    """Build a catalog preconditioner (G1..G8) for dimension n.

    G1..G4 are scalars {1e-6, 1e-4, 1e-3, 1e-2} * lambda_max.  G5/G6 are
    diagonal with minimum entry a = {1e-4, 1e-3} * lambda_max placed first and
    the remaining n-1 entries drawn uniformly from [a, n*a].  G7/G8 conjugate
    G5/G6 with a seeded random orthogonal matrix, so they share eigenvalues
    with the G5/G6 built from the same seed.  Deterministic per seed.

    An explicit Preconditioner passes through unchanged (after a dimension
    check).
    """
    if isinstance(spec, Preconditioner):
        if spec.dimension != n:
            raise DimensionMismatchError(
                f"explicit preconditioner has dimension {spec.dimension}, expected {n}"
            )
        return spec
    if n < 1:
        raise InvariantViolationError("n must be >= 1")
    if not lambda_max > 0:
        raise InvariantViolationError("lambda_max must be > 0")
    spec = str(spec).upper()
    if spec in _SCALAR_FACTORS:
        g = Preconditioner.scalar(_SCALAR_FACTORS[spec] * lambda_max, n)
    elif spec in _DIAG_FACTORS:
        a = _DIAG_FACTORS[spec] * lambda_max
        # G7/G8 reuse the G5/G6 diagonal stream so conjugation preserves the
        # spectrum of the same-seed diagonal catalog entry
        rng = child_rng(seed, "precond-diag", "G5" if spec in ("G5", "G7") else "G6")
        d = np.empty(n)
        d[0] = a
        if n > 1:
            d[1:] = rng.uniform(a, n * a, size=n - 1)
        if spec in ("G5", "G6"):
            g = Preconditioner.diag(d)
        else:
            u = _random_orthogonal(n, seed)
            g = Preconditioner.spd((u * d) @ u.T)
    else:
        raise UnsupportedConfigurationError(f"unknown catalog id {spec!r}")
    object.__setattr__(g, "catalog_id", spec)
    return g


def _random_orthogonal(n: int, seed: int) -> np.ndarray:
    """Orthonormalized Gaussian matrix, sign-fixed for determinism."""
    rng = child_rng(seed, "precond-orth")
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))


_RESOLVENT_REL_RESIDUAL = 1e-10


def resolvent_solve(g: Preconditioner, op: DenseOperator, rhs: np.ndarray) -> np.ndarray:
    """Solve (G + A^T A) z = rhs via the cached Cholesky factorization.

    Guarantees ||(G + A^T A) z - rhs|| <= 1e-10 ||rhs||, applying iterative
    refinement if the first solve falls short.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    if g.dimension != op.cols or rhs.shape != (op.cols,):
        raise DimensionMismatchError(
            f"need g.dimension == op.cols == len(rhs); got {g.dimension}, {op.cols}, {rhs.shape}"
        )
    factor = model_factorization(g, op)
    mat = None
    z = cho_solve(factor, rhs)
    bound = _RESOLVENT_REL_RESIDUAL * np.linalg.norm(rhs)
    for _ in range(2):
        if mat is None:
            mat = g.dense() + gram_model(op)
        res = rhs - mat @ z
        if np.linalg.norm(res) <= bound:
            return z
        z = z + cho_solve(factor, res)
    if np.linalg.norm(rhs - mat @ z) > bound:
        raise InvariantViolationError(
            "resolvent solve could not reach the 1e-10 relative residual bound"
        )
    return z


def companion_resolvent_apply(
    g: Preconditioner, op: DenseOperator, r: np.ndarray
) -> np.ndarray:
    """Solve (Gt + A A^T) w = r in data space.

    Gt = mu*I for scalar G (any shape); for non-scalar G the square discrete
    identification Gt := G is used, matching the numerical realization of the
    stopping functional.  For scalar G this realizes the commutation identity
    (G + A^T A)^{-1} A^T = A^T (Gt + A A^T)^{-1}.
    """
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (op.rows,):
        raise DimensionMismatchError(f"expected data vector of length {op.rows}, got {r.shape}")
    if g.kind != "scalar" and g.dimension != op.rows:
        raise UnsupportedConfigurationError(
            "non-scalar G must match the data dimension of a square system"
        )
    factor = data_factorization(g, op)
    return cho_solve(factor, r)
