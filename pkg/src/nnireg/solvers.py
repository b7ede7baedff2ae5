"""The four iteration schemes and the solver driver.

Schemes (z is the model-space iterate, x the non-negative output):

- algorithm1:  z <- (G + A^T A)^{-1} [ (G - A^T A)|z| + 2 A^T y ],  x = |z|
- algorithm2:  z <- a_k x0 + (1 - a_k) * (algorithm1 update),       x = f+(z)
- projected_landweber:       x <- max(0, x + w A^T (y - A x))
- dual_projected_landweber:  x_k = max(0, A^T w_k), w_{k+1} = w_k + w (y - A x_k)

Single steps are exposed for inspection and property tests; `run_solver`
drives whole runs through the compiled iteration kernels.  Noisy problems use
(A_h, y^d) uniformly, including the dual variant (where mismatched operators
are outside the analysed setting and should be treated as experimental).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from nnireg import _kernels
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
    data_factorization,
    gram_model,
    model_factorization,
    operator_distance,
    resolvent_solve,
    spectral_norm,
)
from nnireg.seeding import GENERATOR_NAME
from nnireg.stopping import (
    APriori,
    MaxOnly,
    ModifiedDiscrepancy,
    Morozov,
    StoppingRule,
    a_priori_k,
    preconditioned_residual,
)

__all__ = [
    "InverseProblem",
    "IterationState",
    "OutputMap",
    "RelaxationSchedule",
    "SolverConfig",
    "SolveReport",
    "METHODS",
    "output_map",
    "relaxation",
    "algorithm1_step",
    "algorithm2_step",
    "projected_landweber_step",
    "dual_projected_landweber_step",
    "run_solver",
]

METHODS = (
    "algorithm1",
    "algorithm2",
    "projected_landweber",
    "dual_projected_landweber",
)

_STOP_REASONS = {
    _kernels.REASON_CAP: "MaxIterations",
    _kernels.REASON_DISCREPANCY: "DiscrepancyMet",
    _kernels.REASON_TARGET: "APrioriReached",
}


@dataclass(frozen=True)
class InverseProblem:
    """Operator/data bundle with noise levels (h, delta).

    When exact counterparts are supplied, the noise-level bounds
    ||A_h - A|| <= h and ||y^d - y|| <= delta are checked at construction.
    """

    operator_noisy: DenseOperator
    data_noisy: np.ndarray
    h: float = 0.0
    delta: float = 0.0
    operator_exact: DenseOperator | None = None
    data_exact: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(
            self, "data_noisy", np.asarray(self.data_noisy, dtype=np.float64)
        )
        if self.data_noisy.shape != (self.operator_noisy.rows,):
            raise DimensionMismatchError("data length must equal operator rows")
        if self.h < 0 or self.delta < 0:
            raise InvariantViolationError("noise levels must be >= 0")
        if self.operator_exact is not None:
            dist = operator_distance(self.operator_exact, self.operator_noisy)
            if dist > self.h + 1e-12:
                raise InvariantViolationError(
                    f"||A_h - A|| = {dist:.3e} exceeds the declared h = {self.h:.3e}"
                )
        if self.data_exact is not None:
            de = np.asarray(self.data_exact, dtype=np.float64)
            object.__setattr__(self, "data_exact", de)
            if de.shape != self.data_noisy.shape:
                raise DimensionMismatchError("exact/noisy data lengths differ")
            dist = float(np.linalg.norm(self.data_noisy - de))
            if dist > self.delta + 1e-12:
                raise InvariantViolationError(
                    f"||y^d - y|| = {dist:.3e} exceeds the declared delta = {self.delta:.3e}"
                )

    @property
    def n(self) -> int:
        return self.operator_noisy.cols

    @property
    def m(self) -> int:
        return self.operator_noisy.rows


@dataclass(frozen=True)
class OutputMap:
    """Non-negativity map f+: abs, positive part, or blend a*z + (1-a)|z|."""

    kind: str = "abs"  # "abs" | "pospart" | "blend"
    a: float = 0.0

    def __post_init__(self):
        if self.kind not in ("abs", "pospart", "blend"):
            raise InvariantViolationError(f"unknown output map {self.kind!r}")
        if self.kind == "blend" and not 0.0 <= self.a <= 0.5:
            raise InvariantViolationError("blend parameter must lie in [0, 1/2]")

    @property
    def map_kind(self) -> int:
        return {"abs": _kernels.MAP_ABS, "pospart": _kernels.MAP_POSPART, "blend": _kernels.MAP_BLEND}[self.kind]


def output_map(m: OutputMap, z: np.ndarray) -> np.ndarray:
    """f+(z), componentwise and exactly non-negative for admissible maps."""
    z = np.asarray(z, dtype=np.float64)
    if m.kind == "abs":
        return np.abs(z)
    if m.kind == "pospart":
        return np.maximum(z, 0.0)
    return m.a * z + (1.0 - m.a) * np.abs(z)


@dataclass(frozen=True)
class RelaxationSchedule:
    """Relaxation factors a_k for the anchored scheme.

    zero:          a_k = 0 (reduces algorithm2 to algorithm1)
    harmonic:      a_k = 1/(k+1); the shift keeps a_k inside (0,1) while
                   preserving a_k -> 0, sum a_k = inf, sum |a_{k+1}-a_k| < inf
    harmonic_log:  a_k = 1/((k+1) * prod of q clamped log iterates of (k+1))
    """

    kind: str = "harmonic"  # "zero" | "harmonic" | "harmonic_log"
    q: int = 1

    def __post_init__(self):
        if self.kind not in ("zero", "harmonic", "harmonic_log"):
            raise InvariantViolationError(f"unknown schedule {self.kind!r}")
        if self.kind == "harmonic_log" and self.q < 1:
            raise InvariantViolationError("harmonic_log needs q >= 1")

    def values(self, count: int) -> np.ndarray | None:
        """alpha used for step j -> j+1, for j = 0..count-1 (None for zero)."""
        if self.kind == "zero":
            return None
        k = np.arange(1, count + 1, dtype=np.float64)
        if self.kind == "harmonic":
            return 1.0 / (k + 1.0)
        w = k + 1.0
        prod = np.ones_like(w)
        for _ in range(self.q):
            w = np.maximum(1.0, np.log(w))
            prod *= w
        return 1.0 / ((k + 1.0) * prod)


def relaxation(s: RelaxationSchedule, k: int) -> float:
    """a_k for k >= 1; all values lie in (0,1) except the zero schedule."""
    if k < 1:
        raise InvariantViolationError("relaxation index starts at k = 1")
    if s.kind == "zero":
        return 0.0
    return float(s.values(k)[-1])


@dataclass
class IterationState:
    """One iterate: counter, model iterate z, non-negative output x, optional dual."""

    k: int
    z: np.ndarray
    x: np.ndarray
    dual: np.ndarray | None = None
    preconditioned_residual: float | None = None

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.float64)
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.k < 0:
            raise InvariantViolationError("step counter must be >= 0")
        if self.z.shape != self.x.shape:
            raise DimensionMismatchError("z and x must have equal length")
        if self.x.size and self.x.min() < 0:
            raise InvariantViolationError("output x must be non-negative, exactly")

    @classmethod
    def initial(cls, x0: np.ndarray, m: OutputMap | None = None, dual_dim: int | None = None):
        x0 = np.asarray(x0, dtype=np.float64)
        m = m or OutputMap("abs")
        if dual_dim is not None:
            # dual variant starts at w = 0, whose output is x = max(0, A^T 0) = 0
            return cls(k=0, z=np.zeros_like(x0), x=np.zeros_like(x0), dual=np.zeros(dual_dim))
        return cls(k=0, z=x0.copy(), x=output_map(m, x0), dual=None)


def algorithm1_step(
    state: IterationState, p: InverseProblem, g: Preconditioner
) -> IterationState:
    """One preconditioned fixed-point step; x = |z| afterwards."""
    op = p.operator_noisy
    az = np.abs(state.z)
    rhs = g.apply(az) - apply_adjoint(op, apply(op, az)) + 2.0 * apply_adjoint(op, p.data_noisy)
    z = resolvent_solve(g, op, rhs)
    return IterationState(k=state.k + 1, z=z, x=np.abs(z), dual=state.dual)


def algorithm2_step(
    state: IterationState,
    p: InverseProblem,
    g: Preconditioner,
    alpha_k: float,
    x0: np.ndarray,
    m: OutputMap | None = None,
) -> IterationState:
    """Anchored step z <- a_k x0 + (1-a_k) * (algorithm1 update); x = f+(z)."""
    if not 0.0 <= alpha_k < 1.0:
        raise InvariantViolationError("alpha_k must lie in [0, 1)")
    m = m or OutputMap("pospart")
    inner = algorithm1_step(state, p, g)
    if alpha_k == 0.0:
        z = inner.z
    else:
        z = alpha_k * np.asarray(x0, dtype=np.float64) + (1.0 - alpha_k) * inner.z
    return IterationState(k=state.k + 1, z=z, x=output_map(m, z), dual=state.dual)


def projected_landweber_step(
    state: IterationState, p: InverseProblem, omega: float
) -> IterationState:
    """x <- max(0, x + w A^T (y - A x)); z kept equal to x."""
    op = p.operator_noisy
    x = np.maximum(state.x + omega * apply_adjoint(op, p.data_noisy - apply(op, state.x)), 0.0)
    return IterationState(k=state.k + 1, z=x, x=x, dual=state.dual)


def dual_projected_landweber_step(
    state: IterationState, p: InverseProblem, omega: float
) -> IterationState:
    """w_{k+1} = w_k + w (y - A x_k) with x_k = max(0, A^T w_k).

    States keep x and w in phase: state.x is always max(0, A^T state.dual),
    so the update consumes state.x directly and re-derives x from the new w.
    """
    if state.dual is None:
        raise InvariantViolationError("dual projected Landweber needs a dual vector")
    op = p.operator_noisy
    x_k = np.maximum(apply_adjoint(op, state.dual), 0.0)
    w = state.dual + omega * (p.data_noisy - apply(op, x_k))
    x = np.maximum(apply_adjoint(op, w), 0.0)
    return IterationState(k=state.k + 1, z=x, x=x, dual=w)


@dataclass(frozen=True)
class SolverConfig:
    """Method, its parameters, start vector and iteration cap.

    `preconditioner` drives algorithms 1/2 and, when present, also the
    preconditioned stopping functional of the Landweber variants ("P2").
    The effective iteration cap of a run is min(max_iterations, rule.n_max).
    """

    method: str
    preconditioner: Preconditioner | None = None
    omega: float = 1.0
    schedule: RelaxationSchedule = field(default_factory=RelaxationSchedule)
    output_map: OutputMap | None = None
    x0: np.ndarray | None = None
    max_iterations: int = 1_000_000

    def __post_init__(self):
        if self.method not in METHODS:
            raise UnsupportedConfigurationError(f"unknown method {self.method!r}")
        if self.max_iterations < 0:
            raise InvariantViolationError("max_iterations must be >= 0")
        if self.x0 is not None:
            object.__setattr__(self, "x0", np.asarray(self.x0, dtype=np.float64))

    def resolved_output_map(self) -> OutputMap:
        if self.output_map is not None:
            return self.output_map
        # defaults follow the experimental protocol: |.| for algorithm 1,
        # the positive part for algorithm 2
        return OutputMap("pospart") if self.method == "algorithm2" else OutputMap("abs")

    def describe(self) -> dict:
        out = {
            "method": self.method,
            "omega": self.omega,
            "schedule": {"kind": self.schedule.kind, "q": self.schedule.q},
            "output_map": {
                "kind": self.resolved_output_map().kind,
                "a": self.resolved_output_map().a,
            },
            "max_iterations": self.max_iterations,
            "x0": "zeros" if self.x0 is None else self.x0.tolist(),
        }
        if self.preconditioner is not None:
            out["preconditioner"] = self.preconditioner.describe()
        return out


@dataclass
class SolveReport:
    """Outcome of one run: stopping index, reason, metrics, config echo."""

    method: str
    k_star: int
    stop_reason: str
    l2err: float | None
    residual: float
    preconditioned_residual: float | None
    wall_time: float
    config_echo: dict
    x: np.ndarray
    z: np.ndarray
    histories: dict

    def __post_init__(self):
        if self.l2err is not None and self.l2err < 0:
            raise InvariantViolationError("l2err must be >= 0")


def _describe_rule(stop: StoppingRule) -> dict:
    kind = stop.kind
    if isinstance(kind, Morozov):
        d = {"kind": "morozov", "tau0": kind.tau0}
    elif isinstance(kind, ModifiedDiscrepancy):
        d = {"kind": "modified", "c_dagger": kind.c_dagger, "tau": kind.tau, "tau0": kind.tau0}
    elif isinstance(kind, APriori):
        d = {"kind": "apriori", "rule": kind.rule, "scale": kind.scale, "p": kind.p, "a": kind.a}
    else:
        d = {"kind": "max_only"}
    d["n_max"] = stop.n_max
    return d


def _stop_matrix(g: Preconditioner, op: DenseOperator) -> np.ndarray:
    """Dense W with functional = ||W (y - A|z|)||, precomputed once per run."""
    factor = data_factorization(g, op)
    w = cho_solve(factor, np.eye(op.rows))
    if g.kind != "scalar":
        w = g.sqrt_dense() @ w
    return w


def run_solver(
    cfg: SolverConfig,
    p: InverseProblem,
    stop: StoppingRule,
    xdag: np.ndarray | None = None,
    record_traces: bool = False,
) -> SolveReport:
    """Iterate cfg.method on p until the stopping rule fires or the cap hits.

    The stopping functional is evaluated at every iterate starting from the
    initial one; the run stops at the first index whose value is at or below
    the threshold.  `xdag` enables diagnostic error histories and the
    relative-error field of the report; production solves never need it.
    """
    op = p.operator_noisy
    n, m = op.cols, op.rows
    g = cfg.preconditioner
    x0 = cfg.x0 if cfg.x0 is not None else np.zeros(n)
    if x0.shape != (n,):
        raise DimensionMismatchError("x0 length must equal operator cols")
    if xdag is not None:
        xdag = np.asarray(xdag, dtype=np.float64)
        if xdag.shape != (n,):
            raise DimensionMismatchError("xdag length must equal operator cols")
    cap = min(cfg.max_iterations, stop.n_max)
    omap = cfg.resolved_output_map()

    kind = stop.kind
    stop_kind = _kernels.STOP_NONE
    threshold = np.nan
    k_target = cap
    k_apriori = None
    w_matrix = None
    if isinstance(kind, Morozov):
        stop_kind = _kernels.STOP_MOROZOV
        threshold = kind.tau0 * (p.h + p.delta)
    elif isinstance(kind, ModifiedDiscrepancy):
        if g is None:
            raise UnsupportedConfigurationError(
                "the modified discrepancy needs a preconditioner"
            )
        stop_kind = _kernels.STOP_MODIFIED
        threshold = kind.threshold(g, p.delta, p.h)
        w_matrix = _stop_matrix(g, op)
    elif isinstance(kind, APriori):
        k_apriori = a_priori_k(p.h, p.delta, kind)
        k_target = min(k_apriori, cap)

    started = time.perf_counter()
    dual = None
    if cfg.method in ("algorithm1", "algorithm2"):
        if g is None:
            raise UnsupportedConfigurationError(f"{cfg.method} needs a preconditioner")
        if g.dimension != n:
            raise DimensionMismatchError("preconditioner dimension must equal operator cols")
        factor = model_factorization(g, op)
        m_matrix = cho_solve(factor, g.dense() - gram_model(op))
        b_vec = cho_solve(factor, 2.0 * apply_adjoint(op, p.data_noisy))
        alphas = None
        map_kind, blend_a = omap.map_kind, omap.a
        if cfg.method == "algorithm2" and cap > 0:
            alphas = cfg.schedule.values(cap)
        z, x, k_star, reason, functional, res_norm, hist = _kernels.fixed_point_loop(
            m_matrix, b_vec, x0, x0, alphas, map_kind, blend_a,
            op.entries, p.data_noisy, w_matrix, stop_kind, threshold,
            k_target, cap, xdag, record_traces,
        )
    else:
        norm = spectral_norm(op)
        if norm > 0 and not 0.0 < cfg.omega < 2.0 / norm**2:
            raise InvariantViolationError(
                f"omega must lie in (0, 2/||A_h||^2) = (0, {2.0 / norm**2:.4g}), got {cfg.omega}"
            )
        x, dual, k_star, reason, functional, res_norm, hist = _kernels.landweber_loop(
            op.entries, p.data_noisy, cfg.omega, x0, w_matrix, stop_kind, threshold,
            k_target, cap, xdag, record_traces,
            cfg.method == "dual_projected_landweber",
        )
        z = x
    wall = time.perf_counter() - started

    # a kernel "target reached" means the a-priori index for APriori rules and
    # the plain cap for MaxOnly (or an a-priori index truncated by the cap)
    if reason == _kernels.REASON_TARGET and (
        isinstance(kind, MaxOnly) or (k_apriori is not None and k_apriori > cap)
    ):
        reason = _kernels.REASON_CAP
    precond_res = None
    if g is not None and (g.kind == "scalar" or m == n):
        precond_res = preconditioned_residual(p, g, z)
    l2err = None
    if xdag is not None:
        denom = float(np.linalg.norm(xdag))
        l2err = float(np.linalg.norm(x - xdag)) / (denom if denom > 0 else 1.0)

    echo = {
        "solver": cfg.describe(),
        "stopping": _describe_rule(stop),
        "noise": {"h": p.h, "delta": p.delta},
        "rng": GENERATOR_NAME,
        "kernel_backend": _kernels.KERNEL_BACKEND,
    }
    return SolveReport(
        method=cfg.method,
        k_star=int(k_star),
        stop_reason=_STOP_REASONS[reason],
        l2err=l2err,
        residual=float(res_norm),
        preconditioned_residual=precond_res,
        wall_time=wall,
        config_echo=echo,
        x=x,
        z=z,
        histories=hist,
    )
