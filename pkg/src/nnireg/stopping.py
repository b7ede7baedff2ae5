"""Stopping rules.

Two a-posteriori rules (Morozov's conventional discrepancy on the data
residual, and the preconditioned "modified" discrepancy evaluated through the
data-space resolvent), a-priori index formulas tied to the convergence-rate
regimes, and a plain iteration cap.

Modified-rule parameterizations.  For scalar G = mu*I the rule is

    r <= tau * (delta + h * c_dagger),        tau > 1/mu,

with r = ||(mu I + A A^T)^{-1}(y - A|z|)||.  The general square-G form uses
tau0 > 1 and the weighted functional r = ||G^{1/2}(G + A A^T)^{-1}(y - A|z|)||:

    r <= tau0 * (delta + h * c_dagger) / ||G^{1/2}||.

The two coincide for scalar G under tau0 = tau * mu; a rule may be given
either parameter and the other is derived where meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from nnireg.errors import InfiniteIndexError, InvariantViolationError
from nnireg.operators import (
    DenseOperator,
    Preconditioner,
    apply,
    companion_resolvent_apply,
)

__all__ = [
    "Morozov",
    "ModifiedDiscrepancy",
    "APriori",
    "MaxOnly",
    "StoppingRule",
    "StoppingDecision",
    "preconditioned_residual",
    "should_stop_modified",
    "should_stop_morozov",
    "a_priori_k",
]


@dataclass(frozen=True)
class Morozov:
    """Stop when ||A_h x_k - y^d|| <= tau0 * (h + delta)."""

    tau0: float

    def __post_init__(self):
        if not self.tau0 > 1:
            raise InvariantViolationError("Morozov needs tau0 > 1")


@dataclass(frozen=True)
class ModifiedDiscrepancy:
    """Preconditioned discrepancy; see the module docstring for the forms."""

    c_dagger: float
    tau: float | None = None
    tau0: float | None = None

    def __post_init__(self):
        if self.c_dagger < 0:
            raise InvariantViolationError("c_dagger must be >= 0")
        if (self.tau is None) == (self.tau0 is None):
            raise InvariantViolationError("give exactly one of tau (scalar-G) or tau0 (general-G)")

    def effective_tau(self, g: Preconditioner) -> float:
        """Scalar-G multiplier tau, derived from tau0 if needed."""
        if g.kind != "scalar":
            raise InvariantViolationError("tau parameterization applies to scalar G only")
        tau = self.tau if self.tau is not None else self.tau0 / g.mu
        if not tau > 1.0 / g.mu:
            raise InvariantViolationError(
                f"modified discrepancy needs tau > 1/mu (tau={tau}, mu={g.mu})"
            )
        return tau

    def effective_tau0(self, g: Preconditioner) -> float:
        """General-G multiplier tau0 = tau * mu for scalar G."""
        if self.tau0 is not None:
            tau0 = self.tau0
        elif g.kind == "scalar":
            tau0 = self.tau * g.mu
        else:
            raise InvariantViolationError("non-scalar G needs the tau0 parameterization")
        if not tau0 > 1:
            raise InvariantViolationError(f"modified discrepancy needs tau0 > 1, got {tau0}")
        return tau0

    def threshold(self, g: Preconditioner, delta: float, h: float) -> float:
        if delta < 0 or h < 0:
            raise InvariantViolationError("noise levels must be >= 0")
        level = delta + h * self.c_dagger
        if g.kind == "scalar":
            return self.effective_tau(g) * level
        return self.effective_tau0(g) * level / g.sqrt_norm()


@dataclass(frozen=True)
class APriori:
    """A-priori index: holder (p), log (a in (0,1)), or admissible k ~ (h+d)^-1/2."""

    rule: str  # "holder" | "log" | "admissible"
    scale: float = 1.0
    p: float | None = None
    a: float | None = None

    def __post_init__(self):
        if self.rule not in ("holder", "log", "admissible"):
            raise InvariantViolationError(f"unknown a-priori rule {self.rule!r}")
        if not self.scale > 0:
            raise InvariantViolationError("scale must be > 0")
        if self.rule == "holder" and (self.p is None or not self.p > 0):
            raise InvariantViolationError("holder rule needs p > 0")
        if self.rule == "log" and (self.a is None or not 0 < self.a < 1):
            raise InvariantViolationError("log rule needs a in (0,1)")


@dataclass(frozen=True)
class MaxOnly:
    """No functional; run to the iteration cap."""


@dataclass(frozen=True)
class StoppingRule:
    kind: Morozov | ModifiedDiscrepancy | APriori | MaxOnly
    n_max: int

    def __post_init__(self):
        if self.n_max < 0:
            raise InvariantViolationError("n_max must be >= 0")


@dataclass(frozen=True)
class StoppingDecision:
    stop: bool
    functional_value: float
    threshold: float

    def __post_init__(self):
        if self.stop != (self.functional_value <= self.threshold):
            raise InvariantViolationError("decision inconsistent with its own comparison")


def preconditioned_residual(p, g: Preconditioner, z: np.ndarray) -> float:
    """Stopping functional of the modified rule at iterate z.

    Scalar G:      ||(mu I + A_h A_h^T)^{-1} (y^d - A_h |z|)||
    Square G:      ||G^{1/2} (G + A_h A_h^T)^{-1} (y^d - A_h |z|)||
    """
    op: DenseOperator = p.operator_noisy
    res = p.data_noisy - apply(op, np.abs(np.asarray(z, dtype=np.float64)))
    w = companion_resolvent_apply(g, op, res)
    if g.kind != "scalar":
        w = g.sqrt_dense() @ w
    return float(np.linalg.norm(w))


def should_stop_modified(
    r: float, rule: ModifiedDiscrepancy, delta: float, h: float, g: Preconditioner
) -> StoppingDecision:
    """First-crossing decision for the modified discrepancy."""
    if r < 0:
        raise InvariantViolationError("functional value must be >= 0")
    thr = rule.threshold(g, delta, h)
    return StoppingDecision(stop=bool(r <= thr), functional_value=float(r), threshold=thr)


def should_stop_morozov(
    residual_norm: float, rule: Morozov, delta: float, h: float
) -> StoppingDecision:
    """Conventional discrepancy on the data residual ||A_h x_k - y^d||."""
    if residual_norm < 0:
        raise InvariantViolationError("residual must be >= 0")
    if delta < 0 or h < 0:
        raise InvariantViolationError("noise levels must be >= 0")
    thr = rule.tau0 * (h + delta)
    return StoppingDecision(
        stop=bool(residual_norm <= thr), functional_value=float(residual_norm), threshold=thr
    )


def a_priori_k(h: float, delta: float, rule: APriori) -> int:
    """A-priori stopping index for noise levels (h, delta).

    holder:      ceil(scale * (h^min(1,p) + delta)^(-1/(p+1)))
    log:         ceil(scale * (h + delta)^(-a))
    admissible:  ceil(scale * (h + delta)^(-1/2))

    The admissible form satisfies k* -> infinity and k*(h+delta) -> 0.
    """
    if h < 0 or delta < 0:
        raise InvariantViolationError("noise levels must be >= 0")
    if h + delta == 0:
        raise InfiniteIndexError(
            "a-priori index is unbounded at zero noise; use a consistent-data stopping rule"
        )
    if rule.rule == "holder":
        level = h ** min(1.0, rule.p) + delta
        value = rule.scale * level ** (-1.0 / (rule.p + 1.0))
    elif rule.rule == "log":
        value = rule.scale * (h + delta) ** (-rule.a)
    else:
        value = rule.scale * (h + delta) ** (-0.5)
    # back off a few ulps so exact-power cases are not bumped up a whole index
    return max(1, math.ceil(value * (1.0 - 4.0 * np.finfo(float).eps)))
