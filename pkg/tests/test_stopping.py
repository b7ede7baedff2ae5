import numpy as np
import pytest

from nnireg.errors import InfiniteIndexError, InvariantViolationError
from nnireg.operators import DenseOperator, Preconditioner
from nnireg.solvers import InverseProblem
from nnireg.stopping import (
    APriori,
    MaxOnly,
    ModifiedDiscrepancy,
    Morozov,
    StoppingDecision,
    StoppingRule,
    a_priori_k,
    preconditioned_residual,
    should_stop_modified,
    should_stop_morozov,
)


class TestPreconditionedResidual:
    def test_zero_residual(self):
        op = DenseOperator(np.array([[2.0, 0.0], [0.0, 1.0]]))
        z = np.array([1.0, -1.0])
        p = InverseProblem(operator_noisy=op, data_noisy=op.entries @ np.abs(z))
        g = Preconditioner.scalar(0.5, 2)
        assert preconditioned_residual(p, g, z) == pytest.approx(0.0, abs=1e-14)

    def test_zero_operator(self):
        op = DenseOperator(np.zeros((1, 1)))
        p = InverseProblem(operator_noisy=op, data_noisy=np.array([4.0]))
        g = Preconditioner.scalar(2.0, 1)
        assert preconditioned_residual(p, g, np.array([9.0])) == pytest.approx(2.0)

    def test_scalar_arithmetic(self):
        op = DenseOperator(np.array([[1.0]]))
        p = InverseProblem(operator_noisy=op, data_noisy=np.array([3.0]))
        g = Preconditioner.scalar(1.0, 1)
        assert preconditioned_residual(p, g, np.array([1.0])) == pytest.approx(1.0)

    def test_square_nonscalar_weighting(self):
        op = DenseOperator(np.eye(2))
        p = InverseProblem(operator_noisy=op, data_noisy=np.array([1.0, 2.0]))
        g = Preconditioner.diag([4.0, 9.0])
        # componentwise: sqrt(g_i) / (g_i + 1) * residual_i
        want = np.linalg.norm([2.0 / 5.0 * 1.0, 3.0 / 10.0 * 2.0])
        got = preconditioned_residual(p, g, np.zeros(2))
        assert got == pytest.approx(want, rel=1e-12)


class TestModifiedDecision:
    def test_zero_noise_zero_residual_stops(self):
        g = Preconditioner.scalar(1.0, 2)
        d = should_stop_modified(0.0, ModifiedDiscrepancy(c_dagger=0.0, tau=2.0), 0.0, 0.0, g)
        assert d.stop

    def test_threshold_arithmetic_continue(self):
        g = Preconditioner.scalar(1.0, 2)
        rule = ModifiedDiscrepancy(c_dagger=0.0, tau=2.0)
        d = should_stop_modified(0.3, rule, 0.1, 0.0, g)
        assert not d.stop and d.threshold == pytest.approx(0.2)

    def test_threshold_arithmetic_stop(self):
        g = Preconditioner.scalar(1.0, 2)
        rule = ModifiedDiscrepancy(c_dagger=2.0, tau=2.0)
        d = should_stop_modified(0.3, rule, 0.1, 0.05, g)
        assert d.stop and d.threshold == pytest.approx(0.4)

    def test_tau_must_exceed_reciprocal_mu(self):
        g = Preconditioner.scalar(0.1, 2)
        rule = ModifiedDiscrepancy(c_dagger=0.0, tau=2.0)  # 2 <= 1/0.1
        with pytest.raises(InvariantViolationError):
            should_stop_modified(1.0, rule, 0.1, 0.0, g)

    def test_tau0_parameterization_matches(self):
        mu = 0.25
        g = Preconditioner.scalar(mu, 3)
        via_tau = ModifiedDiscrepancy(c_dagger=1.0, tau=8.0)
        via_tau0 = ModifiedDiscrepancy(c_dagger=1.0, tau0=8.0 * mu)
        assert via_tau.threshold(g, 0.1, 0.2) == pytest.approx(
            via_tau0.threshold(g, 0.1, 0.2), rel=1e-14
        )

    def test_general_g_threshold_scaling(self):
        g = Preconditioner.diag([4.0, 4.0])
        rule = ModifiedDiscrepancy(c_dagger=0.0, tau0=1.5)
        # ||G^{1/2}|| = 2 divides the level
        assert rule.threshold(g, 0.4, 0.0) == pytest.approx(1.5 * 0.4 / 2.0)

    def test_negative_noise_rejected(self):
        g = Preconditioner.scalar(1.0, 2)
        with pytest.raises(InvariantViolationError):
            should_stop_modified(0.1, ModifiedDiscrepancy(c_dagger=0.0, tau=2.0), -0.1, 0.0, g)

    def test_exactly_one_parameterization(self):
        with pytest.raises(InvariantViolationError):
            ModifiedDiscrepancy(c_dagger=0.0)
        with pytest.raises(InvariantViolationError):
            ModifiedDiscrepancy(c_dagger=0.0, tau=2.0, tau0=2.0)


class TestMorozovDecision:
    def test_zero_residual(self):
        assert should_stop_morozov(0.0, Morozov(1.1), 0.0, 0.0).stop

    def test_continue(self):
        d = should_stop_morozov(0.03, Morozov(1.1), 0.01, 0.01)
        assert not d.stop and d.threshold == pytest.approx(0.022)

    def test_stop(self):
        assert should_stop_morozov(0.02, Morozov(1.1), 0.01, 0.01).stop

    def test_monotone_in_functional(self):
        rule = Morozov(1.5)
        stopped = should_stop_morozov(0.10, rule, 0.05, 0.02).stop
        assert stopped
        for r in (0.08, 0.05, 0.0):
            assert should_stop_morozov(r, rule, 0.05, 0.02).stop

    def test_modified_monotone_in_functional(self):
        g = Preconditioner.scalar(1.0, 2)
        rule = ModifiedDiscrepancy(c_dagger=1.0, tau=2.0)
        assert should_stop_modified(0.2, rule, 0.1, 0.0, g).stop
        for r in (0.15, 0.05, 0.0):
            assert should_stop_modified(r, rule, 0.1, 0.0, g).stop


class TestAPrioriIndex:
    def test_holder_example(self):
        assert a_priori_k(0.0, 1e-4, APriori("holder", p=1.0)) == 100

    def test_log_example(self):
        assert a_priori_k(0.02, 0.02, APriori("log", a=0.5)) == 5

    def test_admissible_unit_noise(self):
        assert a_priori_k(0.5, 0.5, APriori("admissible")) == 1

    def test_zero_noise_rejected(self):
        with pytest.raises(InfiniteIndexError):
            a_priori_k(0.0, 0.0, APriori("admissible"))

    def test_admissible_limits(self):
        # k* -> infinity while k* * (h + delta) -> 0 along (h+delta) = 2^-m
        rule = APriori("admissible")
        prev_k = 0
        prev_prod = np.inf
        for m in range(1, 21):
            level = 2.0**-m
            k = a_priori_k(level / 2, level / 2, rule)
            assert k >= prev_k
            prod = k * level
            assert prod <= prev_prod + 1e-12
            prev_k, prev_prod = k, prod
        assert prev_k > 1000 and prev_prod < 0.01

    def test_rule_validation(self):
        with pytest.raises(InvariantViolationError):
            APriori("holder")  # missing p
        with pytest.raises(InvariantViolationError):
            APriori("log", a=1.5)
        with pytest.raises(InvariantViolationError):
            APriori("nope")


class TestRuleContainers:
    def test_decision_consistency_enforced(self):
        with pytest.raises(InvariantViolationError):
            StoppingDecision(stop=True, functional_value=2.0, threshold=1.0)

    def test_rule_nmax(self):
        with pytest.raises(InvariantViolationError):
            StoppingRule(MaxOnly(), n_max=-1)
        assert StoppingRule(Morozov(1.1), n_max=10).n_max == 10
