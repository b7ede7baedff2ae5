import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nnireg.errors import (
    ConvergenceFailureError,
    DimensionMismatchError,
    InvariantViolationError,
    UnsupportedConfigurationError,
)
from nnireg.operators import (
    DenseOperator,
    PowerIterationConfig,
    Preconditioner,
    apply,
    apply_adjoint,
    companion_resolvent_apply,
    gram_model,
    make_preconditioner,
    operator_distance,
    resolvent_solve,
    spectral_norm,
)
from nnireg.seeding import child_rng


def jacobi_singular_values(a, sweeps=60):
    """One-sided Jacobi SVD: independent oracle for small matrices."""
    a = np.array(a, dtype=float)
    m, n = a.shape
    if m < n:
        a = a.T
        m, n = a.shape
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[:, p] @ a[:, q]
                app = a[:, p] @ a[:, p]
                aqq = a[:, q] @ a[:, q]
                off = max(off, abs(apq))
                if abs(apq) <= 1e-15 * np.sqrt(app * aqq):
                    continue
                tau = (aqq - app) / (2.0 * apq)
                t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                ap = a[:, p].copy()
                a[:, p] = c * ap - s * a[:, q]
                a[:, q] = s * ap + c * a[:, q]
        if off < 1e-15:
            break
    return np.sort(np.linalg.norm(a, axis=0))[::-1]


class TestApply:
    def test_identity(self):
        op = DenseOperator(np.eye(3))
        assert np.array_equal(apply(op, [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])

    def test_zero_operator(self):
        op = DenseOperator(np.zeros((2, 2)))
        assert np.array_equal(apply(op, [5.0, -7.0]), [0.0, 0.0])

    def test_row_sum(self):
        op = DenseOperator(np.array([[1.0, 1.0]]))
        assert np.array_equal(apply(op, [1.0, 1.0]), [2.0])

    def test_dimension_mismatch(self):
        op = DenseOperator(np.eye(3))
        with pytest.raises(DimensionMismatchError):
            apply(op, [1.0, 2.0])


class TestApplyAdjoint:
    def test_identity(self):
        op = DenseOperator(np.eye(2))
        assert np.array_equal(apply_adjoint(op, [4.0, 5.0]), [4.0, 5.0])

    def test_transpose_arithmetic(self):
        op = DenseOperator(np.array([[1.0, 1.0]]))
        assert np.array_equal(apply_adjoint(op, [2.0]), [2.0, 2.0])

    def test_zero(self):
        op = DenseOperator(np.zeros((3, 2)))
        assert np.array_equal(apply_adjoint(op, np.ones(3)), [0.0, 0.0])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            apply_adjoint(DenseOperator(np.eye(3)), np.ones(2))


class TestSpectralNorm:
    def test_identity(self):
        assert spectral_norm(DenseOperator(np.eye(4))) == pytest.approx(1.0, rel=1e-10)

    def test_diagonal(self):
        op = DenseOperator(np.diag([1.0, 2.0, 3.0]))
        assert spectral_norm(op) == pytest.approx(3.0, rel=1e-10)

    def test_nilpotent(self):
        op = DenseOperator(np.array([[0.0, 1.0], [0.0, 0.0]]))
        assert spectral_norm(op) == pytest.approx(1.0, rel=1e-10)

    def test_matches_jacobi_oracle(self, rng):
        for trial in range(25):
            m = int(rng.integers(1, 9))
            n = int(rng.integers(1, 9))
            a = rng.standard_normal((m, n))
            got = spectral_norm(DenseOperator(a))
            want = jacobi_singular_values(a)[0]
            assert got == pytest.approx(want, rel=1e-8)

    def test_nonconvergence_carries_estimate(self):
        op = DenseOperator(np.diag([1.0, 0.999999]))
        cfg = PowerIterationConfig(tolerance=1e-16, max_iterations=3, seed=1)
        with pytest.raises(ConvergenceFailureError) as err:
            spectral_norm(op, cfg)
        assert err.value.last_estimate == pytest.approx(1.0, rel=1e-3)

    def test_invalid_config(self):
        with pytest.raises(InvariantViolationError):
            PowerIterationConfig(tolerance=0.0)
        with pytest.raises(InvariantViolationError):
            PowerIterationConfig(max_iterations=0)


class TestOperatorDistance:
    def test_equal_operators(self):
        a = DenseOperator(np.arange(6.0).reshape(2, 3))
        assert operator_distance(a, a) == 0.0

    def test_identity_vs_zero(self):
        a = DenseOperator(np.eye(2))
        b = DenseOperator(np.zeros((2, 2)))
        assert operator_distance(a, b) == pytest.approx(1.0, rel=1e-10)

    def test_diagonal_difference(self):
        a = DenseOperator(np.diag([3.0, 1.0]))
        b = DenseOperator(np.diag([1.0, 1.0]))
        assert operator_distance(a, b) == pytest.approx(2.0, rel=1e-10)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            operator_distance(DenseOperator(np.eye(2)), DenseOperator(np.eye(3)))


class TestPreconditionerCatalog:
    def test_scalar_entries(self):
        g = make_preconditioner("G1", 3, 2.0, seed=0)
        assert g.kind == "scalar" and g.mu == pytest.approx(2e-6)
        assert make_preconditioner("G2", 3, 2.0).mu == pytest.approx(2e-4)
        assert make_preconditioner("G3", 3, 2.0).mu == pytest.approx(2e-3)
        assert make_preconditioner("G4", 3, 2.0).mu == pytest.approx(2e-2)

    def test_degenerate_diagonal_size(self):
        g = make_preconditioner("G5", 1, 1.0, seed=9)
        assert g.kind == "diagonal"
        assert np.array_equal(g.diagonal, [1e-4])

    def test_diagonal_range(self):
        g = make_preconditioner("G6", 8, 1.0, seed=5)
        a = 1e-3
        assert g.diagonal[0] == a
        assert np.min(g.diagonal) == a
        assert np.all(g.diagonal <= 8 * a)

    def test_conjugation_preserves_spectrum(self):
        g5 = make_preconditioner("G5", 4, 1.0, seed=123)
        g7 = make_preconditioner("G7", 4, 1.0, seed=123)
        assert g7.kind == "spd"
        assert np.allclose(
            np.sort(np.linalg.eigvalsh(g7.matrix)), np.sort(g5.diagonal), rtol=1e-12
        )

    def test_deterministic_bit_exact(self):
        for spec in ("G5", "G7"):
            a = make_preconditioner(spec, 6, 0.7, seed=77)
            b = make_preconditioner(spec, 6, 0.7, seed=77)
            assert np.array_equal(a.dense(), b.dense())

    def test_unknown_id(self):
        with pytest.raises(UnsupportedConfigurationError):
            make_preconditioner("G9", 3, 1.0)

    def test_explicit_validation(self):
        with pytest.raises(InvariantViolationError):
            Preconditioner.scalar(0.0, 2)
        with pytest.raises(InvariantViolationError):
            Preconditioner.diag([1.0, -1.0])
        with pytest.raises(InvariantViolationError):
            Preconditioner.spd(np.array([[1.0, 2.0], [0.0, 1.0]]))  # asymmetric
        with pytest.raises(InvariantViolationError):
            Preconditioner.spd(np.array([[1.0, 0.0], [0.0, -2.0]]))  # indefinite


class TestResolventSolve:
    def test_zero_operator(self):
        g = Preconditioner.scalar(2.0, 2)
        op = DenseOperator(np.zeros((3, 2)))
        z = resolvent_solve(g, op, np.array([4.0, 6.0]))
        assert np.allclose(z, [2.0, 3.0], rtol=1e-12)

    def test_scalar_case(self):
        g = Preconditioner.scalar(1.0, 1)
        op = DenseOperator(np.array([[1.0]]))
        assert resolvent_solve(g, op, np.array([2.0]))[0] == pytest.approx(1.0, rel=1e-12)

    def test_identity_case(self):
        g = Preconditioner.scalar(1.0, 2)
        op = DenseOperator(np.eye(2))
        assert np.allclose(resolvent_solve(g, op, np.array([2.0, 2.0])), [1.0, 1.0])

    def test_residual_contract(self, rng):
        for _ in range(20):
            n = int(rng.integers(1, 65))
            m = int(rng.integers(1, 65))
            op = DenseOperator(rng.standard_normal((m, n)))
            g = Preconditioner.scalar(float(rng.uniform(0.05, 2.0)), n)
            rhs = rng.standard_normal(n)
            z = resolvent_solve(g, op, rhs)
            lhs = g.mu * z + gram_model(op) @ z
            assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(rhs)

    def test_dimension_check(self):
        with pytest.raises(DimensionMismatchError):
            resolvent_solve(Preconditioner.scalar(1.0, 3), DenseOperator(np.eye(2)), np.ones(2))


class TestCompanionResolvent:
    def test_zero_operator(self):
        g = Preconditioner.scalar(2.0, 1)
        op = DenseOperator(np.zeros((1, 1)))
        assert companion_resolvent_apply(g, op, np.array([4.0]))[0] == pytest.approx(2.0)

    def test_scalar_case(self):
        g = Preconditioner.scalar(1.0, 1)
        op = DenseOperator(np.array([[1.0]]))
        assert companion_resolvent_apply(g, op, np.array([2.0]))[0] == pytest.approx(1.0)

    def test_commutation_identity(self, rng):
        # (G + A^T A)^{-1} A^T == A^T (Gt + A A^T)^{-1} for scalar G
        for _ in range(20):
            n = int(rng.integers(1, 17))
            m = int(rng.integers(1, 17))
            op = DenseOperator(rng.standard_normal((m, n)))
            g = Preconditioner.scalar(float(rng.uniform(0.1, 3.0)), n)
            r = rng.standard_normal(m)
            left = resolvent_solve(g, op, apply_adjoint(op, r))
            right = apply_adjoint(op, companion_resolvent_apply(g, op, r))
            assert np.linalg.norm(left - right) <= 1e-10 * max(1.0, np.linalg.norm(left))

    def test_nonsquare_nonscalar_rejected(self):
        op = DenseOperator(np.ones((3, 2)))
        g = Preconditioner.diag([1.0, 2.0])
        with pytest.raises(UnsupportedConfigurationError):
            companion_resolvent_apply(g, op, np.ones(3))


class TestIterationMatrixContraction:
    def test_scalar_g_contraction(self, rng):
        # ||(G + A^T A)^{-1}(G - A^T A)|| <= 1 for scalar G
        from scipy.linalg import cho_factor, cho_solve

        for _ in range(15):
            n = int(rng.integers(1, 13))
            op = DenseOperator(rng.standard_normal((n + 2, n)))
            mu = float(rng.uniform(0.01, 5.0))
            gram = gram_model(op)
            f = cho_factor(mu * np.eye(n) + gram, lower=True)
            m_mat = cho_solve(f, mu * np.eye(n) - gram)
            norm = np.linalg.svd(m_mat, compute_uv=False)[0]
            assert norm <= 1.0 + 1e-10


class TestInvariants:
    def test_nonfinite_rejected(self):
        with pytest.raises(InvariantViolationError):
            DenseOperator(np.array([[np.nan]]))

    def test_entries_read_only(self):
        op = DenseOperator(np.eye(2))
        with pytest.raises(ValueError):
            op.entries[0, 0] = 5.0

    @given(st.integers(min_value=1, max_value=6), st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_make_preconditioner_deterministic(self, n, seed):
        for spec in ("G5", "G8"):
            a = make_preconditioner(spec, n, 1.3, seed=seed)
            b = make_preconditioner(spec, n, 1.3, seed=seed)
            assert np.array_equal(a.dense(), b.dense())
