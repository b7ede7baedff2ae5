"""Backend equivalence and loop semantics of the iteration kernels."""

import numpy as np
import pytest
from scipy.linalg import cho_factor, cho_solve

from nnireg import _kernels
from nnireg._kernels import _loops_py

try:
    from nnireg._kernels import _loops as _loops_cy
except ImportError:
    _loops_cy = None

needs_compiled = pytest.mark.skipif(
    _loops_cy is None, reason="compiled kernel not built"
)


def build_fixed_point_inputs(rng, m, n, mu=0.5):
    a = rng.standard_normal((m, n))
    y = rng.standard_normal(m)
    gram = a.T @ a
    f = cho_factor(mu * np.eye(n) + gram, lower=True)
    m_mat = cho_solve(f, mu * np.eye(n) - gram)
    b = cho_solve(f, 2.0 * a.T @ y)
    w = cho_solve(cho_factor(mu * np.eye(m) + a @ a.T, lower=True), np.eye(m))
    return a, y, m_mat, b, w


@needs_compiled
class TestBackendEquivalence:
    def test_fixed_point_loops_agree(self, rng):
        for trial in range(10):
            m, n = int(rng.integers(2, 12)), int(rng.integers(2, 12))
            a, y, m_mat, b, w = build_fixed_point_inputs(rng, m, n)
            alphas = 1.0 / (np.arange(1, 301) + 1.0)
            xdag = rng.uniform(0, 1, n)
            for stop_kind, thr in ((0, np.nan), (1, 0.05), (2, 0.05)):
                args = (m_mat, b, np.zeros(n), np.ones(n), alphas, 1, 0.0,
                        a, y, w, stop_kind, thr, 300, 300, xdag, True)
                z1, x1, k1, r1, f1, res1, h1 = _loops_cy.fixed_point_loop(*args)
                z2, x2, k2, r2, f2, res2, h2 = _loops_py.fixed_point_loop(*args)
                assert k1 == k2 and r1 == r2
                assert np.allclose(z1, z2, rtol=1e-12, atol=1e-14)
                assert np.allclose(x1, x2, rtol=1e-12, atol=1e-14)
                np.testing.assert_allclose(res1, res2, rtol=1e-10)
                for name in h1:
                    np.testing.assert_allclose(
                        h1[name], h2[name], rtol=1e-9, atol=1e-13, equal_nan=True
                    )

    def test_landweber_loops_agree(self, rng):
        for dual in (False, True):
            m, n = 9, 6
            a, y, m_mat, b, w = build_fixed_point_inputs(rng, m, n)
            omega = 0.5 / np.linalg.svd(a, compute_uv=False)[0] ** 2
            xdag = rng.uniform(0, 1, n)
            args = (a, y, omega, rng.uniform(0, 1, n), w, 2, 0.05, 400, 400, xdag, True, dual)
            out1 = _loops_cy.landweber_loop(*args)
            out2 = _loops_py.landweber_loop(*args)
            assert out1[2] == out2[2] and out1[3] == out2[3]
            assert np.allclose(out1[0], out2[0], rtol=1e-12, atol=1e-14)
            if dual:
                assert np.allclose(out1[1], out2[1], rtol=1e-12, atol=1e-14)
            for name in out1[6]:
                np.testing.assert_allclose(
                    out1[6][name], out2[6][name], rtol=1e-9, atol=1e-13, equal_nan=True
                )


@pytest.mark.parametrize("impl", [p for p in (_loops_cy, _loops_py) if p is not None])
class TestLoopSemantics:
    def test_stops_at_first_crossing(self, impl, rng):
        a, _, m_mat, _, w = build_fixed_point_inputs(rng, 8, 5)
        y = a @ rng.uniform(0.1, 1.0, 5)  # consistent data: residual -> 0
        mu = 0.5
        f = cho_factor(mu * np.eye(5) + a.T @ a, lower=True)
        b = cho_solve(f, 2.0 * a.T @ y)
        args = (m_mat, b, np.zeros(5), np.zeros(5), None, 0, 0.0,
                a, y, w, 2, 1e-9, 10**9, 5000, None, True)
        z, x, k_star, reason, functional, res, hist = impl.fixed_point_loop(*args)
        fun = hist["functional"]
        assert reason == _kernels.REASON_DISCREPANCY
        assert functional <= 1e-9
        assert np.all(fun[:-1] > 1e-9)
        assert fun[-1] <= 1e-9
        assert len(fun) == k_star + 1

    def test_histories_cover_initial_iterate(self, impl, rng):
        a, y, m_mat, b, w = build_fixed_point_inputs(rng, 6, 4)
        xdag = np.zeros(4)
        args = (m_mat, b, np.ones(4), np.ones(4), None, 0, 0.0,
                a, y, None, 0, np.nan, 3, 10, xdag, True)
        z, x, k_star, reason, functional, res, hist = impl.fixed_point_loop(*args)
        assert k_star == 3 and reason == _kernels.REASON_TARGET
        assert hist["err_z"][0] == pytest.approx(2.0)  # ||ones - 0||

    def test_cap_reason(self, impl, rng):
        a, y, m_mat, b, w = build_fixed_point_inputs(rng, 6, 4)
        args = (m_mat, b, np.zeros(4), np.zeros(4), None, 0, 0.0,
                a, y, w, 2, -1.0, 10**9, 7, None, False)
        out = impl.fixed_point_loop(*args)
        assert out[2] == 7 and out[3] == _kernels.REASON_CAP

    def test_landweber_start_is_clipped(self, impl, rng):
        a = rng.standard_normal((5, 3))
        y = a @ np.ones(3)
        omega = 0.5 / np.linalg.svd(a, compute_uv=False)[0] ** 2
        x0 = np.array([-1.0, 0.5, -2.0])
        out = impl.landweber_loop(a, y, omega, x0, None, 0, np.nan, 0, 0, None, False, False)
        assert np.array_equal(out[0], [0.0, 0.5, 0.0])

    def test_blend_map_nonnegative(self, impl, rng):
        a, y, m_mat, b, w = build_fixed_point_inputs(rng, 6, 4, mu=0.01)
        args = (m_mat, b, rng.standard_normal(4), np.zeros(4), None, 2, 0.37,
                a, y, None, 0, np.nan, 50, 50, None, False)
        z, x, *_ = impl.fixed_point_loop(*args)
        assert x.min() >= 0.0
