"""Pure-NumPy iteration loops (fallback backend).

Semantics shared with the compiled backend in _loops.pyx:

* iterates are indexed k = 0, 1, ...; z_0 is the supplied start vector;
* the stopping functional is evaluated at every iterate (k = 0 included) and
  the loop stops at the FIRST k whose functional value is <= threshold;
* histories, when requested, cover iterates 0..k_star inclusive.

Stop kinds:   0 = none (run to k_target), 1 = Morozov residual,
              2 = preconditioned (modified) discrepancy.
Output maps:  0 = |z|, 1 = positive part, 2 = blend a*z + (1-a)*|z|.
Reason codes: 0 = iteration cap, 1 = discrepancy met, 2 = target index reached.
"""

from __future__ import annotations

import numpy as np

STOP_NONE, STOP_MOROZOV, STOP_MODIFIED = 0, 1, 2
MAP_ABS, MAP_POSPART, MAP_BLEND = 0, 1, 2
REASON_CAP, REASON_DISCREPANCY, REASON_TARGET = 0, 1, 2


def _apply_map(map_kind, blend_a, z):
    if map_kind == MAP_ABS:
        return np.abs(z)
    if map_kind == MAP_POSPART:
        return np.maximum(z, 0.0)
    return blend_a * z + (1.0 - blend_a) * np.abs(z)


def _history_arrays(n_max, record, have_xdag):
    hist = {}
    if record:
        hist["functional"] = np.full(n_max + 1, np.nan)
        hist["residual"] = np.full(n_max + 1, np.nan)
    if have_xdag:
        hist["err_z"] = np.full(n_max + 1, np.nan)
        hist["l2err"] = np.full(n_max + 1, np.nan)
    return hist


def _trim(hist, k_star):
    return {name: arr[: k_star + 1] for name, arr in hist.items()}


def fixed_point_loop(
    M,
    b,
    z0,
    x0,
    alphas,
    map_kind,
    blend_a,
    A,
    y,
    W,
    stop_kind,
    threshold,
    k_target,
    n_max,
    xdag,
    record,
):
    """Preconditioned fixed-point iteration z <- a_k x0 + (1-a_k)(M|z| + b).

    alphas[k] is the relaxation factor for the step k -> k+1; None runs the
    unrelaxed scheme.  Returns (z, x, k_star, reason, functional, res_norm,
    histories).
    """
    z = np.array(z0, dtype=np.float64)
    have_xdag = xdag is not None
    hist = _history_arrays(n_max, record, have_xdag)
    xdag_norm = np.linalg.norm(xdag) if have_xdag else 0.0
    denom = xdag_norm if xdag_norm > 0 else 1.0

    functional = np.nan
    res_norm = np.nan
    k_star = n_max
    reason = REASON_CAP
    k = 0
    while True:
        x = _apply_map(map_kind, blend_a, z)
        need_residual = record or stop_kind == STOP_MOROZOV
        if need_residual:
            res_norm = float(np.linalg.norm(y - A @ x))
        if stop_kind == STOP_MODIFIED:
            functional = float(np.linalg.norm(W @ (y - A @ np.abs(z))))
        elif stop_kind == STOP_MOROZOV:
            functional = res_norm
        if record:
            hist["functional"][k] = functional
            hist["residual"][k] = res_norm
        if have_xdag:
            hist["err_z"][k] = np.linalg.norm(z - xdag)
            hist["l2err"][k] = np.linalg.norm(x - xdag) / denom
        if stop_kind in (STOP_MOROZOV, STOP_MODIFIED) and functional <= threshold:
            k_star, reason = k, REASON_DISCREPANCY
            break
        if stop_kind == STOP_NONE and k >= k_target:
            k_star, reason = k, REASON_TARGET
            break
        if k >= n_max:
            k_star, reason = k, REASON_CAP
            break
        t = M @ np.abs(z) + b
        if alphas is not None and alphas[k] != 0.0:
            z = alphas[k] * x0 + (1.0 - alphas[k]) * t
        else:
            z = t
        k += 1

    x = _apply_map(map_kind, blend_a, z)
    res_norm = float(np.linalg.norm(y - A @ x))
    return z, x, k_star, reason, functional, res_norm, _trim(hist, k_star)


def landweber_loop(
    A,
    y,
    omega,
    x0,
    W,
    stop_kind,
    threshold,
    k_target,
    n_max,
    xdag,
    record,
    dual,
):
    """Projected Landweber (primal) or its dual variant.

    Primal: x <- max(0, x + omega A^T (y - A x)), starting from max(0, x0).
    Dual:   x_k = max(0, A^T w_k), w_{k+1} = w_k + omega (y - A x_k), w_0 = 0.
    Returns (x, w, k_star, reason, functional, res_norm, histories); w is
    None for the primal variant.
    """
    m, n = A.shape
    if dual:
        w = np.zeros(m)
        x = np.maximum(A.T @ w, 0.0)
    else:
        w = None
        x = np.maximum(np.array(x0, dtype=np.float64), 0.0)
    have_xdag = xdag is not None
    hist = _history_arrays(n_max, record, have_xdag)
    xdag_norm = np.linalg.norm(xdag) if have_xdag else 0.0
    denom = xdag_norm if xdag_norm > 0 else 1.0

    functional = np.nan
    k_star = n_max
    reason = REASON_CAP
    k = 0
    while True:
        if dual:
            x = np.maximum(A.T @ w, 0.0)
        res = y - A @ x
        res_norm = float(np.linalg.norm(res))
        if stop_kind == STOP_MODIFIED:
            functional = float(np.linalg.norm(W @ res))
        elif stop_kind == STOP_MOROZOV:
            functional = res_norm
        if record:
            hist["functional"][k] = functional
            hist["residual"][k] = res_norm
        if have_xdag:
            hist["err_z"][k] = np.linalg.norm(x - xdag)
            hist["l2err"][k] = np.linalg.norm(x - xdag) / denom
        if stop_kind in (STOP_MOROZOV, STOP_MODIFIED) and functional <= threshold:
            k_star, reason = k, REASON_DISCREPANCY
            break
        if stop_kind == STOP_NONE and k >= k_target:
            k_star, reason = k, REASON_TARGET
            break
        if k >= n_max:
            k_star, reason = k, REASON_CAP
            break
        if dual:
            w = w + omega * res
        else:
            x = np.maximum(x + omega * (A.T @ res), 0.0)
        k += 1

    final_res = float(np.linalg.norm(y - A @ x))
    return x, w, k_star, reason, functional, final_res, _trim(hist, k_star)
