"""On-disk formats.

Field CSV: one row per cell, header ``axis1,axis2,value``, 17 significant
digits (decimal point, C locale), so float64 values round-trip exactly and
re-emitting a parsed file is byte-identical.

Model description: a JSON document with keys omega, theta, t0, dt, t_inj,
grid_omega, grid_theta, seed, h_prime, delta_prime (rectangles as
[lo1, hi1, lo2, hi2], grids as [nx, ny]) plus an optional phantom spec.

Operator matrices are stored as .npy (bit-exact, deterministic header).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from nnireg.biosensor import Grid2D, KineticsModel, Rect
from nnireg.errors import ConfigError

__all__ = [
    "format_float",
    "write_field_csv",
    "read_field_csv",
    "write_model",
    "read_model",
    "write_json",
    "read_json",
]

FIELD_HEADER = "axis1,axis2,value"


def format_float(v: float) -> str:
    return f"{float(v):.17g}"


def write_field_csv(path, grid: Grid2D, values: np.ndarray) -> None:
    """One row per cell centroid; ordering matches Grid2D.centroids()."""
    cents = grid.centroids()
    values = np.asarray(values, dtype=np.float64)
    lines = [FIELD_HEADER]
    for (a1, a2), v in zip(cents, values):
        lines.append(f"{format_float(a1)},{format_float(a2)},{format_float(v)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_field_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Returns (centroids (N,2), values (N,))."""
    lines = Path(path).read_text().strip().splitlines()
    if not lines or lines[0].strip() != FIELD_HEADER:
        raise ConfigError(f"{path}: expected header {FIELD_HEADER!r}")
    coords, values = [], []
    for ln in lines[1:]:
        a1, a2, v = ln.split(",")
        coords.append((float(a1), float(a2)))
        values.append(float(v))
    return np.asarray(coords), np.asarray(values)


def _rect_to_list(r: Rect) -> list[float]:
    return r.as_list()


def _rect_from_list(v) -> Rect:
    if len(v) != 4:
        raise ConfigError("rectangle must be [lo1, hi1, lo2, hi2]")
    return Rect(*map(float, v))


def write_model(
    path,
    model: KineticsModel,
    grid_omega: Grid2D,
    grid_theta: Grid2D,
    seed: int,
    h_prime: float,
    delta_prime: float,
    phantom: dict | None = None,
) -> None:
    doc = {
        "omega": _rect_to_list(model.omega),
        "theta": _rect_to_list(model.theta),
        "t0": model.t0,
        "dt": model.dt,
        "t_inj": model.t_inj,
        "grid_omega": [grid_omega.nx, grid_omega.ny],
        "grid_theta": [grid_theta.nx, grid_theta.ny],
        "seed": int(seed),
        "h_prime": h_prime,
        "delta_prime": delta_prime,
    }
    if phantom is not None:
        doc["phantom"] = phantom
    write_json(path, doc)


def read_model(path) -> dict:
    """Parsed model description: KineticsModel (normalization 1), grids,
    seed, noise magnitudes, optional phantom spec."""
    doc = read_json(path)
    try:
        model = KineticsModel(
            omega=_rect_from_list(doc["omega"]),
            theta=_rect_from_list(doc["theta"]),
            t0=float(doc["t0"]),
            dt=float(doc["dt"]),
            t_inj=float(doc["t_inj"]),
        )
        go = doc["grid_omega"]
        gt = doc["grid_theta"]
        out = {
            "model": model,
            "grid_omega": Grid2D(model.omega, int(go[0]), int(go[1])),
            "grid_theta": Grid2D(model.theta, int(gt[0]), int(gt[1])),
            "seed": int(doc["seed"]),
            "h_prime": float(doc["h_prime"]),
            "delta_prime": float(doc["delta_prime"]),
            "phantom": doc.get("phantom"),
        }
    except KeyError as exc:
        raise ConfigError(f"{path}: missing model key {exc}") from exc
    return out


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
