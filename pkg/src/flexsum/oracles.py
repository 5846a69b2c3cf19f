"""Independent LP and rank oracles used by tests and the verify command.

Everything here re-derives properties of device polytopes from their
half-space form alone, without reusing the greedy extreme-action machinery,
so the two routes can check each other.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .extreme import Infeasible
from .lp import LinearProgram, LpStatus, solve
from .storage import StorageDevice

__all__ = [
    "support_function",
    "minkowski_contains",
    "approximation_quality",
    "vertex_rank_check",
    "QualityMetrics",
]


def _energy_rows(dev: StorageDevice):
    """The 2d cumulative energy rows of the device polytope (power bounds
    are handled as variable bounds in the LPs below)."""
    poly = dev.polytope
    d = dev.d
    return poly.a_mat[2 * d :, :], poly.b_vec[2 * d :]


def support_function(dev: StorageDevice, direction, engine: str = "auto") -> float:
    """Exact support value: max of ``direction @ x`` over the device polytope.

    Raises:
        Infeasible: the polytope is empty.
        ValueError: the direction is (numerically) zero.
    """
    c = np.asarray(direction, dtype=float)
    if c.shape != (dev.d,):
        raise ValueError(f"direction must have length d={dev.d}")
    if not np.linalg.norm(c) > 0:
        raise ValueError("direction must be nonzero")
    a_en, b_en = _energy_rows(dev)
    lp = LinearProgram(
        c=-c,
        a_ub=a_en,
        b_ub=b_en,
        bounds=tuple(zip(dev.x_lo, dev.x_hi)),
    )
    sol = solve(lp, engine=engine)
    if sol.status is LpStatus.INFEASIBLE:
        raise Infeasible("device polytope is empty")
    if not sol.optimal:
        raise RuntimeError(f"support LP ended with status {sol.status}")
    return -sol.objective_value


def minkowski_contains(devices, x, tol: float = 1e-7, engine: str = "auto") -> bool:
    """Whether ``x`` splits into per-device feasible profiles summing to it.

    Solves min s subject to ``|sum_i x_i - x| <= s`` elementwise with every
    ``x_i`` in its device polytope; membership holds iff the optimal gap is
    at most ``tol``.  An empty fleet contains only the zero profile.
    """
    x = np.asarray(x, dtype=float)
    devices = list(devices)
    if not devices:
        return bool(np.max(np.abs(x), initial=0.0) <= tol)
    d = devices[0].d
    if x.shape != (d,):
        raise ValueError(f"profile must have length d={d}")
    if any(dev.d != d for dev in devices):
        raise ValueError("devices must share the horizon length")
    n = len(devices)
    n_vars = n * d + 1  # per-device profiles then the gap variable

    blocks = []
    b_parts = []
    bounds = []
    for i, dev in enumerate(devices):
        a_en, b_en = _energy_rows(dev)
        block = np.zeros((a_en.shape[0], n_vars))
        block[:, i * d : (i + 1) * d] = a_en
        blocks.append(block)
        b_parts.append(b_en)
        bounds.extend(zip(dev.x_lo, dev.x_hi))
    bounds.append((0.0, None))

    sum_block = np.zeros((2 * d, n_vars))
    for i in range(n):
        sum_block[:d, i * d : (i + 1) * d] = np.eye(d)
        sum_block[d:, i * d : (i + 1) * d] = -np.eye(d)
    sum_block[:, -1] = -1.0
    blocks.append(sum_block)
    b_parts.append(np.concatenate([x, -x]))

    c = np.zeros(n_vars)
    c[-1] = 1.0
    lp = LinearProgram(
        c=c,
        a_ub=np.vstack(blocks),
        b_ub=np.concatenate(b_parts),
        bounds=tuple(bounds),
    )
    sol = solve(lp, engine=engine)
    if sol.status is LpStatus.INFEASIBLE:
        return False  # some device polytope is empty, so is the sum
    if not sol.optimal:
        raise RuntimeError(f"membership LP ended with status {sol.status}")
    return bool(sol.objective_value <= tol)


@dataclass(frozen=True)
class QualityMetrics:
    """Tightness of the vertex inner approximation against exact supports."""

    min_ratio: float
    mean_ratio: float
    m: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "min_ratio": self.min_ratio,
            "mean_ratio": self.mean_ratio,
            "m": self.m,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def random_unit_directions(d: int, m: int, seed: int) -> np.ndarray:
    """m spherically symmetric unit vectors (rows), seeded."""
    rng = np.random.default_rng(seed)
    dirs = np.empty((m, d))
    k = 0
    while k < m:
        v = rng.standard_normal(d)
        norm = np.linalg.norm(v)
        if norm > 1e-12:
            dirs[k] = v / norm
            k += 1
    return dirs


def approximation_quality(
    devices, flex, m: int, seed: int, engine: str = "auto"
) -> QualityMetrics:
    """Support ratio of the summed extreme actions against the exact sum.

    For each of ``m`` seeded random unit directions ``c`` the ratio is
    ``max_k c @ v_k`` over the aggregate columns divided by the summed exact
    per-device supports; 0/0 counts as 1.  The inner value never exceeds the
    exact one beyond LP tolerance, so ratios stay below 1 whenever the exact
    support is positive (a negative denominator flips the inequality); a
    mean near 1 indicates a tight inner approximation.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    devices = list(devices)
    v_agg = flex.v_agg
    d = v_agg.shape[0]
    dirs = random_unit_directions(d, m, seed)
    ratios = np.empty(m)
    for i in range(m):
        c = dirs[i]
        inner = float(np.max(c @ v_agg))
        exact = float(sum(support_function(dev, c, engine=engine) for dev in devices))
        if abs(inner) < 1e-12 and abs(exact) < 1e-12:
            ratios[i] = 1.0
        else:
            ratios[i] = inner / exact
    return QualityMetrics(
        min_ratio=float(np.min(ratios)),
        mean_ratio=float(np.mean(ratios)),
        m=m,
        seed=seed,
    )


def vertex_rank_check(dev: StorageDevice, x, tol: float = 1e-7) -> bool:
    """Whether the rows active at ``x`` span the full space.

    A feasible point is a vertex of the polytope iff its active rows contain
    a rank-d subset.  Rank is computed by Gaussian elimination with a pivot
    threshold of 1e-9 relative to the largest active-row norm.
    """
    x = np.asarray(x, dtype=float)
    poly = dev.polytope
    resid = poly.residuals(x)
    active = np.abs(resid) <= tol
    rows = poly.a_mat[active].copy()
    if rows.shape[0] == 0:
        return False
    scale = float(np.max(np.linalg.norm(rows, axis=1)))
    if scale == 0.0:
        return False
    threshold = 1e-9 * scale
    rank = 0
    cols = rows.shape[1]
    for col in range(cols):
        if rank >= rows.shape[0]:
            break
        pivot_row = rank + int(np.argmax(np.abs(rows[rank:, col])))
        pivot = rows[pivot_row, col]
        if abs(pivot) <= threshold:
            continue
        rows[[rank, pivot_row]] = rows[[pivot_row, rank]]
        rows[rank + 1 :] -= np.outer(rows[rank + 1 :, col] / pivot, rows[rank])
        rank += 1
    return rank >= dev.d
