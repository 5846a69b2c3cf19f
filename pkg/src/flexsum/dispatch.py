"""Peak-shaving dispatch over aggregated flexibility and exact baselines.

Three ways to operate a fleet against an uncontrolled base load:

* ``peak_shave_vertex`` optimizes convex weights over the summed extreme
  actions (the data an aggregator would expose) and maps the optimum back
  to per-device schedules by weight sharing.
* ``peak_shave_centralized`` stacks every device polytope into one LP — the
  exact optimum, used as the accuracy reference.
* ``uncontrolled_baseline`` is plug-and-charge: every EV charges at full
  power whenever plugged in until its battery is full.

Only the upper peak is minimized; there is no valley-filling term.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .aggregation import VertexFlexibility, disaggregate
from .extreme import Infeasible
from .lp import LinearProgram, LpStatus, solve
from .storage import EvSpec, StorageDevice, build_ev_device

__all__ = [
    "Scenario",
    "DispatchResult",
    "peak_shave_vertex",
    "peak_shave_centralized",
    "uncontrolled_baseline",
]


@dataclass(frozen=True, eq=False)
class Scenario:
    """Base load plus the storage fleet, on a shared horizon.

    ``ev_specs`` carries the EV provenance when the fleet was lowered from
    vehicle specifications; the uncontrolled baseline requires it.
    """

    base_load: np.ndarray
    devices: tuple[StorageDevice, ...]
    dt: float
    ev_specs: tuple[EvSpec, ...] | None = None

    def __post_init__(self):
        base = np.asarray(self.base_load, dtype=float)
        if base.ndim != 1:
            raise ValueError("base_load must be one-dimensional")
        base = base.copy()
        base.flags.writeable = False
        object.__setattr__(self, "base_load", base)
        object.__setattr__(self, "devices", tuple(self.devices))
        if self.ev_specs is not None:
            object.__setattr__(self, "ev_specs", tuple(self.ev_specs))
        for i, dev in enumerate(self.devices):
            if dev.d != self.d:
                raise ValueError(f"device {i} horizon {dev.d} != base load length {self.d}")
            if dev.dt != self.dt:
                raise ValueError(f"device {i} dt {dev.dt} != scenario dt {self.dt}")

    @property
    def d(self) -> int:
        return int(self.base_load.shape[0])

    @classmethod
    def from_ev_specs(cls, base_load, ev_specs, dt: float) -> "Scenario":
        specs = tuple(ev_specs)
        devices = tuple(build_ev_device(s) for s in specs)
        return cls(base_load=base_load, devices=devices, dt=dt, ev_specs=specs)


@dataclass(frozen=True)
class DispatchResult:
    """Outcome of one dispatch method.

    ``aggregate_profile`` is the fleet's total grid power; ``peak_kw`` is
    recomputed as ``max(base_load + aggregate_profile)``.  ``solve_seconds``
    covers only the optimization (or simulation) itself.
    """

    method: str
    aggregate_profile: np.ndarray
    peak_kw: float
    solve_seconds: float
    per_device: tuple[np.ndarray, ...] | None = None
    weights: np.ndarray | None = None
    notes: tuple[str, ...] = ()

    def to_dict(self, include_profiles: bool = True) -> dict:
        out = {
            "method": self.method,
            "peak_kw": self.peak_kw,
            "solve_seconds": self.solve_seconds,
            "notes": list(self.notes),
        }
        if include_profiles:
            out["aggregate_profile"] = self.aggregate_profile.tolist()
        return out


def _peak(base: np.ndarray, profile: np.ndarray) -> float:
    return float(np.max(base + profile))


def peak_shave_vertex(
    scenario: Scenario, flex: VertexFlexibility, engine: str = "auto"
) -> DispatchResult:
    """Minimize the peak over convex combinations of the summed columns.

    min z  s.t.  base + v_agg @ w <= z,  w >= 0,  sum(w) = 1.
    """
    d = scenario.d
    if flex.d != d:
        raise ValueError("flexibility horizon does not match the scenario")
    count = flex.n_columns
    n_vars = count + 1  # weights then the peak variable z
    a_ub = np.hstack([flex.v_agg, -np.ones((d, 1))])
    b_ub = -scenario.base_load
    a_eq = np.zeros((1, n_vars))
    a_eq[0, :count] = 1.0
    c = np.zeros(n_vars)
    c[-1] = 1.0
    bounds = [(0.0, None)] * count + [(None, None)]
    lp = LinearProgram(c=c, a_ub=a_ub, b_ub=b_ub, a_eq=a_eq, b_eq=np.ones(1), bounds=bounds)

    t0 = time.perf_counter()
    sol = solve(lp, engine=engine)
    elapsed = time.perf_counter() - t0
    if sol.status is LpStatus.INFEASIBLE:
        raise Infeasible("vertex dispatch LP infeasible; the column set should preclude this")
    if not sol.optimal:
        raise RuntimeError(f"vertex dispatch LP ended with status {sol.status}")

    w = np.maximum(sol.x[:count], 0.0)
    w /= w.sum()
    profile = flex.v_agg @ w
    per_device = tuple(disaggregate(flex, w))
    return DispatchResult(
        method="vertex",
        aggregate_profile=profile,
        peak_kw=_peak(scenario.base_load, profile),
        solve_seconds=elapsed,
        per_device=per_device,
        weights=w,
    )


def peak_shave_centralized(scenario: Scenario, engine: str = "auto") -> DispatchResult:
    """Exact fleet optimum with every device polytope stacked into one LP.

    Power bounds enter as variable bounds; the 2d cumulative energy rows of
    each device and the d peak rows form the inequality block.  Large
    instances are assembled sparse so the external engine can be used.
    """
    d = scenario.d
    n = len(scenario.devices)
    base = scenario.base_load
    if n == 0:
        return DispatchResult(
            method="centralized",
            aggregate_profile=np.zeros(d),
            peak_kw=float(np.max(base)),
            solve_seconds=0.0,
            per_device=(),
        )

    n_vars = n * d + 1
    m_rows = 2 * d * n + d
    bounds = []
    use_sparse = m_rows * n_vars > 4.0e7

    if use_sparse:
        from scipy import sparse

        blocks = []
        b_parts = []
        for dev in scenario.devices:
            poly = dev.polytope
            blocks.append(sparse.csr_matrix(poly.a_mat[2 * d :, :]))
            b_parts.append(poly.b_vec[2 * d :])
            bounds.extend(zip(dev.x_lo, dev.x_hi))
        energy = sparse.block_diag(blocks, format="csr")
        energy = sparse.hstack([energy, sparse.csr_matrix((2 * d * n, 1))], format="csr")
        peak = sparse.hstack(
            [sparse.hstack([sparse.identity(d, format="csr")] * n), -np.ones((d, 1))],
            format="csr",
        )
        a_ub = sparse.vstack([energy, peak], format="csr")
        b_ub = np.concatenate(b_parts + [-base])
    else:
        a_ub = np.zeros((m_rows, n_vars))
        b_ub = np.empty(m_rows)
        for i, dev in enumerate(scenario.devices):
            poly = dev.polytope
            rows = slice(2 * d * i, 2 * d * (i + 1))
            a_ub[rows, i * d : (i + 1) * d] = poly.a_mat[2 * d :, :]
            b_ub[rows.start : rows.stop] = poly.b_vec[2 * d :]
            bounds.extend(zip(dev.x_lo, dev.x_hi))
        for i in range(n):
            a_ub[2 * d * n :, i * d : (i + 1) * d] = np.eye(d)
        a_ub[2 * d * n :, -1] = -1.0
        b_ub[2 * d * n :] = -base
    bounds.append((None, None))

    c = np.zeros(n_vars)
    c[-1] = 1.0
    lp = LinearProgram(c=c, a_ub=a_ub, b_ub=b_ub, bounds=tuple(bounds))

    t0 = time.perf_counter()
    sol = solve(lp, engine=engine)
    elapsed = time.perf_counter() - t0
    if sol.status is LpStatus.INFEASIBLE:
        raise Infeasible("some device polytope is empty")
    if not sol.optimal:
        raise RuntimeError(f"centralized dispatch LP ended with status {sol.status}")

    per_device = tuple(sol.x[i * d : (i + 1) * d].copy() for i in range(n))
    profile = np.sum(per_device, axis=0)
    return DispatchResult(
        method="centralized",
        aggregate_profile=profile,
        peak_kw=_peak(base, profile),
        solve_seconds=elapsed,
        per_device=per_device,
    )


def uncontrolled_baseline(scenario: Scenario) -> DispatchResult:
    """Plug-and-charge simulation on the physical state of charge.

    Each EV charges at full power whenever available and below capacity,
    never discharges, and drains by its trip consumption while away.  A
    final energy short of the EV's requirement is reported in ``notes``
    rather than repaired.
    """
    if scenario.ev_specs is None:
        raise ValueError("uncontrolled baseline needs EV provenance (Scenario.ev_specs)")
    d = scenario.d
    t0 = time.perf_counter()
    profiles = []
    notes = []
    for idx, ev in enumerate(scenario.ev_specs):
        x = np.zeros(d)
        energy = ev.s_init
        for t in range(d):
            drained = ev.alpha * energy - ev.trips[t] * ev.dt
            if ev.availability[t]:
                headroom = (ev.s_max - drained) / ev.dt
                x[t] = min(ev.x_max, max(0.0, headroom))
            energy = drained + x[t] * ev.dt
            if energy < ev.s_min - 1e-9 * max(1.0, abs(ev.s_min)):
                notes.append(f"device {idx}: energy fell below s_min at period {t}")
        if energy < ev.s_final - 1e-9 * max(1.0, abs(ev.s_final)):
            notes.append(
                f"device {idx}: final energy {energy:.6f} short of required {ev.s_final:.6f}"
            )
        profiles.append(x)
    elapsed = time.perf_counter() - t0
    profile = np.sum(profiles, axis=0) if profiles else np.zeros(d)
    return DispatchResult(
        method="uncontrolled",
        aggregate_profile=profile,
        peak_kw=_peak(scenario.base_load, profile),
        solve_seconds=elapsed,
        per_device=tuple(profiles),
        notes=tuple(notes),
    )
